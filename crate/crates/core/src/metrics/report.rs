//! Manifest-driven corpus evaluation: per-utterance scores, per-SNR and
//! overall means, emitted as an aligned text table and machine-readable JSON.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{mcd, sar, sd_sdr, si_sdr, stoi, MetricError};
use crate::audio::{read_wav, Waveform};
use crate::mixing::{fit_noise, MixManifestEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    SiSdr,
    SdSdr,
    Sar,
    Mcd,
    Stoi,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] =
        [MetricKind::SiSdr, MetricKind::SdSdr, MetricKind::Sar, MetricKind::Mcd, MetricKind::Stoi];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::SiSdr => "si_sdr",
            MetricKind::SdSdr => "sd_sdr",
            MetricKind::Sar => "sar",
            MetricKind::Mcd => "mcd",
            MetricKind::Stoi => "stoi",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "si_sdr" | "sisdr" => Some(MetricKind::SiSdr),
            "sd_sdr" | "sdsdr" => Some(MetricKind::SdSdr),
            "sar" => Some(MetricKind::Sar),
            "mcd" => Some(MetricKind::Mcd),
            "stoi" => Some(MetricKind::Stoi),
            _ => None,
        }
    }
}

/// What the estimates are scored against: the clean speech from the
/// manifest, or the gain-scaled background noise it was mixed with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalTarget {
    Speech,
    Background,
}

impl EvalTarget {
    pub fn name(self) -> &'static str {
        match self {
            EvalTarget::Speech => "speech",
            EvalTarget::Background => "background",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub metrics: Vec<MetricKind>,
    pub target: EvalTarget,
    pub mcd_coeffs: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { metrics: MetricKind::ALL.to_vec(), target: EvalTarget::Speech, mcd_coeffs: 24 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UtteranceScores {
    pub snr_db: f64,
    pub values: BTreeMap<String, f64>,
    /// Metrics that failed for this utterance, with the reason.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub errors: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SnrAggregate {
    pub snr_db: f64,
    pub utterances: usize,
    pub means: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub target: String,
    pub metrics: Vec<String>,
    /// Reserved columns that this build does not compute (licensed ITU
    /// algorithms); present so report consumers see them as unavailable.
    pub unavailable: Vec<String>,
    pub per_utterance: BTreeMap<String, UtteranceScores>,
    pub per_snr: Vec<SnrAggregate>,
    pub overall: BTreeMap<String, f64>,
    pub utterances_scored: usize,
    /// Manifest entries with no matching estimate file.
    pub missing_estimates: Vec<String>,
    /// Utterances dropped because an input could not be read.
    pub failed_inputs: BTreeMap<String, String>,
}

impl MetricReport {
    pub fn has_failures(&self) -> bool {
        !self.missing_estimates.is_empty() || !self.failed_inputs.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn estimate_path(est_dir: &Path, utt_id: &str, target: EvalTarget) -> Option<std::path::PathBuf> {
    match target {
        EvalTarget::Speech => {
            let p = est_dir.join(format!("{utt_id}.wav"));
            p.exists().then_some(p)
        }
        EvalTarget::Background => {
            let bg = est_dir.join(format!("{utt_id}.bg.wav"));
            if bg.exists() {
                return Some(bg);
            }
            let p = est_dir.join(format!("{utt_id}.wav"));
            p.exists().then_some(p)
        }
    }
}

struct UttOutcome {
    utt_id: String,
    result: Result<UtteranceScores, String>,
}

fn score_entry(
    entry: &MixManifestEntry,
    est: &Waveform,
    opts: &EvalOptions,
) -> Result<UtteranceScores, String> {
    let clean = read_wav(&entry.clean_path).map_err(|e| e.to_string())?;
    let noise = read_wav(&entry.noise_path).map_err(|e| e.to_string())?;
    let fitted =
        fit_noise(&noise, clean.len(), entry.noise_offset_samples).map_err(|e| e.to_string())?;
    let scaled = Waveform::new(
        fitted.samples().iter().map(|n| entry.noise_gain * n).collect(),
        fitted.sample_rate_hz(),
    )
    .map_err(|e| e.to_string())?;

    let (reference, other) = match opts.target {
        EvalTarget::Speech => (&clean, &scaled),
        EvalTarget::Background => (&scaled, &clean),
    };

    let mut values = BTreeMap::new();
    let mut errors = BTreeMap::new();
    for kind in &opts.metrics {
        let outcome: Result<f64, MetricError> = match kind {
            MetricKind::SiSdr => si_sdr(reference, est),
            MetricKind::SdSdr => sd_sdr(reference, est),
            MetricKind::Sar => sar(reference, other, est),
            MetricKind::Mcd => mcd(reference, est, opts.mcd_coeffs),
            MetricKind::Stoi => stoi(reference, est),
        };
        match outcome {
            Ok(v) => {
                values.insert(kind.name().to_string(), v);
            }
            Err(e) => {
                errors.insert(kind.name().to_string(), e.to_string());
            }
        }
    }
    Ok(UtteranceScores { snr_db: entry.snr_db, values, errors })
}

/// Score every manifest entry against the estimate files in `est_dir`.
/// Speech targets look for `{utt_id}.wav`; background targets prefer
/// `{utt_id}.bg.wav`. Missing estimates are listed and skipped.
pub fn evaluate_corpus(
    entries: &[MixManifestEntry],
    est_dir: &Path,
    opts: &EvalOptions,
) -> MetricReport {
    let mut sorted: Vec<&MixManifestEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));

    let outcomes: Vec<UttOutcome> = sorted
        .par_iter()
        .map(|entry| {
            let result = match estimate_path(est_dir, &entry.utt_id, opts.target) {
                None => Err("missing estimate".to_string()),
                Some(p) => read_wav(&p)
                    .map_err(|e| e.to_string())
                    .and_then(|est| score_entry(entry, &est, opts)),
            };
            UttOutcome { utt_id: entry.utt_id.clone(), result }
        })
        .collect();

    let mut per_utterance = BTreeMap::new();
    let mut missing_estimates = Vec::new();
    let mut failed_inputs = BTreeMap::new();
    for o in outcomes {
        match o.result {
            Ok(scores) => {
                per_utterance.insert(o.utt_id, scores);
            }
            Err(reason) if reason == "missing estimate" => missing_estimates.push(o.utt_id),
            Err(reason) => {
                failed_inputs.insert(o.utt_id, reason);
            }
        }
    }

    let metric_names: Vec<String> = opts.metrics.iter().map(|m| m.name().to_string()).collect();
    let mean_of = |utts: &[&UtteranceScores], name: &str| -> Option<f64> {
        let vals: Vec<f64> =
            utts.iter().filter_map(|u| u.values.get(name)).copied().collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };

    // group by SNR level, ascending
    let mut groups: BTreeMap<u64, (f64, Vec<&UtteranceScores>)> = BTreeMap::new();
    for u in per_utterance.values() {
        groups.entry(u.snr_db.to_bits()).or_insert_with(|| (u.snr_db, Vec::new())).1.push(u);
    }
    let mut grouped: Vec<(f64, Vec<&UtteranceScores>)> = groups.into_values().collect();
    grouped.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let per_snr: Vec<SnrAggregate> = grouped
        .iter()
        .map(|(snr, utts)| {
            let mut means = BTreeMap::new();
            for name in &metric_names {
                if let Some(m) = mean_of(utts, name) {
                    means.insert(name.clone(), m);
                }
            }
            SnrAggregate { snr_db: *snr, utterances: utts.len(), means }
        })
        .collect();

    let all: Vec<&UtteranceScores> = per_utterance.values().collect();
    let utterances_scored = all.len();
    let mut overall = BTreeMap::new();
    for name in &metric_names {
        if let Some(m) = mean_of(&all, name) {
            overall.insert(name.clone(), m);
        }
    }
    drop(all);
    drop(grouped);

    MetricReport {
        target: opts.target.name().to_string(),
        metrics: metric_names,
        unavailable: vec!["pesq".to_string()],
        per_utterance,
        per_snr,
        overall,
        utterances_scored,
        missing_estimates,
        failed_inputs,
    }
}

/// Aligned per-SNR table, one row per metric plus the reserved unavailable
/// rows, mirroring the usual per-level/average layout.
pub fn render_table(report: &MetricReport) -> String {
    let mut cols: Vec<String> = report
        .per_snr
        .iter()
        .map(|g| {
            if g.snr_db == g.snr_db.trunc() {
                format!("{} dB", g.snr_db as i64)
            } else {
                format!("{} dB", g.snr_db)
            }
        })
        .collect();
    cols.push("Avg.".to_string());

    let name_w = report
        .metrics
        .iter()
        .chain(report.unavailable.iter())
        .map(|s| s.len())
        .max()
        .unwrap_or(6)
        .max(6);
    let col_w = 9usize;

    let mut out = String::new();
    out.push_str(&format!(
        "target: {}   utterances: {}\n",
        report.target, report.utterances_scored
    ));
    out.push_str(&format!("{:<name_w$}", "metric"));
    for c in &cols {
        out.push_str(&format!(" {c:>col_w$}"));
    }
    out.push('\n');

    let cell = |v: Option<&f64>| -> String {
        match v {
            Some(x) => format!(" {x:>col_w$.3}"),
            None => format!(" {:>col_w$}", "n/a"),
        }
    };
    for name in &report.metrics {
        out.push_str(&format!("{name:<name_w$}"));
        for g in &report.per_snr {
            out.push_str(&cell(g.means.get(name)));
        }
        out.push_str(&cell(report.overall.get(name)));
        out.push('\n');
    }
    for name in &report.unavailable {
        out.push_str(&format!("{name:<name_w$}"));
        for _ in 0..cols.len() {
            out.push_str(&cell(None));
        }
        out.push('\n');
    }
    if !report.missing_estimates.is_empty() {
        out.push_str(&format!("missing estimates: {}\n", report.missing_estimates.join(", ")));
    }
    for (utt, reason) in &report.failed_inputs {
        out.push_str(&format!("failed: {utt}: {reason}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::write_wav;
    use crate::mixing::{build_corpus, CorpusJob, SnrSpec};
    use crate::synth::{speech_like, white_noise};

    fn build_fixture(tag: &str, snr: SnrSpec) -> (std::path::PathBuf, Vec<MixManifestEntry>) {
        let dir = std::env::temp_dir().join(format!("n2nvc-report-{}-{tag}", std::process::id()));
        let clean_dir = dir.join("clean");
        let noise_dir = dir.join("noise");
        std::fs::create_dir_all(&clean_dir).unwrap();
        std::fs::create_dir_all(&noise_dir).unwrap();
        for i in 0..3 {
            write_wav(
                &speech_like(&format!("rep-{tag}-{i}"), 6000, 8000),
                clean_dir.join(format!("utt{i}.wav")),
            )
            .unwrap();
        }
        write_wav(&white_noise(&format!("rep-n-{tag}"), 4000, 8000, 0.4), noise_dir.join("n.wav"))
            .unwrap();
        let job = CorpusJob {
            clean_dir,
            noise_dir,
            snr,
            seed: 11,
            out_dir: dir.join("noisy"),
            pattern_split: None,
            resample_to_hz: None,
        };
        let report = build_corpus(&job).unwrap();
        (dir, report.entries)
    }

    #[test]
    fn clean_estimates_score_perfectly() {
        let (dir, entries) = build_fixture("perfect", SnrSpec::Levels(vec![7.0, 15.0]));
        // estimates are the clean references themselves
        let est_dir = dir.join("est");
        std::fs::create_dir_all(&est_dir).unwrap();
        for e in &entries {
            std::fs::copy(&e.clean_path, est_dir.join(format!("{}.wav", e.utt_id))).unwrap();
        }
        let report = evaluate_corpus(&entries, &est_dir, &EvalOptions::default());
        assert!(!report.has_failures());
        assert_eq!(report.utterances_scored, entries.len());
        for u in report.per_utterance.values() {
            assert_eq!(u.values["si_sdr"], super::super::DB_CAP);
            assert_eq!(u.values["mcd"], 0.0);
            assert!((u.values["stoi"] - 1.0).abs() < 1e-9);
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn noisy_estimates_score_near_their_snr() {
        let (dir, entries) = build_fixture("noisy", SnrSpec::Levels(vec![7.0]));
        let est_dir = dir.join("noisy"); // the mixed corpus itself
        let opts = EvalOptions {
            metrics: vec![MetricKind::SiSdr],
            ..EvalOptions::default()
        };
        let report = evaluate_corpus(&entries, &est_dir, &opts);
        let mean = report.overall["si_sdr"];
        assert!((mean - 7.0).abs() < 0.1, "mean si_sdr {mean}");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn aggregates_are_arithmetic_means_and_table_matches_json() {
        let (dir, entries) = build_fixture("agg", SnrSpec::Levels(vec![7.0, 19.0]));
        let est_dir = dir.join("noisy");
        let opts = EvalOptions {
            metrics: vec![MetricKind::SiSdr, MetricKind::SdSdr],
            ..EvalOptions::default()
        };
        let report = evaluate_corpus(&entries, &est_dir, &opts);

        // aggregation oracle: recompute means by hand
        for name in ["si_sdr", "sd_sdr"] {
            let vals: Vec<f64> =
                report.per_utterance.values().map(|u| u.values[name]).collect();
            let want = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((report.overall[name] - want).abs() < 1e-12);
            for g in &report.per_snr {
                let vals: Vec<f64> = report
                    .per_utterance
                    .values()
                    .filter(|u| u.snr_db == g.snr_db)
                    .map(|u| u.values[name])
                    .collect();
                let want = vals.iter().sum::<f64>() / vals.len() as f64;
                assert!((g.means[name] - want).abs() < 1e-12);
            }
        }

        // the table renders the same aggregates to three decimals
        let table = render_table(&report);
        for g in &report.per_snr {
            for name in ["si_sdr", "sd_sdr"] {
                let cell = format!("{:.3}", g.means[name]);
                assert!(table.contains(&cell), "table missing {cell}:\n{table}");
            }
        }
        assert!(table.contains("pesq"));
        assert!(table.contains("n/a"));

        // and the JSON parses back to the same values
        let parsed: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(
            parsed["overall"]["si_sdr"].as_f64().unwrap(),
            report.overall["si_sdr"]
        );
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn missing_estimates_are_listed_not_fatal() {
        let (dir, entries) = build_fixture("missing", SnrSpec::Levels(vec![7.0]));
        let est_dir = dir.join("est-missing");
        std::fs::create_dir_all(&est_dir).unwrap();
        // provide only the first estimate
        let first = &entries[0];
        std::fs::copy(&first.clean_path, est_dir.join(format!("{}.wav", first.utt_id))).unwrap();
        let report = evaluate_corpus(&entries, &est_dir, &EvalOptions::default());
        assert!(report.has_failures());
        assert_eq!(report.missing_estimates.len(), entries.len() - 1);
        assert_eq!(report.utterances_scored, 1);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
