//! Subcommand implementations. Every command processes files in sorted
//! order (parallelized over a --jobs pool), collects one structured log line
//! per file, flushes the lines sorted by utterance id, and reports partial
//! failures through the exit code without aborting the run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use n2nvc::audio::{read_wav, resample, write_wav, Waveform, CANONICAL_RATE_HZ};
use n2nvc::metrics::{evaluate_corpus, render_table, EvalOptions, EvalTarget, MetricKind};
use n2nvc::mixing::{build_corpus, list_wavs, read_manifest, CorpusJob, SnrSpec};
use n2nvc::separation::{
    separate, superimpose, IdentityDenoiser, IrmOracleDenoiser, SpecSubDenoiser, SuperimposeMode,
    ZeroDenoiser,
};
use n2nvc::spectral::{dump_complex_matrix, stft, StftConfig};
use n2nvc::util::atomic_write;
use n2nvc::vq;

use crate::config::Config;
use crate::{
    CmdError, ConvertArgs, EvalArgs, MixArgs, SeparateArgs, SuperimposeArgs, VqDemoArgs,
};

type CmdResult = Result<bool, CmdError>;

fn usage(msg: impl Into<String>) -> CmdError {
    CmdError::Usage(msg.into())
}

fn runtime(msg: impl std::fmt::Display) -> CmdError {
    CmdError::Runtime(msg.to_string())
}

/// flag > config > fallback
fn resolve<T: std::str::FromStr + Clone>(
    flag: Option<T>,
    cfg: &Config,
    key: &str,
) -> Result<Option<T>, CmdError> {
    if flag.is_some() {
        return Ok(flag);
    }
    cfg.parsed::<T>(key).map_err(usage)
}

fn require<T>(value: Option<T>, what: &str) -> Result<T, CmdError> {
    value.ok_or_else(|| usage(format!("missing required option --{what} (or config key '{what}')")))
}

fn seed_default(flag: Option<u64>, cfg: &Config) -> Result<u64, CmdError> {
    if let Some(s) = resolve(flag, cfg, "seed")? {
        return Ok(s);
    }
    match std::env::var("N2N_SEED") {
        Ok(v) => v.parse().map_err(|_| usage(format!("N2N_SEED is not an integer: {v}"))),
        Err(_) => Ok(0),
    }
}

fn jobs_default(flag: Option<usize>, cfg: &Config) -> Result<usize, CmdError> {
    Ok(resolve(flag, cfg, "jobs")?.unwrap_or(1).max(1))
}

fn in_pool<T: Send>(jobs: usize, run: impl FnOnce() -> T + Send) -> Result<T, CmdError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| runtime(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(run))
}

struct LogLine {
    utt: String,
    stage: &'static str,
    dur_ms: u128,
    status: Result<(), String>,
}

/// Print log lines sorted by utterance id; returns true when all succeeded.
fn flush_logs(mut lines: Vec<LogLine>) -> bool {
    lines.sort_by(|a, b| a.utt.cmp(&b.utt));
    let mut ok = true;
    for l in &lines {
        match &l.status {
            Ok(()) => eprintln!("utt={} stage={} dur_ms={} status=ok", l.utt, l.stage, l.dur_ms),
            Err(msg) => {
                ok = false;
                eprintln!(
                    "utt={} stage={} dur_ms={} status=error msg={:?}",
                    l.utt, l.stage, l.dur_ms, msg
                );
            }
        }
    }
    ok
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// WAVs in a stage directory, excluding background residuals (`*.bg.wav`),
/// which live beside the speech estimates.
fn stage_inputs(dir: &Path) -> Result<Vec<PathBuf>, CmdError> {
    let files = list_wavs(dir).map_err(runtime)?;
    Ok(files.into_iter().filter(|p| !stem(p).ends_with(".bg")).collect())
}

/// Read a pipeline WAV, resampling to the canonical 8 kHz rate when needed.
fn read_pipeline_wav(path: &Path) -> Result<Waveform, String> {
    let w = read_wav(path).map_err(|e| e.to_string())?;
    if w.sample_rate_hz() != CANONICAL_RATE_HZ {
        eprintln!(
            "warning: resampling {} from {} Hz to the canonical {} Hz",
            path.display(),
            w.sample_rate_hz(),
            CANONICAL_RATE_HZ
        );
        return resample(&w, CANONICAL_RATE_HZ).map_err(|e| e.to_string());
    }
    Ok(w)
}

pub fn mix(args: MixArgs, cfg: &Config) -> CmdResult {
    let clean_dir = require(resolve(args.clean, cfg, "clean")?, "clean")?;
    let noise_dir = require(resolve(args.noise, cfg, "noise")?, "noise")?;
    let out_dir = require(resolve(args.out, cfg, "out")?, "out")?;
    let snr_text: String = require(resolve(args.snr, cfg, "snr")?, "snr")?;
    let snr = SnrSpec::parse(&snr_text).map_err(usage)?;
    let seed = seed_default(args.seed, cfg)?;
    let jobs = jobs_default(args.jobs, cfg)?;
    let lock = args.lock_pattern || cfg.raw("lock-pattern").is_some_and(|v| v == "true");

    let job = CorpusJob {
        clean_dir,
        noise_dir,
        snr,
        seed,
        out_dir,
        pattern_split: lock.then_some(args.pattern_split),
        resample_to_hz: Some(CANONICAL_RATE_HZ),
    };
    let report = in_pool(jobs, || build_corpus(&job))?.map_err(runtime)?;

    let mut lines: Vec<LogLine> = report
        .timings_ms
        .iter()
        .map(|(utt, ms)| LogLine {
            utt: utt.clone(),
            stage: "mix",
            dur_ms: *ms,
            status: Ok(()),
        })
        .collect();
    for w in &report.warnings {
        lines.push(LogLine {
            utt: w.path.clone(),
            stage: "mix",
            dur_ms: 0,
            status: Err(w.reason.clone()),
        });
    }
    let ok = flush_logs(lines);
    println!(
        "mixed {} utterances into {} (manifest: {})",
        report.entries.len(),
        job.out_dir.display(),
        report.manifest_path.display()
    );
    Ok(ok)
}

enum DenoiserChoice {
    Identity,
    Zero,
    SpecSub(SpecSubDenoiser),
    Irm { clean_ref: PathBuf, config: StftConfig },
}

pub fn separate_cmd(args: SeparateArgs, cfg: &Config) -> CmdResult {
    let in_dir: PathBuf = require(resolve(args.input, cfg, "in")?, "in")?;
    let out_speech: PathBuf = require(resolve(args.out_speech, cfg, "out-speech")?, "out-speech")?;
    let out_bg = resolve(args.out_bg, cfg, "out-bg")?.unwrap_or_else(|| out_speech.clone());
    let name: String =
        resolve(args.denoiser, cfg, "denoiser")?.unwrap_or_else(|| "identity".to_string());
    let jobs = jobs_default(args.jobs, cfg)?;
    let stft_config = StftConfig {
        window_ms: resolve(args.stft_window_ms, cfg, "stft-window-ms")?
            .unwrap_or(StftConfig::SEPARATION.window_ms),
        hop_ms: resolve(args.stft_hop_ms, cfg, "stft-hop-ms")?
            .unwrap_or(StftConfig::SEPARATION.hop_ms),
        fft_len: resolve(args.stft_fft, cfg, "stft-fft")?.unwrap_or(StftConfig::SEPARATION.fft_len),
    };

    let choice = match name.as_str() {
        "identity" => DenoiserChoice::Identity,
        "zero" => DenoiserChoice::Zero,
        "specsub" => DenoiserChoice::SpecSub(SpecSubDenoiser::new(
            stft_config,
            resolve(args.specsub_profile_ms, cfg, "specsub-profile-ms")?.unwrap_or(200.0),
            resolve(args.specsub_oversubtraction, cfg, "specsub-oversubtraction")?.unwrap_or(1.0),
            resolve(args.specsub_floor, cfg, "specsub-floor")?.unwrap_or(0.02),
        )),
        "irm" => DenoiserChoice::Irm {
            clean_ref: require(
                resolve(args.clean_ref, cfg, "clean-ref")?,
                "clean-ref (the irm oracle needs aligned clean references)",
            )?,
            config: stft_config,
        },
        other => return Err(usage(format!("unknown denoiser '{other}'"))),
    };

    let files = stage_inputs(&in_dir)?;
    let dump_dir = resolve(args.dump_spectra, cfg, "dump-spectra")?;

    let lines = in_pool(jobs, || {
        files
            .par_iter()
            .map(|path| {
                let started = Instant::now();
                let utt = stem(path);
                let status = process_separation(
                    path, &utt, &choice, &out_speech, &out_bg, dump_dir.as_deref(), &stft_config,
                );
                LogLine { utt, stage: "separate", dur_ms: started.elapsed().as_millis(), status }
            })
            .collect::<Vec<_>>()
    })?;
    Ok(flush_logs(lines))
}

/// Resolve the clean reference for an utterance: exact stem first, then the
/// stem with a trailing `_snr...` tag stripped (mix cross-products append
/// the level to the id).
fn clean_ref_path(dir: &Path, utt: &str) -> PathBuf {
    let exact = dir.join(format!("{utt}.wav"));
    if exact.exists() {
        return exact;
    }
    if let Some(idx) = utt.rfind("_snr") {
        let stripped = dir.join(format!("{}.wav", &utt[..idx]));
        if stripped.exists() {
            return stripped;
        }
    }
    exact
}

fn process_separation(
    path: &Path,
    utt: &str,
    choice: &DenoiserChoice,
    out_speech: &Path,
    out_bg: &Path,
    dump_dir: Option<&Path>,
    stft_config: &StftConfig,
) -> Result<(), String> {
    let noisy = read_pipeline_wav(path)?;
    let result = match choice {
        DenoiserChoice::Identity => separate(&IdentityDenoiser, &noisy),
        DenoiserChoice::Zero => separate(&ZeroDenoiser, &noisy),
        DenoiserChoice::SpecSub(d) => separate(d, &noisy),
        DenoiserChoice::Irm { clean_ref, config } => {
            let clean = read_pipeline_wav(&clean_ref_path(clean_ref, utt))?;
            let oracle = IrmOracleDenoiser::new(clean, *config);
            separate(&oracle, &noisy)
        }
    }
    .map_err(|e| e.to_string())?;

    if let Some(dir) = dump_dir {
        let spec = stft(&noisy, stft_config).map_err(|e| e.to_string())?;
        dump_complex_matrix(dir.join(format!("{utt}.cpx")), &spec.bins)
            .map_err(|e| e.to_string())?;
    }
    write_wav(&result.speech_estimate, out_speech.join(format!("{utt}.wav")))
        .map_err(|e| e.to_string())?;
    write_wav(&result.background, out_bg.join(format!("{utt}.bg.wav")))
        .map_err(|e| e.to_string())?;
    Ok(())
}

pub fn convert(args: ConvertArgs, cfg: &Config) -> CmdResult {
    let in_dir: PathBuf = require(resolve(args.input, cfg, "in")?, "in")?;
    let out_dir: PathBuf = require(resolve(args.out, cfg, "out")?, "out")?;
    let converter: String =
        resolve(args.converter, cfg, "converter")?.unwrap_or_else(|| "identity".to_string());
    let template = resolve(args.cmd, cfg, "cmd")?;
    let normalize_rms_db = resolve(args.normalize_rms_db, cfg, "normalize-rms-db")?;
    let jobs = jobs_default(args.jobs, cfg)?;

    let external = match converter.as_str() {
        "identity" => None,
        "external" => {
            Some(require(template, "cmd (external converter command template)")?)
        }
        other => return Err(usage(format!("unknown converter '{other}'"))),
    };

    let files = stage_inputs(&in_dir)?;
    std::fs::create_dir_all(&out_dir).map_err(runtime)?;

    let lines = in_pool(jobs, || {
        files
            .par_iter()
            .map(|path| {
                let started = Instant::now();
                let utt = stem(path);
                let status =
                    process_conversion(path, &utt, external.as_deref(), normalize_rms_db, &out_dir);
                LogLine { utt, stage: "convert", dur_ms: started.elapsed().as_millis(), status }
            })
            .collect::<Vec<_>>()
    })?;
    Ok(flush_logs(lines))
}

/// Scale to a target RMS level in dBFS.
fn normalized(w: &Waveform, target_db: f64) -> Result<Waveform, String> {
    let rms = w.power().sqrt();
    if rms <= 0.0 {
        return Err("cannot normalize a silent signal".into());
    }
    let gain = 10f64.powf(target_db / 20.0) / rms;
    Waveform::new(w.samples().iter().map(|s| s * gain).collect(), w.sample_rate_hz())
        .map_err(|e| e.to_string())
}

fn process_conversion(
    path: &Path,
    utt: &str,
    external: Option<&str>,
    normalize_rms_db: Option<f64>,
    out_dir: &Path,
) -> Result<(), String> {
    let out_path = out_dir.join(format!("{utt}.wav"));

    // level normalization applies to the converter's input
    let mut staged_input: Option<PathBuf> = None;
    let input_rate;
    let effective_in: PathBuf = if let Some(db) = normalize_rms_db {
        let w = read_wav(path).map_err(|e| e.to_string())?;
        input_rate = w.sample_rate_hz();
        let scaled = normalized(&w, db)?;
        let staged = out_dir.join(format!(".norm-{utt}.wav"));
        write_wav(&scaled, &staged).map_err(|e| e.to_string())?;
        staged_input = Some(staged.clone());
        staged
    } else {
        input_rate = read_wav(path).map_err(|e| e.to_string())?.sample_rate_hz();
        path.to_path_buf()
    };

    let outcome = match external {
        None => {
            // identity: byte-for-byte copy of the (possibly normalized) input
            std::fs::read(&effective_in)
                .and_then(|bytes| atomic_write(&out_path, &bytes))
                .map_err(|e| e.to_string())
        }
        Some(template) => run_external(template, &effective_in, &out_path).and_then(|()| {
            // subprocess contract: output exists, readable, same rate
            let written = read_wav(&out_path).map_err(|e| format!("converter output: {e}"))?;
            if written.sample_rate_hz() != input_rate {
                return Err(format!(
                    "converter output rate {} Hz differs from input {} Hz",
                    written.sample_rate_hz(),
                    input_rate
                ));
            }
            Ok(())
        }),
    };
    if let Some(staged) = staged_input {
        let _ = std::fs::remove_file(staged);
    }
    outcome
}

fn run_external(template: &str, input: &Path, output: &Path) -> Result<(), String> {
    let mut tokens: Vec<String> = template.split_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        return Err("empty converter command".into());
    }
    let mut saw_in = false;
    let mut saw_out = false;
    for t in tokens.iter_mut() {
        if t.contains("{in}") {
            *t = t.replace("{in}", &input.display().to_string());
            saw_in = true;
        }
        if t.contains("{out}") {
            *t = t.replace("{out}", &output.display().to_string());
            saw_out = true;
        }
    }
    if !saw_in {
        tokens.push(input.display().to_string());
    }
    if !saw_out {
        tokens.push(output.display().to_string());
    }
    let status = std::process::Command::new(&tokens[0])
        .args(&tokens[1..])
        .status()
        .map_err(|e| format!("cannot run converter '{}': {e}", tokens[0]))?;
    if !status.success() {
        return Err(format!("converter exited with {status}"));
    }
    if !output.exists() {
        return Err("converter did not produce the output file".into());
    }
    Ok(())
}

pub fn superimpose_cmd(args: SuperimposeArgs, cfg: &Config) -> CmdResult {
    let converted_dir: PathBuf = require(resolve(args.converted, cfg, "converted")?, "converted")?;
    let bg_dir: PathBuf = require(resolve(args.bg, cfg, "bg")?, "bg")?;
    let out_dir: PathBuf = require(resolve(args.out, cfg, "out")?, "out")?;
    let mode_text: String = resolve(args.mode, cfg, "mode")?.unwrap_or_else(|| "add".to_string());
    let mode = SuperimposeMode::parse(&mode_text)
        .ok_or_else(|| usage(format!("unknown superimpose mode '{mode_text}'")))?;
    let jobs = jobs_default(args.jobs, cfg)?;

    let files = stage_inputs(&converted_dir)?;
    std::fs::create_dir_all(&out_dir).map_err(runtime)?;

    let lines = in_pool(jobs, || {
        files
            .par_iter()
            .map(|path| {
                let started = Instant::now();
                let utt = stem(path);
                let status = (|| -> Result<(), String> {
                    let out_path = out_dir.join(format!("{utt}.wav"));
                    if mode == SuperimposeMode::Drop {
                        // converted output passes through untouched
                        return std::fs::read(path)
                            .and_then(|bytes| atomic_write(&out_path, &bytes))
                            .map_err(|e| e.to_string());
                    }
                    let converted = read_wav(path).map_err(|e| e.to_string())?;
                    let bg_path = {
                        let tagged = bg_dir.join(format!("{utt}.bg.wav"));
                        if tagged.exists() {
                            tagged
                        } else {
                            bg_dir.join(format!("{utt}.wav"))
                        }
                    };
                    let background = read_wav(&bg_path).map_err(|e| e.to_string())?;
                    let mixed =
                        superimpose(&converted, &background, mode).map_err(|e| e.to_string())?;
                    write_wav(&mixed, &out_path).map_err(|e| e.to_string())
                })();
                LogLine { utt, stage: "superimpose", dur_ms: started.elapsed().as_millis(), status }
            })
            .collect::<Vec<_>>()
    })?;
    Ok(flush_logs(lines))
}

pub fn eval(args: EvalArgs, cfg: &Config) -> CmdResult {
    let manifest_path: PathBuf = require(resolve(args.manifest, cfg, "manifest")?, "manifest")?;
    let est_dir: PathBuf = require(resolve(args.est, cfg, "est")?, "est")?;
    let metrics_text: String = resolve(args.metrics, cfg, "metrics")?
        .unwrap_or_else(|| "si-sdr,sd-sdr,sar,mcd,stoi".to_string());
    let target_text: String =
        resolve(args.target, cfg, "target")?.unwrap_or_else(|| "speech".to_string());
    let mcd_coeffs = resolve(args.mcd_coeffs, cfg, "mcd-coeffs")?.unwrap_or(24);
    let out_json = resolve(args.out_json, cfg, "out-json")?;
    let out_table = resolve(args.out_table, cfg, "out-table")?;

    let mut metrics = Vec::new();
    for name in metrics_text.split(',') {
        metrics.push(
            MetricKind::parse(name).ok_or_else(|| usage(format!("unknown metric '{name}'")))?,
        );
    }
    let target = match target_text.as_str() {
        "speech" => EvalTarget::Speech,
        "background" => EvalTarget::Background,
        other => return Err(usage(format!("unknown eval target '{other}'"))),
    };

    let entries = read_manifest(&manifest_path).map_err(runtime)?;
    let opts = EvalOptions { metrics, target, mcd_coeffs };
    let started = Instant::now();
    let report = evaluate_corpus(&entries, &est_dir, &opts);

    let mut lines: Vec<LogLine> = Vec::new();
    for (utt, scores) in &report.per_utterance {
        let status = if scores.errors.is_empty() {
            Ok(())
        } else {
            Err(scores
                .errors
                .iter()
                .map(|(m, e)| format!("{m}: {e}"))
                .collect::<Vec<_>>()
                .join("; "))
        };
        lines.push(LogLine { utt: utt.clone(), stage: "eval", dur_ms: 0, status });
    }
    for utt in &report.missing_estimates {
        lines.push(LogLine {
            utt: utt.clone(),
            stage: "eval",
            dur_ms: 0,
            status: Err("missing estimate".into()),
        });
    }
    for (utt, reason) in &report.failed_inputs {
        lines.push(LogLine {
            utt: utt.clone(),
            stage: "eval",
            dur_ms: 0,
            status: Err(reason.clone()),
        });
    }
    let logs_ok = flush_logs(lines);
    eprintln!("eval completed in {} ms", started.elapsed().as_millis());

    let table = render_table(&report);
    print!("{table}");
    if let Some(path) = out_table {
        atomic_write(&path, table.as_bytes()).map_err(runtime)?;
    }
    if let Some(path) = out_json {
        atomic_write(&path, report.to_json().as_bytes()).map_err(runtime)?;
    }
    Ok(logs_ok && !report.has_failures())
}

pub fn vq_demo(args: VqDemoArgs, cfg: &Config) -> CmdResult {
    use ndarray::Array2;
    use rand::Rng;

    let clusters = resolve(args.clusters, cfg, "clusters")?.unwrap_or(4);
    let steps = resolve(args.steps, cfg, "steps")?.unwrap_or(50);
    let seed = seed_default(args.seed, cfg)?;
    if clusters == 0 || steps == 0 {
        return Err(usage("--clusters and --steps must be positive"));
    }

    let width = 64;
    let per_cluster = 32;
    let mut rng = n2nvc::util::derive_rng(seed, "vq-demo");
    let means = Array2::from_shape_fn((clusters, width), |_| rng.gen_range(-2.0..2.0));
    let mut data = Array2::zeros((clusters * per_cluster, width));
    for c in 0..clusters {
        for s in 0..per_cluster {
            for d in 0..width {
                data[(c * per_cluster + s, d)] = means[(c, d)] + rng.gen_range(-0.05..0.05);
            }
        }
    }

    // seed the codebook from the data (one row per partition) so no
    // codeword starts dead
    let init = Array2::from_shape_fn((clusters, width), |(c, d)| data[(c * per_cluster, d)]);
    let mut codebook = vq::Codebook::new(init, vq::DEFAULT_DECAY, vq::DEFAULT_EPSILON);
    println!("clusters={clusters} samples={} steps={steps} seed={seed}", clusters * per_cluster);
    for step in 1..=steps {
        let latents = vq::quantize(&codebook, &data).map_err(runtime)?;
        let commitment =
            vq::commitment_loss(&latents.z, &latents.quantized).map_err(runtime)?;
        vq::ema_update(&mut codebook, &data, &latents.indices).map_err(runtime)?;

        // worst distance from any true cluster mean to its nearest codeword
        let max_dist = (0..clusters)
            .map(|c| {
                (0..clusters)
                    .map(|i| {
                        means
                            .row(c)
                            .iter()
                            .zip(codebook.vectors().row(i))
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0f64, f64::max);
        if step <= 10 || step % 10 == 0 || step == steps {
            println!(
                "step={step} commitment={commitment:.6} max_codeword_to_mean={max_dist:.6}"
            );
        }
    }
    if let Some(path) = resolve(args.save_codebook, cfg, "save-codebook")? {
        codebook.save(&path).map_err(runtime)?;
        println!("codebook saved to {}", path.display());
    }
    Ok(true)
}
