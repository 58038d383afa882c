//! Acceptance suite: every criterion runs at its stated tolerance and prints
//! one pass/fail line (visible with `--nocapture`; the harness prints it on
//! failure regardless).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ndarray::{Array1, Array2, Array3, Array4};
use rand::Rng;

use n2nvc::audio::{mulaw_decode, mulaw_encode, read_wav, write_wav, MuLawCode, Waveform};
use n2nvc::complex_nn::{
    complex_batchnorm, complex_conv2d, ComplexBatchNormStats, ComplexConvParams, ComplexTensor,
};
use n2nvc::metrics::{mcd, sar, sd_sdr, si_sdr, stoi};
use n2nvc::mixing::{mix_at_snr, read_manifest};
use n2nvc::separation::{
    separate, Denoiser, IdentityDenoiser, IrmOracleDenoiser, SpecSubDenoiser, ZeroDenoiser,
};
use n2nvc::spectral::{istft, stft, StftConfig};
use n2nvc::synth::{speech_like, white_noise};
use n2nvc::util::{derive_rng, ulp_diff};
use n2nvc::vq;

fn pass(id: u32, name: &str, detail: &str) {
    println!("ACCEPTANCE {id:02} {name}: PASS ({detail})");
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_n2nvc"))
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("n2nvc-acc-{}-{tag}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn scaled(w: &Waveform, c: f64) -> Waveform {
    Waveform::new(w.samples().iter().map(|x| c * x).collect(), w.sample_rate_hz()).unwrap()
}

fn added(a: &Waveform, b: &[f64]) -> Waveform {
    Waveform::new(
        a.samples().iter().zip(b).map(|(x, y)| x + y).collect(),
        a.sample_rate_hz(),
    )
    .unwrap()
}

/// Criterion 1: re-measured SNR equals the request within 1e-6 dB for 1,000
/// random pairs over [-20, 60] dB, in under 30 s.
#[test]
fn c01_mixing_exactness() {
    let started = Instant::now();
    let mut rng = derive_rng(101, "acc-mix");
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let len = rng.gen_range(2000..12000);
        let speech = if i % 4 == 0 {
            speech_like(&format!("acc-mix-s{i}"), len, 8000)
        } else {
            white_noise(&format!("acc-mix-s{i}"), len, 8000, 0.5)
        };
        let noise = white_noise(&format!("acc-mix-n{i}"), len, 8000, 0.4);
        let snr = rng.gen_range(-20.0..60.0);
        let out = mix_at_snr(&speech, &noise, snr).unwrap();
        let measured = 10.0 * (speech.power() / out.scaled_noise.power()).log10();
        worst = worst.max((measured - snr).abs());
    }
    let elapsed = started.elapsed();
    assert!(worst <= 1e-6, "worst SNR error {worst} dB");
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    pass(1, "mixing-exactness", &format!("worst err {worst:.2e} dB over 1000 pairs in {elapsed:?}"));
}

/// Criterion 2: the residual identity `speech_estimate + background = noisy`
/// holds at <= 1 ulp per sample for every denoiser on 100 mixtures.
#[test]
fn c02_residual_identity_all_denoisers() {
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let clean = speech_like(&format!("acc-eq1-c{i}"), 4000, 8000);
        let noise = white_noise(&format!("acc-eq1-n{i}"), 4000, 8000, 0.4);
        let snr = 7.0 + (i % 4) as f64 * 4.0;
        let mixed = mix_at_snr(&clean, &noise, snr).unwrap();

        let irm = IrmOracleDenoiser::new(clean.clone(), StftConfig::SEPARATION);
        let specsub = SpecSubDenoiser::default();
        let denoisers: [&dyn Denoiser; 4] = [&IdentityDenoiser, &ZeroDenoiser, &specsub, &irm];
        for d in denoisers {
            let r = separate(d, &mixed.noisy).unwrap();
            for ((n, e), b) in mixed
                .noisy
                .samples()
                .iter()
                .zip(r.speech_estimate.samples())
                .zip(r.background.samples())
            {
                worst = worst.max(ulp_diff(e + b, *n, 1.0));
            }
        }
    }
    assert!(worst <= 1.0, "worst deviation {worst} ulp");
    pass(2, "residual-identity", &format!("worst {worst:.3} ulp across 4 denoisers x 100 mixtures"));
}

/// Criterion 3: mix -> separate(identity) -> convert(identity) ->
/// superimpose(add) reproduces the mixed corpus byte-for-byte on a
/// 40-utterance corpus in under 60 s.
#[test]
fn c03_end_to_end_identity() {
    let started = Instant::now();
    let dir = scratch("e2e");
    fs::create_dir_all(dir.join("clean")).unwrap();
    fs::create_dir_all(dir.join("noise")).unwrap();
    for i in 0..10 {
        write_wav(
            &speech_like(&format!("acc-e2e-c{i}"), 8000, 8000),
            dir.join("clean").join(format!("spk{i}_u.wav")),
        )
        .unwrap();
    }
    for i in 0..3 {
        write_wav(
            &white_noise(&format!("acc-e2e-n{i}"), 6000, 8000, 0.4),
            dir.join("noise").join(format!("n{i}.wav")),
        )
        .unwrap();
    }

    let ok = |st: std::process::Output, stage: &str| {
        assert!(st.status.success(), "{stage}: {}", String::from_utf8_lossy(&st.stderr));
    };
    ok(
        bin()
            .args(["mix", "--snr", "7,11,15,19", "--seed", "7"])
            .arg("--clean").arg(dir.join("clean"))
            .arg("--noise").arg(dir.join("noise"))
            .arg("--out").arg(dir.join("noisy"))
            .output().unwrap(),
        "mix",
    );
    ok(
        bin()
            .args(["separate", "--denoiser", "identity"])
            .arg("--in").arg(dir.join("noisy"))
            .arg("--out-speech").arg(dir.join("sep"))
            .output().unwrap(),
        "separate",
    );
    ok(
        bin()
            .args(["convert", "--converter", "identity"])
            .arg("--in").arg(dir.join("sep"))
            .arg("--out").arg(dir.join("conv"))
            .output().unwrap(),
        "convert",
    );
    ok(
        bin()
            .args(["superimpose", "--mode", "add"])
            .arg("--converted").arg(dir.join("conv"))
            .arg("--bg").arg(dir.join("sep"))
            .arg("--out").arg(dir.join("final"))
            .output().unwrap(),
        "superimpose",
    );

    let entries = read_manifest(&dir.join("noisy/manifest.jsonl")).unwrap();
    assert_eq!(entries.len(), 40, "expected a 40-utterance corpus");
    for e in &entries {
        let a = fs::read(dir.join("noisy").join(format!("{}.wav", e.utt_id))).unwrap();
        let b = fs::read(dir.join("final").join(format!("{}.wav", e.utt_id))).unwrap();
        assert_eq!(a, b, "{} not reproduced bit-exactly", e.utt_id);
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    fs::remove_dir_all(&dir).unwrap();
    pass(3, "end-to-end-identity", &format!("40 utterances byte-identical in {elapsed:?}"));
}

/// Criterion 4: metric correctness at the stated tolerances.
#[test]
fn c04_metric_correctness() {
    // si_sdr scale invariance within 1e-9 dB
    let r = white_noise("acc-m-ref", 4000, 8000, 0.5);
    let e = white_noise("acc-m-est", 4000, 8000, 0.5);
    let base = si_sdr(&r, &e).unwrap();
    let mut worst_scale: f64 = 0.0;
    for c in [1e-3, 0.25, 0.5, 3.0, -2.0, 1e3] {
        worst_scale = worst_scale.max((si_sdr(&r, &scaled(&e, c)).unwrap() - base).abs());
    }
    assert!(worst_scale <= 1e-9, "scale drift {worst_scale}");

    // sd_sdr <= si_sdr on 10,000 random pairs
    let mut rng = derive_rng(104, "acc-m-pairs");
    for _ in 0..10_000 {
        let n = rng.gen_range(16..96);
        let rr =
            Waveform::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), 8000).unwrap();
        let ee =
            Waveform::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), 8000).unwrap();
        let sd = sd_sdr(&rr, &ee).unwrap();
        let si = si_sdr(&rr, &ee).unwrap();
        assert!(sd <= si + 1e-9, "sd {sd} > si {si}");
    }

    // sd_sdr(ref, 2 ref) = 6.0206 +/- 1e-4
    let v = sd_sdr(&r, &scaled(&r, 2.0)).unwrap();
    assert!((v - 6.0206).abs() <= 1e-4, "{v}");

    // sar orthogonal-artifact case = 20 +/- 1e-6
    let noise_ref = white_noise("acc-m-nref", 4000, 8000, 0.5);
    let v_raw = white_noise("acc-m-art", 4000, 8000, 0.5);
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let energy = |a: &[f64]| -> f64 { a.iter().map(|x| x * x).sum() };
    let mut w = v_raw.samples().to_vec();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for b in [r.samples(), noise_ref.samples()] {
        let mut u = b.to_vec();
        for q in &basis {
            let c = dot(&u, q) / energy(q);
            for (ui, qi) in u.iter_mut().zip(q) {
                *ui -= c * qi;
            }
        }
        basis.push(u);
    }
    for q in &basis {
        let c = dot(&w, q) / energy(q);
        for (wi, qi) in w.iter_mut().zip(q) {
            *wi -= c * qi;
        }
    }
    let target = energy(r.samples()) / 100.0;
    let s = (target / energy(&w)).sqrt();
    for wi in w.iter_mut() {
        *wi *= s;
    }
    let est = added(&r, &w);
    let v = sar(&r, &noise_ref, &est).unwrap();
    assert!((v - 20.0).abs() <= 1e-6, "sar {v}");

    // stoi(x, x) = 1 +/- 1e-9 and mcd(x, x) = 0
    let x = speech_like("acc-m-stoi", 8000, 8000);
    let v = stoi(&x, &x).unwrap();
    assert!((v - 1.0).abs() <= 1e-9, "stoi {v}");
    let xn = white_noise("acc-m-mcd", 8000, 8000, 0.4);
    assert_eq!(mcd(&xn, &xn, 24).unwrap(), 0.0);

    pass(4, "metric-correctness", "scale invariance, sd<=si x10000, 6.0206 dB, sar 20 dB, stoi 1, mcd 0");
}

/// Criterion 5: with the IRM oracle across {7, 11, 15, 19} dB, mean speech
/// SI-SDR strictly increases with SNR and mean background SI-SDR strictly
/// decreases, in under 2 minutes.
#[test]
fn c05_irm_trend_over_snr() {
    let started = Instant::now();
    let levels = [7.0, 11.0, 15.0, 19.0];
    let per_level = 6;
    let mut speech_means = Vec::new();
    let mut bg_means = Vec::new();
    for &snr in &levels {
        let mut speech_scores = Vec::new();
        let mut bg_scores = Vec::new();
        for i in 0..per_level {
            let clean = speech_like(&format!("acc-irm-c{i}"), 16000, 8000);
            let noise = white_noise(&format!("acc-irm-n{i}"), 16000, 8000, 0.4);
            let mixed = mix_at_snr(&clean, &noise, snr).unwrap();
            let d = IrmOracleDenoiser::new(clean.clone(), StftConfig::SEPARATION);
            let r = separate(&d, &mixed.noisy).unwrap();
            speech_scores.push(si_sdr(&clean, &r.speech_estimate).unwrap());
            bg_scores.push(si_sdr(&mixed.scaled_noise, &r.background).unwrap());
        }
        speech_means.push(speech_scores.iter().sum::<f64>() / per_level as f64);
        bg_means.push(bg_scores.iter().sum::<f64>() / per_level as f64);
    }
    for w in speech_means.windows(2) {
        assert!(w[1] > w[0], "speech SI-SDR not increasing: {speech_means:?}");
    }
    for w in bg_means.windows(2) {
        assert!(w[1] < w[0], "background SI-SDR not decreasing: {bg_means:?}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    pass(
        5,
        "irm-snr-trend",
        &format!("speech {speech_means:.8?} up, background {bg_means:.8?} down in {elapsed:?}"),
    );
}

/// Criterion 6: mean STOI strictly increases across {0, 5, 10, 15, 20} dB on
/// 50 synthetic mixtures.
#[test]
fn c06_stoi_monotonicity() {
    let levels = [0.0, 5.0, 10.0, 15.0, 20.0];
    let per_level = 10; // 50 mixtures total
    let mut means = Vec::new();
    for &snr in &levels {
        let mut scores = Vec::new();
        for i in 0..per_level {
            let clean = speech_like(&format!("acc-stoi-c{i}"), 16000, 8000);
            let noise = white_noise(&format!("acc-stoi-n{i}"), 16000, 8000, 0.4);
            let mixed = mix_at_snr(&clean, &noise, snr).unwrap();
            scores.push(stoi(&clean, &mixed.noisy).unwrap());
        }
        means.push(scores.iter().sum::<f64>() / per_level as f64);
    }
    for w in means.windows(2) {
        assert!(w[1] > w[0], "STOI means not increasing: {means:?}");
    }
    pass(6, "stoi-monotonicity", &format!("means {means:.4?} strictly increasing"));
}

/// Criterion 7: VQ suite -- exhaustive argmin oracle on 10,000 x 512,
/// gradient checks, EMA convergence, zero total loss, uniform NLL.
#[test]
fn c07_vq_suite() {
    // quantize vs exhaustive oracle, 10,000 rows x 512 codewords
    let cb = vq::Codebook::random(512, 64, 701);
    let mut rng = derive_rng(702, "acc-vq");
    let z = Array2::from_shape_fn((10_000, 64), |_| rng.gen_range(-2.0..2.0));
    let q = vq::quantize(&cb, &z).unwrap();
    for (j, row) in z.rows().into_iter().enumerate() {
        // oracle uses the expanded quadratic form
        let z_sq: f64 = row.iter().map(|v| v * v).sum();
        let mut best = (0usize, f64::INFINITY);
        for (i, code) in cb.vectors().rows().into_iter().enumerate() {
            let e_sq: f64 = code.iter().map(|v| v * v).sum();
            let cross: f64 = row.iter().zip(code).map(|(a, b)| a * b).sum();
            let d = z_sq - 2.0 * cross + e_sq;
            if d < best.1 {
                best = (i, d);
            }
        }
        assert_eq!(q.indices[j], best.0, "row {j}");
    }

    // commitment gradient against central finite differences, 1e-6 relative
    let z = Array2::from_shape_fn((6, 5), |_| rng.gen_range(-1.0..1.0));
    let zq = Array2::from_shape_fn((6, 5), |_| rng.gen_range(-1.0..1.0));
    let grad = vq::commitment_grad(&z, &zq).unwrap();
    let h = 1e-6;
    for idx in [(0, 0), (2, 4), (5, 1), (3, 3)] {
        let mut zp = z.clone();
        zp[idx] += h;
        let mut zm = z.clone();
        zm[idx] -= h;
        let fd = (vq::commitment_loss(&zp, &zq).unwrap()
            - vq::commitment_loss(&zm, &zq).unwrap())
            / (2.0 * h);
        assert!(
            (fd - grad[idx]).abs() <= 1e-6 * grad[idx].abs().max(1.0),
            "fd {fd} vs analytic {}",
            grad[idx]
        );
    }

    // EMA pulls codewords onto synthetic cluster means within 1e-3
    let mut centers = Array2::zeros((4, 16));
    for c in 0..4 {
        for d in 0..16 {
            centers[(c, d)] = rng.gen_range(-2.0..2.0);
        }
    }
    let mut data = Array2::zeros((4 * 64, 16));
    for s in 0..4 * 64 {
        for d in 0..16 {
            data[(s, d)] = centers[(s % 4, d)] + rng.gen_range(-0.01..0.01);
        }
    }
    let init = Array2::from_shape_fn((4, 16), |(c, d)| data[(c, d)]);
    let mut cb = vq::Codebook::new(init, vq::DEFAULT_DECAY, vq::DEFAULT_EPSILON);
    for _ in 0..800 {
        let q = vq::quantize(&cb, &data).unwrap();
        vq::ema_update(&mut cb, &data, &q.indices).unwrap();
    }
    let q = vq::quantize(&cb, &data).unwrap();
    for c in 0..4 {
        let members: Vec<usize> = (0..4 * 64).filter(|&s| s % 4 == c).collect();
        let codeword = q.indices[members[0]];
        for &m in &members {
            assert_eq!(q.indices[m], codeword, "cluster {c} split");
        }
        for d in 0..16 {
            let mean: f64 =
                members.iter().map(|&m| data[(m, d)]).sum::<f64>() / members.len() as f64;
            let got = cb.vectors()[(codeword, d)];
            assert!((got - mean).abs() < 1e-3, "cluster {c} dim {d}: {got} vs {mean}");
        }
    }

    // perfect reconstruction with committed latents: total loss = 0
    let z = Array2::from_shape_fn((3, 8), |_| rng.gen_range(-1.0..1.0));
    let loss = vq::VqLoss::new(0.0, vq::commitment_loss(&z, &z).unwrap(), vq::DEFAULT_BETA);
    assert_eq!(loss.total, 0.0);

    // uniform logits: NLL = ln 256 within 1e-9
    let logits = Array2::from_elem((32, 256), 0.37);
    let targets = MuLawCode::new((0..32).map(|i| (i * 8) as u8).collect(), 8000);
    let nll = vq::reconstruction_nll(&logits, &targets).unwrap();
    assert!((nll - 256f64.ln()).abs() <= 1e-9, "{nll}");

    pass(7, "vq-suite", "argmin oracle 10000x512, FD gradient, EMA 1e-3, zero total, ln 256");
}

/// Criterion 8: complex kernels -- four-real-conv equivalence on 100 random
/// shapes within 1e-9, multiplication by i, batch-norm whitening to the
/// identity covariance within 1e-6.
#[test]
fn c08_complex_nn_suite() {
    let mut rng = derive_rng(801, "acc-cnn");

    fn real_conv2d(
        x: &Array3<f64>,
        w: &Array4<f64>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Array3<f64> {
        let (in_c, h, wid) = x.dim();
        let (out_c, _, kh, kw) = w.dim();
        let oh = (h + 2 * padding.0 - kh) / stride.0 + 1;
        let ow = (wid + 2 * padding.1 - kw) / stride.1 + 1;
        let mut y = Array3::zeros((out_c, oh, ow));
        for o in 0..out_c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..in_c {
                        for dh in 0..kh {
                            for dw in 0..kw {
                                let ih = (i * stride.0 + dh) as isize - padding.0 as isize;
                                let iw = (j * stride.1 + dw) as isize - padding.1 as isize;
                                if ih >= 0
                                    && iw >= 0
                                    && (ih as usize) < h
                                    && (iw as usize) < wid
                                {
                                    acc += w[(o, c, dh, dw)] * x[(c, ih as usize, iw as usize)];
                                }
                            }
                        }
                    }
                    y[(o, i, j)] = acc;
                }
            }
        }
        y
    }

    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let in_c = rng.gen_range(1..4);
        let out_c = rng.gen_range(1..4);
        let kh = rng.gen_range(1..4);
        let kw = rng.gen_range(1..4);
        let h = rng.gen_range(kh..kh + 7);
        let wd = rng.gen_range(kw..kw + 7);
        let stride = (rng.gen_range(1..3), rng.gen_range(1..3));
        let padding = (rng.gen_range(0..2), rng.gen_range(0..2));
        let x = ComplexTensor::new(
            Array3::from_shape_fn((in_c, h, wd), |_| rng.gen_range(-1.0..1.0)),
            Array3::from_shape_fn((in_c, h, wd), |_| rng.gen_range(-1.0..1.0)),
        )
        .unwrap();
        let p = ComplexConvParams {
            w_re: Array4::from_shape_fn((out_c, in_c, kh, kw), |_| rng.gen_range(-1.0..1.0)),
            w_im: Array4::from_shape_fn((out_c, in_c, kh, kw), |_| rng.gen_range(-1.0..1.0)),
            b_re: Array1::from_shape_fn(out_c, |_| rng.gen_range(-0.5..0.5)),
            b_im: Array1::from_shape_fn(out_c, |_| rng.gen_range(-0.5..0.5)),
            stride,
            padding,
        };
        let out = complex_conv2d(&x, &p).unwrap();
        let rr = real_conv2d(&x.re, &p.w_re, stride, padding);
        let ii = real_conv2d(&x.im, &p.w_im, stride, padding);
        let ri = real_conv2d(&x.im, &p.w_re, stride, padding);
        let ir = real_conv2d(&x.re, &p.w_im, stride, padding);
        for o in 0..out_c {
            for i in 0..out.dim().1 {
                for j in 0..out.dim().2 {
                    let want_re = rr[(o, i, j)] - ii[(o, i, j)] + p.b_re[o];
                    let want_im = ri[(o, i, j)] + ir[(o, i, j)] + p.b_im[o];
                    worst = worst.max((out.re[(o, i, j)] - want_re).abs());
                    worst = worst.max((out.im[(o, i, j)] - want_im).abs());
                }
            }
        }

        // multiplication by i (zero bias): f(i x) = i f(x)
        if trial < 20 {
            let p0 = ComplexConvParams {
                b_re: Array1::zeros(out_c),
                b_im: Array1::zeros(out_c),
                ..p.clone()
            };
            let ix = ComplexTensor::new(x.im.mapv(|v| -v), x.re.clone()).unwrap();
            let f = complex_conv2d(&x, &p0).unwrap();
            let fi = complex_conv2d(&ix, &p0).unwrap();
            for (a, b) in fi.re.iter().zip(f.im.iter()) {
                assert!((a + b).abs() <= 1e-9);
            }
            for (a, b) in fi.im.iter().zip(f.re.iter()) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
    }
    assert!(worst <= 1e-9, "four-conv mismatch {worst}");

    // batch norm whitens its defining batch to identity covariance
    let base = Array3::from_shape_fn((3, 10, 12), |_| rng.gen_range(-1.0..1.0));
    let x = ComplexTensor::new(
        base.clone(),
        base.mapv(|v| 0.6 * v + 0.2) + Array3::from_shape_fn((3, 10, 12), |_| rng.gen_range(-0.3..0.3)),
    )
    .unwrap();
    let stats = ComplexBatchNormStats::from_batch(&x);
    let out = complex_batchnorm(&x, &stats).unwrap();
    let check = ComplexBatchNormStats::from_batch(&out);
    for ch in 0..3 {
        assert!((check.cov_rr[ch] - 1.0).abs() <= 1e-6);
        assert!((check.cov_ii[ch] - 1.0).abs() <= 1e-6);
        assert!(check.cov_ri[ch].abs() <= 1e-6);
        assert!(check.mean_re[ch].abs() <= 1e-9);
        assert!(check.mean_im[ch].abs() <= 1e-9);
    }

    pass(8, "complex-nn-suite", &format!("100 shapes, worst four-conv err {worst:.2e}; i-rotation; BN whitening"));
}

/// Criterion 9: round-trip suites -- ISTFT/STFT at both configs, exhaustive
/// mu-law code identity plus the analytic error bound, WAV within one step.
#[test]
fn c09_round_trips() {
    // ISTFT(STFT(x)) within 1e-6 relative L2 for both configurations
    for (cfg, key) in [(StftConfig::SEPARATION, "sep"), (StftConfig::FEATURES, "feat")] {
        let x = white_noise(&format!("acc-rt-{key}"), 9973, 8000, 0.5);
        let rec = istft(&stft(&x, &cfg).unwrap()).unwrap();
        let num: f64 =
            x.samples().iter().zip(rec.samples()).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = x.samples().iter().map(|a| a * a).sum();
        let rel = (num / den).sqrt();
        assert!(rel <= 1e-6, "{key}: rel err {rel}");
    }

    // mu-law: decode-then-encode is the identity on all 256 codes
    let all = MuLawCode::new((0..=255).collect(), 8000);
    let re = mulaw_encode(&mulaw_decode(&all, 255), 255).unwrap();
    assert_eq!(re.codes(), all.codes());

    // analytic per-cell error bound (oracle: closed-form companding)
    let mu = 255.0f64;
    let expand = |y: f64| -> f64 { y.signum() * ((1.0 + mu).powf(y.abs()) - 1.0) / mu };
    let cell_bound = |k: u8| -> f64 {
        let y_k = f64::from(k) / 127.5 - 1.0;
        let y_lo = ((f64::from(k) - 0.5) / 127.5 - 1.0).max(-1.0);
        let y_hi = ((f64::from(k) + 0.5) / 127.5 - 1.0).min(1.0);
        let x_k = expand(y_k);
        (expand(y_hi) - x_k).max(x_k - expand(y_lo))
    };
    let analytic_max = (0..=255u8).map(cell_bound).fold(0.0f64, f64::max);
    let n = 100_000;
    let mut grid_max: f64 = 0.0;
    for i in 0..=n {
        let x = -1.0 + 2.0 * f64::from(i) / f64::from(n);
        let w = Waveform::new(vec![x], 8000).unwrap();
        let code = mulaw_encode(&w, 255).unwrap();
        let rt = mulaw_decode(&code, 255).samples()[0];
        let err = (x - rt).abs();
        assert!(err <= cell_bound(code.codes()[0]) + 1e-15, "x={x}");
        grid_max = grid_max.max(err);
    }
    let x_worst = expand(1.0 - 1.0 / 255.0) * (1.0 + 1e-10);
    let w = Waveform::new(vec![x_worst], 8000).unwrap();
    let rt = mulaw_decode(&mulaw_encode(&w, 255).unwrap(), 255).samples()[0];
    let probed = (x_worst - rt).abs().max(grid_max);
    assert!(grid_max <= analytic_max + 1e-15);
    assert!((probed - analytic_max).abs() <= 1e-9, "probed {probed} vs analytic {analytic_max}");

    // WAV round trip within one 16-bit quantization step
    let dir = scratch("rt-wav");
    let x = white_noise("acc-rt-wav", 8192, 8000, 0.9);
    let p = dir.join("x.wav");
    write_wav(&x, &p).unwrap();
    let back = read_wav(&p).unwrap();
    let worst = x
        .samples()
        .iter()
        .zip(back.samples())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(worst <= 1.0 / 32768.0, "wav err {worst}");
    fs::remove_dir_all(&dir).unwrap();

    pass(9, "round-trips", &format!("istft<=1e-6 both configs, mu-law bound {analytic_max:.6}, wav {worst:.2e}"));
}

/// Criterion 10: two full pipeline runs with the same seed produce
/// byte-identical manifests, WAVs, and reports.
#[test]
fn c10_pipeline_determinism() {
    let dir = scratch("det");
    fs::create_dir_all(dir.join("clean")).unwrap();
    fs::create_dir_all(dir.join("noise")).unwrap();
    for i in 0..4 {
        write_wav(
            &speech_like(&format!("acc-det-c{i}"), 6000, 8000),
            dir.join("clean").join(format!("spk{i}_u.wav")),
        )
        .unwrap();
    }
    write_wav(
        &white_noise("acc-det-n", 5000, 8000, 0.4),
        dir.join("noise").join("n0.wav"),
    )
    .unwrap();

    let run_pipeline = |tag: &str| -> PathBuf {
        let root = dir.join(tag);
        let ok = |st: std::process::Output, stage: &str| {
            assert!(st.status.success(), "{stage}: {}", String::from_utf8_lossy(&st.stderr));
        };
        ok(
            bin()
                .args(["mix", "--snr", "7,19", "--seed", "21", "--jobs", "2"])
                .arg("--clean").arg(dir.join("clean"))
                .arg("--noise").arg(dir.join("noise"))
                .arg("--out").arg(root.join("noisy"))
                .output().unwrap(),
            "mix",
        );
        ok(
            bin()
                .args(["separate", "--denoiser", "specsub", "--jobs", "2"])
                .arg("--in").arg(root.join("noisy"))
                .arg("--out-speech").arg(root.join("sep"))
                .output().unwrap(),
            "separate",
        );
        ok(
            bin()
                .args(["convert", "--converter", "identity"])
                .arg("--in").arg(root.join("sep"))
                .arg("--out").arg(root.join("conv"))
                .output().unwrap(),
            "convert",
        );
        ok(
            bin()
                .args(["superimpose", "--mode", "add"])
                .arg("--converted").arg(root.join("conv"))
                .arg("--bg").arg(root.join("sep"))
                .arg("--out").arg(root.join("final"))
                .output().unwrap(),
            "superimpose",
        );
        ok(
            bin()
                .args(["eval", "--metrics", "si-sdr,sd-sdr,sar,stoi"])
                .arg("--manifest").arg(root.join("noisy/manifest.jsonl"))
                .arg("--est").arg(root.join("sep"))
                .arg("--out-json").arg(root.join("report.json"))
                .arg("--out-table").arg(root.join("report.txt"))
                .output().unwrap(),
            "eval",
        );
        root
    };

    let a = run_pipeline("run-a");
    let b = run_pipeline("run-b");

    fn tree_files(root: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(&d).unwrap().filter_map(|e| e.ok()) {
                let p = e.path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push(p);
                }
            }
        }
        out.sort();
        out
    }

    let files_a = tree_files(&a);
    let files_b = tree_files(&b);
    assert_eq!(files_a.len(), files_b.len());
    let mut compared = 0;
    for (fa, fb) in files_a.iter().zip(&files_b) {
        assert_eq!(
            fa.strip_prefix(&a).unwrap(),
            fb.strip_prefix(&b).unwrap(),
            "tree structure differs"
        );
        assert_eq!(
            fs::read(fa).unwrap(),
            fs::read(fb).unwrap(),
            "{} differs between runs",
            fa.display()
        );
        compared += 1;
    }
    fs::remove_dir_all(&dir).unwrap();
    pass(10, "pipeline-determinism", &format!("{compared} files byte-identical across two runs"));
}
