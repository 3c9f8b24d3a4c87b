//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any fails. A positional argument filters criteria by
//! substring of their name.

mod common;

use std::f64::consts::PI;
use std::fs;
use std::time::Instant;

use common::*;
use mdcn::audio::AudioBuffer;
use mdcn::bitstream::{payload_bits, read_stream, write_stream, HEADER_BITS, HEADER_BYTES};
use mdcn::codec::{decode_core, decode_neural, encode_audio, EncodeOptions};
use mdcn::mdctnet::{
    forward_with_cache, generate, init_params, param_count, sample_laplacian, teacher_forced_forward, ModelConfig,
    ModelParams,
};
use mdcn::training::{
    batch_gradients, nll_loss, CompensatedSum, train_loop, validation_loss, Dataset, TrainOutputs, TrainingConfig, TrainingItem,
};
use mdcn::transform::{mdct_analyze, mdct_synthesize, WindowType};
use mdcn::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Copy of `p` with every exactly-zero parameter replaced by a small random
/// value, so no dependency hides behind a zero initialization.
fn randomized(config: &ModelConfig, seed: u64) -> ModelParams {
    let mut p = init_params(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for v in p.iter_mut() {
        if *v == 0.0 {
            *v = rng.gen_range(-0.3..0.3);
        }
    }
    p
}

fn perfect_reconstruction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let slots = 10 * 48_000 / 768 + 1;
    let seq = random_sequence(slots, &mut rng);
    let n = seq.covered_len();
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let frames = mdct_analyze(&AudioBuffer::new(x.clone()).map_err(err)?, &seq).map_err(err)?;
    let y = mdct_synthesize(&frames, &seq).map_err(err)?;
    ensure(y.len() == n, || format!("length {} != {n}", y.len()))?;
    let e = rel_rms_error(&x, y.samples());
    let shorts = seq.frames().iter().filter(|w| w.is_short()).count();
    ensure(e <= 1e-10, || format!("relative RMS error {e:.3e}"))?;
    Ok(format!("{n} samples, {} frames ({shorts} short), rel err {e:.2e}", seq.len()))
}

/// `X[k] = sum_n w[n] x[n] cos(pi/M (n + 1/2 + M/2)(k + 1/2))` with a sine
/// window of length 2M.
fn direct_mdct(x: &[f64], start: i64, m: usize) -> Vec<f64> {
    let z: Vec<f64> = (0..2 * m)
        .map(|n| {
            let i = start + n as i64;
            let w = (PI * (n as f64 + 0.5) / (2 * m) as f64).sin();
            if i < 0 || i as usize >= x.len() {
                0.0
            } else {
                w * x[i as usize]
            }
        })
        .collect();
    let mf = m as f64;
    (0..m)
        .map(|k| {
            z.iter()
                .enumerate()
                .map(|(n, v)| v * (PI / mf * (n as f64 + 0.5 + mf / 2.0) * (k as f64 + 0.5)).cos())
                .sum()
        })
        .collect()
}

fn transform_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let seq = random_sequence(400, &mut rng);
    let x: Vec<f64> = (0..seq.covered_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let frames = mdct_analyze(&AudioBuffer::new(x.clone()).map_err(err)?, &seq).map_err(err)?;
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for kind in [WindowType::Long, WindowType::Short] {
        let picks: Vec<_> = seq
            .layout()
            .into_iter()
            .zip(&frames)
            .filter(|(p, _)| p.window == kind)
            .take(100)
            .collect();
        ensure(picks.len() == 100, || format!("only {} {kind:?} frames", picks.len()))?;
        for (pos, frame) in picks {
            let oracle = direct_mdct(&x, pos.start, kind.lines());
            let peak = oracle.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let e = frame
                .lines
                .iter()
                .zip(&oracle)
                .fold(0.0f64, |a, (f, o)| a.max((f - o).abs()))
                / peak;
            worst = worst.max(e);
        }
        detail.push(format!("100 {kind:?}"));
    }
    ensure(worst <= 1e-10, || format!("max relative error {worst:.3e}"))?;
    Ok(format!("{}, max rel err {worst:.2e}", detail.join(" + ")))
}

fn bitstream_integrity() -> Outcome {
    let mut frames_checked = 0;
    for seed in 0..5 {
        let (header, records) = random_stream(100, seed);
        let bytes = write_stream(&header, &records).map_err(err)?;
        let (h, r) = read_stream(&bytes).map_err(err)?;
        ensure(h == header, || format!("seed {seed}: header {h:?} != {header:?}"))?;
        ensure(r == records, || format!("seed {seed}: records differ"))?;
        ensure(write_stream(&h, &r).map_err(err)? == bytes, || format!("seed {seed}: re-encode differs"))?;
        frames_checked += r.len();
    }

    let (header, records) = random_stream(100, 99);
    let bytes = write_stream(&header, &records).map_err(err)?;
    let frame_end = |k: usize| payload_bits(&header, &records[..k]).unwrap();

    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    ensure(matches!(read_stream(&bad), Err(Error::BadMagic)), || "flipped magic not rejected".into())?;
    ensure(matches!(read_stream(&bytes[..HEADER_BYTES - 3]), Err(Error::TruncatedHeader)), || {
        "short header not rejected".into()
    })?;
    let mut bad = bytes.clone();
    bad[4] = 9;
    ensure(matches!(read_stream(&bad), Err(Error::BadVersion(9))), || "bad version not rejected".into())?;

    for k in [1, 37, records.len() - 1] {
        let cut = HEADER_BYTES + frame_end(k).div_ceil(8) as usize;
        match read_stream(&bytes[..cut]) {
            Err(Error::TruncatedStream(i)) if i == k => {}
            other => return Err(format!("cut inside frame {k}: {:?}", other.map(|_| ()))),
        }
    }

    // rewrite a LONG frame that follows a LONG frame as SHORT
    let k = (1..records.len())
        .find(|&k| records[k].window_type == WindowType::Long && records[k - 1].window_type == WindowType::Long)
        .ok_or("no LONG->LONG pair")?;
    let bit = HEADER_BITS + frame_end(k);
    let mut bad = bytes.clone();
    for (j, v) in [(0, 1), (1, 0)] {
        let b = bit + j;
        let mask = 0x80u8 >> (b % 8);
        if v == 1 {
            bad[(b / 8) as usize] |= mask;
        } else {
            bad[(b / 8) as usize] &= !mask;
        }
    }
    match read_stream(&bad) {
        Err(Error::CorruptWindowSequence(i)) if i == k => {}
        other => return Err(format!("LONG->SHORT at {k}: {:?}", other.map(|_| ()))),
    }
    Ok(format!("{frames_checked} frames bit-exact; 5 corruption classes rejected"))
}

fn vbr_compliance() -> Outcome {
    let signals = [
        ("pink noise", pink_noise(10.0, 1)),
        ("speech-shaped noise", speech_shaped_noise(10.0, 2)),
        ("multitone", multitone(10.0, 3)),
    ];
    let mut parts = Vec::new();
    for (name, audio) in signals {
        let t = Instant::now();
        let enc = encode_audio(&audio, &EncodeOptions::at_kbps(24.0)).map_err(err)?;
        let secs = t.elapsed().as_secs_f64();
        let kbps = enc.file_kbps();
        ensure((kbps / 24.0 - 1.0).abs() <= 0.05, || format!("{name}: {kbps:.3} kb/s"))?;
        ensure(secs < 60.0, || format!("{name}: took {secs:.1} s"))?;
        parts.push(format!("{name} {kbps:.2} kb/s ({secs:.1} s)"));
    }
    Ok(parts.join(", "))
}

fn nll_values() -> Outcome {
    for (mu, s, y, want) in [(0.0, 1.0, 0.0, 2f64.ln()), (2.0, 0.5, 3.0, 2.0)] {
        let got = nll_loss(mu, s, y).map_err(err)?;
        ensure((got - want).abs() <= 1e-6, || format!("nll({mu}, {s}, {y}) = {got}, want {want}"))?;
    }
    ensure(nll_loss(0.0, 0.0, 1.0).is_err(), || "s = 0 accepted".into())?;
    Ok("(0,1,0) = 0.693147, (2,0.5,3) = 2.000000".into())
}

/// Batch loss and the side of every kink it crosses: ReLU inputs and the
/// sign of each target minus its location.
fn loss_and_pattern(p: &ModelParams, batch: &[TrainingItem]) -> Result<(f64, Vec<bool>), String> {
    let total: usize = batch.iter().map(|b| b.targets.len()).sum();
    let mut sum = CompensatedSum::default();
    let mut pattern = Vec::new();
    for item in batch {
        let fwd = forward_with_cache(p, &item.targets, &item.cond).map_err(err)?;
        for ((&m, &s), &y) in fwd.output.mu.iter().zip(&fwd.output.scale).zip(&item.targets) {
            sum.add(nll_loss(m, s, y).map_err(err)?);
            pattern.push(y > m);
        }
        pattern.extend(fwd.activation_pattern());
    }
    Ok((sum.value() / total as f64, pattern))
}

/// Central differences on the smooth piece containing the current point:
/// `h` halves until both probes keep every kink on the same side.
fn gradient_check() -> Outcome {
    let config = gradcheck_config();
    let n = param_count(&config);
    ensure(n <= 100_000, || format!("{n} parameters"))?;
    let mut params = randomized(&config, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let batch = vec![random_item(3, &mut rng), random_item(3, &mut rng)];
    let (_, grads) = batch_gradients(&params, &batch).map_err(err)?;
    let analytic: Vec<f64> = grads.iter().copied().collect();
    let names: Vec<&str> = mdcn::mdctnet::Tensor::ALL
        .iter()
        .flat_map(|t| std::iter::repeat_n(t.name(), t.len(&config)))
        .collect();
    let (_, base) = loss_and_pattern(&params, &batch)?;

    let mut worst = (0.0f64, "");
    let mut shrunk = 0;
    for i in 0..n {
        let orig = *params.iter().nth(i).unwrap();
        let mut h = 1e-4;
        let fd = loop {
            *params.iter_mut().nth(i).unwrap() = orig + h;
            let (up, pu) = loss_and_pattern(&params, &batch)?;
            *params.iter_mut().nth(i).unwrap() = orig - h;
            let (down, pd) = loss_and_pattern(&params, &batch)?;
            *params.iter_mut().nth(i).unwrap() = orig;
            if (pu == base && pd == base) || h < 1e-7 {
                break (up - down) / (2.0 * h);
            }
            h /= 2.0;
            shrunk += 1;
        };
        let a = analytic[i];
        let denom = a.abs().max(fd.abs());
        let rel = if denom == 0.0 { 0.0 } else { (a - fd).abs() / denom };
        if rel > worst.0 {
            worst = (rel, names[i]);
        }
    }
    ensure(worst.0 <= 1e-3, || format!("max relative error {:.3e} in {}", worst.0, worst.1))?;
    Ok(format!(
        "{n} parameters, max rel err {:.2e} ({}), {shrunk} step halvings at kinks",
        worst.0, worst.1
    ))
}

fn causality() -> Outcome {
    let config = ModelConfig::toy();
    let p = randomized(&config, 31);
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let frames = 20;
    let item = random_item(frames, &mut rng);
    let base = teacher_forced_forward(&p, &item.targets, &item.cond).map_err(err)?;
    let lines = 768;
    let l = config.lines_per_band;
    let n = config.lookahead;

    // index of the first output that differs from the baseline
    let first_change = |x: &[f64], cond: &mdcn::mdctnet::ConditioningContext| -> Result<Option<usize>, String> {
        let out = teacher_forced_forward(&p, x, cond).map_err(err)?;
        Ok((0..out.mu.len()).find(|&i| out.mu[i] != base.mu[i] || out.scale[i] != base.scale[i]))
    };

    // time: perturb the last band of frame t0, which no band of t0 sees
    let t0 = 7;
    let mut x = item.targets.clone();
    for v in &mut x[(t0 + 1) * lines - l..(t0 + 1) * lines] {
        *v += 0.5;
    }
    let first = first_change(&x, &item.cond)?;
    ensure(
        first.is_some_and(|i| i / lines == t0 + 1),
        || format!("time: first change at {first:?}"),
    )?;

    // frequency: perturb band b0 of frame t0
    let b0 = 5;
    let mut x = item.targets.clone();
    for v in &mut x[t0 * lines + b0 * l..t0 * lines + (b0 + 1) * l] {
        *v += 0.5;
    }
    let first = first_change(&x, &item.cond)?;
    ensure(first == Some(t0 * lines + (b0 + 1) * l), || format!("frequency: first change at {first:?}"))?;

    // lookahead: conditioning at frame t0 + n reaches frame t0 and no earlier
    let tc = t0 + n;
    let mut cond = item.cond.clone();
    for v in &mut cond.coefficients[tc * lines..(tc + 1) * lines] {
        *v += 1.0;
    }
    for v in &mut cond.log_gains[tc * lines..(tc + 1) * lines] {
        *v -= 0.5;
    }
    cond.one_hot[tc * 4..(tc + 1) * 4].rotate_left(1);
    let first = first_change(&item.targets, &cond)?;
    ensure(first == Some(t0 * lines), || format!("lookahead: first change at {first:?}"))?;
    Ok(format!("time, frequency and lookahead n = {n} verified on {frames} frames"))
}

fn sampler_statistics() -> Outcome {
    let (mu, s) = (0.3, 1.7);
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let xs: Vec<f64> = (0..n).map(|_| sample_laplacian(mu, s, rng.gen::<f64>())).collect();
    let mad = xs.iter().map(|x| (x - mu).abs()).sum::<f64>() / n as f64;
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let (e1, e2) = (mad / s - 1.0, var / (2.0 * s * s) - 1.0);
    ensure(e1.abs() <= 0.01, || format!("E|X-mu| off by {:.3}%", e1 * 100.0))?;
    ensure(e2.abs() <= 0.02, || format!("variance off by {:.3}%", e2 * 100.0))?;
    Ok(format!("E|X-mu| {:+.3}%, variance {:+.3}%", e1 * 100.0, e2 * 100.0))
}

fn overfit() -> Outcome {
    let excerpt = melody(1.0, 1);
    let item = TrainingItem::from_audio(&excerpt).map_err(err)?;
    let model = ModelConfig::toy();
    let cfg = TrainingConfig {
        batch_size: 1,
        steps_per_epoch: 25,
        max_steps: 150,
        seed: 5,
        ..TrainingConfig::default()
    };
    let dir = tempfile::tempdir().map_err(err)?;
    let out = TrainOutputs {
        checkpoint: dir.path().join("model.mdnw"),
        loss_csv: dir.path().join("loss.csv"),
    };
    let dataset = Dataset::single(item.clone());
    let initial = validation_loss(&init_params(&model, cfg.seed).map_err(err)?, &dataset.validation, cfg.crop_frames())
        .map_err(err)?;
    let report = train_loop(&dataset, &model, &cfg, &out, false).map_err(err)?;
    let ratio = report.best_val / initial;
    ensure(ratio <= 0.5, || format!("NLL {initial:.4} -> {:.4} (ratio {ratio:.3})", report.best_val))?;

    let params = mdcn::mdctnet::load_checkpoint(&out.checkpoint).map_err(err)?;
    let tf = teacher_forced_forward(&params, &item.targets, &item.cond).map_err(err)?;
    let rms = |v: &mut dyn Iterator<Item = f64>| {
        let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x * x, c + 1));
        (s / c as f64).sqrt()
    };
    let target_rms = rms(&mut item.targets.iter().copied());
    let mu_err = rms(&mut tf.mu.iter().zip(&item.targets).map(|(m, y)| m - y));
    ensure(mu_err < target_rms, || format!("one-step mu error {mu_err:.4} >= target RMS {target_rms:.4}"))?;

    let bytes = encode_audio(&excerpt, &EncodeOptions::at_kbps(24.0)).map_err(err)?.bytes;
    let a = decode_neural(&bytes, &params, 3).map_err(err)?;
    let b = decode_neural(&bytes, &params, 3).map_err(err)?;
    let c = decode_neural(&bytes, &params, 4).map_err(err)?;
    ensure(a.len() == excerpt.len(), || format!("decoded {} samples, want {}", a.len(), excerpt.len()))?;
    ensure(a.samples().iter().all(|v| v.is_finite()), || "non-finite output".into())?;
    ensure(a.samples() == b.samples(), || "same seed gave different output".into())?;
    ensure(a.samples() != c.samples(), || "different seeds gave identical output".into())?;
    let gen = generate(&params, &item.cond, 3).map_err(err)?;
    ensure(gen.frames.len() == item.targets.len(), || "generated shape mismatch".into())?;
    Ok(format!(
        "NLL {initial:.4} -> {:.4} (ratio {ratio:.3}) in {} steps; one-step mu err {mu_err:.4} < RMS {target_rms:.4}",
        report.best_val,
        report.history.len()
    ))
}

fn train_once(dir: &std::path::Path) -> Result<(Vec<u8>, Vec<u8>, Vec<u8>), String> {
    let audio = multitone(1.5, 9);
    let items: Vec<TrainingItem> = [0, 1]
        .iter()
        .map(|&i| {
            let seg = AudioBuffer::new(audio.samples()[i * 24_000..i * 24_000 + 48_000].to_vec()).unwrap();
            TrainingItem::from_audio(&seg)
        })
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let dataset = Dataset::from_labelled(items.into_iter().map(|i| (i, None)).collect()).map_err(err)?;
    let cfg = TrainingConfig {
        batch_size: 2,
        crop_seconds: 0.25,
        steps_per_epoch: 2,
        max_steps: 4,
        seed: 8,
        ..TrainingConfig::default()
    };
    let out = TrainOutputs {
        checkpoint: dir.join("model.mdnw"),
        loss_csv: dir.join("loss.csv"),
    };
    train_loop(&dataset, &gradcheck_config(), &cfg, &out, false).map_err(err)?;
    let read = |p: std::path::PathBuf| fs::read(p).map_err(err);
    Ok((read(out.checkpoint.clone())?, read(out.loss_csv.clone())?, read(out.state_path())?))
}

fn determinism() -> Outcome {
    let audio = multitone(3.0, 7);
    let opts = EncodeOptions::at_kbps(24.0);
    let a = encode_audio(&audio, &opts).map_err(err)?.bytes;
    let b = encode_audio(&audio, &opts).map_err(err)?.bytes;
    ensure(a == b, || "encoder output differs".into())?;
    let (da, db) = (decode_core(&a).map_err(err)?, decode_core(&a).map_err(err)?);
    ensure(da.samples() == db.samples(), || "core decode differs".into())?;
    let params = randomized(&gradcheck_config(), 51);
    let na = decode_neural(&a, &params, 9).map_err(err)?;
    let nb = decode_neural(&a, &params, 9).map_err(err)?;
    ensure(na.samples() == nb.samples(), || "neural decode differs".into())?;
    let (d1, d2) = (tempfile::tempdir().map_err(err)?, tempfile::tempdir().map_err(err)?);
    let r1 = train_once(d1.path())?;
    let r2 = train_once(d2.path())?;
    ensure(r1.0 == r2.0, || "checkpoints differ".into())?;
    ensure(r1.1 == r2.1, || "loss CSVs differ".into())?;
    ensure(r1.2 == r2.2, || "optimizer states differ".into())?;
    Ok(format!("{} byte stream, {} byte checkpoint reproduced", a.len(), r1.0.len()))
}

/// Independent closed form: each layer's weights and biases summed by hand.
fn closed_form_count(c: &ModelConfig) -> usize {
    let (nb, l, d, h, hm) = (c.num_bands, c.lines_per_band, c.latent_dim, c.gru_hidden, c.mlp_hidden);
    let (n, nn) = (c.lookahead, c.cross_band_halfwidth);
    let gru = |input: usize| 3 * h * input + 3 * h * h + 6 * h;
    let a = l * d + d;
    let b = (2 * n + 1) * 2 * l * 2 * d + 2 * d;
    let cc = 4 * 2 * d + 2 * d;
    let time = gru(d) + gru(h) + nb * 2 * h;
    let dd = (2 * nn + 1) * (h + d) * d + d;
    let e = l * d + d + l;
    let freq = gru(d) + gru(h) + 2 * h;
    let mlp = h * hm + hm + hm * 2 * l + 2 * l;
    a + b + cc + time + dd + e + freq + mlp
}

fn parameter_counts() -> Outcome {
    let toy = ModelConfig::toy();
    let (got, want) = (param_count(&toy), closed_form_count(&toy));
    ensure(got == want, || format!("toy {got} != closed form {want}"))?;
    let p = init_params(&toy, 0).map_err(err)?;
    ensure(p.param_count() == want, || format!("allocated {} != {want}", p.param_count()))?;
    let full = param_count(&ModelConfig::full_scale());
    ensure(full == closed_form_count(&ModelConfig::full_scale()), || "full-scale closed form differs".into())?;
    ensure((20_000_000..=50_000_000).contains(&full), || format!("full scale {full}"))?;
    Ok(format!("toy {got}, full scale {full}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("MDCT perfect reconstruction", perfect_reconstruction),
        ("transform oracle equivalence", transform_oracle),
        ("bitstream integrity", bitstream_integrity),
        ("VBR compliance", vbr_compliance),
        ("NLL evaluations", nll_values),
        ("gradient correctness", gradient_check),
        ("autoregressive causality", causality),
        ("Laplacian sampler statistics", sampler_statistics),
        ("overfit sanity", overfit),
        ("determinism", determinism),
        ("parameter counts", parameter_counts),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = run();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}) [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail}) [{secs:.1} s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
