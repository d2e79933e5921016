//! Acceptance suite. Prints one `PASS` or `FAIL` line per criterion and exits
//! non-zero when a criterion fails that this host can evaluate.
//!
//! Pinned tolerances: identity 1e-6, interpolation 1e-6, wavelet 1e-6,
//! perceptual zero case 1e-9, loss oracles 1e-5, gradient relative 1e-4,
//! fit gain 20 dB, PSNR closed forms 1e-3 dB, SSIM oracle 1e-6,
//! throughput 30 FPS.

mod oracles;

use std::time::{Duration, Instant};

use oracles::*;
use rand::Rng;
use wavelut::fit::{
    fit_lattice, lattice_gradients, synthetic_training_set, Degradation, FitConfig, Objective,
};
use wavelut::fusion::{blend, dynamic_fuse};
use wavelut::lattice::io::{decode_wlut4d, encode_wlut4d, load_wlut4d, save_wlut4d};
use wavelut::lattice::{quadrilinear_apply, FusionWeights, Lattice4D, MergeMode};
use wavelut::losses::{
    content_loss, fourier_perceptual_loss, monotone_loss, smooth_loss, ContentParams,
};
use wavelut::metrics::{psnr, ssim, ssim_with, SsimConfig};
use wavelut::pipeline::{enhance_clip, hardware_description, random_clip, ClipSequence, Enhancer};
use wavelut::prior::{LinearMap, PredictorParams, PriorKind, PriorMap, FEATURE_LEN};
use wavelut::wavelet::{dwt2, idwt2};
use wavelut::Frame;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn max_abs_diff(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&p, &q)| (p as f64 - q as f64).abs())
        .fold(0.0, f64::max)
}

fn identity_suite() -> Outcome {
    let lut = Lattice4D::identity(17).map_err(|e| e.to_string())?;
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let rgb: [f32; 3] = [r.random(), r.random(), r.random()];
        let out = lut.sample(rgb, r.random());
        worst = worst.max(max_abs_diff(&out, &rgb));
    }
    let clip = random_clip(128, 128, 16, 12).map_err(|e| e.to_string())?;
    let enhancer = Enhancer::identity(17).map_err(|e| e.to_string())?;
    let (out, _) = enhance_clip(&clip, &enhancer).map_err(|e| e.to_string())?;
    let clip_err = clip
        .frames()
        .iter()
        .zip(out.frames())
        .map(|(a, b)| max_abs_diff(a.data(), b.data()))
        .fold(0.0, f64::max);
    check(
        worst <= 1e-6 && clip_err <= 1e-6,
        format!("max error {worst:.2e} on 1e4 pixels, {clip_err:.2e} on a 16x128x128 clip"),
    )
}

fn interpolation_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(21);
    let mut worst: f64 = 0.0;
    for (i, &n) in [2usize, 3, 5, 17].iter().enumerate() {
        let values: Vec<f32> = (0..n.pow(4) * 3).map(|_| r.random()).collect();
        let axes = if i % 2 == 0 {
            Lattice4D::uniform_axes(n).map_err(|e| e.to_string())?
        } else {
            std::array::from_fn(|_| random_axis(n, &mut r))
        };
        let lut = Lattice4D::new(axes, values).map_err(|e| e.to_string())?;
        let (h, w) = (50, 50);
        let frame = random_frame(h, w, &mut r);
        let prior = random_prior(h, w, &mut r);
        let (out, _) = quadrilinear_apply(&lut, &frame, &prior).map_err(|e| e.to_string())?;
        for y in 0..h {
            for x in 0..w {
                let p = frame.pixel(y, x);
                let want = quadrilinear_oracle(&lut, [p[0], p[1], p[2]], prior.get(y, x));
                for (c, &v) in want.iter().enumerate() {
                    worst = worst.max((out.get(y, x, c) as f64 - v).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-6 && elapsed < Duration::from_secs(10),
        format!("max error {worst:.2e} over 1e4 queries, n in {{2,3,5,17}}, {elapsed:.2?}"),
    )
}

fn wavelet_roundtrip() -> Outcome {
    let mut r = rng(31);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let h = 2 * r.random_range(1..=32);
        let w = 2 * r.random_range(1..=32);
        let f = random_frame(h, w, &mut r);
        let back = idwt2(&dwt2(&f).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(f.data(), back.data()));
    }
    let constant = Frame::filled(16, 24, 3, 0.375).map_err(|e| e.to_string())?;
    let bands = dwt2(&constant).map_err(|e| e.to_string())?;
    let ll_exact = bands.ll.data().iter().all(|&v| v == 0.375);
    let details_zero = [&bands.lh, &bands.hl, &bands.hh]
        .iter()
        .all(|b| b.data().iter().all(|&v| v == 0.0));
    check(
        worst <= 1e-6 && ll_exact && details_zero,
        format!(
            "max roundtrip error {worst:.2e} on 100 frames; constant LL exact: {ll_exact}, details zero: {details_zero}"
        ),
    )
}

fn loss_zero_cases() -> Outcome {
    let mut r = rng(41);
    let mono = monotone_loss(&Lattice4D::identity(17).map_err(|e| e.to_string())?);
    let flat = Lattice4D::constant(9, [0.2, 0.5, 0.7]).map_err(|e| e.to_string())?;
    let zero_w = FusionWeights::fixed(vec![0.0; 3]).map_err(|e| e.to_string())?;
    let smooth = smooth_loss(&flat, &zero_w);
    let x = random_frame(32, 32, &mut r);
    let mut perceptual: f64 = 0.0;
    for varpi in [0.0, 0.3, 0.5, 1.0] {
        perceptual = perceptual.max(fourier_perceptual_loss(&x, &x, varpi).map_err(|e| e.to_string())?);
    }
    let content = content_loss(&x, &x).map_err(|e| e.to_string())?;
    let eps = ContentParams::default().epsilon;
    check(
        mono == 0.0 && smooth == 0.0 && perceptual <= 1e-9 && content <= eps + 1e-9,
        format!("monotone {mono}, smooth {smooth}, perceptual {perceptual:.2e}, content {content:.3e} (eps {eps:e})"),
    )
}

fn loss_oracles() -> Outcome {
    let mut r = rng(51);
    let mut worst: f64 = 0.0;
    for n in 2..=4 {
        for _ in 0..3 {
            let lut = random_lattice(n, &mut r);
            let k = r.random_range(1..=4);
            let a: Vec<f32> = (0..k).map(|_| r.random()).collect();
            let b: Vec<f32> = (0..k).map(|_| r.random()).collect();
            let w = FusionWeights::new(a, b, MergeMode::Mean).map_err(|e| e.to_string())?;
            worst = worst.max((smooth_loss(&lut, &w) - smooth_oracle(&lut, &w.merged)).abs());
            worst = worst.max((monotone_loss(&lut) - monotone_oracle(&lut)).abs());
        }
    }
    for _ in 0..5 {
        let a = random_frame(8, 8, &mut r);
        let b = random_frame(8, 8, &mut r);
        let varpi: f64 = r.random();
        let got = fourier_perceptual_loss(&a, &b, varpi).map_err(|e| e.to_string())?;
        worst = worst.max((got - fourier_oracle(&a, &b, varpi)).abs());
    }
    check(
        worst <= 1e-5,
        format!("max deviation {worst:.2e} (smooth, monotone on n<=4; Fourier on 8x8)"),
    )
}

/// Central differences on the stored f32 values. The loss is evaluated in
/// double precision from those values, so the divisor is the step that was
/// actually representable.
fn finite_difference(lut: &Lattice4D, pairs: &[wavelut::fit::TrainingPair], obj: &Objective, i: usize, h: f32) -> wavelut::Result<f64> {
    let base = lut.values()[i];
    let eval = |v: f32| -> wavelut::Result<f64> {
        let mut values = lut.values().to_vec();
        values[i] = v;
        Ok(lattice_gradients(&lut.with_values(values)?, pairs, obj)?.loss.total)
    };
    let (up, down) = (base + h, base - h);
    Ok((eval(up)? - eval(down)?) / (up as f64 - down as f64))
}

fn gradient_check() -> Outcome {
    let mut r = rng(61);
    let lut = random_lattice(3, &mut r);
    let pairs: Vec<wavelut::fit::TrainingPair> = (0..2)
        .map(|_| {
            wavelut::fit::TrainingPair::new(random_frame(2, 2, &mut r), random_prior(2, 2, &mut r), random_frame(2, 2, &mut r))
        })
        .collect::<wavelut::Result<_>>()
        .map_err(|e| e.to_string())?;
    let obj = Objective::charbonnier(ContentParams::default().epsilon);
    let analytic = lattice_gradients(&lut, &pairs, &obj).map_err(|e| e.to_string())?.grad;
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let fd = finite_difference(&lut, &pairs, &obj, i, 1e-4).map_err(|e| e.to_string())?;
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    check(
        worst <= 1e-4,
        format!(
            "max relative error {worst:.2e} over all {} entries of an n=3 lattice, Charbonnier term, 4-pixel frames",
            analytic.len()
        ),
    )
}

fn fit_recovery() -> Outcome {
    let d = Degradation::default();
    let train = synthetic_training_set(8, 128, 128, d, 1).map_err(|e| e.to_string())?;
    let test = synthetic_training_set(4, 128, 128, d, 2).map_err(|e| e.to_string())?;
    let cfg = FitConfig {
        steps: 500,
        warmup_steps: 1000,
        ..FitConfig::default()
    };
    let start = Instant::now();
    let out = fit_lattice(&Lattice4D::identity(17).map_err(|e| e.to_string())?, &train, &cfg)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let (mut before, mut after) = (0.0, 0.0);
    for p in &test {
        let (y, _) = out.lattice.apply(&p.input, &p.prior).map_err(|e| e.to_string())?;
        before += psnr(&p.input, &p.reference, 1.0).map_err(|e| e.to_string())?;
        after += psnr(&y, &p.reference, 1.0).map_err(|e| e.to_string())?;
    }
    let gain = (after - before) / test.len() as f64;
    let steps = cfg.steps + cfg.warmup_steps;
    check(
        gain >= 20.0 && steps <= 5000,
        format!(
            "held-out gain {gain:.2} dB ({:.2} -> {:.2} dB), {steps} steps, {elapsed:.1?}",
            before / test.len() as f64,
            after / test.len() as f64
        ),
    )
}

fn fusion_properties() -> Outcome {
    let mut r = rng(71);
    let base = random_prior(32, 32, &mut r);
    let lighting = PriorMap::new(32, 32, base.values().to_vec(), PriorKind::Lighting).map_err(|e| e.to_string())?;
    let intensity = PriorMap::new(32, 32, base.values().to_vec(), PriorKind::Intensity).map_err(|e| e.to_string())?;
    let (_, w_same) = dynamic_fuse(&intensity, &lighting).map_err(|e| e.to_string())?;
    let inverted = PriorMap::new(32, 32, base.values().iter().map(|v| 1.0 - v).collect(), PriorKind::Lighting)
        .map_err(|e| e.to_string())?;
    let (_, w_anti) = dynamic_fuse(&intensity, &inverted).map_err(|e| e.to_string())?;
    let mut outside = 0usize;
    for _ in 0..1000 {
        let (h, w) = (r.random_range(1..=8), r.random_range(1..=8));
        let i = PriorMap::new(h, w, (0..h * w).map(|_| r.random()).collect(), PriorKind::Intensity).map_err(|e| e.to_string())?;
        let l = PriorMap::new(h, w, (0..h * w).map(|_| r.random()).collect(), PriorKind::Lighting).map_err(|e| e.to_string())?;
        let weight: f64 = r.random();
        let (fused, clamps) = blend(&i, &l, weight).map_err(|e| e.to_string())?;
        let hull_ok = fused.values().iter().zip(i.values().iter().zip(l.values())).all(|(&f, (&a, &b))| {
            let slack = 1e-6;
            f >= a.min(b) - slack && f <= a.max(b) + slack
        });
        if !hull_ok || clamps != 0 {
            outside += 1;
        }
    }
    check(
        (w_same - 1.0).abs() <= 1e-9 && w_anti.abs() <= 1e-9 && outside == 0,
        format!("weight {w_same} for identical maps, {w_anti} for anti-correlated; {outside} of 1000 fused maps left the hull"),
    )
}

fn metrics() -> Outcome {
    let a = Frame::filled(16, 16, 3, 0.5).map_err(|e| e.to_string())?;
    let b = Frame::filled(16, 16, 3, 0.6).map_err(|e| e.to_string())?;
    let c = Frame::filled(16, 16, 3, 0.5 + 1.0 / 255.0).map_err(|e| e.to_string())?;
    let p20 = psnr(&a, &b, 1.0).map_err(|e| e.to_string())?;
    let p48 = psnr(&a, &c, 1.0).map_err(|e| e.to_string())?;
    let mut r = rng(81);
    let x = random_frame(32, 32, &mut r);
    let self_ssim = ssim(&x, &x).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let p = random_frame(32, 32, &mut r);
        let q = Frame::from_fn(32, 32, 3, |y, x, ch| (p.get(y, x, ch) + 0.2 * r.random::<f32>()).min(1.0))
            .map_err(|e| e.to_string())?;
        let cfg = SsimConfig::default();
        let got = ssim_with(&p, &q, &cfg).map_err(|e| e.to_string())?;
        worst = worst.max((got - ssim_oracle(&p, &q, cfg.window, cfg.sigma, cfg.peak)).abs());
    }
    check(
        (p20 - 20.0).abs() <= 1e-3 && (p48 - 48.1308).abs() <= 1e-3 && (self_ssim - 1.0).abs() <= 1e-12 && worst <= 1e-6,
        format!("psnr {p20:.4} / {p48:.4} dB, ssim(a,a) {self_ssim}, ssim oracle deviation {worst:.2e} on 32x32"),
    )
}

fn throughput() -> (Outcome, bool) {
    let workers = 8;
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let run = || -> wavelut::Result<f64> {
        let mut r = rng(91);
        let lut = random_lattice(17, &mut r);
        let frames: Vec<Frame> = (0..3).map(|_| random_frame(1080, 1920, &mut r)).collect();
        let priors: Vec<PriorMap> = (0..3).map(|_| random_prior(1080, 1920, &mut r)).collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| wavelut::Error::Config(e.to_string()))?;
        let mut times = Vec::new();
        for _ in 0..5 {
            let start = Instant::now();
            for (f, p) in frames.iter().zip(&priors) {
                pool.install(|| quadrilinear_apply(&lut, f, p))?;
            }
            times.push(start.elapsed().as_secs_f64() / frames.len() as f64);
        }
        times.sort_by(f64::total_cmp);
        Ok(1.0 / times[times.len() / 2])
    };
    let outcome = match run() {
        Ok(fps) => check(
            fps >= 30.0,
            format!(
                "{fps:.1} FPS at 1920x1080 with {workers} workers, n=17, median of 5; hardware: {}",
                hardware_description()
            ),
        ),
        Err(e) => Err(e.to_string()),
    };
    // The target presumes a desktop CPU able to host the eight workers.
    (outcome, cores >= workers)
}

fn file_format() -> Outcome {
    let mut r = rng(101);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut mismatches = 0;
    for i in 0..50 {
        let n = r.random_range(2..=9);
        let lut = if i % 2 == 0 {
            random_lattice(n, &mut r)
        } else {
            let axes = std::array::from_fn(|_| random_axis(n, &mut r));
            Lattice4D::new(axes, (0..n.pow(4) * 3).map(|_| r.random_range(-1.0..2.0)).collect())
                .map_err(|e| e.to_string())?
        };
        let bytes = encode_wlut4d(&lut).map_err(|e| e.to_string())?;
        let decoded = decode_wlut4d(&bytes).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("lut{i}.wlut4d"));
        save_wlut4d(&lut, &path).map_err(|e| e.to_string())?;
        let loaded = load_wlut4d(&path).map_err(|e| e.to_string())?;
        let same_bits = |other: &Lattice4D| {
            other.n() == lut.n()
                && (0..4).all(|d| {
                    other.axes()[d].coords().iter().map(|v| v.to_bits()).eq(lut.axes()[d].coords().iter().map(|v| v.to_bits()))
                })
                && other.values().iter().map(|v| v.to_bits()).eq(lut.values().iter().map(|v| v.to_bits()))
        };
        if !same_bits(&decoded) || !same_bits(&loaded) {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("{mismatches} of 50 random lattices differed after save/load"))
}

fn determinism() -> Outcome {
    let mut r = rng(111);
    let bases: Vec<Lattice4D> = (0..3).map(|_| random_lattice(9, &mut r)).collect();
    let map = |r: &mut rand_chacha::ChaCha8Rng| {
        LinearMap::new(
            (0..3 * FEATURE_LEN).map(|_| r.random_range(-0.1..0.1)).collect(),
            (0..3).map(|_| r.random_range(0.0..0.5)).collect(),
        )
    };
    let predictor = PredictorParams::new(map(&mut r).map_err(|e| e.to_string())?, map(&mut r).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let frames: Vec<Frame> = (0..8).map(|_| random_frame(72, 96, &mut r)).collect();
    let clip = ClipSequence::new(frames, 24.0).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for threads in [1, 2, 8] {
        let enhancer = Enhancer::new(bases.clone(), Some(predictor.clone()), MergeMode::Mean, Default::default())
            .map_err(|e| e.to_string())?
            .with_threads(Some(threads));
        let (out, report) = enhance_clip(&clip, &enhancer).map_err(|e| e.to_string())?;
        let bits: Vec<u32> = out.frames().iter().flat_map(|f| f.data().iter().map(|v| v.to_bits())).collect();
        outputs.push((bits, report.per_frame_weight));
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    check(same, format!("8-frame clip, 1/2/8 workers: outputs bitwise identical: {same}"))
}

fn main() {
    let criteria: Vec<(&str, Box<dyn Fn() -> (Outcome, bool)>)> = vec![
        ("identity suite", Box::new(|| (identity_suite(), true))),
        ("interpolation oracle", Box::new(|| (interpolation_oracle(), true))),
        ("wavelet roundtrip", Box::new(|| (wavelet_roundtrip(), true))),
        ("loss zero-cases", Box::new(|| (loss_zero_cases(), true))),
        ("loss oracles", Box::new(|| (loss_oracles(), true))),
        ("gradient check", Box::new(|| (gradient_check(), true))),
        ("fit recovery", Box::new(|| (fit_recovery(), true))),
        ("fusion properties", Box::new(|| (fusion_properties(), true))),
        ("metrics", Box::new(|| (metrics(), true))),
        ("throughput", Box::new(throughput)),
        ("file format", Box::new(|| (file_format(), true))),
        ("determinism", Box::new(|| (determinism(), true))),
    ];
    let mut blocking = 0;
    let mut failed = 0;
    for (name, run) in &criteria {
        let (outcome, evaluable) = run();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                let note = if evaluable {
                    blocking += 1;
                    String::new()
                } else {
                    " (host cannot run the 8 workers this target assumes; not counted)".to_string()
                };
                println!("FAIL {name}: {detail}{note}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed, {blocking} blocking",
        criteria.len() - failed
    );
    if blocking > 0 {
        std::process::exit(1);
    }
}
