//! Gradient-based fitting of lattice values (and optionally of the basis
//! weight predictor) on paired low-light / reference frames.
//!
//! Lattice outputs are linear in the stored values, so the gradient of any
//! image-space loss reaches each stored value through its quadrilinear
//! weight: `∂L/∂v = Σ_pixels ∂L/∂out · w`. The lookup priors are fixed
//! inputs; nothing is propagated into the prior stack.

use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::fusion::FusionOptions;
use crate::lattice::{Corners, Lattice4D, MergeMode};
use crate::losses::{
    charbonnier_gradient_values, content_gradient_values, fourier_gradient_values,
    monotone_term, monotone_term_gradient, smooth_term, smooth_term_gradient, total_loss,
    LossBundle, LossParts, LossWeights,
};
use crate::pipeline::frame_prior;
use crate::prior::{pooled_features, LinearMap, PredictorParams, PriorMap, FEATURE_LEN};
use crate::wavelet::dwt2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Adam with bias correction:
    /// `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`,
    /// `p ← p − lr·m̂/(√v̂ + ε)`.
    #[default]
    Adam,
    /// Heavy-ball gradient descent: `u ← μu + g`, `p ← p − lr·u`.
    Momentum,
}

/// Optimisation settings, usually read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub steps: usize,
    /// Frames per step; all frames are used when the data set is smaller.
    pub batch_frames: usize,
    /// Side of the square random crop taken from each frame per step;
    /// frames smaller than this are used whole.
    pub crop: usize,
    pub beta_s: f64,
    pub beta_m: f64,
    pub vartheta: f64,
    pub epsilon: f64,
    /// Balance between Fourier amplitude and phase terms.
    pub varpi: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub momentum: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Steps between full-data evaluations when steps use a subset.
    pub eval_every: usize,
    /// Map values back onto lattices that are non-decreasing along every
    /// axis after each step.
    pub enforce_monotone: bool,
    /// Charbonnier-only steps taken before the total loss is optimised.
    /// The Fourier phase term carries no brightness information, so starting
    /// it far from the reference stalls the fit.
    pub warmup_steps: usize,
    pub warmup_learning_rate: f64,
    pub warmup_crop: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            learning_rate: 4e-4,
            steps: 2000,
            batch_frames: 8,
            crop: 256,
            beta_s: w.beta_s,
            beta_m: w.beta_m,
            vartheta: w.vartheta,
            epsilon: w.epsilon,
            varpi: 0.5,
            seed: 0,
            optimizer: Optimizer::Adam,
            momentum: 0.9,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            eval_every: 50,
            enforce_monotone: true,
            warmup_steps: 1000,
            warmup_learning_rate: 1e-2,
            warmup_crop: 64,
        }
    }
}

impl FitConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.steps == 0 {
            return fail("steps must be >= 1".into());
        }
        if self.batch_frames == 0 || self.crop == 0 || self.warmup_crop == 0 || self.eval_every == 0 {
            return fail("batch_frames, crop, warmup_crop and eval_every must be >= 1".into());
        }
        if !(self.warmup_learning_rate > 0.0 && self.warmup_learning_rate.is_finite()) {
            return fail(format!(
                "warmup_learning_rate must be positive, got {}",
                self.warmup_learning_rate
            ));
        }
        if !(0.0..=1.0).contains(&self.varpi) {
            return fail(format!("varpi must be in [0, 1], got {}", self.varpi));
        }
        for (name, v) in [
            ("beta_s", self.beta_s),
            ("beta_m", self.beta_m),
            ("vartheta", self.vartheta),
            ("epsilon", self.epsilon),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum)
            || !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
        {
            return fail("momentum and Adam betas must be in [0, 1)".into());
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            beta_s: self.beta_s,
            beta_m: self.beta_m,
            vartheta: self.vartheta,
            epsilon: self.epsilon,
        }
    }

    pub fn objective(&self) -> Objective {
        Objective::full(self.loss_weights(), self.varpi)
    }
}

/// Which loss terms a gradient evaluation includes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub weights: LossWeights,
    pub varpi: f64,
    /// Include `ϑ(1 − SSIM)` in the content term.
    pub ssim: bool,
    /// Include the Fourier perceptual term.
    pub perceptual: bool,
    /// Include the smoothness and monotonicity regularisers.
    pub regularisers: bool,
}

impl Objective {
    /// Every term of the total loss.
    pub fn full(weights: LossWeights, varpi: f64) -> Self {
        Self {
            weights,
            varpi,
            ssim: true,
            perceptual: true,
            regularisers: true,
        }
    }

    /// The mean Charbonnier penalty alone.
    pub fn charbonnier(epsilon: f64) -> Self {
        Self {
            weights: LossWeights {
                epsilon,
                ..LossWeights::default()
            },
            varpi: 0.0,
            ssim: false,
            perceptual: false,
            regularisers: false,
        }
    }
}

/// A low-light input, its lookup prior and the reference it should map to.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub input: Frame,
    pub prior: PriorMap,
    pub reference: Frame,
}

impl TrainingPair {
    pub fn new(input: Frame, prior: PriorMap, reference: Frame) -> Result<Self> {
        input.ensure_rgb()?;
        input.ensure_same_shape(&reference)?;
        if prior.height() != input.height() || prior.width() != input.width() {
            return Err(Error::Shape(format!(
                "prior is {}x{} but frame is {}x{}",
                prior.height(),
                prior.width(),
                input.height(),
                input.width()
            )));
        }
        Ok(Self {
            input,
            prior,
            reference,
        })
    }

    /// Pairs `input` with `reference`, deriving the prior from `input`.
    pub fn with_computed_prior(input: Frame, reference: Frame, fusion: &FusionOptions) -> Result<Self> {
        let prior = frame_prior(&input, fusion)?;
        Self::new(input, prior, reference)
    }
}

/// Corner tables of one training pair; depend only on axes and inputs.
struct Prepared {
    h: usize,
    w: usize,
    corners: Vec<Corners>,
    reference: Vec<f64>,
}

fn prepare(axes_of: &Lattice4D, pairs: &[TrainingPair]) -> Vec<Prepared> {
    pairs
        .iter()
        .map(|p| {
            let corners = p
                .input
                .data()
                .par_chunks_exact(3)
                .zip(p.prior.values())
                .map(|(rgb, &e)| axes_of.corners([rgb[0], rgb[1], rgb[2]], e))
                .collect();
            Prepared {
                h: p.input.height(),
                w: p.input.width(),
                corners,
                reference: p.reference.data().iter().map(|&v| v as f64).collect(),
            }
        })
        .collect()
}

/// A rectangular region of one prepared pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Window {
    pair: usize,
    y0: usize,
    x0: usize,
    h: usize,
    w: usize,
}

impl Window {
    fn whole(pair: usize, p: &Prepared) -> Self {
        Self {
            pair,
            y0: 0,
            x0: 0,
            h: p.h,
            w: p.w,
        }
    }

    fn pixels(&self, p: &Prepared) -> impl Iterator<Item = usize> + '_ {
        let (y0, x0, h, w, pw) = (self.y0, self.x0, self.h, self.w, p.w);
        (y0..y0 + h).flat_map(move |y| (x0..x0 + w).map(move |x| y * pw + x))
    }
}

fn forward(p: &Prepared, win: &Window, values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(win.h * win.w * 3);
    for px in win.pixels(p) {
        let c = &p.corners[px];
        let mut rgb = [0.0f64; 3];
        for k in 0..16 {
            let base = 3 * c.points[k];
            let wk = c.weights[k];
            rgb[0] += wk * values[base];
            rgb[1] += wk * values[base + 1];
            rgb[2] += wk * values[base + 2];
        }
        out.extend_from_slice(&rgb);
    }
    out
}

fn backward(p: &Prepared, win: &Window, g_img: &[f64], scale: f64, grad: &mut [f64]) {
    for (i, px) in win.pixels(p).enumerate() {
        let c = &p.corners[px];
        let g = &g_img[3 * i..3 * i + 3];
        for k in 0..16 {
            let base = 3 * c.points[k];
            let wk = scale * c.weights[k];
            grad[base] += wk * g[0];
            grad[base + 1] += wk * g[1];
            grad[base + 2] += wk * g[2];
        }
    }
}

fn reference_window(p: &Prepared, win: &Window) -> Vec<f64> {
    let mut out = Vec::with_capacity(win.h * win.w * 3);
    for px in win.pixels(p) {
        out.extend_from_slice(&p.reference[3 * px..3 * px + 3]);
    }
    out
}

/// Image-space loss parts and gradient for one window's output.
fn image_terms(out: &[f64], reference: &[f64], win: &Window, obj: &Objective) -> Result<(f64, f64, Vec<f64>)> {
    let shape = (win.h, win.w, 3);
    let (content, mut grad) = if obj.ssim {
        content_gradient_values(out, reference, shape, &obj.weights.content())?
    } else {
        charbonnier_gradient_values(out, reference, obj.weights.epsilon)
    };
    let mut perceptual = 0.0;
    if obj.perceptual {
        let (v, g) = fourier_gradient_values(out, reference, shape, obj.varpi)?;
        perceptual = v;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok((content, perceptual, grad))
}

/// Something the optimiser can minimise.
trait Problem: Sync {
    fn len(&self) -> usize;
    /// Loss and gradient of `obj` over `windows`.
    fn evaluate(&self, params: &[f64], windows: &[Window], obj: &Objective) -> Result<(LossBundle, Vec<f64>)>;
    /// Maps parameters back into their feasible set after a step.
    fn project(&self, params: &mut [f64]);
    fn data(&self) -> &[Prepared];
}

struct LatticeProblem {
    n: usize,
    prepared: Vec<Prepared>,
    monotone: bool,
}

impl LatticeProblem {
    fn regularise(&self, params: &[f64], obj: &Objective, grad: &mut [f64]) -> (f64, f64) {
        if !obj.regularisers {
            return (0.0, 0.0);
        }
        let w = &obj.weights;
        smooth_term_gradient(params, self.n, w.beta_s, grad);
        monotone_term_gradient(params, self.n, w.beta_m, grad);
        (smooth_term(params, self.n), monotone_term(params, self.n))
    }
}

/// Sums per-window results in window order, scaling by `1 / windows`.
fn reduce_windows(per: Vec<(f64, f64, Vec<f64>)>, len: usize) -> (f64, f64, Vec<f64>) {
    let scale = 1.0 / per.len() as f64;
    let mut grad = vec![0.0; len];
    let (mut content, mut perceptual) = (0.0, 0.0);
    for (c, p, g) in per {
        content += c * scale;
        perceptual += p * scale;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b * scale;
        }
    }
    (content, perceptual, grad)
}

impl Problem for LatticeProblem {
    fn len(&self) -> usize {
        self.n.pow(4) * 3
    }

    fn evaluate(&self, params: &[f64], windows: &[Window], obj: &Objective) -> Result<(LossBundle, Vec<f64>)> {
        let per: Vec<(f64, f64, Vec<f64>)> = windows
            .par_iter()
            .map(|win| {
                let p = &self.prepared[win.pair];
                let out = forward(p, win, params);
                image_terms(&out, &reference_window(p, win), win, obj)
            })
            .collect::<Result<_>>()?;
        // Scattered in window order so the sum does not depend on scheduling.
        let scale = 1.0 / windows.len() as f64;
        let mut grad = vec![0.0; params.len()];
        let (mut content, mut perceptual) = (0.0, 0.0);
        for (win, (c, pe, g_img)) in windows.iter().zip(&per) {
            content += c * scale;
            perceptual += pe * scale;
            backward(&self.prepared[win.pair], win, g_img, scale, &mut grad);
        }
        let (smooth, monotone) = self.regularise(params, obj, &mut grad);
        let bundle = total_loss(
            LossParts {
                content,
                perceptual,
                smooth,
                monotone,
            },
            obj.varpi,
            &obj.weights,
        )?;
        Ok((bundle, grad))
    }

    fn project(&self, params: &mut [f64]) {
        params.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        if self.monotone {
            make_monotone(params, self.n);
        }
    }

    fn data(&self) -> &[Prepared] {
        &self.prepared
    }
}

/// Replaces lattice values by the mean of their running maximum and running
/// minimum taken along each of the four axes in turn. Both chains are
/// non-decreasing along every axis (a running maximum along one axis keeps
/// monotonicity along the others), so their mean is too. Monotone input is
/// left unchanged.
pub fn make_monotone(values: &mut [f64], n: usize) {
    let mut hi = values.to_vec();
    let mut lo = values.to_vec();
    for d in 0..4u32 {
        let inner = 3 * n.pow(d);
        for o in 0..n.pow(3 - d) {
            let block = o * n * inner;
            for a in 1..n {
                let start = block + a * inner;
                for i in start..start + inner {
                    hi[i] = hi[i].max(hi[i - inner]);
                }
            }
            for a in (0..n - 1).rev() {
                let start = block + a * inner;
                for i in start..start + inner {
                    lo[i] = lo[i].min(lo[i + inner]);
                }
            }
        }
    }
    for (v, (a, b)) in values.iter_mut().zip(hi.iter().zip(&lo)) {
        *v = 0.5 * (a + b);
    }
}

/// Loss bundle and gradient with respect to every stored lattice value.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeGradient {
    pub loss: LossBundle,
    /// Same layout as [`Lattice4D::values`].
    pub grad: Vec<f64>,
}

/// Gradient of `objective` over whole frames, evaluated at `lut`. Per-frame
/// terms are averaged over the pairs.
pub fn lattice_gradients(
    lut: &Lattice4D,
    pairs: &[TrainingPair],
    objective: &Objective,
) -> Result<LatticeGradient> {
    if pairs.is_empty() {
        return Err(Error::EmptySequence("no training pairs".into()));
    }
    let problem = LatticeProblem {
        n: lut.n(),
        prepared: prepare(lut, pairs),
        monotone: false,
    };
    let windows = whole_windows(problem.data());
    let params: Vec<f64> = lut.values().iter().map(|&v| v as f64).collect();
    let (loss, grad) = problem.evaluate(&params, &windows, objective)?;
    Ok(LatticeGradient { loss, grad })
}

fn whole_windows(data: &[Prepared]) -> Vec<Window> {
    data.iter().enumerate().map(|(i, p)| Window::whole(i, p)).collect()
}

/// One line of the loss history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryRow {
    pub step: usize,
    /// Total loss on the step's batch, before its update.
    pub batch_loss: f64,
    /// Total loss over all data, when evaluated at this step.
    pub eval_loss: Option<f64>,
    /// Lowest full-data loss seen so far.
    pub best_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LossHistory {
    pub rows: Vec<HistoryRow>,
}

impl LossHistory {
    /// CSV with columns `step, batch_loss, eval_loss, best_loss`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["step", "batch_loss", "eval_loss", "best_loss"]).map_err(to_err)?;
        for r in &self.rows {
            w.write_record([
                r.step.to_string(),
                r.batch_loss.to_string(),
                r.eval_loss.map(|v| v.to_string()).unwrap_or_default(),
                r.best_loss.to_string(),
            ])
            .map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }

    pub fn best_losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.best_loss)
    }
}

struct OptimState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptimState {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, cfg: &FitConfig, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        match cfg.optimizer {
            Optimizer::Adam => {
                let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
                let c1 = 1.0 - b1.powi(self.t);
                let c2 = 1.0 - b2.powi(self.t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
                    self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    params[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.adam_epsilon);
                }
            }
            Optimizer::Momentum => {
                for i in 0..params.len() {
                    self.m[i] = cfg.momentum * self.m[i] + grad[i];
                    params[i] -= cfg.learning_rate * self.m[i];
                }
            }
        }
    }
}

struct RunResult {
    best: Vec<f64>,
    best_loss: f64,
    initial_loss: f64,
    history: LossHistory,
}

fn pick_windows(data: &[Prepared], cfg: &FitConfig, rng: &mut ChaCha8Rng) -> Vec<Window> {
    let chosen: Vec<usize> = if cfg.batch_frames >= data.len() {
        (0..data.len()).collect()
    } else {
        let mut idx = sample(rng, data.len(), cfg.batch_frames).into_vec();
        idx.sort_unstable();
        idx
    };
    chosen
        .into_iter()
        .map(|i| {
            let p = &data[i];
            let (h, w) = (cfg.crop.min(p.h), cfg.crop.min(p.w));
            let y0 = if h < p.h { rng.random_range(0..=p.h - h) } else { 0 };
            let x0 = if w < p.w { rng.random_range(0..=p.w - w) } else { 0 };
            Window {
                pair: i,
                y0,
                x0,
                h,
                w,
            }
        })
        .collect()
}

fn run(
    problem: &dyn Problem,
    init: Vec<f64>,
    cfg: &FitConfig,
    obj: &Objective,
    to_lattice: &dyn Fn(&[f64]) -> Result<Lattice4D>,
) -> Result<RunResult> {
    cfg.validate()?;
    let data = problem.data();
    let full = whole_windows(data);
    let full_batch = cfg.batch_frames >= data.len()
        && data.iter().all(|p| cfg.crop >= p.h && cfg.crop >= p.w);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = OptimState::new(problem.len());
    let mut params = init;
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut initial_loss = f64::NAN;
    let mut last_finite = (params.clone(), f64::NAN);
    let mut history = LossHistory::default();
    let diverged = |step: usize, last: &(Vec<f64>, f64)| -> Result<RunResult> {
        Err(Error::Diverged {
            step,
            last_loss: last.1,
            last_state: Box::new(to_lattice(&last.0)?),
        })
    };

    for step in 0..=cfg.steps {
        let last = step == cfg.steps;
        let windows = if full_batch { full.clone() } else { pick_windows(data, cfg, &mut rng) };
        let (batch, grad) = match problem.evaluate(&params, &windows, obj) {
            Err(Error::Numeric(_)) => return diverged(step, &last_finite),
            other => other?,
        };
        if !batch.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return diverged(step, &last_finite);
        }
        let eval = if full_batch {
            Some(batch.total)
        } else if step % cfg.eval_every == 0 || last {
            match problem.evaluate(&params, &full, obj) {
                Err(Error::Numeric(_)) => return diverged(step, &last_finite),
                other => Some(other?.0.total),
            }
        } else {
            None
        };
        if let Some(e) = eval {
            if !e.is_finite() {
                return diverged(step, &last_finite);
            }
            if step == 0 {
                initial_loss = e;
            }
            if e < best_loss {
                best_loss = e;
                best.clone_from(&params);
            }
        }
        last_finite = (params.clone(), batch.total);
        history.rows.push(HistoryRow {
            step,
            batch_loss: batch.total,
            eval_loss: eval,
            best_loss,
        });
        if last {
            break;
        }
        state.step(cfg, &mut params, &grad);
        problem.project(&mut params);
    }
    Ok(RunResult {
        best,
        best_loss,
        initial_loss,
        history,
    })
}

/// Optional Charbonnier warm-up followed by the main run. The initial loss
/// is that of `init` under `obj`; the best parameters are those of the main
/// run unless `init` scores lower.
fn run_staged(
    problem: &dyn Problem,
    init: Vec<f64>,
    cfg: &FitConfig,
    obj: &Objective,
    to_lattice: &dyn Fn(&[f64]) -> Result<Lattice4D>,
) -> Result<(RunResult, LossHistory)> {
    cfg.validate()?;
    if cfg.warmup_steps == 0 {
        return Ok((run(problem, init, cfg, obj, to_lattice)?, LossHistory::default()));
    }
    let initial_loss = match problem.evaluate(&init, &whole_windows(problem.data()), obj) {
        Ok((b, _)) if b.total.is_finite() => b.total,
        Ok(_) | Err(Error::Numeric(_)) => {
            return Err(Error::Diverged {
                step: 0,
                last_loss: f64::NAN,
                last_state: Box::new(to_lattice(&init)?),
            })
        }
        Err(e) => return Err(e),
    };
    let warm_cfg = FitConfig {
        steps: cfg.warmup_steps,
        learning_rate: cfg.warmup_learning_rate,
        crop: cfg.warmup_crop,
        ..cfg.clone()
    };
    let warm = run(problem, init.clone(), &warm_cfg, &Objective::charbonnier(cfg.epsilon), to_lattice)?;
    let mut main = run(problem, warm.best, cfg, obj, to_lattice)?;
    main.initial_loss = initial_loss;
    // The warm-up optimises a different loss, so the start can still be best.
    if initial_loss < main.best_loss {
        main.best = init;
        main.best_loss = initial_loss;
    }
    Ok((main, warm.history))
}

/// Result of [`fit_lattice`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    /// The best-so-far lattice on the full training data.
    pub lattice: Lattice4D,
    pub initial_loss: f64,
    pub best_loss: f64,
    pub history: LossHistory,
    /// Charbonnier losses of the warm-up stage; empty without one.
    pub warmup_history: LossHistory,
}

/// Fits lattice values to `data` by minimising the total loss. Values are
/// kept in `[0, 1]` and the lattice with the lowest full-data loss is
/// returned.
pub fn fit_lattice(init: &Lattice4D, data: &[TrainingPair], cfg: &FitConfig) -> Result<FitOutcome> {
    fit_lattice_with(init, data, cfg, &cfg.objective())
}

/// [`fit_lattice`] with an explicit choice of loss terms.
pub fn fit_lattice_with(
    init: &Lattice4D,
    data: &[TrainingPair],
    cfg: &FitConfig,
    objective: &Objective,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptySequence("no training pairs".into()));
    }
    let problem = LatticeProblem {
        n: init.n(),
        prepared: prepare(init, data),
        monotone: cfg.enforce_monotone,
    };
    let to_lattice = |v: &[f64]| init.with_values(v.iter().map(|&x| x as f32).collect());
    let params: Vec<f64> = init.values().iter().map(|&v| v as f64).collect();
    let (r, warmup_history) = run_staged(&problem, params, cfg, objective, &to_lattice)?;
    let lattice = if r.best_loss < r.initial_loss {
        to_lattice(&r.best)?
    } else {
        init.clone()
    };
    Ok(FitOutcome {
        lattice,
        initial_loss: r.initial_loss,
        best_loss: r.best_loss,
        history: r.history,
        warmup_history,
    })
}

/// A training pair with the pooled features the predictor consumes.
struct BasisSample {
    video: Vec<f64>,
    wavelet: Vec<f64>,
}

struct BasisProblem {
    n: usize,
    k: usize,
    mode: MergeMode,
    prepared: Vec<Prepared>,
    samples: Vec<BasisSample>,
    monotone: bool,
}

/// Parameter layout: `k` lattices, then video weight (`k×F`), video bias,
/// wavelet weight, wavelet bias.
impl BasisProblem {
    fn lattice_len(&self) -> usize {
        self.n.pow(4) * 3
    }

    fn offsets(&self) -> [usize; 4] {
        let l = self.k * self.lattice_len();
        let wv = l;
        let bv = wv + self.k * FEATURE_LEN;
        let ww = bv + self.k;
        let bw = ww + self.k * FEATURE_LEN;
        [wv, bv, ww, bw]
    }

    fn merged(&self, params: &[f64], s: &BasisSample) -> Vec<f64> {
        let [wv, bv, ww, bw] = self.offsets();
        (0..self.k)
            .map(|j| {
                let lin = |w0: usize, b0: usize, f: &[f64]| {
                    params[b0 + j]
                        + params[w0 + j * FEATURE_LEN..w0 + (j + 1) * FEATURE_LEN]
                            .iter()
                            .zip(f)
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                };
                let a = lin(wv, bv, &s.video);
                let b = lin(ww, bw, &s.wavelet);
                self.mode.slope() * (a + b)
            })
            .collect()
    }
}

impl Problem for BasisProblem {
    fn len(&self) -> usize {
        self.offsets()[3] + self.k
    }

    fn evaluate(&self, params: &[f64], windows: &[Window], obj: &Objective) -> Result<(LossBundle, Vec<f64>)> {
        let ll = self.lattice_len();
        let per: Vec<(f64, f64, Vec<f64>)> = windows
            .par_iter()
            .map(|win| {
                let p = &self.prepared[win.pair];
                let s = &self.samples[win.pair];
                let m = self.merged(params, s);
                let mut fused = vec![0.0; ll];
                for (j, &mj) in m.iter().enumerate() {
                    for (f, b) in fused.iter_mut().zip(&params[j * ll..(j + 1) * ll]) {
                        *f += mj * b;
                    }
                }
                let out = forward(p, win, &fused);
                let (c, pe, g_img) = image_terms(&out, &reference_window(p, win), win, obj)?;
                let mut g_fused = vec![0.0; ll];
                backward(p, win, &g_img, 1.0, &mut g_fused);

                let mut grad = vec![0.0; params.len()];
                let [wv, bv, ww, bw] = self.offsets();
                let beta_s = if obj.regularisers { obj.weights.beta_s } else { 0.0 };
                for j in 0..self.k {
                    let basis = &params[j * ll..(j + 1) * ll];
                    let mut dm: f64 = g_fused.iter().zip(basis).map(|(g, b)| g * b).sum();
                    dm += beta_s * 2.0 * m[j];
                    for (g, gf) in grad[j * ll..(j + 1) * ll].iter_mut().zip(&g_fused) {
                        *g = m[j] * gf;
                    }
                    let da = self.mode.slope() * dm;
                    for (f, (gv, gw)) in s.video.iter().zip(s.wavelet.iter()).zip(
                        (wv + j * FEATURE_LEN..wv + (j + 1) * FEATURE_LEN)
                            .zip(ww + j * FEATURE_LEN..ww + (j + 1) * FEATURE_LEN),
                    ) {
                        grad[gv] = da * f.0;
                        grad[gw] = da * f.1;
                    }
                    grad[bv + j] = da;
                    grad[bw + j] = da;
                }
                Ok((c, pe, grad))
            })
            .collect::<Result<_>>()?;
        let weight_norm: f64 = windows
            .iter()
            .map(|win| self.merged(params, &self.samples[win.pair]).iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / windows.len() as f64;
        let (content, perceptual, mut grad) = reduce_windows(per, params.len());
        let (mut smooth, mut monotone) = (0.0, 0.0);
        if obj.regularisers {
            let w = &obj.weights;
            for j in 0..self.k {
                let range = j * ll..(j + 1) * ll;
                smooth_term_gradient(&params[range.clone()], self.n, w.beta_s, &mut grad[range.clone()]);
                monotone_term_gradient(&params[range.clone()], self.n, w.beta_m, &mut grad[range.clone()]);
                smooth += smooth_term(&params[range.clone()], self.n);
                monotone += monotone_term(&params[range], self.n);
            }
            smooth += weight_norm;
        }
        let bundle = total_loss(
            LossParts {
                content,
                perceptual,
                smooth,
                monotone,
            },
            obj.varpi,
            &obj.weights,
        )?;
        Ok((bundle, grad))
    }

    fn project(&self, params: &mut [f64]) {
        let ll = self.lattice_len();
        for basis in params[..self.k * ll].chunks_exact_mut(ll) {
            basis.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            if self.monotone {
                make_monotone(basis, self.n);
            }
        }
    }

    fn data(&self) -> &[Prepared] {
        &self.prepared
    }
}

/// Result of [`fit_basis_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct BasisFitOutcome {
    pub bases: Vec<Lattice4D>,
    pub predictor: PredictorParams,
    pub initial_loss: f64,
    pub best_loss: f64,
    pub history: LossHistory,
    pub warmup_history: LossHistory,
}

/// Jointly fits basis lattices and the weight predictor. All bases must share
/// axes; the predictor must produce one weight per basis.
pub fn fit_basis_model(
    bases: &[Lattice4D],
    predictor: &PredictorParams,
    mode: MergeMode,
    data: &[TrainingPair],
    cfg: &FitConfig,
) -> Result<BasisFitOutcome> {
    cfg.validate()?;
    let first = bases
        .first()
        .ok_or_else(|| Error::InvalidArgument("no basis lattices given".into()))?;
    if bases.iter().any(|b| b.n() != first.n() || b.axes() != first.axes()) {
        return Err(Error::Shape("basis lattices must share size and axes".into()));
    }
    if predictor.bases() != bases.len() {
        return Err(Error::Shape(format!(
            "predictor produces {} weights for {} bases",
            predictor.bases(),
            bases.len()
        )));
    }
    if data.is_empty() {
        return Err(Error::EmptySequence("no training pairs".into()));
    }
    let samples = data
        .par_iter()
        .map(|p| {
            let ll = dwt2(&p.input)?.ll;
            Ok(BasisSample {
                video: pooled_features(&p.input)?,
                wavelet: pooled_features(&ll)?,
            })
        })
        .collect::<Result<_>>()?;
    let objective = cfg.objective();
    let k = bases.len();
    let problem = BasisProblem {
        n: first.n(),
        k,
        mode,
        prepared: prepare(first, data),
        samples,
        monotone: cfg.enforce_monotone,
    };
    let mut params: Vec<f64> = Vec::with_capacity(problem.len());
    for b in bases {
        params.extend(b.values().iter().map(|&v| v as f64));
    }
    for map in [&predictor.video, &predictor.wavelet] {
        params.extend(map.weight().iter().map(|&v| v as f64));
        params.extend(map.bias().iter().map(|&v| v as f64));
    }
    let ll = problem.lattice_len();
    let to_lattice = |v: &[f64]| first.with_values(v[..ll].iter().map(|&x| x as f32).collect());
    let (r, warmup_history) = run_staged(&problem, params, cfg, &objective, &to_lattice)?;
    let chosen = &r.best;
    let bases_out = (0..k)
        .map(|j| first.with_values(chosen[j * ll..(j + 1) * ll].iter().map(|&x| x as f32).collect()))
        .collect::<Result<Vec<_>>>()?;
    let [wv, bv, ww, bw] = problem.offsets();
    let f32s = |r: std::ops::Range<usize>| chosen[r].iter().map(|&x| x as f32).collect::<Vec<_>>();
    let predictor_out = PredictorParams::new(
        LinearMap::new(f32s(wv..bv), f32s(bv..bv + k))?,
        LinearMap::new(f32s(ww..bw), f32s(bw..bw + k))?,
    )?;
    Ok(BasisFitOutcome {
        bases: bases_out,
        predictor: predictor_out,
        initial_loss: r.initial_loss,
        best_loss: r.best_loss,
        history: r.history,
        warmup_history,
    })
}

/// Darkening used by the synthetic recovery task: `gain · x^gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub gamma: f32,
    pub gain: f32,
}

impl Default for Degradation {
    fn default() -> Self {
        Self {
            gamma: 2.2,
            gain: 0.5,
        }
    }
}

impl Degradation {
    pub fn apply(&self, frame: &Frame) -> Frame {
        let data = frame
            .data()
            .iter()
            .map(|&v| self.gain * v.clamp(0.0, 1.0).powf(self.gamma))
            .collect();
        Frame::new(frame.height(), frame.width(), frame.channels(), data)
            .expect("same shape as the input")
    }

    /// The exact pointwise inverse, clamped to `[0, 1]`.
    pub fn invert(&self, v: f32) -> f32 {
        (v.max(0.0) / self.gain).powf(1.0 / self.gamma).min(1.0)
    }
}

/// A synthetic RGB scene: per-channel smooth random fields plus noise, so
/// pixel colours cover most of the unit cube.
pub fn synthetic_scene(height: usize, width: usize, rng: &mut impl Rng) -> Result<Frame> {
    let waves: Vec<[f32; 4]> = (0..9)
        .map(|_| {
            [
                rng.random_range(0.5..4.0) * std::f32::consts::TAU / width as f32,
                rng.random_range(0.5..4.0) * std::f32::consts::TAU / height as f32,
                rng.random_range(0.0..std::f32::consts::TAU),
                rng.random_range(-1.0f32..1.0),
            ]
        })
        .collect();
    let offsets: [f32; 3] = [rng.random_range(0.3..0.7), rng.random_range(0.3..0.7), rng.random_range(0.3..0.7)];
    let noise: Vec<f32> = (0..height * width * 3).map(|_| rng.random_range(-0.2f32..0.2)).collect();
    Frame::from_fn(height, width, 3, |y, x, c| {
        let mut v = offsets[c];
        for [fx, fy, ph, amp] in &waves[3 * c..3 * c + 3] {
            v += 0.3 * amp * (fx * x as f32 + fy * y as f32 + ph).sin();
        }
        (v + noise[(y * width + x) * 3 + c]).clamp(0.0, 1.0)
    })
}

/// `(reference, degraded)` pairs of seeded synthetic scenes.
pub fn synthetic_pairs(
    count: usize,
    height: usize,
    width: usize,
    degradation: Degradation,
    seed: u64,
) -> Result<Vec<(Frame, Frame)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let clean = synthetic_scene(height, width, &mut rng)?;
            let dark = degradation.apply(&clean);
            Ok((clean, dark))
        })
        .collect()
}

/// Training pairs for the synthetic task, with priors from the pipeline.
pub fn synthetic_training_set(
    count: usize,
    height: usize,
    width: usize,
    degradation: Degradation,
    seed: u64,
) -> Result<Vec<TrainingPair>> {
    synthetic_pairs(count, height, width, degradation, seed)?
        .into_iter()
        .map(|(clean, dark)| TrainingPair::with_computed_prior(dark, clean, &FusionOptions::default()))
        .collect()
}
