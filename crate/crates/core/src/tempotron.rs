//! Tempotron baseline: a point neuron with real-valued synaptic weights and
//! peak-voltage classification, trained by cyclic single-pattern updates.
//! Weights can be quantized to a signed uniform grid either once after
//! training or after every update (through a clipped full-precision
//! accumulator), the hardware-oriented regimes the rewiring learner is
//! compared against.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label, SpikePattern};
use crate::error::{Error, Result};
use crate::kernel::{KernelParams, KernelTable};
use crate::learning::IterationTrace;
use crate::neuron::{scan_peak, EvalResult, SimGrid, DEFAULT_DT_MS};

/// Default learning rate for full-precision training.
pub const DEFAULT_LAMBDA: f64 = 0.01;

/// Default weight step for quantize-during-training runs. The clip range
/// follows the register width: `range = step * (2^bits - 1) / 2`, so adding
/// bits extends the representable range at a fixed least-significant step
/// instead of subdividing a fixed range.
pub const DEFAULT_DT_STEP: f64 = 0.03;

/// Default during-training clip bound for the given register width.
pub fn default_dt_range(bits: u32) -> f64 {
    DEFAULT_DT_STEP * ((1u64 << bits) - 1) as f64 / 2.0
}

/// Point neuron with one real weight per afferent line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TempotronModel {
    pub weights: Vec<f64>,
    pub v_thr: f64,
    pub kernel: KernelParams,
}

impl TempotronModel {
    pub fn d(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::invalid_param("tempotron needs at least one afferent"));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid_param("tempotron weights must be finite"));
        }
        if !self.v_thr.is_finite() || self.v_thr <= 0.0 {
            return Err(Error::invalid_param(format!(
                "firing threshold must be positive and finite, got {}",
                self.v_thr
            )));
        }
        self.kernel.validate()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let model: TempotronModel = serde_json::from_reader(r)?;
        model.validate()?;
        Ok(model)
    }
}

/// When weights are snapped to the quantizer grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantMode {
    None,
    /// Train at full precision, quantize the best snapshot once.
    AfterTraining,
    /// Quantize after every weight update.
    DuringTraining,
}

/// Signed uniform quantizer: `2^bits` levels clipped to `[-range, range]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub mode: QuantMode,
    pub bits: u32,
    /// Clip bound. After-training runs default to the largest trained
    /// weight magnitude; during-training runs default to
    /// [`default_dt_range`] for the configured width.
    pub range: Option<f64>,
}

impl QuantSpec {
    pub fn none() -> Self {
        QuantSpec { mode: QuantMode::None, bits: 0, range: None }
    }

    pub fn after_training(bits: u32) -> Self {
        QuantSpec { mode: QuantMode::AfterTraining, bits, range: None }
    }

    pub fn during_training(bits: u32) -> Self {
        QuantSpec { mode: QuantMode::DuringTraining, bits, range: Some(default_dt_range(bits)) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == QuantMode::None {
            return Ok(());
        }
        if !(1..=16).contains(&self.bits) {
            return Err(Error::invalid_param(format!(
                "weight resolution must be 1..=16 bits, got {}",
                self.bits
            )));
        }
        if let Some(r) = self.range {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::invalid_param(format!("clip range must be > 0, got {r}")));
            }
        }
        Ok(())
    }
}

/// Smallest level spacing of the quantizer grid.
pub fn quant_step(bits: u32, range: f64) -> f64 {
    2.0 * range / ((1u64 << bits) - 1) as f64
}

/// Snap one weight to the nearest level of the signed uniform grid
/// `{-range + q * step}`. Exact ties round away from zero.
pub fn quantize(w: f64, bits: u32, range: f64) -> f64 {
    let step = quant_step(bits, range);
    let q = ((w.clamp(-range, range) + range) / step).round();
    -range + q * step
}

pub fn quantize_weights(weights: &mut [f64], bits: u32, range: f64) {
    for w in weights.iter_mut() {
        *w = quantize(*w, bits, range);
    }
}

/// Weighted PSP sum of one pattern on the grid.
fn weighted_series(
    pattern: &SpikePattern,
    model: &TempotronModel,
    table: &KernelTable,
    grid: &SimGrid,
) -> Result<Vec<f64>> {
    if pattern.afferent_count() != model.d() {
        return Err(Error::invalid_param(format!(
            "pattern has {} afferents, model expects d={}",
            pattern.afferent_count(),
            model.d()
        )));
    }
    if grid.is_empty() {
        return Err(Error::invalid_param("evaluation grid is empty"));
    }
    if (table.dt - grid.dt).abs() > 1e-12 {
        return Err(Error::invalid_param(format!(
            "kernel table dt {} does not match grid dt {}",
            table.dt, grid.dt
        )));
    }
    let n = grid.len() as isize;
    let mut v = vec![0.0; grid.len()];
    for (spikes, &w) in pattern.spikes.iter().zip(&model.weights) {
        if w == 0.0 {
            continue;
        }
        for &tf in spikes {
            let f = table.snap(tf);
            if f >= n {
                continue;
            }
            let last = (table.values.len() as isize - 1).min(n - 1 - f);
            for l in 1..=last {
                v[(f + l) as usize] += w * table.values[l as usize];
            }
        }
    }
    Ok(v)
}

/// Peak-voltage classification of one pattern.
pub fn tempotron_eval(
    pattern: &SpikePattern,
    model: &TempotronModel,
    table: &KernelTable,
    grid: &SimGrid,
) -> Result<EvalResult> {
    let series = weighted_series(pattern, model, table, grid)?;
    let (v_max, t_max_idx) = scan_peak(&series);
    Ok(EvalResult {
        v_max,
        t_max: grid.time(t_max_idx),
        t_max_idx,
        branch_drives_at_tmax: Vec::new(),
        predicted: EvalResult::classify(v_max, model.v_thr),
    })
}

/// One cyclic-rule step: evaluate the pattern and, if misclassified, move
/// every weight along its PSP at the peak time. Returns whether an update
/// was applied.
pub fn tempotron_update(
    pattern: &SpikePattern,
    model: &mut TempotronModel,
    table: &KernelTable,
    grid: &SimGrid,
    lambda: f64,
) -> Result<bool> {
    let eval = tempotron_eval(pattern, model, table, grid)?;
    let sign = match (pattern.label, eval.predicted == Label::Plus) {
        (Label::Plus, false) => 1.0,
        (Label::Minus, true) => -1.0,
        _ => return Ok(false),
    };
    for (w, spikes) in model.weights.iter_mut().zip(&pattern.spikes) {
        let mut psp = 0.0;
        for &tf in spikes {
            psp += table.value_at_index(eval.t_max_idx as isize - table.snap(tf));
        }
        *w += sign * lambda * psp;
    }
    Ok(true)
}

/// Tempotron training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TempotronConfig {
    /// Learning rate. `None` picks [`DEFAULT_LAMBDA`].
    pub lambda: Option<f64>,
    pub max_epochs: usize,
    pub v_thr: f64,
    /// Initial weights are uniform on `[-init_scale, init_scale]`: zero-mean,
    /// spread so the initial peak voltage sits near threshold.
    pub init_scale: f64,
    /// Evaluation grid step (ms).
    pub dt: f64,
    pub quant: QuantSpec,
}

impl Default for TempotronConfig {
    fn default() -> Self {
        TempotronConfig {
            lambda: None,
            max_epochs: 200,
            v_thr: 1.0,
            init_scale: 0.1,
            dt: DEFAULT_DT_MS,
            quant: QuantSpec::none(),
        }
    }
}

impl TempotronConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::invalid_param(format!("lambda must be > 0, got {l}")));
            }
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid_param("max_epochs must be >= 1"));
        }
        if !self.v_thr.is_finite() || self.v_thr <= 0.0 {
            return Err(Error::invalid_param(format!(
                "firing threshold must be positive and finite, got {}",
                self.v_thr
            )));
        }
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return Err(Error::invalid_param(format!(
                "init_scale must be >= 0, got {}",
                self.init_scale
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid_param(format!("dt must be > 0, got {}", self.dt)));
        }
        self.quant.validate()
    }

    fn dt_range(&self) -> f64 {
        self.quant.range.unwrap_or_else(|| default_dt_range(self.quant.bits))
    }

    pub fn resolve_lambda(&self) -> f64 {
        self.lambda.unwrap_or(DEFAULT_LAMBDA)
    }
}

/// Training result: best snapshot by training accuracy (quantized for the
/// after-training mode, with `best_accuracy` re-measured on that model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TempotronOutcome {
    pub model: TempotronModel,
    pub best_accuracy: f64,
    pub epochs: usize,
    pub converged: bool,
    /// Clip range actually used when the returned weights are quantized.
    pub quant_range: Option<f64>,
    pub traces: Vec<IterationTrace>,
}

fn full_counts(
    data: &Dataset,
    model: &TempotronModel,
    table: &KernelTable,
    grid: &SimGrid,
) -> Result<(usize, usize)> {
    let (mut fp, mut fn_) = (0, 0);
    for pat in &data.patterns {
        let eval = tempotron_eval(pat, model, table, grid)?;
        match (pat.label, eval.predicted == Label::Plus) {
            (Label::Plus, false) => fn_ += 1,
            (Label::Minus, true) => fp += 1,
            _ => {}
        }
    }
    Ok((fp, fn_))
}

/// Cyclic tempotron training over the dataset, in pattern order, with the
/// configured quantization regime.
pub fn train_tempotron(
    cfg: &TempotronConfig,
    kernel: &KernelParams,
    data: &Dataset,
    seed: u64,
) -> Result<TempotronOutcome> {
    cfg.validate()?;
    kernel.validate()?;
    data.validate()?;
    let lambda = cfg.resolve_lambda();
    let grid = SimGrid::for_pattern(data.duration, kernel, cfg.dt)?;
    let table = KernelTable::with_default_horizon(kernel, cfg.dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = TempotronModel {
        weights: (0..data.d)
            .map(|_| rng.gen_range(-cfg.init_scale..=cfg.init_scale))
            .collect(),
        v_thr: cfg.v_thr,
        kernel: *kernel,
    };
    // During-training mode keeps a clipped full-precision accumulator and
    // re-quantizes the model's weight vector from it after every update, so
    // sub-level updates still pile up and flip levels later. The exposed
    // weights never leave the grid.
    let during = cfg.quant.mode == QuantMode::DuringTraining;
    let range = cfg.dt_range();
    let mut latent = model.weights.clone();
    if during {
        for l in &mut latent {
            *l = l.clamp(-range, range);
        }
        quantize_weights(&mut model.weights, cfg.quant.bits, range);
    }

    let p = data.patterns.len() as f64;
    let mut traces = Vec::new();
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut best_weights = model.weights.clone();
    let mut before = vec![0.0; model.weights.len()];
    let mut converged = false;
    let mut epochs = 0;

    for epoch in 0..=cfg.max_epochs {
        let (fp, fn_) = full_counts(data, &model, &table, &grid)?;
        let accuracy = (p - (fp + fn_) as f64) / p;
        traces.push(IterationTrace {
            iter: epoch,
            accuracy,
            false_positives: fp,
            false_negatives: fn_,
            v_thr: cfg.v_thr,
            swap: None,
        });
        if accuracy > best_accuracy {
            best_accuracy = accuracy;
            best_weights.copy_from_slice(&model.weights);
        }
        if fp + fn_ == 0 {
            converged = true;
            break;
        }
        if epoch == cfg.max_epochs {
            break;
        }
        for pat in &data.patterns {
            if during {
                before.copy_from_slice(&model.weights);
                if tempotron_update(pat, &mut model, &table, &grid, lambda)? {
                    for i in 0..latent.len() {
                        latent[i] =
                            (latent[i] + model.weights[i] - before[i]).clamp(-range, range);
                        model.weights[i] = quantize(latent[i], cfg.quant.bits, range);
                    }
                }
            } else {
                tempotron_update(pat, &mut model, &table, &grid, lambda)?;
            }
        }
        epochs = epoch + 1;
    }

    model.weights = best_weights;
    let quant_range = match cfg.quant.mode {
        QuantMode::None => None,
        QuantMode::DuringTraining => Some(cfg.dt_range()),
        QuantMode::AfterTraining => {
            let auto = model.weights.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
            let range = cfg.quant.range.unwrap_or(auto);
            if range > 0.0 {
                quantize_weights(&mut model.weights, cfg.quant.bits, range);
                let (fp, fn_) = full_counts(data, &model, &table, &grid)?;
                best_accuracy = (p - (fp + fn_) as f64) / p;
                Some(range)
            } else {
                None
            }
        }
    };

    Ok(TempotronOutcome {
        model,
        best_accuracy,
        epochs,
        converged,
        quant_range,
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_latency, TaskKind};
    use crate::neuron::DECAY_MARGIN_TAUS;

    fn kernel() -> KernelParams {
        KernelParams::with_tau(15.0).unwrap()
    }

    fn setup(duration: f64) -> (KernelTable, SimGrid) {
        let k = kernel();
        let grid = SimGrid::for_pattern(duration, &k, 1.0).unwrap();
        let table = KernelTable::with_default_horizon(&k, 1.0).unwrap();
        (table, grid)
    }

    fn pattern(label: Label, spikes: Vec<Vec<f64>>) -> SpikePattern {
        SpikePattern { id: 0, label, spikes }
    }

    #[test]
    fn quantizer_hits_known_levels() {
        // 2 bits, range 1: levels -1, -1/3, 1/3, 1.
        assert!((quantize(0.4, 2, 1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(quantize(0.9, 2, 1.0), 1.0);
        assert_eq!(quantize(-2.5, 2, 1.0), -1.0);
        // 1 bit has only the two extremes; a zero weight rounds up.
        assert_eq!(quantize(0.0, 1, 1.0), 1.0);
        assert_eq!(quantize(-1e-9, 1, 0.5), -0.5);
    }

    #[test]
    fn quantizer_is_idempotent_with_bounded_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let bits = rng.gen_range(1..=8u32);
            let range = rng.gen_range(0.01..=10.0f64);
            let w = rng.gen_range(-1.5 * range..=1.5 * range);
            let q = quantize(w, bits, range);
            assert_eq!(quantize(q, bits, range), q, "bits={bits} range={range} w={w}");
            assert!(q.abs() <= range + 1e-12);
            if w.abs() <= range {
                let bound = range / ((1u64 << bits) - 1) as f64;
                assert!((q - w).abs() <= bound + 1e-12, "bits={bits} range={range} w={w} q={q}");
            }
        }
    }

    #[test]
    fn voltage_is_linear_in_the_weights() {
        let (table, grid) = setup(40.0);
        let pat = pattern(Label::Plus, vec![vec![5.0], vec![9.0, 20.0], vec![13.0]]);
        let base = TempotronModel { weights: vec![0.3, -0.2, 0.5], v_thr: 1.0, kernel: kernel() };
        let doubled = TempotronModel {
            weights: base.weights.iter().map(|w| 2.0 * w).collect(),
            ..base.clone()
        };
        let negated = TempotronModel {
            weights: base.weights.iter().map(|w| -w).collect(),
            ..base.clone()
        };
        let vb = weighted_series(&pat, &base, &table, &grid).unwrap();
        let vd = weighted_series(&pat, &doubled, &table, &grid).unwrap();
        let vn = weighted_series(&pat, &negated, &table, &grid).unwrap();
        for ((b, d), n) in vb.iter().zip(&vd).zip(&vn) {
            assert!((2.0 * b - d).abs() < 1e-12);
            assert!((b + n).abs() < 1e-12);
        }
    }

    #[test]
    fn update_direction_matches_finite_difference_of_peak() {
        let (table, grid) = setup(60.0);
        let pat = pattern(
            Label::Plus,
            vec![vec![5.0], vec![9.0], vec![13.0, 30.0], vec![22.0]],
        );
        let model = TempotronModel {
            weights: vec![0.4, 0.3, 0.2, 0.35],
            v_thr: 1e3, // force a miss so the update fires
            kernel: kernel(),
        };
        let lambda = 1e-3;
        let mut updated = model.clone();
        assert!(tempotron_update(&pat, &mut updated, &table, &grid, lambda).unwrap());

        let eps = 1e-5;
        for i in 0..4 {
            let delta = (updated.weights[i] - model.weights[i]) / lambda;
            let mut hi = model.clone();
            hi.weights[i] += eps;
            let mut lo = model.clone();
            lo.weights[i] -= eps;
            let vh = tempotron_eval(&pat, &hi, &table, &grid).unwrap().v_max;
            let vl = tempotron_eval(&pat, &lo, &table, &grid).unwrap().v_max;
            let fd = (vh - vl) / (2.0 * eps);
            if fd.abs() > 1e-9 {
                assert!(
                    (delta - fd).abs() <= 0.01 * fd.abs(),
                    "afferent {i}: update {delta} vs fd {fd}"
                );
            } else {
                assert!(delta.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn miss_update_raises_the_peak_and_false_alarm_lowers_it() {
        let (table, grid) = setup(50.0);
        let spikes = vec![vec![8.0], vec![12.0], vec![15.0]];
        let miss = pattern(Label::Plus, spikes.clone());
        let mut model = TempotronModel { weights: vec![0.1; 3], v_thr: 5.0, kernel: kernel() };
        let before = tempotron_eval(&miss, &model, &table, &grid).unwrap().v_max;
        assert!(tempotron_update(&miss, &mut model, &table, &grid, 0.05).unwrap());
        let after = tempotron_eval(&miss, &model, &table, &grid).unwrap().v_max;
        assert!(after > before);

        let alarm = pattern(Label::Minus, spikes);
        let mut model = TempotronModel { weights: vec![1.0; 3], v_thr: 0.5, kernel: kernel() };
        let before = tempotron_eval(&alarm, &model, &table, &grid).unwrap().v_max;
        assert!(tempotron_update(&alarm, &mut model, &table, &grid, 0.05).unwrap());
        let after = tempotron_eval(&alarm, &model, &table, &grid).unwrap().v_max;
        assert!(after < before);
    }

    #[test]
    fn correct_patterns_leave_weights_untouched() {
        let (table, grid) = setup(40.0);
        let pat = pattern(Label::Minus, vec![vec![10.0], vec![14.0]]);
        let mut model = TempotronModel { weights: vec![0.05, 0.05], v_thr: 1.0, kernel: kernel() };
        let before = model.weights.clone();
        assert!(!tempotron_update(&pat, &mut model, &table, &grid, 0.1).unwrap());
        assert_eq!(model.weights, before);
    }

    #[test]
    fn mismatched_afferent_count_is_rejected() {
        let (table, grid) = setup(40.0);
        let pat = pattern(Label::Plus, vec![vec![10.0]]);
        let model = TempotronModel { weights: vec![0.1, 0.2], v_thr: 1.0, kernel: kernel() };
        assert!(tempotron_eval(&pat, &model, &table, &grid).is_err());
    }

    #[test]
    fn full_precision_training_converges_on_a_small_task() {
        let data = gen_latency(12, 40, 150.0, 6).unwrap();
        let cfg = TempotronConfig { max_epochs: 400, ..TempotronConfig::default() };
        let out = train_tempotron(&cfg, &kernel(), &data, 1).unwrap();
        assert!(out.converged, "best accuracy {}", out.best_accuracy);
        assert_eq!(out.best_accuracy, 1.0);
        assert!(out.traces.len() <= 402);
        assert!(out.quant_range.is_none());
    }

    #[test]
    fn during_training_weights_stay_on_the_grid() {
        let data = gen_latency(10, 30, 120.0, 2).unwrap();
        let cfg = TempotronConfig {
            max_epochs: 30,
            quant: QuantSpec::during_training(2),
            ..TempotronConfig::default()
        };
        let out = train_tempotron(&cfg, &kernel(), &data, 9).unwrap();
        let range = out.quant_range.unwrap();
        let step = quant_step(2, range);
        for &w in &out.model.weights {
            let q = (w + range) / step;
            assert!((q - q.round()).abs() < 1e-9, "off-grid weight {w}");
            assert!(w.abs() <= range + 1e-12);
        }
    }

    #[test]
    fn during_training_accumulates_sub_level_updates() {
        // One always-missed pattern; every update is far below half a level,
        // yet the accumulator must walk both weights up to the top level.
        let pat = SpikePattern {
            id: 0,
            label: Label::Plus,
            spikes: vec![vec![20.0], vec![20.0]],
        };
        let data = Dataset {
            d: 2,
            duration: 60.0,
            task: TaskKind::Latency,
            pairings: None,
            patterns: vec![pat],
        };
        // The threshold is reachable only with both weights at the top level,
        // two flips away from the inner levels the init quantizes to.
        let range = 0.25;
        let cfg = TempotronConfig {
            lambda: Some(0.01),
            max_epochs: 60,
            v_thr: 0.4,
            init_scale: 0.05,
            quant: QuantSpec { range: Some(range), ..QuantSpec::during_training(2) },
            ..TempotronConfig::default()
        };
        let step = quant_step(2, range);
        assert!(cfg.resolve_lambda() < step / 2.0);
        // A seed whose two init draws are both positive, so the voltage peak
        // sits after the spike and every miss nudges both weights upward.
        let seed = (0..)
            .find(|&s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                (0..2).all(|_| rng.gen_range(-cfg.init_scale..=cfg.init_scale) > 0.0)
            })
            .unwrap();
        let out = train_tempotron(&cfg, &kernel(), &data, seed).unwrap();
        assert!(out.converged);
        assert_eq!(out.model.weights, vec![range; 2]);
    }

    #[test]
    fn after_training_quantization_snaps_the_best_snapshot() {
        let data = gen_latency(10, 30, 120.0, 3).unwrap();
        let cfg = TempotronConfig {
            max_epochs: 60,
            quant: QuantSpec::after_training(4),
            ..TempotronConfig::default()
        };
        let out = train_tempotron(&cfg, &kernel(), &data, 5).unwrap();
        let range = out.quant_range.unwrap();
        assert!(range > 0.0);
        let step = quant_step(4, range);
        for &w in &out.model.weights {
            let q = (w + range) / step;
            assert!((q - q.round()).abs() < 1e-9, "off-grid weight {w}");
        }
        // The clip bound covers the snapshot, so at least one weight sits at
        // an extreme level.
        assert!(out.model.weights.iter().any(|w| (w.abs() - range).abs() < 1e-12));
    }

    #[test]
    fn training_is_deterministic_for_a_seed() {
        let data = gen_latency(8, 20, 100.0, 4).unwrap();
        let cfg = TempotronConfig { max_epochs: 25, ..TempotronConfig::default() };
        let a = train_tempotron(&cfg, &kernel(), &data, 7).unwrap();
        let b = train_tempotron(&cfg, &kernel(), &data, 7).unwrap();
        assert_eq!(a, b);
        let c = train_tempotron(&cfg, &kernel(), &data, 8).unwrap();
        assert_ne!(a.model.weights, c.model.weights);
    }

    #[test]
    fn model_snapshot_round_trips_through_json() {
        let model = TempotronModel {
            weights: vec![0.25, -0.5, 0.125],
            v_thr: 1.0,
            kernel: kernel(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.json");
        model.save(&path).unwrap();
        assert_eq!(TempotronModel::load(&path).unwrap(), model);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let ok = TempotronConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TempotronConfig { lambda: Some(0.0), ..ok }.validate().is_err());
        assert!(TempotronConfig { max_epochs: 0, ..ok }.validate().is_err());
        assert!(TempotronConfig { v_thr: -1.0, ..ok }.validate().is_err());
        let bad_bits = TempotronConfig {
            quant: QuantSpec { mode: QuantMode::AfterTraining, bits: 0, range: None },
            ..ok
        };
        assert!(bad_bits.validate().is_err());
        let bad_range = TempotronConfig {
            quant: QuantSpec { mode: QuantMode::DuringTraining, bits: 2, range: Some(0.0) },
            ..ok
        };
        assert!(bad_range.validate().is_err());
    }

    #[test]
    fn grid_extends_past_the_last_spike() {
        // A spike at the very end of the window still peaks inside the grid.
        let (table, grid) = setup(40.0);
        let pat = pattern(Label::Plus, vec![vec![40.0]]);
        let model = TempotronModel { weights: vec![1.0], v_thr: 0.5, kernel: kernel() };
        let res = tempotron_eval(&pat, &model, &table, &grid).unwrap();
        assert!((res.v_max - 1.0).abs() < 5e-4);
        assert_eq!(res.t_max, 47.0);
        assert!(grid.time(grid.len() - 1) >= 40.0 + DECAY_MARGIN_TAUS * 15.0);
    }
}
