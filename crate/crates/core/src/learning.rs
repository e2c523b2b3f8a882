//! Morphological learning for the NNLD.
//!
//! Synapses are unit-strength, so learning rewires instead of reweighting:
//! each iteration scores afferent/branch pairs by an error-driven
//! correlation, then swaps the worst-scoring occupied slot (among a random
//! sample) for the best-scoring afferent line (among a random sample of
//! candidates, evaluated as silent synapses that add no drive). The firing
//! threshold adapts in parallel from the false positive/negative counts.

use std::fs::File;
use std::io::{BufWriter, Write as IoWrite};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label, SpikePattern};
use crate::error::{Error, Result};
use crate::kernel::KernelTable;
use crate::neuron::{
    accumulate_psp, branch_nonlinearity, branch_nonlinearity_deriv, psp_at, scan_peak,
    ConnectionMap, NeuronParams, NnldModel, SimGrid, DEFAULT_DT_MS,
};

/// Initial firing threshold policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ThresholdInit {
    /// Drawn uniformly from `[lo, hi]` at trainer construction.
    Uniform { lo: f64, hi: f64 },
    Fixed { value: f64 },
}

impl Default for ThresholdInit {
    fn default() -> Self {
        ThresholdInit::Uniform { lo: 1.0, hi: 50.0 }
    }
}

/// Morphological learning hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MorphConfig {
    /// Occupied slots sampled per iteration.
    pub n_t: usize,
    /// Replacement afferent lines sampled per iteration.
    pub n_r: usize,
    /// Threshold learning rate.
    pub eta: f64,
    /// Weight of the false positive count in the threshold update.
    pub w_fp: f64,
    /// Weight of the false negative count in the threshold update.
    pub w_fn: f64,
    /// Upper bound on rewiring iterations.
    pub max_iters: usize,
    pub threshold_init: ThresholdInit,
    /// Evaluation grid step (ms).
    pub dt: f64,
}

impl Default for MorphConfig {
    fn default() -> Self {
        MorphConfig {
            n_t: 25,
            n_r: 25,
            eta: 0.1,
            w_fp: 1.0,
            w_fn: 1.0,
            max_iters: 5000,
            threshold_init: ThresholdInit::default(),
            dt: DEFAULT_DT_MS,
        }
    }
}

impl MorphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_r == 0 {
            return Err(Error::invalid_param(format!(
                "sample sizes must be >= 1, got n_t={} n_r={}",
                self.n_t, self.n_r
            )));
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::invalid_param(format!("eta must be >= 0, got {}", self.eta)));
        }
        if !(self.w_fp >= 0.0) || !(self.w_fn >= 0.0) {
            return Err(Error::invalid_param(format!(
                "error weights must be >= 0, got w_fp={} w_fn={}",
                self.w_fp, self.w_fn
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid_param(format!("dt must be > 0, got {}", self.dt)));
        }
        match self.threshold_init {
            ThresholdInit::Uniform { lo, hi } => {
                if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
                    return Err(Error::invalid_param(format!(
                        "threshold range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
                    )));
                }
            }
            ThresholdInit::Fixed { value } => {
                if !(value > 0.0) || !value.is_finite() {
                    return Err(Error::invalid_param(format!(
                        "fixed threshold must be > 0, got {value}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One applied rewiring step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Swap {
    pub branch: usize,
    pub slot: usize,
    pub out_afferent: usize,
    pub in_afferent: usize,
}

/// State of one training iteration, recorded before its updates apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iter: usize,
    pub accuracy: f64,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub v_thr: f64,
    /// The swap applied in response to this iteration's errors, if any.
    pub swap: Option<Swap>,
}

/// Training result: the best-accuracy snapshot seen, plus the full trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: NnldModel,
    /// Training accuracy of `model`.
    pub best_accuracy: f64,
    /// Rewiring iterations performed.
    pub iterations: usize,
    /// Whether training reached zero errors.
    pub converged: bool,
    pub traces: Vec<IterationTrace>,
}

/// Write traces as CSV. The swap columns stay empty for rows without a swap,
/// which also covers per-epoch traces of weight-based learners.
pub fn write_trace_csv(path: impl AsRef<Path>, traces: &[IterationTrace]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iter,accuracy,fp,fn,v_thr,swap_branch,swap_out,swap_in")?;
    for t in traces {
        let (b, o, i) = match t.swap {
            Some(s) => (s.branch.to_string(), s.out_afferent.to_string(), s.in_afferent.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            t.iter, t.accuracy, t.false_positives, t.false_negatives, t.v_thr, b, o, i
        )?;
    }
    Ok(())
}

/// A misclassified pattern: its index, error sign (+1 for a missed target,
/// -1 for a false alarm) and cached peak index.
#[derive(Debug, Clone, Copy)]
struct ErrorTerm {
    pattern: usize,
    sign: f64,
    t_max_idx: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct PatternState {
    series: Vec<f64>,
    v_max: f64,
    t_max_idx: usize,
}

/// Morphological trainer. Caches each pattern's full voltage series so a
/// swap only rebuilds the one affected branch.
pub struct MorphTrainer<'a> {
    cfg: MorphConfig,
    data: &'a Dataset,
    model: NnldModel,
    table: KernelTable,
    grid: SimGrid,
    rng: ChaCha8Rng,
    states: Vec<PatternState>,
    iters_done: usize,
    best_accuracy: f64,
    best_model: NnldModel,
}

impl<'a> MorphTrainer<'a> {
    /// Draws the initial morphology, then the initial threshold, from the
    /// seeded generator, and caches all pattern voltage series.
    pub fn new(cfg: MorphConfig, params: NeuronParams, data: &'a Dataset, seed: u64) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        data.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conn = ConnectionMap::random(data.d, &params, &mut rng)?;
        let v_thr = match cfg.threshold_init {
            ThresholdInit::Uniform { lo, hi } => rng.gen_range(lo..=hi),
            ThresholdInit::Fixed { value } => value,
        };
        let model = NnldModel::new(params, conn, v_thr)?;
        let grid = SimGrid::for_pattern(data.duration, &params.kernel, cfg.dt)?;
        let table = KernelTable::with_default_horizon(&params.kernel, cfg.dt)?;
        let best_model = model.clone();
        let mut trainer = MorphTrainer {
            cfg,
            data,
            model,
            table,
            grid,
            rng,
            states: Vec::new(),
            iters_done: 0,
            best_accuracy: f64::NEG_INFINITY,
            best_model,
        };
        trainer.rebuild_all_series()?;
        Ok(trainer)
    }

    pub fn model(&self) -> &NnldModel {
        &self.model
    }

    fn rebuild_all_series(&mut self) -> Result<()> {
        self.states = self
            .data
            .patterns
            .iter()
            .map(|pat| {
                let series = crate::neuron::membrane_series(pat, &self.model, &self.table, &self.grid)?;
                let (v_max, t_max_idx) = scan_peak(&series);
                Ok(PatternState { series, v_max, t_max_idx })
            })
            .collect::<Result<_>>()?;
        Ok(())
    }

    /// Error counts against the current threshold, in pattern order.
    fn collect_errors(&self) -> (Vec<ErrorTerm>, usize, usize) {
        let mut errors = Vec::new();
        let (mut fp, mut fn_) = (0, 0);
        for (idx, (pat, st)) in self.data.patterns.iter().zip(&self.states).enumerate() {
            let fired = st.v_max >= self.model.v_thr;
            match (pat.label, fired) {
                (Label::Plus, false) => {
                    fn_ += 1;
                    errors.push(ErrorTerm { pattern: idx, sign: 1.0, t_max_idx: st.t_max_idx });
                }
                (Label::Minus, true) => {
                    fp += 1;
                    errors.push(ErrorTerm { pattern: idx, sign: -1.0, t_max_idx: st.t_max_idx });
                }
                _ => {}
            }
        }
        (errors, fp, fn_)
    }

    /// Nonlinearity slopes of one branch at each error's peak time.
    fn branch_slopes(&self, branch: usize, errors: &[ErrorTerm]) -> Vec<f64> {
        let slots = &self.model.conn.slots[branch];
        errors
            .iter()
            .map(|e| {
                let pat = &self.data.patterns[e.pattern];
                let mut drive = 0.0;
                for &aff in slots {
                    drive += psp_at(&pat.spikes[aff], e.t_max_idx, &self.table);
                }
                branch_nonlinearity_deriv(drive, &self.model.params)
            })
            .collect()
    }

    /// Mean error-driven correlation of an afferent line with one branch.
    /// Candidates are scored as silent synapses: the cached series and the
    /// branch drives are read, never modified.
    fn correlation(&self, afferent: usize, errors: &[ErrorTerm], slopes: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (e, &slope) in errors.iter().zip(slopes) {
            let pat = &self.data.patterns[e.pattern];
            acc += e.sign * slope * psp_at(&pat.spikes[afferent], e.t_max_idx, &self.table);
        }
        acc / errors.len() as f64
    }

    /// Index of the minimum (or maximum) with uniform random tie-breaking.
    fn arg_select(&mut self, scores: &[f64], take_max: bool) -> usize {
        let mut best = scores[0];
        for &s in &scores[1..] {
            if (take_max && s > best) || (!take_max && s < best) {
                best = s;
            }
        }
        let tied: Vec<usize> =
            (0..scores.len()).filter(|&i| scores[i] == best).collect();
        if tied.len() == 1 {
            tied[0]
        } else {
            tied[self.rng.gen_range(0..tied.len())]
        }
    }

    /// Pick the worst sampled slot and the best sampled replacement, rewire,
    /// and update the cached series of every pattern incrementally.
    fn select_and_apply_swap(&mut self, errors: &[ErrorTerm]) -> Result<Swap> {
        let params = self.model.params;
        let k = params.k;
        let total_slots = params.m * k;
        let n_t = self.cfg.n_t.min(total_slots);
        let n_r = self.cfg.n_r.min(self.data.d);

        let slot_ids = sample(&mut self.rng, total_slots, n_t).into_vec();
        let mut slot_scores = Vec::with_capacity(n_t);
        let mut slope_cache: Vec<Option<Vec<f64>>> = vec![None; params.m];
        for &flat in &slot_ids {
            let (j, s) = (flat / k, flat % k);
            if slope_cache[j].is_none() {
                slope_cache[j] = Some(self.branch_slopes(j, errors));
            }
            let aff = self.model.conn.slots[j][s];
            let slopes = slope_cache[j].as_ref().unwrap();
            slot_scores.push(self.correlation(aff, errors, slopes));
        }
        let worst = self.arg_select(&slot_scores, false);
        let (branch, slot) = (slot_ids[worst] / k, slot_ids[worst] % k);
        let out_afferent = self.model.conn.slots[branch][slot];

        let candidates = sample(&mut self.rng, self.data.d, n_r).into_vec();
        let slopes = slope_cache[branch]
            .take()
            .unwrap_or_else(|| self.branch_slopes(branch, errors));
        let cand_scores: Vec<f64> = candidates
            .iter()
            .map(|&aff| self.correlation(aff, errors, &slopes))
            .collect();
        let in_afferent = candidates[self.arg_select(&cand_scores, true)];

        let swap = Swap { branch, slot, out_afferent, in_afferent };
        self.apply_swap(swap);
        Ok(swap)
    }

    /// Replace the slot's afferent and patch every cached series: subtract
    /// the branch's old output, add the new one, rescan the peak.
    fn apply_swap(&mut self, swap: Swap) {
        let params = self.model.params;
        let n = self.grid.len();
        let mut old_drive = vec![0.0; n];
        let mut new_drive = vec![0.0; n];
        for (pat, st) in self.data.patterns.iter().zip(&mut self.states) {
            old_drive.iter_mut().for_each(|x| *x = 0.0);
            new_drive.iter_mut().for_each(|x| *x = 0.0);
            let slots = &self.model.conn.slots[swap.branch];
            for &aff in slots {
                accumulate_psp(&mut old_drive, &pat.spikes[aff], &self.table);
            }
            for (idx, &aff) in slots.iter().enumerate() {
                let aff = if idx == swap.slot { swap.in_afferent } else { aff };
                accumulate_psp(&mut new_drive, &pat.spikes[aff], &self.table);
            }
            for ((v, &od), &nd) in st.series.iter_mut().zip(&old_drive).zip(&new_drive) {
                *v += branch_nonlinearity(nd, &params) - branch_nonlinearity(od, &params);
            }
            let (v_max, t_max_idx) = scan_peak(&st.series);
            st.v_max = v_max;
            st.t_max_idx = t_max_idx;
        }
        self.model.conn.slots[swap.branch][swap.slot] = swap.in_afferent;

        #[cfg(debug_assertions)]
        self.cross_check_one_pattern();
    }

    /// Incremental updates accumulate rounding drift; verify one rotating
    /// pattern against a full recomputation.
    #[cfg(debug_assertions)]
    fn cross_check_one_pattern(&self) {
        let idx = self.iters_done % self.data.patterns.len();
        let pat = &self.data.patterns[idx];
        let fresh =
            crate::neuron::membrane_series(pat, &self.model, &self.table, &self.grid).unwrap();
        for (a, b) in fresh.iter().zip(&self.states[idx].series) {
            let scale = a.abs().max(1.0);
            debug_assert!(
                (a - b).abs() <= 1e-9 * scale,
                "cached series drifted: {a} vs {b} on pattern {idx}"
            );
        }
    }

    /// One full pass: evaluate every pattern, fold the evaluation into the
    /// best-snapshot tracking, and when `apply` and any are misclassified,
    /// swap one slot and nudge the threshold. The trace row records the
    /// pre-update state.
    fn iteration(&mut self, apply: bool) -> Result<IterationTrace> {
        let p = self.data.patterns.len() as f64;
        let iter = self.iters_done;
        let (errors, fp, fn_) = self.collect_errors();
        let accuracy = (p - errors.len() as f64) / p;
        let v_thr = self.model.v_thr;
        if accuracy > self.best_accuracy {
            self.best_accuracy = accuracy;
            self.best_model = self.model.clone();
        }
        let swap = if apply && !errors.is_empty() {
            let swap = self.select_and_apply_swap(&errors)?;
            self.model.v_thr +=
                self.cfg.eta * (self.cfg.w_fp * fp as f64 - self.cfg.w_fn * fn_ as f64);
            self.iters_done += 1;
            Some(swap)
        } else {
            None
        };
        Ok(IterationTrace {
            iter,
            accuracy,
            false_positives: fp,
            false_negatives: fn_,
            v_thr,
            swap,
        })
    }

    /// One training iteration under caller control. `swap` in the returned
    /// trace is `None` once the training set is fully learned.
    pub fn step(&mut self) -> Result<IterationTrace> {
        self.iteration(true)
    }

    /// Run to convergence or the iteration cap; return the best snapshot.
    pub fn run(mut self) -> Result<TrainOutcome> {
        let mut traces = Vec::new();
        let mut converged = false;

        for iter in 0..=self.cfg.max_iters {
            let trace = self.iteration(iter < self.cfg.max_iters)?;
            if trace.false_positives == 0 && trace.false_negatives == 0 {
                converged = true;
            }
            let done = trace.swap.is_none();
            traces.push(trace);
            if done {
                break;
            }
        }

        Ok(TrainOutcome {
            model: self.best_model,
            best_accuracy: self.best_accuracy,
            iterations: self.iters_done,
            converged,
            traces,
        })
    }
}

/// Train an NNLD by rewiring, returning the best snapshot seen.
pub fn train_morph(
    cfg: MorphConfig,
    params: NeuronParams,
    data: &Dataset,
    seed: u64,
) -> Result<TrainOutcome> {
    MorphTrainer::new(cfg, params, data, seed)?.run()
}

/// Mode of a sample estimated from a histogram with Freedman-Diaconis bin
/// widths; the first maximal bin wins and its center is returned. A sample
/// of identical values returns that value.
pub fn histogram_mode(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid_param("histogram mode of an empty sample"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid_param("histogram mode of a non-finite sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    if lo == hi {
        return Ok(lo);
    }
    let quantile = |q: f64| -> f64 {
        let h = (n - 1) as f64 * q;
        let i = h.floor() as usize;
        let frac = h - i as f64;
        if i + 1 < n {
            sorted[i] + (sorted[i + 1] - sorted[i]) * frac
        } else {
            sorted[i]
        }
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let mut width = 2.0 * iqr / (n as f64).cbrt();
    if !(width > 0.0) {
        // Degenerate spread; fall back to a sqrt-count binning.
        width = (hi - lo) / (n as f64).sqrt().ceil();
    }
    let n_bins = ((hi - lo) / width).ceil().max(1.0) as usize;
    let mut counts = vec![0usize; n_bins];
    for &v in &sorted {
        let idx = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[idx] += 1;
    }
    let mode_bin = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap();
    Ok(lo + (mode_bin as f64 + 0.5) * width)
}

/// Static firing threshold: the histogram mode of the peak voltage over
/// random (latency pattern, morphology) draws.
pub fn static_threshold(
    d: usize,
    duration: f64,
    params: &NeuronParams,
    n_samples: usize,
    dt: f64,
    seed: u64,
) -> Result<f64> {
    if d == 0 || n_samples == 0 {
        return Err(Error::invalid_param(format!(
            "need d >= 1 and n_samples >= 1, got d={d} n_samples={n_samples}"
        )));
    }
    if !(duration >= 1.0) || !duration.is_finite() {
        return Err(Error::invalid_param(format!(
            "latency spike times are drawn from [1, T]; T must be >= 1, got {duration}"
        )));
    }
    params.validate()?;
    let grid = SimGrid::for_pattern(duration, &params.kernel, dt)?;
    let table = KernelTable::with_default_horizon(&params.kernel, dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut peaks = Vec::with_capacity(n_samples);
    for id in 0..n_samples {
        let pattern = SpikePattern {
            id: id as u64,
            label: Label::Minus,
            spikes: (0..d).map(|_| vec![rng.gen_range(1.0..=duration)]).collect(),
        };
        let conn = ConnectionMap::random(d, params, &mut rng)?;
        let model = NnldModel::new(*params, conn, 1.0)?;
        let series = crate::neuron::membrane_series(&pattern, &model, &table, &grid)?;
        peaks.push(scan_peak(&series).0);
    }
    histogram_mode(&peaks)
}
