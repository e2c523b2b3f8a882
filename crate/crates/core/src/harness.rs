//! Experiment orchestration: seeded multi-trial runs, mean/SD aggregation,
//! quantization sweeps, and report serialization. Every artifact is a pure
//! function of the configuration and its seeds: trial `t` derives its seed
//! as `base_seed + t`, regenerates the dataset from it, and hands the
//! learner an independent stream derived from the same trial seed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as IoWrite};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{gen_latency, gen_synchrony, Dataset, Label, TaskKind};
use crate::encoder::{gen_encoded, TACTILE_CHANNELS, TACTILE_SAMPLES};
use crate::error::{Error, Result};
use crate::kernel::KernelTable;
use crate::learning::{train_morph, IterationTrace, MorphConfig};
use crate::neuron::{eval_pattern, NeuronParams, NnldModel, SimGrid};
use crate::tempotron::{
    tempotron_eval, train_tempotron, QuantMode, QuantSpec, TempotronConfig, TempotronModel,
};

/// Learner streams are decorrelated from dataset generation by XOR-ing the
/// trial seed with this constant.
const LEARNER_SEED_STREAM: u64 = 0x4c45_4152_4e45_5221;

/// Held-out fraction protocol for the encoded task: 60% train, 40% test.
pub const ENCODED_TRAIN_FRACTION: f64 = 0.6;

/// Which dataset a trial regenerates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Pattern count.
    pub p: usize,
    /// Afferent count.
    pub d: usize,
    /// Pattern window (ms).
    #[serde(rename = "t")]
    pub duration: f64,
}

impl TaskSpec {
    pub fn latency(p: usize) -> Self {
        TaskSpec { kind: TaskKind::Latency, p, d: 500, duration: 400.0 }
    }

    pub fn synchrony(p: usize) -> Self {
        TaskSpec { kind: TaskKind::Synchrony, p, d: 500, duration: 400.0 }
    }

    pub fn encoded(p: usize) -> Self {
        TaskSpec {
            kind: TaskKind::Encoded,
            p,
            d: 2 * TACTILE_CHANNELS,
            duration: TACTILE_SAMPLES as f64,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        match self.kind {
            TaskKind::Latency => gen_latency(self.p, self.d, self.duration, seed),
            TaskKind::Synchrony => gen_synchrony(self.p, self.d, self.duration, seed),
            TaskKind::Encoded => gen_encoded(self.p, seed),
        }
    }
}

/// The learner under test, with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LearnerSpec {
    Morph {
        #[serde(default)]
        config: MorphConfig,
    },
    Tempotron {
        #[serde(default)]
        config: TempotronConfig,
    },
}

impl LearnerSpec {
    pub fn morph() -> Self {
        LearnerSpec::Morph { config: MorphConfig::default() }
    }

    pub fn tempotron(quant: QuantSpec) -> Self {
        LearnerSpec::Tempotron {
            config: TempotronConfig { quant, ..TempotronConfig::default() },
        }
    }

    /// Evaluation grid step used by this learner.
    pub fn dt(&self) -> f64 {
        match self {
            LearnerSpec::Morph { config } => config.dt,
            LearnerSpec::Tempotron { config } => config.dt,
        }
    }
}

/// One full benchmark: task, neuron, learner, and trial plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    #[serde(default)]
    pub neuron: NeuronParams,
    pub learner: LearnerSpec,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Worker threads for trial execution; 0 uses the process default.
    #[serde(default)]
    pub workers: usize,
}

fn default_trials() -> usize {
    10
}

fn cfg_err(path: &str, err: Error) -> Error {
    Error::config(path, err.to_string())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.task.p == 0 {
            return Err(Error::config("task.p", "pattern count must be >= 1"));
        }
        if self.task.d == 0 {
            return Err(Error::config("task.d", "afferent count must be >= 1"));
        }
        if !(self.task.duration >= 1.0) || !self.task.duration.is_finite() {
            return Err(Error::config("task.t", "pattern window must be >= 1 ms"));
        }
        if self.task.kind == TaskKind::Synchrony && !self.task.d.is_multiple_of(2) {
            return Err(Error::config("task.d", "synchrony task needs an even afferent count"));
        }
        if self.task.kind == TaskKind::Encoded {
            let d = 2 * TACTILE_CHANNELS;
            if self.task.d != d {
                return Err(Error::config(
                    "task.d",
                    format!("encoded task has a fixed afferent count of {d}"),
                ));
            }
            if self.task.duration != TACTILE_SAMPLES as f64 {
                return Err(Error::config(
                    "task.t",
                    format!("encoded task has a fixed window of {} ms", TACTILE_SAMPLES),
                ));
            }
        }
        self.neuron.validate().map_err(|e| cfg_err("neuron", e))?;
        match &self.learner {
            LearnerSpec::Morph { config } => {
                config.validate().map_err(|e| cfg_err("learner.config", e))?;
            }
            LearnerSpec::Tempotron { config } => {
                config.validate().map_err(|e| cfg_err("learner.config", e))?;
            }
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "trial count must be >= 1"));
        }
        Ok(())
    }
}

/// A trained classifier of either kind, evaluated through one code path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainedModel {
    Morph(NnldModel),
    Tempotron(TempotronModel),
}

impl TrainedModel {
    /// Fraction of patterns classified correctly.
    pub fn accuracy_on(&self, data: &Dataset, dt: f64) -> Result<f64> {
        let kernel = match self {
            TrainedModel::Morph(m) => m.params.kernel,
            TrainedModel::Tempotron(t) => t.kernel,
        };
        let grid = SimGrid::for_pattern(data.duration, &kernel, dt)?;
        let table = KernelTable::with_default_horizon(&kernel, dt)?;
        let mut correct = 0;
        for pat in &data.patterns {
            let predicted = match self {
                TrainedModel::Morph(m) => eval_pattern(pat, m, &table, &grid)?.predicted,
                TrainedModel::Tempotron(t) => tempotron_eval(pat, t, &table, &grid)?.predicted,
            };
            if (predicted == Label::Plus) == pat.label.is_plus() {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.patterns.len() as f64)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        Ok(serde_json::from_reader(r)?)
    }
}

/// One trial's outcome. `accuracy` follows the task protocol: training-set
/// accuracy for the capacity tasks, held-out accuracy for the encoded task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub train_accuracy: f64,
    /// Rewiring iterations or training epochs performed.
    pub iterations: usize,
    pub converged: bool,
}

/// Aggregated multi-trial report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
    pub mean: f64,
    /// Sample standard deviation over trials; 0 for a single trial.
    pub sd: f64,
    pub runtime_secs: f64,
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Split per class in pattern order: the first 60% of each class trains,
/// the rest is held out.
pub fn split_train_holdout(data: &Dataset, train_fraction: f64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid_param(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in [Label::Plus, Label::Minus] {
        let class: Vec<_> = data.patterns.iter().filter(|p| p.label == label).collect();
        if class.is_empty() {
            continue;
        }
        let n_train = ((class.len() as f64 * train_fraction).round() as usize)
            .clamp(1, class.len().saturating_sub(1).max(1));
        for (i, pat) in class.into_iter().enumerate() {
            if i < n_train {
                train.push((*pat).clone());
            } else {
                test.push((*pat).clone());
            }
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid_param(
            "held-out split needs at least two patterns per class",
        ));
    }
    let make = |patterns| Dataset {
        d: data.d,
        duration: data.duration,
        task: data.task,
        pairings: data.pairings.clone(),
        patterns,
    };
    Ok((make(train), make(test)))
}

/// The learner's seed stream for a given trial seed.
pub fn learner_seed(trial_seed: u64) -> u64 {
    trial_seed ^ LEARNER_SEED_STREAM
}

/// Train the configured learner on an already-materialized dataset.
pub fn train_on(
    cfg: &ExperimentConfig,
    data: &Dataset,
    learner_seed: u64,
) -> Result<(TrainedModel, usize, bool, Vec<IterationTrace>)> {
    match &cfg.learner {
        LearnerSpec::Morph { config } => {
            let out = train_morph(*config, cfg.neuron, data, learner_seed)?;
            Ok((TrainedModel::Morph(out.model), out.iterations, out.converged, out.traces))
        }
        LearnerSpec::Tempotron { config } => {
            let out = train_tempotron(config, &cfg.neuron.kernel, data, learner_seed)?;
            Ok((TrainedModel::Tempotron(out.model), out.epochs, out.converged, out.traces))
        }
    }
}

/// Train one seeded trial and score it by the task protocol.
fn run_trial_full(
    cfg: &ExperimentConfig,
    trial: usize,
) -> Result<(TrialResult, TrainedModel, Vec<IterationTrace>)> {
    let seed = cfg.base_seed.wrapping_add(trial as u64);
    let data = cfg.task.generate(seed)?;
    let held_out = cfg.task.kind == TaskKind::Encoded;
    let (train_set, test_set) = if held_out {
        let (tr, te) = split_train_holdout(&data, ENCODED_TRAIN_FRACTION)?;
        (tr, Some(te))
    } else {
        (data, None)
    };

    let (model, iterations, converged, traces) = train_on(cfg, &train_set, learner_seed(seed))?;
    let dt = cfg.learner.dt();
    let train_accuracy = model.accuracy_on(&train_set, dt)?;
    let accuracy = match &test_set {
        Some(te) => model.accuracy_on(te, dt)?,
        None => train_accuracy,
    };
    Ok((
        TrialResult { trial, seed, accuracy, train_accuracy, iterations, converged },
        model,
        traces,
    ))
}

fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialResult> {
    run_trial_full(cfg, trial).map(|(r, _, _)| r)
}

/// As one experiment trial, additionally returning the model and trace.
pub fn run_single(
    cfg: &ExperimentConfig,
    trial: usize,
) -> Result<(TrialResult, TrainedModel, Vec<IterationTrace>)> {
    cfg.validate()?;
    run_trial_full(cfg, trial)
}

/// Run all trials (in parallel up to `workers`) and aggregate.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let run_all = || -> Result<Vec<TrialResult>> {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, t))
            .collect()
    };
    let trials = if cfg.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::invalid_param(format!("worker pool: {e}")))?;
        pool.install(run_all)?
    } else {
        run_all()?
    };
    let accuracies: Vec<f64> = trials.iter().map(|t| t.accuracy).collect();
    let (mean, sd) = mean_sd(&accuracies);
    Ok(ExperimentReport {
        config: *cfg,
        trials,
        mean,
        sd,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// One cell of a quantization sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub bits: u32,
    pub mode: QuantMode,
    pub report: ExperimentReport,
}

/// Tempotron quantization sweep: the cross product of bit depths and modes,
/// each run as a full multi-trial experiment on `cfg`'s task. The learner in
/// `cfg` is replaced by a tempotron with the given quantizer; its other
/// hyperparameters are kept when `cfg` already specifies a tempotron.
pub fn run_quant_sweep(
    cfg: &ExperimentConfig,
    bits_list: &[u32],
    modes: &[QuantMode],
) -> Result<Vec<SweepEntry>> {
    let base = match &cfg.learner {
        LearnerSpec::Tempotron { config } => *config,
        LearnerSpec::Morph { .. } => TempotronConfig::default(),
    };
    let mut entries = Vec::new();
    for &bits in bits_list {
        for &mode in modes {
            let quant = match mode {
                QuantMode::None => QuantSpec::none(),
                QuantMode::AfterTraining => QuantSpec { mode, bits, range: base.quant.range },
                QuantMode::DuringTraining => QuantSpec {
                    mode,
                    bits,
                    range: base.quant.range.or(Some(crate::tempotron::default_dt_range(bits))),
                },
            };
            let mut run_cfg = *cfg;
            run_cfg.learner = LearnerSpec::Tempotron {
                config: TempotronConfig { quant, lambda: base.lambda, ..base },
            };
            entries.push(SweepEntry {
                bits,
                mode,
                report: run_experiment(&run_cfg)?,
            });
        }
    }
    Ok(entries)
}

pub fn mode_label(mode: QuantMode) -> &'static str {
    match mode {
        QuantMode::None => "none",
        QuantMode::AfterTraining => "at",
        QuantMode::DuringTraining => "dt",
    }
}

/// Long-format sweep CSV: one row per (bits, mode, trial).
pub fn write_sweep_csv(path: impl AsRef<Path>, entries: &[SweepEntry]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "bits,mode,trial,seed,accuracy,mean,sd")?;
    for e in entries {
        for t in &e.report.trials {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                e.bits,
                mode_label(e.mode),
                t.trial,
                t.seed,
                t.accuracy,
                e.report.mean,
                e.report.sd
            )?;
        }
    }
    Ok(())
}

impl ExperimentReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        Ok(serde_json::from_reader(r)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::ThresholdInit;

    fn small_morph_cfg() -> ExperimentConfig {
        ExperimentConfig {
            task: TaskSpec { kind: TaskKind::Latency, p: 12, d: 30, duration: 100.0 },
            neuron: NeuronParams { m: 6, k: 3, ..NeuronParams::default() },
            learner: LearnerSpec::Morph {
                config: MorphConfig { max_iters: 120, ..MorphConfig::default() },
            },
            trials: 3,
            base_seed: 17,
            workers: 0,
        }
    }

    #[test]
    fn report_aggregates_match_independent_recomputation() {
        let report = run_experiment(&small_morph_cfg()).unwrap();
        assert_eq!(report.trials.len(), 3);
        let acc: Vec<f64> = report.trials.iter().map(|t| t.accuracy).collect();
        let mean = acc.iter().sum::<f64>() / 3.0;
        let var = acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 2.0;
        assert!((report.mean - mean).abs() < 1e-12);
        assert!((report.sd - var.sqrt()).abs() < 1e-12);
        for (i, t) in report.trials.iter().enumerate() {
            assert_eq!(t.trial, i);
            assert_eq!(t.seed, 17 + i as u64);
        }
    }

    #[test]
    fn single_trial_reports_zero_sd() {
        let cfg = ExperimentConfig { trials: 1, ..small_morph_cfg() };
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.sd, 0.0);
        assert_eq!(report.mean, report.trials[0].accuracy);
    }

    #[test]
    fn reports_are_deterministic_and_worker_invariant() {
        let mut a = run_experiment(&small_morph_cfg()).unwrap();
        let mut b = run_experiment(&small_morph_cfg()).unwrap();
        let cfg_two = ExperimentConfig { workers: 2, ..small_morph_cfg() };
        let mut c = run_experiment(&cfg_two).unwrap();
        // Wall-clock time is the one impure report field.
        a.runtime_secs = 0.0;
        b.runtime_secs = 0.0;
        c.runtime_secs = 0.0;
        c.config.workers = 0;
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn capacity_protocol_scores_the_training_set() {
        let report = run_experiment(&small_morph_cfg()).unwrap();
        for t in &report.trials {
            assert_eq!(t.accuracy, t.train_accuracy);
        }
    }

    #[test]
    fn encoded_protocol_scores_held_out_patterns() {
        let cfg = ExperimentConfig {
            task: TaskSpec::encoded(10),
            neuron: NeuronParams { m: 26, k: 5, ..NeuronParams::default() },
            learner: LearnerSpec::Morph {
                config: MorphConfig { max_iters: 30, ..MorphConfig::default() },
            },
            trials: 1,
            base_seed: 5,
            workers: 0,
        };
        let report = run_experiment(&cfg).unwrap();
        let t = &report.trials[0];
        // 10 patterns split 3+3 train / 2+2 test per class; held-out accuracy
        // is quantized to quarters while training accuracy is in sixths.
        assert!((t.accuracy * 4.0).fract().abs() < 1e-9);
        assert!((t.train_accuracy * 6.0).fract().abs() < 1e-9);
    }

    #[test]
    fn holdout_split_is_per_class_and_exhaustive() {
        let data = gen_latency(20, 10, 50.0, 3).unwrap();
        let (train, test) = split_train_holdout(&data, 0.6).unwrap();
        assert_eq!(train.len() + test.len(), 20);
        for label in [Label::Plus, Label::Minus] {
            let n = data.patterns.iter().filter(|p| p.label == label).count();
            let n_train = train.patterns.iter().filter(|p| p.label == label).count();
            assert_eq!(n_train, ((n as f64) * 0.6).round() as usize);
        }
        let mut ids: Vec<u64> = train.patterns.iter().chain(&test.patterns).map(|p| p.id).collect();
        ids.sort_unstable();
        let mut expected: Vec<u64> = data.patterns.iter().map(|p| p.id).collect();
        expected.sort_unstable();
        assert_eq!(ids, expected);
        assert!(split_train_holdout(&data, 1.5).is_err());
    }

    #[test]
    fn tempotron_trials_run_through_the_same_harness() {
        let cfg = ExperimentConfig {
            task: TaskSpec { kind: TaskKind::Latency, p: 10, d: 20, duration: 80.0 },
            neuron: NeuronParams::default(),
            learner: LearnerSpec::Tempotron {
                config: TempotronConfig { max_epochs: 40, ..TempotronConfig::default() },
            },
            trials: 2,
            base_seed: 1,
            workers: 0,
        };
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.trials.len(), 2);
        assert!(report.mean > 0.5, "mean {}", report.mean);
    }

    #[test]
    fn quant_sweep_covers_the_cross_product() {
        let cfg = ExperimentConfig {
            task: TaskSpec { kind: TaskKind::Latency, p: 8, d: 15, duration: 60.0 },
            neuron: NeuronParams::default(),
            learner: LearnerSpec::Tempotron {
                config: TempotronConfig { max_epochs: 10, ..TempotronConfig::default() },
            },
            trials: 2,
            base_seed: 3,
            workers: 0,
        };
        let entries = run_quant_sweep(
            &cfg,
            &[2, 4],
            &[QuantMode::AfterTraining, QuantMode::DuringTraining],
        )
        .unwrap();
        assert_eq!(entries.len(), 4);
        let combos: Vec<(u32, QuantMode)> = entries.iter().map(|e| (e.bits, e.mode)).collect();
        assert!(combos.contains(&(2, QuantMode::AfterTraining)));
        assert!(combos.contains(&(4, QuantMode::DuringTraining)));
        assert!(run_quant_sweep(&cfg, &[], &[QuantMode::AfterTraining]).unwrap().is_empty());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_sweep_csv(&path, &entries).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + 4 * 2);
        assert!(text.starts_with("bits,mode,trial,seed,accuracy,mean,sd\n"));
    }

    #[test]
    fn invalid_configs_name_the_offending_field() {
        let mut cfg = small_morph_cfg();
        cfg.trials = 0;
        let err = run_experiment(&cfg).unwrap_err().to_string();
        assert!(err.contains("trials"), "{err}");

        let mut cfg = small_morph_cfg();
        cfg.task.p = 0;
        let err = run_experiment(&cfg).unwrap_err().to_string();
        assert!(err.contains("task.p"), "{err}");

        let mut cfg = small_morph_cfg();
        cfg.task = TaskSpec { kind: TaskKind::Encoded, p: 10, d: 64, duration: 500.0 };
        let err = run_experiment(&cfg).unwrap_err().to_string();
        assert!(err.contains("task.d"), "{err}");

        let mut cfg = small_morph_cfg();
        cfg.learner = LearnerSpec::Morph {
            config: MorphConfig {
                threshold_init: ThresholdInit::Fixed { value: -2.0 },
                ..MorphConfig::default()
            },
        };
        let err = run_experiment(&cfg).unwrap_err().to_string();
        assert!(err.contains("learner.config"), "{err}");
    }

    #[test]
    fn report_round_trips_through_json() {
        let cfg = ExperimentConfig { trials: 1, ..small_morph_cfg() };
        let report = run_experiment(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        report.save(&path).unwrap();
        assert_eq!(ExperimentReport::load(&path).unwrap(), report);
    }
}
