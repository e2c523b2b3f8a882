//! Command-line front end: dataset generation, single training runs,
//! multi-trial experiments, quantization sweeps, analog encoding, and the
//! static-threshold estimator. Experiment settings come from a TOML config
//! file; common fields can be overridden with flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use nnld::data::{Dataset, Label, SpikePattern, TaskKind};
use nnld::encoder::{encode_recording, AnalogRecording, LifParams, DEFAULT_BIN_THRESHOLD};
use nnld::harness::{
    learner_seed, mode_label, run_experiment, run_quant_sweep, run_single, train_on,
    ExperimentConfig, TaskSpec,
};
use nnld::kernel::KernelParams;
use nnld::learning::{static_threshold, write_trace_csv};
use nnld::neuron::{NeuronParams, DEFAULT_DT_MS};
use nnld::tempotron::QuantMode;

#[derive(Parser)]
#[command(name = "nnld", version, about = "Spiking-pattern classification with nonlinear dendrites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Latency,
    Synchrony,
    Encoded,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> TaskKind {
        match t {
            TaskArg::Latency => TaskKind::Latency,
            TaskArg::Synchrony => TaskKind::Synchrony,
            TaskArg::Encoded => TaskKind::Encoded,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    At,
    Dt,
    None,
}

impl From<ModeArg> for QuantMode {
    fn from(m: ModeArg) -> QuantMode {
        match m {
            ModeArg::At => QuantMode::AfterTraining,
            ModeArg::Dt => QuantMode::DuringTraining,
            ModeArg::None => QuantMode::None,
        }
    }
}

impl std::fmt::Display for ModeArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModeArg::At => "at",
            ModeArg::Dt => "dt",
            ModeArg::None => "none",
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a spike dataset file (JSON lines).
    Gen {
        #[arg(long, value_enum)]
        task: TaskArg,
        /// Pattern count.
        #[arg(long)]
        p: usize,
        /// Afferent count (fixed at 130 for the encoded task).
        #[arg(long)]
        d: Option<usize>,
        /// Pattern window in ms (fixed at 500 for the encoded task).
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train one model and write model.json, trace.csv and result.json.
    Train {
        /// Experiment config (TOML).
        #[arg(short, long)]
        config: PathBuf,
        /// Train on a dataset file instead of generating the config's task.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Overrides the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Trial index used for seed derivation when generating the task.
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Output directory (default: $NNLD_OUT_DIR or the working directory).
        #[arg(short, long)]
        out_dir: Option<PathBuf>,
    },
    /// Run a seeded multi-trial experiment and write report.json.
    Experiment {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        base_seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(short, long)]
        out_dir: Option<PathBuf>,
    },
    /// Quantization sweep over bit depths and modes; writes sweep.csv/json.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        /// Comma-separated bit depths, e.g. 2,4.
        #[arg(long, value_delimiter = ',')]
        bits: Vec<u32>,
        /// Comma-separated quantization modes (at, dt).
        #[arg(long, value_delimiter = ',', default_values_t = vec![ModeArg::At, ModeArg::Dt])]
        modes: Vec<ModeArg>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        base_seed: Option<u64>,
        #[arg(short, long)]
        out_dir: Option<PathBuf>,
    },
    /// Encode an analog recording (CSV) into a one-pattern spike dataset.
    Encode {
        /// Input recording: sample_period_ms header row, then samples x channels.
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Label stored on the encoded pattern.
        #[arg(long, default_value = "+")]
        label: String,
        #[arg(long, default_value_t = LifParams::default().leak)]
        leak: f64,
        #[arg(long, default_value_t = LifParams::default().gain)]
        gain: f64,
        #[arg(long, default_value_t = LifParams::default().threshold)]
        threshold: f64,
        #[arg(long, default_value_t = LifParams::default().reset)]
        reset: f64,
        #[arg(long, default_value_t = DEFAULT_BIN_THRESHOLD)]
        bin_thr: f64,
    },
    /// Estimate the static firing threshold for random latency patterns.
    StaticThr {
        #[arg(long, default_value_t = 500)]
        d: usize,
        #[arg(long, default_value_t = 400.0)]
        t: f64,
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        x_thr: f64,
        #[arg(long, default_value_t = 100.0)]
        x_sat: f64,
        #[arg(long, default_value_t = 15.0)]
        tau: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_DT_MS)]
        dt: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg: ExperimentConfig =
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    Ok(cfg)
}

fn resolve_out_dir(flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag
        .or_else(|| std::env::var_os("NNLD_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen { task, p, d, t, seed, out } => {
            let kind = TaskKind::from(task);
            let spec = match kind {
                TaskKind::Encoded => {
                    let fixed = TaskSpec::encoded(p);
                    if d.is_some_and(|d| d != fixed.d) {
                        bail!("the encoded task has a fixed afferent count of {}", fixed.d);
                    }
                    if t.is_some_and(|t| t != fixed.duration) {
                        bail!("the encoded task has a fixed window of {} ms", fixed.duration);
                    }
                    fixed
                }
                _ => TaskSpec { kind, p, d: d.unwrap_or(500), duration: t.unwrap_or(400.0) },
            };
            let data = spec.generate(seed)?;
            data.save(&out)?;
            println!(
                "wrote {} patterns (task {:?}, d={}, T={} ms) to {}",
                data.len(),
                data.task,
                data.d,
                data.duration,
                out.display()
            );
        }
        Command::Train { config, data, seed, trial, out_dir } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            let dir = resolve_out_dir(out_dir)?;
            let (result, model, traces) = match data {
                Some(path) => {
                    cfg.validate()?;
                    let data = Dataset::load(&path)?;
                    let trial_seed = cfg.base_seed.wrapping_add(trial as u64);
                    let (model, iterations, converged, traces) =
                        train_on(&cfg, &data, learner_seed(trial_seed))?;
                    let accuracy = model.accuracy_on(&data, cfg.learner.dt())?;
                    let result = nnld::harness::TrialResult {
                        trial,
                        seed: trial_seed,
                        accuracy,
                        train_accuracy: accuracy,
                        iterations,
                        converged,
                    };
                    (result, model, traces)
                }
                None => run_single(&cfg, trial)?,
            };
            model.save(dir.join("model.json"))?;
            write_trace_csv(dir.join("trace.csv"), &traces)?;
            let json = serde_json::to_string_pretty(&result)?;
            fs::write(dir.join("result.json"), json)?;
            println!(
                "trial {} seed {}: accuracy {:.12}, {} iterations, converged={}",
                result.trial, result.seed, result.accuracy, result.iterations, result.converged
            );
        }
        Command::Experiment { config, trials, base_seed, workers, out_dir } => {
            let mut cfg = load_config(&config)?;
            if let Some(n) = trials {
                cfg.trials = n;
            }
            if let Some(s) = base_seed {
                cfg.base_seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let dir = resolve_out_dir(out_dir)?;
            let report = run_experiment(&cfg)?;
            report.save(dir.join("report.json"))?;
            println!(
                "{} trials: mean accuracy {:.12} (sd {:.12}) in {:.1}s -> {}",
                report.trials.len(),
                report.mean,
                report.sd,
                report.runtime_secs,
                dir.join("report.json").display()
            );
        }
        Command::Sweep { config, bits, modes, trials, base_seed, out_dir } => {
            let mut cfg = load_config(&config)?;
            if let Some(n) = trials {
                cfg.trials = n;
            }
            if let Some(s) = base_seed {
                cfg.base_seed = s;
            }
            cfg.validate()?;
            let dir = resolve_out_dir(out_dir)?;
            let modes: Vec<QuantMode> = modes.into_iter().map(QuantMode::from).collect();
            let entries = run_quant_sweep(&cfg, &bits, &modes)?;
            nnld::harness::write_sweep_csv(dir.join("sweep.csv"), &entries)?;
            let json = serde_json::to_string_pretty(&entries)?;
            fs::write(dir.join("sweep.json"), json)?;
            for e in &entries {
                println!(
                    "{} bits {}: mean {:.12} (sd {:.12})",
                    e.bits,
                    mode_label(e.mode),
                    e.report.mean,
                    e.report.sd
                );
            }
            println!("wrote {} sweep cells to {}", entries.len(), dir.display());
        }
        Command::Encode { input, out, label, leak, gain, threshold, reset, bin_thr } => {
            let rec = AnalogRecording::load(&input)?;
            let lif = LifParams { leak, gain, threshold, reset };
            let label = match label.as_str() {
                "+" => Label::Plus,
                "-" => Label::Minus,
                other => bail!("label must be + or -, got {other}"),
            };
            let spikes = encode_recording(&rec, &lif, bin_thr)?;
            let d = spikes.len();
            let data = Dataset {
                d,
                duration: rec.duration_ms(),
                task: TaskKind::Encoded,
                pairings: None,
                patterns: vec![SpikePattern { id: 0, label, spikes }],
            };
            data.save(&out)?;
            println!(
                "encoded {} channels into {} afferents ({} spikes) -> {}",
                rec.channel_count(),
                d,
                data.patterns[0].total_spikes(),
                out.display()
            );
        }
        Command::StaticThr { d, t, m, k, x_thr, x_sat, tau, samples, dt, seed } => {
            let params = NeuronParams {
                m,
                k,
                x_thr,
                x_sat,
                kernel: KernelParams::with_tau(tau)?,
            };
            let thr = static_threshold(d, t, &params, samples, dt, seed)?;
            println!("{thr}");
        }
    }
    Ok(())
}
