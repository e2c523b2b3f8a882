//! Forward model of the neuron with nonlinear dendrites (NNLD).
//!
//! The neuron has `m` identical branches with `k` excitatory synaptic slots
//! each. Every slot holds one afferent index; an afferent occupying several
//! slots on a branch realizes an integer weight through repeated unit
//! synapses. Each branch squares its summed synaptic drive (scaled by
//! `x_thr`) and saturates at `x_sat`; the soma sums the branch outputs.
//! Classification thresholds the peak somatic voltage.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Label, SpikePattern};
use crate::error::{Error, Result};
use crate::kernel::{KernelParams, KernelTable};

/// Default evaluation grid step (ms).
pub const DEFAULT_DT_MS: f64 = 1.0;

/// Evaluation grids extend this many membrane time constants past the last
/// possible spike so late PSPs decay inside the grid.
pub const DECAY_MARGIN_TAUS: f64 = 5.0;

/// Uniform time grid for membrane-voltage evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    pub dt: f64,
    n: usize,
}

impl SimGrid {
    pub fn new(t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid_param(format!("grid dt must be > 0, got {dt}")));
        }
        if !(t_end >= 0.0) || !t_end.is_finite() {
            return Err(Error::invalid_param(format!("grid end must be >= 0, got {t_end}")));
        }
        Ok(SimGrid {
            dt,
            n: (t_end / dt).floor() as usize + 1,
        })
    }

    /// Grid covering `[0, duration + 5 tau]`.
    pub fn for_pattern(duration: f64, kernel: &KernelParams, dt: f64) -> Result<Self> {
        Self::new(duration + DECAY_MARGIN_TAUS * kernel.tau, dt)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn time(&self, idx: usize) -> f64 {
        idx as f64 * self.dt
    }
}

/// NNLD geometry and nonlinearity constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuronParams {
    /// Dendritic branch count.
    pub m: usize,
    /// Synaptic slots per branch.
    pub k: usize,
    /// Scale of the squared branch nonlinearity.
    pub x_thr: f64,
    /// Branch output saturation level.
    pub x_sat: f64,
    pub kernel: KernelParams,
}

impl Default for NeuronParams {
    fn default() -> Self {
        NeuronParams {
            m: 100,
            k: 5,
            x_thr: 1.0,
            x_sat: 100.0,
            kernel: KernelParams::with_tau(15.0).expect("default kernel"),
        }
    }
}

impl NeuronParams {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 {
            return Err(Error::invalid_param(format!(
                "branch and slot counts must be >= 1, got m={} k={}",
                self.m, self.k
            )));
        }
        if !(self.x_thr > 0.0) || !(self.x_sat > 0.0) {
            return Err(Error::invalid_param(format!(
                "x_thr and x_sat must be > 0, got x_thr={} x_sat={}",
                self.x_thr, self.x_sat
            )));
        }
        self.kernel.validate()
    }
}

/// Squared-with-saturation dendritic nonlinearity `min(v^2/x_thr, x_sat)`.
#[inline]
pub fn branch_nonlinearity(v: f64, params: &NeuronParams) -> f64 {
    (v * v / params.x_thr).min(params.x_sat)
}

/// Derivative of the branch nonlinearity; clipped to 0 at saturation, where
/// the clipped function is constant.
#[inline]
pub fn branch_nonlinearity_deriv(v: f64, params: &NeuronParams) -> f64 {
    if v * v / params.x_thr >= params.x_sat {
        0.0
    } else {
        2.0 * v / params.x_thr
    }
}

/// The learnable morphology: for each branch, `k` slots each holding an
/// afferent index in `[0, d)`. Repeats on one branch are integer weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionMap {
    pub d: usize,
    pub slots: Vec<Vec<usize>>,
}

impl ConnectionMap {
    pub fn m(&self) -> usize {
        self.slots.len()
    }

    pub fn slot_count(&self) -> usize {
        self.slots.iter().map(Vec::len).sum()
    }

    /// Random morphology with every slot drawn uniformly from the afferents.
    pub fn random(d: usize, params: &NeuronParams, rng: &mut impl Rng) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid_param("afferent count d must be >= 1"));
        }
        params.validate()?;
        let slots = (0..params.m)
            .map(|_| (0..params.k).map(|_| rng.gen_range(0..d)).collect())
            .collect();
        Ok(ConnectionMap { d, slots })
    }

    pub fn validate(&self, params: &NeuronParams) -> Result<()> {
        if self.slots.len() != params.m {
            return Err(Error::invalid_param(format!(
                "connection map has {} branches, params declare m={}",
                self.slots.len(),
                params.m
            )));
        }
        for (j, branch) in self.slots.iter().enumerate() {
            if branch.len() != params.k {
                return Err(Error::invalid_param(format!(
                    "branch {j} has {} slots, params declare k={}",
                    branch.len(),
                    params.k
                )));
            }
            if let Some(&bad) = branch.iter().find(|&&a| a >= self.d) {
                return Err(Error::invalid_param(format!(
                    "branch {j} references afferent {bad}, but d={}",
                    self.d
                )));
            }
        }
        Ok(())
    }
}

/// Random initial morphology from a fresh seeded generator.
pub fn init_connections(d: usize, params: &NeuronParams, seed: u64) -> Result<ConnectionMap> {
    ConnectionMap::random(d, params, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// A complete NNLD: geometry, morphology and firing threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnldModel {
    pub params: NeuronParams,
    pub conn: ConnectionMap,
    pub v_thr: f64,
}

impl NnldModel {
    pub fn new(params: NeuronParams, conn: ConnectionMap, v_thr: f64) -> Result<Self> {
        params.validate()?;
        conn.validate(&params)?;
        if !v_thr.is_finite() || v_thr <= 0.0 {
            return Err(Error::invalid_param(format!(
                "firing threshold must be positive and finite, got {v_thr}"
            )));
        }
        Ok(NnldModel { params, conn, v_thr })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let model: NnldModel = serde_json::from_reader(r)?;
        NnldModel::new(model.params, model.conn, model.v_thr)
    }
}

/// Outcome of evaluating one pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Peak somatic voltage over the grid.
    pub v_max: f64,
    /// Time of the peak (ms); earliest grid time on ties.
    pub t_max: f64,
    pub t_max_idx: usize,
    /// Per-branch synaptic drives at `t_max` (empty for linear-summation models).
    pub branch_drives_at_tmax: Vec<f64>,
    pub predicted: Label,
}

impl EvalResult {
    pub fn classify(v_max: f64, v_thr: f64) -> Label {
        if v_max >= v_thr {
            Label::Plus
        } else {
            Label::Minus
        }
    }
}

#[inline]
fn check_grid(table: &KernelTable, grid: &SimGrid) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid_param("evaluation grid is empty"));
    }
    if (table.dt - grid.dt).abs() > 1e-12 {
        return Err(Error::invalid_param(format!(
            "kernel table dt {} does not match grid dt {}",
            table.dt, grid.dt
        )));
    }
    Ok(())
}

/// Accumulate the PSP train of one spike list into `out` (indexed by grid step).
#[inline]
pub(crate) fn accumulate_psp(out: &mut [f64], spikes: &[f64], table: &KernelTable) {
    let n = out.len() as isize;
    for &tf in spikes {
        let f = table.snap(tf);
        if f >= n {
            continue;
        }
        // Lag index 0 contributes nothing: the kernel is 0 at zero lag.
        let last = (table.values.len() as isize - 1).min(n - 1 - f);
        for l in 1..=last {
            out[(f + l) as usize] += table.values[l as usize];
        }
    }
}

/// PSP of one afferent's spike train at a single grid index.
#[inline]
pub(crate) fn psp_at(spikes: &[f64], t_idx: usize, table: &KernelTable) -> f64 {
    let mut acc = 0.0;
    for &tf in spikes {
        acc += table.value_at_index(t_idx as isize - table.snap(tf));
    }
    acc
}

/// Synaptic drive of one branch at time `t` (ms): the sum of PSPs over its
/// slots, counting multiplicity.
pub fn branch_drive(
    pattern: &SpikePattern,
    conn: &ConnectionMap,
    branch: usize,
    t: f64,
    table: &KernelTable,
) -> Result<f64> {
    let slots = conn
        .slots
        .get(branch)
        .ok_or_else(|| Error::IndexOutOfRange(format!("branch {branch} of {}", conn.m())))?;
    let t_idx = table.snap(t);
    if t_idx < 0 {
        return Ok(0.0);
    }
    Ok(slots
        .iter()
        .map(|&aff| psp_at(&pattern.spikes[aff], t_idx as usize, table))
        .sum())
}

/// Somatic voltage at a single time `t` (ms).
pub fn membrane_voltage(
    pattern: &SpikePattern,
    model: &NnldModel,
    table: &KernelTable,
    t: f64,
) -> Result<f64> {
    let mut v = 0.0;
    for j in 0..model.params.m {
        v += branch_nonlinearity(branch_drive(pattern, &model.conn, j, t, table)?, &model.params);
    }
    Ok(v)
}

/// Full somatic voltage series on the grid.
pub fn membrane_series(
    pattern: &SpikePattern,
    model: &NnldModel,
    table: &KernelTable,
    grid: &SimGrid,
) -> Result<Vec<f64>> {
    check_grid(table, grid)?;
    if pattern.afferent_count() != model.conn.d {
        return Err(Error::invalid_param(format!(
            "pattern has {} afferents, model expects d={}",
            pattern.afferent_count(),
            model.conn.d
        )));
    }
    let n = grid.len();
    let mut v = vec![0.0; n];
    let mut drive = vec![0.0; n];
    for slots in &model.conn.slots {
        drive.iter_mut().for_each(|x| *x = 0.0);
        for &aff in slots {
            accumulate_psp(&mut drive, &pattern.spikes[aff], table);
        }
        for (vt, &dv) in v.iter_mut().zip(drive.iter()) {
            *vt += branch_nonlinearity(dv, &model.params);
        }
    }
    Ok(v)
}

/// Earliest argmax of a voltage series.
#[inline]
pub(crate) fn scan_peak(series: &[f64]) -> (f64, usize) {
    let mut v_max = f64::NEG_INFINITY;
    let mut idx = 0;
    for (i, &v) in series.iter().enumerate() {
        if v > v_max {
            v_max = v;
            idx = i;
        }
    }
    (v_max, idx)
}

/// All branch drives at one grid index, recomputed from the spike lists in
/// slot order (bit-identical to the series accumulation).
pub(crate) fn branch_drives_at(
    pattern: &SpikePattern,
    conn: &ConnectionMap,
    t_idx: usize,
    table: &KernelTable,
) -> Vec<f64> {
    conn.slots
        .iter()
        .map(|slots| {
            let mut acc = 0.0;
            for &aff in slots {
                acc += psp_at(&pattern.spikes[aff], t_idx, table);
            }
            acc
        })
        .collect()
}

/// Scan the grid, extract the voltage peak and classify against `v_thr`.
pub fn eval_pattern(
    pattern: &SpikePattern,
    model: &NnldModel,
    table: &KernelTable,
    grid: &SimGrid,
) -> Result<EvalResult> {
    let series = membrane_series(pattern, model, table, grid)?;
    let (v_max, t_max_idx) = scan_peak(&series);
    Ok(EvalResult {
        v_max,
        t_max: grid.time(t_max_idx),
        t_max_idx,
        branch_drives_at_tmax: branch_drives_at(pattern, &model.conn, t_max_idx, table),
        predicted: EvalResult::classify(v_max, model.v_thr),
    })
}
