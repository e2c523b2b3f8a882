//! Normalized double-exponential post-synaptic potential kernel.
//!
//! The kernel is `V0 * (exp(-lag/tau) - exp(-lag/tau_s))` for `lag >= 0` and
//! zero for negative lags. `V0` is chosen so the peak value is exactly 1,
//! which keeps membrane voltages comparable across time-constant choices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ratio `tau / tau_s` used by the default constructor.
pub const DEFAULT_TAU_RATIO: f64 = 4.0;

/// Kernel horizon used by [`KernelTable::with_default_horizon`], in units of `tau`.
/// Beyond ~7 tau the kernel has decayed to the 1e-3 scale and is treated as zero.
pub const TABLE_HORIZON_TAUS: f64 = 7.0;

/// Time constants and normalization of the PSP kernel.
///
/// Deserialization accepts `tau` plus an optional `tau_s` and recomputes the
/// normalization, so config files cannot supply an inconsistent `v0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelParamsSpec")]
pub struct KernelParams {
    /// Membrane integration decay time constant (ms).
    pub tau: f64,
    /// Synaptic current decay time constant (ms).
    pub tau_s: f64,
    /// Normalization scalar making the kernel peak equal 1.
    pub v0: f64,
}

#[derive(Deserialize)]
struct KernelParamsSpec {
    tau: f64,
    tau_s: Option<f64>,
}

impl TryFrom<KernelParamsSpec> for KernelParams {
    type Error = Error;

    fn try_from(spec: KernelParamsSpec) -> Result<Self> {
        match spec.tau_s {
            Some(tau_s) => KernelParams::new(spec.tau, tau_s),
            None => KernelParams::with_tau(spec.tau),
        }
    }
}

impl KernelParams {
    /// Build params from both time constants, computing the normalization.
    pub fn new(tau: f64, tau_s: f64) -> Result<Self> {
        let v0 = normalization_v0(tau, tau_s)?;
        Ok(KernelParams { tau, tau_s, v0 })
    }

    /// Build params with the default ratio `tau_s = tau / 4`.
    pub fn with_tau(tau: f64) -> Result<Self> {
        Self::new(tau, tau / DEFAULT_TAU_RATIO)
    }

    /// Lag at which the kernel attains its maximum:
    /// `t* = tau*tau_s/(tau - tau_s) * ln(tau/tau_s)`.
    pub fn peak_lag(&self) -> f64 {
        peak_lag(self.tau, self.tau_s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_s > 0.0) || !(self.tau > self.tau_s) {
            return Err(Error::invalid_param(format!(
                "kernel requires tau > tau_s > 0, got tau={} tau_s={}",
                self.tau, self.tau_s
            )));
        }
        if !(self.v0 > 0.0) || !self.v0.is_finite() {
            return Err(Error::invalid_param(format!(
                "kernel normalization must be positive and finite, got v0={}",
                self.v0
            )));
        }
        Ok(())
    }
}

/// Analytic lag of the kernel maximum.
pub fn peak_lag(tau: f64, tau_s: f64) -> f64 {
    (tau * tau_s / (tau - tau_s)) * (tau / tau_s).ln()
}

/// Normalization scalar such that the peak kernel value equals 1.
pub fn normalization_v0(tau: f64, tau_s: f64) -> Result<f64> {
    if !(tau_s > 0.0) || !(tau > tau_s) {
        return Err(Error::invalid_param(format!(
            "normalization requires tau > tau_s > 0, got tau={tau} tau_s={tau_s}"
        )));
    }
    let t_star = peak_lag(tau, tau_s);
    Ok(1.0 / ((-t_star / tau).exp() - (-t_star / tau_s).exp()))
}

/// Kernel value at the given lag (ms). Zero for negative lags.
pub fn kernel_value(lag: f64, params: &KernelParams) -> f64 {
    if lag < 0.0 {
        return 0.0;
    }
    params.v0 * ((-lag / params.tau).exp() - (-lag / params.tau_s).exp())
}

/// Kernel values precomputed on a uniform lag grid.
///
/// Immutable after construction; shared read-only across workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTable {
    /// Grid step (ms).
    pub dt: f64,
    /// Maximum tabulated lag (ms). Lookups beyond it return 0.
    pub horizon: f64,
    /// `values[i]` is the kernel at lag `i * dt`.
    pub values: Vec<f64>,
}

impl KernelTable {
    pub fn build(params: &KernelParams, dt: f64, horizon: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid_param(format!("table dt must be > 0, got {dt}")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid_param(format!(
                "table horizon must be > 0, got {horizon}"
            )));
        }
        let n = (horizon / dt).floor() as usize + 1;
        let values = (0..n).map(|i| kernel_value(i as f64 * dt, params)).collect();
        Ok(KernelTable { dt, horizon, values })
    }

    /// Build with the default horizon of [`TABLE_HORIZON_TAUS`] membrane time constants.
    pub fn with_default_horizon(params: &KernelParams, dt: f64) -> Result<Self> {
        Self::build(params, dt, TABLE_HORIZON_TAUS * params.tau)
    }

    /// Number of tabulated lags.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value by lag index; zero outside the tabulated range.
    #[inline]
    pub fn value_at_index(&self, lag_idx: isize) -> f64 {
        if lag_idx < 0 || lag_idx as usize >= self.values.len() {
            0.0
        } else {
            self.values[lag_idx as usize]
        }
    }

    /// Value at an arbitrary lag (ms), snapped to the nearest grid index.
    #[inline]
    pub fn lookup(&self, lag: f64) -> f64 {
        if lag < 0.0 || lag > self.horizon {
            return 0.0;
        }
        self.value_at_index((lag / self.dt).round() as isize)
    }

    /// Grid index of a time stamp (nearest point).
    #[inline]
    pub fn snap(&self, t: f64) -> isize {
        (t / self.dt).round() as isize
    }
}
