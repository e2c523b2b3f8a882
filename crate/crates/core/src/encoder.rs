//! Analog-to-spike front end.
//!
//! Multi-channel analog recordings are thresholded to bit streams, and each
//! channel drives two leaky integrate-and-fire units: one on the stream
//! itself and one on its complement. High levels sustain spiking on the ON
//! afferent, low levels on the OFF afferent, so both signal transitions are
//! visible to a downstream classifier. A synthetic generator produces
//! indenter-contact recordings with class-dependent contact footprints.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write as IoWrite};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label, SpikePattern, TaskKind};
use crate::error::{Error, Result};

/// Default binarization threshold for analog samples.
pub const DEFAULT_BIN_THRESHOLD: f64 = 0.5;

/// Multi-channel analog recording sampled on a uniform clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogRecording {
    pub sample_period_ms: f64,
    /// One sample vector per channel; all channels share the clock.
    pub channels: Vec<Vec<f64>>,
}

impl AnalogRecording {
    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn sample_count(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn duration_ms(&self) -> f64 {
        self.sample_count() as f64 * self.sample_period_ms
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_period_ms > 0.0) || !self.sample_period_ms.is_finite() {
            return Err(Error::invalid_param(format!(
                "sample period must be > 0, got {}",
                self.sample_period_ms
            )));
        }
        if self.channels.is_empty() || self.sample_count() == 0 {
            return Err(Error::invalid_param("recording has no samples"));
        }
        let n = self.sample_count();
        for (c, ch) in self.channels.iter().enumerate() {
            if ch.len() != n {
                return Err(Error::invalid_param(format!(
                    "channel {c} has {} samples, channel 0 has {n}",
                    ch.len()
                )));
            }
            if ch.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid_param(format!("channel {c} has non-finite samples")));
            }
        }
        Ok(())
    }

    /// CSV layout: a `sample_period_ms,<value>` header row, then one row per
    /// sample with one column per channel.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "sample_period_ms,{}", self.sample_period_ms)?;
        for s in 0..self.sample_count() {
            let row: Vec<String> = self.channels.iter().map(|ch| ch[s].to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let mut lines = r.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::format(1, "empty recording file"))?;
        let header = header?;
        let period = header
            .strip_prefix("sample_period_ms,")
            .ok_or_else(|| Error::format(1, "expected a sample_period_ms header row"))?
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::format(1, format!("bad sample period: {e}")))?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::format(idx + 1, format!("bad sample: {e}")))?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(Error::format(
                        idx + 1,
                        format!("row has {} columns, first row has {}", row.len(), first.len()),
                    ));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::format(1, "recording has no sample rows"));
        }
        let c = rows[0].len();
        let channels = (0..c)
            .map(|ch| rows.iter().map(|row| row[ch]).collect())
            .collect();
        let rec = AnalogRecording { sample_period_ms: period, channels };
        rec.validate()?;
        Ok(rec)
    }
}

/// Threshold every sample: at or above `threshold` reads as high.
pub fn binarize(recording: &AnalogRecording, threshold: f64) -> Vec<Vec<bool>> {
    recording
        .channels
        .iter()
        .map(|ch| ch.iter().map(|&v| v >= threshold).collect())
        .collect()
}

/// Complement of one bit stream.
pub fn invert(bits: &[bool]) -> Vec<bool> {
    bits.iter().map(|b| !b).collect()
}

/// Discrete leaky integrate-and-fire unit driven by a bit stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifParams {
    /// Leak time constant (ms).
    pub leak: f64,
    /// Added to the state per high input sample.
    pub gain: f64,
    pub threshold: f64,
    /// State value after a spike.
    pub reset: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        LifParams { leak: 20.0, gain: 0.06, threshold: 1.0, reset: 0.1 }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.leak > 0.0) || !self.leak.is_finite() {
            return Err(Error::invalid_param(format!("leak must be > 0, got {}", self.leak)));
        }
        if !(self.gain > 0.0) || !self.gain.is_finite() {
            return Err(Error::invalid_param(format!("gain must be > 0, got {}", self.gain)));
        }
        if !(self.threshold > 0.0) || !self.threshold.is_finite() {
            return Err(Error::invalid_param(format!(
                "threshold must be > 0, got {}",
                self.threshold
            )));
        }
        if !self.reset.is_finite() || self.reset < 0.0 || self.reset >= self.threshold {
            return Err(Error::invalid_param(format!(
                "reset must lie in [0, threshold), got {}",
                self.reset
            )));
        }
        Ok(())
    }
}

/// Run the LIF over a bit stream. The state decays by `exp(-dt/leak)` per
/// sample, gains `gain` on high bits, and a spike at sample `i` is stamped
/// `i * sample_period_ms`. The state starts at zero.
pub fn lif_encode(bits: &[bool], params: &LifParams, sample_period_ms: f64) -> Vec<f64> {
    let decay = (-sample_period_ms / params.leak).exp();
    let mut state = 0.0;
    let mut spikes = Vec::new();
    for (i, &bit) in bits.iter().enumerate() {
        state *= decay;
        if bit {
            state += params.gain;
        }
        if state >= params.threshold {
            spikes.push(i as f64 * sample_period_ms);
            state = params.reset;
        }
    }
    spikes
}

/// Encode a recording into `2c` spike trains: afferents `[0, c)` are ON
/// units on the thresholded channels, afferents `[c, 2c)` are OFF units on
/// their complements.
pub fn encode_recording(
    recording: &AnalogRecording,
    lif: &LifParams,
    bin_threshold: f64,
) -> Result<Vec<Vec<f64>>> {
    recording.validate()?;
    lif.validate()?;
    let bits = binarize(recording, bin_threshold);
    let dt = recording.sample_period_ms;
    let mut spikes = Vec::with_capacity(2 * bits.len());
    for ch in &bits {
        spikes.push(lif_encode(ch, lif, dt));
    }
    for ch in &bits {
        spikes.push(lif_encode(&invert(ch), lif, dt));
    }
    Ok(spikes)
}

/// Contact footprint class of the synthetic indenter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndenterKind {
    Small,
    Large,
}

/// Synthetic tactile recording geometry.
pub const TACTILE_CHANNELS: usize = 65;
pub const TACTILE_SAMPLES: usize = 500;

/// Synthetic indenter-contact recording: 65 taxel channels, 500 samples at
/// 1 ms. Channels within the contact radius of a random center carry a high
/// plateau between jittered onset and offset; the footprint radius is the
/// class difference. Idle channels see sparse high-level blips.
pub fn synth_tactile(kind: IndenterKind, seed: u64) -> AnalogRecording {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius: isize = match kind {
        IndenterKind::Small => 6,
        IndenterKind::Large => 14,
    };
    let center = rng.gen_range(0..TACTILE_CHANNELS as isize);
    let onset = rng.gen_range(50..=150usize);
    let offset = rng.gen_range(350..=450usize);
    let channels = (0..TACTILE_CHANNELS as isize)
        .map(|c| {
            let active = (c - center).abs() <= radius;
            let ch_onset = (onset as isize + rng.gen_range(-10..=10)).max(0) as usize;
            let ch_offset = (offset as isize + rng.gen_range(-10..=10)) as usize;
            (0..TACTILE_SAMPLES)
                .map(|s| {
                    if active && s >= ch_onset && s < ch_offset {
                        0.9 + 0.1 * rng.gen::<f64>()
                    } else if rng.gen_bool(0.002) {
                        0.7
                    } else {
                        0.05 * rng.gen::<f64>()
                    }
                })
                .collect()
        })
        .collect();
    AnalogRecording { sample_period_ms: 1.0, channels }
}

/// A labeled synthetic encoded task: half large-indenter contacts (targets),
/// half small, shuffled, each encoded to `2 * 65 = 130` afferents.
pub fn gen_encoded(p: usize, seed: u64) -> Result<Dataset> {
    gen_encoded_opts(p, seed, &LifParams::default(), DEFAULT_BIN_THRESHOLD)
}

pub fn gen_encoded_opts(
    p: usize,
    seed: u64,
    lif: &LifParams,
    bin_threshold: f64,
) -> Result<Dataset> {
    if p == 0 {
        return Err(Error::invalid_param("pattern count must be >= 1"));
    }
    lif.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kinds: Vec<IndenterKind> = (0..p)
        .map(|i| if i < p / 2 { IndenterKind::Large } else { IndenterKind::Small })
        .collect();
    use rand::seq::SliceRandom;
    kinds.shuffle(&mut rng);
    let mut duration = 0.0f64;
    let patterns = kinds
        .iter()
        .enumerate()
        .map(|(id, &kind)| {
            let rec = synth_tactile(kind, rng.gen());
            duration = duration.max(rec.duration_ms());
            let spikes = encode_recording(&rec, lif, bin_threshold)?;
            Ok(SpikePattern {
                id: id as u64,
                label: if kind == IndenterKind::Large { Label::Plus } else { Label::Minus },
                spikes,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let data = Dataset {
        d: 2 * TACTILE_CHANNELS,
        duration,
        task: TaskKind::Encoded,
        pairings: None,
        patterns,
    };
    data.validate()?;
    Ok(data)
}
