//! Spike-pattern data model, benchmark generators and JSON-lines serialization.
//!
//! Two synthetic benchmarks are provided: random single-spike latency patterns
//! (class labels carry no structure, a pure memorization task) and pairwise
//! synchrony patterns (class identity lives only in which afferents fire
//! together). Spike times are kept real-valued; snapping to a simulation grid
//! happens at evaluation time.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary class tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Label {
    pub fn is_plus(self) -> bool {
        matches!(self, Label::Plus)
    }
}

/// One spatiotemporal spike pattern: `d` afferents, each a sorted list of
/// spike times in ms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikePattern {
    pub id: u64,
    pub label: Label,
    pub spikes: Vec<Vec<f64>>,
}

impl SpikePattern {
    pub fn afferent_count(&self) -> usize {
        self.spikes.len()
    }

    pub fn total_spikes(&self) -> usize {
        self.spikes.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Latency,
    Synchrony,
    Encoded,
}

/// A perfect matching of the afferents, stored as unordered index pairs.
pub type Pairing = Vec<(usize, usize)>;

/// A labelled set of spike patterns plus the generating geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub d: usize,
    /// Pattern duration T in ms.
    pub duration: f64,
    pub task: TaskKind,
    /// Synchrony task only: the per-class afferent pairings `[P+, P-]`.
    pub pairings: Option<[Pairing; 2]>,
    pub patterns: Vec<SpikePattern>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    d: usize,
    #[serde(rename = "T")]
    duration: f64,
    task: TaskKind,
    pairings: Option<[Pairing; 2]>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Structural checks: afferent counts match `d`, times finite, non-negative
    /// and sorted.
    pub fn validate(&self) -> Result<()> {
        for p in &self.patterns {
            if p.afferent_count() != self.d {
                return Err(Error::invalid_param(format!(
                    "pattern {} has {} afferents, dataset declares d={}",
                    p.id,
                    p.afferent_count(),
                    self.d
                )));
            }
            for times in &p.spikes {
                for w in times.windows(2) {
                    if w[0] > w[1] {
                        return Err(Error::invalid_param(format!(
                            "pattern {} has unsorted spike times",
                            p.id
                        )));
                    }
                }
                if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
                    return Err(Error::invalid_param(format!(
                        "pattern {} has a non-finite or negative spike time",
                        p.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_jsonl(&mut w)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        let f = File::open(path)?;
        Self::read_jsonl(BufReader::new(f))
    }

    /// One JSON object per line: a header, then one line per pattern.
    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        let header = Header {
            d: self.d,
            duration: self.duration,
            task: self.task,
            pairings: self.pairings.clone(),
        };
        serde_json::to_writer(&mut *w, &header)?;
        w.write_all(b"\n")?;
        for p in &self.patterns {
            serde_json::to_writer(&mut *w, p)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(r: impl Read) -> Result<Dataset> {
        let mut lines = BufReader::new(r).lines().enumerate();
        let header: Header = match lines.next() {
            None => return Err(Error::format(1, "empty file, expected header line")),
            Some((_, line)) => {
                let line = line?;
                serde_json::from_str(&line)
                    .map_err(|e| Error::format(1, format!("bad header: {e}")))?
            }
        };
        let mut patterns = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let p: SpikePattern = serde_json::from_str(&line)
                .map_err(|e| Error::format(idx + 1, format!("bad pattern: {e}")))?;
            if p.afferent_count() != header.d {
                return Err(Error::format(
                    idx + 1,
                    format!(
                        "pattern has {} afferents, header declares d={}",
                        p.afferent_count(),
                        header.d
                    ),
                ));
            }
            patterns.push(p);
        }
        let ds = Dataset {
            d: header.d,
            duration: header.duration,
            task: header.task,
            pairings: header.pairings,
            patterns,
        };
        ds.validate()
            .map_err(|e| Error::format(0, format!("invalid dataset: {e}")))?;
        Ok(ds)
    }
}

fn check_gen_args(p: usize, d: usize, duration: f64) -> Result<()> {
    if p == 0 || d == 0 {
        return Err(Error::invalid_param(format!(
            "pattern and afferent counts must be >= 1, got P={p} d={d}"
        )));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::invalid_param(format!("duration must be > 0, got {duration}")));
    }
    Ok(())
}

fn draw_labels(rng: &mut ChaCha8Rng, p: usize, exact_split: bool) -> Vec<Label> {
    if exact_split {
        let mut labels: Vec<Label> = (0..p)
            .map(|i| if i < p / 2 { Label::Plus } else { Label::Minus })
            .collect();
        labels.shuffle(rng);
        labels
    } else {
        (0..p)
            .map(|_| if rng.gen_bool(0.5) { Label::Plus } else { Label::Minus })
            .collect()
    }
}

/// Random latency task: every afferent fires exactly once at a time drawn
/// uniformly from `[1, T]`; labels are independent fair coin flips.
pub fn gen_latency(p: usize, d: usize, duration: f64, seed: u64) -> Result<Dataset> {
    gen_latency_opts(p, d, duration, seed, false)
}

/// As [`gen_latency`], with an optional exact 50/50 label split.
pub fn gen_latency_opts(
    p: usize,
    d: usize,
    duration: f64,
    seed: u64,
    exact_split: bool,
) -> Result<Dataset> {
    check_gen_args(p, d, duration)?;
    if duration < 1.0 {
        return Err(Error::invalid_param(format!(
            "latency spike times are drawn from [1, T]; T must be >= 1, got {duration}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = draw_labels(&mut rng, p, exact_split);
    let patterns = labels
        .into_iter()
        .enumerate()
        .map(|(id, label)| SpikePattern {
            id: id as u64,
            label,
            spikes: (0..d).map(|_| vec![rng.gen_range(1.0..=duration)]).collect(),
        })
        .collect();
    Ok(Dataset {
        d,
        duration,
        task: TaskKind::Latency,
        pairings: None,
        patterns,
    })
}

fn random_matching(rng: &mut ChaCha8Rng, d: usize) -> Pairing {
    let mut idx: Vec<usize> = (0..d).collect();
    idx.shuffle(rng);
    idx.chunks(2).map(|c| (c[0].min(c[1]), c[0].max(c[1]))).collect()
}

fn matching_key(m: &Pairing) -> Vec<(usize, usize)> {
    let mut key = m.clone();
    key.sort_unstable();
    key
}

/// Pairwise synchrony task: one random perfect matching per class; afferents
/// in a pair fire a single shared spike at a uniform time in `[1, T]`.
pub fn gen_synchrony(p: usize, d: usize, duration: f64, seed: u64) -> Result<Dataset> {
    gen_synchrony_opts(p, d, duration, seed, false)
}

pub fn gen_synchrony_opts(
    p: usize,
    d: usize,
    duration: f64,
    seed: u64,
    exact_split: bool,
) -> Result<Dataset> {
    check_gen_args(p, d, duration)?;
    if !d.is_multiple_of(2) {
        return Err(Error::invalid_param(format!(
            "synchrony task needs an even afferent count, got d={d}"
        )));
    }
    if duration < 1.0 {
        return Err(Error::invalid_param(format!(
            "synchrony spike times are drawn from [1, T]; T must be >= 1, got {duration}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plus = random_matching(&mut rng, d);
    // Redraw until the two class matchings differ. With d = 2 only one
    // matching exists; accept equality there.
    let mut minus = random_matching(&mut rng, d);
    for _ in 0..16 {
        if matching_key(&minus) != matching_key(&plus) {
            break;
        }
        minus = random_matching(&mut rng, d);
    }
    let pairings = [plus, minus];

    let labels = draw_labels(&mut rng, p, exact_split);
    let patterns = labels
        .into_iter()
        .enumerate()
        .map(|(id, label)| {
            let matching = if label.is_plus() { &pairings[0] } else { &pairings[1] };
            let mut spikes = vec![Vec::new(); d];
            for &(a, b) in matching {
                let t = rng.gen_range(1.0..=duration);
                spikes[a].push(t);
                spikes[b].push(t);
            }
            SpikePattern {
                id: id as u64,
                label,
                spikes,
            }
        })
        .collect();
    Ok(Dataset {
        d,
        duration,
        task: TaskKind::Synchrony,
        pairings: Some(pairings),
        patterns,
    })
}
