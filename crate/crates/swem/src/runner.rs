//! Teacher-forced stream runners: the fixed-size SWEM memory and the
//! store-every-frame baseline, both producing a [`RunReport`].
//!
//! At frame `t` each object's memory (state after `t - 1`) is read with the
//! frame's keys, then frame `t` is memorized with its ground-truth mask.
//! Frame 0 only initializes. A pixel counts as correct when
//! `S[n, 0] >= 0.5` agrees with `mask[n] >= 0.5`.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use swem_core::{Class, FeatureMatrix, ObjectId, Session, SessionConfig, WeightMode};

use crate::error::{Error, Result};
use crate::format::StreamFile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Swem,
    StoreAll,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub k: usize,
    pub iterations: usize,
    pub top_l: usize,
    pub tau: f64,
    pub epsilon: f64,
    pub weight_mode: String,
}

impl From<&SessionConfig> for ConfigEcho {
    fn from(c: &SessionConfig) -> Self {
        Self {
            k: c.k,
            iterations: c.iterations,
            top_l: c.top_l,
            tau: c.kernel.tau,
            epsilon: c.kernel.epsilon,
            weight_mode: weight_mode_name(c.weight_mode).into(),
        }
    }
}

pub fn weight_mode_name(mode: WeightMode) -> &'static str {
    match mode {
        WeightMode::Fixed => "fixed",
        WeightMode::Adaptive => "adaptive",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectFrame {
    pub object: usize,
    /// `None` on the first frame, which has nothing to read.
    pub accuracy: Option<f64>,
    /// Rows held for this object after the frame was memorized.
    pub memory_rows: usize,
    /// Accumulated mass summaries (SWEM only).
    pub beta_fg_sum: Option<f64>,
    pub beta_bg_sum: Option<f64>,
    pub beta_fg_min: Option<f64>,
    pub beta_bg_min: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub wall_time_ms: f64,
    pub memory_rows: usize,
    pub objects: Vec<ObjectFrame>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub frames: usize,
    /// Mean over frames >= 1 and objects.
    pub mean_accuracy: Option<f64>,
    pub mean_frame_ms: f64,
    pub total_ms: f64,
    pub final_memory_rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub config: ConfigEcho,
    pub seed: u64,
    pub frames: Vec<FrameRecord>,
    pub totals: Totals,
}

impl RunReport {
    fn finish(method: Method, config: &SessionConfig, frames: Vec<FrameRecord>) -> Self {
        let accs: Vec<f64> = frames
            .iter()
            .flat_map(|f| f.objects.iter().filter_map(|o| o.accuracy))
            .collect();
        let total_ms: f64 = frames.iter().map(|f| f.wall_time_ms).sum();
        let totals = Totals {
            frames: frames.len(),
            mean_accuracy: (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64),
            mean_frame_ms: total_ms / frames.len().max(1) as f64,
            total_ms,
            final_memory_rows: frames.last().map_or(0, |f| f.memory_rows),
        };
        Self {
            method,
            config: config.into(),
            seed: config.seed,
            frames,
            totals,
        }
    }

    /// Per-frame accuracy of one object (frames without a read are skipped).
    pub fn accuracies(&self, object: usize) -> Vec<f64> {
        self.frames
            .iter()
            .filter_map(|f| f.objects.get(object).and_then(|o| o.accuracy))
            .collect()
    }

    pub fn frame_times_ms(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.wall_time_ms).collect()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }
}

/// One read made during a run, handed to observers.
pub struct ObservedRead<'a> {
    pub frame: usize,
    pub object: usize,
    /// `S[n, 0]` for every pixel.
    pub top1: &'a [f64],
    pub mask: &'a [f64],
}

fn accuracy(top1: &[f64], mask: &[f64]) -> f64 {
    let hits = top1
        .iter()
        .zip(mask)
        .filter(|(s, m)| (**s >= 0.5) == (**m >= 0.5))
        .count();
    hits as f64 / top1.len() as f64
}

fn require_masks(stream: &StreamFile) -> Result<()> {
    if stream.has_masks() {
        Ok(())
    } else {
        Err(Error::Config("stream has no masks to drive memorization".into()))
    }
}

pub fn run_session(stream: &StreamFile, config: &SessionConfig) -> Result<RunReport> {
    run_session_observed(stream, config, |_| {})
}

/// [`run_session`], calling `observe` after every read.
pub fn run_session_observed(
    stream: &StreamFile,
    config: &SessionConfig,
    mut observe: impl FnMut(ObservedRead<'_>),
) -> Result<RunReport> {
    require_masks(stream)?;
    let mut session = Session::new(*config)?;
    let mut records = Vec::with_capacity(stream.frame_count());
    for t in 0..stream.frame_count() {
        let keys = stream.keys(t)?;
        let values = stream.values(t)?;
        let masks = (0..stream.objects())
            .map(|o| stream.mask(t, o))
            .collect::<Result<Vec<_>>>()?;

        let start = Instant::now();
        let mut accs = Vec::with_capacity(masks.len());
        for (o, mask) in masks.iter().enumerate() {
            let id = ObjectId(o as u32);
            if t == 0 {
                session.init_object(id, &keys, &values, mask)?;
                accs.push(None);
            } else {
                let read = session.read(id, &keys)?;
                let top1: Vec<f64> = (0..keys.rows()).map(|n| read.affinity.get(n, 0)).collect();
                observe(ObservedRead {
                    frame: t,
                    object: o,
                    top1: &top1,
                    mask: mask.fg(),
                });
                accs.push(Some(accuracy(&top1, mask.fg())));
                session.memorize(id, &keys, &values, mask)?;
            }
        }
        let elapsed = start.elapsed().as_secs_f64() * 1e3;

        let mut objects = Vec::with_capacity(accs.len());
        for (o, acc) in accs.into_iter().enumerate() {
            let mem = session.object(ObjectId(o as u32)).expect("initialized");
            let fg = &mem.class(Class::Foreground).acc.beta;
            let bg = &mem.class(Class::Background).acc.beta;
            let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
            objects.push(ObjectFrame {
                object: o,
                accuracy: acc,
                memory_rows: mem.footprint().total_rows(),
                beta_fg_sum: Some(fg.iter().sum()),
                beta_bg_sum: Some(bg.iter().sum()),
                beta_fg_min: Some(min(fg)),
                beta_bg_min: Some(min(bg)),
            });
        }
        records.push(FrameRecord {
            frame: t,
            wall_time_ms: elapsed,
            memory_rows: objects.iter().map(|o| o.memory_rows).sum(),
            objects,
        });
    }
    Ok(RunReport::finish(Method::Swem, config, records))
}

/// Every past pixel kept as memory: unit-normalised keys, values, and a
/// foreground flag per object.
struct StoreAll {
    channels: usize,
    value_channels: usize,
    keys: Vec<f64>,
    values: Vec<f64>,
    fg: Vec<Vec<bool>>,
}

impl StoreAll {
    fn rows(&self) -> usize {
        self.keys.len() / self.channels
    }

    fn append(&mut self, keys: &FeatureMatrix, values: &FeatureMatrix, masks: &[Vec<f64>]) -> Result<()> {
        for (n, row) in keys.iter_rows().enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < swem_core::kernel::MIN_NORM {
                return Err(swem_core::Error::DegenerateInput { what: "feature", row: n }.into());
            }
            self.keys.extend(row.iter().map(|v| v / norm));
            self.values.extend_from_slice(values.row(n));
        }
        for (flags, mask) in self.fg.iter_mut().zip(masks) {
            flags.extend(mask.iter().map(|&m| m >= 0.5));
        }
        Ok(())
    }

    /// Top-1 affinity per pixel for `object`, plus the softmax value read over
    /// every stored row.
    fn read(&self, q: &FeatureMatrix, object: usize, tau: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let rows = self.rows();
        let c = self.channels;
        let mut top1 = Vec::with_capacity(q.rows());
        let mut vhat = vec![0.0; q.rows() * self.value_channels];
        let mut logits = vec![0.0; rows];
        for (n, qr) in q.iter_rows().enumerate() {
            let norm = qr.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < swem_core::kernel::MIN_NORM {
                return Err(swem_core::Error::DegenerateInput { what: "feature", row: n }.into());
            }
            let (mut best_fg, mut best_bg) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for (i, l) in logits.iter_mut().enumerate() {
                let k = &self.keys[i * c..(i + 1) * c];
                *l = qr.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() / (norm * tau);
                if self.fg[object][i] {
                    best_fg = best_fg.max(*l);
                } else {
                    best_bg = best_bg.max(*l);
                }
            }
            top1.push(match (best_fg.is_finite(), best_bg.is_finite()) {
                (true, true) => 1.0 / (1.0 + (best_bg - best_fg).exp()),
                (true, false) => 1.0,
                _ => 0.0,
            });
            let max = best_fg.max(best_bg);
            let mut sum = 0.0;
            let dst = &mut vhat[n * self.value_channels..(n + 1) * self.value_channels];
            for (i, &l) in logits.iter().enumerate() {
                let w = (l - max).exp();
                sum += w;
                let v = &self.values[i * self.value_channels..(i + 1) * self.value_channels];
                dst.iter_mut().zip(v).for_each(|(d, v)| *d += w * v);
            }
            dst.iter_mut().for_each(|d| *d /= sum);
        }
        Ok((top1, vhat))
    }
}

pub fn run_baseline_storeall(stream: &StreamFile, config: &SessionConfig) -> Result<RunReport> {
    run_baseline_observed(stream, config, |_| {})
}

/// [`run_baseline_storeall`], calling `observe` after every read.
pub fn run_baseline_observed(
    stream: &StreamFile,
    config: &SessionConfig,
    mut observe: impl FnMut(ObservedRead<'_>),
) -> Result<RunReport> {
    require_masks(stream)?;
    config.validate()?;
    let value_channels = if stream.has_values() {
        stream.value_channels()
    } else {
        stream.channels()
    };
    let mut memory = StoreAll {
        channels: stream.channels(),
        value_channels,
        keys: Vec::new(),
        values: Vec::new(),
        fg: vec![Vec::new(); stream.objects()],
    };
    let mut records = Vec::with_capacity(stream.frame_count());
    for t in 0..stream.frame_count() {
        let keys = stream.keys(t)?;
        let values = stream.values(t)?;
        let masks = (0..stream.objects())
            .map(|o| stream.mask(t, o).map(|m| m.fg().to_vec()))
            .collect::<Result<Vec<_>>>()?;

        let start = Instant::now();
        let mut accs = Vec::with_capacity(masks.len());
        for (o, mask) in masks.iter().enumerate() {
            if t == 0 {
                accs.push(None);
                continue;
            }
            let (top1, _values) = memory.read(&keys, o, config.kernel.tau)?;
            observe(ObservedRead {
                frame: t,
                object: o,
                top1: &top1,
                mask,
            });
            accs.push(Some(accuracy(&top1, mask)));
        }
        memory.append(&keys, &values, &masks)?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;

        let rows = memory.rows();
        let objects: Vec<ObjectFrame> = accs
            .into_iter()
            .enumerate()
            .map(|(o, accuracy)| ObjectFrame {
                object: o,
                accuracy,
                memory_rows: rows,
                beta_fg_sum: None,
                beta_bg_sum: None,
                beta_fg_min: None,
                beta_bg_min: None,
            })
            .collect();
        records.push(FrameRecord {
            frame: t,
            wall_time_ms: elapsed,
            memory_rows: objects.iter().map(|o| o.memory_rows).sum(),
            objects,
        });
    }
    Ok(RunReport::finish(Method::StoreAll, config, records))
}

/// Least-squares slope of `ys` against their index.
pub fn regression_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}
