//! Configuration sweeps over one stream: accuracy, per-frame time and
//! footprint per configuration, written as CSV and JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use swem_core::{KernelParams, SessionConfig, WeightMode};

use crate::error::{Error, Result};
use crate::format::StreamFile;
use crate::runner::{run_session, weight_mode_name};

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub ks: Vec<usize>,
    pub iterations: Vec<usize>,
    pub top_ls: Vec<usize>,
    pub taus: Vec<f64>,
    pub weight_modes: Vec<WeightMode>,
    pub seed: u64,
    /// Runs per configuration; the fastest median frame time is kept.
    pub repeats: usize,
}

impl Sweep {
    /// Cartesian product in (K, R, L, tau, mode) order. `L` is clamped to
    /// `K` so that a single L list can be swept across small K.
    pub fn configs(&self) -> Result<Vec<SessionConfig>> {
        let mut out = Vec::new();
        for &k in &self.ks {
            for &iterations in &self.iterations {
                for &l in &self.top_ls {
                    for &tau in &self.taus {
                        for &weight_mode in &self.weight_modes {
                            let cfg = SessionConfig {
                                k,
                                iterations,
                                top_l: l.min(k),
                                kernel: KernelParams::with_tau(tau)?,
                                weight_mode,
                                seed: self.seed,
                            };
                            cfg.validate()?;
                            out.push(cfg);
                        }
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config("empty sweep".into()));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub k: usize,
    pub iterations: usize,
    pub top_l: usize,
    pub tau: f64,
    pub weight_mode: String,
    pub mean_accuracy: f64,
    /// Median per-frame wall time over frames >= 1 (min over repeats).
    pub median_frame_ms: f64,
    pub mean_frame_ms: f64,
    pub memory_rows_per_object: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seed: u64,
    pub frames: usize,
    pub pixels: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

pub fn bench(stream: &StreamFile, sweep: &Sweep) -> Result<BenchReport> {
    let mut rows = Vec::new();
    for cfg in sweep.configs()? {
        let mut best_median = f64::INFINITY;
        let mut best_mean = f64::INFINITY;
        let mut accuracy = 0.0;
        let mut footprint = 0;
        for _ in 0..sweep.repeats.max(1) {
            let report = run_session(stream, &cfg)?;
            let mut times: Vec<f64> = report.frames.iter().skip(1).map(|f| f.wall_time_ms).collect();
            if times.is_empty() {
                times = report.frame_times_ms();
            }
            let mean = times.iter().sum::<f64>() / times.len() as f64;
            best_median = best_median.min(median(&mut times));
            best_mean = best_mean.min(mean);
            accuracy = report.totals.mean_accuracy.unwrap_or(0.0);
            footprint = report.frames.last().map_or(0, |f| f.objects[0].memory_rows);
        }
        rows.push(BenchRow {
            k: cfg.k,
            iterations: cfg.iterations,
            top_l: cfg.top_l,
            tau: cfg.kernel.tau,
            weight_mode: weight_mode_name(cfg.weight_mode).into(),
            mean_accuracy: accuracy,
            median_frame_ms: best_median,
            mean_frame_ms: best_mean,
            memory_rows_per_object: footprint,
        });
    }
    Ok(BenchReport {
        seed: sweep.seed,
        frames: stream.frame_count(),
        pixels: stream.pixels(),
        rows,
    })
}
