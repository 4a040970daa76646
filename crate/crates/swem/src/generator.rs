//! Synthetic feature streams: pixels drawn around slowly drifting cluster
//! centres, with ground-truth masks.
//!
//! Every pixel keeps its class and cluster for the whole stream (a static
//! scene); only the centres drift and the per-frame noise changes. Centres
//! share a common direction so that their pairwise cosine is
//! `center_cosine` (exactly when `C` is large enough to orthogonalise them).
//! An optional hard region places a fraction of each object's foreground
//! pixels around a centre blended toward the background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{Frame, StreamFile};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub frames: usize,
    pub pixels: usize,
    pub channels: usize,
    /// `C'`; zero writes a keys-only stream.
    pub value_channels: usize,
    pub objects: usize,
    pub fg_clusters: usize,
    pub bg_clusters: usize,
    /// Expected share of pixels belonging to some object.
    pub fg_fraction: f64,
    /// Norm of every cluster centre.
    pub radius: f64,
    /// Per-coordinate standard deviation of pixel noise.
    pub noise: f64,
    /// Cosine between any two centres.
    pub center_cosine: f64,
    /// Per-frame random-walk step of each centre, relative to `radius`.
    pub drift: f64,
    /// Share of each object's pixels assigned to its hard region.
    pub hard_fraction: f64,
    /// Position of the hard centre between the object's first centre (0)
    /// and the first background centre (1).
    pub hard_blend: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            frames: 50,
            pixels: 256,
            channels: 16,
            value_channels: 8,
            objects: 1,
            fg_clusters: 2,
            bg_clusters: 2,
            fg_fraction: 0.5,
            radius: 8.0,
            noise: 1.0,
            center_cosine: 0.0,
            drift: 0.0,
            hard_fraction: 0.0,
            hard_blend: 0.6,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.frames == 0 || self.pixels == 0 || self.channels == 0 {
            return fail("frames, pixels and channels must be positive");
        }
        if self.objects == 0 || self.fg_clusters == 0 || self.bg_clusters == 0 {
            return fail("objects and cluster counts must be positive");
        }
        if !(0.0..=1.0).contains(&self.fg_fraction) || !(0.0..=1.0).contains(&self.hard_fraction) {
            return fail("fractions must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.hard_blend) {
            return fail("hard_blend must lie in [0, 1]");
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return fail("radius must be positive");
        }
        if !(self.noise.is_finite() && self.noise >= 0.0 && self.drift.is_finite() && self.drift >= 0.0) {
            return fail("noise and drift must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.center_cosine) {
            return fail("center_cosine must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Where a pixel's features come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelLabel {
    /// Owning object, `None` for background.
    pub object: Option<usize>,
    /// Cluster index within the object's foreground (or the background).
    pub cluster: usize,
    /// Drawn around the object's hard centre instead of `cluster`.
    pub hard: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticStream {
    pub stream: StreamFile,
    pub labels: Vec<PixelLabel>,
}

pub fn generate_stream(config: &GeneratorConfig) -> Result<StreamFile> {
    Ok(generate(config)?.stream)
}

pub fn generate(config: &GeneratorConfig) -> Result<SyntheticStream> {
    config.validate()?;
    let c = config.channels;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let n_fg = config.objects * config.fg_clusters;
    let mut centers = initial_centers(n_fg + config.bg_clusters, config, &mut rng);

    let labels: Vec<PixelLabel> = (0..config.pixels)
        .map(|_| {
            if rng.random::<f64>() < config.fg_fraction {
                PixelLabel {
                    object: Some(rng.random_range(0..config.objects)),
                    cluster: rng.random_range(0..config.fg_clusters),
                    hard: rng.random::<f64>() < config.hard_fraction,
                }
            } else {
                PixelLabel {
                    object: None,
                    cluster: rng.random_range(0..config.bg_clusters),
                    hard: false,
                }
            }
        })
        .collect();

    let projection: Vec<f64> = (0..config.value_channels * c)
        .map(|_| rng.sample::<f64, _>(StandardNormal) / (c as f64).sqrt())
        .collect();

    let mut frames = Vec::with_capacity(config.frames);
    for t in 0..config.frames {
        if t > 0 && config.drift > 0.0 {
            for ctr in &mut centers {
                let step = config.drift * config.radius / (c as f64).sqrt();
                for v in ctr.iter_mut() {
                    *v += step * rng.sample::<f64, _>(StandardNormal);
                }
                rescale(ctr, config.radius);
            }
        }
        let hard_centers: Vec<Vec<f64>> = (0..config.objects)
            .map(|o| {
                let f = &centers[o * config.fg_clusters];
                let b = &centers[n_fg];
                let mut h: Vec<f64> = f
                    .iter()
                    .zip(b)
                    .map(|(f, b)| (1.0 - config.hard_blend) * f + config.hard_blend * b)
                    .collect();
                rescale(&mut h, config.radius);
                h
            })
            .collect();

        let mut keys = Vec::with_capacity(config.pixels * c);
        let mut values = Vec::with_capacity(config.pixels * config.value_channels);
        let mut row = vec![0.0; c];
        for label in &labels {
            let center = match label.object {
                Some(o) if label.hard => &hard_centers[o],
                Some(o) => &centers[o * config.fg_clusters + label.cluster],
                None => &centers[n_fg + label.cluster],
            };
            for (r, &m) in row.iter_mut().zip(center) {
                *r = m + if config.noise > 0.0 {
                    config.noise * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
            }
            keys.extend(row.iter().map(|&v| v as f32));
            for j in 0..config.value_channels {
                let p = &projection[j * c..(j + 1) * c];
                values.push(p.iter().zip(&row).map(|(a, b)| a * b).sum::<f64>() as f32);
            }
        }
        let masks = (0..config.objects)
            .map(|o| {
                labels
                    .iter()
                    .map(|l| if l.object == Some(o) { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        frames.push(Frame {
            keys,
            values: (config.value_channels > 0).then_some(values),
            masks,
        });
    }
    let stream = StreamFile::new(
        config.pixels,
        c,
        config.value_channels,
        config.objects,
        frames,
    )?;
    Ok(SyntheticStream { stream, labels })
}

/// `count` centres of norm `radius` with pairwise cosine `center_cosine`:
/// a shared unit direction plus mutually orthogonal unique directions.
fn initial_centers(count: usize, config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let c = config.channels;
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(count + 1);
    for _ in 0..=count {
        let mut v: Vec<f64> = (0..c).map(|_| rng.sample(StandardNormal)).collect();
        // Gram-Schmidt while there is room; past C directions stay random
        if dirs.len() < c {
            for d in &dirs {
                let p: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(d).for_each(|(a, b)| *a -= p * b);
            }
        }
        rescale(&mut v, 1.0);
        dirs.push(v);
    }
    let shared = config.center_cosine.sqrt();
    let own = (1.0 - config.center_cosine).sqrt();
    dirs[1..]
        .iter()
        .map(|u| {
            dirs[0]
                .iter()
                .zip(u)
                .map(|(s, u)| config.radius * (shared * s + own * u))
                .collect()
        })
        .collect()
}

fn rescale(v: &mut [f64], norm: f64) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x *= norm / n);
    }
}
