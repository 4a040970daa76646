//! Inter- and intra-frame cosine-similarity statistics of raw features and
//! of per-frame EM bases.
//!
//! Inter-frame: for every pixel of frame `t`, its best cosine against all
//! pixels (or all bases) of frame `t - 1`. Intra-frame: cosine of every
//! unordered pixel pair of a frame, either of the raw features or of their
//! low-rank reconstruction `Z · M`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use swem_core::init::{bases_from_draws, draw_pixels};
use swem_core::kernel::cosine_rows;
use swem_core::{fit_bases, BasisSet, Class, FeatureMatrix, KernelParams, Matrix};

use crate::error::{Error, Result};
use crate::format::StreamFile;

pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.3, 0.6, 0.7, 0.9];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    /// Equal-width bins over `[-1, 1]`.
    pub bins: usize,
    pub thresholds: Vec<f64>,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            bins: 20,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFraction {
    pub threshold: f64,
    /// Values strictly above the threshold.
    pub count: u64,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
    pub fraction_above: Vec<ThresholdFraction>,
    /// Number of sampled pairs when built from a pair subsample.
    pub sampled_pairs: Option<u64>,
}

impl SimilarityHistogram {
    pub fn new(spec: &HistogramSpec) -> Result<Self> {
        if spec.bins == 0 {
            return Err(Error::Config("histogram needs at least one bin".into()));
        }
        let mut thresholds = spec.thresholds.clone();
        thresholds.sort_by(f64::total_cmp);
        let b = spec.bins as f64;
        Ok(Self {
            // (2i - bins) / bins keeps decimal edges such as 0.3 exact
            bin_edges: (0..=spec.bins).map(|i| (2.0 * i as f64 - b) / b).collect(),
            counts: vec![0; spec.bins],
            total: 0,
            fraction_above: thresholds
                .into_iter()
                .map(|threshold| ThresholdFraction {
                    threshold,
                    count: 0,
                    fraction: 0.0,
                })
                .collect(),
            sampled_pairs: None,
        })
    }

    pub fn from_values(spec: &HistogramSpec, values: &[f64]) -> Result<Self> {
        let mut h = Self::new(spec)?;
        h.extend(values);
        Ok(h)
    }

    pub fn extend(&mut self, values: &[f64]) {
        for &v in values {
            self.push(v);
        }
        self.refresh();
    }

    fn push(&mut self, v: f64) {
        let v = v.clamp(-1.0, 1.0);
        let bins = self.counts.len();
        // bins are [e_i, e_{i+1}); the last one also takes 1.0
        let i = self.bin_edges.partition_point(|&e| e <= v).clamp(1, bins) - 1;
        self.counts[i] += 1;
        self.total += 1;
        for t in &mut self.fraction_above {
            if v > t.threshold {
                t.count += 1;
            }
        }
    }

    fn refresh(&mut self) {
        for t in &mut self.fraction_above {
            t.fraction = if self.total == 0 {
                0.0
            } else {
                t.count as f64 / self.total as f64
            };
        }
    }

    pub fn fraction_above(&self, threshold: f64) -> Option<f64> {
        self.fraction_above
            .iter()
            .find(|t| t.threshold == threshold)
            .map(|t| t.fraction)
    }

    /// Adds `other`'s counts; both must share bins and thresholds.
    pub fn merge(&mut self, other: &SimilarityHistogram) -> Result<()> {
        let same_thresholds = self
            .fraction_above
            .iter()
            .map(|t| t.threshold)
            .eq(other.fraction_above.iter().map(|t| t.threshold));
        if self.bin_edges != other.bin_edges || !same_thresholds {
            return Err(Error::Config("merging histograms with different layouts".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        for (a, b) in self.fraction_above.iter_mut().zip(&other.fraction_above) {
            a.count += b.count;
        }
        self.sampled_pairs = match (self.sampled_pairs, other.sampled_pairs) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(0) + b.unwrap_or(0)),
        };
        self.refresh();
        Ok(())
    }
}

/// For each row of `curr`, its largest cosine against the rows of `prev`.
pub fn inter_frame_max_similarity(prev: &Matrix, curr: &Matrix) -> Result<Vec<f64>> {
    let cos = cosine_rows(curr, prev)?;
    Ok(cos
        .iter_rows()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSampling {
    /// All `N (N - 1) / 2` pairs.
    Exhaustive,
    /// `pairs` unordered pairs drawn uniformly with replacement.
    Sampled { pairs: usize, seed: u64 },
}

/// Cosine of every unordered pair of rows (or of a seeded pair subsample).
pub fn pair_similarities(x: &Matrix, sampling: PairSampling) -> Result<Vec<f64>> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::Config("pairwise statistics need at least two rows".into()));
    }
    match sampling {
        PairSampling::Exhaustive => {
            let cos = cosine_rows(x, x)?;
            let mut out = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                out.extend_from_slice(&cos.row(i)[i + 1..]);
            }
            Ok(out)
        }
        PairSampling::Sampled { pairs, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..pairs)
                .map(|_| {
                    let i = rng.random_range(0..n);
                    let mut j = rng.random_range(0..n - 1);
                    if j >= i {
                        j += 1;
                    }
                    Ok(swem_core::cosine(x.row(i), x.row(j))?)
                })
                .collect()
        }
    }
}

pub fn intra_frame_pair_histogram(
    x: &Matrix,
    spec: &HistogramSpec,
    sampling: PairSampling,
) -> Result<SimilarityHistogram> {
    let mut h = SimilarityHistogram::from_values(spec, &pair_similarities(x, sampling)?)?;
    if let PairSampling::Sampled { pairs, .. } = sampling {
        h.sampled_pairs = Some(pairs as u64);
    }
    Ok(h)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    pub k: usize,
    pub iterations: usize,
    pub tau: f64,
    pub seed: u64,
    pub histogram: HistogramSpec,
    pub sampling: PairSampling,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            k: swem_core::DEFAULT_K,
            iterations: swem_core::DEFAULT_ITERATIONS,
            tau: swem_core::kernel::DEFAULT_TAU,
            seed: 0,
            histogram: HistogramSpec::default(),
            sampling: PairSampling::Exhaustive,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub frame: usize,
    /// Pixel-to-previous-frame-pixel maxima (absent on frame 0).
    pub raw_inter: Option<SimilarityHistogram>,
    /// Pixel-to-previous-frame-basis maxima (absent on frame 0).
    pub basis_inter: Option<SimilarityHistogram>,
    pub raw_intra: SimilarityHistogram,
    pub reconstruction_intra: SimilarityHistogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisTotals {
    pub raw_inter: SimilarityHistogram,
    pub basis_inter: SimilarityHistogram,
    pub raw_intra: SimilarityHistogram,
    pub reconstruction_intra: SimilarityHistogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub config: AnalyzerConfig,
    pub seed: u64,
    pub frames: Vec<FrameStats>,
    pub totals: AnalysisTotals,
}

impl AnalysisReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }
}

/// Fits `K` bases to one frame by unweighted EM, starting from `K` pixels
/// sampled uniformly without replacement.
pub fn fit_frame_bases(
    x: &FeatureMatrix,
    config: &AnalyzerConfig,
    frame: usize,
) -> Result<(BasisSet, Matrix)> {
    let params = KernelParams::with_tau(config.tau)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(frame as u64);
    let ones = vec![1.0; x.rows()];
    let draws = draw_pixels(&ones, config.k, params.epsilon, Class::Foreground, &mut rng)?;
    let init = bases_from_draws(x, &draws, &mut rng)?;
    let (bases, z) = fit_bases(x, &init, &params, config.iterations)?;
    let recon = z.matmul(&bases)?;
    Ok((bases, recon))
}

pub fn basis_similarity_stats(stream: &StreamFile, config: &AnalyzerConfig) -> Result<AnalysisReport> {
    if config.k == 0 || config.iterations == 0 {
        return Err(Error::Config("K and iterations must be positive".into()));
    }
    let spec = &config.histogram;
    let mut totals = AnalysisTotals {
        raw_inter: SimilarityHistogram::new(spec)?,
        basis_inter: SimilarityHistogram::new(spec)?,
        raw_intra: SimilarityHistogram::new(spec)?,
        reconstruction_intra: SimilarityHistogram::new(spec)?,
    };
    let mut frames = Vec::with_capacity(stream.frame_count());
    let mut prev: Option<(FeatureMatrix, BasisSet)> = None;
    for t in 0..stream.frame_count() {
        let x = stream.keys(t)?;
        let (bases, recon) = fit_frame_bases(&x, config, t)?;
        let (raw_inter, basis_inter) = match &prev {
            Some((px, pb)) => (
                Some(SimilarityHistogram::from_values(spec, &inter_frame_max_similarity(px, &x)?)?),
                Some(SimilarityHistogram::from_values(spec, &inter_frame_max_similarity(pb, &x)?)?),
            ),
            None => (None, None),
        };
        let raw_intra = intra_frame_pair_histogram(&x, spec, config.sampling)?;
        let reconstruction_intra = intra_frame_pair_histogram(&recon, spec, config.sampling)?;
        if let Some(h) = &raw_inter {
            totals.raw_inter.merge(h)?;
        }
        if let Some(h) = &basis_inter {
            totals.basis_inter.merge(h)?;
        }
        totals.raw_intra.merge(&raw_intra)?;
        totals.reconstruction_intra.merge(&reconstruction_intra)?;
        frames.push(FrameStats {
            frame: t,
            raw_inter,
            basis_inter,
            raw_intra,
            reconstruction_intra,
        });
        prev = Some((x, bases));
    }
    Ok(AnalysisReport {
        config: config.clone(),
        seed: config.seed,
        frames,
        totals,
    })
}
