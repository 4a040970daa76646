//! Data-driven basis initialization: `K` pixels drawn without replacement
//! with probability proportional to their mask mass.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Class, Error, Result};
use crate::matrix::{BasisSet, FeatureMatrix, Matrix};

/// Amplitude of the uniform jitter added to repeated picks.
pub const REPEAT_JITTER: f64 = 1e-6;

/// Which pixel each initial basis came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Draw {
    pub pixel: usize,
    /// False for the first pick of a pixel, true for jittered repeats.
    pub repeated: bool,
}

/// Draws `k` pixels without replacement, each with probability proportional
/// to `mass`. When fewer than `k` pixels have positive mass the distinct
/// picks are cycled to fill the rest, flagged as repeats.
pub fn draw_pixels<R: Rng + ?Sized>(
    mass: &[f64],
    k: usize,
    epsilon: f64,
    class: Class,
    rng: &mut R,
) -> Result<Vec<Draw>> {
    if k == 0 {
        return Err(Error::InvalidValue {
            what: "basis count",
            reason: "must be at least 1",
        });
    }
    let total: f64 = mass.iter().sum();
    if total.is_nan() || total < epsilon {
        return Err(Error::EmptyClass(class));
    }
    let mut remaining: Vec<f64> = mass.iter().map(|&m| m.max(0.0)).collect();
    let positive = remaining.iter().filter(|&&m| m > 0.0).count();
    let distinct = k.min(positive);
    let mut draws = Vec::with_capacity(k);
    for _ in 0..distinct {
        let left: f64 = remaining.iter().sum();
        let target = rng.random::<f64>() * left;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &m) in remaining.iter().enumerate() {
            if m <= 0.0 {
                continue;
            }
            acc += m;
            pick = Some(i);
            if target < acc {
                break;
            }
        }
        // rounding can leave `target` past the last bucket; the last positive
        // entry is the right pick then
        let i = pick.expect("positive mass remains");
        remaining[i] = 0.0;
        draws.push(Draw {
            pixel: i,
            repeated: false,
        });
    }
    for j in 0..k - distinct {
        let pixel = draws[j % distinct].pixel;
        draws.push(Draw {
            pixel,
            repeated: true,
        });
    }
    Ok(draws)
}

/// Basis rows for `draws`, with jitter in `[-REPEAT_JITTER, REPEAT_JITTER)`
/// on every entry of repeated picks.
pub fn bases_from_draws<R: Rng + ?Sized>(
    x: &FeatureMatrix,
    draws: &[Draw],
    rng: &mut R,
) -> Result<BasisSet> {
    let mut m = Matrix::zeros(draws.len(), x.cols());
    for (k, d) in draws.iter().enumerate() {
        let row = m.row_mut(k);
        row.copy_from_slice(x.row(d.pixel));
        if d.repeated {
            for v in row.iter_mut() {
                *v += REPEAT_JITTER * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
    }
    BasisSet::new(m)
}
