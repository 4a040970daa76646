//! Per-object key/value basis memory and the multi-object session that owns
//! it.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::em::{swem_step, ClassCommit, ClassState, SoftMask, WeightMode};
use crate::error::{check_dim, Class, Error, Result};
use crate::init::{bases_from_draws, draw_pixels};
use crate::kernel::KernelParams;
use crate::matcher::{affinity_features, read_values, ReadResult};
use crate::matrix::{BasisSet, FeatureMatrix, Matrix};

pub const DEFAULT_K: usize = 128;
pub const DEFAULT_ITERATIONS: usize = 4;
pub const DEFAULT_TOP_L: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SessionConfig {
    /// Bases per class.
    pub k: usize,
    /// EM rounds per frame.
    pub iterations: usize,
    /// Affinity channels returned by reads.
    pub top_l: usize,
    pub kernel: KernelParams,
    pub weight_mode: WeightMode,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            iterations: DEFAULT_ITERATIONS,
            top_l: DEFAULT_TOP_L,
            kernel: KernelParams::default(),
            weight_mode: WeightMode::Adaptive,
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidValue {
                what: "K",
                reason: "must be at least 1",
            });
        }
        if self.iterations == 0 {
            return Err(Error::InvalidValue {
                what: "iterations",
                reason: "must be at least 1",
            });
        }
        if self.top_l == 0 || self.top_l > self.k {
            return Err(Error::InvalidValue {
                what: "top-L",
                reason: "must satisfy 1 <= L <= K",
            });
        }
        KernelParams::new(self.kernel.tau, self.kernel.epsilon)?;
        Ok(())
    }
}

/// Key bases `kappa`, value bases `nu` and the shared accumulators for the
/// foreground and background of one object.
///
/// After any committed frame, `kappa_k = alpha_k / beta_k` wherever `beta_k`
/// exceeds epsilon, and `nu_k` is the same weighted mean taken over values.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectMemory {
    fg: ClassState,
    bg: ClassState,
    nu_fg: Matrix,
    nu_bg: Matrix,
    frame_count: u64,
}

impl ObjectMemory {
    /// Reassembles a memory from its parts (snapshot loading).
    pub fn from_parts(
        fg: ClassState,
        bg: ClassState,
        nu_fg: Matrix,
        nu_bg: Matrix,
        frame_count: u64,
    ) -> Result<Self> {
        check_dim("background basis count", fg.bases.count(), bg.bases.count())?;
        check_dim("background channels", fg.bases.cols(), bg.bases.cols())?;
        check_dim("value basis count", fg.bases.count(), nu_fg.rows())?;
        check_dim("value basis count", bg.bases.count(), nu_bg.rows())?;
        check_dim("value channels", nu_fg.cols(), nu_bg.cols())?;
        let fg = ClassState::new(fg.bases, fg.acc)?;
        let bg = ClassState::new(bg.bases, bg.acc)?;
        if !(nu_fg.is_finite() && nu_bg.is_finite()) {
            return Err(Error::NonFinite {
                what: "value bases",
            });
        }
        Ok(Self {
            fg,
            bg,
            nu_fg,
            nu_bg,
            frame_count,
        })
    }

    pub fn k(&self) -> usize {
        self.fg.bases.count()
    }

    pub fn key_channels(&self) -> usize {
        self.fg.bases.cols()
    }

    pub fn value_channels(&self) -> usize {
        self.nu_fg.cols()
    }

    pub fn frame_count(&self) -> u64 {
        self.frame_count
    }

    pub fn class(&self, class: Class) -> &ClassState {
        match class {
            Class::Foreground => &self.fg,
            Class::Background => &self.bg,
        }
    }

    pub fn values(&self, class: Class) -> &Matrix {
        match class {
            Class::Foreground => &self.nu_fg,
            Class::Background => &self.nu_bg,
        }
    }

    pub fn footprint(&self) -> Footprint {
        Footprint {
            key_rows: 2 * self.k(),
            value_rows: 2 * self.k(),
        }
    }

    /// Reorders the bases of one class; `perm[i]` is the old index placed at
    /// `i`. Keys, values and accumulators move together.
    pub fn permute(&mut self, class: Class, perm: &[usize]) -> Result<()> {
        let k = self.k();
        check_dim("permutation length", k, perm.len())?;
        let mut seen = alloc::vec![false; k];
        for &p in perm {
            if p >= k || core::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidValue {
                    what: "permutation",
                    reason: "must be a bijection on 0..K",
                });
            }
        }
        let (state, nu) = match class {
            Class::Foreground => (&mut self.fg, &mut self.nu_fg),
            Class::Background => (&mut self.bg, &mut self.nu_bg),
        };
        state.bases = state.bases.permuted(perm);
        state.acc.alpha = state.acc.alpha.select_rows(perm);
        state.acc.beta = perm.iter().map(|&p| state.acc.beta[p]).collect();
        *nu = nu.select_rows(perm);
        Ok(())
    }

    fn read(&self, q: &FeatureMatrix, config: &SessionConfig) -> Result<ReadResult> {
        let keys = BasisSet::concat(&self.fg.bases, &self.bg.bases)?;
        let values = Matrix::vstack(&self.nu_fg, &self.nu_bg)?;
        Ok(ReadResult {
            values: read_values(q, &keys, &values, &config.kernel)?,
            affinity: affinity_features(
                q,
                &self.fg.bases,
                &self.bg.bases,
                config.top_l,
                &config.kernel,
            )?,
        })
    }

    /// Advances keys by one SWEM step and derives the aligned value update
    /// from the same committed responsibilities, weights and masses.
    fn advance(
        &mut self,
        keys: &FeatureMatrix,
        values: &FeatureMatrix,
        mask: &SoftMask,
        config: &SessionConfig,
    ) -> Result<Commit> {
        check_dim("key channels", self.key_channels(), keys.cols())?;
        check_dim("value channels", self.value_channels(), values.cols())?;
        check_dim("value rows", keys.rows(), values.rows())?;
        let step = swem_step(
            keys,
            mask,
            &self.fg,
            &self.bg,
            &config.kernel,
            config.iterations,
            config.weight_mode,
        )?;
        let eps = config.kernel.epsilon;
        let nu_fg = update_values(&self.nu_fg, &self.fg.acc.beta, &step.fg_commit, values, eps);
        let nu_bg = update_values(&self.nu_bg, &self.bg.acc.beta, &step.bg_commit, values, eps);
        self.fg = step.fg;
        self.bg = step.bg;
        self.nu_fg = nu_fg;
        self.nu_bg = nu_bg;
        self.frame_count += 1;
        Ok(Commit {
            fg: step.fg_commit,
            bg: step.bg_commit,
        })
    }
}

/// `nu_k <- (beta_prev_k nu_k + sum_n z_nk w_n v_n) / (beta_prev_k + added_k)`
/// for every basis that took mass this step.
fn update_values(
    nu: &Matrix,
    beta_prev: &[f64],
    commit: &ClassCommit,
    v: &Matrix,
    epsilon: f64,
) -> Matrix {
    let mut out = nu.clone();
    let w = commit.weights.as_slice();
    let z = &commit.responsibilities;
    for k in 0..nu.rows() {
        if !commit.updated(k, epsilon) {
            continue;
        }
        let mut num: Vec<f64> = nu.row(k).iter().map(|&x| beta_prev[k] * x).collect();
        for n in 0..v.rows() {
            let s = z.get(n, k) * w[n];
            if s == 0.0 {
                continue;
            }
            for (a, &x) in num.iter_mut().zip(v.row(n)) {
                *a += s * x;
            }
        }
        let beta = beta_prev[k] + commit.added_mass[k];
        for (dst, a) in out.row_mut(k).iter_mut().zip(num) {
            *dst = a / beta;
        }
    }
    out
}

/// The per-class products a memorize step committed, for logging and replay.
#[derive(Clone, Debug, PartialEq)]
pub struct Commit {
    pub fg: ClassCommit,
    pub bg: ClassCommit,
}

/// Stored feature rows for one object.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Footprint {
    pub key_rows: usize,
    pub value_rows: usize,
}

impl Footprint {
    pub fn total_rows(&self) -> usize {
        self.key_rows + self.value_rows
    }
}

/// A set of object memories sharing one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    config: SessionConfig,
    objects: BTreeMap<ObjectId, ObjectMemory>,
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            objects: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn object(&self, id: ObjectId) -> Option<&ObjectMemory> {
        self.objects.get(&id)
    }

    pub fn object_mut(&mut self, id: ObjectId) -> Option<&mut ObjectMemory> {
        self.objects.get_mut(&id)
    }

    pub fn objects(&self) -> impl Iterator<Item = (ObjectId, &ObjectMemory)> {
        self.objects.iter().map(|(&id, m)| (id, m))
    }

    /// Inserts a previously built memory (used when restoring snapshots).
    pub fn insert_object(&mut self, id: ObjectId, memory: ObjectMemory) -> Result<()> {
        if self.objects.contains_key(&id) {
            return Err(Error::DuplicateObject(id));
        }
        check_dim("object basis count", self.config.k, memory.k())?;
        self.objects.insert(id, memory);
        Ok(())
    }

    /// Creates an object from its first frame: bases are seeded from pixels
    /// sampled in proportion to the mask (values taken from the same
    /// pixels), then the frame is committed with one SWEM step.
    pub fn init_object(
        &mut self,
        id: ObjectId,
        keys: &FeatureMatrix,
        values: &FeatureMatrix,
        mask: &SoftMask,
    ) -> Result<Commit> {
        if self.objects.contains_key(&id) {
            return Err(Error::DuplicateObject(id));
        }
        check_dim("value rows", keys.rows(), values.rows())?;
        check_dim("mask length", keys.rows(), mask.len())?;
        let cfg = &self.config;
        let eps = cfg.kernel.epsilon;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(u64::from(id.0));

        let fg_draws = draw_pixels(mask.fg(), cfg.k, eps, Class::Foreground, &mut rng)?;
        let bg_draws = draw_pixels(&mask.bg(), cfg.k, eps, Class::Background, &mut rng)?;
        let fg_keys = bases_from_draws(keys, &fg_draws, &mut rng)?;
        let bg_keys = bases_from_draws(keys, &bg_draws, &mut rng)?;
        let pixels = |draws: &[crate::init::Draw]| -> Vec<usize> {
            draws.iter().map(|d| d.pixel).collect()
        };
        let mut memory = ObjectMemory {
            fg: ClassState::from_bases(fg_keys),
            bg: ClassState::from_bases(bg_keys),
            nu_fg: values.select_rows(&pixels(&fg_draws)),
            nu_bg: values.select_rows(&pixels(&bg_draws)),
            frame_count: 0,
        };
        let commit = memory.advance(keys, values, mask, cfg)?;
        self.objects.insert(id, memory);
        Ok(commit)
    }

    pub fn memorize(
        &mut self,
        id: ObjectId,
        keys: &FeatureMatrix,
        values: &FeatureMatrix,
        mask: &SoftMask,
    ) -> Result<Commit> {
        let config = self.config;
        let memory = self.objects.get_mut(&id).ok_or(Error::UnknownObject(id))?;
        memory.advance(keys, values, mask, &config)
    }

    pub fn read(&self, id: ObjectId, query: &FeatureMatrix) -> Result<ReadResult> {
        let memory = self.objects.get(&id).ok_or(Error::UnknownObject(id))?;
        check_dim("query channels", memory.key_channels(), query.cols())?;
        memory.read(query, &self.config)
    }

    pub fn memory_footprint(&self) -> Vec<(ObjectId, Footprint)> {
        self.objects.iter().map(|(&id, m)| (id, m.footprint())).collect()
    }
}
