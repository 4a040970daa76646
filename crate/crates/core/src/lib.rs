//! Fixed-size foreground/background basis memory for streams of per-frame
//! feature matrices.
//!
//! Each tracked object keeps `K` key bases and `K` value bases per class
//! (foreground and background). Every new frame is folded into the bases by a
//! sequential weighted EM step whose running numerator/denominator
//! accumulators make the result equal to a weighted EM over every frame seen so
//! far, without storing any of them. Queries read the memory through a
//! cosine/temperature kernel: a softmax reconstruction of the value bases and a
//! set of top-`l` affinity ratios that do not depend on basis order.
//!
//! The crate is `no_std` + `alloc`; enable the `std` feature when linking into
//! a std binary (it only affects the `Error` trait impl path).

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

mod error;
pub mod em;
pub mod init;
pub mod kernel;
pub mod matcher;
pub mod matrix;
pub mod memory;

pub use crate::em::{
    adaptive_weights, classify_coarse, estimate_responsibilities, fit_bases, maximize_bases,
    maximize_bases_weighted, swem_step, Accumulator, ClassCommit, ClassProbability, ClassState,
    SoftMask, SwemStepResult, WeightMode, WeightVector,
};
pub use crate::error::{Class, Error, Result};
pub use crate::kernel::{cosine, kernel, kernel_rows, log_kernel_rows, KernelParams};
pub use crate::matcher::{affinity_features, read_values, AffinityFeatures, ReadResult};
pub use crate::matrix::{BasisSet, FeatureMatrix, Matrix, ResponsibilityMatrix};
pub use crate::memory::{
    Commit, Footprint, ObjectId, ObjectMemory, Session, SessionConfig, DEFAULT_ITERATIONS,
    DEFAULT_K, DEFAULT_TOP_L,
};
