//! Equal-mass quantization of probability measures, Wasserstein distances
//! between empirical measures, and small-scale solvers for particle
//! Hamilton-Jacobi-Bellman equations and their mean-field limits.

// `!(x >= 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops over several parallel arrays read better than zipped iterators.
#![allow(clippy::needless_range_loop)]

pub mod assignment;
pub mod error;
pub mod hjb;
pub mod measure;
pub mod prob_space;
pub mod quantizer;
pub mod rng;

pub use error::{LabError, Result};
pub use measure::{
    second_moment, shift, wasserstein_1d, wasserstein_assignment, wasserstein_semidiscrete,
    wasserstein_uniform, EmpiricalMeasure, Exponent, Point, SampledMeasure, Transport,
};
pub use prob_space::{
    cond_exp, embed, law, lp_norm, quantile_rv, regular_partition, rho, AtomSpace, Norm, Partition,
    RandomVariable,
};
pub use quantizer::{
    balanced_quantize, e_n_estimate, merge_partitions, nested_partition, rate_fit, reference_rate,
    simultaneous_quantize, QuantizeOptions, QuantizeResult, RateFit, RateTable,
};
