//! Equal-mass quantization of random variables on an atomized space.

mod balanced;
mod compose;
mod rate;

pub use balanced::{
    balanced_quantize, e_n_estimate, lift_measure, quantize_measure, QuantizeOptions,
    QuantizeResult,
};
pub use compose::{
    floor_pow, merge_partitions, nested_partition, simultaneous_quantize, MergeOutcome,
    NestedOutcome, SimultaneousOutcome,
};
pub use rate::{rate_fit, reference_rate, RateFit, RateRow, RateTable};
