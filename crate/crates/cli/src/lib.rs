//! Experiment harness around `quantlab-core`: TOML configs, the five
//! canonical studies, on-disk run records and re-verification.

pub mod config;
pub mod experiments;
pub mod output;
pub mod plot;

pub use config::ExperimentConfig;
pub use experiments::{
    reverify, run, run_example_gap, run_heat_projection, run_mfc_convergence,
    run_quantization_rates, run_simultaneous_tradeoff, validate, ExperimentKind, Report, RunOutput,
    Verdict,
};
pub use output::{verify_report, write_run, StoredReport, Verification};

/// Commented template config for each experiment.
pub fn template(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::QuantizationRates => include_str!("../configs/quantization-rates.toml"),
        ExperimentKind::SimultaneousTradeoff => {
            include_str!("../configs/simultaneous-tradeoff.toml")
        }
        ExperimentKind::ExampleGap => include_str!("../configs/example-gap.toml"),
        ExperimentKind::MfcConvergence => include_str!("../configs/mfc-convergence.toml"),
        ExperimentKind::HeatProjection => include_str!("../configs/heat-projection.toml"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_parse_and_validate() {
        for kind in ExperimentKind::ALL {
            let cfg = ExperimentConfig::from_toml(template(kind)).unwrap();
            assert_eq!(cfg.experiment, Some(kind));
            validate(kind, &cfg).unwrap();
        }
    }
}
