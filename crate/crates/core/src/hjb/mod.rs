//! Value functions of the particle control problem and its mean-field limit.

mod example;
mod extension;
mod fd;
mod heat;
mod problem;
mod transcription;

pub use example::{
    example_objective, hopf_lax_example_u, hopf_lax_profile, vn_example_value, ExampleConfig,
};
pub use extension::{lipschitz_extend, ExtendConfig, ExtensionReport};
pub use fd::{admissible_dt, solve_fd, FdGrid, ValueTable};
pub use heat::{heat_bound, heat_value, heat_value_particles, small_time_check, SmallTimeReport};
pub use problem::{
    project_ball, AbsMean, AbsP, BoundKind, ConstantTerminal, ControlProblem, Hamiltonian,
    HamiltonianConfig, HamiltonianSpec, Lagrangian, MeanOfG, Method, NonconvexSin, PointCost,
    Quadratic, TerminalConfig, TerminalCost, TerminalSpec, ValueReport, W2ToUniformCube,
    ZeroHamiltonian,
};
pub use transcription::{solve_transcription, NoiseMode, Transcription, TranscriptionConfig};
