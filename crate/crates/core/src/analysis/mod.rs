//! Shot-ensemble and trace analysis.

pub mod chi;
pub mod fidelity;
pub mod jumps;
pub mod mixture;
pub mod projection;
pub mod ramsey;
pub mod stats;
pub mod threshold;

pub use fidelity::{fidelity_report, ChannelFidelity, ShotOutcome};
pub use jumps::{detect_jumps, JumpReport, ProjectedTrace};
pub use mixture::{fit_double_gaussian, DoubleGaussianFit};
pub use projection::rotate_and_project;
pub use ramsey::{fit_ramsey, RamseyFit};
pub use threshold::{choose_threshold, Discrimination};
