//! Motional-error analysis of Mølmer–Sørensen gates.
//!
//! The crate computes the two-qubit channel of an MS gate acting on ions
//! whose shared motional mode starts in a displaced thermal state, scores it
//! against the ideal entangling gate, averages over trap-frequency noise and
//! estimates the motional state from sideband Rabi data.

pub mod channel;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod metrics;
pub mod msgate;
pub mod noise;
pub mod sideband;

pub use channel::{gate_channel, ideal_gate_choi, ChoiMatrix, ErrorReport, ReportMetadata};
pub use error::{Error, Result};
pub use fock::MotionalSpec;
pub use metrics::{diamond_distance, process_infidelity};
pub use msgate::{calibrate_gate, FrequencyOffset, GateParams};
