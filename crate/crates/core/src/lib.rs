//! Dynamic historical borrowing through a congruence-driven power prior.
//!
//! The pipeline is: measure congruence between historical and current data
//! ([`congruence`]), map the distance |p_CM − 1/2| to a power parameter with a
//! data-independent sigmoid ([`calibration`]), then fit the power-prior
//! posterior ([`posterior`]).

pub mod calibration;
pub mod congruence;
pub mod data;
pub mod error;
pub mod io;
pub mod posterior;
pub mod sim;
pub mod stats;

pub use calibration::{CalibrationConfig, CalibrationCurve, CalibrationMode};
pub use congruence::{CongruenceEstimate, EndpointModel, Estimator, RegressionTarget, Statistic};
pub use data::{Arm, Dataset, OlsFit};
pub use error::{Error, ErrorClass, Result};
pub use io::{AnalysisConfig, AnalysisReport, BorrowMode, CsvSchema, PcmReport, Provenance};
pub use posterior::{PosteriorDraws, PosteriorSummary, PowerAssignment, SamplerSettings};
pub use sim::{MetricsReport, Method, ScenarioSpec};
pub use stats::{CiMethod, RngStream};
