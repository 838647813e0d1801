//! Joint latent-infection model linking wastewater viral signal and
//! hospital admissions, with pseudo-likelihood estimation from aggregated
//! surveillance series.

pub mod error;
pub mod estimate;
pub mod io;
pub mod model;
pub mod optim;
pub mod pseudolik;
pub mod replicate;
pub mod report;
pub mod simulate;
pub mod special;

pub use error::{Error, Result};
pub use model::{
    CovariateMatrix, GaussianComponent, HazardParams, HazardVariant, InfectionParams,
    ModelParams, OccupancyTable, SheddingParams, SheddingVariant, VariantIntensity,
};
pub use simulate::{AggregatedSeries, IndividualTrajectory, ReportingConfig};
pub use estimate::{fit, FitConfig, FitResult, InitialValues, ModelStructure, OptimizerConfig};
pub use pseudolik::Scenario;
