//! Quasi maximum-likelihood and GMM estimation of dynamic panel data models
//! `y_it = delta' (y_{i,t-1}, ..., y_{i,t-p}) + beta' x_it + c_i + v_it`, with a
//! Monte Carlo harness for bias/RMSE studies.

pub mod companion;
pub mod differenced_qml;
pub mod error;
pub mod estimate;
pub mod fit;
pub mod gmm;
pub mod levels_qml;
pub mod likelihood;
pub mod linalg;
pub mod montecarlo;
pub mod panel_data;
pub mod verify;

pub use error::{Error, Result};
pub use fit::{Estimator, FitConfig, FitDocument, Init, OmegaEstimate, QmlFit};
pub use panel_data::{CsvSchema, PanelDataset, ProjectionBasis};
