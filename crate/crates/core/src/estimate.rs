//! Single entry point running any estimator of the roster on a dataset.

use crate::error::Result;
use crate::fit::{Estimator, FitConfig, FitDocument, QmlFit};
use crate::gmm::{self, GmmFit, GmmSpec, GmmVariant};
use crate::panel_data::{build_augmented, build_differenced, PanelDataset, ProjectionBasis};
use crate::{differenced_qml, levels_qml};

#[derive(Debug, Clone)]
pub enum EstimateOutput {
    Qml(QmlFit),
    Gmm(GmmFit),
}

impl EstimateOutput {
    pub fn delta(&self) -> f64 {
        match self {
            EstimateOutput::Qml(f) => f.delta(1),
            EstimateOutput::Gmm(f) => f.delta(),
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            EstimateOutput::Qml(f) => f.converged,
            EstimateOutput::Gmm(_) => true,
        }
    }

    pub fn document(&self) -> FitDocument {
        match self {
            EstimateOutput::Qml(f) => f.document(),
            EstimateOutput::Gmm(f) => f.document(),
        }
    }
}

/// Fits `estimator`; GMM estimators use the one-step default specification.
pub fn run(ds: &PanelDataset, estimator: Estimator, cfg: &FitConfig) -> Result<EstimateOutput> {
    let out = match estimator {
        Estimator::LqmlEcme => EstimateOutput::Qml(levels_qml::fit_ecme(&build_augmented(ds), cfg)?),
        Estimator::LqmlUnrestricted => EstimateOutput::Qml(levels_qml::fit_iterated_fgls(&build_augmented(ds), cfg)?),
        Estimator::DqmlX | Estimator::DqmlDx => {
            if ds.lag_order() != 1 {
                return Err(crate::Error::UnsupportedLagOrder(ds.lag_order()));
            }
            let basis = if estimator == Estimator::DqmlX { ProjectionBasis::FullX } else { ProjectionBasis::DiffX };
            EstimateOutput::Qml(differenced_qml::fit_diff_structured(&build_differenced(ds, basis), cfg)?)
        }
        Estimator::DqmlUnrestricted => {
            EstimateOutput::Qml(differenced_qml::fit_diff_unrestricted(&build_differenced(ds, ProjectionBasis::FullX), cfg)?)
        }
        Estimator::Dgmm => EstimateOutput::Gmm(gmm::fit_gmm(ds, &GmmSpec::new(GmmVariant::Differenced))?),
        Estimator::Sgmm => EstimateOutput::Gmm(gmm::fit_gmm(ds, &GmmSpec::new(GmmVariant::System))?),
    };
    Ok(out)
}
