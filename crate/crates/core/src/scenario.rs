use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::metamodel::LinearObservationModel;
use crate::prior::{BlockLayout, MarginalPrior};

/// Everything the inversion conditions on: the area layout, the
/// per-frequency priors and observation models, and the measurements.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub layout: BlockLayout,
    pub priors: Vec<MarginalPrior>,
    pub observation_models: Vec<LinearObservationModel>,
    pub observations: Vec<DVector<f64>>,
}

impl Scenario {
    pub fn new(
        layout: BlockLayout,
        priors: Vec<MarginalPrior>,
        observation_models: Vec<LinearObservationModel>,
        observations: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let k = priors.len();
        if k == 0 {
            return Err(Error::InvalidParameter("scenario has no frequencies".into()));
        }
        if observation_models.len() != k || observations.len() != k {
            return Err(Error::Dimension(format!(
                "{k} priors, {} observation models, {} observation vectors",
                observation_models.len(),
                observations.len()
            )));
        }
        let n = layout.state_dim();
        for f in 0..k {
            let model = &observation_models[f];
            if priors[f].dim() != n || model.state_dim() != n {
                return Err(Error::Dimension(format!("frequency {f}: state dimension differs from layout ({n})")));
            }
            if observations[f].len() != model.obs_dim() {
                return Err(Error::Dimension(format!(
                    "frequency {f}: {} observations for a model with {} outputs",
                    observations[f].len(),
                    model.obs_dim()
                )));
            }
        }
        Ok(Self { layout, priors, observation_models, observations })
    }

    pub fn frequencies(&self) -> usize {
        self.priors.len()
    }

    pub fn state_dim(&self) -> usize {
        self.layout.state_dim()
    }

    pub fn obs_dims(&self) -> impl Iterator<Item = usize> + '_ {
        self.observation_models.iter().map(|m| m.obs_dim())
    }
}
