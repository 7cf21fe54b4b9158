//! Regressors from latent vectors to Bloch vectors.

mod etr;
mod linear;

pub use etr::{EtrModel, EtrParams, Node, Tree};
pub use linear::{LinearFit, LinearModel};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::Result;

/// Either regressor behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Regressor {
    Linear(LinearModel),
    Etr(EtrModel),
}

impl Regressor {
    pub fn input_dim(&self) -> usize {
        match self {
            Regressor::Linear(m) => m.input_dim(),
            Regressor::Etr(m) => m.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Regressor::Linear(m) => m.output_dim(),
            Regressor::Etr(m) => m.output_dim(),
        }
    }

    pub fn predict(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        match self {
            Regressor::Linear(m) => m.predict(z),
            Regressor::Etr(m) => m.predict(z),
        }
    }

    pub fn predict_rows(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            Regressor::Linear(m) => m.predict_rows(z),
            Regressor::Etr(m) => m.predict_rows(z),
        }
    }

    pub fn kind(&self) -> RegressorKind {
        match self {
            Regressor::Linear(_) => RegressorKind::Linear,
            Regressor::Etr(_) => RegressorKind::Etr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressorKind {
    Linear,
    Etr,
}

impl RegressorKind {
    pub fn name(self) -> &'static str {
        match self {
            RegressorKind::Linear => "linear",
            RegressorKind::Etr => "etr",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "linear" => Ok(RegressorKind::Linear),
            "etr" => Ok(RegressorKind::Etr),
            other => Err(crate::Error::InvalidInput(format!("unknown regressor {other:?}"))),
        }
    }
}
