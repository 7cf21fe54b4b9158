//! Dataset generation, two-image training, fidelity evaluation and the
//! analyses built on them.

mod analysis;
mod dataset;
mod ingest;
mod model;

pub use analysis::{
    latent_geometry, sweep_latent_dims, symmetry_analysis, CircleFit, EquatorDiagnostic, SweepResult,
    SweepRow, SymmetryReport,
};
pub use dataset::{
    generate_dataset, load_dataset, save_dataset, Dataset, DatasetConfig, NoiseSpec, Origin,
};
pub use ingest::{ingest_images, IngestManifest, IngestSample};
pub use model::{
    evaluate, fidelity_stats, fit_pipeline, load_model, save_model, Against, Compression,
    CompressorKind, FidelityStats, FitOptions, LatentSplit, PipelineModel, Prediction, TrainingMeta,
};

use crate::error::{Error, Result};

/// Whether a sample is one image or the image plus its +1-shifted partner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageMode {
    Single,
    Pair,
}

impl ImageMode {
    pub fn name(self) -> &'static str {
        match self {
            ImageMode::Single => "single",
            ImageMode::Pair => "pair",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "single" => Ok(ImageMode::Single),
            "pair" => Ok(ImageMode::Pair),
            other => Err(Error::InvalidInput(format!("unknown image mode {other:?}"))),
        }
    }
}

/// Splitmix-style seed for `(master, index, stream)`.
pub fn derive_seed(master: u64, index: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(stream.wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
