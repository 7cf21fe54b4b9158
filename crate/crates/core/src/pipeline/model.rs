use std::fs;
use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::container::{read_array, write_array, Manifest};
use crate::error::{ensure, Error, Result};
use crate::optics::IntensityImage;
use crate::reduce::{PcaModel, PcaOptions, PcaSolver};
use crate::regress::{EtrModel, EtrParams, LinearModel, Node, Regressor, RegressorKind, Tree};
use crate::statespace::{fidelity, BlochVector, GgmBasis, ModeBasis, PureState};

use super::{Dataset, ImageMode};

/// Number of latent coordinates taken from each channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentSplit {
    pub primary: usize,
    pub shifted: usize,
}

impl LatentSplit {
    /// `n` coordinates per channel.
    pub fn per_channel(n: usize, mode: ImageMode) -> Self {
        match mode {
            ImageMode::Single => Self { primary: n, shifted: 0 },
            ImageMode::Pair => Self { primary: n, shifted: n },
        }
    }

    /// A total budget; in pair mode the primary channel gets the extra
    /// coordinate when the total is odd.
    pub fn total(total: usize, mode: ImageMode) -> Self {
        match mode {
            ImageMode::Single => Self {
                primary: total,
                shifted: 0,
            },
            ImageMode::Pair => Self {
                primary: total.div_ceil(2),
                shifted: total / 2,
            },
        }
    }

    pub fn sum(&self) -> usize {
        self.primary + self.shifted
    }
}

/// How pair images are compressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompressorKind {
    /// One PCA per channel, latents concatenated.
    #[default]
    Dual,
    /// One PCA over the concatenated pixels of both channels.
    Joint,
}

impl CompressorKind {
    pub fn name(self) -> &'static str {
        match self {
            CompressorKind::Dual => "dual",
            CompressorKind::Joint => "joint",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "dual" => Ok(CompressorKind::Dual),
            "joint" => Ok(CompressorKind::Joint),
            other => Err(Error::InvalidInput(format!("unknown compressor {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub image_mode: ImageMode,
    pub latent: LatentSplit,
    pub regressor: RegressorKind,
    pub ridge_lambda: f64,
    pub etr: EtrParams,
    pub compressor: CompressorKind,
    pub pca_solver: PcaSolver,
}

impl FitOptions {
    /// Linear regression on `total` latent dimensions.
    pub fn new(image_mode: ImageMode, total: usize) -> Self {
        Self {
            image_mode,
            latent: LatentSplit::total(total, image_mode),
            regressor: RegressorKind::Linear,
            ridge_lambda: 0.0,
            etr: EtrParams::default(),
            compressor: CompressorKind::Dual,
            pca_solver: PcaSolver::Auto,
        }
    }

    fn validate(&self) -> Result<()> {
        ensure(self.latent.primary >= 1, || "need at least one latent dimension".into())?;
        ensure(
            self.image_mode == ImageMode::Pair || self.latent.shifted == 0,
            || "single-image models have no shifted channel".into(),
        )?;
        ensure(
            self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite(),
            || "ridge lambda must be non-negative".into(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Compression {
    Dual {
        primary: PcaModel,
        shifted: Option<PcaModel>,
    },
    Joint(PcaModel),
}

impl Compression {
    pub fn kind(&self) -> CompressorKind {
        match self {
            Compression::Dual { .. } => CompressorKind::Dual,
            Compression::Joint(_) => CompressorKind::Joint,
        }
    }

    /// Latent rows for the given channel images.
    pub fn latents(&self, primary: ArrayView2<f64>, shifted: Option<ArrayView2<f64>>) -> Result<Array2<f64>> {
        match (self, shifted) {
            (Compression::Dual { primary: p, shifted: None }, _) => p.transform_rows(primary),
            (Compression::Dual { primary: p, shifted: Some(q) }, Some(s)) => {
                let a = p.transform_rows(primary)?;
                let b = q.transform_rows(s)?;
                Ok(concatenate(Axis(1), &[a.view(), b.view()]).expect("same rows"))
            }
            (Compression::Joint(p), Some(s)) => {
                p.transform_rows(concatenate(Axis(1), &[primary, s]).expect("same rows").view())
            }
            _ => Err(Error::InvalidInput("pair model needs shifted-channel images".into())),
        }
    }
}

/// Provenance kept with a trained model. No wall-clock fields, so retraining
/// reproduces the saved bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub dataset_seed: u64,
    pub n_train: usize,
    /// Linear fits only: the design was rank deficient and the minimum-norm
    /// solution was taken.
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineModel {
    pub basis: ModeBasis,
    pub grid_n: usize,
    pub image_mode: ImageMode,
    pub latent: LatentSplit,
    pub compression: Compression,
    pub regressor: Regressor,
    pub meta: TrainingMeta,
}

/// Predicted state together with the unprojected regressor output.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub state: PureState,
    pub raw: BlochVector,
    pub degenerate: bool,
}

/// Fits the compressor(s) on the training images and the regressor on the
/// resulting latents and Bloch targets.
pub fn fit_pipeline(dataset: &Dataset, options: &FitOptions) -> Result<PipelineModel> {
    options.validate()?;
    let targets = dataset.targets()?;
    ensure(!dataset.train.is_empty(), || "training split is empty".into())?;
    let targets = targets.select(Axis(0), &dataset.train);
    let pair = options.image_mode == ImageMode::Pair;
    if pair && dataset.shifted.is_none() {
        return Err(Error::InvalidInput(
            "pair-mode training needs a pair dataset".into(),
        ));
    }
    let pca = PcaOptions {
        solver: options.pca_solver,
        whiten: false,
    };
    let primary = dataset.channel_rows(false, &dataset.train)?;
    let shifted = pair
        .then(|| dataset.channel_rows(true, &dataset.train))
        .transpose()?;
    let compression = match (options.compressor, &shifted) {
        (CompressorKind::Joint, Some(s)) => {
            let joint = concatenate(Axis(1), &[primary.view(), s.view()]).expect("same rows");
            Compression::Joint(PcaModel::fit(joint.view(), options.latent.sum(), pca)?)
        }
        _ => Compression::Dual {
            primary: PcaModel::fit(primary.view(), options.latent.primary, pca)?,
            shifted: match &shifted {
                Some(s) if options.latent.shifted > 0 => {
                    Some(PcaModel::fit(s.view(), options.latent.shifted, pca)?)
                }
                Some(_) => {
                    return Err(Error::InvalidInput(
                        "pair mode needs at least one shifted-channel latent".into(),
                    ))
                }
                None => None,
            },
        },
    };
    let latents = compression.latents(primary.view(), shifted.as_ref().map(|s| s.view()))?;
    drop((primary, shifted));
    let (regressor, rank_deficient) = fit_regressor(latents.view(), targets.view(), options)?;
    Ok(PipelineModel {
        basis: dataset.basis.clone(),
        grid_n: dataset.grid_n,
        image_mode: options.image_mode,
        latent: options.latent,
        compression,
        regressor,
        meta: TrainingMeta {
            dataset_seed: dataset.seed(),
            n_train: dataset.train.len(),
            rank_deficient,
        },
    })
}

pub(crate) fn fit_regressor(
    latents: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    options: &FitOptions,
) -> Result<(Regressor, bool)> {
    Ok(match options.regressor {
        RegressorKind::Linear => {
            let fit = LinearModel::fit(latents, targets, options.ridge_lambda)?;
            (Regressor::Linear(fit.model), fit.rank_deficient)
        }
        RegressorKind::Etr => (
            Regressor::Etr(EtrModel::fit(latents, targets, &options.etr)?),
            false,
        ),
    })
}

/// Projects each raw Bloch row onto the nearest pure state.
pub(crate) fn project_rows(basis: &ModeBasis, raw: &Array2<f64>) -> Result<Vec<Prediction>> {
    let ggm = GgmBasis::new(basis.dim())?;
    (0..raw.nrows())
        .into_par_iter()
        .map(|i| {
            let b = BlochVector::new(basis.dim(), raw.row(i).to_vec())?;
            let p = ggm.nearest_pure(&b, basis)?;
            Ok(Prediction {
                state: p.state,
                raw: b,
                degenerate: p.degenerate,
            })
        })
        .collect()
}

impl PipelineModel {
    pub fn total_latent(&self) -> usize {
        self.latent.sum()
    }

    /// Batch prediction from channel image rows.
    pub fn predict_rows(
        &self,
        primary: ArrayView2<f64>,
        shifted: Option<ArrayView2<f64>>,
    ) -> Result<Vec<Prediction>> {
        let pixels = self.grid_n * self.grid_n;
        if primary.ncols() != pixels {
            return Err(Error::DimensionMismatch {
                expected: pixels,
                got: primary.ncols(),
            });
        }
        let shifted = match self.image_mode {
            ImageMode::Single => None,
            ImageMode::Pair => Some(shifted.ok_or_else(|| {
                Error::InvalidInput("pair model needs shifted-channel images".into())
            })?),
        };
        let latents = self.compression.latents(primary, shifted)?;
        let raw = self.regressor.predict_rows(latents.view())?;
        project_rows(&self.basis, &raw)
    }

    /// Predicts one sample. `shifted` must be given exactly for pair models.
    pub fn predict_state(
        &self,
        primary: &IntensityImage,
        shifted: Option<&IntensityImage>,
    ) -> Result<Prediction> {
        let row = |img: &IntensityImage| -> Result<Array2<f64>> {
            if img.grid_n() != self.grid_n {
                return Err(Error::DimensionMismatch {
                    expected: self.grid_n,
                    got: img.grid_n(),
                });
            }
            Ok(Array1::from(img.pixels().to_vec()).insert_axis(Axis(0)))
        };
        if (self.image_mode == ImageMode::Pair) != shifted.is_some() {
            return Err(Error::InvalidInput(format!(
                "{} model given {} channel(s)",
                self.image_mode.name(),
                1 + shifted.is_some() as usize
            )));
        }
        let p = row(primary)?;
        let s = shifted.map(row).transpose()?;
        let mut out = self.predict_rows(p.view(), s.as_ref().map(|s| s.view()))?;
        Ok(out.remove(0))
    }

    /// Predictions for the dataset's test split.
    pub fn predict_test(&self, dataset: &Dataset) -> Result<Vec<Prediction>> {
        self.check_dataset(dataset)?;
        let primary = dataset.channel_rows(false, &dataset.test)?;
        let shifted = match self.image_mode {
            ImageMode::Pair => Some(dataset.channel_rows(true, &dataset.test)?),
            ImageMode::Single => None,
        };
        self.predict_rows(primary.view(), shifted.as_ref().map(|s| s.view()))
    }

    fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        if dataset.is_labeled() && dataset.basis != self.basis {
            return Err(Error::BasisMismatch(format!(
                "model basis {} vs dataset basis {}",
                self.basis, dataset.basis
            )));
        }
        if dataset.grid_n != self.grid_n {
            return Err(Error::DimensionMismatch {
                expected: self.grid_n,
                got: dataset.grid_n,
            });
        }
        Ok(())
    }
}

/// Reference state for fidelity scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Against {
    Correct,
    /// The conjugated, index-negated partner of the true state.
    Flipped,
}

impl Against {
    pub fn name(self) -> &'static str {
        match self {
            Against::Correct => "correct",
            Against::Flipped => "flipped",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "correct" => Ok(Against::Correct),
            "flipped" => Ok(Against::Flipped),
            other => Err(Error::InvalidInput(format!("unknown reference {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FidelityStats {
    pub per_sample: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over `√n`.
    pub stderr: f64,
    pub degenerate_count: usize,
}

impl FidelityStats {
    pub fn from_samples(per_sample: Vec<f64>, degenerate_count: usize) -> Self {
        let n = per_sample.len() as f64;
        let mean = per_sample.iter().sum::<f64>() / n;
        let var = if per_sample.len() > 1 {
            per_sample.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            per_sample,
            mean,
            stderr: (var / n).sqrt(),
            degenerate_count,
        }
    }

    pub fn len(&self) -> usize {
        self.per_sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_sample.is_empty()
    }
}

/// Fidelity of each prediction with its true (or flipped) state.
pub fn fidelity_stats(predictions: &[Prediction], truth: &[&PureState], against: Against) -> Result<FidelityStats> {
    ensure(predictions.len() == truth.len() && !truth.is_empty(), || {
        "need one true state per prediction".into()
    })?;
    let per_sample = predictions
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let reference = match against {
                Against::Correct => (*t).clone(),
                // the flip lives on the negated basis; map it back by position
                Against::Flipped => reorder_to(&t.conjugate_flip(), p.state.basis())?,
            };
            fidelity(&p.state, &reference)
        })
        .collect::<Result<Vec<_>>>()?;
    let degenerate = predictions.iter().filter(|p| p.degenerate).count();
    Ok(FidelityStats::from_samples(per_sample, degenerate))
}

/// Expresses `state` on `basis` when both contain the same indices.
fn reorder_to(state: &PureState, basis: &ModeBasis) -> Result<PureState> {
    if state.basis() == basis {
        return Ok(state.clone());
    }
    let mut coeffs = Vec::with_capacity(basis.dim());
    for &l in basis.indices() {
        if state.basis().position(l).is_none() {
            return Err(Error::BasisMismatch(format!(
                "flipped state on {} cannot be compared on {basis}",
                state.basis()
            )));
        }
        coeffs.push(state.amplitude(l));
    }
    PureState::new(basis.clone(), coeffs)
}

/// Scores the model on the test split against the true or flipped states.
pub fn evaluate(model: &PipelineModel, dataset: &Dataset, against: Against) -> Result<FidelityStats> {
    let states = dataset.states()?;
    let predictions = model.predict_test(dataset)?;
    let truth: Vec<&PureState> = dataset.test.iter().map(|&i| &states[i]).collect();
    fidelity_stats(&predictions, &truth, against)
}

const MODEL_FORMAT: &str = "oamreg-model-1";

pub fn save_model(model: &PipelineModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut m = Manifest::new();
    m.set("format", MODEL_FORMAT)
        .set("version", crate::VERSION)
        .set("dimension", model.basis.dim())
        .set("basis", &model.basis)
        .set("grid_n", model.grid_n)
        .set("image_mode", model.image_mode.name())
        .set("latent_primary", model.latent.primary)
        .set("latent_shifted", model.latent.shifted)
        .set("compressor", model.compression.kind().name())
        .set("regressor", model.regressor.kind().name())
        .set("dataset_seed", model.meta.dataset_seed)
        .set("n_train", model.meta.n_train)
        .set("rank_deficient", model.meta.rank_deficient);
    match &model.compression {
        Compression::Dual { primary, shifted } => {
            save_pca(dir, "pca_primary", primary)?;
            if let Some(s) = shifted {
                save_pca(dir, "pca_shifted", s)?;
            }
        }
        Compression::Joint(p) => save_pca(dir, "pca_joint", p)?,
    }
    match &model.regressor {
        Regressor::Linear(lin) => {
            m.set("ridge_lambda", lin.ridge_lambda);
            write_matrix(dir, "linear_weights.bin", &lin.weights)?;
            write_array(
                &dir.join("linear_intercept.bin"),
                &[lin.intercept.len()],
                &lin.intercept.to_vec(),
            )?;
        }
        Regressor::Etr(etr) => {
            let p = &etr.params;
            m.set("etr_n_trees", p.n_trees)
                .set("etr_min_samples_split", p.min_samples_split)
                .set(
                    "etr_max_depth",
                    p.max_depth.map_or("none".to_string(), |d| d.to_string()),
                )
                .set(
                    "etr_candidate_features",
                    p.n_candidate_features.map_or("auto".to_string(), |d| d.to_string()),
                )
                .set("etr_seed", p.seed)
                .set("etr_input_dim", etr.input_dim)
                .set("etr_output_dim", etr.output_dim);
            save_trees(dir, etr)?;
        }
    }
    m.write(dir)
}

pub fn load_model(dir: &Path) -> Result<PipelineModel> {
    let m = Manifest::read(dir)?;
    if m.require("format")? != MODEL_FORMAT {
        return Err(Error::format("manifest", "not a model directory"));
    }
    let basis = ModeBasis::parse(m.require("basis")?)?;
    let image_mode = ImageMode::parse(m.require("image_mode")?)?;
    let latent = LatentSplit {
        primary: m.parse_value("latent_primary")?,
        shifted: m.parse_value("latent_shifted")?,
    };
    let compression = match CompressorKind::parse(m.require("compressor")?)? {
        CompressorKind::Dual => Compression::Dual {
            primary: load_pca(dir, "pca_primary")?,
            shifted: (image_mode == ImageMode::Pair)
                .then(|| load_pca(dir, "pca_shifted"))
                .transpose()?,
        },
        CompressorKind::Joint => Compression::Joint(load_pca(dir, "pca_joint")?),
    };
    let regressor = match RegressorKind::parse(m.require("regressor")?)? {
        RegressorKind::Linear => Regressor::Linear(LinearModel {
            weights: read_matrix(dir, "linear_weights.bin")?,
            intercept: read_vector(dir, "linear_intercept.bin")?,
            ridge_lambda: m.parse_value("ridge_lambda")?,
        }),
        RegressorKind::Etr => {
            let opt = |key: &str, none: &str| -> Result<Option<usize>> {
                match m.require(key)? {
                    v if v == none => Ok(None),
                    _ => m.parse_value(key).map(Some),
                }
            };
            let params = EtrParams {
                n_trees: m.parse_value("etr_n_trees")?,
                min_samples_split: m.parse_value("etr_min_samples_split")?,
                max_depth: opt("etr_max_depth", "none")?,
                n_candidate_features: opt("etr_candidate_features", "auto")?,
                seed: m.parse_value("etr_seed")?,
            };
            Regressor::Etr(load_trees(
                dir,
                params,
                m.parse_value("etr_input_dim")?,
                m.parse_value("etr_output_dim")?,
            )?)
        }
    };
    let model = PipelineModel {
        basis,
        grid_n: m.parse_value("grid_n")?,
        image_mode,
        latent,
        compression,
        regressor,
        meta: TrainingMeta {
            dataset_seed: m.parse_value("dataset_seed")?,
            n_train: m.parse_value("n_train")?,
            rank_deficient: m.parse_value("rank_deficient")?,
        },
    };
    ensure(model.regressor.input_dim() == latent.sum(), || {
        "regressor input does not match the latent split".into()
    })?;
    Ok(model)
}

fn write_matrix(dir: &Path, name: &str, a: &Array2<f64>) -> Result<()> {
    write_array(
        &dir.join(name),
        &[a.nrows(), a.ncols()],
        a.as_standard_layout().as_slice().expect("standard layout"),
    )
}

fn read_matrix(dir: &Path, name: &str) -> Result<Array2<f64>> {
    read_array::<f64>(&dir.join(name))?
        .into_dimensionality()
        .map_err(|_| Error::format(name, "expected a matrix"))
}

fn read_vector(dir: &Path, name: &str) -> Result<Array1<f64>> {
    read_array::<f64>(&dir.join(name))?
        .into_dimensionality()
        .map_err(|_| Error::format(name, "expected a vector"))
}

fn save_pca(dir: &Path, prefix: &str, p: &PcaModel) -> Result<()> {
    write_array(&dir.join(format!("{prefix}_mean.bin")), &[p.mean.len()], &p.mean.to_vec())?;
    write_matrix(dir, &format!("{prefix}_components.bin"), &p.components)?;
    let mut stats = p.singular_values.clone();
    stats.extend(&p.explained_variance_ratio);
    write_array(
        &dir.join(format!("{prefix}_spectrum.bin")),
        &[2, p.singular_values.len()],
        &stats,
    )?;
    write_array(
        &dir.join(format!("{prefix}_samples.bin")),
        &[2],
        &[p.n_samples as u64, p.whiten as u64],
    )
}

fn load_pca(dir: &Path, prefix: &str) -> Result<PcaModel> {
    let mean = read_vector(dir, &format!("{prefix}_mean.bin"))?;
    let components = read_matrix(dir, &format!("{prefix}_components.bin"))?;
    let spectrum = read_matrix(dir, &format!("{prefix}_spectrum.bin"))?;
    let info = read_array::<u64>(&dir.join(format!("{prefix}_samples.bin")))?;
    let n = components.nrows();
    if components.ncols() != mean.len() || spectrum.dim() != (2, n) || info.len() != 2 {
        return Err(Error::format(prefix, "inconsistent PCA arrays"));
    }
    Ok(PcaModel {
        mean,
        components,
        singular_values: spectrum.row(0).to_vec(),
        explained_variance_ratio: spectrum.row(1).to_vec(),
        n_samples: info[[0]] as usize,
        whiten: info[[1]] != 0,
    })
}

const NODE_LEAF: u64 = u64::MAX;

/// Trees as one `u64` table of `(feature | LEAF, left | leaf, right)` rows, a
/// parallel threshold vector, per-tree node and leaf counts, and stacked leaf
/// values.
fn save_trees(dir: &Path, etr: &EtrModel) -> Result<()> {
    let mut table = Vec::new();
    let mut thresholds = Vec::new();
    let mut counts = Vec::new();
    let mut leaves: Vec<f64> = Vec::new();
    for tree in &etr.trees {
        counts.extend([tree.nodes.len() as u64, tree.values.nrows() as u64]);
        for node in &tree.nodes {
            match *node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    table.extend([feature as u64, left as u64, right as u64]);
                    thresholds.push(threshold);
                }
                Node::Leaf(v) => {
                    table.extend([NODE_LEAF, v as u64, 0]);
                    thresholds.push(0.0);
                }
            }
        }
        leaves.extend(tree.values.iter().copied());
    }
    write_array(&dir.join("etr_counts.bin"), &[etr.trees.len(), 2], &counts)?;
    write_array(&dir.join("etr_nodes.bin"), &[thresholds.len(), 3], &table)?;
    write_array(&dir.join("etr_thresholds.bin"), &[thresholds.len()], &thresholds)?;
    write_array(
        &dir.join("etr_leaves.bin"),
        &[leaves.len() / etr.output_dim, etr.output_dim],
        &leaves,
    )
}

fn load_trees(dir: &Path, params: EtrParams, input_dim: usize, output_dim: usize) -> Result<EtrModel> {
    let bad = |d: &str| Error::format("tree arrays", d);
    let counts = read_array::<u64>(&dir.join("etr_counts.bin"))?;
    let table = read_array::<u64>(&dir.join("etr_nodes.bin"))?;
    let thresholds = read_array::<f64>(&dir.join("etr_thresholds.bin"))?;
    let leaves = read_matrix(dir, "etr_leaves.bin")?;
    if counts.ndim() != 2 || counts.shape()[1] != 2 || table.ndim() != 2 || leaves.ncols() != output_dim {
        return Err(bad("unexpected shapes"));
    }
    let mut trees = Vec::new();
    let (mut node_at, mut leaf_at) = (0usize, 0usize);
    for t in 0..counts.shape()[0] {
        let n_nodes = counts[[t, 0]] as usize;
        let n_leaves = counts[[t, 1]] as usize;
        if node_at + n_nodes > thresholds.len() || leaf_at + n_leaves > leaves.nrows() {
            return Err(bad("counts exceed stored data"));
        }
        let mut nodes = Vec::with_capacity(n_nodes);
        for k in node_at..node_at + n_nodes {
            let (a, b, c) = (table[[k, 0]], table[[k, 1]] as usize, table[[k, 2]] as usize);
            let node = if a == NODE_LEAF {
                if b >= n_leaves {
                    return Err(bad("leaf index out of range"));
                }
                Node::Leaf(b)
            } else {
                // children are always stored after their parent
                if a as usize >= input_dim || b >= n_nodes || c >= n_nodes || b <= k - node_at || c <= k - node_at {
                    return Err(bad("split node out of range"));
                }
                Node::Split {
                    feature: a as usize,
                    threshold: thresholds[[k]],
                    left: b,
                    right: c,
                }
            };
            nodes.push(node);
        }
        trees.push(Tree {
            nodes,
            values: leaves.slice(s![leaf_at..leaf_at + n_leaves, ..]).to_owned(),
        });
        node_at += n_nodes;
        leaf_at += n_leaves;
    }
    if trees.is_empty() {
        return Err(bad("no trees"));
    }
    Ok(EtrModel {
        params,
        input_dim,
        output_dim,
        trees,
    })
}
