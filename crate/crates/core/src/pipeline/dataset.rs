use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson};
use rayon::prelude::*;

use crate::container::{read_array, write_array, Manifest};
use crate::error::{ensure, Error, Result};
use crate::optics::{BeamGeometry, IntensityImage, Normalization, Renderer};
use crate::statespace::{GgmBasis, ModeBasis, PureState, StateSampler};
use crate::Complex64;

use super::{derive_seed, ImageMode};

/// Synthetic detector imperfections, applied in the order jitter, Poisson,
/// Gaussian, clamp, renormalize.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseSpec {
    /// Additive per-pixel std, relative to the image maximum.
    pub gaussian_sigma: f64,
    /// Expected total photon count; `None` disables shot noise.
    pub poisson_scale: Option<f64>,
    /// Std of a rigid beam translation, in pixels.
    pub center_jitter_pixels: f64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(self.gaussian_sigma >= 0.0 && self.gaussian_sigma.is_finite(), || {
            "gaussian_sigma must be non-negative".into()
        })?;
        ensure(
            self.center_jitter_pixels >= 0.0 && self.center_jitter_pixels.is_finite(),
            || "center_jitter_pixels must be non-negative".into(),
        )?;
        if let Some(s) = self.poisson_scale {
            ensure(s > 0.0 && s.is_finite(), || "poisson_scale must be positive".into())?;
        }
        ensure(self.is_active(), || "noise spec has no active field".into())
    }

    pub fn is_active(&self) -> bool {
        self.gaussian_sigma > 0.0 || self.poisson_scale.is_some() || self.center_jitter_pixels > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub basis: ModeBasis,
    pub n_samples: usize,
    pub geometry: BeamGeometry,
    pub image_mode: ImageMode,
    pub noise: Option<NoiseSpec>,
    pub seed: u64,
    pub train_fraction: f64,
    pub sampler: StateSampler,
}

impl DatasetConfig {
    pub fn new(basis: ModeBasis) -> Self {
        Self {
            basis,
            n_samples: 10_000,
            geometry: BeamGeometry::default(),
            image_mode: ImageMode::Pair,
            noise: None,
            seed: 0,
            train_fraction: 0.8,
            sampler: StateSampler::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.n_samples >= 10, || {
            format!("need at least 10 samples, got {}", self.n_samples)
        })?;
        ensure(self.train_fraction > 0.0 && self.train_fraction < 1.0, || {
            format!("train_fraction must lie in (0, 1), got {}", self.train_fraction)
        })?;
        GgmBasis::new(self.basis.dim())?;
        self.geometry.validate()?;
        if let Some(noise) = &self.noise {
            noise.validate()?;
        }
        Ok(())
    }

    /// Number of training samples, at least one on each side of the split.
    pub fn n_train(&self) -> usize {
        split_count(self.n_samples, self.train_fraction)
    }
}

fn split_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    Generated(DatasetConfig),
    Ingested { source: PathBuf, seed: u64, train_fraction: f64 },
}

/// Images (one row per sample, f32), optional ground truth and a fixed split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub origin: Origin,
    pub basis: ModeBasis,
    pub grid_n: usize,
    pub primary: Array2<f32>,
    /// Images of the +1-shifted states; present for pair datasets.
    pub shifted: Option<Array2<f32>>,
    /// Ground-truth states; `None` for prediction-only data.
    pub states: Option<Vec<PureState>>,
    /// Bloch vectors of `states`, `samples × (d²−1)`.
    pub targets: Option<Array2<f64>>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.primary.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn image_mode(&self) -> ImageMode {
        if self.shifted.is_some() {
            ImageMode::Pair
        } else {
            ImageMode::Single
        }
    }

    pub fn is_labeled(&self) -> bool {
        self.states.is_some()
    }

    pub fn states(&self) -> Result<&[PureState]> {
        self.states.as_deref().ok_or(Error::Unlabeled)
    }

    pub fn targets(&self) -> Result<&Array2<f64>> {
        self.targets.as_ref().ok_or(Error::Unlabeled)
    }

    /// Channel images as f64 for the given rows.
    pub fn channel_rows(&self, shifted: bool, rows: &[usize]) -> Result<Array2<f64>> {
        let data = if shifted {
            self.shifted.as_ref().ok_or_else(|| {
                Error::InvalidInput("dataset has no shifted-channel images".into())
            })?
        } else {
            &self.primary
        };
        Ok(data.select(Axis(0), rows).mapv(f64::from))
    }

    pub fn image(&self, index: usize, shifted: bool) -> Result<IntensityImage> {
        let data = if shifted {
            self.shifted.as_ref().ok_or_else(|| {
                Error::InvalidInput("dataset has no shifted-channel images".into())
            })?
        } else {
            &self.primary
        };
        ensure(index < self.len(), || format!("sample {index} out of range"))?;
        IntensityImage::new(
            self.grid_n,
            data.row(index).iter().map(|&v| f64::from(v)).collect(),
            Normalization::UnitSum,
        )
    }

    pub fn seed(&self) -> u64 {
        match &self.origin {
            Origin::Generated(c) => c.seed,
            Origin::Ingested { seed, .. } => *seed,
        }
    }
}

const STREAM_STATE: u64 = 0;
const STREAM_NOISE_PRIMARY: u64 = 1;
const STREAM_NOISE_SHIFTED: u64 = 2;
const STREAM_SPLIT: u64 = 3;

/// Samples random states, renders them and fixes the train/test split.
/// Each sample draws from its own seed, so the result does not depend on the
/// thread count.
pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset> {
    config.validate()?;
    let basis = config.basis.clone();
    let n = config.n_samples;
    let pixels = config.geometry.grid_n * config.geometry.grid_n;
    let pair = config.image_mode == ImageMode::Pair;
    let ells: Vec<i32> = basis.indices().iter().flat_map(|&l| [l, l + 1]).collect();
    let renderer = Renderer::new(&config.geometry, ells.iter().copied())?;
    let ggm = GgmBasis::new(basis.dim())?;

    let rendered: Vec<(PureState, Vec<f32>, Option<Vec<f32>>)> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, i as u64, STREAM_STATE));
            let state = config.sampler.sample(&basis, &mut rng);
            let primary = render_channel(&renderer, &ells, config, &state, i, STREAM_NOISE_PRIMARY)?;
            let shifted = if pair {
                Some(render_channel(
                    &renderer,
                    &ells,
                    config,
                    &state.shift_oam(1),
                    i,
                    STREAM_NOISE_SHIFTED,
                )?)
            } else {
                None
            };
            Ok((state, primary, shifted))
        })
        .collect::<Result<_>>()?;

    let mut primary = Array2::<f32>::zeros((n, pixels));
    let mut shifted = pair.then(|| Array2::<f32>::zeros((n, pixels)));
    let mut states = Vec::with_capacity(n);
    for (i, (state, p, s)) in rendered.into_iter().enumerate() {
        primary.row_mut(i).iter_mut().zip(p).for_each(|(d, v)| *d = v);
        if let (Some(dst), Some(s)) = (shifted.as_mut(), s) {
            dst.row_mut(i).iter_mut().zip(s).for_each(|(d, v)| *d = v);
        }
        states.push(state);
    }
    let targets = bloch_targets(&ggm, &states)?;
    let (train, test) = split_indices(n, config.train_fraction, config.seed);
    Ok(Dataset {
        origin: Origin::Generated(config.clone()),
        basis,
        grid_n: config.geometry.grid_n,
        primary,
        shifted,
        states: Some(states),
        targets: Some(targets),
        train,
        test,
    })
}

fn render_channel(
    renderer: &Renderer,
    ells: &[i32],
    config: &DatasetConfig,
    state: &PureState,
    index: usize,
    stream: u64,
) -> Result<Vec<f32>> {
    let Some(noise) = config.noise.filter(|n| n.is_active()) else {
        let image = renderer.render(state, Normalization::UnitSum)?;
        return Ok(image.pixels().iter().map(|&v| v as f32).collect());
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, index as u64, stream));
    let image = if noise.center_jitter_pixels > 0.0 {
        let jitter = Normal::new(0.0, noise.center_jitter_pixels).expect("valid std");
        let offset = (rng.sample(jitter), rng.sample(jitter));
        Renderer::with_offset(&config.geometry, ells.iter().copied(), offset)?
            .render(state, Normalization::UnitSum)?
    } else {
        renderer.render(state, Normalization::UnitSum)?
    };
    let mut pixels = image.pixels().to_vec();
    if let Some(scale) = noise.poisson_scale {
        for p in pixels.iter_mut() {
            let mean = *p * scale;
            let counts = if mean > 0.0 {
                rng.sample(Poisson::new(mean).expect("positive mean"))
            } else {
                0.0
            };
            *p = counts / scale;
        }
    }
    if noise.gaussian_sigma > 0.0 {
        let peak = pixels.iter().cloned().fold(0.0, f64::max);
        let gauss = Normal::new(0.0, noise.gaussian_sigma * peak.max(f64::MIN_POSITIVE))
            .expect("valid std");
        for p in pixels.iter_mut() {
            *p += rng.sample(gauss);
        }
    }
    pixels.iter_mut().for_each(|p| *p = p.max(0.0));
    let total: f64 = pixels.iter().sum();
    if total > 0.0 {
        pixels.iter_mut().for_each(|p| *p /= total);
    }
    Ok(pixels.iter().map(|&v| v as f32).collect())
}

pub(crate) fn bloch_targets(ggm: &GgmBasis, states: &[PureState]) -> Result<Array2<f64>> {
    let mut targets = Array2::zeros((states.len(), ggm.len()));
    for (mut row, s) in targets.rows_mut().into_iter().zip(states) {
        let b = ggm.state_to_bloch(s)?;
        row.iter_mut().zip(&b.components).for_each(|(d, v)| *d = *v);
    }
    Ok(targets)
}

/// Seeded shuffle; both halves come back sorted.
pub(crate) fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX, STREAM_SPLIT)));
    let k = split_count(n, fraction);
    let mut train = order[..k].to_vec();
    let mut test = order[k..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

const DATASET_FORMAT: &str = "oamreg-dataset-1";

/// Writes `dir/manifest` plus array files.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut m = Manifest::new();
    m.set("format", DATASET_FORMAT)
        .set("version", crate::VERSION)
        .set("dimension", dataset.basis.dim())
        .set("basis", &dataset.basis)
        .set("grid_n", dataset.grid_n)
        .set("image_mode", dataset.image_mode().name())
        .set("n_samples", dataset.len())
        .set("n_train", dataset.train.len())
        .set("n_test", dataset.test.len())
        .set("labeled", dataset.is_labeled());
    match &dataset.origin {
        Origin::Generated(c) => {
            m.set("origin", "generated")
                .set("seed", c.seed)
                .set("train_fraction", c.train_fraction)
                .set("sampler", c.sampler.name())
                .set("waist", c.geometry.waist)
                .set("wavenumber", c.geometry.wavenumber)
                .set("plane_z", c.geometry.plane_z)
                .set("grid_halfwidth", c.geometry.grid_halfwidth)
                .set("supersample", c.geometry.supersample);
            if let Some(noise) = &c.noise {
                m.set("noise_gaussian_sigma", noise.gaussian_sigma)
                    .set("noise_center_jitter_pixels", noise.center_jitter_pixels);
                if let Some(s) = noise.poisson_scale {
                    m.set("noise_poisson_scale", s);
                }
            }
        }
        Origin::Ingested {
            source,
            seed,
            train_fraction,
        } => {
            m.set("origin", "ingested")
                .set("source", source.display())
                .set("seed", seed)
                .set("train_fraction", train_fraction);
        }
    }
    m.write(dir)?;
    let (n, px) = dataset.primary.dim();
    write_array(
        &dir.join("images_primary.bin"),
        &[n, px],
        dataset.primary.as_standard_layout().as_slice().expect("standard layout"),
    )?;
    if let Some(s) = &dataset.shifted {
        write_array(
            &dir.join("images_shifted.bin"),
            &[n, px],
            s.as_standard_layout().as_slice().expect("standard layout"),
        )?;
    }
    if let (Some(states), Some(targets)) = (&dataset.states, &dataset.targets) {
        let d = dataset.basis.dim();
        let coeffs: Vec<f64> = states
            .iter()
            .flat_map(|s| s.coefficients().iter().flat_map(|c| [c.re, c.im]))
            .collect();
        write_array(&dir.join("coefficients.bin"), &[n, d, 2], &coeffs)?;
        write_array(
            &dir.join("targets.bin"),
            &[n, targets.ncols()],
            targets.as_standard_layout().as_slice().expect("standard layout"),
        )?;
    }
    let idx = |v: &[usize]| v.iter().map(|&i| i as u64).collect::<Vec<_>>();
    write_array(&dir.join("split_train.bin"), &[dataset.train.len()], &idx(&dataset.train))?;
    write_array(&dir.join("split_test.bin"), &[dataset.test.len()], &idx(&dataset.test))?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let m = Manifest::read(dir)?;
    if m.require("format")? != DATASET_FORMAT {
        return Err(Error::format("manifest", "not a dataset directory"));
    }
    let basis = ModeBasis::parse(m.require("basis")?)?;
    let grid_n: usize = m.parse_value("grid_n")?;
    let n: usize = m.parse_value("n_samples")?;
    let mode = ImageMode::parse(m.require("image_mode")?)?;
    let labeled: bool = m.parse_value("labeled")?;
    let matrix_f32 = |name: &str| -> Result<Array2<f32>> {
        let a = read_array::<f32>(&dir.join(name))?;
        let a = a
            .into_dimensionality()
            .map_err(|_| Error::format(name, "expected a matrix"))?;
        shape_check(name, a.dim(), (n, grid_n * grid_n))?;
        Ok(a)
    };
    let primary = matrix_f32("images_primary.bin")?;
    let shifted = match mode {
        ImageMode::Pair => Some(matrix_f32("images_shifted.bin")?),
        ImageMode::Single => None,
    };
    let (states, targets) = if labeled {
        let d = basis.dim();
        let coeffs = read_array::<f64>(&dir.join("coefficients.bin"))?;
        if coeffs.shape() != [n, d, 2] {
            return Err(Error::format("coefficients.bin", "unexpected shape"));
        }
        let flat = coeffs.as_standard_layout();
        let flat = flat.as_slice().expect("standard layout");
        let states = flat
            .chunks_exact(2 * d)
            .map(|c| {
                PureState::new(
                    basis.clone(),
                    c.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let targets: Array2<f64> = read_array::<f64>(&dir.join("targets.bin"))?
            .into_dimensionality()
            .map_err(|_| Error::format("targets.bin", "expected a matrix"))?;
        shape_check("targets.bin", targets.dim(), (n, d * d - 1))?;
        (Some(states), Some(targets))
    } else {
        (None, None)
    };
    let index = |name: &str| -> Result<Vec<usize>> {
        let v = read_array::<u64>(&dir.join(name))?;
        let v: Vec<usize> = v.iter().map(|&i| i as usize).collect();
        ensure(v.iter().all(|&i| i < n), || format!("{name} index out of range"))?;
        Ok(v)
    };
    let train = index("split_train.bin")?;
    let test = index("split_test.bin")?;
    let seed: u64 = m.parse_value("seed")?;
    let train_fraction: f64 = m.parse_value("train_fraction")?;
    let origin = match m.require("origin")? {
        "generated" => {
            let geometry = BeamGeometry {
                waist: m.parse_value("waist")?,
                wavenumber: m.parse_value("wavenumber")?,
                plane_z: m.parse_value("plane_z")?,
                grid_n,
                grid_halfwidth: m.parse_value("grid_halfwidth")?,
                supersample: m.parse_value("supersample")?,
            };
            let noise = match m.get("noise_gaussian_sigma") {
                Some(_) => Some(NoiseSpec {
                    gaussian_sigma: m.parse_value("noise_gaussian_sigma")?,
                    center_jitter_pixels: m.parse_value("noise_center_jitter_pixels")?,
                    poisson_scale: m
                        .get("noise_poisson_scale")
                        .map(|_| m.parse_value("noise_poisson_scale"))
                        .transpose()?,
                }),
                None => None,
            };
            Origin::Generated(DatasetConfig {
                basis: basis.clone(),
                n_samples: n,
                geometry,
                image_mode: mode,
                noise,
                seed,
                train_fraction,
                sampler: StateSampler::parse(m.require("sampler")?)?,
            })
        }
        "ingested" => Origin::Ingested {
            source: PathBuf::from(m.require("source")?),
            seed,
            train_fraction,
        },
        other => return Err(Error::format("manifest", format!("unknown origin {other:?}"))),
    };
    Ok(Dataset {
        origin,
        basis,
        grid_n,
        primary,
        shifted,
        states,
        targets,
        train,
        test,
    })
}

fn shape_check(name: &str, got: (usize, usize), expected: (usize, usize)) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::format(
            name,
            format!("shape {got:?}, expected {expected:?}"),
        ))
    }
}
