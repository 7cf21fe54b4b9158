use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};
use ndarray::{s, Array2, Axis};

use crate::error::{ensure, Result};
use crate::optics::{BeamGeometry, Normalization, Renderer};
use crate::reduce::{PcaModel, PcaOptions};
use crate::regress::RegressorKind;
use crate::statespace::{family_state, GgmBasis, PureState};

use super::model::{fit_regressor, project_rows};
use super::{fidelity_stats, Against, Dataset, FidelityStats, FitOptions, ImageMode, LatentSplit, Prediction};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub total_dims: usize,
    pub mode: ImageMode,
    pub regressor: RegressorKind,
    pub mean_fidelity: f64,
    pub stderr: f64,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub const CSV_HEADER: &'static str = "total_dims,mode,regressor,mean_fidelity,stderr,n_test";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{}\n",
                r.total_dims,
                r.mode.name(),
                r.regressor.name(),
                r.mean_fidelity,
                r.stderr,
                r.n_test
            ));
        }
        out
    }

    pub fn get(&self, total_dims: usize, mode: ImageMode) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.total_dims == total_dims && r.mode == mode)
    }
}

/// Train and test latents at the widest split a sweep needs. Narrower
/// points are leading column blocks, because PCA components are nested.
struct LatentCache {
    split: LatentSplit,
    train: Array2<f64>,
    test: Array2<f64>,
}

impl LatentCache {
    fn build(dataset: &Dataset, split: LatentSplit, options: &FitOptions) -> Result<Self> {
        let pca = PcaOptions {
            solver: options.pca_solver,
            whiten: false,
        };
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (shifted, n) in [(false, split.primary), (true, split.shifted)] {
            if n == 0 {
                continue;
            }
            let rows = dataset.channel_rows(shifted, &dataset.train)?;
            let model = PcaModel::fit(rows.view(), n, pca)?;
            train.push(model.transform_rows(rows.view())?);
            drop(rows);
            let rows = dataset.channel_rows(shifted, &dataset.test)?;
            test.push(model.transform_rows(rows.view())?);
        }
        let cat = |parts: &[Array2<f64>]| {
            ndarray::concatenate(Axis(1), &parts.iter().map(|a| a.view()).collect::<Vec<_>>())
                .expect("same rows")
        };
        Ok(Self {
            split,
            train: cat(&train),
            test: cat(&test),
        })
    }

    fn columns(&self, split: LatentSplit) -> Vec<usize> {
        (0..split.primary)
            .chain(self.split.primary..self.split.primary + split.shifted)
            .collect()
    }

    fn predict(&self, dataset: &Dataset, split: LatentSplit, options: &FitOptions) -> Result<Vec<Prediction>> {
        let cols = self.columns(split);
        let train = self.train.select(Axis(1), &cols);
        let test = self.test.select(Axis(1), &cols);
        let targets = dataset.targets()?.select(Axis(0), &dataset.train);
        let (regressor, _) = fit_regressor(train.view(), targets.view(), options)?;
        let raw = regressor.predict_rows(test.view())?;
        project_rows(&dataset.basis, &raw)
    }
}

fn test_truth(dataset: &Dataset) -> Result<Vec<&PureState>> {
    let states = dataset.states()?;
    Ok(dataset.test.iter().map(|&i| &states[i]).collect())
}

/// Mean test fidelity for each total latent budget and image mode. One PCA
/// per channel is fitted at the largest budget and truncated for the rest;
/// the regressor is refitted at every point.
pub fn sweep_latent_dims(
    dataset: &Dataset,
    dims: &[usize],
    modes: &[ImageMode],
    options: &FitOptions,
) -> Result<SweepResult> {
    ensure(!dims.is_empty() && dims[0] >= 1, || "dims must be positive".into())?;
    ensure(dims.windows(2).all(|w| w[0] < w[1]), || {
        "dims must be strictly ascending".into()
    })?;
    let truth = test_truth(dataset)?;
    let max = *dims.last().expect("non-empty");
    let mut result = SweepResult::default();
    for &mode in modes {
        let cache = LatentCache::build(dataset, LatentSplit::total(max, mode), options)?;
        for &total in dims {
            let preds = cache.predict(dataset, LatentSplit::total(total, mode), options)?;
            let stats = fidelity_stats(&preds, &truth, Against::Correct)?;
            result.rows.push(SweepRow {
                total_dims: total,
                mode,
                regressor: options.regressor,
                mean_fidelity: stats.mean,
                stderr: stats.stderr,
                n_test: stats.len(),
            });
        }
    }
    Ok(result)
}

/// Mean `|b_z|` of the raw qubit predictions, and of the true test states.
#[derive(Debug, Clone, PartialEq)]
pub struct EquatorDiagnostic {
    pub single_mean_abs_bz: f64,
    pub pair_mean_abs_bz: f64,
    pub truth_mean_abs_bz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryReport {
    pub total_dims: usize,
    pub single_correct: FidelityStats,
    pub single_flipped: FidelityStats,
    pub pair_correct: FidelityStats,
    pub pair_flipped: FidelityStats,
    /// Qubit datasets only.
    pub equator: Option<EquatorDiagnostic>,
}

impl SymmetryReport {
    pub const CSV_HEADER: &'static str = "mode,against,total_dims,mean_fidelity,stderr,n_test";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (mode, against, s) in [
            ("single", "correct", &self.single_correct),
            ("single", "flipped", &self.single_flipped),
            ("pair", "correct", &self.pair_correct),
            ("pair", "flipped", &self.pair_flipped),
        ] {
            out.push_str(&format!(
                "{mode},{against},{},{:.6},{:.6},{}\n",
                self.total_dims,
                s.mean,
                s.stderr,
                s.len()
            ));
        }
        out
    }
}

/// Single-image and pair models at the same total latent budget, each scored
/// against the true and the flipped states on one test split.
pub fn symmetry_analysis(dataset: &Dataset, total_dims: usize, options: &FitOptions) -> Result<SymmetryReport> {
    ensure(dataset.shifted.is_some(), || {
        "symmetry analysis needs a pair dataset".into()
    })?;
    let truth = test_truth(dataset)?;
    let run = |mode: ImageMode| -> Result<(FidelityStats, FidelityStats, Vec<Prediction>)> {
        let split = LatentSplit::total(total_dims, mode);
        let cache = LatentCache::build(dataset, split, options)?;
        let preds = cache.predict(dataset, split, options)?;
        Ok((
            fidelity_stats(&preds, &truth, Against::Correct)?,
            fidelity_stats(&preds, &truth, Against::Flipped)?,
            preds,
        ))
    };
    let (single_correct, single_flipped, single) = run(ImageMode::Single)?;
    let (pair_correct, pair_flipped, pair) = run(ImageMode::Pair)?;
    let equator = (dataset.basis.dim() == 2).then(|| {
        let z = GgmBasis::new(2).expect("d = 2").first_diagonal();
        let mean_abs = |p: &[Prediction]| {
            p.iter().map(|p| p.raw.components[z].abs()).sum::<f64>() / p.len() as f64
        };
        let targets = dataset.targets().expect("labeled");
        EquatorDiagnostic {
            single_mean_abs_bz: mean_abs(&single),
            pair_mean_abs_bz: mean_abs(&pair),
            truth_mean_abs_bz: dataset.test.iter().map(|&i| targets[[i, z]].abs()).sum::<f64>()
                / dataset.test.len() as f64,
        }
    });
    Ok(SymmetryReport {
        total_dims,
        single_correct,
        single_flipped,
        pair_correct,
        pair_flipped,
        equator,
    })
}

/// Circle fitted to the latent images of one θ slice of the qubit family.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleFit {
    pub theta: f64,
    pub radius: f64,
    pub rms_residual: f64,
    /// Largest pairwise distance between the slice's latent points.
    pub diameter: f64,
    pub center: [f64; 3],
}

impl CircleFit {
    pub const CSV_HEADER: &'static str = "theta,radius,rms_residual,diameter,center_0,center_1,center_2";

    pub fn csv(fits: &[CircleFit]) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for f in fits {
            out.push_str(&format!(
                "{:.6},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}\n",
                f.theta, f.radius, f.rms_residual, f.diameter, f.center[0], f.center[1], f.center[2]
            ));
        }
        out
    }
}

/// Renders the family `cos(θ/2)|+1⟩ + e^{iφ} sin(θ/2)|−1⟩` on a φ grid for
/// each θ, fits one 3-component PCA to every image and fits a circle to each
/// θ slice in that latent space.
pub fn latent_geometry(thetas: &[f64], n_phi: usize, geom: &BeamGeometry) -> Result<Vec<CircleFit>> {
    ensure(!thetas.is_empty(), || "need at least one theta".into())?;
    ensure(n_phi >= 3, || "need at least 3 phase samples".into())?;
    let renderer = Renderer::new(geom, [-1, 1])?;
    let pixels = geom.grid_n * geom.grid_n;
    let mut images = Array2::<f64>::zeros((thetas.len() * n_phi, pixels));
    for (t, &theta) in thetas.iter().enumerate() {
        for k in 0..n_phi {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / n_phi as f64;
            let img = renderer.render(&family_state(theta, phi)?, Normalization::UnitSum)?;
            images
                .row_mut(t * n_phi + k)
                .iter_mut()
                .zip(img.pixels())
                .for_each(|(d, v)| *d = *v);
        }
    }
    let pca = PcaModel::fit(images.view(), 3, PcaOptions::default())?;
    let latents = pca.transform_rows(images.view())?;
    thetas
        .iter()
        .enumerate()
        .map(|(t, &theta)| {
            let block = latents.slice(s![t * n_phi..(t + 1) * n_phi, ..]);
            let points: Vec<Vector3<f64>> = block
                .rows()
                .into_iter()
                .map(|r| Vector3::new(r[0], r[1], r[2]))
                .collect();
            Ok(fit_circle(theta, &points))
        })
        .collect()
}

/// Least-squares plane, then the algebraic (Kåsa) circle in that plane.
/// A slice collapsed to a point, relative to the latent scale, gets radius 0.
pub fn fit_circle(theta: f64, points: &[Vector3<f64>]) -> CircleFit {
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let mut diameter: f64 = 0.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            diameter = diameter.max((a - b).norm());
        }
    }
    let scale = centroid.norm().max(1e-300);
    if diameter <= 1e-9 * scale {
        return CircleFit {
            theta,
            radius: 0.0,
            rms_residual: 0.0,
            diameter,
            center: [centroid.x, centroid.y, centroid.z],
        };
    }
    let cov = points.iter().fold(Matrix3::zeros(), |a, p| {
        let d = p - centroid;
        a + d * d.transpose()
    });
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let u = eig.eigenvectors.column(order[0]).into_owned();
    let v = eig.eigenvectors.column(order[1]).into_owned();
    let planar: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let d = p - centroid;
            (d.dot(&u), d.dot(&v))
        })
        .collect();
    // x² + y² + D x + E y + F = 0
    let a = DMatrix::from_fn(planar.len(), 3, |i, j| match j {
        0 => planar[i].0,
        1 => planar[i].1,
        _ => 1.0,
    });
    let rhs = DVector::from_iterator(planar.len(), planar.iter().map(|(x, y)| -(x * x + y * y)));
    let sol = a
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .unwrap_or_else(|_| DVector::zeros(3));
    let (cx, cy) = (-sol[0] / 2.0, -sol[1] / 2.0);
    let radius = (cx * cx + cy * cy - sol[2]).max(0.0).sqrt();
    let rms = (planar
        .iter()
        .map(|(x, y)| ((x - cx).hypot(y - cy) - radius).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let center = centroid + u * cx + v * cy;
    CircleFit {
        theta,
        radius,
        rms_residual: rms,
        diameter,
        center: [center.x, center.y, center.z],
    }
}
