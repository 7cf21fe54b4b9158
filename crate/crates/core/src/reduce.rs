//! Principal component analysis.
//!
//! The reference semantics are the top right singular directions of the
//! centred data matrix. Three solvers compute them: a dense covariance
//! eigendecomposition (few features), a Gram-matrix eigendecomposition (few
//! samples) and a block Krylov iteration with full reorthogonalization for
//! image-sized problems, where only the leading components are needed.

use nalgebra::DMatrix;
use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PcaSolver {
    #[default]
    Auto,
    Covariance,
    Gram,
    Krylov,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PcaOptions {
    pub solver: PcaSolver,
    /// Scale latents to unit variance.
    pub whiten: bool,
}

/// Fitted PCA: mean plus orthonormal component rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `n × m`, rows orthonormal.
    pub components: Array2<f64>,
    /// Singular values of the centred data, non-increasing.
    pub singular_values: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub n_samples: usize,
    pub whiten: bool,
}

const DENSE_LIMIT: usize = 640;

impl PcaModel {
    /// Fits `n_components` components to the rows of `data`.
    pub fn fit(data: ArrayView2<f64>, n_components: usize, options: PcaOptions) -> Result<Self> {
        let (samples, m) = data.dim();
        ensure(samples >= 2, || format!("PCA needs at least 2 samples, got {samples}"))?;
        ensure(n_components >= 1, || "PCA needs at least one component".into())?;
        let limit = (samples - 1).min(m);
        ensure(n_components <= limit, || {
            format!("{n_components} components requested but at most {limit} are available")
        })?;
        ensure(data.iter().all(|x| x.is_finite()), || "PCA data must be finite".into())?;

        let mean = data.mean_axis(Axis(0)).expect("non-empty");
        let centred = &data - &mean;
        let total_ss: f64 = centred.iter().map(|x| x * x).sum();

        let solver = match options.solver {
            PcaSolver::Auto if m <= DENSE_LIMIT => PcaSolver::Covariance,
            PcaSolver::Auto if samples <= DENSE_LIMIT => PcaSolver::Gram,
            PcaSolver::Auto => PcaSolver::Krylov,
            other => other,
        };
        let (eigenvalues, vectors) = match solver {
            PcaSolver::Covariance => covariance_eigen(&centred, n_components),
            PcaSolver::Gram => gram_eigen(&centred, n_components),
            PcaSolver::Krylov | PcaSolver::Auto => krylov_eigen(&centred, n_components),
        };

        let mut components = vectors.reversed_axes();
        for mut row in components.rows_mut() {
            let mut pivot = 0;
            for (j, v) in row.iter().enumerate() {
                if v.abs() > row[pivot].abs() {
                    pivot = j;
                }
            }
            if row[pivot] < 0.0 {
                row.mapv_inplace(|v| -v);
            }
        }
        let eigenvalues: Vec<f64> = eigenvalues.into_iter().map(|l| l.max(0.0)).collect();
        let singular_values = eigenvalues.iter().map(|l| l.sqrt()).collect();
        let explained_variance_ratio = eigenvalues
            .iter()
            .map(|l| if total_ss > 0.0 { (l / total_ss).clamp(0.0, 1.0) } else { 0.0 })
            .collect();
        Ok(Self {
            mean,
            components,
            singular_values,
            explained_variance_ratio,
            n_samples: samples,
            whiten: options.whiten,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    /// Variance of each latent coordinate over the training data.
    pub fn explained_variance(&self) -> Vec<f64> {
        let dof = (self.n_samples - 1) as f64;
        self.singular_values.iter().map(|s| s * s / dof).collect()
    }

    /// Keeps the leading `n` components.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        ensure(n >= 1 && n <= self.n_components(), || {
            format!("cannot truncate {} components to {n}", self.n_components())
        })?;
        Ok(Self {
            mean: self.mean.clone(),
            components: self.components.slice(s![..n, ..]).to_owned(),
            singular_values: self.singular_values[..n].to_vec(),
            explained_variance_ratio: self.explained_variance_ratio[..n].to_vec(),
            n_samples: self.n_samples,
            whiten: self.whiten,
        })
    }

    fn whitening_scale(&self) -> Option<Vec<f64>> {
        self.whiten.then(|| {
            self.explained_variance()
                .iter()
                .map(|v| if *v > 0.0 { 1.0 / v.sqrt() } else { 0.0 })
                .collect()
        })
    }

    /// `y = components · (x − mean)`.
    pub fn transform(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_input(x.len())?;
        let mut y = self.components.dot(&(&x - &self.mean));
        if let Some(scale) = self.whitening_scale() {
            y.iter_mut().zip(scale).for_each(|(v, s)| *v *= s);
        }
        Ok(y)
    }

    /// Row-wise [`PcaModel::transform`].
    pub fn transform_rows(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(data.ncols())?;
        let mut y = (&data - &self.mean).dot(&self.components.t());
        if let Some(scale) = self.whitening_scale() {
            for mut row in y.rows_mut() {
                row.iter_mut().zip(&scale).for_each(|(v, s)| *v *= s);
            }
        }
        Ok(y)
    }

    /// `x̃ = mean + componentsᵀ · y`.
    pub fn inverse(&self, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        if y.len() != self.n_components() {
            return Err(Error::DimensionMismatch {
                expected: self.n_components(),
                got: y.len(),
            });
        }
        let mut y = y.to_owned();
        if let Some(scale) = self.whitening_scale() {
            y.iter_mut()
                .zip(scale)
                .for_each(|(v, s)| *v = if s > 0.0 { *v / s } else { 0.0 });
        }
        Ok(&self.mean + &self.components.t().dot(&y))
    }

    fn check_input(&self, got: usize) -> Result<()> {
        if got != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got,
            });
        }
        Ok(())
    }
}

fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Eigenpairs of a symmetric matrix sorted by decreasing eigenvalue.
fn sorted_symmetric_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let mut m = to_nalgebra(a);
    m = (&m + m.transpose()) * 0.5;
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Array2::from_shape_fn((a.nrows(), order.len()), |(r, c)| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

fn covariance_eigen(centred: &Array2<f64>, k: usize) -> (Vec<f64>, Array2<f64>) {
    let c = centred.t().dot(centred);
    let (values, vectors) = sorted_symmetric_eigen(&c);
    (values[..k].to_vec(), vectors.slice(s![.., ..k]).to_owned())
}

fn gram_eigen(centred: &Array2<f64>, k: usize) -> (Vec<f64>, Array2<f64>) {
    let g = centred.dot(&centred.t());
    let (values, u) = sorted_symmetric_eigen(&g);
    let floor = values[0].max(0.0) * 1e-13;
    let mut vectors = Array2::<f64>::zeros((centred.ncols(), k));
    let mut kept = 0;
    for (i, &value) in values.iter().enumerate().take(k) {
        if value <= floor {
            break;
        }
        let v = centred.t().dot(&u.column(i)) / value.sqrt();
        vectors.column_mut(i).assign(&v);
        kept += 1;
    }
    orthonormalize_columns(&mut vectors, kept);
    (values[..k].to_vec(), vectors)
}

/// Re-orthonormalizes the first `kept` columns and completes the rest with
/// coordinate directions orthogonal to them.
fn orthonormalize_columns(v: &mut Array2<f64>, kept: usize) {
    let m = v.nrows();
    let k = v.ncols();
    for i in 0..kept {
        for _ in 0..2 {
            for j in 0..i {
                let p = v.column(j).dot(&v.column(i));
                let cj = v.column(j).to_owned();
                v.column_mut(i).scaled_add(-p, &cj);
            }
        }
        let n = v.column(i).dot(&v.column(i)).sqrt();
        v.column_mut(i).mapv_inplace(|x| x / n);
    }
    let mut filled = kept;
    let mut e = 0;
    while filled < k && e < m {
        let mut cand = Array1::<f64>::zeros(m);
        cand[e] = 1.0;
        for _ in 0..2 {
            for j in 0..filled {
                let p = v.column(j).dot(&cand);
                cand.scaled_add(-p, &v.column(j));
            }
        }
        let n = cand.dot(&cand).sqrt();
        if n > 1e-6 {
            v.column_mut(filled).assign(&(cand / n));
            filled += 1;
        }
        e += 1;
    }
}

const KRYLOV_TOL: f64 = 1e-11;
const KRYLOV_MAX_BLOCKS: usize = 400;

/// Leading eigenpairs of `AᵀA` by block Lanczos with full
/// reorthogonalization and thick restarts.
fn krylov_eigen(a: &Array2<f64>, k: usize) -> (Vec<f64>, Array2<f64>) {
    let m = a.ncols();
    let block = (k + 8).min(m);
    let max_basis = m.min((8 * block).max(160));
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ca1_ab1e);
    let mut x = Array2::from_shape_fn((m, block), |_| rng.sample::<f64, _>(StandardNormal));
    let mut basis = Array2::<f64>::zeros((m, 0));
    let mut image = Array2::<f64>::zeros((m, 0));
    let mut best: Option<(Vec<f64>, Array2<f64>)> = None;

    for _ in 0..KRYLOV_MAX_BLOCKS {
        let x_orth = extend_orthonormal(&basis, x);
        let stalled = x_orth.ncols() == 0;
        if !stalled {
            let ax = a.dot(&x_orth);
            let cx = a.t().dot(&ax);
            basis = concatenate![Axis(1), basis, x_orth];
            image = concatenate![Axis(1), image, cx];
        }
        let t = basis.t().dot(&image);
        let (theta, y) = sorted_symmetric_eigen(&t);
        let kk = k.min(theta.len());
        let ritz = basis.dot(&y.slice(s![.., ..kk]));
        let mut resid = image.dot(&y.slice(s![.., ..kk]));
        for (j, mut col) in resid.columns_mut().into_iter().enumerate() {
            col.scaled_add(-theta[j], &ritz.column(j));
        }
        let scale = theta[0].abs().max(f64::MIN_POSITIVE);
        let converged = kk == k
            && resid
                .columns()
                .into_iter()
                .all(|c| c.dot(&c).sqrt() <= KRYLOV_TOL * scale);
        best = Some((theta[..kk].to_vec(), ritz));
        if converged || stalled || basis.ncols() >= m {
            break;
        }
        if basis.ncols() + block > max_basis {
            let keep = (k + block).min(theta.len());
            let yk = y.slice(s![.., ..keep]).to_owned();
            basis = basis.dot(&yk);
            image = image.dot(&yk);
            x = resid;
        } else {
            x = image.slice(s![.., image.ncols() - block.min(image.ncols())..]).to_owned();
        }
    }
    best.expect("at least one Krylov step")
}

/// Projects the columns of `x` off `basis` and orthonormalizes them, dropping
/// columns that are numerically inside the span.
fn extend_orthonormal(basis: &Array2<f64>, mut x: Array2<f64>) -> Array2<f64> {
    for _ in 0..2 {
        if basis.ncols() > 0 {
            let coeff = basis.t().dot(&x);
            x = x - basis.dot(&coeff);
        }
    }
    let mut kept: Vec<Array1<f64>> = Vec::new();
    for col in x.columns() {
        let original = col.dot(&col).sqrt();
        if original == 0.0 {
            continue;
        }
        let mut v = col.to_owned();
        for _ in 0..2 {
            for q in &kept {
                let p = q.dot(&v);
                v.scaled_add(-p, q);
            }
            if basis.ncols() > 0 {
                let coeff = basis.t().dot(&v);
                v = v - basis.dot(&coeff);
            }
        }
        let n = v.dot(&v).sqrt();
        if n > 1e-10 * original {
            kept.push(v / n);
        }
    }
    let mut out = Array2::<f64>::zeros((x.nrows(), kept.len()));
    for (j, v) in kept.into_iter().enumerate() {
        out.column_mut(j).assign(&v);
    }
    out
}
