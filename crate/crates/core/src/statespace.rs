//! Qudit state algebra over a basis of p = 0 Laguerre-Gauss modes.
//!
//! States are coefficient vectors over an ordered set of azimuthal indices.
//! Their density matrices are expanded in the generalized Gell-Mann (GGM)
//! basis with normalization `tr(Λi Λj) = 2 δij`, which gives the Bloch vector
//! used as the regression target.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

const NORM_TOL: f64 = 1e-12;

/// Ordered set of azimuthal indices ℓ spanning the qudit space. The radial
/// index is always 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeBasis {
    indices: Vec<i32>,
}

impl ModeBasis {
    pub fn new(indices: Vec<i32>) -> Result<Self> {
        ensure(!indices.is_empty(), || "mode basis is empty".into())?;
        ensure(indices.windows(2).all(|w| w[0] < w[1]), || {
            format!("azimuthal indices must be strictly increasing, got {indices:?}")
        })?;
        Ok(Self { indices })
    }

    /// Basis with a radial index other than 0 is not supported.
    pub fn with_radial_index(indices: Vec<i32>, radial: u32) -> Result<Self> {
        ensure(radial == 0, || {
            format!("only radial index p = 0 is supported, got p = {radial}")
        })?;
        Self::new(indices)
    }

    /// Basis symmetric under ℓ → −ℓ: consecutive integers centred on 0 for
    /// odd `d`, and the odd integers ±1, ±3, …, ±(d−1) for even `d`.
    pub fn symmetric(d: usize) -> Result<Self> {
        ensure(d >= 2, || format!("dimension must be at least 2, got {d}"))?;
        let d = d as i32;
        let indices = if d % 2 == 1 {
            (-(d - 1) / 2..=(d - 1) / 2).collect()
        } else {
            (0..d).map(|i| 2 * i - (d - 1)).collect()
        };
        Self::new(indices)
    }

    pub fn indices(&self) -> &[i32] {
        &self.indices
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn radial_index(&self) -> u32 {
        0
    }

    pub fn position(&self, ell: i32) -> Option<usize> {
        self.indices.binary_search(&ell).ok()
    }

    pub fn shifted(&self, delta: i32) -> Self {
        Self {
            indices: self.indices.iter().map(|l| l + delta).collect(),
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            indices: self.indices.iter().rev().map(|l| -l).collect(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.negated() == *self
    }

    /// Parses a comma separated list such as `-3,-1,1,3`.
    pub fn parse(text: &str) -> Result<Self> {
        let indices = text
            .split(',')
            .map(|t| t.trim())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<i32>()
                    .map_err(|_| Error::InvalidInput(format!("bad azimuthal index {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(indices)
    }
}

impl std::fmt::Display for ModeBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.indices.iter().map(|l| l.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Normalized superposition `Σ cℓ |ℓ⟩`. The global phase is left as given.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    basis: ModeBasis,
    coefficients: Vec<Complex64>,
}

impl PureState {
    pub fn new(basis: ModeBasis, coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: coefficients.len(),
            });
        }
        ensure(coefficients.iter().all(|c| c.re.is_finite() && c.im.is_finite()), || {
            "state coefficients must be finite".into()
        })?;
        let norm = norm(&coefficients);
        ensure((norm - 1.0).abs() <= NORM_TOL, || {
            format!("state norm is {norm}, expected 1")
        })?;
        Ok(Self {
            basis,
            coefficients,
        })
    }

    /// Normalizes `coefficients` before building the state.
    pub fn normalized(basis: ModeBasis, coefficients: Vec<Complex64>) -> Result<Self> {
        let n = norm(&coefficients);
        ensure(n.is_finite() && n > 0.0, || {
            "cannot normalize a zero or non-finite vector".into()
        })?;
        let scaled = coefficients.iter().map(|c| c / n).collect();
        Self::new(basis, scaled)
    }

    /// Single basis mode |ℓ⟩.
    pub fn mode(ell: i32) -> Self {
        Self {
            basis: ModeBasis { indices: vec![ell] },
            coefficients: vec![Complex64::new(1.0, 0.0)],
        }
    }

    pub fn basis(&self) -> &ModeBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coefficients)
    }

    /// Coefficient of mode ℓ, zero if ℓ is not in the basis.
    pub fn amplitude(&self, ell: i32) -> Complex64 {
        self.basis
            .position(ell)
            .map_or(Complex64::new(0.0, 0.0), |i| self.coefficients[i])
    }

    /// Multiplies every coefficient by `e^{iα}`.
    pub fn with_global_phase(&self, alpha: f64) -> Self {
        let phase = Complex64::from_polar(1.0, alpha);
        Self {
            basis: self.basis.clone(),
            coefficients: self.coefficients.iter().map(|c| c * phase).collect(),
        }
    }

    /// Raises every azimuthal index by `delta`, leaving the coefficients
    /// untouched.
    pub fn shift_oam(&self, delta: i32) -> Self {
        Self {
            basis: self.basis.shifted(delta),
            coefficients: self.coefficients.clone(),
        }
    }

    /// The intensity-degenerate partner: the coefficient of mode ℓ becomes the
    /// conjugate of the input coefficient of mode −ℓ, on the negated basis.
    pub fn conjugate_flip(&self) -> Self {
        Self {
            basis: self.basis.negated(),
            coefficients: self.coefficients.iter().rev().map(|c| c.conj()).collect(),
        }
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> Result<Complex64> {
        if self.basis != other.basis {
            return Err(Error::BasisMismatch(format!(
                "[{}] vs [{}]",
                self.basis, other.basis
            )));
        }
        Ok(self
            .coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }
}

fn norm(c: &[Complex64]) -> f64 {
    c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `|⟨ψ|φ⟩|²`, clamped to [0, 1].
pub fn fidelity(psi: &PureState, phi: &PureState) -> Result<f64> {
    Ok(psi.inner(phi)?.norm_sqr().clamp(0.0, 1.0))
}

/// Random pure state with Haar distribution: i.i.d. standard complex Gaussian
/// entries, normalized.
pub fn haar_random(basis: &ModeBasis, seed: u64) -> PureState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    StateSampler::Haar.sample(basis, &mut rng)
}

/// Law used to draw random pure states for datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateSampler {
    /// Real and imaginary part of every coefficient uniform in [0, 1),
    /// then normalized.
    #[default]
    UniformBox,
    /// Haar measure on pure states.
    Haar,
}

impl StateSampler {
    pub fn sample<R: Rng + ?Sized>(self, basis: &ModeBasis, rng: &mut R) -> PureState {
        loop {
            let coefficients: Vec<Complex64> = (0..basis.dim())
                .map(|_| match self {
                    StateSampler::UniformBox => {
                        Complex64::new(rng.random::<f64>(), rng.random::<f64>())
                    }
                    StateSampler::Haar => Complex64::new(
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                    ),
                })
                .collect();
            let n = norm(&coefficients);
            if n > 1e-150 {
                let coefficients = coefficients.iter().map(|c| c / n).collect();
                return PureState {
                    basis: basis.clone(),
                    coefficients,
                };
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StateSampler::UniformBox => "uniform-box",
            StateSampler::Haar => "haar",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "uniform-box" => Ok(StateSampler::UniformBox),
            "haar" => Ok(StateSampler::Haar),
            other => Err(Error::InvalidInput(format!("unknown state sampler {other:?}"))),
        }
    }
}

/// One-qubit family `cos(θ/2)|+1⟩ + e^{iφ} sin(θ/2)|−1⟩` on the ordered basis
/// (−1, +1).
pub fn family_state(theta: f64, phi: f64) -> Result<PureState> {
    ensure((0.0..=std::f64::consts::PI).contains(&theta), || {
        format!("theta must lie in [0, π], got {theta}")
    })?;
    ensure(phi.is_finite(), || "phi must be finite".into())?;
    let basis = ModeBasis::new(vec![-1, 1])?;
    let (s, c) = (theta / 2.0).sin_cos();
    Ok(PureState {
        basis,
        coefficients: vec![Complex64::from_polar(s, phi), Complex64::new(c, 0.0)],
    })
}

/// Sparse description of a GGM generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    /// `|j⟩⟨k| + |k⟩⟨j|`, j < k.
    Symmetric(usize, usize),
    /// `−i|j⟩⟨k| + i|k⟩⟨j|`, j < k.
    Antisymmetric(usize, usize),
    /// `√(2/(l(l+1))) (Σ_{j<l} |j⟩⟨j| − l|l⟩⟨l|)`, 1 ≤ l < d.
    Diagonal(usize),
}

/// Generalized Gell-Mann basis of dimension `d`: symmetric generators first,
/// then antisymmetric ones (both ordered lexicographically in (j, k)), then the
/// diagonal generators by increasing rank.
#[derive(Debug, Clone)]
pub struct GgmBasis {
    dim: usize,
    generators: Vec<Generator>,
    matrices: Vec<DMatrix<Complex64>>,
}

impl GgmBasis {
    pub const MAX_DIM: usize = 16;

    pub fn new(d: usize) -> Result<Self> {
        ensure((2..=Self::MAX_DIM).contains(&d), || {
            format!("GGM dimension must be in 2..={}, got {d}", Self::MAX_DIM)
        })?;
        let pairs: Vec<(usize, usize)> = (0..d)
            .flat_map(|j| (j + 1..d).map(move |k| (j, k)))
            .collect();
        let generators: Vec<Generator> = pairs
            .iter()
            .map(|&(j, k)| Generator::Symmetric(j, k))
            .chain(pairs.iter().map(|&(j, k)| Generator::Antisymmetric(j, k)))
            .chain((1..d).map(Generator::Diagonal))
            .collect();
        let matrices = generators.iter().map(|g| dense(*g, d)).collect();
        Ok(Self {
            dim: d,
            generators,
            matrices,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of generators, `d² − 1`.
    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn matrices(&self) -> &[DMatrix<Complex64>] {
        &self.matrices
    }

    /// Index of the first diagonal generator (σz for d = 2).
    pub fn first_diagonal(&self) -> usize {
        self.dim * (self.dim - 1)
    }

    /// `bᵢ = c† Λᵢ c`.
    pub fn state_to_bloch(&self, state: &PureState) -> Result<BlochVector> {
        if state.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: state.dim(),
            });
        }
        let c = state.coefficients();
        let components = self
            .generators
            .iter()
            .map(|g| match *g {
                Generator::Symmetric(j, k) => 2.0 * (c[j].conj() * c[k]).re,
                Generator::Antisymmetric(j, k) => 2.0 * (c[j].conj() * c[k]).im,
                Generator::Diagonal(l) => {
                    let head: f64 = c[..l].iter().map(|z| z.norm_sqr()).sum();
                    diag_scale(l) * (head - l as f64 * c[l].norm_sqr())
                }
            })
            .collect();
        Ok(BlochVector {
            dim: self.dim,
            components,
        })
    }

    /// `ρ = I/d + ½ Σ bᵢ Λᵢ`.
    pub fn bloch_to_density(&self, b: &BlochVector) -> Result<DensityMatrix> {
        self.check_len(b)?;
        let d = self.dim;
        let mut rho = DMatrix::<Complex64>::identity(d, d) / Complex64::new(d as f64, 0.0);
        for (m, &bi) in self.matrices.iter().zip(&b.components) {
            rho += m * Complex64::new(0.5 * bi, 0.0);
        }
        Ok(DensityMatrix { entries: rho })
    }

    /// `bᵢ = Re tr(ρ Λᵢ)` after Hermitization.
    pub fn density_to_bloch(&self, rho: &DensityMatrix) -> Result<BlochVector> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: rho.dim(),
            });
        }
        let h = rho.hermitized();
        let components = self
            .matrices
            .iter()
            .map(|m| trace_product(&h, m).re)
            .collect();
        Ok(BlochVector {
            dim: self.dim,
            components,
        })
    }

    /// Projects a (possibly unphysical) Bloch vector onto the pure state
    /// maximizing `⟨ψ|ρ̂|ψ⟩`, i.e. the top eigenvector of the Hermitized
    /// reconstruction. The largest-magnitude coefficient is made real positive.
    pub fn nearest_pure(&self, b: &BlochVector, basis: &ModeBasis) -> Result<Projection> {
        if basis.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: basis.dim(),
            });
        }
        ensure(b.components.iter().all(|x| x.is_finite()), || {
            "Bloch vector has non-finite entries".into()
        })?;
        let rho = self.bloch_to_density(b)?.hermitized();
        let eig = rho.symmetric_eigen();
        let mut order: Vec<usize> = (0..self.dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let top = order[0];
        let gap = eig.eigenvalues[top] - eig.eigenvalues[order[1]];
        let v = eig.eigenvectors.column(top);
        let mut coefficients: Vec<Complex64> = v.iter().copied().collect();
        canonicalize_phase(&mut coefficients);
        let state = PureState::normalized(basis.clone(), coefficients)?;
        Ok(Projection {
            state,
            top_eigenvalue: eig.eigenvalues[top],
            degenerate: gap < 1e-12,
        })
    }

    fn check_len(&self, b: &BlochVector) -> Result<()> {
        if b.components.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: b.components.len(),
            });
        }
        Ok(())
    }
}

fn diag_scale(l: usize) -> f64 {
    (2.0 / (l * (l + 1)) as f64).sqrt()
}

fn dense(g: Generator, d: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::<Complex64>::zeros(d, d);
    let i = Complex64::new(0.0, 1.0);
    match g {
        Generator::Symmetric(j, k) => {
            m[(j, k)] = Complex64::new(1.0, 0.0);
            m[(k, j)] = Complex64::new(1.0, 0.0);
        }
        Generator::Antisymmetric(j, k) => {
            m[(j, k)] = -i;
            m[(k, j)] = i;
        }
        Generator::Diagonal(l) => {
            let s = diag_scale(l);
            for j in 0..l {
                m[(j, j)] = Complex64::new(s, 0.0);
            }
            m[(l, l)] = Complex64::new(-s * l as f64, 0.0);
        }
    }
    m
}

fn trace_product(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Complex64 {
    let n = a.nrows();
    let mut t = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            t += a[(i, k)] * b[(k, i)];
        }
    }
    t
}

/// Rotates the global phase so the largest-magnitude entry (first on ties) is
/// real and positive.
pub fn canonicalize_phase(c: &mut [Complex64]) {
    let mut best = 0;
    for (i, z) in c.iter().enumerate() {
        if z.norm_sqr() > c[best].norm_sqr() {
            best = i;
        }
    }
    let pivot = c[best];
    if pivot.norm() > 0.0 {
        let phase = pivot.conj() / pivot.norm();
        for z in c.iter_mut() {
            *z *= phase;
        }
        c[best] = Complex64::new(c[best].norm(), 0.0);
    }
}

/// Real vector of GGM expectation values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub dim: usize,
    pub components: Vec<f64>,
}

impl BlochVector {
    pub fn new(dim: usize, components: Vec<f64>) -> Result<Self> {
        if components.len() + 1 != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim - 1,
                got: components.len(),
            });
        }
        Ok(Self { dim, components })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            components: vec![0.0; dim * dim - 1],
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.components.iter().map(|x| x * x).sum()
    }

    pub fn dot(&self, other: &BlochVector) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Hermitian unit-trace matrix; positivity is not required.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Accepts matrices that are Hermitian within 1e-8 and have unit trace
    /// within 1e-10.
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        ensure(entries.is_square(), || "density matrix must be square".into())?;
        let herm_err = (&entries - entries.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        ensure(herm_err <= 1e-8, || {
            format!("density matrix is not Hermitian (deviation {herm_err:e})")
        })?;
        let tr = entries.trace();
        ensure((tr - Complex64::new(1.0, 0.0)).norm() <= 1e-10, || {
            format!("density matrix trace is {tr}, expected 1")
        })?;
        Ok(Self { entries })
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn projector(state: &PureState) -> Self {
        let c = nalgebra::DVector::from_column_slice(state.coefficients());
        Self {
            entries: &c * c.adjoint(),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn hermitized(&self) -> DMatrix<Complex64> {
        (&self.entries + self.entries.adjoint()) * Complex64::new(0.5, 0.0)
    }
}

/// Result of [`GgmBasis::nearest_pure`].
#[derive(Debug, Clone)]
pub struct Projection {
    pub state: PureState,
    pub top_eigenvalue: f64,
    /// Top eigenvalue gap below 1e-12; the returned vector is then one
    /// deterministic member of the top eigenspace.
    pub degenerate: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn basis_validation() {
        assert!(ModeBasis::new(vec![1, -1]).is_err());
        assert!(ModeBasis::new(vec![0, 0]).is_err());
        assert!(ModeBasis::new(vec![]).is_err());
        assert!(ModeBasis::with_radial_index(vec![0, 1], 1).is_err());
        assert_eq!(ModeBasis::parse("-3, -1,1,3").unwrap().indices(), &[-3, -1, 1, 3]);
        assert!(ModeBasis::parse("1,x").is_err());
    }

    #[test]
    fn symmetric_bases() {
        assert_eq!(ModeBasis::symmetric(2).unwrap().indices(), &[-1, 1]);
        assert_eq!(ModeBasis::symmetric(3).unwrap().indices(), &[-1, 0, 1]);
        assert_eq!(ModeBasis::symmetric(4).unwrap().indices(), &[-3, -1, 1, 3]);
        for d in 2..=8 {
            let b = ModeBasis::symmetric(d).unwrap();
            assert_eq!(b.dim(), d);
            assert!(b.is_symmetric());
        }
    }

    #[test]
    fn pauli_matrices_for_qubits() {
        let g = GgmBasis::new(2).unwrap();
        let m = g.matrices();
        assert_eq!(m[0], DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]));
        assert_eq!(m[1], DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]));
        assert_eq!(m[2], DMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]));
    }

    #[test]
    fn ggm_orthogonality_brute_force() {
        for d in [2, 3, 4, 7] {
            let g = GgmBasis::new(d).unwrap();
            assert_eq!(g.len(), d * d - 1);
            for (i, a) in g.matrices().iter().enumerate() {
                assert!(a.trace().norm() < 1e-14);
                assert!((a - a.adjoint()).iter().all(|z| z.norm() < 1e-14));
                for (j, b) in g.matrices().iter().enumerate() {
                    let t = trace_product(a, b);
                    let expected = if i == j { 2.0 } else { 0.0 };
                    assert!((t - c(expected, 0.0)).norm() < 1e-12, "d={d} ({i},{j}) -> {t}");
                }
            }
        }
        assert!(GgmBasis::new(1).is_err());
        assert!(GgmBasis::new(17).is_err());
    }

    #[test]
    fn bloch_of_qubit_eigenstates() {
        let g = GgmBasis::new(2).unwrap();
        let basis = ModeBasis::new(vec![-1, 1]).unwrap();
        let up = PureState::new(basis.clone(), vec![c(1., 0.), c(0., 0.)]).unwrap();
        assert_eq!(g.state_to_bloch(&up).unwrap().components, vec![0.0, 0.0, 1.0]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = PureState::new(basis, vec![c(s, 0.), c(s, 0.)]).unwrap();
        let b = g.state_to_bloch(&plus).unwrap();
        assert_abs_diff_eq!(b.components[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.components[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.components[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn sparse_bloch_matches_dense_quadratic_form() {
        let basis = ModeBasis::symmetric(5).unwrap();
        let g = GgmBasis::new(5).unwrap();
        let psi = haar_random(&basis, 11);
        let v = nalgebra::DVector::from_column_slice(psi.coefficients());
        let b = g.state_to_bloch(&psi).unwrap();
        for (m, bi) in g.matrices().iter().zip(&b.components) {
            let q = (v.adjoint() * m * &v)[(0, 0)];
            assert!((q.re - bi).abs() < 1e-14 && q.im.abs() < 1e-14);
        }
    }

    #[test]
    fn pure_bloch_norm_identity() {
        for d in 2..=8 {
            let basis = ModeBasis::symmetric(d).unwrap();
            let g = GgmBasis::new(d).unwrap();
            for seed in 0..20 {
                let b = g.state_to_bloch(&haar_random(&basis, seed)).unwrap();
                let expected = 2.0 * (1.0 - 1.0 / d as f64);
                assert!((b.norm_sqr() - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn density_round_trips() {
        let basis = ModeBasis::symmetric(4).unwrap();
        let g = GgmBasis::new(4).unwrap();
        let zero = g.bloch_to_density(&BlochVector::zeros(4)).unwrap();
        assert!((zero.entries() - DMatrix::identity(4, 4) * c(0.25, 0.0)).iter().all(|z| z.norm() < 1e-15));

        let psi = haar_random(&basis, 3);
        let rho = g.bloch_to_density(&g.state_to_bloch(&psi).unwrap()).unwrap();
        let proj = DensityMatrix::projector(&psi);
        assert!((rho.entries() - proj.entries()).iter().all(|z| z.norm() < 1e-10));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = BlochVector::new(4, (0..15).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap();
        let back = g.density_to_bloch(&g.bloch_to_density(&b).unwrap()).unwrap();
        for (x, y) in b.components.iter().zip(&back.components) {
            assert!((x - y).abs() < 1e-12);
        }
        let back = g.density_to_bloch(&proj).unwrap();
        let direct = g.state_to_bloch(&psi).unwrap();
        for (x, y) in direct.components.iter().zip(&back.components) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn density_rejects_non_hermitian() {
        let mut m = DMatrix::<Complex64>::identity(2, 2) * c(0.5, 0.0);
        m[(0, 1)] = c(0.1, 0.0);
        assert!(DensityMatrix::new(m).is_err());
        let m = DMatrix::<Complex64>::identity(2, 2);
        assert!(DensityMatrix::new(m).is_err());
    }

    #[test]
    fn nearest_pure_recovers_pure_input() {
        let basis = ModeBasis::symmetric(4).unwrap();
        let g = GgmBasis::new(4).unwrap();
        for seed in 0..10 {
            let psi = haar_random(&basis, seed);
            let p = g.nearest_pure(&g.state_to_bloch(&psi).unwrap(), &basis).unwrap();
            assert!(!p.degenerate);
            assert!((fidelity(&p.state, &psi).unwrap() - 1.0).abs() < 1e-10);
            let top = p
                .state
                .coefficients()
                .iter()
                .copied()
                .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
                .unwrap();
            assert!(top.im == 0.0 && top.re > 0.0);
        }
    }

    #[test]
    fn nearest_pure_of_noisy_mixture() {
        // 0.9 |ψ⟩⟨ψ| + 0.1 I/d has eigenvalues 0.9 + 0.1/d (once) and 0.1/d,
        // with ψ the top eigenvector.
        let basis = ModeBasis::symmetric(3).unwrap();
        let g = GgmBasis::new(3).unwrap();
        let psi = haar_random(&basis, 42);
        let mix = DensityMatrix::projector(&psi).entries() * c(0.9, 0.0)
            + DMatrix::<Complex64>::identity(3, 3) * c(0.1 / 3.0, 0.0);
        let b = g.density_to_bloch(&DensityMatrix::new(mix).unwrap()).unwrap();
        let p = g.nearest_pure(&b, &basis).unwrap();
        assert!((fidelity(&p.state, &psi).unwrap() - 1.0).abs() < 1e-10);
        assert!((p.top_eigenvalue - (0.9 + 0.1 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn nearest_pure_flags_maximally_mixed() {
        let basis = ModeBasis::symmetric(3).unwrap();
        let g = GgmBasis::new(3).unwrap();
        let p = g.nearest_pure(&BlochVector::zeros(3), &basis).unwrap();
        assert!(p.degenerate);
        assert!((p.state.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_basics() {
        let basis = ModeBasis::new(vec![-1, 1]).unwrap();
        let e1 = PureState::new(basis.clone(), vec![c(1., 0.), c(0., 0.)]).unwrap();
        let e2 = PureState::new(basis.clone(), vec![c(0., 0.), c(1., 0.)]).unwrap();
        assert_eq!(fidelity(&e1, &e1).unwrap(), 1.0);
        assert_eq!(fidelity(&e1, &e2).unwrap(), 0.0);
        let psi = haar_random(&basis, 9);
        assert!((fidelity(&psi, &psi.with_global_phase(1.234)).unwrap() - 1.0).abs() < 1e-14);
        let other = PureState::mode(0);
        assert!(matches!(fidelity(&psi, &other), Err(Error::BasisMismatch(_))));
    }

    #[test]
    fn fidelity_closed_form_from_bloch_vectors() {
        for d in [2, 3, 5] {
            let basis = ModeBasis::symmetric(d).unwrap();
            let g = GgmBasis::new(d).unwrap();
            for seed in 0..10 {
                let a = haar_random(&basis, seed);
                let b = haar_random(&basis, seed + 100);
                let f = fidelity(&a, &b).unwrap();
                assert!((f - fidelity(&b, &a).unwrap()).abs() < 1e-15);
                let ba = g.state_to_bloch(&a).unwrap();
                let bb = g.state_to_bloch(&b).unwrap();
                assert!((f - (1.0 / d as f64 + 0.5 * ba.dot(&bb))).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn haar_sampling_is_seeded() {
        let basis = ModeBasis::symmetric(4).unwrap();
        let a = haar_random(&basis, 77);
        let b = haar_random(&basis, 77);
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_ne!(a, haar_random(&basis, 78));
    }

    #[test]
    fn haar_second_moment() {
        // E|c_i|² = 1/d; each sample of |c_i|² has variance (d−1)/(d²(d+1)).
        let d = 4;
        let basis = ModeBasis::symmetric(d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let mut sums = vec![0.0; d];
        for _ in 0..n {
            let s = StateSampler::Haar.sample(&basis, &mut rng);
            for (acc, z) in sums.iter_mut().zip(s.coefficients()) {
                *acc += z.norm_sqr();
            }
        }
        let sd = ((d - 1) as f64 / ((d * d) as f64 * (d + 1) as f64)).sqrt();
        let se = sd / (n as f64).sqrt();
        for s in sums {
            assert!((s / n as f64 - 0.25).abs() < 3.0 * se);
        }
    }

    #[test]
    fn one_qubit_family() {
        let up = family_state(0.0, 1.0).unwrap();
        assert_eq!(up.basis().indices(), &[-1, 1]);
        assert!((up.amplitude(1) - c(1.0, 0.0)).norm() < 1e-15);
        assert!(up.amplitude(-1).norm() < 1e-15);

        let down = family_state(PI, 0.7).unwrap();
        assert!((down.amplitude(-1) - Complex64::from_polar(1.0, 0.7)).norm() < 1e-15);
        assert!(down.amplitude(1).norm() < 1e-15);

        let eq = family_state(PI / 2.0, 0.0).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((eq.amplitude(1) - c(s, 0.0)).norm() < 1e-15);
        assert!((eq.amplitude(-1) - c(s, 0.0)).norm() < 1e-15);

        assert!(family_state(4.0, 0.0).is_err());
    }

    #[test]
    fn flip_and_shift_on_five_modes() {
        let basis = ModeBasis::new(vec![-2, -1, 0, 1, 2]).unwrap();
        let raw = vec![c(1., 1.), c(2., -1.), c(0.5, 3.), c(-1., 0.), c(0., 2.)];
        let psi = PureState::normalized(basis, raw).unwrap();
        let [a, b, cc, d, e] = [-2, -1, 0, 1, 2].map(|l| psi.amplitude(l));

        let shifted = psi.shift_oam(1);
        assert_eq!(shifted.basis().indices(), &[-1, 0, 1, 2, 3]);
        assert_eq!(shifted.coefficients(), &[a, b, cc, d, e]);

        let flipped = psi.conjugate_flip();
        assert_eq!(flipped.basis().indices(), &[-2, -1, 0, 1, 2]);
        assert_eq!(
            flipped.coefficients(),
            &[e.conj(), d.conj(), cc.conj(), b.conj(), a.conj()]
        );
    }

    #[test]
    fn flip_on_asymmetric_basis_negates_indices() {
        let basis = ModeBasis::new(vec![-1, 0, 1, 2, 3]).unwrap();
        let psi = haar_random(&basis, 1);
        let f = psi.conjugate_flip();
        assert_eq!(f.basis().indices(), &[-3, -2, -1, 0, 1]);
        assert_eq!(f.amplitude(-3), psi.amplitude(3).conj());
        assert_eq!(f.conjugate_flip(), psi);
    }

    #[test]
    fn shift_preserves_norm() {
        let basis = ModeBasis::symmetric(6).unwrap();
        for seed in 0..100 {
            let psi = haar_random(&basis, seed);
            let n = psi.shift_oam(1).norm();
            assert_eq!(n, psi.norm());
            assert!((n - 1.0).abs() < 1e-12);
        }
        let zero = PureState::mode(0).shift_oam(1);
        assert_eq!(zero.basis().indices(), &[1]);
    }

    #[test]
    fn symmetric_real_state_is_its_own_flip() {
        let basis = ModeBasis::new(vec![-1, 1]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = PureState::new(basis, vec![c(s, 0.), c(s, 0.)]).unwrap();
        assert_eq!(psi.conjugate_flip(), psi);
    }
}
