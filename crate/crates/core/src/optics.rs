//! Laguerre-Gauss fields with radial index 0 and the intensity images of
//! their superpositions.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::statespace::PureState;

/// Beam and camera geometry. Lengths are in arbitrary units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamGeometry {
    pub waist: f64,
    pub wavenumber: f64,
    pub plane_z: f64,
    pub grid_n: usize,
    pub grid_halfwidth: f64,
    /// Sub-samples per pixel side; 1 samples pixel centres only.
    pub supersample: usize,
}

impl Default for BeamGeometry {
    fn default() -> Self {
        Self {
            waist: 1.0,
            wavenumber: 1.0,
            plane_z: 0.0,
            grid_n: 64,
            grid_halfwidth: 4.0,
            supersample: 1,
        }
    }
}

impl BeamGeometry {
    pub fn validate(&self) -> Result<()> {
        ensure(self.waist.is_finite() && self.waist > 0.0, || {
            format!("beam waist must be positive, got {}", self.waist)
        })?;
        ensure(self.wavenumber.is_finite() && self.wavenumber > 0.0, || {
            format!("wavenumber must be positive, got {}", self.wavenumber)
        })?;
        ensure(self.plane_z.is_finite(), || "plane z must be finite".into())?;
        ensure(self.grid_n >= 2, || {
            format!("grid must have at least 2 pixels per side, got {}", self.grid_n)
        })?;
        ensure(self.grid_halfwidth.is_finite() && self.grid_halfwidth > 0.0, || {
            format!("grid half-width must be positive, got {}", self.grid_halfwidth)
        })?;
        ensure(self.supersample >= 1, || "supersample factor must be at least 1".into())
    }

    /// `z₀ = k w₀² / 2`.
    pub fn rayleigh_z0(&self) -> f64 {
        0.5 * self.wavenumber * self.waist * self.waist
    }

    /// Beam radius `W(z)` at the evaluation plane.
    pub fn beam_radius(&self) -> f64 {
        let r = self.plane_z / self.rayleigh_z0();
        self.waist * (1.0 + r * r).sqrt()
    }

    /// Pixel side length.
    pub fn pixel_size(&self) -> f64 {
        2.0 * self.grid_halfwidth / self.grid_n as f64
    }

    /// Centre of pixel `(row, col)`. Rows run from `y = +halfwidth` down,
    /// columns from `x = −halfwidth` up.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let h = self.pixel_size();
        (
            -self.grid_halfwidth + (col as f64 + 0.5) * h,
            self.grid_halfwidth - (row as f64 + 0.5) * h,
        )
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `C₀,ℓ = √(2 / (π |ℓ|!))`, the unit-L² normalization.
pub fn lg_normalization(ell: i32) -> f64 {
    (2.0 / (PI * factorial(ell.unsigned_abs()))).sqrt()
}

/// Complex amplitude of `LG₀,ℓ` at polar position `(ρ, φ)` in the plane
/// `geom.plane_z`.
pub fn evaluate_lg(ell: i32, rho: f64, phi: f64, geom: &BeamGeometry) -> Result<Complex64> {
    evaluate_lg_radial(0, ell, rho, phi, geom)
}

/// As [`evaluate_lg`] but with an explicit radial index, which must be 0.
pub fn evaluate_lg_radial(
    radial: u32,
    ell: i32,
    rho: f64,
    phi: f64,
    geom: &BeamGeometry,
) -> Result<Complex64> {
    ensure(radial == 0, || {
        format!("only radial index p = 0 is supported, got p = {radial}")
    })?;
    ensure(rho.is_finite() && phi.is_finite(), || {
        "field coordinates must be finite".into()
    })?;
    ensure(rho >= 0.0, || format!("radius must be non-negative, got {rho}"))?;
    geom.validate()?;
    Ok(lg_unchecked(ell, rho, phi, geom))
}

fn lg_unchecked(ell: i32, rho: f64, phi: f64, geom: &BeamGeometry) -> Complex64 {
    let w = geom.beam_radius();
    let z = geom.plane_z;
    let z0 = geom.rayleigh_z0();
    let order = ell.unsigned_abs();
    let radial = lg_normalization(ell) / w
        * (std::f64::consts::SQRT_2 * rho / w).powi(order as i32)
        * (-(rho * rho) / (w * w)).exp();
    let gouy = (z / z0).atan();
    let curvature = geom.wavenumber * rho * rho * z / (2.0 * (z * z + z0 * z0));
    let phase = ell as f64 * phi - curvature + (order + 1) as f64 * gouy;
    Complex64::from_polar(radial, phase)
}

/// Arbitrary rectangular grid of non-negative samples, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl PixelGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    UnitSum,
    Raw,
}

/// Square intensity image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityImage {
    grid_n: usize,
    pixels: Vec<f64>,
    normalization: Normalization,
}

impl IntensityImage {
    pub fn new(grid_n: usize, pixels: Vec<f64>, normalization: Normalization) -> Result<Self> {
        if pixels.len() != grid_n * grid_n {
            return Err(Error::DimensionMismatch {
                expected: grid_n * grid_n,
                got: pixels.len(),
            });
        }
        ensure(pixels.iter().all(|p| p.is_finite() && *p >= 0.0), || {
            "pixels must be finite and non-negative".into()
        })?;
        let image = Self {
            grid_n,
            pixels,
            normalization,
        };
        match normalization {
            Normalization::Raw => Ok(image),
            Normalization::UnitSum => image.normalized(Normalization::UnitSum),
        }
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.grid_n + col]
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn normalized(mut self, normalization: Normalization) -> Result<Self> {
        if normalization == Normalization::UnitSum {
            let s = self.sum();
            ensure(s > 0.0, || "cannot unit-normalize an all-zero image".into())?;
            self.pixels.iter_mut().for_each(|p| *p /= s);
        }
        self.normalization = normalization;
        Ok(self)
    }

    /// Sum of absolute pixel differences.
    pub fn l1_distance(&self, other: &IntensityImage) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub fn max_abs_difference(&self, other: &IntensityImage) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Intensity of the state itself and of the state with every azimuthal index
/// raised by one.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub primary: IntensityImage,
    pub shifted: IntensityImage,
}

impl ImagePair {
    pub fn new(primary: IntensityImage, shifted: IntensityImage) -> Result<Self> {
        ensure(primary.grid_n == shifted.grid_n, || {
            "pair channels must share the grid size".into()
        })?;
        ensure(primary.normalization == shifted.normalization, || {
            "pair channels must share the normalization".into()
        })?;
        Ok(Self { primary, shifted })
    }
}

/// Cache of sampled mode fields on a fixed geometry, reused across states.
#[derive(Debug, Clone)]
pub struct Renderer {
    geom: BeamGeometry,
    ells: Vec<i32>,
    fields: Vec<Vec<Complex64>>,
}

impl Renderer {
    pub fn new(geom: &BeamGeometry, ells: impl IntoIterator<Item = i32>) -> Result<Self> {
        Self::with_offset(geom, ells, (0.0, 0.0))
    }

    /// Fields with the beam axis displaced by `offset` (x, y) in pixel units.
    pub fn with_offset(
        geom: &BeamGeometry,
        ells: impl IntoIterator<Item = i32>,
        offset: (f64, f64),
    ) -> Result<Self> {
        geom.validate()?;
        let mut ells: Vec<i32> = ells.into_iter().collect();
        ells.sort_unstable();
        ells.dedup();
        let points = sample_points(geom, offset);
        let fields = ells
            .iter()
            .map(|&ell| {
                points
                    .iter()
                    .map(|&(x, y)| lg_unchecked(ell, x.hypot(y), y.atan2(x), geom))
                    .collect()
            })
            .collect();
        Ok(Self {
            geom: geom.clone(),
            ells,
            fields,
        })
    }

    pub fn geometry(&self) -> &BeamGeometry {
        &self.geom
    }

    fn field(&self, ell: i32) -> Result<&[Complex64]> {
        self.ells
            .binary_search(&ell)
            .map(|i| self.fields[i].as_slice())
            .map_err(|_| Error::InvalidInput(format!("mode ℓ = {ell} not cached by renderer")))
    }

    /// `|Σ cℓ LGℓ|²` at every pixel, with sub-sample averaging.
    pub fn render(&self, state: &PureState, normalization: Normalization) -> Result<IntensityImage> {
        let fields = state
            .basis()
            .indices()
            .iter()
            .map(|&l| self.field(l))
            .collect::<Result<Vec<_>>>()?;
        let s = self.geom.supersample;
        let fine_n = self.geom.grid_n * s;
        let mut fine = vec![0.0; fine_n * fine_n];
        for (k, out) in fine.iter_mut().enumerate() {
            let mut amp = Complex64::new(0.0, 0.0);
            for (c, f) in state.coefficients().iter().zip(&fields) {
                amp += c * f[k];
            }
            *out = amp.norm_sqr();
        }
        let pixels = if s == 1 {
            fine
        } else {
            pool_blocks(&fine, fine_n, self.geom.grid_n, s)
        };
        IntensityImage::new(self.geom.grid_n, pixels, Normalization::Raw)?.normalized(normalization)
    }

    pub fn render_pair(&self, state: &PureState) -> Result<ImagePair> {
        ImagePair::new(
            self.render(state, Normalization::UnitSum)?,
            self.render(&state.shift_oam(1), Normalization::UnitSum)?,
        )
    }
}

fn sample_points(geom: &BeamGeometry, offset: (f64, f64)) -> Vec<(f64, f64)> {
    let s = geom.supersample;
    let n = geom.grid_n * s;
    let h = 2.0 * geom.grid_halfwidth / n as f64;
    let (dx, dy) = (offset.0 * geom.pixel_size(), offset.1 * geom.pixel_size());
    let mut points = Vec::with_capacity(n * n);
    for row in 0..n {
        let y = geom.grid_halfwidth - (row as f64 + 0.5) * h - dy;
        for col in 0..n {
            let x = -geom.grid_halfwidth + (col as f64 + 0.5) * h - dx;
            points.push((x, y));
        }
    }
    points
}

fn pool_blocks(fine: &[f64], fine_n: usize, n: usize, s: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    let scale = 1.0 / (s * s) as f64;
    for row in 0..n {
        for col in 0..n {
            let mut acc = 0.0;
            for r in row * s..(row + 1) * s {
                acc += fine[r * fine_n + col * s..r * fine_n + (col + 1) * s].iter().sum::<f64>();
            }
            out[row * n + col] = acc * scale;
        }
    }
    out
}

/// Renders one state on the geometry's square grid.
pub fn render_intensity(
    state: &PureState,
    geom: &BeamGeometry,
    normalization: Normalization,
) -> Result<IntensityImage> {
    Renderer::new(geom, state.basis().indices().iter().copied())?.render(state, normalization)
}

/// Unit-sum images of the state and of its +1 OAM shift.
pub fn render_pair(state: &PureState, geom: &BeamGeometry) -> Result<ImagePair> {
    let ells = state
        .basis()
        .indices()
        .iter()
        .flat_map(|&l| [l, l + 1]);
    Renderer::new(geom, ells)?.render_pair(state)
}

/// Samples the intensity on a `rows × cols` grid covering the same square
/// window as `geom`, i.e. with rectangular pixels when `rows != cols`.
pub fn render_grid(state: &PureState, geom: &BeamGeometry, rows: usize, cols: usize) -> Result<PixelGrid> {
    geom.validate()?;
    ensure(rows >= 1 && cols >= 1, || "grid must be non-empty".into())?;
    let hx = 2.0 * geom.grid_halfwidth / cols as f64;
    let hy = 2.0 * geom.grid_halfwidth / rows as f64;
    let mut data = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        let y = geom.grid_halfwidth - (row as f64 + 0.5) * hy;
        for col in 0..cols {
            let x = -geom.grid_halfwidth + (col as f64 + 0.5) * hx;
            let (rho, phi) = (x.hypot(y), y.atan2(x));
            let mut amp = Complex64::new(0.0, 0.0);
            for (&l, c) in state.basis().indices().iter().zip(state.coefficients()) {
                amp += c * lg_unchecked(l, rho, phi, geom);
            }
            data.push(amp.norm_sqr());
        }
    }
    PixelGrid::new(rows, cols, data)
}

/// Area-average pooling to `target_n × target_n`, followed by unit-sum
/// normalization. Block edges are `floor(i·H/n)`.
pub fn downsample(image: &PixelGrid, target_n: usize) -> Result<IntensityImage> {
    ensure(target_n >= 1, || "target size must be positive".into())?;
    ensure(target_n <= image.rows.min(image.cols), || {
        format!(
            "cannot downsample {}x{} to {target_n}x{target_n}",
            image.rows, image.cols
        )
    })?;
    let edges = |len: usize| -> Vec<usize> { (0..=target_n).map(|i| i * len / target_n).collect() };
    let re = edges(image.rows);
    let ce = edges(image.cols);
    let mut out = Vec::with_capacity(target_n * target_n);
    for r in 0..target_n {
        for c in 0..target_n {
            let mut acc = 0.0;
            for row in re[r]..re[r + 1] {
                let start = row * image.cols;
                acc += image.data[start + ce[c]..start + ce[c + 1]].iter().sum::<f64>();
            }
            let count = (re[r + 1] - re[r]) * (ce[c + 1] - ce[c]);
            out.push(acc / count as f64);
        }
    }
    IntensityImage::new(target_n, out, Normalization::Raw)?.normalized(Normalization::UnitSum)
}

/// Rotates a unit-sum render by `angle` about the beam axis by re-evaluating
/// the closed form at rotated pixel centres.
pub fn render_rotated(state: &PureState, geom: &BeamGeometry, angle: f64) -> Result<IntensityImage> {
    geom.validate()?;
    let n = geom.grid_n;
    let (s, c) = angle.sin_cos();
    let mut pixels = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            let (x, y) = geom.pixel_center(row, col);
            // sample the unrotated field at R(−angle)·p
            let (xr, yr) = (c * x + s * y, -s * x + c * y);
            let (rho, phi) = (xr.hypot(yr), yr.atan2(xr));
            let mut amp = Complex64::new(0.0, 0.0);
            for (&l, coeff) in state.basis().indices().iter().zip(state.coefficients()) {
                amp += coeff * lg_unchecked(l, rho, phi, geom);
            }
            pixels.push(amp.norm_sqr());
        }
    }
    IntensityImage::new(n, pixels, Normalization::Raw)?.normalized(Normalization::UnitSum)
}
