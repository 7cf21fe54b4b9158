use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Deserialize;

use crate::error::{ensure, Error, Result};
use crate::optics::{downsample, PixelGrid};
use crate::statespace::{GgmBasis, ModeBasis, PureState};
use crate::Complex64;

use super::dataset::{bloch_targets, split_indices};
use super::{Dataset, Origin};

/// Ingestion manifest, a TOML file:
///
/// ```toml
/// basis = "-1,1"          # required when samples carry coefficients
/// grid_n = 64
/// seed = 0
/// train_fraction = 0.8
///
/// [[sample]]
/// image = "img_000.png"
/// shifted = "img_000_shift.png"     # all or none of the samples
/// coefficients = [0.6, 0.0, 0.0, 0.8] # re, im per mode; all or none
/// ```
///
/// Paths are relative to the manifest.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestManifest {
    pub basis: Option<String>,
    #[serde(default = "default_grid")]
    pub grid_n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default, rename = "sample")]
    pub samples: Vec<IngestSample>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSample {
    pub image: PathBuf,
    pub shifted: Option<PathBuf>,
    pub coefficients: Option<Vec<f64>>,
}

fn default_grid() -> usize {
    64
}

fn default_fraction() -> f64 {
    0.8
}

/// Loads grayscale PNG or PGM files, area-averages them to `grid_n` and
/// normalizes to unit sum. Labeled manifests get a seeded split; unlabeled
/// ones put every sample in the test split.
pub fn ingest_images(manifest: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let spec: IngestManifest =
        toml::from_str(&text).map_err(|e| Error::format("ingest manifest", e.message()))?;
    ensure(!spec.samples.is_empty(), || "ingest manifest lists no samples".into())?;
    ensure(spec.grid_n >= 1, || "grid_n must be positive".into())?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let all_or_none = |count: usize, what: &str| -> Result<bool> {
        if count != 0 && count != spec.samples.len() {
            return Err(Error::format(
                "ingest manifest",
                format!("{what} given for only some samples"),
            ));
        }
        Ok(count != 0)
    };
    let pair = all_or_none(spec.samples.iter().filter(|s| s.shifted.is_some()).count(), "shifted")?;
    let labeled = all_or_none(
        spec.samples.iter().filter(|s| s.coefficients.is_some()).count(),
        "coefficients",
    )?;
    let basis = match (&spec.basis, labeled) {
        (Some(b), _) => ModeBasis::parse(b)?,
        (None, true) => {
            return Err(Error::format("ingest manifest", "coefficients need a basis"))
        }
        (None, false) => ModeBasis::new(vec![0])?,
    };
    let n = spec.samples.len();
    let px = spec.grid_n * spec.grid_n;
    let mut primary = Array2::<f32>::zeros((n, px));
    let mut shifted = pair.then(|| Array2::<f32>::zeros((n, px)));
    let mut states = Vec::new();
    for (i, sample) in spec.samples.iter().enumerate() {
        let img = load_gray(&base.join(&sample.image), spec.grid_n)?;
        primary.row_mut(i).iter_mut().zip(img).for_each(|(d, v)| *d = v);
        if let (Some(dst), Some(path)) = (shifted.as_mut(), &sample.shifted) {
            let img = load_gray(&base.join(path), spec.grid_n)?;
            dst.row_mut(i).iter_mut().zip(img).for_each(|(d, v)| *d = v);
        }
        if let Some(c) = &sample.coefficients {
            ensure(c.len() == 2 * basis.dim(), || {
                format!("sample {i}: expected {} coefficient numbers", 2 * basis.dim())
            })?;
            let coeffs = c.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
            states.push(PureState::normalized(basis.clone(), coeffs)?);
        }
    }
    let (states, targets, train, test) = if labeled {
        ensure(n >= 2, || "labeled ingestion needs at least 2 samples".into())?;
        ensure(spec.train_fraction > 0.0 && spec.train_fraction < 1.0, || {
            "train_fraction must lie in (0, 1)".into()
        })?;
        let targets = bloch_targets(&GgmBasis::new(basis.dim())?, &states)?;
        let (train, test) = split_indices(n, spec.train_fraction, spec.seed);
        (Some(states), Some(targets), train, test)
    } else {
        (None, None, Vec::new(), (0..n).collect())
    };
    Ok(Dataset {
        origin: Origin::Ingested {
            source: manifest.to_path_buf(),
            seed: spec.seed,
            train_fraction: spec.train_fraction,
        },
        basis,
        grid_n: spec.grid_n,
        primary,
        shifted,
        states,
        targets,
        train,
        test,
    })
}

fn load_gray(path: &Path, grid_n: usize) -> Result<Vec<f32>> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    })?;
    let gray = img.to_luma32f();
    let (w, h) = gray.dimensions();
    ensure(w as usize >= grid_n && h as usize >= grid_n, || {
        format!("{} is {w}x{h}, smaller than the {grid_n}x{grid_n} grid", path.display())
    })?;
    let grid = PixelGrid::new(
        h as usize,
        w as usize,
        gray.as_raw().iter().map(|&v| f64::from(v)).collect(),
    )?;
    let out = downsample(&grid, grid_n)?;
    ensure(out.sum() > 0.0, || format!("{} is blank", path.display()))?;
    Ok(out.pixels().iter().map(|&v| v as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{render_grid, render_intensity, BeamGeometry, IntensityImage, Normalization};

    fn save_png16(path: &Path, grid: &PixelGrid) {
        let peak = grid.data.iter().cloned().fold(0.0, f64::max);
        let buf: Vec<u16> = grid
            .data
            .iter()
            .map(|v| (v / peak * 65535.0).round() as u16)
            .collect();
        image::ImageBuffer::<image::Luma<u16>, _>::from_raw(grid.cols as u32, grid.rows as u32, buf)
            .unwrap()
            .save(path)
            .unwrap();
    }

    #[test]
    fn camera_sized_render_matches_direct_render() {
        let dir = tempfile::tempdir().unwrap();
        let basis = ModeBasis::new(vec![-1, 1]).unwrap();
        let state = PureState::normalized(
            basis,
            vec![Complex64::new(0.6, 0.2), Complex64::new(0.3, -0.7)],
        )
        .unwrap();
        let geom = BeamGeometry::default();
        save_png16(&dir.path().join("cam.png"), &render_grid(&state, &geom, 1024, 1280).unwrap());
        let manifest = dir.path().join("m.toml");
        fs::write(
            &manifest,
            "basis = \"-1,1\"\n[[sample]]\nimage = \"cam.png\"\ncoefficients = [0.6, 0.2, 0.3, -0.7]\n\n\
             [[sample]]\nimage = \"cam.png\"\ncoefficients = [0.6, 0.2, 0.3, -0.7]\n",
        )
        .unwrap();
        let ds = ingest_images(&manifest).unwrap();
        let direct = render_intensity(&state, &geom, Normalization::UnitSum).unwrap();
        let got = IntensityImage::new(
            64,
            ds.primary.row(0).iter().map(|&v| f64::from(v)).collect(),
            Normalization::UnitSum,
        )
        .unwrap();
        assert!(got.l1_distance(&direct) < 0.02, "{}", got.l1_distance(&direct));
        assert_eq!(ds.train.len() + ds.test.len(), 2);
        assert!(ds.is_labeled());
    }

    #[test]
    fn unlabeled_and_error_cases() {
        let dir = tempfile::tempdir().unwrap();
        let grid = PixelGrid::new(8, 8, (0..64).map(|v| v as f64).collect()).unwrap();
        save_png16(&dir.path().join("a.png"), &grid);
        let m = dir.path().join("m.toml");
        fs::write(&m, "grid_n = 4\n[[sample]]\nimage = \"a.png\"\n").unwrap();
        let ds = ingest_images(&m).unwrap();
        assert!(!ds.is_labeled());
        assert_eq!((ds.train.len(), ds.test.len()), (0, 1));
        assert!(matches!(ds.targets(), Err(Error::Unlabeled)));

        fs::write(&m, "grid_n = 4\n").unwrap();
        assert!(ingest_images(&m).is_err());
        fs::write(&m, "grid_n = 4\n[[sample]]\nimage = \"missing.png\"\n").unwrap();
        assert!(matches!(ingest_images(&m), Err(Error::Io { .. })));
        fs::write(&m, "grid_n = 16\n[[sample]]\nimage = \"a.png\"\n").unwrap();
        assert!(matches!(ingest_images(&m), Err(Error::InvalidInput(_))));
        fs::write(&m, "grid_n = [\n").unwrap();
        assert!(matches!(ingest_images(&m), Err(Error::Format { .. })));
        fs::write(&m, "[[sample]]\nimage = \"a.png\"\ncoefficients = [1.0, 0.0]\n").unwrap();
        assert!(matches!(ingest_images(&m), Err(Error::Format { .. })));
    }
}
