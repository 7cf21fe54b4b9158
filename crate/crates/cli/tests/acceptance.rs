//! Acceptance suite. Runs every criterion at desk scale (64×64 images,
//! 10⁴ samples) and prints one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use oamreg::optics::{render_grid, render_intensity, BeamGeometry, Normalization};
use oamreg::pipeline::{
    evaluate, fit_pipeline, generate_dataset, latent_geometry, sweep_latent_dims, symmetry_analysis,
    Against, Dataset, DatasetConfig, FitOptions, ImageMode, NoiseSpec,
};
use oamreg::reduce::{PcaModel, PcaOptions};
use oamreg::regress::{LinearModel, RegressorKind};
use oamreg::statespace::{fidelity, BlochVector, GgmBasis, ModeBasis, PureState, StateSampler};
use oamreg::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn dataset(basis: ModeBasis, seed: u64) -> Dataset {
    generate_dataset(&DatasetConfig {
        seed,
        ..DatasetConfig::new(basis)
    })
    .expect("dataset")
}

fn exp_basis() -> ModeBasis {
    ModeBasis::parse("-3,-1,1,3").unwrap()
}

fn linear(mode: ImageMode, total: usize) -> FitOptions {
    FitOptions::new(mode, total)
}

/// Criteria 1 to 3 share one d=4 sweep.
fn d4_sweep(ds: &Dataset) -> (Outcome, Outcome, Outcome) {
    let t = Instant::now();
    let dims: Vec<usize> = (1..=50).collect();
    let sweep = sweep_latent_dims(ds, &dims, &[ImageMode::Single, ImageMode::Pair], &linear(ImageMode::Pair, 15))
        .expect("sweep");
    let secs = t.elapsed().as_secs_f64();
    let pair: Vec<_> = sweep.rows.iter().filter(|r| r.mode == ImageMode::Pair).collect();
    let worst_high = pair
        .iter()
        .filter(|r| r.total_dims >= 15)
        .map(|r| r.mean_fidelity)
        .fold(f64::INFINITY, f64::min);
    let at5 = sweep.get(5, ImageMode::Pair).unwrap().mean_fidelity;
    let single_max = sweep
        .rows
        .iter()
        .filter(|r| r.mode == ImageMode::Single)
        .map(|r| r.mean_fidelity)
        .fold(f64::NEG_INFINITY, f64::max);
    (
        outcome(
            worst_high >= 0.99 && secs <= 600.0,
            format!(
                "min pair fidelity over 15..50 total dims = {worst_high:.4} (at 15: {:.4}); sweep {secs:.0}s",
                sweep.get(15, ImageMode::Pair).unwrap().mean_fidelity
            ),
        ),
        outcome(at5 > 0.90, format!("pair fidelity at 5 total dims = {at5:.4}")),
        outcome(
            single_max < 0.93,
            format!("max single-image fidelity over 1..50 dims = {single_max:.4}"),
        ),
    )
}

fn criterion_4_5(ds: &Dataset) -> (Outcome, Outcome) {
    let r = symmetry_analysis(ds, 3, &linear(ImageMode::Pair, 3)).expect("symmetry");
    let (c, f) = (&r.single_correct, &r.single_flipped);
    let se = (c.stderr.powi(2) + f.stderr.powi(2)).sqrt();
    let c4 = (c.mean - 0.923).abs() <= 0.03 && (c.mean - f.mean).abs() < 3.0 * se;
    let c5 = r.pair_correct.mean >= 0.995 && (r.pair_flipped.mean - 0.764).abs() <= 0.08;
    (
        outcome(
            c4,
            format!(
                "single correct {:.4} ± {:.4}, flipped {:.4} ± {:.4}, |diff| = {:.2} SE",
                c.mean,
                c.stderr,
                f.mean,
                f.stderr,
                (c.mean - f.mean).abs() / se
            ),
        ),
        outcome(
            c5,
            format!(
                "pair correct {:.4}, pair flipped {:.4} ± {:.4}",
                r.pair_correct.mean, r.pair_flipped.mean, r.pair_flipped.stderr
            ),
        ),
    )
}

fn criterion_6(ds: &Dataset) -> Outcome {
    let r = symmetry_analysis(ds, 15, &linear(ImageMode::Pair, 15)).expect("symmetry");
    let pass = (r.single_correct.mean - 0.904).abs() <= 0.03 && (r.pair_flipped.mean - 0.664).abs() <= 0.08;
    outcome(
        pass,
        format!(
            "single correct {:.4} ± {:.4}, pair flipped {:.4} ± {:.4}",
            r.single_correct.mean, r.single_correct.stderr, r.pair_flipped.mean, r.pair_flipped.stderr
        ),
    )
}

/// Criteria 7 and 8 share one dataset per dimension.
fn criterion_7_8() -> (Outcome, Outcome) {
    let t = Instant::now();
    let mut linear_f = BTreeMap::new();
    let mut etr_f = BTreeMap::new();
    for d in 2..=8usize {
        let ds = dataset(ModeBasis::symmetric(d).unwrap(), 700 + d as u64);
        let q = d * d - 1;
        let model = fit_pipeline(&ds, &linear(ImageMode::Pair, q)).expect("fit");
        linear_f.insert(d, evaluate(&model, &ds, Against::Correct).unwrap().mean);
        if d >= 3 {
            let mut opts = linear(ImageMode::Pair, q);
            opts.regressor = RegressorKind::Etr;
            opts.etr.seed = d as u64;
            let model = fit_pipeline(&ds, &opts).expect("fit etr");
            etr_f.insert(d, evaluate(&model, &ds, Against::Correct).unwrap().mean);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let c7 = linear_f.values().all(|&f| f >= 0.99) && secs <= 90.0 * 60.0;
    let c8 = etr_f.iter().all(|(d, e)| linear_f[d] >= *e) && etr_f[&8] < etr_f[&4];
    let fmt = |m: &BTreeMap<usize, f64>| {
        m.iter()
            .map(|(d, f)| format!("d{d}={f:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    (
        outcome(c7, format!("linear pair at d²−1: {} ({secs:.0}s incl. trees)", fmt(&linear_f))),
        outcome(c8, format!("trees: {}", fmt(&etr_f))),
    )
}

fn criterion_9() -> Outcome {
    let fits = latent_geometry(&[PI / 2.0, 3.0 * PI / 4.0, 7.0 * PI / 8.0, PI], 64, &BeamGeometry::default())
        .expect("geometry");
    let r: Vec<f64> = fits.iter().map(|f| f.radius).collect();
    let pass = r[0] > r[1]
        && r[1] > r[2]
        && r[2] > fits[3].diameter
        && fits[3].diameter < 0.05 * r[0]
        && fits[0].rms_residual < 0.05 * r[0];
    outcome(
        pass,
        format!(
            "radii {:.5} > {:.5} > {:.5}; θ=π diameter {:.2e}; θ=π/2 rms/radius {:.2e}",
            r[0],
            r[1],
            r[2],
            fits[3].diameter,
            fits[0].rms_residual / r[0]
        ),
    )
}

fn criterion_11(ds_seed: u64) -> Outcome {
    let ds = generate_dataset(&DatasetConfig {
        seed: ds_seed,
        noise: Some(NoiseSpec {
            gaussian_sigma: 0.01,
            ..NoiseSpec::default()
        }),
        ..DatasetConfig::new(exp_basis())
    })
    .expect("noisy dataset");
    let model = fit_pipeline(&ds, &linear(ImageMode::Pair, 15)).expect("fit");
    let f = evaluate(&model, &ds, Against::Correct).unwrap();
    outcome(
        f.mean >= 0.90,
        format!("d=4 pair fidelity with σ=0.01 noise = {:.4} ± {:.4}", f.mean, f.stderr),
    )
}

// ---- criterion 10 oracles -------------------------------------------------

fn random_state(basis: &ModeBasis, rng: &mut ChaCha8Rng) -> PureState {
    let c: Vec<Complex64> = (0..basis.dim())
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    PureState::normalized(basis.clone(), c).unwrap()
}

fn pixel_identity() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let geom = BeamGeometry::default();
    let mut worst: f64 = 0.0;
    for d in 2..=6 {
        let basis = ModeBasis::symmetric(d).unwrap();
        for _ in 0..20 {
            let s = random_state(&basis, &mut rng);
            let a = render_intensity(&s, &geom, Normalization::Raw).unwrap();
            let b = render_intensity(&s.conjugate_flip(), &geom, Normalization::Raw).unwrap();
            worst = worst.max(a.max_abs_difference(&b));
        }
    }
    (worst < 1e-10, format!("conjugation {worst:.1e}"))
}

fn ggm_orthogonality() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for d in 2..=8 {
        let g = GgmBasis::new(d).unwrap();
        let m = g.matrices();
        for i in 0..m.len() {
            for j in 0..m.len() {
                let mut t = Complex64::new(0.0, 0.0);
                for a in 0..d {
                    for b in 0..d {
                        t += m[i][(a, b)] * m[j][(b, a)];
                    }
                }
                let want = if i == j { 2.0 } else { 0.0 };
                worst = worst.max((t - want).norm());
            }
        }
    }
    (worst < 1e-12, format!("ggm {worst:.1e}"))
}

fn bloch_norm() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for d in 2..=8 {
        let g = GgmBasis::new(d).unwrap();
        let basis = ModeBasis::symmetric(d).unwrap();
        for _ in 0..20 {
            let b = g.state_to_bloch(&random_state(&basis, &mut rng)).unwrap();
            worst = worst.max((b.norm_sqr() - 2.0 * (1.0 - 1.0 / d as f64)).abs());
        }
    }
    (worst < 1e-10, format!("bloch {worst:.1e}"))
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix.
fn jacobi_eigenvalues(mut a: Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn pca_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, m) = (60, 10);
    let data = Array2::from_shape_fn((n, m), |(_, j)| rng.random::<f64>() * (1.0 + j as f64));
    let centred = &data - &data.mean_axis(Axis(0)).unwrap();
    let ev = jacobi_eigenvalues(centred.t().dot(&centred));
    let mut worst: f64 = 0.0;
    for k in 1..m {
        let p = PcaModel::fit(data.view(), k, PcaOptions::default()).unwrap();
        let mut sse = 0.0;
        for row in data.rows() {
            let back = p.inverse(p.transform(row).unwrap().view()).unwrap();
            sse += (&back - &row).mapv(|v| v * v).sum();
        }
        let want: f64 = ev[k..].iter().sum();
        worst = worst.max((sse - want).abs() / want.max(1.0));
    }
    (worst < 1e-8, format!("pca {worst:.1e}"))
}

/// Gaussian elimination with partial pivoting; one column per right-hand side.
fn solve(mut a: Array2<f64>, mut b: Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs())).unwrap();
        for k in 0..n {
            a.swap([col, k], [piv, k]);
        }
        for k in 0..b.ncols() {
            b.swap([col, k], [piv, k]);
        }
        for r in col + 1..n {
            let f = a[[r, col]] / a[[col, col]];
            for k in col..n {
                a[[r, k]] -= f * a[[col, k]];
            }
            for k in 0..b.ncols() {
                b[[r, k]] -= f * b[[col, k]];
            }
        }
    }
    let mut x = Array2::zeros(b.dim());
    for k in 0..b.ncols() {
        for r in (0..n).rev() {
            let mut s = b[[r, k]];
            for c in r + 1..n {
                s -= a[[r, c]] * x[[c, k]];
            }
            x[[r, k]] = s / a[[r, r]];
        }
    }
    x
}

fn normal_equation_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for (rows, n, q, lambda) in [(6, 2, 1, 0.1), (6, 2, 3, 0.0), (200, 7, 5, 0.5), (200, 7, 5, 0.0)] {
        let z = Array2::from_shape_fn((rows, n), |_| rng.random::<f64>() * 2.0 - 1.0);
        let b = Array2::from_shape_fn((rows, q), |_| rng.random::<f64>());
        let zm = z.mean_axis(Axis(0)).unwrap();
        let bm = b.mean_axis(Axis(0)).unwrap();
        let zc = &z - &zm;
        let bc = &b - &bm;
        let lhs = zc.t().dot(&zc) + Array2::<f64>::eye(n) * lambda;
        let w = solve(lhs, zc.t().dot(&bc)).reversed_axes(); // q × n
        let intercept: Array1<f64> = &bm - &w.dot(&zm);
        let fit = LinearModel::fit(z.view(), b.view(), lambda).unwrap();
        worst = worst
            .max((&fit.model.weights - &w).mapv(f64::abs).fold(0.0, |a, &v| a.max(v)))
            .max((&fit.model.intercept - &intercept).mapv(f64::abs).fold(0.0, |a, &v| a.max(v)));
    }
    (worst < 1e-8, format!("lsq {worst:.1e}"))
}

fn mixture_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for d in 2..=6 {
        let basis = ModeBasis::symmetric(d).unwrap();
        let g = GgmBasis::new(d).unwrap();
        for _ in 0..5 {
            let psi = random_state(&basis, &mut rng);
            let raw = random_state(&basis, &mut rng);
            // φ ⟂ ψ by Gram–Schmidt
            let ov = psi.inner(&raw).unwrap();
            let c: Vec<Complex64> = raw
                .coefficients()
                .iter()
                .zip(psi.coefficients())
                .map(|(r, p)| r - p * ov)
                .collect();
            let phi = PureState::normalized(basis.clone(), c).unwrap();
            let bp = g.state_to_bloch(&psi).unwrap();
            let bf = g.state_to_bloch(&phi).unwrap();
            let mix = BlochVector::new(
                d,
                bp.components
                    .iter()
                    .zip(&bf.components)
                    .map(|(a, b)| 0.9 * a + 0.1 * b)
                    .collect(),
            )
            .unwrap();
            let proj = g.nearest_pure(&mix, &basis).unwrap();
            worst = worst.max((fidelity(&proj.state, &psi).unwrap() - 1.0).abs());
        }
    }
    (worst < 1e-10, format!("mixture {worst:.1e}"))
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_oamreg")
}

fn run(args: &[&str], cwd: &Path, threads: &str) -> Result<(), String> {
    let out = Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .env("OAMREG_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn save_png(path: &Path, state: &PureState) {
    let grid = render_grid(state, &BeamGeometry::default(), 96, 128).unwrap();
    let peak = grid.data.iter().cloned().fold(0.0, f64::max);
    let buf: Vec<u16> = grid.data.iter().map(|v| (v / peak * 65535.0).round() as u16).collect();
    image::ImageBuffer::<image::Luma<u16>, _>::from_raw(128, 96, buf)
        .unwrap()
        .save(path)
        .unwrap();
}

/// Every seeded command twice, from separate working directories and with
/// different thread counts; all output files must match byte for byte.
fn cli_reproducibility() -> (bool, String) {
    let work = tempfile::tempdir().unwrap();
    let w = work.path();
    let basis = ModeBasis::symmetric(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut manifest = String::from("basis = \"-1,1\"\ngrid_n = 32\nseed = 3\n");
    for i in 0..6 {
        let s = random_state(&basis, &mut rng);
        save_png(&w.join(format!("p{i}.png")), &s);
        save_png(&w.join(format!("s{i}.png")), &s.shift_oam(1));
        let c: Vec<String> = s.coefficients().iter().flat_map(|c| [c.re.to_string(), c.im.to_string()]).collect();
        manifest.push_str(&format!(
            "[[sample]]\nimage = \"p{i}.png\"\nshifted = \"s{i}.png\"\ncoefficients = [{}]\n",
            c.join(", ")
        ));
    }
    std::fs::write(w.join("ingest.toml"), manifest).unwrap();

    let mut checked = Vec::new();
    for (tag, threads) in [("a", "1"), ("b", "2")] {
        let cwd = w.join(tag);
        std::fs::create_dir(&cwd).unwrap();
        let o = |name: &str| name.to_string();
        let steps: Vec<Vec<String>> = vec![
            vec!["gen", "--dim", "3", "--samples", "300", "--grid", "24", "--seed", "5", "--noise-sigma", "0.01", "--out", &o("gen")],
            vec!["train", "--data", &o("gen"), "--out", &o("lin")],
            vec!["train", "--data", &o("gen"), "--regressor", "etr", "--trees", "8", "--seed", "9", "--out", &o("etr")],
            vec!["eval", "--model", &o("etr"), "--data", &o("gen"), "--against", "flipped", "--out", &o("eval")],
            vec!["sweep", "--data", &o("gen"), "--dims", "1-8", "--regressors", "linear,etr", "--trees", "4", "--out", &o("sweep")],
            vec!["symmetry", "--data", &o("gen"), "--out", &o("sym")],
            vec!["geometry", "--grid", "24", "--phi-samples", "16", "--out", &o("geo")],
            vec!["ingest", "--manifest", "../ingest.toml", "--out", &o("ing")],
        ]
        .into_iter()
        .map(|v| v.into_iter().map(String::from).collect())
        .collect();
        for step in &steps {
            let args: Vec<&str> = step.iter().map(String::as_str).collect();
            if let Err(e) = run(&args, &cwd, threads) {
                return (false, e);
            }
        }
    }
    let mut ok = true;
    for name in ["gen", "lin", "etr", "eval", "sweep", "sym", "geo", "ing"] {
        let a = dir_bytes(&w.join("a").join(name));
        let b = dir_bytes(&w.join("b").join(name));
        let same = !a.is_empty() && a == b && a.contains_key("resolved.toml");
        ok &= same;
        checked.push(format!("{name}:{}", if same { "same" } else { "DIFF" }));
    }
    (ok, format!("bytes {}", checked.join(",")))
}

fn criterion_10() -> Outcome {
    let parts = [
        pixel_identity(),
        ggm_orthogonality(),
        bloch_norm(),
        pca_oracle(),
        normal_equation_oracle(),
        mixture_oracle(),
        cli_reproducibility(),
    ];
    let pass = parts.iter().all(|p| p.0);
    outcome(pass, parts.iter().map(|p| p.1.clone()).collect::<Vec<_>>().join("; "))
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();

    let d4 = dataset(exp_basis(), 41);
    let (c1, c2, c3) = d4_sweep(&d4);
    results.push((1, "d=4 pair-mode convergence", c1));
    results.push((2, "5-dimension threshold", c2));
    results.push((3, "single-image ceiling", c3));
    results.push((6, "d=4 symmetry pair", criterion_6(&d4)));
    drop(d4);

    let d2 = dataset(ModeBasis::symmetric(2).unwrap(), 21);
    let (c4, c5) = criterion_4_5(&d2);
    results.push((4, "d=2 symmetry degeneracy", c4));
    results.push((5, "d=2 symmetry breaking", c5));
    drop(d2);

    let (c7, c8) = criterion_7_8();
    results.push((7, "all-dimension scaling", c7));
    results.push((8, "linear beats trees", c8));
    results.push((9, "latent circles", criterion_9()));
    results.push((10, "property suites", criterion_10()));
    results.push((11, "noise robustness substitute", criterion_11(111)));

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (n, name, o) in &results {
        println!(
            "{} [{n:>2}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.0}s; sampler {})",
        results.len() - failed,
        start.elapsed().as_secs_f64(),
        StateSampler::default().name()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
