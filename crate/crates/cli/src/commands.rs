use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use oamreg::container::Manifest;
use oamreg::optics::BeamGeometry;
use oamreg::pipeline::{
    evaluate, fit_pipeline, generate_dataset, ingest_images, latent_geometry, load_dataset,
    load_model, save_dataset, save_model, sweep_latent_dims, symmetry_analysis, Against,
    CircleFit, CompressorKind, Dataset, DatasetConfig, FitOptions, ImageMode, LatentSplit,
    NoiseSpec, SweepResult,
};
use oamreg::regress::{EtrParams, RegressorKind};
use oamreg::statespace::{ModeBasis, StateSampler};
use serde::Serialize;

use crate::config::{
    parse_angle, parse_dims, split_list, EvalParams, FileConfig, FitParams, GenParams,
    GeometryParams, IngestParams, SweepParams, SymmetryParams, TrainParams,
};
use crate::{Cli, CliError, Command, FitArgs, THREADS_ENV};

macro_rules! overlay {
    ($dst:expr, $src:expr; $($f:ident),* $(,)?) => {
        $( if let Some(v) = $src.$f.clone() { $dst.$f = v; } )*
    };
}

macro_rules! overlay_opt {
    ($dst:expr, $src:expr; $($f:ident),* $(,)?) => {
        $( if let Some(v) = $src.$f.clone() { $dst.$f = Some(v); } )*
    };
}

struct Globals {
    seed: u64,
    out: Option<PathBuf>,
}

impl Globals {
    fn out(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("--out is required".into()))
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let globals = Globals {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        out: cli.out.clone().or(file.out.clone()),
    };
    match cli.command {
        Command::Gen(a) => {
            let mut p = file.gen.unwrap_or_default();
            overlay!(p, a; samples, mode, sampler, train_fraction, grid, halfwidth, waist,
                wavenumber, plane_z, supersample, noise_sigma, jitter);
            overlay_opt!(p, a; dim, basis, poisson_scale);
            gen(&globals, p)
        }
        Command::Train(a) => {
            let mut p = file.train.unwrap_or_default();
            overlay_opt!(p, a; data, mode, latent_per_channel, latent_total);
            if a.latent_per_channel.is_some() {
                p.latent_total = None;
            } else if a.latent_total.is_some() {
                p.latent_per_channel = None;
            }
            overlay_fit(&mut p.fit, &a.fit);
            train(&globals, p)
        }
        Command::Eval(a) => {
            let mut p = file.eval.unwrap_or_default();
            overlay!(p, a; against);
            overlay_opt!(p, a; model, data);
            p.predict_only |= a.predict_only;
            eval(&globals, p)
        }
        Command::Sweep(a) => {
            let mut p = file.sweep.unwrap_or_default();
            overlay_opt!(p, a; data);
            if let Some(d) = &a.dims {
                p.dims = Some(parse_dims(d)?);
            }
            if let Some(m) = &a.modes {
                p.modes = split_list(m);
            }
            if let Some(r) = &a.regressors {
                p.regressors = split_list(r);
            }
            overlay_fit(&mut p.fit, &a.fit);
            sweep(&globals, p)
        }
        Command::Symmetry(a) => {
            let mut p = file.symmetry.unwrap_or_default();
            overlay_opt!(p, a; data, dims);
            overlay_fit(&mut p.fit, &a.fit);
            symmetry(&globals, p)
        }
        Command::Geometry(a) => {
            let mut p = file.geometry.unwrap_or_default();
            overlay!(p, a; phi_samples, grid, halfwidth);
            if let Some(t) = &a.thetas {
                p.thetas = split_list(t);
            }
            geometry(&globals, p)
        }
        Command::Ingest(a) => {
            let mut p = file.ingest.unwrap_or_default();
            overlay_opt!(p, a; manifest);
            ingest(&globals, p)
        }
        Command::Info(a) => info(a.path.as_deref()),
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn overlay_fit(p: &mut FitParams, a: &FitArgs) {
    overlay!(p, a; regressor, ridge, compressor, trees, min_samples_split);
    overlay_opt!(p, a; max_depth, candidate_features);
}

fn fit_options(p: &FitParams, mode: ImageMode, latent: LatentSplit, seed: u64) -> Result<FitOptions, CliError> {
    Ok(FitOptions {
        image_mode: mode,
        latent,
        regressor: RegressorKind::parse(&p.regressor)?,
        ridge_lambda: p.ridge,
        etr: EtrParams {
            n_trees: p.trees,
            min_samples_split: p.min_samples_split,
            max_depth: p.max_depth,
            n_candidate_features: p.candidate_features,
            seed,
        },
        compressor: CompressorKind::parse(&p.compressor)?,
        pca_solver: Default::default(),
    })
}

fn require<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
    v.as_ref()
        .ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// `resolved.toml`: tool, version, command, seed and the merged section.
/// The output path itself is left out so reruns into another directory
/// produce identical bytes.
fn write_resolved<T: Serialize>(dir: &Path, command: &str, seed: u64, params: &T) -> Result<(), CliError> {
    let mut table = toml::Table::new();
    table.insert("tool".into(), "oamreg".into());
    table.insert("version".into(), oamreg::VERSION.into());
    table.insert("command".into(), command.into());
    table.insert("seed".into(), toml::Value::Integer(seed as i64));
    let section = toml::Value::try_from(params).map_err(|e| CliError::Config(e.to_string()))?;
    table.insert(command.into(), section);
    let text = toml::to_string(&table).map_err(|e| CliError::Config(e.to_string()))?;
    write_text(&dir.join("resolved.toml"), &text)
}

fn resolve_basis(p: &GenParams) -> Result<ModeBasis, CliError> {
    match (&p.basis, p.dim) {
        (Some(b), dim) => {
            let basis = ModeBasis::parse(b)?;
            if let Some(d) = dim.filter(|&d| d != basis.dim()) {
                return Err(CliError::Config(format!(
                    "--dim {d} disagrees with the {}-mode basis {basis}",
                    basis.dim()
                )));
            }
            Ok(basis)
        }
        (None, Some(d)) => Ok(ModeBasis::symmetric(d)?),
        (None, None) => Err(CliError::Usage("--dim or --basis is required".into())),
    }
}

fn gen(g: &Globals, p: GenParams) -> Result<(), CliError> {
    let out = g.out()?;
    let basis = resolve_basis(&p)?;
    let noise = NoiseSpec {
        gaussian_sigma: p.noise_sigma,
        poisson_scale: p.poisson_scale,
        center_jitter_pixels: p.jitter,
    };
    let config = DatasetConfig {
        basis,
        n_samples: p.samples,
        geometry: BeamGeometry {
            waist: p.waist,
            wavenumber: p.wavenumber,
            plane_z: p.plane_z,
            grid_n: p.grid,
            grid_halfwidth: p.halfwidth,
            supersample: p.supersample,
        },
        image_mode: ImageMode::parse(&p.mode)?,
        noise: noise.is_active().then_some(noise),
        seed: g.seed,
        train_fraction: p.train_fraction,
        sampler: StateSampler::parse(&p.sampler)?,
    };
    config.validate()?;
    let ds = generate_dataset(&config)?;
    save_dataset(&ds, out)?;
    write_resolved(out, "gen", g.seed, &p)?;
    println!(
        "generated {} {} samples on basis [{}] (d = {}), seed {}: {} train / {} test",
        ds.len(),
        ds.image_mode().name(),
        ds.basis,
        ds.basis.dim(),
        g.seed,
        ds.train.len(),
        ds.test.len()
    );
    Ok(())
}

fn describe_split(s: LatentSplit) -> String {
    format!(
        "{} total = {} primary + {} shifted",
        s.sum(),
        s.primary,
        s.shifted
    )
}

fn train(g: &Globals, mut p: TrainParams) -> Result<(), CliError> {
    let out = g.out()?;
    let ds = load_dataset(require(&p.data, "data")?)?;
    ds.targets()?;
    let mode = match &p.mode {
        Some(m) => ImageMode::parse(m)?,
        None => ds.image_mode(),
    };
    p.mode = Some(mode.name().into());
    let latent = match (p.latent_per_channel, p.latent_total) {
        (Some(n), _) => LatentSplit::per_channel(n, mode),
        (None, total) => {
            let d = ds.basis.dim();
            let total = total.unwrap_or(d * d - 1);
            p.latent_total = Some(total);
            LatentSplit::total(total, mode)
        }
    };
    let options = fit_options(&p.fit, mode, latent, g.seed)?;
    let model = fit_pipeline(&ds, &options)?;
    save_model(&model, out)?;
    write_resolved(out, "train", g.seed, &p)?;
    println!(
        "trained {} {} model on {} samples; latent dims {}{}",
        mode.name(),
        options.regressor.name(),
        model.meta.n_train,
        describe_split(latent),
        if model.meta.rank_deficient {
            " (rank-deficient design, minimum-norm solution)"
        } else {
            ""
        }
    );
    Ok(())
}

fn eval(g: &Globals, p: EvalParams) -> Result<(), CliError> {
    let out = g.out()?;
    let model = load_model(require(&p.model, "model")?)?;
    let ds = load_dataset(require(&p.data, "data")?)?;
    create_out(out)?;
    if p.predict_only {
        let preds = model.predict_test(&ds)?;
        let mut csv = String::from("index");
        for l in model.basis.indices() {
            write!(csv, ",re_{l},im_{l}").expect("string write");
        }
        csv.push_str(",degenerate\n");
        for (&i, pred) in ds.test.iter().zip(&preds) {
            write!(csv, "{i}").expect("string write");
            for c in pred.state.coefficients() {
                write!(csv, ",{:.9},{:.9}", c.re, c.im).expect("string write");
            }
            writeln!(csv, ",{}", pred.degenerate as u8).expect("string write");
        }
        write_text(&out.join("predictions.csv"), &csv)?;
        write_resolved(out, "eval", g.seed, &p)?;
        println!("wrote {} predictions", preds.len());
        return Ok(());
    }
    let against = Against::parse(&p.against)?;
    let stats = evaluate(&model, &ds, against)?;
    let mut per_sample = String::from("index,fidelity\n");
    for (&i, f) in ds.test.iter().zip(&stats.per_sample) {
        writeln!(per_sample, "{i},{f:.9}").expect("string write");
    }
    write_text(&out.join("per_sample.csv"), &per_sample)?;
    write_text(
        &out.join("stats.csv"),
        &format!(
            "against,total_dims,mean_fidelity,stderr,n_test,degenerate\n{},{},{:.6},{:.6},{},{}\n",
            against.name(),
            model.total_latent(),
            stats.mean,
            stats.stderr,
            stats.len(),
            stats.degenerate_count
        ),
    )?;
    write_resolved(out, "eval", g.seed, &p)?;
    println!(
        "mean fidelity ({}) = {:.4} ± {:.4} over {} test samples; latent dims {}",
        against.name(),
        stats.mean,
        stats.stderr,
        stats.len(),
        describe_split(model.latent)
    );
    Ok(())
}

fn sweep(g: &Globals, mut p: SweepParams) -> Result<(), CliError> {
    let out = g.out()?;
    let ds = load_dataset(require(&p.data, "data")?)?;
    let q = ds.basis.dim().pow(2) - 1;
    let dims = p.dims.get_or_insert_with(|| (1..=q).collect()).clone();
    let modes = p
        .modes
        .iter()
        .map(|m| ImageMode::parse(m))
        .collect::<Result<Vec<_>, _>>()?;
    let mut result = SweepResult::default();
    for r in &p.regressors {
        let mut fit = p.fit.clone();
        fit.regressor = r.clone();
        let options = fit_options(&fit, ImageMode::Pair, LatentSplit::total(q, ImageMode::Pair), g.seed)?;
        result.rows.extend(sweep_latent_dims(&ds, &dims, &modes, &options)?.rows);
    }
    create_out(out)?;
    write_text(&out.join("sweep.csv"), &result.to_csv())?;
    write_resolved(out, "sweep", g.seed, &p)?;
    println!("{:>5} {:>7} {:>7} {:>9} {:>9}  channels", "dims", "mode", "model", "fidelity", "stderr");
    for r in &result.rows {
        let s = LatentSplit::total(r.total_dims, r.mode);
        println!(
            "{:>5} {:>7} {:>7} {:>9.4} {:>9.4}  {}+{}",
            r.total_dims,
            r.mode.name(),
            r.regressor.name(),
            r.mean_fidelity,
            r.stderr,
            s.primary,
            s.shifted
        );
    }
    Ok(())
}

fn symmetry(g: &Globals, mut p: SymmetryParams) -> Result<(), CliError> {
    let out = g.out()?;
    let ds: Dataset = load_dataset(require(&p.data, "data")?)?;
    let total = *p.dims.get_or_insert(ds.basis.dim().pow(2) - 1);
    let options = fit_options(&p.fit, ImageMode::Pair, LatentSplit::total(total, ImageMode::Pair), g.seed)?;
    let report = symmetry_analysis(&ds, total, &options)?;
    let mut text = String::new();
    for (label, s) in [
        ("single correct", &report.single_correct),
        ("single flipped", &report.single_flipped),
        ("pair correct", &report.pair_correct),
        ("pair flipped", &report.pair_flipped),
    ] {
        writeln!(text, "{label:<15} {:.4} ± {:.4}", s.mean, s.stderr).expect("string write");
    }
    if let Some(e) = &report.equator {
        writeln!(
            text,
            "mean |b_z|: single {:.4}, pair {:.4}, true {:.4}",
            e.single_mean_abs_bz, e.pair_mean_abs_bz, e.truth_mean_abs_bz
        )
        .expect("string write");
    }
    create_out(out)?;
    write_text(&out.join("symmetry.csv"), &report.to_csv())?;
    write_text(&out.join("report.txt"), &text)?;
    write_resolved(out, "symmetry", g.seed, &p)?;
    print!("{text}");
    Ok(())
}

fn geometry(g: &Globals, p: GeometryParams) -> Result<(), CliError> {
    let out = g.out()?;
    let thetas = p
        .thetas
        .iter()
        .map(|t| parse_angle(t))
        .collect::<Result<Vec<_>, _>>()?;
    let geom = BeamGeometry {
        grid_n: p.grid,
        grid_halfwidth: p.halfwidth,
        ..BeamGeometry::default()
    };
    let fits = latent_geometry(&thetas, p.phi_samples, &geom)?;
    create_out(out)?;
    write_text(&out.join("geometry.csv"), &CircleFit::csv(&fits))?;
    write_resolved(out, "geometry", g.seed, &p)?;
    for f in &fits {
        println!(
            "theta {:.4}: radius {:.6}, rms {:.2e}, diameter {:.6}",
            f.theta, f.radius, f.rms_residual, f.diameter
        );
    }
    Ok(())
}

fn ingest(g: &Globals, p: IngestParams) -> Result<(), CliError> {
    let out = g.out()?;
    let ds = ingest_images(require(&p.manifest, "manifest")?)?;
    save_dataset(&ds, out)?;
    write_resolved(out, "ingest", g.seed, &p)?;
    println!(
        "ingested {} {} samples ({}labeled)",
        ds.len(),
        ds.image_mode().name(),
        if ds.is_labeled() { "" } else { "un" }
    );
    Ok(())
}

fn info(path: Option<&Path>) -> Result<(), CliError> {
    println!("oamreg {}", oamreg::VERSION);
    let Some(dir) = path else {
        return Ok(());
    };
    let m = Manifest::read(dir)?;
    print!("{}", m.to_text());
    if let Ok(text) = fs::read_to_string(dir.join("resolved.toml")) {
        println!("# resolved.toml");
        print!("{text}");
    }
    Ok(())
}
