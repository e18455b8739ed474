//! `eclsm`: eddy-current forward fields, multistatic data synthesis and LSM
//! inversion from a TOML run configuration.
//!
//!   eclsm forward    --config run.toml --out out/
//!   eclsm synthesize --config run.toml --seed 7
//!   eclsm invert out/matrix.txt --config run.toml
//!   eclsm reproduce fig5_N16 fig6_M1

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eclsm::config::{parse_config, RunConfig};
use eclsm::forward::ComplexField;
use eclsm::io;
use eclsm::lsm::IndicatorField;
use eclsm::pipeline::{self, Metrics, EXPERIMENT_IDS};
use eclsm::synth::BandConvention;
use eclsm::{Error, Result};

#[derive(Parser)]
#[command(name = "eclsm", version, about = "Eddy-current imaging of tube deposits with the Linear Sampling Method")]
struct Cli {
    /// Run configuration (TOML); defaults are used for anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Noise seed, overriding `noise.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Band truncation convention: exclusive keeps |i-j| < M, inclusive keeps |i-j| <= M.
    #[arg(long, global = true)]
    band_convention: Option<BandConvention>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for one source and export incident, scattered and total fields.
    Forward,
    /// Build the multistatic matrix, add noise, band-truncate and save it.
    Synthesize,
    /// Run the LSM on a saved matrix and save the indicator.
    Invert {
        /// Matrix file written by `synthesize`.
        matrix: PathBuf,
    },
    /// Run canned experiments and print their metrics.
    Reproduce {
        #[arg(required = true)]
        ids: Vec<String>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.noise.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(c) = cli.band_convention {
        cfg.band.convention = c;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn save_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(())
}

fn mm(x: f64) -> f64 {
    x * 1e3
}

fn describe_indicator(ind: &IndicatorField) -> String {
    let p = ind.argmax_point();
    format!(
        "argmax (r, z) = ({:.2}, {:.2}) mm, epsilon converged on {:.1}% of {} points",
        mm(p.r),
        mm(p.z),
        100.0 * ind.converged_fraction(),
        ind.grid.len()
    )
}

fn metrics_header() -> String {
    format!(
        "{:<20} {:>9} {:>9} {:>7} {:>9} {:>9} {:>9} {:>6}",
        "id", "arg r mm", "arg z mm", "inside", "dist mm", "dz mm", "contrast", "found"
    )
}

fn metrics_row(id: &str, m: &Metrics) -> String {
    let found = m.components_found.iter().filter(|&&f| f).count();
    format!(
        "{:<20} {:>9.2} {:>9.2} {:>7} {:>9.2} {:>9.2} {:>9.3} {:>3}/{:<2}",
        id,
        mm(m.argmax.r),
        mm(m.argmax.z),
        m.argmax_inside,
        mm(m.centroid_distance),
        mm(m.z_error),
        m.contrast,
        found,
        m.components_found.len()
    )
}

fn forward(cfg: &RunConfig) -> Result<String> {
    let dir = &cfg.output_dir;
    let hash = cfg.hash();
    save_config(dir, cfg)?;
    let f = pipeline::forward_fields(cfg)?;
    io::save_mesh(&dir.join("mesh.txt"), &f.mesh, &hash)?;
    io::save_field(&dir.join("incident.csv"), &f.incident, &hash)?;
    io::save_field(&dir.join("scattered.csv"), &f.scattered, &hash)?;
    io::save_field(&dir.join("total.csv"), &f.total, &hash)?;
    let max = |f: &ComplexField| f.values().iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(format!(
        "source {} on {} vertices: max |u0| = {:.4e}, max |us| = {:.4e}\nwrote fields to {}",
        f.source,
        f.mesh.n_vertices(),
        max(&f.incident),
        max(&f.scattered),
        dir.display()
    ))
}

fn synthesize(cfg: &RunConfig) -> Result<String> {
    let dir = &cfg.output_dir;
    let hash = cfg.hash();
    save_config(dir, cfg)?;
    let s = pipeline::synthesize(cfg)?;
    io::save_matrix(&dir.join("matrix_clean.txt"), &s.clean, &hash)?;
    io::save_matrix(&dir.join("matrix.txt"), &s.data, &hash)?;
    Ok(format!(
        "{} {}x{} matrix: max |Z| = {:.4e}, asymmetry {:.2e}, noise {}, band {}\nwrote {}",
        s.data.kind,
        s.data.n(),
        s.data.n(),
        s.clean.max_abs(),
        s.clean.asymmetry(),
        s.data.noise_level,
        s.data.band.map_or("full".to_string(), |m| format!("M={m} ({})", s.data.convention)),
        dir.join("matrix.txt").display()
    ))
}

fn invert(cfg: &RunConfig, matrix: &Path) -> Result<String> {
    let m = io::load_matrix(matrix)?;
    let dir = &cfg.output_dir;
    let hash = cfg.hash();
    save_config(dir, cfg)?;
    let ind = pipeline::invert(cfg, &m)?;
    io::save_indicator(&dir.join("indicator.csv"), &ind, &hash)?;
    io::save_pgm(&dir.join("indicator.pgm"), &ind, &hash)?;
    let mut msg = describe_indicator(&ind);
    if !cfg.geometry.deposits.is_empty() {
        let m = pipeline::metrics(&ind, &cfg.geometry.deposits);
        let _ = write!(msg, "\n{}\n{}", metrics_header(), metrics_row("invert", &m));
    }
    let _ = write!(msg, "\nwrote {}", dir.join("indicator.csv").display());
    Ok(msg)
}

fn reproduce(base: &RunConfig, ids: &[String]) -> Result<String> {
    let unknown: Vec<&String> = ids.iter().filter(|id| !EXPERIMENT_IDS.contains(&id.as_str())).collect();
    if !unknown.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "unknown experiment id(s) {:?}; known ids: {}",
            unknown,
            EXPERIMENT_IDS.join(", ")
        )));
    }
    let mut out = metrics_header();
    println!("{out}");
    for id in ids {
        let cfg = pipeline::experiment_config(id, base)?;
        let run = pipeline::run_experiment(&cfg)?;
        let dir = base.output_dir.join(id);
        let hash = cfg.hash();
        save_config(&dir, &cfg)?;
        io::save_matrix(&dir.join("matrix.txt"), &run.synthesis.data, &hash)?;
        io::save_indicator(&dir.join("indicator.csv"), &run.indicator, &hash)?;
        io::save_pgm(&dir.join("indicator.pgm"), &run.indicator, &hash)?;
        let row = metrics_row(id, &run.metrics);
        println!("{row}");
        out.push('\n');
        out.push_str(&row);
    }
    fs::create_dir_all(&base.output_dir)?;
    fs::write(base.output_dir.join("metrics.txt"), format!("{out}\n"))?;
    Ok(format!("wrote {}", base.output_dir.join("metrics.txt").display()))
}

fn run(cli: &Cli) -> Result<String> {
    if let Some(k) = cli.workers {
        if k == 0 {
            return Err(Error::InvalidArgument("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Forward => forward(&cfg),
        Command::Synthesize => synthesize(&cfg),
        Command::Invert { matrix } => invert(&cfg, matrix),
        Command::Reproduce { ids } => reproduce(&cfg, ids),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
