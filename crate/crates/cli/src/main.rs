use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dpaccel::harness::{
    self, load_json, svg, AllocateConfig, CertifyConfig, ExperimentConfig, GenDataConfig, QuadraticAnalysisConfig,
};
use dpaccel::objectives::generate_synthetic;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "dpaccel", version, about = "Differentially private accelerated gradient methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic logistic-regression dataset.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed_base: Option<u64>,
    },
    /// Run the comparison grid and write traces, schedules and a summary.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed_base: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Also write one SVG of the mean curves per (m, T, c).
        #[arg(long)]
        svg: bool,
    },
    /// Compute an algorithm's noise schedule and bound values.
    Allocate {
        #[command(flatten)]
        common: Common,
    },
    /// Search a heavy-ball certificate and emit its bound curve.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Sweep the exact quadratic heavy-ball rate and bound over (alpha, beta).
    AnalyzeQuadratic {
        #[command(flatten)]
        common: Common,
    },
    /// Summarize a directory of trace CSVs with JSON sidecars.
    Summarize {
        /// Directory holding the traces.
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn config_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => load_json(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(T::default()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), value)
        .with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData { common, seed_base } => {
            let mut cfg: GenDataConfig = config_or_default(common.config.as_deref())?;
            if let Some(seed) = seed_base {
                cfg.seed = seed;
            }
            fs::create_dir_all(&common.out)?;
            let data = generate_synthetic(cfg.d, cfg.n, cfg.u_max, cfg.seed)?;
            let path = common.out.join("data.csv");
            data.save(&path)?;
            println!(
                "wrote {} records (d = {}, positive rate {:.3}) to {}",
                data.len(),
                data.dim(),
                data.positive_rate(),
                path.display()
            );
        }
        Command::Run {
            common,
            seed_base,
            workers,
            svg: with_svg,
        } => {
            let mut cfg: ExperimentConfig = config_or_default(common.config.as_deref())?;
            if let Some(seed) = seed_base {
                cfg.seed_base = seed;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            fs::create_dir_all(&common.out)?;
            let output = harness::run_grid(&cfg, Some(&common.out))?;
            println!(
                "F* = {:.12} (gradient norm {:.2e}); {} traces, {} failures",
                output.reference.f_star,
                output.reference.gradient_norm,
                output.traces.len(),
                output.failures.len()
            );
            for r in &output.summary.records {
                println!(
                    "{:<12} m={:<6} T={:<5} c={:<4} T_eff={:<5} final mean subopt {:.4e}",
                    r.algorithm,
                    r.batch_size,
                    r.horizon,
                    r.c.unwrap_or(f64::NAN),
                    r.t_effective,
                    r.final_mean_subopt
                );
            }
            for f in &output.failures {
                eprintln!("failed: {} m={} T={} c={}: {}", f.algorithm, f.batch_size, f.horizon, f.c, f.error);
            }
            if with_svg {
                write_svgs(&output.summary, &common.out.join("plots"))?;
            }
        }
        Command::Allocate { common } => {
            let cfg: AllocateConfig = config_or_default(common.config.as_deref())?;
            fs::create_dir_all(&common.out)?;
            let report = harness::allocate(&cfg)?;
            report.write_schedule_csv(create(&common.out.join("schedule.csv"))?, cfg.s1, cfg.n, cfg.m)?;
            write_json(&common.out.join("allocation.json"), &report)?;
            println!(
                "{}: T = {}, composed leak {:.12}, bound uniform {:?} vs schedule {:?}",
                report.algorithm, report.horizon, report.total_leak, report.uniform_bound, report.schedule_bound
            );
        }
        Command::Certify { common, workers } => {
            let cfg: CertifyConfig = config_or_default(common.config.as_deref())?;
            if let Some(w) = workers {
                rayon_threads(w)?;
            }
            fs::create_dir_all(&common.out)?;
            let report = harness::certify(&cfg)?;
            report.write_curve_csv(create(&common.out.join("bound.csv"))?)?;
            write_json(&common.out.join("certificate.json"), &report)?;
            match &report.certificate {
                Some(c) => println!(
                    "certified rho = {} with P = {:?}, c0 = {}, c = {} (slack {:.3e})",
                    c.rho, c.p, c.c0, c.c, c.slack
                ),
                None => println!("no feasible grid point"),
            }
        }
        Command::AnalyzeQuadratic { common } => {
            let cfg: QuadraticAnalysisConfig = config_or_default(common.config.as_deref())?;
            fs::create_dir_all(&common.out)?;
            let rows = harness::analyze_quadratic(&cfg)?;
            let mut csv = csv::Writer::from_writer(create(&common.out.join("quadratic.csv"))?);
            csv.write_record(["alpha", "beta", "c_w", "sigma_t2", "rho", "bound"])?;
            for r in &rows {
                csv.write_record([
                    format!("{:?}", r.alpha),
                    format!("{:?}", r.beta),
                    format!("{:?}", r.noise_level),
                    format!("{:?}", r.sigma_t2),
                    format!("{:?}", r.rho),
                    r.bound.map_or_else(String::new, |b| format!("{b:?}")),
                ])?;
            }
            csv.flush()?;
            println!("wrote {} rows to {}", rows.len(), common.out.join("quadratic.csv").display());
        }
        Command::Summarize { traces, out } => {
            let loaded = harness::load_traces(&traces)?;
            let summary = harness::summarize(&loaded)?;
            fs::create_dir_all(&out)?;
            write_json(&out.join("summary.json"), &summary)?;
            for b in &summary.best_over_horizon {
                println!(
                    "{:<12} m={:<6} c={:<4} best T={:<5} final mean subopt {:.4e}",
                    b.algorithm,
                    b.batch_size,
                    b.c.unwrap_or(f64::NAN),
                    b.horizon,
                    b.final_mean_subopt
                );
            }
        }
    }
    Ok(())
}

fn rayon_threads(workers: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .context("configuring worker threads")
}

fn write_svgs(summary: &harness::Summary, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut keys: Vec<(usize, usize, Option<f64>)> = summary
        .records
        .iter()
        .map(|r| (r.batch_size, r.horizon, r.c))
        .collect();
    keys.dedup();
    keys.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.unwrap_or(0.0).total_cmp(&b.2.unwrap_or(0.0))));
    keys.dedup();
    for (m, t, c) in keys {
        let series: Vec<svg::Series> = summary
            .records
            .iter()
            .filter(|r| r.batch_size == m && r.horizon == t && r.c == c)
            .map(|r| svg::Series {
                label: r.algorithm.clone(),
                points: r
                    .mean_log10_subopt
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (i as f64, *v))
                    .collect(),
            })
            .collect();
        let c = c.unwrap_or(f64::NAN);
        let title = format!("mean log10 suboptimality, m = {m}, T = {t}, c = {c}");
        fs::write(dir.join(format!("m{m}_T{t}_c{c}.svg")), svg::line_plot(&title, &series))?;
    }
    Ok(())
}
