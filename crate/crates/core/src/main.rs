use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spc_core::eval::{accuracy, nmi, purity, Partition};
use spc_core::workbench::experiment::{build_kernels, load_dataset};
use spc_core::workbench::io::{labels_path_for, load_dense_matrix, load_labels, save_dataset, save_kernel};
use spc_core::workbench::moons::{DEFAULT_MOONS_NOISE, DEFAULT_MOONS_SAMPLES, DEFAULT_MOONS_SEED};
use spc_core::workbench::report::{round6, RunReport, Scores};
use spc_core::workbench::svg::emit_scatter_svg;
use spc_core::workbench::{
    generate_two_moons, run_experiment, DatasetSource, ExperimentConfig, KernelChoice, Method,
};
use spc_core::{Error, Result};

#[derive(Parser)]
#[command(name = "spc", version, about = "Similarity preserving clustering")]
struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a two-moons dataset and its labels.
    GenMoons {
        #[arg(long, default_value_t = DEFAULT_MOONS_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_MOONS_NOISE)]
        noise: f64,
        #[arg(long, default_value_t = DEFAULT_MOONS_SEED)]
        seed: u64,
        /// Output directory; receives moons.csv and moons.labels.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate kernels on a dataset and write one matrix file per kernel.
    BuildKernels(RunArgs),
    /// Cluster with a single kernel.
    Spc(RunArgs),
    /// Cluster with learned weights over a kernel bank.
    Mspc(RunArgs),
    /// Score predicted labels against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Draw a 2-D dataset colored by labels.
    Plot {
        #[arg(long)]
        data: PathBuf,
        /// Defaults to the dataset's companion labels file.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Output directory; receives scatter.svg.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file (TOML); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dense matrix file (columns are samples); replaces the configured dataset.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    clusters: Option<usize>,
    /// gaussian:t, poly:a,b, linear or bank
    #[arg(long)]
    kernel: Option<KernelChoice>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    adapt_beta: Option<bool>,
    /// Use the single kernel as evaluated, without min-max scaling.
    #[arg(long)]
    raw_kernel: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    /// Config file (or defaults) with flags applied on top.
    fn resolve(&self, method: Method) -> Result<ExperimentConfig> {
        let (mut cfg, file_sets_kernel) = match &self.config {
            Some(path) => {
                let cfg = ExperimentConfig::load(path)?;
                let text = std::fs::read_to_string(path).unwrap_or_default();
                let sets_kernel = text
                    .parse::<toml::Table>()
                    .map(|t| t.contains_key("kernel"))
                    .unwrap_or(false);
                (cfg, sets_kernel)
            }
            None => (ExperimentConfig::default(), false),
        };
        cfg.method = method;
        if method == Method::Mspc && !file_sets_kernel {
            cfg.kernel = KernelChoice::Bank;
        }
        if let Some(k) = self.kernel {
            cfg.kernel = k;
        }
        if let Some(p) = &self.data {
            cfg.dataset = DatasetSource::File { path: p.clone() };
        }
        let s = &mut cfg.spc;
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.alpha {
            s.alpha = v;
        }
        if let Some(v) = self.beta {
            s.beta = v;
        }
        if let Some(v) = self.gamma {
            s.gamma = v;
        }
        if let Some(v) = self.clusters {
            s.clusters = v;
        }
        if let Some(v) = self.max_iters {
            s.max_iters = v;
        }
        if let Some(v) = self.rel_tol {
            s.rel_tol = v;
        }
        if let Some(v) = self.adapt_beta {
            s.adapt_beta = v;
        }
        if self.raw_kernel {
            cfg.normalize_kernel = false;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        Ok(cfg)
    }
}

fn print_scores(prefix: &str, s: &Scores) {
    for (name, v) in [("accuracy", s.accuracy), ("nmi", s.nmi), ("purity", s.purity)] {
        if let Some(v) = v {
            println!("{prefix}{name} {v:.6}");
        }
    }
}

fn print_summary(r: &RunReport) {
    println!("method {}", r.method);
    println!("samples {}", r.samples);
    println!("iterations {}", r.iterations);
    println!("converged {}", r.converged);
    println!("components {}", r.component_count);
    println!("final_beta {}", r.final_beta);
    if let Some(m) = &r.metrics {
        print_scores("", m);
    }
    if let Some(b) = &r.baseline {
        print_scores("kmeans_", b);
    }
    if let Some(w) = &r.weights {
        for (name, v) in w.kernels.iter().zip(&w.values) {
            println!("weight {name} {v:.6e}");
        }
    }
}

fn file_stem(spec: &str) -> String {
    spec.replace([':', ','], "_")
}

fn build_kernels_cmd(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve(Method::Spc)?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Error::InvalidConfig("build-kernels needs --out".into()))?;
    let x = load_dataset(&cfg.dataset)?;
    let (bank, names) = build_kernels(&cfg, &x)?;
    for (i, (k, name)) in bank.iter().zip(&names).enumerate() {
        let path = out.join(format!("kernel_{i:02}_{}.csv", file_stem(name)));
        save_kernel(&path, k)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn plot_cmd(data: &Path, labels: Option<&Path>, out: &Path) -> Result<()> {
    let x = load_dense_matrix(data)?;
    let labels = match labels {
        Some(p) => load_labels(p)?,
        None => x
            .labels()
            .map(<[usize]>::to_vec)
            .ok_or_else(|| Error::InvalidLabels(format!("no labels file {}", labels_path_for(data).display())))?,
    };
    if labels.len() != x.samples() {
        return Err(Error::DimensionMismatch {
            expected: x.samples(),
            actual: labels.len(),
        });
    }
    let path = out.join("scatter.svg");
    emit_scatter_svg(&x, &Partition::from_raw(&labels), &path)?;
    println!("{}", path.display());
    Ok(())
}

fn eval_cmd(pred: &Path, truth: &Path) -> Result<()> {
    let p = Partition::from_raw(&load_labels(pred)?);
    let t = Partition::from_raw(&load_labels(truth)?);
    print_scores(
        "",
        &Scores {
            accuracy: Some(round6(accuracy(&p, &t)?)),
            nmi: Some(round6(nmi(&p, &t)?)),
            purity: Some(round6(purity(&p, &t)?)),
        },
    );
    Ok(())
}

fn gen_moons_cmd(samples: usize, noise: f64, seed: u64, out: &Path) -> Result<()> {
    let path = out.join("moons.csv");
    save_dataset(&path, &generate_two_moons(samples, noise, seed)?)?;
    println!("{}", path.display());
    Ok(())
}

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::GenMoons {
            samples,
            noise,
            seed,
            out,
        } => gen_moons_cmd(samples, noise, seed, &out).map(|_| EXIT_OK),
        Command::BuildKernels(args) => build_kernels_cmd(&args).map(|_| EXIT_OK),
        Command::Spc(args) => run_cmd(&args, Method::Spc),
        Command::Mspc(args) => run_cmd(&args, Method::Mspc),
        Command::Eval { pred, truth } => eval_cmd(&pred, &truth).map(|_| EXIT_OK),
        Command::Plot { data, labels, out } => plot_cmd(&data, labels.as_deref(), &out).map(|_| EXIT_OK),
    }
}

fn run_cmd(args: &RunArgs, method: Method) -> Result<u8> {
    let cfg = args.resolve(method)?;
    let report = run_experiment(&cfg)?;
    print_summary(&report);
    Ok(if report.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

/// Parses `args` (program name first) and runs the command; returns the exit status.
fn run_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests go to stdout and are not failures.
            if e.use_stderr() {
                eprint!("{}", e.render());
                return EXIT_ERROR;
            }
            print!("{}", e.render());
            return EXIT_OK;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run_with(std::env::args_os()))
}
