use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use epel::harness::{self, Clock, ExperimentSpec, FitOutput, Method, MethodConfig};
use epel::models::Experiment;
use epel::nbp::{self, CrossMatchOptions};
use epel::SampleMatrix;
use nalgebra::DMatrix;

/// Bayesian empirical likelihood posteriors: fit, reference chains, cross-match scoring and experiments.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on one experiment and write its output to a directory.
    Fit {
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// JSON with optional `epel`, `vb` and `chain` sections.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the smooth surrogate of a non-smooth constraint.
        #[arg(long)]
        smooth: bool,
    },
    /// Draw a long reference chain and save it as CSV plus a JSON sidecar.
    Gold {
        #[arg(long)]
        experiment: String,
        #[arg(long, default_value = "mh")]
        method: String,
        #[arg(long, default_value_t = 1_000_000)]
        draws: usize,
        #[arg(long, default_value_t = 10_000)]
        burn_in: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dataset seed; defaults to `--seed`.
        #[arg(long)]
        data_seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        smooth: bool,
    },
    /// Cross-match two chain files; prints the result as JSON.
    Nbp {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = nbp::DEFAULT_QUANTILE)]
        quantile: f64,
        #[arg(long, default_value_t = nbp::DEFAULT_REPS)]
        reps: usize,
        #[arg(long, default_value_t = nbp::THRESHOLD_SEED)]
        seed: u64,
        #[arg(long)]
        standardize: bool,
        /// Largest pooled size; each sample is thinned evenly to half of it.
        #[arg(long)]
        max_pool: Option<usize>,
    },
    /// Run an experiment spec and write results, summary and manifest.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Full-scale repetitions and reference-chain length.
        #[arg(long)]
        full_scale: bool,
    },
    /// Plot the summary of an experiment directory as SVG.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> epel::Result<T> {
    Ok(serde_json::from_reader(File::open(path)?)?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> epel::Result<()> {
    serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), value)?;
    Ok(())
}

fn fit(experiment: &str, method: &str, seed: u64, out: &Path, config: Option<&Path>, smooth: bool) -> epel::Result<()> {
    let experiment = Experiment::parse(experiment)?;
    let method: Method = method.parse()?;
    let config: MethodConfig = config.map(read_json).transpose()?.unwrap_or_default();
    let target = harness::experiment_target(experiment, seed, smooth)?;
    fs::create_dir_all(out)?;
    match harness::fit_method(experiment, &target, method, &config, seed)? {
        FitOutput::Gaussian { approx, laplace, ep_trace, vb_trace } => {
            write_json(&out.join("approx.json"), &approx)?;
            if let Some(l) = laplace {
                write_json(&out.join("laplace.json"), &l)?;
            }
            if let Some(t) = ep_trace {
                t.write_jsonl(BufWriter::new(File::create(out.join("trace.jsonl"))?))?;
            }
            if let Some(t) = vb_trace {
                t.write_jsonl(BufWriter::new(File::create(out.join("trace.jsonl"))?))?;
            }
            let m = approx.to_moments()?;
            println!("mean {:.6?}", m.mu.as_slice());
            println!("sd   {:.6?}", m.sigma.diagonal().map(f64::sqrt).as_slice());
        }
        FitOutput::Chain(chain) => {
            chain.save(&out.join("chain.csv"))?;
            println!("{} draws, accept rate {:.3}", chain.len(), chain.accept_rate);
            println!("mean {:.6?}", chain.mean());
        }
    }
    println!("{} EL evaluations; output in {}", target.el_evals(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn gold(
    experiment: &str,
    method: &str,
    draws: usize,
    burn_in: usize,
    seed: u64,
    data_seed: Option<u64>,
    out: &Path,
    smooth: bool,
) -> epel::Result<()> {
    let experiment = Experiment::parse(experiment)?;
    let method: Method = method.parse()?;
    let target = harness::experiment_target(experiment, data_seed.unwrap_or(seed), smooth)?;
    let chain = harness::gold_standard(experiment, &target, method, draws, burn_in, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    chain.save(out)?;
    eprintln!("{} draws in {:.1}s, accept rate {:.3}", chain.len(), chain.seconds, chain.accept_rate);
    Ok(())
}

fn thin_to(draws: DMatrix<f64>, count: usize) -> DMatrix<f64> {
    if draws.nrows() <= count {
        return draws;
    }
    let m = draws.nrows();
    let rows: Vec<usize> = (0..count).map(|k| k * m / count).collect();
    draws.select_rows(rows.iter())
}

fn cross(a: &Path, b: &Path, opts: CrossMatchOptions, max_pool: Option<usize>) -> epel::Result<()> {
    let mut a = SampleMatrix::load(a)?.draws;
    let mut b = SampleMatrix::load(b)?.draws;
    if let Some(pool) = max_pool {
        a = thin_to(a, pool / 2);
        b = thin_to(b, pool / 2);
    }
    let result = nbp::cross_match_with(&a, &b, &opts)?;
    println!("{}", serde_json::to_string(&result)?);
    Ok(())
}

fn experiment(spec: &Path, out: &Path, full_scale: bool) -> epel::Result<()> {
    let mut spec: ExperimentSpec = read_json(spec)?;
    if full_scale {
        spec = spec.full_scale();
    }
    let unit = match spec.clock {
        Clock::Seconds => "s",
        Clock::Evaluations => " evals",
    };
    let output = harness::run_experiment_with(&spec, &mut |row| {
        let score = match (&row.nbp_count, &row.skipped) {
            (Some(c), _) => format!("{c} ({})", if row.pass { "pass" } else { "fail" }),
            (None, Some(why)) => format!("skipped: {why}"),
            (None, None) => "-".into(),
        };
        eprintln!("rep {:>2} {:<8} @ {:>8}{unit}: {score}", row.rep, row.method, row.checkpoint_seconds);
    })?;
    harness::write_outputs(out, &output)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn plot(input: &Path, out: &Path) -> epel::Result<()> {
    let rows = harness::read_rows(File::open(input.join(harness::RESULTS_FILE))?)?;
    let threshold = rows.first().map_or(0, |r| r.threshold);
    let summary = harness::summarize(&rows)?;
    fs::write(out, harness::svg_chart(&summary, threshold)?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit { experiment, method, seed, out, config, smooth } => {
            fit(&experiment, &method, seed, &out, config.as_deref(), smooth)
        }
        Command::Gold { experiment, method, draws, burn_in, seed, data_seed, out, smooth } => {
            gold(&experiment, &method, draws, burn_in, seed, data_seed, &out, smooth)
        }
        Command::Nbp { a, b, quantile, reps, seed, standardize, max_pool } => {
            cross(&a, &b, CrossMatchOptions { quantile, reps, seed, standardize }, max_pool)
        }
        Command::Experiment { spec, out, full_scale } => experiment(&spec, &out, full_scale),
        Command::Plot { input, out } => plot(&input, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
