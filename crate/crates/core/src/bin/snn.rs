use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use snn_core::config::{Backend, NetworkConfig};
use snn_core::mnist::{load_split, Dataset};
use snn_core::network::Network;
use snn_core::pipeline::{self, BenchMode, RunReport};
use snn_core::{Error, Result};

#[derive(Parser)]
#[command(name = "snn", version, about = "Spiking network training and evaluation on MNIST")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// MNIST directory (defaults to $SNN_MNIST_DIR, then ./data/mnist).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 10000)]
    limit_train: usize,
    #[arg(long, default_value_t = 2000)]
    limit_test: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network, evaluate it with the linear readout and save both.
    Train {
        /// Config JSON file, or the name of a preset: `kheradpisheh`, `demo`, `rate-demo`.
        #[arg(long)]
        config: String,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        /// Output directory for the model and `report.json`.
        #[arg(long)]
        out: PathBuf,
        /// Skip evaluation.
        #[arg(long)]
        no_eval: bool,
        #[arg(long, short)]
        verbose: bool,
    },
    /// Evaluate a saved model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report path (defaults to `<model>/eval.json`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time training of the first trainable layer in one execution mode.
    Bench {
        #[arg(long)]
        config: String,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a `neuron,step` CSV of rate-coded output spikes for one test image.
    DumpRaster {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Index into the test split.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 300)]
        steps: usize,
        #[arg(long, default_value_t = 40)]
        neurons: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Dense,
    Sparse,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Batch,
    Single,
    Sparse,
}

fn data_dir(arg: Option<PathBuf>) -> PathBuf {
    arg.or_else(|| std::env::var_os("SNN_MNIST_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data/mnist"))
}

fn load_config(spec: &str) -> Result<NetworkConfig> {
    match NetworkConfig::preset(spec) {
        Some(cfg) => Ok(cfg),
        None => NetworkConfig::load(spec),
    }
}

fn load_data(dir: &Path, split: &str, limit: usize) -> Result<Dataset> {
    load_split(dir, split, Some(limit))
}

fn print_report(report: &RunReport) {
    if let Some(acc) = report.accuracy {
        eprintln!("accuracy: {acc:.2}%");
    }
    if let Some(b) = &report.bench {
        eprintln!(
            "{:?}: {:.3}s, {:?}: {:.3}s, speedup {:.2}x, equivalent: {}",
            b.mode,
            b.seconds,
            b.reference,
            b.reference_seconds,
            b.speedup(),
            b.equivalent
        );
    }
    println!("{}", report.to_json());
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, data, seed, backend, out, no_eval, verbose } => {
            let mut config = load_config(&config)?;
            if let Some(b) = backend {
                config.backend = match b {
                    BackendArg::Dense => Backend::Dense,
                    BackendArg::Sparse => Backend::Sparse,
                };
            }
            let dir = data_dir(data.data);
            let trainset = load_data(&dir, "train", data.limit_train)?;
            let testset = if no_eval { Dataset::default() } else { load_data(&dir, "t10k", data.limit_test)? };
            let (net, report) = if no_eval {
                pipeline::train(config, &trainset, seed, verbose)?
            } else {
                pipeline::run(config, &trainset, &testset, seed, verbose)?
            };
            net.save(&out)?;
            report.save(out.join("report.json"))?;
            print_report(&report);
        }
        Command::Eval { model, data, seed, out } => {
            let net = Network::load(&model)?;
            let dir = data_dir(data.data);
            let trainset = load_data(&dir, "train", data.limit_train)?;
            let testset = load_data(&dir, "t10k", data.limit_test)?;
            let report = pipeline::evaluate(&net, &trainset, &testset, seed)?;
            report.save(out.unwrap_or_else(|| model.join("eval.json")))?;
            print_report(&report);
        }
        Command::Bench { config, mode, data, samples, epochs, seed, out } => {
            let config = load_config(&config)?;
            let mode = match mode {
                ModeArg::Batch => BenchMode::Batch,
                ModeArg::Single => BenchMode::Single,
                ModeArg::Sparse => BenchMode::Sparse,
            };
            let dataset = if samples == 0 {
                Dataset::default()
            } else {
                load_data(&data_dir(data), "train", samples)?
            };
            let report = pipeline::bench(config, &dataset, mode, epochs, seed)?;
            if let Some(path) = out {
                report.save(path)?;
            }
            print_report(&report);
        }
        Command::DumpRaster { model, data, index, steps, neurons, seed, out } => {
            let net = Network::load(&model)?;
            let testset = load_data(&data_dir(data), "t10k", index + 1)?;
            if index >= testset.len() {
                return Err(Error::Data(format!("test split has only {} samples", testset.len())));
            }
            let image = testset.gather(&[index])?;
            let rows = pipeline::dump_raster(&net, &image, steps, seed, index as u64, neurons, &out)?;
            eprintln!("{rows} spikes written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else if e.is_data_error() {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
