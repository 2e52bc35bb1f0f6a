//! Train, evaluate, benchmark and raster commands on top of [`Network`].

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{Backend, Coding, NetworkConfig};
use crate::error::{Error, Result};
use crate::mnist::Dataset;
use crate::network::{Network, TrainOptions};
use crate::readout::{score, Readout};
use crate::sparse::SparseSpikes;
use crate::tensor::Potentials;

pub const CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub mode: BenchMode,
    pub layer: usize,
    pub samples: usize,
    pub seconds: f64,
    /// Mode the result was checked against.
    pub reference: BenchMode,
    pub reference_seconds: f64,
    /// Identical final weights (batch/single) or identical spikes and
    /// winners (sparse/dense).
    pub equivalent: bool,
}

impl BenchResult {
    /// Reference time over measured time.
    pub fn speedup(&self) -> f64 {
        if self.seconds > 0.0 { self.reference_seconds / self.seconds } else { 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config_name: String,
    pub config_hash: String,
    pub seed: u64,
    pub backend: Backend,
    pub train_samples: usize,
    pub test_samples: usize,
    pub phases: Vec<Phase>,
    /// Output spikes of every layer, summed over the test set.
    pub layer_spikes: Vec<u64>,
    pub accuracy: Option<f64>,
    pub recall: Vec<f64>,
    pub weights_sha256: String,
    pub bench: Option<BenchResult>,
}

impl RunReport {
    fn new(command: &str, net: &Network, seed: u64, backend: Backend) -> Self {
        RunReport {
            command: command.into(),
            config_name: net.config.name.clone(),
            config_hash: net.config.hash(),
            seed,
            backend,
            train_samples: 0,
            test_samples: 0,
            phases: Vec::new(),
            layer_spikes: vec![0; net.layers.len()],
            accuracy: None,
            recall: Vec::new(),
            weights_sha256: net.weights_digest(),
            bench: None,
        }
    }

    pub fn total_seconds(&self) -> f64 {
        self.phases.iter().map(|p| p.seconds).sum()
    }

    /// Copy with every wall-clock field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.phases.iter_mut().for_each(|p| p.seconds = 0.0);
        if let Some(b) = &mut r.bench {
            b.seconds = 0.0;
            b.reference_seconds = 0.0;
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

fn timed<T>(phases: &mut Vec<Phase>, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    phases.push(Phase { name: name.into(), seconds: start.elapsed().as_secs_f64() });
    Ok(out)
}

/// Builds a network from `config` and trains it layer by layer.
pub fn train(config: NetworkConfig, trainset: &Dataset, seed: u64, verbose: bool) -> Result<(Network, RunReport)> {
    let mut net = Network::new(config, seed)?;
    let backend = net.config.backend;
    let opts = TrainOptions { backend, per_sample: false, seed, verbose };
    let stats = net.train(trainset, opts)?;
    let mut report = RunReport::new("train", &net, seed, backend);
    report.train_samples = trainset.len();
    report.phases.push(Phase { name: "train".into(), seconds: stats.seconds });
    Ok((net, report))
}

/// Fits the readout on train features and scores the test set. Weights are
/// not modified.
pub fn evaluate(net: &Network, trainset: &Dataset, testset: &Dataset, seed: u64) -> Result<RunReport> {
    if !net.trained {
        return Err(Error::InvalidArgument("network has not been trained".into()));
    }
    let backend = net.config.backend;
    let mut report = RunReport::new("eval", net, seed, backend);
    report.train_samples = trainset.len();
    report.test_samples = testset.len();
    if trainset.is_empty() {
        return Err(Error::Data("the readout needs at least one training sample".into()));
    }
    let ftrain = timed(&mut report.phases, "features_train", || net.features(trainset, backend, seed))?;
    let ftest = timed(&mut report.phases, "features_test", || net.features(testset, backend, seed))?;
    let labels = |d: &Dataset| d.labels.iter().map(|&l| l as usize).collect::<Vec<_>>();
    let model = timed(&mut report.phases, "readout", || {
        Readout::fit(&ftrain.values, &labels(trainset), CLASSES, &net.config.readout, seed)
    })?;
    let pred = model.predict(&ftest.values)?;
    let (acc, recall) = score(&pred, &labels(testset), CLASSES);
    report.accuracy = Some(acc);
    report.recall = recall;
    report.layer_spikes = ftest.spikes;
    Ok(report)
}

/// Trains and evaluates in one go.
pub fn run(
    config: NetworkConfig,
    trainset: &Dataset,
    testset: &Dataset,
    seed: u64,
    verbose: bool,
) -> Result<(Network, RunReport)> {
    let (net, train_report) = train(config, trainset, seed, verbose)?;
    let mut report = evaluate(&net, trainset, testset, seed)?;
    report.command = "train".into();
    let mut phases = train_report.phases;
    phases.append(&mut report.phases);
    report.phases = phases;
    Ok((net, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMode {
    Batch,
    Single,
    Sparse,
}

impl BenchMode {
    fn options(self, seed: u64) -> TrainOptions {
        let (backend, per_sample) = match self {
            BenchMode::Batch => (Backend::Dense, false),
            BenchMode::Single => (Backend::Dense, true),
            BenchMode::Sparse => (Backend::Sparse, false),
        };
        TrainOptions { backend, per_sample, seed, verbose: false }
    }

    fn reference(self) -> BenchMode {
        match self {
            BenchMode::Batch => BenchMode::Single,
            BenchMode::Single | BenchMode::Sparse => BenchMode::Batch,
        }
    }
}

/// Samples compared between the sparse and dense backends.
const BENCH_COMPARE: usize = 100;

/// Times `epochs` passes of training on the first trainable layer in `mode`,
/// then repeats the run in the reference mode and checks that both agree.
pub fn bench(config: NetworkConfig, data: &Dataset, mode: BenchMode, epochs: usize, seed: u64) -> Result<RunReport> {
    let uses_rate = config.inference.as_ref().is_some_and(|i| i.coding == Coding::Rate);
    if mode == BenchMode::Sparse && uses_rate {
        return Err(Error::Unsupported("the sparse backend does not run rate-coded inference".into()));
    }
    let mut config = config;
    let layer = config
        .layers
        .iter()
        .position(|l| l.train().is_some())
        .ok_or_else(|| Error::Config("no trainable layer to benchmark".into()))?;
    let template = Network::new(config.clone(), seed)?;
    if let Some(t) = config.layers[layer].train_mut() {
        t.epochs = epochs;
    }
    let mut report = RunReport::new("bench", &template, seed, mode.options(seed).backend);
    report.train_samples = data.len();
    let mut result = BenchResult {
        mode,
        layer,
        samples: data.len(),
        seconds: 0.0,
        reference: mode.reference(),
        reference_seconds: 0.0,
        equivalent: true,
    };
    if data.is_empty() {
        report.bench = Some(result);
        return Ok(report);
    }

    let inputs = timed(&mut report.phases, "encode", || {
        let coded = template.encode_dataset(data)?;
        let mut out = Vec::with_capacity(coded.len());
        for chunk in coded.chunks(64) {
            let y = template.forward_range(SparseSpikes::concat_batch(chunk)?, 0, layer, Backend::Sparse)?;
            for b in 0..chunk.len() {
                out.push(y.slice_batch(b, b + 1)?);
            }
        }
        Ok(out)
    })?;

    let train_in = |m: BenchMode| -> Result<(Network, f64)> {
        let mut net = Network::new(config.clone(), seed)?;
        let start = Instant::now();
        net.train_layer(layer, &inputs, m.options(seed))?;
        Ok((net, start.elapsed().as_secs_f64()))
    };
    let (net, secs) = train_in(mode)?;
    let (reference, ref_secs) = train_in(mode.reference())?;
    report.phases.push(Phase { name: "train".into(), seconds: secs });
    report.phases.push(Phase { name: "reference".into(), seconds: ref_secs });
    result.seconds = secs;
    result.reference_seconds = ref_secs;
    if mode == BenchMode::Sparse {
        let n = data.len().min(BENCH_COMPARE);
        let batch = SparseSpikes::concat_batch(&inputs[..n])?;
        let (ws, ss) = net.train_forward(layer, &batch, Backend::Sparse)?;
        let (wd, sd) = net.train_forward(layer, &batch, Backend::Dense)?;
        let fs = net.forward_layer(layer, &batch, Backend::Sparse)?;
        let fd = net.forward_layer(layer, &batch, Backend::Dense)?;
        result.equivalent = ws == wd && ss == sd && fs == fd;
    } else {
        result.equivalent = net.weights_digest() == reference.weights_digest();
    }
    report.weights_sha256 = net.weights_digest();
    report.bench = Some(result);
    Ok(report)
}

/// Runs rate-coded inference on one image (`1 x 1 x C x H x W`) and writes a
/// `neuron,step` CSV row for every spike of the first `neurons` output
/// neurons. Returns the number of rows.
pub fn dump_raster(
    net: &Network,
    image: &Potentials,
    steps: usize,
    seed: u64,
    stream: u64,
    neurons: usize,
    path: impl AsRef<Path>,
) -> Result<usize> {
    let trains = net.rate_forward(image, steps, seed, stream)?;
    let out = trains.last().unwrap();
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "neuron,step")?;
    let mut rows = 0;
    for (t, events) in out.steps.iter().enumerate() {
        for &n in events.iter().filter(|&&n| (n as usize) < neurons) {
            writeln!(w, "{n},{t}")?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}
