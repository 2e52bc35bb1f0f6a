//! Network assembly from a [`NetworkConfig`], layer-wise STDP training and
//! feature extraction.
//!
//! Rank-order trains move between layers as [`SparseSpikes`]. The dense
//! backend expands them and runs the dense kernels; the sparse backend works
//! on events directly. Both follow the same rules:
//!
//! * training a layer: `threshold -> inhibit -> WTA -> fire -> STDP`, with all
//!   winners of a mini-batch chosen before any weight changes;
//! * inference: `fire(potentials, threshold)` with no inhibition, then the
//!   following pooling and padding layers.
//!
//! Rate-coded inference runs step by step on per-step event lists, so its cost
//! follows the number of spikes rather than the step count.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::coding::{rank_bins, rate_code_sample};
use crate::config::{Backend, Coding, LayerConfig, NetworkConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::filters::FilterBank;
use crate::layers::{pad, pool, scatter_event, ConvLayer, FcLayer, PoolConfig};
use crate::learning::{conv_wta, fc_wta, inhibit, Winner, NEVER};
use crate::mnist::Dataset;
use crate::sparse::{
    crossings_to_sparse, pool_times, sparse_crossings, to_dense, to_sparse, FireRule, SparseSpikes,
};
use crate::tensor::{fire, quantize, threshold_inplace, Potentials, Shape5, Spikes};

/// Samples per chunk when streaming a dataset through the network.
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerState {
    Conv(ConvLayer),
    Fc(FcLayer),
    Pool(PoolConfig),
    Pad(usize),
}

/// Execution options for [`Network::train`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub backend: Backend,
    /// Run the forward kernels one sample at a time while keeping the
    /// mini-batch update schedule.
    pub per_sample: bool,
    pub seed: u64,
    pub verbose: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainStats {
    pub seconds: f64,
    /// Winners used for plasticity, per layer.
    pub winners: Vec<u64>,
}

/// Features of a dataset: row-major `samples x features`.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub rows: usize,
    pub width: usize,
    pub values: Vec<f32>,
    /// Output spikes per layer summed over samples (neurons that fired under
    /// rank-order coding; individual spikes under rate coding).
    pub spikes: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub layers: Vec<LayerState>,
    /// Set once [`Network::train`] has run.
    pub trained: bool,
    bank: Option<FilterBank>,
    shapes: Vec<(usize, usize, usize)>,
}

fn layer_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Single-sample rate-coded train: sorted spike indices per step.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTrain {
    pub shape: (usize, usize, usize),
    pub steps: Vec<Vec<u32>>,
}

impl RateTrain {
    pub fn spike_count(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }

    /// Spike count of every neuron divided by the number of steps.
    pub fn rates(&self) -> Vec<f32> {
        let (c, h, w) = self.shape;
        let mut out = vec![0.0f32; c * h * w];
        for step in &self.steps {
            for &i in step {
                out[i as usize] += 1.0;
            }
        }
        let n = self.steps.len() as f32;
        out.iter_mut().for_each(|v| *v /= n);
        out
    }

    pub fn to_dense(&self) -> Spikes {
        let (c, h, w) = self.shape;
        let mut out = Spikes::zeros(Shape5 { b: 1, t: self.steps.len(), c, h, w });
        for (t, step) in self.steps.iter().enumerate() {
            for &i in step {
                out.frame_mut(0, t)[i as usize] = 1;
            }
        }
        out
    }
}

impl Network {
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        let shapes = config.validate()?;
        let bank = config.transform.filter.as_ref().map(|f| f.build()).transpose()?;
        let mut layers = Vec::with_capacity(config.layers.len());
        for (i, lc) in config.layers.iter().enumerate() {
            let (c, h, w) = shapes[i];
            layers.push(match lc {
                LayerConfig::Conv { out_channels, kernel, stride, pad, init, train, .. } => {
                    let mut l = ConvLayer::new(
                        c,
                        *out_channels,
                        (*kernel, *kernel),
                        (*stride, *stride),
                        (*pad, *pad),
                        init.mean,
                        init.std,
                        layer_seed(seed, i),
                    )?;
                    if let Some(t) = train {
                        l.stdp_configs = t.stdp.clone();
                    }
                    LayerState::Conv(l)
                }
                LayerConfig::Fc { out_size, init, train, .. } => {
                    let mut l = FcLayer::new(c * h * w, *out_size, init.mean, init.std, layer_seed(seed, i))?;
                    if let Some(t) = train {
                        l.stdp_configs = t.stdp.clone();
                    }
                    LayerState::Fc(l)
                }
                LayerConfig::Pool { .. } => LayerState::Pool(lc.pool_config().unwrap()),
                LayerConfig::Pad { pad } => LayerState::Pad(*pad),
            });
        }
        Ok(Network { config, layers, trained: false, bank, shapes })
    }

    /// Shape entering layer `i` (`i == layers.len()` is the network output).
    pub fn shape_at(&self, i: usize) -> (usize, usize, usize) {
        self.shapes[i]
    }

    pub fn output_width(&self) -> usize {
        let (c, h, w) = *self.shapes.last().unwrap();
        c * h * w
    }

    fn thresholds(&self, i: usize) -> (f32, f32) {
        match self.config.layers[i] {
            LayerConfig::Conv { threshold, rate_threshold, .. }
            | LayerConfig::Fc { threshold, rate_threshold, .. } => (threshold, rate_threshold.unwrap_or(threshold)),
            _ => (0.0, 0.0),
        }
    }

    /// Filter and threshold. `images` is `B x 1 x C x H x W`.
    pub fn transform(&self, images: &Potentials) -> Result<Potentials> {
        let s = images.shape();
        if (s.c, s.h, s.w) != self.config.input || s.t != 1 {
            return Err(Error::Shape(format!(
                "network expects 1 x {:?} inputs, got {s}",
                self.config.input
            )));
        }
        let mut x = match &self.bank {
            Some(bank) => bank.apply(images)?,
            None => images.clone(),
        };
        threshold_inplace(&mut x, self.config.transform.threshold);
        Ok(x)
    }

    /// Rank-order code of `images` (cumulative, as events).
    pub fn encode_rank(&self, images: &Potentials) -> Result<SparseSpikes> {
        let x = self.transform(images)?;
        let s = x.shape();
        let steps = self.config.transform.steps;
        let sort = self.config.transform.sort;
        let maps: Vec<Vec<u32>> = (0..s.b)
            .into_par_iter()
            .map(|b| {
                rank_bins(x.sample(b), steps, sort)
                    .into_iter()
                    .map(|bin| bin.map_or(NEVER, |t| t as u32))
                    .collect()
            })
            .collect();
        SparseSpikes::from_first_times(s.with_t(steps), &maps)
    }

    /// Inference through layer `i` for a cumulative train.
    pub fn forward_layer(&self, i: usize, input: &SparseSpikes, backend: Backend) -> Result<SparseSpikes> {
        let (thr, _) = self.thresholds(i);
        match (&self.layers[i], backend) {
            (LayerState::Conv(l), Backend::Sparse) => {
                crossings_to_sparse(&sparse_crossings(input, l, FireRule::AtLeast(thr))?)
            }
            (LayerState::Conv(l), Backend::Dense) => to_sparse(&fire(&l.forward(&to_dense(input))?, Some(thr))),
            (LayerState::Fc(l), _) => to_sparse(&fire(&l.forward(&to_dense(input))?, Some(thr))),
            (LayerState::Pool(cfg), Backend::Sparse) => crate::sparse::sparse_pool(input, cfg),
            (LayerState::Pool(cfg), Backend::Dense) => to_sparse(&pool(&to_dense(input), cfg, None)?),
            (LayerState::Pad(p), Backend::Sparse) => pad_sparse(input, *p),
            (LayerState::Pad(p), Backend::Dense) => to_sparse(&pad(&to_dense(input), (*p, *p), 0)),
        }
    }

    /// Runs layers `from..to` on a cumulative train.
    pub fn forward_range(&self, input: SparseSpikes, from: usize, to: usize, backend: Backend) -> Result<SparseSpikes> {
        let mut x = input;
        for i in from..to {
            x = self.forward_layer(i, &x, backend)?;
        }
        Ok(x)
    }

    /// Selects winners and output spikes of weighted layer `i` for a batch,
    /// using the training rule. Weights are not modified.
    pub fn train_forward(
        &self,
        i: usize,
        input: &SparseSpikes,
        backend: Backend,
    ) -> Result<(Vec<Winner>, SparseSpikes)> {
        let (thr, _) = self.thresholds(i);
        let train = self.train_config(i)?;
        let (radius, count) = (train.wta.radius, train.wta.count);
        match (&self.layers[i], backend) {
            (LayerState::Conv(l), Backend::Sparse) => {
                let mut crossings = sparse_crossings(input, l, FireRule::Above(thr))?;
                let mut winners = Vec::new();
                for (b, c) in crossings.iter_mut().enumerate() {
                    c.inhibit();
                    winners.extend(c.wta(b, radius, count));
                }
                Ok((winners, crossings_to_sparse(&crossings)?))
            }
            (LayerState::Conv(l), Backend::Dense) => {
                let mut pot = l.forward(&to_dense(input))?;
                threshold_inplace(&mut pot, thr);
                inhibit(&mut pot, None);
                let winners = conv_wta(&pot, radius, count, None);
                Ok((winners, to_sparse(&fire(&pot, None))?))
            }
            (LayerState::Fc(l), _) => {
                let mut pot = l.forward(&to_dense(input))?;
                threshold_inplace(&mut pot, thr);
                let winners = fc_wta(&pot, radius, count, None);
                Ok((winners, to_sparse(&fire(&pot, None))?))
            }
            _ => Err(Error::InvalidArgument(format!("layer {i} has no weights"))),
        }
    }

    fn train_config(&self, i: usize) -> Result<&TrainConfig> {
        self.config.layers[i]
            .train()
            .ok_or_else(|| Error::Config(format!("layer {i} has no training configuration")))
    }

    fn apply_stdp(&mut self, i: usize, input: &SparseSpikes, winners: &[Winner], output: &SparseSpikes) -> Result<()> {
        match &mut self.layers[i] {
            LayerState::Conv(l) => l.stdp_sparse(input, winners, output),
            LayerState::Fc(l) => l.stdp(&to_dense(input), winners, &to_dense(output)),
            _ => Err(Error::InvalidArgument(format!("layer {i} has no weights"))),
        }
    }

    /// One mini-batch of plasticity on weighted layer `i`. Returns the number
    /// of winners.
    pub fn train_batch(&mut self, i: usize, input: &SparseSpikes, backend: Backend, per_sample: bool) -> Result<usize> {
        if !per_sample {
            let (winners, output) = self.train_forward(i, input, backend)?;
            self.apply_stdp(i, input, &winners, &output)?;
            return Ok(winners.len());
        }
        let mut pending = Vec::with_capacity(input.shape().b);
        for b in 0..input.shape().b {
            let x = input.slice_batch(b, b + 1)?;
            let (winners, output) = self.train_forward(i, &x, backend)?;
            pending.push((x, winners, output));
        }
        let mut total = 0;
        for (x, winners, output) in &pending {
            self.apply_stdp(i, x, winners, output)?;
            total += winners.len();
        }
        Ok(total)
    }

    fn stdp_configs_mut(&mut self, i: usize) -> &mut Vec<crate::learning::StdpConfig> {
        match &mut self.layers[i] {
            LayerState::Conv(l) => &mut l.stdp_configs,
            LayerState::Fc(l) => &mut l.stdp_configs,
            _ => unreachable!("weighted layer"),
        }
    }

    pub fn weights(&self, i: usize) -> Option<&[f32]> {
        match &self.layers[i] {
            LayerState::Conv(l) => Some(&l.weights),
            LayerState::Fc(l) => Some(&l.weights),
            _ => None,
        }
    }

    fn weights_mut(&mut self, i: usize) -> Option<&mut Vec<f32>> {
        match &mut self.layers[i] {
            LayerState::Conv(l) => Some(&mut l.weights),
            LayerState::Fc(l) => Some(&mut l.weights),
            _ => None,
        }
    }

    /// Rank-order codes of every sample, one single-sample train each.
    pub fn encode_dataset(&self, data: &Dataset) -> Result<Vec<SparseSpikes>> {
        let mut out = Vec::with_capacity(data.len());
        for start in (0..data.len()).step_by(CHUNK) {
            let idx: Vec<usize> = (start..(start + CHUNK).min(data.len())).collect();
            let coded = self.encode_rank(&data.gather(&idx)?)?;
            for b in 0..idx.len() {
                out.push(coded.slice_batch(b, b + 1)?);
            }
        }
        Ok(out)
    }

    fn advance(&self, cache: Vec<SparseSpikes>, from: usize, to: usize, backend: Backend) -> Result<Vec<SparseSpikes>> {
        if from == to {
            return Ok(cache);
        }
        let mut out = Vec::with_capacity(cache.len());
        for chunk in cache.chunks(CHUNK) {
            let y = self.forward_range(SparseSpikes::concat_batch(chunk)?, from, to, backend)?;
            for b in 0..chunk.len() {
                out.push(y.slice_batch(b, b + 1)?);
            }
        }
        Ok(out)
    }

    /// Trains the weighted layers one after another on `data`.
    pub fn train(&mut self, data: &Dataset, opts: TrainOptions) -> Result<TrainStats> {
        let start = Instant::now();
        let mut stats = TrainStats { seconds: 0.0, winners: vec![0; self.layers.len()] };
        self.trained = true;
        let trainable: Vec<usize> = (0..self.layers.len())
            .filter(|&i| self.config.layers[i].train().is_some_and(|t| t.epochs > 0))
            .collect();
        if data.is_empty() || trainable.is_empty() {
            stats.seconds = start.elapsed().as_secs_f64();
            return Ok(stats);
        }
        let mut cache = self.encode_dataset(data)?;
        let mut at = 0;
        for &i in &trainable {
            cache = self.advance(cache, at, i, opts.backend)?;
            at = i;
            stats.winners[i] = self.train_layer(i, &cache, opts)?;
        }
        stats.seconds = start.elapsed().as_secs_f64();
        Ok(stats)
    }

    /// Trains weighted layer `i` on cached inputs (one train per sample).
    pub fn train_layer(&mut self, i: usize, inputs: &[SparseSpikes], opts: TrainOptions) -> Result<u64> {
        let train = self.train_config(i)?.clone();
        let mut seen = 0usize;
        let mut next_mark = train.schedule.map(|s| s.interval);
        let mut winners = 0u64;
        for epoch in 0..train.epochs {
            let mut order: Vec<usize> = (0..inputs.len()).collect();
            if self.config.shuffle {
                let mut rng = ChaCha8Rng::seed_from_u64(layer_seed(opts.seed, i) ^ (epoch as u64) << 32);
                order.shuffle(&mut rng);
            }
            for batch in order.chunks(self.config.batch_size) {
                let parts: Vec<SparseSpikes> = batch.iter().map(|&k| inputs[k].clone()).collect();
                let x = SparseSpikes::concat_batch(&parts)?;
                winners += self.train_batch(i, &x, opts.backend, opts.per_sample)? as u64;
                seen += batch.len();
                if let (Some(s), Some(mark)) = (train.schedule, next_mark.as_mut()) {
                    while seen >= *mark {
                        for cfg in self.stdp_configs_mut(i) {
                            s.step(cfg);
                        }
                        *mark += s.interval;
                    }
                }
            }
            if opts.verbose {
                eprintln!("layer {i}: epoch {}/{} done ({winners} winners)", epoch + 1, train.epochs);
            }
        }
        if let Some(q) = train.quantize {
            quantize(self.weights_mut(i).unwrap(), q.lower, q.mid, q.upper)?;
        }
        Ok(winners)
    }

    /// Features for every sample under the configured inference coding.
    pub fn features(&self, data: &Dataset, backend: Backend, seed: u64) -> Result<Features> {
        match &self.config.inference {
            Some(inf) if inf.coding == Coding::Rate => self.rate_features(data, inf.steps, seed),
            _ => self.rank_features(data, backend),
        }
    }

    /// Rank-order features: `(T - t_first) / T` of every output neuron.
    pub fn rank_features(&self, data: &Dataset, backend: Backend) -> Result<Features> {
        let width = self.output_width();
        let mut values = Vec::with_capacity(data.len() * width);
        let mut spikes = vec![0u64; self.layers.len()];
        for start in (0..data.len()).step_by(CHUNK) {
            let idx: Vec<usize> = (start..(start + CHUNK).min(data.len())).collect();
            let mut x = self.encode_rank(&data.gather(&idx)?)?;
            for (i, count) in spikes.iter_mut().enumerate() {
                x = self.forward_layer(i, &x, backend)?;
                *count += x.event_count() as u64;
            }
            let steps = x.shape().t as f32;
            for b in 0..idx.len() {
                values.extend(
                    x.first_times(b)
                        .into_iter()
                        .map(|t| if t == NEVER { 0.0 } else { (steps - t as f32) / steps }),
                );
            }
        }
        Ok(Features { rows: data.len(), width, values, spikes })
    }

    /// Rate-coded features: firing rates of every output neuron over `steps`.
    /// Sample `k` of `data` draws from generator stream `k`.
    pub fn rate_features(&self, data: &Dataset, steps: usize, seed: u64) -> Result<Features> {
        let width = self.output_width();
        let per_sample: Vec<(Vec<f32>, Vec<u64>)> = (0..data.len())
            .into_par_iter()
            .map(|k| {
                let trains = self.rate_forward(&data.gather(&[k])?, steps, seed, k as u64)?;
                let counts = trains[1..].iter().map(|t| t.spike_count() as u64).collect();
                Ok((trains.last().unwrap().rates(), counts))
            })
            .collect::<Result<_>>()?;
        let mut values = Vec::with_capacity(data.len() * width);
        let mut spikes = vec![0u64; self.layers.len()];
        for (v, counts) in per_sample {
            values.extend(v);
            for (s, c) in spikes.iter_mut().zip(counts) {
                *s += c;
            }
        }
        Ok(Features { rows: data.len(), width, values, spikes })
    }

    /// Rate-coded inference of one image. Returns the input train followed by
    /// the output train of every layer.
    pub fn rate_forward(&self, image: &Potentials, steps: usize, seed: u64, stream: u64) -> Result<Vec<RateTrain>> {
        if image.shape().b != 1 {
            return Err(Error::Shape("rate inference runs one sample at a time".into()));
        }
        let x = self.transform(image)?;
        let mut train = RateTrain { shape: self.shapes[0], steps: vec![Vec::new(); steps] };
        rate_code_sample(x.sample(0), steps, seed, stream, |t, i| train.steps[t].push(i as u32));
        let mut out = vec![train];
        for i in 0..self.layers.len() {
            let next = self.rate_layer(i, out.last().unwrap())?;
            out.push(next);
        }
        Ok(out)
    }

    fn rate_layer(&self, i: usize, input: &RateTrain) -> Result<RateTrain> {
        let (_, thr) = self.thresholds(i);
        let (ci, hi, wi) = input.shape;
        let in_shape = Shape5 { b: 1, t: 1, c: ci, h: hi, w: wi };
        let out = self.shapes[i + 1];
        let mut steps = Vec::with_capacity(input.steps.len());
        match &self.layers[i] {
            LayerState::Conv(l) => {
                let out_shape = l.output_shape(in_shape)?;
                let wcl = l.weights_channels_last();
                let co_n = l.out_channels;
                let plane = out_shape.plane();
                let mut acc = vec![0.0f32; plane * co_n];
                for events in &input.steps {
                    let mut fired = Vec::new();
                    if !events.is_empty() {
                        acc.iter_mut().for_each(|a| *a = 0.0);
                        for &e in events {
                            let e = e as usize;
                            let (c, y, x) = (e / in_shape.plane(), (e % in_shape.plane()) / wi, e % wi);
                            scatter_event(l, &wcl, out_shape, c, y, x, 1.0, &mut acc);
                        }
                        for p in 0..plane {
                            for (co, &v) in acc[p * co_n..(p + 1) * co_n].iter().enumerate() {
                                if v >= thr {
                                    fired.push((co * plane + p) as u32);
                                }
                            }
                        }
                        fired.sort_unstable();
                    }
                    steps.push(fired);
                }
            }
            LayerState::Fc(l) => {
                let mut acc = vec![0.0f32; l.out_size];
                for events in &input.steps {
                    let mut fired = Vec::new();
                    if !events.is_empty() {
                        acc.iter_mut().for_each(|a| *a = 0.0);
                        for &e in events {
                            let row = &l.weights[e as usize * l.out_size..][..l.out_size];
                            acc.iter_mut().zip(row).for_each(|(a, w)| *a += w);
                        }
                        fired.extend((0..l.out_size).filter(|&o| acc[o] >= thr).map(|o| o as u32));
                    }
                    steps.push(fired);
                }
            }
            LayerState::Pool(cfg) => {
                let rates = input.rates();
                let (_, ho, wo) = out;
                let plane_in = hi * wi;
                let mut source = vec![usize::MAX; ci * ho * wo];
                for c in 0..ci {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut best: Option<(usize, f32)> = None;
                            for (y, x) in cfg.window_cells(hi, wi, oy, ox) {
                                let j = c * plane_in + y * wi + x;
                                if best.is_none_or(|(_, bv)| rates[j] > bv) {
                                    best = Some((j, rates[j]));
                                }
                            }
                            if let Some((j, _)) = best {
                                source[(c * ho + oy) * wo + ox] = j;
                            }
                        }
                    }
                }
                let mut active = vec![false; ci * plane_in];
                for events in &input.steps {
                    for &e in events {
                        active[e as usize] = true;
                    }
                    steps.push(
                        (0..source.len())
                            .filter(|&o| source[o] != usize::MAX && active[source[o]])
                            .map(|o| o as u32)
                            .collect(),
                    );
                    for &e in events {
                        active[e as usize] = false;
                    }
                }
            }
            LayerState::Pad(p) => {
                let (_, ho, wo) = out;
                for events in &input.steps {
                    steps.push(
                        events
                            .iter()
                            .map(|&e| {
                                let e = e as usize;
                                let (c, y, x) = (e / (hi * wi), (e % (hi * wi)) / wi, e % wi);
                                ((c * ho + y + p) * wo + x + p) as u32
                            })
                            .collect(),
                    );
                }
            }
        }
        Ok(RateTrain { shape: out, steps })
    }

    /// SHA-256 over all weights, in layer order.
    pub fn weights_digest(&self) -> String {
        let mut h = Sha256::new();
        for i in 0..self.layers.len() {
            if let Some(w) = self.weights(i) {
                for v in w {
                    h.update(v.to_le_bytes());
                }
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes `config.json` and one `layer<i>.spkl` per weighted layer.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.json"), self.config.to_json())?;
        std::fs::write(dir.join("model.json"), serde_json::json!({ "trained": self.trained }).to_string())?;
        for (i, l) in self.layers.iter().enumerate() {
            match l {
                LayerState::Conv(c) => c.save(dir.join(format!("layer{i}.spkl")))?,
                LayerState::Fc(f) => f.save(dir.join(format!("layer{i}.spkl")))?,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let config = NetworkConfig::load(dir.join("config.json"))?;
        let mut net = Network::new(config, 0)?;
        let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("model.json"))?)
            .map_err(|e| Error::Data(format!("model.json: {e}")))?;
        net.trained = meta["trained"].as_bool().unwrap_or(false);
        for i in 0..net.layers.len() {
            let path = dir.join(format!("layer{i}.spkl"));
            match &mut net.layers[i] {
                LayerState::Conv(c) => {
                    let loaded = ConvLayer::load(&path)?;
                    if loaded.weights.len() != c.weights.len() || loaded.kernel != c.kernel {
                        return Err(Error::Data(format!("{} does not match the config", path.display())));
                    }
                    c.weights = loaded.weights;
                }
                LayerState::Fc(f) => {
                    let loaded = FcLayer::load(&path)?;
                    if loaded.weights.len() != f.weights.len() {
                        return Err(Error::Data(format!("{} does not match the config", path.display())));
                    }
                    f.weights = loaded.weights;
                }
                _ => {}
            }
        }
        Ok(net)
    }
}

/// Zero-padding of a cumulative train in event form.
pub fn pad_sparse(input: &SparseSpikes, p: usize) -> Result<SparseSpikes> {
    let s = input.shape();
    let out = Shape5 { h: s.h + 2 * p, w: s.w + 2 * p, ..s };
    let maps: Vec<Vec<u32>> = (0..s.b)
        .map(|b| {
            let src = input.first_times(b);
            let mut dst = vec![NEVER; out.frame()];
            for c in 0..s.c {
                for y in 0..s.h {
                    for x in 0..s.w {
                        dst[(c * out.h + y + p) * out.w + x + p] = src[(c * s.h + y) * s.w + x];
                    }
                }
            }
            dst
        })
        .collect();
    SparseSpikes::from_first_times(out, &maps)
}

/// Pools a sample's first-spike map; re-exported for callers working on maps.
pub fn pool_first_times(times: &[u32], in_shape: Shape5, cfg: &PoolConfig) -> Result<Vec<u32>> {
    let out = cfg.output_shape(in_shape)?;
    Ok(pool_times(times, in_shape, out, cfg))
}
