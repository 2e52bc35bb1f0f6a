//! Python bindings. Tensors cross the boundary as flat lists or raw
//! little-endian bytes together with a `(B, T, C, H, W)` shape tuple.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use snn_core::coding;
use snn_core::config::{Backend, NetworkConfig};
use snn_core::filters::{DogSpec, FilterBank as CoreBank, GaborSpec, Zca as CoreZca};
use snn_core::layers::{self, ConvLayer, FcLayer, PoolConfig};
use snn_core::learning::{self, StdpConfig as CoreStdp, Winner as CoreWinner};
use snn_core::mnist::{self, Dataset as CoreDataset};
use snn_core::network::{Network as CoreNetwork, TrainOptions};
use snn_core::{tensor, DynTensor, Error, Potentials, Shape5, Spikes};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

type Dims = (usize, usize, usize, usize, usize);

fn shape5(d: Dims) -> PyResult<Shape5> {
    Shape5::new(d.0, d.1, d.2, d.3, d.4).map_err(py_err)
}

fn dims(s: Shape5) -> Dims {
    (s.b, s.t, s.c, s.h, s.w)
}

fn backend(name: &str) -> PyResult<Backend> {
    match name {
        "dense" => Ok(Backend::Dense),
        "sparse" => Ok(Backend::Sparse),
        other => Err(PyValueError::new_err(format!("unknown backend {other:?}"))),
    }
}

/// A 5-D tensor of `f32` potentials or `u8` spikes.
#[pyclass(module = "spikenet", skip_from_py_object)]
#[derive(Clone)]
struct Tensor {
    inner: DynTensor,
}

impl Tensor {
    fn potentials(&self) -> PyResult<Potentials> {
        match &self.inner {
            DynTensor::F32(t) => Ok(t.clone()),
            DynTensor::U8(t) => Ok(t.to_f32()),
        }
    }

    fn spikes(&self) -> PyResult<Spikes> {
        match &self.inner {
            DynTensor::U8(t) => Ok(t.clone()),
            DynTensor::F32(_) => Err(PyValueError::new_err("expected a u8 spike tensor")),
        }
    }
}

impl From<Potentials> for Tensor {
    fn from(t: Potentials) -> Self {
        Tensor { inner: t.into() }
    }
}

impl From<Spikes> for Tensor {
    fn from(t: Spikes) -> Self {
        Tensor { inner: t.into() }
    }
}

#[pymethods]
impl Tensor {
    #[new]
    #[pyo3(signature = (shape, values, dtype = "f32"))]
    fn new(shape: Dims, values: Vec<f64>, dtype: &str) -> PyResult<Self> {
        let s = shape5(shape)?;
        match dtype {
            "f32" => Ok(Potentials::from_vec(s, values.iter().map(|&v| v as f32).collect()).map_err(py_err)?.into()),
            "u8" => Ok(Spikes::from_vec(s, values.iter().map(|&v| v as u8).collect()).map_err(py_err)?.into()),
            other => Err(PyValueError::new_err(format!("unknown dtype {other:?}"))),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (shape, dtype = "f32"))]
    fn zeros(shape: Dims, dtype: &str) -> PyResult<Self> {
        let s = shape5(shape)?;
        match dtype {
            "f32" => Ok(Potentials::zeros(s).into()),
            "u8" => Ok(Spikes::zeros(s).into()),
            other => Err(PyValueError::new_err(format!("unknown dtype {other:?}"))),
        }
    }

    /// Builds a tensor from raw little-endian element bytes.
    #[staticmethod]
    #[pyo3(signature = (shape, data, dtype = "f32"))]
    fn frombytes(shape: Dims, data: &[u8], dtype: &str) -> PyResult<Self> {
        let s = shape5(shape)?;
        match dtype {
            "f32" => {
                if data.len() % 4 != 0 {
                    return Err(PyValueError::new_err("byte length is not a multiple of 4"));
                }
                let v = data.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
                Ok(Potentials::from_vec(s, v).map_err(py_err)?.into())
            }
            "u8" => Ok(Spikes::from_vec(s, data.to_vec()).map_err(py_err)?.into()),
            other => Err(PyValueError::new_err(format!("unknown dtype {other:?}"))),
        }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Tensor { inner: DynTensor::load(path).map_err(py_err)? })
    }

    fn dump(&self, path: &str) -> PyResult<()> {
        match &self.inner {
            DynTensor::F32(t) => t.dump(path),
            DynTensor::U8(t) => t.dump(path),
        }
        .map_err(py_err)
    }

    #[getter]
    fn shape(&self) -> Dims {
        dims(self.inner.shape())
    }

    #[getter]
    fn dtype(&self) -> &'static str {
        match self.inner {
            DynTensor::F32(_) => "f32",
            DynTensor::U8(_) => "u8",
        }
    }

    fn tolist(&self) -> Vec<f64> {
        match &self.inner {
            DynTensor::F32(t) => t.data().iter().map(|&v| f64::from(v)).collect(),
            DynTensor::U8(t) => t.data().iter().map(|&v| f64::from(v)).collect(),
        }
    }

    fn tobytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        match &self.inner {
            DynTensor::F32(t) => {
                let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
                PyBytes::new(py, &bytes)
            }
            DynTensor::U8(t) => PyBytes::new(py, t.data()),
        }
    }

    fn get(&self, b: usize, t: usize, c: usize, h: usize, w: usize) -> PyResult<f64> {
        let s = self.inner.shape();
        if b >= s.b || t >= s.t || c >= s.c || h >= s.h || w >= s.w {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(match &self.inner {
            DynTensor::F32(x) => f64::from(x.get(b, t, c, h, w)),
            DynTensor::U8(x) => f64::from(x.get(b, t, c, h, w)),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.shape().numel()
    }

    fn __eq__(&self, other: &Tensor) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={}, dtype={})", self.inner.shape(), self.dtype())
    }
}

/// A winner selected by WTA, routed to STDP configuration `config`.
#[pyclass(module = "spikenet", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct Winner {
    b: usize,
    t: usize,
    c: usize,
    h: usize,
    w: usize,
    config: usize,
}

impl From<CoreWinner> for Winner {
    fn from(w: CoreWinner) -> Self {
        Winner { b: w.b, t: w.t, c: w.c, h: w.h, w: w.w, config: w.config }
    }
}

impl From<&Winner> for CoreWinner {
    fn from(w: &Winner) -> Self {
        CoreWinner { b: w.b, t: w.t, c: w.c, h: w.h, w: w.w, config: w.config }
    }
}

#[pymethods]
impl Winner {
    #[new]
    #[pyo3(signature = (b, t, c, h = 0, w = 0, config = 0))]
    fn new(b: usize, t: usize, c: usize, h: usize, w: usize, config: usize) -> Self {
        Winner { b, t, c, h, w, config }
    }

    fn __repr__(&self) -> String {
        format!("Winner(b={}, t={}, c={}, h={}, w={}, config={})", self.b, self.t, self.c, self.h, self.w, self.config)
    }
}

fn core_winners(ws: &[Winner]) -> Vec<CoreWinner> {
    ws.iter().map(CoreWinner::from).collect()
}

#[pyclass(name = "STDPConfig", module = "spikenet", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct StdpConfig {
    positive: f32,
    negative: f32,
    stabilize: bool,
    lower: f32,
    upper: f32,
}

impl From<&StdpConfig> for CoreStdp {
    fn from(c: &StdpConfig) -> Self {
        CoreStdp { positive: c.positive, negative: c.negative, stabilize: c.stabilize, lower: c.lower, upper: c.upper }
    }
}

impl From<CoreStdp> for StdpConfig {
    fn from(c: CoreStdp) -> Self {
        StdpConfig { positive: c.positive, negative: c.negative, stabilize: c.stabilize, lower: c.lower, upper: c.upper }
    }
}

#[pymethods]
impl StdpConfig {
    #[new]
    #[pyo3(signature = (positive, negative, stabilize = true, lower = 0.0, upper = 1.0))]
    fn new(positive: f32, negative: f32, stabilize: bool, lower: f32, upper: f32) -> PyResult<Self> {
        let c = CoreStdp { positive, negative, stabilize, lower, upper };
        c.validate().map_err(py_err)?;
        Ok(c.into())
    }

    /// Weight after one update of a synapse with weight `w`.
    fn apply(&self, w: f32, causal: bool) -> f32 {
        CoreStdp::from(self).apply(w, causal)
    }

    fn swapped(&self) -> Self {
        CoreStdp::from(self).swapped().into()
    }
}

fn core_stdp(cfgs: &[StdpConfig]) -> PyResult<Vec<CoreStdp>> {
    cfgs.iter()
        .map(|c| {
            let c = CoreStdp::from(c);
            c.validate().map_err(py_err).map(|()| c)
        })
        .collect()
}

/// Depthwise filter bank (DoG, Gabor or LoG kernels).
#[pyclass(module = "spikenet")]
struct FilterBank {
    inner: CoreBank,
}

#[pymethods]
impl FilterBank {
    /// DoG filters from `(sigma1, sigma2)` pairs.
    #[staticmethod]
    #[pyo3(signature = (radius, sigmas, pad = 0))]
    fn dog(radius: usize, sigmas: Vec<(f32, f32)>, pad: usize) -> PyResult<Self> {
        let specs: Vec<DogSpec> = sigmas.into_iter().map(|(sigma1, sigma2)| DogSpec { sigma1, sigma2 }).collect();
        Ok(FilterBank { inner: CoreBank::dog(radius, &specs, pad).map_err(py_err)? })
    }

    /// Gabor filters from `(sigma, theta, gamma, lambda, psi)` tuples.
    #[staticmethod]
    #[pyo3(signature = (radius, specs, pad = 0))]
    fn gabor(radius: usize, specs: Vec<(f32, f32, f32, f32, f32)>, pad: usize) -> PyResult<Self> {
        let specs: Vec<GaborSpec> = specs
            .into_iter()
            .map(|(sigma, theta, gamma, lambda, psi)| GaborSpec { sigma, theta, gamma, lambda, psi })
            .collect();
        Ok(FilterBank { inner: CoreBank::gabor(radius, &specs, pad).map_err(py_err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (radius, stds, pad = 0))]
    fn log(radius: usize, stds: Vec<f32>, pad: usize) -> PyResult<Self> {
        Ok(FilterBank { inner: CoreBank::log(radius, &stds, pad).map_err(py_err)? })
    }

    fn kernels(&self) -> Vec<Vec<f32>> {
        self.inner.kernels().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __call__(&self, x: &Tensor) -> PyResult<Tensor> {
        Ok(self.inner.apply(&x.potentials()?).map_err(py_err)?.into())
    }
}

#[pyclass(module = "spikenet")]
struct Zca {
    inner: CoreZca,
}

#[pymethods]
impl Zca {
    #[new]
    #[pyo3(signature = (epsilon = 0.01))]
    fn new(epsilon: f64) -> PyResult<Self> {
        Ok(Zca { inner: CoreZca::new(epsilon).map_err(py_err)? })
    }

    fn fit(&mut self, x: &Tensor) -> PyResult<()> {
        self.inner.fit(&x.potentials()?).map_err(py_err)
    }

    fn __call__(&self, x: &Tensor) -> PyResult<Tensor> {
        Ok(self.inner.apply(&x.potentials()?).map_err(py_err)?.into())
    }
}

/// Convolutional IF layer.
#[pyclass(module = "spikenet")]
struct Conv {
    inner: ConvLayer,
}

#[pymethods]
impl Conv {
    #[new]
    #[pyo3(signature = (in_channels, out_channels, kernel, stride = 1, pad = 0, mean = 0.5, std = 0.02, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        mean: f32,
        std: f32,
        seed: u64,
    ) -> PyResult<Self> {
        let inner = ConvLayer::new(in_channels, out_channels, (kernel, kernel), (stride, stride), (pad, pad), mean, std, seed)
            .map_err(py_err)?;
        Ok(Conv { inner })
    }

    #[getter]
    fn weights(&self) -> Vec<f32> {
        self.inner.weights.clone()
    }

    #[setter]
    fn set_weights(&mut self, w: Vec<f32>) -> PyResult<()> {
        if w.len() != self.inner.weights.len() {
            return Err(PyValueError::new_err(format!("expected {} weights", self.inner.weights.len())));
        }
        self.inner.weights = w;
        Ok(())
    }

    #[getter]
    fn stdp_configs(&self) -> Vec<StdpConfig> {
        self.inner.stdp_configs.iter().copied().map(Into::into).collect()
    }

    #[setter]
    fn set_stdp_configs(&mut self, cfgs: Vec<StdpConfig>) -> PyResult<()> {
        self.inner.stdp_configs = core_stdp(&cfgs)?;
        Ok(())
    }

    fn __call__(&self, x: &Tensor) -> PyResult<Tensor> {
        Ok(self.inner.forward(&x.spikes()?).map_err(py_err)?.into())
    }

    fn stdp(&mut self, input: &Tensor, winners: Vec<Winner>, output: &Tensor) -> PyResult<()> {
        self.inner.stdp(&input.spikes()?, &core_winners(&winners), &output.spikes()?).map_err(py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Conv { inner: ConvLayer::load(path).map_err(py_err)? })
    }
}

/// Fully connected IF layer.
#[pyclass(name = "FC", module = "spikenet")]
struct Fc {
    inner: FcLayer,
}

#[pymethods]
impl Fc {
    #[new]
    #[pyo3(signature = (in_size, out_size, mean = 0.5, std = 0.02, seed = 0))]
    fn new(in_size: usize, out_size: usize, mean: f32, std: f32, seed: u64) -> PyResult<Self> {
        Ok(Fc { inner: FcLayer::new(in_size, out_size, mean, std, seed).map_err(py_err)? })
    }

    #[getter]
    fn weights(&self) -> Vec<f32> {
        self.inner.weights.clone()
    }

    #[setter]
    fn set_weights(&mut self, w: Vec<f32>) -> PyResult<()> {
        if w.len() != self.inner.weights.len() {
            return Err(PyValueError::new_err(format!("expected {} weights", self.inner.weights.len())));
        }
        self.inner.weights = w;
        Ok(())
    }

    #[getter]
    fn stdp_configs(&self) -> Vec<StdpConfig> {
        self.inner.stdp_configs.iter().copied().map(Into::into).collect()
    }

    #[setter]
    fn set_stdp_configs(&mut self, cfgs: Vec<StdpConfig>) -> PyResult<()> {
        self.inner.stdp_configs = core_stdp(&cfgs)?;
        Ok(())
    }

    fn __call__(&self, x: &Tensor) -> PyResult<Tensor> {
        Ok(self.inner.forward(&x.spikes()?).map_err(py_err)?.into())
    }

    fn stdp(&mut self, input: &Tensor, winners: Vec<Winner>, output: &Tensor) -> PyResult<()> {
        self.inner.stdp(&input.spikes()?, &core_winners(&winners), &output.spikes()?).map_err(py_err)
    }
}

#[pyfunction]
fn threshold(x: &Tensor, value: f32) -> PyResult<Tensor> {
    Ok(tensor::threshold(&x.potentials()?, value).into())
}

#[pyfunction]
#[pyo3(signature = (x, threshold = None))]
fn fire(x: &Tensor, threshold: Option<f32>) -> PyResult<Tensor> {
    Ok(tensor::fire(&x.potentials()?, threshold).into())
}

#[pyfunction]
fn quantize(weights: Vec<f32>, lower: f32, mid: f32, upper: f32) -> PyResult<Vec<f32>> {
    let mut w = weights;
    tensor::quantize(&mut w, lower, mid, upper).map_err(py_err)?;
    Ok(w)
}

#[pyfunction]
#[pyo3(signature = (x, steps, sort = true))]
fn rank_code(x: &Tensor, steps: usize, sort: bool) -> PyResult<Tensor> {
    Ok(coding::rank_code(&x.potentials()?, steps, sort).map_err(py_err)?.into())
}

#[pyfunction]
#[pyo3(signature = (x, steps, seed = 0))]
fn rate_code(x: &Tensor, steps: usize, seed: u64) -> PyResult<Tensor> {
    Ok(coding::rate_code(&x.potentials()?, steps, seed).map_err(py_err)?.into())
}

/// Rank (`"rank"`) or rate (`"rate"`) coding.
#[pyfunction]
#[pyo3(signature = (x, steps, kind = "rank", sort = true, seed = 0))]
fn code(x: &Tensor, steps: usize, kind: &str, sort: bool, seed: u64) -> PyResult<Tensor> {
    match kind {
        "rank" => rank_code(x, steps, sort),
        "rate" => rate_code(x, steps, seed),
        other => Err(PyValueError::new_err(format!("unknown coding {other:?}"))),
    }
}

#[pyfunction]
#[pyo3(signature = (radius, stds, pad = 0))]
#[pyo3(name = "LoG")]
fn log_bank(radius: usize, stds: Vec<f32>, pad: usize) -> PyResult<FilterBank> {
    FilterBank::log(radius, stds, pad)
}

#[pyfunction]
#[pyo3(signature = (radius, sigmas, pad = 0))]
#[pyo3(name = "DoG")]
fn dog_bank(radius: usize, sigmas: Vec<(f32, f32)>, pad: usize) -> PyResult<FilterBank> {
    FilterBank::dog(radius, sigmas, pad)
}

#[pyfunction]
#[pyo3(signature = (radius, specs, pad = 0))]
#[pyo3(name = "Gabor")]
fn gabor_bank(radius: usize, specs: Vec<(f32, f32, f32, f32, f32)>, pad: usize) -> PyResult<FilterBank> {
    FilterBank::gabor(radius, specs, pad)
}

#[pyfunction]
fn gather(x: &Tensor) -> PyResult<Tensor> {
    Ok(coding::gather(&x.spikes()?).into())
}

#[pyfunction]
#[pyo3(signature = (x, window, stride = None, pad = 0, rates = None))]
fn pool(x: &Tensor, window: usize, stride: Option<usize>, pad: usize, rates: Option<&Tensor>) -> PyResult<Tensor> {
    let cfg = PoolConfig::new(window).with_stride(stride.unwrap_or(window)).with_pad(pad);
    let rates = rates.map(Tensor::potentials).transpose()?;
    Ok(layers::pool(&x.spikes()?, &cfg, rates.as_ref()).map_err(py_err)?.into())
}

#[pyfunction]
#[pyo3(signature = (x, pad, value = 0.0))]
fn pad(x: &Tensor, pad: (usize, usize), value: f64) -> Tensor {
    match &x.inner {
        DynTensor::F32(t) => layers::pad(t, pad, value as f32).into(),
        DynTensor::U8(t) => layers::pad(t, pad, value as u8).into(),
    }
}

#[pyfunction]
#[pyo3(signature = (x, threshold = None))]
fn inhibit(x: &Tensor, threshold: Option<f32>) -> PyResult<Tensor> {
    Ok(learning::inhibited(&x.potentials()?, threshold).into())
}

#[pyfunction]
#[pyo3(signature = (x, radius, count, threshold = None))]
fn convwta(x: &Tensor, radius: usize, count: usize, threshold: Option<f32>) -> PyResult<Vec<Winner>> {
    Ok(learning::conv_wta(&x.potentials()?, radius, count, threshold).into_iter().map(Into::into).collect())
}

#[pyfunction]
#[pyo3(signature = (x, radius, count, threshold = None))]
fn fcwta(x: &Tensor, radius: usize, count: usize, threshold: Option<f32>) -> PyResult<Vec<Winner>> {
    Ok(learning::fc_wta(&x.potentials()?, radius, count, threshold).into_iter().map(Into::into).collect())
}

/// Sets each winner's `config` to 0 (reward) or 1 (punish).
#[pyfunction]
fn rstdp_assign(winners: Vec<Winner>, labels: Vec<usize>, target_map: Vec<usize>) -> PyResult<Vec<Winner>> {
    let mut ws = core_winners(&winners);
    learning::rstdp_assign(&mut ws, &labels, &target_map).map_err(py_err)?;
    Ok(ws.into_iter().map(Into::into).collect())
}

/// MNIST images (`u8`, 28x28 each) with their labels.
#[pyclass(module = "spikenet")]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    #[new]
    fn new(pixels: &[u8], labels: &[u8]) -> PyResult<Self> {
        Ok(Dataset { inner: CoreDataset::new(pixels.to_vec(), labels.to_vec()).map_err(py_err)? })
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.inner.labels.clone()
    }

    fn images(&self) -> PyResult<Tensor> {
        Ok(self.inner.images().map_err(py_err)?.into())
    }

    fn take(&self, n: usize) -> Self {
        Dataset { inner: self.inner.take(n) }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyfunction]
#[pyo3(signature = (dir, split, limit = None))]
fn load_mnist(dir: &str, split: &str, limit: Option<usize>) -> PyResult<Dataset> {
    Ok(Dataset { inner: mnist::load_split(dir, split, limit).map_err(py_err)? })
}

/// A configured network; `config` is a preset name or a JSON string.
#[pyclass(module = "spikenet")]
struct Network {
    inner: CoreNetwork,
}

#[pymethods]
impl Network {
    #[new]
    #[pyo3(signature = (config, seed = 0))]
    fn new(config: &str, seed: u64) -> PyResult<Self> {
        let cfg = match NetworkConfig::preset(config) {
            Some(c) => c,
            None => NetworkConfig::from_json(config).map_err(py_err)?,
        };
        Ok(Network { inner: CoreNetwork::new(cfg, seed).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(dir: &str) -> PyResult<Self> {
        Ok(Network { inner: CoreNetwork::load(dir).map_err(py_err)? })
    }

    fn save(&self, dir: &str) -> PyResult<()> {
        self.inner.save(dir).map_err(py_err)
    }

    #[getter]
    fn config(&self) -> String {
        self.inner.config.to_json()
    }

    #[pyo3(signature = (data, seed = 0, backend = "dense"))]
    fn train(&mut self, py: Python<'_>, data: &Dataset, seed: u64, backend: &str) -> PyResult<f64> {
        let opts = TrainOptions { backend: self::backend(backend)?, per_sample: false, seed, verbose: false };
        let inner = &mut self.inner;
        let stats = py.detach(|| inner.train(&data.inner, opts)).map_err(py_err)?;
        Ok(stats.seconds)
    }

    /// Feature matrix `(rows, width, values)` used by the readout.
    #[pyo3(signature = (data, seed = 0, backend = "dense"))]
    fn features(&self, py: Python<'_>, data: &Dataset, seed: u64, backend: &str) -> PyResult<(usize, usize, Vec<f32>)> {
        let b = self::backend(backend)?;
        let inner = &self.inner;
        let f = py.detach(|| inner.features(&data.inner, b, seed)).map_err(py_err)?;
        Ok((f.rows, f.width, f.values))
    }

    fn weights(&self, layer: usize) -> Option<Vec<f32>> {
        self.inner.weights(layer).map(<[f32]>::to_vec)
    }

    fn weights_digest(&self) -> String {
        self.inner.weights_digest()
    }
}

#[pymodule]
fn spikenet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Tensor>()?;
    m.add_class::<Winner>()?;
    m.add_class::<StdpConfig>()?;
    m.add_class::<FilterBank>()?;
    m.add_class::<Zca>()?;
    m.add_class::<Conv>()?;
    m.add_class::<Fc>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Network>()?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(fire, m)?)?;
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(rank_code, m)?)?;
    m.add_function(wrap_pyfunction!(rate_code, m)?)?;
    m.add_function(wrap_pyfunction!(gather, m)?)?;
    m.add_function(wrap_pyfunction!(code, m)?)?;
    m.add_function(wrap_pyfunction!(log_bank, m)?)?;
    m.add_function(wrap_pyfunction!(dog_bank, m)?)?;
    m.add_function(wrap_pyfunction!(gabor_bank, m)?)?;
    m.add_function(wrap_pyfunction!(pool, m)?)?;
    m.add_function(wrap_pyfunction!(pad, m)?)?;
    m.add_function(wrap_pyfunction!(inhibit, m)?)?;
    m.add_function(wrap_pyfunction!(convwta, m)?)?;
    m.add_function(wrap_pyfunction!(fcwta, m)?)?;
    m.add_function(wrap_pyfunction!(rstdp_assign, m)?)?;
    m.add_function(wrap_pyfunction!(load_mnist, m)?)?;
    Ok(())
}
