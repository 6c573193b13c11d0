//! Python bindings exposing the main types and operations: channel
//! simulation, diffusion-model training and sampling, consistency
//! distillation, augmentation baselines, fidelity metrics and the
//! superimposed-pilot receiver.

use numpy::{IntoPyArray, PyArray1, PyArray2, PyArrayDyn, PyReadonlyArrayDyn};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use chanforge_core::channel::dataset::{generate_dataset, load_dataset, save_dataset};
use chanforge_core::channel::transform::{to_angular_delay, to_spatial_frequency};
use chanforge_core::channel::{
    ChannelDataset, ChannelTensor, DatasetMeta, Domain, FrameConfig, Generator, ScenarioConfig,
    ScenarioLabel,
};
use chanforge_core::consistency::{
    distill as core_distill, generate_one_step, ConsistencyModel, DistillConfig,
};
use chanforge_core::diffusion::checkpoint::{load_model, save_model, ModelKind, SavedModel};
use chanforge_core::diffusion::predictor::{DmDenoiser, NoisePredictor, PredictorConfig};
use chanforge_core::diffusion::sampler::generate_channels;
use chanforge_core::diffusion::train::{train_dm, DmTrainConfig};
use chanforge_core::diffusion::unet::UNetConfig;
use chanforge_core::diffusion::{Preconditioner, ScheduleSpec};
use chanforge_core::metrics::{awgn_augment, ks_test_pca, mixup, pas, pdp, w2_power_spectrum};
use chanforge_core::rng::rng_from_seed;
use chanforge_core::sip::evaluate::{evaluate_link, LinkReceiver};
use chanforge_core::sip::frame::build_training_set;
use chanforge_core::sip::lmmse::PriorCov;
use chanforge_core::sip::receiver::{
    load_receiver, save_receiver, train_receiver as core_train_receiver, ReceiverConfig,
    ReceiverModel, RxTrainConfig,
};
use chanforge_core::sip::SipConfig;

fn err(e: chanforge_core::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_domain(name: &str) -> PyResult<Domain> {
    match name {
        "angular_delay" | "ad" => Ok(Domain::AngularDelayTime),
        "freq_time" | "ft" | "spatial_freq" => Ok(Domain::SpatialFreqTime),
        other => Err(PyValueError::new_err(format!("unknown domain {other:?}"))),
    }
}

/// OFDM frame geometry.
#[pyclass(name = "FrameConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyFrameConfig {
    inner: FrameConfig,
}

#[pymethods]
impl PyFrameConfig {
    #[staticmethod]
    fn desk() -> PyFrameConfig {
        PyFrameConfig { inner: FrameConfig::desk() }
    }

    #[staticmethod]
    fn paper() -> PyFrameConfig {
        PyFrameConfig { inner: FrameConfig::paper() }
    }

    #[getter]
    fn n_rx(&self) -> usize {
        self.inner.n_rx
    }

    #[getter]
    fn subcarriers(&self) -> usize {
        self.inner.subcarriers
    }

    #[getter]
    fn symbols(&self) -> usize {
        self.inner.symbols
    }

    #[getter]
    fn delay_bins(&self) -> usize {
        self.inner.delay_bins
    }

    fn __repr__(&self) -> String {
        format!(
            "FrameConfig(n_rx={}, subcarriers={}, symbols={}, delay_bins={})",
            self.inner.n_rx, self.inner.subcarriers, self.inner.symbols, self.inner.delay_bins
        )
    }
}

/// Labeled angular-delay channel dataset.
#[pyclass(name = "ChannelDataset", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: ChannelDataset,
}

#[pymethods]
impl PyDataset {
    /// Samples as (n, n_rx, n_tx, delay_bins, symbols, 2) float64.
    fn samples<'py>(&self, py: Python<'py>) -> Bound<'py, PyArrayDyn<f64>> {
        let f = &self.inner.frame;
        let mut data = Vec::with_capacity(self.inner.len() * f.channel_dim());
        for s in &self.inner.samples {
            data.extend_from_slice(s.data.data());
        }
        let shape = vec![self.inner.len(), f.n_rx, f.n_tx, f.delay_bins, f.symbols, 2];
        numpy::ndarray::ArrayD::from_shape_vec(shape, data)
            .expect("shape matches payload")
            .into_pyarray(py)
    }

    /// Labels as (n, 3): x [m], y [m], speed [m/s].
    fn labels<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        let mut data = Vec::with_capacity(self.inner.len() * 3);
        for l in &self.inner.labels {
            data.extend_from_slice(&l.as_array());
        }
        numpy::ndarray::Array2::from_shape_vec((self.inner.len(), 3), data)
            .expect("shape matches payload")
            .into_pyarray(py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn generator(&self) -> String {
        format!("{:?}", self.inner.meta.generator).to_lowercase()
    }

    #[getter]
    fn frame(&self) -> PyFrameConfig {
        PyFrameConfig { inner: self.inner.frame.clone() }
    }

    fn subset(&self, indices: Vec<usize>) -> PyResult<PyDataset> {
        Ok(PyDataset { inner: self.inner.subset(&indices).map_err(err)? })
    }

    fn concat(&self, other: &PyDataset) -> PyResult<PyDataset> {
        Ok(PyDataset { inner: self.inner.concat(&other.inner).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_dataset(&self.inner, std::path::Path::new(path)).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<PyDataset> {
        Ok(PyDataset { inner: load_dataset(std::path::Path::new(path)).map_err(err)? })
    }
}

/// Simulates a labeled dataset with the parametric cluster model.
/// Scenario layout mirrors the default five-subregion cell unless custom
/// scenario JSON is supplied.
#[pyfunction]
#[pyo3(signature = (frame, per_scenario, speeds_mps, seed, scenarios_json=None))]
fn simulate(
    frame: &PyFrameConfig,
    per_scenario: usize,
    speeds_mps: Vec<f64>,
    seed: u64,
    scenarios_json: Option<&str>,
) -> PyResult<PyDataset> {
    let scenarios: Vec<ScenarioConfig> = match scenarios_json {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => ScenarioConfig::default_cell(),
    };
    let ds = generate_dataset(&scenarios, per_scenario, &speeds_mps, &frame.inner, seed).map_err(err)?;
    Ok(PyDataset { inner: ds })
}

/// Half-wavelength ULA response as (m, 2) [re, im].
#[pyfunction]
fn steering_vector(py: Python<'_>, angle_rad: f64, antennas: usize) -> Bound<'_, PyArray2<f64>> {
    let v = chanforge_core::channel::geometry::steering_vector(angle_rad, antennas);
    let mut data = Vec::with_capacity(antennas * 2);
    for c in v {
        data.push(c.re);
        data.push(c.im);
    }
    numpy::ndarray::Array2::from_shape_vec((antennas, 2), data)
        .expect("shape matches payload")
        .into_pyarray(py)
}

/// Angular-delay -> spatial-frequency transform of one tensor.
#[pyfunction]
fn angular_delay_to_spatial_freq<'py>(
    py: Python<'py>,
    frame: &PyFrameConfig,
    array: PyReadonlyArrayDyn<'py, f64>,
) -> PyResult<Bound<'py, PyArrayDyn<f64>>> {
    let data: Vec<f64> = array.as_array().iter().copied().collect();
    let t = chanforge_core::Tensor::from_vec(frame.inner.angular_delay_shape(), data)
        .map_err(err)?;
    let ct = ChannelTensor::new(Domain::AngularDelayTime, t, &frame.inner).map_err(err)?;
    let sf = to_spatial_frequency(&ct, &frame.inner).map_err(err)?;
    let shape = frame.inner.spatial_freq_shape();
    Ok(numpy::ndarray::ArrayD::from_shape_vec(shape, sf.data.data().to_vec())
        .expect("shape matches payload")
        .into_pyarray(py))
}

/// Spatial-frequency -> angular-delay transform of one tensor.
#[pyfunction]
fn spatial_freq_to_angular_delay<'py>(
    py: Python<'py>,
    frame: &PyFrameConfig,
    array: PyReadonlyArrayDyn<'py, f64>,
) -> PyResult<Bound<'py, PyArrayDyn<f64>>> {
    let data: Vec<f64> = array.as_array().iter().copied().collect();
    let t = chanforge_core::Tensor::from_vec(frame.inner.spatial_freq_shape(), data).map_err(err)?;
    let ct = ChannelTensor::new(Domain::SpatialFreqTime, t, &frame.inner).map_err(err)?;
    let ad = to_angular_delay(&ct, &frame.inner).map_err(err)?;
    let shape = frame.inner.angular_delay_shape();
    Ok(numpy::ndarray::ArrayD::from_shape_vec(shape, ad.data.data().to_vec())
        .expect("shape matches payload")
        .into_pyarray(py))
}

/// Conditional diffusion model with its schedule and preconditioner.
#[pyclass(name = "DiffusionModel")]
struct PyDiffusionModel {
    saved: SavedModel,
}

impl PyDiffusionModel {
    fn schedule(&self) -> PyResult<chanforge_core::diffusion::DiffusionSchedule> {
        self.saved.schedule.build().map_err(err)
    }
}

#[pymethods]
impl PyDiffusionModel {
    /// Trains a new model on the dataset.
    #[staticmethod]
    #[pyo3(signature = (dataset, epochs=100, batch_size=32, lr=1e-4, lr_min_fraction=1.0,
                        widths=vec![16, 32], emb_dim=32, attention=true, conditional=true,
                        steps=40, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        dataset: &PyDataset,
        epochs: usize,
        batch_size: usize,
        lr: f64,
        lr_min_fraction: f64,
        widths: Vec<usize>,
        emb_dim: usize,
        attention: bool,
        conditional: bool,
        steps: usize,
        seed: u64,
    ) -> PyResult<PyDiffusionModel> {
        let config = PredictorConfig {
            unet: UNetConfig { widths, emb_dim, freqs_per_input: 6, attention },
            conditional,
            sigma_data: 0.5,
        };
        let spec = ScheduleSpec { steps, ..ScheduleSpec::default() };
        let schedule = spec.build().map_err(err)?;
        let precond = Preconditioner::new(config.sigma_data, schedule.min_time);
        let mut model = NoisePredictor::init(&dataset.inner.frame, config, seed).map_err(err)?;
        let cfg = DmTrainConfig { epochs, batch_size, lr, lr_min_fraction, seed };
        train_dm(&mut model, &dataset.inner, &schedule, &precond, &cfg).map_err(err)?;
        Ok(PyDiffusionModel {
            saved: SavedModel { kind: ModelKind::Dm, predictor: model, sigma_data: 0.5, schedule: spec },
        })
    }

    /// Generates one sample per label row ((n, 3) array) with the
    /// second-order ODE sampler.
    fn generate(&self, labels: Vec<[f64; 3]>, seed: u64) -> PyResult<PyDataset> {
        let schedule = self.schedule()?;
        let labels: Vec<ScenarioLabel> =
            labels.into_iter().map(|l| ScenarioLabel::new(l[0], l[1], l[2])).collect();
        let precond = Preconditioner::new(self.saved.sigma_data, schedule.min_time);
        let den = DmDenoiser::new(&self.saved.predictor, precond);
        let ds = generate_channels(
            &den,
            &self.saved.predictor.frame,
            &labels,
            &schedule,
            seed,
            Generator::Dm,
            32,
            self.saved.predictor.data_scale,
        )
        .map_err(err)?;
        Ok(PyDataset { inner: ds })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_model(std::path::Path::new(path), &self.saved, &serde_json::json!({})).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<PyDiffusionModel> {
        let saved = load_model(std::path::Path::new(path)).map_err(err)?;
        if saved.kind != ModelKind::Dm {
            return Err(PyValueError::new_err("checkpoint is not a diffusion model"));
        }
        Ok(PyDiffusionModel { saved })
    }

    #[getter]
    fn conditional(&self) -> bool {
        self.saved.predictor.config.conditional
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.saved.predictor.params.num_scalars()
    }
}

/// One-step consistency model distilled from a diffusion model.
#[pyclass(name = "ConsistencyModel")]
struct PyConsistencyModel {
    saved: SavedModel,
}

#[pymethods]
impl PyConsistencyModel {
    #[staticmethod]
    #[pyo3(signature = (teacher, dataset, epochs=100, batch_size=32, lr=1e-5, ema_decay=0.95, seed=0))]
    fn distill(
        teacher: &PyDiffusionModel,
        dataset: &PyDataset,
        epochs: usize,
        batch_size: usize,
        lr: f64,
        ema_decay: f64,
        seed: u64,
    ) -> PyResult<PyConsistencyModel> {
        let schedule = teacher.schedule()?;
        let precond = Preconditioner::new(teacher.saved.sigma_data, schedule.min_time);
        let cfg = DistillConfig { lr, ema_decay, epochs, batch_size, seed };
        let (cm, _) =
            core_distill(&teacher.saved.predictor, &precond, &dataset.inner, &schedule, &cfg)
                .map_err(err)?;
        Ok(PyConsistencyModel {
            saved: SavedModel {
                kind: ModelKind::Cm,
                predictor: cm.predictor,
                sigma_data: teacher.saved.sigma_data,
                schedule: teacher.saved.schedule,
            },
        })
    }

    /// Single-evaluation generation, one sample per label row.
    fn generate(&self, labels: Vec<[f64; 3]>, seed: u64) -> PyResult<PyDataset> {
        let schedule = self.saved.schedule.build().map_err(err)?;
        let labels: Vec<ScenarioLabel> =
            labels.into_iter().map(|l| ScenarioLabel::new(l[0], l[1], l[2])).collect();
        let cm = ConsistencyModel {
            predictor: self.saved.predictor.clone(),
            precond: Preconditioner::new(self.saved.sigma_data, schedule.min_time),
        };
        let ds = generate_one_step(&cm, &self.saved.predictor.frame, &labels, &schedule, seed, 64)
            .map_err(err)?;
        Ok(PyDataset { inner: ds })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_model(std::path::Path::new(path), &self.saved, &serde_json::json!({})).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<PyConsistencyModel> {
        let saved = load_model(std::path::Path::new(path)).map_err(err)?;
        if saved.kind != ModelKind::Cm {
            return Err(PyValueError::new_err("checkpoint is not a consistency model"));
        }
        Ok(PyConsistencyModel { saved })
    }
}

/// Interference-cancellation neural receiver for superimposed pilots.
#[pyclass(name = "Receiver")]
struct PyReceiver {
    model: ReceiverModel,
}

#[pymethods]
impl PyReceiver {
    /// Builds link samples from the dataset and trains the receiver.
    #[staticmethod]
    #[pyo3(signature = (channels, epochs=20, batch_size=32, lr=1e-3, width=16, blocks=2, seed=0))]
    fn train(
        channels: &PyDataset,
        epochs: usize,
        batch_size: usize,
        lr: f64,
        width: usize,
        blocks: usize,
        seed: u64,
    ) -> PyResult<PyReceiver> {
        let sip = SipConfig::default();
        let samples = build_training_set(&channels.inner, &sip, seed).map_err(err)?;
        let mut model = ReceiverModel::init(
            &channels.inner.frame,
            sip,
            ReceiverConfig { width, blocks },
            seed,
        )
        .map_err(err)?;
        let cfg = RxTrainConfig { epochs, batch_size, lr, seed };
        core_train_receiver(&mut model, &samples, &cfg).map_err(err)?;
        Ok(PyReceiver { model })
    }

    /// Evaluates on test channels at one SNR; returns a metrics dict.
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        test: &PyDataset,
        snr_db: f64,
        seed: u64,
    ) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let metrics = evaluate_link(
            &LinkReceiver::Neural(&self.model),
            &test.inner,
            &self.model.sip,
            snr_db,
            seed,
        )
        .map_err(err)?;
        let d = pyo3::types::PyDict::new(py);
        d.set_item("ber", metrics.ber)?;
        d.set_item("bler", metrics.block_error_rate)?;
        d.set_item("nmse", metrics.nmse)?;
        d.set_item("throughput", metrics.throughput)?;
        d.set_item("frames", metrics.frames)?;
        Ok(d)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_receiver(std::path::Path::new(path), &self.model).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<PyReceiver> {
        Ok(PyReceiver { model: load_receiver(std::path::Path::new(path)).map_err(err)? })
    }
}

/// Evaluates the LMMSE baselines (superimposed and orthogonal pilots).
#[pyfunction]
fn evaluate_lmmse<'py>(
    py: Python<'py>,
    test: &PyDataset,
    prior: &PyDataset,
    snr_db: f64,
    seed: u64,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let cfg = SipConfig::default();
    let prior_cov = PriorCov::estimate(&prior.inner).map_err(err)?;
    let out = pyo3::types::PyDict::new(py);
    for rx in [LinkReceiver::LmmseSip(&prior_cov), LinkReceiver::LmmseOp(&prior_cov)] {
        let metrics = evaluate_link(&rx, &test.inner, &cfg, snr_db, seed).map_err(err)?;
        let d = pyo3::types::PyDict::new(py);
        d.set_item("ber", metrics.ber)?;
        d.set_item("bler", metrics.block_error_rate)?;
        d.set_item("throughput", metrics.throughput)?;
        out.set_item(rx.id(), d)?;
    }
    Ok(out)
}

/// Power delay profile (normalized to sum one).
#[pyfunction(name = "pdp")]
fn py_pdp<'py>(py: Python<'py>, ds: &PyDataset) -> PyResult<Bound<'py, PyArray1<f64>>> {
    Ok(PyArray1::from_vec(py, pdp(&ds.inner).map_err(err)?))
}

/// Power angular spectrum (normalized to sum one).
#[pyfunction(name = "pas")]
fn py_pas<'py>(py: Python<'py>, ds: &PyDataset) -> PyResult<Bound<'py, PyArray1<f64>>> {
    Ok(PyArray1::from_vec(py, pas(&ds.inner).map_err(err)?))
}

/// Mean per-bin 1D Wasserstein-2 distance between two datasets.
#[pyfunction(name = "w2_power_spectrum")]
#[pyo3(signature = (a, b, domain="angular_delay"))]
fn py_w2(a: &PyDataset, b: &PyDataset, domain: &str) -> PyResult<f64> {
    w2_power_spectrum(&a.inner, &b.inner, parse_domain(domain)?).map_err(err)
}

/// Two-sample KS test on a principal-component projection.
#[pyfunction(name = "ks_test_pca")]
#[pyo3(signature = (a, b, component=0))]
fn py_ks(a: &PyDataset, b: &PyDataset, component: usize) -> PyResult<(f64, f64)> {
    ks_test_pca(&a.inner, &b.inner, component).map_err(err)
}

/// Mixup augmentation with Beta(alpha, alpha) coefficients.
#[pyfunction(name = "mixup")]
#[pyo3(signature = (ds, count, alpha=0.4, seed=0))]
fn py_mixup(ds: &PyDataset, count: usize, alpha: f64, seed: u64) -> PyResult<PyDataset> {
    let mut rng = rng_from_seed(seed);
    Ok(PyDataset { inner: mixup(&ds.inner, count, alpha, &mut rng).map_err(err)? })
}

/// Additive-noise augmentation at a fixed perturbation SNR.
#[pyfunction(name = "awgn_augment")]
#[pyo3(signature = (ds, count, aug_snr_db=20.0, seed=0))]
fn py_awgn(ds: &PyDataset, count: usize, aug_snr_db: f64, seed: u64) -> PyResult<PyDataset> {
    let mut rng = rng_from_seed(seed);
    Ok(PyDataset { inner: awgn_augment(&ds.inner, count, aug_snr_db, &mut rng).map_err(err)? })
}

/// Dataset construction from raw arrays: samples (n, n_rx, n_tx, tau, S, 2)
/// and labels (n, 3).
#[pyfunction]
fn dataset_from_arrays(
    frame: &PyFrameConfig,
    samples: PyReadonlyArrayDyn<'_, f64>,
    labels: PyReadonlyArrayDyn<'_, f64>,
) -> PyResult<PyDataset> {
    let f = &frame.inner;
    let dims = samples.as_array().shape().to_vec();
    let expect = f.angular_delay_shape();
    if dims.len() != 6 || dims[1..] != expect[..] {
        return Err(PyValueError::new_err(format!(
            "samples must be (n, {}, {}, {}, {}, 2), got {:?}",
            f.n_rx, f.n_tx, f.delay_bins, f.symbols, dims
        )));
    }
    let n = dims[0];
    if labels.as_array().shape() != [n, 3] {
        return Err(PyValueError::new_err("labels must be (n, 3)"));
    }
    let flat: Vec<f64> = samples.as_array().iter().copied().collect();
    let lab: Vec<f64> = labels.as_array().iter().copied().collect();
    let dim = f.channel_dim();
    let mut tensors = Vec::with_capacity(n);
    let mut out_labels = Vec::with_capacity(n);
    for i in 0..n {
        let t = chanforge_core::Tensor::from_vec(expect.clone(), flat[i * dim..(i + 1) * dim].to_vec())
            .map_err(err)?;
        tensors.push(ChannelTensor { domain: Domain::AngularDelayTime, data: t });
        out_labels.push(ScenarioLabel::new(lab[i * 3], lab[i * 3 + 1], lab[i * 3 + 2]));
    }
    let ds = ChannelDataset::new(
        f.clone(),
        tensors,
        out_labels,
        DatasetMeta { generator: Generator::Simulator, seed: 0, scenarios: vec![] },
    )
    .map_err(err)?;
    Ok(PyDataset { inner: ds })
}

#[pymodule]
fn chanforge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFrameConfig>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyDiffusionModel>()?;
    m.add_class::<PyConsistencyModel>()?;
    m.add_class::<PyReceiver>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(steering_vector, m)?)?;
    m.add_function(wrap_pyfunction!(angular_delay_to_spatial_freq, m)?)?;
    m.add_function(wrap_pyfunction!(spatial_freq_to_angular_delay, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_lmmse, m)?)?;
    m.add_function(wrap_pyfunction!(py_pdp, m)?)?;
    m.add_function(wrap_pyfunction!(py_pas, m)?)?;
    m.add_function(wrap_pyfunction!(py_w2, m)?)?;
    m.add_function(wrap_pyfunction!(py_ks, m)?)?;
    m.add_function(wrap_pyfunction!(py_mixup, m)?)?;
    m.add_function(wrap_pyfunction!(py_awgn, m)?)?;
    m.add_function(wrap_pyfunction!(dataset_from_arrays, m)?)?;
    Ok(())
}
