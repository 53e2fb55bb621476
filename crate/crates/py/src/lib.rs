//! Python bindings: model configuration, training, forecasting, synthetic
//! data, gradient checking and the forecast metrics, exposed as the
//! `stransformer` extension module.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use stransformer_core::config::ModelConfig;
use stransformer_core::data::{synth as core_synth, ForecastDataset, Normalizer, Splits, SynthKind};
use stransformer_core::metrics;
use stransformer_core::model::{forward, init_params, predict_window, Checkpoint};
use stransformer_core::params::ModelParams;
use stransformer_core::tensor::Tensor;
use stransformer_core::train::{
    evaluate_forecaster, train as core_train, EvalOptions, ModelForecaster, TrainConfig,
};
use stransformer_core::verify::gradient_suite;

fn err(e: stransformer_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Rows = variables, columns = time (or horizon) steps.
fn to_tensor(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    let m = rows.len();
    if m == 0 {
        return Err(PyValueError::new_err("expected at least one row"));
    }
    let n = rows[0].len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Tensor::new(vec![m, n], rows.into_iter().flatten().collect()).map_err(err)
}

fn to_rows(t: &Tensor) -> Vec<Vec<f64>> {
    let (m, n) = (t.shape[0], t.shape[1]);
    (0..m).map(|i| t.data[i * n..(i + 1) * n].to_vec()).collect()
}

fn dataset_from_rows(rows: Vec<Vec<f64>>, train_ratio: f64, val_ratio: f64) -> PyResult<ForecastDataset> {
    let series = to_tensor(rows)?;
    let names = (0..series.shape[0]).map(|i| format!("var{i}")).collect();
    let mut ds = ForecastDataset::from_series(names, series).map_err(err)?;
    ds.splits = Splits::by_ratio(ds.len(), train_ratio, val_ratio);
    Ok(ds)
}

/// Model dimensions and architectural knobs.
#[pyclass(name = "Config", skip_from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    pub inner: ModelConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (
        variables = 7, lookback = 96, horizon = 96, embed = 64, scn_channels = 32,
        mask_hidden = 0, ffn_hidden = 0, mask_blocks = 1, blocks = 2, tcn_layers = 3,
        tcn_kernel = 3, scn_kernels = vec![3, 5], dropout = 0.0,
        variant = "original", scn_padding = "circular", mask_source = "value", seed = 0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        variables: usize,
        lookback: usize,
        horizon: usize,
        embed: usize,
        scn_channels: usize,
        mask_hidden: usize,
        ffn_hidden: usize,
        mask_blocks: usize,
        blocks: usize,
        tcn_layers: usize,
        tcn_kernel: usize,
        scn_kernels: Vec<usize>,
        dropout: f64,
        variant: &str,
        scn_padding: &str,
        mask_source: &str,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = ModelConfig {
            variables,
            lookback,
            horizon,
            embed,
            scn_channels,
            mask_hidden,
            ffn_hidden,
            mask_blocks,
            blocks,
            tcn_layers,
            tcn_kernel,
            scn_kernels,
            dropout,
            variant: variant.parse().map_err(err)?,
            scn_padding: match scn_padding {
                "circular" => stransformer_core::config::ScnPadding::Circular,
                "zero" => stransformer_core::config::ScnPadding::Zero,
                other => {
                    return Err(PyValueError::new_err(format!(
                        "scn_padding must be `circular` or `zero`, got `{other}`"
                    )))
                }
            },
            mask_source: match mask_source {
                "value" => stransformer_core::config::MaskSource::Value,
                "stcn" => stransformer_core::config::MaskSource::Stcn,
                other => {
                    return Err(PyValueError::new_err(format!(
                        "mask_source must be `value` or `stcn`, got `{other}`"
                    )))
                }
            },
            seed,
        };
        cfg.validate().map_err(err)?;
        Ok(PyConfig { inner: cfg })
    }

    #[getter]
    fn variables(&self) -> usize {
        self.inner.variables
    }

    #[getter]
    fn lookback(&self) -> usize {
        self.inner.lookback
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    #[getter]
    fn embed(&self) -> usize {
        self.inner.embed
    }

    #[getter]
    fn variant(&self) -> String {
        format!("{:?}", self.inner.variant)
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(variables={}, lookback={}, horizon={}, embed={}, blocks={}, variant={:?})",
            self.inner.variables,
            self.inner.lookback,
            self.inner.horizon,
            self.inner.embed,
            self.inner.blocks,
            self.inner.variant
        )
    }
}

/// A forecasting model: seeded initialization, training, prediction and
/// checkpointing.
#[pyclass(name = "Model")]
pub struct PyModel {
    cfg: ModelConfig,
    params: ModelParams<Tensor>,
    normalizer: Option<Normalizer>,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (config, seed = None))]
    fn new(config: &PyConfig, seed: Option<u64>) -> PyResult<Self> {
        let cfg = config.inner.clone();
        let params = init_params(&cfg, seed.unwrap_or(cfg.seed)).map_err(err)?;
        Ok(PyModel { cfg, params, normalizer: None })
    }

    /// Total number of trainable scalars.
    fn param_count(&self) -> usize {
        self.params.count()
    }

    #[getter]
    fn config(&self) -> PyConfig {
        PyConfig { inner: self.cfg.clone() }
    }

    /// Maps a normalized variables x lookback window to a normalized
    /// variables x horizon forecast.
    fn forward(&self, window: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = to_tensor(window)?;
        let y = forward(&x, &self.params, &self.cfg).map_err(err)?;
        Ok(to_rows(&y))
    }

    /// Forecasts from a raw window in original units (requires `fit` first,
    /// which learns the train-split normalization).
    fn predict(&self, window: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let norm = self.normalizer.as_ref().ok_or_else(|| {
            PyValueError::new_err("predict requires a fitted model; call fit() first")
        })?;
        let x = to_tensor(window)?;
        let y = predict_window(&x, &self.params, &self.cfg, norm).map_err(err)?;
        Ok(to_rows(&y))
    }

    /// Trains on a raw series (rows = variables) with Adam on MSE.
    /// Returns {"steps", "best_val_mse", "final_loss"}.
    #[pyo3(signature = (
        series, lr = 5e-4, max_steps = 1000, batch_size = 32, seed = 0,
        train_ratio = 0.7, val_ratio = 0.1
    ))]
    #[allow(clippy::too_many_arguments)]
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        series: Vec<Vec<f64>>,
        lr: f64,
        max_steps: usize,
        batch_size: usize,
        seed: u64,
        train_ratio: f64,
        val_ratio: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let ds = dataset_from_rows(series, train_ratio, val_ratio)?;
        let tc = TrainConfig {
            lr,
            max_steps,
            batch_size,
            seed,
            ..TrainConfig::default()
        };
        let result =
            core_train(&self.cfg, self.params.clone(), &ds, &tc).map_err(err)?;
        self.params = result.params;
        self.normalizer = Some(result.normalizer);
        let out = PyDict::new(py);
        out.set_item("steps", result.steps_run)?;
        out.set_item("best_val_mse", result.best_val_mse)?;
        out.set_item("final_loss", result.history.last().map(|h| h.train_loss))?;
        Ok(out)
    }

    /// Normalized-scale test-split metrics on a raw series:
    /// {"mse", "mae"} at the model horizon.
    #[pyo3(signature = (series, train_ratio = 0.7, val_ratio = 0.1))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        series: Vec<Vec<f64>>,
        train_ratio: f64,
        val_ratio: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let ds = dataset_from_rows(series, train_ratio, val_ratio)?;
        let norm = Normalizer::fit(&ds).map_err(err)?;
        let opts = EvalOptions {
            horizons: vec![self.cfg.horizon],
            normalized_scale: true,
            short_term_metrics: false,
            run_id: "py".into(),
            config_echo: serde_json::Value::Null,
        };
        let fc = ModelForecaster { params: &self.params, cfg: &self.cfg };
        let report =
            evaluate_forecaster(&fc, self.cfg.horizon, self.cfg.lookback, &ds, &norm, &opts)
                .map_err(err)?;
        let out = PyDict::new(py);
        let row = report
            .horizons
            .first()
            .ok_or_else(|| PyValueError::new_err("test split holds no full window"))?;
        out.set_item("mse", row.mse)?;
        out.set_item("mae", row.mae)?;
        Ok(out)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        Checkpoint::new(&self.cfg, &self.params)
            .save(std::path::Path::new(path))
            .map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<PyModel> {
        let (cfg, params) = Checkpoint::load(std::path::Path::new(path))
            .and_then(|c| c.into_params())
            .map_err(err)?;
        Ok(PyModel { cfg, params, normalizer: None })
    }
}

/// Seeded synthetic multivariate series (rows = variables).
#[pyfunction]
#[pyo3(signature = (kind = "sines", variables = 3, length = 400, noise = 0.05, seed = 0))]
fn synth(
    kind: &str,
    variables: usize,
    length: usize,
    noise: f64,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let kind: SynthKind = kind.parse().map_err(err)?;
    let ds = core_synth(kind, variables, length, noise, seed).map_err(err)?;
    Ok(to_rows(&ds.series))
}

/// Central-finite-difference check of every differentiable operation plus
/// the composed model; returns [(name, max_rel_err)].
#[pyfunction]
#[pyo3(signature = (config = None, h = 1e-5))]
fn gradcheck(config: Option<&PyConfig>, h: f64) -> PyResult<Vec<(String, f64)>> {
    let cfg = match config {
        Some(c) => c.inner.clone(),
        None => ModelConfig {
            variables: 3,
            lookback: 8,
            horizon: 2,
            embed: 8,
            scn_channels: 4,
            blocks: 1,
            mask_blocks: 1,
            ..ModelConfig::default()
        },
    };
    let reports = gradient_suite(&cfg, h).map_err(err)?;
    Ok(reports.into_iter().map(|r| (r.name, r.max_rel_err)).collect())
}

#[pyfunction]
fn mse(y: Vec<f64>, yhat: Vec<f64>) -> PyResult<f64> {
    let n = y.len();
    let a = Tensor::new(vec![n], y).map_err(err)?;
    let b = Tensor::new(vec![yhat.len()], yhat).map_err(err)?;
    metrics::mse(&a, &b).map_err(err)
}

#[pyfunction]
fn mae(y: Vec<f64>, yhat: Vec<f64>) -> PyResult<f64> {
    let n = y.len();
    let a = Tensor::new(vec![n], y).map_err(err)?;
    let b = Tensor::new(vec![yhat.len()], yhat).map_err(err)?;
    metrics::mae(&a, &b).map_err(err)
}

#[pyfunction]
fn smape(y: Vec<f64>, yhat: Vec<f64>) -> PyResult<f64> {
    metrics::smape(&y, &yhat).map_err(err)
}

#[pyfunction]
fn mase(y: Vec<f64>, yhat: Vec<f64>, insample: Vec<f64>, m: usize) -> PyResult<f64> {
    metrics::mase(&y, &yhat, &insample, m).map_err(err)
}

#[pyfunction]
fn owa(smape: f64, mase: f64, baseline_smape: f64, baseline_mase: f64) -> PyResult<f64> {
    metrics::owa(smape, mase, baseline_smape, baseline_mase).map_err(err)
}

#[pymodule]
fn stransformer(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(smape, m)?)?;
    m.add_function(wrap_pyfunction!(mase, m)?)?;
    m.add_function(wrap_pyfunction!(owa, m)?)?;
    Ok(())
}
