//! One function per subcommand. Each produces idempotently named artifacts
//! under the output directory and refuses to overwrite without `--force`.

use std::path::{Path, PathBuf};

use stransformer_core::config::ModelConfig;
use stransformer_core::data::{synth, write_csv, Normalizer, SynthKind};
use stransformer_core::model::{init_params, predict_window, Checkpoint};
use stransformer_core::train::{
    ablation_table, evaluate_forecaster, run_ablation, train, write_history_csv, EvalOptions,
    ModelForecaster,
};
use stransformer_core::verify::gradient_suite;
use stransformer_core::{Error, Result, Tensor};

use crate::configfile::RunConfigFile;

pub const GRADCHECK_TOL: f64 = 1e-4;
pub const GRADCHECK_H: f64 = 1e-5;

/// Resolved invocation context shared by the artifact-producing commands.
pub struct Ctx {
    pub cfg: RunConfigFile,
    pub out_dir: PathBuf,
    pub run_id: String,
    pub force: bool,
}

impl Ctx {
    /// Artifact path `<out_dir>/<run_id>.<suffix>`; existing files are only
    /// overwritten with `--force`.
    fn artifact(&self, suffix: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(format!("{}.{suffix}", self.run_id));
        if path.exists() && !self.force {
            return Err(Error::usage(format!(
                "refusing to overwrite {}; pass --force",
                path.display()
            )));
        }
        Ok(path)
    }

    fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            horizons: self.cfg.eval_horizons(),
            normalized_scale: self.cfg.eval.normalized_scale,
            short_term_metrics: self.cfg.eval.short_term_metrics,
            run_id: self.run_id.clone(),
            config_echo: self.cfg.echo(),
        }
    }

    fn write_report(&self, report: &stransformer_core::metrics::MetricsReport) -> Result<()> {
        let json = self.artifact("report.json")?;
        let txt = self.artifact("report.txt")?;
        std::fs::write(
            &json,
            serde_json::to_string_pretty(report)
                .map_err(|e| Error::Numeric(format!("report serialization failed: {e}")))?,
        )?;
        std::fs::write(&txt, report.to_table())?;
        println!("report: {}", json.display());
        println!("{}", report.to_table());
        Ok(())
    }
}

pub fn cmd_train(ctx: &Ctx) -> Result<()> {
    let ds = ctx.cfg.load_dataset()?;
    // reserve artifact names before the long-running work
    let ckpt_path = ctx.artifact("ckpt.json")?;
    let history_path = ctx.artifact("history.csv")?;

    let params = init_params(&ctx.cfg.model, ctx.cfg.model.seed)?;
    let result = train(&ctx.cfg.model, params, &ds, &ctx.cfg.train)?;

    Checkpoint::new(&ctx.cfg.model, &result.params).save(&ckpt_path)?;
    write_history_csv(&history_path, &result.history)?;
    println!(
        "trained {} steps (best val mse: {})",
        result.steps_run,
        result
            .best_val_mse
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "n/a".to_string())
    );
    println!("checkpoint: {}", ckpt_path.display());

    let fc = ModelForecaster {
        params: &result.params,
        cfg: &ctx.cfg.model,
    };
    let report = evaluate_forecaster(
        &fc,
        ctx.cfg.model.horizon,
        ctx.cfg.model.lookback,
        &ds,
        &result.normalizer,
        &ctx.eval_options(),
    )?;
    ctx.write_report(&report)
}

fn load_checkpoint(path: &Path) -> Result<(ModelConfig, stransformer_core::params::ModelParams<Tensor>)> {
    Checkpoint::load(path)?.into_params()
}

pub fn cmd_evaluate(ctx: &Ctx, checkpoint: &Path) -> Result<()> {
    let (model_cfg, params) = load_checkpoint(checkpoint)?;
    let ds = ctx.cfg.load_dataset()?;
    let norm = Normalizer::fit(&ds)?;
    let fc = ModelForecaster { params: &params, cfg: &model_cfg };
    let report = evaluate_forecaster(
        &fc,
        model_cfg.horizon,
        model_cfg.lookback,
        &ds,
        &norm,
        &ctx.eval_options(),
    )?;
    ctx.write_report(&report)
}

/// Future timestamps continuing the dataset's spacing, or plain step labels
/// when the source had no parseable timestamps.
fn extrapolate_timestamps(
    timestamps: &Option<Vec<String>>,
    horizon: usize,
) -> Vec<String> {
    if let Some(ts) = timestamps {
        if ts.len() >= 2 {
            let last = stransformer_core::data::parse_timestamp(&ts[ts.len() - 1]);
            let prev = stransformer_core::data::parse_timestamp(&ts[ts.len() - 2]);
            if let (Some(last), Some(prev)) = (last, prev) {
                let delta = last - prev;
                return (1..=horizon)
                    .map(|k| (last + delta * k as i32).format("%Y-%m-%d %H:%M:%S").to_string())
                    .collect();
            }
        }
    }
    (1..=horizon).map(|k| format!("t+{k}")).collect()
}

pub fn cmd_forecast(ctx: &Ctx, checkpoint: &Path) -> Result<()> {
    let (model_cfg, params) = load_checkpoint(checkpoint)?;
    let ds = ctx.cfg.load_dataset()?;
    let (m, n) = (ds.variables(), ds.len());
    let t = model_cfg.lookback;
    if m != model_cfg.variables {
        return Err(Error::Dimension {
            op: "forecast",
            lhs: vec![model_cfg.variables],
            rhs: vec![m],
        });
    }
    if n < t {
        return Err(Error::usage(format!(
            "dataset has {n} points but the model needs a lookback of {t}"
        )));
    }
    let norm = Normalizer::fit(&ds)?;
    let mut window = Tensor::zeros(vec![m, t]);
    for i in 0..m {
        for j in 0..t {
            window.data[i * t + j] = ds.series.at2(i, n - t + j);
        }
    }
    let pred = predict_window(&window, &params, &model_cfg, &norm)?;

    let k = model_cfg.horizon;
    let future = extrapolate_timestamps(&ds.timestamps, k);
    let mut out = String::from("variable");
    for ts in &future {
        out.push(',');
        out.push_str(ts);
    }
    out.push('\n');
    for i in 0..m {
        out.push_str(&ds.names[i]);
        for j in 0..k {
            out.push_str(&format!(",{}", pred.at2(i, j)));
        }
        out.push('\n');
    }
    let path = ctx.artifact("forecast.csv")?;
    std::fs::write(&path, out)?;
    println!("forecast: {}", path.display());
    Ok(())
}

pub fn cmd_ablate(ctx: &Ctx) -> Result<()> {
    let ds = ctx.cfg.load_dataset()?;
    let json_path = ctx.artifact("ablation.json")?;
    let txt_path = ctx.artifact("ablation.txt")?;
    let rows = run_ablation(&ds, &ctx.cfg.model, &ctx.cfg.train, &ctx.eval_options())?;
    let table = ablation_table(&rows);
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&rows)
            .map_err(|e| Error::Numeric(format!("ablation serialization failed: {e}")))?,
    )?;
    std::fs::write(&txt_path, &table)?;
    println!("{table}");
    println!("ablation grid: {}", json_path.display());
    if rows.iter().all(|r| r.error.is_some()) {
        return Err(Error::Numeric("every ablation variant failed".to_string()));
    }
    Ok(())
}

/// Runs the named gradient-check suite and prints one line per check.
/// Returns whether every check stayed below the tolerance.
pub fn cmd_gradcheck(model_cfg: &ModelConfig) -> Result<bool> {
    let reports = gradient_suite(model_cfg, GRADCHECK_H)?;
    let mut all_pass = true;
    for r in &reports {
        let ok = r.passed(GRADCHECK_TOL);
        all_pass &= ok;
        println!(
            "{:<28} max rel err {:<12.3e} {}",
            r.name,
            r.max_rel_err,
            if ok { "pass" } else { "FAIL" }
        );
    }
    println!(
        "gradcheck: {} of {} checks below {GRADCHECK_TOL:e}",
        reports.iter().filter(|r| r.passed(GRADCHECK_TOL)).count(),
        reports.len()
    );
    Ok(all_pass)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_synth(
    ctx: &Ctx,
    kind: &str,
    variables: usize,
    length: usize,
    noise: f64,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<()> {
    let kind: SynthKind = kind.parse()?;
    let ds = synth(kind, variables, length, noise, seed)?;
    let path = match out {
        Some(p) => {
            if p.exists() && !ctx.force {
                return Err(Error::usage(format!(
                    "refusing to overwrite {}; pass --force",
                    p.display()
                )));
            }
            p
        }
        None => ctx.artifact("synth.csv")?,
    };
    write_csv(&ds, &path)?;
    println!("dataset: {} ({} variables x {} points)", path.display(), variables, length);
    Ok(())
}
