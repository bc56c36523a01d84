mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use spolab::harness::{self, Axis, Ensemble, ExperimentConfig, ExperimentResult};
use spolab::spo::{perfect_recovery_check, SpoSolution};

use config::{base_config, config_err, ConfigError, Format, OneOrMany, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "spolab",
    version,
    about = "Asymptotic squared-error predictions for regularized M-estimators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Predicted squared error from the scalar min-max problem.
    Predict(RunArgs),
    /// Monte Carlo error next to the prediction, one row per λ.
    Simulate(RunArgs),
    /// Simulation along the λ or δ axis.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// `lambda` or `delta`.
        #[arg(long)]
        axis: Option<String>,
        /// Axis values; a λ sweep defaults to the configured grid.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Which stability and perfect-recovery conditions hold.
    Check {
        #[arg(long)]
        delta: f64,
        /// Statistical dimension ratio of the regularizer's descent cone.
        #[arg(long)]
        dbar: Option<f64>,
        /// Nonzero-noise mass scaled by δ.
        #[arg(long)]
        sbar: Option<f64>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML run file; its values win over flags.
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Comma-separated losses, e.g. `abs,square`.
    #[arg(long, value_delimiter = ',')]
    loss: Vec<String>,
    #[arg(long)]
    reg: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    signal: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    /// Comma-separated λ values.
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    /// Gaussian noise with this variance.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Gaussian signal with this variance.
    #[arg(long)]
    sigmax2: Option<f64>,
    /// Drop the regularizer (λ = 0).
    #[arg(long)]
    no_reg: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// `gaussian` or `bernoulli` design entries.
    #[arg(long)]
    ensemble: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write here instead of standard output.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Validate and print the resolved plan without running it.
    #[arg(long)]
    dry_run: bool,
}

/// Everything a run needs after flags and the config file are merged.
struct Plan {
    configs: Vec<ExperimentConfig>,
    format: Format,
    output: Option<PathBuf>,
    sweep: config::SweepSection,
    dry_run: bool,
}

impl RunArgs {
    fn overrides(&self) -> anyhow::Result<Overrides> {
        let mut o = Overrides {
            n: self.n,
            delta: self.delta,
            lambda_grid: (!self.lambda.is_empty()).then(|| self.lambda.clone()),
            loss: (!self.loss.is_empty()).then(|| OneOrMany::Many(self.loss.clone())),
            reg: self.reg.clone(),
            noise: self.noise.clone(),
            signal: self.signal.clone(),
            ensemble: self.ensemble.as_deref().map(parse_ensemble).transpose()?,
            trials: self.trials,
            seed: self.seed,
            tol: self.tol,
            max_iter: self.max_iter,
            notes: None,
        };
        if let Some(s2) = self.sigma2 {
            o.noise = Some(format!("normal(0, {s2})"));
        }
        if let Some(x2) = self.sigmax2 {
            o.signal = Some(format!("normal(0, {x2})"));
        }
        if self.no_reg {
            o.reg = Some("zero".into());
            o.lambda_grid = Some(vec![0.0]);
        }
        Ok(o)
    }

    fn plan(&self) -> anyhow::Result<(Plan, Vec<String>)> {
        let file = self
            .config
            .as_deref()
            .map(RunConfig::load)
            .transpose()?
            .unwrap_or_default();
        let mut warnings = Vec::new();
        let preset = match (&file.preset, &self.preset) {
            (Some(c), Some(f)) if c != f => {
                warnings.push(format!(
                    "config preset {c:?} overrides the flag value {f:?}"
                ));
                Some(c.clone())
            }
            (c, f) => c.clone().or_else(|| f.clone()),
        };
        let merged = self.overrides()?.under(file.experiment, &mut warnings);
        let configs = merged.apply(base_config(preset.as_deref())?)?;
        if file.output.format.is_some()
            && self.format.is_some()
            && file.output.format != self.format
        {
            warnings.push("config output format overrides --format".into());
        }
        let plan = Plan {
            configs,
            format: file.output.format.or(self.format).unwrap_or_default(),
            output: file.output.path.or_else(|| self.output.clone()),
            sweep: file.sweep,
            dry_run: self.dry_run,
        };
        Ok((plan, warnings))
    }
}

fn parse_ensemble(s: &str) -> anyhow::Result<Ensemble> {
    match s.to_ascii_lowercase().as_str() {
        "gaussian" => Ok(Ensemble::Gaussian),
        "bernoulli" => Ok(Ensemble::Bernoulli),
        _ => Err(config_err(format!(
            "unknown ensemble `{s}` (gaussian or bernoulli)"
        ))),
    }
}

fn joined_hash(configs: &[ExperimentConfig]) -> String {
    configs
        .iter()
        .map(|c| c.config_hash())
        .collect::<Vec<_>>()
        .join("+")
}

fn emit(text: &str, output: Option<&PathBuf>) -> anyhow::Result<()> {
    match output {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct DryRun<'a> {
    command: &'a str,
    config_hash: String,
    configs: &'a [ExperimentConfig],
    format: &'a str,
    output: Option<&'a PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    axis: Option<Axis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    values: Option<&'a [f64]>,
}

fn dry_run(
    command: &str,
    plan: &Plan,
    axis: Option<Axis>,
    values: Option<&[f64]>,
) -> anyhow::Result<()> {
    let d = DryRun {
        command,
        config_hash: joined_hash(&plan.configs),
        configs: &plan.configs,
        format: match plan.format {
            Format::Json => "json",
            Format::Csv => "csv",
        },
        output: plan.output.as_ref(),
        axis,
        values,
    };
    emit(&serde_json::to_string_pretty(&d)?, None)
}

#[derive(Serialize)]
struct PredictionRecord {
    loss: String,
    reg: String,
    delta: f64,
    lambda: f64,
    solution: Option<SpoSolution>,
    error: Option<String>,
}

#[derive(Serialize)]
struct PredictionReport {
    config_hash: String,
    notes: Vec<String>,
    predictions: Vec<PredictionRecord>,
}

impl PredictionReport {
    fn to_csv(&self) -> String {
        let mut out = format!("# config_hash={}\n", self.config_hash);
        for n in &self.notes {
            out.push_str(&format!("# note={n}\n"));
        }
        out.push_str("loss,reg,delta,lambda,alpha_sq,alpha,beta,kappa,nu,tau_g,tau_h,cost,method,flags,error\n");
        for p in &self.predictions {
            let quote = |s: &str| format!("\"{}\"", s.replace('"', "\"\""));
            let solved = match &p.solution {
                Some(s) => format!(
                    "{},{},{},{},{},{},{},{},{},{}",
                    s.alpha_sq,
                    s.alpha,
                    s.beta,
                    s.kappa,
                    s.nu,
                    s.tau_g,
                    s.tau_h,
                    s.cost,
                    s.method,
                    quote(&s.flags.join("; "))
                ),
                None => ",,,,,,,,,".into(),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                quote(&p.loss),
                quote(&p.reg),
                p.delta,
                p.lambda,
                solved,
                quote(p.error.as_deref().unwrap_or(""))
            ));
        }
        out
    }
}

/// `Ok(true)` when every requested value was computed.
fn cmd_predict(args: &RunArgs) -> anyhow::Result<bool> {
    let (plan, warnings) = args.plan()?;
    warn(&warnings);
    for c in &plan.configs {
        c.validate_for_prediction()
            .map_err(|e| config_err(e.to_string()))?;
    }
    if plan.dry_run {
        dry_run("predict", &plan, None, None)?;
        return Ok(true);
    }
    let mut predictions = Vec::new();
    for c in &plan.configs {
        for &lambda in &c.lambda_grid {
            let (solution, error) =
                match harness::predict(c.delta, lambda, c.loss, c.reg, &c.noise, &c.signal) {
                    Ok(s) => (Some(s), None),
                    Err(e) => (None, Some(e.to_string())),
                };
            predictions.push(PredictionRecord {
                loss: c.loss.to_string(),
                reg: c.reg.to_string(),
                delta: c.delta,
                lambda,
                solution,
                error,
            });
        }
    }
    let ok = predictions.iter().all(|p| p.error.is_none());
    let report = PredictionReport {
        config_hash: joined_hash(&plan.configs),
        notes: notes(&plan.configs),
        predictions,
    };
    let text = match plan.format {
        Format::Json => serde_json::to_string_pretty(&report)?,
        Format::Csv => report.to_csv(),
    };
    emit(&text, plan.output.as_ref())?;
    Ok(ok)
}

fn notes(configs: &[ExperimentConfig]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for n in configs.iter().flat_map(|c| &c.notes) {
        if !out.contains(n) {
            out.push(n.clone());
        }
    }
    out
}

fn row_failed(r: &harness::ResultRow, cfg_trials: usize) -> bool {
    r.predicted_alpha_sq.is_none() || r.trials < cfg_trials
}

fn write_result(plan: &Plan, results: Vec<(ExperimentResult, usize)>) -> anyhow::Result<bool> {
    let ok = results
        .iter()
        .all(|(r, t)| r.rows.iter().all(|row| !row_failed(row, *t)));
    let merged = ExperimentResult {
        config_hash: joined_hash(&plan.configs),
        notes: notes(&plan.configs),
        rows: results.into_iter().flat_map(|(r, _)| r.rows).collect(),
    };
    let text = match plan.format {
        Format::Json => merged.to_json(),
        Format::Csv => merged.to_csv(),
    };
    emit(&text, plan.output.as_ref())?;
    Ok(ok)
}

fn validated(plan: &Plan) -> anyhow::Result<()> {
    for c in &plan.configs {
        c.validate().map_err(|e| config_err(e.to_string()))?;
    }
    Ok(())
}

fn cmd_simulate(args: &RunArgs) -> anyhow::Result<bool> {
    let (plan, warnings) = args.plan()?;
    warn(&warnings);
    validated(&plan)?;
    if plan.dry_run {
        dry_run("simulate", &plan, None, None)?;
        return Ok(true);
    }
    let results = plan
        .configs
        .iter()
        .map(|c| harness::run_experiment(c).map(|r| (r, c.trials)))
        .collect::<Result<Vec<_>, _>>()?;
    write_result(&plan, results)
}

fn cmd_sweep(args: &RunArgs, axis: Option<&str>, values: &[f64]) -> anyhow::Result<bool> {
    let (plan, mut warnings) = args.plan()?;
    let axis_text = match (&plan.sweep.axis, axis) {
        (Some(c), Some(f)) if !c.eq_ignore_ascii_case(f) => {
            warnings.push(format!("config axis {c:?} overrides --axis {f:?}"));
            c.clone()
        }
        (c, f) => c
            .clone()
            .or_else(|| f.map(str::to_string))
            .unwrap_or_else(|| "lambda".into()),
    };
    warn(&warnings);
    let axis: Axis = axis_text
        .parse()
        .map_err(|e: harness::HarnessError| config_err(e.to_string()))?;
    let values: Vec<f64> = match (&plan.sweep.values, values.is_empty()) {
        (Some(v), _) => v.clone(),
        (None, false) => values.to_vec(),
        (None, true) if axis == Axis::Lambda => Vec::new(),
        (None, true) => return Err(config_err("a δ sweep needs --values")),
    };
    validated(&plan)?;
    if plan.dry_run {
        dry_run("sweep", &plan, Some(axis), Some(&values))?;
        return Ok(true);
    }
    let results = plan
        .configs
        .iter()
        .map(|c| {
            let v = if values.is_empty() {
                c.lambda_grid.clone()
            } else {
                values.clone()
            };
            harness::sweep(c, axis, &v).map(|r| (r, c.trials))
        })
        .collect::<Result<Vec<_>, _>>()?;
    write_result(&plan, results)
}

#[derive(Serialize)]
struct Condition {
    name: &'static str,
    holds: bool,
    margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
}

fn cmd_check(
    delta: f64,
    dbar: Option<f64>,
    sbar: Option<f64>,
    format: Option<Format>,
) -> anyhow::Result<bool> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(config_err(format!("δ must be positive, got {delta}")));
    }
    if let Some(d) = dbar {
        if !(d > 0.0 && d < 1.0) {
            return Err(config_err(format!("D̄ must lie in (0, 1), got {d}")));
        }
    }
    if sbar.is_some() && dbar.is_none() {
        return Err(config_err("--sbar needs --dbar"));
    }
    let mut conds = vec![Condition {
        name: "unregularized (δ > 1)",
        holds: delta > 1.0,
        margin: delta - 1.0,
        kappa: None,
    }];
    if let Some(d) = dbar {
        conds.push(Condition {
            name: "cone (δ > D̄)",
            holds: delta > d,
            margin: delta - d,
            kappa: None,
        });
    }
    if let (Some(d), Some(s)) = (dbar, sbar) {
        let r = perfect_recovery_check(delta, d, s).map_err(|e| config_err(e.to_string()))?;
        conds.push(Condition {
            name: "perfect recovery",
            holds: r.holds,
            margin: r.margin,
            kappa: Some(r.kappa),
        });
    }
    let text = match format.unwrap_or(Format::Csv) {
        Format::Json => serde_json::to_string_pretty(&conds)?,
        Format::Csv => conds
            .iter()
            .map(|c| {
                let verdict = match (c.kappa.is_some(), c.holds) {
                    (true, true) => "HOLDS",
                    (true, false) => "FAILS",
                    (false, true) => "STABLE",
                    (false, false) => "UNSTABLE",
                };
                let kappa = c
                    .kappa
                    .map(|k| format!(", kappa* {k:.6}"))
                    .unwrap_or_default();
                format!("{}: {verdict}, margin {:+.6}{kappa}\n", c.name, c.margin)
            })
            .collect(),
    };
    emit(&text, None)?;
    Ok(true)
}

fn warn(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Predict(a) => cmd_predict(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Sweep { run, axis, values } => cmd_sweep(&run, axis.as_deref(), &values),
        Command::Check {
            delta,
            dbar,
            sbar,
            format,
        } => cmd_check(delta, dbar, sbar, format),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: some values could not be computed; see the flags in the output");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
