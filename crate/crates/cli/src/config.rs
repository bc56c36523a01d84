//! Run configuration files and their merge with command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use spolab::harness::{Ensemble, ExperimentConfig, Preset, Signal};
use spolab::moreau::{LossName, RegName};
use spolab::ScalarDist;

/// Marks an error as a problem with the user's input (exit code 1).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => vec![s],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Optional replacements for the fields of an experiment.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub n: Option<usize>,
    pub delta: Option<f64>,
    pub lambda_grid: Option<Vec<f64>>,
    pub loss: Option<OneOrMany>,
    pub reg: Option<String>,
    pub noise: Option<String>,
    pub signal: Option<String>,
    pub ensemble: Option<Ensemble>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub notes: Option<Vec<String>>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Option<String>,
    pub values: Option<Vec<f64>>,
}

/// Contents of a TOML run file.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    #[serde(default)]
    pub experiment: Overrides,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> anyhow::Result<Self> {
        toml::from_str(text).map_err(|e| {
            let at = e
                .span()
                .map(|s| {
                    let (l, c) = line_col(text, s.start);
                    format!(" at line {l}, column {c}")
                })
                .unwrap_or_default();
            config_err(format!("{}{at}: {}", origin.display(), e.message().trim()))
        })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }
}

/// Takes the config value when present, warning if a flag said something else.
fn prefer<T: PartialEq + fmt::Debug>(
    name: &str,
    config: Option<T>,
    flag: Option<T>,
    warnings: &mut Vec<String>,
) -> Option<T> {
    match (config, flag) {
        (Some(c), Some(f)) => {
            if c != f {
                warnings.push(format!(
                    "config value {c:?} for `{name}` overrides the flag value {f:?}"
                ));
            }
            Some(c)
        }
        (c, f) => c.or(f),
    }
}

impl Overrides {
    /// Field-wise merge with `config` winning on conflict.
    pub fn under(self, config: Overrides, warnings: &mut Vec<String>) -> Overrides {
        Overrides {
            n: prefer("n", config.n, self.n, warnings),
            delta: prefer("delta", config.delta, self.delta, warnings),
            lambda_grid: prefer(
                "lambda_grid",
                config.lambda_grid,
                self.lambda_grid,
                warnings,
            ),
            loss: prefer("loss", config.loss, self.loss, warnings),
            reg: prefer("reg", config.reg, self.reg, warnings),
            noise: prefer("noise", config.noise, self.noise, warnings),
            signal: prefer("signal", config.signal, self.signal, warnings),
            ensemble: prefer("ensemble", config.ensemble, self.ensemble, warnings),
            trials: prefer("trials", config.trials, self.trials, warnings),
            seed: prefer("seed", config.seed, self.seed, warnings),
            tol: prefer("tol", config.tol, self.tol, warnings),
            max_iter: prefer("max_iter", config.max_iter, self.max_iter, warnings),
            notes: prefer("notes", config.notes, self.notes, warnings),
        }
    }

    /// One configuration per requested loss, starting from `base`.
    pub fn apply(self, base: ExperimentConfig) -> anyhow::Result<Vec<ExperimentConfig>> {
        let mut cfg = base;
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            };
        }
        set!(n);
        set!(delta);
        set!(lambda_grid);
        set!(ensemble);
        set!(trials);
        set!(seed);
        set!(tol);
        set!(max_iter);
        set!(notes);
        if let Some(r) = self.reg {
            cfg.reg = r
                .parse::<RegName>()
                .map_err(|e| config_err(format!("reg: {e}")))?;
        }
        if let Some(z) = self.noise {
            cfg.noise = z
                .parse::<ScalarDist>()
                .map_err(|e| config_err(format!("noise: {e}")))?;
        }
        if let Some(x) = self.signal {
            cfg.signal = x
                .parse::<Signal>()
                .map_err(|e| config_err(format!("signal: {e}")))?;
        }
        let losses = match self.loss {
            None => vec![cfg.loss],
            Some(l) => l
                .into_vec()
                .iter()
                .map(|s| {
                    s.parse::<LossName>()
                        .map_err(|e| config_err(format!("loss: {e}")))
                })
                .collect::<anyhow::Result<_>>()?,
        };
        if losses.is_empty() {
            return Err(config_err("at least one loss is required"));
        }
        Ok(losses
            .into_iter()
            .map(|loss| ExperimentConfig {
                loss,
                ..cfg.clone()
            })
            .collect())
    }
}

/// Starting point before overrides: the named preset, or the ridge example.
pub fn base_config(preset: Option<&str>) -> anyhow::Result<ExperimentConfig> {
    match preset {
        None => Ok(Preset::RidgeLs.config()),
        Some(name) => name
            .parse::<Preset>()
            .map(|p| p.config())
            .map_err(|e| config_err(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_carry_position() {
        let err = RunConfig::parse(
            "preset = \"ls\"\n[experiment]\ndelta = = 2\n",
            Path::new("run.toml"),
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(err.downcast_ref::<ConfigError>().is_some());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err =
            RunConfig::parse("[experiment]\ndeltta = 2\n", Path::new("run.toml")).unwrap_err();
        assert!(err.to_string().contains("deltta"));
    }

    #[test]
    fn config_wins_with_warning() {
        let flags = Overrides {
            delta: Some(3.0),
            n: Some(64),
            ..Default::default()
        };
        let file = Overrides {
            delta: Some(2.0),
            ..Default::default()
        };
        let mut warnings = Vec::new();
        let merged = flags.under(file, &mut warnings);
        assert_eq!(merged.delta, Some(2.0));
        assert_eq!(merged.n, Some(64));
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn one_config_per_loss() {
        let o = Overrides {
            loss: Some(OneOrMany::Many(vec!["abs".into(), "square".into()])),
            ..Default::default()
        };
        let cfgs = o.apply(Preset::Genlasso.config()).unwrap();
        assert_eq!(cfgs.len(), 2);
        assert_eq!(cfgs[0].loss.to_string(), "abs");
        let bad = Overrides {
            reg: Some("l7".into()),
            ..Default::default()
        };
        assert!(bad.apply(Preset::Ls.config()).is_err());
    }

    #[test]
    fn full_file() {
        let text = r#"
preset = "lad-l1"
[experiment]
delta = 0.7
lambda_grid = [0.5, 1.0]
loss = ["abs", "huber(1)"]
ensemble = "bernoulli"
[output]
format = "csv"
[sweep]
axis = "delta"
values = [0.7, 1.2]
"#;
        let rc = RunConfig::parse(text, Path::new("x.toml")).unwrap();
        assert_eq!(rc.output.format, Some(Format::Csv));
        let cfgs = rc
            .experiment
            .apply(base_config(rc.preset.as_deref()).unwrap())
            .unwrap();
        assert_eq!(cfgs.len(), 2);
        assert_eq!(cfgs[1].ensemble, Ensemble::Bernoulli);
        assert_eq!(cfgs[0].n, 768);
    }
}
