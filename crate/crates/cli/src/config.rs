//! Flag and config-file resolution.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chainrace::tradeoff::TargetMode;
use chainrace::ProtocolParams;
use clap::Args;

/// Options shared by every subcommand. Each may also come from the config
/// file under the same name; flags take precedence.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Flat `key = value` file mirroring these flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Named parameter set: bitcoin (λ = 1/600, Δ = 10) or etc (λ = 1/13, Δ = 2).
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Adversarial mining rate, e.g. 1/2400.
    #[arg(long, global = true)]
    pub a: Option<String>,
    /// Honest mining rate.
    #[arg(long, global = true)]
    pub h: Option<String>,
    /// Total mining rate.
    #[arg(long, global = true)]
    pub lambda: Option<String>,
    /// Adversarial fraction of the mining rate.
    #[arg(long, global = true)]
    pub beta: Option<String>,
    /// Delay bound in seconds.
    #[arg(long, global = true)]
    pub delta: Option<String>,
    /// Confirmation depth.
    #[arg(long, global = true)]
    pub k: Option<String>,
    /// Largest confirmation depth of a sweep.
    #[arg(long = "k-max", global = true)]
    pub k_max: Option<String>,
    /// height1 or general.
    #[arg(long, global = true)]
    pub target: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// csv or json.
    #[arg(long, global = true)]
    pub format: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    #[arg(long, global = true)]
    pub runs: Option<String>,
    /// Numerical tolerance (value-iteration bracket width).
    #[arg(long, global = true)]
    pub tol: Option<String>,
}

/// Output encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Resolved lookup over flags and the config file.
#[derive(Debug, Clone)]
pub struct Settings {
    flags: HashMap<&'static str, String>,
    file: HashMap<String, String>,
    pub output: Option<PathBuf>,
}

/// Parses `key = value` lines. Blank lines and `#` comments are ignored.
pub fn parse_config(text: &str) -> Result<HashMap<String, String>> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key = value, got {line:?}", i + 1);
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

/// Parses a decimal or a ratio such as `1/600`.
pub fn parse_rate(text: &str) -> Result<f64> {
    let value = match text.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num
                .trim()
                .parse()
                .with_context(|| format!("bad numerator in {text:?}"))?;
            let den: f64 = den
                .trim()
                .parse()
                .with_context(|| format!("bad denominator in {text:?}"))?;
            if den == 0.0 {
                bail!("zero denominator in {text:?}");
            }
            num / den
        }
        None => text.trim().parse().with_context(|| format!("not a number: {text:?}"))?,
    };
    if !value.is_finite() {
        bail!("not a finite number: {text:?}");
    }
    Ok(value)
}

const PRESETS: [(&str, &str, &str); 2] = [("bitcoin", "1/600", "10"), ("etc", "1/13", "2")];

impl Settings {
    pub fn new(common: &CommonArgs, extra: &[(&'static str, Option<String>)]) -> Result<Self> {
        let file = match &common.config {
            Some(path) => read_config(path)?,
            None => HashMap::new(),
        };
        let mut flags = HashMap::new();
        let pairs = [
            ("preset", &common.preset),
            ("a", &common.a),
            ("h", &common.h),
            ("lambda", &common.lambda),
            ("beta", &common.beta),
            ("delta", &common.delta),
            ("k", &common.k),
            ("k-max", &common.k_max),
            ("target", &common.target),
            ("format", &common.format),
            ("seed", &common.seed),
            ("runs", &common.runs),
            ("tol", &common.tol),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                flags.insert(key, v.clone());
            }
        }
        for (key, value) in extra {
            if let Some(v) = value {
                flags.insert(key, v.clone());
            }
        }
        let output = common.output.clone().or_else(|| file.get("output").map(PathBuf::from));
        Ok(Self { flags, file, output })
    }

    /// Fills `key` when neither a flag nor the file set it.
    pub fn set_default(&mut self, key: &'static str, value: &str) {
        if self.get(key).is_none() {
            self.flags.insert(key, value.to_string());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.flags.get(key).or_else(|| self.file.get(key)).map(String::as_str)
    }

    pub fn number<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| anyhow::anyhow!("--{key}: cannot parse {v:?}")),
        }
    }

    pub fn rate(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| parse_rate(v).with_context(|| format!("--{key}")))
            .transpose()
    }

    /// `--k`, else `--k-max`, else `default`.
    pub fn depth(&self, default: u32) -> Result<u32> {
        let k = match self.number::<u32>("k")? {
            Some(k) => k,
            None => self.number::<u32>("k-max")?.unwrap_or(default),
        };
        if k == 0 {
            bail!("k must be at least 1");
        }
        Ok(k)
    }

    /// `--k-max`, else `--k`, else `default`.
    pub fn depth_max(&self, default: u32) -> Result<u32> {
        let k = match self.number::<u32>("k-max")? {
            Some(k) => k,
            None => self.number::<u32>("k")?.unwrap_or(default),
        };
        if k == 0 {
            bail!("k-max must be at least 1");
        }
        Ok(k)
    }

    pub fn params(&self, k: u32) -> Result<ProtocolParams> {
        let preset = match self.get("preset") {
            None => None,
            Some(name) => Some(
                PRESETS
                    .iter()
                    .find(|p| p.0 == name)
                    .ok_or_else(|| anyhow::anyhow!("unknown preset {name:?}; expected bitcoin or etc"))?,
            ),
        };
        let (a, h) = (self.rate("a")?, self.rate("h")?);
        let lambda = match self.rate("lambda")? {
            Some(l) => Some(l),
            None => preset.map(|p| parse_rate(p.1)).transpose()?,
        };
        let beta = self.rate("beta")?;
        let delta = match self.rate("delta")? {
            Some(d) => d,
            None => match preset {
                Some(p) => parse_rate(p.2)?,
                None => bail!("--delta is required"),
            },
        };
        let explicit = a.is_some() || h.is_some();
        let mixed = lambda.is_some() || beta.is_some();
        let params = match (a, h, lambda, beta) {
            (Some(a), Some(h), None, None) if preset.is_none() => ProtocolParams::new(a, h, delta, k)?,
            (None, None, Some(lambda), Some(beta)) => ProtocolParams::from_lambda_beta(lambda, beta, delta, k)?,
            _ if explicit && mixed => bail!("give either --a and --h, or --lambda and --beta (or a preset), not both"),
            _ if explicit => bail!("--a and --h must be given together"),
            _ => bail!("--beta with --lambda or --preset, or --a and --h, is required"),
        };
        Ok(params)
    }

    pub fn target(&self) -> Result<TargetMode> {
        Ok(TargetMode::from_name(self.get("target").unwrap_or("height1"))?)
    }

    pub fn format(&self, default: Format) -> Result<Format> {
        match self.get("format") {
            None => Ok(default),
            Some("csv") => Ok(Format::Csv),
            Some("json") => Ok(Format::Json),
            Some(other) => bail!("unknown format {other:?}; expected csv or json"),
        }
    }

    pub fn tol(&self, default: f64) -> Result<f64> {
        let tol = self.number::<f64>("tol")?.unwrap_or(default);
        if !(tol > 0.0 && tol < 1.0) {
            bail!("--tol must lie in (0, 1)");
        }
        Ok(tol)
    }
}

fn read_config(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in {}", path.display()))
}
