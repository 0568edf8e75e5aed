//! Flat `key = value` run configuration.
//!
//! One key per line, `#` starts a comment. Keys:
//!
//! | key            | value                                   | default          |
//! |----------------|-----------------------------------------|------------------|
//! | `seq_len`      | even integer >= 2                       | 64               |
//! | `dim`          | integer, multiple of `heads`            | 64               |
//! | `heads`        | integer >= 1                            | 1                |
//! | `format`       | `Q<i>.<f>`                              | `Q8.8`           |
//! | `rho_b`        | one value or a comma list in (-1, 1)    | 0.3              |
//! | `tau_h`        | one value or a comma list, >= 0         | 0                |
//! | `pruned_logit` | `exclude` or `zero`                     | `exclude`        |
//! | `seed`         | unsigned integer                        | 0                |
//! | `simulate`     | `true` or `false`                       | false            |
//! | `distribution` | `gaussian(m,s)` or `uniform(a,b)`       | `gaussian(0,4)`  |
//! | `q_path`, `k_path`, `v_path` | HDPT files (all three or none) | synthetic |
//! | `out_dir`      | directory for artifacts                 | `out`            |
//!
//! Synthetic Q, K and V use seeds `seed`, `seed + 1` and `seed + 2`.
//! Relative paths are resolved against the config file's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use hdp::attention_ref::{AttentionConfig, PrunedLogit};
use hdp::fxp::FxpFormat;
use hdp::hdp::PruneParams;
use hdp::tensorio::{gen_synthetic, load_tensor_expecting, Distribution, Matrix};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    Synthetic(Distribution),
    Files { q: PathBuf, k: PathBuf, v: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seq_len: usize,
    pub dim: usize,
    pub heads: usize,
    pub format: FxpFormat,
    pub rho_b: Vec<f64>,
    pub tau_h: Vec<f64>,
    pub pruned_logit: PrunedLogit,
    pub seed: u64,
    pub simulate: bool,
    pub input: InputSource,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seq_len: 64,
            dim: 64,
            heads: 1,
            format: FxpFormat::Q8_8,
            rho_b: vec![0.3],
            tau_h: vec![0.0],
            pruned_logit: PrunedLogit::Exclude,
            seed: 0,
            simulate: false,
            input: InputSource::Synthetic(Distribution::Gaussian { mean: 0.0, std: 4.0 }),
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub rho_b: Option<Vec<f64>>,
    pub tau_h: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub simulate: bool,
    pub format: Option<String>,
    pub pruned_logit: Option<String>,
}

fn field(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

pub fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    let list = value
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| field(key, format!("{s:?} is not a number"))))
        .collect::<Result<Vec<_>, _>>()?;
    if list.is_empty() {
        return Err(field(key, "empty list"));
    }
    Ok(list)
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(field(key, format!("{other:?} is not a boolean"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| field(key, format!("{value:?} is not a valid number")))
}

impl RunConfig {
    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        let (mut q, mut k, mut v) = (None, None, None);
        let mut dist = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(field(key, "given more than once"));
            }
            let path = |v: &str| base.join(v);
            match key {
                "seq_len" => cfg.seq_len = parse_num(key, value)?,
                "dim" => cfg.dim = parse_num(key, value)?,
                "heads" => cfg.heads = parse_num(key, value)?,
                "format" => cfg.format = value.parse().map_err(|e| field(key, e))?,
                "rho_b" => cfg.rho_b = parse_list(key, value)?,
                "tau_h" => cfg.tau_h = parse_list(key, value)?,
                "pruned_logit" => cfg.pruned_logit = value.parse().map_err(|e| field(key, e))?,
                "seed" => cfg.seed = parse_num(key, value)?,
                "simulate" => cfg.simulate = parse_bool(key, value)?,
                "distribution" => dist = Some(value.parse::<Distribution>().map_err(|e| field(key, e))?),
                "q_path" => q = Some(path(value)),
                "k_path" => k = Some(path(value)),
                "v_path" => v = Some(path(value)),
                "out_dir" => cfg.out_dir = path(value),
                other => return Err(field(other, "unknown key")),
            }
        }
        match (q, k, v) {
            (Some(q), Some(k), Some(v)) => {
                if dist.is_some() {
                    return Err(field("distribution", "cannot be combined with q_path/k_path/v_path"));
                }
                cfg.input = InputSource::Files { q, k, v };
            }
            (None, None, None) => {
                if let Some(d) = dist {
                    cfg.input = InputSource::Synthetic(d);
                }
            }
            _ => return Err(field("q_path", "q_path, k_path and v_path must be given together")),
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Loads the file if given, applies overrides and validates.
    pub fn resolve(path: Option<&Path>, o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(r) = &o.rho_b {
            cfg.rho_b = r.clone();
        }
        if let Some(t) = &o.tau_h {
            cfg.tau_h = t.clone();
        }
        if let Some(s) = o.seed {
            cfg.seed = s;
        }
        if let Some(d) = &o.out_dir {
            cfg.out_dir = d.clone();
        }
        if o.simulate {
            cfg.simulate = true;
        }
        if let Some(f) = &o.format {
            cfg.format = f.parse().map_err(|e| field("format", e))?;
        }
        if let Some(m) = &o.pruned_logit {
            cfg.pruned_logit = m.parse().map_err(|e| field("pruned_logit", e))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seq_len < 2 || self.seq_len % 2 != 0 {
            return Err(field("seq_len", format!("must be even and >= 2, got {}", self.seq_len)));
        }
        if self.heads == 0 {
            return Err(field("heads", "must be >= 1"));
        }
        if self.dim == 0 || self.dim % self.heads != 0 {
            return Err(field("dim", format!("{} is not divisible into {} heads", self.dim, self.heads)));
        }
        if self.dim / self.heads < 2 {
            return Err(field("dim", "head dimension must be >= 2"));
        }
        if self.simulate && (self.seq_len % 8 != 0 || (self.dim / self.heads) % 8 != 0) {
            return Err(field("simulate", "needs seq_len and head dimension to be multiples of 8"));
        }
        for &r in &self.rho_b {
            if !(r > -1.0 && r < 1.0) {
                return Err(field("rho_b", format!("{r} is outside (-1, 1)")));
            }
        }
        for &t in &self.tau_h {
            if t.is_nan() || t < 0.0 {
                return Err(field("tau_h", format!("{t} must be >= 0")));
            }
        }
        if let InputSource::Synthetic(d) = &self.input {
            d.validate().map_err(|e| field("distribution", e))?;
        }
        Ok(())
    }

    pub fn attention(&self) -> Result<AttentionConfig, CliError> {
        AttentionConfig::new(self.seq_len, self.dim, self.heads, self.format).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn params(&self, rho_b: f64, tau_h: f64) -> Result<PruneParams, CliError> {
        Ok(PruneParams::new(rho_b, tau_h)
            .map_err(|e| CliError::Config(e.to_string()))?
            .with_pruned_logit(self.pruned_logit))
    }

    /// The single `(rho_b, tau_h)` pair of a plain run.
    pub fn single_point(&self) -> Result<(f64, f64), CliError> {
        match (self.rho_b.as_slice(), self.tau_h.as_slice()) {
            ([r], [t]) => Ok((*r, *t)),
            _ => Err(CliError::Config("rho_b/tau_h: run takes exactly one value each; use sweep for grids".into())),
        }
    }

    /// `(Q, K, V)` from files or the synthetic generator.
    pub fn inputs(&self) -> Result<(Matrix, Matrix, Matrix), CliError> {
        let (q, k, v) = match &self.input {
            InputSource::Files { q, k, v } => {
                let load = |p: &PathBuf| load_tensor_expecting(p, self.format).map_err(CliError::from);
                (load(q)?, load(k)?, load(v)?)
            }
            InputSource::Synthetic(dist) => {
                let g = |off: u64| {
                    gen_synthetic(self.seq_len, self.dim, *dist, self.seed.wrapping_add(off), self.format)
                        .map_err(CliError::from)
                };
                (g(0)?, g(1)?, g(2)?)
            }
        };
        for (name, m) in [("q_path", &q), ("k_path", &k), ("v_path", &v)] {
            if m.rows() != self.seq_len || m.cols() != self.dim {
                return Err(field(
                    name,
                    format!("tensor is {}x{}, config says {}x{}", m.rows(), m.cols(), self.seq_len, self.dim),
                ));
            }
        }
        Ok((q, k, v))
    }
}
