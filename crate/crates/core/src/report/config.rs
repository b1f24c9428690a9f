use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::dist::TailedDistribution;
use crate::error::{Error, Result};
use crate::fluctuations::{plan_for, DEFAULT_KS_THRESHOLD, DEFAULT_RHO};
use crate::thresholds::d_n;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    TvScan,
    RatioScan,
    Fluct,
    Counterexample,
    OracleCheck,
    MarginalsCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::TvScan,
        Experiment::RatioScan,
        Experiment::Fluct,
        Experiment::Counterexample,
        Experiment::OracleCheck,
        Experiment::MarginalsCheck,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::TvScan => "tv-scan",
            Experiment::RatioScan => "ratio-scan",
            Experiment::Fluct => "fluct",
            Experiment::Counterexample => "counterexample",
            Experiment::OracleCheck => "oracle-check",
            Experiment::MarginalsCheck => "marginals-check",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

/// Where x values come from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum XRule {
    Absolute(Vec<f64>),
    /// multiples of d_n
    DnMultiples(Vec<f64>),
}

impl XRule {
    pub fn values(&self, dist: &TailedDistribution, n: usize) -> Result<Vec<f64>> {
        match self {
            XRule::Absolute(v) => Ok(v.clone()),
            XRule::DnMultiples(c) => {
                let d = d_n(dist, n)?;
                Ok(c.iter().map(|c| c * d).collect())
            }
        }
    }
}

impl FromStr for XRule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
        if parts.is_empty() {
            return Err("empty x list".into());
        }
        let rel = parts.iter().filter(|p| p.ends_with('d')).count();
        if rel != 0 && rel != parts.len() {
            return Err("mix of absolute values and d_n multiples".into());
        }
        let nums = parts
            .iter()
            .map(|p| {
                let body = p.strip_suffix('d').unwrap_or(p);
                let body = if body.is_empty() { "1" } else { body };
                match body.parse::<f64>() {
                    Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
                    _ => Err(format!("bad x value `{p}`")),
                }
            })
            .collect::<std::result::Result<Vec<f64>, String>>()?;
        Ok(if rel > 0 { XRule::DnMultiples(nums) } else { XRule::Absolute(nums) })
    }
}

impl fmt::Display for XRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (v, suffix) = match self {
            XRule::Absolute(v) => (v, ""),
            XRule::DnMultiples(v) => (v, "d"),
        };
        let s: Vec<String> = v.iter().map(|x| format!("{x}{suffix}")).collect();
        write!(f, "{}", s.join(","))
    }
}

/// Interval length |Delta|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DeltaSpec {
    Inf,
    Abs(f64),
    BnMultiple(f64),
    PsiMultiple(f64),
}

impl DeltaSpec {
    pub fn resolve(&self, dist: &TailedDistribution, n: usize, x: f64) -> Result<f64> {
        match *self {
            DeltaSpec::Inf => Ok(f64::INFINITY),
            DeltaSpec::Abs(s) => Ok(s),
            DeltaSpec::BnMultiple(a) => {
                let plan = plan_for(dist, n, x)?;
                if !(plan.b_n > 0.0) {
                    return Err(Error::param("delta", "b_n is zero for n = 1"));
                }
                Ok(a * plan.b_n)
            }
            DeltaSpec::PsiMultiple(a) => Ok(a * dist.residual_scale_psi(x)?),
        }
    }
}

impl FromStr for DeltaSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") {
            return Ok(DeltaSpec::Inf);
        }
        let num = |b: &str| match b.trim().parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
            _ => Err(format!("bad delta coefficient `{b}`")),
        };
        if let Some((a, unit)) = t.split_once('*') {
            return match unit.trim() {
                "b_n" | "bn" => Ok(DeltaSpec::BnMultiple(num(a)?)),
                "psi" => Ok(DeltaSpec::PsiMultiple(num(a)?)),
                u => Err(format!("unknown delta unit `{u}` (use b_n or psi)")),
            };
        }
        Ok(DeltaSpec::Abs(num(t)?))
    }
}

impl fmt::Display for DeltaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaSpec::Inf => write!(f, "inf"),
            DeltaSpec::Abs(s) => write!(f, "{s}"),
            DeltaSpec::BnMultiple(a) => write!(f, "{a}*b_n"),
            DeltaSpec::PsiMultiple(a) => write!(f, "{a}*psi"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Exact,
    Mc,
}

/// A fully validated run description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub dist: String,
    pub n_list: Vec<usize>,
    pub x: XRule,
    pub delta: DeltaSpec,
    pub samples: u64,
    pub ref_samples: u64,
    pub seed: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub method: MethodKind,
    pub rho: f64,
    pub threshold: f64,
    pub check: bool,
    pub plot: Option<PathBuf>,
    /// block indices for the counterexample experiment
    pub k_list: Vec<u64>,
    /// truncation used by oracle-check when the law has unbounded support
    pub kmax: u64,
}

/// Keys accepted in config files and as CLI overrides.
pub const KEYS: [&str; 18] = [
    "experiment", "dist", "n", "x", "delta", "samples", "ref-samples", "seed", "workers", "out", "format",
    "method", "rho", "threshold", "check", "plot", "k", "kmax",
];

/// Where a raw value came from, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    File(usize),
    Cli,
    Env,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File(l) => write!(f, "line {l}"),
            Origin::Cli => write!(f, "command line"),
            Origin::Env => write!(f, "environment"),
        }
    }
}

/// Layered key=value settings; later layers override earlier ones.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    values: BTreeMap<String, (String, Origin)>,
}

impl RawConfig {
    /// Parse a flat `key = value` file. `#` starts a comment.
    pub fn parse_file(text: &str) -> Result<RawConfig> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line_no}: expected `key = value`, got `{body}`")))?;
            let key = k.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("line {line_no}: unknown key `{}`", k.trim())));
            }
            if raw.values.contains_key(&key) {
                return Err(Error::Config(format!("line {line_no}: duplicate key `{key}`")));
            }
            raw.values.insert(key, (v.trim().to_string(), Origin::File(line_no)));
        }
        Ok(raw)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>, origin: Origin) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("{origin}: unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), (value.into(), origin));
        Ok(())
    }

    /// Set only when absent.
    pub fn set_default(&mut self, key: &str, value: impl Into<String>, origin: Origin) -> Result<()> {
        if !self.values.contains_key(key) {
            self.set(key, value, origin)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    fn parsed<T, F>(&self, key: &str, f: F) -> Result<Option<T>>
    where
        F: Fn(&str) -> std::result::Result<T, String>,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some((v, origin)) => f(v).map(Some).map_err(|m| Error::Config(format!("{origin}: key `{key}`: {m}"))),
        }
    }

    fn required<T, F>(&self, key: &str, f: F) -> Result<T>
    where
        F: Fn(&str) -> std::result::Result<T, String>,
    {
        self.parsed(key, f)?.ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    pub fn build(&self) -> Result<ExperimentConfig> {
        let experiment: Experiment = self.required("experiment", |s| s.parse())?;
        let default_dist = match experiment {
            Experiment::Counterexample => Some("counterexample:alpha=3,eps=0.5"),
            _ => None,
        };
        let dist = match (self.get("dist"), default_dist) {
            (Some(_), _) => self.required("dist", |s| {
                TailedDistribution::parse(s).map(|d| d.spec().to_string()).map_err(|e| e.to_string())
            })?,
            (None, Some(d)) => d.to_string(),
            (None, None) => return Err(Error::Config("missing required key `dist`".into())),
        };
        let n_list = match experiment {
            Experiment::Counterexample => self.parsed("n", list::<usize>)?.unwrap_or_else(|| vec![1]),
            _ => self.required("n", list::<usize>)?,
        };
        if n_list.contains(&0) {
            return Err(Error::Config("key `n`: every n must be positive".into()));
        }
        let x = match experiment {
            Experiment::Counterexample => self.parsed("x", |s| s.parse())?.unwrap_or(XRule::DnMultiples(vec![1.0])),
            _ => self.required("x", |s| s.parse())?,
        };
        let delta = self.parsed("delta", |s| s.parse())?.unwrap_or(DeltaSpec::Inf);
        let samples = self.parsed("samples", positive::<u64>)?.unwrap_or(100_000);
        let ref_samples = self.parsed("ref-samples", positive::<u64>)?.unwrap_or(samples);
        let seed = self.parsed("seed", |s| s.parse::<u64>().map_err(|e| e.to_string()))?.unwrap_or(0);
        let workers = self.parsed("workers", positive::<usize>)?.unwrap_or(1);
        let out = self.parsed("out", |s| Ok(PathBuf::from(s)))?;
        let default_format = match experiment {
            Experiment::RatioScan | Experiment::TvScan => Format::Csv,
            _ => Format::Json,
        };
        let format = self
            .parsed("format", |s| match s {
                "csv" => Ok(Format::Csv),
                "json" => Ok(Format::Json),
                _ => Err(format!("unknown format `{s}` (csv or json)")),
            })?
            .unwrap_or(default_format);
        let method = self
            .parsed("method", |s| match s {
                "exact" => Ok(MethodKind::Exact),
                "mc" => Ok(MethodKind::Mc),
                _ => Err(format!("unknown method `{s}` (exact or mc)")),
            })?
            .unwrap_or(if experiment == Experiment::OracleCheck { MethodKind::Exact } else { MethodKind::Mc });
        let rho = self.parsed("rho", |s| match s.parse::<f64>() {
            Ok(r) if r > 1.0 => Ok(r),
            _ => Err("must be a number above 1".into()),
        })?;
        let threshold = self.parsed("threshold", positive::<f64>)?.unwrap_or(DEFAULT_KS_THRESHOLD);
        let check = self.parsed("check", parse_bool)?.unwrap_or(experiment == Experiment::OracleCheck);
        let plot = self.parsed("plot", |s| Ok(PathBuf::from(s)))?;
        let k_list = self.parsed("k", list::<u64>)?.unwrap_or_else(|| vec![10, 20]);
        let kmax = self.parsed("kmax", positive::<u64>)?.unwrap_or(60);
        Ok(ExperimentConfig {
            experiment,
            dist,
            n_list,
            x,
            delta,
            samples,
            ref_samples,
            seed,
            workers,
            out,
            format,
            method,
            rho: rho.unwrap_or(DEFAULT_RHO),
            threshold,
            check,
            plot,
            k_list,
            kmax,
        })
    }
}

fn list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    let v = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|_| format!("bad list entry `{p}`")))
        .collect::<std::result::Result<Vec<T>, String>>()?;
    if v.is_empty() {
        Err("empty list".into())
    } else {
        Ok(v)
    }
}

fn positive<T: FromStr + PartialOrd + Default>(s: &str) -> std::result::Result<T, String> {
    match s.parse::<T>() {
        Ok(v) if v > T::default() => Ok(v),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("`{s}` is not a boolean")),
    }
}
