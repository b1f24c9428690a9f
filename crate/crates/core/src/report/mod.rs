//! Experiment runner: config handling, scans and artifact writers.

mod config;
mod svg;

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

pub use config::{DeltaSpec, Experiment, ExperimentConfig, Format, MethodKind, Origin, RawConfig, XRule, KEYS};
pub use svg::ecdf_overlay;

use crate::dist::{Family, TailedDistribution};
use crate::error::{Error, Result};
use crate::fluctuations::{counterexample_mass_ratio, verify_regime, FluctOptions, RegimeVerdict};
use crate::lattice::{exact_conditional_law, exact_density_l1, exact_tv, EnumerationBudget, Pmf};
use crate::sampler::{ConditioningEvent, ProposalKind, SamplerOptions};
use crate::stats::ks_critical;
use crate::tv::{
    ratio_scan, smallest_marginals_check, tv_decomposition, tv_decomposition_pmf, MarginalsReport, McOptions, Method,
    RatioRow,
};

/// Tolerance of the oracle identity check.
pub const ORACLE_TOLERANCE: f64 = 1e-8;
/// |rho| / stderr above which a pair of small coordinates counts as correlated.
pub const CORRELATION_Z_LIMIT: f64 = 4.0;

pub const CSV_RATIO: [&str; 8] = ["n", "x", "prob_sum", "n_times_tail", "ratio", "abs_err", "stderr", "exact"];
pub const CSV_TV: [&str; 10] = [
    "n", "x", "delta", "term_ratio", "term_collective", "tv_l1", "tv_sup", "se_ratio", "se_collective", "accept_rate",
];
pub const CSV_FLUCT: [&str; 9] = ["n", "x", "delta", "regime", "scale", "ks_stat", "cond_samples", "ref_samples", "seed"];

/// What a run produced.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    /// rendered artifact (CSV or JSON); written to `written` when an output path was given
    pub payload: String,
    pub written: Vec<PathBuf>,
    /// one line per check that did not pass
    pub failures: Vec<String>,
    /// human-readable notes for stderr
    pub notes: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            4
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: &'static str,
    dist: &'a str,
    n: &'a [usize],
    x: String,
    delta: String,
    method: MethodKind,
    sampler: &'static str,
    samples: u64,
    seed: u64,
    workers: usize,
}

fn provenance(cfg: &ExperimentConfig) -> Provenance<'_> {
    let sampler = match (cfg.experiment, cfg.method) {
        (Experiment::Counterexample, _) | (Experiment::OracleCheck, _) => "none",
        (Experiment::RatioScan | Experiment::TvScan, MethodKind::Exact) => "none",
        _ => "rejection",
    };
    Provenance {
        tool: "bigjump",
        version: env!("CARGO_PKG_VERSION"),
        experiment: cfg.experiment.name(),
        dist: &cfg.dist,
        n: &cfg.n_list,
        x: cfg.x.to_string(),
        delta: cfg.delta.to_string(),
        method: cfg.method,
        sampler,
        samples: cfg.samples,
        seed: cfg.seed,
        workers: cfg.workers,
    }
}

fn csv_header_lines(cfg: &ExperimentConfig) -> String {
    let p = provenance(cfg);
    let n: Vec<String> = p.n.iter().map(|n| n.to_string()).collect();
    format!(
        "# {} {} experiment={} dist={} n={} x={} delta={} method={:?} sampler={} samples={} seed={} workers={}\n# generated {}\n",
        p.tool,
        p.version,
        p.experiment,
        p.dist,
        n.join(","),
        p.x,
        p.delta,
        p.method,
        p.sampler,
        p.samples,
        p.seed,
        p.workers,
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    )
}

fn render_csv(cfg: &ExperimentConfig, header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?)
        .map_err(|e| Error::Io(e.to_string()))?;
    Ok(csv_header_lines(cfg) + &body)
}

fn render_json<T: Serialize>(cfg: &ExperimentConfig, rows: &T) -> Result<String> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        provenance: Provenance<'a>,
        rows: &'a T,
    }
    let doc = Doc { provenance: provenance(cfg), rows };
    serde_json::to_string_pretty(&doc).map(|s| s + "\n").map_err(|e| Error::Io(e.to_string()))
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Row seed: the configured seed for the first point, then distinct offsets.
fn row_seed(seed: u64, row: usize) -> u64 {
    seed.wrapping_add((row as u64).wrapping_mul(0x9E37_79B9))
}

struct Point {
    n: usize,
    x: f64,
    delta: f64,
    seed: u64,
}

fn grid(cfg: &ExperimentConfig, dist: &TailedDistribution) -> Result<Vec<Point>> {
    let mut pts = Vec::new();
    for &n in &cfg.n_list {
        for x in cfg.x.values(dist, n)? {
            let delta = cfg.delta.resolve(dist, n, x)?;
            let seed = row_seed(cfg.seed, pts.len());
            pts.push(Point { n, x, delta, seed });
        }
    }
    Ok(pts)
}

fn sampler_options(cfg: &ExperimentConfig) -> SamplerOptions {
    SamplerOptions { workers: cfg.workers, ..Default::default() }
}

fn method(cfg: &ExperimentConfig, seed: u64) -> Method {
    match cfg.method {
        MethodKind::Exact => Method::Exact,
        MethodKind::Mc => Method::Mc(McOptions { samples: cfg.samples, seed, workers: cfg.workers, proposal: ProposalKind::Auto }),
    }
}

/// Run an experiment and write its artifacts.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let dist = TailedDistribution::parse(&cfg.dist)?;
    let mut out = match cfg.experiment {
        Experiment::RatioScan => run_ratio(cfg, &dist)?,
        Experiment::TvScan => run_tv(cfg, &dist)?,
        Experiment::Fluct => run_fluct(cfg, &dist)?,
        Experiment::Counterexample => run_counterexample(cfg, &dist)?,
        Experiment::OracleCheck => run_oracle(cfg, &dist)?,
        Experiment::MarginalsCheck => run_marginals(cfg, &dist)?,
    };
    if !cfg.check {
        out.failures.clear();
    }
    if let Some(path) = &cfg.out {
        std::fs::write(path, &out.payload)?;
        out.written.push(path.clone());
    }
    Ok(out)
}

fn run_ratio(cfg: &ExperimentConfig, dist: &TailedDistribution) -> Result<RunOutcome> {
    let mut rows: Vec<RatioRow> = Vec::new();
    for p in grid(cfg, dist)? {
        let scan = ratio_scan(dist, &[p.n], |_| Ok(vec![p.x]), p.delta, method(cfg, p.seed))?;
        rows.extend(scan.rows);
    }
    let payload = match cfg.format {
        Format::Json => render_json(cfg, &rows)?,
        Format::Csv => {
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        num(r.x),
                        num(r.prob_sum),
                        num(r.n_times_tail),
                        num(r.ratio),
                        num(r.abs_err),
                        num(r.stderr),
                        r.exact.to_string(),
                    ]
                })
                .collect();
            render_csv(cfg, &CSV_RATIO, &table)?
        }
    };
    Ok(RunOutcome { payload, ..Default::default() })
}

fn run_tv(cfg: &ExperimentConfig, dist: &TailedDistribution) -> Result<RunOutcome> {
    let mut reports = Vec::new();
    for p in grid(cfg, dist)? {
        let event = ConditioningEvent::new(p.x, p.delta)?;
        reports.push(tv_decomposition(dist, p.n, &event, method(cfg, p.seed))?);
    }
    let payload = match cfg.format {
        Format::Json => render_json(cfg, &reports)?,
        Format::Csv => {
            let table: Vec<Vec<String>> = reports
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        num(r.event.x),
                        num(r.event.delta_len),
                        num(r.term_ratio),
                        num(r.term_collective),
                        num(r.tv_l1),
                        num(r.tv_sup),
                        num(r.se_ratio),
                        num(r.se_collective),
                        num(r.accept_rate),
                    ]
                })
                .collect();
            render_csv(cfg, &CSV_TV, &table)?
        }
    };
    Ok(RunOutcome { payload, ..Default::default() })
}

fn run_fluct(cfg: &ExperimentConfig, dist: &TailedDistribution) -> Result<RunOutcome> {
    let mut verdicts: Vec<RegimeVerdict> = Vec::new();
    let mut out = RunOutcome::default();
    for p in grid(cfg, dist)? {
        let event = ConditioningEvent::new(p.x, p.delta)?;
        let opts = FluctOptions {
            batch: cfg.samples,
            ref_batch: cfg.ref_samples,
            seed: p.seed,
            rho: cfg.rho,
            threshold: cfg.threshold,
            sampler: sampler_options(cfg),
        };
        let (v, fs, reference) = verify_regime(dist, p.n, &event, None, &opts)?;
        if let (Some(path), true) = (&cfg.plot, verdicts.is_empty()) {
            let title = format!("{} n={} x={:.4} |Delta|={}: {}", v.dist, v.n, v.x, v.delta, v.regime_name);
            std::fs::write(path, ecdf_overlay(&title, &fs.scaled, &reference))?;
            out.written.push(path.clone());
        }
        if !v.passed {
            out.failures.push(format!(
                "fluct n={} x={} delta={}: KS {:.4} >= {} ({})",
                v.n, v.x, v.delta, v.ks_stat, v.threshold, v.regime_name
            ));
        }
        verdicts.push(v);
    }
    out.payload = match cfg.format {
        Format::Json if verdicts.len() == 1 => {
            serde_json::to_string_pretty(&verdicts[0]).map_err(|e| Error::Io(e.to_string()))? + "\n"
        }
        Format::Json => serde_json::to_string_pretty(&verdicts).map_err(|e| Error::Io(e.to_string()))? + "\n",
        Format::Csv => {
            let table: Vec<Vec<String>> = verdicts
                .iter()
                .map(|v| {
                    vec![
                        v.n.to_string(),
                        num(v.x),
                        num(v.delta),
                        v.regime_name.clone(),
                        num(v.scale),
                        num(v.ks_stat),
                        v.cond_samples.to_string(),
                        v.ref_samples.to_string(),
                        v.seed.to_string(),
                    ]
                })
                .collect();
            render_csv(cfg, &CSV_FLUCT, &table)?
        }
    };
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
struct CounterexampleRow {
    k: u64,
    x: f64,
    c: f64,
    window_lo: f64,
    window_hi: f64,
    ratio: f64,
    uniform_limit: f64,
}

fn run_counterexample(cfg: &ExperimentConfig, dist: &TailedDistribution) -> Result<RunOutcome> {
    let params = match dist.family() {
        Family::Counterexample(p) => p.clone(),
        _ => return Err(Error::MethodMismatch(format!("counterexample needs the counterexample family, got {}", dist.spec()))),
    };
    let mut out = RunOutcome::default();
    let mut rows = Vec::new();
    for &k in &cfg.k_list {
        let window = (params.epsilon, 1.0);
        let ratio = counterexample_mass_ratio(&params, k, window)?;
        let uniform_limit = 1.0 - params.epsilon;
        // the check confirms that the uniform limit fails
        if (ratio - uniform_limit).abs() < 1e-12 {
            out.failures.push(format!("counterexample k={k}: ratio {ratio} matches the uniform limit"));
        }
        rows.push(CounterexampleRow {
            k,
            x: params.d(k),
            c: params.c(k),
            window_lo: window.0,
            window_hi: window.1,
            ratio,
            uniform_limit,
        });
    }
    out.payload = match cfg.format {
        Format::Json => render_json(cfg, &rows)?,
        Format::Csv => {
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    [r.k as f64, r.x, r.c, r.window_lo, r.window_hi, r.ratio, r.uniform_limit].iter().map(|v| num(*v)).collect()
                })
                .collect();
            render_csv(cfg, &["k", "x", "c", "window_lo", "window_hi", "ratio", "uniform_limit"], &table)?
        }
    };
    Ok(out)
}

/// One point of the oracle identity check.
#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub n: usize,
    pub x: f64,
    pub delta: f64,
    pub ratio: f64,
    pub in_window: bool,
    /// decomposition terms from exact inputs; `None` outside the validity window
    pub decomposition_l1: Option<f64>,
    /// brute-force int |f1 - f2| d mu^n
    pub density_l1: f64,
    pub abs_diff: Option<f64>,
    /// distance between the swapped conditional law and mu^{n-1} x nu_x
    pub pushforward_l1: f64,
    pub pushforward_sup: f64,
    /// |decomposition - pushforward_l1|; zero on zeta-type laws, not in general
    pub pushforward_diff: Option<f64>,
    pub passed: bool,
}

/// Truncate unbounded lattice laws at `kmax` so they can be enumerated.
pub fn bounded_lattice(dist: &TailedDistribution, kmax: u64) -> Result<TailedDistribution> {
    if !dist.is_lattice() {
        return Err(Error::MethodMismatch(format!("oracle-check needs a lattice law, got {}", dist.spec())));
    }
    if dist.support_upper().is_some() {
        return Ok(dist.clone());
    }
    TailedDistribution::parse(&format!("{},kmax={kmax}", dist.spec()))
}

pub fn oracle_point(p: &Pmf, n: usize, event: &ConditioningEvent, budget: &EnumerationBudget) -> Result<OracleRow> {
    let density_l1 = exact_density_l1(p, n, event, budget)?;
    let law = exact_conditional_law(p, n, event, budget)?;
    let push = exact_tv(&law, p, budget)?;
    let ratio = law.event_mass / (n as f64 * p.event_mass(event));
    let decomposition = match tv_decomposition_pmf(p, n, event) {
        Ok(r) => Some(r.tv_l1),
        Err(Error::ValidityWindowViolated { .. }) => None,
        Err(e) => return Err(e),
    };
    let abs_diff = decomposition.map(|d| (d - density_l1).abs());
    Ok(OracleRow {
        n,
        x: event.x,
        delta: event.delta_len,
        ratio,
        in_window: decomposition.is_some(),
        decomposition_l1: decomposition,
        density_l1,
        abs_diff,
        pushforward_l1: push.tv_l1,
        pushforward_sup: push.tv_sup,
        pushforward_diff: decomposition.map(|d| (d - push.tv_l1).abs()),
        passed: abs_diff.is_none_or(|d| d < ORACLE_TOLERANCE),
    })
}

fn run_oracle(cfg: &ExperimentConfig, dist: &TailedDistribution) -> Result<RunOutcome> {
    if cfg.method != MethodKind::Exact {
        return Err(Error::MethodMismatch("oracle-check is exact only".into()));
    }
    let bounded = bounded_lattice(dist, cfg.kmax)?;
    let upper = bounded.support_upper().ok_or_else(|| Error::MethodMismatch("unbounded lattice".into()))?;
    let p = Pmf::from_dist(&bounded, upper as i64)?;
    let budget = EnumerationBudget::default();
    let mut out = RunOutcome::default();
    let mut rows = Vec::new();
    for pt in grid(cfg, &bounded)? {
        let event = ConditioningEvent::new(pt.x, pt.delta)?;
        let row = oracle_point(&p, pt.n, &event, &budget)?;
        if !row.passed {
            out.failures.push(format!(
                "oracle n={} x={} delta={}: |decomposition - density L1| = {:e}",
                row.n,
                row.x,
                row.delta,
                row.abs_diff.unwrap_or(f64::NAN)
            ));
        }
        if !row.in_window {
            out.notes.push(format!("n={} x={}: ratio {:.4} outside the validity window, skipped", row.n, row.x, row.ratio));
        }
        rows.push(row);
    }
    out.payload = match cfg.format {
        Format::Json => render_json(cfg, &rows)?,
        Format::Csv => {
            let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        num(r.x),
                        num(r.delta),
                        num(r.ratio),
                        opt(r.decomposition_l1),
                        num(r.density_l1),
                        opt(r.abs_diff),
                        num(r.pushforward_l1),
                        num(r.pushforward_sup),
                        opt(r.pushforward_diff),
                        r.passed.to_string(),
                    ]
                })
                .collect();
            render_csv(
                cfg,
                &[
                    "n", "x", "delta", "ratio", "decomposition_l1", "density_l1", "abs_diff", "pushforward_l1",
                    "pushforward_sup", "pushforward_diff", "passed",
                ],
                &table,
            )?
        }
    };
    Ok(out)
}

/// Pass/fail summary of a marginals report at KS level `threshold`.
pub fn marginals_failures(r: &MarginalsReport, threshold: f64) -> Vec<String> {
    let mut f = Vec::new();
    let worst = r.ks.iter().cloned().fold(0.0, f64::max);
    if worst >= threshold {
        f.push(format!("marginals n={} x={}: max KS {worst:.4} >= {threshold}", r.n, r.event.x));
    }
    if r.max_corr_z >= CORRELATION_Z_LIMIT {
        f.push(format!("marginals n={} x={}: correlation z {:.2} >= {CORRELATION_Z_LIMIT}", r.n, r.event.x, r.max_corr_z));
    }
    if let Some(ks) = r.second_largest_ks {
        if ks >= threshold {
            f.push(format!("marginals n={} x={}: second-largest KS {ks:.4} >= {threshold}", r.n, r.event.x));
        }
    }
    f
}

fn run_marginals(cfg: &ExperimentConfig, dist: &TailedDistribution) -> Result<RunOutcome> {
    let mut out = RunOutcome::default();
    let mut reports = Vec::new();
    for p in grid(cfg, dist)? {
        let event = ConditioningEvent::new(p.x, p.delta)?;
        let r = smallest_marginals_check(dist, p.n, &event, cfg.samples, p.seed, &sampler_options(cfg))?;
        out.notes.push(format!(
            "n={} x={}: {} draws, 1% KS critical value {:.4}",
            r.n,
            r.event.x,
            r.draws,
            ks_critical(0.01, r.draws, None)
        ));
        out.failures.extend(marginals_failures(&r, cfg.threshold));
        reports.push(r);
    }
    out.payload = match cfg.format {
        Format::Json => render_json(cfg, &reports)?,
        Format::Csv => {
            let table: Vec<Vec<String>> = reports
                .iter()
                .map(|r| {
                    let worst = r.ks.iter().cloned().fold(0.0, f64::max);
                    vec![
                        r.n.to_string(),
                        num(r.event.x),
                        num(r.event.delta_len),
                        r.draws.to_string(),
                        num(worst),
                        num(r.max_corr_z),
                        r.second_largest_ks.map(num).unwrap_or_default(),
                        num(r.accept_rate),
                    ]
                })
                .collect();
            render_csv(cfg, &["n", "x", "delta", "draws", "max_ks", "max_corr_z", "second_largest_ks", "accept_rate"], &table)?
        }
    };
    Ok(out)
}

/// Text summary for terminals.
pub fn summary(out: &RunOutcome) -> String {
    let mut s = String::new();
    for n in &out.notes {
        let _ = writeln!(s, "note: {n}");
    }
    for p in &out.written {
        let _ = writeln!(s, "wrote {}", p.display());
    }
    for f in &out.failures {
        let _ = writeln!(s, "check failed: {f}");
    }
    s
}
