//! Figure datasets, parameter sweeps and analytic-versus-simulation reports.

use std::fmt;
use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

use crate::certification::{self as cert, SourceConfig};
use crate::detector::DetectorSpec;
use crate::error::{invalid, HeraldError, Result};
use crate::format::{round12, sig12};
use crate::montecarlo::{run_trials_with, Quantity, RunOptions, TallySet};
use crate::photon_stats::DistributionKind;

/// Header of the figure dataset CSV.
pub const FIG2_HEADER: &str =
    "series,kind,n_bar,eta,n_delays,delay_index,value,mc_value,mc_stderr,trials";
pub const DEFAULT_MAX_DELAYS: u32 = 8;
/// Largest |z| accepted by a comparison row.
pub const Z_LIMIT: f64 = 4.0;
/// Largest absolute analytic/estimate gap accepted by a comparison row.
pub const ABS_LIMIT: f64 = 0.005;
pub const MIN_COMPARE_TRIALS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    /// Certification of delay `i` in an `N_D` system.
    Fan,
    /// Heralded single photons per pulse.
    P1Total,
    PoissonLimit,
    /// Heralded single photons per triggered pulse.
    P1GivenTrigger,
}

impl Series {
    pub fn as_str(self) -> &'static str {
        match self {
            Series::Fan => "fan",
            Series::P1Total => "p1_total",
            Series::PoissonLimit => "poisson_limit",
            Series::P1GivenTrigger => "p1_given_trigger",
        }
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig2Row {
    pub series: Series,
    pub kind: DistributionKind,
    pub n_bar: f64,
    pub eta: f64,
    pub n_delays: u32,
    pub delay_index: Option<u32>,
    pub value: f64,
    pub mc_value: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub trials: Option<u64>,
}

impl Fig2Row {
    fn analytic(
        series: Series,
        config: &SourceConfig,
        delay_index: Option<u32>,
        value: f64,
    ) -> Self {
        Self {
            series,
            kind: config.kind(),
            n_bar: config.n_bar(),
            eta: config.eta(),
            n_delays: config.n_delays(),
            delay_index,
            value,
            mc_value: None,
            mc_stderr: None,
            trials: None,
        }
    }

    fn sort_key(&self) -> (Series, u32, u32) {
        (self.series, self.n_delays, self.delay_index.unwrap_or(0))
    }
}

/// Certification fans for every `N_D` up to `max_delays`, followed by the
/// per-`N_D` curves for total, Poisson-limit and triggered single-photon
/// probability.
pub fn fig2_dataset(
    kind: DistributionKind,
    eta: f64,
    n_bar: f64,
    max_delays: u32,
) -> Result<Vec<Fig2Row>> {
    if max_delays < 1 {
        return Err(invalid("max_delays must be at least 1"));
    }
    let mut rows = Vec::new();
    for n_delays in 1..=max_delays {
        let config = SourceConfig::new(n_bar, eta, n_delays, kind)?;
        for point in cert::certification_fan(&config)? {
            rows.push(Fig2Row::analytic(
                Series::Fan,
                &config,
                Some(point.delay_index),
                point.probability,
            ));
        }
        rows.push(Fig2Row::analytic(
            Series::P1Total,
            &config,
            None,
            cert::heralded_single_prob(&config),
        ));
        rows.push(Fig2Row::analytic(
            Series::PoissonLimit,
            &config,
            None,
            cert::poisson_limit(n_bar, eta),
        ));
        rows.push(Fig2Row::analytic(
            Series::P1GivenTrigger,
            &config,
            None,
            cert::heralded_single_given_trigger(&config)?,
        ));
    }
    rows.sort_by_key(Fig2Row::sort_key);
    Ok(rows)
}

/// [`fig2_dataset`] with simulated values attached to every series the
/// simulator can estimate. Each `N_D` gets its own run with the same seed.
pub fn fig2_with_mc(
    kind: DistributionKind,
    eta: f64,
    n_bar: f64,
    max_delays: u32,
    opts: &RunOptions,
) -> Result<Vec<Fig2Row>> {
    let mut rows = fig2_dataset(kind, eta, n_bar, max_delays)?;
    let detector = DetectorSpec::threshold(eta)?;
    let mut tallies = Vec::with_capacity(max_delays as usize);
    for n_delays in 1..=max_delays {
        let config = SourceConfig::new(n_bar, eta, n_delays, kind)?;
        tallies.push(run_trials_with(&config, &detector, &opts.target(None))?);
    }
    for row in &mut rows {
        let tally = &tallies[row.n_delays as usize - 1];
        let quantity = match row.series {
            Series::Fan => Quantity::Certification(row.delay_index.expect("fan row index")),
            Series::P1Total => Quantity::P1,
            Series::P1GivenTrigger => Quantity::P1GivenTrigger,
            Series::PoissonLimit => continue,
        };
        row.trials = Some(tally.trials);
        match tally.estimate(quantity) {
            Ok(est) => {
                row.mc_value = Some(est.value);
                row.mc_stderr = Some(est.stderr);
            }
            Err(HeraldError::DegenerateCondition(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

fn opt_num(x: Option<f64>) -> String {
    x.map(sig12).unwrap_or_default()
}

fn opt_int<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn json_num(x: f64) -> Value {
    json!(round12(x))
}

fn json_opt(x: Option<f64>) -> Value {
    x.map(json_num).unwrap_or(Value::Null)
}

fn csv_error(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

pub fn write_fig2_csv<W: Write>(rows: &[Fig2Row], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIG2_HEADER.split(',')).map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.series.as_str().to_string(),
            r.kind.as_str().to_string(),
            sig12(r.n_bar),
            sig12(r.eta),
            r.n_delays.to_string(),
            opt_int(r.delay_index),
            sig12(r.value),
            opt_num(r.mc_value),
            opt_num(r.mc_stderr),
            opt_int(r.trials),
        ])
        .map_err(csv_error)?;
    }
    w.flush()
}

pub fn fig2_json(rows: &[Fig2Row], meta: Value) -> Value {
    let rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "series": r.series.as_str(),
                "kind": r.kind.as_str(),
                "n_bar": json_num(r.n_bar),
                "eta": json_num(r.eta),
                "n_delays": r.n_delays,
                "delay_index": r.delay_index,
                "value": json_num(r.value),
                "mc_value": json_opt(r.mc_value),
                "mc_stderr": json_opt(r.mc_stderr),
                "trials": r.trials,
            })
        })
        .collect();
    json!({ "meta": meta, "rows": rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Pass,
    Fail,
    Skipped,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Pass => "pass",
            RowStatus::Fail => "fail",
            RowStatus::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub quantity: &'static str,
    pub delay_index: Option<u32>,
    pub analytic: Option<f64>,
    pub estimate: Option<f64>,
    pub stderr: Option<f64>,
    pub z_score: Option<f64>,
    pub status: RowStatus,
    pub reason: Option<String>,
}

impl ComparisonRow {
    fn skipped(quantity: Quantity, analytic: Option<f64>, reason: String) -> Self {
        Self {
            quantity: quantity.name(),
            delay_index: quantity.delay_index(),
            analytic,
            estimate: None,
            stderr: None,
            z_score: None,
            status: RowStatus::Skipped,
            reason: Some(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub config: SourceConfig,
    pub trials: u64,
    pub seed: u64,
    pub chunk_size: u64,
    pub rows: Vec<ComparisonRow>,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn compared(&self) -> impl Iterator<Item = &ComparisonRow> {
        self.rows.iter().filter(|r| r.status != RowStatus::Skipped)
    }
}

fn analytic_value(config: &SourceConfig, quantity: Quantity) -> Result<f64> {
    match quantity {
        Quantity::Certification(i) => cert::certification_at_delay(config, i),
        Quantity::DelayRate(i) => cert::delay_fire_prob(config, i),
        Quantity::P1 => Ok(cert::heralded_single_prob(config)),
        Quantity::P1GivenTrigger => cert::heralded_single_given_trigger(config),
        Quantity::NoFireRate => Ok(cert::no_trigger_prob(config)),
        Quantity::TargetRate => Err(invalid("no closed form for number-resolving targets")),
    }
}

fn compared_quantities(n_delays: u32) -> Vec<Quantity> {
    let mut q: Vec<Quantity> = (1..=n_delays).map(Quantity::Certification).collect();
    q.extend((1..=n_delays).map(Quantity::DelayRate));
    q.extend([Quantity::P1, Quantity::P1GivenTrigger, Quantity::NoFireRate]);
    q
}

/// z-score against the binomial spread implied by the closed form.
fn z_score(analytic: f64, estimate: f64, trials: u64) -> f64 {
    let sigma = (analytic * (1.0 - analytic) / trials as f64).sqrt();
    let diff = estimate - analytic;
    if sigma > 0.0 {
        diff / sigma
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Score an existing tally against every closed form.
pub fn compare_tally(config: &SourceConfig, tally: &TallySet) -> Vec<ComparisonRow> {
    compared_quantities(config.n_delays())
        .into_iter()
        .map(|quantity| {
            let analytic = match analytic_value(config, quantity) {
                Ok(v) => v,
                Err(e) => return ComparisonRow::skipped(quantity, None, e.to_string()),
            };
            let est = match tally.estimate(quantity) {
                Ok(est) => est,
                Err(e) => return ComparisonRow::skipped(quantity, Some(analytic), e.to_string()),
            };
            let z = z_score(analytic, est.value, est.trials);
            let ok = z.abs() <= Z_LIMIT && (analytic - est.value).abs() <= ABS_LIMIT;
            ComparisonRow {
                quantity: quantity.name(),
                delay_index: quantity.delay_index(),
                analytic: Some(analytic),
                estimate: Some(est.value),
                stderr: Some(est.stderr),
                z_score: Some(z),
                status: if ok { RowStatus::Pass } else { RowStatus::Fail },
                reason: None,
            }
        })
        .collect()
}

pub fn compare_analytic_mc(
    config: &SourceConfig,
    trials: u64,
    seed: u64,
) -> Result<ComparisonReport> {
    compare_analytic_mc_with(config, &RunOptions::new(trials, seed))
}

/// Run the simulator and score every estimator against its closed form.
pub fn compare_analytic_mc_with(
    config: &SourceConfig,
    opts: &RunOptions,
) -> Result<ComparisonReport> {
    if opts.trials < MIN_COMPARE_TRIALS {
        return Err(invalid(format!(
            "comparison needs at least {MIN_COMPARE_TRIALS} trials, got {}",
            opts.trials
        )));
    }
    let detector = DetectorSpec::threshold(config.eta())?;
    let tally = run_trials_with(config, &detector, &opts.target(None))?;
    let rows = compare_tally(config, &tally);
    let pass = rows.iter().all(|r| r.status != RowStatus::Fail);
    Ok(ComparisonReport {
        config: *config,
        trials: opts.trials,
        seed: opts.seed,
        chunk_size: opts.chunk_size,
        rows,
        pass,
    })
}

pub const COMPARE_HEADER: &str =
    "quantity,delay_index,analytic,estimate,stderr,z_score,status,reason";

pub fn write_comparison_csv<W: Write>(report: &ComparisonReport, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMPARE_HEADER.split(','))
        .map_err(csv_error)?;
    for r in &report.rows {
        w.write_record([
            r.quantity.to_string(),
            opt_int(r.delay_index),
            opt_num(r.analytic),
            opt_num(r.estimate),
            opt_num(r.stderr),
            opt_num(r.z_score),
            r.status.as_str().to_string(),
            r.reason.clone().unwrap_or_default(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()
}

pub fn comparison_json(report: &ComparisonReport, meta: Value) -> Value {
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "quantity": r.quantity,
                "delay_index": r.delay_index,
                "analytic": json_opt(r.analytic),
                "estimate": json_opt(r.estimate),
                "stderr": json_opt(r.stderr),
                "z_score": json_opt(r.z_score),
                "status": r.status.as_str(),
                "reason": r.reason,
            })
        })
        .collect();
    json!({ "meta": meta, "pass": report.pass, "rows": rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub kind: DistributionKind,
    pub n_bar: f64,
    pub eta: f64,
    pub n_delays: u32,
    pub p1: f64,
    pub p1_given_trigger: Option<f64>,
    /// Certification when the longest delay fires.
    pub certification_last: Option<f64>,
}

/// Single-photon figures of merit over every grid combination.
pub fn sweep(
    n_bar_grid: &[f64],
    eta_grid: &[f64],
    delays_set: &[u32],
    kind: DistributionKind,
) -> Result<Vec<SweepRow>> {
    if n_bar_grid.is_empty() || eta_grid.is_empty() || delays_set.is_empty() {
        return Err(invalid("sweep grids must be nonempty"));
    }
    let mut rows = Vec::with_capacity(n_bar_grid.len() * eta_grid.len() * delays_set.len());
    for &n_bar in n_bar_grid {
        for &eta in eta_grid {
            for &n_delays in delays_set {
                let config = SourceConfig::new(n_bar, eta, n_delays, kind)?;
                rows.push(SweepRow {
                    kind,
                    n_bar,
                    eta,
                    n_delays,
                    p1: cert::heralded_single_prob(&config),
                    p1_given_trigger: cert::heralded_single_given_trigger(&config).ok(),
                    certification_last: cert::certification_at_delay(&config, n_delays).ok(),
                });
            }
        }
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str = "kind,n_bar,eta,n_delays,p1,p1_given_trigger,certification_last";

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER.split(',')).map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.kind.as_str().to_string(),
            sig12(r.n_bar),
            sig12(r.eta),
            r.n_delays.to_string(),
            sig12(r.p1),
            opt_num(r.p1_given_trigger),
            opt_num(r.certification_last),
        ])
        .map_err(csv_error)?;
    }
    w.flush()
}

pub fn sweep_json(rows: &[SweepRow], meta: Value) -> Value {
    let rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "kind": r.kind.as_str(),
                "n_bar": json_num(r.n_bar),
                "eta": json_num(r.eta),
                "n_delays": r.n_delays,
                "p1": json_num(r.p1),
                "p1_given_trigger": json_opt(r.p1_given_trigger),
                "certification_last": json_opt(r.certification_last),
            })
        })
        .collect();
    json!({ "meta": meta, "rows": rows })
}
