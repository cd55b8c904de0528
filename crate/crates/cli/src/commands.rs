//! Experiment implementations. Each returns its artifacts; writing them is
//! left to [`crate::output`].

use std::fmt::Write as _;

use risid_core::analysis::{
    pf_pmiss_threshold_sweep, pf_single_bound, pf_two, pmiss_single, pmiss_two, required_ris_size, CurveKind,
    OperatingPoint, TheoryCurve, THEORY_CSV_HEADER,
};
use risid_core::channel::{LinkBudget, Spacing};
use risid_core::codes::{
    cross_corr_pmf, distinct_fraction, extreme_subsets, hadamard_row, rank_subsets, set_quality, CrossCorrPmf,
    Enumeration,
};
use risid_core::montecarlo::{
    averaged_metrics, simulate, simulate_escalating, ConfusionMatrix, Escalation, Estimate, Forcing,
    ReachabilityLaw, Tally, TrialPlan,
};
use risid_core::signal::{dbm_to_watts, noise_variance_from_bandwidth, RisProfile, Scenario};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{code_row, CodeSet, Settings};
use crate::{CliError, Command};

/// Largest number of candidate subsets ranked for a code-set study.
const MAX_RANKED_SUBSETS: u64 = 20_000;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    /// CSV body including the header row.
    pub csv: Option<String>,
    pub json: Option<Value>,
}

pub fn run(cmd: Command, s: &Settings) -> Result<Artifacts, CliError> {
    use Command::*;
    match cmd {
        PfSingle => single_curves(s, Metric::FalseDetection),
        PmissCorr | PmissM | PmissN => single_curves(s, Metric::MissDetection),
        PfTwoM | PfTwoNp => two_curves(s, Metric::FalseDetection),
        PmissTwoM | PmissTwoNp => two_curves(s, Metric::MissDetection),
        Tradeoff => tradeoff(s),
        Confusion => confusion(s),
        FiveRis => five_ris(s),
        Theory => theory(s),
        Design => design(s),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Metric {
    FalseDetection,
    MissDetection,
}

impl Metric {
    fn prefix(self) -> &'static str {
        match self {
            Metric::FalseDetection => "pf",
            Metric::MissDetection => "pmiss",
        }
    }
}

/// Near-square row length: the largest divisor of `n` not above `√n`.
pub fn default_row_length(n: usize) -> usize {
    (1..=n).take_while(|d| d * d <= n).filter(|d| n.is_multiple_of(*d)).last().unwrap_or(1)
}

fn noise(s: &Settings) -> Result<f64, CliError> {
    Ok(noise_variance_from_bandwidth(s.bandwidth_hz)?)
}

/// Scenario with the configured RISs, code rows `rows[i]` for the `i`-th RIS.
pub fn scenario(
    s: &Settings,
    m: usize,
    n: usize,
    p_dbm: f64,
    spacing: Spacing,
    rows: &[usize],
) -> Result<Scenario, CliError> {
    let mut profiles = Vec::with_capacity(s.ris.len());
    for (r, &row) in s.ris.iter().zip(rows) {
        let n_i = r.n.unwrap_or(n);
        let n_h = r.n_h.unwrap_or_else(|| default_row_length(n_i));
        let link = LinkBudget::new(s.f_c_hz, r.d_ur_m, r.d_rb_m)?;
        let code = hadamard_row(m, row, r.id)?;
        profiles.push(RisProfile::new(r.id, code, n_i, n_h, r.spacing.unwrap_or(spacing), link)?);
    }
    Ok(Scenario::new(m, s.v_total_for(m), dbm_to_watts(p_dbm), noise(s)?, profiles)?)
}

fn rows_for(s: &Settings, m: usize) -> Vec<usize> {
    (0..s.ris.len()).map(|i| code_row(s, i, m)).collect()
}

fn tally(s: &Settings, plan: &TrialPlan, forcing: Option<Forcing>, metric: Option<Metric>) -> Result<Tally, CliError> {
    let grid = &s.r_bar_grid;
    let tally = match (s.escalate, metric) {
        (true, Some(metric)) => {
            let policy = Escalation { min_events: 50, max_trials: s.max_trials.max(plan.trials) };
            simulate_escalating(plan, forcing, grid, policy, |t| {
                (0..grid.len())
                    .map(|i| match metric {
                        Metric::FalseDetection => t.count(i, 0, false, true),
                        Metric::MissDetection => t.count(i, 0, true, false),
                    })
                    .min()
                    .unwrap_or(0)
            })?
        }
        _ => simulate(plan, forcing, grid)?,
    };
    Ok(tally)
}

fn plan(s: &Settings, scenario: Scenario) -> Result<TrialPlan, CliError> {
    Ok(TrialPlan::new(scenario, s.trials, s.seed, ReachabilityLaw::Bernoulli(0.5))?)
}

fn operating_point(s: &Settings, sc: &Scenario, m: usize, n: usize, p_dbm: f64, rho: f64) -> OperatingPoint {
    OperatingPoint {
        m,
        n,
        p: dbm_to_watts(p_dbm),
        beta: sc.ris[0].link.beta(),
        noise_variance: sc.noise_variance_w,
        v_total: s.v_total_for(m),
        r_bar: 0.0,
        rho,
    }
}

#[derive(Debug, Clone, Serialize)]
struct CurveRow {
    m: usize,
    n: usize,
    spacing: &'static str,
    p_dbm: f64,
    r_bar: f64,
    estimate: Estimate,
    theory: f64,
}

fn curve_csv(metric: Metric, rows: &[CurveRow]) -> String {
    let p = metric.prefix();
    let mut out = format!("M,N,spacing,p_dbm,r_bar,{p}_mc,ci_low,ci_high,events,trials,low_confidence,{p}_theory\n");
    for r in rows {
        let e = &r.estimate;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:e},{:e},{:e},{},{},{},{:e}",
            r.m, r.n, r.spacing, r.p_dbm, r.r_bar, e.p, e.ci_low, e.ci_high, e.events, e.trials, e.low_confidence, r.theory
        );
    }
    out
}

fn forcing_for(metric: Metric, id: u32) -> Forcing {
    Forcing { id, reachable: metric == Metric::MissDetection }
}

fn estimate_of(t: &Tally, i: usize, metric: Metric) -> Estimate {
    match metric {
        Metric::FalseDetection => t.pf(i, 0),
        Metric::MissDetection => t.pmiss(i, 0),
    }
}

/// Single-RIS curves over every `(M, N, spacing, P)` combination. False
/// detection uses noise-only frames and the union bound; miss detection the
/// exponential CDF of `D`.
fn single_curves(s: &Settings, metric: Metric) -> Result<Artifacts, CliError> {
    let mut rows = Vec::new();
    for &m in &s.m_grid {
        let code_rows = rows_for(s, m);
        let rho = distinct_fraction(&hadamard_row(m, code_rows[0], 1)?);
        for &n in &s.n_grid {
            for &spacing in &s.spacing_grid {
                for &p_dbm in &s.p_dbm_grid {
                    let sc = scenario(s, m, n, p_dbm, spacing, &code_rows)?;
                    let op = operating_point(s, &sc, m, n, p_dbm, rho);
                    let id = sc.ris[0].id;
                    let t = tally(s, &plan(s, sc)?, Some(forcing_for(metric, id)), Some(metric))?;
                    for (i, &r_bar) in s.r_bar_grid.iter().enumerate() {
                        let op = op.with_r_bar(r_bar);
                        let theory = match metric {
                            Metric::FalseDetection => pf_single_bound(&op),
                            Metric::MissDetection => pmiss_single(&op),
                        };
                        rows.push(CurveRow {
                            m,
                            n,
                            spacing: spacing.name(),
                            p_dbm,
                            r_bar,
                            estimate: estimate_of(&t, i, metric),
                            theory,
                        });
                    }
                }
            }
        }
    }
    Ok(Artifacts { csv: Some(curve_csv(metric, &rows)), json: Some(json!({ "points": rows })) })
}

fn pair_pmf(s: &Settings, m: usize, rows: &[usize]) -> Result<CrossCorrPmf, CliError> {
    if rows.len() < 2 {
        return Err(CliError::Invalid("two-RIS study needs two RISs".into()));
    }
    let target = hadamard_row(m, rows[0], 1)?;
    let other = hadamard_row(m, rows[1], 2)?;
    Ok(cross_corr_pmf(&target, &other, &Enumeration::uniform(m, s.v_total_for(m)))?)
}

/// Two-RIS curves for the first RIS, the second reachable with probability ½.
fn two_curves(s: &Settings, metric: Metric) -> Result<Artifacts, CliError> {
    let mut rows = Vec::new();
    let mut laws = Vec::new();
    for &m in &s.m_grid {
        let code_rows = rows_for(s, m);
        let pmf = pair_pmf(s, m, &code_rows)?;
        laws.push(json!({ "M": m, "rows": &code_rows[..2], "pmf": &pmf }));
        let rho = distinct_fraction(&hadamard_row(m, code_rows[0], 1)?);
        for &n in &s.n_grid {
            for &spacing in &s.spacing_grid {
                for &p_dbm in &s.p_dbm_grid {
                    let sc = scenario(s, m, n, p_dbm, spacing, &code_rows)?;
                    let op = operating_point(s, &sc, m, n, p_dbm, rho);
                    let id = sc.ris[0].id;
                    let t = tally(s, &plan(s, sc)?, Some(forcing_for(metric, id)), Some(metric))?;
                    for (i, &r_bar) in s.r_bar_grid.iter().enumerate() {
                        let op = op.with_r_bar(r_bar);
                        let theory = match metric {
                            Metric::FalseDetection => pf_two(&op, &pmf),
                            Metric::MissDetection => pmiss_two(&op, pmf.a_tilde)?,
                        };
                        rows.push(CurveRow {
                            m,
                            n,
                            spacing: spacing.name(),
                            p_dbm,
                            r_bar,
                            estimate: estimate_of(&t, i, metric),
                            theory,
                        });
                    }
                }
            }
        }
    }
    Ok(Artifacts {
        csv: Some(curve_csv(metric, &rows)),
        json: Some(json!({ "cross_correlation": laws, "points": rows })),
    })
}

fn tradeoff(s: &Settings) -> Result<Artifacts, CliError> {
    let mut csv = String::from("M,N,p_dbm,r_bar,pf_bound,pmiss_theory,pf_mc,pmiss_mc\n");
    let mut sweeps = Vec::new();
    for &m in &s.m_grid {
        let code_rows = rows_for(s, m);
        let rho = distinct_fraction(&hadamard_row(m, code_rows[0], 1)?);
        for &n in &s.n_grid {
            for &p_dbm in &s.p_dbm_grid {
                let spacing = s.spacing_grid[0];
                let sc = scenario(s, m, n, p_dbm, spacing, &code_rows)?;
                let op = operating_point(s, &sc, m, n, p_dbm, rho);
                let id = sc.ris[0].id;
                let pl = plan(s, sc)?;
                let pf = tally(s, &pl, Some(forcing_for(Metric::FalseDetection, id)), Some(Metric::FalseDetection))?;
                let pm = tally(s, &pl, Some(forcing_for(Metric::MissDetection, id)), Some(Metric::MissDetection))?;
                let sweep = pf_pmiss_threshold_sweep(&op, &s.r_bar_grid, None, s.pf_cap, s.pmiss_cap)?;
                for (i, &r_bar) in s.r_bar_grid.iter().enumerate() {
                    let _ = writeln!(
                        csv,
                        "{m},{n},{p_dbm},{r_bar},{:e},{:e},{:e},{:e}",
                        sweep.pf.y[i],
                        sweep.pmiss.y[i],
                        pf.pf(i, 0).p,
                        pm.pmiss(i, 0).p
                    );
                }
                sweeps.push(json!({
                    "M": m,
                    "N": n,
                    "p_dbm": p_dbm,
                    "pf_cap": s.pf_cap,
                    "pmiss_cap": s.pmiss_cap,
                    "min_r_bar_for_pf": sweep.min_r_bar_for_pf,
                    "max_r_bar_for_pmiss": sweep.max_r_bar_for_pmiss,
                    "feasible": sweep.feasible,
                    "feasible_r_bars": sweep.feasible_r_bars,
                }));
            }
        }
    }
    Ok(Artifacts { csv: Some(csv), json: Some(json!({ "sweeps": sweeps })) })
}

#[derive(Debug, Clone, Serialize)]
struct ConfusionReport {
    m: usize,
    n: usize,
    p_dbm: f64,
    r_bar: f64,
    matrix: ConfusionMatrix,
    min_diagonal: f64,
    max_miss_path: f64,
    pmiss: Vec<f64>,
    pf: Vec<f64>,
}

fn confusion(s: &Settings) -> Result<Artifacts, CliError> {
    let mut reports = Vec::new();
    for &m in &s.m_grid {
        let code_rows = rows_for(s, m);
        for &n in &s.n_grid {
            for &p_dbm in &s.p_dbm_grid {
                let sc = scenario(s, m, n, p_dbm, s.spacing_grid[0], &code_rows)?;
                let l = sc.ris.len();
                let t = tally(s, &plan(s, sc)?, None, None)?;
                for (i, &r_bar) in s.r_bar_grid.iter().enumerate() {
                    let matrix = ConfusionMatrix::from_tally(&t, i);
                    reports.push(ConfusionReport {
                        m,
                        n,
                        p_dbm,
                        r_bar,
                        min_diagonal: matrix.min_diagonal(),
                        max_miss_path: matrix.max_miss_path(),
                        pmiss: (0..l).map(|k| matrix.pmiss(k)).collect(),
                        pf: (0..l).map(|k| matrix.pf(k)).collect(),
                        matrix,
                    });
                }
            }
        }
    }
    let mut csv = String::new();
    if let Some(first) = reports.first() {
        let _ = writeln!(csv, "M,N,p_dbm,r_bar,true_state,{}", first.matrix.labels.join(","));
    }
    for r in &reports {
        for (label, row) in r.matrix.labels.iter().zip(&r.matrix.entries) {
            let cells: Vec<String> = row.iter().map(|e| format!("{e}")).collect();
            let _ = writeln!(csv, "{},{},{},{},{label},{}", r.m, r.n, r.p_dbm, r.r_bar, cells.join(","));
        }
    }
    Ok(Artifacts { csv: Some(csv), json: Some(json!({ "trials": s.trials, "matrices": reports })) })
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Rows of each configured code set at code length `m`.
fn resolve_code_sets(s: &Settings, m: usize) -> Result<Vec<(String, Vec<usize>, u64)>, CliError> {
    let size = s.ris.len();
    let v_total = s.v_total_for(m);
    let needs_ranking = s.code_sets.iter().any(|c| matches!(c, CodeSet::Ranked(_)));
    let ranked = if needs_ranking {
        let count = binomial(m as u64 - 1, size as u64);
        if count > MAX_RANKED_SUBSETS {
            return Err(CliError::Invalid(format!(
                "ranking {count} candidate code sets at M = {m} is too costly; list the rows explicitly"
            )));
        }
        let pool: Vec<usize> = (1..m).collect();
        rank_subsets(m, &pool, size, v_total)?
    } else {
        Vec::new()
    };
    let mut out = Vec::new();
    for set in &s.code_sets {
        match set {
            CodeSet::Ranked(name) => {
                let (best, worst) = extreme_subsets(&ranked)
                    .ok_or_else(|| CliError::Invalid("no candidate code sets".into()))?;
                let chosen = if name == "best" { best } else { worst };
                out.push((name.clone(), chosen.rows.clone(), chosen.quality));
            }
            CodeSet::Rows(rows) => {
                if rows.len() != size {
                    return Err(CliError::Invalid(format!(
                        "code set {rows:?} has {} rows for {size} RISs",
                        rows.len()
                    )));
                }
                let codes = rows
                    .iter()
                    .map(|&r| hadamard_row(m, r, r as u32))
                    .collect::<Result<Vec<_>, _>>()?;
                out.push(("rows".into(), rows.clone(), set_quality(&codes, v_total)?));
            }
        }
    }
    Ok(out)
}

fn five_ris(s: &Settings) -> Result<Artifacts, CliError> {
    let mut csv = String::from("set,rows,quality,M,N,p_dbm,r_bar,pmiss_avg,pf_avg,trials\n");
    let mut results = Vec::new();
    for &m in &s.m_grid {
        let sets = resolve_code_sets(s, m)?;
        for &n in &s.n_grid {
            for &p_dbm in &s.p_dbm_grid {
                for (name, rows, quality) in &sets {
                    let sc = scenario(s, m, n, p_dbm, s.spacing_grid[0], rows)?;
                    let t = tally(s, &plan(s, sc)?, None, None)?;
                    let points = averaged_metrics(&t, &s.r_bar_grid);
                    let row_text: Vec<String> = rows.iter().map(|r| r.to_string()).collect();
                    for pt in &points {
                        let _ = writeln!(
                            csv,
                            "{name},{},{quality},{m},{n},{p_dbm},{},{:e},{:e},{}",
                            row_text.join(" "),
                            pt.r_bar,
                            pt.pmiss_avg,
                            pt.pf_avg,
                            t.trials
                        );
                    }
                    results.push(json!({
                        "set": name,
                        "rows": rows,
                        "quality": quality,
                        "M": m,
                        "N": n,
                        "p_dbm": p_dbm,
                        "points": points,
                    }));
                }
            }
        }
    }
    Ok(Artifacts { csv: Some(csv), json: Some(json!({ "code_sets": results })) })
}

fn theory(s: &Settings) -> Result<Artifacts, CliError> {
    let mut csv = format!("{THEORY_CSV_HEADER}\n");
    let sigma2 = noise(s)?;
    for &m in &s.m_grid {
        let single_row = s.ris[0].code_row.unwrap_or(m - 1);
        let rho = distinct_fraction(&hadamard_row(m, single_row, 1)?);
        let two = s.kinds.iter().any(|k| !matches!(k, CurveKind::PfSingleBound | CurveKind::PmissSingle));
        let pmf = if two {
            let rows = [s.ris[0].code_row.unwrap_or(1), s.ris.get(1).and_then(|r| r.code_row).unwrap_or(2)];
            Some(pair_pmf(s, m, &rows)?)
        } else {
            None
        };
        let r = &s.ris[0];
        let beta = LinkBudget::new(s.f_c_hz, r.d_ur_m, r.d_rb_m)?.beta();
        for &n in &s.n_grid {
            for &p_dbm in &s.p_dbm_grid {
                let op = OperatingPoint {
                    m,
                    n,
                    p: dbm_to_watts(p_dbm),
                    beta,
                    noise_variance: sigma2,
                    v_total: s.v_total_for(m),
                    r_bar: 0.0,
                    rho,
                };
                for &kind in &s.kinds {
                    let curve = TheoryCurve::evaluate(kind, &op, &s.r_bar_grid, pmf.as_ref())?;
                    csv.push_str(&curve.csv_rows(m, n, p_dbm));
                }
            }
        }
    }
    Ok(Artifacts { csv: Some(csv), json: None })
}

fn design(s: &Settings) -> Result<Artifacts, CliError> {
    let mut csv = String::from("M,p_dbm,r_bar,target_pmiss,n_required,n_raw\n");
    let sigma2 = noise(s)?;
    let r = &s.ris[0];
    let beta = LinkBudget::new(s.f_c_hz, r.d_ur_m, r.d_rb_m)?.beta();
    for &m in &s.m_grid {
        for &p_dbm in &s.p_dbm_grid {
            for &r_bar in &s.r_bar_grid {
                let op = OperatingPoint {
                    m,
                    n: 1,
                    p: dbm_to_watts(p_dbm),
                    beta,
                    noise_variance: sigma2,
                    v_total: s.v_total_for(m),
                    r_bar,
                    rho: 0.5,
                };
                let size = required_ris_size(&op, s.target_pmiss)?;
                let _ = writeln!(csv, "{m},{p_dbm},{r_bar},{},{},{:e}", s.target_pmiss, size.elements, size.raw);
            }
        }
    }
    Ok(Artifacts { csv: Some(csv), json: None })
}
