//! Seeded, parallel Monte Carlo trial runner.
//!
//! Trial `t` draws everything from the streams of `(seed, t)`, and batches are
//! reduced by integer addition, so counts never depend on the thread count.
//! Each trial computes every RIS's metric `D` once and is then scored against
//! the whole threshold grid.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{absolute_threshold, Correlator};
use crate::error::{Error, Result};
use crate::rng::{Lane, TrialStreams};
use crate::signal::{synthesize_frame, Scenario};

const BATCH: u64 = 2048;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReachabilityLaw {
    /// Every RIS independently reachable with this probability.
    Bernoulli(f64),
    /// One flag per RIS in scenario order.
    Fixed(Vec<bool>),
}

impl Default for ReachabilityLaw {
    fn default() -> Self {
        ReachabilityLaw::Bernoulli(0.5)
    }
}

/// Overrides the law for one RIS in every trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Forcing {
    pub id: u32,
    pub reachable: bool,
}

#[derive(Debug, Clone)]
pub struct TrialPlan {
    pub scenario: Scenario,
    pub trials: u64,
    pub seed: u64,
    pub reachability: ReachabilityLaw,
}

impl TrialPlan {
    pub fn new(scenario: Scenario, trials: u64, seed: u64, reachability: ReachabilityLaw) -> Result<Self> {
        let plan = Self { scenario, trials, seed, reachability };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trial count must be at least 1"));
        }
        if self.scenario.ris.is_empty() {
            return Err(Error::invalid("scenario has no RIS"));
        }
        if self.scenario.ris.len() > 16 {
            return Err(Error::invalid("at most 16 RISs are supported"));
        }
        match &self.reachability {
            ReachabilityLaw::Bernoulli(p) if !(0.0..=1.0).contains(p) => {
                Err(Error::invalid(format!("reachability probability {p} outside [0, 1]")))
            }
            ReachabilityLaw::Fixed(v) if v.len() != self.scenario.ris.len() => Err(Error::invalid(
                format!("{} reachability flags for {} RISs", v.len(), self.scenario.ris.len()),
            )),
            _ => Ok(()),
        }
    }

    fn index_of(&self, id: u32) -> Result<usize> {
        self.scenario
            .ris
            .iter()
            .position(|p| p.id == id)
            .ok_or_else(|| Error::invalid(format!("no RIS with id {id}")))
    }
}

/// Reachability flags of one trial, in scenario order.
///
/// Bernoulli draws are taken in ascending id order from the trial's
/// reachability lane, so they do not depend on the listing order.
pub fn draw_reachability(plan: &TrialPlan, streams: &TrialStreams, forcing: Option<Forcing>) -> Vec<bool> {
    let ris = &plan.scenario.ris;
    let mut flags = match &plan.reachability {
        ReachabilityLaw::Fixed(v) => v.clone(),
        ReachabilityLaw::Bernoulli(p) => {
            let mut order: Vec<usize> = (0..ris.len()).collect();
            order.sort_by_key(|&i| ris[i].id);
            let mut rng = streams.lane(Lane::Reachability);
            let mut flags = vec![false; ris.len()];
            for i in order {
                flags[i] = rng.random_bool(*p);
            }
            flags
        }
    };
    if let Some(f) = forcing {
        if let Some(i) = ris.iter().position(|p| p.id == f.id) {
            flags[i] = f.reachable;
        }
    }
    flags
}

/// True state and metrics of one trial. State bit `l` is `scenario.ris[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub state: usize,
    pub metrics: Vec<f64>,
}

fn mask(flags: &[bool]) -> usize {
    flags.iter().enumerate().filter(|(_, &f)| f).map(|(l, _)| 1 << l).sum()
}

struct Runner<'a> {
    plan: &'a TrialPlan,
    correlators: Vec<Correlator>,
    forcing: Option<Forcing>,
}

impl Runner<'_> {
    fn trial(&self, t: u64) -> Result<TrialOutcome> {
        let streams = TrialStreams::new(self.plan.seed, t);
        let flags = draw_reachability(self.plan, &streams, self.forcing);
        let frame = synthesize_frame(&self.plan.scenario, &flags, &streams)?;
        let metrics = self
            .correlators
            .iter()
            .map(|c| c.detect(&frame.samples).map(|d| d.metric))
            .collect::<Result<_>>()?;
        Ok(TrialOutcome { state: mask(&flags), metrics })
    }
}

fn runner<'a>(plan: &'a TrialPlan, forcing: Option<Forcing>) -> Result<Runner<'a>> {
    plan.validate()?;
    if let Some(f) = forcing {
        plan.index_of(f.id)?;
    }
    let correlators = plan.scenario.ris.iter().map(|p| Correlator::new(&p.code)).collect();
    Ok(Runner { plan, correlators, forcing })
}

/// Runs trial `t` in isolation.
pub fn run_trial(plan: &TrialPlan, forcing: Option<Forcing>, t: u64) -> Result<TrialOutcome> {
    runner(plan, forcing)?.trial(t)
}

/// Joint counts of true and decided states for every threshold on a grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub l: usize,
    pub trials: u64,
    /// Trials per true state.
    pub state_counts: Vec<u64>,
    /// `joint[t][s * 2^L + d]`: trials with true state `s` decided as `d`
    /// under the `t`-th threshold.
    pub joint: Vec<Vec<u64>>,
}

impl Tally {
    fn zero(l: usize, thresholds: usize) -> Self {
        let states = 1 << l;
        Self {
            l,
            trials: 0,
            state_counts: vec![0; states],
            joint: vec![vec![0; states * states]; thresholds],
        }
    }

    fn record(&mut self, outcome: &TrialOutcome, thresholds: &[f64]) {
        let states = 1 << self.l;
        self.trials += 1;
        self.state_counts[outcome.state] += 1;
        for (row, &r) in self.joint.iter_mut().zip(thresholds) {
            let decided = outcome
                .metrics
                .iter()
                .enumerate()
                .filter(|(_, &d)| d > r)
                .map(|(l, _)| 1usize << l)
                .sum::<usize>();
            row[outcome.state * states + decided] += 1;
        }
    }

    pub fn merge(mut self, other: &Tally) -> Self {
        self.trials += other.trials;
        for (a, b) in self.state_counts.iter_mut().zip(&other.state_counts) {
            *a += b;
        }
        for (ra, rb) in self.joint.iter_mut().zip(&other.joint) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a += b;
            }
        }
        self
    }

    pub fn states(&self) -> usize {
        1 << self.l
    }

    /// Trials with RIS bit `l` truly `truth` and decided `decided` at threshold `t`.
    pub fn count(&self, t: usize, l: usize, truth: bool, decided: bool) -> u64 {
        let states = self.states();
        let bit = 1 << l;
        let mut n = 0;
        for s in 0..states {
            if (s & bit != 0) != truth {
                continue;
            }
            for d in 0..states {
                if (d & bit != 0) == decided {
                    n += self.joint[t][s * states + d];
                }
            }
        }
        n
    }

    /// Trials with RIS bit `l` truly `truth`.
    pub fn truth_count(&self, l: usize, truth: bool) -> u64 {
        let bit = 1 << l;
        (0..self.states())
            .filter(|s| (s & bit != 0) == truth)
            .map(|s| self.state_counts[s])
            .sum()
    }

    pub fn pf(&self, t: usize, l: usize) -> Estimate {
        Estimate::new(self.count(t, l, false, true), self.truth_count(l, false))
    }

    pub fn pmiss(&self, t: usize, l: usize) -> Estimate {
        Estimate::new(self.count(t, l, true, false), self.truth_count(l, true))
    }
}

/// Runs trials `start..end` and tallies them against absolute thresholds.
fn simulate_range(runner: &Runner<'_>, thresholds: &[f64], start: u64, end: u64) -> Result<Tally> {
    let l = runner.plan.scenario.ris.len();
    let batches: Vec<(u64, u64)> = (start..end)
        .step_by(BATCH as usize)
        .map(|a| (a, (a + BATCH).min(end)))
        .collect();
    batches
        .into_par_iter()
        .map(|(a, b)| {
            let mut tally = Tally::zero(l, thresholds.len());
            for t in a..b {
                tally.record(&runner.trial(t)?, thresholds);
            }
            Ok(tally)
        })
        .try_reduce(|| Tally::zero(l, thresholds.len()), |a, b| Ok(a.merge(&b)))
}

fn absolute(plan: &TrialPlan, r_bars: &[f64]) -> Vec<f64> {
    r_bars
        .iter()
        .map(|&r| absolute_threshold(r, plan.scenario.noise_variance_w))
        .collect()
}

/// Runs `plan.trials` trials and tallies them on a normalized threshold grid.
pub fn simulate(plan: &TrialPlan, forcing: Option<Forcing>, r_bars: &[f64]) -> Result<Tally> {
    let runner = runner(plan, forcing)?;
    simulate_range(&runner, &absolute(plan, r_bars), 0, plan.trials)
}

/// Rare-event policy: grow the trial count tenfold until enough events are
/// seen or the cap is reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Escalation {
    pub min_events: u64,
    pub max_trials: u64,
}

impl Default for Escalation {
    fn default() -> Self {
        Self { min_events: 50, max_trials: 10_000_000 }
    }
}

/// Like [`simulate`], escalating while `events(tally)` is below the policy's
/// minimum. Earlier trials are reused, so the result equals a plain run with
/// the final trial count.
pub fn simulate_escalating<F: Fn(&Tally) -> u64>(
    plan: &TrialPlan,
    forcing: Option<Forcing>,
    r_bars: &[f64],
    policy: Escalation,
    events: F,
) -> Result<Tally> {
    let runner = runner(plan, forcing)?;
    let thresholds = absolute(plan, r_bars);
    let mut done = plan.trials;
    let mut tally = simulate_range(&runner, &thresholds, 0, done)?;
    while events(&tally) < policy.min_events && done < policy.max_trials {
        let next = done.saturating_mul(10).min(policy.max_trials);
        tally = tally.merge(&simulate_range(&runner, &thresholds, done, next)?);
        done = next;
    }
    Ok(tally)
}

/// Binomial proportion with a Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub events: u64,
    pub trials: u64,
    pub p: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Fewer than 50 events.
    pub low_confidence: bool,
}

impl Estimate {
    pub fn new(events: u64, trials: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(events, trials, Z_95);
        let p = if trials == 0 { f64::NAN } else { events as f64 / trials as f64 };
        Self { events, trials, p, ci_low, ci_high, low_confidence: events < 50 }
    }

    /// Binomial standard error `√(p(1-p)/n)`.
    pub fn std_error(&self) -> f64 {
        (self.p * (1.0 - self.p) / self.trials as f64).sqrt()
    }
}

pub fn wilson_interval(events: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = events as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if events == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if events == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// False detection of `target`, forced unreachable in every trial.
pub fn estimate_pf(plan: &TrialPlan, target: u32, r_bar: f64) -> Result<Estimate> {
    let l = plan.index_of(target)?;
    let tally = simulate(plan, Some(Forcing { id: target, reachable: false }), &[r_bar])?;
    Ok(tally.pf(0, l))
}

/// Miss detection of `target`, forced reachable in every trial.
pub fn estimate_pmiss(plan: &TrialPlan, target: u32, r_bar: f64) -> Result<Estimate> {
    let l = plan.index_of(target)?;
    let tally = simulate(plan, Some(Forcing { id: target, reachable: true }), &[r_bar])?;
    Ok(tally.pmiss(0, l))
}

/// Name of reachability state `s` when RIS bit `l` is labelled `RIS l+1`.
pub fn state_label(s: usize, l: usize) -> String {
    let on: Vec<usize> = (0..l).filter(|b| s & (1 << b) != 0).collect();
    match on.len() {
        0 => "NO RIS".to_string(),
        n if n == l && l == 2 => "BOTH RISs".to_string(),
        1 => format!("RIS {}", on[0] + 1),
        _ => format!("RISs {}", on.iter().map(|b| (b + 1).to_string()).collect::<Vec<_>>().join("+")),
    }
}

/// True × decided reachability states. Index `s` has bit `l` set when the
/// `l`-th RIS is reachable, which for two RISs gives the order
/// NO RIS, RIS 1, RIS 2, BOTH RISs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    /// Row-normalized frequencies; rows without trials are all zero.
    pub entries: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn from_tally(tally: &Tally, t: usize) -> Self {
        let states = tally.states();
        let counts: Vec<Vec<u64>> = (0..states)
            .map(|s| tally.joint[t][s * states..(s + 1) * states].to_vec())
            .collect();
        let entries = counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                    .collect()
            })
            .collect();
        let labels = (0..states).map(|s| state_label(s, tally.l)).collect();
        Self { labels, counts, entries }
    }

    pub fn l(&self) -> usize {
        self.counts.len().trailing_zeros() as usize
    }

    pub fn min_diagonal(&self) -> f64 {
        (0..self.entries.len()).map(|s| self.entries[s][s]).fold(f64::INFINITY, f64::min)
    }

    /// Row-normalized probability of deciding RIS `l` as `decided` given state `s`.
    fn decided_given(&self, s: usize, l: usize, decided: bool) -> f64 {
        let bit = 1 << l;
        self.entries[s]
            .iter()
            .enumerate()
            .filter(|(d, _)| (d & bit != 0) == decided)
            .map(|(_, e)| e)
            .sum()
    }

    fn state_average(&self, l: usize, truth: bool) -> f64 {
        let bit = 1 << l;
        let states: Vec<usize> = (0..self.entries.len()).filter(|s| (s & bit != 0) == truth).collect();
        states.iter().map(|&s| self.decided_given(s, l, !truth)).sum::<f64>() / states.len() as f64
    }

    /// Miss detection of RIS `l` averaged over the states where it is
    /// reachable; for two RISs `(e₁₀+e₁₂)/2 + (e₃₀+e₃₂)/2` for the first.
    pub fn pmiss(&self, l: usize) -> f64 {
        self.state_average(l, true)
    }

    /// False detection of RIS `l`; for two RISs `(e₀₁+e₀₃)/2 + (e₂₁+e₂₃)/2` for the first.
    pub fn pf(&self, l: usize) -> f64 {
        self.state_average(l, false)
    }

    /// Count of trials in state `s` whose decision for RIS `l` is `decided`.
    pub fn decided_count(&self, s: usize, l: usize, decided: bool) -> u64 {
        let bit = 1 << l;
        self.counts[s]
            .iter()
            .enumerate()
            .filter(|(d, _)| (d & bit != 0) == decided)
            .map(|(_, c)| c)
            .sum()
    }

    /// Largest per-state probability of missing one RIS while identifying
    /// the rest as they are.
    pub fn max_miss_path(&self) -> f64 {
        let n = self.entries.len();
        let mut worst: f64 = 0.0;
        for s in 0..n {
            for l in 0..self.l() {
                if s & (1 << l) != 0 {
                    worst = worst.max(self.entries[s][s & !(1 << l)]);
                }
            }
        }
        worst
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true_state");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (label, row) in self.labels.iter().zip(&self.entries) {
            out.push_str(label);
            for e in row {
                out.push_str(&format!(",{e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Confusion matrices of a plan under Bernoulli reachability, one per threshold.
pub fn confusion(plan: &TrialPlan, r_bars: &[f64]) -> Result<Vec<ConfusionMatrix>> {
    let tally = simulate(plan, None, r_bars)?;
    Ok((0..r_bars.len()).map(|t| ConfusionMatrix::from_tally(&tally, t)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedPoint {
    pub r_bar: f64,
    pub pmiss_avg: f64,
    pub pf_avg: f64,
    pub pmiss: Vec<Estimate>,
    pub pf: Vec<Estimate>,
}

/// Per-RIS miss and false detection conditioned on each RIS's own state,
/// averaged over the RISs of the plan.
pub fn averaged_metrics(tally: &Tally, r_bars: &[f64]) -> Vec<AveragedPoint> {
    r_bars
        .iter()
        .enumerate()
        .map(|(t, &r_bar)| {
            let pmiss: Vec<Estimate> = (0..tally.l).map(|l| tally.pmiss(t, l)).collect();
            let pf: Vec<Estimate> = (0..tally.l).map(|l| tally.pf(t, l)).collect();
            let avg = |v: &[Estimate]| v.iter().map(|e| e.p).sum::<f64>() / v.len() as f64;
            AveragedPoint { r_bar, pmiss_avg: avg(&pmiss), pf_avg: avg(&pf), pmiss, pf }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_edges() {
        let (lo, hi) = wilson_interval(0, 100, Z_95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100, Z_95);
        assert!((lo + hi - 1.0).abs() < 1e-12);
        assert_eq!(wilson_interval(0, 0, Z_95), (0.0, 1.0));
    }

    #[test]
    fn labels_follow_bit_order() {
        let names: Vec<String> = (0..4).map(|s| state_label(s, 2)).collect();
        assert_eq!(names, ["NO RIS", "RIS 1", "RIS 2", "BOTH RISs"]);
        assert_eq!(state_label(0b101, 3), "RISs 1+3");
    }
}
