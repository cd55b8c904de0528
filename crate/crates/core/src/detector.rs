//! Non-coherent correlator and reachability decisions.
//!
//! For every cyclic shift `c ∈ 1..=M` and window start `k ∈ 0..=v1+v2` the
//! detector forms `d_{c,k} = M^{-1/2} Σ_m s_{c,m} y_{m+k}` and keeps the largest
//! `|d|²`. Ties resolve to the smallest `k`, then the smallest `c`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codes::BinarySequence;
use crate::error::{Error, Result};

/// Absolute threshold `r = r̄² σ_n²`.
pub fn absolute_threshold(r_bar: f64, noise_variance: f64) -> f64 {
    r_bar * r_bar * noise_variance
}

/// `d_{c,k}` for one shift and window start.
pub fn correlate(samples: &[Complex64], code: &BinarySequence, c: usize, k: usize) -> Result<Complex64> {
    let m = code.len();
    if c == 0 || c > m {
        return Err(Error::invalid(format!("shift {c} outside 1..={m}")));
    }
    if k + m > samples.len() {
        return Err(Error::invalid(format!(
            "window start {k} exceeds {} for a {}-sample frame",
            samples.len().saturating_sub(m),
            samples.len()
        )));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, y) in samples[k..k + m].iter().enumerate() {
        acc += y * f64::from(code.shifted_symbol(c, i));
    }
    Ok(acc / (m as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// `D = max |d_{c,k}|²`.
    pub metric: f64,
    pub c_hat: usize,
    pub k_hat: usize,
}

/// Precomputed shifted copies of one code.
///
/// Shifts that coincide up to sign give identical `|d|²`, so only the one with
/// the smallest `c` in each class is evaluated; the tie-break is unaffected.
#[derive(Debug, Clone)]
pub struct Correlator {
    m: usize,
    shifts: Vec<usize>,
    /// Row-major `[m][rep]` so the inner loop runs over representatives.
    coef: Vec<f64>,
}

impl Correlator {
    pub fn new(code: &BinarySequence) -> Self {
        let m = code.len();
        let mut seen: BTreeMap<Vec<i8>, usize> = BTreeMap::new();
        let mut shifts = Vec::new();
        for c in 1..=m {
            let s: Vec<i8> = (0..m).map(|i| code.shifted_symbol(c, i)).collect();
            let key: Vec<i8> = if s[0] < 0 { s.iter().map(|v| -v).collect() } else { s };
            if let std::collections::btree_map::Entry::Vacant(e) = seen.entry(key) {
                e.insert(c);
                shifts.push(c);
            }
        }
        let reps = shifts.len();
        let mut coef = vec![0.0; m * reps];
        for (r, &c) in shifts.iter().enumerate() {
            for i in 0..m {
                coef[i * reps + r] = f64::from(code.shifted_symbol(c, i));
            }
        }
        Self { m, shifts, coef }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Shifts evaluated, in ascending order.
    pub fn representative_shifts(&self) -> &[usize] {
        &self.shifts
    }

    pub fn detect(&self, samples: &[Complex64]) -> Result<Detection> {
        let m = self.m;
        if samples.len() < m {
            return Err(Error::invalid(format!(
                "frame of {} samples is shorter than the code length {m}",
                samples.len()
            )));
        }
        let reps = self.shifts.len();
        let mut re = vec![0.0; reps];
        let mut im = vec![0.0; reps];
        let mut best = Detection { metric: f64::NEG_INFINITY, c_hat: 1, k_hat: 0 };
        let scale = m as f64;
        for k in 0..=samples.len() - m {
            re.fill(0.0);
            im.fill(0.0);
            for (i, y) in samples[k..k + m].iter().enumerate() {
                let row = &self.coef[i * reps..(i + 1) * reps];
                for ((a, b), &s) in re.iter_mut().zip(im.iter_mut()).zip(row) {
                    *a += s * y.re;
                    *b += s * y.im;
                }
            }
            for (r, &c) in self.shifts.iter().enumerate() {
                let metric = (re[r] * re[r] + im[r] * im[r]) / scale;
                if metric > best.metric {
                    best = Detection { metric, c_hat: c, k_hat: k };
                }
            }
        }
        Ok(best)
    }
}

pub fn detect(samples: &[Complex64], code: &BinarySequence) -> Result<Detection> {
    Correlator::new(code).detect(samples)
}

#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub id: u32,
    pub correlator: &'a Correlator,
    /// Absolute threshold `r`.
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RisDecision {
    pub metric: f64,
    pub c_hat: usize,
    pub k_hat: usize,
    /// `metric > threshold`.
    pub decided: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub per_ris: BTreeMap<u32, RisDecision>,
    pub threshold_used: BTreeMap<u32, f64>,
}

impl DetectionReport {
    pub fn decided(&self, id: u32) -> Option<bool> {
        self.per_ris.get(&id).map(|d| d.decided)
    }
}

/// Runs every candidate independently against the same frame.
pub fn run_ris_id(samples: &[Complex64], candidates: &[Candidate<'_>]) -> Result<DetectionReport> {
    let mut report = DetectionReport::default();
    for cand in candidates {
        let d = cand.correlator.detect(samples)?;
        let decision = RisDecision {
            metric: d.metric,
            c_hat: d.c_hat,
            k_hat: d.k_hat,
            decided: d.metric > cand.threshold,
        };
        if report.per_ris.insert(cand.id, decision).is_some() {
            return Err(Error::invalid(format!("candidate id {} listed twice", cand.id)));
        }
        report.threshold_used.insert(cand.id, cand.threshold);
    }
    Ok(report)
}
