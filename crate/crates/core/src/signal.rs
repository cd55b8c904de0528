//! Received-frame synthesis.
//!
//! A frame is `v1` noise-only samples, `M` samples carrying the superposed
//! reflections, then `v2 = v_total - v1` noise-only samples. The carrier is the
//! baseband constant `x = 1`, so an RIS reflecting symbol `s` contributes `s·h̃`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{correlation_for, ChannelRealization, CorrelationMatrix, LinkBudget, Spacing};
use crate::codes::BinarySequence;
use crate::error::{Error, Result};
use crate::rng::{Lane, TrialStreams};

/// Thermal noise floor in dBm/Hz.
pub const THERMAL_FLOOR_DBM_HZ: f64 = -174.0;

/// Phase applied for bit `q`: `0` for `q = 1`, `π` for `q = 0`.
pub fn psrp_phase(q: u8) -> Result<f64> {
    match q {
        1 => Ok(0.0),
        0 => Ok(PI),
        _ => Err(Error::invalid(format!("PSRP bit must be 0 or 1, got {q}"))),
    }
}

/// BPSK symbol `e^{jφ}` for a PSRP phase of `0` or `π`.
pub fn phase_symbol(phase: f64) -> i8 {
    if phase.cos() > 0.0 {
        1
    } else {
        -1
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn noise_variance_from_bandwidth(bw: f64) -> Result<f64> {
    if !(bw.is_finite() && bw > 0.0) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bw}")));
    }
    Ok(dbm_to_watts(THERMAL_FLOOR_DBM_HZ + 10.0 * bw.log10()))
}

/// Default padding budget, `⌈M/4⌉`.
pub fn default_v_total(m: usize) -> usize {
    m.div_ceil(4).max(1)
}

#[derive(Debug, Clone)]
pub struct RisProfile {
    pub id: u32,
    pub code: BinarySequence,
    pub spacing: Spacing,
    pub correlation: Arc<CorrelationMatrix>,
    pub link: LinkBudget,
}

impl RisProfile {
    /// Builds the profile of an `n`-element RIS with `n_h` elements per row.
    pub fn new(
        id: u32,
        code: BinarySequence,
        n: usize,
        n_h: usize,
        spacing: Spacing,
        link: LinkBudget,
    ) -> Result<Self> {
        let correlation = Arc::new(correlation_for(spacing, n, n_h, link.wavelength())?);
        Ok(Self { id, code, spacing, correlation, link })
    }

    pub fn n(&self) -> usize {
        self.correlation.len()
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub m: usize,
    pub v_total: usize,
    pub tx_power_w: f64,
    pub noise_variance_w: f64,
    pub ris: Vec<RisProfile>,
}

impl Scenario {
    pub fn new(
        m: usize,
        v_total: usize,
        tx_power_w: f64,
        noise_variance_w: f64,
        ris: Vec<RisProfile>,
    ) -> Result<Self> {
        if v_total == 0 || v_total >= m {
            return Err(Error::invalid(format!(
                "padding budget {v_total} must satisfy 1 <= v1+v2 < M = {m}"
            )));
        }
        if !(tx_power_w.is_finite() && tx_power_w >= 0.0) {
            return Err(Error::invalid("transmit power must be non-negative"));
        }
        if !(noise_variance_w.is_finite() && noise_variance_w >= 0.0) {
            return Err(Error::invalid("noise variance must be non-negative"));
        }
        let mut ids = BTreeMap::new();
        let mut rows = BTreeMap::new();
        for p in &ris {
            if p.code.len() != m {
                return Err(Error::invalid(format!(
                    "RIS {} code length {} differs from M = {m}",
                    p.id,
                    p.code.len()
                )));
            }
            if ids.insert(p.id, ()).is_some() {
                return Err(Error::invalid(format!("duplicate RIS id {}", p.id)));
            }
            if let Some(other) = rows.insert(p.code.symbols().to_vec(), p.id) {
                return Err(Error::invalid(format!("RIS {} and RIS {other} share a code", p.id)));
            }
        }
        Ok(Self { m, v_total, tx_power_w, noise_variance_w, ris })
    }

    pub fn frame_len(&self) -> usize {
        self.m + self.v_total
    }

    pub fn profile(&self, id: u32) -> Option<&RisProfile> {
        self.ris.iter().find(|p| p.id == id)
    }
}

/// Everything drawn for one frame. Never shown to the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub v1: usize,
    pub v2: usize,
    /// Offset `c ∈ 1..=M` of each RIS.
    pub c_per_ris: BTreeMap<u32, usize>,
    /// Channels of the reachable RISs; unreachable ones are never drawn.
    pub realizations: BTreeMap<u32, ChannelRealization>,
    pub reachability: BTreeMap<u32, bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub samples: Vec<Complex64>,
    pub truth: FrameTruth,
    pub noise_variance: f64,
}

fn complex_noise<R: Rng + ?Sized>(rng: &mut R, std: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std
}

/// Draws the frame-level quantities: `v1 ~ U{1..v_total}`, then the noise.
pub fn draw_noise(scenario: &Scenario, streams: &TrialStreams) -> (usize, Vec<Complex64>) {
    let mut rng = streams.lane(Lane::Frame);
    let v1 = rng.random_range(1..=scenario.v_total);
    let std = (scenario.noise_variance_w / 2.0).sqrt();
    let noise = (0..scenario.frame_len()).map(|_| complex_noise(&mut rng, std)).collect();
    (v1, noise)
}

/// Draws the offset of one RIS and, if it is reachable, its channel. Both come
/// from the RIS's own lane, offset first.
pub fn draw_ris(
    scenario: &Scenario,
    profile: &RisProfile,
    reachable: bool,
    streams: &TrialStreams,
) -> (usize, Option<ChannelRealization>) {
    let mut rng = streams.lane(Lane::Ris(profile.id));
    let c = rng.random_range(1..=scenario.m);
    let real = reachable.then(|| {
        ChannelRealization::draw(&profile.correlation, &profile.link, scenario.tx_power_w, &mut rng)
    });
    (c, real)
}

/// Adds the reflections of the reachable RISs in `truth` to `base`.
pub fn compose_frame(
    scenario: &Scenario,
    truth: &FrameTruth,
    base: &[Complex64],
) -> Result<Vec<Complex64>> {
    if base.len() != scenario.frame_len() {
        return Err(Error::invalid(format!(
            "base frame has {} samples, expected {}",
            base.len(),
            scenario.frame_len()
        )));
    }
    let mut y = base.to_vec();
    for p in &scenario.ris {
        if !truth.reachability.get(&p.id).copied().unwrap_or(false) {
            continue;
        }
        let c = truth.c_per_ris[&p.id];
        let h = truth.realizations[&p.id].h_tilde;
        for (m, sample) in y[truth.v1..truth.v1 + scenario.m].iter_mut().enumerate() {
            *sample += h * f64::from(p.code.shifted_symbol(c, m));
        }
    }
    Ok(y)
}

/// Synthesizes one frame; `reachability[i]` belongs to `scenario.ris[i]`.
pub fn synthesize_frame(
    scenario: &Scenario,
    reachability: &[bool],
    streams: &TrialStreams,
) -> Result<ReceivedFrame> {
    if reachability.len() != scenario.ris.len() {
        return Err(Error::invalid(format!(
            "{} reachability flags for {} RISs",
            reachability.len(),
            scenario.ris.len()
        )));
    }
    let (v1, noise) = draw_noise(scenario, streams);
    let mut truth = FrameTruth {
        v1,
        v2: scenario.v_total - v1,
        c_per_ris: BTreeMap::new(),
        realizations: BTreeMap::new(),
        reachability: BTreeMap::new(),
    };
    for (p, &eta) in scenario.ris.iter().zip(reachability) {
        let (c, real) = draw_ris(scenario, p, eta, streams);
        truth.c_per_ris.insert(p.id, c);
        if let Some(real) = real {
            truth.realizations.insert(p.id, real);
        }
        truth.reachability.insert(p.id, eta);
    }
    let samples = compose_frame(scenario, &truth, &noise)?;
    Ok(ReceivedFrame { samples, truth, noise_variance: scenario.noise_variance_w })
}

/// Text export of a frame: samples interleaved `re, im`, plus the truth block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFile {
    pub m: usize,
    pub noise_variance: f64,
    pub samples: Vec<f64>,
    pub truth: FrameTruthFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruthFile {
    pub v1: usize,
    pub v2: usize,
    pub ris: Vec<RisTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisTruth {
    pub id: u32,
    pub c: usize,
    pub reachable: bool,
    pub h_tilde: Option<[f64; 2]>,
}

impl ReceivedFrame {
    pub fn to_file(&self, m: usize) -> FrameFile {
        let samples = self.samples.iter().flat_map(|s| [s.re, s.im]).collect();
        let ris = self
            .truth
            .c_per_ris
            .iter()
            .map(|(&id, &c)| {
                let h_tilde = self.truth.realizations.get(&id).map(|r| [r.h_tilde.re, r.h_tilde.im]);
                RisTruth { id, c, reachable: self.truth.reachability[&id], h_tilde }
            })
            .collect();
        FrameFile {
            m,
            noise_variance: self.noise_variance,
            samples,
            truth: FrameTruthFile { v1: self.truth.v1, v2: self.truth.v2, ris },
        }
    }
}

impl FrameFile {
    pub fn samples(&self) -> Result<Vec<Complex64>> {
        if !self.samples.len().is_multiple_of(2) {
            return Err(Error::invalid("interleaved sample list has odd length"));
        }
        Ok(self.samples.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect())
    }
}
