//! Closed-form and semi-analytical detection probabilities.
//!
//! All formulas use the uncorrelated-element approximation, under which the
//! cascaded gain of an `N`-element RIS is `CN(0, N P β)`.

use std::f64::consts::{FRAC_2_SQRT_PI, PI, SQRT_2};
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codes::CrossCorrPmf;
use crate::error::{Error, NumericalFailure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub m: usize,
    pub n: usize,
    /// Transmit power in watts.
    pub p: f64,
    pub beta: f64,
    pub noise_variance: f64,
    pub v_total: usize,
    pub r_bar: f64,
    /// Fraction of distinct correlator outputs per window start.
    pub rho: f64,
}

impl OperatingPoint {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::invalid("M and N must be positive"));
        }
        for (name, v) in [
            ("transmit power", self.p),
            ("path gain", self.beta),
            ("noise variance", self.noise_variance),
            ("rho", self.rho),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.r_bar.is_finite() && self.r_bar >= 0.0) {
            return Err(Error::invalid(format!("normalized threshold must be >= 0, got {}", self.r_bar)));
        }
        Ok(())
    }

    /// Absolute threshold `r = r̄² σ_n²`.
    pub fn r(&self) -> f64 {
        self.r_bar * self.r_bar * self.noise_variance
    }

    /// Mean of `|h̃|²`, `N P β`.
    pub fn gain_power(&self) -> f64 {
        self.n as f64 * self.p * self.beta
    }

    pub fn with_r_bar(&self, r_bar: f64) -> Self {
        Self { r_bar, ..*self }
    }
}

fn clamp01(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

/// `(v_total + 1) M ρ e^{-r̄²}` before clamping.
pub fn pf_single_bound_raw(op: &OperatingPoint) -> f64 {
    (op.v_total as f64 + 1.0) * op.m as f64 * op.rho * (-op.r_bar * op.r_bar).exp()
}

pub fn pf_single_bound(op: &OperatingPoint) -> f64 {
    pf_single_bound_raw(op).min(1.0)
}

/// `1 - exp(-r / (N P β M))`.
pub fn pmiss_single(op: &OperatingPoint) -> f64 {
    clamp01(-(-op.r() / (op.gain_power() * op.m as f64)).exp_m1())
}

/// Single-interferer false detection, `½ Σ_w exp(-r M / (N P β a_w)) P(a_w)`.
/// Support points with `a_w = 0` contribute nothing.
pub fn pf_two(op: &OperatingPoint, pmf: &CrossCorrPmf) -> f64 {
    let r = op.r();
    let g = op.gain_power() / op.m as f64;
    let sum: f64 = pmf
        .iter()
        .filter(|&(a, _)| a > 0)
        .map(|(a, p)| p * (-r / (g * a as f64)).exp())
        .sum();
    clamp01(0.5 * sum)
}

/// Dawson's integral `F(x) = e^{-x²} ∫₀ˣ e^{t²} dt`.
pub fn dawson(x: f64) -> f64 {
    const H: f64 = 0.2;
    const TERMS: usize = 16;
    let ax = x.abs();
    if ax < 0.2 {
        // F(x) = Σ (-2x²)ⁿ x / (2n+1)!!
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        for n in 1..20 {
            term *= -2.0 * x2 / (2 * n + 1) as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        return sum;
    }
    // Rybicki's sampling-theorem expansion around the nearest even multiple of H.
    let n0 = 2.0 * (0.5 * ax / H).round();
    let xp = ax - n0 * H;
    let mut e1 = (2.0 * xp * H).exp();
    let e2 = e1 * e1;
    let mut d1 = n0 + 1.0;
    let mut d2 = d1 - 2.0;
    let mut sum = 0.0;
    for i in 0..TERMS {
        let c = (-(((2 * i + 1) as f64) * H).powi(2)).exp();
        sum += c * (e1 / d1 + 1.0 / (d2 * e1));
        d1 += 2.0;
        d2 -= 2.0;
        e1 *= e2;
    }
    0.5 * FRAC_2_SQRT_PI * x.signum() * (-xp * xp).exp() * sum
}

/// Characteristic function of a Rayleigh variable with scale `σ`
/// (density `r/σ² e^{-r²/(2σ²)}`).
pub fn rayleigh_cf(sigma: f64, w: f64) -> Complex64 {
    let u = sigma * w;
    let re = 1.0 - SQRT_2 * u * dawson(u / SQRT_2);
    let im = (PI / 2.0).sqrt() * u * (-0.5 * u * u).exp();
    Complex64::new(re, im)
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, evals: &mut usize) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    *evals += 15;
    (kronrod * h, (kronrod - gauss).abs() * h)
}

fn adaptive<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: f64, depth: u32, evals: &mut usize) -> f64 {
    let (value, err) = gk15(f, a, b, evals);
    if err <= tol || depth == 0 {
        return value;
    }
    let c = 0.5 * (a + b);
    adaptive(f, a, c, 0.5 * tol, depth - 1, evals) + adaptive(f, c, b, 0.5 * tol, depth - 1, evals)
}

/// Tolerances of the Gil-Pelaez inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionSettings {
    /// Truncate once `|Ψ(w)|` falls below this.
    pub cf_floor: f64,
    /// Accept once two successive doublings of the limit move the CDF less than this.
    pub delta_tol: f64,
    pub panel_tol: f64,
    pub max_evaluations: usize,
}

impl Default for InversionSettings {
    fn default() -> Self {
        Self { cf_floor: 1e-8, delta_tol: 1e-6, panel_tol: 1e-11, max_evaluations: 200_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub value: f64,
    pub raw: f64,
    pub upper_limit: f64,
    pub evaluations: usize,
}

/// CDF from a characteristic function,
/// `F(x) = ½ - (1/π) ∫₀^∞ Im{e^{-jwx} Ψ(w)} / w dw`.
pub fn gil_pelaez_cdf<C: Fn(f64) -> Complex64>(x: f64, cf: C) -> Result<f64> {
    Ok(gil_pelaez(x, cf, &InversionSettings::default())?.value)
}

pub fn gil_pelaez<C: Fn(f64) -> Complex64>(x: f64, cf: C, settings: &InversionSettings) -> Result<Inversion> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("CDF point must be finite, got {x}")));
    }
    // Frequency over which Ψ departs visibly from 1.
    let departs = |w: f64| (Complex64::new(1.0, 0.0) - cf(w)).norm() > 0.5;
    let mut w_scale = 1.0;
    if departs(w_scale) {
        for _ in 0..200 {
            if !departs(w_scale * 0.5) {
                break;
            }
            w_scale *= 0.5;
        }
    } else {
        for _ in 0..200 {
            w_scale *= 2.0;
            if departs(w_scale) {
                break;
            }
        }
    }
    let mut width = w_scale;
    if x != 0.0 {
        width = width.min(PI / (2.0 * x.abs()));
    }
    let mut evals = 0usize;
    let mut integrand = |w: f64| (Complex64::from_polar(1.0, -w * x) * cf(w)).im / w;
    let mut integrate_to = |from: f64, to: f64, evals: &mut usize| {
        let mut sum = 0.0;
        let mut a = from;
        while a < to {
            let b = (a + width).min(to);
            sum += adaptive(&mut integrand, a, b, settings.panel_tol, 30, evals);
            a = b;
        }
        sum
    };
    let mut upper = 8.0 * width.max(w_scale);
    let mut total = integrate_to(0.0, upper, &mut evals);
    let mut small_deltas = 0;
    let mut last_delta = f64::INFINITY;
    loop {
        if cf(upper).norm() < settings.cf_floor {
            break;
        }
        let part = integrate_to(upper, 2.0 * upper, &mut evals);
        total += part;
        upper *= 2.0;
        last_delta = part.abs() / PI;
        if last_delta < settings.delta_tol {
            small_deltas += 1;
            if small_deltas >= 2 {
                break;
            }
        } else {
            small_deltas = 0;
        }
        if evals > settings.max_evaluations {
            return Err(NumericalFailure {
                reason: "Gil-Pelaez integral did not converge",
                x,
                upper_limit: upper,
                last_delta,
                evaluations: evals,
            }
            .into());
        }
    }
    let _ = last_delta;
    let raw = 0.5 - total / PI;
    Ok(Inversion { value: clamp01(raw), raw, upper_limit: upper, evaluations: evals })
}

/// Rayleigh scale of `|√M h̃|` for the target RIS.
fn own_scale(op: &OperatingPoint) -> f64 {
    (op.m as f64 * op.gain_power() / 2.0).sqrt()
}

/// Rayleigh scale of the interferer's worst-case leakage `|Ã h̃| / √M`.
fn interferer_scale(op: &OperatingPoint, a_tilde: u64) -> f64 {
    let a = a_tilde as f64;
    (a * a * op.gain_power() / (2.0 * op.m as f64)).sqrt()
}

/// Two-RIS miss detection lower bound before clamping.
///
/// The target is missed with probability `pmiss_single` when the interferer is
/// unreachable and at least `P(R₁ + R₂ < √r)` when it is reachable, where
/// `R₁ = |√M h̃₁|` and `R₂ = |Ã h̃₂| / √M`; the two states are equally likely.
pub fn pmiss_two_raw(op: &OperatingPoint, a_tilde: u64) -> Result<f64> {
    let alone = pmiss_single(op);
    let s1 = own_scale(op);
    let s2 = interferer_scale(op, a_tilde) / s1;
    let x = op.r().sqrt() / s1;
    let both = if a_tilde == 0 {
        alone
    } else {
        gil_pelaez(x, |w| rayleigh_cf(1.0, w) * rayleigh_cf(s2, w), &InversionSettings::default())?.raw
    };
    Ok(0.5 * alone + 0.5 * both)
}

pub fn pmiss_two(op: &OperatingPoint, a_tilde: u64) -> Result<f64> {
    Ok(clamp01(pmiss_two_raw(op, a_tilde)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RisSize {
    pub raw: f64,
    pub elements: u64,
}

/// Smallest `N` meeting a single-RIS miss target; `op.n` is ignored.
pub fn required_ris_size(op: &OperatingPoint, target_pmiss: f64) -> Result<RisSize> {
    if !(target_pmiss > 0.0 && target_pmiss < 1.0) {
        return Err(Error::invalid(format!("target miss probability {target_pmiss} outside (0, 1)")));
    }
    let raw = -op.r() / (op.p * op.beta * op.m as f64 * (-target_pmiss).ln_1p());
    Ok(RisSize { raw, elements: raw.ceil().max(1.0) as u64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    PfSingleBound,
    PfTwo,
    PmissSingle,
    PmissTwoLower,
}

impl CurveKind {
    pub fn name(self) -> &'static str {
        match self {
            CurveKind::PfSingleBound => "pf_single_bound",
            CurveKind::PfTwo => "pf_two",
            CurveKind::PmissSingle => "pmiss_single",
            CurveKind::PmissTwoLower => "pmiss_two_lower",
        }
    }

    pub fn is_false_detection(self) -> bool {
        matches!(self, CurveKind::PfSingleBound | CurveKind::PfTwo)
    }
}

pub const THEORY_CSV_HEADER: &str = "r_bar,value,kind,M,N,P_dBm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryCurve {
    pub kind: CurveKind,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl TheoryCurve {
    /// Evaluates `kind` on an ascending `r̄` grid. `pmf` is required for the
    /// two-RIS kinds.
    pub fn evaluate(
        kind: CurveKind,
        op: &OperatingPoint,
        r_bars: &[f64],
        pmf: Option<&CrossCorrPmf>,
    ) -> Result<Self> {
        op.validate()?;
        if r_bars.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("threshold grid must be ascending"));
        }
        let need_pmf = || pmf.ok_or_else(|| Error::invalid(format!("{} needs a cross-correlation pmf", kind.name())));
        let mut y = Vec::with_capacity(r_bars.len());
        for &r_bar in r_bars {
            let p = op.with_r_bar(r_bar);
            y.push(match kind {
                CurveKind::PfSingleBound => pf_single_bound(&p),
                CurveKind::PmissSingle => pmiss_single(&p),
                CurveKind::PfTwo => pf_two(&p, need_pmf()?),
                CurveKind::PmissTwoLower => pmiss_two(&p, need_pmf()?.a_tilde)?,
            });
        }
        Ok(Self { kind, x: r_bars.to_vec(), y })
    }

    /// Monotone direction expected of this kind.
    pub fn is_monotone(&self) -> bool {
        self.y.windows(2).all(|w| {
            if self.kind.is_false_detection() {
                w[1] <= w[0] + 1e-12
            } else {
                w[1] + 1e-12 >= w[0]
            }
        })
    }

    /// CSV rows (no header) tagged with the operating point.
    pub fn csv_rows(&self, m: usize, n: usize, p_dbm: f64) -> String {
        let mut out = String::new();
        for (x, y) in self.x.iter().zip(&self.y) {
            let _ = writeln!(out, "{x},{y:e},{},{m},{n},{p_dbm}", self.kind.name());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweep {
    pub pf: TheoryCurve,
    pub pmiss: TheoryCurve,
    /// Smallest grid `r̄` with `P_F ≤ pf_cap`.
    pub min_r_bar_for_pf: Option<f64>,
    /// Largest grid `r̄` with `P_miss ≤ pmiss_cap`.
    pub max_r_bar_for_pmiss: Option<f64>,
    /// Grid points meeting both caps.
    pub feasible_r_bars: Vec<f64>,
    pub feasible: bool,
}

/// Joint threshold selection on an ascending grid. Uses the single-RIS pair
/// when `pmf` is `None` and the two-RIS pair otherwise.
pub fn pf_pmiss_threshold_sweep(
    op: &OperatingPoint,
    r_bars: &[f64],
    pmf: Option<&CrossCorrPmf>,
    pf_cap: f64,
    pmiss_cap: f64,
) -> Result<ThresholdSweep> {
    let (pf_kind, pm_kind) = match pmf {
        None => (CurveKind::PfSingleBound, CurveKind::PmissSingle),
        Some(_) => (CurveKind::PfTwo, CurveKind::PmissTwoLower),
    };
    let pf = TheoryCurve::evaluate(pf_kind, op, r_bars, pmf)?;
    let pmiss = TheoryCurve::evaluate(pm_kind, op, r_bars, pmf)?;
    let min_r_bar_for_pf = pf.x.iter().zip(&pf.y).find(|(_, &y)| y <= pf_cap).map(|(&x, _)| x);
    let max_r_bar_for_pmiss = pmiss.x.iter().zip(&pmiss.y).rev().find(|(_, &y)| y <= pmiss_cap).map(|(&x, _)| x);
    let feasible_r_bars: Vec<f64> = r_bars
        .iter()
        .zip(pf.y.iter().zip(&pmiss.y))
        .filter(|(_, (&a, &b))| a <= pf_cap && b <= pmiss_cap)
        .map(|(&x, _)| x)
        .collect();
    Ok(ThresholdSweep {
        feasible: !feasible_r_bars.is_empty(),
        pf,
        pmiss,
        min_r_bar_for_pf,
        max_r_bar_for_pmiss,
        feasible_r_bars,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3_point() -> OperatingPoint {
        OperatingPoint {
            m: 16,
            n: 64,
            p: 1.0,
            beta: 1e-12,
            noise_variance: 1e-13,
            v_total: 4,
            r_bar: 3.0,
            rho: 0.5,
        }
    }

    #[test]
    fn single_bound_values() {
        let op = fig3_point();
        let expected = 40.0 * (-9.0f64).exp();
        assert!((pf_single_bound(&op) - expected).abs() < 1e-15);
        assert!((pf_single_bound(&op) - 0.005).abs() < 1e-3);
        assert_eq!(pf_single_bound(&op.with_r_bar(0.0)), 1.0);
        assert!(pf_single_bound_raw(&op.with_r_bar(0.0)) > 1.0);
    }

    #[test]
    fn pmiss_single_edges() {
        let op = fig3_point();
        assert_eq!(pmiss_single(&op.with_r_bar(0.0)), 0.0);
        let x = op.r() / (op.gain_power() * 16.0);
        assert!((pmiss_single(&op) - (1.0 - (-x).exp())).abs() < 1e-15);
    }

    #[test]
    fn dawson_reference_values() {
        // Values of Dawson's integral from standard tables.
        let table = [
            (0.1, 0.099_335_992_397_852_9),
            (0.5, 0.424_436_383_502_022_3),
            (0.924_138_873_004_591_9, 0.541_044_224_635_181_8),
            (1.0, 0.538_079_506_912_768_4),
            (2.0, 0.301_340_388_923_792),
            (5.0, 0.102_134_074_424_276_86),
            (10.0, 0.050_253_847_187_598_54),
        ];
        for (x, f) in table {
            assert!((dawson(x) - f).abs() < 1e-13, "F({x}) = {} vs {f}", dawson(x));
            assert!((dawson(-x) + f).abs() < 1e-13);
        }
        assert!((dawson(0.19999) - dawson(0.20001)).abs() < 1e-4);
    }

    #[test]
    fn rayleigh_cf_basics() {
        assert_eq!(rayleigh_cf(2.0, 0.0), Complex64::new(1.0, 0.0));
        for w in [0.1, 0.7, 3.0, 20.0] {
            let a = rayleigh_cf(1.3, w);
            assert!((rayleigh_cf(1.3, -w) - a.conj()).norm() < 1e-15);
            assert!(a.norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn gil_pelaez_point_mass() {
        let cf = |w: f64| Complex64::from_polar(1.0, w);
        assert!((gil_pelaez_cdf(2.0, cf).unwrap() - 1.0).abs() < 1e-3);
        assert!(gil_pelaez_cdf(0.5, cf).unwrap().abs() < 1e-3);
    }

    #[test]
    fn gil_pelaez_single_rayleigh() {
        for x in [0.2, 1.0, 2.5] {
            let f = gil_pelaez_cdf(x, |w| rayleigh_cf(1.0, w)).unwrap();
            let exact = 1.0 - (-x * x / 2.0).exp();
            assert!((f - exact).abs() < 1e-6, "x = {x}: {f} vs {exact}");
        }
        let far = gil_pelaez_cdf(50.0, |w| rayleigh_cf(1.0, w)).unwrap();
        assert!((far - 1.0).abs() < 1e-3);
    }

    #[test]
    fn pmiss_two_without_leakage_is_single() {
        let op = fig3_point();
        let a = pmiss_two(&op, 0).unwrap();
        assert!((a - pmiss_single(&op)).abs() < 1e-15);
    }

    #[test]
    fn required_size_inverts_pmiss() {
        let op = fig3_point();
        let size = required_ris_size(&op, 1e-2).unwrap();
        let n_raw = size.raw;
        let back = 1.0 - (-op.r() / (n_raw * op.p * op.beta * 16.0)).exp();
        assert!((back - 1e-2).abs() < 1e-12);
        assert!(size.elements as f64 >= n_raw);
        let tighter = required_ris_size(&op, 1e-4).unwrap();
        assert!(tighter.raw > n_raw);
        assert!(required_ris_size(&op, 0.0).is_err());
        assert!(required_ris_size(&op, 1.0).is_err());
    }

    #[test]
    fn sweep_with_loose_caps_is_feasible() {
        let op = fig3_point();
        let grid: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let s = pf_pmiss_threshold_sweep(&op, &grid, None, 1.0, 1.0).unwrap();
        assert!(s.feasible);
        assert_eq!(s.feasible_r_bars.len(), grid.len());
        assert!(s.pf.is_monotone() && s.pmiss.is_monotone());
        assert!(TheoryCurve::evaluate(CurveKind::PfTwo, &op, &grid, None).is_err());
        assert!(TheoryCurve::evaluate(CurveKind::PfSingleBound, &op, &[2.0, 1.0], None).is_err());
    }

    #[test]
    fn csv_rows_format() {
        let c = TheoryCurve { kind: CurveKind::PmissSingle, x: vec![1.0], y: vec![0.25] };
        assert_eq!(c.csv_rows(16, 64, 10.0), "1,2.5e-1,pmiss_single,16,64,10\n");
    }
}
