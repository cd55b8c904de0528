//! Experiment configuration files.
//!
//! A config is a flat TOML document. Quantities carry their unit in the key
//! (`p_dbm`, `d_ur_m`, `f_c_hz`); derived quantities such as path gain or noise
//! power are never accepted. Every key is optional and falls back to the
//! command's defaults. Scalar keys (`m`, `n`, `p_dbm`, `r_bar`, `spacing`) are
//! shorthands for one-element `*_grid` lists.

use std::fmt;
use std::ops::Range;

use risid_core::analysis::CurveKind;
use risid_core::channel::Spacing;
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::Command;

/// Invalid configuration, anchored to a line of the config file when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "config line {line}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CodeSet {
    /// `"best"` or `"worst"` subset of the Hadamard rows by set quality.
    Ranked(String),
    Rows(Vec<usize>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRis {
    id: Option<u32>,
    code_row: Option<Spanned<usize>>,
    n: Option<Spanned<usize>>,
    n_h: Option<Spanned<usize>>,
    spacing: Option<Spacing>,
    d_ur_m: Option<Spanned<f64>>,
    d_rb_m: Option<Spanned<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    trials: Option<Spanned<u64>>,
    m: Option<Spanned<usize>>,
    m_grid: Option<Spanned<Vec<usize>>>,
    v_total: Option<Spanned<usize>>,
    f_c_hz: Option<Spanned<f64>>,
    bandwidth_hz: Option<Spanned<f64>>,
    p_dbm: Option<Spanned<f64>>,
    p_dbm_grid: Option<Spanned<Vec<f64>>>,
    n: Option<Spanned<usize>>,
    n_grid: Option<Spanned<Vec<usize>>>,
    r_bar: Option<Spanned<f64>>,
    r_bar_grid: Option<Spanned<Vec<f64>>>,
    spacing: Option<Spacing>,
    spacing_grid: Option<Vec<Spacing>>,
    target_pmiss: Option<Spanned<f64>>,
    pf_cap: Option<Spanned<f64>>,
    pmiss_cap: Option<Spanned<f64>>,
    code_sets: Option<Spanned<Vec<CodeSet>>>,
    kinds: Option<Vec<CurveKind>>,
    escalate: Option<bool>,
    max_trials: Option<Spanned<u64>>,
    ris: Option<Vec<Spanned<RawRis>>>,
}

/// One RIS of the scenario. Unset fields take the grid or default values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisSettings {
    pub id: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code_row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_h: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing: Option<Spacing>,
    pub d_ur_m: f64,
    pub d_rb_m: f64,
}

/// Fully resolved configuration. Serializes back to a config file that
/// reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub seed: u64,
    pub trials: u64,
    pub m_grid: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_total: Option<usize>,
    pub f_c_hz: f64,
    pub bandwidth_hz: f64,
    pub p_dbm_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub r_bar_grid: Vec<f64>,
    pub spacing_grid: Vec<Spacing>,
    pub target_pmiss: f64,
    pub pf_cap: f64,
    pub pmiss_cap: f64,
    pub code_sets: Vec<CodeSet>,
    pub kinds: Vec<CurveKind>,
    pub escalate: bool,
    pub max_trials: u64,
    pub ris: Vec<RisSettings>,
}

impl Settings {
    /// Padding budget for code length `m`.
    pub fn v_total_for(&self, m: usize) -> usize {
        self.v_total.unwrap_or_else(|| risid_core::signal::default_v_total(m))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialize to TOML")
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

/// Command defaults: the reference operating point of each study.
pub fn defaults(cmd: Command) -> Settings {
    use Command::*;
    let powers = grid(-10.0, 30.0, 2.5);
    let mut s = Settings {
        seed: 1,
        trials: 100_000,
        m_grid: vec![16],
        v_total: None,
        f_c_hz: 1.8e9,
        bandwidth_hz: 20e6,
        p_dbm_grid: vec![10.0],
        n_grid: vec![64],
        r_bar_grid: vec![3.0],
        spacing_grid: vec![Spacing::Uncorrelated],
        target_pmiss: 1e-2,
        pf_cap: 1e-2,
        pmiss_cap: 1e-2,
        code_sets: vec![CodeSet::Ranked("best".into()), CodeSet::Ranked("worst".into())],
        kinds: vec![
            CurveKind::PfSingleBound,
            CurveKind::PmissSingle,
            CurveKind::PfTwo,
            CurveKind::PmissTwoLower,
        ],
        escalate: false,
        max_trials: 10_000_000,
        ris: Vec::new(),
    };
    let l = match cmd {
        PfSingle => {
            s.trials = 1_000_000;
            s.m_grid = vec![16, 32];
            s.r_bar_grid = grid(1.0, 4.0, 0.25);
            1
        }
        PmissCorr => {
            s.p_dbm_grid = powers;
            s.spacing_grid = vec![Spacing::Uncorrelated, Spacing::HalfWavelength, Spacing::TenthWavelength];
            1
        }
        PmissM => {
            s.m_grid = vec![16, 32];
            s.p_dbm_grid = powers;
            1
        }
        PmissN => {
            s.n_grid = vec![64, 256];
            s.p_dbm_grid = powers;
            1
        }
        PfTwoM => {
            s.m_grid = vec![16, 32];
            s.n_grid = vec![256];
            s.p_dbm_grid = vec![25.0];
            s.r_bar_grid = grid(5.0, 30.0, 2.5);
            2
        }
        PfTwoNp => {
            s.m_grid = vec![32];
            s.n_grid = vec![64, 128, 256];
            s.p_dbm_grid = vec![20.0, 25.0];
            s.r_bar_grid = grid(5.0, 30.0, 2.5);
            2
        }
        PmissTwoM => {
            s.m_grid = vec![16, 32];
            s.n_grid = vec![256];
            s.p_dbm_grid = vec![15.0];
            s.r_bar_grid = grid(5.0, 40.0, 5.0);
            2
        }
        PmissTwoNp => {
            s.m_grid = vec![32];
            s.n_grid = vec![128, 256];
            s.p_dbm_grid = vec![20.0, 25.0];
            s.r_bar_grid = grid(5.0, 40.0, 5.0);
            2
        }
        Tradeoff => {
            s.m_grid = vec![32];
            s.n_grid = vec![128];
            s.r_bar_grid = grid(0.5, 6.0, 0.25);
            1
        }
        Confusion => {
            s.trials = 10_000_000;
            s.m_grid = vec![32];
            s.n_grid = vec![128];
            s.p_dbm_grid = vec![25.0];
            s.r_bar_grid = vec![13.0, 17.0, 21.0];
            2
        }
        FiveRis => {
            s.trials = 1_000_000;
            s.n_grid = vec![128];
            s.p_dbm_grid = vec![15.0];
            s.r_bar_grid = grid(4.0, 20.0, 1.0);
            5
        }
        Theory => {
            s.r_bar_grid = grid(0.0, 40.0, 0.5);
            2
        }
        Design => {
            s.p_dbm_grid = powers;
            1
        }
    };
    s.ris = (1..=l as u32)
        .map(|id| RisSettings {
            id,
            code_row: None,
            n: None,
            n_h: None,
            spacing: None,
            d_ur_m: 10.0,
            d_rb_m: 50.0,
        })
        .collect();
    s
}

fn line_of(text: &str, span: Range<usize>) -> usize {
    text[..span.start.min(text.len())].matches('\n').count() + 1
}

/// A value with the byte span it was read from.
type Located<T> = (T, Range<usize>);

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err<T>(&self, span: Range<usize>, message: impl Into<String>) -> Result<T, ConfigError> {
        Err(ConfigError { line: Some(line_of(self.text, span)), message: message.into() })
    }

    fn positive(&self, v: &Spanned<f64>, name: &str) -> Result<f64, ConfigError> {
        let x = *v.get_ref();
        if !(x.is_finite() && x > 0.0) {
            return self.err(v.span(), format!("{name} must be a positive number, got {x}"));
        }
        Ok(x)
    }

    fn probability(&self, v: &Spanned<f64>, name: &str) -> Result<f64, ConfigError> {
        let x = *v.get_ref();
        if !(x > 0.0 && x < 1.0) {
            return self.err(v.span(), format!("{name} must lie strictly between 0 and 1, got {x}"));
        }
        Ok(x)
    }

    fn scalar_or_grid<T: Clone>(
        &self,
        scalar: Option<Spanned<T>>,
        grid: Option<Spanned<Vec<T>>>,
        name: &str,
    ) -> Result<Option<Located<Vec<T>>>, ConfigError> {
        match (scalar, grid) {
            (Some(_), Some(g)) => self.err(g.span(), format!("set either `{name}` or `{name}_grid`, not both")),
            (Some(s), None) => Ok(Some((vec![s.get_ref().clone()], s.span()))),
            (None, Some(g)) => {
                if g.get_ref().is_empty() {
                    return self.err(g.span(), format!("`{name}_grid` is empty"));
                }
                let span = g.span();
                Ok(Some((g.into_inner(), span)))
            }
            (None, None) => Ok(None),
        }
    }
}

/// Parses a config file and overlays it on the command's defaults.
pub fn load(cmd: Command, text: &str) -> Result<Settings, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
        line: e.span().map(|s| line_of(text, s)),
        message: e.message().trim().to_string(),
    })?;
    resolve(cmd, raw, text)
}

fn resolve(cmd: Command, raw: RawConfig, text: &str) -> Result<Settings, ConfigError> {
    let cx = Ctx { text };
    let mut s = defaults(cmd);
    if let Some(seed) = raw.seed {
        s.seed = seed;
    }
    if let Some(t) = &raw.trials {
        if *t.get_ref() == 0 {
            return cx.err(t.span(), "trials must be at least 1");
        }
        s.trials = *t.get_ref();
    }
    if let Some(t) = &raw.max_trials {
        if *t.get_ref() == 0 {
            return cx.err(t.span(), "max_trials must be at least 1");
        }
        s.max_trials = *t.get_ref();
    }
    if let Some(e) = raw.escalate {
        s.escalate = e;
    }
    if let Some(v) = &raw.f_c_hz {
        s.f_c_hz = cx.positive(v, "f_c_hz")?;
    }
    if let Some(v) = &raw.bandwidth_hz {
        s.bandwidth_hz = cx.positive(v, "bandwidth_hz")?;
    }
    if let Some(v) = &raw.target_pmiss {
        s.target_pmiss = cx.probability(v, "target_pmiss")?;
    }
    if let Some(v) = &raw.pf_cap {
        s.pf_cap = cx.probability(v, "pf_cap")?;
    }
    if let Some(v) = &raw.pmiss_cap {
        s.pmiss_cap = cx.probability(v, "pmiss_cap")?;
    }

    let m_span = match cx.scalar_or_grid(raw.m, raw.m_grid, "m")? {
        Some((g, span)) => {
            for &m in &g {
                if m < 4 || !m.is_power_of_two() {
                    return cx.err(span, format!("code length {m} must be a power of two >= 4"));
                }
            }
            s.m_grid = g;
            Some(span)
        }
        None => None,
    };
    if let Some(v) = &raw.v_total {
        let vt = *v.get_ref();
        if let Some(&m) = s.m_grid.iter().find(|&&m| vt == 0 || vt >= m) {
            return cx.err(v.span(), format!("v_total = {vt} must satisfy 1 <= v_total < M = {m}"));
        }
        s.v_total = Some(vt);
    }
    if let Some((g, span)) = cx.scalar_or_grid(raw.n, raw.n_grid, "n")? {
        if g.contains(&0) {
            return cx.err(span, "RIS element counts must be positive");
        }
        s.n_grid = g;
    }
    if let Some((g, span)) = cx.scalar_or_grid(raw.p_dbm, raw.p_dbm_grid, "p_dbm")? {
        if g.iter().any(|p| !p.is_finite()) {
            return cx.err(span, "transmit powers must be finite");
        }
        s.p_dbm_grid = g;
    }
    if let Some((g, span)) = cx.scalar_or_grid(raw.r_bar, raw.r_bar_grid, "r_bar")? {
        if g.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return cx.err(span, "normalized thresholds must be finite and >= 0");
        }
        if g.windows(2).any(|w| w[1] <= w[0]) {
            return cx.err(span, "normalized thresholds must be strictly ascending");
        }
        s.r_bar_grid = g;
    }
    match (raw.spacing, raw.spacing_grid) {
        (Some(_), Some(_)) => {
            return Err(ConfigError { line: None, message: "set either `spacing` or `spacing_grid`, not both".into() })
        }
        (Some(sp), None) => s.spacing_grid = vec![sp],
        (None, Some(g)) if g.is_empty() => {
            return Err(ConfigError { line: None, message: "`spacing_grid` is empty".into() })
        }
        (None, Some(g)) => s.spacing_grid = g,
        (None, None) => {}
    }
    if let Some(k) = raw.kinds {
        if k.is_empty() {
            return Err(ConfigError { line: None, message: "`kinds` is empty".into() });
        }
        s.kinds = k;
    }
    if let Some(sets) = raw.code_sets {
        let span = sets.span();
        for set in sets.get_ref() {
            match set {
                CodeSet::Ranked(name) if name != "best" && name != "worst" => {
                    return cx.err(span.clone(), format!("unknown code set `{name}`; use \"best\", \"worst\" or a row list"));
                }
                CodeSet::Rows(rows) => {
                    check_rows(&cx, rows, &s.m_grid, span.clone())?;
                }
                _ => {}
            }
        }
        s.code_sets = sets.into_inner();
    }

    if let Some(list) = raw.ris {
        let expected = s.ris.len();
        if list.len() != expected {
            let span = list.first().map(|r| r.span()).unwrap_or(0..0);
            return cx.err(span, format!("`{}` needs exactly {expected} [[ris]] entries, found {}", cmd.name(), list.len()));
        }
        let mut out = Vec::with_capacity(list.len());
        for (i, entry) in list.into_iter().enumerate() {
            let span = entry.span();
            let r = entry.into_inner();
            let id = r.id.unwrap_or(i as u32 + 1);
            if out.iter().any(|o: &RisSettings| o.id == id) {
                return cx.err(span, format!("duplicate RIS id {id}"));
            }
            if let Some(n) = &r.n {
                if *n.get_ref() == 0 {
                    return cx.err(n.span(), "RIS element count must be positive");
                }
            }
            if let Some(nh) = &r.n_h {
                if *nh.get_ref() == 0 {
                    return cx.err(nh.span(), "n_h must be positive");
                }
            }
            let mut d_ur_m = 10.0;
            if let Some(d) = &r.d_ur_m {
                d_ur_m = cx.positive(d, "d_ur_m")?;
            }
            let mut d_rb_m = 50.0;
            if let Some(d) = &r.d_rb_m {
                d_rb_m = cx.positive(d, "d_rb_m")?;
            }
            if let Some(row) = &r.code_row {
                let code_row = *row.get_ref();
                if let Some(m) = s.m_grid.iter().find(|&&m| code_row == 0 || code_row >= m) {
                    return cx.err(
                        row.span(),
                        format!("code_row {code_row} must lie in 1..{m}; row 0 is the all-ones row, indistinguishable from a static scatterer"),
                    );
                }
                if out.iter().any(|o: &RisSettings| o.code_row == Some(code_row)) {
                    return cx.err(row.span(), format!("code_row {code_row} is assigned to two RISs"));
                }
            }
            out.push(RisSettings {
                id,
                code_row: r.code_row.map(|v| v.into_inner()),
                n: r.n.map(|v| v.into_inner()),
                n_h: r.n_h.map(|v| v.into_inner()),
                spacing: r.spacing,
                d_ur_m,
                d_rb_m,
            });
        }
        s.ris = out;
    }
    // Defaulted rows must also stay in range for every code length.
    for &m in &s.m_grid {
        let rows: Vec<usize> = (0..s.ris.len()).map(|i| code_row(&s, i, m)).collect();
        if rows.iter().any(|&r| r == 0 || r >= m) || (1..rows.len()).any(|i| rows[..i].contains(&rows[i])) {
            return Err(ConfigError {
                line: m_span.map(|sp| line_of(text, sp)),
                message: format!("code rows {rows:?} are not distinct rows in 1..{m}"),
            });
        }
    }
    Ok(s)
}

fn check_rows(cx: &Ctx<'_>, rows: &[usize], m_grid: &[usize], span: Range<usize>) -> Result<(), ConfigError> {
    for &m in m_grid {
        if rows.iter().any(|&r| r == 0 || r >= m) {
            return cx.err(span, format!("code set {rows:?} has rows outside 1..{m}"));
        }
    }
    if (1..rows.len()).any(|i| rows[..i].contains(&rows[i])) {
        return cx.err(span, format!("code set {rows:?} repeats a row"));
    }
    Ok(())
}

/// Hadamard row of the `i`-th RIS at code length `m`: the configured row, or
/// `M - 1` for a lone RIS and `i + 1` otherwise.
pub fn code_row(s: &Settings, i: usize, m: usize) -> usize {
    s.ris[i].code_row.unwrap_or(if s.ris.len() == 1 { m - 1 } else { i + 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        for cmd in Command::ALL {
            let s = defaults(cmd);
            let again = load(cmd, &s.to_toml()).unwrap();
            assert_eq!(s, again, "{}", cmd.name());
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = load(Command::PfSingle, "seed = 3\ntrials = 0\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = load(Command::PfSingle, "seed = 3\n\nbeta = 1e-12\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        let text = "m = 32\n[[ris]]\ncode_row = 1\n[[ris]]\ncode_row = 1\n";
        let e = load(Command::Confusion, text).unwrap_err();
        assert_eq!(e.line, Some(5));
        let e = load(Command::Confusion, "m = 16\n[[ris]]\ncode_row = 0\n[[ris]]\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("static scatterer"));
        let e = load(Command::Design, "r_bar_grid = [3.0, 2.0]\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        let e = load(Command::Design, "m = 12\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        let e = load(Command::Design, "m = 16\nv_total = 16\n").unwrap_err();
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn scalar_shorthands() {
        let s = load(Command::PmissM, "m = 32\np_dbm = 5.0\nspacing = \"half-lambda\"\n").unwrap();
        assert_eq!(s.m_grid, vec![32]);
        assert_eq!(s.p_dbm_grid, vec![5.0]);
        assert_eq!(s.spacing_grid, vec![Spacing::HalfWavelength]);
        assert!(load(Command::PmissM, "m = 32\nm_grid = [16]\n").is_err());
    }

    #[test]
    fn default_rows() {
        let single = defaults(Command::PfSingle);
        assert_eq!(code_row(&single, 0, 16), 15);
        let pair = defaults(Command::Confusion);
        assert_eq!((code_row(&pair, 0, 32), code_row(&pair, 1, 32)), (1, 2));
    }
}
