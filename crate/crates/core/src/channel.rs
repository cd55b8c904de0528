//! Path loss, spatial correlation and cascaded Rayleigh gains.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Eigenvalues down to this value are treated as round-off and clipped.
pub const EIGEN_CLIP_TOLERANCE: f64 = 1e-9;

pub fn wavelength(f_c: f64) -> f64 {
    SPEED_OF_LIGHT / f_c
}

/// Isotropic free-space gain of one hop, `λ² / (16π d²)`.
pub fn hop_gain(f_c: f64, d: f64) -> f64 {
    let lambda = wavelength(f_c);
    lambda * lambda / (16.0 * PI * d * d)
}

/// Overall UE–RIS–BS gain, `λ⁴ / (256 π² d_UR² d_RB²)`.
pub fn path_gain(f_c: f64, d_ur: f64, d_rb: f64) -> f64 {
    let lambda = wavelength(f_c);
    lambda.powi(4) / (256.0 * PI * PI * d_ur * d_ur * d_rb * d_rb)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub f_c: f64,
    pub d_ur: f64,
    pub d_rb: f64,
    pub beta_ur: f64,
    pub beta_rb: f64,
}

impl LinkBudget {
    pub fn new(f_c: f64, d_ur: f64, d_rb: f64) -> Result<Self> {
        for (name, v) in [("carrier frequency", f_c), ("d_UR", d_ur), ("d_RB", d_rb)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            f_c,
            d_ur,
            d_rb,
            beta_ur: hop_gain(f_c, d_ur),
            beta_rb: hop_gain(f_c, d_rb),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta_ur * self.beta_rb
    }

    pub fn wavelength(&self) -> f64 {
        wavelength(self.f_c)
    }
}

/// Element spacing presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spacing {
    /// No spatial correlation: `R = I`.
    #[serde(rename = "none")]
    Uncorrelated,
    #[serde(rename = "half-lambda")]
    HalfWavelength,
    #[serde(rename = "tenth-lambda")]
    TenthWavelength,
}

impl Spacing {
    pub fn name(self) -> &'static str {
        match self {
            Spacing::Uncorrelated => "none",
            Spacing::HalfWavelength => "half-lambda",
            Spacing::TenthWavelength => "tenth-lambda",
        }
    }

    /// Element pitch in wavelengths, `None` for the uncorrelated model.
    pub fn fraction(self) -> Option<f64> {
        match self {
            Spacing::Uncorrelated => None,
            Spacing::HalfWavelength => Some(0.5),
            Spacing::TenthWavelength => Some(0.1),
        }
    }
}

/// Planar array of `n` elements laid out row by row, `n_h` per row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RisGeometry {
    pub n: usize,
    pub n_h: usize,
    pub d_h: f64,
    pub d_v: f64,
    pub wavelength: f64,
}

impl RisGeometry {
    pub fn new(n: usize, n_h: usize, d_h: f64, d_v: f64, wavelength: f64) -> Result<Self> {
        if n == 0 || n_h == 0 || !n.is_multiple_of(n_h) {
            return Err(Error::invalid(format!(
                "element count {n} must be a positive multiple of the row length {n_h}"
            )));
        }
        if !(d_h > 0.0 && d_v > 0.0 && d_h.is_finite() && d_v.is_finite()) {
            return Err(Error::invalid("element width and height must be positive"));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::invalid("wavelength must be positive"));
        }
        Ok(Self { n, n_h, d_h, d_v, wavelength })
    }

    /// Square elements with the given pitch in wavelengths.
    pub fn with_pitch(n: usize, n_h: usize, pitch: f64, wavelength: f64) -> Result<Self> {
        let d = pitch * wavelength;
        Self::new(n, n_h, d, d, wavelength)
    }

    /// Position of element `w` (0-based) in the array plane.
    pub fn position(&self, w: usize) -> [f64; 3] {
        let i_h = w % self.n_h;
        let i_v = w / self.n_h;
        [0.0, i_h as f64 * self.d_h, i_v as f64 * self.d_v]
    }
}

/// Normalized sinc, `sin(πt)/(πt)`.
pub fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        let x = PI * t;
        x.sin() / x
    }
}

/// Spatial correlation matrix together with a sampling factor `F F^T = R`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    r: DMatrix<f64>,
    /// `None` when `R = I`; sampling then skips the matrix product.
    factor: Option<DMatrix<f64>>,
    min_eigenvalue: f64,
}

impl CorrelationMatrix {
    pub fn identity(n: usize) -> Self {
        Self { r: DMatrix::identity(n, n), factor: None, min_eigenvalue: 1.0 }
    }

    /// Factorizes a symmetric unit-diagonal matrix by eigen-decomposition.
    pub fn from_matrix(r: DMatrix<f64>) -> Result<Self> {
        let n = r.nrows();
        if n == 0 || r.ncols() != n {
            return Err(Error::invalid("correlation matrix must be square and non-empty"));
        }
        for i in 0..n {
            if r[(i, i)] != 1.0 {
                return Err(Error::invalid(format!("correlation matrix diagonal entry {i} is not 1")));
            }
            for j in 0..i {
                if r[(i, j)] != r[(j, i)] {
                    return Err(Error::invalid("correlation matrix is not symmetric"));
                }
            }
        }
        let eig = SymmetricEigen::new(r.clone());
        let min_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min_eigenvalue < -EIGEN_CLIP_TOLERANCE {
            return Err(Error::invalid(format!(
                "correlation matrix is not positive semidefinite (eigenvalue {min_eigenvalue:e})"
            )));
        }
        let mut factor = eig.eigenvectors;
        for (mut col, &lam) in factor.column_iter_mut().zip(eig.eigenvalues.iter()) {
            col *= lam.max(0.0).sqrt();
        }
        Ok(Self { r, factor: Some(factor), min_eigenvalue })
    }

    pub fn len(&self) -> usize {
        self.r.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.r.nrows() == 0
    }

    pub fn is_identity(&self) -> bool {
        self.factor.is_none()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Sampling factor; the identity when `R = I`.
    pub fn factor(&self) -> DMatrix<f64> {
        match &self.factor {
            Some(f) => f.clone(),
            None => DMatrix::identity(self.len(), self.len()),
        }
    }

    /// Smallest eigenvalue before clipping.
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }
}

pub fn correlation_matrix(geom: &RisGeometry) -> Result<CorrelationMatrix> {
    let n = geom.n;
    let pos: Vec<[f64; 3]> = (0..n).map(|w| geom.position(w)).collect();
    let r = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            return 1.0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let dist = pos[a]
            .iter()
            .zip(&pos[b])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        sinc(2.0 * dist / geom.wavelength)
    });
    CorrelationMatrix::from_matrix(r)
}

/// Correlation model for `n` elements with `n_h` per row under a spacing preset.
pub fn correlation_for(
    spacing: Spacing,
    n: usize,
    n_h: usize,
    wavelength: f64,
) -> Result<CorrelationMatrix> {
    match spacing.fraction() {
        None => {
            if n == 0 {
                return Err(Error::invalid("element count must be positive"));
            }
            Ok(CorrelationMatrix::identity(n))
        }
        Some(pitch) => correlation_matrix(&RisGeometry::with_pitch(n, n_h, pitch, wavelength)?),
    }
}

fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws `h ~ CN(0, β_hop R)`.
pub fn sample_channel<R: Rng + ?Sized>(
    corr: &CorrelationMatrix,
    beta_hop: f64,
    rng: &mut R,
) -> Vec<Complex64> {
    let n = corr.len();
    let scale = beta_hop.sqrt();
    let z: Vec<Complex64> = (0..n).map(|_| standard_complex_normal(rng)).collect();
    match &corr.factor {
        None => z.into_iter().map(|v| v * scale).collect(),
        Some(f) => {
            let re = f * DVector::from_iterator(n, z.iter().map(|v| v.re));
            let im = f * DVector::from_iterator(n, z.iter().map(|v| v.im));
            re.iter().zip(im.iter()).map(|(&a, &b)| Complex64::new(a, b) * scale).collect()
        }
    }
}

/// `√P · Σ h_UR,i h_RB,i`.
pub fn cascaded_gain(h_ur: &[Complex64], h_rb: &[Complex64], p: f64) -> Result<Complex64> {
    if h_ur.len() != h_rb.len() {
        return Err(Error::invalid(format!(
            "channel vectors differ in length ({} vs {})",
            h_ur.len(),
            h_rb.len()
        )));
    }
    let sum: Complex64 = h_ur.iter().zip(h_rb).map(|(a, b)| a * b).sum();
    Ok(sum * p.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub h_ur: Vec<Complex64>,
    pub h_rb: Vec<Complex64>,
    pub h_tilde: Complex64,
}

impl ChannelRealization {
    /// One block-fading draw of both hops; `h_UR` is drawn before `h_RB`.
    pub fn draw<R: Rng + ?Sized>(
        corr: &CorrelationMatrix,
        link: &LinkBudget,
        p: f64,
        rng: &mut R,
    ) -> Self {
        let h_ur = sample_channel(corr, link.beta_ur, rng);
        let h_rb = sample_channel(corr, link.beta_rb, rng);
        let h_tilde = cascaded_gain(&h_ur, &h_rb, p).expect("hops share the element count");
        Self { h_ur, h_rb, h_tilde }
    }
}
