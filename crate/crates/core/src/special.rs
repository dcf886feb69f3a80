//! Bessel-log evaluation and the noncentral chi-square kernel of the normalized
//! channel.
//!
//! Coordinates throughout the crate are normalized: `R = |y|^2 / N0` is the
//! received power and `r = gamma |x| / sqrt(N0)` the transmitted amplitude. In
//! these units the conditional density of `R` given `r` is
//!
//! ```text
//! g(R, r) = 1/(1+r^2) * exp(-(R + K r^2)/(1+r^2)) * I0(2 sqrt(K) r sqrt(R) / (1+r^2))
//! ```
//!
//! which is the same function for the classical and the phase-noise Rician
//! models.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which of the two Rician fading models is in use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelModel {
    #[serde(rename = "rician")]
    /// Static specular component; the input phase can carry information.
    ClassicalRician,
    #[serde(rename = "rician-pn")]
    /// Specular component rotated by an i.i.d. uniform phase; only the
    /// amplitude carries information.
    PhaseNoiseRician,
}

impl ChannelModel {
    pub fn name(self) -> &'static str {
        match self {
            ChannelModel::ClassicalRician => "rician",
            ChannelModel::PhaseNoiseRician => "rician-pn",
        }
    }
}

impl std::str::FromStr for ChannelModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rician" => Ok(Self::ClassicalRician),
            "rician-pn" => Ok(Self::PhaseNoiseRician),
            _ => Err(Error::Parse(format!(
                "unknown model {s:?}, expected rician or rician-pn"
            ))),
        }
    }
}

/// Channel model together with its Rician factor `K = |m|^2 / gamma^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub model: ChannelModel,
    pub rician_k: f64,
}

impl ChannelSpec {
    pub fn new(model: ChannelModel, rician_k: f64) -> Result<Self> {
        if !rician_k.is_finite() || rician_k < 0.0 {
            return Err(Error::Domain(format!(
                "Rician factor must be finite and nonnegative, got {rician_k}"
            )));
        }
        Ok(Self { model, rician_k })
    }

    pub fn classical(rician_k: f64) -> Result<Self> {
        Self::new(ChannelModel::ClassicalRician, rician_k)
    }

    pub fn phase_noise(rician_k: f64) -> Result<Self> {
        Self::new(ChannelModel::PhaseNoiseRician, rician_k)
    }

    /// `K = 0`: both models collapse to Rayleigh fading.
    pub fn is_rayleigh(&self) -> bool {
        self.rician_k == 0.0
    }
}

// Cephes Chebyshev coefficients for exp(-x) sqrt(x) I0(x) and
// exp(-x) sqrt(x) I1(x) on the interval [8, inf), in the variable 32/x - 2.
#[allow(clippy::excessive_precision)]
const I0E_LARGE: [f64; 25] = [
    -7.23318048787475395456E-18,
    -4.83050448594418207126E-18,
    4.46562142029675999901E-17,
    3.46122286769746109310E-17,
    -2.82762398051658348494E-16,
    -3.42548561967721913462E-16,
    1.77256013305652638360E-15,
    3.81168066935262242075E-15,
    -9.55484669882830764870E-15,
    -4.15056934728722208663E-14,
    1.54008621752140982691E-14,
    3.85277838274214270114E-13,
    7.18012445138366623367E-13,
    -1.79417853150680611778E-12,
    -1.32158118404477131188E-11,
    -3.14991652796324136454E-11,
    1.18891471078464383424E-11,
    4.94060238822496958910E-10,
    3.39623202570838634515E-9,
    2.26666899049817806459E-8,
    2.04891858946906374183E-7,
    2.89137052083475648297E-6,
    6.88975834691682398426E-5,
    3.36911647825569408990E-3,
    8.04490411014108831608E-1,
];

#[allow(clippy::excessive_precision)]
const I1E_LARGE: [f64; 25] = [
    7.51729631084210481353E-18,
    4.41434832307170791151E-18,
    -4.65030536848935832153E-17,
    -3.20952592199342395980E-17,
    2.96262899764595013876E-16,
    3.30820231092092828324E-16,
    -1.88035477551078244854E-15,
    -3.81440307243700780478E-15,
    1.04202769841288027642E-14,
    4.27244001671195135429E-14,
    -2.10154184277266431302E-14,
    -4.08355111109219731823E-13,
    -7.19855177624590851209E-13,
    2.03562854414708950722E-12,
    1.41258074366137813316E-11,
    3.25260358301548823856E-11,
    -1.89749581235054123450E-11,
    -5.58974346219658380687E-10,
    -3.83538038596423702205E-9,
    -2.63146884688951950684E-8,
    -2.51223623787020892529E-7,
    -3.88256480887769039346E-6,
    -1.10588938762623716291E-4,
    -9.76109749136146840777E-3,
    7.78576235018280120474E-1,
];

const SERIES_LIMIT: f64 = 8.0;

fn chbevl(x: f64, coeffs: &[f64]) -> f64 {
    let mut b0 = coeffs[0];
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in &coeffs[1..] {
        b2 = b1;
        b1 = b0;
        b0 = x.mul_add(b1, c) - b2;
    }
    0.5 * (b0 - b2)
}

/// Power series for `I0(z) - 1` and `I1(z)` for `0 <= z < 8`.
fn small_series(z: f64) -> (f64, f64) {
    let q = 0.25 * z * z;
    let mut term = 1.0;
    let mut i0_minus_one = 0.0;
    let mut i1_sum = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        term *= q / (kf * kf);
        i0_minus_one += term;
        i1_sum += term / (kf + 1.0);
        if term < 1e-18 * (1.0 + i0_minus_one) {
            break;
        }
    }
    (i0_minus_one, 0.5 * z * i1_sum)
}

/// `ln I0(z)` without argument validation. `z` must be finite and `>= 0`.
#[inline]
pub(crate) fn ln_i0_unchecked(z: f64) -> f64 {
    if z < SERIES_LIMIT {
        small_series(z).0.ln_1p()
    } else {
        z + (chbevl(32.0 / z - 2.0, &I0E_LARGE) / z.sqrt()).ln()
    }
}

/// `I1(z) / I0(z)` for `z >= 0`.
#[inline]
pub(crate) fn bessel_ratio_i1_i0(z: f64) -> f64 {
    if z == 0.0 {
        0.0
    } else if z < SERIES_LIMIT {
        let (i0m1, i1) = small_series(z);
        i1 / (1.0 + i0m1)
    } else {
        let t = 32.0 / z - 2.0;
        chbevl(t, &I1E_LARGE) / chbevl(t, &I0E_LARGE)
    }
}

/// Natural log of the modified Bessel function `I0(z)`.
///
/// Evaluated in exponentially scaled form, so any representable `z` is safe.
pub fn log_i0(z: f64) -> Result<f64> {
    if !z.is_finite() || z < 0.0 {
        return Err(Error::Domain(format!(
            "log_i0 requires a finite nonnegative argument, got {z}"
        )));
    }
    Ok(ln_i0_unchecked(z))
}

/// Argument of the Bessel term, `2 sqrt(K) r sqrt(R) / (1 + r^2)`.
#[inline]
fn bessel_arg(power: f64, amp: f64, k: f64) -> f64 {
    2.0 * (k * power).sqrt() * amp / (1.0 + amp * amp)
}

/// `ln g(R, r)` without validation.
#[inline]
pub(crate) fn ln_kernel(power: f64, amp: f64, k: f64) -> f64 {
    let s = 1.0 + amp * amp;
    let base = -s.ln() - (power + k * amp * amp) / s;
    if k == 0.0 || amp == 0.0 || power == 0.0 {
        base
    } else {
        base + ln_i0_unchecked(bessel_arg(power, amp, k))
    }
}

/// `ln g(R, r)` together with the score `d/dr ln g(R, r)`.
#[inline]
pub(crate) fn ln_kernel_with_score(power: f64, amp: f64, k: f64) -> (f64, f64) {
    let s = 1.0 + amp * amp;
    let s2 = s * s;
    let mut ln_g = -s.ln() - (power + k * amp * amp) / s;
    let mut score = -2.0 * amp / s + 2.0 * amp * (power - k) / s2;
    if k > 0.0 && power > 0.0 {
        let root = (k * power).sqrt();
        if amp > 0.0 {
            let z = 2.0 * root * amp / s;
            ln_g += ln_i0_unchecked(z);
            score += bessel_ratio_i1_i0(z) * 2.0 * root * (1.0 - amp * amp) / s2;
        }
        // At amp = 0 the ratio vanishes to first order in z, so the Bessel
        // term contributes nothing to the score.
    }
    (ln_g, score)
}

/// `(I1/I0)(z)` and `(I1/I0)(z) / z`, the latter finite at `z = 0`.
#[inline]
fn bessel_ratio_parts(z: f64) -> (f64, f64) {
    if z < SERIES_LIMIT {
        let (i0m1, i1) = small_series(z);
        let i1_sum = if z == 0.0 { 1.0 } else { 2.0 * i1 / z };
        let over_z = 0.5 * i1_sum / (1.0 + i0m1);
        (over_z * z, over_z)
    } else {
        let rho = bessel_ratio_i1_i0(z);
        (rho, rho / z)
    }
}

/// `ln g`, the score `d/dr ln g` and its derivative `d^2/dr^2 ln g`.
pub(crate) fn ln_kernel_with_derivs(power: f64, amp: f64, k: f64) -> (f64, f64, f64) {
    let r2 = amp * amp;
    let s = 1.0 + r2;
    let s2 = s * s;
    let s3 = s2 * s;
    let mut ln_g = -s.ln() - (power + k * r2) / s;
    let mut score = -2.0 * amp / s + 2.0 * amp * (power - k) / s2;
    let mut dscore = -2.0 * (1.0 - r2) / s2 + 2.0 * (power - k) * (1.0 - 3.0 * r2) / s3;
    if k > 0.0 && power > 0.0 {
        let c = 2.0 * (k * power).sqrt();
        let z = c * amp / s;
        let (rho, rho_over_z) = bessel_ratio_parts(z);
        let rho_prime = 1.0 - rho_over_z - rho * rho;
        ln_g += ln_i0_unchecked(z);
        score += rho * c * (1.0 - r2) / s2;
        dscore += c * c * rho_prime * (1.0 - r2).powi(2) / (s2 * s2)
            - 2.0 * c * amp * rho * (3.0 - r2) / s3;
    }
    (ln_g, score, dscore)
}

fn check_nonnegative(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Domain(format!(
            "{name} must be finite and nonnegative, got {v}"
        )));
    }
    Ok(())
}

/// Log of the conditional density of the normalized output power `R` given
/// the normalized input amplitude `r` for Rician factor `k`.
pub fn log_kernel_g(power: f64, amp: f64, k: f64) -> Result<f64> {
    check_nonnegative("R", power)?;
    check_nonnegative("r", amp)?;
    check_nonnegative("K", k)?;
    Ok(ln_kernel(power, amp, k))
}

/// Mean of `R` given `r`: `1 + (1 + K) r^2`.
pub fn kernel_mean(amp: f64, k: f64) -> Result<f64> {
    check_nonnegative("r", amp)?;
    check_nonnegative("K", k)?;
    Ok(1.0 + (1.0 + k) * amp * amp)
}

/// Draw `R = |u|^2` where `u` is circular complex Gaussian with mean
/// `sqrt(K) r` and total variance `1 + r^2`.
pub fn sample_output_power<G: Rng + ?Sized>(amp: f64, k: f64, rng: &mut G) -> f64 {
    let sigma = (0.5 * (1.0 + amp * amp)).sqrt();
    let g1: f64 = rng.sample(StandardNormal);
    let g2: f64 = rng.sample(StandardNormal);
    let re = k.sqrt() * amp + sigma * g1;
    let im = sigma * g2;
    re * re + im * im
}
