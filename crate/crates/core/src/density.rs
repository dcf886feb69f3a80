//! Output density, entropy and mutual information by adaptive quadrature.
//!
//! For an input law `F = sum_i p_i delta(r - r_i)` the output power density is
//! `f_R(R) = sum_i p_i g(R, r_i)`. Both channel models share this density and
//! differ only in how the mutual information is assembled from it:
//!
//! * classical Rician (uniform input phase):
//!   `I = h(R) - sum_i p_i ln(1 + r_i^2) - 1`
//! * phase-noise Rician: `I = sum_i p_i D(g(., r_i) || f_R)`.
//!
//! Both are `sum_i p_i d(r_i)` for the per-amplitude information density
//! [`information_density`], which is also the variable part of the KT
//! functional.

use crate::distribution::AmplitudeDistribution;
use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_vec, QuadratureConfig, ABS_TOL_FLOOR};
use crate::special::{ln_kernel, ln_kernel_with_score, ChannelModel, ChannelSpec};

/// Upper truncation point for integrals against kernels with amplitudes up
/// to `r_max`: `(1 + r^2) (T + K r^2/(1 + r^2) + 2 sqrt(K T))`, `T = -ln tol`.
pub fn truncation_point(r_max: f64, k: f64, tail_tol: f64) -> f64 {
    let t = -tail_tol.ln();
    let s = 1.0 + r_max * r_max;
    s * (t + k * r_max * r_max / s + 2.0 * (k * t).sqrt())
}

/// Initial panel boundaries on `[0, upper]`: a dyadic ladder from 1/4 plus the
/// conditional means of the given amplitudes.
pub(crate) fn initial_breaks(amps: &[f64], k: f64, upper: f64) -> Vec<f64> {
    let mut b = vec![0.0];
    let mut x = 0.25;
    while x < upper {
        b.push(x);
        x *= 2.0;
    }
    for &r in amps {
        let mean = 1.0 + (1.0 + k) * r * r;
        if mean < upper {
            b.push(mean);
        }
    }
    b.push(upper);
    b.sort_by(f64::total_cmp);
    b.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    b
}

/// `ln sum_i exp(terms_i)` skipping `-inf` entries.
#[inline]
pub(crate) fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Mixture log-density with precomputed `ln p_i`.
#[inline]
pub(crate) fn ln_mixture(power: f64, amps: &[f64], ln_probs: &[f64], k: f64) -> f64 {
    log_sum_exp(
        amps.iter()
            .zip(ln_probs)
            .map(|(&r, &lp)| lp + ln_kernel(power, r, k)),
    )
}

fn check_point(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Domain(format!(
            "{name} must be finite and nonnegative, got {v}"
        )));
    }
    Ok(())
}

/// `ln f_R(R; F)`, evaluated by log-sum-exp over the mixture components.
pub fn log_output_density(power: f64, dist: &AmplitudeDistribution, k: f64) -> Result<f64> {
    check_point("R", power)?;
    check_point("K", k)?;
    let amps = dist.locations();
    let lp: Vec<f64> = dist.probabilities().iter().map(|p| p.ln()).collect();
    Ok(ln_mixture(power, &amps, &lp, k))
}

/// Coefficient `D_F = sum_i p_i exp(-K r_i^2/(1 + r_i^2)) / (1 + r_i^2)` of the
/// lower bound `f_R(R; F) >= D_F exp(-R)`.
pub fn density_floor_coefficient(dist: &AmplitudeDistribution, k: f64) -> f64 {
    dist.points()
        .iter()
        .map(|m| {
            let s = 1.0 + m.location * m.location;
            m.probability * (-k * m.location * m.location / s).exp() / s
        })
        .sum()
}

/// Shared state for integrals against one input law.
struct Mixture {
    amps: Vec<f64>,
    ln_probs: Vec<f64>,
    k: f64,
}

impl Mixture {
    fn new(dist: &AmplitudeDistribution, k: f64) -> Result<Self> {
        check_point("K", k)?;
        Ok(Self {
            amps: dist.locations(),
            ln_probs: dist.probabilities().iter().map(|p| p.ln()).collect(),
            k,
        })
    }

    #[inline]
    fn ln_f(&self, power: f64) -> f64 {
        ln_mixture(power, &self.amps, &self.ln_probs, self.k)
    }

    fn r_max(&self) -> f64 {
        self.amps.iter().cloned().fold(0.0, f64::max)
    }
}

/// Differential entropy `h(R) = -int f_R ln f_R dR` in nats.
pub fn output_entropy(dist: &AmplitudeDistribution, k: f64, q: &QuadratureConfig) -> Result<f64> {
    let mix = Mixture::new(dist, k)?;
    let upper = truncation_point(mix.r_max(), k, q.r_tail_mass_tol);
    let breaks = initial_breaks(&mix.amps, k, upper);
    let (v, _) = integrate(
        |x| {
            let lf = mix.ln_f(x);
            let f = lf.exp();
            if f == 0.0 {
                0.0
            } else {
                -f * lf
            }
        },
        &breaks,
        q.panel_rel_tol,
        ABS_TOL_FLOOR,
        q.max_panels,
    )?;
    Ok(v)
}

/// Mutual information of the classical Rician channel with uniform input
/// phase, in nats.
pub fn mutual_information_classical(
    dist: &AmplitudeDistribution,
    k: f64,
    q: &QuadratureConfig,
) -> Result<f64> {
    let h = output_entropy(dist, k, q)?;
    let cond: f64 = dist
        .points()
        .iter()
        .map(|m| m.probability * (m.location * m.location).ln_1p())
        .sum();
    Ok(h - cond - 1.0)
}

/// Relative entropy `D(g(., r) || f_R(.; F))` in nats.
pub fn divergence_pn(
    amp: f64,
    dist: &AmplitudeDistribution,
    k: f64,
    q: &QuadratureConfig,
) -> Result<f64> {
    check_point("r", amp)?;
    let mix = Mixture::new(dist, k)?;
    if mix.amps.len() == 1 && mix.amps[0] == amp {
        return Ok(0.0);
    }
    let upper = truncation_point(amp, k, q.r_tail_mass_tol);
    let breaks = initial_breaks(&[amp], k, upper);
    let (v, _) = integrate(
        |x| {
            let lg = ln_kernel(x, amp, k);
            let g = lg.exp();
            if g == 0.0 {
                0.0
            } else {
                g * (lg - mix.ln_f(x))
            }
        },
        &breaks,
        q.panel_rel_tol,
        ABS_TOL_FLOOR,
        q.max_panels,
    )?;
    Ok(v)
}

/// Mutual information `I(r; R)` of the phase-noise Rician channel, in nats.
pub fn mutual_information_pn(
    dist: &AmplitudeDistribution,
    k: f64,
    q: &QuadratureConfig,
) -> Result<f64> {
    if dist.len() == 1 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for m in dist.points() {
        total += m.probability * divergence_pn(m.location, dist, k, q)?;
    }
    Ok(total)
}

/// Mutual information for either channel model.
pub fn mutual_information(
    dist: &AmplitudeDistribution,
    channel: &ChannelSpec,
    q: &QuadratureConfig,
) -> Result<f64> {
    match channel.model {
        ChannelModel::ClassicalRician => mutual_information_classical(dist, channel.rician_k, q),
        ChannelModel::PhaseNoiseRician => mutual_information_pn(dist, channel.rician_k, q),
    }
}

/// Per-amplitude information density `d(r; F)` and its slope `d'(r)` with
/// `F` held fixed.
///
/// * classical: `d(r) = -int g(R, r) ln f_R dR - ln(1 + r^2) - 1`
/// * phase noise: `d(r) = D(g(., r) || f_R)`
///
/// With `C = sum_i p_i d(r_i)` the KT functional is
/// `-d(r) + lambda_1 (r^2 - alpha) + lambda_2 (r^4 - kappa alpha^2) + C`.
pub fn information_density_with_slope(
    amp: f64,
    dist: &AmplitudeDistribution,
    channel: &ChannelSpec,
    q: &QuadratureConfig,
) -> Result<(f64, f64)> {
    check_point("r", amp)?;
    let k = channel.rician_k;
    let mix = Mixture::new(dist, k)?;
    let upper = truncation_point(amp, k, q.r_tail_mass_tol);
    let breaks = initial_breaks(&[amp], k, upper);
    let pn = channel.model == ChannelModel::PhaseNoiseRician;
    let out = integrate_vec(
        |x, v| {
            let (lg, score) = ln_kernel_with_score(x, amp, k);
            let g = lg.exp();
            if g == 0.0 {
                v[0] = 0.0;
                v[1] = 0.0;
                return;
            }
            let lf = mix.ln_f(x);
            let weight = if pn { lg - lf } else { -lf };
            v[0] = g * weight;
            v[1] = g * score * weight;
        },
        2,
        &breaks,
        q.panel_rel_tol,
        ABS_TOL_FLOOR,
        q.max_panels,
    )?;
    let (mut d, mut slope) = (out.value[0], out.value[1]);
    if !pn {
        d -= (amp * amp).ln_1p() + 1.0;
        slope -= 2.0 * amp / (1.0 + amp * amp);
    }
    Ok((d, slope))
}

/// Per-amplitude information density `d(r; F)`; see
/// [`information_density_with_slope`].
pub fn information_density(
    amp: f64,
    dist: &AmplitudeDistribution,
    channel: &ChannelSpec,
    q: &QuadratureConfig,
) -> Result<f64> {
    check_point("r", amp)?;
    let k = channel.rician_k;
    let mix = Mixture::new(dist, k)?;
    let upper = truncation_point(amp, k, q.r_tail_mass_tol);
    let breaks = initial_breaks(&[amp], k, upper);
    let pn = channel.model == ChannelModel::PhaseNoiseRician;
    let (v, _) = integrate(
        |x| {
            let lg = ln_kernel(x, amp, k);
            let g = lg.exp();
            if g == 0.0 {
                return 0.0;
            }
            let lf = mix.ln_f(x);
            if pn {
                g * (lg - lf)
            } else {
                -g * lf
            }
        },
        &breaks,
        q.panel_rel_tol,
        ABS_TOL_FLOOR,
        q.max_panels,
    )?;
    Ok(if pn { v } else { v - (amp * amp).ln_1p() - 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::log_kernel_g;

    fn q() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn base_case() -> AmplitudeDistribution {
        AmplitudeDistribution::new([(0.0, 0.9), (0.5f64.sqrt(), 0.1)]).unwrap()
    }

    #[test]
    fn kernel_normalization_and_moments() {
        for &k in &[0.0, 1.0, 2.0, 10.0] {
            for &r in &[0.0, 0.5, 1.0, 5.0, 20.0] {
                let upper = truncation_point(r, k, 1e-16);
                let breaks = initial_breaks(&[r], k, upper);
                let out = integrate_vec(
                    |x, v| {
                        let g = ln_kernel(x, r, k).exp();
                        v[0] = g;
                        v[1] = x * g;
                        v[2] = x.sqrt() * g;
                    },
                    3,
                    &breaks,
                    1e-12,
                    1e-15,
                    4096,
                )
                .unwrap();
                let mean = 1.0 + (1.0 + k) * r * r;
                assert!((out.value[0] - 1.0).abs() < 1e-8, "norm K={k} r={r}");
                assert!(
                    ((out.value[1] - mean) / mean).abs() < 1e-6,
                    "mean K={k} r={r}"
                );
                assert!(out.value[2] <= mean.sqrt(), "jensen K={k} r={r}");
            }
        }
    }

    #[test]
    fn score_has_zero_mean() {
        for &k in &[0.0, 1.0, 3.0] {
            for &r in &[0.3, 1.0, 4.0] {
                let upper = truncation_point(r, k, 1e-16);
                let (v, _) = integrate(
                    |x| {
                        let (lg, s) = ln_kernel_with_score(x, r, k);
                        lg.exp() * s
                    },
                    &initial_breaks(&[r], k, upper),
                    1e-12,
                    1e-14,
                    4096,
                )
                .unwrap();
                assert!(v.abs() < 1e-10, "K={k} r={r}: {v}");
            }
        }
    }

    #[test]
    fn log_output_density_examples() {
        let zero = AmplitudeDistribution::point_mass(0.0).unwrap();
        for &x in &[0.0, 1.5, 30.0] {
            assert!((log_output_density(x, &zero, 2.0).unwrap() + x).abs() < 1e-14);
        }
        let got = log_output_density(0.0, &base_case(), 1.0).unwrap();
        // -0.053644736822355435 = ln(0.9 + 0.1 (2/3) e^{-1/3}) at 40 digits.
        assert!((got - (-0.053644736822355435)).abs() < 1e-15);
        assert!(log_output_density(-1.0, &zero, 1.0).is_err());
    }

    #[test]
    fn density_floor_holds() {
        let d = AmplitudeDistribution::new([(0.2, 0.3), (1.1, 0.5), (3.0, 0.2)]).unwrap();
        for &k in &[0.0, 0.7, 4.0] {
            let floor = density_floor_coefficient(&d, k);
            for i in 0..=500 {
                let x = i as f64 * 0.1;
                let lf = log_output_density(x, &d, k).unwrap();
                assert!(lf >= floor.ln() - x - 1e-12, "K={k} R={x}");
                assert!(lf.is_finite());
            }
        }
    }

    #[test]
    fn entropy_examples() {
        let zero = AmplitudeDistribution::point_mass(0.0).unwrap();
        for &k in &[0.0, 1.0, 5.0] {
            assert!((output_entropy(&zero, k, &q()).unwrap() - 1.0).abs() < 1e-8);
        }
        let two = AmplitudeDistribution::point_mass(2.0).unwrap();
        let h = output_entropy(&two, 0.0, &q()).unwrap();
        assert!((h - (1.0 + 5f64.ln())).abs() < 1e-8);
    }

    #[test]
    fn mutual_information_examples() {
        let zero = AmplitudeDistribution::point_mass(0.0).unwrap();
        assert!(
            mutual_information_classical(&zero, 1.0, &q())
                .unwrap()
                .abs()
                < 1e-8
        );
        for &r0 in &[0.3, 1.0, 4.0] {
            let d = AmplitudeDistribution::point_mass(r0).unwrap();
            assert!(mutual_information_classical(&d, 0.0, &q()).unwrap().abs() < 1e-8);
            // Phase still carries information when there is a specular part.
            assert!(mutual_information_classical(&d, 1.0, &q()).unwrap() > 1e-3);
            assert_eq!(mutual_information_pn(&d, 1.0, &q()).unwrap(), 0.0);
        }
        let c = mutual_information_classical(&base_case(), 1.0, &q()).unwrap();
        assert!((c - 0.0531).abs() < 5e-4, "{c}");
    }

    #[test]
    fn divergence_examples() {
        let zero = AmplitudeDistribution::point_mass(0.0).unwrap();
        assert_eq!(divergence_pn(0.0, &zero, 1.0, &q()).unwrap(), 0.0);
        let at = AmplitudeDistribution::point_mass(1.3).unwrap();
        assert_eq!(divergence_pn(1.3, &at, 2.0, &q()).unwrap(), 0.0);
        // Exponential(1) against Exponential(1 + r^2): closed form.
        let r: f64 = 1.5;
        let s = 1.0 + r * r;
        let want = s - 1.0 - s.ln();
        assert!((divergence_pn(r, &zero, 0.0, &q()).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn rayleigh_models_agree() {
        let d = AmplitudeDistribution::new([(0.0, 0.6), (0.8, 0.3), (2.2, 0.1)]).unwrap();
        let a = mutual_information_classical(&d, 0.0, &q()).unwrap();
        let b = mutual_information_pn(&d, 0.0, &q()).unwrap();
        assert!((a - b).abs() < 1e-8, "{a} {b}");
    }

    #[test]
    fn information_density_sums_to_mi() {
        let d = AmplitudeDistribution::new([(0.0, 0.6), (0.8, 0.3), (2.2, 0.1)]).unwrap();
        for channel in [
            ChannelSpec::classical(1.5).unwrap(),
            ChannelSpec::phase_noise(1.5).unwrap(),
        ] {
            let mi = mutual_information(&d, &channel, &q()).unwrap();
            let mut total = 0.0;
            for m in d.points() {
                let a = information_density(m.location, &d, &channel, &q()).unwrap();
                let (b, _) =
                    information_density_with_slope(m.location, &d, &channel, &q()).unwrap();
                assert!((a - b).abs() < 1e-10);
                total += m.probability * a;
            }
            assert!((total - mi).abs() < 1e-9, "{channel:?}");
        }
    }

    #[test]
    fn slope_matches_finite_difference() {
        let d = AmplitudeDistribution::new([(0.0, 0.7), (1.2, 0.3)]).unwrap();
        let h = 1e-4;
        for channel in [
            ChannelSpec::classical(1.0).unwrap(),
            ChannelSpec::phase_noise(2.0).unwrap(),
        ] {
            for &r in &[0.4, 1.2, 2.5] {
                let (_, slope) = information_density_with_slope(r, &d, &channel, &q()).unwrap();
                let fd = (information_density(r + h, &d, &channel, &q()).unwrap()
                    - information_density(r - h, &d, &channel, &q()).unwrap())
                    / (2.0 * h);
                assert!((slope - fd).abs() < 1e-6 * (1.0 + fd.abs()), "{slope} {fd}");
            }
        }
    }

    #[test]
    fn pointwise_api_validates() {
        assert!(log_kernel_g(1.0, 1.0, f64::NAN).is_err());
        let d = base_case();
        assert!(divergence_pn(-1.0, &d, 1.0, &q()).is_err());
        assert!(output_entropy(&d, -1.0, &q()).is_err());
    }
}
