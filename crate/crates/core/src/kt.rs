//! Kuhn-Tucker functionals, Lagrange multiplier recovery and grid-scan
//! optimality certificates.
//!
//! Every regime shares one functional of the amplitude `r`,
//!
//! ```text
//! KT(r) = -d(r) + lambda_1 (r^2 - alpha) + lambda_2 (r^4 - kappa alpha^2) + C,
//! ```
//!
//! where `d` is the information density of the candidate law (see
//! [`crate::density::information_density`]). A law with mutual information
//! `C` is capacity achieving iff `KT(r) >= 0` for every admissible `r`, with
//! equality on its mass points. Unused multipliers are zero: the average-power
//! regime drops `lambda_2`, the peak regime drops both and restricts `r` to
//! `[0, sqrt(alpha)]`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{information_density, information_density_with_slope};
use crate::distribution::AmplitudeDistribution;
use crate::error::{Error, Result};
use crate::quadrature::QuadratureConfig;
use crate::special::ChannelSpec;

/// Input constraints in normalized-SNR units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConstraintSet {
    /// `E[r^2] <= alpha` and `E[r^4] <= kappa alpha^2`.
    Moment4 { alpha: f64, kappa: f64 },
    /// `r <= sqrt(alpha)` almost surely.
    Peak { alpha: f64 },
    /// `E[r^2] <= alpha`.
    AveragePower { alpha: f64 },
}

/// Relative slack below which a moment constraint counts as tight.
pub const ACTIVE_TOL: f64 = 1e-8;

/// Feasibility tolerance for moments and the peak cap.
pub const FEASIBILITY_TOL: f64 = 1e-10;

impl ConstraintSet {
    fn check_alpha(alpha: f64) -> Result<()> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::Domain(format!(
                "normalized SNR alpha must be positive and finite, got {alpha}"
            )));
        }
        Ok(())
    }

    pub fn moment4(alpha: f64, kappa: f64) -> Result<Self> {
        Self::check_alpha(alpha)?;
        if !kappa.is_finite() || kappa <= 1.0 {
            return Err(Error::Domain(format!(
                "kurtosis bound kappa must satisfy 1 < kappa < inf, got {kappa}"
            )));
        }
        Ok(Self::Moment4 { alpha, kappa })
    }

    pub fn peak(alpha: f64) -> Result<Self> {
        Self::check_alpha(alpha)?;
        Ok(Self::Peak { alpha })
    }

    pub fn average_power(alpha: f64) -> Result<Self> {
        Self::check_alpha(alpha)?;
        Ok(Self::AveragePower { alpha })
    }

    /// Re-run the constructor checks, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Moment4 { alpha, kappa } => Self::moment4(alpha, kappa).map(|_| ()),
            Self::Peak { alpha } => Self::peak(alpha).map(|_| ()),
            Self::AveragePower { alpha } => Self::average_power(alpha).map(|_| ()),
        }
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            Self::Moment4 { alpha, .. } | Self::Peak { alpha } | Self::AveragePower { alpha } => {
                alpha
            }
        }
    }

    pub fn kappa(&self) -> Option<f64> {
        match *self {
            Self::Moment4 { kappa, .. } => Some(kappa),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Moment4 { .. } => "moment4",
            Self::Peak { .. } => "peak",
            Self::AveragePower { .. } => "avg-power",
        }
    }

    /// Same constraint kind at a different SNR.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        match *self {
            Self::Moment4 { kappa, .. } => Self::moment4(alpha, kappa),
            Self::Peak { .. } => Self::peak(alpha),
            Self::AveragePower { .. } => Self::average_power(alpha),
        }
    }

    /// Largest admissible amplitude, for the peak regime.
    pub fn amplitude_cap(&self) -> Option<f64> {
        match *self {
            Self::Peak { alpha } => Some(alpha.sqrt()),
            _ => None,
        }
    }

    /// Number of Lagrange multipliers in the KT functional.
    pub fn multiplier_count(&self) -> usize {
        match self {
            Self::Moment4 { .. } => 2,
            Self::AveragePower { .. } => 1,
            Self::Peak { .. } => 0,
        }
    }

    /// Moment constraints `E[r^(2(j+1))] <= bound_j` as `(exponent, bound)`.
    pub(crate) fn moments(&self) -> Vec<(i32, f64)> {
        match *self {
            Self::Moment4 { alpha, kappa } => vec![(2, alpha), (4, kappa * alpha * alpha)],
            Self::AveragePower { alpha } => vec![(2, alpha)],
            Self::Peak { .. } => vec![],
        }
    }

    /// Describe the first violated constraint, if any.
    pub fn violation(&self, dist: &AmplitudeDistribution, tol: f64) -> Option<String> {
        if let Some(cap) = self.amplitude_cap() {
            if dist.max_location() > cap * (1.0 + tol) {
                return Some(format!(
                    "peak constraint: amplitude {} exceeds sqrt(alpha) = {cap}",
                    dist.max_location()
                ));
            }
        }
        for (exp, bound) in self.moments() {
            let m: f64 = dist
                .points()
                .iter()
                .map(|x| x.probability * x.location.powi(exp))
                .sum();
            if m > bound * (1.0 + tol) {
                let name = if exp == 2 { "second" } else { "fourth" };
                return Some(format!("{name}-moment constraint: {m} > {bound}"));
            }
        }
        None
    }

    /// Per-amplitude multiplier coefficients `(r^2 - alpha, r^4 - kappa alpha^2)`.
    fn coefficients(&self, r: f64) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (j, (exp, bound)) in self.moments().into_iter().enumerate() {
            out[j] = r.powi(exp) - bound;
        }
        out
    }

    /// Derivatives of [`Self::coefficients`] in `r`.
    fn coefficient_slopes(&self, r: f64) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (j, (exp, _)) in self.moments().into_iter().enumerate() {
            out[j] = exp as f64 * r.powi(exp - 1);
        }
        out
    }
}

/// Lagrange multipliers; entries a regime does not use stay zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Multipliers {
    fn as_array(&self) -> [f64; 2] {
        [self.lambda1, self.lambda2]
    }
}

fn multiplier_term(constraints: &ConstraintSet, lambda: &Multipliers, r: f64) -> f64 {
    let c = constraints.coefficients(r);
    let l = lambda.as_array();
    c[0] * l[0] + c[1] * l[1]
}

/// KT functional at amplitude `r` for any model/regime combination.
pub fn kt_lhs(
    r: f64,
    dist: &AmplitudeDistribution,
    channel: &ChannelSpec,
    constraints: &ConstraintSet,
    lambda: &Multipliers,
    capacity: f64,
    q: &QuadratureConfig,
) -> Result<f64> {
    if let Some(cap) = constraints.amplitude_cap() {
        if r > cap * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "peak KT condition is only defined on [0, {cap}], got r = {r}"
            )));
        }
    }
    let d = information_density(r, dist, channel, q)?;
    Ok(-d + multiplier_term(constraints, lambda, r) + capacity)
}

/// Classical Rician channel under second- and fourth-moment constraints:
/// `int g ln f_R dR + ln(1+r^2) + l1 (r^2 - alpha) + l2 (r^4 - kappa alpha^2) + C + 1`.
#[allow(clippy::too_many_arguments)]
pub fn kt_lhs_moment4(
    r: f64,
    dist: &AmplitudeDistribution,
    k: f64,
    alpha: f64,
    kappa: f64,
    lambda1: f64,
    lambda2: f64,
    capacity: f64,
    q: &QuadratureConfig,
) -> Result<f64> {
    kt_lhs(
        r,
        dist,
        &ChannelSpec::classical(k)?,
        &ConstraintSet::moment4(alpha, kappa)?,
        &Multipliers { lambda1, lambda2 },
        capacity,
        q,
    )
}

/// Classical Rician channel under a peak constraint, defined on `[0, sqrt(alpha)]`.
pub fn kt_lhs_peak(
    r: f64,
    dist: &AmplitudeDistribution,
    k: f64,
    alpha: f64,
    capacity: f64,
    q: &QuadratureConfig,
) -> Result<f64> {
    kt_lhs(
        r,
        dist,
        &ChannelSpec::classical(k)?,
        &ConstraintSet::peak(alpha)?,
        &Multipliers::default(),
        capacity,
        q,
    )
}

/// Phase-noise Rician channel under an average-power constraint:
/// `-D(g(., r) || f_R) + lambda (r^2 - alpha) + C`.
#[allow(clippy::too_many_arguments)]
pub fn kt_lhs_pn(
    r: f64,
    dist: &AmplitudeDistribution,
    k: f64,
    alpha: f64,
    lambda: f64,
    capacity: f64,
    q: &QuadratureConfig,
) -> Result<f64> {
    kt_lhs(
        r,
        dist,
        &ChannelSpec::phase_noise(k)?,
        &ConstraintSet::average_power(alpha)?,
        &Multipliers {
            lambda1: lambda,
            lambda2: 0.0,
        },
        capacity,
        q,
    )
}

/// Multipliers recovered from the equality conditions at the mass points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierEstimate {
    pub multipliers: Multipliers,
    /// Euclidean norm of the residual of the equality system.
    pub residual_norm: f64,
    /// The mass points alone did not determine every active multiplier;
    /// probe inequalities at `r = 0` and `r = 2 r_max` were used.
    pub under_determined: bool,
}

/// Least squares over the listed columns with the rest fixed at zero,
/// keeping the best nonnegative solution.
fn nonneg_least_squares(rows: &[([f64; 2], f64)], free: &[usize]) -> ([f64; 2], f64) {
    let residual = |l: &[f64; 2]| -> f64 {
        rows.iter()
            .map(|(a, y)| (a[0] * l[0] + a[1] * l[1] - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut best = ([0.0; 2], residual(&[0.0; 2]));
    let subsets: Vec<Vec<usize>> = match free.len() {
        0 => vec![],
        1 => vec![vec![free[0]]],
        _ => vec![vec![free[0]], vec![free[1]], free.to_vec()],
    };
    for subset in subsets {
        let a = DMatrix::from_fn(rows.len(), subset.len(), |i, j| rows[i].0[subset[j]]);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        let Ok(sol) = a.svd(true, true).solve(&y, 1e-13) else {
            continue;
        };
        if sol.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            continue;
        }
        let mut l = [0.0; 2];
        for (j, &col) in subset.iter().enumerate() {
            l[col] = sol[j];
        }
        let res = residual(&l);
        if res < best.1 {
            best = (l, res);
        }
    }
    best
}

fn column_rank(rows: &[([f64; 2], f64)], free: &[usize]) -> usize {
    if rows.is_empty() || free.is_empty() {
        return 0;
    }
    let a = DMatrix::from_fn(rows.len(), free.len(), |i, j| rows[i].0[free[j]]);
    let sv = a.singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-9 * top.max(1e-300)).count()
}

/// Recover the multipliers of a candidate law.
///
/// Unknowns are the multipliers of the tight constraints (slack constraints
/// get zero). Equations are `KT(r_i) = 0` at every mass point and, at every
/// interior mass point, `KT'(r_i) = 0`, since a nonnegative function touching
/// zero in the interior has a stationary point there. The nonnegative
/// least-squares solution is returned.
pub fn estimate_multipliers(
    dist: &AmplitudeDistribution,
    channel: &ChannelSpec,
    constraints: &ConstraintSet,
    capacity: f64,
    q: &QuadratureConfig,
) -> Result<MultiplierEstimate> {
    let moments = constraints.moments();
    let free: Vec<usize> = moments
        .iter()
        .enumerate()
        .filter(|(_, &(exp, bound))| {
            let m: f64 = dist
                .points()
                .iter()
                .map(|x| x.probability * x.location.powi(exp))
                .sum();
            m >= bound * (1.0 - ACTIVE_TOL)
        })
        .map(|(j, _)| j)
        .collect();

    let mut rows: Vec<([f64; 2], f64)> = Vec::new();
    let cap = constraints.amplitude_cap();
    for m in dist.points() {
        let r = m.location;
        let (d, slope) = information_density_with_slope(r, dist, channel, q)?;
        rows.push((constraints.coefficients(r), d - capacity));
        let interior = r > 0.0 && cap.is_none_or(|c| r < c * (1.0 - 1e-12));
        if interior {
            rows.push((constraints.coefficient_slopes(r), slope));
        }
    }

    let under_determined = column_rank(&rows, &free) < free.len();
    let (mut lambda, mut residual) = nonneg_least_squares(&rows, &free);

    if under_determined {
        // Probe amplitudes where KT must stay nonnegative. A violated probe is
        // promoted to an equality row and the fit repeated.
        let r_max = dist.max_location();
        let far = if r_max > 0.0 {
            2.0 * r_max
        } else {
            2.0 * constraints.alpha().sqrt()
        };
        let mut probes = Vec::new();
        for r in [0.0, far] {
            if dist.points().iter().any(|m| m.location == r) {
                continue;
            }
            let d = information_density(r, dist, channel, q)?;
            probes.push((constraints.coefficients(r), d - capacity));
        }
        let mut augmented = rows.clone();
        for _ in 0..probes.len() {
            let violated = probes.iter().position(|(a, y)| {
                a[0] * lambda[0] + a[1] * lambda[1] - y < -1e-12
                    && !augmented.iter().any(|row| row.0 == *a)
            });
            let Some(i) = violated else { break };
            augmented.push(probes[i]);
            let fit = nonneg_least_squares(&augmented, &free);
            lambda = fit.0;
            residual = fit.1;
        }
    }

    Ok(MultiplierEstimate {
        multipliers: Multipliers {
            lambda1: lambda[0],
            lambda2: lambda[1],
        },
        residual_norm: residual,
        under_determined,
    })
}

/// Scan grid and tolerance for [`verify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KtOptions {
    /// Absolute tolerance in nats. The verdict uses it scaled by the
    /// capacity (clamped to `[1e-5, 1]`), so low-SNR candidates whose whole
    /// mutual information is below `kt_tol` cannot pass trivially.
    pub kt_tol: f64,
    /// Upper end of the scan; defaults to `3 max(r_max, sqrt(alpha))`.
    /// Ignored in the peak regime, which always scans `[0, sqrt(alpha)]`.
    pub r_hi: Option<f64>,
    /// Points in each of the linear and the logarithmic halves of the grid.
    pub points_per_half: usize,
}

impl Default for KtOptions {
    fn default() -> Self {
        Self {
            kt_tol: 1e-3,
            r_hi: None,
            points_per_half: 1000,
        }
    }
}

/// Outcome of a KT certificate check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KTReport {
    pub lambda1: f64,
    pub lambda2: f64,
    pub capacity_nats: f64,
    pub grid_min: f64,
    pub argmin_r: f64,
    pub mass_point_residuals: Vec<f64>,
    pub pass: bool,
    pub grid_spec: String,
    pub kt_tol: f64,
    /// Tolerance actually applied to `grid_min` and the residuals.
    pub effective_tol: f64,
    pub feasible: bool,
    pub multiplier_residual: f64,
    pub under_determined: bool,
    /// Grid points skipped because their quadrature failed.
    pub quadrature_failures: usize,
}

pub fn effective_tolerance(kt_tol: f64, capacity: f64) -> f64 {
    kt_tol * capacity.clamp(1e-5, 1.0)
}

fn scan_grid(r_hi: f64, per_half: usize, extra: &[f64]) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=per_half)
        .map(|i| r_hi * i as f64 / per_half as f64)
        .collect();
    let lo = (r_hi * 1e-4).ln();
    let hi = r_hi.ln();
    grid.extend((0..per_half).map(|i| (lo + (hi - lo) * i as f64 / per_half as f64).exp()));
    grid.extend(extra.iter().filter(|&&r| r <= r_hi));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Certify a candidate law: recover multipliers, scan the KT functional on
/// a grid and check equality at the mass points.
pub fn verify(
    dist: &AmplitudeDistribution,
    channel: &ChannelSpec,
    constraints: &ConstraintSet,
    capacity: f64,
    q: &QuadratureConfig,
    opts: &KtOptions,
) -> Result<KTReport> {
    let feasible = constraints.violation(dist, FEASIBILITY_TOL).is_none();
    let est = estimate_multipliers(dist, channel, constraints, capacity, q)?;
    let lambda = est.multipliers;
    let r_hi = match constraints.amplitude_cap() {
        Some(cap) => cap,
        None => opts
            .r_hi
            .unwrap_or(3.0 * dist.max_location().max(constraints.alpha().sqrt())),
    };
    let per_half = opts.points_per_half.max(2);
    let locations = dist.locations();
    let grid = scan_grid(r_hi, per_half, &locations);
    let eval = |r: f64| kt_lhs(r, dist, channel, constraints, &lambda, capacity, q);

    let values: Vec<Option<f64>> = grid.par_iter().map(|&r| eval(r).ok()).collect();
    let mut failures = values.iter().filter(|v| v.is_none()).count();
    let mut best = (f64::INFINITY, 0.0);
    let mut best_idx = 0;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            if v < best.0 {
                best = (v, grid[i]);
                best_idx = i;
            }
        }
    }
    // Halve the spacing around the minimum.
    if best.0.is_finite() {
        let lo = grid[best_idx.saturating_sub(1)];
        let hi = grid[(best_idx + 1).min(grid.len() - 1)];
        let refined: Vec<f64> = (1..40).map(|i| lo + (hi - lo) * i as f64 / 40.0).collect();
        let extra: Vec<Option<f64>> = refined.par_iter().map(|&r| eval(r).ok()).collect();
        for (r, v) in refined.iter().zip(extra) {
            match v {
                Some(v) if v < best.0 => best = (v, *r),
                Some(_) => {}
                None => failures += 1,
            }
        }
    }

    let residuals = locations
        .iter()
        .map(|&r| eval(r))
        .collect::<Result<Vec<f64>>>()?;
    let tol = effective_tolerance(opts.kt_tol, capacity);
    let pass = feasible
        && failures == 0
        && lambda.lambda1 >= 0.0
        && lambda.lambda2 >= 0.0
        && best.0 >= -tol
        && residuals.iter().all(|r| r.abs() <= tol);
    Ok(KTReport {
        lambda1: lambda.lambda1,
        lambda2: lambda.lambda2,
        capacity_nats: capacity,
        grid_min: best.0,
        argmin_r: best.1,
        mass_point_residuals: residuals,
        pass,
        grid_spec: format!(
            "{} points on [0, {r_hi:.6}] (linear + log-spaced from {:.3e}, x2 refinement near argmin)",
            grid.len(),
            r_hi * 1e-4
        ),
        kt_tol: opts.kt_tol,
        effective_tol: tol,
        feasible,
        multiplier_residual: est.residual_norm,
        under_determined: est.under_determined,
        quadrature_failures: failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::mutual_information;

    fn q() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn base_case() -> AmplitudeDistribution {
        AmplitudeDistribution::new([(0.0, 0.9), (0.5f64.sqrt(), 0.1)]).unwrap()
    }

    #[test]
    fn constraint_validation() {
        assert!(ConstraintSet::moment4(0.05, 1.0).is_err());
        assert!(ConstraintSet::moment4(0.0, 2.0).is_err());
        assert!(ConstraintSet::peak(-1.0).is_err());
        assert!(ConstraintSet::average_power(f64::NAN).is_err());
        let c = ConstraintSet::moment4(0.05, 10.0).unwrap();
        assert_eq!(c.multiplier_count(), 2);
        assert!(c.violation(&base_case(), FEASIBILITY_TOL).is_none());
        let heavy = AmplitudeDistribution::new([(0.0, 0.5), (0.5f64.sqrt(), 0.5)]).unwrap();
        assert!(c.violation(&heavy, FEASIBILITY_TOL).is_some());
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ConstraintSet>(&json).unwrap(), c);
    }

    #[test]
    fn base_case_multipliers_and_shape() {
        let channel = ChannelSpec::classical(1.0).unwrap();
        let cons = ConstraintSet::moment4(0.05, 10.0).unwrap();
        let c = mutual_information(&base_case(), &channel, &q()).unwrap();
        let est = estimate_multipliers(&base_case(), &channel, &cons, c, &q()).unwrap();
        assert!(!est.under_determined);
        assert!((est.multipliers.lambda1 - 0.891).abs() < 0.02, "{est:?}");
        assert!((est.multipliers.lambda2 - 0.151).abs() < 0.02, "{est:?}");

        // Printed multipliers and capacity: nonnegative on [0, 5].
        for i in 0..=100 {
            let r = 0.05 * i as f64;
            let v = kt_lhs_moment4(r, &base_case(), 1.0, 0.05, 10.0, 0.89106, 0.15135, 0.0531, &q())
                .unwrap();
            assert!(v >= -1e-3, "r={r}: {v}");
        }
        let at = |r| {
            kt_lhs_moment4(r, &base_case(), 1.0, 0.05, 10.0, 0.89106, 0.15135, 0.0531, &q()).unwrap()
        };
        assert!(at(50.0) > at(10.0) && at(10.0) > 0.0);
        assert!(at(20.0) > at(10.0) && at(50.0) > at(20.0));
    }

    #[test]
    fn base_case_certificate_and_failures() {
        let channel = ChannelSpec::classical(1.0).unwrap();
        let cons = ConstraintSet::moment4(0.05, 10.0).unwrap();
        let opts = KtOptions {
            r_hi: Some(5.0),
            points_per_half: 200,
            ..Default::default()
        };
        let c = mutual_information(&base_case(), &channel, &q()).unwrap();
        let report = verify(&base_case(), &channel, &cons, c, &q(), &opts).unwrap();
        assert!(report.pass, "{report:?}");

        let heavy = AmplitudeDistribution::new([(0.0, 0.5), (0.5f64.sqrt(), 0.5)]).unwrap();
        let c = mutual_information(&heavy, &channel, &q()).unwrap();
        let report = verify(&heavy, &channel, &cons, c, &q(), &opts).unwrap();
        assert!(!report.pass && !report.feasible);

        let three =
            AmplitudeDistribution::new([(0.0, 1.0 / 3.0), (0.2, 1.0 / 3.0), (0.3, 1.0 / 3.0)])
                .unwrap();
        assert!(cons.violation(&three, FEASIBILITY_TOL).is_none());
        let c3 = mutual_information(&three, &channel, &q()).unwrap();
        assert!(c3 < 0.0531);
        let report = verify(&three, &channel, &cons, c3, &q(), &opts).unwrap();
        assert!(!report.pass && report.grid_min < -opts.kt_tol, "{report:?}");
    }

    #[test]
    fn slack_constraints_get_zero_multipliers() {
        let channel = ChannelSpec::classical(1.0).unwrap();
        let cons = ConstraintSet::moment4(0.05, 10.0).unwrap();
        let tiny = AmplitudeDistribution::new([(0.0, 0.99), (0.5, 0.01)]).unwrap();
        let c = mutual_information(&tiny, &channel, &q()).unwrap();
        let est = estimate_multipliers(&tiny, &channel, &cons, c, &q()).unwrap();
        assert_eq!(est.multipliers, Multipliers::default());
    }

    #[test]
    fn peak_regime() {
        let q = q();
        let channel = ChannelSpec::classical(1.0).unwrap();
        let alpha: f64 = 0.05;
        let cons = ConstraintSet::peak(alpha).unwrap();
        let single = AmplitudeDistribution::point_mass(alpha.sqrt()).unwrap();
        let c = mutual_information(&single, &channel, &q).unwrap();
        let est = estimate_multipliers(&single, &channel, &cons, c, &q).unwrap();
        assert_eq!(est.multipliers, Multipliers::default());
        assert!(
            kt_lhs_peak(alpha.sqrt(), &single, 1.0, alpha, c, &q)
                .unwrap()
                .abs()
                < 1e-9
        );
        for i in 0..=20 {
            let r = alpha.sqrt() * i as f64 / 20.0;
            assert!(kt_lhs_peak(r, &single, 1.0, alpha, c, &q).unwrap() >= -1e-9);
        }
        assert!(matches!(
            kt_lhs_peak(0.3, &single, 1.0, alpha, c, &q),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn phase_noise_single_mass_is_zero_at_its_location() {
        let d = AmplitudeDistribution::point_mass(0.8).unwrap();
        assert_eq!(kt_lhs_pn(0.8, &d, 1.0, 0.01, 0.0, 0.0, &q()).unwrap(), 0.0);
    }
}
