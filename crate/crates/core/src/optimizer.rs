//! Capacity-achieving input search over discrete amplitude laws.
//!
//! The inner step maximizes the (concave) mutual information over the
//! probabilities of a fixed location set by sequential quadratic programming
//! on a frozen quadrature rule. The outer step moves locations and
//! probabilities jointly inside a trust region, re-solving the inner problem
//! after every trial. [`solve_capacity`] adds mass points until the KT
//! certificate passes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::mutual_information;
use crate::distribution::AmplitudeDistribution;
use crate::error::{Error, Result};
use crate::kt::{verify, ConstraintSet, KTReport, KtOptions, Multipliers};
use crate::qp::QuadraticProgram;
use crate::quadrature::QuadratureConfig;
use crate::special::{ChannelModel, ChannelSpec};
use crate::table::KernelTable;

/// Relative distance under which two mass points are merged.
pub const MERGE_REL: f64 = 1e-6;
/// Probabilities below this are dropped.
pub const PRUNE_PROB: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_points: usize,
    pub restarts: usize,
    pub prob_opt_tol: f64,
    pub loc_opt_tol: f64,
    pub max_outer_iters: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_points: 8,
            restarts: 16,
            prob_opt_tol: 1e-10,
            loc_opt_tol: 1e-8,
            max_outer_iters: 500,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_points < 1 || self.restarts < 1 || self.max_outer_iters < 1 {
            return Err(Error::Domain(
                "max_points, restarts and max_outer_iters must be at least 1".into(),
            ));
        }
        for (name, v) in [
            ("prob_opt_tol", self.prob_opt_tol),
            ("loc_opt_tol", self.loc_opt_tol),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub distribution: AmplitudeDistribution,
    pub capacity_nats: f64,
    pub report: KTReport,
    pub n_points_tried: usize,
    pub converged: bool,
}

/// Two-point law with both moment constraints tight: mass `1 - 1/kappa` at
/// zero and `1/kappa` at `sqrt(kappa alpha)`.
pub fn ansatz_two_point(kappa: f64, alpha: f64) -> Result<AmplitudeDistribution> {
    ConstraintSet::moment4(alpha, kappa)?;
    AmplitudeDistribution::new([
        (0.0, 1.0 - 1.0 / kappa),
        ((kappa * alpha).sqrt(), 1.0 / kappa),
    ])
}

fn moment_rows(locations: &[f64], constraints: &ConstraintSet) -> Vec<(Vec<f64>, f64)> {
    constraints
        .moments()
        .into_iter()
        .map(|(exp, bound)| (locations.iter().map(|r| r.powi(exp)).collect(), bound))
        .collect()
}

fn check_locations(locations: &[f64], constraints: &ConstraintSet) -> Result<()> {
    if locations.is_empty() {
        return Err(Error::Domain("empty location set".into()));
    }
    for w in locations.windows(2) {
        if w[0] == w[1] {
            return Err(Error::Domain(format!("duplicate location {}", w[0])));
        }
    }
    if let Some(&bad) = locations.iter().find(|r| !r.is_finite() || **r < 0.0) {
        return Err(Error::Domain(format!(
            "location {bad} is not a finite amplitude"
        )));
    }
    if let Some(cap) = constraints.amplitude_cap() {
        if let Some(&r) = locations.iter().find(|&&r| r > cap * (1.0 + 1e-12)) {
            return Err(Error::Infeasible(format!(
                "peak constraint: location {r} exceeds sqrt(alpha) = {cap}"
            )));
        }
    }
    let r_min = locations.iter().cloned().fold(f64::INFINITY, f64::min);
    for (exp, bound) in constraints.moments() {
        if r_min.powi(exp) > bound * (1.0 + 1e-12) {
            let name = if exp == 2 { "second" } else { "fourth" };
            return Err(Error::Infeasible(format!(
                "{name}-moment constraint cannot hold: smallest location {r_min} has r^{exp} > {bound}"
            )));
        }
    }
    Ok(())
}

fn is_feasible(p: &[f64], rows: &[(Vec<f64>, f64)]) -> bool {
    let sum: f64 = p.iter().sum();
    p.iter().all(|&x| x >= 0.0)
        && (sum - 1.0).abs() < 1e-12
        && rows
            .iter()
            .all(|(a, b)| a.iter().zip(p).map(|(a, p)| a * p).sum::<f64>() <= b * (1.0 + 1e-14))
}

/// A feasible probability vector close to uniform.
fn feasible_start(locations: &[f64], rows: &[(Vec<f64>, f64)]) -> Vec<f64> {
    let n = locations.len();
    let (i_min, _) = locations
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let mut t: f64 = 1.0;
    for (a, b) in rows {
        let at_min = a[i_min];
        let at_uniform = a.iter().sum::<f64>() / n as f64;
        if at_uniform > *b {
            t = t.min(0.99 * (b - at_min) / (at_uniform - at_min));
        }
    }
    let t = t.max(0.0);
    let mut p = vec![t / n as f64; n];
    p[i_min] += 1.0 - t;
    p
}

struct InnerResult {
    p: Vec<f64>,
    duals: Multipliers,
}

/// Sequential QP ascent on the probabilities for one tabulated location set.
fn optimize_on_table(
    table: &KernelTable,
    locations: &[f64],
    constraints: &ConstraintSet,
    warm: Option<&[f64]>,
    tol: f64,
) -> Result<InnerResult> {
    check_locations(locations, constraints)?;
    let n = locations.len();
    let rows = moment_rows(locations, constraints);
    let mut p = match warm {
        Some(w) if w.len() == n => {
            let s: f64 = w.iter().map(|x| x.max(0.0)).sum();
            let w: Vec<f64> = w.iter().map(|x| x.max(0.0) / s).collect();
            if s > 0.0 && is_feasible(&w, &rows) {
                w
            } else {
                feasible_start(locations, &rows)
            }
        }
        _ => feasible_start(locations, &rows),
    };
    let mut duals = Multipliers::default();
    if n == 1 {
        return Ok(InnerResult {
            p: vec![1.0],
            duals,
        });
    }

    let mut ineq: Vec<(Vec<f64>, f64)> = (0..n)
        .map(|i| {
            let mut a = vec![0.0; n];
            a[i] = -1.0;
            (a, 0.0)
        })
        .collect();
    ineq.extend(rows.iter().cloned());
    let eq = vec![(vec![1.0; n], 1.0)];
    let mut eval = table.evaluate(&p);
    for _ in 0..200 {
        let g = table.grad_p(&eval);
        // Curvature from a slightly smoothed point: the exact Hessian blows up
        // along coordinates whose probability is zero.
        let smooth: Vec<f64> = p.iter().map(|x| 0.999 * x + 0.001 / n as f64).collect();
        let mut qm = -table.hessian_p(&table.evaluate(&smooth));
        let scale = qm.diagonal().amax().max(1e-300);
        for i in 0..n {
            qm[(i, i)] += 1e-10 * scale;
        }
        let pv = DVector::from_column_slice(&p);
        let c = -DVector::from_column_slice(&g) - &qm * &pv;
        let qp = QuadraticProgram {
            q: qm,
            c,
            eq: eq.clone(),
            ineq: ineq.clone(),
        };
        let sol = qp.solve(pv.clone())?;
        let mu = &sol.ineq_multipliers[n..];
        duals = Multipliers {
            lambda1: mu.first().copied().unwrap_or(0.0),
            lambda2: mu.get(1).copied().unwrap_or(0.0),
        };
        let step: Vec<f64> = sol.x.iter().zip(&p).map(|(x, p)| x - p).collect();
        let gap: f64 = g.iter().zip(&step).map(|(g, s)| g * s).sum();
        if gap <= tol {
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-12 {
            let trial: Vec<f64> = p
                .iter()
                .zip(&step)
                .map(|(p, s)| (p + t * s).max(0.0))
                .collect();
            let e = table.evaluate(&trial);
            if e.mutual_information >= eval.mutual_information + 1e-4 * t * gap {
                accepted = Some((trial, e));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, e)) => {
                p = trial;
                eval = e;
            }
            None => break,
        }
    }
    Ok(InnerResult { p, duals })
}

/// Optimal probabilities for fixed locations, with the dual values of the
/// moment constraints (zero where unused or slack).
pub fn optimize_probabilities(
    locations: &[f64],
    channel: &ChannelSpec,
    constraints: &ConstraintSet,
    q: &QuadratureConfig,
) -> Result<(Vec<f64>, Multipliers)> {
    check_locations(locations, constraints)?;
    let table = KernelTable::build(locations, None, channel, q)?;
    let res = optimize_on_table(
        &table,
        locations,
        constraints,
        None,
        SolverConfig::default().prob_opt_tol,
    )?;
    Ok((res.p, res.duals))
}

struct State {
    locations: Vec<f64>,
    p: Vec<f64>,
    duals: Multipliers,
    table: KernelTable,
    mi: f64,
}

impl State {
    fn new(
        pairs: Vec<(f64, f64)>,
        channel: &ChannelSpec,
        constraints: &ConstraintSet,
        q: &QuadratureConfig,
        tol: f64,
    ) -> Result<Self> {
        let dist = AmplitudeDistribution::canonicalize(pairs, MERGE_REL, PRUNE_PROB)?;
        let mut locations = dist.locations();
        if let Some(cap) = constraints.amplitude_cap() {
            for r in &mut locations {
                *r = r.min(cap);
            }
        }
        let probs = dist.probabilities();
        let table = KernelTable::build(&locations, Some(&probs), channel, q)?;
        let inner = optimize_on_table(&table, &locations, constraints, Some(&probs), tol)?;
        let mi = table.evaluate(&inner.p).mutual_information;
        Ok(Self {
            locations,
            p: inner.p,
            duals: inner.duals,
            table,
            mi,
        })
    }

    fn pairs(&self) -> Vec<(f64, f64)> {
        self.locations
            .iter()
            .cloned()
            .zip(self.p.iter().cloned())
            .collect()
    }
}

/// Negative definite part of a symmetric matrix.
fn concave_model(h: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(h);
    let top = eig.eigenvalues.amax().max(1.0);
    let clamped = eig.eigenvalues.map(|l| l.min(-1e-9 * top));
    &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose()
}

fn refine(
    dist: &AmplitudeDistribution,
    channel: &ChannelSpec,
    constraints: &ConstraintSet,
    q: &QuadratureConfig,
    config: &SolverConfig,
) -> Result<AmplitudeDistribution> {
    let tol = config.prob_opt_tol;
    let pairs: Vec<(f64, f64)> = dist
        .points()
        .iter()
        .map(|m| (m.location, m.probability))
        .collect();
    let mut state = State::new(pairs, channel, constraints, q, tol)?;
    let scale = constraints.alpha().sqrt();
    let mut radius = 0.25 * (state.locations.last().unwrap() + scale);
    let cap = constraints.amplitude_cap();

    for _ in 0..config.max_outer_iters {
        let n = state.locations.len();
        let r_scale = 1.0 + state.locations[n - 1];
        if radius < config.loc_opt_tol * r_scale {
            break;
        }
        let eval = state.table.evaluate(&state.p);
        let mut grad = state.table.grad_p(&eval);
        grad.extend(state.p.iter().zip(&eval.slope).map(|(p, s)| p * s));
        // Hessian of the Lagrangian: the moment constraints are bilinear in
        // (p, r) and contribute curvature of their own.
        let mut h = state.table.hessian_full(&state.p, &eval);
        let mu = [state.duals.lambda1, state.duals.lambda2];
        for (j, (exp, _)) in constraints.moments().into_iter().enumerate() {
            let e = exp as f64;
            for i in 0..n {
                let r = state.locations[i];
                let cross = mu[j] * e * r.powi(exp - 1);
                h[(i, n + i)] -= cross;
                h[(n + i, i)] -= cross;
                h[(n + i, n + i)] -= mu[j] * state.p[i] * e * (e - 1.0) * r.powi(exp - 2);
            }
        }
        let qm = -concave_model(h);

        let mut eq_row = vec![0.0; 2 * n];
        eq_row[..n].fill(1.0);
        let sum_p: f64 = state.p.iter().sum();
        let mut ineq = Vec::new();
        for i in 0..n {
            let mut a = vec![0.0; 2 * n];
            a[i] = -1.0;
            ineq.push((a, state.p[i]));
            let r = state.locations[i];
            let mut up = vec![0.0; 2 * n];
            up[n + i] = 1.0;
            let upper = match cap {
                Some(c) => radius.min((c - r).max(0.0)),
                None => radius,
            };
            ineq.push((up, upper));
            let mut down = vec![0.0; 2 * n];
            down[n + i] = -1.0;
            ineq.push((down, radius.min(r)));
        }
        for (exp, bound) in constraints.moments() {
            let mut a = vec![0.0; 2 * n];
            let mut m = 0.0;
            for i in 0..n {
                let r = state.locations[i];
                a[i] = r.powi(exp);
                a[n + i] = state.p[i] * exp as f64 * r.powi(exp - 1);
                m += state.p[i] * r.powi(exp);
            }
            ineq.push((a, (bound - m).max(0.0)));
        }
        let grad = DVector::from_vec(grad);
        let qp = QuadraticProgram {
            q: qm,
            c: -&grad,
            eq: vec![(eq_row, 1.0 - sum_p)],
            ineq,
        };
        let step = qp.solve(DVector::zeros(2 * n))?.x;
        let predicted = grad.dot(&step) - 0.5 * step.dot(&(&qp.q * &step));
        let dr_max = step.rows(n, n).amax();
        if dr_max < config.loc_opt_tol * r_scale {
            break;
        }
        let trial_pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                (
                    (state.locations[i] + step[n + i]).max(0.0),
                    (state.p[i] + step[i]).max(0.0),
                )
            })
            .collect();
        let trial = State::new(trial_pairs, channel, constraints, q, tol);
        match trial {
            // Near the optimum the gain drops below the rounding noise of the
            // tabulated MI; trust the quadratic model there.
            Ok(t) if t.mi > state.mi || (predicted < 1e-13 && t.mi >= state.mi - 1e-14) => {
                state = t;
                if dr_max >= 0.99 * radius {
                    radius *= 2.0;
                }
            }
            _ => radius = 0.25 * dr_max.min(radius),
        }
    }
    AmplitudeDistribution::canonicalize(state.pairs(), MERGE_REL, PRUNE_PROB)
}

/// Trust-region ascent over locations and probabilities jointly. The result
/// never has lower mutual information than the (re-optimized) input.
pub fn refine_locations(
    dist: &AmplitudeDistribution,
    channel: &ChannelSpec,
    constraints: &ConstraintSet,
    q: &QuadratureConfig,
) -> Result<AmplitudeDistribution> {
    refine(dist, channel, constraints, q, &SolverConfig::default())
}

/// Re-optimize probabilities on the final support and prune, until stable,
/// so the returned law is feasible and carries no dust.
fn polish(
    dist: &AmplitudeDistribution,
    channel: &ChannelSpec,
    constraints: &ConstraintSet,
    q: &QuadratureConfig,
    tol: f64,
) -> Result<AmplitudeDistribution> {
    let mut current = dist.clone();
    for _ in 0..4 {
        let locations = current.locations();
        let probs = current.probabilities();
        let table = KernelTable::build(&locations, Some(&probs), channel, q)?;
        let inner = optimize_on_table(&table, &locations, constraints, Some(&probs), tol)?;
        let dust = inner.p.iter().any(|&p| p < PRUNE_PROB);
        let pairs = locations.into_iter().zip(inner.p.iter().cloned());
        if !dust {
            return AmplitudeDistribution::new(pairs);
        }
        current = AmplitudeDistribution::canonicalize(pairs, MERGE_REL, PRUNE_PROB)?;
    }
    Ok(current)
}

fn anchor(constraints: &ConstraintSet) -> f64 {
    match *constraints {
        ConstraintSet::Moment4 { alpha, kappa } => (kappa * alpha).sqrt(),
        ConstraintSet::AveragePower { alpha } => 3.0 * alpha.sqrt(),
        ConstraintSet::Peak { alpha } => alpha.sqrt(),
    }
}

fn spread(n: usize, top: f64) -> Vec<f64> {
    if n == 1 {
        return vec![top];
    }
    (0..n).map(|j| top * j as f64 / (n - 1) as f64).collect()
}

/// New locations derived from a previous solution: one extra point inserted
/// at a position chosen by `variant`.
fn split_start(prev: &AmplitudeDistribution, n: usize, variant: usize) -> Option<Vec<f64>> {
    let mut locs = prev.locations();
    if locs.len() > n {
        return None;
    }
    let r_max = prev.max_location().max(1e-3);
    let mut candidates: Vec<f64> = Vec::new();
    candidates.push(1.5 * r_max);
    for w in locs.windows(2) {
        candidates.push(0.5 * (w[0] + w[1]));
    }
    if locs[0] > 0.0 {
        candidates.push(0.0);
    }
    for &r in &locs {
        candidates.push(r * 1.1 + 1e-3);
    }
    candidates.push(3.0 * r_max);
    let mut v = variant;
    while locs.len() < n {
        locs.push(candidates[v % candidates.len()]);
        v = v / candidates.len() + 1;
    }
    Some(locs)
}

fn random_start<R: Rng>(n: usize, constraints: &ConstraintSet, rng: &mut R) -> Vec<f64> {
    let s = constraints.alpha().sqrt();
    let (lo, hi) = match constraints.amplitude_cap() {
        Some(cap) => (0.05 * cap, cap),
        None => (0.05 * s, (10.0 * s).max(6.0)),
    };
    let mut locs: Vec<f64> = (0..n)
        .map(|_| (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp())
        .collect();
    if rng.random_bool(0.5) {
        locs[0] = 0.0;
    }
    locs
}

fn start_locations(
    n: usize,
    index: usize,
    constraints: &ConstraintSet,
    warm: &[AmplitudeDistribution],
    seed: u64,
) -> Vec<f64> {
    let top = anchor(constraints);
    let mut locs = if index == 0 {
        let mut l = vec![0.0, top];
        l.extend((1..n.saturating_sub(1)).map(|j| top * j as f64 / (n - 1) as f64));
        if n == 1 {
            l = vec![constraints.alpha().sqrt()];
        }
        l
    } else if index == 1 {
        let top = match constraints.amplitude_cap() {
            Some(cap) => cap,
            None => 3.0 * constraints.alpha().sqrt(),
        };
        spread(n, top)
    } else {
        let w = index - 2;
        let per_warm = 4;
        let warm_start = warm
            .get(w / per_warm)
            .and_then(|prev| split_start(prev, n, w % per_warm));
        match warm_start {
            Some(l) if w < warm.len() * per_warm => l,
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((n as u64) << 32) | index as u64);
                random_start(n, constraints, &mut rng)
            }
        }
    };
    if let Some(cap) = constraints.amplitude_cap() {
        for r in &mut locs {
            *r = r.min(cap);
        }
    }
    // Moment constraints need a location with r^2 <= alpha.
    let alpha = constraints.alpha();
    if constraints.amplitude_cap().is_none() && locs.iter().all(|r| r * r > alpha) {
        locs[0] = 0.0;
    }
    locs.sort_by(f64::total_cmp);
    locs.dedup_by(|a, b| (*a - *b).abs() < 1e-4 * (1.0 + *b));
    locs
}

fn run_start(
    locations: Vec<f64>,
    channel: &ChannelSpec,
    constraints: &ConstraintSet,
    config: &SolverConfig,
    q: &QuadratureConfig,
) -> Result<(AmplitudeDistribution, f64)> {
    let table = KernelTable::build(&locations, None, channel, q)?;
    let inner = optimize_on_table(&table, &locations, constraints, None, config.prob_opt_tol)?;
    let start = AmplitudeDistribution::canonicalize(
        locations.into_iter().zip(inner.p),
        MERGE_REL,
        PRUNE_PROB,
    )?;
    let refined = refine(&start, channel, constraints, q, config)?;
    let dist = polish(&refined, channel, constraints, q, config.prob_opt_tol)?;
    let mi = mutual_information(&dist, channel, q)?;
    Ok((dist, mi))
}

/// Best law with at most `n` mass points over the configured restarts.
pub fn solve_fixed_n(
    n: usize,
    channel: &ChannelSpec,
    constraints: &ConstraintSet,
    config: &SolverConfig,
    q: &QuadratureConfig,
) -> Result<(AmplitudeDistribution, f64)> {
    solve_fixed_n_from(n, channel, constraints, config, q, &[])
}

/// As [`solve_fixed_n`], additionally seeding restarts from earlier solutions
/// (each extended by new points up to `n`).
pub fn solve_fixed_n_from(
    n: usize,
    channel: &ChannelSpec,
    constraints: &ConstraintSet,
    config: &SolverConfig,
    q: &QuadratureConfig,
    warm: &[AmplitudeDistribution],
) -> Result<(AmplitudeDistribution, f64)> {
    if n < 1 {
        return Err(Error::Domain("need at least one mass point".into()));
    }
    constraints.validate()?;
    config.validate()?;
    let starts = config.restarts.max(2 + 4 * warm.len().min(4));
    let results: Vec<Result<(AmplitudeDistribution, f64)>> = (0..starts)
        .into_par_iter()
        .map(|i| {
            let locs = start_locations(n, i, constraints, warm, config.seed);
            run_start(locs, channel, constraints, config, q)
        })
        .collect();
    let mut best: Option<(AmplitudeDistribution, f64)> = None;
    let mut last_err = None;
    for r in results {
        match r {
            Ok((d, mi)) => {
                if best.as_ref().is_none_or(|b| mi > b.1) {
                    best = Some((d, mi));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| {
        Error::Infeasible(format!(
            "every restart failed; last error: {}",
            last_err.map(|e| e.to_string()).unwrap_or_default()
        ))
    })
}

fn first_n(channel: &ChannelSpec, constraints: &ConstraintSet) -> usize {
    match (channel.model, constraints) {
        (ChannelModel::PhaseNoiseRician, _) | (_, ConstraintSet::Peak { .. }) => 1,
        _ => 2,
    }
}

/// Capacity by escalating the number of mass points until the KT certificate
/// passes, with default KT options and no warm start.
pub fn solve_capacity(
    channel: &ChannelSpec,
    constraints: &ConstraintSet,
    config: &SolverConfig,
    q: &QuadratureConfig,
) -> Result<Solution> {
    solve_capacity_with(channel, constraints, config, q, &KtOptions::default(), None)
}

pub fn solve_capacity_with(
    channel: &ChannelSpec,
    constraints: &ConstraintSet,
    config: &SolverConfig,
    q: &QuadratureConfig,
    kt: &KtOptions,
    warm: Option<&AmplitudeDistribution>,
) -> Result<Solution> {
    constraints.validate()?;
    config.validate()?;
    q.validate()?;
    let mut best: Option<Solution> = None;
    let mut previous: Option<AmplitudeDistribution> = None;
    let start = first_n(channel, constraints).min(config.max_points);
    for n in start..=config.max_points {
        let mut seeds: Vec<AmplitudeDistribution> = Vec::new();
        seeds.extend(previous.iter().cloned());
        seeds.extend(warm.filter(|w| w.len() <= n).cloned());
        let (dist, mi) = solve_fixed_n_from(n, channel, constraints, config, q, &seeds)?;
        let report = verify(&dist, channel, constraints, mi, q, kt)?;
        let converged = report.pass;
        let candidate = Solution {
            distribution: dist.clone(),
            capacity_nats: mi,
            report,
            n_points_tried: n,
            converged,
        };
        if converged {
            return Ok(candidate);
        }
        match &mut best {
            Some(b) if b.capacity_nats >= mi => b.n_points_tried = n,
            _ => best = Some(candidate),
        }
        previous = Some(dist);
    }
    Ok(best.expect("at least one point count is tried"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn base_case() -> (ChannelSpec, ConstraintSet) {
        (
            ChannelSpec::classical(1.0).unwrap(),
            ConstraintSet::moment4(0.05, 10.0).unwrap(),
        )
    }

    #[test]
    fn ansatz_moments() {
        let d = ansatz_two_point(10.0, 0.05).unwrap();
        assert_eq!(d.probabilities(), vec![0.9, 0.1]);
        assert!((d.locations()[1] - 0.5f64.sqrt()).abs() < 1e-15);
        for (kappa, alpha) in [(2.0, 0.01), (10.0, 0.05), (100.0, 0.1)] {
            let d = ansatz_two_point(kappa, alpha).unwrap();
            assert!((d.second_moment() - alpha).abs() < 1e-15 * (1.0 + alpha));
            assert!((d.fourth_moment() - kappa * alpha * alpha).abs() < 1e-14 * kappa * alpha);
        }
        assert!(ansatz_two_point(1.0, 0.05).is_err());
    }

    #[test]
    fn two_point_probabilities_saturate() {
        let (channel, cons) = base_case();
        let (p, duals) =
            optimize_probabilities(&[0.0, 0.5f64.sqrt()], &channel, &cons, &q()).unwrap();
        assert!((p[1] - 0.1).abs() < 1e-9, "{p:?}");
        assert!(duals.lambda1 >= 0.0 && duals.lambda2 >= 0.0);

        // Away from sqrt(kappa alpha) only one constraint binds.
        for r1 in [0.4, 1.0] {
            let (p, _) = optimize_probabilities(&[0.0, r1], &channel, &cons, &q()).unwrap();
            let cap = (0.05 / (r1 * r1)).min(10.0 * 0.0025 / r1.powi(4));
            assert!((p[1] - cap).abs() < 1e-9, "r1={r1} {p:?} cap {cap}");
        }

        let peak = ConstraintSet::peak(0.05).unwrap();
        let (p, _) = optimize_probabilities(&[0.1], &channel, &peak, &q()).unwrap();
        assert_eq!(p, vec![1.0]);
        assert!(matches!(
            optimize_probabilities(&[0.5, 1.0], &channel, &cons, &q()),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(
            optimize_probabilities(&[0.0, 0.3], &channel, &peak, &q()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn probabilities_match_grid_search() {
        let channel = ChannelSpec::classical(0.0).unwrap();
        let cons = ConstraintSet::average_power(0.05).unwrap();
        let locs = [0.0, 0.7];
        let (p, _) = optimize_probabilities(&locs, &channel, &cons, &q()).unwrap();
        let d = AmplitudeDistribution::new(locs.iter().cloned().zip(p.iter().cloned())).unwrap();
        let mi = mutual_information(&d, &channel, &q()).unwrap();
        let p_cap = 0.05 / 0.49;
        let mut best = 0.0f64;
        let mut j = 1;
        while j as f64 * 1e-4 <= p_cap {
            let p1 = j as f64 * 1e-4;
            let d = AmplitudeDistribution::new([(0.0, 1.0 - p1), (0.7, p1)]).unwrap();
            best = best.max(mutual_information(&d, &channel, &q()).unwrap());
            j += 1;
        }
        assert!(
            mi >= best - 1e-12 && mi - best < 1e-3,
            "{mi} vs grid {best}"
        );
    }

    #[test]
    fn refine_reaches_base_case() {
        let (channel, cons) = base_case();
        let start = AmplitudeDistribution::new([(0.0, 0.97), (1.2, 0.03)]).unwrap();
        let out = refine_locations(&start, &channel, &cons, &q()).unwrap();
        assert_eq!(out.len(), 2, "{out:?}");
        assert!(
            (out.locations()[1] - 0.5f64.sqrt()).abs() < 0.005,
            "{out:?}"
        );
        let mi_in = mutual_information(&start, &channel, &q()).unwrap();
        let mi_out = mutual_information(&out, &channel, &q()).unwrap();
        assert!(mi_out >= mi_in - 1e-12);
        assert!((mi_out - 0.0531).abs() < 5e-4);

        let again = refine_locations(&out, &channel, &cons, &q()).unwrap();
        assert!((again.locations()[1] - out.locations()[1]).abs() < 1e-6);
    }

    #[test]
    fn peak_single_mass() {
        let channel = ChannelSpec::classical(1.0).unwrap();
        let cons = ConstraintSet::peak(0.05).unwrap();
        let (d, mi) = solve_fixed_n(1, &channel, &cons, &SolverConfig::default(), &q()).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d.locations()[0] - 0.05f64.sqrt()).abs() < 1e-12);
        assert!(mi > 0.0);
    }

    #[test]
    fn base_case_capacity_is_certified_and_stable_in_n() {
        let (channel, cons) = base_case();
        let config = SolverConfig::default();
        let sol = solve_capacity(&channel, &cons, &config, &q()).unwrap();
        assert!(sol.converged, "{sol:?}");
        assert_eq!(sol.distribution.len(), 2);
        assert!((sol.capacity_nats - 0.0531).abs() < 5e-4);
        assert!((sol.report.lambda1 - 0.891).abs() < 0.02);
        assert!((sol.report.lambda2 - 0.151).abs() < 0.02);
        let (_, mi3) = solve_fixed_n(3, &channel, &cons, &config, &q()).unwrap();
        assert!(
            mi3 <= sol.capacity_nats + 1e-6,
            "{mi3} vs {}",
            sol.capacity_nats
        );
    }

    #[test]
    fn deterministic_for_a_seed() {
        let channel = ChannelSpec::phase_noise(1.0).unwrap();
        let cons = ConstraintSet::average_power(0.05).unwrap();
        let config = SolverConfig {
            restarts: 6,
            seed: 7,
            ..Default::default()
        };
        let a = solve_fixed_n(2, &channel, &cons, &config, &q()).unwrap();
        let b = solve_fixed_n(2, &channel, &cons, &config, &q()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }
}
