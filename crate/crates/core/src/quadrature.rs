//! Globally adaptive 15-point Gauss-Kronrod quadrature on finite intervals.
//!
//! Panels are bisected in order of their error estimate `|K15 - G7|` until the
//! summed estimate falls below `max(abs_tol, rel_tol * |I|)` for every
//! component of a (possibly vector-valued) integrand.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kronrod abscissae on [-1, 1] (nonnegative half, descending).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

/// Gauss weights for the 7-point rule embedded at XGK[1], XGK[3], XGK[5], XGK[7].
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Absolute floor under the relative panel tolerance.
pub const ABS_TOL_FLOOR: f64 = 1e-13;

/// Tolerances shared by every semi-infinite integral in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    /// Probability mass allowed beyond the truncation point of `[0, inf)`.
    pub r_tail_mass_tol: f64,
    pub panel_rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            r_tail_mass_tol: 1e-16,
            panel_rel_tol: 1e-10,
            max_panels: 4096,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.r_tail_mass_tol) || !ok(self.panel_rel_tol) {
            return Err(Error::Domain(
                "quadrature tolerances must be positive".into(),
            ));
        }
        if self.r_tail_mass_tol >= 1.0 {
            return Err(Error::Domain("tail mass tolerance must be below 1".into()));
        }
        if self.max_panels < 16 {
            return Err(Error::Domain("max_panels must be at least 16".into()));
        }
        Ok(())
    }
}

/// Nodes and weights of the 15-point Kronrod rule mapped onto `[a, b]`.
pub fn kronrod_nodes(a: f64, b: f64) -> [(f64, f64); 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [(0.0, 0.0); 15];
    for j in 0..7 {
        out[2 * j] = (c - h * XGK[j], h * WGK[j]);
        out[2 * j + 1] = (c + h * XGK[j], h * WGK[j]);
    }
    out[14] = (c, h * WGK[7]);
    out
}

#[derive(Debug, Clone)]
struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
    priority: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        // Ties broken by position so the refinement order is reproducible.
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Integral {
    pub value: Vec<f64>,
    pub error: Vec<f64>,
    /// Final panel partition, sorted by left endpoint.
    pub panels: Vec<(f64, f64)>,
}

fn eval_panel<F>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Panel
where
    F: FnMut(f64, &mut [f64]),
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    f(c, buf);
    for d in 0..dim {
        kron[d] = WGK[7] * buf[d];
        gauss[d] = WG[3] * buf[d];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        f(c - dx, buf);
        let mut pair = buf.to_vec();
        f(c + dx, buf);
        for d in 0..dim {
            pair[d] += buf[d];
            kron[d] += WGK[j] * pair[d];
            if j % 2 == 1 {
                gauss[d] += WG[j / 2] * pair[d];
            }
        }
    }
    let value: Vec<f64> = kron.iter().map(|v| v * h).collect();
    let error: Vec<f64> = kron
        .iter()
        .zip(&gauss)
        .map(|(k, g)| ((k - g) * h).abs())
        .collect();
    Panel {
        a,
        b,
        value,
        error,
        priority: 0.0,
    }
}

/// Integrate a vector-valued function over `[breaks[0], breaks[last]]`,
/// starting from the panels delimited by `breaks` (sorted, at least two).
pub fn integrate_vec<F>(
    mut f: F,
    dim: usize,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<Integral>
where
    F: FnMut(f64, &mut [f64]),
{
    debug_assert!(breaks.len() >= 2);
    let mut buf = vec![0.0; dim];
    let mut heap = BinaryHeap::new();
    let mut total = vec![0.0; dim];
    let mut total_err = vec![0.0; dim];
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let p = eval_panel(&mut f, w[0], w[1], dim, &mut buf);
            for d in 0..dim {
                total[d] += p.value[d];
                total_err[d] += p.error[d];
            }
            heap.push(p);
        }
    }
    let tolerance = |total: &[f64]| -> Vec<f64> {
        total
            .iter()
            .map(|v| (rel_tol * v.abs()).max(abs_tol))
            .collect()
    };
    let prioritize = |p: &mut Panel, tol: &[f64]| {
        p.priority = p
            .error
            .iter()
            .zip(tol)
            .map(|(e, t)| e / t)
            .fold(0.0, f64::max);
    };
    // Priorities are relative to the tolerance, recomputed lazily.
    let mut tol = tolerance(&total);
    let mut panels: Vec<Panel> = heap.into_vec();
    for p in &mut panels {
        prioritize(p, &tol);
    }
    let mut heap: BinaryHeap<Panel> = panels.into();

    loop {
        let converged = total_err.iter().zip(&tol).all(|(e, t)| e <= t);
        if converged {
            break;
        }
        if heap.len() >= max_panels {
            let achieved = total_err.iter().cloned().fold(0.0, f64::max);
            return Err(Error::Quadrature {
                achieved,
                panels: heap.len(),
            });
        }
        let worst = heap.pop().expect("at least one panel");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel cannot be split further in floating point.
            let achieved = total_err.iter().cloned().fold(0.0, f64::max);
            return Err(Error::Quadrature {
                achieved,
                panels: heap.len() + 1,
            });
        }
        let mut left = eval_panel(&mut f, worst.a, mid, dim, &mut buf);
        let mut right = eval_panel(&mut f, mid, worst.b, dim, &mut buf);
        for d in 0..dim {
            total[d] += left.value[d] + right.value[d] - worst.value[d];
            total_err[d] += left.error[d] + right.error[d] - worst.error[d];
        }
        let new_tol = tolerance(&total);
        let drift = new_tol
            .iter()
            .zip(&tol)
            .any(|(n, o)| *n < 0.5 * o || *n > 2.0 * o);
        tol = new_tol;
        prioritize(&mut left, &tol);
        prioritize(&mut right, &tol);
        heap.push(left);
        heap.push(right);
        if drift {
            let mut v = heap.into_vec();
            for p in &mut v {
                prioritize(p, &tol);
            }
            heap = v.into();
        }
    }

    let mut panels = heap.into_vec();
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    // Re-sum in positional order so the result does not depend on heap layout.
    let mut value = vec![0.0; dim];
    let mut error = vec![0.0; dim];
    for p in &panels {
        for d in 0..dim {
            value[d] += p.value[d];
            error[d] += p.error[d];
        }
    }
    Ok(Integral {
        value,
        error,
        panels: panels.iter().map(|p| (p.a, p.b)).collect(),
    })
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<F>(
    mut f: F,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let out = integrate_vec(|x, v| v[0] = f(x), 1, breaks, rel_tol, abs_tol, max_panels)?;
    Ok((out.value[0], out.error[0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        // The Kronrod rule integrates degree 22 exactly on a single panel.
        let (v, _) = integrate(
            |x| x.powi(10) - 3.0 * x.powi(3),
            &[0.0, 2.0],
            1e-14,
            1e-300,
            16,
        )
        .unwrap();
        let want = 2f64.powi(11) / 11.0 - 3.0 * 2f64.powi(4) / 4.0;
        assert!((v - want).abs() < 1e-11 * want.abs());
    }

    #[test]
    fn exponential_tail() {
        let (v, err) = integrate(|x| (-x).exp(), &[0.0, 1.0, 50.0], 1e-12, 1e-15, 4096).unwrap();
        assert!((v - (1.0 - (-50f64).exp())).abs() < 1e-12, "{v} {err}");
    }

    #[test]
    fn sqrt_endpoint_singularity_converges() {
        let (v, _) = integrate(f64::sqrt, &[0.0, 1.0], 1e-10, 1e-14, 4096).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn vector_components_converge_independently() {
        let out = integrate_vec(
            |x, v| {
                v[0] = x.sin();
                v[1] = 1e-6 * x.cos();
            },
            2,
            &[0.0, std::f64::consts::PI],
            1e-12,
            1e-20,
            4096,
        )
        .unwrap();
        assert!((out.value[0] - 2.0).abs() < 1e-12);
        assert!(out.value[1].abs() < 1e-17);
        assert!(out.panels.windows(2).all(|w| w[0].1 == w[1].0));
    }

    #[test]
    fn panel_budget_exhaustion_is_reported() {
        let r = integrate(|x| (1.0 / x).sin(), &[1e-9, 1.0], 1e-14, 1e-16, 16);
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(QuadratureConfig::default().validate().is_ok());
        let bad = QuadratureConfig {
            max_panels: 8,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
