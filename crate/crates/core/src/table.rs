//! Kernel values tabulated on a fixed quadrature rule for one set of mass
//! locations.
//!
//! The optimizer evaluates the mutual information and its derivatives for
//! many probability vectors over the same locations. Freezing the rule makes
//! those quantities exact, smooth functions of `p`, which the Newton-type
//! steps rely on.

use nalgebra::DMatrix;

use crate::density::{initial_breaks, log_sum_exp, truncation_point};
use crate::error::Result;
use crate::quadrature::{integrate_vec, kronrod_nodes, QuadratureConfig, ABS_TOL_FLOOR};
use crate::special::{ln_kernel_with_derivs, ChannelModel, ChannelSpec};

pub(crate) struct KernelTable {
    locations: Vec<f64>,
    model: ChannelModel,
    weights: Vec<f64>,
    /// `[i][node]` arrays: `ln g`, `g`, score, score derivative.
    ln_g: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    score: Vec<Vec<f64>>,
    dscore: Vec<Vec<f64>>,
}

/// Derived quantities at one probability vector.
pub(crate) struct TableEval {
    ln_f: Vec<f64>,
    /// Information density `d(r_i)` per location.
    pub density: Vec<f64>,
    /// `d'(r_i)` with the mixture held fixed.
    pub slope: Vec<f64>,
    pub mutual_information: f64,
}

impl KernelTable {
    /// Tabulate on a rule adapted to the mixture with weights `probs`
    /// (uniform when `None`).
    pub(crate) fn build(
        locations: &[f64],
        probs: Option<&[f64]>,
        channel: &ChannelSpec,
        q: &QuadratureConfig,
    ) -> Result<Self> {
        let k = channel.rician_k;
        let n = locations.len();
        let r_max = locations.iter().cloned().fold(0.0, f64::max);
        let upper = truncation_point(r_max, k, q.r_tail_mass_tol);
        let breaks = initial_breaks(locations, k, upper);
        let ln_p: Vec<f64> = match probs {
            Some(p) => p
                .iter()
                .map(|&x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY })
                .collect(),
            None => vec![-(n as f64).ln(); n],
        };
        let mut lg = vec![0.0; n];
        let rule = integrate_vec(
            |x, v| {
                let mut st = vec![(0.0, 0.0); n];
                for (i, &r) in locations.iter().enumerate() {
                    let (l, s, t) = ln_kernel_with_derivs(x, r, k);
                    lg[i] = l;
                    st[i] = (s, t);
                }
                let lf = log_sum_exp(lg.iter().zip(&ln_p).map(|(l, p)| l + p));
                for i in 0..n {
                    let g = lg[i].exp();
                    let (s, t) = st[i];
                    v[4 * i] = g;
                    v[4 * i + 1] = g * lf;
                    v[4 * i + 2] = g * s * lf;
                    v[4 * i + 3] = g * (s * s + t);
                }
            },
            4 * n,
            &breaks,
            q.panel_rel_tol.min(1e-11),
            ABS_TOL_FLOOR,
            q.max_panels,
        )?;

        let mut nodes = Vec::with_capacity(rule.panels.len() * 15);
        let mut weights = Vec::with_capacity(rule.panels.len() * 15);
        for &(a, b) in &rule.panels {
            for (x, w) in kronrod_nodes(a, b) {
                nodes.push(x);
                weights.push(w);
            }
        }
        let mut ln_g = vec![Vec::with_capacity(nodes.len()); n];
        let mut g = vec![Vec::with_capacity(nodes.len()); n];
        let mut score = vec![Vec::with_capacity(nodes.len()); n];
        let mut dscore = vec![Vec::with_capacity(nodes.len()); n];
        for &x in &nodes {
            for (i, &r) in locations.iter().enumerate() {
                let (l, s, t) = ln_kernel_with_derivs(x, r, k);
                ln_g[i].push(l);
                g[i].push(l.exp());
                score[i].push(s);
                dscore[i].push(t);
            }
        }
        Ok(Self {
            locations: locations.to_vec(),
            model: channel.model,
            weights,
            ln_g,
            g,
            score,
            dscore,
        })
    }

    pub(crate) fn len(&self) -> usize {
        self.locations.len()
    }

    fn ln_mixture(&self, p: &[f64]) -> Vec<f64> {
        let lp: Vec<f64> = p
            .iter()
            .map(|&x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY })
            .collect();
        (0..self.weights.len())
            .map(|node| log_sum_exp(lp.iter().zip(&self.ln_g).map(|(l, row)| l + row[node])))
            .collect()
    }

    pub(crate) fn evaluate(&self, p: &[f64]) -> TableEval {
        let ln_f = self.ln_mixture(p);
        let pn = self.model == ChannelModel::PhaseNoiseRician;
        let n = self.len();
        let mut density = vec![0.0; n];
        let mut slope = vec![0.0; n];
        for i in 0..n {
            let (mut d, mut s) = (0.0, 0.0);
            for (node, &w) in self.weights.iter().enumerate() {
                let g = self.g[i][node];
                if g == 0.0 {
                    continue;
                }
                let weight = if pn {
                    self.ln_g[i][node] - ln_f[node]
                } else {
                    -ln_f[node]
                };
                d += w * g * weight;
                s += w * g * self.score[i][node] * weight;
            }
            if !pn {
                let r = self.locations[i];
                d -= (r * r).ln_1p() + 1.0;
                s -= 2.0 * r / (1.0 + r * r);
            }
            density[i] = d;
            slope[i] = s;
        }
        let mutual_information = p.iter().zip(&density).map(|(p, d)| p * d).sum();
        TableEval {
            ln_f,
            density,
            slope,
            mutual_information,
        }
    }

    /// Gradient of the mutual information with respect to `p`.
    pub(crate) fn grad_p(&self, eval: &TableEval) -> Vec<f64> {
        let shift = if self.model == ChannelModel::PhaseNoiseRician {
            1.0
        } else {
            0.0
        };
        eval.density.iter().map(|d| d - shift).collect()
    }

    /// Hessian with respect to `p` only: `-int g_i g_j / f`.
    pub(crate) fn hessian_p(&self, eval: &TableEval) -> DMatrix<f64> {
        let n = self.len();
        let mut h = DMatrix::zeros(n, n);
        for (node, &w) in self.weights.iter().enumerate() {
            let lf = eval.ln_f[node];
            for i in 0..n {
                let li = self.ln_g[i][node];
                for j in i..n {
                    let v = w * (li + self.ln_g[j][node] - lf).exp();
                    h[(i, j)] -= v;
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                h[(i, j)] = h[(j, i)];
            }
        }
        h
    }

    /// Full Hessian of the mutual information in `(p_1..p_n, r_1..r_n)`.
    pub(crate) fn hessian_full(&self, p: &[f64], eval: &TableEval) -> DMatrix<f64> {
        let n = self.len();
        let pn = self.model == ChannelModel::PhaseNoiseRician;
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        let mut second = vec![0.0; n];
        for (node, &w) in self.weights.iter().enumerate() {
            let lf = eval.ln_f[node];
            for i in 0..n {
                let g = self.g[i][node];
                if g == 0.0 {
                    continue;
                }
                let s = self.score[i][node];
                let t = self.dscore[i][node];
                let weight = if pn { self.ln_g[i][node] - lf } else { -lf };
                second[i] += w * g * ((s * s + t) * weight + if pn { s * s } else { 0.0 });
                let li = self.ln_g[i][node];
                for j in 0..n {
                    let cross = w * (li + self.ln_g[j][node] - lf).exp();
                    if cross == 0.0 {
                        continue;
                    }
                    let sj = self.score[j][node];
                    if j >= i {
                        h[(i, j)] -= cross;
                    }
                    // d^2 I / dp_i dr_j
                    h[(i, n + j)] -= p[j] * cross * sj;
                    if j >= i {
                        h[(n + i, n + j)] -= p[i] * p[j] * cross * s * sj;
                    }
                }
            }
        }
        for i in 0..n {
            let r = self.locations[i];
            if !pn {
                let s = 1.0 + r * r;
                second[i] -= 2.0 * (1.0 - r * r) / (s * s);
            }
            h[(i, n + i)] += eval.slope[i];
            h[(n + i, n + i)] += p[i] * second[i];
        }
        for i in 0..2 * n {
            for j in 0..i {
                h[(i, j)] = h[(j, i)];
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{information_density_with_slope, mutual_information};
    use crate::distribution::AmplitudeDistribution;

    fn channels() -> [ChannelSpec; 3] {
        [
            ChannelSpec::classical(1.0).unwrap(),
            ChannelSpec::phase_noise(2.0).unwrap(),
            ChannelSpec::classical(0.0).unwrap(),
        ]
    }

    #[test]
    fn agrees_with_adaptive_quadrature_at_extreme_weights() {
        let q = QuadratureConfig::default();
        let locs = [0.0, 0.6, 2.5];
        for channel in channels() {
            let table = KernelTable::build(&locs, None, &channel, &q).unwrap();
            for p in [[0.3, 0.4, 0.3], [0.9998, 1e-4, 1e-4], [1e-6, 0.5, 0.499999]] {
                let dist = AmplitudeDistribution::new(locs.iter().cloned().zip(p)).unwrap();
                let eval = table.evaluate(&p);
                let mi = mutual_information(&dist, &channel, &q).unwrap();
                assert!(
                    (eval.mutual_information - mi).abs() < 1e-10,
                    "{channel:?} {p:?}"
                );
                for (i, &r) in locs.iter().enumerate() {
                    let (d, s) = information_density_with_slope(r, &dist, &channel, &q).unwrap();
                    assert!((eval.density[i] - d).abs() < 1e-9);
                    assert!((eval.slope[i] - s).abs() < 1e-8);
                }
            }
        }
    }

    /// Central differences of the analytic gradient, with the rule rebuilt at
    /// each perturbed location set.
    #[test]
    fn full_hessian_matches_finite_differences() {
        let q = QuadratureConfig::default();
        let locs = [0.2, 0.9, 1.7];
        let p = [0.5, 0.3, 0.2];
        let h = 1e-5;
        for channel in channels() {
            let grad = |p: &[f64], r: &[f64]| -> Vec<f64> {
                let t = KernelTable::build(r, Some(p), &channel, &q).unwrap();
                let e = t.evaluate(p);
                let mut g = t.grad_p(&e);
                g.extend(p.iter().zip(&e.slope).map(|(p, s)| p * s));
                g
            };
            let table = KernelTable::build(&locs, None, &channel, &q).unwrap();
            let hess = table.hessian_full(&p, &table.evaluate(&p));
            for col in 0..6 {
                let (mut pu, mut pd) = (p.to_vec(), p.to_vec());
                let (mut ru, mut rd) = (locs.to_vec(), locs.to_vec());
                if col < 3 {
                    pu[col] += h;
                    pd[col] -= h;
                } else {
                    ru[col - 3] += h;
                    rd[col - 3] -= h;
                }
                let gu = grad(&pu, &ru);
                let gd = grad(&pd, &rd);
                for row in 0..6 {
                    let fd = (gu[row] - gd[row]) / (2.0 * h);
                    assert!(
                        (hess[(row, col)] - fd).abs() < 1e-5 * (1.0 + fd.abs()),
                        "{channel:?} ({row},{col}): {} vs {fd}",
                        hess[(row, col)]
                    );
                }
            }
            let hp = table.hessian_p(&table.evaluate(&p));
            for i in 0..3 {
                for j in 0..3 {
                    assert!((hp[(i, j)] - hess[(i, j)]).abs() < 1e-14);
                }
            }
        }
    }
}
