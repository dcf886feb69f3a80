//! Small dense convex quadratic programs by the primal active-set method.
//!
//! Solves `min 1/2 x'Qx + c'x` subject to `E x = e` and `A x <= b` from a
//! feasible starting point. `Q` must be positive definite; problems here have
//! at most a few dozen variables.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) struct QuadraticProgram {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub ineq: Vec<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone)]
pub(crate) struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per inequality, zero when not in the final working set.
    pub ineq_multipliers: Vec<f64>,
}

fn dot(a: &[f64], x: &DVector<f64>) -> f64 {
    a.iter().zip(x.iter()).map(|(a, x)| a * x).sum()
}

fn rank(rows: &[&[f64]], n: usize) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let sv = m.singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-10 * top.max(1e-300)).count()
}

impl QuadraticProgram {
    pub(crate) fn solve(&self, x0: DVector<f64>) -> Result<QpSolution> {
        let n = x0.len();
        let me = self.eq.len();
        let mut x = x0;
        let slack_tol = |b: f64| 1e-12 * (1.0 + b.abs());

        // Initial working set: active inequalities that are independent of
        // the equalities and of each other.
        let mut working: Vec<usize> = Vec::new();
        {
            let mut rows: Vec<&[f64]> = self.eq.iter().map(|(a, _)| a.as_slice()).collect();
            let mut current = rank(&rows, n);
            for (i, (a, b)) in self.ineq.iter().enumerate() {
                if (dot(a, &x) - b).abs() <= slack_tol(*b) {
                    rows.push(a);
                    let r = rank(&rows, n);
                    if r > current {
                        current = r;
                        working.push(i);
                    } else {
                        rows.pop();
                    }
                }
            }
        }

        let max_iter = 200 + 10 * (n + self.ineq.len());
        for _ in 0..max_iter {
            let mw = me + working.len();
            let dim = n + mw;
            let mut kkt = DMatrix::zeros(dim, dim);
            kkt.view_mut((0, 0), (n, n)).copy_from(&self.q);
            let constraint_rows = self
                .eq
                .iter()
                .map(|(a, _)| a)
                .chain(working.iter().map(|&i| &self.ineq[i].0));
            for (row, a) in constraint_rows.enumerate() {
                for j in 0..n {
                    kkt[(n + row, j)] = a[j];
                    kkt[(j, n + row)] = a[j];
                }
            }
            let grad = &self.q * &x + &self.c;
            let mut rhs = DVector::zeros(dim);
            rhs.rows_mut(0, n).copy_from(&(-grad));
            let sol = kkt
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Infeasible("singular KKT system in QP step".into()))?;
            let step = sol.rows(0, n).into_owned();
            let scale = 1.0 + x.amax();
            if step.amax() <= 1e-13 * scale {
                // Stationary on the working set: inspect multiplier signs.
                let mut worst: Option<(usize, f64)> = None;
                for w in 0..working.len() {
                    let mu = sol[n + me + w];
                    if mu < -1e-12 && worst.is_none_or(|(_, m)| mu < m) {
                        worst = Some((w, mu));
                    }
                }
                match worst {
                    Some((w, _)) => {
                        working.remove(w);
                    }
                    None => {
                        let mut ineq_multipliers = vec![0.0; self.ineq.len()];
                        for (w, &i) in working.iter().enumerate() {
                            ineq_multipliers[i] = sol[n + me + w].max(0.0);
                        }
                        return Ok(QpSolution {
                            x,
                            ineq_multipliers,
                        });
                    }
                }
                continue;
            }
            let mut alpha = 1.0;
            let mut blocking = None;
            for (i, (a, b)) in self.ineq.iter().enumerate() {
                if working.contains(&i) {
                    continue;
                }
                let ap = dot(a, &step);
                if ap > 1e-14 * scale {
                    let t = ((b - dot(a, &x)) / ap).max(0.0);
                    if t < alpha {
                        alpha = t;
                        blocking = Some(i);
                    }
                }
            }
            x += alpha * &step;
            if let Some(i) = blocking {
                working.push(i);
            }
        }
        Err(Error::Infeasible("active-set QP did not terminate".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_constrained_least_squares() {
        // min (x-2)^2 + (y+1)^2 subject to 0 <= x, y <= 1.
        let qp = QuadraticProgram {
            q: DMatrix::identity(2, 2) * 2.0,
            c: DVector::from_vec(vec![-4.0, 2.0]),
            eq: vec![],
            ineq: vec![
                (vec![1.0, 0.0], 1.0),
                (vec![0.0, 1.0], 1.0),
                (vec![-1.0, 0.0], 0.0),
                (vec![0.0, -1.0], 0.0),
            ],
        };
        let s = qp.solve(DVector::from_vec(vec![0.5, 0.5])).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && s.x[1].abs() < 1e-12);
        assert!((s.ineq_multipliers[0] - 2.0).abs() < 1e-10);
        assert!((s.ineq_multipliers[3] - 2.0).abs() < 1e-10);
        assert_eq!(s.ineq_multipliers[1], 0.0);
    }

    #[test]
    fn simplex_with_degenerate_active_constraints() {
        // Two dependent constraints tight at the start: x1 <= 0.1 and 2 x1 <= 0.2.
        let qp = QuadraticProgram {
            q: DMatrix::identity(2, 2),
            c: DVector::from_vec(vec![0.0, -5.0]),
            eq: vec![(vec![1.0, 1.0], 1.0)],
            ineq: vec![
                (vec![0.0, 1.0], 0.1),
                (vec![0.0, 2.0], 0.2),
                (vec![-1.0, 0.0], 0.0),
                (vec![0.0, -1.0], 0.0),
            ],
        };
        let s = qp.solve(DVector::from_vec(vec![0.9, 0.1])).unwrap();
        assert!((s.x[1] - 0.1).abs() < 1e-12);
        let combined = s.ineq_multipliers[0] + 2.0 * s.ineq_multipliers[1];
        assert!(combined > 0.0);
    }

    #[test]
    fn interior_optimum_on_equality() {
        let qp = QuadraticProgram {
            q: DMatrix::identity(3, 3),
            c: DVector::from_vec(vec![-1.0, 0.0, 0.0]),
            eq: vec![(vec![1.0, 1.0, 1.0], 1.0)],
            ineq: vec![],
        };
        let s = qp.solve(DVector::from_vec(vec![1.0 / 3.0; 3])).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && s.x[1].abs() < 1e-12);
    }
}
