//! Dense two-phase primal simplex for inequality-form linear programs.
//!
//! Solves `max cᵀx` subject to `A x ≤ b` with `x` free, working directly on
//! the rows rather than on a standard-form tableau. The iterate keeps a set
//! `W` of at most `n` linearly independent active rows. While `|W| < n` the
//! step follows `c` projected onto the null space of `A_W`; once `c` lies in
//! the row space the multipliers `λ` with `A_Wᵀλ = c` decide optimality, and a
//! row with `λ_j < 0` is released. Blocking rows join `W` through the usual
//! ratio test. Leaving and entering rows both follow Bland's lowest-index rule.
//!
//! Every step refactors `A_W` from the problem data (a QR of at most `n`
//! columns) and re-projects the point onto its active rows, so nothing drifts
//! however many pivots a degenerate problem needs. A pivot costs `O(m·n)`.
//! Phase one maximizes `−s` subject to `A x − s ≤ b`, `s ≥ 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const FEAS_TOL: f64 = 1e-9;
pub const OPT_TOL: f64 = 1e-9;
/// Smallest accepted `aᵢ·d` relative to `‖aᵢ‖‖d‖` in the ratio test.
const PIVOT_TOL: f64 = 1e-9;
/// Ratios this close (relative) count as tied.
const RATIO_TIE: f64 = 1e-12;
/// Relative violation tolerated in the returned point.
const ACCEPT_TOL: f64 = 1e-7;
const MAX_PIVOTS: usize = 100_000;

/// `max cᵀx  s.t.  A_ub x ≤ b_ub`, row-major `a_ub`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, point: Vec<f64> },
    Infeasible,
    /// `ray` satisfies `A ray ≤ 0` and `cᵀ ray > 0`.
    Unbounded { ray: Vec<f64> },
}

impl LpOutcome {
    pub fn status(&self) -> LpStatus {
        match self {
            LpOutcome::Optimal { .. } => LpStatus::Optimal,
            LpOutcome::Infeasible => LpStatus::Infeasible,
            LpOutcome::Unbounded { .. } => LpStatus::Unbounded,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }
}

impl LpProblem {
    pub fn new(c: Vec<f64>, a_ub: Vec<Vec<f64>>, b_ub: Vec<f64>) -> Result<Self> {
        let p = Self { c, a_ub, b_ub };
        p.validate()?;
        Ok(p)
    }

    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn n_rows(&self) -> usize {
        self.b_ub.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.c.len();
        let m = self.b_ub.len();
        if n == 0 || m == 0 {
            return Err(Error::Dimension(format!("empty LP ({m} rows, {n} variables)")));
        }
        if self.a_ub.len() != m {
            return Err(Error::Dimension(format!(
                "A_ub has {} rows but b_ub has {m}",
                self.a_ub.len()
            )));
        }
        if let Some((i, row)) = self.a_ub.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::Dimension(format!(
                "A_ub row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
        let finite = self.c.iter().chain(&self.b_ub).all(|v| v.is_finite())
            && self.a_ub.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Dimension("LP data must be finite".into()));
        }
        Ok(())
    }
}

pub fn solve_lp(p: &LpProblem) -> Result<LpOutcome> {
    p.validate()?;
    let n = p.n_vars();
    let m = p.n_rows();
    let a = DMatrix::from_fn(m, n, |i, j| p.a_ub[i][j]);
    let b = DVector::from_column_slice(&p.b_ub);
    let c = DVector::from_column_slice(&p.c);
    let scale = 1.0 + b.amax();

    let origin_violation = (0..m).map(|i| -b[i]).fold(0.0, f64::max);
    let start = if origin_violation <= FEAS_TOL * scale {
        DVector::zeros(n)
    } else {
        // Phase one over (x, s), starting from (0, max violation).
        let mut aux_a = DMatrix::zeros(m + 1, n + 1);
        aux_a.view_mut((0, 0), (m, n)).copy_from(&a);
        for i in 0..m {
            aux_a[(i, n)] = -1.0;
        }
        aux_a[(m, n)] = -1.0;
        let mut aux_b = DVector::zeros(m + 1);
        aux_b.rows_mut(0, m).copy_from(&b);
        let mut aux_c = DVector::zeros(n + 1);
        aux_c[n] = -1.0;
        let mut z = DVector::zeros(n + 1);
        z[n] = origin_violation;
        match ActiveSet::new(&aux_a, &aux_b, &aux_c, z).run()? {
            Stop::Optimal(z) => {
                if z[n] > FEAS_TOL * scale {
                    return Ok(LpOutcome::Infeasible);
                }
                z.rows(0, n).into_owned()
            }
            Stop::Unbounded(_) => unreachable!("phase one is bounded by s >= 0"),
        }
    };

    match ActiveSet::new(&a, &b, &c, start).run()? {
        Stop::Optimal(x) => {
            let worst = (0..m)
                .map(|i| (a.row(i).dot(&x.transpose()) - b[i]) / (1.0 + b[i].abs()))
                .fold(0.0, f64::max);
            if worst > ACCEPT_TOL {
                return Err(Error::LpStatus("numerically unreliable (final point infeasible)"));
            }
            Ok(LpOutcome::Optimal {
                value: c.dot(&x),
                point: x.iter().copied().collect(),
            })
        }
        Stop::Unbounded(d) => Ok(LpOutcome::Unbounded {
            ray: d.iter().copied().collect(),
        }),
    }
}

enum Stop {
    Optimal(DVector<f64>),
    Unbounded(DVector<f64>),
}

struct ActiveSet<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    c: &'a DVector<f64>,
    row_norm: Vec<f64>,
    x: DVector<f64>,
    /// Active rows in insertion order.
    w: Vec<usize>,
    in_w: Vec<bool>,
}

impl<'a> ActiveSet<'a> {
    fn new(a: &'a DMatrix<f64>, b: &'a DVector<f64>, c: &'a DVector<f64>, x: DVector<f64>) -> Self {
        let m = a.nrows();
        Self {
            a,
            b,
            c,
            row_norm: (0..m).map(|i| a.row(i).norm()).collect(),
            x,
            w: Vec::new(),
            in_w: vec![false; m],
        }
    }

    /// Thin QR of `A_Wᵀ`; `None` when `W` is empty.
    fn factor(&self) -> Result<Option<(DMatrix<f64>, DMatrix<f64>)>> {
        if self.w.is_empty() {
            return Ok(None);
        }
        let n = self.a.ncols();
        let mt = DMatrix::from_fn(n, self.w.len(), |r, k| self.a[(self.w[k], r)]);
        let qr = mt.qr();
        let (q, r) = (qr.q(), qr.r());
        let rmax = r.diagonal().amax();
        if r.diagonal().iter().any(|v| v.abs() <= 1e-12 * rmax.max(1.0)) {
            return Err(Error::LpStatus("numerically unreliable (dependent active rows)"));
        }
        Ok(Some((q, r)))
    }

    fn run(mut self) -> Result<Stop> {
        let c_norm = self.c.norm();
        if c_norm == 0.0 {
            return Ok(Stop::Optimal(self.x));
        }
        for _ in 0..MAX_PIVOTS {
            let factor = self.factor()?;

            // Re-project onto the active rows: x += Q R⁻ᵀ (b_W − A_W x).
            if let Some((q, r)) = &factor {
                let resid = DVector::from_iterator(
                    self.w.len(),
                    self.w
                        .iter()
                        .map(|&i| self.b[i] - self.a.row(i).dot(&self.x.transpose())),
                );
                let y = r
                    .transpose()
                    .solve_lower_triangular(&resid)
                    .ok_or(Error::LpStatus("numerically unreliable (singular factor)"))?;
                self.x += q * y;
            }

            // Direction: projected objective, or release a row with λ < 0.
            // `target` is the required `A_W d` for the rows in `W` at this point.
            let projected = match &factor {
                Some((q, _)) => self.c - q * (q.transpose() * self.c),
                None => self.c.clone(),
            };
            let (mut d, target, released) = if projected.norm() > 1e-10 * c_norm {
                (projected, DVector::zeros(self.w.len()), None)
            } else {
                let (q, r) = factor
                    .as_ref()
                    .expect("c ≠ 0 has a nonzero projection when W is empty");
                let lambda = r
                    .solve_upper_triangular(&(q.transpose() * self.c))
                    .ok_or(Error::LpStatus("numerically unreliable (singular factor)"))?;
                let leaving = (0..self.w.len())
                    .filter(|&k| lambda[k] < -OPT_TOL * c_norm)
                    .min_by_key(|&k| self.w[k]);
                let Some(k) = leaving else {
                    return Ok(Stop::Optimal(self.x));
                };
                let mut e = DVector::zeros(self.w.len());
                e[k] = -1.0;
                let y = r
                    .transpose()
                    .solve_lower_triangular(&e)
                    .ok_or(Error::LpStatus("numerically unreliable (singular factor)"))?;
                (q * y, e, Some(k))
            };
            // Refinement against the original rows keeps rows that stay
            // active (and rows parallel to them) from looking like blockers.
            if let Some((q, r)) = &factor {
                for _ in 0..2 {
                    let resid = DVector::from_iterator(
                        self.w.len(),
                        self.w
                            .iter()
                            .zip(target.iter())
                            .map(|(&i, t)| t - self.a.row(i).dot(&d.transpose())),
                    );
                    if let Some(y) = r.transpose().solve_lower_triangular(&resid) {
                        d += q * y;
                    }
                }
            }
            if let Some(k) = released {
                let row = self.w.remove(k);
                self.in_w[row] = false;
            }
            if self.c.dot(&d) <= 0.0 {
                // Roundoff left no ascent direction; treat as optimal.
                return Ok(Stop::Optimal(self.x));
            }

            // Ratio test with Bland's lowest index among ties.
            let d_norm = d.norm();
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.a.nrows() {
                if self.in_w[i] {
                    continue;
                }
                let ad = self.a.row(i).dot(&d.transpose());
                if ad <= PIVOT_TOL * self.row_norm[i] * d_norm {
                    continue;
                }
                let slack = (self.b[i] - self.a.row(i).dot(&self.x.transpose())).max(0.0);
                let t = slack / ad;
                best = match best {
                    Some((_, bt)) if t >= bt - RATIO_TIE * bt.abs().max(1e-300) => best,
                    _ => Some((i, t)),
                };
            }
            let Some((row, t)) = best else {
                return Ok(Stop::Unbounded(d / d_norm));
            };
            self.x += &d * t;
            self.w.push(row);
            self.in_w[row] = true;
        }
        Err(Error::LpStatus("not terminating within the pivot cap"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lp(c: &[f64], a: &[&[f64]], b: &[f64]) -> LpProblem {
        LpProblem::new(c.to_vec(), a.iter().map(|r| r.to_vec()).collect(), b.to_vec()).unwrap()
    }

    #[test]
    fn box_maximum() {
        let out = solve_lp(&lp(&[1.0], &[&[1.0], &[-1.0]], &[1.0, 0.0])).unwrap();
        match out {
            LpOutcome::Optimal { value, point } => {
                assert!((value - 1.0).abs() < 1e-12);
                assert!((point[0] - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let out = solve_lp(&lp(&[1.0], &[&[1.0], &[-1.0]], &[-1.0, 0.0])).unwrap();
        assert_eq!(out.status(), LpStatus::Infeasible);
    }

    #[test]
    fn open_ray_is_unbounded() {
        let out = solve_lp(&lp(&[1.0], &[&[-1.0]], &[0.0])).unwrap();
        match out {
            LpOutcome::Unbounded { ray } => assert!(ray[0] > 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn free_variables_can_go_negative() {
        // max −x − y s.t. x ≥ −2, y ≥ −3
        let out = solve_lp(&lp(&[-1.0, -1.0], &[&[-1.0, 0.0], &[0.0, -1.0]], &[2.0, 3.0])).unwrap();
        let LpOutcome::Optimal { value, point } = out else {
            panic!()
        };
        assert!((value - 5.0).abs() < 1e-12);
        assert!((point[0] + 2.0).abs() < 1e-12 && (point[1] + 3.0).abs() < 1e-12);
    }

    #[test]
    fn needs_phase_one() {
        // x ≥ 1, y ≥ 1, x + y ≤ 3, max x + 2y → (1, 2), value 5
        let out = solve_lp(&lp(
            &[1.0, 2.0],
            &[&[-1.0, 0.0], &[0.0, -1.0], &[1.0, 1.0]],
            &[-1.0, -1.0, 3.0],
        ))
        .unwrap();
        assert!((out.value().unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Classic cycling example (Beale) rewritten in ≤ form with nonnegativity rows.
        let a: Vec<Vec<f64>> = vec![
            vec![0.25, -60.0, -0.04, 9.0],
            vec![0.5, -90.0, -0.02, 3.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![-1.0, 0.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0, 0.0],
            vec![0.0, 0.0, -1.0, 0.0],
            vec![0.0, 0.0, 0.0, -1.0],
        ];
        let p = LpProblem::new(
            vec![0.75, -150.0, 0.02, -6.0],
            a,
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let v = solve_lp(&p).unwrap().value().unwrap();
        assert!((v - 0.05).abs() < 1e-9, "{v}");
    }

    #[test]
    fn rejects_dimension_mismatch() {
        assert!(LpProblem::new(vec![1.0], vec![vec![1.0, 2.0]], vec![1.0]).is_err());
        assert!(LpProblem::new(vec![1.0], vec![vec![1.0]], vec![1.0, 2.0]).is_err());
        assert!(LpProblem::new(vec![], vec![], vec![]).is_err());
        assert!(LpProblem::new(vec![f64::NAN], vec![vec![1.0]], vec![1.0]).is_err());
    }

    fn bounded_lp() -> impl Strategy<Value = LpProblem> {
        (1usize..=4).prop_flat_map(|n| {
            (
                prop::collection::vec(-5i32..=5, n),
                prop::collection::vec(prop::collection::vec(-5i32..=5, n), 0..10),
                prop::collection::vec(-3i32..=10, 0..10),
            )
                .prop_map(move |(c, extra, rhs)| {
                    let mut a: Vec<Vec<f64>> = Vec::new();
                    let mut b = Vec::new();
                    for k in 0..n {
                        let mut up = vec![0.0; n];
                        up[k] = 1.0;
                        let mut lo = vec![0.0; n];
                        lo[k] = -1.0;
                        a.push(up);
                        a.push(lo);
                        b.extend([10.0, 10.0]);
                    }
                    for (row, r) in extra.iter().zip(rhs.iter()) {
                        a.push(row.iter().map(|&v| v as f64).collect());
                        b.push(*r as f64);
                    }
                    LpProblem::new(c.iter().map(|&v| v as f64).collect(), a, b).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn optimal_points_are_feasible_and_consistent(p in bounded_lp()) {
            match solve_lp(&p).unwrap() {
                LpOutcome::Optimal { value, point } => {
                    for (row, b) in p.a_ub.iter().zip(&p.b_ub) {
                        let lhs: f64 = row.iter().zip(&point).map(|(a, x)| a * x).sum();
                        prop_assert!(lhs <= b + 1e-8);
                    }
                    let cx: f64 = p.c.iter().zip(&point).map(|(c, x)| c * x).sum();
                    prop_assert!((cx - value).abs() <= 1e-8);
                }
                LpOutcome::Infeasible => {}
                LpOutcome::Unbounded { .. } => prop_assert!(false, "box-bounded LP reported unbounded"),
            }
        }

        #[test]
        fn objective_scaling(p in bounded_lp(), lambda in 0.1..10.0f64) {
            let base = solve_lp(&p).unwrap();
            let scaled = LpProblem { c: p.c.iter().map(|v| v * lambda).collect(), ..p.clone() };
            let out = solve_lp(&scaled).unwrap();
            prop_assert_eq!(base.status(), out.status());
            if let (Some(v0), Some(v1)) = (base.value(), out.value()) {
                prop_assert!((v1 - lambda * v0).abs() <= 1e-7 * (1.0 + v1.abs()));
            }
        }
    }
}
