//! Discrete algebraic Riccati equation, LQR gain and terminal-window weights.

use nalgebra::{DMatrix, RowSVector, SMatrix, SVector};

use crate::error::{invalid, Error, Result};

pub const DARE_TOL: f64 = 1e-12;
pub const DARE_MAX_ITER: usize = 1_000_000;

/// Stabilizing solution of the DARE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiSolution<const N: usize> {
    pub p: SMatrix<f64, N, N>,
    pub iterations: usize,
    pub residual: f64,
}

/// State feedback `u = K x`.
pub type GainMatrix<const N: usize> = RowSVector<f64, N>;

/// Collapsed terminal cost: `xᵀ P_term x + T_term ‖e‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalWeights<const N: usize> {
    pub p_term: SMatrix<f64, N, N>,
    pub t_term: f64,
}

fn riccati_map<const N: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SVector<f64, N>,
    q: &SMatrix<f64, N, N>,
    r: f64,
    p: &SMatrix<f64, N, N>,
) -> SMatrix<f64, N, N> {
    let pa = p * a;
    let bt_pa = b.transpose() * pa;
    let s = (b.transpose() * p * b)[0] + r;
    let next = a.transpose() * pa + q - bt_pa.transpose() * bt_pa / s;
    (next + next.transpose()) * 0.5
}

/// `‖P − (AᵀPA + Q − AᵀPB(BᵀPB+R)⁻¹BᵀPA)‖∞` (max-abs entry).
pub fn dare_residual<const N: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SVector<f64, N>,
    q: &SMatrix<f64, N, N>,
    r: f64,
    p: &SMatrix<f64, N, N>,
) -> f64 {
    (p - riccati_map(a, b, q, r, p)).amax()
}

/// Fixed-point iteration of the Riccati map from `P₀ = Q`.
///
/// Stops once the residual falls below `tol · max(1, ‖P‖)`; the scaling keeps
/// the test meaningful when `P` has entries in the thousands.
pub fn solve_dare<const N: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SVector<f64, N>,
    q: &SMatrix<f64, N, N>,
    r: f64,
    tol: f64,
    max_iter: usize,
) -> Result<RiccatiSolution<N>> {
    if (q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0) {
        return Err(invalid("Q", "must be symmetric"));
    }
    if !(r > 0.0) {
        return Err(invalid("R", format!("must be > 0, got {r}")));
    }
    let mut p = *q;
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let next = riccati_map(a, b, q, r, &p);
        residual = (next - p).amax();
        p = next;
        if !p.iter().all(|v| v.is_finite()) {
            break;
        }
        if residual <= tol * p.amax().max(1.0) {
            let residual = dare_residual(a, b, q, r, &p);
            return Ok(RiccatiSolution {
                p,
                iterations: it + 1,
                residual,
            });
        }
    }
    Err(Error::RiccatiNotConverged {
        iters: max_iter,
        residual,
    })
}

/// `K = −(BᵀPB + R)⁻¹ BᵀPA`.
pub fn feedback_gain<const N: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SVector<f64, N>,
    p: &SMatrix<f64, N, N>,
    r: f64,
) -> Result<GainMatrix<N>> {
    let s = (b.transpose() * p * b)[0] + r;
    if !(s.abs() > f64::EPSILON) {
        return Err(Error::Singular("BᵀPB + R"));
    }
    Ok(-(b.transpose() * p * a) / s)
}

/// `‖P − [(A+BK)ᵀP(A+BK) + Q + KᵀRK]‖∞`.
pub fn lyapunov_residual<const N: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SVector<f64, N>,
    k: &GainMatrix<N>,
    p: &SMatrix<f64, N, N>,
    q: &SMatrix<f64, N, N>,
    r: f64,
) -> f64 {
    let acl = a + b * k;
    let rhs = acl.transpose() * p * acl + q + k.transpose() * k * r;
    (p - rhs).amax()
}

/// Largest eigenvalue modulus.
pub fn spectral_radius<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    DMatrix::from_column_slice(N, N, m.as_slice())
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Sums the quadratic terminal window under `x⁺ = (A+BK)x`, `e⁺ = M e`:
/// `P_term = Σⱼ ((A+BK)ᵀ)ʲ P (A+BK)ʲ`, `T_term = T Σⱼ M²ʲ`, j = 0..n_terms−1.
pub fn terminal_weights<const N: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SVector<f64, N>,
    k: &GainMatrix<N>,
    p: &SMatrix<f64, N, N>,
    m: f64,
    t: f64,
    n_terms: usize,
) -> Result<TerminalWeights<N>> {
    if n_terms == 0 {
        return Err(invalid("n_terms", "must be at least 1"));
    }
    if !(0.0..1.0).contains(&m) {
        return Err(invalid("M", format!("must lie in [0, 1), got {m}")));
    }
    let acl = a + b * k;
    let mut p_term = SMatrix::<f64, N, N>::zeros();
    let mut power = SMatrix::<f64, N, N>::identity();
    let mut t_term = 0.0;
    let mut m2j = 1.0;
    for _ in 0..n_terms {
        p_term += power.transpose() * p * power;
        t_term += t * m2j;
        power = acl * power;
        m2j *= m * m;
    }
    p_term = (p_term + p_term.transpose()) * 0.5;
    Ok(TerminalWeights { p_term, t_term })
}

/// Everything the controller needs from the infinite-horizon LQR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrDesign {
    pub p: SMatrix<f64, 4, 4>,
    pub k: GainMatrix<4>,
    pub dare_residual: f64,
    pub lyapunov_residual: f64,
    pub closed_loop_radius: f64,
}

impl LqrDesign {
    pub fn new(
        a: &SMatrix<f64, 4, 4>,
        b: &SVector<f64, 4>,
        q: &SMatrix<f64, 4, 4>,
        r: f64,
    ) -> Result<Self> {
        let sol = solve_dare(a, b, q, r, DARE_TOL, DARE_MAX_ITER)?;
        let k = feedback_gain(a, b, &sol.p, r)?;
        Ok(Self {
            p: sol.p,
            k,
            dare_residual: sol.residual,
            lyapunov_residual: lyapunov_residual(a, b, &k, &sol.p, q, r),
            closed_loop_radius: spectral_radius(&(a + b * k)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::{LinearModel, VehicleParams};
    use approx::assert_abs_diff_eq;
    use nalgebra::{Matrix1, Matrix4, Vector1, Vector4};

    fn table() -> (Matrix4<f64>, Vector4<f64>, Matrix4<f64>, f64) {
        let m = LinearModel::new(&VehicleParams::default()).unwrap();
        let q = Matrix4::from_diagonal(&Vector4::new(20.0, 1.0, 20.0, 1.0));
        (m.a, m.b, q, 60.0)
    }

    #[test]
    fn golden_ratio_scalar() {
        let one = Matrix1::new(1.0);
        let sol = solve_dare(&one, &Vector1::new(1.0), &one, 1.0, DARE_TOL, DARE_MAX_ITER).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(sol.p[0], phi, epsilon = 1e-10);
        let k = feedback_gain(&one, &Vector1::new(1.0), &sol.p, 1.0).unwrap();
        assert_abs_diff_eq!(k[0], -phi / (phi + 1.0), epsilon = 1e-10);
        assert_abs_diff_eq!(k[0], -0.618_034, epsilon = 1e-6);
    }

    #[test]
    fn no_dynamics_gives_q() {
        let q = Matrix4::from_diagonal(&Vector4::new(3.0, 1.0, 2.0, 5.0));
        let sol = solve_dare(&Matrix4::zeros(), &Vector4::zeros(), &q, 1.0, DARE_TOL, 10).unwrap();
        assert_eq!(sol.p, q);
        let k = feedback_gain(&Matrix4::zeros(), &Vector4::zeros(), &sol.p, 1.0).unwrap();
        assert_eq!(k, GainMatrix::<4>::zeros());
        let res = lyapunov_residual(&Matrix4::zeros(), &Vector4::zeros(), &k, &q, &q, 1.0);
        assert_eq!(res, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (a, b, mut q, _) = table();
        assert!(solve_dare(&a, &b, &q, 0.0, DARE_TOL, 100).is_err());
        q[(0, 1)] = 1.0;
        assert!(solve_dare(&a, &b, &q, 60.0, DARE_TOL, 100).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        let (a, b, q, r) = table();
        match solve_dare(&a, &b, &q, r, DARE_TOL, 3) {
            Err(Error::RiccatiNotConverged { iters, residual }) => {
                assert_eq!(iters, 3);
                assert!(residual > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn table_design_is_consistent() {
        let (a, b, q, r) = table();
        let d = LqrDesign::new(&a, &b, &q, r).unwrap();
        assert!(d.dare_residual < 1e-8, "{}", d.dare_residual);
        assert!(d.lyapunov_residual < 1e-8, "{}", d.lyapunov_residual);
        assert!(d.closed_loop_radius < 1.0);
        assert!((d.p - d.p.transpose()).amax() < 1e-10);
        assert!(d.p.symmetric_eigenvalues().iter().all(|&l| l > 0.0));
    }

    #[test]
    fn lyapunov_is_sensitive_to_perturbation() {
        let (a, b, q, r) = table();
        let d = LqrDesign::new(&a, &b, &q, r).unwrap();
        let mut p = d.p;
        p[(1, 1)] += 0.1;
        assert!(lyapunov_residual(&a, &b, &d.k, &p, &q, r) >= 0.05);
    }

    #[test]
    fn gain_matches_closed_loop_cost() {
        let (a, b, q, r) = table();
        let d = LqrDesign::new(&a, &b, &q, r).unwrap();
        let acl = a + b * d.k;
        let mut seed = 12345u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for _ in 0..100 {
            let x0 = Vector4::new(next(), next(), next() * 0.5, next() * 0.5);
            let expected = (x0.transpose() * d.p * x0)[0];
            let mut x = x0;
            let mut cost = 0.0;
            while x.norm() >= 1e-12 {
                let u = (d.k * x)[0];
                cost += (x.transpose() * q * x)[0] + r * u * u;
                x = acl * x;
            }
            assert!((cost - expected).abs() <= 1e-6 * expected, "{cost} vs {expected}");
        }
    }

    #[test]
    fn terminal_weight_edge_cases() {
        let (a, b, q, r) = table();
        let d = LqrDesign::new(&a, &b, &q, r).unwrap();
        let tw = terminal_weights(&a, &b, &d.k, &d.p, 0.9, 0.5, 1).unwrap();
        assert_eq!(tw.p_term, d.p);
        assert_eq!(tw.t_term, 0.5);
        let tw = terminal_weights(&a, &b, &d.k, &d.p, 0.0, 0.5, 7).unwrap();
        assert_eq!(tw.t_term, 0.5);
        assert!(terminal_weights(&a, &b, &d.k, &d.p, 0.9, 0.5, 0).is_err());
        assert!(terminal_weights(&a, &b, &d.k, &d.p, 1.0, 0.5, 3).is_err());
    }

    #[test]
    fn terminal_slack_weight_is_geometric() {
        let (a, b, q, r) = table();
        let d = LqrDesign::new(&a, &b, &q, r).unwrap();
        let t = 0.01 / (1.0 - 0.81);
        assert_abs_diff_eq!(t, 0.052_631_578_947_368_42, epsilon = 1e-15);
        let tw = terminal_weights(&a, &b, &d.k, &d.p, 0.9, t, 10).unwrap();
        assert_abs_diff_eq!(tw.t_term, t * (1.0 - 0.81f64.powi(10)) / 0.19, epsilon = 1e-12);
    }

    #[test]
    fn terminal_weights_match_rollout() {
        let (a, b, q, r) = table();
        let d = LqrDesign::new(&a, &b, &q, r).unwrap();
        let acl = a + b * d.k;
        let (m, t, n) = (0.9, 0.01 / 0.19, 43);
        let tw = terminal_weights(&a, &b, &d.k, &d.p, m, t, n).unwrap();
        for s in 0..20 {
            let f = s as f64;
            let mut x = Vector4::new(f.sin(), (2.0 * f).cos(), 0.1 * f.cos(), 0.3 * (3.0 * f).sin());
            let mut e = nalgebra::Vector2::new(f, 49.0 - 2.0 * f);
            let closed = (x.transpose() * tw.p_term * x)[0] + tw.t_term * e.norm_squared();
            let mut explicit = 0.0;
            for _ in 0..n {
                explicit += (x.transpose() * d.p * x)[0] + t * e.norm_squared();
                x = acl * x;
                e *= m;
            }
            assert!((closed - explicit).abs() <= 1e-10 * explicit.abs().max(1e-300));
        }
    }
}
