//! Reference computations that share no code path with the controller.
//!
//! Each routine solves the same problem as a library component by a
//! different, deliberately naive method: vertex enumeration instead of
//! simplex pivoting, a dense least-squares solve instead of the backward
//! recursion, finite differences instead of analytic derivatives.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector, Matrix4, RowVector4, SMatrix, Vector4};
use rand::Rng;

use softcilqr::mpi::AugmentedSystem;

/// Largest `cᵀx` over the vertices of `{x : A x ≤ b}`, or `None` when no
/// vertex is feasible. Only meaningful for bounded polytopes.
pub fn lp_by_vertices(c: &[f64], a: &[Vec<f64>], b: &[f64], feas_tol: f64) -> Option<f64> {
    let n = c.len();
    let mut best: Option<f64> = None;
    for rows in (0..a.len()).combinations(n) {
        let m = DMatrix::from_fn(n, n, |i, j| a[rows[i]][j]);
        let rhs = DVector::from_iterator(n, rows.iter().map(|&i| b[i]));
        let lu = m.lu();
        let det = lu.determinant();
        if det.abs() < 1e-12 {
            continue;
        }
        let Some(x) = lu.solve(&rhs) else { continue };
        let feasible = a.iter().zip(b).all(|(row, &bi)| {
            let lhs: f64 = row.iter().zip(x.iter()).map(|(r, v)| r * v).sum();
            lhs <= bi + feas_tol * (1.0 + bi.abs())
        });
        if feasible {
            let v: f64 = c.iter().zip(x.iter()).map(|(ci, xi)| ci * xi).sum();
            best = Some(best.map_or(v, |cur: f64| cur.max(v)));
        }
    }
    best
}

/// Random bounded LP: a box `|xᵢ| ≤ 1 + U(0, 9)` plus random half-spaces
/// through or around an interior anchor point. Some rows pass exactly
/// through a shared point to make degenerate vertices.
pub fn random_lp<R: Rng>(rng: &mut R, n: usize, extra: usize) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let mut a = Vec::with_capacity(2 * n + extra);
    let mut b = Vec::with_capacity(2 * n + extra);
    for i in 0..n {
        let w = 1.0 + 9.0 * rng.random::<f64>();
        let mut row = vec![0.0; n];
        row[i] = 1.0;
        a.push(row.clone());
        b.push(w);
        row[i] = -1.0;
        a.push(row);
        b.push(w);
    }
    let anchor: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    let degenerate = rng.random_bool(0.3);
    for k in 0..extra {
        let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let at: f64 = row.iter().zip(&anchor).map(|(r, x)| r * x).sum();
        let slack = if degenerate && k % 2 == 0 {
            0.0
        } else {
            rng.random_range(0.0..3.0)
        };
        a.push(row);
        b.push(at + slack);
    }
    let c = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    (c, a, b)
}

/// Finite-horizon LQ problem solved as one dense quadratic program in the
/// stacked controls. Returns the optimal controls and cost
/// `Σ xᵢᵀQxᵢ + R uᵢ² + x_Nᵀ P_N x_N`.
pub fn dense_lq(
    a: &Matrix4<f64>,
    b: &Vector4<f64>,
    q: &Matrix4<f64>,
    r: f64,
    p_n: &Matrix4<f64>,
    x0: &Vector4<f64>,
    horizon: usize,
) -> (Vec<f64>, f64) {
    let nx = 4;
    let rows = nx * (horizon + 1);
    // x = free + gamma u
    let mut free = DVector::<f64>::zeros(rows);
    let mut gamma = DMatrix::<f64>::zeros(rows, horizon);
    let mut powers = vec![Matrix4::identity()];
    for _ in 0..horizon {
        powers.push(a * powers.last().unwrap());
    }
    for i in 0..=horizon {
        free.rows_mut(nx * i, nx).copy_from(&(powers[i] * x0));
        for j in 0..i {
            gamma
                .view_mut((nx * i, j), (nx, 1))
                .copy_from(&(powers[i - 1 - j] * b));
        }
    }
    let mut weight = DMatrix::<f64>::zeros(rows, rows);
    for i in 0..=horizon {
        let w = if i == horizon { p_n } else { q };
        weight.view_mut((nx * i, nx * i), (nx, nx)).copy_from(w);
    }
    let gw = gamma.transpose() * &weight;
    let hess = &gw * &gamma + DMatrix::<f64>::identity(horizon, horizon) * r;
    let grad = &gw * &free;
    let u = hess
        .cholesky()
        .expect("LQ Hessian is positive definite")
        .solve(&(-grad));
    let x = &free + &gamma * &u;
    let cost = x.dot(&(&weight * &x)) + r * u.norm_squared();
    (u.iter().copied().collect(), cost)
}

/// Time-varying gains of the finite-horizon LQR by the textbook Riccati
/// recursion from `P_N`; entry 0 is the first step's gain, `u = K x`.
pub fn riccati_gains(
    a: &Matrix4<f64>,
    b: &Vector4<f64>,
    q: &Matrix4<f64>,
    r: f64,
    p_n: &Matrix4<f64>,
    horizon: usize,
) -> Vec<RowVector4<f64>> {
    let mut p = *p_n;
    let mut gains = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let s = r + (b.transpose() * p * b)[0];
        let k = -(b.transpose() * p * a) / s;
        p = q + a.transpose() * p * a + a.transpose() * p * b * k;
        gains.push(k);
    }
    gains.reverse();
    gains
}

/// Central difference of a scalar function along each coordinate.
pub fn central_gradient<const D: usize>(
    f: impl Fn(&SMatrix<f64, D, 1>) -> f64,
    at: &SMatrix<f64, D, 1>,
) -> SMatrix<f64, D, 1> {
    SMatrix::from_fn(|i, _| {
        let h = 1e-5 * at[i].abs().max(1.0);
        let mut up = *at;
        let mut down = *at;
        up[i] += h;
        down[i] -= h;
        (f(&up) - f(&down)) / (2.0 * h)
    })
}

/// Central-difference Jacobian of a vector function.
pub fn central_jacobian<const D: usize, const E: usize>(
    f: impl Fn(&SMatrix<f64, D, 1>) -> SMatrix<f64, E, 1>,
    at: &SMatrix<f64, D, 1>,
) -> SMatrix<f64, E, D> {
    let mut jac = SMatrix::<f64, E, D>::zeros();
    for i in 0..D {
        let h = 1e-5 * at[i].abs().max(1.0);
        let mut up = *at;
        let mut down = *at;
        up[i] += h;
        down[i] -= h;
        jac.set_column(i, &((f(&up) - f(&down)) / (2.0 * h)));
    }
    jac
}

/// `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// The augmented closed loop, rebuilt as plain dense matrices.
pub struct InvariantSampler {
    phi: DMatrix<f64>,
    /// `H Φ^i` for `i = 0..=Nν`.
    stacked: DMatrix<f64>,
    h: DVector<f64>,
    tol: f64,
}

impl InvariantSampler {
    pub fn new(aug: &AugmentedSystem, n_nu: usize, tol: f64) -> Self {
        let phi_s = aug.a + aug.b * aug.k;
        let rows_s = aug.f + aug.g * aug.k;
        let phi = DMatrix::from_fn(6, 6, |i, j| phi_s[(i, j)]);
        let rows = DMatrix::from_fn(rows_s.nrows(), 6, |i, j| rows_s[(i, j)]);
        let nc = rows.nrows();
        let mut stacked = DMatrix::<f64>::zeros(nc * (n_nu + 1), 6);
        let mut h = DVector::<f64>::zeros(nc * (n_nu + 1));
        let mut power = DMatrix::<f64>::identity(6, 6);
        for i in 0..=n_nu {
            stacked.view_mut((nc * i, 0), (nc, 6)).copy_from(&(&rows * &power));
            h.rows_mut(nc * i, nc).copy_from(&DVector::from_column_slice(aug.h.as_slice()));
            power = &phi * power;
        }
        Self { phi, stacked, h, tol }
    }

    pub fn contains(&self, z: &DVector<f64>) -> bool {
        let lhs = &self.stacked * z;
        lhs.iter().zip(self.h.iter()).all(|(l, h)| *l <= h + self.tol)
    }

    /// A point on a random ray from the origin (slack coordinates
    /// nonnegative), uniformly placed between 0 and the set boundary.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let mut dir = DVector::<f64>::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        dir[4] = dir[4].abs();
        dir[5] = dir[5].abs();
        let proj = &self.stacked * &dir;
        let t_max = proj
            .iter()
            .zip(self.h.iter())
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, h)| h / p)
            .fold(f64::INFINITY, f64::min);
        dir * (t_max * rng.random::<f64>())
    }

    /// Number of steps (out of `steps`) at which the closed-loop orbit of `z`
    /// lies outside the set.
    pub fn violations(&self, z: &DVector<f64>, steps: usize) -> usize {
        let mut z = z.clone();
        let mut bad = 0;
        for _ in 0..steps {
            z = &self.phi * z;
            if !self.contains(&z) {
                bad += 1;
            }
        }
        bad
    }
}

/// Coefficient of determination of the least-squares line through `points`.
pub fn linear_r2(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}
