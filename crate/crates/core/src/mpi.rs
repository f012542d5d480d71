//! Maximal positively invariant set of the augmented state-slack system.
//!
//! In the terminal window the state evolves under `u = K x` and the slacks
//! decay as `e⁺ = M e`. Stacking `x̃ = [x; e]` gives a 6-dimensional
//! autonomous system `x̃⁺ = (Ã + B̃K̃) x̃` subject to the 18 mixed constraints
//! `(F̃ + G̃K̃) x̃ ≤ h̃`. The determination index `Nν` is the smallest `n` for
//! which the constraints at steps `0..=n` already imply the ones at `n + 1`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, RowSVector, SMatrix, SVector};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::cost::ConstraintBounds;
use crate::error::{invalid, Error, Result};
use crate::linprog::{solve_lp, LpOutcome, LpProblem};
use crate::lqr::GainMatrix;
use crate::vehicle::LinearModel;

pub const N_ROWS: usize = 18;
/// Slack on `≤ h̃` when deciding whether a row is implied.
pub const DETERMINATION_TOL: f64 = 1e-7;
pub const MEMBERSHIP_TOL: f64 = 1e-9;

pub type AugState = SVector<f64, 6>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedSystem {
    pub a: SMatrix<f64, 6, 6>,
    pub b: SVector<f64, 6>,
    pub k: RowSVector<f64, 6>,
    pub f: SMatrix<f64, N_ROWS, 6>,
    pub g: SVector<f64, N_ROWS>,
    pub h: SVector<f64, N_ROWS>,
    pub eps_max: f64,
}

impl AugmentedSystem {
    /// Closed-loop transition `Ã + B̃K̃`.
    pub fn closed_loop(&self) -> SMatrix<f64, 6, 6> {
        self.a + self.b * self.k
    }

    /// Constraint rows under the feedback law, `F̃ + G̃K̃`.
    pub fn constraint_rows(&self) -> SMatrix<f64, N_ROWS, 6> {
        self.f + self.g * self.k
    }

    /// Box on each coordinate implied by rows 1–8 and 11–14.
    pub fn coordinate_box(&self) -> [(f64, f64); 6] {
        let h = &self.h;
        [
            (-h[0], h[1]),
            (-h[2], h[3]),
            (-h[4], h[5]),
            (-h[6], h[7]),
            (-h[10], h[11]),
            (-h[12], h[13]),
        ]
    }

    /// Stable fingerprint of every matrix entry, used as a cache key.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        let parts = self
            .a
            .iter()
            .chain(self.b.iter())
            .chain(self.k.iter())
            .chain(self.f.iter())
            .chain(self.g.iter())
            .chain(self.h.iter());
        for v in parts {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .take(12)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Assembles `Ã, B̃, K̃, F̃, G̃, h̃` with `Δ̄ = Δ_max/(1+ε̄)`, `δ̄ = δ_max/(1+ε̄)`.
pub fn build_augmented(
    model: &LinearModel,
    k: &GainMatrix<4>,
    bounds: &ConstraintBounds,
    m: f64,
    eps_max: f64,
) -> Result<AugmentedSystem> {
    bounds.validate()?;
    if !(0.0..1.0).contains(&m) {
        return Err(invalid("M", format!("must lie in [0, 1), got {m}")));
    }
    if !(eps_max > 0.0 && eps_max.is_finite()) {
        return Err(invalid("eps_max", format!("must be > 0, got {eps_max}")));
    }
    let delta_bar = bounds.delta_max / (1.0 + eps_max);
    let steer_bar = bounds.steer_max / (1.0 + eps_max);

    let mut a = SMatrix::<f64, 6, 6>::zeros();
    a.fixed_view_mut::<4, 4>(0, 0).copy_from(&model.a);
    a[(4, 4)] = m;
    a[(5, 5)] = m;
    let mut b = SVector::<f64, 6>::zeros();
    b.fixed_rows_mut::<4>(0).copy_from(&model.b);
    let mut kt = RowSVector::<f64, 6>::zeros();
    kt.fixed_columns_mut::<4>(0).copy_from(k);

    let mut f = SMatrix::<f64, N_ROWS, 6>::zeros();
    for c in 0..4 {
        f[(2 * c, c)] = -1.0;
        f[(2 * c + 1, c)] = 1.0;
    }
    f[(10, 4)] = -1.0;
    f[(11, 4)] = 1.0;
    f[(12, 5)] = -1.0;
    f[(13, 5)] = 1.0;
    f[(14, 0)] = -1.0;
    f[(14, 4)] = -delta_bar;
    f[(15, 0)] = 1.0;
    f[(15, 4)] = -delta_bar;
    for c in 0..4 {
        f[(16, c)] = -k[c];
        f[(17, c)] = k[c];
    }
    f[(16, 5)] = -steer_bar;
    f[(17, 5)] = -steer_bar;

    let mut g = SVector::<f64, N_ROWS>::zeros();
    g[8] = -1.0;
    g[9] = 1.0;

    let h = SVector::<f64, N_ROWS>::from_column_slice(&[
        bounds.delta_max,
        bounds.delta_max,
        bounds.delta_rate_max,
        bounds.delta_rate_max,
        bounds.heading_max,
        bounds.heading_max,
        bounds.heading_rate_max,
        bounds.heading_rate_max,
        bounds.steer_max,
        bounds.steer_max,
        0.0,
        eps_max,
        0.0,
        eps_max,
        delta_bar,
        delta_bar,
        steer_bar,
        steer_bar,
    ]);

    Ok(AugmentedSystem {
        a,
        b,
        k: kt,
        f,
        g,
        h,
        eps_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MpiResult {
    pub n_nu: usize,
    /// `Nν + 1`, so that `N̄ = N + Nν + 1`.
    pub n_bar_offset: usize,
    pub rows_checked: usize,
}

/// Constraint data of an autonomous linear system `z⁺ = Φ z`, `H z ≤ h`,
/// in any dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantProblem {
    pub rows: DMatrix<f64>,
    pub h: DVector<f64>,
    pub phi: DMatrix<f64>,
}

impl InvariantProblem {
    pub fn new(rows: DMatrix<f64>, h: DVector<f64>, phi: DMatrix<f64>) -> Result<Self> {
        if rows.nrows() != h.len() || rows.ncols() != phi.nrows() || !phi.is_square() {
            return Err(Error::Dimension(format!(
                "H is {}x{}, h has {} entries, Φ is {}x{}",
                rows.nrows(),
                rows.ncols(),
                h.len(),
                phi.nrows(),
                phi.ncols()
            )));
        }
        Ok(Self { rows, h, phi })
    }

    /// Stacked rows `H Φ^i`, `i = 0..=n`.
    fn stacked(&self, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let nc = self.rows.nrows();
        let mut power = DMatrix::<f64>::identity(self.phi.nrows(), self.phi.ncols());
        let mut a = Vec::with_capacity(nc * (n + 1));
        let mut b = Vec::with_capacity(nc * (n + 1));
        for _ in 0..=n {
            let m = &self.rows * &power;
            for j in 0..nc {
                a.push(m.row(j).iter().copied().collect());
                b.push(self.h[j]);
            }
            power = &self.phi * power;
        }
        (a, b)
    }

    /// `max Hⱼ Φ^{n+1} z` over the constraints at steps `0..=n`, every row `j`.
    pub fn row_maxima(&self, n: usize) -> Result<Vec<f64>> {
        let (a_ub, b_ub) = self.stacked(n);
        let mut power = DMatrix::<f64>::identity(self.phi.nrows(), self.phi.ncols());
        for _ in 0..=n {
            power = &self.phi * power;
        }
        let objective = &self.rows * power;
        (0..self.rows.nrows())
            .into_par_iter()
            .map(|j| {
                let lp = LpProblem {
                    c: objective.row(j).iter().copied().collect(),
                    a_ub: a_ub.clone(),
                    b_ub: b_ub.clone(),
                };
                match solve_lp(&lp)? {
                    LpOutcome::Optimal { value, .. } => Ok(value),
                    LpOutcome::Infeasible => {
                        Err(Error::LpStatus("infeasible: constraint set is empty"))
                    }
                    LpOutcome::Unbounded { .. } => {
                        Err(Error::LpStatus("unbounded: constraint set is not bounded"))
                    }
                }
            })
            .collect()
    }

    /// First row whose maximum exceeds `hⱼ + DETERMINATION_TOL`.
    pub fn first_violation(&self, maxima: &[f64]) -> Option<usize> {
        maxima
            .iter()
            .enumerate()
            .find(|&(j, &v)| v > self.h[j] + DETERMINATION_TOL)
            .map(|(j, _)| j)
    }

    /// Smallest `n ≤ n_max` at which no row can be violated one step later.
    pub fn determination_index(&self, n_max: usize) -> Result<MpiResult> {
        if n_max == 0 {
            return Err(invalid("n_max", "must be at least 1"));
        }
        let mut last_row = 0;
        for n in 0..=n_max {
            let maxima = self.row_maxima(n)?;
            match self.first_violation(&maxima) {
                None => {
                    return Ok(MpiResult {
                        n_nu: n,
                        n_bar_offset: n + 1,
                        rows_checked: self.rows.nrows(),
                    })
                }
                Some(j) => last_row = j,
            }
        }
        Err(Error::HorizonCapExceeded {
            cap: n_max,
            row: last_row + 1,
        })
    }
}

impl From<&AugmentedSystem> for InvariantProblem {
    fn from(aug: &AugmentedSystem) -> Self {
        let rows = aug.constraint_rows();
        let phi = aug.closed_loop();
        Self {
            rows: DMatrix::from_column_slice(N_ROWS, 6, rows.as_slice()),
            h: DVector::from_column_slice(aug.h.as_slice()),
            phi: DMatrix::from_column_slice(6, 6, phi.as_slice()),
        }
    }
}

/// Row maxima one step past the constraints at `0..=n`.
pub fn row_maxima(aug: &AugmentedSystem, n: usize) -> Result<Vec<f64>> {
    InvariantProblem::from(aug).row_maxima(n)
}

pub fn first_violation(aug: &AugmentedSystem, maxima: &[f64]) -> Option<usize> {
    InvariantProblem::from(aug).first_violation(maxima)
}

/// Determination index of the augmented system's invariant set.
pub fn compute_horizon_bound(aug: &AugmentedSystem, n_max: usize) -> Result<MpiResult> {
    InvariantProblem::from(aug).determination_index(n_max)
}

/// Membership in `{x̃ : (F̃+G̃K̃) Φ^i x̃ ≤ h̃, i = 0..=Nν}`.
pub fn mpi_contains(aug: &AugmentedSystem, n_nu: usize, x: &AugState) -> bool {
    let hrows = aug.constraint_rows();
    let phi = aug.closed_loop();
    let mut z = *x;
    for _ in 0..=n_nu {
        let lhs = hrows * z;
        if (0..N_ROWS).any(|j| lhs[j] > aug.h[j] + MEMBERSHIP_TOL) {
            return false;
        }
        z = phi * z;
    }
    true
}

/// Grid points of the 2-D slice through `dims` (other coordinates zero) that
/// lie in the set. The grid spans the coordinate box and always contains 0.
pub fn project_polytope_2d(
    aug: &AugmentedSystem,
    n_nu: usize,
    dim_a: usize,
    dim_b: usize,
    grid: usize,
) -> Result<Vec<(f64, f64)>> {
    if dim_a == dim_b || dim_a >= 6 || dim_b >= 6 {
        return Err(invalid("dims", format!("need two distinct indices < 6, got {dim_a}, {dim_b}")));
    }
    if grid < 2 {
        return Err(invalid("grid", "need at least 2 points per axis"));
    }
    let bx = aug.coordinate_box();
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        let mut v: Vec<f64> = (0..grid)
            .map(|i| lo + (hi - lo) * i as f64 / (grid - 1) as f64)
            .collect();
        if !v.contains(&0.0) {
            v.push(0.0);
            v.sort_by(f64::total_cmp);
        }
        v
    };
    let (xs, ys) = (axis(bx[dim_a]), axis(bx[dim_b]));
    let mut out = Vec::new();
    for &a in &xs {
        for &b in &ys {
            let mut z = AugState::zeros();
            z[dim_a] = a;
            z[dim_b] = b;
            if mpi_contains(aug, n_nu, &z) {
                out.push((a, b));
            }
        }
    }
    Ok(out)
}

/// Plain-text `fingerprint eps_max n_nu` cache for determination results.
#[derive(Debug, Clone, Default)]
pub struct HorizonCache {
    path: Option<PathBuf>,
    entries: BTreeMap<String, usize>,
}

impl HorizonCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path` if it exists; malformed lines are skipped.
    pub fn open(path: impl AsRef<Path>) -> Self {
        let path = path.as_ref().to_path_buf();
        let mut entries = BTreeMap::new();
        if let Ok(text) = fs::read_to_string(&path) {
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let fields: Vec<&str> = line.split_whitespace().collect();
                if let [key, _eps, n] = fields[..] {
                    if let Ok(n) = n.parse() {
                        entries.insert(key.to_string(), n);
                    }
                }
            }
        }
        Self {
            path: Some(path),
            entries,
        }
    }

    pub fn get(&self, aug: &AugmentedSystem) -> Option<usize> {
        self.entries.get(&aug.fingerprint()).copied()
    }

    /// Records `n_nu` for `aug`, appending to the backing file if any.
    pub fn insert(&mut self, aug: &AugmentedSystem, n_nu: usize) -> Result<()> {
        let key = aug.fingerprint();
        if self.entries.insert(key.clone(), n_nu) == Some(n_nu) {
            return Ok(());
        }
        if let Some(path) = &self.path {
            let mut file = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::Config(format!("cache {}: {e}", path.display())))?;
            writeln!(file, "{key} {} {n_nu}", aug.eps_max)
                .map_err(|e| Error::Config(format!("cache {}: {e}", path.display())))?;
        }
        Ok(())
    }

    /// Returns the cached index or computes and records it.
    pub fn horizon_bound(&mut self, aug: &AugmentedSystem, n_max: usize) -> Result<MpiResult> {
        if let Some(n_nu) = self.get(aug) {
            return Ok(MpiResult {
                n_nu,
                n_bar_offset: n_nu + 1,
                rows_checked: N_ROWS,
            });
        }
        let res = compute_horizon_bound(aug, n_max)?;
        self.insert(aug, res.n_nu)?;
        Ok(res)
    }
}
