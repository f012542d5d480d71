//! Fixed-precision text output for matrices.

use std::fmt::Write as _;

/// Six significant digits, trailing zeros kept (`%#.6g`); exact zeros print
/// as `0`.
pub fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        format!("{v:.decimals$}")
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    }
}

/// Rows of right-aligned entries under a `name =` line.
pub fn matrix(name: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let cells: Vec<Vec<String>> = rows
        .into_iter()
        .map(|r| r.into_iter().map(sig6).collect())
        .collect();
    let width = cells.iter().flatten().map(String::len).max().unwrap_or(1);
    let mut out = format!("{name} =\n");
    for row in &cells {
        out.push(' ');
        for c in row {
            let _ = write!(out, " {c:>width$}");
        }
        out.push('\n');
    }
    out
}

pub fn rows_of<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> Vec<Vec<f64>> {
    (0..R).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.86086957), "0.860870");
        assert_eq!(sig6(2.7826087), "2.78261");
        assert_eq!(sig6(-0.08), "-0.0800000");
        assert_eq!(sig6(1.0), "1.00000");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1234567.0), "1.23457e+06");
        assert_eq!(sig6(1.5e-7), "1.50000e-07");
    }

    #[test]
    fn matrix_layout() {
        let text = matrix("B", vec![vec![0.0], vec![1.016]]);
        assert_eq!(text, "B =\n        0\n  1.01600\n");
    }
}
