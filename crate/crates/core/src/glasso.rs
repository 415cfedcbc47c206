//! Graphical lasso and the static topology baselines built on it.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::EdgeSet;
use crate::panel::TimeSeriesPanel;

pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlassoOptions {
    pub penalize_diagonal: bool,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for GlassoOptions {
    fn default() -> Self {
        Self { penalize_diagonal: false, max_sweeps: 500, tol: 1e-9 }
    }
}

#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    pub theta: DMatrix<f64>,
    pub rho: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Worst violation of the optimality conditions at the returned point.
    pub kkt_residual: f64,
    /// `log det W` after each sweep, the dual objective being maximized.
    pub dual_objective: Vec<f64>,
}

/// `(1/T) sum_k (x(k) - mean)(x(k) - mean)'`.
pub fn empirical_covariance(panel: &TimeSeriesPanel) -> Result<DMatrix<f64>> {
    let t = panel.len();
    if t < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: t });
    }
    let n = panel.n();
    let centered: Vec<Vec<f64>> = panel
        .channels()
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / t as f64;
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let mut s = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let v = crate::wiener::dot(&centered[a], &centered[b]) / t as f64;
            s[(a, b)] = v;
            s[(b, a)] = v;
        }
    }
    Ok(s)
}

fn check_psd(s: &DMatrix<f64>) -> Result<()> {
    let n = s.nrows();
    if s.ncols() != n || n == 0 {
        return Err(Error::Invalid("covariance must be square and nonempty".into()));
    }
    let scale = s.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..n {
            if (s[(i, j)] - s[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Invalid("covariance is not symmetric".into()));
            }
        }
    }
    let min_eig = s.clone().symmetric_eigenvalues().min();
    if min_eig < -1e-10 * scale {
        return Err(Error::Invalid(format!("covariance is not positive semidefinite (eigenvalue {min_eig:e})")));
    }
    Ok(())
}

/// Lasso `min 0.5 b'Vb - b's + rho ||b||_1` by cyclic coordinate descent.
fn lasso_cd(v: &DMatrix<f64>, s: &DVector<f64>, rho: f64, beta: &mut DVector<f64>) {
    let p = s.len();
    let scale = s.amax().max(f64::MIN_POSITIVE);
    for _ in 0..10_000 {
        let mut delta = 0.0f64;
        for k in 0..p {
            let r = s[k] - v.column(k).dot(beta) + v[(k, k)] * beta[k];
            let new = soft(r, rho) / v[(k, k)];
            delta = delta.max((new - beta[k]).abs());
            beta[k] = new;
        }
        if delta <= 1e-13 * scale {
            break;
        }
    }
}

fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Maximizes `log det Theta - tr(S Theta) - rho ||Theta||_1` by blockwise
/// coordinate descent on the covariance estimate `W = Theta^-1`.
pub fn graphical_lasso(s: &DMatrix<f64>, rho: f64, opts: &GlassoOptions) -> Result<PrecisionEstimate> {
    check_psd(s)?;
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::Invalid(format!("rho_gl must be nonnegative, got {rho}")));
    }
    let n = s.nrows();
    let diag_pen = if opts.penalize_diagonal { rho } else { 0.0 };
    let mut w = s.clone();
    for i in 0..n {
        w[(i, i)] += diag_pen;
    }
    if w.clone().cholesky().is_none() {
        return Err(Error::Singular("covariance is singular; use rho_gl > 0 with diagonal penalty".into()));
    }
    let mut betas: Vec<DVector<f64>> = vec![DVector::zeros(n.saturating_sub(1)); n];
    let mut dual = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut change = 0.0f64;
        for j in 0..n {
            let idx: Vec<usize> = (0..n).filter(|&k| k != j).collect();
            let w11 = DMatrix::from_fn(n - 1, n - 1, |r, c| w[(idx[r], idx[c])]);
            let s12 = DVector::from_fn(n - 1, |r, _| s[(idx[r], j)]);
            lasso_cd(&w11, &s12, rho, &mut betas[j]);
            let w12 = &w11 * &betas[j];
            for (r, &k) in idx.iter().enumerate() {
                change = change.max((w[(k, j)] - w12[r]).abs());
                w[(k, j)] = w12[r];
                w[(j, k)] = w12[r];
            }
        }
        dual.push(log_det(&w));
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    let theta = precision_from(&w, &betas)?;
    let kkt_residual = kkt_residual(s, &theta, rho, opts.penalize_diagonal)?;
    if !converged {
        return Err(Error::NoConvergence { iterations: sweeps, residual: kkt_residual });
    }
    Ok(PrecisionEstimate { theta, rho, converged, iterations: sweeps, kkt_residual, dual_objective: dual })
}

fn precision_from(w: &DMatrix<f64>, betas: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    let mut theta = DMatrix::zeros(n, n);
    for j in 0..n {
        let idx: Vec<usize> = (0..n).filter(|&k| k != j).collect();
        let w12 = DVector::from_fn(n - 1, |r, _| w[(idx[r], j)]);
        let denom = w[(j, j)] - w12.dot(&betas[j]);
        if !(denom > 0.0) {
            return Err(Error::Singular("graphical lasso produced a non-positive pivot".into()));
        }
        let tjj = 1.0 / denom;
        theta[(j, j)] = tjj;
        for (r, &k) in idx.iter().enumerate() {
            theta[(k, j)] = -betas[j][r] * tjj;
        }
    }
    // Column-wise recovery is symmetric only up to solver tolerance.
    Ok((&theta + theta.transpose()) * 0.5)
}

fn log_det(w: &DMatrix<f64>) -> f64 {
    w.clone()
        .cholesky()
        .map(|c| 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
        .unwrap_or(f64::NEG_INFINITY)
}

/// Penalized log-likelihood of `theta`.
pub fn glasso_objective(s: &DMatrix<f64>, theta: &DMatrix<f64>, rho: f64, penalize_diagonal: bool) -> f64 {
    let n = s.nrows();
    let l1: f64 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| penalize_diagonal || i != j)
        .map(|(i, j)| theta[(i, j)].abs())
        .sum();
    log_det(theta) - (s * theta).trace() - rho * l1
}

/// Largest violation of `Theta^-1 - S - rho Gamma = 0`, `Gamma` a
/// subgradient of the penalty.
pub fn kkt_residual(s: &DMatrix<f64>, theta: &DMatrix<f64>, rho: f64, penalize_diagonal: bool) -> Result<f64> {
    let w = theta
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("precision estimate is singular".into()))?;
    let n = s.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let g = w[(i, j)] - s[(i, j)];
            let pen = if i != j || penalize_diagonal { rho } else { 0.0 };
            let t = theta[(i, j)];
            let v = if i == j {
                (g - pen).abs()
            } else if t != 0.0 {
                (g - pen * t.signum()).abs()
            } else {
                (g.abs() - pen).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

/// Edge `{i, j}` iff `|Theta_ij| > eps`.
pub fn glasso_topology(est: &PrecisionEstimate, eps: f64) -> EdgeSet {
    let n = est.theta.nrows();
    let mut edges = EdgeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            if est.theta[(i, j)].abs() > eps {
                edges.insert(i, j);
            }
        }
    }
    edges
}

/// As [`glasso_topology`] with every positive entry `Theta_ij > eps` removed.
pub fn glasso_sign_pruned_topology(est: &PrecisionEstimate, eps: f64) -> EdgeSet {
    glasso_topology(est, eps)
        .iter()
        .filter(|&(i, j)| !(est.theta[(i, j)] > eps))
        .collect()
}

/// Dense comma-separated matrix, one row per line.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.15e}", m[(r, c)])).collect();
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn well_conditioned() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[2.0, 0.6, 0.2, 0.6, 1.5, -0.4, 0.2, -0.4, 1.0])
    }

    #[test]
    fn zero_penalty_inverts() {
        let s = well_conditioned();
        let est = graphical_lasso(&s, 0.0, &GlassoOptions::default()).unwrap();
        let inv = s.clone().try_inverse().unwrap();
        assert!((&est.theta - inv).amax() < 1e-6);
        assert!((&est.theta * &s - DMatrix::identity(3, 3)).amax() < 1e-5);
    }

    #[test]
    fn identity_is_fixed() {
        let s = DMatrix::identity(4, 4);
        for rho in [0.0, 0.1, 5.0] {
            let est = graphical_lasso(&s, rho, &GlassoOptions::default()).unwrap();
            assert!((&est.theta - DMatrix::identity(4, 4)).amax() < 1e-12);
        }
    }

    // 2x2 stationarity: with rho >= |s12| the off-diagonal of W stays at
    // s12 +- rho slack and Theta is diagonal with entries 1/s_ii.
    #[test]
    fn two_by_two_threshold() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let est = graphical_lasso(&s, 0.3, &GlassoOptions::default()).unwrap();
        assert_eq!(est.theta[(0, 1)], 0.0);
        assert!((est.theta[(0, 0)] - 1.0).abs() < 1e-12 && (est.theta[(1, 1)] - 0.5).abs() < 1e-12);
        // Below the threshold the solution has w12 = s12 - rho sign(s12).
        let est = graphical_lasso(&s, 0.1, &GlassoOptions::default()).unwrap();
        let w = est.theta.clone().try_inverse().unwrap();
        assert!((w[(0, 1)] - 0.2).abs() < 1e-9);
        assert!(est.kkt_residual < 1e-9);
    }

    #[test]
    fn dual_objective_never_decreases() {
        let s = DMatrix::from_row_slice(
            4,
            4,
            &[1.0, 0.5, 0.3, 0.1, 0.5, 1.2, 0.4, 0.2, 0.3, 0.4, 0.9, 0.35, 0.1, 0.2, 0.35, 1.1],
        );
        let est = graphical_lasso(&s, 0.05, &GlassoOptions::default()).unwrap();
        assert!(est.dual_objective.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert!(est.kkt_residual < 1e-6);
    }

    #[test]
    fn covariance_of_identical_channels() {
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let p = TimeSeriesPanel::new(1.0, vec![x.clone(), x]).unwrap();
        let s = empirical_covariance(&p).unwrap();
        assert!((s[(0, 0)] - s[(0, 1)]).abs() < 1e-15 && (s[(1, 1)] - s[(0, 1)]).abs() < 1e-15);
        assert!(s.clone().symmetric_eigenvalues().min().abs() < 1e-12);
    }

    #[test]
    fn thresholding_and_sign_pruning() {
        let theta = DMatrix::from_row_slice(3, 3, &[1.0, -0.5, 0.3, -0.5, 1.0, 0.05, 0.3, 0.05, 1.0]);
        let est = PrecisionEstimate {
            theta,
            rho: 0.0,
            converged: true,
            iterations: 0,
            kkt_residual: 0.0,
            dual_objective: vec![],
        };
        assert_eq!(glasso_topology(&est, 0.1), EdgeSet::from_pairs([(0, 1), (0, 2)]).unwrap());
        assert_eq!(glasso_sign_pruned_topology(&est, 0.1), EdgeSet::from_pairs([(0, 1)]).unwrap());
        let diag = PrecisionEstimate { theta: DMatrix::identity(3, 3), ..est };
        assert!(glasso_topology(&diag, 0.1).is_empty());
    }

    #[test]
    fn rejects_indefinite_or_singular() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(graphical_lasso(&bad, 0.1, &GlassoOptions::default()).is_err());
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(graphical_lasso(&singular, 0.0, &GlassoOptions::default()).is_err());
        let opts = GlassoOptions { penalize_diagonal: true, ..Default::default() };
        assert!(graphical_lasso(&singular, 0.1, &opts).is_ok());
    }

    #[test]
    fn matrix_text() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 2.0]);
        let text = matrix_csv(&m);
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("1.000000000000000e0,-5.000000000000000e-1\n"));
    }
}
