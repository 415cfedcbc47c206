//! Group-lasso regularized FIR Wiener filters.
//!
//! Minimizes `(1/N) ||y - X h||^2 + gamma * sum_i ||h_i||_2`, one group per
//! source channel, with the same ridge as the plain fit. The smooth part is
//! built from the shared lagged moments, so no design matrix is formed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;
use crate::wiener::{unpack, FilterBank, LaggedMoments, RIDGE};

pub const MAX_ITERATIONS: usize = 10_000;
pub const OBJECTIVE_TOL: f64 = 1e-8;
/// Target stationarity residual, relative to `max_i ||grad_i f(0)||`.
pub const STATIONARITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GroupLassoFit {
    pub bank: FilterBank,
    pub iterations: usize,
    pub residual: f64,
    pub objective: f64,
}

/// Smooth part `h'Qh - 2q'h + r` with gradient `2(Qh - q)`.
struct Problem {
    q_mat: DMatrix<f64>,
    q: DVector<f64>,
    r: f64,
    w: usize,
    groups: usize,
    gamma: f64,
}

impl Problem {
    fn new(m: &LaggedMoments, j: usize, gamma: f64) -> Result<Self> {
        let (mut a, c, yy) = m.normal_equations(j)?;
        let dim = a.nrows();
        let scale = 1.0 / m.rows() as f64;
        let trace = a.trace();
        if dim > 0 && trace > 0.0 {
            let ridge = RIDGE * trace / dim as f64;
            for k in 0..dim {
                a[(k, k)] += ridge;
            }
        }
        let w = 2 * m.f() + 1;
        Ok(Self {
            q_mat: a * scale,
            q: c * scale,
            r: yy * scale,
            w,
            groups: dim / w,
            gamma,
        })
    }

    fn group<'a>(&self, v: &'a DVector<f64>, g: usize) -> nalgebra::DVectorView<'a, f64> {
        v.rows(g * self.w, self.w)
    }

    fn smooth(&self, h: &DVector<f64>) -> f64 {
        h.dot(&(&self.q_mat * h)) - 2.0 * self.q.dot(h) + self.r
    }

    fn grad(&self, h: &DVector<f64>) -> DVector<f64> {
        (&self.q_mat * h - &self.q) * 2.0
    }

    fn penalty(&self, h: &DVector<f64>) -> f64 {
        self.gamma * (0..self.groups).map(|g| self.group(h, g).norm()).sum::<f64>()
    }

    fn objective(&self, h: &DVector<f64>) -> f64 {
        self.smooth(h) + self.penalty(h)
    }

    fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut out = v.clone();
        for g in 0..self.groups {
            let norm = self.group(v, g).norm();
            let shrink = if norm > t { 1.0 - t / norm } else { 0.0 };
            out.rows_mut(g * self.w, self.w).scale_mut(shrink);
        }
        out
    }

    fn gradient_scale(&self) -> f64 {
        (0..self.groups)
            .map(|g| 2.0 * self.group(&self.q, g).norm())
            .fold(0.0, f64::max)
    }

    /// Worst violation of the optimality conditions, relative to the
    /// largest group gradient at zero.
    fn residual(&self, h: &DVector<f64>) -> f64 {
        let scale = self.gradient_scale();
        if scale == 0.0 {
            return h.norm();
        }
        let grad = self.grad(h);
        let worst = (0..self.groups)
            .map(|g| {
                let hg = self.group(h, g);
                let gg = self.group(&grad, g);
                let norm = hg.norm();
                if norm > 0.0 {
                    (gg + hg * (self.gamma / norm)).norm()
                } else {
                    (gg.norm() - self.gamma).max(0.0)
                }
            })
            .fold(0.0, f64::max);
        worst / scale
    }

    fn fista(&self, start: DVector<f64>, budget: usize) -> (DVector<f64>, usize) {
        let mut x = start;
        let mut y = x.clone();
        let mut t: f64 = 1.0;
        let mut lip = (2.0 * self.q_mat.diagonal().max()).max(f64::MIN_POSITIVE);
        let mut f_x = self.objective(&x);
        let mut iters = 0;
        while iters < budget {
            iters += 1;
            let f_y = self.smooth(&y);
            let g_y = self.grad(&y);
            let z = loop {
                let z = self.prox(&(&y - &g_y / lip), self.gamma / lip);
                let d = &z - &y;
                if self.smooth(&z) <= f_y + g_y.dot(&d) + 0.5 * lip * d.norm_squared() * (1.0 + 1e-12) {
                    break z;
                }
                lip *= 2.0;
            };
            let f_z = self.objective(&z);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            if f_z > f_x {
                // Restart momentum when the objective goes up.
                y = x.clone();
                t = 1.0;
                continue;
            }
            y = &z + (&z - &x) * ((t - 1.0) / t_next);
            t = t_next;
            let change = (f_x - f_z).abs() / f_x.abs().max(f64::MIN_POSITIVE);
            x = z;
            f_x = f_z;
            if change < OBJECTIVE_TOL {
                break;
            }
        }
        (x, iters)
    }

    /// Newton iterations on the optimality equations of the current
    /// support. Groups that collapse towards zero leave the support.
    fn polish(&self, start: &DVector<f64>) -> DVector<f64> {
        let mut h = start.clone();
        let mut best = self.residual(&h);
        for _ in 0..50 {
            if best <= 1e-14 {
                break;
            }
            let active: Vec<usize> = (0..self.groups).filter(|&g| self.group(&h, g).norm() > 0.0).collect();
            if active.is_empty() {
                break;
            }
            let idx: Vec<usize> = active.iter().flat_map(|&g| g * self.w..(g + 1) * self.w).collect();
            let grad = self.grad(&h);
            let mut jac = DMatrix::from_fn(idx.len(), idx.len(), |r, c| 2.0 * self.q_mat[(idx[r], idx[c])]);
            let mut rhs = DVector::from_fn(idx.len(), |r, _| -grad[idx[r]]);
            for (k, &g) in active.iter().enumerate() {
                let hg = self.group(&h, g).clone_owned();
                let norm = hg.norm();
                let u = &hg / norm;
                let block = (DMatrix::identity(self.w, self.w) - &u * u.transpose()) * (self.gamma / norm);
                let off = k * self.w;
                let mut view = jac.view_mut((off, off), (self.w, self.w));
                view += block;
                let mut rv = rhs.rows_mut(off, self.w);
                rv -= &u * self.gamma;
            }
            let Some(step) = jac.cholesky().map(|c| c.solve(&rhs)) else { break };
            let mut improved = false;
            let mut alpha = 1.0;
            for _ in 0..30 {
                let mut cand = h.clone();
                for (r, &i) in idx.iter().enumerate() {
                    cand[i] += alpha * step[r];
                }
                let res = self.residual(&cand);
                if res < best {
                    h = cand;
                    best = res;
                    improved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !improved {
                break;
            }
        }
        h
    }
}

/// Group-lasso filter for target `j` from precomputed moments.
pub fn group_lasso_from_moments(m: &LaggedMoments, j: usize, gamma: f64) -> Result<GroupLassoFit> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Invalid(format!("gamma must be nonnegative, got {gamma}")));
    }
    let p = Problem::new(m, j, gamma)?;
    let mut bank = FilterBank::zeros(m.n(), j, m.f(), gamma);
    let dim = p.q.len();
    let mut h = DVector::zeros(dim);
    let mut iterations = 0;
    let mut residual = p.residual(&h);
    // FISTA, then Newton polishing on the support; repeat if a group left
    // out of the support still violates its optimality condition.
    for _ in 0..5 {
        if residual <= STATIONARITY_TOL * 1e-3 || iterations >= MAX_ITERATIONS {
            break;
        }
        let (x, used) = p.fista(h.clone(), MAX_ITERATIONS - iterations);
        iterations += used;
        let x = p.polish(&x);
        let r = p.residual(&x);
        if r <= residual {
            h = x;
            residual = r;
        }
    }
    if residual > STATIONARITY_TOL && iterations >= MAX_ITERATIONS {
        return Err(Error::NoConvergence { iterations, residual });
    }
    unpack(&mut bank, h.as_slice());
    Ok(GroupLassoFit { bank, iterations, residual, objective: p.objective(&h) })
}

pub fn fit_wiener_fir_group_lasso(panel: &TimeSeriesPanel, j: usize, f: usize, gamma: f64) -> Result<GroupLassoFit> {
    if j >= panel.n() {
        return Err(Error::NodeOutOfRange { node: j, n: panel.n() });
    }
    group_lasso_from_moments(&LaggedMoments::from_panel(panel, f)?, j, gamma)
}

/// Smallest `gamma` at which every group is zero: `max_i ||grad_i f(0)||`.
pub fn critical_gamma(m: &LaggedMoments, j: usize) -> Result<f64> {
    Ok(Problem::new(m, j, 0.0)?.gradient_scale())
}

/// Relative stationarity residual of an arbitrary bank under the
/// group-lasso objective with weight `gamma`.
pub fn stationarity_residual(m: &LaggedMoments, bank: &FilterBank, gamma: f64) -> Result<f64> {
    let p = Problem::new(m, bank.target, gamma)?;
    let h = DVector::from_iterator(p.q.len(), bank.coeffs.iter().flatten().copied());
    Ok(p.residual(&h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wiener::fit_wiener_fir_from_moments;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn toy_panel(t: usize, seed: u64) -> TimeSeriesPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let x0: Vec<f64> = (0..t).map(|_| draw()).collect();
        let x1: Vec<f64> = (0..t).map(|_| draw()).collect();
        let x2: Vec<f64> = (0..t).map(|_| draw()).collect();
        let y: Vec<f64> = (0..t)
            .map(|k| {
                let prev = if k > 0 { x0[k - 1] } else { 0.0 };
                0.8 * x0[k] + 0.3 * prev - 0.4 * x1[k] + 0.5 * draw()
            })
            .collect();
        TimeSeriesPanel::new(1.0, vec![x0, x1, x2, y]).unwrap()
    }

    #[test]
    fn zero_gamma_reproduces_least_squares() {
        let m = LaggedMoments::from_panel(&toy_panel(5_000, 1), 2).unwrap();
        let ls = fit_wiener_fir_from_moments(&m, 3).unwrap();
        let gl = group_lasso_from_moments(&m, 3, 0.0).unwrap();
        for (a, b) in ls.coeffs.iter().flatten().zip(gl.bank.coeffs.iter().flatten()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!(gl.residual <= STATIONARITY_TOL);
    }

    #[test]
    fn critical_gamma_zeros_everything() {
        let m = LaggedMoments::from_panel(&toy_panel(5_000, 2), 2).unwrap();
        let gc = critical_gamma(&m, 3).unwrap();
        let (_, c, _) = m.normal_equations(3).unwrap();
        let w = 5;
        let want = (0..3)
            .map(|g| 2.0 * c.rows(g * w, w).norm() / m.rows() as f64)
            .fold(0.0, f64::max);
        assert!((gc - want).abs() < 1e-12 * want);
        let above = group_lasso_from_moments(&m, 3, gc * 1.0001).unwrap();
        assert!(above.bank.coeffs.iter().flatten().all(|&v| v == 0.0));
        let below = group_lasso_from_moments(&m, 3, gc * 0.9).unwrap();
        assert!(below.bank.coeffs.iter().flatten().any(|&v| v != 0.0));
    }

    #[test]
    fn moderate_gamma_drops_irrelevant_source() {
        let m = LaggedMoments::from_panel(&toy_panel(20_000, 3), 2).unwrap();
        let gc = critical_gamma(&m, 3).unwrap();
        let fit = group_lasso_from_moments(&m, 3, 0.1 * gc).unwrap();
        assert!(fit.residual <= STATIONARITY_TOL, "{}", fit.residual);
        assert!(fit.bank.coeff(2).unwrap().iter().all(|&v| v == 0.0));
        assert!(fit.bank.coeff(0).unwrap().iter().any(|&v| v != 0.0));
        let independent = stationarity_residual(&m, &fit.bank, 0.1 * gc).unwrap();
        assert!((independent - fit.residual).abs() < 1e-15);
    }

    #[test]
    fn negative_gamma_is_rejected() {
        let m = LaggedMoments::from_panel(&toy_panel(500, 4), 1).unwrap();
        assert!(group_lasso_from_moments(&m, 3, -1.0).is_err());
    }
}
