//! Closed-form Wiener filters of a known network and the phase classes
//! they predict.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::DiscreteModel;
use crate::noise::NoisePsdSet;
use crate::wiener::{phase, FrequencyGrid};

type C64 = Complex<f64>;

/// Wiener responses `W_ji` of one target `j`, indexed `[i][grid point]`.
/// Row `j` is identically zero. The three component arrays hold the
/// children, parent and spouse terms whose sum is `total`.
#[derive(Debug, Clone)]
pub struct AnalyticResponses {
    pub target: usize,
    pub total: Vec<Vec<C64>>,
    pub children_term: Vec<Vec<C64>>,
    pub parent_term: Vec<Vec<C64>>,
    pub spouse_term: Vec<Vec<C64>>,
}

fn check(m: &DiscreteModel, psd: &NoisePsdSet, j: usize) -> Result<()> {
    if j >= m.n() {
        return Err(Error::NodeOutOfRange { node: j, n: m.n() });
    }
    if psd.n() != m.n() {
        return Err(Error::Invalid(format!("psd covers {} nodes, model has {}", psd.n(), m.n())));
    }
    Ok(())
}

/// Decomposition of `W_ji` into children, parent and spouse terms:
///
/// ```text
/// W_ji = [ b_ij S_i / Phi_i  +  b_ji conj(S_j) / Phi_j  -  sum_k b_kj b_ki / Phi_k ] / den_j
/// den_j = |S_j|^2 / Phi_j + sum_l b_lj^2 / Phi_l
/// ```
///
/// The spouse sum runs over common children `k`, the denominator sum over
/// the nodes `l` driven by `j`.
pub fn analytic_wiener(m: &DiscreteModel, psd: &NoisePsdSet, j: usize, grid: &FrequencyGrid) -> Result<AnalyticResponses> {
    check(m, psd, j)?;
    let n = m.n();
    let g = grid.len();
    let zero = vec![vec![C64::new(0.0, 0.0); g]; n];
    let (mut ch, mut pa, mut sp, mut total) = (zero.clone(), zero.clone(), zero.clone(), zero);
    for (gi, &w) in grid.points().iter().enumerate() {
        let s: Vec<C64> = (0..n).map(|i| m.s_operator(i, w)).collect();
        let inv: Vec<f64> = (0..n).map(|i| 1.0 / psd.eval(i, w)).collect();
        let mut den = s[j].norm_sqr() * inv[j];
        for l in 0..n {
            let blj = m.gain(l, j);
            if blj > 0.0 {
                den += blj * blj * inv[l];
            }
        }
        if !(den > 0.0 && den.is_finite()) {
            return Err(Error::Singular(format!(
                "Wiener denominator of node {} vanishes at w = {w}",
                j + 1
            )));
        }
        for i in (0..n).filter(|&i| i != j) {
            let c = s[i] * (m.gain(i, j) * inv[i] / den);
            let p = s[j].conj() * (m.gain(j, i) * inv[j] / den);
            let k: f64 = (0..n)
                .map(|k| m.gain(k, j) * m.gain(k, i) * inv[k])
                .sum::<f64>()
                / den;
            ch[i][gi] = c;
            pa[i][gi] = p;
            sp[i][gi] = C64::new(-k, 0.0);
            total[i][gi] = c + p - k;
        }
    }
    Ok(AnalyticResponses { target: j, total, children_term: ch, parent_term: pa, spouse_term: sp })
}

/// Spectral density of the node states, `(I - H)^-1 Phi_E (I - H)^-H`
/// with `Phi_E = diag(Phi_i / |S_i|^2)`.
pub fn state_psd(m: &DiscreteModel, psd: &NoisePsdSet, omega: f64) -> Result<DMatrix<C64>> {
    let n = m.n();
    let s: Vec<C64> = (0..n).map(|i| m.s_operator(i, omega)).collect();
    let i_minus_h = DMatrix::from_fn(n, n, |r, c| {
        if r == c {
            C64::new(1.0, 0.0)
        } else {
            -m.transfer(r, c, omega)
        }
    });
    let g = i_minus_h
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("I - H is singular at w = {omega}")))?;
    let phi_e = DMatrix::from_fn(n, n, |r, c| {
        if r == c {
            C64::new(psd.eval(r, omega) / s[r].norm_sqr(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Ok(&g * phi_e * g.adjoint())
}

/// `W_j = Phi_{x_j x_-j} Phi_{x_-j}^-1` computed directly from the state
/// spectrum at each grid point. Indexed `[i][grid point]`, row `j` zero.
pub fn brute_force_wiener(m: &DiscreteModel, psd: &NoisePsdSet, j: usize, grid: &FrequencyGrid) -> Result<Vec<Vec<C64>>> {
    check(m, psd, j)?;
    let n = m.n();
    let others: Vec<usize> = (0..n).filter(|&i| i != j).collect();
    let mut out = vec![vec![C64::new(0.0, 0.0); grid.len()]; n];
    for (gi, &w) in grid.points().iter().enumerate() {
        let phi = state_psd(m, psd, w)?;
        let sub = DMatrix::from_fn(others.len(), others.len(), |r, c| phi[(others[r], others[c])]);
        // W_j^T = Phi_-j^-T Phi_{j,-j}^T
        let rhs = DMatrix::from_fn(others.len(), 1, |r, _| phi[(j, others[r])]);
        let sol = sub
            .transpose()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular(format!("state spectrum of node {} is singular at w = {w}", j + 1)))?;
        for (r, &i) in others.iter().enumerate() {
            out[i][gi] = sol[(r, 0)];
        }
    }
    Ok(out)
}

/// Analytic responses of every target, `[j][i][grid point]`.
pub fn analytic_all(m: &DiscreteModel, psd: &NoisePsdSet, grid: &FrequencyGrid) -> Result<Vec<Vec<Vec<C64>>>> {
    (0..m.n())
        .into_par_iter()
        .map(|j| analytic_wiener(m, psd, j, grid).map(|r| r.total))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseClass {
    /// Spouses that are not neighbors: phase exactly pi everywhere.
    StrictSpousePi,
    /// Neighbors that are not spouses: phase 0 at w = 0.
    NeighborZeroAtDc,
    /// Both neighbor and spouse: no phase guarantee.
    NeighborAndSpouseGeneric,
    Disconnected,
}

impl PhaseClass {
    pub fn name(self) -> &'static str {
        match self {
            PhaseClass::StrictSpousePi => "strict-spouse-pi",
            PhaseClass::NeighborZeroAtDc => "neighbor-zero-at-dc",
            PhaseClass::NeighborAndSpouseGeneric => "neighbor-and-spouse-generic",
            PhaseClass::Disconnected => "disconnected",
        }
    }
}

/// Expected phase behavior of `W_ji`. Neighbors are taken in the topology.
pub fn classify_pair(m: &DiscreteModel, i: usize, j: usize) -> Result<PhaseClass> {
    let g = m.graph();
    if i == j {
        return Err(Error::Invalid("pair needs two distinct nodes".into()));
    }
    let kin = g.kin_sets(j)?;
    if i >= m.n() {
        return Err(Error::NodeOutOfRange { node: i, n: m.n() });
    }
    let neighbor = kin.neighbors().contains(&i);
    let spouse = kin.spouses.contains(&i);
    Ok(match (neighbor, spouse) {
        (false, true) => PhaseClass::StrictSpousePi,
        (true, false) => PhaseClass::NeighborZeroAtDc,
        (true, true) => PhaseClass::NeighborAndSpouseGeneric,
        (false, false) => PhaseClass::Disconnected,
    })
}

/// Whether a neighbor-and-spouse pair nevertheless has phase pi at every
/// grid point: the neighbor terms must be real and smaller than the
/// spouse term. Imaginary parts count as zero below `1e-12` relative to
/// the neighbor-term magnitude.
pub fn thm4_conditions_hold(m: &DiscreteModel, psd: &NoisePsdSet, i: usize, j: usize, grid: &FrequencyGrid) -> Result<bool> {
    check(m, psd, j)?;
    if classify_pair(m, i, j)? != PhaseClass::NeighborAndSpouseGeneric {
        return Err(Error::Invalid(format!(
            "nodes {} and {} are not both neighbors and spouses",
            i + 1,
            j + 1
        )));
    }
    let n = m.n();
    for &w in grid.points() {
        let inv = |k: usize| 1.0 / psd.eval(k, w);
        let nb = m.s_operator(i, w) * (m.gain(i, j) * inv(i)) + m.s_operator(j, w).conj() * (m.gain(j, i) * inv(j));
        let spouse: f64 = (0..n).map(|k| m.gain(k, j) * m.gain(k, i) * inv(k)).sum();
        if nb.im.abs() > 1e-12 * nb.norm().max(f64::MIN_POSITIVE) || nb.re - spouse >= 0.0 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Comma-separated oracle report: `j,i,omega,re,im,abs,phase`, one row per
/// ordered pair and grid point, 1-based node ids.
pub fn oracle_report(all: &[Vec<Vec<C64>>], grid: &FrequencyGrid) -> String {
    let mut out = String::from("j,i,omega,re,im,abs,phase\n");
    for (j, rows) in all.iter().enumerate() {
        for (i, resp) in rows.iter().enumerate() {
            if i == j {
                continue;
            }
            for (&w, z) in grid.points().iter().zip(resp) {
                writeln!(
                    out,
                    "{},{},{w:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                    j + 1,
                    i + 1,
                    z.re,
                    z.im,
                    z.norm(),
                    phase(*z)
                )
                .unwrap();
            }
        }
    }
    out
}

/// Distance of a phase from pi in absolute value, `pi - |angle|`.
pub fn pi_gap(z: C64) -> f64 {
    PI - phase(z).abs()
}
