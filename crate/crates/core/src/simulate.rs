//! State-space simulation of a discretized network driven by given noise.

use crate::error::{Error, Result};
use crate::model::DiscreteModel;
use crate::noise::{gen_noise, NoiseSpec};
use crate::panel::TimeSeriesPanel;

pub const DEFAULT_BURN_IN: usize = 10_000;

/// Runs the realization from a zero state over all noise samples and drops
/// the first `burn_in` outputs.
pub fn simulate(m: &DiscreteModel, noise: &TimeSeriesPanel, burn_in: usize) -> Result<TimeSeriesPanel> {
    if !m.check_stability() {
        return Err(Error::Unstable { radius: m.spectral_radius() });
    }
    let n = m.n();
    if noise.n() != n {
        return Err(Error::Invalid(format!("noise has {} channels, model has {n} nodes", noise.n())));
    }
    let total = noise.len();
    if total <= burn_in {
        return Err(Error::InsufficientSamples { needed: burn_in + 1, got: total });
    }
    let (ad, bd, cd, dd) = m.realization();
    let ns = m.state_dim();
    // Row-major copies keep the inner loop on contiguous slices.
    let row_major = |mat: &nalgebra::DMatrix<f64>| -> Vec<f64> {
        (0..mat.nrows())
            .flat_map(|r| (0..mat.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| mat[(r, c)])
            .collect()
    };
    let (ad, bd, cd, dd) = (row_major(ad), row_major(bd), row_major(cd), row_major(dd));
    let mut state = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    let mut p = vec![0.0; n];
    let keep = total - burn_in;
    let mut out = vec![Vec::with_capacity(keep); n];
    for k in 0..total {
        for (i, pi) in p.iter_mut().enumerate() {
            *pi = noise.channel(i)[k];
        }
        if k >= burn_in {
            for (i, ch) in out.iter_mut().enumerate() {
                let x = dot(&cd[i * ns..(i + 1) * ns], &state) + dot(&dd[i * n..(i + 1) * n], &p);
                ch.push(x);
            }
        }
        for (r, nr) in next.iter_mut().enumerate() {
            *nr = dot(&ad[r * ns..(r + 1) * ns], &state) + dot(&bd[r * n..(r + 1) * n], &p);
        }
        std::mem::swap(&mut state, &mut next);
    }
    TimeSeriesPanel::new(m.dt(), out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Generates `t + burn_in` noise samples and simulates, returning `t` samples.
pub fn simulate_with_noise(m: &DiscreteModel, noise: &NoiseSpec, t: usize, burn_in: usize) -> Result<TimeSeriesPanel> {
    if !m.check_stability() {
        return Err(Error::Unstable { radius: m.spectral_radius() });
    }
    let p = gen_noise(noise, t + burn_in, m.n())?;
    simulate(m, &p, burn_in)
}
