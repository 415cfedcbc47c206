//! FIR non-causal Wiener filters estimated by lagged least squares.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;

pub const DEFAULT_LAG: usize = 20;
pub const DEFAULT_GRID_POINTS: usize = 50;
/// Ridge added to the normal equations, relative to their mean diagonal.
pub const RIDGE: f64 = 1e-8;

/// Sorted distinct frequencies in `[0, pi]`, always containing 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    points: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.first() != Some(&0.0) {
            return Err(Error::Invalid("frequency grid must start at 0".into()));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Invalid("frequency grid must be strictly increasing".into()));
        }
        if points.iter().any(|&w| !(0.0..=PI).contains(&w)) {
            return Err(Error::Invalid("frequencies must lie in [0, pi]".into()));
        }
        Ok(Self { points })
    }

    /// `m` evenly spaced points from 0 to `pi (1 - 1/m)`.
    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Invalid("frequency grid needs at least one point".into()));
        }
        let top = PI * (1.0 - 1.0 / m as f64);
        let step = if m > 1 { top / (m - 1) as f64 } else { 0.0 };
        Self::new((0..m).map(|k| k as f64 * step).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self::uniform(DEFAULT_GRID_POINTS).unwrap()
    }
}

/// FIR Wiener filters estimating `x_j` from every other channel.
/// `coeffs[k]` holds lags `-F..=F` of source `sources[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub target: usize,
    pub f: usize,
    pub gamma: f64,
    pub sources: Vec<usize>,
    pub coeffs: Vec<Vec<f64>>,
}

impl FilterBank {
    pub fn zeros(n: usize, target: usize, f: usize, gamma: f64) -> Self {
        let sources: Vec<usize> = (0..n).filter(|&i| i != target).collect();
        let coeffs = vec![vec![0.0; 2 * f + 1]; sources.len()];
        Self { target, f, gamma, sources, coeffs }
    }

    pub fn coeff(&self, source: usize) -> Option<&[f64]> {
        self.sources
            .iter()
            .position(|&s| s == source)
            .map(|k| self.coeffs[k].as_slice())
    }

    /// Tap at lag `l` (`-F..=F`) of `source`.
    pub fn tap(&self, source: usize, l: isize) -> Option<f64> {
        let c = self.coeff(source)?;
        c.get((l + self.f as isize) as usize).copied()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.len() != self.coeffs.len() {
            return Err(Error::Invalid("filter bank source/coefficient mismatch".into()));
        }
        for c in &self.coeffs {
            if c.len() != 2 * self.f + 1 || c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid("filter taps must be 2F+1 finite values".into()));
            }
        }
        Ok(())
    }
}

/// `sum_L h^L e^{-j w L}` for taps at lags `-F..=F`.
pub fn fir_response(taps: &[f64], omega: f64) -> Complex<f64> {
    let f = (taps.len() / 2) as f64;
    taps.iter()
        .enumerate()
        .map(|(k, &h)| Complex::from_polar(h, -omega * (k as f64 - f)))
        .sum()
}

/// Responses of every filter in the bank; `out[k][g]` is source
/// `bank.sources[k]` at grid point `g`.
pub fn freq_response(bank: &FilterBank, grid: &FrequencyGrid) -> Vec<Vec<Complex<f64>>> {
    bank.coeffs
        .iter()
        .map(|taps| grid.points().iter().map(|&w| fir_response(taps, w)).collect())
        .collect()
}

/// Principal-value phase in `(-pi, pi]`.
pub fn phase(z: Complex<f64>) -> f64 {
    let a = z.arg();
    if a == -PI {
        PI
    } else {
        a
    }
}

/// Lagged second moments of a whole panel:
/// `gram[(a,L1),(b,L2)] = sum_{k=F}^{T-1-F} x_a(k-L1) x_b(k-L2)`.
/// Shared by all targets, so one pass over the data serves every fit.
#[derive(Debug, Clone)]
pub struct LaggedMoments {
    n: usize,
    f: usize,
    rows: usize,
    gram: DMatrix<f64>,
}

impl LaggedMoments {
    pub fn from_panel(panel: &TimeSeriesPanel, f: usize) -> Result<Self> {
        let n = panel.n();
        let t = panel.len();
        let w = 2 * f + 1;
        let needed = ((n.saturating_sub(1)) * w + 2 * f + 1).max(4 * f + 1);
        if t < needed {
            return Err(Error::InsufficientSamples { needed, got: t });
        }
        let x = panel.channels();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();
        let blocks: Vec<Vec<f64>> = pairs
            .par_iter()
            .map(|&(a, b)| pair_block(&x[a], &x[b], f))
            .collect();
        let mut gram = DMatrix::zeros(n * w, n * w);
        for (&(a, b), block) in pairs.iter().zip(&blocks) {
            for l1 in 0..w {
                for l2 in 0..w {
                    let v = block[l1 * w + l2];
                    gram[(a * w + l1, b * w + l2)] = v;
                    gram[(b * w + l2, a * w + l1)] = v;
                }
            }
        }
        Ok(Self { n, f, rows: t - 2 * f, gram })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> usize {
        self.f
    }

    /// Number of regression rows, `T - 2F`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn index(&self, channel: usize, lag: isize) -> usize {
        channel * (2 * self.f + 1) + (lag + self.f as isize) as usize
    }

    /// Normal equations for target `j`: `(A, c, y'y)` with `A` the source
    /// Gram matrix and `c` the source/target cross moments, both unscaled.
    pub fn normal_equations(&self, j: usize) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
        if j >= self.n {
            return Err(Error::NodeOutOfRange { node: j, n: self.n });
        }
        let idx: Vec<usize> = (0..self.n)
            .filter(|&i| i != j)
            .flat_map(|i| (-(self.f as isize)..=self.f as isize).map(move |l| (i, l)))
            .map(|(i, l)| self.index(i, l))
            .collect();
        let tj = self.index(j, 0);
        let a = DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.gram[(idx[r], idx[c])]);
        let c = DVector::from_fn(idx.len(), |r, _| self.gram[(idx[r], tj)]);
        Ok((a, c, self.gram[(tj, tj)]))
    }
}

// Moments of one channel pair for all lag pairs (L1, L2), row-major in
// (L1 + F, L2 + F). Each entry is a central dot product over the sample
// range common to every lag plus two short edge corrections.
fn pair_block(xa: &[f64], xb: &[f64], f: usize) -> Vec<f64> {
    let t = xa.len() as isize;
    let fi = f as isize;
    let w = 2 * f + 1;
    let (lo, hi) = (2 * fi, t - 1 - 2 * fi);
    let central: Vec<f64> = (-2 * fi..=2 * fi)
        .map(|d| {
            let (s, e) = ((lo + d) as usize, (hi + d) as usize);
            dot(&xa[s..=e], &xb[lo as usize..=hi as usize])
        })
        .collect();
    let edge = |d: isize, from: isize, to: isize| -> f64 {
        (from..=to).map(|m| xa[(m + d) as usize] * xb[m as usize]).sum()
    };
    let mut out = vec![0.0; w * w];
    for l1 in -fi..=fi {
        for l2 in -fi..=fi {
            let d = l2 - l1;
            let v = central[(d + 2 * fi) as usize]
                + edge(d, fi - l2, lo - 1)
                + edge(d, hi + 1, t - 1 - fi - l2);
            out[((l1 + fi) as usize) * w + (l2 + fi) as usize] = v;
        }
    }
    out
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    acc.iter().sum::<f64>() + tail
}

/// Least-squares FIR Wiener filter for target `j` from precomputed moments.
pub fn fit_wiener_fir_from_moments(m: &LaggedMoments, j: usize) -> Result<FilterBank> {
    let (mut a, c, _) = m.normal_equations(j)?;
    let dim = a.nrows();
    let mut bank = FilterBank::zeros(m.n(), j, m.f(), 0.0);
    if dim == 0 {
        return Ok(bank);
    }
    let trace = a.trace();
    if trace <= 0.0 {
        return Ok(bank);
    }
    let ridge = RIDGE * trace / dim as f64;
    for k in 0..dim {
        a[(k, k)] += ridge;
    }
    let h = a
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("normal equations for node {} are not positive definite", j + 1)))?
        .solve(&c);
    unpack(&mut bank, h.as_slice());
    Ok(bank)
}

pub(crate) fn unpack(bank: &mut FilterBank, h: &[f64]) {
    let w = 2 * bank.f + 1;
    for (k, taps) in bank.coeffs.iter_mut().enumerate() {
        taps.copy_from_slice(&h[k * w..(k + 1) * w]);
    }
}

/// Fits the FIR Wiener filter of half-width `f` predicting channel `j`.
pub fn fit_wiener_fir(panel: &TimeSeriesPanel, j: usize, f: usize) -> Result<FilterBank> {
    if j >= panel.n() {
        return Err(Error::NodeOutOfRange { node: j, n: panel.n() });
    }
    fit_wiener_fir_from_moments(&LaggedMoments::from_panel(panel, f)?, j)
}

/// Text form: per bank a `target <j> F <F> gamma <g>` line, then one line
/// per source with its id and `2F+1` taps in lag order `-F..F`. Banks are
/// separated by blank lines; node ids are 1-based.
pub fn write_filter_banks(banks: &[FilterBank]) -> String {
    let mut out = String::new();
    for (k, b) in banks.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        writeln!(out, "target {} F {} gamma {}", b.target + 1, b.f, b.gamma).unwrap();
        for (s, taps) in b.sources.iter().zip(&b.coeffs) {
            write!(out, "{}", s + 1).unwrap();
            for v in taps {
                write!(out, " {v:.16e}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

pub fn parse_filter_banks(text: &str) -> Result<Vec<FilterBank>> {
    let mut banks: Vec<FilterBank> = Vec::new();
    let mut current: Option<FilterBank> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let err = |msg: &str| Error::Parse { line: k + 1, msg: msg.to_string() };
        if line.is_empty() {
            banks.extend(current.take());
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] == "target" {
            banks.extend(current.take());
            if fields.len() != 6 || fields[2] != "F" || fields[4] != "gamma" {
                return Err(err("expected `target <j> F <F> gamma <g>`"));
            }
            let target: usize = fields[1].parse().map_err(|_| err("bad target id"))?;
            let f: usize = fields[3].parse().map_err(|_| err("bad F"))?;
            let gamma: f64 = fields[5].parse().map_err(|_| err("bad gamma"))?;
            if target == 0 {
                return Err(err("node ids are 1-based"));
            }
            current = Some(FilterBank { target: target - 1, f, gamma, sources: vec![], coeffs: vec![] });
            continue;
        }
        let bank = current.as_mut().ok_or_else(|| err("coefficients before a target line"))?;
        let source: usize = fields[0].parse().map_err(|_| err("bad source id"))?;
        if source == 0 {
            return Err(err("node ids are 1-based"));
        }
        let taps = fields[1..]
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| err("bad coefficient")))
            .collect::<Result<Vec<f64>>>()?;
        if taps.len() != 2 * bank.f + 1 {
            return Err(err("wrong number of taps"));
        }
        bank.sources.push(source - 1);
        bank.coeffs.push(taps);
    }
    banks.extend(current);
    Ok(banks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white(t: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..t).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn default_grid() {
        let g = FrequencyGrid::default();
        assert_eq!(g.len(), 50);
        assert_eq!(g.points()[0], 0.0);
        assert!((g.points()[49] - 0.98 * PI).abs() < 1e-15);
        assert!(FrequencyGrid::new(vec![0.1, 0.2]).is_err());
        assert!(FrequencyGrid::new(vec![0.0, 0.2, 0.2]).is_err());
        assert!(FrequencyGrid::new(vec![0.0, 4.0]).is_err());
    }

    #[test]
    fn response_examples() {
        let grid = FrequencyGrid::uniform(7).unwrap();
        for &w in grid.points() {
            let id = fir_response(&[0.0, 1.0, 0.0], w);
            assert!((id - Complex::new(1.0, 0.0)).norm() < 1e-15);
            let delay = fir_response(&[0.0, 0.0, 1.0], w);
            assert!((delay - Complex::from_polar(1.0, -w)).norm() < 1e-15);
            let avg = fir_response(&[0.5, 0.0, 0.5], w);
            assert!((avg - Complex::new(w.cos(), 0.0)).norm() < 1e-15);
        }
        assert_eq!(phase(Complex::new(-1.0, -0.0)), PI);
    }

    // Direct evaluation of the moment definition.
    #[test]
    fn lagged_moments_match_brute_force() {
        let x = vec![white(60, 1), white(60, 2), white(60, 3)];
        let panel = TimeSeriesPanel::new(1.0, x.clone()).unwrap();
        let f = 3;
        let m = LaggedMoments::from_panel(&panel, f).unwrap();
        let fi = f as isize;
        for a in 0..3 {
            for b in 0..3 {
                for l1 in -fi..=fi {
                    for l2 in -fi..=fi {
                        let want: f64 = (fi..60 - fi)
                            .map(|k| x[a][(k - l1) as usize] * x[b][(k - l2) as usize])
                            .sum();
                        let got = m.gram()[(m.index(a, l1), m.index(b, l2))];
                        assert!((got - want).abs() < 1e-10, "{a} {b} {l1} {l2}");
                    }
                }
            }
        }
    }

    #[test]
    fn zero_target_gives_zero_filter() {
        let panel = TimeSeriesPanel::new(1.0, vec![white(500, 1), vec![0.0; 500]]).unwrap();
        let bank = fit_wiener_fir(&panel, 1, 4).unwrap();
        assert!(bank.coeffs.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn recovers_static_gain() {
        let x1 = white(1_000_000, 4);
        let e = white(1_000_000, 5);
        let x2: Vec<f64> = x1.iter().zip(&e).map(|(a, b)| 0.5 * a + 0.1 * b).collect();
        let panel = TimeSeriesPanel::new(1.0, vec![x1, x2]).unwrap();
        let bank = fit_wiener_fir(&panel, 1, 3).unwrap();
        assert!((bank.tap(0, 0).unwrap() - 0.5).abs() < 1e-3);
        for l in [-3, -2, -1, 1, 2, 3] {
            assert!(bank.tap(0, l).unwrap().abs() < 1e-3);
        }
    }

    #[test]
    fn too_few_samples() {
        let panel = TimeSeriesPanel::new(1.0, vec![white(20, 1), white(20, 2), white(20, 3)]).unwrap();
        assert!(matches!(fit_wiener_fir(&panel, 0, 4), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn serialization_round_trip() {
        let bank = FilterBank {
            target: 1,
            f: 1,
            gamma: 0.25,
            sources: vec![0, 2],
            coeffs: vec![vec![1.0, -2.5e-9, 1.0 / 3.0], vec![0.0, 7.0, -1e10]],
        };
        let text = write_filter_banks(&[bank.clone(), FilterBank::zeros(3, 0, 1, 0.0)]);
        assert!(text.starts_with("target 2 F 1 gamma 0.25\n1 "));
        let back = parse_filter_banks(&text).unwrap();
        assert_eq!(back, vec![bank, FilterBank::zeros(3, 0, 1, 0.0)]);
        assert!(parse_filter_banks("1 0 0 0\n").is_err());
        assert!(parse_filter_banks("target 1 F 1 gamma 0\n2 0 0\n").is_err());
    }
}
