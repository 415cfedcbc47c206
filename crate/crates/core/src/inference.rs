//! Moral-graph learning from Wiener-filter magnitudes and phase-based
//! pruning of spouse edges.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::EdgeSet;
use crate::group_lasso::group_lasso_from_moments;
use crate::panel::{detrend, TimeSeriesPanel};
use crate::wiener::{fit_wiener_fir_from_moments, freq_response, phase, FilterBank, FrequencyGrid, LaggedMoments, DEFAULT_LAG};

pub const DEFAULT_RHO: f64 = 1e-3;
/// Magnitude threshold for nearly noise-free data.
pub const LOW_NOISE_RHO: f64 = 1e-5;
pub const DEFAULT_TAU: f64 = 0.2 * PI;

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceParams {
    pub rho: f64,
    pub tau: f64,
    pub grid: FrequencyGrid,
    pub f: usize,
    pub gamma: f64,
    pub detrend: bool,
}

impl Default for InferenceParams {
    fn default() -> Self {
        Self {
            rho: DEFAULT_RHO,
            tau: DEFAULT_TAU,
            grid: FrequencyGrid::default(),
            f: DEFAULT_LAG,
            gamma: 0.0,
            detrend: true,
        }
    }
}

impl InferenceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Invalid(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.tau > 0.0 && self.tau < PI / 2.0) {
            return Err(Error::Invalid(format!("tau must lie in (0, pi/2), got {}", self.tau)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Invalid(format!("gamma must be nonnegative, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Frequency responses of every ordered pair: `get(j, i)` is `W_ji` on the
/// grid, empty for `i == j`.
#[derive(Debug, Clone)]
pub struct ResponseSet {
    n: usize,
    w: Vec<Vec<Vec<Complex<f64>>>>,
}

impl ResponseSet {
    /// From `[j][i][grid point]` arrays (the oracle layout).
    pub fn from_nested(w: Vec<Vec<Vec<Complex<f64>>>>) -> Self {
        let n = w.len();
        let w = w
            .into_iter()
            .enumerate()
            .map(|(j, mut rows)| {
                rows[j].clear();
                rows
            })
            .collect();
        Self { n, w }
    }

    /// One bank per target, in target order.
    pub fn from_banks(banks: &[FilterBank], grid: &FrequencyGrid) -> Result<Self> {
        let n = banks.len();
        let mut w = vec![vec![Vec::new(); n]; n];
        for (j, bank) in banks.iter().enumerate() {
            if bank.target != j {
                return Err(Error::Invalid(format!("missing filter bank for node {}", j + 1)));
            }
            for (&i, resp) in bank.sources.iter().zip(freq_response(bank, grid)) {
                if i >= n {
                    return Err(Error::NodeOutOfRange { node: i, n });
                }
                w[j][i] = resp;
            }
            if (0..n).any(|i| i != j && w[j][i].is_empty()) {
                return Err(Error::Invalid(format!("bank of node {} lacks a source", j + 1)));
            }
        }
        Ok(Self { n, w })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, j: usize, i: usize) -> &[Complex<f64>] {
        &self.w[j][i]
    }

    pub fn stats(&self, j: usize, i: usize) -> PairStats {
        let resp = self.get(j, i);
        let abs_phase = resp.iter().map(|z| phase(*z).abs());
        PairStats {
            j,
            i,
            sup_mag: resp.iter().map(|z| z.norm()).fold(0.0, f64::max),
            min_absphase: abs_phase.clone().fold(f64::INFINITY, f64::min),
            max_absphase: abs_phase.fold(0.0, f64::max),
        }
    }

    pub fn all_stats(&self) -> Vec<PairStats> {
        (0..self.n)
            .flat_map(|j| (0..self.n).filter(move |&i| i != j).map(move |i| (j, i)))
            .map(|(j, i)| self.stats(j, i))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStats {
    pub j: usize,
    pub i: usize,
    pub sup_mag: f64,
    pub min_absphase: f64,
    pub max_absphase: f64,
}

/// Edge `{i, j}` iff `sup |W_ji| > rho` in either direction.
pub fn moral_from_responses(r: &ResponseSet, rho: f64) -> EdgeSet {
    let mut edges = EdgeSet::new();
    for j in 0..r.n() {
        for i in j + 1..r.n() {
            if r.stats(j, i).sup_mag > rho || r.stats(i, j).sup_mag > rho {
                edges.insert(i, j);
            }
        }
    }
    edges
}

/// Removes `{i, j}` iff every direction passing the magnitude test has
/// `|angle W| >= pi - tau` at every grid point.
pub fn prune_from_responses(edges: &EdgeSet, r: &ResponseSet, rho: f64, tau: f64) -> EdgeSet {
    edges
        .iter()
        .filter(|&(a, b)| {
            let passing: Vec<PairStats> = [r.stats(a, b), r.stats(b, a)]
                .into_iter()
                .filter(|s| s.sup_mag > rho)
                .collect();
            passing.is_empty() || passing.iter().any(|s| s.min_absphase < PI - tau)
        })
        .collect()
}

pub fn learn_moral_graph(banks: &[FilterBank], params: &InferenceParams) -> Result<EdgeSet> {
    params.validate()?;
    Ok(moral_from_responses(&ResponseSet::from_banks(banks, &params.grid)?, params.rho))
}

pub fn prune_spouse_edges(edges: &EdgeSet, banks: &[FilterBank], params: &InferenceParams) -> Result<EdgeSet> {
    params.validate()?;
    let r = ResponseSet::from_banks(banks, &params.grid)?;
    Ok(prune_from_responses(edges, &r, params.rho, params.tau))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceReport {
    pub params: InferenceParams,
    pub moral_edges: EdgeSet,
    pub topology_edges: EdgeSet,
    pub pair_stats: Vec<PairStats>,
    pub warnings: Vec<String>,
}

/// Both stages applied to a response set.
pub fn infer_from_responses(r: &ResponseSet, params: &InferenceParams) -> Result<InferenceReport> {
    params.validate()?;
    let moral_edges = moral_from_responses(r, params.rho);
    let topology_edges = prune_from_responses(&moral_edges, r, params.rho, params.tau);
    Ok(InferenceReport {
        params: params.clone(),
        moral_edges,
        topology_edges,
        pair_stats: r.all_stats(),
        warnings: Vec::new(),
    })
}

/// Full pipeline: detrend, fit every filter bank, learn and prune.
pub fn learn_topology(panel: &TimeSeriesPanel, params: &InferenceParams) -> Result<InferenceReport> {
    let (report, _) = learn_topology_with_banks(panel, params)?;
    Ok(report)
}

/// As [`learn_topology`], also returning the fitted banks.
pub fn learn_topology_with_banks(panel: &TimeSeriesPanel, params: &InferenceParams) -> Result<(InferenceReport, Vec<FilterBank>)> {
    params.validate()?;
    let mut channels = if params.detrend {
        detrend(panel)?.into_channels()
    } else {
        panel.channels().to_vec()
    };
    let mut warnings = Vec::new();
    for (i, (c, raw)) in channels.iter_mut().zip(panel.channels()).enumerate() {
        let scale = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if c.iter().all(|v| v.abs() <= 1e-12 * (1.0 + scale)) {
            c.iter_mut().for_each(|v| *v = 0.0);
            warnings.push(format!("node {} has a constant channel and is reported isolated", i + 1));
        }
    }
    let panel = TimeSeriesPanel::new(panel.dt(), channels)?;
    let moments = LaggedMoments::from_panel(&panel, params.f)?;
    let banks = fit_all(&moments, params.gamma)?;
    let responses = ResponseSet::from_banks(&banks, &params.grid)?;
    let mut report = infer_from_responses(&responses, params)?;
    report.warnings = warnings;
    Ok((report, banks))
}

/// Fits every target, in parallel, with group lasso when `gamma > 0`.
pub fn fit_all(moments: &LaggedMoments, gamma: f64) -> Result<Vec<FilterBank>> {
    (0..moments.n())
        .into_par_iter()
        .map(|j| {
            if gamma > 0.0 {
                group_lasso_from_moments(moments, j, gamma).map(|fit| fit.bank)
            } else {
                fit_wiener_fir_from_moments(moments, j)
            }
        })
        .collect()
}

impl InferenceReport {
    /// Sectioned text: `[params]`, `[moral-edges]`, `[topology-edges]`,
    /// `[pair-stats]`. Edge and pair ids are 1-based.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = String::from("[params]\n");
        writeln!(out, "rho = {}", p.rho).unwrap();
        writeln!(out, "tau = {}", p.tau).unwrap();
        writeln!(out, "lag_f = {}", p.f).unwrap();
        writeln!(out, "gamma = {}", p.gamma).unwrap();
        writeln!(out, "detrend = {}", p.detrend).unwrap();
        let grid: Vec<String> = p.grid.points().iter().map(|w| w.to_string()).collect();
        writeln!(out, "grid = {}", grid.join(" ")).unwrap();
        out.push_str("\n[moral-edges]\n");
        out.push_str(&self.moral_edges.to_edge_list());
        out.push_str("\n[topology-edges]\n");
        out.push_str(&self.topology_edges.to_edge_list());
        out.push_str("\n[pair-stats]\nj,i,sup_mag,min_absphase,max_absphase\n");
        for s in &self.pair_stats {
            writeln!(out, "{},{},{:e},{:e},{:e}", s.j + 1, s.i + 1, s.sup_mag, s.min_absphase, s.max_absphase).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut section = "";
        let mut params = InferenceParams::default();
        let (mut moral, mut topo) = (String::new(), String::new());
        let mut stats = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |msg: String| Error::Parse { line: k + 1, msg };
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = match line {
                    "[params]" | "[moral-edges]" | "[topology-edges]" | "[pair-stats]" => &line[1..line.len() - 1],
                    other => return Err(err(format!("unknown section {other}"))),
                };
                continue;
            }
            match section {
                "params" => {
                    let (key, value) = line
                        .split_once('=')
                        .map(|(a, b)| (a.trim(), b.trim()))
                        .ok_or_else(|| err("expected `key = value`".into()))?;
                    let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("bad value for {key}")));
                    match key {
                        "rho" => params.rho = num(value)?,
                        "tau" => params.tau = num(value)?,
                        "gamma" => params.gamma = num(value)?,
                        "lag_f" => params.f = value.parse().map_err(|_| err("bad lag_f".into()))?,
                        "detrend" => params.detrend = value.parse().map_err(|_| err("bad detrend".into()))?,
                        "grid" => {
                            let pts = value.split_whitespace().map(num).collect::<Result<Vec<f64>>>()?;
                            params.grid = FrequencyGrid::new(pts).map_err(|e| err(e.to_string()))?;
                        }
                        other => return Err(err(format!("unknown key {other}"))),
                    }
                }
                "moral-edges" => writeln!(moral, "{line}").unwrap(),
                "topology-edges" => writeln!(topo, "{line}").unwrap(),
                "pair-stats" => {
                    if line.starts_with("j,") {
                        continue;
                    }
                    let f: Vec<&str> = line.split(',').collect();
                    if f.len() != 5 {
                        return Err(err("pair-stats rows have five fields".into()));
                    }
                    let id = |s: &str| -> Result<usize> {
                        match s.parse::<usize>() {
                            Ok(v) if v > 0 => Ok(v - 1),
                            _ => Err(err(format!("bad node id `{s}`"))),
                        }
                    };
                    let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
                    stats.push(PairStats {
                        j: id(f[0])?,
                        i: id(f[1])?,
                        sup_mag: num(f[2])?,
                        min_absphase: num(f[3])?,
                        max_absphase: num(f[4])?,
                    });
                }
                _ => return Err(err("content outside a section".into())),
            }
        }
        Ok(Self {
            params,
            moral_edges: EdgeSet::parse_edge_list(&moral)?,
            topology_edges: EdgeSet::parse_edge_list(&topo)?,
            pair_stats: stats,
            warnings: Vec::new(),
        })
    }
}
