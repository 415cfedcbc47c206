//! Error-versus-sample-count sweeps across methods.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fixtures::Fixture;
use crate::glasso::{
    empirical_covariance, glasso_sign_pruned_topology, glasso_topology, graphical_lasso, GlassoOptions, PrecisionEstimate,
    DEFAULT_EPSILON,
};
use crate::graph::{relative_error, EdgeSet};
use crate::inference::{learn_topology, InferenceParams, InferenceReport};
use crate::panel::{detrend, TimeSeriesPanel};

/// Default graphical-lasso weight used by the baselines.
pub const DEFAULT_RHO_GL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dynamic,
    DynamicGroupLasso,
    Glasso,
    GlassoSign,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Dynamic, Method::DynamicGroupLasso, Method::Glasso, Method::GlassoSign];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dynamic => "dynamic",
            Method::DynamicGroupLasso => "dynamic-gl",
            Method::Glasso => "glasso",
            Method::GlassoSign => "glasso-sign",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepParams {
    pub inference: InferenceParams,
    /// Group-lasso weight for [`Method::DynamicGroupLasso`].
    pub gamma: f64,
    pub rho_gl: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            inference: InferenceParams::default(),
            gamma: 0.0,
            rho_gl: DEFAULT_RHO_GL,
            epsilon: DEFAULT_EPSILON,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub t: usize,
    pub relative_error: f64,
    /// Fraction of pre-pruning false positives removed by pruning; `None`
    /// when there is no pruning step or nothing to prune.
    pub pruning_effectiveness: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// `method,T,relative_error,pruning_effectiveness`; `NA` marks a
    /// missing effectiveness.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,T,relative_error,pruning_effectiveness\n");
        for r in &self.rows {
            let eff = r.pruning_effectiveness.map_or("NA".to_string(), |v| format!("{v}"));
            writeln!(out, "{},{},{},{}", r.method.name(), r.t, r.relative_error, eff).unwrap();
        }
        out
    }
}

/// Fraction of `before`'s false positives absent from `after`.
pub fn pruning_effectiveness(before: &EdgeSet, after: &EdgeSet, truth: &EdgeSet) -> Option<f64> {
    let fp = before.difference(truth);
    if fp.is_empty() {
        return None;
    }
    Some(fp.difference(after).len() as f64 / fp.len() as f64)
}

/// Fraction of strict-spouse false positives of the moral estimate that
/// pruning removed.
pub fn spouse_pruning_effectiveness(report: &InferenceReport, fixture: &Fixture) -> Option<f64> {
    let spouse_fp = report.moral_edges.intersection(&fixture.strict_spouses);
    if spouse_fp.is_empty() {
        return None;
    }
    Some(spouse_fp.difference(&report.topology_edges).len() as f64 / spouse_fp.len() as f64)
}

/// Seed of the panel simulated for `t` samples under base seed `seed`.
pub fn derive_seed(seed: u64, t: usize) -> u64 {
    splitmix64(seed ^ splitmix64(t as u64))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Static baselines on one panel: `(glasso edges, sign-pruned edges)`.
///
/// The glasso runs on the correlation matrix so that `rho_gl` and
/// `epsilon` do not depend on the units of the channels.
pub fn baseline_topologies(panel: &TimeSeriesPanel, rho_gl: f64, epsilon: f64) -> Result<(EdgeSet, EdgeSet)> {
    let est = baseline_precision(panel, rho_gl)?;
    Ok((glasso_topology(&est, epsilon), glasso_sign_pruned_topology(&est, epsilon)))
}

/// Glasso precision estimate of the detrended, standardized panel.
pub fn baseline_precision(panel: &TimeSeriesPanel, rho_gl: f64) -> Result<PrecisionEstimate> {
    let s = correlation_matrix(&empirical_covariance(&detrend(panel)?)?)?;
    graphical_lasso(&s, rho_gl, &GlassoOptions::default())
}

/// `D^-1/2 S D^-1/2` with `D = diag(S)`.
pub fn correlation_matrix(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d: Vec<f64> = s.diagonal().iter().map(|&v| v.sqrt()).collect();
    if let Some(k) = d.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Singular(format!("channel {} has zero variance", k + 1)));
    }
    Ok(DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)] / (d[i] * d[j])))
}

/// For each count, simulates one panel shared by every method and scores
/// each method against the fixture topology.
pub fn run_sweep(fixture: &Fixture, counts: &[usize], methods: &[Method], params: &SweepParams) -> Result<SweepResult> {
    if counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("sample counts must be strictly ascending".into()));
    }
    let mut result = SweepResult::default();
    if methods.is_empty() {
        return Ok(result);
    }
    for &t in counts {
        let panel = fixture.simulate(t, derive_seed(params.seed, t))?;
        let mut baselines = None;
        for &method in methods {
            let (estimate, effectiveness) = match method {
                Method::Dynamic | Method::DynamicGroupLasso => {
                    let gamma = if method == Method::Dynamic { 0.0 } else { params.gamma };
                    let ip = InferenceParams { gamma, ..params.inference.clone() };
                    let rep = learn_topology(&panel, &ip)?;
                    let eff = pruning_effectiveness(&rep.moral_edges, &rep.topology_edges, &fixture.truth);
                    (rep.topology_edges, eff)
                }
                Method::Glasso | Method::GlassoSign => {
                    if baselines.is_none() {
                        baselines = Some(baseline_topologies(&panel, params.rho_gl, params.epsilon)?);
                    }
                    let (plain, signed) = baselines.clone().unwrap();
                    if method == Method::Glasso {
                        (plain, None)
                    } else {
                        let eff = pruning_effectiveness(&plain, &signed, &fixture.truth);
                        (signed, eff)
                    }
                }
            };
            result.rows.push(SweepRow {
                method,
                t,
                relative_error: relative_error(&estimate, &fixture.truth)?,
                pruning_effectiveness: effectiveness,
            });
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::make_fixture;

    #[test]
    fn empty_methods_give_empty_result() {
        let f = make_fixture("pair-2").unwrap();
        let r = run_sweep(&f, &[1000], &[], &SweepParams::default()).unwrap();
        assert!(r.rows.is_empty());
        assert_eq!(r.to_csv(), "method,T,relative_error,pruning_effectiveness\n");
    }

    #[test]
    fn counts_must_ascend() {
        let f = make_fixture("pair-2").unwrap();
        assert!(run_sweep(&f, &[2000, 1000], &[Method::Dynamic], &SweepParams::default()).is_err());
    }

    #[test]
    fn effectiveness_counts_removed_false_positives() {
        let truth = EdgeSet::from_pairs([(0, 1), (1, 2)]).unwrap();
        let before = EdgeSet::from_pairs([(0, 1), (1, 2), (0, 2), (2, 3)]).unwrap();
        let after = EdgeSet::from_pairs([(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(pruning_effectiveness(&before, &after, &truth), Some(0.5));
        assert_eq!(pruning_effectiveness(&truth, &truth, &truth), None);
    }

    #[test]
    fn sweep_is_reproducible() {
        let f = make_fixture("pair-2").unwrap();
        let p = SweepParams::default();
        let a = run_sweep(&f, &[2000, 4000], &Method::ALL, &p).unwrap();
        let b = run_sweep(&f, &[2000, 4000], &Method::ALL, &p).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.rows.len(), 8);
        assert_ne!(derive_seed(1, 2000), derive_seed(1, 4000));
    }
}
