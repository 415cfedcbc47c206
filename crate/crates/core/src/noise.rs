//! Exogenous forcing: white or AR(1)-colored Gaussian noise per node.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    Ar1,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Ar1 => "ar1",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(NoiseKind::White),
            "ar1" => Ok(NoiseKind::Ar1),
            other => Err(Error::Invalid(format!("unknown noise kind `{other}`"))),
        }
    }
}

/// Per-node noise description. `variance[i]` is the innovation variance
/// of `w_i`, and channel `i` is `p_i(k) = ar[i] p_i(k-1) + w_i(k)`; for
/// white noise `ar` is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub variance: Vec<f64>,
    pub ar: Vec<f64>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn white(n: usize, variance: f64, seed: u64) -> Self {
        Self { kind: NoiseKind::White, variance: vec![variance; n], ar: vec![0.0; n], seed }
    }

    pub fn ar1(n: usize, variance: f64, a: f64, seed: u64) -> Self {
        Self { kind: NoiseKind::Ar1, variance: vec![variance; n], ar: vec![a; n], seed }
    }

    pub fn n(&self) -> usize {
        self.variance.len()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// AR coefficients actually in effect (zero for white noise).
    pub fn effective_ar(&self) -> Vec<f64> {
        match self.kind {
            NoiseKind::White => vec![0.0; self.n()],
            NoiseKind::Ar1 => self.ar.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ar.len() != self.variance.len() {
            return Err(Error::Invalid("noise variance and AR lists differ in length".into()));
        }
        if self.variance.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Invalid("noise variances must be positive".into()));
        }
        if self.ar.iter().any(|a| !(a.abs() < 1.0)) {
            return Err(Error::Invalid("AR coefficients must satisfy |a| < 1".into()));
        }
        Ok(())
    }
}

/// Generates `t` samples of `n` independent channels. Channel `i` draws
/// from its own ChaCha stream, so channels do not depend on each other or
/// on `n`. AR(1) channels start in their stationary distribution.
pub fn gen_noise(spec: &NoiseSpec, t: usize, n: usize) -> Result<TimeSeriesPanel> {
    spec.validate()?;
    if spec.n() != n {
        return Err(Error::Invalid(format!("noise spec covers {} channels, asked for {n}", spec.n())));
    }
    if t == 0 {
        return Err(Error::Invalid("noise length must be positive".into()));
    }
    let ar = spec.effective_ar();
    let channels = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            let sd = spec.variance[i].sqrt();
            let a = ar[i];
            let mut out = Vec::with_capacity(t);
            let z: f64 = rng.sample(StandardNormal);
            let mut prev = z * sd / (1.0 - a * a).sqrt();
            out.push(prev);
            for _ in 1..t {
                let w: f64 = rng.sample(StandardNormal);
                prev = a * prev + sd * w;
                out.push(prev);
            }
            out
        })
        .collect();
    TimeSeriesPanel::new(1.0, channels)
}

/// Power spectral densities of the exogenous inputs,
/// `Phi_i(w) = variance_i / |1 - a_i e^{-jw}|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePsdSet {
    variance: Vec<f64>,
    ar: Vec<f64>,
}

impl NoisePsdSet {
    pub fn new(variance: Vec<f64>, ar: Vec<f64>) -> Result<Self> {
        let spec = NoiseSpec { kind: NoiseKind::Ar1, variance, ar, seed: 0 };
        spec.validate()?;
        Ok(Self { variance: spec.variance, ar: spec.ar })
    }

    pub fn from_spec(spec: &NoiseSpec) -> Result<Self> {
        spec.validate()?;
        Self::new(spec.variance.clone(), spec.effective_ar())
    }

    pub fn n(&self) -> usize {
        self.variance.len()
    }

    pub fn eval(&self, i: usize, omega: f64) -> f64 {
        let a = self.ar[i];
        self.variance[i] / (1.0 - 2.0 * a * omega.cos() + a * a)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.variance.iter().map(|v| v * c).collect(), self.ar.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lag1_autocorr(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let v: f64 = x.iter().map(|a| (a - m).powi(2)).sum();
        let c: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        c / v
    }

    #[test]
    fn white_noise_is_uncorrelated_in_time() {
        let p = gen_noise(&NoiseSpec::white(1, 1.0, 11), 100_000, 1).unwrap();
        assert!(lag1_autocorr(p.channel(0)).abs() < 0.02);
    }

    #[test]
    fn ar1_lag_one_autocorrelation_is_pole() {
        let p = gen_noise(&NoiseSpec::ar1(1, 1.0, 0.5, 11), 100_000, 1).unwrap();
        assert!((lag1_autocorr(p.channel(0)) - 0.5).abs() < 0.02);
    }

    #[test]
    fn same_seed_same_panel() {
        let s = NoiseSpec::ar1(3, 2.0, 0.3, 99);
        assert_eq!(gen_noise(&s, 500, 3).unwrap(), gen_noise(&s, 500, 3).unwrap());
        let other = gen_noise(&s.clone().with_seed(100), 500, 3).unwrap();
        assert_ne!(gen_noise(&s, 500, 3).unwrap(), other);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(gen_noise(&NoiseSpec::ar1(1, 1.0, 1.0, 0), 10, 1).is_err());
        assert!(gen_noise(&NoiseSpec::white(1, 0.0, 0), 10, 1).is_err());
        assert!(gen_noise(&NoiseSpec::white(2, 1.0, 0), 10, 3).is_err());
    }

    #[test]
    fn psd_closed_form() {
        let psd = NoisePsdSet::new(vec![1.0, 2.0], vec![0.0, 0.5]).unwrap();
        assert_eq!(psd.eval(0, 1.3), 1.0);
        assert!((psd.eval(1, 0.0) - 2.0 / 0.25).abs() < 1e-12);
        assert!((psd.eval(1, std::f64::consts::PI) - 2.0 / 2.25).abs() < 1e-12);
    }
}
