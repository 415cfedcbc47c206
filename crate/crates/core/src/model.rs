//! Physical network models and their bilinear discretization.

use nalgebra::{Complex, DMatrix};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::GenerativeGraph;

/// Largest admissible spectral radius of the discrete state matrix.
pub const STABILITY_LIMIT: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    Consensus,
    RcThermal,
    Swing,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Consensus => "consensus",
            ModelFamily::RcThermal => "rc-thermal",
            ModelFamily::Swing => "swing",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "consensus" => Ok(ModelFamily::Consensus),
            "rc-thermal" => Ok(ModelFamily::RcThermal),
            "swing" => Ok(ModelFamily::Swing),
            other => Err(Error::Invalid(format!("unknown model family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeParams {
    Consensus,
    RcThermal { capacitance: Vec<f64> },
    Swing { inertia: Vec<f64>, damping: Vec<f64> },
}

impl NodeParams {
    pub fn family(&self) -> ModelFamily {
        match self {
            NodeParams::Consensus => ModelFamily::Consensus,
            NodeParams::RcThermal { .. } => ModelFamily::RcThermal,
            NodeParams::Swing { .. } => ModelFamily::Swing,
        }
    }
}

/// Continuous-time physical description of a network.
///
/// `coupling` holds `c_ij` (consensus), `1/R_ij` (rc-thermal) or line
/// susceptances (swing). `anchor[i]` couples node `i` to a fixed reference
/// (ambient temperature, a grounded bus, a leader at zero); it is what makes
/// the networks asymptotically stable rather than marginally so.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalModelSpec {
    pub coupling: DMatrix<f64>,
    pub anchor: Vec<f64>,
    pub params: NodeParams,
}

impl PhysicalModelSpec {
    pub fn n(&self) -> usize {
        self.coupling.nrows()
    }

    pub fn family(&self) -> ModelFamily {
        self.params.family()
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.coupling;
        let n = c.nrows();
        if c.ncols() != n || n == 0 {
            return Err(Error::Invalid("coupling matrix must be square and nonempty".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let v = c[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Invalid(format!(
                        "coupling[{}][{}] = {v} must be finite and nonnegative",
                        i + 1,
                        j + 1
                    )));
                }
                let w = c[(j, i)];
                if (v - w).abs() > 1e-12 * v.abs().max(w.abs()) {
                    return Err(Error::Invalid(format!(
                        "coupling is not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
            if c[(i, i)] != 0.0 {
                return Err(Error::Invalid(format!("nonzero self-coupling at node {}", i + 1)));
            }
        }
        check_len("anchor", &self.anchor, n)?;
        if self.anchor.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::Invalid("anchor gains must be finite and nonnegative".into()));
        }
        match &self.params {
            NodeParams::Consensus => {}
            NodeParams::RcThermal { capacitance } => check_positive("capacitance", capacitance, n)?,
            NodeParams::Swing { inertia, damping } => {
                check_positive("inertia", inertia, n)?;
                check_positive("damping", damping, n)?;
            }
        }
        Ok(())
    }

    /// Generative graph: per-node derivative coefficients
    /// `[a_0, a_1, ...]` and gains `b_ij`.
    pub fn generative_graph(&self) -> Result<GenerativeGraph> {
        self.validate()?;
        let n = self.n();
        let (b, dynamics) = match &self.params {
            NodeParams::Consensus => (
                self.coupling.clone(),
                self.anchor.iter().map(|&g| vec![g, 1.0]).collect(),
            ),
            NodeParams::RcThermal { capacitance } => {
                let mut b = self.coupling.clone();
                for i in 0..n {
                    b.row_mut(i).scale_mut(1.0 / capacitance[i]);
                }
                let dynamics = (0..n).map(|i| vec![self.anchor[i] / capacitance[i], 1.0]).collect();
                (b, dynamics)
            }
            NodeParams::Swing { inertia, damping } => (
                self.coupling.clone(),
                (0..n).map(|i| vec![self.anchor[i], damping[i], inertia[i]]).collect(),
            ),
        };
        GenerativeGraph::new(b, dynamics)
    }
}

fn check_len(name: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Invalid(format!("{name}: expected {n} values, got {}", v.len())));
    }
    Ok(())
}

fn check_positive(name: &str, v: &[f64], n: usize) -> Result<()> {
    check_len(name, v, n)?;
    if v.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return Err(Error::Invalid(format!("{name} must be strictly positive")));
    }
    Ok(())
}

/// Bilinear-discretized network.
///
/// Node `i` obeys `S_i(z) X_i = sum_j b_ij X_j + P_i` with
/// `S_i(z) = sum_m a_{m,i} s(z)^m + sum_j b_ij`, `s(z) = (2/dt)(1 - z^-1)/(1 + z^-1)`.
/// The state-space realization reproduces exactly this transfer matrix.
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    graph: GenerativeGraph,
    dt: f64,
    family: Option<ModelFamily>,
    a_c: DMatrix<f64>,
    ad: DMatrix<f64>,
    bd: DMatrix<f64>,
    cd: DMatrix<f64>,
    dd: DMatrix<f64>,
}

pub fn build_model(spec: &PhysicalModelSpec, dt: f64) -> Result<DiscreteModel> {
    let graph = spec.generative_graph()?;
    let mut model = DiscreteModel::from_graph(graph, dt)?;
    model.family = Some(spec.family());
    Ok(model)
}

impl DiscreteModel {
    /// Discretizes an arbitrary generative graph. Every node needs a
    /// positive leading derivative coefficient.
    pub fn from_graph(graph: GenerativeGraph, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Invalid(format!("sampling interval must be positive, got {dt}")));
        }
        let n = graph.n();
        let orders: Vec<usize> = (0..n)
            .map(|i| {
                let a = graph.node_dynamics(i);
                match a.iter().rposition(|&v| v != 0.0) {
                    Some(l) if l >= 1 && a[l] > 0.0 => Ok(l),
                    _ => Err(Error::Invalid(format!(
                        "node {} needs a positive leading derivative coefficient",
                        i + 1
                    ))),
                }
            })
            .collect::<Result<_>>()?;
        let offsets: Vec<usize> = orders
            .iter()
            .scan(0, |acc, &l| {
                let o = *acc;
                *acc += l;
                Some(o)
            })
            .collect();
        let ns: usize = orders.iter().sum();

        // States per node: x_i, x_i', ..., x_i^(l-1).
        let mut a_c = DMatrix::zeros(ns, ns);
        let mut b_c = DMatrix::zeros(ns, n);
        let mut c_c = DMatrix::zeros(n, ns);
        for i in 0..n {
            let (o, l) = (offsets[i], orders[i]);
            let a = graph.node_dynamics(i);
            let lead = a[l];
            for m in 0..l - 1 {
                a_c[(o + m, o + m + 1)] = 1.0;
            }
            let top = o + l - 1;
            let degree: f64 = graph.b().row(i).sum();
            for m in 0..l {
                a_c[(top, o + m)] -= a[m] / lead;
            }
            a_c[(top, o)] -= degree / lead;
            for j in 0..n {
                let bij = graph.gain(i, j);
                if bij > 0.0 {
                    a_c[(top, offsets[j])] += bij / lead;
                }
            }
            b_c[(top, i)] = 1.0 / lead;
            c_c[(i, o)] = 1.0;
        }

        let half = 0.5 * dt;
        let eye = DMatrix::<f64>::identity(ns, ns);
        let ima = &eye - &a_c * half;
        let lu = ima.clone().lu();
        let ad = lu
            .solve(&(&eye + &a_c * half))
            .ok_or_else(|| Error::Singular("I - A dt/2 is singular".into()))?;
        let bd = lu
            .solve(&(&b_c * dt))
            .ok_or_else(|| Error::Singular("I - A dt/2 is singular".into()))?;
        let ima_t_inv_ct = ima
            .transpose()
            .lu()
            .solve(&c_c.transpose())
            .ok_or_else(|| Error::Singular("I - A dt/2 is singular".into()))?;
        let cd = ima_t_inv_ct.transpose();
        let dd = &cd * &b_c * half;
        Ok(Self {
            graph,
            dt,
            family: None,
            a_c,
            ad,
            bd,
            cd,
            dd,
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn family(&self) -> Option<ModelFamily> {
        self.family
    }

    pub fn graph(&self) -> &GenerativeGraph {
        &self.graph
    }

    pub fn gain(&self, i: usize, j: usize) -> f64 {
        self.graph.gain(i, j)
    }

    pub fn state_dim(&self) -> usize {
        self.ad.nrows()
    }

    pub fn continuous_state_matrix(&self) -> &DMatrix<f64> {
        &self.a_c
    }

    /// Discrete realization `(A_d, B_d, C_d, D_d)`:
    /// `s(k+1) = A_d s(k) + B_d p(k)`, `x(k) = C_d s(k) + D_d p(k)`.
    pub fn realization(&self) -> (&DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>) {
        (&self.ad, &self.bd, &self.cd, &self.dd)
    }

    /// Coefficients of `S_i` as a polynomial in `s`, ascending powers.
    pub fn s_polynomial(&self, i: usize) -> Vec<f64> {
        let mut p = self.graph.node_dynamics(i).to_vec();
        let l = p.iter().rposition(|&v| v != 0.0).unwrap_or(0);
        p.truncate(l + 1);
        p[0] += self.graph.b().row(i).sum();
        p
    }

    /// `S_i` as `num(q) / den(q)` in `q = z^-1`, ascending powers of `q`.
    pub fn s_rational(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        let s = self.s_polynomial(i);
        let l = s.len() - 1;
        let k = 2.0 / self.dt;
        let mut num = vec![0.0; l + 1];
        for (m, &cm) in s.iter().enumerate() {
            let term = poly_mul(&poly_pow(&[1.0, -1.0], m), &poly_pow(&[1.0, 1.0], l - m));
            for (slot, t) in num.iter_mut().zip(term) {
                *slot += cm * k.powi(m as i32) * t;
            }
        }
        (num, poly_pow(&[1.0, 1.0], l))
    }

    /// Bilinear variable on the unit circle, `s(e^{j w}) = (2/dt) j tan(w/2)`.
    pub fn s_at(&self, omega: f64) -> Complex<f64> {
        Complex::new(0.0, 2.0 / self.dt * (0.5 * omega).tan())
    }

    /// `S_i(e^{j w})`.
    pub fn s_operator(&self, i: usize, omega: f64) -> Complex<f64> {
        let s = self.s_at(omega);
        let mut acc = Complex::new(0.0, 0.0);
        for &c in self.s_polynomial(i).iter().rev() {
            acc = acc * s + c;
        }
        acc
    }

    /// `H_ij(e^{j w}) = b_ij / S_i(e^{j w})`.
    pub fn transfer(&self, i: usize, j: usize, omega: f64) -> Complex<f64> {
        let bij = self.graph.gain(i, j);
        if bij == 0.0 {
            return Complex::new(0.0, 0.0);
        }
        Complex::new(bij, 0.0) / self.s_operator(i, omega)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.ad
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn check_stability(&self) -> bool {
        self.spectral_radius() <= STABILITY_LIMIT
    }

    /// SHA-256 of the discretized parameters (`dt`, gains, node dynamics).
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.dt.to_le_bytes());
        h.update((self.n() as u64).to_le_bytes());
        for v in self.graph.b().iter() {
            h.update(v.to_le_bytes());
        }
        for i in 0..self.n() {
            let a = self.graph.node_dynamics(i);
            h.update((a.len() as u64).to_le_bytes());
            for v in a {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_pow(p: &[f64], k: usize) -> Vec<f64> {
    (0..k).fold(vec![1.0], |acc, _| poly_mul(&acc, p))
}
