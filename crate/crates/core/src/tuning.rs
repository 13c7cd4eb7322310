//! Observer gain design and the finite-time convergence certificates.
//!
//! Gains are indexed by the *estimated* agent: `omega_l`, `theta_l` and
//! `pi_l` act on every estimate of agent `l`, whoever holds it, and are
//! tuned from `M_l` (the coupling among the estimators of `l`).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Inequality, Result};
use crate::graph::{KHopNetwork, ObserverCoupling};
use crate::linalg::{kron, spectral_norm, sym_eig, Matrix, SymMatrix};
use crate::tol;

/// Componentwise piecewise-linear map with constant extrapolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() < 2 || x.len() != y.len() {
            return Err(Error::InvalidConfig(
                "table needs at least two (x, y) points of equal length".into(),
            ));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("table x must be strictly increasing".into()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("table entries must be finite".into()));
        }
        Ok(Self { x, y })
    }

    pub fn eval(&self, v: f64) -> f64 {
        let (xs, ys) = (&self.x, &self.y);
        if v <= xs[0] {
            return ys[0];
        }
        if v >= xs[xs.len() - 1] {
            return ys[ys.len() - 1];
        }
        let k = xs.partition_point(|&x| x <= v) - 1;
        let w = (v - xs[k]) / (xs[k + 1] - xs[k]);
        ys[k] + w * (ys[k + 1] - ys[k])
    }

    /// Largest segment slope.
    pub fn lipschitz(&self) -> f64 {
        self.x
            .windows(2)
            .zip(self.y.windows(2))
            .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0])).abs())
            .fold(0.0, f64::max)
    }
}

pub type CustomMap = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// The per-agent nonlinearity `f: R^N -> R^N`.
#[derive(Clone)]
pub enum Nonlinearity {
    Zero,
    /// `f(x)_c = clamp(x_c, -limit, limit)`, Lipschitz constant 1.
    Saturation { limit: f64 },
    /// Same table applied to every component.
    Table(PiecewiseLinear),
    Custom { map: CustomMap, lipschitz: f64 },
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Zero => f.write_str("Zero"),
            Nonlinearity::Saturation { limit } => write!(f, "Saturation {{ limit: {limit} }}"),
            Nonlinearity::Table(t) => write!(f, "Table({} points)", t.x.len()),
            Nonlinearity::Custom { lipschitz, .. } => {
                write!(f, "Custom {{ lipschitz: {lipschitz} }}")
            }
        }
    }
}

impl Nonlinearity {
    pub fn is_zero(&self) -> bool {
        matches!(self, Nonlinearity::Zero)
    }

    /// Overwrites `out` with `f(x)`.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Nonlinearity::Zero => out.fill(0.0),
            Nonlinearity::Saturation { limit } => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = v.clamp(-limit, *limit);
                }
            }
            Nonlinearity::Table(t) => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = t.eval(v);
                }
            }
            Nonlinearity::Custom { map, .. } => map(x, out),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Saturation { .. } => 1.0,
            Nonlinearity::Table(t) => t.lipschitz(),
            Nonlinearity::Custom { lipschitz, .. } => *lipschitz,
        }
    }
}

/// Agent dynamics `x' = f(x) + A x + u`.
#[derive(Clone, Debug)]
pub struct PlantModel {
    pub a: Matrix,
    pub f: Nonlinearity,
    pub lipschitz: f64,
}

impl PlantModel {
    pub fn new(a: Matrix, f: Nonlinearity) -> Result<Self> {
        if !a.is_square() || a.rows() == 0 {
            return Err(Error::InvalidConfig("drift matrix A must be square".into()));
        }
        if !a.is_finite() {
            return Err(Error::InvalidConfig("drift matrix A must be finite".into()));
        }
        let lipschitz = f.lipschitz();
        if !(lipschitz >= 0.0) {
            return Err(Error::InvalidConfig("Lipschitz constant must be >= 0".into()));
        }
        Ok(Self { a, f, lipschitz })
    }

    /// Single integrator `x' = u` in `N` dimensions.
    pub fn single_integrator(state_dim: usize) -> Self {
        Self::new(Matrix::zeros(state_dim, state_dim), Nonlinearity::Zero)
            .expect("zero drift is valid")
    }

    /// Declares a Lipschitz constant other than the nonlinearity's own.
    pub fn with_lipschitz(mut self, lipschitz: f64) -> Result<Self> {
        if !(lipschitz >= 0.0) || !lipschitz.is_finite() {
            return Err(Error::InvalidConfig("Lipschitz constant must be >= 0".into()));
        }
        self.lipschitz = lipschitz;
        Ok(self)
    }

    #[inline]
    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    /// Overwrites `out` with `f(x) + A x`.
    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        self.f.eval(x, out);
        self.a.mul_vec_add(x, out);
    }
}

/// Known bounds on inputs and on input-estimation errors, per agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSet {
    /// `d_u_i >= ||u_i||`
    pub d_u: Option<Vec<f64>>,
    /// `d_udot_i >= ||u_i'||`
    pub d_udot: Option<Vec<f64>>,
    /// `d_tilde_u_i >= ||u~_i||`, stacked over the estimators of `i`.
    pub d_tilde_u: Vec<f64>,
}

impl BoundSet {
    pub fn new(d_u: Option<Vec<f64>>, d_udot: Option<Vec<f64>>, d_tilde_u: Vec<f64>) -> Result<Self> {
        if d_u.is_none() && d_udot.is_none() {
            return Err(Error::InvalidConfig(
                "at least one of d_u or d_udot must be declared".into(),
            ));
        }
        let n = d_tilde_u.len();
        for v in [&d_u, &d_udot].into_iter().flatten() {
            if v.len() != n {
                return Err(Error::DimensionError {
                    expected: n,
                    got: v.len(),
                });
            }
        }
        let all = d_tilde_u
            .iter()
            .chain(d_u.iter().flatten())
            .chain(d_udot.iter().flatten());
        for &v in all {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("bound {v} must be finite and >= 0")));
            }
        }
        Ok(Self {
            d_u,
            d_udot,
            d_tilde_u,
        })
    }

    /// Uniform bounds for `n` agents.
    pub fn uniform(n: usize, d_u: Option<f64>, d_udot: Option<f64>, d_tilde_u: f64) -> Result<Self> {
        Self::new(
            d_u.map(|v| vec![v; n]),
            d_udot.map(|v| vec![v; n]),
            vec![d_tilde_u; n],
        )
    }

    /// `sqrt(eta_i) * (d_u_i + max |u^(0)|)`: bounds the stacked error of
    /// `eta_i` estimates of an input bounded by `d_u_i`.
    pub fn conservative_d_tilde_u(eta: usize, d_u: f64, max_initial_estimate: f64) -> f64 {
        (eta as f64).sqrt() * (d_u + max_initial_estimate)
    }

    pub fn d_udot(&self, agent: usize) -> Option<f64> {
        self.d_udot.as_ref().map(|v| v[agent])
    }
}

/// Picks `G = g I_N` satisfying `G^T A + A^T G - 2 G^T G < 0`, or checks a
/// user-supplied scale.
pub fn design_g(plant: &PlantModel, g_scale: Option<f64>) -> Result<SymMatrix> {
    let n = plant.state_dim();
    let sym_a = plant.a.symmetric_part()?;
    let g = match g_scale {
        Some(g) => g,
        None => (sym_eig(&sym_a)?.max() + 1.0).max(tol::MIN_DESIGN_SCALE),
    };
    let design = SymMatrix::scaled_identity(n, g);
    check_design_matrix(plant, &design)?;
    Ok(design)
}

/// Largest eigenvalue of the symmetric part of `G^T A + A^T G - 2 G^T G`;
/// errors unless it is negative.
pub fn check_design_matrix(plant: &PlantModel, g: &SymMatrix) -> Result<f64> {
    if g.dim() != plant.state_dim() {
        return Err(Error::DimensionError {
            expected: plant.state_dim(),
            got: g.dim(),
        });
    }
    let gt = g.transpose();
    let ga = gt.matmul(&plant.a)?;
    let cond = ga
        .add(&ga.transpose())?
        .sub(&gt.matmul(g)?.scaled(2.0))?
        .symmetric_part()?;
    let lambda_max = sym_eig(&cond)?.max();
    if lambda_max < -tol::POSITIVE_DEFINITE {
        Ok(lambda_max)
    } else {
        Err(Error::GainConditionViolated { lambda_max })
    }
}

/// Spectral facts about `G` used by every bound.
#[derive(Clone, Copy, Debug)]
struct DesignSpectrum {
    min: f64,
    max: f64,
    /// `lambda_min(G^T G)`
    gram_min: f64,
    norm: f64,
}

fn design_spectrum(g: &SymMatrix) -> Result<DesignSpectrum> {
    let eig = sym_eig(g)?;
    let gram = g.transpose().matmul(g)?.symmetric_part()?;
    Ok(DesignSpectrum {
        min: eig.min(),
        max: eig.max(),
        gram_min: sym_eig(&gram)?.min(),
        norm: spectral_norm(g)?,
    })
}

fn ensure_pd(coupling: &ObserverCoupling) -> Result<()> {
    if coupling.lambda_min() <= tol::POSITIVE_DEFINITE {
        return Err(Error::CouplingNotPd {
            agent: coupling.agent,
            lambda_min: coupling.lambda_min(),
        });
    }
    Ok(())
}

/// Smallest admissible `omega_i` (exact equality allowed).
pub fn omega_threshold(coupling: &ObserverCoupling, plant: &PlantModel, g: &SymMatrix) -> Result<f64> {
    ensure_pd(coupling)?;
    let spec = design_spectrum(g)?;
    let lmin = coupling.lambda_min();
    // ||M ⊗ G|| = ||M|| ||G||
    let coupled_norm = coupling.lambda_max() * spec.norm;
    Ok((1.0 / lmin) * (1.0 + plant.lipschitz * coupled_norm / (lmin * spec.gram_min)))
}

pub fn tune_omega(coupling: &ObserverCoupling, plant: &PlantModel, g: &SymMatrix) -> Result<f64> {
    omega_threshold(coupling, plant, g)
}

/// Bound that `theta_i` must strictly exceed.
pub fn theta_bound(coupling: &ObserverCoupling, g: &SymMatrix, d_tilde_u: f64) -> Result<f64> {
    ensure_pd(coupling)?;
    let spec = design_spectrum(g)?;
    Ok(coupling.lambda_max() * spec.max / (coupling.lambda_min() * spec.min) * d_tilde_u)
}

pub fn tune_theta(coupling: &ObserverCoupling, g: &SymMatrix, d_tilde_u: f64, slack: f64) -> Result<f64> {
    if !(d_tilde_u >= 0.0) {
        return Err(Error::InvalidConfig("d_tilde_u must be >= 0".into()));
    }
    check_slack(slack)?;
    Ok(theta_bound(coupling, g, d_tilde_u)? + slack)
}

/// Bound that `pi_i` must strictly exceed.
pub fn pi_bound(coupling: &ObserverCoupling, d_udot: f64) -> Result<f64> {
    ensure_pd(coupling)?;
    let eta = coupling.dim() as f64;
    Ok(coupling.lambda_max() / coupling.lambda_min() * eta.sqrt() * d_udot)
}

pub fn tune_pi(coupling: &ObserverCoupling, d_udot: f64, slack: f64) -> Result<f64> {
    if !(d_udot >= 0.0) {
        return Err(Error::InvalidConfig("d_udot must be >= 0".into()));
    }
    check_slack(slack)?;
    Ok(pi_bound(coupling, d_udot)? + slack)
}

fn check_slack(slack: f64) -> Result<()> {
    if slack > 0.0 && slack.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("slack must be positive, got {slack}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainConditionCheck {
    pub holds: bool,
    /// Largest eigenvalue of the symmetrized test matrix.
    pub lambda_max: f64,
}

/// Assembles `(M ⊗ G)(I ⊗ A - omega (M ⊗ G)) + l_f ||M ⊗ G|| I`, and reports
/// whether its symmetric part is negative definite.
pub fn verify_gain_condition(
    coupling: &ObserverCoupling,
    plant: &PlantModel,
    g: &SymMatrix,
    omega: f64,
) -> Result<GainConditionCheck> {
    let eta = coupling.dim();
    let mg = kron(coupling.m.matrix(), g.matrix());
    let block_a = kron(&Matrix::identity(eta), &plant.a);
    let inner = block_a.sub(&mg.scaled(omega))?;
    let mg_norm = spectral_norm(&mg)?;
    let test = mg
        .matmul(&inner)?
        .add(&Matrix::identity(mg.rows()).scaled(plant.lipschitz * mg_norm))?;
    let lambda_max = sym_eig(&test.symmetric_part()?)?.max();
    Ok(GainConditionCheck {
        holds: lambda_max < 0.0,
        lambda_max,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentGains {
    pub omega: f64,
    pub theta: f64,
    pub pi: f64,
}

/// Distance of each gain from its bound (positive = satisfied).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainMargins {
    pub omega: f64,
    pub theta: f64,
    /// `None` when no input-derivative bound was declared.
    pub pi: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct GainSet {
    pub g: SymMatrix,
    /// Indexed by estimated agent; `None` where nobody estimates the agent.
    pub agents: Vec<Option<AgentGains>>,
    pub margins: Vec<Option<GainMargins>>,
}

impl GainSet {
    pub fn omega(&self, l: usize) -> f64 {
        self.agents[l].map_or(0.0, |a| a.omega)
    }

    pub fn theta(&self, l: usize) -> f64 {
        self.agents[l].map_or(0.0, |a| a.theta)
    }

    pub fn pi(&self, l: usize) -> f64 {
        self.agents[l].map_or(0.0, |a| a.pi)
    }

    /// Scalar `g` when `G = g I`.
    pub fn scalar_g(&self) -> Option<f64> {
        let g0 = self.g[(0, 0)];
        let scalar = (0..self.g.dim()).all(|r| {
            (0..self.g.dim()).all(|c| self.g[(r, c)] == if r == c { g0 } else { 0.0 })
        });
        scalar.then_some(g0)
    }

    /// Recomputes margins against `bounds`, e.g. after overrides.
    pub fn refresh_margins(&mut self, net: &KHopNetwork, plant: &PlantModel, bounds: &BoundSet) -> Result<()> {
        for (l, coupling) in net.couplings.iter().enumerate() {
            self.margins[l] = match (coupling, self.agents[l]) {
                (Some(c), Some(gains)) => Some(margins_for(c, plant, &self.g, bounds, l, &gains)?),
                _ => None,
            };
        }
        Ok(())
    }
}

fn margins_for(
    c: &ObserverCoupling,
    plant: &PlantModel,
    g: &SymMatrix,
    bounds: &BoundSet,
    l: usize,
    gains: &AgentGains,
) -> Result<GainMargins> {
    Ok(GainMargins {
        omega: gains.omega - omega_threshold(c, plant, g)?,
        theta: gains.theta - theta_bound(c, g, bounds.d_tilde_u[l])?,
        pi: match bounds.d_udot(l) {
            Some(d) => Some(gains.pi - pi_bound(c, d)?),
            None => None,
        },
    })
}

#[derive(Clone, Debug)]
pub struct TuningOptions {
    /// Scalar `g` for `G = g I`; chosen automatically when absent.
    pub g_scale: Option<f64>,
    /// Full design matrix; takes precedence over `g_scale`.
    pub design_matrix: Option<SymMatrix>,
    /// Added to the strict theta and pi bounds.
    pub slack: f64,
    /// Added to the (non-strict) omega bound.
    pub omega_slack: f64,
}

impl Default for TuningOptions {
    fn default() -> Self {
        Self {
            g_scale: None,
            design_matrix: None,
            slack: tol::DEFAULT_SLACK,
            omega_slack: 0.0,
        }
    }
}

/// Tunes `G` and every agent's `(omega, theta, pi)`.
///
/// Without an input-derivative bound the input observer cannot be
/// certified; `pi` then defaults to the slack.
pub fn tune_network(
    net: &KHopNetwork,
    plant: &PlantModel,
    bounds: &BoundSet,
    opts: &TuningOptions,
) -> Result<GainSet> {
    if bounds.d_tilde_u.len() != net.n() {
        return Err(Error::DimensionError {
            expected: net.n(),
            got: bounds.d_tilde_u.len(),
        });
    }
    let g = match &opts.design_matrix {
        Some(g) => {
            check_design_matrix(plant, g)?;
            g.clone()
        }
        None => design_g(plant, opts.g_scale)?,
    };
    let mut agents = Vec::with_capacity(net.n());
    let mut margins = Vec::with_capacity(net.n());
    for (l, coupling) in net.couplings.iter().enumerate() {
        let Some(c) = coupling else {
            agents.push(None);
            margins.push(None);
            continue;
        };
        let gains = AgentGains {
            omega: tune_omega(c, plant, &g)? + opts.omega_slack,
            theta: tune_theta(c, &g, bounds.d_tilde_u[l], opts.slack)?,
            pi: match bounds.d_udot(l) {
                Some(d) => tune_pi(c, d, opts.slack)?,
                None => opts.slack,
            },
        };
        margins.push(Some(margins_for(c, plant, &g, bounds, l, &gains)?));
        agents.push(Some(gains));
    }
    Ok(GainSet { g, agents, margins })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentCertificate {
    pub phi: f64,
    /// `None` without an input-derivative bound.
    pub psi: Option<f64>,
    /// Bound on the state-estimation convergence time; `None` if `phi <= 0`.
    pub t_x: Option<f64>,
    /// Bound on the input-estimation convergence time; `None` if `psi <= 0`
    /// or unknown.
    pub t_u: Option<f64>,
}

/// `phi`, `psi` and the time bounds for one estimated agent. Returns
/// `CertificateInfeasible` when a margin is not positive.
#[allow(clippy::too_many_arguments)]
pub fn certificate(
    coupling: &ObserverCoupling,
    g: &SymMatrix,
    gains: &AgentGains,
    d_tilde_u: f64,
    d_udot: Option<f64>,
    x_err0: f64,
    u_err0: f64,
) -> Result<AgentCertificate> {
    let cert = certificate_values(coupling, g, gains, d_tilde_u, d_udot, x_err0, u_err0)?;
    if cert.phi <= 0.0 {
        return Err(Error::CertificateInfeasible {
            agent: coupling.agent,
            inequality: Inequality::Theta,
            margin: cert.phi,
        });
    }
    if let Some(psi) = cert.psi {
        if psi <= 0.0 {
            return Err(Error::CertificateInfeasible {
                agent: coupling.agent,
                inequality: Inequality::Pi,
                margin: psi,
            });
        }
    }
    Ok(cert)
}

/// Same as [`certificate`] without the feasibility check.
pub fn certificate_values(
    coupling: &ObserverCoupling,
    g: &SymMatrix,
    gains: &AgentGains,
    d_tilde_u: f64,
    d_udot: Option<f64>,
    x_err0: f64,
    u_err0: f64,
) -> Result<AgentCertificate> {
    let spec = design_spectrum(g)?;
    let (lmin, lmax) = (coupling.lambda_min(), coupling.lambda_max());
    let eta = coupling.dim() as f64;
    let phi = gains.theta * lmin * spec.min - lmax * spec.norm * d_tilde_u;
    // ||M ⊗ I_N|| = lambda_max(M) for symmetric PSD M
    let psi = d_udot.map(|d| gains.pi * lmin - lmax * eta.sqrt() * d);
    let t_x = (phi > 0.0).then(|| lmax * spec.max / phi * x_err0);
    let t_u = psi.filter(|&p| p > 0.0).map(|p| lmax / p * u_err0);
    Ok(AgentCertificate { phi, psi, t_x, t_u })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// 1-based agent number.
    pub agent: usize,
    pub inequality: Inequality,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCertificate {
    pub agents: Vec<Option<AgentCertificate>>,
    pub t_x: Option<f64>,
    pub t_u: Option<f64>,
    pub t_xu: Option<f64>,
    pub violations: Vec<Violation>,
}

impl ConvergenceCertificate {
    pub fn feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Certificates for every estimated agent. `x_err0[l]`, `u_err0[l]` are the
/// initial norms of the stacked estimation errors of agent `l`.
pub fn network_certificate(
    net: &KHopNetwork,
    plant: &PlantModel,
    gains: &GainSet,
    bounds: &BoundSet,
    x_err0: &[f64],
    u_err0: &[f64],
) -> Result<ConvergenceCertificate> {
    let mut agents = Vec::with_capacity(net.n());
    let mut violations = Vec::new();
    let (mut t_x, mut t_u) = (Some(0.0_f64), Some(0.0_f64));
    for (l, coupling) in net.couplings.iter().enumerate() {
        let (Some(c), Some(gain)) = (coupling, gains.agents[l]) else {
            agents.push(None);
            continue;
        };
        let check = verify_gain_condition(c, plant, &gains.g, gain.omega)?;
        if !check.holds {
            violations.push(Violation {
                agent: l + 1,
                inequality: Inequality::Omega,
                margin: -check.lambda_max,
            });
        }
        let cert = certificate_values(
            c,
            &gains.g,
            &gain,
            bounds.d_tilde_u[l],
            bounds.d_udot(l),
            x_err0[l],
            u_err0[l],
        )?;
        if cert.phi <= 0.0 {
            violations.push(Violation {
                agent: l + 1,
                inequality: Inequality::Theta,
                margin: cert.phi,
            });
        }
        if let Some(psi) = cert.psi.filter(|&p| p <= 0.0) {
            violations.push(Violation {
                agent: l + 1,
                inequality: Inequality::Pi,
                margin: psi,
            });
        }
        t_x = t_x.zip(cert.t_x).map(|(a, b)| a.max(b));
        t_u = t_u.zip(cert.t_u).map(|(a, b)| a.max(b));
        agents.push(Some(cert));
    }
    Ok(ConvergenceCertificate {
        agents,
        t_x,
        t_u,
        t_xu: t_x.zip(t_u).map(|(a, b)| a + b),
        violations,
    })
}
