//! Fixed-step closed-loop simulation of agents, controllers and observers.
//!
//! One round at time `t_k`: every agent shares its true state and estimates,
//! controllers evaluate `u_i(t_k)`, the full messages (now including inputs)
//! feed the observers, and the whole network advances by one explicit Euler
//! step. All exchanges happen at the same instant.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{Graph, KHopNeighborhood, KHopNetwork};
use crate::linalg::Matrix;
use crate::observer::{observer_derivative, NeighborMessage, ObserverDerivative, ObserverState, SignMode};
use crate::tol;
use crate::tuning::{GainSet, PlantModel};

/// What agent `i` can see when it computes its input.
#[derive(Clone, Debug)]
pub struct AgentView<'a> {
    pub agent: usize,
    pub t: f64,
    pub state_dim: usize,
    pub own: &'a [f64],
    /// `(j, x_j)` for each 1-hop neighbor.
    pub neighbors: Vec<(usize, &'a [f64])>,
    pub nb: &'a KHopNeighborhood,
    pub x_hat: &'a [f64],
}

impl<'a> AgentView<'a> {
    pub fn neighbor_state(&self, j: usize) -> Option<&'a [f64]> {
        self.neighbors.iter().find(|(id, _)| *id == j).map(|(_, v)| *v)
    }

    pub fn estimate(&self, l: usize) -> Option<&'a [f64]> {
        let n = self.state_dim;
        self.nb.position(l).map(|p| &self.x_hat[p * n..(p + 1) * n])
    }
}

/// A distributed feedback `u_i = q_i(t, x_i, {x_j}, x^i)`.
pub trait FeedbackLaw: Send + Sync {
    fn control(&self, view: &AgentView<'_>, out: &mut [f64]) -> Result<()>;
}

/// `u_i = K x_i`.
#[derive(Clone, Debug)]
pub struct LocalLinear {
    pub gain: Matrix,
}

impl FeedbackLaw for LocalLinear {
    fn control(&self, view: &AgentView<'_>, out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        self.gain.mul_vec_add(view.own, out);
        Ok(())
    }
}

#[derive(Clone)]
pub enum Controller {
    Zero,
    /// Consensus over a target graph whose non-communication edges are
    /// bridged by the state estimates.
    KhopConsensus { target: Graph },
    Generic(Arc<dyn FeedbackLaw>),
}

impl fmt::Debug for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Controller::Zero => f.write_str("Zero"),
            Controller::KhopConsensus { target } => {
                write!(f, "KhopConsensus {{ target: {:?} }}", target.edges())
            }
            Controller::Generic(_) => f.write_str("Generic"),
        }
    }
}

impl Controller {
    /// Every target edge missing from the communication graph must point at
    /// a k-hop member, otherwise the agent has no estimate to use.
    pub fn validate(&self, net: &KHopNetwork) -> Result<()> {
        let Controller::KhopConsensus { target } = self else {
            return Ok(());
        };
        if target.n() != net.n() {
            return Err(Error::InvalidConfig(format!(
                "target graph has {} agents, communication graph has {}",
                target.n(),
                net.n()
            )));
        }
        for i in 0..net.n() {
            for &j in target.neighbors(i) {
                if !net.graph.has_edge(i, j) && !net.neighborhoods[i].contains(j) {
                    return Err(Error::InvalidConfig(format!(
                        "target edge {}-{} needs agent {} to estimate agent {}, which is outside its {}-hop set",
                        i + 1,
                        j + 1,
                        i + 1,
                        j + 1,
                        net.k
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn control(&self, view: &AgentView<'_>, out: &mut [f64]) -> Result<()> {
        match self {
            Controller::Zero => {
                out.fill(0.0);
                Ok(())
            }
            Controller::KhopConsensus { target } => consensus_control(view, target, out),
            Controller::Generic(law) => law.control(view, out),
        }
    }
}

/// `u_i = sum_{j in T, j in C} (x_j - x_i) + sum_{j in T, j not in C} (x^i_j - x_i)`.
pub fn consensus_control(view: &AgentView<'_>, target: &Graph, out: &mut [f64]) -> Result<()> {
    out.fill(0.0);
    for &j in target.neighbors(view.agent) {
        let other = match view.neighbor_state(j) {
            Some(x) => x,
            None => view.estimate(j).ok_or_else(|| {
                Error::ProtocolError(format!(
                    "agent {} has neither a message from nor an estimate of agent {}",
                    view.agent + 1,
                    j + 1
                ))
            })?,
        };
        for c in 0..view.state_dim {
            out[c] += other[c] - view.own[c];
        }
    }
    Ok(())
}

/// Distance from the stacked state to the consensus set.
pub fn consensus_distance(x: &[f64], state_dim: usize) -> f64 {
    let n_agents = x.len() / state_dim;
    if n_agents == 0 {
        return 0.0;
    }
    let mut mean = vec![0.0; state_dim];
    for block in x.chunks_exact(state_dim) {
        for (m, v) in mean.iter_mut().zip(block) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n_agents as f64;
    }
    x.chunks_exact(state_dim)
        .flat_map(|b| b.iter().zip(&mean).map(|(v, m)| (v - m) * (v - m)))
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl StateBox {
    pub fn uniform(state_dim: usize, min: f64, max: f64) -> Self {
        Self {
            min: vec![min; state_dim],
            max: vec![max; state_dim],
        }
    }

    /// `d_max = max_c (x_max - x_min)`.
    pub fn d_max(&self) -> f64 {
        self.min
            .iter()
            .zip(&self.max)
            .map(|(a, b)| b - a)
            .fold(0.0, f64::max)
    }

    fn violation(&self, x: &[f64]) -> Option<(usize, usize, f64)> {
        let n = self.min.len();
        x.iter().enumerate().find_map(|(k, &v)| {
            let c = k % n;
            (!(v >= self.min[c] && v <= self.max[c])).then_some((k / n, c, v))
        })
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub plant: PlantModel,
    pub network: KHopNetwork,
    pub controller: Controller,
    pub gains: GainSet,
    /// Stacked true states `[x_1; ...; x_n]`.
    pub x0: Vec<f64>,
    pub xhat0: Vec<Vec<f64>>,
    pub uhat0: Vec<Vec<f64>>,
    pub state_box: Option<StateBox>,
    /// Convergence threshold; defaults per series to
    /// `max(1e-3 * initial norm, 1e-6)`.
    pub conv_eps: Option<f64>,
    pub sign: SignMode,
    /// Keep every `decimate`-th step in the telemetry.
    pub decimate: usize,
    /// Constant offset added to the input estimates seen by the state
    /// observers.
    pub uhat_disturbance: f64,
    /// `|x| >= divergence_limit` aborts the run.
    pub divergence_limit: f64,
}

impl SimConfig {
    #[inline]
    pub fn state_dim(&self) -> usize {
        self.plant.state_dim()
    }

    pub fn n(&self) -> usize {
        self.network.n()
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > self.dt) || !self.t_end.is_finite() {
            return Err(Error::InvalidConfig("t_end must exceed dt".into()));
        }
        if self.decimate == 0 {
            return Err(Error::InvalidConfig("decimate must be >= 1".into()));
        }
        if let Some(eps) = self.conv_eps {
            if !(eps > 0.0) {
                return Err(Error::InvalidConfig("conv_eps must be positive".into()));
            }
        }
        if let SignMode::BoundaryLayer(w) = self.sign {
            if !(w > 0.0) {
                return Err(Error::InvalidConfig("boundary layer width must be positive".into()));
            }
        }
        if self.x0.len() != self.n() * n {
            return Err(Error::DimensionError {
                expected: self.n() * n,
                got: self.x0.len(),
            });
        }
        if self.gains.g.dim() != n {
            return Err(Error::DimensionError {
                expected: n,
                got: self.gains.g.dim(),
            });
        }
        if self.gains.agents.len() != self.n() {
            return Err(Error::DimensionError {
                expected: self.n(),
                got: self.gains.agents.len(),
            });
        }
        for (est, name) in [(&self.xhat0, "xhat0"), (&self.uhat0, "uhat0")] {
            if est.len() != self.n() {
                return Err(Error::InvalidConfig(format!("{name} needs one entry per agent")));
            }
            for (nb, v) in self.network.neighborhoods.iter().zip(est) {
                if v.len() != nb.eta() * n {
                    return Err(Error::DimensionError {
                        expected: nb.eta() * n,
                        got: v.len(),
                    });
                }
            }
        }
        if let Some(b) = &self.state_box {
            if b.min.len() != n || b.max.len() != n {
                return Err(Error::InvalidConfig("state box needs one bound per component".into()));
            }
            if b.min.iter().zip(&b.max).any(|(a, b)| !(a < b)) {
                return Err(Error::InvalidConfig("state box needs min < max".into()));
            }
            if let Some((agent, component, value)) = b.violation(&self.x0) {
                return Err(Error::InvalidConfig(format!(
                    "x0 of agent {} component {} = {value} lies outside the state box",
                    agent + 1,
                    component + 1
                )));
            }
        }
        for (l, a) in self.gains.agents.iter().enumerate() {
            if a.is_none() && self.network.couplings[l].is_some() {
                return Err(Error::InvalidConfig(format!("no gains for estimated agent {}", l + 1)));
            }
        }
        self.controller.validate(&self.network)
    }
}

/// Everything that evolves in time.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub t: f64,
    pub step: usize,
    pub x: Vec<f64>,
    pub observers: Vec<ObserverState>,
}

impl World {
    pub fn initial(cfg: &SimConfig) -> Result<Self> {
        let n = cfg.state_dim();
        let observers = cfg
            .network
            .neighborhoods
            .iter()
            .enumerate()
            .map(|(i, nb)| ObserverState::new(nb, n, cfg.xhat0[i].clone(), cfg.uhat0[i].clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            t: 0.0,
            step: 0,
            x: cfg.x0.clone(),
            observers,
        })
    }
}

/// Quantities evaluated at the current instant of a round.
#[derive(Clone, Debug)]
pub struct Round {
    /// Stacked inputs `u(t_k)`.
    pub u: Vec<f64>,
    pub derivatives: Vec<ObserverDerivative>,
    /// Stacked `v_i = sum_{j in T \ C} (x^i_j - x_j)`, zero without a
    /// consensus controller.
    pub v: Vec<f64>,
}

fn slice(v: &[f64], i: usize, n: usize) -> &[f64] {
    &v[i * n..(i + 1) * n]
}

fn agent_view<'a>(cfg: &'a SimConfig, world: &'a World, i: usize) -> AgentView<'a> {
    let n = cfg.state_dim();
    AgentView {
        agent: i,
        t: world.t,
        state_dim: n,
        own: slice(&world.x, i, n),
        neighbors: cfg
            .network
            .graph
            .neighbors(i)
            .iter()
            .map(|&j| (j, slice(&world.x, j, n)))
            .collect(),
        nb: &cfg.network.neighborhoods[i],
        x_hat: &world.observers[i].x_hat,
    }
}

/// Messages agent `i` receives in the current round.
pub fn inbox<'a>(cfg: &'a SimConfig, world: &'a World, u: &'a [f64], i: usize) -> Vec<NeighborMessage<'a>> {
    let n = cfg.state_dim();
    let g = &cfg.network.graph;
    g.neighbors(i)
        .iter()
        .map(|&j| NeighborMessage {
            sender: j,
            state: slice(&world.x, j, n),
            input: slice(u, j, n),
            relayed_states: g.neighbors(j).iter().map(|&l| (l, slice(&world.x, l, n))).collect(),
            relayed_inputs: g.neighbors(j).iter().map(|&l| (l, slice(u, l, n))).collect(),
            members: &cfg.network.neighborhoods[j].members,
            est_states: &world.observers[j].x_hat,
            est_inputs: &world.observers[j].u_hat,
        })
        .collect()
}

/// Inputs of every agent at the current instant.
pub fn controls(cfg: &SimConfig, world: &World) -> Result<Vec<f64>> {
    let n = cfg.state_dim();
    let mut u = vec![0.0; cfg.n() * n];
    for (i, out) in u.chunks_exact_mut(n).enumerate() {
        cfg.controller.control(&agent_view(cfg, world, i), out)?;
    }
    Ok(u)
}

fn disturbance(cfg: &SimConfig, world: &World) -> Vec<f64> {
    let n = cfg.state_dim();
    let mut v = vec![0.0; cfg.n() * n];
    let Controller::KhopConsensus { target } = &cfg.controller else {
        return v;
    };
    for i in 0..cfg.n() {
        let nb = &cfg.network.neighborhoods[i];
        for &j in target.neighbors(i) {
            if cfg.network.graph.has_edge(i, j) {
                continue;
            }
            if let Some(p) = nb.position(j) {
                for c in 0..n {
                    v[i * n + c] += world.observers[i].x_hat[p * n + c] - world.x[j * n + c];
                }
            }
        }
    }
    v
}

/// Evaluates inputs and observer derivatives without advancing time.
pub fn evaluate(cfg: &SimConfig, world: &World) -> Result<Round> {
    let u = controls(cfg, world)?;
    let derivatives = (0..cfg.n())
        .map(|i| {
            let msgs = inbox(cfg, world, &u, i);
            observer_derivative(
                &world.observers[i],
                &msgs,
                &cfg.network.neighborhoods[i],
                &cfg.plant,
                &cfg.gains,
                cfg.sign,
                cfg.uhat_disturbance,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let v = disturbance(cfg, world);
    Ok(Round { u, derivatives, v })
}

/// Applies one Euler step using an evaluated round.
pub fn advance(cfg: &SimConfig, world: &mut World, round: &Round) -> Result<()> {
    let n = cfg.state_dim();
    let dt = cfg.dt;
    let mut drift = vec![0.0; n];
    let mut next = world.x.clone();
    for i in 0..cfg.n() {
        let r = i * n..(i + 1) * n;
        cfg.plant.drift(&world.x[r.clone()], &mut drift);
        for c in 0..n {
            next[r.start + c] += dt * (drift[c] + round.u[r.start + c]);
        }
    }
    world.x = next;
    for (obs, d) in world.observers.iter_mut().zip(&round.derivatives) {
        for (v, dv) in obs.x_hat.iter_mut().zip(&d.dx_hat) {
            *v += dt * dv;
        }
        for (v, dv) in obs.u_hat.iter_mut().zip(&d.du_hat) {
            *v += dt * dv;
        }
    }
    world.step += 1;
    world.t = world.step as f64 * dt;
    check_world(cfg, world)
}

/// One synchronous round followed by the Euler update.
pub fn step(cfg: &SimConfig, world: &mut World) -> Result<Round> {
    let round = evaluate(cfg, world)?;
    advance(cfg, world, &round)?;
    Ok(round)
}

fn check_world(cfg: &SimConfig, world: &World) -> Result<()> {
    let n = cfg.state_dim();
    let limit = cfg.divergence_limit;
    let bad = |v: &f64| !v.is_finite() || v.abs() >= limit;
    if let Some(k) = world.x.iter().position(bad) {
        return Err(Error::DivergenceDetected {
            time: world.t,
            agent: k / n + 1,
        });
    }
    for obs in &world.observers {
        if obs.x_hat.iter().chain(&obs.u_hat).any(bad) {
            return Err(Error::DivergenceDetected {
                time: world.t,
                agent: obs.agent + 1,
            });
        }
    }
    if let Some(b) = &cfg.state_box {
        if let Some((agent, component, value)) = b.violation(&world.x) {
            return Err(Error::StateBoxExited {
                time: world.t,
                agent: agent + 1,
                component: component + 1,
                value,
            });
        }
    }
    Ok(())
}

/// One telemetry row.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// `||x~^i||`, grouped by estimating agent.
    pub errx: Vec<f64>,
    pub erru: Vec<f64>,
    pub consdist: f64,
    /// `||v(t)||`
    pub vnorm: f64,
    /// Running supremum of `||v||` over every step so far.
    pub vsup: f64,
    /// `||x~_l||`, grouped by estimated agent.
    pub errxt: Vec<f64>,
    pub errut: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Telemetry {
    pub n: usize,
    pub state_dim: usize,
    pub samples: Vec<Sample>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn sample(cfg: &SimConfig, world: &World, round: &Round, vsup: f64) -> Sample {
    let n = cfg.state_dim();
    let agents = cfg.n();
    let (mut errx, mut erru) = (vec![0.0; agents], vec![0.0; agents]);
    let (mut errxt, mut errut) = (vec![0.0; agents], vec![0.0; agents]);
    for (i, obs) in world.observers.iter().enumerate() {
        for (p, &l) in cfg.network.neighborhoods[i].members.iter().enumerate() {
            let (mut sx, mut su) = (0.0, 0.0);
            for c in 0..n {
                let ex = obs.x_hat[p * n + c] - world.x[l * n + c];
                let eu = obs.u_hat[p * n + c] - round.u[l * n + c];
                sx += ex * ex;
                su += eu * eu;
            }
            errx[i] += sx;
            erru[i] += su;
            errxt[l] += sx;
            errut[l] += su;
        }
    }
    for v in [&mut errx, &mut erru, &mut errxt, &mut errut] {
        v.iter_mut().for_each(|a| *a = a.sqrt());
    }
    Sample {
        t: world.t,
        x: world.x.clone(),
        u: round.u.clone(),
        errx,
        erru,
        consdist: consensus_distance(&world.x, n),
        vnorm: norm(&round.v),
        vsup,
        errxt,
        errut,
    }
}

/// Integrates to `t_end`. On failure the telemetry gathered so far is
/// returned with the error.
pub fn run_partial(cfg: &SimConfig) -> (Telemetry, Option<Error>) {
    let mut tel = Telemetry {
        n: cfg.n(),
        state_dim: cfg.state_dim(),
        samples: Vec::new(),
    };
    if let Err(e) = cfg.validate() {
        return (tel, Some(e));
    }
    let mut world = match World::initial(cfg) {
        Ok(w) => w,
        Err(e) => return (tel, Some(e)),
    };
    let steps = cfg.steps();
    let mut vsup: f64 = 0.0;
    for k in 0..=steps {
        let round = match evaluate(cfg, &world) {
            Ok(r) => r,
            Err(e) => return (tel, Some(e)),
        };
        vsup = vsup.max(norm(&round.v));
        if k % cfg.decimate == 0 || k == steps {
            tel.samples.push(sample(cfg, &world, &round, vsup));
        }
        if k == steps {
            break;
        }
        if let Err(e) = advance(cfg, &mut world, &round) {
            return (tel, Some(e));
        }
    }
    (tel, None)
}

pub fn run(cfg: &SimConfig) -> Result<Telemetry> {
    match run_partial(cfg) {
        (tel, None) => Ok(tel),
        (_, Some(e)) => Err(e),
    }
}

/// Sliding bands `SLIDING_BAND_FACTOR * gain * dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bands {
    /// Per estimating agent, from the largest theta among its members.
    pub state: Vec<f64>,
    pub input: Vec<f64>,
    /// Per estimated agent.
    pub state_target: Vec<f64>,
    pub input_target: Vec<f64>,
}

impl Bands {
    pub fn new(net: &KHopNetwork, gains: &GainSet, dt: f64) -> Self {
        let c = tol::SLIDING_BAND_FACTOR * dt;
        let per_estimator = |gain: &dyn Fn(usize) -> f64| -> Vec<f64> {
            net.neighborhoods
                .iter()
                .map(|nb| c * nb.members.iter().map(|&l| gain(l)).fold(0.0, f64::max))
                .collect()
        };
        Self {
            state: per_estimator(&|l| gains.theta(l)),
            input: per_estimator(&|l| gains.pi(l)),
            state_target: (0..net.n()).map(|l| c * gains.theta(l)).collect(),
            input_target: (0..net.n()).map(|l| c * gains.pi(l)).collect(),
        }
    }
}

/// Default convergence threshold for a series starting at `initial`.
pub fn default_conv_eps(initial: f64) -> f64 {
    (tol::CONVERGENCE_RELATIVE * initial).max(tol::CONVERGENCE_FLOOR)
}

/// First sample time at which `norms` is below `max(eps, band)` and stays
/// below `band` until the end. `Some(times[0])` if that holds from the start.
pub fn settling_time(times: &[f64], norms: &[f64], eps: f64, band: f64) -> Option<f64> {
    let entry = eps.max(band);
    let mut settled = None;
    for k in (0..norms.len()).rev() {
        if !(norms[k] < band) {
            break;
        }
        if norms[k] < entry {
            settled = Some(times[k]);
        }
    }
    settled
}

impl Telemetry {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn series(&self, pick: impl Fn(&Sample) -> f64) -> Vec<f64> {
        self.samples.iter().map(pick).collect()
    }

    /// `max_i sup_t ||x~^i(t)||`
    pub fn max_state_error(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| s.errx.iter().copied())
            .fold(0.0, f64::max)
    }

    pub fn header(&self) -> Vec<String> {
        let (n, d) = (self.n, self.state_dim);
        let mut h = vec!["t".to_string()];
        for prefix in ["x", "u"] {
            for i in 1..=n {
                for c in 1..=d {
                    h.push(format!("{prefix}_{i}_{c}"));
                }
            }
        }
        for prefix in ["errx", "erru"] {
            h.extend((1..=n).map(|i| format!("{prefix}_{i}")));
        }
        h.extend(["consdist", "vnorm", "vsup"].map(String::from));
        for prefix in ["errxt", "errut"] {
            h.extend((1..=n).map(|i| format!("{prefix}_{i}")));
        }
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header())?;
        for s in &self.samples {
            let row = std::iter::once(s.t)
                .chain(s.x.iter().copied())
                .chain(s.u.iter().copied())
                .chain(s.errx.iter().copied())
                .chain(s.erru.iter().copied())
                .chain([s.consdist, s.vnorm, s.vsup])
                .chain(s.errxt.iter().copied())
                .chain(s.errut.iter().copied());
            out.write_record(row.map(|v| v.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`Telemetry::write_csv`]; the header must
    /// match `n` agents of dimension `state_dim` exactly.
    pub fn read_csv<R: Read>(r: R, n: usize, state_dim: usize) -> Result<Self> {
        let mut tel = Telemetry {
            n,
            state_dim,
            samples: Vec::new(),
        };
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        if header != tel.header() {
            return Err(Error::Parse(format!(
                "telemetry header does not match {n} agents with state dimension {state_dim}"
            )));
        }
        let nd = n * state_dim;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("row {}: bad number {f:?}", row + 2)))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut it = vals.into_iter();
            let mut take = |k: usize| -> Vec<f64> { it.by_ref().take(k).collect() };
            let t = take(1)[0];
            let x = take(nd);
            let u = take(nd);
            let errx = take(n);
            let erru = take(n);
            let tail = take(3);
            let errxt = take(n);
            let errut = take(n);
            if let Some(prev) = tel.samples.last() {
                if !(t > prev.t) {
                    return Err(Error::Parse(format!("row {}: time is not increasing", row + 2)));
                }
            }
            tel.samples.push(Sample {
                t,
                x,
                u,
                errx,
                erru,
                consdist: tail[0],
                vnorm: tail[1],
                vsup: tail[2],
                errxt,
                errut,
            });
        }
        Ok(tel)
    }
}
