//! Gain reports and offline verification of simulated telemetry.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::check_anchoring;
use crate::scenario::Prepared;
use crate::sim::{self, default_conv_eps, settling_time, Bands, Controller, Telemetry, World};
use crate::tol;
use crate::tuning::{network_certificate, verify_gain_condition, ConvergenceCertificate, Violation};

/// Spectral data, gains and certificate of one estimated agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentReport {
    /// 1-based agent number.
    pub agent: usize,
    /// Number of agents estimating this one (equals its k-hop set size).
    pub eta: usize,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub omega: Option<f64>,
    pub theta: Option<f64>,
    pub pi: Option<f64>,
    /// Largest eigenvalue of the gain-condition matrix; negative when it holds.
    pub gain_condition_lambda_max: Option<f64>,
    pub phi: Option<f64>,
    pub psi: Option<f64>,
    #[serde(rename = "T_x_bound")]
    pub t_x_bound: Option<f64>,
    #[serde(rename = "T_u_bound")]
    pub t_u_bound: Option<f64>,
    /// Initial norms of the stacked estimation errors of this agent.
    pub x_err0: f64,
    pub u_err0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub scenario: String,
    pub scenario_hash: String,
    pub k: usize,
    pub g: Vec<Vec<f64>>,
    pub slack: f64,
    pub agents: Vec<AgentReport>,
    #[serde(rename = "T_x")]
    pub t_x: Option<f64>,
    #[serde(rename = "T_u")]
    pub t_u: Option<f64>,
    #[serde(rename = "T_xu")]
    pub t_xu: Option<f64>,
    pub certified: bool,
    pub violations: Vec<Violation>,
    pub notes: Vec<String>,
}

/// Initial norms of the target-grouped state and input estimation errors.
pub fn initial_errors(p: &Prepared) -> Result<(Vec<f64>, Vec<f64>)> {
    let cfg = &p.sim;
    let d = cfg.state_dim();
    let world = World::initial(cfg)?;
    let u0 = sim::controls(cfg, &world)?;
    let (mut ex, mut eu) = (vec![0.0; cfg.n()], vec![0.0; cfg.n()]);
    for (i, obs) in world.observers.iter().enumerate() {
        for (q, &l) in cfg.network.neighborhoods[i].members.iter().enumerate() {
            for c in 0..d {
                ex[l] += (obs.x_hat[q * d + c] - world.x[l * d + c]).powi(2);
                eu[l] += (obs.u_hat[q * d + c] - u0[l * d + c]).powi(2);
            }
        }
    }
    Ok((
        ex.into_iter().map(f64::sqrt).collect(),
        eu.into_iter().map(f64::sqrt).collect(),
    ))
}

pub fn certificate_for(p: &Prepared) -> Result<ConvergenceCertificate> {
    let (ex, eu) = initial_errors(p)?;
    network_certificate(&p.network, &p.plant, &p.gains, &p.bounds, &ex, &eu)
}

pub fn gain_report(p: &Prepared) -> Result<GainReport> {
    let (ex, eu) = initial_errors(p)?;
    let cert = network_certificate(&p.network, &p.plant, &p.gains, &p.bounds, &ex, &eu)?;
    let mut agents = Vec::with_capacity(p.network.n());
    for l in 0..p.network.n() {
        let coupling = p.network.couplings[l].as_ref();
        let gains = p.gains.agents[l];
        let condition = match (coupling, gains) {
            (Some(c), Some(g)) => Some(verify_gain_condition(c, &p.plant, &p.gains.g, g.omega)?.lambda_max),
            _ => None,
        };
        let c = cert.agents[l];
        agents.push(AgentReport {
            agent: l + 1,
            eta: p.network.neighborhoods[l].eta(),
            lambda_min: coupling.map(|c| c.lambda_min()),
            lambda_max: coupling.map(|c| c.lambda_max()),
            omega: gains.map(|g| g.omega),
            theta: gains.map(|g| g.theta),
            pi: gains.map(|g| g.pi),
            gain_condition_lambda_max: condition,
            phi: c.map(|c| c.phi),
            psi: c.and_then(|c| c.psi),
            t_x_bound: c.and_then(|c| c.t_x),
            t_u_bound: c.and_then(|c| c.t_u),
            x_err0: ex[l],
            u_err0: eu[l],
        });
    }
    let mut notes = Vec::new();
    if p.network.total_estimates() == 0 {
        notes.push("no observers needed: every agent is within one hop of all others".into());
    }
    if p.bounds.d_udot.is_none() {
        notes.push("no input-derivative bound declared: input observer gains set to the slack and not certified".into());
    }
    for v in &cert.violations {
        notes.push(format!(
            "agent {}: {} violated (margin {:.6e})",
            v.agent, v.inequality, v.margin
        ));
    }
    Ok(GainReport {
        scenario: p.scenario.name.clone(),
        scenario_hash: p.hash.clone(),
        k: p.network.k,
        g: p.gains.g.to_rows(),
        slack: p.scenario.gains.slack,
        agents,
        t_x: cert.t_x,
        t_u: cert.t_u,
        t_xu: cert.t_xu,
        certified: cert.feasible(),
        violations: cert.violations.clone(),
        notes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Pass,
    Fail,
    /// The gains carry no guarantee for this property.
    NotCertified,
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub status: Status,
    /// Tolerance or band the check used.
    pub tolerance: f64,
    /// Smallest slack over all checked instances (positive = satisfied).
    pub margin: Option<f64>,
    pub detail: String,
}

/// Observed convergence of one agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentObservation {
    pub agent: usize,
    /// Settling of `||x~^i||` (errors held by agent `i`).
    pub t_x_obs: Option<f64>,
    pub t_u_obs: Option<f64>,
    pub state_band: f64,
    pub input_band: f64,
    /// Settling of `||x~_i||` (errors about agent `i`).
    pub t_x_obs_target: Option<f64>,
    pub t_u_obs_target: Option<f64>,
    pub state_band_target: f64,
    pub input_band_target: f64,
    pub max_state_error: f64,
}

/// Observed bound quantities against the declared ones. Informational:
/// sign-based estimates make finite differences of the inputs chatter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundAudit {
    pub max_u: Vec<f64>,
    pub d_u: Option<Vec<f64>>,
    /// `max_t ||u~_l||` over the estimates of `l`.
    pub max_tilde_u: Vec<f64>,
    pub d_tilde_u: Vec<f64>,
    /// Finite difference of `u_i` between consecutive samples.
    pub max_udot_sampled: Vec<f64>,
    /// Finite difference over `udot_window` seconds.
    pub max_udot_windowed: Vec<f64>,
    pub udot_window: f64,
    pub d_udot: Option<Vec<f64>>,
    pub within_declared: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub scenario: String,
    pub scenario_hash: String,
    pub gains: GainReport,
    pub observations: Vec<AgentObservation>,
    /// `max_i sup_t ||x~^i(t)||`
    pub max_state_error: f64,
    /// Largest input-estimation settling time over all agents.
    #[serde(rename = "T_u_obs")]
    pub t_u_obs: Option<f64>,
    pub iss_max_violation: Option<f64>,
    pub final_consensus_distance: f64,
    pub criteria: Vec<Criterion>,
    pub bound_audit: BoundAudit,
    pub all_pass: bool,
}

impl VerificationReport {
    pub fn criterion(&self, name: &str) -> Option<&Criterion> {
        self.criteria.iter().find(|c| c.name == name)
    }
}

fn min_opt(a: Option<f64>, b: f64) -> Option<f64> {
    Some(a.map_or(b, |a| a.min(b)))
}

/// Recomputes every checked property from telemetry.
pub fn verify(p: &Prepared, tel: &Telemetry) -> Result<VerificationReport> {
    let gains = gain_report(p)?;
    let n = p.network.n();
    let dt = p.sim.dt;
    let bands = Bands::new(&p.network, &p.gains, dt);
    let times = tel.times();
    let eps = |series: &[f64]| p.sim.conv_eps.unwrap_or_else(|| default_conv_eps(series.first().copied().unwrap_or(0.0)));
    let settle = |pick: &dyn Fn(&sim::Sample) -> f64, band: f64| {
        let s = tel.series(pick);
        settling_time(&times, &s, eps(&s), band)
    };

    let observations: Vec<AgentObservation> = (0..n)
        .map(|i| AgentObservation {
            agent: i + 1,
            t_x_obs: settle(&|s| s.errx[i], bands.state[i]),
            t_u_obs: settle(&|s| s.erru[i], bands.input[i]),
            state_band: bands.state[i],
            input_band: bands.input[i],
            t_x_obs_target: settle(&|s| s.errxt[i], bands.state_target[i]),
            t_u_obs_target: settle(&|s| s.errut[i], bands.input_target[i]),
            state_band_target: bands.state_target[i],
            input_band_target: bands.input_target[i],
            max_state_error: tel.series(|s| s.errx[i]).into_iter().fold(0.0, f64::max),
        })
        .collect();
    let estimated: Vec<usize> = (0..n).filter(|&l| p.network.couplings[l].is_some()).collect();

    let audit = bound_audit(p, tel);
    let hypothesis = if audit.within_declared {
        ""
    } else {
        " (declared bounds exceeded along the trajectory, see bound_audit)"
    };
    let mut criteria = Vec::new();

    let anchoring = check_anchoring(&p.network.graph, p.network.k);
    criteria.push(Criterion {
        name: "anchoring".into(),
        status: if anchoring.is_ok() { Status::Pass } else { Status::Fail },
        tolerance: 0.0,
        margin: None,
        detail: match &anchoring {
            Ok(_) => "every estimate is anchored to a relayed true value".into(),
            Err(e) => e.to_string(),
        },
    });

    let lmin = estimated
        .iter()
        .filter_map(|&l| p.network.couplings[l].as_ref().map(|c| c.lambda_min()))
        .fold(f64::INFINITY, f64::min);
    criteria.push(Criterion {
        name: "coupling_pd".into(),
        status: if estimated.is_empty() || lmin > tol::POSITIVE_DEFINITE {
            Status::Pass
        } else {
            Status::Fail
        },
        tolerance: tol::POSITIVE_DEFINITE,
        margin: (!estimated.is_empty()).then_some(lmin - tol::POSITIVE_DEFINITE),
        detail: "smallest eigenvalue of every coupling matrix".into(),
    });

    let gain_condition_margin = gains
        .agents
        .iter()
        .filter_map(|a| a.gain_condition_lambda_max)
        .map(|v| -v)
        .fold(None, min_opt);
    let gain_condition_ok = gain_condition_margin.is_none_or(|m| m > 0.0);
    criteria.push(Criterion {
        name: "gain_condition".into(),
        status: if gain_condition_ok { Status::Pass } else { Status::NotCertified },
        tolerance: 0.0,
        margin: gain_condition_margin,
        detail: "negative definiteness of the gain condition at the chosen omega".into(),
    });

    let phi_ok = estimated.iter().all(|&l| gains.agents[l].phi.is_some_and(|v| v > 0.0));
    let state_certified = gain_condition_ok && phi_ok;
    let horizon = tel.samples.last().map_or(0.0, |s| s.t);
    criteria.push(time_criterion(
        "state_certificate",
        state_certified,
        &estimated,
        |l| observations[l].t_x_obs_target,
        |l| gains.agents[l].t_x_bound,
        horizon,
        &format!("observed settling of each agent's estimation error vs its certified time{hypothesis}"),
    ));

    let psi_ok = estimated.iter().all(|&l| gains.agents[l].psi.is_some_and(|v| v > 0.0));
    criteria.push(time_criterion(
        "input_certificate",
        psi_ok,
        &estimated,
        |l| observations[l].t_u_obs_target,
        |l| gains.agents[l].t_u_bound,
        horizon,
        &format!("observed settling of each agent's input-estimation error vs its certified time{hypothesis}"),
    ));

    let unsettled: Vec<usize> = (0..n)
        .filter(|&i| p.network.neighborhoods[i].eta() > 0 && observations[i].t_x_obs.is_none())
        .map(|i| i + 1)
        .collect();
    criteria.push(Criterion {
        name: "sliding_band".into(),
        status: match (unsettled.is_empty(), state_certified) {
            (true, _) => Status::Pass,
            (false, true) => Status::Fail,
            (false, false) => Status::NotCertified,
        },
        tolerance: tol::SLIDING_BAND_FACTOR,
        margin: None,
        detail: if unsettled.is_empty() {
            format!("every state-estimation error settles in {} * theta * dt", tol::SLIDING_BAND_FACTOR)
        } else {
            format!("agents {unsettled:?} never settle in their band")
        },
    });

    let final_cd = tel.samples.last().map_or(0.0, |s| s.consdist);
    let is_consensus = matches!(p.sim.controller, Controller::KhopConsensus { .. });
    criteria.push(Criterion {
        name: "consensus".into(),
        status: match (is_consensus, final_cd < tol::CONSENSUS_FINAL) {
            (false, _) => Status::NotApplicable,
            (true, true) => Status::Pass,
            (true, false) if state_certified => Status::Fail,
            (true, false) => Status::NotCertified,
        },
        tolerance: tol::CONSENSUS_FINAL,
        margin: is_consensus.then_some(tol::CONSENSUS_FINAL - final_cd),
        detail: format!("distance to consensus at the final sample = {final_cd:.3e}"),
    });

    let iss = iss_envelope(p, tel)?;
    criteria.push(Criterion {
        name: "iss_envelope".into(),
        status: match iss {
            None => Status::NotApplicable,
            Some(v) if v <= tol::ISS_ENVELOPE => Status::Pass,
            Some(_) => Status::Fail,
        },
        tolerance: tol::ISS_ENVELOPE,
        margin: iss.map(|v| tol::ISS_ENVELOPE - v),
        detail: "consensus distance vs exp(-lambda_2 t) d(0) + sup ||v|| / lambda_2".into(),
    });

    let t_u_obs = estimated
        .iter()
        .map(|&l| observations[l].t_u_obs_target)
        .try_fold(0.0_f64, |acc, t| t.map(|t| acc.max(t)));
    let input_pending = criteria
        .iter()
        .any(|c| c.name == "input_certificate" && c.status == Status::NotApplicable);
    criteria.push(post_input_bound(p, tel, &bands, t_u_obs, psi_ok, input_pending));

    let all_pass = criteria
        .iter()
        .all(|c| matches!(c.status, Status::Pass | Status::NotApplicable));
    Ok(VerificationReport {
        scenario: p.scenario.name.clone(),
        scenario_hash: p.hash.clone(),
        gains,
        observations,
        max_state_error: tel.max_state_error(),
        t_u_obs,
        iss_max_violation: iss,
        final_consensus_distance: final_cd,
        criteria,
        bound_audit: audit,
        all_pass,
    })
}

fn time_criterion(
    name: &str,
    certified: bool,
    estimated: &[usize],
    observed: impl Fn(usize) -> Option<f64>,
    bound: impl Fn(usize) -> Option<f64>,
    horizon: f64,
    detail: &str,
) -> Criterion {
    if !certified {
        return Criterion {
            name: name.into(),
            status: Status::NotCertified,
            tolerance: 0.0,
            margin: None,
            detail: format!("{detail}: gains do not certify convergence"),
        };
    }
    let mut margin: Option<f64> = None;
    let mut missing = Vec::new();
    let mut pending = Vec::new();
    for &l in estimated {
        match (observed(l), bound(l)) {
            (Some(o), Some(b)) => margin = min_opt(margin, b - o),
            // not settled yet, but the run ended before the certified time
            (None, Some(b)) if horizon < b => pending.push(l + 1),
            _ => missing.push(l + 1),
        }
    }
    let violated = !missing.is_empty() || margin.is_some_and(|m| m < 0.0);
    let status = if violated {
        Status::Fail
    } else if pending.is_empty() {
        Status::Pass
    } else {
        Status::NotApplicable
    };
    let mut detail = detail.to_string();
    if !missing.is_empty() {
        detail += &format!(": agents {missing:?} never settled");
    }
    if !pending.is_empty() {
        detail += &format!(": agents {pending:?} not settled before the horizon t = {horizon}, which ends before their certified time");
    }
    Criterion {
        name: name.into(),
        status,
        tolerance: 0.0,
        margin,
        detail,
    }
}

/// Largest excess of the consensus distance over the input-to-state
/// envelope, or `None` when the envelope does not apply (non-consensus
/// controller, nonzero drift, or disconnected target graph).
pub fn iss_envelope(p: &Prepared, tel: &Telemetry) -> Result<Option<f64>> {
    if !matches!(p.sim.controller, Controller::KhopConsensus { .. })
        || !p.plant.f.is_zero()
        || p.plant.a.max_abs() != 0.0
        || !p.target.is_connected()
        || p.target.n() < 2
        || tel.samples.is_empty()
    {
        return Ok(None);
    }
    let lambda2 = p.target.algebraic_connectivity()?;
    let d0 = tel.samples[0].consdist;
    Ok(Some(
        tel.samples
            .iter()
            .map(|s| s.consdist - ((-lambda2 * s.t).exp() * d0 + s.vsup / lambda2))
            .fold(f64::NEG_INFINITY, f64::max),
    ))
}

fn post_input_bound(
    p: &Prepared,
    tel: &Telemetry,
    bands: &Bands,
    t_u_obs: Option<f64>,
    certified: bool,
    input_pending: bool,
) -> Criterion {
    let x_obs = tel.max_state_error();
    let detail = format!("max state-estimation error = {x_obs:.6e}");
    let Some(tu) = t_u_obs else {
        return Criterion {
            name: "post_input_bound".into(),
            status: match (certified, input_pending) {
                (false, _) => Status::NotCertified,
                (true, true) => Status::NotApplicable,
                (true, false) => Status::Fail,
            },
            tolerance: 0.0,
            margin: None,
            detail: format!("{detail}; input estimates never settled"),
        };
    };
    let Some(k0) = tel.samples.iter().position(|s| s.t >= tu) else {
        return Criterion {
            name: "post_input_bound".into(),
            status: Status::Fail,
            tolerance: 0.0,
            margin: None,
            detail: format!("{detail}; no sample at the input settling time"),
        };
    };
    let mut margin = f64::INFINITY;
    for i in 0..p.network.n() {
        let start = tel.samples[k0].errx[i];
        for s in &tel.samples[k0 + 1..] {
            margin = margin.min(start + bands.state[i] - s.errx[i]);
        }
    }
    let ok = x_obs.is_finite() && margin >= 0.0;
    Criterion {
        name: "post_input_bound".into(),
        status: if ok { Status::Pass } else { Status::Fail },
        tolerance: bands.state.iter().copied().fold(0.0, f64::max),
        margin: margin.is_finite().then_some(margin),
        detail: format!("{detail}; errors after t = {tu} stay below their value then plus the band"),
    }
}

fn bound_audit(p: &Prepared, tel: &Telemetry) -> BoundAudit {
    let n = p.network.n();
    let d = p.state_dim();
    let window = 0.1;
    let norm_u = |s: &sim::Sample, i: usize| s.u[i * d..(i + 1) * d].iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff = |a: &sim::Sample, b: &sim::Sample, i: usize| {
        (0..d)
            .map(|c| (b.u[i * d + c] - a.u[i * d + c]).powi(2))
            .sum::<f64>()
            .sqrt()
            / (b.t - a.t)
    };
    let mut max_u = vec![0.0_f64; n];
    let mut max_tu = vec![0.0_f64; n];
    let mut udot = vec![0.0_f64; n];
    let mut udot_w = vec![0.0_f64; n];
    let mut lag = 0;
    for (k, s) in tel.samples.iter().enumerate() {
        while s.t - tel.samples[lag].t > window {
            lag += 1;
        }
        for i in 0..n {
            max_u[i] = max_u[i].max(norm_u(s, i));
            max_tu[i] = max_tu[i].max(s.errut[i]);
            if k > 0 {
                udot[i] = udot[i].max(diff(&tel.samples[k - 1], s, i));
                if lag > 0 {
                    udot_w[i] = udot_w[i].max(diff(&tel.samples[lag - 1], s, i));
                }
            }
        }
    }
    let b = &p.bounds;
    let within = |obs: &[f64], declared: Option<&Vec<f64>>| declared.is_none_or(|dcl| obs.iter().zip(dcl).all(|(o, d)| o <= d));
    let within_declared = within(&max_u, b.d_u.as_ref())
        && within(&max_tu, Some(&b.d_tilde_u))
        && within(&udot, b.d_udot.as_ref());
    BoundAudit {
        max_u,
        d_u: b.d_u.clone(),
        max_tilde_u: max_tu,
        d_tilde_u: b.d_tilde_u.clone(),
        max_udot_sampled: udot,
        max_udot_windowed: udot_w,
        udot_window: window,
        d_udot: b.d_udot.clone(),
        within_declared,
    }
}
