//! Per-agent finite-time state and input observers.
//!
//! Agent `i` keeps a stacked estimate `x^i = [x^i_l]` of every member `l` of
//! its k-hop set (same order as [`KHopNeighborhood::members`]) and the same
//! for inputs. Everything it uses arrives in [`NeighborMessage`]s from its
//! 1-hop neighbors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::KHopNeighborhood;
use crate::tuning::{GainSet, PlantModel};

#[derive(Clone, Debug, PartialEq)]
pub struct ObserverState {
    pub agent: usize,
    pub x_hat: Vec<f64>,
    pub u_hat: Vec<f64>,
}

impl ObserverState {
    pub fn new(nb: &KHopNeighborhood, state_dim: usize, x_hat: Vec<f64>, u_hat: Vec<f64>) -> Result<Self> {
        let len = nb.eta() * state_dim;
        for v in [&x_hat, &u_hat] {
            if v.len() != len {
                return Err(Error::DimensionError {
                    expected: len,
                    got: v.len(),
                });
            }
        }
        let state = Self {
            agent: nb.agent,
            x_hat,
            u_hat,
        };
        state.check_finite()?;
        Ok(state)
    }

    pub fn zeros(nb: &KHopNeighborhood, state_dim: usize) -> Self {
        let len = nb.eta() * state_dim;
        Self {
            agent: nb.agent,
            x_hat: vec![0.0; len],
            u_hat: vec![0.0; len],
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.x_hat.iter().chain(&self.u_hat).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NumericalError(format!(
                "non-finite estimate held by agent {}",
                self.agent + 1
            )))
        }
    }
}

/// Everything agent `j` broadcasts to its neighbors in one round.
#[derive(Clone, Debug)]
pub struct NeighborMessage<'a> {
    pub sender: usize,
    pub state: &'a [f64],
    pub input: &'a [f64],
    /// `(l, x_l)` for every neighbor `l` of the sender.
    pub relayed_states: Vec<(usize, &'a [f64])>,
    pub relayed_inputs: Vec<(usize, &'a [f64])>,
    /// Sender's k-hop members, in the order of `est_states`.
    pub members: &'a [usize],
    pub est_states: &'a [f64],
    pub est_inputs: &'a [f64],
}

fn lookup<'a>(relayed: &[(usize, &'a [f64])], l: usize) -> Option<&'a [f64]> {
    relayed.iter().find(|(id, _)| *id == l).map(|(_, v)| *v)
}

/// How `sign` is evaluated in the observer laws.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "width")]
pub enum SignMode {
    /// `sign(v) = 1` for `v >= 0`, `-1` otherwise.
    #[default]
    Discontinuous,
    /// `clamp(v / width, -1, 1)`.
    BoundaryLayer(f64),
}

impl SignMode {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            SignMode::Discontinuous => {
                if v >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            SignMode::BoundaryLayer(width) => (v / width).clamp(-1.0, 1.0),
        }
    }
}

#[derive(Clone, Copy)]
enum Channel {
    State,
    Input,
}

/// Matches messages to `nb.one_hop`, rejecting missing, foreign or
/// malformed ones.
fn order_messages<'m, 'a>(
    nb: &KHopNeighborhood,
    msgs: &'m [NeighborMessage<'a>],
    state_dim: usize,
) -> Result<Vec<&'m NeighborMessage<'a>>> {
    for m in msgs {
        if nb.one_hop.binary_search(&m.sender).is_err() {
            return Err(Error::ProtocolError(format!(
                "agent {} received a message from non-neighbor {}",
                nb.agent + 1,
                m.sender + 1
            )));
        }
        let len = m.members.len() * state_dim;
        if m.est_states.len() != len || m.est_inputs.len() != len {
            return Err(Error::ProtocolError(format!(
                "message from {} carries {} estimate entries for {} members",
                m.sender + 1,
                m.est_states.len(),
                m.members.len()
            )));
        }
    }
    nb.one_hop
        .iter()
        .map(|&j| {
            let mut it = msgs.iter().filter(|m| m.sender == j);
            let first = it.next().ok_or(Error::MissingNeighborData {
                agent: nb.agent + 1,
                neighbor: j + 1,
            })?;
            if it.next().is_some() {
                return Err(Error::ProtocolError(format!(
                    "agent {} received two messages from {}",
                    nb.agent + 1,
                    j + 1
                )));
            }
            Ok(first)
        })
        .collect()
}

fn innovation(
    own: &[f64],
    msgs: &[NeighborMessage<'_>],
    nb: &KHopNeighborhood,
    state_dim: usize,
    channel: Channel,
) -> Result<Vec<f64>> {
    let n = state_dim;
    if own.len() != nb.eta() * n {
        return Err(Error::DimensionError {
            expected: nb.eta() * n,
            got: own.len(),
        });
    }
    let ordered = order_messages(nb, msgs, n)?;
    let mut out = vec![0.0; own.len()];
    for (p, &l) in nb.members.iter().enumerate() {
        let mine = &own[p * n..(p + 1) * n];
        let block = &mut out[p * n..(p + 1) * n];
        for m in &ordered {
            let (est, relayed) = match channel {
                Channel::State => (m.est_states, &m.relayed_states),
                Channel::Input => (m.est_inputs, &m.relayed_inputs),
            };
            if let Ok(q) = m.members.binary_search(&l) {
                let theirs = &est[q * n..(q + 1) * n];
                for c in 0..n {
                    block[c] += theirs[c] - mine[c];
                }
            }
            if let Some(truth) = lookup(relayed, l) {
                if truth.len() != n {
                    return Err(Error::ProtocolError(format!(
                        "relayed value of {} via {} has length {}",
                        l + 1,
                        m.sender + 1,
                        truth.len()
                    )));
                }
                for c in 0..n {
                    block[c] += truth[c] - mine[c];
                }
            }
        }
    }
    Ok(out)
}

/// State innovation `xi^i`.
///
/// Block `l` sums `x^j_l - x^i_l` over neighbors `j` that also estimate `l`,
/// and `x_l - x^i_l` over neighbors `j` adjacent to `l` (relayed by `j`).
pub fn compute_xi(
    state: &ObserverState,
    msgs: &[NeighborMessage<'_>],
    nb: &KHopNeighborhood,
    state_dim: usize,
) -> Result<Vec<f64>> {
    innovation(&state.x_hat, msgs, nb, state_dim, Channel::State)
}

/// Input innovation `rho^i`, built like `xi^i` from inputs.
pub fn compute_rho(
    state: &ObserverState,
    msgs: &[NeighborMessage<'_>],
    nb: &KHopNeighborhood,
    state_dim: usize,
) -> Result<Vec<f64>> {
    innovation(&state.u_hat, msgs, nb, state_dim, Channel::Input)
}

/// `dx^i_l = f(x^i_l) + A x^i_l + omega_l G xi^i_l + theta_l sign(G xi^i_l) + u^i_l`
/// for every member `l`, with `u_hat` the input estimate fed to the law.
pub fn state_observer_derivative(
    state: &ObserverState,
    xi: &[f64],
    nb: &KHopNeighborhood,
    plant: &PlantModel,
    gains: &GainSet,
    sign: SignMode,
    u_hat: &[f64],
) -> Result<Vec<f64>> {
    state.check_finite()?;
    let n = plant.state_dim();
    let len = nb.eta() * n;
    for v in [xi, u_hat] {
        if v.len() != len {
            return Err(Error::DimensionError {
                expected: len,
                got: v.len(),
            });
        }
    }
    let mut out = vec![0.0; len];
    for (p, &l) in nb.members.iter().enumerate() {
        let r = p * n..(p + 1) * n;
        let block = &mut out[r.clone()];
        plant.drift(&state.x_hat[r.clone()], block);
        let g_xi = gains.g.mul_vec(&xi[r.clone()])?;
        let (omega, theta) = (gains.omega(l), gains.theta(l));
        for c in 0..n {
            block[c] += omega * g_xi[c] + theta * sign.apply(g_xi[c]) + u_hat[r.start + c];
        }
    }
    Ok(out)
}

/// `du^i_l = pi_l sign(rho^i_l)`.
pub fn input_observer_derivative(
    rho: &[f64],
    nb: &KHopNeighborhood,
    state_dim: usize,
    gains: &GainSet,
    sign: SignMode,
) -> Result<Vec<f64>> {
    let n = state_dim;
    if rho.len() != nb.eta() * n {
        return Err(Error::DimensionError {
            expected: nb.eta() * n,
            got: rho.len(),
        });
    }
    let mut out = vec![0.0; rho.len()];
    for (p, &l) in nb.members.iter().enumerate() {
        let pi = gains.pi(l);
        for c in p * n..(p + 1) * n {
            out[c] = pi * sign.apply(rho[c]);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObserverDerivative {
    pub dx_hat: Vec<f64>,
    pub du_hat: Vec<f64>,
    pub xi: Vec<f64>,
    pub rho: Vec<f64>,
}

/// Both observer laws for one agent. `uhat_offset` is added to the input
/// estimate consumed by the state observer (zero in nominal operation).
pub fn observer_derivative(
    state: &ObserverState,
    msgs: &[NeighborMessage<'_>],
    nb: &KHopNeighborhood,
    plant: &PlantModel,
    gains: &GainSet,
    sign: SignMode,
    uhat_offset: f64,
) -> Result<ObserverDerivative> {
    let n = plant.state_dim();
    let xi = compute_xi(state, msgs, nb, n)?;
    let rho = compute_rho(state, msgs, nb, n)?;
    let dx_hat = if uhat_offset == 0.0 {
        state_observer_derivative(state, &xi, nb, plant, gains, sign, &state.u_hat)?
    } else {
        let shifted: Vec<f64> = state.u_hat.iter().map(|v| v + uhat_offset).collect();
        state_observer_derivative(state, &xi, nb, plant, gains, sign, &shifted)?
    };
    let du_hat = input_observer_derivative(&rho, nb, n, gains, sign)?;
    Ok(ObserverDerivative {
        dx_hat,
        du_hat,
        xi,
        rho,
    })
}

/// Gathers `[v_l : l in members]` from a global stack of `state_dim` blocks.
pub fn gather_members(global: &[f64], nb: &KHopNeighborhood, state_dim: usize) -> Vec<f64> {
    let n = state_dim;
    nb.members
        .iter()
        .flat_map(|&l| global[l * n..(l + 1) * n].iter().copied())
        .collect()
}

/// `(||x^i - x_hat^i||, ||u^i - u_hat^i||)` against the true global stacks.
pub fn error_norms(
    state: &ObserverState,
    x: &[f64],
    u: &[f64],
    nb: &KHopNeighborhood,
    state_dim: usize,
) -> (f64, f64) {
    let norm = |est: &[f64], truth: &[f64]| {
        let truth = gather_members(truth, nb, state_dim);
        est.iter()
            .zip(&truth)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    (norm(&state.x_hat, x), norm(&state.u_hat, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{khop_set, Graph, KHopNetwork};
    use crate::linalg::Matrix;
    use crate::tuning::{tune_network, BoundSet, Nonlinearity, TuningOptions};
    use approx::assert_abs_diff_eq;

    struct Snapshot {
        x: Vec<f64>,
        u: Vec<f64>,
        states: Vec<ObserverState>,
    }

    fn messages<'a>(g: &'a Graph, net: &'a KHopNetwork, s: &'a Snapshot, i: usize, n: usize) -> Vec<NeighborMessage<'a>> {
        g.neighbors(i)
            .iter()
            .map(|&j| NeighborMessage {
                sender: j,
                state: &s.x[j * n..(j + 1) * n],
                input: &s.u[j * n..(j + 1) * n],
                relayed_states: g.neighbors(j).iter().map(|&l| (l, &s.x[l * n..(l + 1) * n])).collect(),
                relayed_inputs: g.neighbors(j).iter().map(|&l| (l, &s.u[l * n..(l + 1) * n])).collect(),
                members: &net.neighborhoods[j].members,
                est_states: &s.states[j].x_hat,
                est_inputs: &s.states[j].u_hat,
            })
            .collect()
    }

    fn path_setup() -> (Graph, KHopNetwork, GainSet, PlantModel) {
        let g = Graph::path(4);
        let net = KHopNetwork::new(g.clone(), 3).unwrap();
        let plant = PlantModel::single_integrator(1);
        let bounds = BoundSet::uniform(4, None, Some(1.0), 0.5).unwrap();
        let opts = TuningOptions {
            g_scale: Some(20.0),
            ..Default::default()
        };
        let gains = tune_network(&net, &plant, &bounds, &opts).unwrap();
        (g, net, gains, plant)
    }

    #[test]
    fn xi_vanishes_at_truth() {
        let (g, net, _, _) = path_setup();
        let x = vec![0.3, -1.0, 2.0, 0.5];
        let states = net
            .neighborhoods
            .iter()
            .map(|nb| ObserverState::new(nb, 1, gather_members(&x, nb, 1), vec![0.0; nb.eta()]).unwrap())
            .collect();
        let s = Snapshot {
            x: x.clone(),
            u: vec![0.0; 4],
            states,
        };
        for i in 0..4 {
            let msgs = messages(&g, &net, &s, i, 1);
            let xi = compute_xi(&s.states[i], &msgs, &net.neighborhoods[i], 1).unwrap();
            assert!(xi.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn agent_two_expansion() {
        let (g, net, _, _) = path_setup();
        let x = vec![0.0, 0.0, 0.0, 7.0];
        // agent 1 (0-based 0) estimates {3, 4}; agent 2 estimates {4}; agent 3 estimates {1}
        let states = vec![
            ObserverState::new(&net.neighborhoods[0], 1, vec![0.1, 1.5], vec![0.0; 2]).unwrap(),
            ObserverState::new(&net.neighborhoods[1], 1, vec![2.0], vec![0.0]).unwrap(),
            ObserverState::new(&net.neighborhoods[2], 1, vec![-4.0], vec![0.0]).unwrap(),
            ObserverState::new(&net.neighborhoods[3], 1, vec![0.0, 0.0], vec![0.0; 2]).unwrap(),
        ];
        let s = Snapshot {
            x,
            u: vec![0.0; 4],
            states,
        };
        let msgs = messages(&g, &net, &s, 1, 1);
        let xi = compute_xi(&s.states[1], &msgs, &net.neighborhoods[1], 1).unwrap();
        // (x^1_4 - x^2_4) + (x_4 - x^2_4); agent 3 is adjacent to 4 and does not estimate it
        assert_eq!(xi, vec![(1.5 - 2.0) + (7.0 - 2.0)]);
    }

    #[test]
    fn sign_zero_is_positive() {
        assert_eq!(SignMode::Discontinuous.apply(0.0), 1.0);
        assert_eq!(SignMode::Discontinuous.apply(-0.0), 1.0);
        assert_eq!(SignMode::Discontinuous.apply(-1e-300), -1.0);
        assert_eq!(SignMode::BoundaryLayer(0.1).apply(0.05), 0.5);
        assert_eq!(SignMode::BoundaryLayer(0.1).apply(-3.0), -1.0);

        let (_, net, gains, plant) = path_setup();
        let nb = &net.neighborhoods[0];
        let state = ObserverState::zeros(nb, 1);
        let dx = state_observer_derivative(&state, &[0.0, 0.0], nb, &plant, &gains, SignMode::Discontinuous, &[0.0, 0.0]).unwrap();
        assert_eq!(dx, vec![gains.theta(2), gains.theta(3)]);
        let du = input_observer_derivative(&[0.0, 0.0], nb, 1, &gains, SignMode::Discontinuous).unwrap();
        assert_eq!(du, vec![gains.pi(2), gains.pi(3)]);
    }

    #[test]
    fn missing_and_foreign_messages() {
        let (g, net, _, _) = path_setup();
        let s = Snapshot {
            x: vec![0.0; 4],
            u: vec![0.0; 4],
            states: net.neighborhoods.iter().map(|nb| ObserverState::zeros(nb, 1)).collect(),
        };
        let mut msgs = messages(&g, &net, &s, 1, 1);
        msgs.pop();
        assert!(matches!(
            compute_xi(&s.states[1], &msgs, &net.neighborhoods[1], 1),
            Err(Error::MissingNeighborData { agent: 2, neighbor: 3 })
        ));
        let mut foreign = messages(&g, &net, &s, 1, 1);
        foreign[0].sender = 3;
        assert!(matches!(
            compute_xi(&s.states[1], &foreign, &net.neighborhoods[1], 1),
            Err(Error::ProtocolError(_))
        ));
        let mut short = messages(&g, &net, &s, 1, 1);
        short[0].est_states = &[];
        assert!(matches!(
            compute_rho(&s.states[1], &short, &net.neighborhoods[1], 1),
            Err(Error::ProtocolError(_))
        ));
    }

    #[test]
    fn non_finite_estimate_rejected() {
        let (_, net, gains, plant) = path_setup();
        let nb = &net.neighborhoods[1];
        let state = ObserverState {
            agent: 1,
            x_hat: vec![f64::NAN],
            u_hat: vec![0.0],
        };
        let err = state_observer_derivative(&state, &[0.0], nb, &plant, &gains, SignMode::Discontinuous, &[0.0]);
        assert!(matches!(err, Err(Error::NumericalError(_))));
    }

    #[test]
    fn at_zero_error_estimates_follow_the_plant() {
        let g = Graph::path(4);
        let net = KHopNetwork::new(g.clone(), 3).unwrap();
        let plant = PlantModel::new(
            Matrix::from_rows(&[[0.0, 1.0], [-1.0, -0.5]]).unwrap(),
            Nonlinearity::Saturation { limit: 0.2 },
        )
        .unwrap();
        let bounds = BoundSet::uniform(4, None, Some(1.0), 0.5).unwrap();
        let gains = tune_network(&net, &plant, &bounds, &TuningOptions::default()).unwrap();
        let x: Vec<f64> = (0..8).map(|k| 0.1 * k as f64 - 0.3).collect();
        let u: Vec<f64> = (0..8).map(|k| (k as f64).sin()).collect();
        let states: Vec<ObserverState> = net
            .neighborhoods
            .iter()
            .map(|nb| ObserverState::new(nb, 2, gather_members(&x, nb, 2), gather_members(&u, nb, 2)).unwrap())
            .collect();
        let s = Snapshot { x, u, states };
        for i in 0..4 {
            let nb = &net.neighborhoods[i];
            let msgs = messages(&g, &net, &s, i, 2);
            let d = observer_derivative(&s.states[i], &msgs, nb, &plant, &gains, SignMode::BoundaryLayer(1e-3), 0.0).unwrap();
            for (p, &l) in nb.members.iter().enumerate() {
                let mut truth = vec![0.0; 2];
                plant.drift(&s.x[2 * l..2 * l + 2], &mut truth);
                for c in 0..2 {
                    truth[c] += s.u[2 * l + c];
                    assert_abs_diff_eq!(d.dx_hat[2 * p + c], truth[c], epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn error_norm_examples() {
        let g = Graph::path(3);
        let nb = khop_set(&g, 0, 2).unwrap();
        let x = vec![1.0, 2.0, 3.0];
        let mut state = ObserverState::new(&nb, 1, vec![3.0], vec![0.0]).unwrap();
        assert_eq!(error_norms(&state, &x, &[0.0; 3], &nb, 1), (0.0, 0.0));
        state.x_hat[0] += 1.0;
        state.u_hat[0] = -2.0;
        assert_eq!(error_norms(&state, &x, &[0.0; 3], &nb, 1), (1.0, 2.0));
    }
}
