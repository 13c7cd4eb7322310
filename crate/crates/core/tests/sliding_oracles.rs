//! Scalar reaching-time problems with closed-form answers.

use std::sync::Arc;

use khop_core::linalg::{Matrix, SymMatrix};
use khop_core::scenario::{Prepared, Scenario};
use khop_core::sim::{step, AgentView, Controller, FeedbackLaw, World};
use khop_core::tuning::{Nonlinearity, PlantModel};
use khop_core::AgentGains;

/// Path 1-2-3 with k = 2: agents 1 and 3 estimate each other through agent 2.
fn path3() -> Prepared {
    Scenario::from_json(
        r#"{"schema_version": 1, "name": "scalar", "graph": {"n": 3, "edges": [[1, 2], [2, 3]]},
            "k": 2, "plant": {"state_dim": 1}, "controller": {"kind": "zero"},
            "bounds": {"d_udot": 1.0, "d_tilde_u": 0.5},
            "sim": {"dt": 0.001, "t_end": 2.0, "seed": 1, "x0": "zero", "xhat0": "zero"}}"#,
    )
    .unwrap()
    .prepare()
    .unwrap()
}

fn set_gains(p: &mut Prepared, agent: usize, gains: AgentGains) {
    p.sim.gains.agents[agent] = Some(gains);
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    assert!(f(lo) > 0.0 && f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct SineOnThird;

impl FeedbackLaw for SineOnThird {
    fn control(&self, view: &AgentView<'_>, out: &mut [f64]) -> khop_core::Result<()> {
        out[0] = if view.agent == 2 { view.t.sin() } else { 0.0 };
        Ok(())
    }
}

#[test]
fn input_estimate_reaches_a_sine_input_at_the_predicted_time() {
    let mut p = path3();
    let pi = 2.0;
    p.sim.controller = Controller::Generic(Arc::new(SineOnThird));
    set_gains(&mut p, 2, AgentGains { omega: 1.0, theta: 0.5, pi });
    p.sim.uhat0[0] = vec![-1.0];
    let cfg = &p.sim;
    let dt = cfg.dt;
    // 1 + sin t - pi t = 0
    let t_star = bisect(|t| 1.0 + t.sin() - pi * t, 0.0, 2.0);
    assert!((t_star - 0.8872).abs() < 1e-3, "t* = {t_star}");

    let mut world = World::initial(cfg).unwrap();
    let mut crossed = None;
    for k in 0..cfg.steps() {
        let t = k as f64 * dt;
        let err = t.sin() - world.observers[0].u_hat[0];
        match crossed {
            None if err < 0.0 => crossed = Some(t),
            None => assert!((world.observers[0].u_hat[0] - (-1.0 + pi * t)).abs() < 1e-12),
            Some(_) => assert!(err.abs() <= pi * dt + dt, "t = {t}: |u~| = {}", err.abs()),
        }
        step(cfg, &mut world).unwrap();
    }
    let crossed = crossed.expect("input estimate never reached the input");
    assert!(crossed >= t_star && crossed - t_star <= dt + 1e-12, "crossed at {crossed}, t* = {t_star}");
}

#[test]
fn state_estimate_reaches_a_stable_scalar_plant_at_the_predicted_time() {
    let mut p = path3();
    let (a, g, omega, theta) = (1.0, 2.0, 1.0, 0.5);
    let plant = PlantModel::new(Matrix::from_rows(&[[-a]]).unwrap(), Nonlinearity::Zero).unwrap();
    p.sim.plant = plant;
    p.sim.gains.g = SymMatrix::scaled_identity(1, g);
    set_gains(&mut p, 2, AgentGains { omega, theta, pi: 0.0 });
    p.sim.x0 = vec![0.0, 0.0, 1.0];
    let cfg = &p.sim;
    let dt = cfg.dt;
    // e' = -(a + omega g) e - theta  while e > 0
    let decay = a + omega * g;
    let e0 = 1.0;
    let t_star = (1.0 + decay * e0 / theta).ln() / decay;

    let mut world = World::initial(cfg).unwrap();
    let mut e = e0;
    let mut crossed = None;
    for k in 0..cfg.steps() {
        let observed = world.x[2] - world.observers[0].x_hat[0];
        assert!((observed - e).abs() < 1e-12, "step {k}: {observed} vs recursion {e}");
        if crossed.is_none() && e < 0.0 {
            crossed = Some(k as f64 * dt);
        }
        let sign = if e >= 0.0 { 1.0 } else { -1.0 };
        e += dt * (-decay * e - theta * sign);
        step(cfg, &mut world).unwrap();
    }
    let crossed = crossed.expect("state error never crossed zero");
    assert!((crossed - t_star).abs() <= 10.0 * dt, "crossed at {crossed}, t* = {t_star}");
}
