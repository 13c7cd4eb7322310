//! JSON scenario files and their assembly into a runnable configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{Graph, KHopNetwork};
use crate::linalg::{Matrix, SymMatrix};
use crate::observer::{gather_members, SignMode};
use crate::sim::{self, Controller, LocalLinear, SimConfig, StateBox, World};
use crate::tol;
use crate::tuning::{
    tune_network, AgentGains, BoundSet, GainSet, Nonlinearity, PiecewiseLinear, PlantModel,
    TuningOptions,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSpec {
    /// Inline 1-based edge list.
    Inline { n: usize, edges: Vec<[usize; 2]> },
    /// Text edge list (`n` on the first line, then `a b` pairs), relative
    /// to the scenario file.
    File { file: PathBuf },
}

impl GraphSpec {
    pub fn load(&self, base: &Path) -> Result<Graph> {
        match self {
            GraphSpec::Inline { n, edges } => {
                Graph::from_one_based(*n, edges.iter().map(|e| (e[0], e[1])))
            }
            GraphSpec::File { file } => {
                let text = std::fs::read_to_string(base.join(file))?;
                Graph::parse_edge_list(&text)
            }
        }
    }

    fn inline(g: &Graph) -> Self {
        GraphSpec::Inline {
            n: g.n(),
            edges: g.edges().into_iter().map(|(a, b)| [a + 1, b + 1]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonlinearitySpec {
    Zero,
    Saturation { limit: f64 },
    Table { x: Vec<f64>, y: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub state_dim: usize,
    /// Row-major drift matrix; zero when absent.
    #[serde(default)]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_f")]
    pub f: NonlinearitySpec,
    /// Overrides the Lipschitz constant implied by `f`.
    #[serde(default)]
    pub lipschitz: Option<f64>,
}

fn default_f() -> NonlinearitySpec {
    NonlinearitySpec::Zero
}

impl PlantSpec {
    pub fn build(&self) -> Result<PlantModel> {
        let n = self.state_dim;
        if n == 0 {
            return Err(Error::InvalidConfig("state_dim must be >= 1".into()));
        }
        let a = match &self.a {
            Some(rows) => {
                let m = Matrix::from_rows(rows)?;
                if m.rows() != n || m.cols() != n {
                    return Err(Error::DimensionError {
                        expected: n,
                        got: m.rows(),
                    });
                }
                m
            }
            None => Matrix::zeros(n, n),
        };
        let f = match &self.f {
            NonlinearitySpec::Zero => Nonlinearity::Zero,
            NonlinearitySpec::Saturation { limit } => {
                if !(*limit > 0.0) {
                    return Err(Error::InvalidConfig("saturation limit must be positive".into()));
                }
                Nonlinearity::Saturation { limit: *limit }
            }
            NonlinearitySpec::Table { x, y } => {
                Nonlinearity::Table(PiecewiseLinear::new(x.clone(), y.clone())?)
            }
        };
        let plant = PlantModel::new(a, f)?;
        match self.lipschitz {
            Some(l) => plant.with_lipschitz(l),
            None => Ok(plant),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerSpec {
    Zero,
    /// Consensus over `target_graph`.
    KhopConsensus,
    /// `u_i = K x_i`.
    LocalLinear { gain: Vec<Vec<f64>> },
}

/// A bound given once for all agents or per agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAgent {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerAgent {
    pub fn expand(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            PerAgent::Uniform(v) => Ok(vec![*v; n]),
            PerAgent::Each(v) if v.len() == n => Ok(v.clone()),
            PerAgent::Each(v) => Err(Error::DimensionError {
                expected: n,
                got: v.len(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    #[serde(default)]
    pub d_u: Option<PerAgent>,
    #[serde(default)]
    pub d_udot: Option<PerAgent>,
    pub d_tilde_u: PerAgent,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainOverride {
    /// 1-based agent number.
    pub agent: usize,
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub pi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsSpec {
    /// Scalar design gain `G = g I`; chosen automatically when absent.
    pub g: Option<f64>,
    pub slack: f64,
    pub omega_slack: f64,
    pub omega_scale: f64,
    pub theta_scale: f64,
    pub pi_scale: f64,
    /// Applied after scaling.
    pub overrides: Vec<GainOverride>,
}

impl Default for GainsSpec {
    fn default() -> Self {
        Self {
            g: None,
            slack: tol::DEFAULT_SLACK,
            omega_slack: 0.0,
            omega_scale: 1.0,
            theta_scale: 1.0,
            pi_scale: 1.0,
            overrides: Vec::new(),
        }
    }
}

/// Initial values: a keyword or explicit per-agent vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitSpec {
    Keyword(InitKind),
    Explicit(Vec<Vec<f64>>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Zero,
    /// Uniform in `init_box`, drawn from the scenario seed.
    Random,
    /// Equal to the true value (estimates only).
    Truth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub min: PerAgent,
    pub max: PerAgent,
}

impl BoxSpec {
    fn build(&self, n: usize) -> Result<StateBox> {
        Ok(StateBox {
            min: self.min.expand(n)?,
            max: self.max.expand(n)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "random_init")]
    pub x0: InitSpec,
    #[serde(default = "random_init")]
    pub xhat0: InitSpec,
    #[serde(default = "zero_init")]
    pub uhat0: InitSpec,
    /// Sampling box for `random` initial values (per component).
    #[serde(default = "default_init_box")]
    pub init_box: BoxSpec,
    #[serde(default)]
    pub state_box: Option<BoxSpec>,
    #[serde(default)]
    pub conv_eps: Option<f64>,
    /// Boundary-layer width; discontinuous sign when absent.
    #[serde(default)]
    pub boundary_layer: Option<f64>,
    #[serde(default)]
    pub uhat_disturbance: f64,
    #[serde(default = "default_divergence")]
    pub divergence_limit: f64,
}

fn random_init() -> InitSpec {
    InitSpec::Keyword(InitKind::Random)
}

fn zero_init() -> InitSpec {
    InitSpec::Keyword(InitKind::Zero)
}

fn default_init_box() -> BoxSpec {
    BoxSpec {
        min: PerAgent::Uniform(0.0),
        max: PerAgent::Uniform(0.1),
    }
}

fn default_divergence() -> f64 {
    1e12
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub csv: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub decimate: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            csv: None,
            report: None,
            decimate: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub graph: GraphSpec,
    /// Controller topology; the communication graph when absent.
    #[serde(default)]
    pub target_graph: Option<GraphSpec>,
    pub k: usize,
    pub plant: PlantSpec,
    pub controller: ControllerSpec,
    pub bounds: BoundsSpec,
    #[serde(default)]
    pub gains: GainsSpec,
    pub sim: SimSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
}

/// A scenario with every derived object built.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub scenario: Scenario,
    pub plant: PlantModel,
    pub network: KHopNetwork,
    pub target: Graph,
    pub bounds: BoundSet,
    /// Gains as tuned, before scales and overrides.
    pub tuned: GainSet,
    /// Gains used in simulation.
    pub gains: GainSet,
    pub sim: SimConfig,
    pub hash: String,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if s.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                s.schema_version
            )));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut s = Self::from_json(&text)?;
        s.resolve_files(path.parent().unwrap_or(Path::new(".")))?;
        Ok(s)
    }

    /// Replaces graph file references with inline edge lists.
    pub fn resolve_files(&mut self, base: &Path) -> Result<()> {
        if let GraphSpec::File { .. } = self.graph {
            self.graph = GraphSpec::inline(&self.graph.load(base)?);
        }
        if let Some(t @ GraphSpec::File { .. }) = &self.target_graph {
            self.target_graph = Some(GraphSpec::inline(&t.load(base)?));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// SHA-256 of the compact canonical JSON.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Path 1-2-3-4 with `k = 3`, planar single integrators, target graph
    /// closing the cycle with edge 1-4, and gains tuned from
    /// `d_tilde_u = 0.5`, `d_udot = 1.0`, `G = 20 I`.
    pub fn reproduction() -> Self {
        Scenario {
            schema_version: SCHEMA_VERSION,
            name: "reproduction".into(),
            graph: GraphSpec::Inline {
                n: 4,
                edges: vec![[1, 2], [2, 3], [3, 4]],
            },
            target_graph: Some(GraphSpec::Inline {
                n: 4,
                edges: vec![[1, 2], [2, 3], [3, 4], [1, 4]],
            }),
            k: 3,
            plant: PlantSpec {
                state_dim: 2,
                a: None,
                f: NonlinearitySpec::Zero,
                lipschitz: None,
            },
            controller: ControllerSpec::KhopConsensus,
            bounds: BoundsSpec {
                d_u: None,
                d_udot: Some(PerAgent::Uniform(1.0)),
                d_tilde_u: PerAgent::Uniform(0.5),
            },
            gains: GainsSpec {
                g: Some(20.0),
                ..GainsSpec::default()
            },
            sim: SimSpec {
                dt: 1e-3,
                t_end: 20.0,
                seed: 2024,
                x0: random_init(),
                xhat0: random_init(),
                uhat0: zero_init(),
                init_box: default_init_box(),
                state_box: Some(BoxSpec {
                    min: PerAgent::Uniform(-1.0),
                    max: PerAgent::Uniform(1.0),
                }),
                conv_eps: None,
                boundary_layer: None,
                uhat_disturbance: 0.0,
                divergence_limit: default_divergence(),
            },
            outputs: OutputSpec {
                csv: Some("telemetry.csv".into()),
                report: Some("report.json".into()),
                decimate: 10,
            },
        }
    }

    /// The reproduction scenario with theta at a tenth of its tuned value and
    /// a persistent offset of 0.5 on the input estimates fed to the state
    /// observers.
    pub fn negative_control() -> Self {
        let mut s = Self::reproduction();
        s.name = "negative-control".into();
        s.gains.theta_scale = 0.1;
        s.sim.uhat_disturbance = 0.5;
        s
    }

    pub fn prepare(&self) -> Result<Prepared> {
        let base = Path::new(".");
        let graph = self.graph.load(base)?;
        let target = match &self.target_graph {
            Some(t) => t.load(base)?,
            None => graph.clone(),
        };
        let n = graph.n();
        let plant = self.plant.build()?;
        let network = KHopNetwork::new(graph, self.k)?;
        let bounds = BoundSet::new(
            self.bounds.d_u.as_ref().map(|b| b.expand(n)).transpose()?,
            self.bounds.d_udot.as_ref().map(|b| b.expand(n)).transpose()?,
            self.bounds.d_tilde_u.expand(n)?,
        )?;
        let opts = TuningOptions {
            g_scale: self.gains.g,
            design_matrix: None,
            slack: self.gains.slack,
            omega_slack: self.gains.omega_slack,
        };
        let tuned = tune_network(&network, &plant, &bounds, &opts)?;
        let mut gains = tuned.clone();
        self.apply_gain_edits(&mut gains, n)?;
        gains.refresh_margins(&network, &plant, &bounds)?;

        let controller = match &self.controller {
            ControllerSpec::Zero => Controller::Zero,
            ControllerSpec::KhopConsensus => Controller::KhopConsensus {
                target: target.clone(),
            },
            ControllerSpec::LocalLinear { gain } => {
                let m = Matrix::from_rows(gain)?;
                let d = plant.state_dim();
                if m.rows() != d || m.cols() != d {
                    return Err(Error::DimensionError {
                        expected: d,
                        got: m.rows(),
                    });
                }
                Controller::Generic(Arc::new(LocalLinear { gain: m }))
            }
        };
        let sim = self.sim_config(&network, &plant, controller, gains.clone())?;
        Ok(Prepared {
            scenario: self.clone(),
            plant,
            network,
            target,
            bounds,
            tuned,
            gains,
            sim,
            hash: self.hash(),
        })
    }

    fn apply_gain_edits(&self, gains: &mut GainSet, n: usize) -> Result<()> {
        let spec = &self.gains;
        for (name, s) in [
            ("omega_scale", spec.omega_scale),
            ("theta_scale", spec.theta_scale),
            ("pi_scale", spec.pi_scale),
        ] {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        for a in gains.agents.iter_mut().flatten() {
            a.omega *= spec.omega_scale;
            a.theta *= spec.theta_scale;
            a.pi *= spec.pi_scale;
        }
        for o in &spec.overrides {
            if o.agent == 0 || o.agent > n {
                return Err(Error::IndexOutOfRange {
                    index: o.agent,
                    n,
                });
            }
            let slot = gains.agents[o.agent - 1].as_mut().ok_or_else(|| {
                Error::InvalidConfig(format!("agent {} is not estimated by anyone", o.agent))
            })?;
            let AgentGains { omega, theta, pi } = slot;
            for (dst, src) in [(omega, o.omega), (theta, o.theta), (pi, o.pi)] {
                if let Some(v) = src {
                    if !(v >= 0.0) || !v.is_finite() {
                        return Err(Error::InvalidConfig(format!(
                            "gain override for agent {} must be finite and >= 0",
                            o.agent
                        )));
                    }
                    *dst = v;
                }
            }
        }
        Ok(())
    }

    fn sim_config(
        &self,
        network: &KHopNetwork,
        plant: &PlantModel,
        controller: Controller,
        gains: GainSet,
    ) -> Result<SimConfig> {
        let s = &self.sim;
        let n = network.n();
        let d = plant.state_dim();
        let init_box = s.init_box.build(d)?;
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let mut draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..d)
                .map(|c| rng.random_range(init_box.min[c]..=init_box.max[c]))
                .collect()
        };
        let x0: Vec<f64> = match &s.x0 {
            InitSpec::Keyword(InitKind::Zero) => vec![0.0; n * d],
            InitSpec::Keyword(InitKind::Random) => (0..n).flat_map(|_| draw(&mut rng)).collect(),
            InitSpec::Keyword(InitKind::Truth) => {
                return Err(Error::InvalidConfig("x0 cannot be \"truth\"".into()))
            }
            InitSpec::Explicit(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::InvalidConfig(format!("x0 needs {n} vectors of length {d}")));
                }
                rows.concat()
            }
        };
        let xhat0 = estimates(&s.xhat0, network, d, &x0, &mut rng, &mut draw, "xhat0")?;
        let mut cfg = SimConfig {
            dt: s.dt,
            t_end: s.t_end,
            plant: plant.clone(),
            network: network.clone(),
            controller,
            gains,
            x0,
            xhat0,
            uhat0: network.neighborhoods.iter().map(|nb| vec![0.0; nb.eta() * d]).collect(),
            state_box: s.state_box.as_ref().map(|b| b.build(d)).transpose()?,
            conv_eps: s.conv_eps,
            sign: match s.boundary_layer {
                Some(w) => SignMode::BoundaryLayer(w),
                None => SignMode::Discontinuous,
            },
            decimate: self.outputs.decimate,
            uhat_disturbance: s.uhat_disturbance,
            divergence_limit: s.divergence_limit,
        };
        if !matches!(s.uhat0, InitSpec::Keyword(InitKind::Zero)) {
            cfg.validate()?;
            let u0 = sim::controls(&cfg, &World::initial(&cfg)?)?;
            cfg.uhat0 = estimates(&s.uhat0, network, d, &u0, &mut rng, &mut draw, "uhat0")?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn estimates(
    spec: &InitSpec,
    network: &KHopNetwork,
    d: usize,
    truth: &[f64],
    rng: &mut ChaCha8Rng,
    draw: &mut impl FnMut(&mut ChaCha8Rng) -> Vec<f64>,
    name: &str,
) -> Result<Vec<Vec<f64>>> {
    network
        .neighborhoods
        .iter()
        .enumerate()
        .map(|(i, nb)| match spec {
            InitSpec::Keyword(InitKind::Zero) => Ok(vec![0.0; nb.eta() * d]),
            InitSpec::Keyword(InitKind::Random) => {
                Ok((0..nb.eta()).flat_map(|_| draw(rng)).collect())
            }
            InitSpec::Keyword(InitKind::Truth) => Ok(gather_members(truth, nb, d)),
            InitSpec::Explicit(rows) => match rows.get(i) {
                Some(r) if r.len() == nb.eta() * d => Ok(r.clone()),
                _ => Err(Error::InvalidConfig(format!(
                    "{name} for agent {} needs {} entries",
                    i + 1,
                    nb.eta() * d
                ))),
            },
        })
        .collect()
}

impl Prepared {
    pub fn state_dim(&self) -> usize {
        self.plant.state_dim()
    }

    /// Design matrix as a symmetric matrix.
    pub fn design(&self) -> &SymMatrix {
        &self.gains.g
    }
}
