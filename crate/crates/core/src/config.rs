//! JSON experiment descriptions.
//!
//! ```json
//! {
//!   "space": {"sphere": 2},
//!   "graph": {"kind": "cycle", "n": 6},
//!   "gain": {"constant": 5.0},
//!   "initial": {"random": {"seed": 1}},
//!   "options": {"t_max": 500}
//! }
//! ```
//!
//! `space` is `{"sphere": n}` or `"so3"`; rotation runs also take
//! `"protocol": "naive"` or `{"composite": {"n_bound": 6}}`. A graph is
//! either named (`{"kind": ..., "n": ...}`) or literal
//! (`{"n_nodes": 3, "edges": [[0, 1], [1, 2]]}`). Gains are written
//! `{"constant": k}`, `{"power": k}` or as strings `"constant:k"`,
//! `"power:k"`; with several gains use `"gains": [...]` and assign them
//! with `"edge_gains": [[i, j, index], ...]`.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::equilibria::{construct, EquilibriumKind};
use crate::experiments::Space;
use crate::gains::{check_admissible, AdmissibilityReport, GainFunction, DEFAULT_GRID_POINTS};
use crate::geometry::{Rotation3, UnitVector};
use crate::protocols::{Network, RotationConfig, SphereConfig};
use crate::simulation::{SimOptions, So3Protocol};
use crate::topology::{Graph, GraphKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceSpec {
    Sphere(usize),
    So3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum GraphSpec {
    Named { kind: GraphKind, n: Option<usize> },
    Literal { n_nodes: usize, edges: Vec<(usize, usize)> },
}

impl GraphSpec {
    pub fn build(&self) -> Result<Graph> {
        match self {
            GraphSpec::Named { kind, n } => Graph::named(*kind, *n),
            GraphSpec::Literal { n_nodes, edges } => Graph::from_edges(*n_nodes, edges),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", try_from = "GainRepr")]
pub enum GainSpec {
    Constant(f64),
    Power(u32),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GainRepr {
    Text(String),
    Map(GainMap),
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum GainMap {
    Constant(f64),
    Power(u32),
}

impl TryFrom<GainRepr> for GainSpec {
    type Error = Error;
    fn try_from(r: GainRepr) -> Result<Self> {
        match r {
            GainRepr::Text(s) => s.parse(),
            GainRepr::Map(GainMap::Constant(k)) => Ok(GainSpec::Constant(k)),
            GainRepr::Map(GainMap::Power(k)) => Ok(GainSpec::Power(k)),
        }
    }
}

impl FromStr for GainSpec {
    type Err = Error;
    /// `constant:k` or `power:k`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("gain `{s}` is not `constant:<k>` or `power:<k>`"));
        let (family, arg) = s.trim().split_once(':').ok_or_else(bad)?;
        match family {
            "constant" => {
                let k: f64 = arg.parse().map_err(|_| bad())?;
                if !k.is_finite() {
                    return Err(bad());
                }
                Ok(GainSpec::Constant(k))
            }
            "power" => Ok(GainSpec::Power(arg.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

impl From<GainSpec> for GainFunction {
    fn from(g: GainSpec) -> Self {
        match g {
            GainSpec::Constant(k) => GainFunction::Constant(k),
            GainSpec::Power(k) => GainFunction::Power(k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumName {
    Consensus,
    Tetrahedron,
    Octahedron,
    Cube,
    Icosahedron,
    Dodecahedron,
    GreatCircleCycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumSpec {
    pub kind: EquilibriumName,
    /// Agent count for `great_circle_cycle`.
    #[serde(default)]
    pub n: Option<usize>,
    /// Common state for `consensus`; defaults to `e_1`.
    #[serde(default)]
    pub point: Option<UnitVector>,
}

impl EquilibriumSpec {
    /// Resolves to a constructor input. `graph` is needed only for consensus.
    pub fn kind(&self, graph: Option<&Graph>, ambient: usize) -> Result<EquilibriumKind> {
        Ok(match self.kind {
            EquilibriumName::Consensus => EquilibriumKind::Consensus {
                point: self.point.clone().unwrap_or_else(|| UnitVector::basis(ambient, 0)),
                graph: graph
                    .cloned()
                    .ok_or_else(|| Error::Config("graph: consensus equilibrium needs a graph".into()))?,
            },
            EquilibriumName::Tetrahedron => EquilibriumKind::Tetrahedron,
            EquilibriumName::Octahedron => EquilibriumKind::Octahedron,
            EquilibriumName::Cube => EquilibriumKind::Cube,
            EquilibriumName::Icosahedron => EquilibriumKind::Icosahedron,
            EquilibriumName::Dodecahedron => EquilibriumKind::Dodecahedron,
            EquilibriumName::GreatCircleCycle => EquilibriumKind::GreatCircleCycle(
                self.n
                    .ok_or_else(|| Error::Config("initial.equilibrium.n: agent count required".into()))?,
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Random { seed: u64 },
    States(SphereConfig),
    Rotations(RotationConfig),
    Equilibrium(EquilibriumSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpaceSpec,
    #[serde(default)]
    pub protocol: Option<So3Protocol>,
    #[serde(default)]
    pub graph: Option<GraphSpec>,
    #[serde(default)]
    pub gain: Option<GainSpec>,
    #[serde(default)]
    pub gains: Vec<GainSpec>,
    #[serde(default)]
    pub edge_gains: Vec<(usize, usize, usize)>,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub options: SimOptions,
    #[serde(default)]
    pub allow_inadmissible: bool,
}

#[derive(Debug, Clone)]
pub enum InitialState {
    Sphere(SphereConfig),
    Rotations(RotationConfig),
}

/// A checked, ready-to-run experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub space: Space,
    pub network: Network,
    pub initial: Option<InitialState>,
    pub options: SimOptions,
    pub admissibility: Vec<AdmissibilityReport>,
}

impl ExperimentConfig {
    /// Parses JSON; errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "config".to_string() } else { path };
            Error::Config(format!("{path}: {}", e.inner()))
        })
    }

    /// Builds the network and initial state and checks gain admissibility
    /// on spheres. `allow_inadmissible` overrides the flag in the file.
    pub fn resolve(&self, allow_inadmissible: bool) -> Result<Scenario> {
        let space = match (self.space, self.protocol) {
            (SpaceSpec::Sphere(0), _) => return Err(Error::Config("space.sphere: dimension must be at least 1".into())),
            (SpaceSpec::Sphere(n), None) => Space::Sphere(n),
            (SpaceSpec::Sphere(_), Some(_)) => {
                return Err(Error::Config("protocol: only rotation spaces take a protocol".into()))
            }
            (SpaceSpec::So3, p) => Space::So3(p.unwrap_or(So3Protocol::Naive)),
        };
        let ambient = match space {
            Space::Sphere(n) => n + 1,
            Space::So3(_) => 3,
        };

        let mut graph = self.graph.as_ref().map(GraphSpec::build).transpose().map_err(|e| at("graph", e))?;
        let mut initial = None;
        match &self.initial {
            None | Some(InitialSpec::Random { .. }) => {}
            Some(InitialSpec::States(cfg)) => {
                if !matches!(space, Space::Sphere(_)) {
                    return Err(Error::Config("initial.states: rotation spaces take `rotations`".into()));
                }
                initial = Some(InitialState::Sphere(cfg.clone()));
            }
            Some(InitialSpec::Rotations(cfg)) => {
                if matches!(space, Space::Sphere(_)) {
                    return Err(Error::Config("initial.rotations: sphere spaces take `states`".into()));
                }
                initial = Some(InitialState::Rotations(cfg.clone()));
            }
            Some(InitialSpec::Equilibrium(eq)) => {
                let on_sphere = matches!(space, Space::Sphere(_));
                if !on_sphere || (ambient != 3 && eq.kind != EquilibriumName::Consensus) {
                    return Err(Error::Config("initial.equilibrium: named equilibria live on S^2".into()));
                }
                let (cfg, eq_graph) = construct(&eq.kind(graph.as_ref(), ambient)?).map_err(|e| at("initial.equilibrium", e))?;
                if let Some(g) = &graph {
                    if g.num_nodes() != eq_graph.num_nodes() {
                        return Err(Error::Config(format!(
                            "graph: {} nodes, but the equilibrium has {} agents",
                            g.num_nodes(),
                            eq_graph.num_nodes()
                        )));
                    }
                } else {
                    graph = Some(eq_graph);
                }
                initial = Some(InitialState::Sphere(cfg));
            }
        }
        let mut graph = graph.ok_or_else(|| Error::Config("graph: missing".into()))?;

        let gains: Vec<GainSpec> = match (self.gain, self.gains.is_empty()) {
            (Some(g), true) => vec![g],
            (None, false) => self.gains.clone(),
            (None, true) => return Err(Error::Config("gain: missing".into())),
            (Some(_), false) => return Err(Error::Config("gains: give either `gain` or `gains`, not both".into())),
        };
        for (k, &(i, j, idx)) in self.edge_gains.iter().enumerate() {
            if idx >= gains.len() {
                return Err(Error::Config(format!("edge_gains[{k}]: no gain #{idx}")));
            }
            graph.set_edge_gain(i, j, idx).map_err(|e| at(&format!("edge_gains[{k}]"), e))?;
        }
        let gains: Vec<GainFunction> = gains.into_iter().map(Into::into).collect();

        let mut admissibility = Vec::new();
        if let Space::Sphere(n) = space {
            for (k, g) in gains.iter().enumerate() {
                let report = check_admissible(g, n, DEFAULT_GRID_POINTS)?;
                if !report.admissible && !(allow_inadmissible || self.allow_inadmissible) {
                    return Err(Error::InvalidGain(format!(
                        "gains[{k}]: {g} is not admissible on S^{n} ({}); pass --allow-inadmissible to run it anyway",
                        describe(&report)
                    )));
                }
                admissibility.push(report);
            }
        }
        let network = Network::new(graph, gains).map_err(|e| at("graph", e))?;

        let initial = match (initial, &self.initial) {
            (Some(s), _) => Some(s),
            (None, Some(InitialSpec::Random { seed })) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Some(match space {
                    Space::Sphere(n) => InitialState::Sphere(SphereConfig::sample(n, network.num_agents(), &mut rng)),
                    Space::So3(_) => InitialState::Rotations(RotationConfig::sample(network.num_agents(), &mut rng)),
                })
            }
            (None, _) => None,
        };
        match &initial {
            Some(InitialState::Sphere(c)) if c.len() != network.num_agents() || c.ambient_dim() != ambient => {
                return Err(Error::Config(format!(
                    "initial: {} agents in R^{}, expected {} agents in R^{ambient}",
                    c.len(),
                    c.ambient_dim(),
                    network.num_agents()
                )));
            }
            Some(InitialState::Rotations(c)) if c.len() != network.num_agents() => {
                return Err(Error::Config(format!(
                    "initial.rotations: {} agents, graph has {}",
                    c.len(),
                    network.num_agents()
                )));
            }
            _ => {}
        }

        Ok(Scenario {
            space,
            network,
            initial,
            options: self.options.clone(),
            admissibility,
        })
    }
}

fn at(field: &str, e: Error) -> Error {
    Error::Config(format!("{field}: {e}"))
}

fn describe(r: &AdmissibilityReport) -> String {
    use crate::gains::ConditionVerdict::Fail;
    match (r.condition_i, r.condition_iii) {
        (Fail { witness, .. }, _) => format!("f ≤ 0 at s = {witness}"),
        (_, Fail { witness, value }) => format!("condition (iii) fails at s = {witness} with value {value:.3e}"),
        _ => "admissible".into(),
    }
}

/// Rotation configuration from unit quaternions `[w, x, y, z]`.
pub fn rotations_from_quaternions(qs: &[[f64; 4]]) -> Result<RotationConfig> {
    RotationConfig::new(qs.iter().map(|q| Rotation3::from_quaternion(*q)).collect::<Result<_>>()?)
}
