//! Named equilibrium configurations and the aligned / anti-aligned /
//! null-input split of equilibrium agents.

use std::f64::consts::PI;

use serde::Serialize;

use crate::geometry::{dot, norm, Polyhedron, UnitVector};
use crate::protocols::{check_agents, inputs_flat, rhs_flat, Network, SphereConfig};
use crate::topology::Graph;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum EquilibriumKind {
    Consensus { point: UnitVector, graph: Graph },
    Tetrahedron,
    Octahedron,
    Cube,
    Icosahedron,
    Dodecahedron,
    /// `N` agents equally spaced on the equator of `S^2`, joined in a cycle.
    GreatCircleCycle(usize),
}

impl EquilibriumKind {
    pub fn polyhedron(&self) -> Option<Polyhedron> {
        match self {
            Self::Tetrahedron => Some(Polyhedron::Tetrahedron),
            Self::Octahedron => Some(Polyhedron::Octahedron),
            Self::Cube => Some(Polyhedron::Cube),
            Self::Icosahedron => Some(Polyhedron::Icosahedron),
            Self::Dodecahedron => Some(Polyhedron::Dodecahedron),
            _ => None,
        }
    }
}

pub fn construct(kind: &EquilibriumKind) -> Result<(SphereConfig, Graph)> {
    if let Some(p) = kind.polyhedron() {
        let data = p.vertices().concat();
        return Ok((SphereConfig::from_flat(3, data)?, Graph::polyhedral(p)));
    }
    match kind {
        EquilibriumKind::Consensus { point, graph } => {
            Ok((SphereConfig::consensus(point, graph.num_nodes()), graph.clone()))
        }
        &EquilibriumKind::GreatCircleCycle(n) => {
            let graph = Graph::named(crate::topology::GraphKind::Cycle, Some(n))?;
            let data = (0..n)
                .flat_map(|k| {
                    let a = 2.0 * PI * k as f64 / n as f64;
                    [a.cos(), a.sin(), 0.0]
                })
                .collect();
            Ok((SphereConfig::from_flat(3, data)?, graph))
        }
        _ => unreachable!("polyhedral kinds handled above"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    /// `x_i = u_i / ‖u_i‖`
    Aligned,
    /// `x_i = -u_i / ‖u_i‖`
    AntiAligned,
    /// `u_i = 0`
    NullInput,
}

pub const NULL_INPUT_TOL: f64 = 1e-10;

pub fn categorize(cfg: &SphereConfig, net: &Network) -> Result<Vec<Category>> {
    check_agents(cfg.len(), net)?;
    let d = cfg.ambient_dim();
    let mut u = vec![0.0; cfg.as_flat().len()];
    let residual = rhs_flat(net, d, cfg.as_flat(), &mut u);
    if residual >= crate::linearization::EQUILIBRIUM_RESIDUAL {
        return Err(Error::NotEquilibrium(residual));
    }
    inputs_flat(net, d, cfg.as_flat(), &mut u);
    Ok(cfg
        .states()
        .zip(u.chunks_exact(d))
        .map(|(x, ui)| {
            if norm(ui) < NULL_INPUT_TOL {
                Category::NullInput
            } else if dot(ui, x) > 0.0 {
                Category::Aligned
            } else {
                Category::AntiAligned
            }
        })
        .collect())
}
