//! Potential function `V = Σ_{ij∈E} ∫_0^{s_ij} f_ij(r) dr` and its rate.

use serde::Serialize;

use crate::geometry::{chordal, dot};
use crate::protocols::{check_agents, inputs_flat, rotation_chordal, Network, RotationConfig, SphereConfig};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyValue {
    #[serde(rename = "V")]
    pub total: f64,
    /// One term per edge, in the graph's edge order.
    pub per_edge: Vec<f64>,
}

/// Configurations the potential is defined on. The rotation-space version
/// uses `s_ij = 3 - <R_i, R_j>` and carries an extra factor `1/2`.
pub trait EnergySpace {
    const WEIGHT: f64;
    fn agents(&self) -> usize;
    fn edge_s(&self, a: usize, b: usize) -> f64;
}

impl EnergySpace for SphereConfig {
    const WEIGHT: f64 = 1.0;
    fn agents(&self) -> usize {
        self.len()
    }
    fn edge_s(&self, a: usize, b: usize) -> f64 {
        chordal(self.state(a), self.state(b))
    }
}

impl EnergySpace for RotationConfig {
    const WEIGHT: f64 = 0.5;
    fn agents(&self) -> usize {
        self.len()
    }
    fn edge_s(&self, a: usize, b: usize) -> f64 {
        rotation_chordal(self.matrix(a), self.matrix(b))
    }
}

pub fn potential<C: EnergySpace>(cfg: &C, net: &Network) -> Result<EnergyValue> {
    check_agents(cfg.agents(), net)?;
    let per_edge: Vec<f64> = net
        .graph()
        .edges()
        .iter()
        .map(|e| C::WEIGHT * net.edge_gain(e).integral(cfg.edge_s(e.a, e.b)))
        .collect();
    Ok(EnergyValue {
        total: per_edge.iter().sum(),
        per_edge,
    })
}

/// `V̇ = -Σ_i (‖u_i‖² - <u_i, x_i>²)` along the sphere flow.
///
/// Each edge term `f_ij ṡ_ij` contributes `-<ẋ_i, f_ij x_j>` to agent `i`
/// and `-<ẋ_j, f_ij x_i>` to agent `j`, so summing over agents counts every
/// edge exactly once.
pub fn energy_rate(cfg: &SphereConfig, net: &Network) -> Result<f64> {
    check_agents(cfg.len(), net)?;
    let mut u = vec![0.0; cfg.as_flat().len()];
    inputs_flat(net, cfg.ambient_dim(), cfg.as_flat(), &mut u);
    Ok(rate_from_inputs(cfg.ambient_dim(), cfg.as_flat(), &u))
}

pub(crate) fn rate_from_inputs(d: usize, x: &[f64], u: &[f64]) -> f64 {
    -x.chunks_exact(d)
        .zip(u.chunks_exact(d))
        .map(|(xi, ui)| {
            let a = dot(ui, xi);
            // ‖P u‖² computed directly; the difference form loses digits near alignment
            ui.iter().zip(xi).map(|(uk, xk)| (uk - a * xk).powi(2)).sum::<f64>()
        })
        .sum::<f64>()
}

/// Euclidean gradient of the potential's ambient extension, `∇_i U = -u_i`.
pub fn gradient(cfg: &SphereConfig, net: &Network) -> Result<Vec<Vec<f64>>> {
    check_agents(cfg.len(), net)?;
    let mut u = vec![0.0; cfg.as_flat().len()];
    inputs_flat(net, cfg.ambient_dim(), cfg.as_flat(), &mut u);
    Ok(u.chunks_exact(cfg.ambient_dim())
        .map(|c| c.iter().map(|v| -v).collect())
        .collect())
}
