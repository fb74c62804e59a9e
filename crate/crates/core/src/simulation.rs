//! Fixed-step integration of the closed-loop flows.
//!
//! Spheres: classical RK4 in ambient coordinates, then each agent is
//! renormalized. Rotations: `R ← exp(dt Ω) R` with a Gram–Schmidt cleanup
//! so round-off does not accumulate.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::energy::{potential, rate_from_inputs};
use crate::geometry::{reorthonormalize, rodrigues};
use crate::protocols::{
    check_agents, composite_omegas, inputs_flat, naive_omegas, rhs_flat, CircleProtocol, Network,
    RotationConfig, SphereConfig,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    /// Step size; `None` picks `0.01 / max f` (spheres) or `0.005 / max f` (SO(3)).
    pub dt: Option<f64>,
    pub t_max: f64,
    pub consensus_tol: f64,
    pub equilibrium_tol: f64,
    /// Keep every `record_every`-th state in the trajectory.
    pub record: bool,
    pub record_every: usize,
    /// Integrate the negated vector field.
    pub backward: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: None,
            t_max: 2000.0,
            consensus_tol: 1e-9,
            equilibrium_tol: 1e-10,
            record: false,
            record_every: 50,
            backward: false,
        }
    }
}

impl SimOptions {
    fn validate(&self) -> Result<()> {
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!("dt must be positive, got {dt}")));
            }
        }
        if !(self.t_max >= 0.0) || self.record_every == 0 {
            return Err(Error::Config("t_max must be nonnegative and record_every positive".into()));
        }
        Ok(())
    }

    /// `s_max` is the largest edge value `s` can take in the state space.
    fn step(&self, net: &Network, scale: f64, s_max: f64) -> Result<f64> {
        match self.dt {
            Some(dt) => Ok(dt),
            None => {
                let m = net.max_gain(s_max);
                if m <= 0.0 {
                    return Err(Error::Config("all gains vanish; give dt explicitly".into()));
                }
                Ok(scale / m)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Consensus,
    NonConsensusEquilibrium,
    Timeout,
}

#[derive(Debug, Clone)]
pub struct TrajectoryPoint<S> {
    pub t: f64,
    pub state: S,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationResult<S> {
    pub outcome: Outcome,
    pub final_state: S,
    pub elapsed: f64,
    pub steps: usize,
    pub dt: f64,
    pub terminal_residual: f64,
    pub max_edge_s: f64,
    pub final_energy: f64,
    /// Largest one-step increase of the potential (decrease when running
    /// backward), net of the `1e-8 · max(1, V)` allowance; ≤ 0 means
    /// monotone. Only meaningful for the sphere flow.
    pub max_energy_increase: f64,
    pub trajectory: Vec<TrajectoryPoint<S>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub outcome: Outcome,
    pub elapsed: f64,
    pub steps: usize,
    pub dt: f64,
    pub terminal_residual: f64,
    pub max_edge_s: f64,
    #[serde(rename = "V_final")]
    pub final_energy: f64,
}

impl<S> SimulationResult<S> {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            outcome: self.outcome,
            elapsed: self.elapsed,
            steps: self.steps,
            dt: self.dt,
            terminal_residual: self.terminal_residual,
            max_edge_s: self.max_edge_s,
            final_energy: self.final_energy,
        }
    }
}

fn check_finite(v: impl IntoIterator<Item = f64>, t: f64) -> Result<()> {
    if v.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::NonFinite { time: t })
    }
}

fn edge_s_sphere(net: &Network, d: usize, x: &[f64]) -> f64 {
    net.graph()
        .edges()
        .iter()
        .map(|e| 1.0 - crate::geometry::dot(&x[e.a * d..(e.a + 1) * d], &x[e.b * d..(e.b + 1) * d]))
        .fold(0.0, f64::max)
}

fn sphere_energy(net: &Network, d: usize, x: &[f64]) -> f64 {
    net.graph()
        .edges()
        .iter()
        .map(|e| {
            let s = 1.0 - crate::geometry::dot(&x[e.a * d..(e.a + 1) * d], &x[e.b * d..(e.b + 1) * d]);
            net.edge_gain(e).integral(s)
        })
        .sum()
}

pub fn integrate_sphere(
    cfg0: &SphereConfig,
    net: &Network,
    opts: &SimOptions,
) -> Result<SimulationResult<SphereConfig>> {
    check_agents(cfg0.len(), net)?;
    opts.validate()?;
    let dt = opts.step(net, 0.01, 2.0)?;
    let d = cfg0.ambient_dim();
    let len = cfg0.as_flat().len();
    let sign = if opts.backward { -1.0 } else { 1.0 };

    let mut x = cfg0.as_flat().to_vec();
    let mut k1 = vec![0.0; len];
    let mut k2 = vec![0.0; len];
    let mut k3 = vec![0.0; len];
    let mut k4 = vec![0.0; len];
    let mut tmp = vec![0.0; len];

    let mut t = 0.0;
    let mut steps = 0usize;
    let mut energy = sphere_energy(net, d, &x);
    let mut max_increase = f64::NEG_INFINITY;
    let mut trajectory = Vec::new();

    let outcome;
    let residual;
    loop {
        let r = rhs_flat(net, d, &x, &mut k1);
        if opts.record && steps.is_multiple_of(opts.record_every) {
            trajectory.push(TrajectoryPoint {
                t,
                state: SphereConfig::from_flat_unchecked(d, x.clone()),
                energy,
            });
        }
        let max_s = edge_s_sphere(net, d, &x);
        if max_s < opts.consensus_tol {
            (outcome, residual) = (Outcome::Consensus, r);
            break;
        }
        if r < opts.equilibrium_tol {
            (outcome, residual) = (Outcome::NonConsensusEquilibrium, r);
            break;
        }
        if t >= opts.t_max {
            (outcome, residual) = (Outcome::Timeout, r);
            break;
        }

        let h = sign * dt;
        for (y, (a, b)) in tmp.iter_mut().zip(x.iter().zip(&k1)) {
            *y = a + 0.5 * h * b;
        }
        rhs_flat(net, d, &tmp, &mut k2);
        for (y, (a, b)) in tmp.iter_mut().zip(x.iter().zip(&k2)) {
            *y = a + 0.5 * h * b;
        }
        rhs_flat(net, d, &tmp, &mut k3);
        for (y, (a, b)) in tmp.iter_mut().zip(x.iter().zip(&k3)) {
            *y = a + h * b;
        }
        rhs_flat(net, d, &tmp, &mut k4);
        for k in 0..len {
            x[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
        }
        for xi in x.chunks_exact_mut(d) {
            let n = crate::geometry::norm(xi);
            xi.iter_mut().for_each(|c| *c /= n);
        }
        steps += 1;
        t = steps as f64 * dt;
        check_finite(x.iter().copied(), t)?;

        let e = sphere_energy(net, d, &x);
        max_increase = max_increase.max(sign * (e - energy) - 1e-8 * energy.max(1.0));
        energy = e;
    }

    let final_state = SphereConfig::from_flat_unchecked(d, x);
    if opts.record && trajectory.last().is_none_or(|p| p.t != t) {
        trajectory.push(TrajectoryPoint {
            t,
            state: final_state.clone(),
            energy,
        });
    }
    Ok(SimulationResult {
        outcome,
        max_edge_s: final_state.max_edge_chordal(net.graph()),
        final_state,
        elapsed: t,
        steps,
        dt,
        terminal_residual: residual,
        final_energy: energy,
        max_energy_increase: max_increase,
        trajectory,
    })
}

/// `V̇` at a flattened state, for checking recorded trajectories.
pub fn sphere_energy_rate_flat(net: &Network, d: usize, x: &[f64]) -> f64 {
    let mut u = vec![0.0; x.len()];
    inputs_flat(net, d, x, &mut u);
    rate_from_inputs(d, x, &u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum So3Protocol {
    Naive,
    Composite(CircleProtocol),
}

pub fn integrate_so3(
    cfg0: &RotationConfig,
    net: &Network,
    protocol: So3Protocol,
    opts: &SimOptions,
) -> Result<SimulationResult<RotationConfig>> {
    check_agents(cfg0.len(), net)?;
    opts.validate()?;
    let dt = opts.step(net, 0.005, 6.0)?;
    let sign = if opts.backward { -1.0 } else { 1.0 };
    let mut rs: Vec<Matrix3<f64>> = cfg0.matrices().to_vec();
    let mut w = vec![Vector3::zeros(); rs.len()];

    let omegas = |rs: &[Matrix3<f64>], w: &mut [Vector3<f64>]| match protocol {
        So3Protocol::Naive => naive_omegas(net, rs, w),
        So3Protocol::Composite(c) => composite_omegas(net, &c, rs, w),
    };
    let energy_of = |rs: &[Matrix3<f64>]| {
        potential(&RotationConfig::from_matrices_unchecked(rs.to_vec()), net)
            .map(|e| e.total)
            .unwrap_or(f64::NAN)
    };

    let mut t = 0.0;
    let mut steps = 0usize;
    let mut trajectory = Vec::new();
    let outcome;
    let residual;
    loop {
        omegas(&rs, &mut w);
        let r = w.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if opts.record && steps.is_multiple_of(opts.record_every) {
            trajectory.push(TrajectoryPoint {
                t,
                state: RotationConfig::from_matrices_unchecked(rs.clone()),
                energy: energy_of(&rs),
            });
        }
        let max_s = net
            .graph()
            .edges()
            .iter()
            .map(|e| crate::protocols::rotation_chordal(&rs[e.a], &rs[e.b]))
            .fold(0.0, f64::max);
        if max_s < opts.consensus_tol {
            (outcome, residual) = (Outcome::Consensus, r);
            break;
        }
        if r < opts.equilibrium_tol {
            (outcome, residual) = (Outcome::NonConsensusEquilibrium, r);
            break;
        }
        if t >= opts.t_max {
            (outcome, residual) = (Outcome::Timeout, r);
            break;
        }
        for (rm, wi) in rs.iter_mut().zip(&w) {
            *rm = rodrigues(&(wi * (sign * dt))) * *rm;
            reorthonormalize(rm);
        }
        steps += 1;
        t = steps as f64 * dt;
        check_finite(rs.iter().flat_map(|m| m.iter().copied()), t)?;
    }

    let final_state = RotationConfig::from_matrices_unchecked(rs);
    let final_energy = energy_of(final_state.matrices());
    if opts.record && trajectory.last().is_none_or(|p| p.t != t) {
        trajectory.push(TrajectoryPoint {
            t,
            state: final_state.clone(),
            energy: final_energy,
        });
    }
    Ok(SimulationResult {
        outcome,
        max_edge_s: final_state.max_edge_chordal(net.graph()),
        final_state,
        elapsed: t,
        steps,
        dt,
        terminal_residual: residual,
        final_energy,
        max_energy_increase: f64::NAN,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{construct, EquilibriumKind};
    use crate::gains::GainFunction;
    use crate::geometry::{sample_uniform_rotation, Rotation3, UnitVector};
    use crate::topology::{Graph, GraphKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(kind: GraphKind, n: usize, k: f64) -> Network {
        Network::uniform(Graph::named(kind, Some(n)).unwrap(), GainFunction::Constant(k)).unwrap()
    }

    #[test]
    fn default_steps() {
        let n = net(GraphKind::Cycle, 6, 5.0);
        assert_eq!(SimOptions::default().step(&n, 0.01, 2.0).unwrap(), 0.002);
        assert_eq!(SimOptions::default().step(&n, 0.005, 6.0).unwrap(), 0.001);
    }

    #[test]
    fn consensus_start_stops_immediately() {
        let cfg = SphereConfig::consensus(&UnitVector::basis(3, 0), 4);
        let r = integrate_sphere(&cfg, &net(GraphKind::Cycle, 4, 1.0), &SimOptions::default()).unwrap();
        assert_eq!((r.outcome, r.steps, r.elapsed), (Outcome::Consensus, 0, 0.0));

        let rot = sample_uniform_rotation(&mut ChaCha8Rng::seed_from_u64(1));
        let cfg = RotationConfig::new(vec![rot; 3]).unwrap();
        let r = integrate_so3(&cfg, &net(GraphKind::Cycle, 3, 1.0), So3Protocol::Naive, &SimOptions::default()).unwrap();
        assert_eq!((r.outcome, r.steps), (Outcome::Consensus, 0));
    }

    #[test]
    fn exact_octahedron_is_an_equilibrium() {
        let (cfg, graph) = construct(&EquilibriumKind::Octahedron).unwrap();
        let n = Network::uniform(graph, GainFunction::Constant(1.0)).unwrap();
        let r = integrate_sphere(&cfg, &n, &SimOptions::default()).unwrap();
        assert_eq!((r.outcome, r.steps), (Outcome::NonConsensusEquilibrium, 0));
    }

    #[test]
    fn perturbed_octahedron_reaches_consensus() {
        let (cfg, graph) = construct(&EquilibriumKind::Octahedron).unwrap();
        let n = Network::uniform(graph, GainFunction::Constant(1.0)).unwrap();
        // A symmetry axis such as e_3 would leave the polar agents pinned.
        let push: Vec<f64> = (0..6).flat_map(|_| [1.0, 2.0, 3.0]).collect();
        let start = cfg.retract(&push, 1e-3).unwrap();
        let r = integrate_sphere(&start, &n, &SimOptions::default()).unwrap();
        assert_eq!(r.outcome, Outcome::Consensus);
        assert!(r.max_energy_increase <= 0.0);
        for x in r.final_state.states() {
            assert!((crate::geometry::norm(x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_rotations_merge() {
        let cfg = RotationConfig::new(vec![Rotation3::identity(), Rotation3::exp(&Vector3::new(0.1, -0.2, 0.05))]).unwrap();
        let r = integrate_so3(&cfg, &net(GraphKind::Path, 2, 1.0), So3Protocol::Naive, &SimOptions::default()).unwrap();
        assert_eq!(r.outcome, Outcome::Consensus);
        assert!(r.final_state.orthogonality_error() < 1e-12);
    }

    #[test]
    fn non_finite_state_aborts() {
        let cfg = SphereConfig::sample(2, 4, &mut ChaCha8Rng::seed_from_u64(3));
        let opts = SimOptions { dt: Some(1e200), ..Default::default() };
        let err = integrate_sphere(&cfg, &net(GraphKind::Complete, 4, 1e200), &opts).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn timeout_is_reported() {
        let cfg = SphereConfig::sample(2, 6, &mut ChaCha8Rng::seed_from_u64(4));
        let opts = SimOptions { t_max: 0.05, ..Default::default() };
        let r = integrate_sphere(&cfg, &net(GraphKind::Cycle, 6, 1.0), &opts).unwrap();
        assert_eq!(r.outcome, Outcome::Timeout);
        assert!(r.elapsed >= 0.05);
    }

    #[test]
    fn recording_is_decimated() {
        let cfg = SphereConfig::sample(2, 3, &mut ChaCha8Rng::seed_from_u64(5));
        let opts = SimOptions { t_max: 1.0, dt: Some(0.01), record: true, record_every: 10, ..Default::default() };
        let r = integrate_sphere(&cfg, &net(GraphKind::Path, 3, 1.0), &opts).unwrap();
        assert_eq!(r.trajectory.len(), 11);
        assert!((r.trajectory[1].t - 0.1).abs() < 1e-12);
        assert!(r.trajectory.windows(2).all(|w| w[1].energy <= w[0].energy + 1e-12));
    }
}
