//! Consensus control laws and closed-loop right-hand sides.
//!
//! On `S^n` every agent applies `u_i = Σ_{j∈N_i} f_ij(s_ij) x_j` with
//! `s_ij = 1 - <x_i, x_j>`, and moves along the tangent projection
//! `ẋ_i = (I - x_i⊗x_i) u_i`. On SO(3) the agents follow `Ṙ_i = Ω_i R_i` with
//! `Ω_i` given either by the naive relative-rotation law or by the composite
//! law that drives the first body axis with the sphere protocol and the
//! remaining axes with a reshaped circle protocol.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize, Serializer};

use crate::gains::GainFunction;
use crate::geometry::{
    self, chordal, dot, project, project_in_place, sample_uniform_rotation, sample_unit_sphere, skew,
    Rotation3, TangentVector, UnitVector,
};
use crate::topology::{Edge, Graph};
use crate::{Error, Result};

/// Tolerance on agent norms accepted by [`SphereConfig::from_flat`].
pub const CONFIG_UNIT_TOL: f64 = 1e-10;

/// A connected graph together with the gain functions its edges refer to.
#[derive(Debug, Clone)]
pub struct Network {
    graph: Graph,
    gains: Vec<GainFunction>,
}

impl Network {
    /// Rejects disconnected graphs and edges whose gain index has no entry
    /// in `gains`.
    pub fn new(graph: Graph, gains: Vec<GainFunction>) -> Result<Self> {
        if !graph.is_connected() {
            return Err(Error::Disconnected);
        }
        if let Some(e) = graph.edges().iter().find(|e| e.gain >= gains.len()) {
            return Err(Error::InvalidGraph(format!(
                "edge {{{}, {}}} refers to gain #{} but only {} gain(s) given",
                e.a,
                e.b,
                e.gain,
                gains.len()
            )));
        }
        Ok(Self { graph, gains })
    }

    /// Every edge uses `gain`.
    pub fn uniform(graph: Graph, gain: GainFunction) -> Result<Self> {
        Self::new(graph, vec![gain])
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn gains(&self) -> &[GainFunction] {
        &self.gains
    }

    #[inline]
    pub fn edge_gain(&self, e: &Edge) -> &GainFunction {
        &self.gains[e.gain]
    }

    pub fn num_agents(&self) -> usize {
        self.graph.num_nodes()
    }

    /// Largest `|f|` over all gains on `[0, hi]`.
    pub fn max_gain(&self, hi: f64) -> f64 {
        self.gains.iter().map(|g| g.max_abs_on(hi)).fold(0.0, f64::max)
    }

    /// True if every edge uses the same constant gain.
    pub fn constant_gain(&self) -> Option<f64> {
        let mut used = self.graph.edges().iter().map(|e| self.edge_gain(e));
        let first = match used.next()? {
            GainFunction::Constant(k) => *k,
            _ => return None,
        };
        used.all(|g| matches!(g, GainFunction::Constant(k) if *k == first))
            .then_some(first)
    }
}

/// States of `N` agents on `S^n`, stored contiguously with stride `n + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereConfig {
    ambient: usize,
    data: Vec<f64>,
}

impl SphereConfig {
    pub fn new(states: Vec<UnitVector>) -> Result<Self> {
        let ambient = states
            .first()
            .ok_or_else(|| Error::Config("configuration needs at least one agent".into()))?
            .ambient_dim();
        let mut data = Vec::with_capacity(ambient * states.len());
        for s in states {
            if s.ambient_dim() != ambient {
                return Err(Error::DimensionMismatch {
                    expected: ambient,
                    found: s.ambient_dim(),
                });
            }
            data.extend(s.into_coords());
        }
        Ok(Self { ambient, data })
    }

    /// Wraps a flat buffer, checking every agent is unit length to
    /// [`CONFIG_UNIT_TOL`].
    pub fn from_flat(ambient: usize, data: Vec<f64>) -> Result<Self> {
        if ambient < 2 || data.is_empty() || !data.len().is_multiple_of(ambient) {
            return Err(Error::Config(format!(
                "buffer of length {} does not hold whole agents of dimension {ambient}",
                data.len()
            )));
        }
        for x in data.chunks_exact(ambient) {
            let n = geometry::norm(x);
            if !n.is_finite() || (n - 1.0).abs() > CONFIG_UNIT_TOL {
                return Err(Error::NotUnit { norm: n });
            }
        }
        Ok(Self { ambient, data })
    }

    pub(crate) fn from_flat_unchecked(ambient: usize, data: Vec<f64>) -> Self {
        Self { ambient, data }
    }

    /// All agents at the common point `c`.
    pub fn consensus(c: &UnitVector, agents: usize) -> Self {
        Self {
            ambient: c.ambient_dim(),
            data: c.coords().repeat(agents),
        }
    }

    /// Independent uniform samples on `S^n`.
    pub fn sample<R: Rng + ?Sized>(n: usize, agents: usize, rng: &mut R) -> Self {
        let mut data = Vec::with_capacity((n + 1) * agents);
        for _ in 0..agents {
            data.extend_from_slice(sample_unit_sphere(n, rng).coords());
        }
        Self { ambient: n + 1, data }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.ambient
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn sphere_dim(&self) -> usize {
        self.ambient - 1
    }

    #[inline]
    pub fn state(&self, i: usize) -> &[f64] {
        &self.data[i * self.ambient..(i + 1) * self.ambient]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.ambient)
    }

    pub fn unit_vector(&self, i: usize) -> UnitVector {
        UnitVector::normalize(self.state(i).to_vec()).expect("agent state is unit length")
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// `max_{ij ∈ E} s_ij`.
    pub fn max_edge_chordal(&self, graph: &Graph) -> f64 {
        graph
            .edges()
            .iter()
            .map(|e| chordal(self.state(e.a), self.state(e.b)))
            .fold(0.0, f64::max)
    }

    pub fn edge_chordals(&self, graph: &Graph) -> Vec<f64> {
        graph
            .edges()
            .iter()
            .map(|e| chordal(self.state(e.a), self.state(e.b)))
            .collect()
    }

    /// `x_i ← (x_i + eps·v_i) / ‖x_i + eps·v_i‖` for a flat direction `v`.
    pub fn retract(&self, direction: &[f64], eps: f64) -> Result<Self> {
        if direction.len() != self.data.len() {
            return Err(Error::DimensionMismatch {
                expected: self.data.len(),
                found: direction.len(),
            });
        }
        let mut data: Vec<f64> = self.data.iter().zip(direction).map(|(x, v)| x + eps * v).collect();
        for x in data.chunks_exact_mut(self.ambient) {
            let n = geometry::norm(x);
            if n < 1e-300 {
                return Err(Error::NotUnit { norm: n });
            }
            x.iter_mut().for_each(|c| *c /= n);
        }
        Ok(Self {
            ambient: self.ambient,
            data,
        })
    }

    /// Applies the linear map `q` (row-major, `ambient × ambient`) to every agent.
    pub fn transformed(&self, q: &[f64]) -> Self {
        let d = self.ambient;
        assert_eq!(q.len(), d * d);
        let mut data = vec![0.0; self.data.len()];
        for (x, y) in self.data.chunks_exact(d).zip(data.chunks_exact_mut(d)) {
            for r in 0..d {
                y[r] = dot(&q[r * d..(r + 1) * d], x);
            }
        }
        Self { ambient: d, data }
    }
}

impl Serialize for SphereConfig {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.states())
    }
}

impl<'de> Deserialize<'de> for SphereConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let ambient = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ambient) {
            return Err(serde::de::Error::custom("agents have differing dimensions"));
        }
        SphereConfig::from_flat(ambient, rows.concat()).map_err(serde::de::Error::custom)
    }
}

/// States of `N` agents on SO(3).
#[derive(Debug, Clone, PartialEq)]
pub struct RotationConfig {
    states: Vec<Matrix3<f64>>,
}

impl RotationConfig {
    pub fn new(states: Vec<Rotation3>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Config("configuration needs at least one agent".into()));
        }
        Ok(Self {
            states: states.into_iter().map(|r| *r.matrix()).collect(),
        })
    }

    pub(crate) fn from_matrices_unchecked(states: Vec<Matrix3<f64>>) -> Self {
        Self { states }
    }

    pub fn sample<R: Rng + ?Sized>(agents: usize, rng: &mut R) -> Self {
        Self {
            states: (0..agents).map(|_| *sample_uniform_rotation(rng).matrix()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    #[inline]
    pub fn matrix(&self, i: usize) -> &Matrix3<f64> {
        &self.states[i]
    }

    pub fn matrices(&self) -> &[Matrix3<f64>] {
        &self.states
    }

    pub fn rotation(&self, i: usize) -> Rotation3 {
        Rotation3::new(self.states[i]).expect("stored rotations stay orthogonal")
    }

    /// First body axes `x_i = R_i e_1` as a configuration on `S^2`.
    pub fn reduced_attitudes(&self) -> SphereConfig {
        let data = self
            .states
            .iter()
            .flat_map(|r| [r[(0, 0)], r[(1, 0)], r[(2, 0)]])
            .collect();
        SphereConfig::from_flat_unchecked(3, data)
    }

    /// `max_{ij ∈ E} (3 - <R_i, R_j>)`.
    pub fn max_edge_chordal(&self, graph: &Graph) -> f64 {
        graph
            .edges()
            .iter()
            .map(|e| rotation_chordal(&self.states[e.a], &self.states[e.b]))
            .fold(0.0, f64::max)
    }

    /// Largest deviation `‖R^T R - I‖_F` over the agents.
    pub fn orthogonality_error(&self) -> f64 {
        self.states
            .iter()
            .map(|r| (r.transpose() * r - Matrix3::identity()).norm())
            .fold(0.0, f64::max)
    }
}

impl Serialize for RotationConfig {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.states.iter().map(|r| {
            [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ]
        }))
    }
}

impl<'de> Deserialize<'de> for RotationConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<[[f64; 3]; 3]>::deserialize(d)?;
        let rots = rows
            .into_iter()
            .map(|m| {
                Rotation3::new(Matrix3::from_fn(|r, c| m[r][c])).map_err(serde::de::Error::custom)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        RotationConfig::new(rots).map_err(serde::de::Error::custom)
    }
}

/// `s_ij = 3 - <R_i, R_j>` with the Frobenius inner product.
#[inline]
pub fn rotation_chordal(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    3.0 - a.dot(b)
}

/// The piecewise-linear reshaping function of an almost globally convergent
/// consensus protocol on the circle. Its only parameter is an upper bound
/// on the number of agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircleProtocol {
    pub n_bound: usize,
}

impl CircleProtocol {
    pub fn new(n_bound: usize) -> Result<Self> {
        if n_bound < 2 {
            return Err(Error::Config("circle protocol needs an agent bound of at least 2".into()));
        }
        Ok(Self { n_bound })
    }

    pub fn reshape(&self, theta: f64) -> f64 {
        circle_reshape(theta, self.n_bound)
    }
}

/// `g(ϑ)`: identity on `[-π/N, π/N]`, linear back to zero at `±π` outside.
pub fn circle_reshape(theta: f64, n_bound: usize) -> f64 {
    let n = n_bound as f64;
    let knee = PI / n;
    if theta < -knee {
        -(PI + theta) / (n - 1.0)
    } else if theta <= knee {
        theta
    } else {
        (PI - theta) / (n - 1.0)
    }
}

/// `u_i = Σ_{j∈N_i} f_ij(s_ij) x_j` for all agents.
pub fn sphere_input(cfg: &SphereConfig, net: &Network) -> Result<Vec<Vec<f64>>> {
    check_agents(cfg.len(), net)?;
    let mut u = vec![0.0; cfg.as_flat().len()];
    inputs_flat(net, cfg.ambient, cfg.as_flat(), &mut u);
    Ok(u.chunks_exact(cfg.ambient).map(<[f64]>::to_vec).collect())
}

/// `ẋ_i = P_i u_i` for all agents.
pub fn sphere_rhs(cfg: &SphereConfig, net: &Network) -> Result<Vec<TangentVector>> {
    let u = sphere_input(cfg, net)?;
    u.iter()
        .enumerate()
        .map(|(i, ui)| project(&cfg.unit_vector(i), ui))
        .collect()
}

/// `max_i ‖ẋ_i‖`, the equilibrium residual.
pub fn sphere_residual(cfg: &SphereConfig, net: &Network) -> Result<f64> {
    check_agents(cfg.len(), net)?;
    let mut out = vec![0.0; cfg.as_flat().len()];
    Ok(rhs_flat(net, cfg.ambient, cfg.as_flat(), &mut out))
}

pub(crate) fn check_agents(agents: usize, net: &Network) -> Result<()> {
    if agents != net.num_agents() {
        return Err(Error::DimensionMismatch {
            expected: net.num_agents(),
            found: agents,
        });
    }
    Ok(())
}

/// Accumulates the protocol inputs of all agents into `u` (overwritten).
#[inline]
pub(crate) fn inputs_flat(net: &Network, d: usize, x: &[f64], u: &mut [f64]) {
    u.iter_mut().for_each(|c| *c = 0.0);
    for e in net.graph().edges() {
        let (xa, xb) = (&x[e.a * d..(e.a + 1) * d], &x[e.b * d..(e.b + 1) * d]);
        let (f, _) = net.edge_gain(e).value(1.0 - dot(xa, xb));
        for k in 0..d {
            u[e.a * d + k] += f * xb[k];
            u[e.b * d + k] += f * xa[k];
        }
    }
}

/// Writes the closed-loop vector field into `out` and returns `max_i ‖ẋ_i‖`.
#[inline]
pub(crate) fn rhs_flat(net: &Network, d: usize, x: &[f64], out: &mut [f64]) -> f64 {
    inputs_flat(net, d, x, out);
    let mut residual = 0.0f64;
    for (xi, oi) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        project_in_place(xi, oi);
        residual = residual.max(dot(oi, oi));
    }
    residual.sqrt()
}

/// Naive attitude consensus: the relative-rotation law
/// `Σ f_ij(s_ij) (R_i^T R_j - R_j^T R_i)` expressed in the world frame, i.e.
/// `Ω_i = Σ f_ij(s_ij) (R_j R_i^T - R_i R_j^T)`, so that `Ṙ_i = Ω_i R_i`.
/// Here `s_ij = 3 - <R_i, R_j>`.
pub fn so3_naive_input(cfg: &RotationConfig, net: &Network) -> Result<Vec<Matrix3<f64>>> {
    check_agents(cfg.len(), net)?;
    let mut w = vec![Vector3::zeros(); cfg.len()];
    naive_omegas(net, cfg.matrices(), &mut w);
    Ok(w.iter().map(skew).collect())
}

/// Angular velocities (world frame) of the naive law.
pub(crate) fn naive_omegas(net: &Network, rs: &[Matrix3<f64>], out: &mut [Vector3<f64>]) {
    let mut acc = vec![Matrix3::zeros(); rs.len()];
    for e in net.graph().edges() {
        let (ra, rb) = (&rs[e.a], &rs[e.b]);
        let (f, _) = net.edge_gain(e).value(rotation_chordal(ra, rb));
        // M_a += f R_b R_a^T ; M_b += f R_a R_b^T = (f R_b R_a^T)^T
        let m = rb * ra.transpose() * f;
        acc[e.a] += m;
        acc[e.b] += m.transpose();
    }
    for (w, m) in out.iter_mut().zip(&acc) {
        // unskew(M - M^T)
        *w = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    }
}

/// Composite attitude consensus:
/// `Ω_i = S(x_i × u_i + Σ_{j∈N_i} g_ij x_i)`, where `u_i` is the sphere
/// protocol input built from the first body axes and `g_ij` applies the
/// circle reshaping function to the signed angle of `y_j` seen in the
/// `(y_i, z_i)` plane.
pub fn so3_composite_input(
    cfg: &RotationConfig,
    net: &Network,
    circle: &CircleProtocol,
) -> Result<Vec<Matrix3<f64>>> {
    check_agents(cfg.len(), net)?;
    let mut w = vec![Vector3::zeros(); cfg.len()];
    composite_omegas(net, circle, cfg.matrices(), &mut w);
    Ok(w.iter().map(skew).collect())
}

/// `g_ij` of the composite law. Zero when `y_j` is parallel to `x_i`, where
/// the signed angle is undefined.
#[inline]
pub fn lifted_circle_gain(ri: &Matrix3<f64>, rj: &Matrix3<f64>, circle: &CircleProtocol) -> f64 {
    let yj = rj.column(1);
    let a = ri.column(1).dot(&yj);
    let b = ri.column(2).dot(&yj);
    if a * a + b * b < 1e-24 {
        return 0.0;
    }
    // acos(a / sqrt(a² + b²)) · sgn(b), with sgn(0) = +1
    let theta = if b == 0.0 {
        if a >= 0.0 {
            0.0
        } else {
            PI
        }
    } else {
        b.atan2(a)
    };
    circle.reshape(theta)
}

pub(crate) fn composite_omegas(
    net: &Network,
    circle: &CircleProtocol,
    rs: &[Matrix3<f64>],
    out: &mut [Vector3<f64>],
) {
    let mut u = vec![Vector3::zeros(); rs.len()];
    let mut g = vec![0.0; rs.len()];
    for e in net.graph().edges() {
        let (ra, rb) = (&rs[e.a], &rs[e.b]);
        let (xa, xb) = (ra.column(0), rb.column(0));
        let (f, _) = net.edge_gain(e).value(1.0 - xa.dot(&xb));
        u[e.a] += xb * f;
        u[e.b] += xa * f;
        g[e.a] += lifted_circle_gain(ra, rb, circle);
        g[e.b] += lifted_circle_gain(rb, ra, circle);
    }
    for i in 0..rs.len() {
        let x = rs[i].column(0).into_owned();
        out[i] = x.cross(&u[i]) + x * g[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{construct, EquilibriumKind};
    use crate::topology::GraphKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(kind: GraphKind, n: usize, gain: GainFunction) -> Network {
        Network::uniform(Graph::named(kind, Some(n)).unwrap(), gain).unwrap()
    }

    #[test]
    fn two_agents_at_consensus() {
        let c = UnitVector::basis(3, 0);
        let cfg = SphereConfig::consensus(&c, 2);
        let u = sphere_input(&cfg, &net(GraphKind::Path, 2, GainFunction::Constant(1.0))).unwrap();
        assert_eq!(u[0], c.coords());
    }

    #[test]
    fn octahedron_has_zero_input() {
        let (cfg, graph) = construct(&EquilibriumKind::Octahedron).unwrap();
        let net = Network::uniform(graph, GainFunction::Constant(1.0)).unwrap();
        for u in sphere_input(&cfg, &net).unwrap() {
            assert!(u.iter().all(|c| *c == 0.0), "{u:?}");
        }
        for t in sphere_rhs(&cfg, &net).unwrap() {
            assert!(t.coords().iter().all(|c| *c == 0.0));
        }
    }

    #[test]
    fn antipodal_power_gain() {
        let x = UnitVector::basis(3, 0);
        let y = UnitVector::new(vec![-1.0, 0.0, 0.0]).unwrap();
        let cfg = SphereConfig::new(vec![x.clone(), y]).unwrap();
        let u = sphere_input(&cfg, &net(GraphKind::Path, 2, GainFunction::Power(1))).unwrap();
        assert_eq!(u[0], vec![-2.0, 0.0, 0.0]);
    }

    #[test]
    fn consensus_rhs_is_zero() {
        let c = sample_unit_sphere(3, &mut ChaCha8Rng::seed_from_u64(1));
        let cfg = SphereConfig::consensus(&c, 5);
        let n = net(GraphKind::Complete, 5, GainFunction::Constant(2.0));
        assert!(sphere_residual(&cfg, &n).unwrap() < 1e-15);
    }

    #[test]
    fn disconnected_network_rejected() {
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(matches!(
            Network::uniform(g, GainFunction::Constant(1.0)),
            Err(Error::Disconnected)
        ));
        let mut g = Graph::named(GraphKind::Path, Some(3)).unwrap();
        g.set_edge_gain(0, 1, 3).unwrap();
        assert!(Network::uniform(g, GainFunction::Constant(1.0)).is_err());
    }

    #[test]
    fn naive_two_agent_oracle() {
        let theta = 0.8f64;
        let r2 = Rotation3::about_z(theta);
        let cfg = RotationConfig::new(vec![Rotation3::identity(), r2]).unwrap();
        let omega = so3_naive_input(&cfg, &net(GraphKind::Path, 2, GainFunction::Constant(1.0))).unwrap();
        let want = skew(&Vector3::new(0.0, 0.0, 2.0 * theta.sin()));
        assert!((omega[0] - want).norm() < 1e-15);
        assert!((omega[0] + omega[0].transpose()).norm() == 0.0);
        // Direct arithmetic: R2 - R2^T.
        let direct = r2.matrix() - r2.matrix().transpose();
        assert!((omega[0] - direct).norm() < 1e-15);
    }

    #[test]
    fn naive_world_frame_matches_relative_body_frame_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = RotationConfig::sample(4, &mut rng);
        let n = net(GraphKind::Cycle, 4, GainFunction::Constant(1.5));
        let omega = so3_naive_input(&cfg, &n).unwrap();
        for (i, w) in omega.iter().enumerate() {
            let ri = cfg.matrix(i);
            let mut body = Matrix3::zeros();
            for &(j, _) in n.graph().neighbors(i) {
                let rj = cfg.matrix(j);
                body += (ri.transpose() * rj - rj.transpose() * ri) * 1.5;
            }
            assert!((ri.transpose() * w * ri - body).norm() < 1e-13);
        }
    }

    #[test]
    fn equal_rotations_give_zero_inputs() {
        let r = sample_uniform_rotation(&mut ChaCha8Rng::seed_from_u64(4));
        let cfg = RotationConfig::new(vec![r; 3]).unwrap();
        let n = net(GraphKind::Cycle, 3, GainFunction::Constant(5.0));
        assert!(rotation_chordal(cfg.matrix(0), cfg.matrix(1)).abs() < 1e-15);
        for o in so3_naive_input(&cfg, &n).unwrap() {
            assert!(o.norm() < 1e-14);
        }
        for o in so3_composite_input(&cfg, &n, &CircleProtocol::new(3).unwrap()).unwrap() {
            assert!(o.norm() < 1e-14);
        }
    }

    #[test]
    fn reshape_examples() {
        for n in 2..10 {
            let knee = PI / n as f64;
            assert!((circle_reshape(knee, n) - knee).abs() < 1e-15);
            assert!((circle_reshape(knee + 1e-12, n) - knee).abs() < 1e-11);
            assert!(circle_reshape(PI, n).abs() < 1e-15);
            assert!(circle_reshape(-PI, n).abs() < 1e-15);
            assert_eq!(circle_reshape(0.0, n), 0.0);
            for t in [0.1, 0.5, 1.0, 2.0, 3.0] {
                assert!((circle_reshape(t, n) + circle_reshape(-t, n)).abs() < 1e-15);
            }
        }
    }

    /// Rotation whose first column is `x` and whose second column makes
    /// angle `phi` with a fixed reference in the plane orthogonal to `x`.
    fn frame(x: Vector3<f64>, phi: f64) -> Matrix3<f64> {
        let v1 = Vector3::new(0.0, 1.0, 0.0);
        let v2 = x.cross(&v1);
        let y = v1 * phi.cos() + v2 * phi.sin();
        let z = x.cross(&y);
        Matrix3::from_columns(&[x, y, z])
    }

    #[test]
    fn composite_reduces_to_circle_protocol_when_axes_agree() {
        let x = Vector3::new(1.0, 0.0, 0.0);
        let n_bound = 6;
        let circle = CircleProtocol::new(n_bound).unwrap();
        let phis = [0.0, 0.2, 0.45, 0.1, -0.3, -0.05];
        let cfg = RotationConfig::from_matrices_unchecked(phis.iter().map(|&p| frame(x, p)).collect());
        let n = net(GraphKind::Cycle, 6, GainFunction::Constant(5.0));
        let omega = so3_composite_input(&cfg, &n, &circle).unwrap();
        for i in 0..6 {
            let w = geometry::unskew(&omega[i]).unwrap();
            // ϑ̇_i = <z_i, ẏ_i> = <x_i, ω_i> here.
            let want: f64 = n
                .graph()
                .neighbors(i)
                .iter()
                .map(|&(j, _)| circle_reshape(phis[j] - phis[i], n_bound))
                .sum();
            assert!((w.dot(&x) - want).abs() < 1e-14, "agent {i}");
            // The signed angle argument equals the arc ϑ_j - ϑ_i.
            for &(j, _) in n.graph().neighbors(i) {
                let g = lifted_circle_gain(cfg.matrix(i), cfg.matrix(j), &circle);
                assert!((g - circle_reshape(phis[j] - phis[i], n_bound)).abs() < 1e-14);
            }
            // The x axes agree, so x_i × u_i vanishes.
            assert!((w - x * w.dot(&x)).norm() < 1e-14);
        }
    }

    #[test]
    fn composite_degenerate_gain_is_zero() {
        let ri = Matrix3::identity();
        // y_j along x_i
        let rj = Matrix3::from_columns(&[
            Vector3::new(0.0, -1.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        ]);
        assert_eq!(lifted_circle_gain(&ri, &rj, &CircleProtocol::new(4).unwrap()), 0.0);
    }

    #[test]
    fn composite_x_axes_follow_sphere_protocol() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = net(GraphKind::Barbell, 6, GainFunction::Constant(2.0));
        let circle = CircleProtocol::new(6).unwrap();
        for _ in 0..50 {
            let cfg = RotationConfig::sample(6, &mut rng);
            let omega = so3_composite_input(&cfg, &n, &circle).unwrap();
            let xs = cfg.reduced_attitudes();
            let rhs = sphere_rhs(&xs, &n).unwrap();
            for i in 0..6 {
                let xdot = omega[i] * cfg.matrix(i).column(0);
                for k in 0..3 {
                    assert!((xdot[k] - rhs[i].coords()[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sphere_rhs_is_frame_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = net(GraphKind::Cycle, 5, GainFunction::Power(1));
        for _ in 0..20 {
            let cfg = SphereConfig::sample(2, 5, &mut rng);
            let q = sample_uniform_rotation(&mut rng);
            let qm: Vec<f64> = (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).map(|(r, c)| q.matrix()[(r, c)]).collect();
            let rotated = cfg.transformed(&qm);
            let a = sphere_rhs(&rotated, &n).unwrap();
            let b = sphere_rhs(&cfg, &n).unwrap();
            for (ta, tb) in a.iter().zip(&b) {
                let qb = q.matrix() * Vector3::from_column_slice(tb.coords());
                for k in 0..3 {
                    assert!((ta.coords()[k] - qb[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = SphereConfig::sample(2, 4, &mut ChaCha8Rng::seed_from_u64(2));
        let s = serde_json::to_string(&cfg).unwrap();
        let back: SphereConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<SphereConfig>("[[1.0, 1.0, 0.0]]").is_err());
        let rc = RotationConfig::sample(2, &mut ChaCha8Rng::seed_from_u64(2));
        let back: RotationConfig = serde_json::from_str(&serde_json::to_string(&rc).unwrap()).unwrap();
        assert!((back.matrix(1) - rc.matrix(1)).norm() == 0.0);
    }
}
