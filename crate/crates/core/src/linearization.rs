//! Linearization of the sphere flow and stability classification of
//! equilibria.
//!
//! `H` is assembled in ambient coordinates, `N(n+1)` rows, from the blocks
//!
//! ```text
//! H_ii = -<u_i, x_i> P_i - Σ_{j∈N_i} f'_ij P_i x_j x_jᵀ P_i
//! H_ij = P_i (f_ij I - f'_ij x_j x_iᵀ) P_j        (j ∈ N_i)
//! ```
//!
//! Each radial direction `x_i` lies in the kernel, so the verdict is taken
//! from the restriction `Bᵀ H B` to the tangent space, `B` being a
//! block-diagonal orthonormal tangent frame.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::eigen::symmetric_eigen;
use crate::geometry::{dot, tangent_basis};
use crate::protocols::{check_agents, inputs_flat, rhs_flat, Network, SphereConfig};
use crate::Result;

/// Residual above which a configuration is not treated as an equilibrium.
pub const EQUILIBRIUM_RESIDUAL: f64 = 1e-8;
/// Eigenvalues within `ZERO_REL · ‖H‖` of zero count as zero.
pub const ZERO_REL: f64 = 1e-8;
/// Largest edge `s_ij` for which a configuration counts as consensus.
pub const CONSENSUS_S: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ConsensusStable,
    ExponentiallyUnstable,
    Indeterminate,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearizationReport {
    pub residual: f64,
    /// Full ambient spectrum of `H`, ascending.
    pub spectrum: Vec<f64>,
    /// Spectrum of `H` restricted to the tangent space, ascending.
    pub tangent_spectrum: Vec<f64>,
    pub max_eig: f64,
    /// Ambient eigenvector of `max_eig`, unit norm, flattened per agent.
    pub max_eigvec: Vec<f64>,
    pub zero_eigs: usize,
    pub trace_g: f64,
    pub trace_g_closed_form: f64,
    pub h_norm: f64,
    pub verdict: Verdict,
    #[serde(skip)]
    pub h: DMatrix<f64>,
    #[serde(serialize_with = "rows")]
    pub g: DMatrix<f64>,
}

fn rows<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(m.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()))
}

fn projector(x: &[f64]) -> DMatrix<f64> {
    let d = x.len();
    DMatrix::from_fn(d, d, |r, c| f64::from(r == c) - x[r] * x[c])
}

fn outer(a: &[f64], b: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |r, c| a[r] * b[c])
}

/// Assembles `H` at any configuration.
pub fn assemble_hessian(cfg: &SphereConfig, net: &Network) -> Result<DMatrix<f64>> {
    check_agents(cfg.len(), net)?;
    let d = cfg.ambient_dim();
    let n_agents = cfg.len();
    let mut u = vec![0.0; d * n_agents];
    inputs_flat(net, d, cfg.as_flat(), &mut u);
    let p: Vec<DMatrix<f64>> = cfg.states().map(projector).collect();

    let mut h = DMatrix::zeros(d * n_agents, d * n_agents);
    for i in 0..n_agents {
        let xi = cfg.state(i);
        let mut hii = &p[i] * -dot(&u[i * d..(i + 1) * d], xi);
        for &(j, k) in net.graph().neighbors(i) {
            let xj = cfg.state(j);
            let (f, fp) = net.edge_gain(&net.graph().edges()[k]).value(1.0 - dot(xi, xj));
            hii -= &p[i] * outer(xj, xj) * &p[i] * fp;
            let inner = DMatrix::identity(d, d) * f - outer(xj, xi) * fp;
            let hij = &p[i] * inner * &p[j];
            h.view_mut((i * d, j * d), (d, d)).copy_from(&hij);
        }
        h.view_mut((i * d, i * d), (d, d)).copy_from(&hii);
    }
    Ok(h)
}

/// `G = Σ_i H_ii + Σ_i Σ_{j∈N_i} H_ij`, i.e. the sum of all `(n+1)`-blocks.
pub fn reduced_g(h: &DMatrix<f64>, ambient: usize) -> DMatrix<f64> {
    let n_agents = h.nrows() / ambient;
    let mut g = DMatrix::zeros(ambient, ambient);
    for i in 0..n_agents {
        for j in 0..n_agents {
            g += h.view((i * ambient, j * ambient), (ambient, ambient));
        }
    }
    g
}

/// `Σ_i Σ_{j∈N_i} f(n-2+s)s - f'(2-s)s²`.
pub fn closed_form_trace_g(cfg: &SphereConfig, net: &Network) -> Result<f64> {
    check_agents(cfg.len(), net)?;
    let n = cfg.sphere_dim() as f64;
    let twice: f64 = net
        .graph()
        .edges()
        .iter()
        .map(|e| {
            let s = 1.0 - dot(cfg.state(e.a), cfg.state(e.b));
            let (f, fp) = net.edge_gain(e).value(s);
            f * (n - 2.0 + s) * s - fp * (2.0 - s) * s * s
        })
        .sum();
    Ok(2.0 * twice)
}

/// Block-diagonal `N(n+1) × Nn` matrix of orthonormal tangent frames.
pub fn tangent_frame(cfg: &SphereConfig) -> DMatrix<f64> {
    let d = cfg.ambient_dim();
    let n_agents = cfg.len();
    let mut b = DMatrix::zeros(d * n_agents, (d - 1) * n_agents);
    for (i, x) in cfg.states().enumerate() {
        for (k, col) in tangent_basis(x).iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                b[(i * d + r, i * (d - 1) + k)] = *v;
            }
        }
    }
    b
}

pub fn classify_equilibrium(cfg: &SphereConfig, net: &Network) -> Result<LinearizationReport> {
    check_agents(cfg.len(), net)?;
    let d = cfg.ambient_dim();
    let mut scratch = vec![0.0; cfg.as_flat().len()];
    let residual = rhs_flat(net, d, cfg.as_flat(), &mut scratch);

    let h = assemble_hessian(cfg, net)?;
    let h_norm = h.norm();
    let spectrum = symmetric_eigen(&h)?.values;
    let b = tangent_frame(cfg);
    let tangent = symmetric_eigen(&(b.transpose() * &h * &b))?;
    let top = tangent.values.len() - 1;
    let max_eig = tangent.values[top];
    let max_eigvec: Vec<f64> = (&b * tangent.vectors.column(top)).iter().copied().collect();

    let tol = ZERO_REL * h_norm;
    let zero_eigs = tangent.values.iter().filter(|l| l.abs() <= tol).count();
    let g = reduced_g(&h, d);
    let trace_g = g.trace();
    let trace_g_closed_form = closed_form_trace_g(cfg, net)?;

    let at_consensus = cfg.max_edge_chordal(net.graph()) < CONSENSUS_S;
    let verdict = if residual >= EQUILIBRIUM_RESIDUAL {
        Verdict::Indeterminate
    } else if max_eig > tol {
        Verdict::ExponentiallyUnstable
    } else if at_consensus && zero_eigs == cfg.sphere_dim() {
        Verdict::ConsensusStable
    } else {
        Verdict::Indeterminate
    };

    // A positive trace of G is a positive Rayleigh quotient of H along the
    // common directions 1 ⊗ v, so the top eigenvalue must be positive too.
    if trace_g > tol && max_eig <= 0.0 {
        return Err(crate::Error::Internal(format!(
            "trace G = {trace_g:.3e} > 0 but max eigenvalue {max_eig:.3e} ≤ 0"
        )));
    }

    Ok(LinearizationReport {
        residual,
        spectrum,
        tangent_spectrum: tangent.values,
        max_eig,
        max_eigvec,
        zero_eigs,
        trace_g,
        trace_g_closed_form,
        h_norm,
        verdict,
        h,
        g,
    })
}

/// Tangent-projected central difference of the vector field along the
/// flattened direction `v` (projected first), for checking `H`.
pub fn finite_difference_jacobian_action(
    cfg: &SphereConfig,
    net: &Network,
    v: &[f64],
    eps: f64,
) -> Result<DVector<f64>> {
    check_agents(cfg.len(), net)?;
    let d = cfg.ambient_dim();
    let mut dir = v.to_vec();
    for (x, w) in cfg.states().zip(dir.chunks_exact_mut(d)) {
        crate::geometry::project_in_place(x, w);
    }
    let field = |c: &SphereConfig| {
        let mut out = vec![0.0; c.as_flat().len()];
        rhs_flat(net, d, c.as_flat(), &mut out);
        out
    };
    let plus = field(&cfg.retract(&dir, eps)?);
    let minus = field(&cfg.retract(&dir, -eps)?);
    let mut diff: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
    for (x, w) in cfg.states().zip(diff.chunks_exact_mut(d)) {
        crate::geometry::project_in_place(x, w);
    }
    Ok(DVector::from_vec(diff))
}
