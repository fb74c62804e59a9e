//! Monte Carlo batches, perturbation runs and the backward-flow experiment.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gains::GainFunction;
use crate::linearization::{classify_equilibrium, Verdict};
use crate::protocols::{check_agents, Network, RotationConfig, SphereConfig};
use crate::simulation::{integrate_so3, integrate_sphere, Outcome, SimOptions, SimulationResult, So3Protocol};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Sphere(usize),
    So3(So3Protocol),
}

#[derive(Debug, Clone)]
pub struct BatchSpec {
    pub space: Space,
    pub network: Network,
    pub trials: usize,
    pub seed: u64,
    pub options: SimOptions,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub consensus: usize,
    pub failure: usize,
    pub timeout: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureDigest {
    pub trial: usize,
    pub terminal_residual: f64,
    pub max_edge_s: f64,
    pub elapsed: f64,
    /// Sphere batches only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_eig: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialBatch {
    pub trials: usize,
    pub seed: u64,
    pub counts: Counts,
    pub failure_fraction: f64,
    /// More than 1% of trials timed out.
    pub inconclusive: bool,
    pub wall_time: f64,
    pub failures: Vec<FailureDigest>,
    #[serde(skip)]
    pub outcomes: Vec<Outcome>,
}

/// Independent generator for trial `k` of a batch.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

struct TrialResult {
    outcome: Outcome,
    digest: Option<FailureDigest>,
}

fn run_trial(spec: &BatchSpec, k: usize) -> Result<TrialResult> {
    let mut rng = trial_rng(spec.seed, k);
    fn digest<S>(k: usize, r: &SimulationResult<S>) -> FailureDigest {
        FailureDigest {
            trial: k,
            terminal_residual: r.terminal_residual,
            max_edge_s: r.max_edge_s,
            elapsed: r.elapsed,
            verdict: None,
            max_eig: None,
        }
    }
    match spec.space {
        Space::Sphere(n) => {
            let cfg = SphereConfig::sample(n, spec.network.num_agents(), &mut rng);
            let r = integrate_sphere(&cfg, &spec.network, &spec.options)?;
            let digest = if r.outcome == Outcome::NonConsensusEquilibrium {
                let report = classify_equilibrium(&r.final_state, &spec.network)?;
                Some(FailureDigest {
                    verdict: Some(report.verdict),
                    max_eig: Some(report.max_eig),
                    ..digest(k, &r)
                })
            } else {
                None
            };
            Ok(TrialResult { outcome: r.outcome, digest })
        }
        Space::So3(protocol) => {
            let cfg = RotationConfig::sample(spec.network.num_agents(), &mut rng);
            let r = integrate_so3(&cfg, &spec.network, protocol, &spec.options)?;
            let digest = (r.outcome == Outcome::NonConsensusEquilibrium).then(|| digest(k, &r));
            Ok(TrialResult { outcome: r.outcome, digest })
        }
    }
}

/// Runs `spec.trials` seeded trials on `jobs` worker threads. Trials whose
/// state blows up abort the whole batch.
pub fn run_batch(spec: &BatchSpec, jobs: usize) -> Result<TrialBatch> {
    if let Space::Sphere(n) = spec.space {
        if n == 0 {
            return Err(Error::Config("sphere dimension must be at least 1".into()));
        }
    }
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    let results: Vec<Result<TrialResult>> =
        pool.install(|| (0..spec.trials).into_par_iter().map(|k| run_trial(spec, k)).collect());

    let mut counts = Counts::default();
    let mut outcomes = Vec::with_capacity(spec.trials);
    let mut failures = Vec::new();
    let mut blown = 0;
    for r in results {
        match r {
            Ok(t) => {
                match t.outcome {
                    Outcome::Consensus => counts.consensus += 1,
                    Outcome::NonConsensusEquilibrium => counts.failure += 1,
                    Outcome::Timeout => counts.timeout += 1,
                }
                outcomes.push(t.outcome);
                failures.extend(t.digest);
            }
            Err(Error::NonFinite { .. }) => blown += 1,
            Err(e) => return Err(e),
        }
    }
    if blown > 0 {
        return Err(Error::Internal(format!(
            "{blown} of {} trials produced non-finite states; reduce dt",
            spec.trials
        )));
    }
    Ok(TrialBatch {
        trials: spec.trials,
        seed: spec.seed,
        counts,
        failure_fraction: counts.failure as f64 / spec.trials.max(1) as f64,
        inconclusive: counts.timeout * 100 > spec.trials,
        wall_time: start.elapsed().as_secs_f64(),
        failures,
        outcomes,
    })
}

/// One run from `retract(eq, magnitude · direction)` per direction.
/// Directions are flattened per agent like [`SphereConfig::as_flat`].
pub fn perturbation_study(
    eq: &SphereConfig,
    net: &Network,
    directions: &[Vec<f64>],
    magnitude: f64,
    opts: &SimOptions,
) -> Result<Vec<SimulationResult<SphereConfig>>> {
    check_agents(eq.len(), net)?;
    let residual = crate::protocols::sphere_residual(eq, net)?;
    if residual >= crate::linearization::EQUILIBRIUM_RESIDUAL {
        return Err(Error::NotEquilibrium(residual));
    }
    directions
        .iter()
        .map(|v| integrate_sphere(&eq.retract(v, magnitude)?, net, opts))
        .collect()
}

/// Standard perturbation directions at the great-circle equilibrium in the
/// `x`–`y` plane of `S^2`.
pub mod great_circle {
    /// Every agent pushed toward the north pole.
    pub fn common_normal(agents: usize) -> Vec<f64> {
        (0..agents).flat_map(|_| [0.0, 0.0, 1.0]).collect()
    }

    /// Neighbours pushed toward opposite poles (even `agents`).
    pub fn alternating_normal(agents: usize) -> Vec<f64> {
        (0..agents)
            .flat_map(|k| [0.0, 0.0, if k % 2 == 0 { 1.0 } else { -1.0 }])
            .collect()
    }

    /// Rigid rotation of the whole formation about the `z` axis.
    pub fn in_plane_rotation(cfg: &crate::SphereConfig) -> Vec<f64> {
        cfg.states().flat_map(|x| [-x[1], x[0], 0.0]).collect()
    }
}

/// Integrates the negated flow on a cycle over `S^2` with constant gains.
pub fn backward_flow(
    cfg0: &SphereConfig,
    net: &Network,
    opts: &SimOptions,
) -> Result<SimulationResult<SphereConfig>> {
    if !net.graph().is_cycle() {
        return Err(Error::InvalidGraph("backward flow needs a cycle graph".into()));
    }
    if cfg0.sphere_dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            found: cfg0.ambient_dim(),
        });
    }
    if !matches!(net.constant_gain(), Some(k) if k > 0.0) {
        let used: Vec<String> = net.gains().iter().map(GainFunction::to_string).collect();
        return Err(Error::InvalidGain(format!(
            "backward flow needs one positive constant gain, got [{}]",
            used.join(", ")
        )));
    }
    let opts = SimOptions {
        backward: true,
        ..opts.clone()
    };
    integrate_sphere(cfg0, net, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Graph, GraphKind};
    use rand::Rng;

    fn net(kind: GraphKind, n: usize, k: f64) -> Network {
        Network::uniform(Graph::named(kind, Some(n)).unwrap(), GainFunction::Constant(k)).unwrap()
    }

    #[test]
    fn trial_streams_differ_and_repeat() {
        let a: u64 = trial_rng(5, 0).random();
        let b: u64 = trial_rng(5, 1).random();
        assert_ne!(a, b);
        assert_eq!(a, trial_rng(5, 0).random::<u64>());
    }

    #[test]
    fn small_batch_is_deterministic() {
        let spec = BatchSpec {
            space: Space::Sphere(1),
            network: net(GraphKind::Cycle, 6, 5.0),
            trials: 40,
            seed: 11,
            options: SimOptions::default(),
        };
        let a = run_batch(&spec, 1).unwrap();
        let b = run_batch(&spec, 2).unwrap();
        assert_eq!(a.counts, b.counts);
        assert_eq!(a.outcomes, b.outcomes);
        let c = a.counts;
        assert_eq!(c.consensus + c.failure + c.timeout, 40);
        assert_eq!(a.failures.len(), c.failure);
    }

    #[test]
    fn backward_flow_preconditions() {
        let cfg = SphereConfig::sample(2, 4, &mut ChaCha8Rng::seed_from_u64(1));
        let opts = SimOptions::default();
        assert!(backward_flow(&cfg, &net(GraphKind::Path, 4, 1.0), &opts).is_err());
        let power = Network::uniform(Graph::named(GraphKind::Cycle, Some(4)).unwrap(), GainFunction::Power(1)).unwrap();
        assert!(backward_flow(&cfg, &power, &opts).is_err());
        let s1 = SphereConfig::sample(1, 4, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(backward_flow(&s1, &net(GraphKind::Cycle, 4, 1.0), &opts).is_err());
    }

    #[test]
    fn perturbation_needs_equilibrium() {
        let cfg = SphereConfig::sample(2, 6, &mut ChaCha8Rng::seed_from_u64(1));
        let dirs = vec![great_circle::common_normal(6)];
        let err = perturbation_study(&cfg, &net(GraphKind::Cycle, 6, 1.0), &dirs, 1e-3, &SimOptions::default());
        assert!(matches!(err, Err(Error::NotEquilibrium(_))));
    }
}
