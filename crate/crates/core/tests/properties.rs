use std::f64::consts::PI;

use nalgebra::Matrix3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sphere_consensus::energy::energy_rate;
use sphere_consensus::equilibria::{construct, EquilibriumKind};
use sphere_consensus::experiments::{backward_flow, great_circle, perturbation_study};
use sphere_consensus::geometry::sample_uniform_rotation;
use sphere_consensus::linearization::{classify_equilibrium, Verdict};
use sphere_consensus::protocols::sphere_residual;
use sphere_consensus::simulation::{integrate_so3, integrate_sphere, Outcome, SimOptions, So3Protocol};
use sphere_consensus::topology::GraphKind;
use sphere_consensus::{CircleProtocol, GainFunction, Graph, Network, Rotation3, RotationConfig, SphereConfig};

fn cycle(n: usize, gain: GainFunction) -> Network {
    Network::uniform(Graph::named(GraphKind::Cycle, Some(n)).unwrap(), gain).unwrap()
}

fn random_network(agents: usize, rng: &mut ChaCha8Rng) -> Network {
    let mut pairs: Vec<(usize, usize)> = (1..agents).map(|k| (rng.random_range(0..k), k)).collect();
    for i in 0..agents {
        for j in i + 1..agents {
            if !pairs.contains(&(i, j)) && rng.random_bool(0.3) {
                pairs.push((i, j));
            }
        }
    }
    let g = Graph::from_edges(agents, &pairs).unwrap();
    Network::uniform(g, GainFunction::Constant(rng.random_range(0.5..3.0))).unwrap()
}

fn equilibrium_kinds() -> Vec<EquilibriumKind> {
    vec![
        EquilibriumKind::Tetrahedron,
        EquilibriumKind::Octahedron,
        EquilibriumKind::Cube,
        EquilibriumKind::Icosahedron,
        EquilibriumKind::Dodecahedron,
        EquilibriumKind::GreatCircleCycle(5),
        EquilibriumKind::GreatCircleCycle(6),
        EquilibriumKind::GreatCircleCycle(7),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn energy_rate_is_nonpositive(seed in any::<u64>(), n in 1usize..5, agents in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(agents, &mut rng);
        let cfg = SphereConfig::sample(n, agents, &mut rng);
        prop_assert!(energy_rate(&cfg, &net).unwrap() <= 1e-14);
    }

    #[test]
    fn sphere_trajectories_stay_on_the_sphere_and_descend(seed in any::<u64>(), n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(5, &mut rng);
        let cfg = SphereConfig::sample(n, 5, &mut rng);
        let opts = SimOptions { t_max: 20.0, record: true, record_every: 1, ..Default::default() };
        let r = integrate_sphere(&cfg, &net, &opts).unwrap();
        prop_assert!(r.max_energy_increase <= 0.0);
        for p in &r.trajectory {
            for x in p.state.states() {
                let norm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() < 1e-12);
            }
        }
        for w in r.trajectory.windows(2) {
            prop_assert!(w[1].energy <= w[0].energy + 1e-8 * w[0].energy.max(1.0));
        }
    }

    #[test]
    fn rotations_stay_orthogonal(seed in any::<u64>(), composite in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = RotationConfig::sample(5, &mut rng);
        let protocol = if composite {
            So3Protocol::Composite(CircleProtocol::new(5).unwrap())
        } else {
            So3Protocol::Naive
        };
        let opts = SimOptions { t_max: 10.0, record: true, record_every: 1, ..Default::default() };
        let r = integrate_so3(&cfg, &cycle(5, GainFunction::Constant(1.0)), protocol, &opts).unwrap();
        for p in &r.trajectory {
            prop_assert!(p.state.orthogonality_error() < 1e-12);
            for m in p.state.matrices() {
                prop_assert!((m.determinant() - 1.0).abs() < 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn halving_dt_barely_moves_the_consensus_point(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(5, &mut rng);
        let cfg = SphereConfig::sample(2, 5, &mut rng);
        let k = net.constant_gain().unwrap();
        let run = |dt: f64| {
            let opts = SimOptions { dt: Some(dt), consensus_tol: 1e-13, ..Default::default() };
            integrate_sphere(&cfg, &net, &opts).unwrap()
        };
        let a = run(0.01 / k);
        let b = run(0.005 / k);
        prop_assert_eq!(a.outcome, Outcome::Consensus);
        prop_assert_eq!(b.outcome, Outcome::Consensus);
        let diff = a.final_state.as_flat().iter().zip(b.final_state.as_flat())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        prop_assert!(diff < 1e-6, "terminal states differ by {}", diff);
    }

    #[test]
    fn rayleigh_certificate_at_rotated_equilibria(seed in any::<u64>(), kind in 0usize..8, k in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cfg, graph) = construct(&equilibrium_kinds()[kind]).unwrap();
        let q = sample_uniform_rotation(&mut rng);
        let q: Vec<f64> = q.matrix().transpose().as_slice().to_vec();
        let cfg = cfg.transformed(&q);
        let gain = if rng.random_bool(0.5) { GainFunction::Constant(k) } else { GainFunction::Power(0) };
        let net = Network::uniform(graph, gain).unwrap();
        let r = classify_equilibrium(&cfg, &net).unwrap();
        prop_assert!(r.trace_g > 0.0);
        prop_assert!(r.max_eig > 0.0);
        prop_assert_eq!(r.verdict, Verdict::ExponentiallyUnstable);
    }

    #[test]
    fn backward_flow_equalizes_odd_cycles(seed in any::<u64>()) {
        let net = cycle(5, GainFunction::Constant(1.0));
        let cfg = SphereConfig::sample(2, 5, &mut ChaCha8Rng::seed_from_u64(seed));
        let r = backward_flow(&cfg, &net, &SimOptions::default()).unwrap();
        let s = r.final_state.edge_chordals(net.graph());
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.iter().copied().fold(0.0, f64::max);
        prop_assert!(hi - lo < 1e-6, "edge values {:?}", s);
    }
}

#[test]
fn splay_equilibrium_on_s1_is_stable() {
    // Five agents equally spaced on a circle: a genuine failure mode in S^1.
    let angles: Vec<f64> = (0..5).map(|k| 2.0 * PI * k as f64 / 5.0).collect();
    let flat: Vec<f64> = angles.iter().flat_map(|a| [a.cos(), a.sin()]).collect();
    let cfg = SphereConfig::from_flat(2, flat).unwrap();
    let net = cycle(5, GainFunction::Constant(1.0));
    assert!(sphere_residual(&cfg, &net).unwrap() < 1e-12);
    let r = classify_equilibrium(&cfg, &net).unwrap();
    // One zero mode from rotating the whole ring, everything else decays.
    let ts = &r.tangent_spectrum;
    assert!(ts[4].abs() < 1e-12 && ts[3] < -0.4, "tangent spectrum {ts:?}");
    assert_eq!(r.zero_eigs, 1);
    assert_eq!(r.verdict, Verdict::Indeterminate);
}

#[test]
fn in_plane_rotation_stays_in_the_great_circle_family() {
    let (cfg, graph) = construct(&EquilibriumKind::GreatCircleCycle(6)).unwrap();
    let net = Network::uniform(graph, GainFunction::Constant(1.0)).unwrap();
    let dir = great_circle::in_plane_rotation(&cfg);
    let runs = perturbation_study(&cfg, &net, &[dir], 0.05, &SimOptions::default()).unwrap();
    assert_eq!(runs[0].outcome, Outcome::NonConsensusEquilibrium);
    let s = runs[0].final_state.edge_chordals(net.graph());
    assert!(s.iter().all(|v| (v - 0.5).abs() < 1e-12), "{s:?}");
}

/// Body frames with a common `x` axis and `y` axes spread evenly around it.
fn splayed_frames(agents: usize, turns: usize, jitter: f64, rng: &mut ChaCha8Rng) -> RotationConfig {
    let rots = (0..agents)
        .map(|k| {
            let a = 2.0 * PI * (turns * k) as f64 / agents as f64 + jitter * rng.random_range(-1.0..1.0);
            let m = Matrix3::new(0.0, -a.sin(), -a.cos(), 0.0, a.cos(), -a.sin(), 1.0, 0.0, 0.0);
            Rotation3::new(m).unwrap()
        })
        .collect();
    RotationConfig::new(rots).unwrap()
}

#[test]
fn composite_protocol_breaks_splayed_frames() {
    let net = cycle(5, GainFunction::Constant(1.0));
    let composite = So3Protocol::Composite(CircleProtocol::new(5).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for turns in [1, 2] {
        let cfg = splayed_frames(5, turns, 1e-3, &mut rng);
        let r = integrate_so3(&cfg, &net, composite, &SimOptions::default()).unwrap();
        assert_eq!(r.outcome, Outcome::Consensus, "turns {turns}");
    }
}

#[test]
fn naive_protocol_can_stall_on_splayed_frames() {
    // Equally spaced frames rotated about a common axis are an equilibrium
    // of the naive law on a five-cycle.
    let net = cycle(5, GainFunction::Constant(1.0));
    let cfg = splayed_frames(5, 1, 0.0, &mut ChaCha8Rng::seed_from_u64(0));
    let r = integrate_so3(&cfg, &net, So3Protocol::Naive, &SimOptions::default()).unwrap();
    assert_eq!(r.outcome, Outcome::NonConsensusEquilibrium);
}

#[test]
fn two_rotations_always_agree() {
    let net = Network::uniform(Graph::from_edges(2, &[(0, 1)]).unwrap(), GainFunction::Constant(1.0)).unwrap();
    for seed in 0..20 {
        let cfg = RotationConfig::sample(2, &mut ChaCha8Rng::seed_from_u64(seed));
        let r = integrate_so3(&cfg, &net, So3Protocol::Naive, &SimOptions::default()).unwrap();
        assert_eq!(r.outcome, Outcome::Consensus, "seed {seed}");
    }
}
