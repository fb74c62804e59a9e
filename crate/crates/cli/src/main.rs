use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use sphere_consensus::config::{ExperimentConfig, GainSpec, InitialState, Scenario};
use sphere_consensus::equilibria::{categorize, construct, EquilibriumKind};
use sphere_consensus::experiments::{run_batch, BatchSpec, Space};
use sphere_consensus::gains::{check_admissible, GainFunction, DEFAULT_GRID_POINTS};
use sphere_consensus::linearization::classify_equilibrium;
use sphere_consensus::simulation::{integrate_so3, integrate_sphere, SimulationResult};
use sphere_consensus::topology::GraphKind;
use sphere_consensus::{Error, Graph, Network, RotationConfig, SphereConfig, UnitVector};

#[derive(Parser)]
#[command(name = "spherecon", version, about = "Consensus on spheres and SO(3)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and print a JSON summary.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Write the sampled trajectory as CSV, plus a JSON summary next to it.
        #[arg(long)]
        traj: Option<PathBuf>,
        #[arg(long)]
        allow_inadmissible: bool,
    },
    /// Linearize at the configured initial state and classify it.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        allow_inadmissible: bool,
    },
    /// Check a gain function against the admissibility conditions.
    GainsCheck {
        /// `constant:<k>` or `power:<k>`.
        #[arg(long)]
        gain: String,
        /// Sphere dimension n.
        #[arg(long)]
        dim: usize,
    },
    /// Run a seeded batch of random initial conditions.
    Montecarlo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        allow_inadmissible: bool,
    },
    /// Print a named equilibrium on S^2 with its linearization report.
    Equilibria {
        /// consensus, tetrahedron, octahedron, cube, icosahedron,
        /// dodecahedron or great_circle_cycle.
        #[arg(long)]
        kind: String,
        /// Agent count for consensus (path graph) and great_circle_cycle.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value = "constant:1")]
        gain: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out).expect("JSON values serialize"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn load(path: &Path, allow_inadmissible: bool) -> Result<(Value, Scenario), Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let raw: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let scenario = ExperimentConfig::from_json(&text)?.resolve(allow_inadmissible)?;
    Ok((raw, scenario))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn run(cmd: Command) -> Result<Value, Error> {
    match cmd {
        Command::Simulate { config, traj, allow_inadmissible } => {
            let (_, mut sc) = load(&config, allow_inadmissible)?;
            sc.options.record |= traj.is_some();
            let initial = sc.initial.clone().ok_or_else(|| Error::Config("initial: missing".into()))?;
            let summary = match (&initial, sc.space) {
                (InitialState::Sphere(cfg), Space::Sphere(_)) => {
                    let r = integrate_sphere(cfg, &sc.network, &sc.options)?;
                    if let Some(p) = &traj {
                        write_sphere_csv(p, &r)?;
                    }
                    to_value(&r.summary())
                }
                (InitialState::Rotations(cfg), Space::So3(protocol)) => {
                    let r = integrate_so3(cfg, &sc.network, protocol, &sc.options)?;
                    if let Some(p) = &traj {
                        write_rotation_csv(p, &r)?;
                    }
                    to_value(&r.summary())
                }
                _ => return Err(Error::Config("initial: does not match space".into())),
            };
            if let Some(p) = &traj {
                let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
                fs::write(p.with_extension("json"), text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            }
            Ok(summary)
        }
        Command::Spectrum { config, allow_inadmissible } => {
            let (_, sc) = load(&config, allow_inadmissible)?;
            match sc.initial {
                Some(InitialState::Sphere(cfg)) => Ok(to_value(&classify_equilibrium(&cfg, &sc.network)?)),
                _ => Err(Error::Config("initial: spectrum needs a sphere configuration".into())),
            }
        }
        Command::GainsCheck { gain, dim } => {
            let g: GainFunction = gain.parse::<GainSpec>()?.into();
            let report = check_admissible(&g, dim, DEFAULT_GRID_POINTS)?;
            Ok(to_value(&report))
        }
        Command::Montecarlo { config, trials, seed, jobs, allow_inadmissible } => {
            let (raw, sc) = load(&config, allow_inadmissible)?;
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let spec = BatchSpec {
                space: sc.space,
                network: sc.network,
                trials,
                seed,
                options: sc.options,
            };
            let batch = run_batch(&spec, jobs)?;
            let mut out = json!({ "spec": { "config": raw, "trials": trials, "seed": seed, "jobs": jobs } });
            if let (Value::Object(o), Value::Object(b)) = (&mut out, to_value(&batch)) {
                o.extend(b);
            }
            Ok(out)
        }
        Command::Equilibria { kind, n, gain } => {
            let kind = parse_kind(&kind, n)?;
            let g: GainFunction = gain.parse::<GainSpec>()?.into();
            let (cfg, graph) = construct(&kind)?;
            let edges: Vec<[usize; 2]> = graph.edges().iter().map(|e| [e.a, e.b]).collect();
            let net = Network::uniform(graph, g)?;
            Ok(json!({
                "states": to_value(&cfg),
                "edges": edges,
                "categories": to_value(&categorize(&cfg, &net)?),
                "report": to_value(&classify_equilibrium(&cfg, &net)?),
            }))
        }
    }
}

fn parse_kind(name: &str, n: Option<usize>) -> Result<EquilibriumKind, Error> {
    Ok(match name {
        "consensus" => EquilibriumKind::Consensus {
            point: UnitVector::basis(3, 0),
            graph: Graph::named(GraphKind::Path, Some(n.unwrap_or(3)))?,
        },
        "tetrahedron" => EquilibriumKind::Tetrahedron,
        "octahedron" => EquilibriumKind::Octahedron,
        "cube" => EquilibriumKind::Cube,
        "icosahedron" => EquilibriumKind::Icosahedron,
        "dodecahedron" => EquilibriumKind::Dodecahedron,
        "great_circle_cycle" => EquilibriumKind::GreatCircleCycle(n.unwrap_or(6)),
        other => return Err(Error::Config(format!("--kind: unknown equilibrium `{other}`"))),
    })
}

fn csv_err(p: &Path, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{}: {e}", p.display()))
}

fn write_sphere_csv(path: &Path, r: &SimulationResult<SphereConfig>) -> Result<(), Error> {
    let d = r.final_state.ambient_dim();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = ["t".to_string(), "agent".to_string()]
        .into_iter()
        .chain((0..d).map(|k| format!("c{k}")))
        .collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for p in &r.trajectory {
        for (i, x) in p.state.states().enumerate() {
            let row: Vec<String> = [p.t.to_string(), i.to_string()]
                .into_iter()
                .chain(x.iter().map(f64::to_string))
                .collect();
            w.write_record(&row).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| csv_err(path, e))
}

fn write_rotation_csv(path: &Path, r: &SimulationResult<RotationConfig>) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = ["t".to_string(), "agent".to_string()]
        .into_iter()
        .chain((0..3).flat_map(|a| (0..3).map(move |b| format!("r{a}{b}"))))
        .collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for p in &r.trajectory {
        for (i, m) in p.state.matrices().iter().enumerate() {
            let row: Vec<String> = [p.t.to_string(), i.to_string()]
                .into_iter()
                .chain((0..3).flat_map(|a| (0..3).map(move |b| m[(a, b)].to_string())))
                .collect();
            w.write_record(&row).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| csv_err(path, e))
}
