use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use quadpose::archive::Archive;
use quadpose::config::{ConfigError, TrainConfig};
use quadpose::curricula::TerrainSlot;
use quadpose::env::Command6D;
use quadpose::eval::{evaluate, EvalConfig, Scenario};
use quadpose::terrain::TerrainKind;
use quadpose::train::{collect_expert_dataset, load_policy, policy_digest, run_training, CheckpointError, TrainError};
use quadpose_cli::serve::{ServeError, ServeOptions, Server};

#[derive(Parser)]
#[command(name = "quadpose", version, about = "Posture-aware quadruped locomotion training and teleop")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a policy (stage 1, optional expert collection, stage 2).
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "runs/default")]
        out: PathBuf,
        /// Resume from a checkpoint written by an earlier run of the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many updates in this invocation.
        #[arg(long)]
        max_updates: Option<u64>,
    },
    /// Evaluate a checkpoint on the command-tracking protocol.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Config to check against the checkpoint digest.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Evaluate even if the config digest differs.
        #[arg(long)]
        force: bool,
        #[arg(long, value_enum, default_value_t = ScenarioArg::Flat)]
        scenario: ScenarioArg,
        #[arg(long, value_parser = parse_terrain, default_value = "rough_slope")]
        terrain: TerrainKind,
        #[arg(long, default_value_t = 0)]
        level: u8,
        /// Static command as vx,vy,wz,dh,pitch,roll.
        #[arg(long, value_parser = parse_command)]
        command: Option<Command6D>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        /// Write the full JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll out a trained policy and save expert motion pairs.
    CollectAmp {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the simulation in real time and stream telemetry over TCP.
    Serve {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, value_parser = parse_terrain, default_value = "rough_flat")]
        terrain: TerrainKind,
        #[arg(long, default_value_t = 0)]
        level: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the header of a checkpoint or dataset archive.
    InspectCheckpoint { path: PathBuf },
    /// Print the default training config.
    PrintConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    /// Flat ground with commands resampled every 2 s.
    Flat,
    /// Fixed command on a chosen terrain.
    Static,
}

fn parse_terrain(s: &str) -> Result<TerrainKind, String> {
    TerrainKind::from_name(s).ok_or_else(|| {
        let names: Vec<_> = TerrainKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown terrain {s:?}; expected one of {}", names.join(", "))
    })
}

fn parse_command(s: &str) -> Result<Command6D, String> {
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"))).collect::<Result<_, _>>()?;
    let a: [f64; 6] = v.try_into().map_err(|_| "expected six comma-separated values".to_string())?;
    Ok(Command6D::new(a[0], a[1], a[2], a[3], a[4], a[5]))
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(c) => c.into(),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig, Failure> {
    let cfg = match path {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Train { config, out, resume, max_updates } => {
            let cfg = load_config(config.as_deref())?;
            log::info!("training {} updates into {}", cfg.total_updates(), out.display());
            let summary = run_training(cfg, &out, resume.as_deref(), max_updates, |r| {
                log::info!(
                    "update {} stage {} reward {:.4} rv {:.3} len {} kl {:.4}",
                    r.update,
                    r.stage,
                    r.mean_reward,
                    r.task.v,
                    r.mean_episode_length.map_or("-".into(), |l| format!("{l:.1}")),
                    r.ppo.approx_kl
                );
            })?;
            println!("completed {} updates, {} checkpoints in {}", summary.updates, summary.checkpoints.len(), out.display());
        }
        Cmd::Eval { checkpoint, config, force, scenario, terrain, level, command, seed, repetitions, out } => {
            let loaded = load_policy(&checkpoint)?;
            if let Some(p) = config {
                let cfg = load_config(Some(&p))?;
                let digest = cfg.digest();
                if digest != loaded.config_digest {
                    let msg = format!("config digest {digest} does not match checkpoint {}", loaded.config_digest);
                    if !force {
                        return Err(Failure::Runtime(format!("{msg} (use --force to evaluate anyway)")));
                    }
                    log::warn!("{msg}");
                }
            }
            let scenario = match scenario {
                ScenarioArg::Flat => Scenario::FlatDynamic,
                ScenarioArg::Static => match command {
                    Some(c) => Scenario::Static { terrain, level, command: c },
                    None => Scenario::forward(terrain, level),
                },
            };
            let eval_cfg = EvalConfig { scenario, seed, repetitions, ..EvalConfig::default() };
            let report = evaluate(&loaded.policy, &loaded.config, &eval_cfg);
            let s = &report.summary;
            println!("mean R_v {:.3} ± {:.3}", s.mean_rv.mean, s.mean_rv.std);
            for (name, e) in report.channels.iter().zip(&s.mean_abs_error) {
                println!("  {name:>6}: |err| {:.4} ± {:.4}", e.mean, e.std);
            }
            println!("knee collisions {:.1} ± {:.1}, early terminations {}", s.knee_collisions.mean, s.knee_collisions.std, s.early_terminations);
            if let Some(p) = out {
                write_file(&p, &serde_json::to_string(&report).expect("report serializes"))?;
            }
        }
        Cmd::CollectAmp { checkpoint, out, pairs, seed } => {
            let loaded = load_policy(&checkpoint)?;
            let n = pairs.unwrap_or(loaded.config.amp.expert_pairs);
            let digest = policy_digest(&loaded.policy);
            let ds = collect_expert_dataset(&loaded.policy, &loaded.config, n, seed, &digest)?;
            ds.save(&out).map_err(|e| Failure::Runtime(e.to_string()))?;
            println!("saved {} pairs to {} (gate score {:.3})", ds.len(), out.display(), ds.meta.gate_score);
        }
        Cmd::Serve { checkpoint, port, host, terrain, level, seed } => {
            let loaded = load_policy(&checkpoint)?;
            let server = Server::bind(&format!("{host}:{port}")).map_err(|e| match e {
                ServeError::PortInUse(_) | ServeError::Bind { .. } => Failure::Runtime(e.to_string()),
            })?;
            println!("serving on {}", server.local_addr());
            let mut opts = ServeOptions::new(loaded.config.env.clone());
            opts.terrain = TerrainSlot { kind: terrain, level };
            opts.seed = seed;
            server.run(loaded.policy, opts, Arc::new(AtomicBool::new(false)));
        }
        Cmd::InspectCheckpoint { path } => {
            let a = Archive::load(&path).map_err(|e| Failure::Runtime(e.to_string()))?;
            println!("{}", serde_json::to_string_pretty(&a.header).expect("header serializes"));
        }
        Cmd::PrintConfig => print!("{}", TrainConfig::default().to_toml_string()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QUADPOSE_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
