//! Command-line interface for the scheduling library: instance generation,
//! oracle values, baseline policies, agent training/evaluation, and the
//! benchmark experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use npvsched::agent::{evaluate, train, AgentConfig, Variant};
use npvsched::baselines::{
    ev_pi, exact_mdp_enpv, run_dyn, solve_det_npv, solve_rigid, Conditioning, DetProblem, DynOptions,
    MDP_STATE_LIMIT,
};
use npvsched::bench::{
    compute_gap, curve_from_log, run_experiment, write_curves_csv, write_training_log_csv,
    ExperimentConfig, ExperimentKind,
};
use npvsched::instance::{
    generate_instance, read_instance_from_path, write_instance_to_path, Family, GenConfig, Instance,
};
use npvsched::nn::{read_checkpoint_from_path, write_checkpoint_to_path, CheckpointMeta};
use npvsched::project::Precedence;

#[derive(Parser)]
#[command(name = "npvsched", version, about = "Stochastic project scheduling: NPV-maximizing policies", long_about = None)]
struct Cli {
    /// Root seed; all randomness is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory for generated files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Greedy evaluation episodes for open-ended instances.
    #[arg(long, global = true, default_value_t = 1000)]
    eval_episodes: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TrainArgs {
    /// Instance file.
    #[arg(long)]
    instance: PathBuf,
    /// Agent variant: ddqn, dqn or no-target.
    #[arg(long, default_value = "ddqn")]
    variant: String,
    #[arg(long, default_value_t = 20_000)]
    episodes: usize,
    #[arg(long, default_value_t = 1e-5)]
    lr: f64,
    /// Environment steps per gradient step.
    #[arg(long, default_value_t = 1)]
    update_every: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a batch of random instances.
    Gen {
        /// Instance family: omega1 or omega2.
        #[arg(long)]
        family: String,
        /// Number of non-dummy activities.
        #[arg(long)]
        n: usize,
        /// Scenario count (omega1 only).
        #[arg(long, default_value_t = 2)]
        scenarios: usize,
        /// How many instances to generate.
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Print perfect-information and exact values for an instance.
    Oracle {
        #[arg(long)]
        instance: PathBuf,
        /// Also run backward induction (small instances only).
        #[arg(long, default_value_t = false)]
        exact_mdp: bool,
    },
    /// Evaluate a baseline policy.
    Baseline {
        #[arg(long)]
        instance: PathBuf,
        /// Policy: rigid or dyn.
        #[arg(long)]
        policy: String,
        /// Episodes for the dynamic policy on open-ended instances.
        #[arg(long, default_value_t = 100)]
        episodes: usize,
    },
    /// Train an agent and write a checkpoint plus training log.
    Train(TrainArgs),
    /// Evaluate a trained checkpoint.
    Eval {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Fixed-scenario benchmark sweep.
    Exp1(SweepArgs),
    /// Open-ended benchmark sweep.
    Exp2(SweepArgs),
    /// Paired ablation of ddqn / dqn / no-target.
    Ablate(SweepArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Config file overriding the desk-scale defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Full-grid sweep; multi-hour budget.
    #[arg(long, default_value_t = false)]
    full: bool,
    #[arg(long, default_value_t = 20_000)]
    episodes: usize,
    #[arg(long, default_value_t = 1)]
    update_every: usize,
}

fn parse_variant(s: &str) -> anyhow::Result<Variant> {
    match s {
        "ddqn" => Ok(Variant::Ddqn),
        "dqn" => Ok(Variant::Dqn),
        "no-target" => Ok(Variant::NoTarget),
        other => anyhow::bail!("unknown variant {other:?} (expected ddqn, dqn or no-target)"),
    }
}

fn instance_stem(path: &std::path::Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "instance".into())
}

fn cmd_gen(cli: &Cli, family: &str, n: usize, scenarios: usize, count: usize) -> anyhow::Result<()> {
    std::fs::create_dir_all(&cli.out)?;
    for k in 0..count {
        let seed = cli.seed.wrapping_add(k as u64);
        let cfg = match family {
            "omega1" => GenConfig::omega1(n, scenarios, seed),
            "omega2" => GenConfig::omega2(n, seed),
            other => anyhow::bail!("unknown family {other:?} (expected omega1 or omega2)"),
        };
        let instance = generate_instance(&cfg)?;
        let path = cli.out.join(format!("{family}-n{n}-s{scenarios}-{seed}.json"));
        write_instance_to_path(&instance, &path)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_oracle(instance_path: &PathBuf, exact: bool) -> anyhow::Result<()> {
    let instance = read_instance_from_path(instance_path)?;
    match (&instance.family, &instance.scenarios) {
        (Family::Omega1, Some(scenarios)) => {
            let prec = Precedence::new(&instance.network)?;
            for (k, s) in scenarios.iter().enumerate() {
                let p = DetProblem::new(&instance.network, &prec, &s.durations, &s.cash_flows, &[]);
                let (sched, v) = solve_det_npv(&p)?;
                println!("scenario {k}: optimum {:.2} at starts {:?}", v, sched.start_times);
            }
            let evpi = ev_pi(&instance.network, &prec, scenarios, &Conditioning::none())?;
            println!("ev-pi {evpi:.2}");
            if exact {
                let sol = exact_mdp_enpv(&instance, MDP_STATE_LIMIT, false)?;
                println!("exact-mdp {:.2} ({} states)", sol.value, sol.states_visited);
            }
        }
        _ => {
            anyhow::bail!("oracle values need a finite-scenario instance");
        }
    }
    Ok(())
}

fn cmd_baseline(cli: &Cli, instance_path: &PathBuf, policy: &str, episodes: usize) -> anyhow::Result<()> {
    let instance = read_instance_from_path(instance_path)?;
    match policy {
        "rigid" => {
            let (sched, value) = solve_rigid(&instance)?;
            println!("rigid enpv {value:.2} at starts {:?}", sched.start_times);
        }
        "dyn" => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(cli.seed);
            match (&instance.family, &instance.scenarios) {
                (Family::Omega1, Some(scenarios)) => {
                    let mut enpv = 0.0;
                    for s in scenarios {
                        let out = run_dyn(&instance, s, DynOptions::default(), &mut rng)?;
                        enpv += s.prob * out.npv;
                    }
                    println!("dyn enpv {enpv:.2}");
                }
                _ => {
                    let realized = npvsched::bench::sample_duration_vectors(&instance, episodes, cli.seed);
                    let mut sum = 0.0;
                    for durations in &realized {
                        let s = npvsched::project::Scenario::from_durations(
                            &instance.network.activities,
                            durations.clone(),
                            1.0,
                        );
                        let out = run_dyn(&instance, &s, DynOptions::default(), &mut rng)?;
                        sum += out.npv;
                    }
                    println!("dyn enpv {:.2} over {episodes} episodes", sum / realized.len() as f64);
                }
            }
        }
        other => anyhow::bail!("unknown policy {other:?} (expected rigid or dyn)"),
    }
    Ok(())
}

fn instance_hash(instance: &Instance) -> u64 {
    let mut buf = Vec::new();
    npvsched::instance::write_instance(instance, &mut buf).map(|_| ()).unwrap_or(());
    npvsched::bench::fxhash(&String::from_utf8_lossy(&buf))
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> anyhow::Result<()> {
    let instance = read_instance_from_path(&args.instance)?;
    let cfg = AgentConfig {
        variant: parse_variant(&args.variant)?,
        episodes: args.episodes,
        lr: args.lr,
        update_every: args.update_every,
        seed: cli.seed,
        ..AgentConfig::default()
    };
    let res = train(&instance, &cfg)?;
    std::fs::create_dir_all(&cli.out)?;
    let stem = instance_stem(&args.instance);
    let ckpt = cli.out.join(format!("{stem}-{}-seed{}.ckpt.json", args.variant, cli.seed));
    let meta = CheckpointMeta {
        layer_dims: res.params.layer_dims.clone(),
        episodes: res.completed_episodes as u64,
        env_config_hash: instance_hash(&instance),
    };
    write_checkpoint_to_path(&res.params, &res.adam, &meta, &ckpt)?;
    let log = cli.out.join(format!("{stem}-{}-seed{}.log.csv", args.variant, cli.seed));
    write_training_log_csv(&res.log, &log)?;
    let curves = curve_from_log(&res.log, cfg.variant);
    write_curves_csv(&curves, cli.out.join(format!("{stem}-{}-seed{}.curve.csv", args.variant, cli.seed)))?;
    println!("{}", ckpt.display());
    println!("{}", log.display());
    Ok(())
}

fn cmd_eval(cli: &Cli, instance_path: &PathBuf, checkpoint: &PathBuf) -> anyhow::Result<()> {
    let instance = read_instance_from_path(instance_path)?;
    let (params, _adam, meta) = read_checkpoint_from_path(checkpoint)?;
    let result = evaluate(&params, &instance, cli.eval_episodes, cli.seed)?;
    std::fs::create_dir_all(&cli.out)?;
    let report = cli.out.join(format!("{}-eval.csv", instance_stem(instance_path)));
    let mut text = String::from("metric,value\n");
    text.push_str(&format!("enpv,{:.6}\n", result.mean));
    text.push_str(&format!("std_err,{:.6}\n", result.std_err));
    text.push_str(&format!("train_episodes,{}\n", meta.episodes));
    if let Some(per) = &result.per_scenario {
        for (k, v) in per.iter().enumerate() {
            text.push_str(&format!("scenario_{k},{v:.6}\n"));
        }
        let prec = Precedence::new(&instance.network)?;
        let n_star = ev_pi(
            &instance.network,
            &prec,
            instance.scenarios.as_ref().unwrap(),
            &Conditioning::none(),
        )?;
        text.push_str(&format!("n_star,{n_star:.6}\n"));
        text.push_str(&format!("gap_pct,{:.4}\n", compute_gap(result.mean, n_star)?));
    }
    std::fs::write(&report, &text)?;
    print!("{text}");
    println!("{}", report.display());
    Ok(())
}

fn sweep_config(cli: &Cli, kind: ExperimentKind, args: &SweepArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str::<ExperimentConfig>(&text)?
    } else {
        let mut cfg = ExperimentConfig::desk_scale(kind, cli.out.clone());
        if args.full {
            cfg.sizes = vec![5, 10, 15, 20, 25, 30];
            cfg.scenario_counts = vec![2, 5, 10];
            cfg.instances_per_cell = 10;
        }
        if kind == ExperimentKind::Exp2 {
            cfg.sizes = if args.full {
                vec![5, 7, 10, 12, 15, 20, 25, 30]
            } else {
                vec![5, 7]
            };
        }
        cfg
    };
    cfg.agent.episodes = args.episodes;
    cfg.agent.update_every = args.update_every;
    cfg.agent.seed = cli.seed;
    cfg.out_dir = cli.out.clone();
    cfg.eval_episodes = cli.eval_episodes;
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Gen { family, n, scenarios, count } => cmd_gen(cli, family, *n, *scenarios, *count),
        Command::Oracle { instance, exact_mdp } => cmd_oracle(instance, *exact_mdp),
        Command::Baseline { instance, policy, episodes } => cmd_baseline(cli, instance, policy, *episodes),
        Command::Train(args) => cmd_train(cli, args),
        Command::Eval { instance, checkpoint } => cmd_eval(cli, instance, checkpoint),
        Command::Exp1(args) => {
            let cfg = sweep_config(cli, ExperimentKind::Exp1, args)?;
            let (rows, _) = run_experiment(&cfg)?;
            println!("{} rows -> {}", rows.len(), cfg.out_dir.join("results.csv").display());
            Ok(())
        }
        Command::Exp2(args) => {
            let cfg = sweep_config(cli, ExperimentKind::Exp2, args)?;
            let (rows, _) = run_experiment(&cfg)?;
            println!("{} rows -> {}", rows.len(), cfg.out_dir.join("results.csv").display());
            Ok(())
        }
        Command::Ablate(args) => {
            let cfg = sweep_config(cli, ExperimentKind::Ablation, args)?;
            let (rows, curves) = run_experiment(&cfg)?;
            println!(
                "{} rows, {} curve points -> {}",
                rows.len(),
                curves.len(),
                cfg.out_dir.join("curves.csv").display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    // Usage problems print help text and exit 1; --help/--version exit 0.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            // Validation and usage problems exit 1, runtime failures exit 2.
            let msg = e.to_string();
            let validation = match e.downcast_ref::<npvsched::Error>() {
                Some(err) => matches!(
                    err,
                    npvsched::Error::InvalidConfig(_)
                        | npvsched::Error::InvalidNetwork(_)
                        | npvsched::Error::Parse(_)
                        | npvsched::Error::VersionMismatch { .. }
                        | npvsched::Error::DimensionMismatch(_)
                ),
                None => msg.contains("unknown") || msg.contains("expected"),
            };
            if validation {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
