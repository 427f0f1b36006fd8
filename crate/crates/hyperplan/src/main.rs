//! Command-line front end: compile formulas, validate worlds, solve games,
//! synthesize and simulate deceptive policies, run detectors, and execute
//! bundled or user-provided experiment presets.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hyperplan::game::{build_world, HistoryRec};
use hyperplan::harness::{
    self, derive_seed, lambda_csv, load_spec, load_world, mismatch_csv,
    run_delay_sweep, run_experiment, run_lambda_validation, run_mismatch_demo, ResultTable,
};
use hyperplan::hypergame::{build_hyper_mdp, synthesize};
use hyperplan::inference::{CusumState, TieRule};
use hyperplan::opponent::{
    build_level_stack, level_scores, trajectory_likelihood, ChParams, PoissonEstimate,
    ScoreScale,
};
use hyperplan::scltl::{parse, to_dfa, ApSet};
use hyperplan::solvers::{shapley_vi, stackelberg_response, GameDfaProduct};

#[derive(Parser)]
#[command(name = "hyperplan", about = "Deceptive strategy synthesis and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a co-safe LTL formula to its minimal DFA.
    Compile {
        #[arg(long)]
        formula: String,
        /// Comma-separated atomic propositions.
        #[arg(long)]
        ap: String,
        /// Write the automaton dump here instead of stdout.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// World config tools.
    World {
        #[command(subcommand)]
        cmd: WorldCmd,
    },
    /// Solve a world + objective with an exact solver and dump values.
    Solve {
        /// World preset name or config path.
        #[arg(long)]
        world: String,
        #[arg(long)]
        formula: String,
        /// nash (Shapley), mdp (cooperative upper bound), or stackelberg.
        #[arg(long)]
        mode: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the hypergame for a spec and dump the synthesized policy.
    Synthesize {
        spec: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one episode under a spec and log the trajectory.
    Simulate(RunArgs),
    /// Replay a logged trajectory through the hypothesis detector.
    Infer {
        spec: String,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Run the online mismatch demo for a spec (requires deviation_step).
    Detect(RunArgs),
    /// Estimate the opponent's reasoning depth λ.
    LearnLambda {
        spec: String,
        /// True λ of the generator in the validation protocol.
        #[arg(long, default_value_t = 2.0)]
        lambda: f64,
        #[arg(long, default_value_t = 100)]
        trajectories: usize,
        /// Joint steps per trajectory.
        #[arg(long, default_value_t = 11)]
        length: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Score logged trajectories from this directory instead of
        /// generating them.
        #[arg(long)]
        traces: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a bundled or user experiment preset end to end.
    Experiment {
        spec: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Sweep the trap-reallocation cooldown over these comma-separated
        /// values instead of a single run.
        #[arg(long)]
        sweep_cooldown: Option<String>,
        /// Exit nonzero if the preset's acceptance thresholds are violated.
        #[arg(long)]
        check: bool,
    },
}

#[derive(Subcommand)]
enum WorldCmd {
    /// Parse and validate a world config.
    Validate { path: String },
}

#[derive(Args)]
struct RunArgs {
    spec: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_or_print(out: Option<&PathBuf>, text: &str) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run() -> Result<(), String> {
    match Cli::parse().command {
        Command::Compile { formula, ap, dump } => {
            let ap = ApSet::new(ap.split(',').map(str::trim)).map_err(|e| e.to_string())?;
            let f = parse(&formula, &ap).map_err(|e| e.to_string())?;
            let dfa = to_dfa(&f, &ap).map_err(|e| e.to_string())?;
            write_or_print(dump.as_ref(), &dfa.dump())
        }
        Command::World { cmd: WorldCmd::Validate { path } } => {
            let cfg = load_world(&path, None).map_err(|e| e.to_string())?;
            let g = build_world(&cfg).map_err(|e| e.to_string())?;
            println!(
                "{}: ok ({} states, {}×{} actions)",
                cfg.name,
                g.num_states,
                g.num_a1(),
                g.num_a2()
            );
            Ok(())
        }
        Command::Solve { world, formula, mode, out } => {
            let cfg = load_world(&world, None).map_err(|e| e.to_string())?;
            let g = build_world(&cfg).map_err(|e| e.to_string())?;
            let f = parse(&formula, &g.ap).map_err(|e| e.to_string())?;
            let dfa = to_dfa(&f, &g.ap).map_err(|e| e.to_string())?;
            let text = match mode.as_str() {
                "nash" => {
                    let sol = shapley_vi(&g, &dfa).map_err(|e| e.to_string())?;
                    let prod = GameDfaProduct::new(&g, &dfa);
                    let mut text =
                        format!("# value at init: {:.6}\n", sol.values[prod.init()]);
                    for (id, v) in sol.values.iter().enumerate() {
                        let dist: Vec<String> =
                            sol.strat1[id].iter().map(|p| format!("{p:.4}")).collect();
                        text.push_str(&format!("{id} {v:.6} [{}]\n", dist.join(" ")));
                    }
                    text
                }
                "stackelberg" => {
                    let sol = stackelberg_response(&g, &dfa).map_err(|e| e.to_string())?;
                    let mut text = format!("# value at init: {:.6}\n", sol.values[sol.init]);
                    for (id, v) in sol.values.iter().enumerate() {
                        text.push_str(&format!(
                            "{id} {v:.6} a2={} a1={}\n",
                            sol.p2_action[id], sol.p1_action[id]
                        ));
                    }
                    text
                }
                "mdp" => {
                    // Cooperative relaxation: P1 picks the best joint action —
                    // an upper bound / feasibility check on the objective.
                    let sol = cooperative_values(&g, &dfa);
                    let mut text = format!("# value at init: {:.6}\n", sol.1);
                    for (id, v) in sol.0.iter().enumerate() {
                        text.push_str(&format!("{id} {v:.6}\n"));
                    }
                    text
                }
                m => return Err(format!("unknown mode `{m}`")),
            };
            write_or_print(out.as_ref(), &text)
        }
        Command::Synthesize { spec, out } => {
            let (spec, base) = load_spec(&spec).map_err(|e| e.to_string())?;
            let scn =
                harness::build_scenario(&spec, base.as_deref()).map_err(|e| e.to_string())?;
            let hyper = build_hyper_mdp(&scn.game, &scn.dfa, &scn.space, &scn.bsr, scn.params)
                .map_err(|e| e.to_string())?;
            let syn = synthesize(&hyper).map_err(|e| e.to_string())?;
            let mut text = format!(
                "# {} hypergame states, value at init: {:.6}\n",
                hyper.num_states(),
                syn.init_value
            );
            for (id, v) in hyper.states.iter().enumerate() {
                text.push_str(&format!(
                    "(s={} class={} q={} x={}) action={} value={:.6}\n",
                    v.s, v.class, v.q, v.x, syn.action[id], syn.values[id]
                ));
            }
            write_or_print(out.as_ref(), &text)
        }
        Command::Simulate(args) => {
            let (spec, base) = load_spec(&args.spec).map_err(|e| e.to_string())?;
            let seed = args.seed.unwrap_or(spec.master_seed);
            let log = harness::log_episode(&spec, base.as_deref(), seed)
                .map_err(|e| e.to_string())?;
            write_or_print(args.out.as_ref(), &log)
        }
        Command::Infer { spec, trace } => {
            let (spec, base) = load_spec(&spec).map_err(|e| e.to_string())?;
            let scn =
                harness::build_scenario(&spec, base.as_deref()).map_err(|e| e.to_string())?;
            let text = std::fs::read_to_string(&trace)
                .map_err(|e| format!("{}: {e}", trace.display()))?;
            let obs = harness::parse_trajectory(&text).map_err(|e| e.to_string())?;
            let mut st = CusumState::new(
                scn.space.len(),
                scn.space.x0,
                spec.window,
                spec.threshold,
                TieRule::LowestIndex,
            );
            let mut rng = ChaCha8Rng::seed_from_u64(spec.master_seed);
            println!("step,hypothesis");
            for (i, y) in obs.iter().enumerate() {
                st.update(scn.space.log_measures(&scn.game, y));
                st.detect_change(&mut rng);
                println!("{},{}", i, st.nominal);
            }
            Ok(())
        }
        Command::Detect(args) => {
            let (spec, base) = load_spec(&args.spec).map_err(|e| e.to_string())?;
            if spec.deviation_step.is_none() {
                return Err("spec has no deviation_step".into());
            }
            let seed = args.seed.unwrap_or(spec.master_seed);
            let run = run_mismatch_demo(&spec, base.as_deref(), seed)
                .map_err(|e| e.to_string())?;
            match run.rejection_step {
                Some(step) => eprintln!("rejected at step {step}"),
                None => eprintln!("no rejection within the horizon"),
            }
            write_or_print(args.out.as_ref(), &mismatch_csv(&run))
        }
        Command::LearnLambda { spec, lambda, trajectories, length, seed, traces, out } => {
            let (spec, base) = load_spec(&spec).map_err(|e| e.to_string())?;
            let seed = seed.unwrap_or(spec.master_seed);
            let estimates = match traces {
                None => run_lambda_validation(
                    &spec,
                    base.as_deref(),
                    lambda,
                    trajectories,
                    length,
                    seed,
                )
                .map_err(|e| e.to_string())?,
                Some(dir) => score_logged_traces(&spec, base.as_deref(), &dir)?,
            };
            if let Some(last) = estimates.last() {
                eprintln!("final lambda estimate: {last:.4}");
            }
            write_or_print(out.as_ref(), &lambda_csv(&estimates))
        }
        Command::Experiment { spec, seed, episodes, out_dir, sweep_cooldown, check } => {
            let (mut spec, base) = load_spec(&spec).map_err(|e| e.to_string())?;
            if let Some(s) = seed {
                spec.master_seed = s;
            }
            if let Some(n) = episodes {
                spec.episodes = n;
            }
            let table = if let Some(ks) = sweep_cooldown {
                let ks: Vec<usize> = ks
                    .split(',')
                    .map(|t| t.trim().parse().map_err(|e| format!("bad k `{t}`: {e}")))
                    .collect::<Result<_, String>>()?;
                run_delay_sweep(&spec, base.as_deref(), &ks).map_err(|e| e.to_string())?
            } else if spec.deviation_step.is_some() {
                mismatch_table(&spec, base.as_deref())?
            } else {
                run_experiment(&spec, base.as_deref()).map_err(|e| e.to_string())?
            };
            let csv = table.to_csv();
            match out_dir {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)
                        .map_err(|e| format!("{}: {e}", dir.display()))?;
                    let path = dir.join(format!("{}.csv", spec.name));
                    std::fs::write(&path, &csv)
                        .map_err(|e| format!("{}: {e}", path.display()))?;
                    println!("{csv}");
                }
                None => println!("{csv}"),
            }
            if check {
                check_thresholds(&spec.name, &table)?;
            }
            Ok(())
        }
    }
}

/// Upper bound where P1 controls both players' actions.
fn cooperative_values(
    g: &hyperplan::game::ConcurrentGame,
    dfa: &hyperplan::scltl::Dfa,
) -> (Vec<f64>, f64) {
    use hyperplan::solvers::{mdp_reachability_vi, ReachMdp};
    let prod = GameDfaProduct::new(g, dfa);
    let n = prod.num_states();
    let mut actions_per_state = Vec::with_capacity(n);
    let mut rows = Vec::new();
    let mut target = vec![false; n];
    let mut sink = vec![false; n];
    for id in 0..n {
        let (s, q) = prod.split(id);
        target[id] = dfa.is_accepting(q);
        sink[id] = dfa.is_sink(q);
        if target[id] || sink[id] {
            actions_per_state.push(1);
            rows.push(vec![(id as u32, 1.0)]);
            continue;
        }
        let a2s = g.avail2(s);
        actions_per_state.push(g.num_a1() * a2s.len());
        for a1 in 0..g.num_a1() {
            for &a2 in a2s {
                rows.push(
                    g.row(s, a1, a2 as usize)
                        .iter()
                        .map(|&(t, p)| {
                            (prod.id(t as usize, prod.q_next(q, t as usize)) as u32, p)
                        })
                        .collect(),
                );
            }
        }
    }
    let mdp = ReachMdp::new(&actions_per_state, rows, target, sink, prod.init());
    let (values, _) = mdp_reachability_vi(&mdp).expect("cooperative VI");
    let v0 = values[prod.init()];
    (values, v0)
}

/// Run the mismatch demo over all episode seeds, reporting rejection-step
/// statistics as a result table.
fn mismatch_table(
    spec: &harness::ExperimentSpec,
    base: Option<&std::path::Path>,
) -> Result<ResultTable, String> {
    let mut steps: Vec<usize> = Vec::new();
    let mut detected = 0usize;
    for i in 0..spec.episodes {
        let run = run_mismatch_demo(spec, base, derive_seed(spec.master_seed, i as u64))
            .map_err(|e| e.to_string())?;
        if let Some(s) = run.rejection_step {
            detected += 1;
            steps.push(s);
        }
    }
    steps.sort_unstable();
    let median = steps.get(steps.len() / 2).copied().unwrap_or(usize::MAX);
    let mut table = ResultTable::default();
    let mut row = harness::ResultRow::from_counts(
        format!("{}_median_step_{median}", spec.name),
        detected,
        spec.episodes,
        steps.iter().sum::<usize>(),
    );
    row.detector_stops = detected;
    table.rows.push(row);
    Ok(table)
}

/// λ estimation over previously logged trajectories.
fn score_logged_traces(
    spec: &harness::ExperimentSpec,
    base: Option<&std::path::Path>,
    dir: &PathBuf,
) -> Result<Vec<f64>, String> {
    use hyperplan::solvers::subgoal_game;
    let cfg_text = load_world(&spec.world, base).map_err(|e| e.to_string())?;
    let g = build_world(&cfg_text).map_err(|e| e.to_string())?;
    let caps: Vec<&str> = spec.capture_atoms.iter().map(String::as_str).collect();
    let subgoal = spec.subgoals.first().ok_or("spec has no subgoals")?;
    let sub = subgoal_game(&g, subgoal, &caps).map_err(|e| e.to_string())?;
    let ch = ChParams { levels: spec.levels, tau: spec.tau, ..Default::default() };
    let stack = build_level_stack(&sub, &ch).map_err(|e| e.to_string())?;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    let mut est = PoissonEstimate::new(spec.levels, spec.tau);
    let mut out = Vec::new();
    for path in entries {
        let text =
            std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let obs = harness::parse_trajectory(&text).map_err(|e| e.to_string())?;
        if obs.is_empty() {
            continue;
        }
        let mut h = HistoryRec::start(obs[0].s as usize);
        for y in &obs {
            h.push(y.a1 as usize, y.a2 as usize, y.s_next as usize);
        }
        let r: Vec<f64> = (0..=spec.levels)
            .map(|k| trajectory_likelihood(&g, &stack, k, &h))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        est.update(&level_scores(&r, spec.tau, ScoreScale::Raw));
        out.push(est.lambda);
    }
    Ok(out)
}

/// Per-preset acceptance thresholds for `--check`.
fn check_thresholds(name: &str, table: &ResultTable) -> Result<(), String> {
    let rate = table.rows.first().map(|r| r.rate).unwrap_or(f64::NAN);
    let ok = match name {
        "world1_asym" => rate >= 0.85,
        "world1_sym" => rate <= 0.45,
        "pursuit_exp4" => rate > 0.25,
        _ if name.starts_with("world2_delay") => table
            .rows
            .windows(2)
            .all(|w| w[1].value.unwrap_or(0.0) >= w[0].value.unwrap_or(0.0) - 1e-9),
        _ => true,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("{name}: acceptance threshold violated (rate {rate:.4})"))
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
