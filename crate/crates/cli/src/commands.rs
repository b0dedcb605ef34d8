//! Implementations of the CLI subcommands.

use std::fs;
use std::path::Path;
use std::time::Instant;

use warden_core::enactor::{read_trace_actions, run_mission, MissionRun, RunSetup};
use warden_core::fltl::{Formula, SafetyRule};
use warden_core::hybrid::AlertActuator;
use warden_core::mission::{
    ingest_obstacles, parse_mission, MissionError, MissionSpec, OccupancySnapshot,
};
use warden_core::sim::PlantParams;
use warden_core::synthesis::{build_game, solve_gr1, verify_controller, Controller, SolveResult};

use crate::{
    CheckTraceArgs, DumpLtsArgs, MissionArgs, SimulateArgs, SynthesizeArgs, VerifyArgs,
    EXIT_PARSE, EXIT_UNREALIZABLE, EXIT_VERIFICATION,
};

/// Error with the process exit code it maps to.
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(1, e.to_string())
    }
}

impl From<MissionError> for CliError {
    fn from(e: MissionError) -> Self {
        CliError::new(EXIT_PARSE, e.to_string())
    }
}

type CmdResult = Result<u8, CliError>;

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::new(1, format!("cannot read {}: {e}", path.display())))
}

/// Loads, validates and (optionally) augments the mission with snapshot
/// obstacles; parse and validation problems exit with code 4.
fn load_mission(args: &MissionArgs) -> Result<MissionSpec, CliError> {
    let mut mission = parse_mission(&read(&args.mission)?)?;
    if let Some(snapshot_path) = &args.obstacles {
        let snapshot = OccupancySnapshot::parse(&read(snapshot_path)?)?;
        let cells = ingest_obstacles(&snapshot, &mission.grid, mission.occupancy_threshold)?;
        println!(
            "obstacles: {} cell(s) tagged from {}",
            cells.len(),
            snapshot_path.display()
        );
        mission.add_avoid_cells(cells)?;
    }
    Ok(mission)
}

fn plant_for(mission: &MissionSpec, args: &MissionArgs) -> Result<PlantParams, CliError> {
    let mut params = PlantParams::default();
    mission.plant.apply(&mut params);
    let set = |target: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *target = v;
        }
    };
    set(&mut params.gain, args.plant_k);
    set(&mut params.damping, args.plant_d);
    set(&mut params.kp, args.plant_kp);
    set(&mut params.forward_speed, args.plant_vfwd);
    set(&mut params.drift, args.plant_drift);
    set(&mut params.dt, args.plant_dt);
    set(&mut params.v_max, args.plant_vmax);
    params
        .validate()
        .map_err(|e| CliError::new(EXIT_PARSE, e.to_string()))?;
    Ok(params)
}

fn synthesize_controller(mission: &MissionSpec) -> Result<Controller, CliError> {
    let compiled = mission.compile()?;
    let started = Instant::now();
    let game = build_game(&compiled.problem)
        .map_err(|e| CliError::new(1, e.to_string()))?;
    match solve_gr1(&game) {
        SolveResult::Realizable(strategy) => {
            let controller = warden_core::synthesis::extract_controller(&game, &strategy);
            println!(
                "synthesis: realizable; game {} nodes, {} goal(s), controller {} states, {} ms",
                game.num_nodes(),
                compiled.problem.spec.goals.len(),
                controller.lts.num_states(),
                started.elapsed().as_millis()
            );
            Ok(controller)
        }
        SolveResult::Unrealizable(report) => {
            Err(CliError::new(EXIT_UNREALIZABLE, report.to_string()))
        }
    }
}

pub fn synthesize(args: SynthesizeArgs) -> CmdResult {
    let mission = load_mission(&args.mission)?;
    let controller = synthesize_controller(&mission)?;
    fs::create_dir_all(&args.out)?;
    let path = args.out.join("controller.ctl");
    fs::write(&path, controller.to_text())?;
    println!("controller written to {}", path.display());
    Ok(0)
}

pub fn simulate(args: SimulateArgs) -> CmdResult {
    let mission = load_mission(&args.mission)?;
    let params = plant_for(&mission, &args.mission)?;
    fs::create_dir_all(&args.out)?;

    let controller = match &args.controller {
        Some(path) => Controller::parse(&read(path)?)
            .map_err(|e| CliError::new(EXIT_PARSE, e.to_string()))?,
        None => {
            let c = synthesize_controller(&mission)?;
            let path = args.out.join("controller.ctl");
            fs::write(&path, c.to_text())?;
            c
        }
    };

    if args.budget <= 0.0 {
        println!("warning: zero budget, nothing to simulate");
        fs::write(args.out.join("trace.txt"), "")?;
        return Ok(0);
    }

    let alerts: Vec<AlertActuator> = mission
        .reactions
        .iter()
        .map(|r| AlertActuator::new(&r.on_action, &r.off_action))
        .collect();
    let run = run_mission(&RunSetup {
        controller: &controller,
        grid: &mission.grid,
        start: mission.start,
        alerts,
        params,
        budget_s: args.budget,
        seed: args.seed,
        noise_std_px: args.noise_px,
    })
    .map_err(|e| CliError::new(1, e.to_string()))?;

    write_outputs(&args.out, &mission, &run)?;
    let arrivals = run.trace.actions().filter(|a| a.starts_with("arrived")).count();
    println!(
        "simulated {:.0} s: {} trace events ({} arrivals); outputs in {}",
        args.budget,
        run.trace.entries.len(),
        arrivals,
        args.out.display()
    );
    Ok(0)
}

fn write_outputs(out: &Path, mission: &MissionSpec, run: &MissionRun) -> Result<(), CliError> {
    fs::write(out.join("trace.txt"), run.trace.to_text())?;
    fs::write(out.join("sim.log"), run.log_text())?;
    let mut csv = String::from("t,x,y,theta\n");
    for t in &run.ticks {
        csv.push_str(&format!("{:.3},{:.3},{:.3},{:.6}\n", t.t, t.x, t.y, t.heading));
    }
    fs::write(out.join("trajectory.csv"), csv)?;
    fs::write(out.join("trajectory.svg"), crate::draw::trajectory_svg(mission, &run.ticks))?;
    Ok(())
}

pub fn verify(args: VerifyArgs) -> CmdResult {
    let mission = load_mission(&args.mission)?;
    let compiled = mission.compile()?;
    let controller = Controller::parse(&read(&args.controller)?)
        .map_err(|e| CliError::new(EXIT_PARSE, e.to_string()))?;
    let report = verify_controller(&compiled.problem, &controller);
    print!("{report}");
    if report.all_ok() {
        Ok(0)
    } else {
        Ok(EXIT_VERIFICATION)
    }
}

pub fn check_trace(args: CheckTraceArgs) -> CmdResult {
    let mission = load_mission(&args.mission)?;
    let compiled = mission.compile()?;
    let table = &compiled.problem.fluents;
    let spec = &compiled.problem.spec;
    let (actions, loop_start) = read_trace_actions(&read(&args.trace)?);

    // Reassemble the full formulas for reporting.
    let mut formulas: Vec<Formula> = Vec::new();
    for rule in &spec.safety {
        formulas.push(match rule {
            SafetyRule::Invariant(f) => f.clone().always(),
            SafetyRule::Prompt { guard, action } => {
                guard.clone().implies(Formula::atom(action).next()).always()
            }
        });
    }
    for a in &spec.assumptions {
        formulas.push(a.clone().eventually().always());
    }
    for g in &spec.goals {
        formulas.push(g.clone().eventually().always());
    }

    let mut failed = false;
    match loop_start {
        Some(at) if at < actions.len() => {
            let (prefix, looping) = actions.split_at(at);
            for f in &formulas {
                let verdict = warden_core::fltl::evaluate_lasso(f, prefix, looping, table);
                println!("[{}] {f}", if verdict { "PASS" } else { "FAIL" });
                failed |= !verdict;
            }
        }
        _ => {
            // Finite prefix: safety is checked positionally, liveness is
            // reported as visit counts.
            let violations = check_safety_on_prefix(spec, table, &actions);
            for (f, verdict) in formulas.iter().zip(violations.safety_verdicts) {
                match verdict {
                    None => println!("[PASS] {f} (holds on the finite prefix)"),
                    Some(pos) => {
                        println!("[FAIL] {f} (violated at position {pos})");
                        failed = true;
                    }
                }
            }
            for (a, count) in spec.assumptions.iter().zip(violations.assumption_visits) {
                println!("[INFO] G F {a}: assumption satisfied {count} time(s) on the prefix");
            }
            for (g, count) in spec.goals.iter().zip(violations.goal_visits) {
                println!("[INFO] G F {g}: satisfied {count} time(s) on the prefix");
            }
        }
    }
    Ok(if failed { EXIT_VERIFICATION } else { 0 })
}

struct PrefixReport {
    /// One entry per safety rule: position of the first violation, if any.
    safety_verdicts: Vec<Option<usize>>,
    assumption_visits: Vec<usize>,
    goal_visits: Vec<usize>,
}

/// Replays the fluents over a finite action prefix: invariants must hold at
/// every position, a prompt guard at position i forces the action at i+1.
fn check_safety_on_prefix(
    spec: &warden_core::fltl::Gr1Spec,
    table: &warden_core::fltl::FluentTable,
    actions: &[String],
) -> PrefixReport {
    let mut vals = table.initial_valuation();
    let mut last: Option<&str> = None;
    let mut safety_verdicts: Vec<Option<usize>> = vec![None; spec.safety.len()];
    let mut assumption_visits = vec![0usize; spec.assumptions.len()];
    let mut goal_visits = vec![0usize; spec.goals.len()];
    for pos in 0..=actions.len() {
        let lookup = |name: &str| match table.index_of(name) {
            Some(i) => vals[i],
            None => last == Some(name),
        };
        for (k, rule) in spec.safety.iter().enumerate() {
            if safety_verdicts[k].is_some() {
                continue;
            }
            match rule {
                SafetyRule::Invariant(f) => {
                    if !f.eval_propositional(&lookup) {
                        safety_verdicts[k] = Some(pos);
                    }
                }
                SafetyRule::Prompt { guard, action } => {
                    if guard.eval_propositional(&lookup)
                        && pos < actions.len()
                        && &actions[pos] != action
                    {
                        safety_verdicts[k] = Some(pos);
                    }
                }
            }
        }
        for (i, a) in spec.assumptions.iter().enumerate() {
            if a.eval_propositional(&lookup) {
                assumption_visits[i] += 1;
            }
        }
        for (j, g) in spec.goals.iter().enumerate() {
            if g.eval_propositional(&lookup) {
                goal_visits[j] += 1;
            }
        }
        if pos < actions.len() {
            vals = table.update(&vals, &actions[pos]);
            last = Some(&actions[pos]);
        }
    }
    PrefixReport { safety_verdicts, assumption_visits, goal_visits }
}

pub fn dump_lts(args: DumpLtsArgs) -> CmdResult {
    let mission = load_mission(&args.mission)?;
    let compiled = mission.compile()?;
    let text = compiled.problem.environment.to_text();
    match args.out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(0)
}
