//! Runtime interpretation of a synthesized controller: dispatch enabled
//! controllable actions to hybrid modules and advance on uncontrollable
//! events delivered through a single FIFO queue, the only channel from the
//! hybrid layer into the enactor.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::hybrid::{AlertActuator, HybridError, MotionHandler, MotionPhase};
use crate::lts::StateId;
use crate::mission::{arrived_action, cell_of_action, Cell, GridWorkspace};
use crate::sim::{PlantParams, RobotState, Simulator};
use crate::synthesis::Controller;

#[derive(Debug, Error)]
pub enum EnactError {
    #[error("unexpected event `{event}` in controller state {state} (enabled: {enabled}); environment assumptions are broken")]
    UnexpectedEvent { event: String, state: StateId, enabled: String },
    #[error("controllable action `{0}` has no registered hybrid module")]
    NoHandler(String),
    #[error(transparent)]
    Hybrid(#[from] HybridError),
}

/// FIFO of uncontrollable event occurrences, consumed in arrival order.
#[derive(Debug, Default)]
pub struct EventQueue {
    events: VecDeque<String>,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: String) {
        self.events.push_back(event);
    }

    pub fn pop(&mut self) -> Option<String> {
        self.events.pop_front()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceKind {
    Dispatched,
    Received,
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceKind::Dispatched => f.write_str("dispatched"),
            TraceKind::Received => f.write_str("received"),
        }
    }
}

/// One timestamped action with the controller state reached after it.
#[derive(Clone, Debug)]
pub struct TraceEntry {
    pub t: f64,
    pub kind: TraceKind,
    pub action: String,
    pub state: StateId,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={:.3} {} {} state={}", self.t, self.kind, self.action, self.state)
    }
}

/// The discrete record of one enactment.
#[derive(Clone, Debug, Default)]
pub struct EnactmentTrace {
    pub entries: Vec<TraceEntry>,
}

impl EnactmentTrace {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&e.to_string());
            s.push('\n');
        }
        s
    }

    pub fn actions(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.action.as_str())
    }
}

/// Reads a trace file: either bare action names or full trace-entry lines,
/// one per line, with an optional `@loop` marker naming the loop start.
pub fn read_trace_actions(text: &str) -> (Vec<String>, Option<usize>) {
    let mut actions = Vec::new();
    let mut loop_start = None;
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line == "@loop" {
            loop_start = Some(actions.len());
            continue;
        }
        if line.starts_with("t=") {
            let mut parts = line.split_whitespace();
            let (_t, _kind, action) = (parts.next(), parts.next(), parts.next());
            if let Some(a) = action {
                actions.push(a.to_string());
            }
        } else {
            actions.push(line.to_string());
        }
    }
    (actions, loop_start)
}

/// Result of one enactor step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    /// Consumed an event from the queue and advanced.
    Received(String),
    /// Chose a controllable action; its transition is already taken.
    Dispatched(String),
    /// Nothing to consume and nothing to dispatch.
    Idle,
}

/// One enactor decision: consume a pending event if there is one, otherwise
/// dispatch the enabled controllable action, otherwise idle. An event with
/// no matching transition surfaces a broken environment assumption.
pub fn step(
    controller: &Controller,
    state: &mut StateId,
    queue: &mut EventQueue,
) -> Result<StepOutcome, EnactError> {
    let lts = &controller.lts;
    if let Some(event) = queue.pop() {
        let matching = lts
            .transitions_from(*state)
            .iter()
            .find(|&&(l, _)| lts.alphabet().label(l).name() == event);
        return match matching {
            Some(&(_, target)) => {
                *state = target;
                Ok(StepOutcome::Received(event))
            }
            None => {
                let enabled = lts
                    .transitions_from(*state)
                    .iter()
                    .map(|&(l, _)| lts.alphabet().label(l).name())
                    .collect::<Vec<_>>()
                    .join(", ");
                Err(EnactError::UnexpectedEvent { event, state: *state, enabled })
            }
        };
    }
    let controllable = lts
        .transitions_from(*state)
        .iter()
        .find(|&&(l, _)| lts.alphabet().label(l).is_controllable());
    if let Some(&(l, target)) = controllable {
        let action = lts.alphabet().label(l).name().to_string();
        *state = target;
        return Ok(StepOutcome::Dispatched(action));
    }
    Ok(StepOutcome::Idle)
}

/// Everything a closed-loop run needs.
pub struct RunSetup<'a> {
    pub controller: &'a Controller,
    pub grid: &'a GridWorkspace,
    pub start: Cell,
    /// Direct actuators for reaction capabilities.
    pub alerts: Vec<AlertActuator>,
    pub params: PlantParams,
    /// Simulated seconds to run; the budget running out is a normal
    /// completion, not an error.
    pub budget_s: f64,
    pub seed: u64,
    /// Sensor noise in pixels (0 disables the noise path entirely).
    pub noise_std_px: f64,
}

/// One line of the simulation log.
#[derive(Clone, Debug)]
pub struct TickRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    /// R = rotating, F = forward, I = idle/done.
    pub phase: char,
    pub forward: bool,
    pub voltage: f64,
    pub alert: bool,
}

impl fmt::Display for TickRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.3} {:.3} {:.3} {:.6} {} {} {:.6} {}",
            self.t,
            self.x,
            self.y,
            self.heading,
            self.phase,
            self.forward as u8,
            self.voltage,
            self.alert as u8
        )
    }
}

/// A completed (or budget-exhausted) run: the discrete trace plus the
/// per-tick simulation log.
pub struct MissionRun {
    pub trace: EnactmentTrace,
    pub ticks: Vec<TickRecord>,
}

impl MissionRun {
    pub fn log_text(&self) -> String {
        let mut s = String::from("# t x y theta phase fwd V alert\n");
        for t in &self.ticks {
            s.push_str(&t.to_string());
            s.push('\n');
        }
        s
    }
}

/// Interprets the controller against the simulated robot until the budget
/// is exhausted: every tick the enactor first drains the queue and
/// dispatches (instantaneous actions synchronously, at most one motion goal
/// in flight), then the hybrid layer produces references, the plant steps,
/// and arrivals are fed back through the queue.
pub fn run_mission(setup: &RunSetup) -> Result<MissionRun, EnactError> {
    let controller = setup.controller;
    let (cx, cy) = setup.grid.cell_center(setup.start);
    let mut sim = Simulator::new(setup.params, RobotState::at(cx, cy, 0.0))
        .expect("validated plant parameters");
    if setup.noise_std_px > 0.0 {
        sim = sim.with_sensor_noise(setup.noise_std_px, setup.seed);
    }
    let mut motion = MotionHandler::new(setup.start);
    let mut queue = EventQueue::new();
    let mut state = controller.lts.initial();
    let mut trace = EnactmentTrace::default();
    let mut ticks: Vec<TickRecord> = Vec::new();

    let steps = (setup.budget_s / setup.params.dt).round() as usize;
    for _ in 0..steps {
        // Drain the queue and dispatch until the enactor goes idle. The
        // bound only guards against a controller trying to fire unboundedly
        // many instantaneous actions in one tick.
        for round in 0.. {
            assert!(round < 64, "enactor failed to go idle within one tick");
            match step(controller, &mut state, &mut queue)? {
                StepOutcome::Received(action) => {
                    trace.entries.push(TraceEntry {
                        t: sim.state.t,
                        kind: TraceKind::Received,
                        action,
                        state,
                    });
                }
                StepOutcome::Dispatched(action) => {
                    trace.entries.push(TraceEntry {
                        t: sim.state.t,
                        kind: TraceKind::Dispatched,
                        action: action.clone(),
                        state,
                    });
                    if let Some(("go", cell)) = cell_of_action(&action) {
                        motion.handle_go(cell, setup.grid)?;
                    } else if let Some(flag) =
                        setup.alerts.iter().find_map(|a| a.interpret(&action))
                    {
                        sim.set_alert(flag);
                    } else {
                        return Err(EnactError::NoHandler(action));
                    }
                }
                StepOutcome::Idle => break,
            }
        }

        let refs = motion.control((sim.state.x, sim.state.y, sim.state.heading));
        let voltage = sim.tick(&refs);
        ticks.push(TickRecord {
            t: sim.state.t,
            x: sim.state.x,
            y: sim.state.y,
            heading: sim.state.heading,
            phase: match motion.phase() {
                Some(MotionPhase::Rotate) => 'R',
                Some(MotionPhase::Forward) => 'F',
                _ => 'I',
            },
            forward: refs.forward,
            voltage,
            alert: sim.state.alert,
        });
        if let Some(cell) = motion.check_arrival(sim.state.x, sim.state.y) {
            queue.push(arrived_action(cell));
        }
    }
    Ok(MissionRun { trace, ticks })
}
