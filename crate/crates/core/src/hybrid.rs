//! Hybrid modules: translation between discrete actions and continuous
//! control. The motion handler turns a `go[i][j]` into a target position at
//! the cell centre and drives it with a two-phase strategy: rotate in place
//! until the heading points at the target, then move forward, re-aiming if
//! the heading error grows too large. Arrival inside the detection radius
//! emits the matching `arrived[i][j]` event exactly once per goal.

use thiserror::Error;

use crate::mission::{Cell, GridWorkspace};
use crate::sim::{wrap_angle, MotionRefs};

/// Distance to a cell centre below which the robot counts as arrived.
pub const ARRIVAL_RADIUS_MM: f64 = 100.0;
/// Heading error below which rotation hands over to forward motion.
pub const HEADING_TOLERANCE_RAD: f64 = 0.1;
/// Heading error above which a forward run re-enters the rotate phase.
pub const REAIM_THRESHOLD_RAD: f64 = 0.35;
/// Largest forward-motion heading drift the motion handler is specified to
/// absorb while still reaching adjacent cells in bounded time.
pub const DRIFT_BOUND_RAD_S: f64 = 0.05;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HybridError {
    #[error("go target ({0}, {1}) is not adjacent to the current cell ({2}, {3})")]
    NonAdjacentTarget(usize, usize, usize, usize),
}

/// Tunable thresholds of the two-phase motion control.
#[derive(Clone, Copy, Debug)]
pub struct MotionConfig {
    pub arrival_radius_mm: f64,
    pub heading_tolerance_rad: f64,
    pub reaim_threshold_rad: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig {
            arrival_radius_mm: ARRIVAL_RADIUS_MM,
            heading_tolerance_rad: HEADING_TOLERANCE_RAD,
            reaim_threshold_rad: REAIM_THRESHOLD_RAD,
        }
    }
}

/// A continuous motion target derived from one `go` action.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionGoal {
    /// Centre of the target cell in workspace millimetres.
    pub target_mm: (f64, f64),
    pub source_cell: Cell,
    pub target_cell: Cell,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MotionPhase {
    Rotate,
    Forward,
    Done,
}

#[derive(Clone, Copy, Debug)]
struct ActiveGoal {
    goal: MotionGoal,
    phase: MotionPhase,
}

/// Tracks the robot's discrete cell and drives at most one motion goal.
#[derive(Debug)]
pub struct MotionHandler {
    config: MotionConfig,
    current_cell: Cell,
    active: Option<ActiveGoal>,
}

impl MotionHandler {
    pub fn new(start: Cell) -> Self {
        Self::with_config(start, MotionConfig::default())
    }

    pub fn with_config(start: Cell, config: MotionConfig) -> Self {
        MotionHandler { config, current_cell: start, active: None }
    }

    pub fn current_cell(&self) -> Cell {
        self.current_cell
    }

    pub fn active_goal(&self) -> Option<&MotionGoal> {
        self.active.as_ref().map(|a| &a.goal)
    }

    pub fn phase(&self) -> Option<MotionPhase> {
        self.active.as_ref().map(|a| a.phase)
    }

    /// True while a goal is being driven (dispatched but not yet arrived).
    pub fn in_flight(&self) -> bool {
        matches!(
            self.active,
            Some(ActiveGoal { phase: MotionPhase::Rotate | MotionPhase::Forward, .. })
        )
    }

    /// Accepts a `go` toward an adjacent cell and sets the continuous goal
    /// at that cell's centre.
    pub fn handle_go(
        &mut self,
        target: Cell,
        grid: &GridWorkspace,
    ) -> Result<MotionGoal, HybridError> {
        debug_assert!(!self.in_flight(), "a new go arrived while one is in flight");
        let (ci, cj) = self.current_cell;
        let adjacent = target.0.abs_diff(ci) + target.1.abs_diff(cj) == 1;
        if !adjacent || !grid.contains(target) {
            return Err(HybridError::NonAdjacentTarget(target.0, target.1, ci, cj));
        }
        let goal = MotionGoal {
            target_mm: grid.cell_center(target),
            source_cell: self.current_cell,
            target_cell: target,
        };
        self.active = Some(ActiveGoal { goal, phase: MotionPhase::Rotate });
        Ok(goal)
    }

    /// One control decision: phase transitions first, then the references
    /// for the feedback layer. The heading reference is re-computed every
    /// call, so the orientation servo keeps correcting during forward
    /// motion.
    pub fn control(&mut self, pose: (f64, f64, f64)) -> MotionRefs {
        let (x, y, heading) = pose;
        let Some(active) = self.active.as_mut() else {
            return MotionRefs { heading_ref: heading, forward: false };
        };
        let (tx, ty) = active.goal.target_mm;
        let bearing = (ty - y).atan2(tx - x);
        let err = wrap_angle(bearing - heading).abs();
        match active.phase {
            MotionPhase::Rotate if err <= self.config.heading_tolerance_rad => {
                active.phase = MotionPhase::Forward;
            }
            MotionPhase::Forward if err > self.config.reaim_threshold_rad => {
                active.phase = MotionPhase::Rotate;
            }
            _ => {}
        }
        match active.phase {
            MotionPhase::Rotate => MotionRefs { heading_ref: bearing, forward: false },
            MotionPhase::Forward => MotionRefs { heading_ref: bearing, forward: true },
            MotionPhase::Done => MotionRefs { heading_ref: heading, forward: false },
        }
    }

    /// Edge-triggered arrival detection: the first position inside the
    /// arrival radius completes the goal and returns the reached cell; the
    /// detector re-arms only on the next `handle_go`, so boundary jitter
    /// cannot emit twice.
    pub fn check_arrival(&mut self, x: f64, y: f64) -> Option<Cell> {
        let active = self.active.as_mut()?;
        if active.phase == MotionPhase::Done {
            return None;
        }
        if within_arrival_radius((x, y), active.goal.target_mm, self.config.arrival_radius_mm) {
            active.phase = MotionPhase::Done;
            self.current_cell = active.goal.target_cell;
            return Some(self.current_cell);
        }
        None
    }
}

/// Strictly-less-than test against the arrival radius.
pub fn within_arrival_radius(pos: (f64, f64), target: (f64, f64), radius_mm: f64) -> bool {
    let dx = pos.0 - target.0;
    let dy = pos.1 - target.1;
    (dx * dx + dy * dy).sqrt() < radius_mm
}

/// Direct actuator for the alert capability: interprets the on/off actions
/// into the simulator's alert flag. Setting an already-set flag is
/// idempotent at this level; the discrete model prevents such sequences.
#[derive(Clone, Debug)]
pub struct AlertActuator {
    pub on_action: String,
    pub off_action: String,
}

impl AlertActuator {
    pub fn new(on_action: &str, off_action: &str) -> Self {
        AlertActuator { on_action: on_action.into(), off_action: off_action.into() }
    }

    /// The flag value commanded by `action`, if this actuator handles it.
    pub fn interpret(&self, action: &str) -> Option<bool> {
        if action == self.on_action {
            Some(true)
        } else if action == self.off_action {
            Some(false)
        } else {
            None
        }
    }
}
