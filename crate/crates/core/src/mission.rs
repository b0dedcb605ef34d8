//! Mission front-end: grid workspaces, capability models, mission files and
//! obstacle snapshots, compiled into a control problem.
//!
//! Coordinate convention: cell `(i, j)` is row `i` from the top, column `j`
//! from the left; its centre lies at `origin + ((j+0.5)·cell, (i+0.5)·cell)`
//! in millimetres, x growing with columns and y with rows.

mod parse;

pub use parse::parse_mission;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::fltl::{classify_gr1, FltlError, Fluent, FluentTable, Formula};
use crate::lts::{ActionLabel, Lts, LtsBuilder, LtsError};
use crate::sim::PlantParams;
use crate::synthesis::ControlProblem;

/// Grid cell as (row, column).
pub type Cell = (usize, usize);

/// Space the robot needs to rotate in place; cells must be at least twice
/// this wide so a manoeuvring robot stays inside its cell.
pub const TURN_RADIUS_MM: f64 = 100.0;

/// Default fraction of occupied pixels above which a cell counts as an
/// obstacle.
pub const DEFAULT_OCCUPANCY_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum MissionError {
    #[error("line {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{}{msg}", .line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Semantic { line: Option<usize>, msg: String },
    #[error("start cell ({0}, {1}) outside the grid")]
    StartOutOfGrid(usize, usize),
    #[error("snapshot is {px_rows}x{px_cols} pixels, not divisible into a {rows}x{cols} grid")]
    DimensionMismatch { px_rows: usize, px_cols: usize, rows: usize, cols: usize },
    #[error(transparent)]
    Lts(#[from] LtsError),
    #[error(transparent)]
    Fltl(#[from] FltlError),
}

fn semantic(msg: impl Into<String>) -> MissionError {
    MissionError::Semantic { line: None, msg: msg.into() }
}

/// Uniform rectangular grid over the robot's working area, with the set of
/// cells the mission must avoid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWorkspace {
    rows: usize,
    cols: usize,
    cell_size_mm: f64,
    origin_mm: (f64, f64),
    forbidden: BTreeSet<Cell>,
}

impl GridWorkspace {
    pub fn new(rows: usize, cols: usize, cell_size_mm: f64) -> Result<Self, MissionError> {
        if rows == 0 || cols == 0 {
            return Err(semantic("grid must have at least one row and one column"));
        }
        if cell_size_mm < 2.0 * TURN_RADIUS_MM {
            return Err(semantic(format!(
                "cell size {cell_size_mm} mm is below the manoeuvring minimum of {} mm",
                2.0 * TURN_RADIUS_MM
            )));
        }
        Ok(GridWorkspace {
            rows,
            cols,
            cell_size_mm,
            origin_mm: (0.0, 0.0),
            forbidden: BTreeSet::new(),
        })
    }

    /// Places the workspace origin (top-left corner) in world millimetres.
    pub fn with_origin(mut self, x_mm: f64, y_mm: f64) -> Self {
        self.origin_mm = (x_mm, y_mm);
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size_mm(&self) -> f64 {
        self.cell_size_mm
    }

    pub fn origin_mm(&self) -> (f64, f64) {
        self.origin_mm
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.0 < self.rows && cell.1 < self.cols
    }

    pub fn forbidden(&self) -> &BTreeSet<Cell> {
        &self.forbidden
    }

    pub fn add_forbidden(&mut self, cell: Cell) -> Result<(), MissionError> {
        if !self.contains(cell) {
            return Err(semantic(format!(
                "avoid cell ({}, {}) outside the {}x{} grid",
                cell.0, cell.1, self.rows, self.cols
            )));
        }
        self.forbidden.insert(cell);
        Ok(())
    }

    /// Centre of a cell in workspace millimetres.
    pub fn cell_center(&self, cell: Cell) -> (f64, f64) {
        (
            self.origin_mm.0 + (cell.1 as f64 + 0.5) * self.cell_size_mm,
            self.origin_mm.1 + (cell.0 as f64 + 0.5) * self.cell_size_mm,
        )
    }

    /// Cell containing a point, if inside the workspace.
    pub fn cell_of_point(&self, x: f64, y: f64) -> Option<Cell> {
        let dx = x - self.origin_mm.0;
        let dy = y - self.origin_mm.1;
        if dx < 0.0 || dy < 0.0 {
            return None;
        }
        let j = (dx / self.cell_size_mm) as usize;
        let i = (dy / self.cell_size_mm) as usize;
        if i < self.rows && j < self.cols {
            Some((i, j))
        } else {
            None
        }
    }

    /// 4-neighbourhood in reading order; diagonal moves never exist.
    pub fn neighbors(&self, cell: Cell) -> Vec<Cell> {
        let (i, j) = cell;
        let mut out = Vec::with_capacity(4);
        if i > 0 {
            out.push((i - 1, j));
        }
        if j > 0 {
            out.push((i, j - 1));
        }
        if j + 1 < self.cols {
            out.push((i, j + 1));
        }
        if i + 1 < self.rows {
            out.push((i + 1, j));
        }
        out
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.rows).flat_map(move |i| (0..self.cols).map(move |j| (i, j)))
    }

    /// Motion model: one at-cell state per cell and one in-transit state per
    /// directed adjacent pair. From at-cell `(i,j)` a controllable
    /// `go[i'][j']` leads to the in-transit state, from which the sole
    /// uncontrollable `arrived[i'][j']` reaches the target cell; between the
    /// two no other `go` is enabled. Forbidden cells are not removed here;
    /// avoidance is specified at the planning level.
    pub fn motion_lts(&self, start: Cell) -> Result<Lts, MissionError> {
        if !self.contains(start) {
            return Err(MissionError::StartOutOfGrid(start.0, start.1));
        }
        let mut b = LtsBuilder::new();
        b.add_states(self.rows * self.cols);
        let at = |c: Cell| c.0 * self.cols + c.1;
        for from in self.cells() {
            for to in self.neighbors(from) {
                let transit = b.add_state();
                let go = b.add_label(ActionLabel::controllable(&go_action(to))?)?;
                let arrived = b.add_label(ActionLabel::uncontrollable(&arrived_action(to))?)?;
                b.add_transition(at(from), go, transit)?;
                b.add_transition(transit, arrived, at(to))?;
            }
        }
        b.set_initial(at(start));
        Ok(b.build()?)
    }
}

pub fn go_action(cell: Cell) -> String {
    format!("go[{}][{}]", cell.0, cell.1)
}

pub fn arrived_action(cell: Cell) -> String {
    format!("arrived[{}][{}]", cell.0, cell.1)
}

/// Parses `go[i][j]` / `arrived[i][j]` back into the target cell.
pub fn cell_of_action(name: &str) -> Option<(&str, Cell)> {
    let (kind, rest) = if let Some(rest) = name.strip_prefix("go[") {
        ("go", rest)
    } else {
        ("arrived", name.strip_prefix("arrived[")?)
    };
    let (i, rest) = rest.split_once("][")?;
    let j = rest.strip_suffix(']')?;
    Some((kind, (i.parse().ok()?, j.parse().ok()?)))
}

/// Two-state alternating capability: `on_action` then `off_action`, both
/// controllable.
pub fn toggle_lts(on_action: &str, off_action: &str) -> Result<Lts, MissionError> {
    if on_action == off_action {
        return Err(semantic(format!("toggle actions must be distinct, got `{on_action}` twice")));
    }
    let mut b = LtsBuilder::new();
    let s0 = b.add_state();
    let s1 = b.add_state();
    let on = b.add_label(ActionLabel::controllable(on_action)?)?;
    let off = b.add_label(ActionLabel::controllable(off_action)?)?;
    b.add_transition(s0, on, s1)?;
    b.add_transition(s1, off, s0)?;
    b.set_initial(s0);
    Ok(b.build()?)
}

/// A reaction pattern: while inside `zone` the `on_action` must be engaged
/// promptly on entry and `off_action` on leaving it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reaction {
    pub zone: BTreeSet<Cell>,
    pub on_action: String,
    pub off_action: String,
}

/// Partial plant parameter settings from a mission file or CLI overrides.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlantOverrides {
    pub gain: Option<f64>,
    pub damping: Option<f64>,
    pub kp: Option<f64>,
    pub forward_speed: Option<f64>,
    pub drift: Option<f64>,
    pub dt: Option<f64>,
    pub v_max: Option<f64>,
}

impl PlantOverrides {
    pub fn apply(&self, params: &mut PlantParams) {
        if let Some(v) = self.gain {
            params.gain = v;
        }
        if let Some(v) = self.damping {
            params.damping = v;
        }
        if let Some(v) = self.kp {
            params.kp = v;
        }
        if let Some(v) = self.forward_speed {
            params.forward_speed = v;
        }
        if let Some(v) = self.drift {
            params.drift = v;
        }
        if let Some(v) = self.dt {
            params.dt = v;
        }
        if let Some(v) = self.v_max {
            params.v_max = v;
        }
    }

    pub fn merge(&mut self, other: &PlantOverrides) {
        macro_rules! take {
            ($f:ident) => {
                if other.$f.is_some() {
                    self.$f = other.$f;
                }
            };
        }
        take!(gain);
        take!(damping);
        take!(kp);
        take!(forward_speed);
        take!(drift);
        take!(dt);
        take!(v_max);
    }
}

/// A parsed and validated mission description.
#[derive(Clone, Debug, PartialEq)]
pub struct MissionSpec {
    pub grid: GridWorkspace,
    pub start: Cell,
    /// Patrol targets in visiting (goal round-robin) order.
    pub patrol: Vec<Cell>,
    pub reactions: Vec<Reaction>,
    pub fluents: Vec<Fluent>,
    /// Extra formulas, routed to goals or safety by shape at compile time.
    pub formulas: Vec<Formula>,
    /// Extra environment assumptions (`G F` bodies).
    pub assumptions: Vec<Formula>,
    pub plant: PlantOverrides,
    pub occupancy_threshold: f64,
}

impl MissionSpec {
    pub fn new(grid: GridWorkspace, start: Cell) -> Result<Self, MissionError> {
        let m = MissionSpec {
            grid,
            start,
            patrol: Vec::new(),
            reactions: Vec::new(),
            fluents: Vec::new(),
            formulas: Vec::new(),
            assumptions: Vec::new(),
            plant: PlantOverrides::default(),
            occupancy_threshold: DEFAULT_OCCUPANCY_THRESHOLD,
        };
        m.validate()?;
        Ok(m)
    }

    /// Cells the mission must avoid.
    pub fn avoid(&self) -> &BTreeSet<Cell> {
        self.grid.forbidden()
    }

    /// Adds avoid cells (e.g. from an obstacle snapshot) and revalidates.
    pub fn add_avoid_cells<I: IntoIterator<Item = Cell>>(
        &mut self,
        cells: I,
    ) -> Result<(), MissionError> {
        for c in cells {
            self.grid.add_forbidden(c)?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), MissionError> {
        if !self.grid.contains(self.start) {
            return Err(MissionError::StartOutOfGrid(self.start.0, self.start.1));
        }
        if self.grid.forbidden().contains(&self.start) {
            return Err(semantic(format!(
                "start cell ({}, {}) is in the avoid set",
                self.start.0, self.start.1
            )));
        }
        for &c in &self.patrol {
            if !self.grid.contains(c) {
                return Err(semantic(format!(
                    "patrol cell ({}, {}) outside the grid",
                    c.0, c.1
                )));
            }
            if self.grid.forbidden().contains(&c) {
                return Err(semantic(format!(
                    "patrol cell ({}, {}) is also an avoid cell",
                    c.0, c.1
                )));
            }
        }
        for (k, r) in self.reactions.iter().enumerate() {
            if r.zone.is_empty() {
                return Err(semantic(format!("reaction {} has an empty zone", k + 1)));
            }
            for &c in &r.zone {
                if !self.grid.contains(c) {
                    return Err(semantic(format!(
                        "reaction zone cell ({}, {}) outside the grid",
                        c.0, c.1
                    )));
                }
            }
            if r.on_action == r.off_action {
                return Err(semantic(format!(
                    "reaction {} uses `{}` for both on and off",
                    k + 1,
                    r.on_action
                )));
            }
        }
        if !(self.occupancy_threshold > 0.0 && self.occupancy_threshold < 1.0) {
            return Err(semantic("occupancy threshold must lie strictly between 0 and 1"));
        }
        Ok(())
    }

    /// Fluent table for this mission: declared fluents plus the generated
    /// per-reaction zone and actuator-state fluents.
    pub fn fluent_table(&self) -> Result<FluentTable, MissionError> {
        let mut table = FluentTable::new();
        for f in &self.fluents {
            table.add(f.clone())?;
        }
        for (k, r) in self.reactions.iter().enumerate() {
            let k = k + 1;
            let inside: Vec<String> = r.zone.iter().map(|&c| arrived_action(c)).collect();
            let outside_cells: Vec<Cell> =
                self.grid.cells().filter(|c| !r.zone.contains(c)).collect();
            let leave: Vec<String> = outside_cells.iter().map(|&c| go_action(c)).collect();
            let arrive_out: Vec<String> =
                outside_cells.iter().map(|&c| arrived_action(c)).collect();
            let enter: Vec<String> = r.zone.iter().map(|&c| go_action(c)).collect();
            let start_inside = r.zone.contains(&self.start);
            table.add(Fluent::new(&format!("InZone{k}"), inside, leave, start_inside)?)?;
            table.add(Fluent::new(
                &format!("OutZone{k}"),
                arrive_out,
                enter,
                !start_inside,
            )?)?;
            table.add(Fluent::new(
                &format!("Active{k}"),
                [r.on_action.clone()],
                [r.off_action.clone()],
                false,
            )?)?;
        }
        Ok(table)
    }

    /// Compiles the mission into a control problem: the environment is the
    /// motion model composed with one toggle per reaction; goals are
    /// `G F arrived[target]` per patrol target, safety is `G !arrived[cell]`
    /// per avoid cell plus a prompt-reaction rule pair per reaction.
    pub fn compile(&self) -> Result<CompiledMission, MissionError> {
        self.validate()?;
        let mut environment = self.grid.motion_lts(self.start)?;
        for r in &self.reactions {
            environment = environment.parallel_compose(&toggle_lts(&r.on_action, &r.off_action)?)?;
        }
        let table = self.fluent_table()?;

        let mut goal_formulas: Vec<Formula> = self
            .patrol
            .iter()
            .map(|&c| Formula::atom(&arrived_action(c)).eventually().always())
            .collect();
        let mut safety_formulas: Vec<Formula> = self
            .grid
            .forbidden()
            .iter()
            .map(|&c| Formula::atom(&arrived_action(c)).not().always())
            .collect();
        for (k, r) in self.reactions.iter().enumerate() {
            let k = k + 1;
            let on_rule = Formula::atom(&format!("InZone{k}"))
                .and(Formula::atom(&format!("Active{k}")).not())
                .implies(Formula::atom(&r.on_action).next());
            let off_rule = Formula::atom(&format!("OutZone{k}"))
                .and(Formula::atom(&format!("Active{k}")))
                .implies(Formula::atom(&r.off_action).next());
            safety_formulas.push(on_rule.and(off_rule).always());
        }
        // Route extra formulas by conjunct shape: recurrence conjuncts become
        // goals, everything else must classify as safety.
        for f in &self.formulas {
            let mut conjuncts = Vec::new();
            split_top_conjuncts(f, &mut conjuncts);
            for c in conjuncts {
                if matches!(c, Formula::Always(inner) if matches!(inner.as_ref(), Formula::Eventually(_)))
                {
                    goal_formulas.push(c.clone());
                } else {
                    safety_formulas.push(c.clone());
                }
            }
        }
        let assumptions: Vec<Formula> = self
            .assumptions
            .iter()
            .map(|f| f.clone().eventually().always())
            .collect();

        let spec = classify_gr1(&safety_formulas, &assumptions, &goal_formulas, &table)?;

        // Closure: every referenced atom must be a declared fluent or an
        // action of the composed environment; same for fluent trigger sets.
        let known = |name: &str| {
            table.index_of(name).is_some() || environment.alphabet().id_of(name).is_some()
        };
        for atom in spec.referenced_atoms() {
            if !known(&atom) {
                return Err(semantic(format!(
                    "`{atom}` is neither a declared fluent nor an action of the environment"
                )));
            }
        }
        for action in spec.prompt_actions() {
            if environment.alphabet().id_of(&action).is_none() {
                return Err(semantic(format!(
                    "prompt-reaction action `{action}` is not an action of the environment"
                )));
            }
        }
        for f in &self.fluents {
            for set in [f.set_true(), f.set_false()].into_iter().flatten() {
                for a in set {
                    if environment.alphabet().id_of(a).is_none() {
                        return Err(semantic(format!(
                            "fluent `{}` refers to unknown action `{a}`",
                            f.name()
                        )));
                    }
                }
            }
        }

        let problem = ControlProblem::new(environment, spec, table)
            .map_err(|e| semantic(e.to_string()))?;
        Ok(CompiledMission { problem })
    }
}

fn split_top_conjuncts<'f>(f: &'f Formula, out: &mut Vec<&'f Formula>) {
    match f {
        Formula::And(a, b) => {
            split_top_conjuncts(a, out);
            split_top_conjuncts(b, out);
        }
        other => out.push(other),
    }
}

/// Result of compiling a mission.
#[derive(Debug)]
pub struct CompiledMission {
    pub problem: ControlProblem,
}

// ---------------------------------------------------------------------------
// Obstacle snapshots
// ---------------------------------------------------------------------------

/// A binary occupancy image with a `P rows cols` header, standing in for the
/// camera-based obstacle detection.
#[derive(Clone, Debug)]
pub struct OccupancySnapshot {
    pub pixel_rows: usize,
    pub pixel_cols: usize,
    pixels: Vec<bool>,
}

impl OccupancySnapshot {
    pub fn parse(text: &str) -> Result<Self, MissionError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (line_no, header) = lines
            .next()
            .ok_or_else(|| MissionError::Syntax {
                line: 1,
                col: 1,
                msg: "empty snapshot: expected `P rows cols` header".into(),
            })?;
        let mut parts = header.split_whitespace();
        let syntax = |msg: &str| MissionError::Syntax {
            line: line_no,
            col: 1,
            msg: msg.to_string(),
        };
        if parts.next() != Some("P") {
            return Err(syntax("snapshot header must start with `P`"));
        }
        let pixel_rows: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| syntax("bad pixel row count"))?;
        let pixel_cols: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| syntax("bad pixel column count"))?;
        let mut pixels = Vec::with_capacity(pixel_rows * pixel_cols);
        for (line_no, line) in lines {
            for (col, ch) in line.chars().enumerate() {
                match ch {
                    '0' => pixels.push(false),
                    '1' => pixels.push(true),
                    c if c.is_whitespace() => {}
                    other => {
                        return Err(MissionError::Syntax {
                            line: line_no,
                            col: col + 1,
                            msg: format!("unexpected character `{other}` in pixel data"),
                        })
                    }
                }
            }
        }
        if pixels.len() != pixel_rows * pixel_cols {
            return Err(semantic(format!(
                "snapshot header promises {} pixels, found {}",
                pixel_rows * pixel_cols,
                pixels.len()
            )));
        }
        Ok(OccupancySnapshot { pixel_rows, pixel_cols, pixels })
    }

    fn pixel(&self, r: usize, c: usize) -> bool {
        self.pixels[r * self.pixel_cols + c]
    }
}

/// Cells whose occupied-pixel fraction exceeds `threshold`. The snapshot's
/// pixel dimensions must split evenly over the grid.
pub fn ingest_obstacles(
    snapshot: &OccupancySnapshot,
    grid: &GridWorkspace,
    threshold: f64,
) -> Result<BTreeSet<Cell>, MissionError> {
    if snapshot.pixel_rows == 0
        || snapshot.pixel_cols == 0
        || !snapshot.pixel_rows.is_multiple_of(grid.rows())
        || !snapshot.pixel_cols.is_multiple_of(grid.cols())
    {
        return Err(MissionError::DimensionMismatch {
            px_rows: snapshot.pixel_rows,
            px_cols: snapshot.pixel_cols,
            rows: grid.rows(),
            cols: grid.cols(),
        });
    }
    let ph = snapshot.pixel_rows / grid.rows();
    let pw = snapshot.pixel_cols / grid.cols();
    let mut tagged = BTreeSet::new();
    for cell in grid.cells() {
        let mut occupied = 0usize;
        for r in cell.0 * ph..(cell.0 + 1) * ph {
            for c in cell.1 * pw..(cell.1 + 1) * pw {
                occupied += snapshot.pixel(r, c) as usize;
            }
        }
        if occupied as f64 > threshold * (ph * pw) as f64 {
            tagged.insert(cell);
        }
    }
    Ok(tagged)
}
