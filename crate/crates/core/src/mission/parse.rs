//! Line-oriented mission file grammar and the FLTL formula text syntax.
//!
//! ```text
//! grid R C CELLSIZE_MM
//! start I J
//! patrol I J
//! avoid I J
//! react zone=(I J; I J; ...) on=ACTION off=ACTION
//! fluent NAME true={A,B} false={C} init=0|1
//! formula G F arrived[0][0]
//! assume InZone1
//! plant K=5 D=2 Kp=3.12 vfwd=150 drift=0 dt=0.005 vmax=6
//! occupancy_threshold 0.05
//! ```
//!
//! `#` starts a comment. Formula syntax: atoms are fluent or action names;
//! `!`, `&&`, `||`, `->` are boolean connectives; `X`, `F`, `G` the unary and
//! `W` the weak-until temporal operators; `->` and `W` associate right.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::fltl::{Fluent, Formula};
use crate::mission::{
    Cell, GridWorkspace, MissionError, MissionSpec, PlantOverrides, Reaction,
    DEFAULT_OCCUPANCY_THRESHOLD,
};

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> MissionError {
    MissionError::Syntax { line, col, msg: msg.into() }
}

fn semantic_at(line: usize, msg: impl Into<String>) -> MissionError {
    MissionError::Semantic { line: Some(line), msg: msg.into() }
}

/// Parses a mission file, returning a validated [`MissionSpec`] or a
/// diagnostic with line/column information.
pub fn parse_mission(text: &str) -> Result<MissionSpec, MissionError> {
    let mut grid: Option<(GridWorkspace, usize)> = None;
    let mut start: Option<Cell> = None;
    let mut patrol: Vec<Cell> = Vec::new();
    let mut avoid: Vec<(Cell, usize)> = Vec::new();
    let mut reactions: Vec<Reaction> = Vec::new();
    let mut fluents: Vec<Fluent> = Vec::new();
    let mut formulas: Vec<Formula> = Vec::new();
    let mut assumptions: Vec<Formula> = Vec::new();
    let mut plant = PlantOverrides::default();
    let mut occupancy_threshold = DEFAULT_OCCUPANCY_THRESHOLD;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (keyword, rest) = match line.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => (line, ""),
        };
        match keyword {
            "grid" => {
                if grid.is_some() {
                    return Err(syntax(line_no, 1, "duplicate grid declaration"));
                }
                let nums = parse_numbers::<3>(rest, line_no)?;
                let g = GridWorkspace::new(nums[0] as usize, nums[1] as usize, nums[2])
                    .map_err(|e| semantic_at(line_no, e.to_string()))?;
                grid = Some((g, line_no));
            }
            "start" => {
                let c = parse_cell(rest, line_no)?;
                start = Some(c);
            }
            "patrol" => patrol.push(parse_cell(rest, line_no)?),
            "avoid" => avoid.push((parse_cell(rest, line_no)?, line_no)),
            "react" => reactions.push(parse_react(rest, line_no)?),
            "fluent" => fluents.push(parse_fluent(rest, line_no)?),
            "formula" => formulas.push(parse_formula_text(rest, line_no)?),
            "assume" => assumptions.push(parse_formula_text(rest, line_no)?),
            "plant" => parse_plant(rest, line_no, &mut plant)?,
            "occupancy_threshold" => {
                occupancy_threshold = rest
                    .parse()
                    .map_err(|_| syntax(line_no, 1, "expected a number"))?;
            }
            other => {
                return Err(syntax(line_no, 1, format!("unknown directive `{other}`")));
            }
        }
    }

    let (mut grid, grid_line) = grid.ok_or_else(|| syntax(1, 1, "missing grid declaration"))?;
    for (cell, line_no) in avoid {
        grid.add_forbidden(cell)
            .map_err(|e| semantic_at(line_no, e.to_string()))?;
    }
    let start = start.unwrap_or((0, 0));
    if !grid.contains(start) {
        return Err(semantic_at(grid_line, format!(
            "start cell ({}, {}) outside the grid",
            start.0, start.1
        )));
    }
    let mut spec = MissionSpec::new(grid, start)?;
    spec.patrol = patrol;
    spec.reactions = reactions;
    spec.fluents = fluents;
    spec.formulas = formulas;
    spec.assumptions = assumptions;
    spec.plant = plant;
    spec.occupancy_threshold = occupancy_threshold;
    spec.validate()?;
    Ok(spec)
}

fn parse_numbers<const N: usize>(rest: &str, line: usize) -> Result<[f64; N], MissionError> {
    let parts: Vec<&str> = rest.split_whitespace().collect();
    if parts.len() != N {
        return Err(syntax(line, 1, format!("expected {N} numbers, found {}", parts.len())));
    }
    let mut out = [0.0; N];
    for (i, p) in parts.iter().enumerate() {
        out[i] = p
            .parse()
            .map_err(|_| syntax(line, 1, format!("`{p}` is not a number")))?;
    }
    Ok(out)
}

fn parse_cell(rest: &str, line: usize) -> Result<Cell, MissionError> {
    let parts: Vec<&str> = rest.split_whitespace().collect();
    if parts.len() != 2 {
        return Err(syntax(line, 1, "expected `I J` cell coordinates"));
    }
    let i = parts[0]
        .parse()
        .map_err(|_| syntax(line, 1, format!("bad row index `{}`", parts[0])))?;
    let j = parts[1]
        .parse()
        .map_err(|_| syntax(line, 1, format!("bad column index `{}`", parts[1])))?;
    Ok((i, j))
}

fn parse_react(rest: &str, line: usize) -> Result<Reaction, MissionError> {
    let zone_start = rest
        .find("zone=(")
        .ok_or_else(|| syntax(line, 1, "react needs `zone=(I J; ...)`"))?;
    let after = &rest[zone_start + 6..];
    let zone_end = after
        .find(')')
        .ok_or_else(|| syntax(line, 1, "unterminated zone list"))?;
    let mut zone = BTreeSet::new();
    for pair in after[..zone_end].split(';') {
        let pair = pair.trim();
        if pair.is_empty() {
            continue;
        }
        zone.insert(parse_cell(pair, line)?);
    }
    let mut on = None;
    let mut off = None;
    let remainder = format!("{} {}", &rest[..zone_start], &after[zone_end + 1..]);
    for tok in remainder.split_whitespace() {
        match tok.split_once('=') {
            Some(("on", v)) => on = Some(v.to_string()),
            Some(("off", v)) => off = Some(v.to_string()),
            _ => return Err(syntax(line, 1, format!("unexpected `{tok}` in react line"))),
        }
    }
    Ok(Reaction {
        zone,
        on_action: on.ok_or_else(|| syntax(line, 1, "react needs `on=<action>`"))?,
        off_action: off.ok_or_else(|| syntax(line, 1, "react needs `off=<action>`"))?,
    })
}

fn parse_action_set(text: &str, line: usize) -> Result<Vec<String>, MissionError> {
    let inner = text
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(|| syntax(line, 1, "expected `{a,b,...}`"))?;
    Ok(inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect())
}

fn parse_fluent(rest: &str, line: usize) -> Result<Fluent, MissionError> {
    let mut parts = rest.split_whitespace();
    let name = parts
        .next()
        .ok_or_else(|| syntax(line, 1, "fluent needs a name"))?;
    let mut set_true = None;
    let mut set_false = None;
    let mut init = None;
    for tok in parts {
        match tok.split_once('=') {
            Some(("true", v)) => set_true = Some(parse_action_set(v, line)?),
            Some(("false", v)) => set_false = Some(parse_action_set(v, line)?),
            Some(("init", v)) => {
                init = Some(match v {
                    "0" => false,
                    "1" => true,
                    _ => return Err(syntax(line, 1, "init must be 0 or 1")),
                })
            }
            _ => return Err(syntax(line, 1, format!("unexpected `{tok}` in fluent line"))),
        }
    }
    Fluent::new(
        name,
        set_true.ok_or_else(|| syntax(line, 1, "fluent needs `true={...}`"))?,
        set_false.ok_or_else(|| syntax(line, 1, "fluent needs `false={...}`"))?,
        init.unwrap_or(false),
    )
    .map_err(|e| semantic_at(line, e.to_string()))
}

fn parse_plant(rest: &str, line: usize, plant: &mut PlantOverrides) -> Result<(), MissionError> {
    for tok in rest.split_whitespace() {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| syntax(line, 1, format!("expected key=value, found `{tok}`")))?;
        let value: f64 = value
            .parse()
            .map_err(|_| syntax(line, 1, format!("`{value}` is not a number")))?;
        match key {
            "K" => plant.gain = Some(value),
            "D" => plant.damping = Some(value),
            "Kp" => plant.kp = Some(value),
            "vfwd" => plant.forward_speed = Some(value),
            "drift" => plant.drift = Some(value),
            "dt" => plant.dt = Some(value),
            "vmax" => plant.v_max = Some(value),
            other => return Err(syntax(line, 1, format!("unknown plant key `{other}`"))),
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// FLTL text syntax
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Not,
    And,
    Or,
    Implies,
    Word(String),
}

fn tokenize(text: &str, line: usize) -> Result<Vec<(usize, Tok)>, MissionError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0usize;
    while i < bytes.len() {
        let col = i + 1;
        match bytes[i] {
            b' ' | b'\t' => i += 1,
            b'(' => {
                toks.push((col, Tok::LParen));
                i += 1;
            }
            b')' => {
                toks.push((col, Tok::RParen));
                i += 1;
            }
            b'!' => {
                toks.push((col, Tok::Not));
                i += 1;
            }
            b'&' => {
                if bytes.get(i + 1) == Some(&b'&') {
                    toks.push((col, Tok::And));
                    i += 2;
                } else {
                    return Err(syntax(line, col, "expected `&&`"));
                }
            }
            b'|' => {
                if bytes.get(i + 1) == Some(&b'|') {
                    toks.push((col, Tok::Or));
                    i += 2;
                } else {
                    return Err(syntax(line, col, "expected `||`"));
                }
            }
            b'-' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    toks.push((col, Tok::Implies));
                    i += 2;
                } else {
                    return Err(syntax(line, col, "expected `->`"));
                }
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.')
                {
                    i += 1;
                }
                while i < bytes.len() && bytes[i] == b'[' {
                    let close = bytes[i..]
                        .iter()
                        .position(|&b| b == b']')
                        .ok_or_else(|| syntax(line, i + 1, "unterminated `[` in name"))?;
                    i += close + 1;
                }
                toks.push((col, Tok::Word(text[start..i].to_string())));
            }
            other => {
                return Err(syntax(line, col, format!("unexpected character `{}`", other as char)))
            }
        }
    }
    Ok(toks)
}

struct FormulaParser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    line: usize,
}

impl FormulaParser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|(c, _)| *c).unwrap_or(1)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn err(&self, msg: impl Into<String>) -> MissionError {
        syntax(self.line, self.col(), msg)
    }

    // implies := or ('->' implies)?         right associative
    fn parse_implies(&mut self) -> Result<Formula, MissionError> {
        let lhs = self.parse_or()?;
        if self.peek() == Some(&Tok::Implies) {
            self.bump();
            let rhs = self.parse_implies()?;
            return Ok(lhs.implies(rhs));
        }
        Ok(lhs)
    }

    fn parse_or(&mut self) -> Result<Formula, MissionError> {
        let mut lhs = self.parse_and()?;
        while self.peek() == Some(&Tok::Or) {
            self.bump();
            lhs = lhs.or(self.parse_and()?);
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<Formula, MissionError> {
        let mut lhs = self.parse_weak_until()?;
        while self.peek() == Some(&Tok::And) {
            self.bump();
            lhs = lhs.and(self.parse_weak_until()?);
        }
        Ok(lhs)
    }

    // weak := unary ('W' weak)?             right associative
    fn parse_weak_until(&mut self) -> Result<Formula, MissionError> {
        let lhs = self.parse_unary()?;
        if matches!(self.peek(), Some(Tok::Word(w)) if w == "W") {
            self.bump();
            let rhs = self.parse_weak_until()?;
            return Ok(lhs.weak_until(rhs));
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<Formula, MissionError> {
        match self.bump() {
            Some(Tok::Not) => Ok(self.parse_unary()?.not()),
            Some(Tok::LParen) => {
                let f = self.parse_implies()?;
                match self.bump() {
                    Some(Tok::RParen) => Ok(f),
                    _ => Err(self.err("expected `)`")),
                }
            }
            Some(Tok::Word(w)) => match w.as_str() {
                "X" => Ok(self.parse_unary()?.next()),
                "F" => Ok(self.parse_unary()?.eventually()),
                "G" => Ok(self.parse_unary()?.always()),
                "true" => Ok(Formula::True),
                "false" => Ok(Formula::False),
                "W" => Err(self.err("`W` is an infix operator")),
                _ => Ok(Formula::Atom(w)),
            },
            other => Err(self.err(format!("expected a formula, found {other:?}"))),
        }
    }
}

/// Parses the FLTL text syntax used in `formula`/`assume` lines and by the
/// trace checker.
pub fn parse_formula_text(text: &str, line: usize) -> Result<Formula, MissionError> {
    let toks = tokenize(text, line)?;
    if toks.is_empty() {
        return Err(syntax(line, 1, "empty formula"));
    }
    let mut p = FormulaParser { toks, pos: 0, line };
    let f = p.parse_implies()?;
    if p.pos != p.toks.len() {
        return Err(p.err("trailing tokens after formula"));
    }
    Ok(f)
}

impl MissionSpec {
    /// Canonical mission file text; `parse_mission` on the output yields an
    /// equal spec.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "grid {} {} {}",
            self.grid.rows(),
            self.grid.cols(),
            self.grid.cell_size_mm()
        )
        .unwrap();
        writeln!(s, "start {} {}", self.start.0, self.start.1).unwrap();
        for &(i, j) in &self.patrol {
            writeln!(s, "patrol {i} {j}").unwrap();
        }
        for &(i, j) in self.grid.forbidden() {
            writeln!(s, "avoid {i} {j}").unwrap();
        }
        for r in &self.reactions {
            let zone = r
                .zone
                .iter()
                .map(|&(i, j)| format!("{i} {j}"))
                .collect::<Vec<_>>()
                .join("; ");
            writeln!(s, "react zone=({zone}) on={} off={}", r.on_action, r.off_action).unwrap();
        }
        for f in &self.fluents {
            let join = |set: Option<&BTreeSet<String>>| {
                set.map(|s| s.iter().cloned().collect::<Vec<_>>().join(","))
                    .unwrap_or_default()
            };
            writeln!(
                s,
                "fluent {} true={{{}}} false={{{}}} init={}",
                f.name(),
                join(f.set_true()),
                join(f.set_false()),
                f.initial() as u8
            )
            .unwrap();
        }
        for f in &self.formulas {
            writeln!(s, "formula {f}").unwrap();
        }
        for f in &self.assumptions {
            writeln!(s, "assume {f}").unwrap();
        }
        let mut plant_parts = Vec::new();
        let mut push = |key: &str, v: Option<f64>| {
            if let Some(v) = v {
                plant_parts.push(format!("{key}={v}"));
            }
        };
        push("K", self.plant.gain);
        push("D", self.plant.damping);
        push("Kp", self.plant.kp);
        push("vfwd", self.plant.forward_speed);
        push("drift", self.plant.drift);
        push("dt", self.plant.dt);
        push("vmax", self.plant.v_max);
        if !plant_parts.is_empty() {
            writeln!(s, "plant {}", plant_parts.join(" ")).unwrap();
        }
        if self.occupancy_threshold != DEFAULT_OCCUPANCY_THRESHOLD {
            writeln!(s, "occupancy_threshold {}", self.occupancy_threshold).unwrap();
        }
        s
    }
}
