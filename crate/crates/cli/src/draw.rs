//! Vector drawing of a run: the grid with forbidden cells shaded, reaction
//! zones hatched, patrol targets marked, and the trajectory on top.

use std::fmt::Write as _;

use warden_core::enactor::TickRecord;
use warden_core::mission::MissionSpec;

const TARGET_COLOR: &str = "#2e8b57";
const FORBIDDEN_COLOR: &str = "#d9534f";
const PATH_COLOR: &str = "#1f5fbf";
const ZONE_COLOR: &str = "#b8860b";
const GRID_COLOR: &str = "#999999";
const BG_COLOR: &str = "#fbfbf8";

/// Renders the workspace and trajectory as a standalone SVG document.
pub fn trajectory_svg(mission: &MissionSpec, ticks: &[TickRecord]) -> String {
    let grid = &mission.grid;
    let cell = grid.cell_size_mm();
    let (ox, oy) = grid.origin_mm();
    let width_mm = grid.cols() as f64 * cell;
    let height_mm = grid.rows() as f64 * cell;
    let scale = 800.0 / width_mm;
    let w = width_mm * scale;
    let h = height_mm * scale;
    let px = |x: f64| (x - ox) * scale;
    let py = |y: f64| (y - oy) * scale;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{w:.0}" height="{h:.0}" fill="{BG_COLOR}"/>"#).unwrap();

    // Shaded forbidden cells.
    for &(i, j) in grid.forbidden() {
        writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{FORBIDDEN_COLOR}" fill-opacity="0.55"/>"#,
            j as f64 * cell * scale,
            i as f64 * cell * scale,
            cell * scale,
            cell * scale
        )
        .unwrap();
    }
    // Hatched reaction zones.
    for r in &mission.reactions {
        for &(i, j) in &r.zone {
            let x0 = j as f64 * cell * scale;
            let y0 = i as f64 * cell * scale;
            let side = cell * scale;
            writeln!(
                s,
                r#"<rect x="{x0:.1}" y="{y0:.1}" width="{side:.1}" height="{side:.1}" fill="none" stroke="{ZONE_COLOR}" stroke-width="1"/>"#
            )
            .unwrap();
            let mut k = 0.25;
            while k < 2.0 {
                let (x1, y1, x2, y2) = if k <= 1.0 {
                    (x0, y0 + k * side, x0 + k * side, y0)
                } else {
                    (x0 + (k - 1.0) * side, y0 + side, x0 + side, y0 + (k - 1.0) * side)
                };
                writeln!(
                    s,
                    r#"<line x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke="{ZONE_COLOR}" stroke-width="0.8" opacity="0.6"/>"#
                )
                .unwrap();
                k += 0.25;
            }
        }
    }
    // Grid lines.
    for i in 0..=grid.rows() {
        let y = i as f64 * cell * scale;
        writeln!(
            s,
            r#"<line x1="0" y1="{y:.1}" x2="{w:.1}" y2="{y:.1}" stroke="{GRID_COLOR}" stroke-width="0.6"/>"#
        )
        .unwrap();
    }
    for j in 0..=grid.cols() {
        let x = j as f64 * cell * scale;
        writeln!(
            s,
            r#"<line x1="{x:.1}" y1="0" x2="{x:.1}" y2="{h:.1}" stroke="{GRID_COLOR}" stroke-width="0.6"/>"#
        )
        .unwrap();
    }
    // Patrol targets.
    for &c in &mission.patrol {
        let (cx, cy) = grid.cell_center(c);
        writeln!(
            s,
            r#"<circle cx="{:.1}" cy="{:.1}" r="{:.1}" fill="{TARGET_COLOR}" fill-opacity="0.5" stroke="{TARGET_COLOR}"/>"#,
            px(cx),
            py(cy),
            100.0 * scale
        )
        .unwrap();
    }
    // Start marker.
    let (sx, sy) = grid.cell_center(mission.start);
    writeln!(
        s,
        r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="{PATH_COLOR}" stroke-width="1.5"/>"#,
        px(sx) - 6.0,
        py(sy) - 6.0,
        12.0,
        12.0
    )
    .unwrap();
    // Trajectory, thinned to keep the file small.
    if !ticks.is_empty() {
        let stride = (ticks.len() / 4000).max(1);
        write!(s, r#"<polyline fill="none" stroke="{PATH_COLOR}" stroke-width="1.2" points=""#)
            .unwrap();
        for t in ticks.iter().step_by(stride) {
            write!(s, "{:.1},{:.1} ", px(t.x), py(t.y)).unwrap();
        }
        let last = ticks.last().unwrap();
        write!(s, "{:.1},{:.1}", px(last.x), py(last.y)).unwrap();
        writeln!(s, r#""/>"#).unwrap();
    }
    writeln!(s, "</svg>").unwrap();
    s
}
