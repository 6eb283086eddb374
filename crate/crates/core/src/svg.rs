//! Trajectory plots as standalone SVG files.
//!
//! One polyline per vehicle over the whole log, the commanded base circle
//! dashed, and each vehicle's final effective circle dotted. World y
//! points up, SVG y points down, so y is negated on the way out.

use crate::telemetry::TelemetryLog;
use nalgebra::Vector2;
use std::fmt::Write as _;

const PALETTE: [&str; 6] = ["#c0392b", "#2980b9", "#27ae60", "#8e44ad", "#d35400", "#16a085"];

fn fmt_num(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders the fleet's trajectories around the base circle at
/// `(center, base_radius)`.
pub fn render_trajectories(
    log: &TelemetryLog,
    center: Vector2<f64>,
    base_radius: f64,
) -> String {
    let (lo, hi) = log
        .position_extent()
        .unwrap_or((center.add_scalar(-base_radius), center.add_scalar(base_radius)));
    let lo = Vector2::new(
        lo.x.min(center.x - base_radius),
        lo.y.min(center.y - base_radius),
    );
    let hi = Vector2::new(
        hi.x.max(center.x + base_radius),
        hi.y.max(center.y + base_radius),
    );
    let margin = 0.05 * (hi - lo).amax().max(1.0);
    let min = lo.add_scalar(-margin);
    let size = hi - lo + Vector2::repeat(2.0 * margin);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}" width="800" height="{:.0}">"#,
        fmt_num(min.x),
        fmt_num(-(min.y + size.y)),
        fmt_num(size.x),
        fmt_num(size.y),
        (800.0 * size.y / size.x).round()
    );
    let _ = writeln!(
        out,
        r##"  <rect x="{}" y="{}" width="{}" height="{}" fill="#fdfdfd"/>"##,
        fmt_num(min.x),
        fmt_num(-(min.y + size.y)),
        fmt_num(size.x),
        fmt_num(size.y)
    );

    let _ = writeln!(
        out,
        r##"  <circle cx="{}" cy="{}" r="{}" fill="none" stroke="#555" stroke-width="0.6" stroke-dasharray="4 3"/>"##,
        fmt_num(center.x),
        fmt_num(-center.y),
        fmt_num(base_radius)
    );

    if let Some(last) = log.frames.last() {
        for (i, v) in last.vehicles.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let _ = writeln!(
                out,
                r#"  <circle cx="{}" cy="{}" r="{}" fill="none" stroke="{color}" stroke-width="0.35" stroke-dasharray="1 2" opacity="0.7"/>"#,
                fmt_num(center.x),
                fmt_num(-center.y),
                fmt_num(v.effective_radius)
            );
        }
    }

    for (i, id) in log.vehicle_ids.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        for frame in &log.frames {
            let p = frame.vehicles[i].position;
            let _ = write!(points, "{},{} ", fmt_num(p.x), fmt_num(-p.y));
        }
        let _ = writeln!(
            out,
            r#"  <polyline points="{}" fill="none" stroke="{color}" stroke-width="0.8"><title>vehicle {id}</title></polyline>"#,
            points.trim_end()
        );
        if let Some(first) = log.frames.first() {
            let p = first.vehicles[i].position;
            let _ = writeln!(
                out,
                r#"  <circle cx="{}" cy="{}" r="1.5" fill="{color}"><title>vehicle {id} start</title></circle>"#,
                fmt_num(p.x),
                fmt_num(-p.y)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
