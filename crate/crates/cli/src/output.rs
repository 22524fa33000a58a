//! CSV records, field snapshots and catalogs. Every file starts with the
//! format version and the resolved manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use vkflow_core::{DiagnosticsRecord, ScalarField};

use crate::error::Result;
use crate::manifest::{Manifest, FORMAT_VERSION};

/// `# `-prefixed header lines: format version, then the manifest as TOML.
pub fn manifest_echo(m: &Manifest) -> String {
    let mut s = format!("# format_version: {FORMAT_VERSION}\n");
    for line in m.to_toml().lines() {
        s.push_str("# ");
        s.push_str(line);
        s.push('\n');
    }
    s
}

/// 17 significant digits; round-trips every finite `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub const RECORD_COLUMNS: [&str; 18] = [
    "t",
    "step",
    "e_pl",
    "pi",
    "e_red",
    "e_red_check",
    "diss_integral",
    "u_norm",
    "u_h2",
    "u_t_norm",
    "q_norm",
    "conv_power",
    "delay_power",
    "low_freq_gap",
    "dist_to_equilibria",
    "nearest",
    "trace_residual",
    "flags",
];

/// Records as CSV; each flow probe point `i` adds `phi_i` and `phi_t_i`.
pub fn records_csv(m: &Manifest, records: &[DiagnosticsRecord]) -> String {
    let mut s = manifest_echo(m);
    let mut cols: Vec<String> = RECORD_COLUMNS.iter().map(|c| c.to_string()).collect();
    for i in 0..m.probes.flow_points.len() {
        cols.push(format!("phi_{i}"));
        cols.push(format!("phi_t_{i}"));
    }
    s.push_str(&cols.join(","));
    s.push('\n');
    for r in records {
        let mut row = vec![
            num(r.t),
            r.step.to_string(),
            num(r.e_pl),
            num(r.pi),
            num(r.e_red),
            num(r.e_red_check),
            num(r.diss_integral),
            num(r.u_norm),
            num(r.u_h2),
            num(r.u_t_norm),
            num(r.q_norm),
            num(r.conv_power),
            num(r.delay_power),
            num(r.low_freq_gap),
            opt(r.dist_to_equilibria),
            r.nearest.map(|n| n.to_string()).unwrap_or_default(),
            opt(r.trace_residual),
            r.flags.to_string(),
        ];
        for f in &r.flow {
            row.push(num(f[0]));
            row.push(num(f[1]));
        }
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Manifest echo, the header line `nx ny x0 y0 Lx Ly t`, its values, then
/// the interior values row by row (`y` rows, `x` fastest).
pub fn snapshot_text(m: &Manifest, field: &ScalarField, t: f64) -> String {
    let g = field.grid();
    let mut s = manifest_echo(m);
    s.push_str("nx ny x0 y0 Lx Ly t\n");
    let _ = writeln!(
        s,
        "{} {} {} {} {} {} {}",
        g.nx(),
        g.ny(),
        num(g.x0()),
        num(g.y0()),
        num(g.lx()),
        num(g.ly()),
        num(t)
    );
    for row in field.values().chunks(g.nx()) {
        let line: Vec<String> = row.iter().map(|&v| num(v)).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

/// Reads a snapshot back: `(nx, ny, [x0, y0, lx, ly], t, values)`.
pub fn parse_snapshot(text: &str) -> Option<(usize, usize, [f64; 4], f64, Vec<f64>)> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    if lines.next()? != "nx ny x0 y0 Lx Ly t" {
        return None;
    }
    let head: Vec<&str> = lines.next()?.split_whitespace().collect();
    if head.len() != 7 {
        return None;
    }
    let nx = head[0].parse().ok()?;
    let ny = head[1].parse().ok()?;
    let f = |i: usize| head[i].parse::<f64>().ok();
    let ext = [f(2)?, f(3)?, f(4)?, f(5)?];
    let t = f(6)?;
    let values = lines
        .flat_map(|l| l.split_whitespace())
        .map(|v| v.parse::<f64>().ok())
        .collect::<Option<Vec<_>>>()?;
    (values.len() == nx * ny).then_some((nx, ny, ext, t, values))
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}
