//! The four subcommands. Each writes its files under `out` and returns a
//! summary for the terminal.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use vkflow_core::diagnostics::{convergence_detector, fit_decay_rate, Verdict};
use vkflow_core::grid::{laplacian, norm_l2};
use vkflow_core::stationary::{certificate_tol, continuation, NewtonOptions, ParamSnapshot};
use vkflow_core::verify::{self, CheckReport, Effort};
use vkflow_core::{run, EquilibriumSet, PlateGrid, SimConfig, StationaryProblem, Trajectory};

use crate::error::{CliError, Result};
use crate::manifest::{mode_sum, Manifest, FORMAT_VERSION};
use crate::output::{self, num};

#[derive(Clone, Debug, Serialize)]
pub struct NewtonStart {
    pub start: String,
    pub converged: bool,
    pub iterations: usize,
    pub residual_norm: f64,
    /// Catalog index, or `None` for a failed start or a duplicate.
    pub member: Option<usize>,
    pub failure: Option<String>,
}

/// Newton from zero (when enabled) and from each seed; certified solutions
/// go into the catalog.
pub fn build_catalog(m: &Manifest, grid: &PlateGrid, config: &SimConfig) -> Result<(EquilibriumSet, Vec<NewtonStart>)> {
    let prob = StationaryProblem::new(config, grid)?;
    let opts = NewtonOptions {
        max_iter: m.stationary.max_iter,
        ..NewtonOptions::default()
    };
    let mut starts = Vec::new();
    if m.stationary.from_zero {
        starts.push(("zero".to_string(), vkflow_core::ScalarField::zeros(grid)));
    }
    for s in &m.stationary.seeds {
        starts.push((format!("mode({},{})*{}", s.m, s.n, s.amp), mode_sum(grid, std::slice::from_ref(s))));
    }
    let mut set = EquilibriumSet::new(m.stationary.dedup_tol);
    let mut report = Vec::new();
    for (name, guess) in starts {
        let out = prob.newton(&guess, &opts)?;
        let member = if out.converged {
            set.insert_outcome(&out, config)?
        } else {
            None
        };
        report.push(NewtonStart {
            start: name,
            converged: out.converged,
            iterations: out.iterations,
            residual_norm: out.residual_norm,
            member,
            failure: out.failure,
        });
    }
    Ok((set, report))
}

fn run_manifest(m: &Manifest) -> Result<Trajectory> {
    let grid = m.plate_grid()?;
    let config = m.sim_config(&grid)?;
    let mut probes = m.probes();
    if m.probes.equilibria {
        let (set, _) = build_catalog(m, &grid, &config)?;
        if set.is_empty() {
            return Err(CliError::Numerical("no certified equilibrium for the distance probe".into()));
        }
        probes.equilibria = Some(set);
    }
    let u0 = mode_sum(&grid, &m.initial.u0);
    let u1 = mode_sum(&grid, &m.initial.u1);
    Ok(run(&config, &grid, &u0, &u1, &probes)?)
}

fn write_run(m: &Manifest, tr: &Trajectory, stem: &Path) -> Result<Vec<PathBuf>> {
    let rec = with_suffix(stem, "records.csv");
    output::write(&rec, &output::records_csv(m, &tr.records))?;
    let mut files = vec![rec];
    if m.output.snapshot {
        let snap = with_suffix(stem, "snapshot.txt");
        output::write(&snap, &output::snapshot_text(m, &tr.final_state.u, tr.final_state.t))?;
        files.push(snap);
    }
    Ok(files)
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateSummary {
    pub files: Vec<PathBuf>,
    pub records: usize,
    pub t_final: f64,
    pub verdict: Verdict,
}

/// One trajectory; files are written even when the run aborts.
pub fn simulate(m: &Manifest, out: &Path) -> Result<SimulateSummary> {
    let tr = run_manifest(m)?;
    let files = write_run(m, &tr, &out.join(&m.name))?;
    if let Some(e) = &tr.aborted {
        return Err(CliError::Numerical(format!("run aborted at t = {}: {e}", tr.final_state.t)));
    }
    Ok(SimulateSummary {
        files,
        records: tr.records.len(),
        t_final: tr.final_state.t,
        verdict: convergence_detector(&tr.records, &m.criteria()),
    })
}

#[derive(Clone, Debug, Serialize)]
struct MemberReport {
    index: usize,
    residual_norm: f64,
    certificate_tol: f64,
    u_norm: f64,
    u_h2: f64,
    params: ParamSnapshot,
    snapshot: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
struct BranchReport {
    value: f64,
    residual_norm: f64,
    iterations: usize,
    u_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
struct ContinuationReport {
    axis: vkflow_core::stationary::ContinuationAxis,
    branch: Vec<BranchReport>,
    lost_at: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
struct Catalog<'a> {
    format_version: &'static str,
    manifest: &'a Manifest,
    starts: Vec<NewtonStart>,
    members: Vec<MemberReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    continuation: Option<ContinuationReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StationarySummary {
    pub catalog: PathBuf,
    pub members: usize,
    pub failed_starts: usize,
}

/// Equilibrium catalog as JSON plus one snapshot per member.
pub fn stationary(m: &Manifest, out: &Path) -> Result<StationarySummary> {
    let grid = m.plate_grid()?;
    let config = m.sim_config(&grid)?;
    let (set, starts) = build_catalog(m, &grid, &config)?;
    let stem = out.join(&m.name);
    let tol = certificate_tol(&config.p0);
    let mut members = Vec::new();
    for (i, e) in set.members().iter().enumerate() {
        let snapshot = if m.output.snapshot {
            let p = with_suffix(&stem, &format!("eq{i}.txt"));
            output::write(&p, &output::snapshot_text(m, &e.u, 0.0))?;
            Some(p)
        } else {
            None
        };
        members.push(MemberReport {
            index: i,
            residual_norm: e.residual_norm,
            certificate_tol: tol,
            u_norm: norm_l2(&e.u),
            u_h2: norm_l2(&laplacian(&e.u)),
            params: e.params.clone(),
            snapshot,
        });
    }
    let cont = match &m.stationary.continuation {
        Some(c) => {
            let seed = mode_sum(&grid, &c.seed);
            let res = continuation(&c.values, c.axis, &config, &grid, &seed)?;
            Some(ContinuationReport {
                axis: c.axis,
                branch: res
                    .branch
                    .iter()
                    .map(|b| BranchReport {
                        value: b.value,
                        residual_norm: b.residual_norm,
                        iterations: b.iterations,
                        u_norm: norm_l2(&b.u),
                    })
                    .collect(),
                lost_at: res.lost_at,
            })
        }
        None => None,
    };
    let failed_starts = starts.iter().filter(|s| !s.converged).count();
    let catalog = Catalog {
        format_version: FORMAT_VERSION,
        manifest: m,
        starts,
        members,
        continuation: cont,
    };
    let path = with_suffix(&stem, "catalog.json");
    let text = serde_json::to_string_pretty(&catalog).map_err(|e| CliError::Numerical(e.to_string()))?;
    output::write(&path, &(text + "\n"))?;
    if set.is_empty() {
        return Err(CliError::Numerical("no Newton start converged to a certified equilibrium".into()));
    }
    Ok(StationarySummary {
        catalog: path,
        members: set.len(),
        failed_starts,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub cell: usize,
    pub u: f64,
    pub k: f64,
    pub beta: f64,
    pub load_amplitude: f64,
    pub verdict: Option<Verdict>,
    pub final_distance: Option<f64>,
    /// Exponential rate of `||u_t||^2` over the second half of the run.
    pub decay_rate: Option<f64>,
    pub decay_r2: Option<f64>,
    pub dissipation_total: Option<f64>,
    pub status: String,
}

fn velocity_decay(tr: &Trajectory) -> Option<(f64, f64)> {
    let t_end = tr.records.last()?.t;
    let series: Vec<(f64, f64)> = tr
        .records
        .iter()
        .filter(|r| r.t >= 0.5 * t_end)
        .map(|r| (r.t, r.u_t_norm * r.u_t_norm))
        .collect();
    fit_decay_rate(&series).ok()
}

fn summarize(i: usize, cell: &Manifest, tr: &Trajectory) -> CellSummary {
    let last = tr.records.last();
    let decay = velocity_decay(tr);
    CellSummary {
        cell: i,
        u: cell.physics.u,
        k: cell.physics.k,
        beta: cell.physics.beta,
        load_amplitude: cell.load.amplitude,
        verdict: Some(convergence_detector(&tr.records, &cell.criteria())),
        final_distance: last.map(|r| {
            r.dist_to_equilibria
                .unwrap_or_else(|| (r.u_h2 * r.u_h2 + r.u_t_norm * r.u_t_norm).sqrt())
        }),
        decay_rate: decay.map(|d| d.0),
        decay_r2: decay.map(|d| d.1),
        dissipation_total: last.map(|r| r.diss_integral),
        status: match &tr.aborted {
            Some(e) => format!("aborted: {e}"),
            None => "ok".into(),
        },
    }
}

fn verdict_name(v: &Option<Verdict>) -> String {
    match v {
        Some(Verdict::Converged { nearest: Some(i) }) => format!("converged:{i}"),
        Some(Verdict::Converged { nearest: None }) => "converged".into(),
        Some(Verdict::Wandering) => "wandering".into(),
        Some(Verdict::Growing) => "growing".into(),
        None => String::new(),
    }
}

pub fn summary_csv(m: &Manifest, cells: &[CellSummary]) -> String {
    let mut s = output::manifest_echo(m);
    s.push_str("cell,U,k,beta,load_amplitude,verdict,final_distance,decay_rate,decay_r2,dissipation_total,status\n");
    let o = |x: Option<f64>| x.map(num).unwrap_or_default();
    for c in cells {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},\"{}\"\n",
            c.cell,
            num(c.u),
            num(c.k),
            num(c.beta),
            num(c.load_amplitude),
            verdict_name(&c.verdict),
            o(c.final_distance),
            o(c.decay_rate),
            o(c.decay_r2),
            o(c.dissipation_total),
            c.status.replace('"', "'")
        ));
    }
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSummary {
    pub summary: PathBuf,
    pub cells: Vec<CellSummary>,
}

pub fn cell_stem(out: &Path, m: &Manifest, i: usize) -> PathBuf {
    out.join(format!("{}.cell{i:04}", m.name))
}

/// Every cell runs concurrently and writes only its own files; the summary
/// is assembled after all cells finish. Exits with a numerical failure when
/// any cell aborted, after writing everything.
pub fn sweep(m: &Manifest, out: &Path) -> Result<SweepSummary> {
    let cells = m.sweep_cells();
    let results: Vec<Result<CellSummary>> = cells
        .par_iter()
        .enumerate()
        .map(|(i, cell)| {
            let summary = match run_manifest(cell) {
                Ok(tr) => {
                    write_run(cell, &tr, &cell_stem(out, m, i))?;
                    summarize(i, cell, &tr)
                }
                Err(e @ (CliError::Core(_) | CliError::Numerical(_))) => CellSummary {
                    cell: i,
                    u: cell.physics.u,
                    k: cell.physics.k,
                    beta: cell.physics.beta,
                    load_amplitude: cell.load.amplitude,
                    verdict: None,
                    final_distance: None,
                    decay_rate: None,
                    decay_r2: None,
                    dissipation_total: None,
                    status: format!("failed: {e}"),
                },
                Err(e) => return Err(e),
            };
            Ok(summary)
        })
        .collect();
    let cells = results.into_iter().collect::<Result<Vec<_>>>()?;
    let path = with_suffix(&out.join(&m.name), "summary.csv");
    output::write(&path, &summary_csv(m, &cells))?;
    let bad: Vec<String> = cells
        .iter()
        .filter(|c| c.status != "ok")
        .map(|c| format!("cell {}: {}", c.cell, c.status))
        .collect();
    if !bad.is_empty() {
        return Err(CliError::Numerical(bad.join("; ")));
    }
    Ok(SweepSummary { summary: path, cells })
}

/// Runs the oracle suites; fails with the failing reports.
pub fn verify(effort: Effort, seed: u64) -> (Vec<CheckReport>, Result<()>) {
    let reports = verify::run_all(effort, seed);
    let failed: Vec<CheckReport> = reports.iter().filter(|r| !r.passed).cloned().collect();
    let status = if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed))
    };
    (reports, status)
}
