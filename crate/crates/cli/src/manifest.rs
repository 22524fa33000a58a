//! Experiment manifest: TOML, versioned, unknown keys rejected.
//!
//! Parsing fills every default, so the parsed manifest serializes to a fully
//! explicit document and `parse(serialize(m)) == m`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use vkflow_core::aero::AeroParams;
use vkflow_core::diagnostics::{ConvergenceCriteria, LowFrequencyCheck};
use vkflow_core::dynamics::{default_dt, FlowCoupling, HistoryInit, DEFAULT_RHO_INF};
use vkflow_core::grid::clamped_mode;
use vkflow_core::stationary::ContinuationAxis;
use vkflow_core::{InPlaneLoad, NonlinearityKind, PlateGrid, Probes, ScalarField, SimConfig};

use crate::error::{CliError, Result};

pub const FORMAT_VERSION: &str = "vkflow-manifest/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default = "format_version")]
    pub format_version: String,
    #[serde(default = "default_name")]
    pub name: String,
    pub grid: GridSpec,
    pub physics: Physics,
    #[serde(default)]
    pub load: LoadSpec,
    #[serde(default)]
    pub nonlinearity: NonlinearitySpec,
    #[serde(default)]
    pub time: TimeSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub aero: QuadratureSpec,
    #[serde(default)]
    pub probes: ProbeSpec,
    #[serde(default)]
    pub stationary: StationarySpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub convergence: ConvergenceSpec,
}

fn format_version() -> String {
    FORMAT_VERSION.into()
}
fn default_name() -> String {
    "vkflow".into()
}

/// Plate `[x0, x0 + lx] x [y0, y0 + ly]` with `nx x ny` interior nodes;
/// `n` sets both counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub nx: Option<usize>,
    #[serde(default)]
    pub ny: Option<usize>,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub y0: f64,
    #[serde(default = "one")]
    pub lx: f64,
    #[serde(default = "one")]
    pub ly: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    /// Flow speed as a fraction of the speed of sound.
    #[serde(rename = "U")]
    pub u: f64,
    pub k: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "full")]
    pub coupling: FlowCoupling,
}

fn full() -> FlowCoupling {
    FlowCoupling::Full
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadShape {
    Zero,
    Constant,
    /// `sin(pi xi) sin(pi eta)`
    Sine,
    /// `sin(pi xi) sin(pi eta) (1 + xi)`, not symmetric in `x`.
    SineRamp,
}

/// Transverse load `p0 = amplitude * shape` in normalized coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    #[serde(default = "sine_ramp")]
    pub shape: LoadShape,
    #[serde(default)]
    pub amplitude: f64,
}

fn sine_ramp() -> LoadShape {
    LoadShape::SineRamp
}

impl Default for LoadSpec {
    fn default() -> Self {
        Self {
            shape: LoadShape::SineRamp,
            amplitude: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityName {
    VonKarman,
    Berger,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySpec {
    #[serde(default = "von_karman")]
    pub kind: NonlinearityName,
    /// Uniaxial in-plane compression (von Karman only).
    #[serde(default)]
    pub compression: f64,
    #[serde(default)]
    pub upsilon: f64,
    #[serde(default = "one")]
    pub kappa: f64,
}

fn von_karman() -> NonlinearityName {
    NonlinearityName::VonKarman
}

impl Default for NonlinearitySpec {
    fn default() -> Self {
        Self {
            kind: NonlinearityName::VonKarman,
            compression: 0.0,
            upsilon: 0.0,
            kappa: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    /// Defaults to the stability bound of the explicit terms.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub t_end: f64,
    #[serde(default = "rho_inf")]
    pub rho_inf: f64,
}

fn rho_inf() -> f64 {
    DEFAULT_RHO_INF
}

impl Default for TimeSpec {
    fn default() -> Self {
        Self {
            dt: None,
            t_end: 0.0,
            rho_inf: DEFAULT_RHO_INF,
        }
    }
}

/// `amp * clamped_mode(m, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeTerm {
    pub m: u32,
    pub n: u32,
    pub amp: f64,
}

pub fn mode_sum(grid: &PlateGrid, terms: &[ModeTerm]) -> ScalarField {
    let mut f = ScalarField::zeros(grid);
    for t in terms {
        f.axpy(t.amp, &clamped_mode(grid, t.m, t.n));
    }
    f
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default = "zero_history")]
    pub history: HistoryInit,
    #[serde(default)]
    pub u0: Vec<ModeTerm>,
    #[serde(default)]
    pub u1: Vec<ModeTerm>,
}

fn zero_history() -> HistoryInit {
    HistoryInit::Zero
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            history: HistoryInit::Zero,
            u0: Vec::new(),
            u1: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    #[serde(default = "sixty_four")]
    pub theta_n: usize,
    #[serde(default = "sixty_four")]
    pub s_n: usize,
}

fn sixty_four() -> usize {
    64
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { theta_n: 64, s_n: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    #[serde(default = "one_usize")]
    pub stride: usize,
    #[serde(default)]
    pub trace_stride: Option<usize>,
    /// Radius of the half-ball `K_rho` that holds the flow probe points.
    #[serde(default = "one")]
    pub rho: f64,
    #[serde(default)]
    pub flow_points: Vec<[f64; 3]>,
    #[serde(default = "low_freq_eps")]
    pub low_freq_eps: f64,
    #[serde(default)]
    pub low_freq_m: f64,
    /// Record distances to the Newton catalog built from `[stationary]`.
    #[serde(default)]
    pub equilibria: bool,
}

fn one_usize() -> usize {
    1
}
fn low_freq_eps() -> f64 {
    LowFrequencyCheck::default().eps
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            stride: 1,
            trace_stride: None,
            rho: 1.0,
            flow_points: Vec::new(),
            low_freq_eps: low_freq_eps(),
            low_freq_m: 0.0,
            equilibria: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationSpec {
    pub axis: ContinuationAxis,
    pub values: Vec<f64>,
    #[serde(default)]
    pub seed: Vec<ModeTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationarySpec {
    /// Start one Newton solve from `u = 0`.
    #[serde(default = "yes")]
    pub from_zero: bool,
    /// Each seed is one Newton start.
    #[serde(default)]
    pub seeds: Vec<ModeTerm>,
    #[serde(default = "dedup_tol")]
    pub dedup_tol: f64,
    #[serde(default = "max_iter")]
    pub max_iter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuation: Option<ContinuationSpec>,
}

fn yes() -> bool {
    true
}
fn dedup_tol() -> f64 {
    1e-5
}
fn max_iter() -> usize {
    50
}

impl Default for StationarySpec {
    fn default() -> Self {
        Self {
            from_zero: true,
            seeds: Vec::new(),
            dedup_tol: dedup_tol(),
            max_iter: max_iter(),
            continuation: None,
        }
    }
}

/// Axes of a parameter sweep; an empty axis keeps the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default, rename = "U")]
    pub u: Vec<f64>,
    #[serde(default)]
    pub k: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub load_amplitude: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "out_dir")]
    pub dir: String,
    #[serde(default = "yes")]
    pub snapshot: bool,
}

fn out_dir() -> String {
    "out".into()
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: out_dir(),
            snapshot: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    #[serde(default = "window")]
    pub window: f64,
    #[serde(default = "velocity_tol")]
    pub velocity_tol: f64,
    #[serde(default = "distance_tol")]
    pub distance_tol: f64,
}

fn window() -> f64 {
    2.0
}
fn velocity_tol() -> f64 {
    1e-6
}
fn distance_tol() -> f64 {
    1e-4
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            window: window(),
            velocity_tol: velocity_tol(),
            distance_tol: distance_tol(),
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Manifest(msg.into())
}

/// Parses, fills defaults and validates.
pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let mut m: Manifest = toml::from_str(text).map_err(|e| bad(e.message().to_string()))?;
    m.resolve()?;
    m.validate()?;
    Ok(m)
}

impl Manifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    fn resolve(&mut self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported format_version {:?}, expected {FORMAT_VERSION:?}",
                self.format_version
            )));
        }
        let g = &mut self.grid;
        match (g.n.take(), g.nx, g.ny) {
            (Some(n), None, None) => {
                g.nx = Some(n);
                g.ny = Some(n);
            }
            (Some(_), _, _) => return Err(bad("grid: give either n or nx/ny, not both")),
            (None, Some(_), Some(_)) => {}
            (None, _, _) => return Err(bad("grid: missing n (or nx and ny)")),
        }
        let grid = self.plate_grid()?;
        if self.time.dt.is_none() {
            // one step for every sweep cell, stable at the fastest flow
            let u_max = self.sweep.u.iter().fold(self.physics.u, |a, &b| a.max(b));
            self.time.dt = Some(default_dt(&grid, u_max.clamp(0.0, 1.0)));
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let grid = self.plate_grid()?;
        self.sim_config(&grid)?;
        let p = &self.probes;
        if !(p.rho > 0.0) {
            return Err(bad(format!("probes.rho must be positive, got {}", p.rho)));
        }
        for q in &p.flow_points {
            let r = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
            if !(q[2] >= 0.0 && r <= p.rho) {
                return Err(bad(format!(
                    "flow point {q:?} must lie in the closed upper half-ball of radius rho = {}",
                    p.rho
                )));
            }
        }
        if p.stride == 0 {
            return Err(bad("probes.stride must be at least 1"));
        }
        let c = &self.convergence;
        if !(c.window > 0.0 && c.velocity_tol > 0.0 && c.distance_tol > 0.0) {
            return Err(bad("convergence: window and tolerances must be positive"));
        }
        if !(self.stationary.dedup_tol >= 0.0) {
            return Err(bad("stationary.dedup_tol must be >= 0"));
        }
        for cell in self.sweep_cells() {
            cell.sim_config(&grid)?;
        }
        Ok(())
    }

    pub fn plate_grid(&self) -> Result<PlateGrid> {
        let g = &self.grid;
        let (nx, ny) = match (g.n, g.nx, g.ny) {
            (Some(n), _, _) => (n, n),
            (None, Some(nx), Some(ny)) => (nx, ny),
            _ => return Err(bad("grid: missing n (or nx and ny)")),
        };
        Ok(PlateGrid::new(g.x0, g.y0, g.lx, g.ly, nx, ny)?)
    }

    pub fn load(&self, grid: &PlateGrid) -> ScalarField {
        let amp = self.load.amplitude;
        let (x0, y0, lx, ly) = (grid.x0(), grid.y0(), grid.lx(), grid.ly());
        match self.load.shape {
            LoadShape::Zero => ScalarField::zeros(grid),
            LoadShape::Constant => ScalarField::constant(grid, amp),
            LoadShape::Sine => ScalarField::from_fn(grid, |x, y| {
                amp * (PI * (x - x0) / lx).sin() * (PI * (y - y0) / ly).sin()
            }),
            LoadShape::SineRamp => ScalarField::from_fn(grid, |x, y| {
                let xi = (x - x0) / lx;
                amp * (PI * xi).sin() * (PI * (y - y0) / ly).sin() * (1.0 + xi)
            }),
        }
    }

    pub fn sim_config(&self, grid: &PlateGrid) -> Result<SimConfig> {
        let mut c = SimConfig::new(grid, self.physics.u)?;
        c.aero = AeroParams::new(self.physics.u, self.aero.theta_n, self.aero.s_n)?;
        c.k = self.physics.k;
        c.beta = self.physics.beta;
        c.coupling = self.physics.coupling;
        c.dt = self.time.dt.unwrap_or(c.dt);
        c.t_end = self.time.t_end;
        c.rho_inf = self.time.rho_inf;
        c.history_init = self.initial.history;
        c.p0 = self.load(grid);
        let nl = &self.nonlinearity;
        c.kind = match nl.kind {
            NonlinearityName::VonKarman => NonlinearityKind::VonKarman(if nl.compression == 0.0 {
                InPlaneLoad::zero(grid)
            } else {
                InPlaneLoad::uniaxial(grid, nl.compression)
            }),
            NonlinearityName::Berger => NonlinearityKind::Berger {
                upsilon: nl.upsilon,
                kappa: nl.kappa,
            },
            NonlinearityName::Linear => NonlinearityKind::linear(),
        };
        c.validate(grid)?;
        Ok(c)
    }

    /// Probes without the equilibrium catalog, which the caller attaches.
    pub fn probes(&self) -> Probes {
        let p = &self.probes;
        Probes {
            stride: p.stride,
            trace_stride: p.trace_stride,
            flow_points: p.flow_points.clone(),
            equilibria: None,
            low_frequency: LowFrequencyCheck {
                eps: p.low_freq_eps,
                m_eps: p.low_freq_m,
            },
        }
    }

    pub fn criteria(&self) -> ConvergenceCriteria {
        ConvergenceCriteria {
            window: self.convergence.window,
            velocity_tol: self.convergence.velocity_tol,
            distance_tol: self.convergence.distance_tol,
        }
    }

    /// Cartesian product of the sweep axes, `U` slowest and load amplitude
    /// fastest. Each cell is the base manifest with its physics overridden.
    pub fn sweep_cells(&self) -> Vec<Manifest> {
        fn axis(v: &[f64], base: f64) -> Vec<f64> {
            if v.is_empty() {
                vec![base]
            } else {
                v.to_vec()
            }
        }
        let s = &self.sweep;
        let mut cells = Vec::new();
        for &u in &axis(&s.u, self.physics.u) {
            for &k in &axis(&s.k, self.physics.k) {
                for &beta in &axis(&s.beta, self.physics.beta) {
                    for &amp in &axis(&s.load_amplitude, self.load.amplitude) {
                        let mut m = self.clone();
                        m.physics.u = u;
                        m.physics.k = k;
                        m.physics.beta = beta;
                        m.load.amplitude = amp;
                        cells.push(m);
                    }
                }
            }
        }
        cells
    }
}
