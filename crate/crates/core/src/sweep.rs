//! Parameter sweeps: tau scans, (Lambda, sigma) STIRAP maps, (delta_+,
//! delta_-) detuning maps and environmental-fluctuation curves, with
//! robustness metrics over the resulting grids.
//!
//! Cells are evaluated independently (parallel via rayon) and streamed to the
//! caller in index order, so output files grow as valid prefixes and a rerun
//! with the same spec is bit-identical regardless of thread count.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiment::{Frame, Protocol, Scheme};
use crate::nv::EnvironmentShift;
use crate::spin::SpinProj;

/// A uniformly spaced axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl GridAxis {
    pub fn new(start: f64, stop: f64, points: usize) -> Self {
        GridAxis { start, stop, points }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.points - 1) as f64;
        (0..self.points).map(|k| self.start + step * k as f64).collect()
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if self.points == 0 || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::InvalidGrid(format!("{name}: empty or non-finite axis")));
        }
        Ok(())
    }
}

/// Which environmental knob a fluctuation curve moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FluctuationKind {
    /// Temperature offsets in K (common-mode detuning shifts).
    Temperature,
    /// Magnet-distance offsets in µm (differential detuning shifts).
    Position,
}

/// What to sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SweepKind {
    /// Raman pulse length scan.
    TauScan { tau_us: GridAxis },
    /// Final populations over (Lambda, sigma) for STIRAP.
    StirapMap { lambda_us: GridAxis, sigma_us: GridAxis },
    /// Final populations over per-tone detuning offsets (delta_-, delta_+).
    DetuningMap { delta_minus_mhz: GridAxis, delta_plus_mhz: GridAxis },
    /// Full tau series per environmental offset.
    FluctuationCurve { kind: FluctuationKind, offsets: Vec<f64>, tau_us: GridAxis },
}

/// A sweep: the protocol template plus the grid description.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub protocol: Protocol,
    pub kind: SweepKind,
    /// Run the 5-cell lab-frame audit on rotating-frame 2D maps.
    pub audit: bool,
    /// Recorded in provenance manifests; sweeps themselves are deterministic.
    pub seed: u64,
}

/// Lab-frame spot check of a rotating-frame map: corner cells plus center,
/// asserted to agree within `tolerance` on every population.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameAudit {
    pub cell_indices: Vec<usize>,
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub const AUDIT_TOLERANCE: f64 = 0.03;

/// Result grid in row-major order (x outer, y inner).
#[derive(Debug, Clone)]
pub struct GridResult {
    pub x_name: String,
    pub x: Vec<f64>,
    pub y_name: Option<String>,
    pub y: Vec<f64>,
    /// Populations (P_-1, P_0, P_+1) per cell; NaN triple on cell failure.
    pub cells: Vec<[f64; 3]>,
    /// Diagnostics for failed cells, `(flat index, message)`.
    pub failures: Vec<(usize, String)>,
    pub audit: Option<FrameAudit>,
}

impl GridResult {
    pub fn n_cells(&self) -> usize {
        self.x.len() * self.y.len().max(1)
    }

    pub fn cell(&self, ix: usize, iy: usize) -> [f64; 3] {
        self.cells[ix * self.y.len().max(1) + iy]
    }

    pub fn is_2d(&self) -> bool {
        self.y_name.is_some()
    }

    /// Long-format CSV: `x[,y],P_m1,P_0,P_p1`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv_to(&mut w)
    }

    pub fn write_csv_to<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        for (idx, cell) in self.cells.iter().enumerate() {
            let line = self.csv_row(idx, cell);
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_header(&self) -> String {
        match &self.y_name {
            Some(y) => format!("{},{},P_m1,P_0,P_p1", self.x_name, y),
            None => format!("{},P_m1,P_0,P_p1", self.x_name),
        }
    }

    pub fn csv_row(&self, idx: usize, cell: &[f64; 3]) -> String {
        let ny = self.y.len().max(1);
        let (ix, iy) = (idx / ny, idx % ny);
        match self.y_name {
            Some(_) => format!(
                "{},{},{},{},{}",
                self.x[ix], self.y[iy], cell[0], cell[1], cell[2]
            ),
            None => format!("{},{},{},{}", self.x[ix], cell[0], cell[1], cell[2]),
        }
    }
}

/// Fraction of non-NaN cells whose population of `state` is >= `threshold`.
pub fn robust_area(g: &GridResult, state: SpinProj, threshold: f64) -> Result<f64> {
    let k = state.index();
    let valid: Vec<f64> =
        g.cells.iter().map(|c| c[k]).filter(|v| v.is_finite()).collect();
    if valid.is_empty() {
        return Err(Error::AllCellsFailed);
    }
    let hits = valid.iter().filter(|&&v| v >= threshold).count();
    Ok(hits as f64 / valid.len() as f64)
}

/// Size of the 4-connected region of cells with population of `state`
/// strictly above `threshold` containing `(ix, iy)`; 0 if the seed cell does
/// not qualify.
pub fn connected_region_size(
    g: &GridResult,
    state: SpinProj,
    threshold: f64,
    ix: usize,
    iy: usize,
) -> usize {
    let (nx, ny) = (g.x.len(), g.y.len().max(1));
    let k = state.index();
    let qualifies = |a: usize, b: usize| g.cells[a * ny + b][k] > threshold;
    if ix >= nx || iy >= ny || !qualifies(ix, iy) {
        return 0;
    }
    let mut seen = vec![false; nx * ny];
    let mut stack = vec![(ix, iy)];
    seen[ix * ny + iy] = true;
    let mut count = 0usize;
    while let Some((a, b)) = stack.pop() {
        count += 1;
        let mut push = |na: usize, nb: usize| {
            if !seen[na * ny + nb] && qualifies(na, nb) {
                seen[na * ny + nb] = true;
                stack.push((na, nb));
            }
        };
        if a > 0 {
            push(a - 1, b);
        }
        if a + 1 < nx {
            push(a + 1, b);
        }
        if b > 0 {
            push(a, b - 1);
        }
        if b + 1 < ny {
            push(a, b + 1);
        }
    }
    count
}

/// One cell's outcome, streamed in index order.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub index: usize,
    pub pops: [f64; 3],
    pub error: Option<String>,
}

fn cell_protocol(spec: &SweepSpec, idx: usize, x: &[f64], y: &[f64]) -> Protocol {
    let ny = y.len().max(1);
    let (ix, iy) = (idx / ny, idx % ny);
    let mut p = spec.protocol.clone();
    match &spec.kind {
        SweepKind::TauScan { .. } => {
            if let Scheme::Srt { delta_mhz, .. } = p.raman.scheme {
                p.raman.scheme = Scheme::Srt { delta_mhz, tau_us: x[ix].max(f64::MIN_POSITIVE) };
            }
        }
        SweepKind::StirapMap { .. } => {
            p.raman.scheme = Scheme::Stirap { lambda_us: x[ix], sigma_us: y[iy] };
        }
        SweepKind::DetuningMap { .. } => {
            p.raman.delta_minus_mhz = x[ix];
            p.raman.delta_plus_mhz = y[iy];
        }
        SweepKind::FluctuationCurve { kind, .. } => {
            match kind {
                FluctuationKind::Temperature => {
                    p.env = EnvironmentShift { dt_k: x[ix], ..p.env };
                }
                FluctuationKind::Position => {
                    p.env = EnvironmentShift { dz_um: x[ix], ..p.env };
                }
            }
            if let Scheme::Srt { delta_mhz, .. } = p.raman.scheme {
                p.raman.scheme = Scheme::Srt { delta_mhz, tau_us: y[iy].max(f64::MIN_POSITIVE) };
            }
        }
    }
    p
}

fn evaluate_cell(spec: &SweepSpec, idx: usize, x: &[f64], y: &[f64]) -> CellOutcome {
    let p = cell_protocol(spec, idx, x, y);
    let tau_override = match &spec.kind {
        SweepKind::TauScan { .. } => Some(x[idx / y.len().max(1)]),
        SweepKind::FluctuationCurve { .. } => Some(y[idx % y.len().max(1)]),
        _ => None,
    };
    let run = || -> Result<[f64; 3]> {
        match tau_override {
            // scans over tau re-use the clip semantics: populations at tau
            Some(tau) => Ok(p.scan(&[tau.max(0.0)])?.pops[0]),
            None => p.run(),
        }
    };
    match run() {
        Ok(pops) => {
            let sum: f64 = pops.iter().sum();
            let in_bounds = pops.iter().all(|&v| (-1e-6..=1.0 + 1e-6).contains(&v))
                && (sum - 1.0).abs() <= 1e-6;
            let error = if in_bounds {
                None
            } else {
                Some(format!("cell populations violate bounds: {pops:?}, sum {sum}"))
            };
            CellOutcome { index: idx, pops, error }
        }
        Err(e) => CellOutcome {
            index: idx,
            pops: [f64::NAN; 3],
            error: Some(e.to_string()),
        },
    }
}

/// Axes of a sweep: `(x_name, x, y_name, y)`; 1D sweeps have an empty y.
pub type SweepAxes = (String, Vec<f64>, Option<String>, Vec<f64>);

/// The axes a sweep will produce.
pub fn sweep_axes(spec: &SweepSpec) -> Result<SweepAxes> {
    match &spec.kind {
        SweepKind::TauScan { tau_us } => {
            tau_us.validate("tau_us")?;
            Ok(("tau_us".into(), tau_us.values(), None, Vec::new()))
        }
        SweepKind::StirapMap { lambda_us, sigma_us } => {
            lambda_us.validate("lambda_us")?;
            sigma_us.validate("sigma_us")?;
            Ok(("lambda_us".into(), lambda_us.values(), Some("sigma_us".into()), sigma_us.values()))
        }
        SweepKind::DetuningMap { delta_minus_mhz, delta_plus_mhz } => {
            delta_minus_mhz.validate("delta_minus_mhz")?;
            delta_plus_mhz.validate("delta_plus_mhz")?;
            Ok((
                "delta_minus_mhz".into(),
                delta_minus_mhz.values(),
                Some("delta_plus_mhz".into()),
                delta_plus_mhz.values(),
            ))
        }
        SweepKind::FluctuationCurve { kind, offsets, tau_us } => {
            if offsets.is_empty() || offsets.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidGrid("fluctuation offsets empty or non-finite".into()));
            }
            tau_us.validate("tau_us")?;
            let x_name = match kind {
                FluctuationKind::Temperature => "dt_k",
                FluctuationKind::Position => "dz_um",
            };
            Ok((x_name.into(), offsets.clone(), Some("tau_us".into()), tau_us.values()))
        }
    }
}

/// Run the sweep, streaming cells to `sink` in index order as they complete.
/// Cell failures become NaN cells with diagnostics; they never abort the
/// grid.
pub fn run_sweep_with<S>(spec: &SweepSpec, mut sink: S) -> Result<GridResult>
where
    S: FnMut(&CellOutcome) -> Result<()>,
{
    use rayon::prelude::*;

    let (x_name, x, y_name, y) = sweep_axes(spec)?;
    let n = x.len() * y.len().max(1);

    let mut cells: Vec<[f64; 3]> = Vec::with_capacity(n);
    let mut failures: Vec<(usize, String)> = Vec::new();

    let (tx, rx) = std::sync::mpsc::channel::<CellOutcome>();
    std::thread::scope(|scope| -> Result<()> {
        let (x_ref, y_ref) = (&x, &y);
        scope.spawn(move || {
            (0..n).into_par_iter().for_each_with(tx, |tx, idx| {
                let out = evaluate_cell(spec, idx, x_ref, y_ref);
                // receiver hangs up only on sink error; ignore send failures
                let _ = tx.send(out);
            });
        });

        // reorder buffer: emit strictly by index
        let mut pending: std::collections::BTreeMap<usize, CellOutcome> =
            std::collections::BTreeMap::new();
        let mut next = 0usize;
        while next < n {
            let out = rx.recv().expect("cell worker hung up early");
            pending.insert(out.index, out);
            while let Some(out) = pending.remove(&next) {
                cells.push(out.pops);
                if let Some(e) = &out.error {
                    failures.push((out.index, e.clone()));
                }
                sink(&out)?;
                next += 1;
            }
        }
        Ok(())
    })?;

    let mut result = GridResult { x_name, x, y_name, y, cells, failures, audit: None };
    if spec.audit && result.is_2d() && spec.protocol.frame == Frame::Rwa {
        result.audit = Some(run_audit(spec, &result)?);
    }
    Ok(result)
}

/// Run the sweep collecting all cells.
pub fn run_sweep(spec: &SweepSpec) -> Result<GridResult> {
    run_sweep_with(spec, |_| Ok(()))
}

/// Recompute the four corners and the center of a 2D rotating-frame map in
/// the lab frame and compare populations.
fn run_audit(spec: &SweepSpec, g: &GridResult) -> Result<FrameAudit> {
    let (nx, ny) = (g.x.len(), g.y.len());
    let picks = [
        0,
        ny - 1,
        (nx - 1) * ny,
        nx * ny - 1,
        (nx / 2) * ny + ny / 2,
    ];
    let mut lab_spec = spec.clone();
    lab_spec.protocol.frame = Frame::Lab;
    let mut deviations = Vec::with_capacity(picks.len());
    let mut indices = Vec::with_capacity(picks.len());
    for &idx in &picks {
        if indices.contains(&idx) {
            continue;
        }
        indices.push(idx);
        let lab = evaluate_cell(&lab_spec, idx, &g.x, &g.y);
        let rwa = g.cells[idx];
        let dev = lab
            .pops
            .iter()
            .zip(&rwa)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        deviations.push(dev);
    }
    let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
    let passed = max_deviation.is_finite() && max_deviation <= AUDIT_TOLERANCE;
    if !passed {
        log::warn!(
            "lab-frame audit outside tolerance: max deviation {max_deviation:.4} > {AUDIT_TOLERANCE}"
        );
    }
    Ok(FrameAudit {
        cell_indices: indices,
        deviations,
        max_deviation,
        tolerance: AUDIT_TOLERANCE,
        passed,
    })
}
