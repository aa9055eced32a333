//! Execution of the full measurement protocol: laser initialization into
//! |0>, state preparation with a pi_- pulse, the Raman block (SRT or STIRAP)
//! of length tau, and state-selective readout, including nuclear-polarization
//! handling and a photon-count signal model.
//!
//! Carriers are synthesized from the transition frequencies at the nominal
//! environment (zero offsets); the configured [`EnvironmentShift`] applies to
//! the propagated Hamiltonian only. This reproduces unintentional detuning:
//! the synthesizers stay where they were calibrated while the center drifts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::drive::{DriveSpec, FieldConversion, Transition};
use crate::error::{Error, Result};
use crate::nv::{transition_frequencies, EnvironmentShift, NVParams, TransitionSet};
use crate::propagate::{
    evolve_lab_frame, evolve_rwa, CollapseChannel, IntegratorConfig, LabModel, RwaDrive,
};
use crate::spin::{BasisLabel, CMat, DensityState, NuclearProj, SpinProj};

/// Propagation frame. The rotating frame is the fast default; the lab frame
/// resolves the microwave carriers and is the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Lab,
    Rwa,
}

/// Initial nuclear spin condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NuclearInit {
    Polarized(NuclearProj),
    /// Equal mixture of m_I = +1/2 and -1/2; reported electron populations
    /// are the arithmetic mean of the two polarized runs.
    Unpolarized,
}

/// Laser initialization model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Ideal reset to |0> (laser as a perfect polarizer).
    Reset,
    /// No initialization stage (the sequence starts from |0> regardless;
    /// kept separate for bookkeeping in exported manifests).
    Skip,
}

/// Preparation stage: swap |0> and |-1>.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrepMode {
    /// Exact population swap, isolating Raman physics from pulse errors.
    IdealSwap,
    /// Propagated resonant pi_- rectangle at the configured Rabi frequency.
    Physical,
    /// No preparation; the Raman block starts from |0>.
    Skip,
}

/// Fidelity model of the readout pi pulses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PiFidelity {
    Ideal,
    Physical,
}

/// Which readout channel a single physical run measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadoutChannel {
    DirectP0,
    PiMinusThenP0,
    PiPlusThenP0,
}

impl ReadoutChannel {
    pub const ALL: [ReadoutChannel; 3] =
        [ReadoutChannel::PiMinusThenP0, ReadoutChannel::DirectP0, ReadoutChannel::PiPlusThenP0];
}

/// Raman drive scheme and its scan parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scheme {
    Srt { delta_mhz: f64, tau_us: f64 },
    Stirap { sigma_us: f64, lambda_us: f64 },
}

/// Parameters of the Raman block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RamanParams {
    pub scheme: Scheme,
    /// Unintentional per-tone detunings delta_-/+ (carrier offsets), MHz.
    pub delta_minus_mhz: f64,
    pub delta_plus_mhz: f64,
    pub omega_minus_mhz: f64,
    pub omega_plus_mhz: f64,
    /// Relative phase of the plus tone, radians.
    pub phase_rad: f64,
}

impl RamanParams {
    pub fn drive(&self, ts: &TransitionSet, conversion: FieldConversion) -> Result<DriveSpec> {
        match self.scheme {
            Scheme::Srt { delta_mhz, tau_us } => DriveSpec::srt(
                ts,
                conversion,
                delta_mhz,
                self.delta_minus_mhz,
                self.delta_plus_mhz,
                self.omega_minus_mhz,
                self.omega_plus_mhz,
                self.phase_rad,
                tau_us,
            ),
            Scheme::Stirap { sigma_us, lambda_us } => DriveSpec::stirap(
                ts,
                conversion,
                self.delta_minus_mhz,
                self.delta_plus_mhz,
                self.omega_minus_mhz,
                self.omega_plus_mhz,
                self.phase_rad,
                sigma_us,
                lambda_us,
            ),
        }
    }
}

/// Everything needed to run one experiment end to end.
#[derive(Debug, Clone)]
pub struct Protocol {
    pub nv: NVParams,
    pub env: EnvironmentShift,
    pub nuclear: NuclearInit,
    pub frame: Frame,
    pub channels: Vec<CollapseChannel>,
    pub integrator: IntegratorConfig,
    pub raman: RamanParams,
    pub init: InitMode,
    pub prepare: PrepMode,
    pub readout_pi: PiFidelity,
    /// Rabi frequency of the physical pi pulses, MHz (1/(2*0.5 MHz) = 1 µs).
    pub pi_omega_mhz: f64,
    /// Rabi-to-field conversion; `None` uses the analytic seed.
    pub conversion: Option<FieldConversion>,
}

impl Protocol {
    /// A polarized SRT protocol at the default NV parameters, rotating frame,
    /// ideal preparation and readout.
    pub fn default_with(raman: RamanParams) -> Self {
        Protocol {
            nv: NVParams::default(),
            env: EnvironmentShift::default(),
            nuclear: NuclearInit::Polarized(NuclearProj::Up),
            frame: Frame::Rwa,
            channels: Vec::new(),
            integrator: IntegratorConfig::default(),
            raman,
            init: InitMode::Reset,
            prepare: PrepMode::IdealSwap,
            readout_pi: PiFidelity::Ideal,
            pi_omega_mhz: 0.5,
            conversion: None,
        }
    }

    pub fn conversion(&self) -> FieldConversion {
        self.conversion.unwrap_or_else(|| FieldConversion::analytic(self.nv.gamma_e_mhz_per_g))
    }

    /// Nuclear projection the carriers are tuned to.
    pub fn carrier_m_i(&self) -> NuclearProj {
        match self.nuclear {
            NuclearInit::Polarized(m) => m,
            NuclearInit::Unpolarized => NuclearProj::Up,
        }
    }

    /// Transition frequencies used for carrier synthesis (nominal
    /// environment).
    pub fn carrier_transitions(&self) -> Result<TransitionSet> {
        transition_frequencies(&self.nv, &EnvironmentShift::default(), self.carrier_m_i())
    }

    /// Transition frequencies seen by the propagated branch (actual
    /// environment).
    fn actual_transitions(&self, m_i: NuclearProj) -> Result<TransitionSet> {
        transition_frequencies(&self.nv, &self.env, m_i)
    }

    /// The synthesized Raman drive.
    pub fn raman_drive(&self) -> Result<DriveSpec> {
        self.raman.drive(&self.carrier_transitions()?, self.conversion())
    }

    fn pi_drive(&self, which: Transition) -> Result<DriveSpec> {
        DriveSpec::pi_pulse(&self.carrier_transitions()?, self.conversion(), which, self.pi_omega_mhz)
    }

    fn nuclear_branches(&self) -> Vec<(f64, NuclearProj)> {
        match self.nuclear {
            NuclearInit::Polarized(m) => vec![(1.0, m)],
            NuclearInit::Unpolarized => {
                vec![(0.5, NuclearProj::Up), (0.5, NuclearProj::Down)]
            }
        }
    }

    /// Propagate a three-dimensional state under an arbitrary drive for the
    /// branch with nuclear projection `m_i`.
    fn propagate(
        &self,
        m_i: NuclearProj,
        drive: &DriveSpec,
        rho0: &DensityState,
        t_grid: &[f64],
    ) -> Result<crate::propagate::Trajectory> {
        match self.frame {
            Frame::Lab => evolve_lab_frame(
                &self.nv,
                &self.env,
                LabModel::ElectronOnly(m_i),
                drive,
                rho0,
                &self.channels,
                t_grid,
                &self.integrator,
            ),
            Frame::Rwa => {
                let ts = self.actual_transitions(m_i)?;
                let rwa = RwaDrive::from_drive(&ts, drive)?;
                evolve_rwa(&rwa, rho0, &self.channels, t_grid, &self.integrator)
            }
        }
    }

    /// State after initialization and preparation for one nuclear branch
    /// (three-dimensional electron state).
    fn prepared_state(&self, m_i: NuclearProj) -> Result<DensityState> {
        let rho0 = DensityState::pure(BasisLabel::electron_only(SpinProj::Zero));
        match self.prepare {
            PrepMode::Skip => Ok(rho0),
            PrepMode::IdealSwap => Ok(apply_permutation(&rho0, &[1, 0, 2])),
            PrepMode::Physical => {
                let pi = self.pi_drive(Transition::Minus)?;
                let t_end = pi.support_end();
                let traj = self.propagate_states(m_i, &pi, &rho0, &[0.0, t_end])?;
                Ok(traj.1)
            }
        }
    }

    /// Propagate and return the final full state.
    fn propagate_states(
        &self,
        m_i: NuclearProj,
        drive: &DriveSpec,
        rho0: &DensityState,
        t_grid: &[f64],
    ) -> Result<(crate::propagate::Trajectory, DensityState)> {
        let traj = match self.frame {
            Frame::Lab => crate::propagate::evolve_lab_frame_opt(
                &self.nv,
                &self.env,
                LabModel::ElectronOnly(m_i),
                drive,
                rho0,
                &self.channels,
                t_grid,
                &self.integrator,
                true,
            )?,
            Frame::Rwa => {
                let ts = self.actual_transitions(m_i)?;
                let rwa = RwaDrive::from_drive(&ts, drive)?;
                crate::propagate::evolve_rwa_opt(
                    &rwa,
                    rho0,
                    &self.channels,
                    t_grid,
                    &self.integrator,
                    true,
                )?
            }
        };
        let last = traj.states.as_ref().unwrap().last().unwrap().clone();
        Ok((traj, last))
    }

    /// Run the full sequence once and report the three readout channels
    /// (P_-1, P_0, P_+1). With ideal readout pulses these are exactly the
    /// electron populations at the end of the Raman block.
    pub fn run(&self) -> Result<[f64; 3]> {
        let drive = self.raman_drive()?;
        let tau_end = drive.support_end();
        let table = self.scan(&[tau_end])?;
        Ok(table.pops[0])
    }

    /// Raman-length scan: for each tau, the drive clipped at tau is run and
    /// all three readout channels are reported. With ideal readout pulses
    /// this equals the single-trajectory time series sampled at the tau grid
    /// (clipping only gates what has not yet played), so a single propagation
    /// per nuclear branch suffices; physical readout pulses force a
    /// propagation per cell.
    pub fn scan(&self, tau_grid: &[f64]) -> Result<ScanTable> {
        if tau_grid.is_empty() || tau_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("tau grid must be non-empty and strictly increasing".into()));
        }
        if tau_grid[0] < 0.0 {
            return Err(Error::InvalidGrid("tau must be >= 0".into()));
        }
        let branches = self.nuclear_branches();
        let mut per_branch: Vec<Vec<[f64; 3]>> = Vec::with_capacity(branches.len());
        for &(_, m_i) in &branches {
            let pops = match self.readout_pi {
                PiFidelity::Ideal => self.scan_branch_fast(m_i, tau_grid)?,
                PiFidelity::Physical => self.scan_branch_clipped(m_i, tau_grid)?,
            };
            per_branch.push(pops);
        }
        let mut pops = vec![[0.0; 3]; tau_grid.len()];
        for (row, out) in pops.iter_mut().enumerate() {
            for (b, &(w, _)) in branches.iter().enumerate() {
                for k in 0..3 {
                    out[k] += w * per_branch[b][row][k];
                }
            }
        }
        let per_mi = if branches.len() == 2 {
            Some([per_branch[0].clone(), per_branch[1].clone()])
        } else {
            None
        };
        Ok(ScanTable { tau_us: tau_grid.to_vec(), pops, per_mi, counts: None })
    }

    /// Fast path: one propagation, populations read at the tau grid.
    fn scan_branch_fast(&self, m_i: NuclearProj, tau_grid: &[f64]) -> Result<Vec<[f64; 3]>> {
        let drive = self.raman_drive()?;
        let rho0 = self.prepared_state(m_i)?;
        let (grid, prepended) = ensure_zero_start(tau_grid);
        let traj = self.propagate(m_i, &drive, &rho0, &grid)?;
        let skip = usize::from(prepended);
        Ok(traj.populations[skip..].iter().map(|p| p.electron).collect())
    }

    /// Explicit per-cell path: clip the drive at tau, propagate, then run the
    /// readout stage (used for physical readout pulses; also exercised by
    /// tests of the clip-consistency property).
    pub fn scan_branch_clipped(&self, m_i: NuclearProj, tau_grid: &[f64]) -> Result<Vec<[f64; 3]>> {
        let drive = self.raman_drive()?;
        let rho_start = self.prepared_state(m_i)?;
        tau_grid
            .iter()
            .map(|&tau| {
                let rho_tau = if tau == 0.0 {
                    rho_start.clone()
                } else {
                    let clipped = drive.clip(tau);
                    self.propagate_states(m_i, &clipped, &rho_start, &[0.0, tau])?.1
                };
                self.readout(m_i, &rho_tau)
            })
            .collect()
    }

    /// Apply the three readout channels to a post-Raman state.
    fn readout(&self, m_i: NuclearProj, rho: &DensityState) -> Result<[f64; 3]> {
        match self.readout_pi {
            PiFidelity::Ideal => {
                let p = crate::spin::populations_unchecked(rho.matrix());
                Ok(p.electron)
            }
            PiFidelity::Physical => {
                let mut out = [0.0; 3];
                for (slot, channel) in out.iter_mut().zip(ReadoutChannel::ALL) {
                    *slot = self.readout_channel(m_i, rho, channel)?;
                }
                Ok(out)
            }
        }
    }

    /// Measured P0 for one readout channel.
    fn readout_channel(
        &self,
        m_i: NuclearProj,
        rho: &DensityState,
        channel: ReadoutChannel,
    ) -> Result<f64> {
        let rho_read = match channel {
            ReadoutChannel::DirectP0 => rho.clone(),
            ReadoutChannel::PiMinusThenP0 => {
                let pi = self.pi_drive(Transition::Minus)?;
                let t = pi.support_end();
                self.propagate_states(m_i, &pi, rho, &[0.0, t])?.1
            }
            ReadoutChannel::PiPlusThenP0 => {
                let pi = self.pi_drive(Transition::Plus)?;
                let t = pi.support_end();
                self.propagate_states(m_i, &pi, rho, &[0.0, t])?.1
            }
        };
        let p = crate::spin::populations_unchecked(rho_read.matrix());
        Ok(p.p(SpinProj::Zero))
    }

    /// Six-dimensional rotating-frame run from the equal nuclear mixture:
    /// the two m_I blocks evolve under their own detunings inside one
    /// six-dimensional integration. Used for the linearity identity with the
    /// averaged per-m_I runs. Ideal preparation and readout.
    pub fn scan_rwa_mixture(&self, tau_grid: &[f64]) -> Result<Vec<[f64; 3]>> {
        let drive = self.raman_drive()?;
        let rwa_up = RwaDrive::from_drive(&self.actual_transitions(NuclearProj::Up)?, &drive)?;
        let rwa_down = RwaDrive::from_drive(&self.actual_transitions(NuclearProj::Down)?, &drive)?;
        let prep_idx = match self.prepare {
            PrepMode::IdealSwap => SpinProj::MinusOne,
            _ => SpinProj::Zero,
        };
        let up = DensityState::pure(BasisLabel::product(prep_idx, NuclearProj::Up));
        let down = DensityState::pure(BasisLabel::product(prep_idx, NuclearProj::Down));
        let rho0 = DensityState::mixture(&[(0.5, &up), (0.5, &down)]);
        let (grid, prepended) = ensure_zero_start(tau_grid);
        let traj = crate::propagate::evolve_rwa_mixture(
            &rwa_up,
            &rwa_down,
            &rho0,
            &self.channels,
            &grid,
            &self.integrator,
        )?;
        let skip = usize::from(prepended);
        Ok(traj.populations[skip..].iter().map(|p| p.electron).collect())
    }

    /// Six-dimensional lab-frame run from the equal nuclear mixture, for the
    /// linearity identity with the averaged per-m_I runs. Ideal preparation
    /// and readout.
    pub fn scan_lab_mixture(&self, tau_grid: &[f64]) -> Result<Vec<[f64; 3]>> {
        let drive = self.raman_drive()?;
        let prep_idx = match self.prepare {
            PrepMode::IdealSwap => SpinProj::MinusOne,
            _ => SpinProj::Zero,
        };
        let up = DensityState::pure(BasisLabel::product(prep_idx, NuclearProj::Up));
        let down = DensityState::pure(BasisLabel::product(prep_idx, NuclearProj::Down));
        let rho0 = DensityState::mixture(&[(0.5, &up), (0.5, &down)]);
        let (grid, prepended) = ensure_zero_start(tau_grid);
        let traj = evolve_lab_frame(
            &self.nv,
            &self.env,
            LabModel::Full,
            &drive,
            &rho0,
            &self.channels,
            &grid,
            &self.integrator,
        )?;
        let skip = usize::from(prepended);
        Ok(traj.populations[skip..].iter().map(|p| p.electron).collect())
    }
}

fn ensure_zero_start(tau_grid: &[f64]) -> (Vec<f64>, bool) {
    if tau_grid[0] == 0.0 {
        (tau_grid.to_vec(), false)
    } else {
        let mut g = Vec::with_capacity(tau_grid.len() + 1);
        g.push(0.0);
        g.extend_from_slice(tau_grid);
        (g, true)
    }
}

/// Conjugate a state by a basis permutation: `perm[i]` is the new index of
/// old basis vector i.
fn apply_permutation(rho: &DensityState, perm: &[usize]) -> DensityState {
    let dim = rho.dim();
    assert_eq!(perm.len(), dim);
    let mut out = CMat::zeros(dim, dim);
    let m = rho.matrix();
    for i in 0..dim {
        for j in 0..dim {
            out[(perm[i], perm[j])] = m[(i, j)];
        }
    }
    DensityState::from_matrix_unchecked(out)
}

/// Result of a tau scan: the three readout channels per tau, optionally the
/// per-nuclear-branch populations (unpolarized runs) and synthesized counts.
#[derive(Debug, Clone)]
pub struct ScanTable {
    pub tau_us: Vec<f64>,
    pub pops: Vec<[f64; 3]>,
    /// Per-branch populations for unpolarized runs, `[m_I = +1/2, m_I = -1/2]`.
    pub per_mi: Option<[Vec<[f64; 3]>; 2]>,
    pub counts: Option<CountsTable>,
}

impl ScanTable {
    /// CSV export: `tau_us,P_m1,P_0,P_p1` plus `counts_*` columns when a
    /// signal model was applied.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        if self.counts.is_some() {
            writeln!(w, "tau_us,P_m1,P_0,P_p1,counts_m1,counts_0,counts_p1")?;
        } else {
            writeln!(w, "tau_us,P_m1,P_0,P_p1")?;
        }
        for (row, (t, p)) in self.tau_us.iter().zip(&self.pops).enumerate() {
            write!(w, "{},{},{},{}", t, p[0], p[1], p[2])?;
            if let Some(c) = &self.counts {
                write!(w, ",{},{},{}", c.counts[row][0], c.counts[row][1], c.counts[row][2])?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Attach Poisson-sampled photon counts for each readout channel.
    pub fn with_counts(mut self, sm: &SignalModel) -> Result<ScanTable> {
        sm.validate()?;
        let counts = synthesize_counts(&self.pops, sm)?;
        self.counts = Some(counts);
        Ok(self)
    }
}

/// Photon-signal model mapping a measured P0 to detected counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    /// Mean photons per shot when P0 = 1.
    pub counts_bright: f64,
    /// Relative count reduction for m_S = +-1 population.
    pub contrast: f64,
    pub shots: u64,
    pub seed: u64,
}

impl SignalModel {
    pub fn validate(&self) -> Result<()> {
        if !self.contrast.is_finite() || self.contrast <= 0.0 || self.contrast >= 1.0 {
            return Err(Error::InvalidParameter {
                name: "contrast",
                reason: format!("must be in (0, 1), got {}", self.contrast),
            });
        }
        if !self.counts_bright.is_finite() || self.counts_bright <= 0.0 || self.shots == 0 {
            return Err(Error::InvalidParameter {
                name: "signal",
                reason: "counts_bright must be positive and shots nonzero".into(),
            });
        }
        Ok(())
    }

    /// Mean total counts for a channel measuring P0 = `p0`:
    /// `shots * counts_bright * (p0 + (1 - p0)(1 - contrast))`.
    pub fn mean_counts(&self, p0: f64) -> f64 {
        self.shots as f64 * self.counts_bright * (p0 + (1.0 - p0) * (1.0 - self.contrast))
    }

    /// Inverse of the mean map: normalized P0 from measured counts.
    pub fn normalize(&self, counts: f64) -> f64 {
        let bright = self.shots as f64 * self.counts_bright;
        (counts / bright - (1.0 - self.contrast)) / self.contrast
    }

    /// One-sigma Poisson uncertainty of the normalized P0 at this level.
    pub fn population_sigma(&self, p0: f64) -> f64 {
        let bright = self.shots as f64 * self.counts_bright;
        self.mean_counts(p0).sqrt() / (bright * self.contrast)
    }
}

/// Counts per readout channel, Poisson-sampled deterministically from the
/// model seed.
#[derive(Debug, Clone)]
pub struct CountsTable {
    pub counts: Vec<[u64; 3]>,
}

/// Draw Poisson counts for a table of readout triples. Channel values are the
/// measured P0 of that channel's run.
pub fn synthesize_counts(pops: &[[f64; 3]], sm: &SignalModel) -> Result<CountsTable> {
    sm.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sm.seed);
    let counts = pops
        .iter()
        .map(|row| {
            let mut out = [0u64; 3];
            for (slot, &p) in out.iter_mut().zip(row) {
                let mean = sm.mean_counts(p.clamp(0.0, 1.0));
                let dist = rand_distr::Poisson::new(mean.max(1e-12)).expect("positive mean");
                *slot = dist.sample(&mut rng) as u64;
            }
            out
        })
        .collect();
    Ok(CountsTable { counts })
}
