//! Declarative experiment configuration: sectioned key = value TOML with
//! explicit unit suffixes in every physical key and hard rejection of
//! unknown keys. The resolved configuration serializes canonically, so a
//! manifest can be re-parsed into an identical run.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use nvraman::sweep::FluctuationKind;
use nvraman::{
    CollapseChannel, EnvironmentShift, Frame, GridAxis, InitMode, IntegratorConfig, NVParams,
    NuclearInit, NuclearProj, PiFidelity, PrepMode, Protocol, RamanParams, Scheme, SignalModel,
    SweepKind, SweepSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub nv: NvSection,
    pub environment: EnvironmentSection,
    pub drive: DriveSection,
    pub sequence: SequenceSection,
    pub decoherence: DecoherenceSection,
    pub sweep: SweepSection,
    pub signal: SignalSection,
    pub fit: FitSection,
    pub waveform: WaveformSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NvSection {
    pub d_mhz: f64,
    pub gamma_e_mhz_per_gauss: f64,
    pub gamma_n_mhz_per_gauss: f64,
    pub a_mhz: f64,
    pub b_z_gauss: f64,
    pub dd_dt_mhz_per_k: f64,
    pub dbz_dz_gauss_per_um: f64,
}

impl Default for NvSection {
    fn default() -> Self {
        let p = NVParams::default();
        NvSection {
            d_mhz: p.d_mhz,
            gamma_e_mhz_per_gauss: p.gamma_e_mhz_per_g,
            gamma_n_mhz_per_gauss: p.gamma_n_mhz_per_g,
            a_mhz: p.a_mhz,
            b_z_gauss: p.b_z_gauss,
            dd_dt_mhz_per_k: p.dd_dt_mhz_per_k,
            dbz_dz_gauss_per_um: p.dbz_dz_g_per_um,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentSection {
    pub dt_k: f64,
    pub dz_um: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveSection {
    /// "srt" or "stirap".
    pub scheme: String,
    pub delta_mhz: f64,
    pub delta_minus_mhz: f64,
    pub delta_plus_mhz: f64,
    pub omega_minus_mhz: f64,
    pub omega_plus_mhz: f64,
    pub sigma_us: f64,
    pub lambda_us: f64,
    pub tau_us: f64,
    pub phase_rad: f64,
}

impl Default for DriveSection {
    fn default() -> Self {
        DriveSection {
            scheme: "srt".into(),
            delta_mhz: 5.0,
            delta_minus_mhz: 0.0,
            delta_plus_mhz: 0.0,
            omega_minus_mhz: 2.0,
            omega_plus_mhz: 2.0,
            sigma_us: 0.85,
            lambda_us: 1.2,
            tau_us: 1.25,
            phase_rad: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceSection {
    /// "reset" or "skip".
    pub init: String,
    /// "ideal", "physical" or "skip".
    pub prepare: String,
    /// "ideal" or "physical".
    pub readout_pi: String,
    pub pi_omega_mhz: f64,
    /// "polarized_up", "polarized_down" or "unpolarized".
    pub nuclear: String,
}

impl Default for SequenceSection {
    fn default() -> Self {
        SequenceSection {
            init: "reset".into(),
            prepare: "ideal".into(),
            readout_pi: "ideal".into(),
            pi_omega_mhz: 0.5,
            nuclear: "polarized_up".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DecoherenceSection {
    pub gamma_phi_mhz: f64,
    pub gamma_1_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// "tau_scan", "stirap_map", "detuning_map" or "fluctuation_curve".
    pub kind: String,
    pub tau_start_us: f64,
    pub tau_stop_us: f64,
    pub tau_points: usize,
    pub lambda_start_us: f64,
    pub lambda_stop_us: f64,
    pub lambda_points: usize,
    pub sigma_start_us: f64,
    pub sigma_stop_us: f64,
    pub sigma_points: usize,
    pub delta_minus_start_mhz: f64,
    pub delta_minus_stop_mhz: f64,
    pub delta_minus_points: usize,
    pub delta_plus_start_mhz: f64,
    pub delta_plus_stop_mhz: f64,
    pub delta_plus_points: usize,
    /// "temperature" or "position".
    pub fluctuation: String,
    pub offsets: Vec<f64>,
    /// Lab-frame spot check of rotating-frame 2D maps.
    pub audit: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            kind: "tau_scan".into(),
            tau_start_us: 0.0,
            tau_stop_us: 3.0,
            tau_points: 61,
            lambda_start_us: 0.0,
            lambda_stop_us: 3.0,
            lambda_points: 21,
            sigma_start_us: 0.2,
            sigma_stop_us: 1.5,
            sigma_points: 21,
            delta_minus_start_mhz: -1.0,
            delta_minus_stop_mhz: 1.0,
            delta_minus_points: 21,
            delta_plus_start_mhz: -1.0,
            delta_plus_stop_mhz: 1.0,
            delta_plus_points: 21,
            fluctuation: "temperature".into(),
            offsets: vec![0.0, 5.0, 10.0],
            audit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalSection {
    pub enabled: bool,
    pub counts_bright: f64,
    pub contrast: f64,
    pub shots: u64,
}

impl Default for SignalSection {
    fn default() -> Self {
        SignalSection { enabled: false, counts_bright: 0.01, contrast: 0.3, shots: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    /// Path to a scan CSV (`tau_us,P_m1,P_0,P_p1[,sigma_m1,sigma_0,sigma_p1]`).
    /// Empty: synthesize data from the configured drive + signal model and
    /// recover it from the nominal start (self-test mode).
    pub data: String,
    pub free: Vec<String>,
    pub omega_lo_mhz: f64,
    pub omega_hi_mhz: f64,
    pub delta_lo_mhz: f64,
    pub delta_hi_mhz: f64,
    pub gamma_phi_lo_mhz: f64,
    pub gamma_phi_hi_mhz: f64,
    pub omega_minus_init_mhz: f64,
    pub omega_plus_init_mhz: f64,
    pub delta_minus_init_mhz: f64,
    pub delta_plus_init_mhz: f64,
    pub gamma_phi_init_mhz: f64,
    pub restarts: usize,
    pub max_evals: usize,
    /// Synthetic-mode tau grid.
    pub n_tau: usize,
    pub tau_max_us: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            data: String::new(),
            free: vec![
                "omega_minus_mhz".into(),
                "omega_plus_mhz".into(),
                "delta_minus_mhz".into(),
                "delta_plus_mhz".into(),
                "gamma_phi_mhz".into(),
            ],
            omega_lo_mhz: 1.0,
            omega_hi_mhz: 3.0,
            delta_lo_mhz: -0.5,
            delta_hi_mhz: 0.5,
            gamma_phi_lo_mhz: 0.0,
            gamma_phi_hi_mhz: 0.3,
            omega_minus_init_mhz: 2.0,
            omega_plus_init_mhz: 2.0,
            delta_minus_init_mhz: 0.0,
            delta_plus_init_mhz: 0.0,
            gamma_phi_init_mhz: 0.05,
            restarts: 3,
            max_evals: 2000,
            n_tau: 60,
            tau_max_us: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveformSection {
    pub sample_rate_gsps: f64,
    /// 0: sample to the end of the drive.
    pub t_end_us: f64,
    /// "csv" or "f32le".
    pub format: String,
}

impl Default for WaveformSection {
    fn default() -> Self {
        WaveformSection { sample_rate_gsps: 12.0, t_end_us: 0.0, format: "csv".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// "rwa" or "lab".
    pub frame: String,
    pub seed: u64,
    pub rtol: f64,
    pub atol: f64,
    /// 0: frame-dependent default (1/(20 f_max) lab, 0.01 µs rotating).
    pub max_step_us: f64,
    pub renormalize_trace: bool,
    /// 0: all cores.
    pub jobs: usize,
    /// Points of the time-resolved trajectory written by `run`.
    pub trajectory_points: usize,
    pub out_dir: String,
}

impl Default for RunSection {
    fn default() -> Self {
        let cfg = IntegratorConfig::default();
        RunSection {
            frame: "rwa".into(),
            seed: 1,
            rtol: cfg.rtol,
            atol: cfg.atol,
            max_step_us: 0.0,
            renormalize_trace: cfg.renormalize_trace,
            jobs: 0,
            trajectory_points: 201,
            out_dir: "out".into(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> anyhow::Result<Config> {
        let cfg: Config = toml::from_str(text).context("config parse error")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical serialization of the fully resolved configuration.
    /// Reparsing it yields an identical `Config`.
    pub fn to_canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.nv_params().validate()?;
        self.environment_shift().validate()?;
        self.frame()?;
        self.scheme()?;
        self.nuclear()?;
        self.init_mode()?;
        self.prepare_mode()?;
        self.readout_pi()?;
        self.sweep_kind()?;
        if self.signal.enabled {
            self.signal_model().validate()?;
        }
        if !(self.run.rtol > 0.0 && self.run.atol > 0.0) {
            bail!("run.rtol and run.atol must be positive");
        }
        if self.run.max_step_us < 0.0 {
            bail!("run.max_step_us must be >= 0 (0 selects the frame default)");
        }
        if self.run.trajectory_points < 2 {
            bail!("run.trajectory_points must be at least 2");
        }
        match self.waveform.format.as_str() {
            "csv" | "f32le" => {}
            other => bail!("waveform.format must be \"csv\" or \"f32le\", got {other:?}"),
        }
        Ok(())
    }

    pub fn nv_params(&self) -> NVParams {
        NVParams {
            d_mhz: self.nv.d_mhz,
            gamma_e_mhz_per_g: self.nv.gamma_e_mhz_per_gauss,
            gamma_n_mhz_per_g: self.nv.gamma_n_mhz_per_gauss,
            a_mhz: self.nv.a_mhz,
            b_z_gauss: self.nv.b_z_gauss,
            dd_dt_mhz_per_k: self.nv.dd_dt_mhz_per_k,
            dbz_dz_g_per_um: self.nv.dbz_dz_gauss_per_um,
        }
    }

    pub fn environment_shift(&self) -> EnvironmentShift {
        EnvironmentShift { dt_k: self.environment.dt_k, dz_um: self.environment.dz_um }
    }

    pub fn frame(&self) -> anyhow::Result<Frame> {
        match self.run.frame.as_str() {
            "rwa" => Ok(Frame::Rwa),
            "lab" => Ok(Frame::Lab),
            other => bail!("run.frame must be \"rwa\" or \"lab\", got {other:?}"),
        }
    }

    pub fn scheme(&self) -> anyhow::Result<Scheme> {
        match self.drive.scheme.as_str() {
            "srt" => Ok(Scheme::Srt { delta_mhz: self.drive.delta_mhz, tau_us: self.drive.tau_us }),
            "stirap" => Ok(Scheme::Stirap {
                sigma_us: self.drive.sigma_us,
                lambda_us: self.drive.lambda_us,
            }),
            other => bail!("drive.scheme must be \"srt\" or \"stirap\", got {other:?}"),
        }
    }

    pub fn nuclear(&self) -> anyhow::Result<NuclearInit> {
        match self.sequence.nuclear.as_str() {
            "polarized_up" => Ok(NuclearInit::Polarized(NuclearProj::Up)),
            "polarized_down" => Ok(NuclearInit::Polarized(NuclearProj::Down)),
            "unpolarized" => Ok(NuclearInit::Unpolarized),
            other => bail!(
                "sequence.nuclear must be \"polarized_up\", \"polarized_down\" or \"unpolarized\", got {other:?}"
            ),
        }
    }

    fn init_mode(&self) -> anyhow::Result<InitMode> {
        match self.sequence.init.as_str() {
            "reset" => Ok(InitMode::Reset),
            "skip" => Ok(InitMode::Skip),
            other => bail!("sequence.init must be \"reset\" or \"skip\", got {other:?}"),
        }
    }

    fn prepare_mode(&self) -> anyhow::Result<PrepMode> {
        match self.sequence.prepare.as_str() {
            "ideal" => Ok(PrepMode::IdealSwap),
            "physical" => Ok(PrepMode::Physical),
            "skip" => Ok(PrepMode::Skip),
            other => bail!("sequence.prepare must be \"ideal\", \"physical\" or \"skip\", got {other:?}"),
        }
    }

    fn readout_pi(&self) -> anyhow::Result<PiFidelity> {
        match self.sequence.readout_pi.as_str() {
            "ideal" => Ok(PiFidelity::Ideal),
            "physical" => Ok(PiFidelity::Physical),
            other => bail!("sequence.readout_pi must be \"ideal\" or \"physical\", got {other:?}"),
        }
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            rtol: self.run.rtol,
            atol: self.run.atol,
            max_step_us: if self.run.max_step_us > 0.0 { Some(self.run.max_step_us) } else { None },
            renormalize_trace: self.run.renormalize_trace,
        }
    }

    pub fn channels(&self) -> Vec<CollapseChannel> {
        let mut out = Vec::new();
        if self.decoherence.gamma_phi_mhz > 0.0 {
            out.push(CollapseChannel::Dephasing { rate_mhz: self.decoherence.gamma_phi_mhz });
        }
        if self.decoherence.gamma_1_mhz > 0.0 {
            out.push(CollapseChannel::Relaxation { rate_mhz: self.decoherence.gamma_1_mhz });
        }
        out
    }

    pub fn signal_model(&self) -> SignalModel {
        SignalModel {
            counts_bright: self.signal.counts_bright,
            contrast: self.signal.contrast,
            shots: self.signal.shots,
            seed: self.run.seed,
        }
    }

    pub fn raman_params(&self) -> anyhow::Result<RamanParams> {
        Ok(RamanParams {
            scheme: self.scheme()?,
            delta_minus_mhz: self.drive.delta_minus_mhz,
            delta_plus_mhz: self.drive.delta_plus_mhz,
            omega_minus_mhz: self.drive.omega_minus_mhz,
            omega_plus_mhz: self.drive.omega_plus_mhz,
            phase_rad: self.drive.phase_rad,
        })
    }

    pub fn protocol(&self) -> anyhow::Result<Protocol> {
        Ok(Protocol {
            nv: self.nv_params(),
            env: self.environment_shift(),
            nuclear: self.nuclear()?,
            frame: self.frame()?,
            channels: self.channels(),
            integrator: self.integrator(),
            raman: self.raman_params()?,
            init: self.init_mode()?,
            prepare: self.prepare_mode()?,
            readout_pi: self.readout_pi()?,
            pi_omega_mhz: self.sequence.pi_omega_mhz,
            conversion: None,
        })
    }

    pub fn sweep_kind(&self) -> anyhow::Result<SweepKind> {
        let s = &self.sweep;
        match s.kind.as_str() {
            "tau_scan" => Ok(SweepKind::TauScan {
                tau_us: GridAxis::new(s.tau_start_us, s.tau_stop_us, s.tau_points),
            }),
            "stirap_map" => Ok(SweepKind::StirapMap {
                lambda_us: GridAxis::new(s.lambda_start_us, s.lambda_stop_us, s.lambda_points),
                sigma_us: GridAxis::new(s.sigma_start_us, s.sigma_stop_us, s.sigma_points),
            }),
            "detuning_map" => Ok(SweepKind::DetuningMap {
                delta_minus_mhz: GridAxis::new(
                    s.delta_minus_start_mhz,
                    s.delta_minus_stop_mhz,
                    s.delta_minus_points,
                ),
                delta_plus_mhz: GridAxis::new(
                    s.delta_plus_start_mhz,
                    s.delta_plus_stop_mhz,
                    s.delta_plus_points,
                ),
            }),
            "fluctuation_curve" => {
                let kind = match s.fluctuation.as_str() {
                    "temperature" => FluctuationKind::Temperature,
                    "position" => FluctuationKind::Position,
                    other => bail!(
                        "sweep.fluctuation must be \"temperature\" or \"position\", got {other:?}"
                    ),
                };
                Ok(SweepKind::FluctuationCurve {
                    kind,
                    offsets: s.offsets.clone(),
                    tau_us: GridAxis::new(s.tau_start_us, s.tau_stop_us, s.tau_points),
                })
            }
            other => bail!(
                "sweep.kind must be one of \"tau_scan\", \"stirap_map\", \"detuning_map\", \"fluctuation_curve\", got {other:?}"
            ),
        }
    }

    pub fn sweep_spec(&self) -> anyhow::Result<SweepSpec> {
        Ok(SweepSpec {
            protocol: self.protocol()?,
            kind: self.sweep_kind()?,
            audit: self.sweep.audit,
            seed: self.run.seed,
        })
    }

    pub fn tau_grid(&self) -> Vec<f64> {
        GridAxis::new(self.sweep.tau_start_us, self.sweep.tau_stop_us, self.sweep.tau_points)
            .values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_roundtrip() {
        let cfg = Config::default();
        cfg.validate().unwrap();
        let text = cfg.to_canonical_toml();
        let back = Config::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = Config::from_toml("[nv]\nd_mhz = 2870.0\nbogus_key = 1.0\n").unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("bogus_key") || msg.contains("unknown field"), "{msg}");
    }

    #[test]
    fn unknown_section_rejected() {
        assert!(Config::from_toml("[nonsense]\nx = 1\n").is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = Config::from_toml("[drive]\nscheme = \"stirap\"\nomega_minus_mhz = 1.5\n").unwrap();
        assert_eq!(cfg.drive.scheme, "stirap");
        assert_eq!(cfg.drive.omega_minus_mhz, 1.5);
        assert_eq!(cfg.drive.omega_plus_mhz, 2.0);
        assert_eq!(cfg.nv.d_mhz, 2870.0);
    }

    #[test]
    fn invalid_enum_values_rejected() {
        let cfg = Config::from_toml("[run]\nframe = \"heisenberg\"\n");
        assert!(cfg.is_err());
        let cfg = Config::from_toml("[drive]\nscheme = \"rabi\"\n");
        assert!(cfg.is_err());
    }

    #[test]
    fn protocol_construction() {
        let cfg = Config::default();
        let p = cfg.protocol().unwrap();
        assert_eq!(p.frame, Frame::Rwa);
        assert!(matches!(p.raman.scheme, Scheme::Srt { .. }));
    }
}
