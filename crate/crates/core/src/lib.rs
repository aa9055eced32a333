//! Simulation of microwave stimulated Raman transitions (SRT) and stimulated
//! Raman adiabatic passage (STIRAP) in the ground state of the 15NV center:
//! spin Hamiltonian construction, drive synthesis, open-system propagation of
//! the driven dynamics in the lab and rotating frames, the full measurement
//! protocol, parameter sweeps and simultaneous three-state fitting.
//!
//! Conventions used throughout:
//! - frequencies are ordinary MHz, times µs, fields Gauss; the factor 2*pi
//!   enters once, inside Hamiltonian construction (matrices are rad/µs);
//! - the electron basis is ordered m_S = -1, 0, +1 and the nuclear basis
//!   m_I = +1/2, -1/2, product states lexicographic with m_S outer.

pub mod drive;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod fitting;
pub mod nv;
pub mod ode;
pub mod propagate;
pub mod spin;
pub mod sweep;

pub use drive::{sample_waveform, DriveSpec, Envelope, FieldConversion, Tone, Transition, Waveform};
pub use error::{Error, Result};
pub use experiment::{
    synthesize_counts, Frame, InitMode, NuclearInit, PiFidelity, PrepMode, Protocol, RamanParams,
    ReadoutChannel, ScanTable, Scheme, SignalModel,
};
pub use fit::{
    fit_simultaneous, FitData, FitModelParams, FitOptions, FitParam, FitProblem, FitResult,
    FreeParam, StateSeries,
};
pub use fitting::{fit_oscillation_frequency, nelder_mead_bounded, NelderMeadOptions};
pub use nv::{
    build_static_hamiltonian, electron_only_hamiltonian, transition_frequencies, EnvironmentShift,
    NVParams, TransitionSet,
};
pub use propagate::{
    build_rwa_hamiltonian, calibrate_amplitude, calibrated_conversion, evolve_lab_frame,
    evolve_rwa, evolve_rwa_mixture, lindblad_rhs, CollapseChannel, IntegratorConfig, LabModel,
    RwaDrive, RwaTone, Trajectory,
};
pub use spin::{
    spin1_operators, spin_half_operators, tensor, BasisLabel, DensityState, NuclearProj, Operator,
    Populations, SpinProj,
};
pub use sweep::{
    connected_region_size, robust_area, run_sweep, run_sweep_with, sweep_axes, FluctuationKind,
    FrameAudit, GridAxis, GridResult, SweepKind, SweepSpec,
};
