//! Static model of the 15NV ground-state spin: Hamiltonian construction,
//! level energies, transition frequencies and environmental shifts.
//!
//! Unit convention: all external values are ordinary frequencies in MHz and
//! fields in Gauss; the angular-frequency factor 2*pi enters exactly once, in
//! the Hamiltonian constructors, which return matrices in rad/µs.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::spin::{spin1_operators, spin_half_operators, tensor, NuclearProj, Operator};

/// Physical constants and environment of a single 15NV center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NVParams {
    /// Zero-field splitting D, MHz.
    pub d_mhz: f64,
    /// Electron gyromagnetic ratio, MHz/G (28.0 GHz/T).
    pub gamma_e_mhz_per_g: f64,
    /// Nuclear gyromagnetic ratio, MHz/G (4.32 MHz/T).
    pub gamma_n_mhz_per_g: f64,
    /// 15N hyperfine constant A, MHz.
    pub a_mhz: f64,
    /// Static axial field B_z, Gauss. Nuclear polarization into m_I = +1/2
    /// relies on operating near the excited-state level anticrossing
    /// (about 514 G); the 381 G default sits close enough for strong
    /// polarization.
    pub b_z_gauss: f64,
    /// Temperature coefficient of D, MHz/K. Signed so that a positive
    /// temperature offset shifts both transitions upward.
    pub dd_dt_mhz_per_k: f64,
    /// Magnet distance coefficient of B_z, G/µm.
    pub dbz_dz_g_per_um: f64,
}

impl Default for NVParams {
    fn default() -> Self {
        NVParams {
            d_mhz: 2870.0,
            gamma_e_mhz_per_g: 2.8025,
            gamma_n_mhz_per_g: 4.32e-4,
            a_mhz: 3.03,
            b_z_gauss: 381.0,
            dd_dt_mhz_per_k: 0.1,
            dbz_dz_g_per_um: 0.1,
        }
    }
}

impl NVParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_mhz", self.d_mhz),
            ("gamma_e_mhz_per_g", self.gamma_e_mhz_per_g),
            ("gamma_n_mhz_per_g", self.gamma_n_mhz_per_g),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be strictly positive, got {v}"),
                });
            }
        }
        // A = 0 is allowed: it decouples the nucleus, which some checks rely on.
        for (name, v) in [("a_mhz", self.a_mhz), ("b_z_gauss", self.b_z_gauss)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be >= 0, got {v}"),
                });
            }
        }
        for (name, v) in [
            ("dd_dt_mhz_per_k", self.dd_dt_mhz_per_k),
            ("dbz_dz_g_per_um", self.dbz_dz_g_per_um),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter { name, reason: "must be finite".into() });
            }
        }
        Ok(())
    }
}

/// Static offsets of the environment from its nominal operating point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvironmentShift {
    /// Temperature offset, K.
    pub dt_k: f64,
    /// Magnet-NV distance offset, µm.
    pub dz_um: f64,
}

impl EnvironmentShift {
    pub fn validate(&self) -> Result<()> {
        if !self.dt_k.is_finite() || !self.dz_um.is_finite() {
            return Err(Error::InvalidParameter {
                name: "environment",
                reason: "offsets must be finite".into(),
            });
        }
        Ok(())
    }
}

/// The two one-photon transition frequencies for a fixed nuclear projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionSet {
    /// |0> <-> |-1| transition, MHz.
    pub omega_minus_mhz: f64,
    /// |0> <-> |+1| transition, MHz.
    pub omega_plus_mhz: f64,
    /// Nuclear projection the frequencies refer to.
    pub m_i: NuclearProj,
}

fn effective_d(p: &NVParams, env: &EnvironmentShift) -> f64 {
    p.d_mhz + p.dd_dt_mhz_per_k * env.dt_k
}

fn effective_bz(p: &NVParams, env: &EnvironmentShift) -> f64 {
    p.b_z_gauss + p.dbz_dz_g_per_um * env.dz_um
}

/// Full six-dimensional ground-state Hamiltonian
/// `2*pi * (D' Sz^2 x Id + ge B' Sz x Id + gn B' Id x Iz + A Sz x Iz)` in rad/µs.
///
/// Diagonal in the product basis since only z-operators appear.
pub fn build_static_hamiltonian(p: &NVParams, env: &EnvironmentShift) -> Result<Operator> {
    p.validate()?;
    env.validate()?;
    let d = effective_d(p, env);
    let bz = effective_bz(p, env);

    let (_, _, sz) = spin1_operators();
    let (_, iz) = spin_half_operators();
    let id2 = Operator::identity(2);
    let id3 = Operator::identity(3);

    let sz2 = &sz * &sz;
    let h = &(&(&tensor(&sz2, &id2).scale(d) + &tensor(&sz, &id2).scale(p.gamma_e_mhz_per_g * bz))
        + &tensor(&id3, &iz).scale(p.gamma_n_mhz_per_g * bz))
        + &tensor(&sz, &iz).scale(p.a_mhz);
    Ok(h.scale(TAU))
}

/// Level energy E(m_S, m_I) in MHz read off the analytic diagonal of the
/// Hamiltonian.
fn level_energy_mhz(p: &NVParams, env: &EnvironmentShift, m_s: f64, m_i: f64) -> f64 {
    let d = effective_d(p, env);
    let bz = effective_bz(p, env);
    d * m_s * m_s + p.gamma_e_mhz_per_g * bz * m_s + p.gamma_n_mhz_per_g * bz * m_i + p.a_mhz * m_s * m_i
}

/// Transition frequencies for the given nuclear projection, in ordinary MHz:
/// `omega_minus = E(-1, m_I) - E(0, m_I)`, `omega_plus = E(+1, m_I) - E(0, m_I)`.
pub fn transition_frequencies(p: &NVParams, env: &EnvironmentShift, m_i: NuclearProj) -> Result<TransitionSet> {
    let h = build_static_hamiltonian(p, env)?;
    let diag_mhz: Vec<f64> = (0..6).map(|k| h.matrix()[(k, k)].re / TAU).collect();
    let n = m_i.index();
    Ok(TransitionSet {
        omega_minus_mhz: diag_mhz[n] - diag_mhz[2 + n],
        omega_plus_mhz: diag_mhz[4 + n] - diag_mhz[2 + n],
        m_i,
    })
}

/// Three-dimensional electron-only Hamiltonian at fixed m_I, in rad/µs.
///
/// The nuclear Zeeman and hyperfine terms are folded into the diagonal, so
/// this is exactly the corresponding m_I block of the six-dimensional model.
pub fn electron_only_hamiltonian(p: &NVParams, env: &EnvironmentShift, m_i: NuclearProj) -> Result<Operator> {
    p.validate()?;
    env.validate()?;
    let mi = m_i.value();
    let mut m = crate::spin::CMat::zeros(3, 3);
    for (k, ms) in [-1.0, 0.0, 1.0].into_iter().enumerate() {
        m[(k, k)] = num_complex::Complex64::new(TAU * level_energy_mhz(p, env, ms, mi), 0.0);
    }
    Ok(Operator::from_matrix(m))
}
