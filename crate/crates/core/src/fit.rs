//! Simultaneous fitting of simulated SRT dynamics to measured (or synthetic)
//! populations of all three spin states, with amplitude, detuning and
//! dephasing errors as free parameters.

use serde::{Deserialize, Serialize};

use crate::drive::Envelope;
use crate::error::{Error, Result};
use crate::experiment::Frame;
use crate::fitting::{nelder_mead_bounded, NelderMeadOptions};
use crate::nv::{transition_frequencies, EnvironmentShift, NVParams};
use crate::propagate::{
    evolve_lab_frame, evolve_rwa, CollapseChannel, IntegratorConfig, LabModel, RwaDrive, RwaTone,
};
use crate::spin::{BasisLabel, DensityState, NuclearProj, SpinProj};

/// Fit parameters of the SRT model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParam {
    OmegaMinusMhz,
    OmegaPlusMhz,
    DeltaMinusMhz,
    DeltaPlusMhz,
    GammaPhiMhz,
}

impl FitParam {
    pub const ALL: [FitParam; 5] = [
        FitParam::OmegaMinusMhz,
        FitParam::OmegaPlusMhz,
        FitParam::DeltaMinusMhz,
        FitParam::DeltaPlusMhz,
        FitParam::GammaPhiMhz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FitParam::OmegaMinusMhz => "omega_minus_mhz",
            FitParam::OmegaPlusMhz => "omega_plus_mhz",
            FitParam::DeltaMinusMhz => "delta_minus_mhz",
            FitParam::DeltaPlusMhz => "delta_plus_mhz",
            FitParam::GammaPhiMhz => "gamma_phi_mhz",
        }
    }
}

/// One free parameter with box bounds and a start value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeParam {
    pub param: FitParam,
    pub lo: f64,
    pub hi: f64,
    pub init: f64,
}

/// Measured series for one spin state. Grids may differ between states.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StateSeries {
    pub tau_us: Vec<f64>,
    pub value: Vec<f64>,
    /// One-sigma uncertainties; uniform weights when empty.
    pub sigma: Vec<f64>,
}

impl StateSeries {
    pub fn len(&self) -> usize {
        self.tau_us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau_us.is_empty()
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.value.len() != self.tau_us.len() {
            return Err(Error::InvalidGrid(format!("{name}: tau/value length mismatch")));
        }
        if !self.sigma.is_empty() && self.sigma.len() != self.tau_us.len() {
            return Err(Error::InvalidGrid(format!("{name}: sigma length mismatch")));
        }
        if self.sigma.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(Error::InvalidGrid(format!("{name}: uncertainties must be positive")));
        }
        Ok(())
    }
}

/// Data for the three states, indexed like `SpinProj`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FitData {
    pub minus: StateSeries,
    pub zero: StateSeries,
    pub plus: StateSeries,
}

impl FitData {
    pub fn series(&self, s: SpinProj) -> &StateSeries {
        match s {
            SpinProj::MinusOne => &self.minus,
            SpinProj::Zero => &self.zero,
            SpinProj::PlusOne => &self.plus,
        }
    }

    fn validate(&self) -> Result<()> {
        self.minus.validate("minus")?;
        self.zero.validate("zero")?;
        self.plus.validate("plus")?;
        if self.minus.is_empty() && self.zero.is_empty() && self.plus.is_empty() {
            return Err(Error::InvalidGrid("fit data is empty".into()));
        }
        Ok(())
    }
}

/// The fit problem: an SRT model with fixed mean detuning and environment,
/// free drive/decoherence parameters, and per-state data.
#[derive(Debug, Clone)]
pub struct FitProblem {
    pub nv: NVParams,
    pub env: EnvironmentShift,
    pub m_i: NuclearProj,
    /// Intentional SRT detuning, MHz (fixed).
    pub delta_mhz: f64,
    /// Values used for parameters that are not free.
    pub fixed: FitModelParams,
    pub free: Vec<FreeParam>,
    pub data: FitData,
    /// Frame for the model evaluations.
    pub frame: Frame,
    pub integrator: IntegratorConfig,
}

/// Full parameter vector of the SRT fit model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitModelParams {
    pub omega_minus_mhz: f64,
    pub omega_plus_mhz: f64,
    pub delta_minus_mhz: f64,
    pub delta_plus_mhz: f64,
    pub gamma_phi_mhz: f64,
}

impl FitModelParams {
    fn set(&mut self, p: FitParam, v: f64) {
        match p {
            FitParam::OmegaMinusMhz => self.omega_minus_mhz = v,
            FitParam::OmegaPlusMhz => self.omega_plus_mhz = v,
            FitParam::DeltaMinusMhz => self.delta_minus_mhz = v,
            FitParam::DeltaPlusMhz => self.delta_plus_mhz = v,
            FitParam::GammaPhiMhz => self.gamma_phi_mhz = v,
        }
    }
}

/// Fit options; see [`NelderMeadOptions`] for the search parameters.
#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    pub search: NelderMeadOptions,
}

/// Fit outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FitModelParams,
    /// `(name, value)` of the free parameters at the optimum.
    pub free_values: Vec<(String, f64)>,
    pub objective: f64,
    pub initial_objective: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective per restart.
    pub restart_bests: Vec<f64>,
    /// Box bounds of the free parameters, `(name, lo, hi)`.
    pub bounds: Vec<(String, f64, f64)>,
    /// Best objective after each simplex iteration across all searches.
    pub objective_trace: Vec<f64>,
    /// Seed used for restart jitters.
    pub seed: u64,
    /// Weighted residuals (sim - data)/sigma per state at the optimum.
    pub residuals_minus: Vec<f64>,
    pub residuals_zero: Vec<f64>,
    pub residuals_plus: Vec<f64>,
}

impl FitResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Simulate the SRT model populations at the union tau grid and map them
/// back to each state's own grid.
struct ModelEval {
    union_grid: Vec<f64>,
    /// per-state indices into the union grid
    index: [Vec<usize>; 3],
}

impl ModelEval {
    fn build(data: &FitData) -> ModelEval {
        let mut all: Vec<f64> = Vec::new();
        for s in SpinProj::ALL {
            all.extend_from_slice(&data.series(s).tau_us);
        }
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.dedup();
        if all.first().copied() != Some(0.0) {
            all.insert(0, 0.0);
        }
        let lookup = |t: f64| all.binary_search_by(|x| x.partial_cmp(&t).unwrap()).unwrap();
        let index = [
            data.minus.tau_us.iter().map(|&t| lookup(t)).collect(),
            data.zero.tau_us.iter().map(|&t| lookup(t)).collect(),
            data.plus.tau_us.iter().map(|&t| lookup(t)).collect(),
        ];
        ModelEval { union_grid: all, index }
    }
}

fn simulate_srt(
    problem: &FitProblem,
    params: &FitModelParams,
    grid: &[f64],
) -> Result<Vec<[f64; 3]>> {
    let channels = [CollapseChannel::Dephasing { rate_mhz: params.gamma_phi_mhz }];
    let rho0 = DensityState::pure(BasisLabel::electron_only(SpinProj::MinusOne));
    let t_end = grid.last().copied().unwrap_or(0.0);
    match problem.frame {
        Frame::Rwa => {
            let env_rect = Envelope::Rect { t_on_us: 0.0, t_off_us: t_end + 1.0 };
            let rwa = RwaDrive {
                minus: Some(RwaTone {
                    rabi_mhz: params.omega_minus_mhz,
                    detuning_mhz: problem.delta_mhz + params.delta_minus_mhz,
                    phase_rad: 0.0,
                    envelope: env_rect,
                }),
                plus: Some(RwaTone {
                    rabi_mhz: params.omega_plus_mhz,
                    detuning_mhz: problem.delta_mhz + params.delta_plus_mhz,
                    phase_rad: 0.0,
                    envelope: env_rect,
                }),
                clip_at_us: None,
            };
            let traj = evolve_rwa(&rwa, &rho0, &channels, grid, &problem.integrator)?;
            Ok(traj.populations.iter().map(|p| p.electron).collect())
        }
        Frame::Lab => {
            let ts = transition_frequencies(&problem.nv, &problem.env, problem.m_i)?;
            let conv = crate::drive::FieldConversion::analytic(problem.nv.gamma_e_mhz_per_g);
            let drive = crate::drive::DriveSpec::srt(
                &ts,
                conv,
                problem.delta_mhz,
                params.delta_minus_mhz,
                params.delta_plus_mhz,
                params.omega_minus_mhz,
                params.omega_plus_mhz,
                0.0,
                t_end + 1.0,
            )?;
            let traj = evolve_lab_frame(
                &problem.nv,
                &problem.env,
                LabModel::ElectronOnly(problem.m_i),
                &drive,
                &rho0,
                &channels,
                grid,
                &problem.integrator,
            )?;
            Ok(traj.populations.iter().map(|p| p.electron).collect())
        }
    }
}

/// Coarse scan of the (delta_-, delta_+) plane at the nominal remaining
/// parameters; the best three cells become additional search seeds. Applies
/// only when both detunings are free.
fn detuning_prescan(
    problem: &FitProblem,
    eval: &ModelEval,
    resolve: &impl Fn(&[f64]) -> FitModelParams,
    x0: &[f64],
    evals: &mut usize,
) -> Vec<Vec<f64>> {
    let idx_minus = problem.free.iter().position(|f| f.param == FitParam::DeltaMinusMhz);
    let idx_plus = problem.free.iter().position(|f| f.param == FitParam::DeltaPlusMhz);
    let (Some(im), Some(ip)) = (idx_minus, idx_plus) else {
        return Vec::new();
    };
    const G: usize = 7;
    let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(G * G);
    for a in 0..G {
        for b in 0..G {
            let mut x = x0.to_vec();
            let fm = &problem.free[im];
            let fp = &problem.free[ip];
            x[im] = fm.lo + (fm.hi - fm.lo) * a as f64 / (G - 1) as f64;
            x[ip] = fp.lo + (fp.hi - fp.lo) * b as f64 / (G - 1) as f64;
            let o = objective(problem, eval, &resolve(&x));
            *evals += 1;
            scored.push((o, x));
        }
    }
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    scored.into_iter().take(3).map(|(_, x)| x).collect()
}

/// Swap the roles of the two tones in a free-parameter vector (Omega_- with
/// Omega_+, delta_- with delta_+), clamped into the respective bounds. `None`
/// when neither pair is fully free.
fn mirror_seed(problem: &FitProblem, x: &[f64]) -> Option<Vec<f64>> {
    let pos = |p: FitParam| problem.free.iter().position(|f| f.param == p);
    let mut out = x.to_vec();
    let mut swapped = false;
    for (a, b) in [
        (FitParam::OmegaMinusMhz, FitParam::OmegaPlusMhz),
        (FitParam::DeltaMinusMhz, FitParam::DeltaPlusMhz),
    ] {
        if let (Some(ia), Some(ib)) = (pos(a), pos(b)) {
            out[ia] = x[ib].clamp(problem.free[ia].lo, problem.free[ia].hi);
            out[ib] = x[ia].clamp(problem.free[ib].lo, problem.free[ib].hi);
            swapped = true;
        }
    }
    swapped.then_some(out)
}

fn objective(problem: &FitProblem, eval: &ModelEval, params: &FitModelParams) -> f64 {
    let sims = match simulate_srt(problem, params, &eval.union_grid) {
        Ok(s) => s,
        Err(_) => return f64::INFINITY,
    };
    let mut chi2 = 0.0;
    for s in SpinProj::ALL {
        let series = problem.data.series(s);
        let idx = &eval.index[s.index()];
        for (k, &ui) in idx.iter().enumerate() {
            let sim = sims[ui][s.index()];
            let sigma = if series.sigma.is_empty() { 1.0 } else { series.sigma[k] };
            let r = (sim - series.value[k]) / sigma;
            chi2 += r * r;
        }
    }
    chi2
}

/// Fit the model to all three states simultaneously with a bounded
/// derivative-free search: Nelder-Mead runs from the nominal start, from the
/// best cells of a coarse detuning pre-scan, and from jittered restarts. The
/// pre-scan counters the mirror-image local minimum of the V system (swapped
/// tone roles reproduce the data almost as well as the truth). On
/// non-convergence the best point found is still returned, flagged.
pub fn fit_simultaneous(problem: &FitProblem, options: &FitOptions) -> Result<FitResult> {
    if problem.free.is_empty() {
        return Err(Error::NoFreeParameters);
    }
    problem.data.validate()?;
    for fp in &problem.free {
        if !(fp.lo.is_finite() && fp.hi.is_finite() && fp.lo < fp.hi) {
            return Err(Error::InvalidParameter {
                name: "free parameter bounds",
                reason: format!("{}: [{}, {}]", fp.param.name(), fp.lo, fp.hi),
            });
        }
    }

    let eval = ModelEval::build(&problem.data);
    let resolve = |x: &[f64]| -> FitModelParams {
        let mut p = problem.fixed;
        for (fp, &v) in problem.free.iter().zip(x) {
            p.set(fp.param, v);
        }
        p
    };

    let x0: Vec<f64> = problem.free.iter().map(|f| f.init).collect();
    let lo: Vec<f64> = problem.free.iter().map(|f| f.lo).collect();
    let hi: Vec<f64> = problem.free.iter().map(|f| f.hi).collect();

    let initial_objective = objective(problem, &eval, &resolve(&x0));
    let mut prescan_evals = 0usize;
    let extra_seeds = detuning_prescan(problem, &eval, &resolve, &x0, &mut prescan_evals);

    let mut best: Option<crate::fitting::NelderMeadResult> = None;
    let mut restart_bests = Vec::new();
    let mut objective_trace = Vec::new();
    let mut total_evals = prescan_evals;
    let mut any_converged = false;

    // run 0: jittered-restart search from the nominal start (restarts per
    // options); runs 1..: one polish from each pre-scan seed
    let mut searches: Vec<(Vec<f64>, NelderMeadOptions)> = vec![(x0.clone(), options.search)];
    for seed in extra_seeds {
        let single = NelderMeadOptions { restarts: 1, ..options.search };
        searches.push((seed, single));
    }
    for (start, opts) in searches {
        let nm = nelder_mead_bounded(
            |x| objective(problem, &eval, &resolve(x)),
            &start,
            &lo,
            &hi,
            &opts,
        );
        total_evals += nm.evaluations;
        any_converged |= nm.converged;
        restart_bests.extend(nm.restart_bests.iter().copied());
        objective_trace.extend(nm.trace.iter().copied());
        if best.as_ref().is_none_or(|b| nm.fx < b.fx) {
            best = Some(nm);
        }
    }
    // conjugate polish: the V system has a near-solution with the tone roles
    // swapped; one more search from the mirror of the current best escapes it
    if let Some(mirrored) = mirror_seed(problem, &best.as_ref().unwrap().x) {
        let single = NelderMeadOptions { restarts: 1, ..options.search };
        let nm = nelder_mead_bounded(
            |x| objective(problem, &eval, &resolve(x)),
            &mirrored,
            &lo,
            &hi,
            &single,
        );
        total_evals += nm.evaluations;
        any_converged |= nm.converged;
        restart_bests.extend(nm.restart_bests.iter().copied());
        objective_trace.extend(nm.trace.iter().copied());
        if nm.fx < best.as_ref().unwrap().fx {
            best = Some(nm);
        }
    }

    let mut nm = best.expect("at least one search ran");
    nm.evaluations = total_evals;
    nm.converged = any_converged;
    nm.restart_bests = restart_bests;
    log::info!(
        "fit: objective {initial_objective:.4} -> {:.4} in {} evaluations (seed {})",
        nm.fx,
        nm.evaluations,
        options.search.seed
    );

    let best = resolve(&nm.x);
    let sims = simulate_srt(problem, &best, &eval.union_grid)?;
    let residuals = |s: SpinProj| -> Vec<f64> {
        let series = problem.data.series(s);
        eval.index[s.index()]
            .iter()
            .enumerate()
            .map(|(k, &ui)| {
                let sigma = if series.sigma.is_empty() { 1.0 } else { series.sigma[k] };
                (sims[ui][s.index()] - series.value[k]) / sigma
            })
            .collect()
    };

    Ok(FitResult {
        params: best,
        free_values: problem
            .free
            .iter()
            .zip(&nm.x)
            .map(|(f, &v)| (f.param.name().to_string(), v))
            .collect(),
        objective: nm.fx.min(initial_objective),
        initial_objective,
        evaluations: nm.evaluations,
        converged: nm.converged,
        restart_bests: nm.restart_bests,
        bounds: problem
            .free
            .iter()
            .map(|f| (f.param.name().to_string(), f.lo, f.hi))
            .collect(),
        objective_trace,
        seed: options.search.seed,
        residuals_minus: residuals(SpinProj::MinusOne),
        residuals_zero: residuals(SpinProj::Zero),
        residuals_plus: residuals(SpinProj::PlusOne),
    })
}

/// Helper assembling the five standard free parameters with the acceptance
/// bounds used throughout: Omega in [1, 3] MHz, delta in [-0.5, 0.5] MHz,
/// gamma_phi in [0, 0.3] MHz.
pub fn standard_free_params(init: &FitModelParams) -> Vec<FreeParam> {
    vec![
        FreeParam { param: FitParam::OmegaMinusMhz, lo: 1.0, hi: 3.0, init: init.omega_minus_mhz },
        FreeParam { param: FitParam::OmegaPlusMhz, lo: 1.0, hi: 3.0, init: init.omega_plus_mhz },
        FreeParam { param: FitParam::DeltaMinusMhz, lo: -0.5, hi: 0.5, init: init.delta_minus_mhz },
        FreeParam { param: FitParam::DeltaPlusMhz, lo: -0.5, hi: 0.5, init: init.delta_plus_mhz },
        FreeParam { param: FitParam::GammaPhiMhz, lo: 0.0, hi: 0.3, init: init.gamma_phi_mhz },
    ]
}
