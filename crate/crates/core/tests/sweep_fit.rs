//! Grid sweeps and the simultaneous three-state fit: determinism, cell
//! independence, failure isolation, robustness metrics and synthetic
//! recovery.

use approx::assert_abs_diff_eq;
use nvraman::fit::{standard_free_params, FitModelParams};
use nvraman::*;

fn srt_protocol(delta: f64, tau: f64) -> Protocol {
    Protocol::default_with(RamanParams {
        scheme: Scheme::Srt { delta_mhz: delta, tau_us: tau },
        delta_minus_mhz: 0.0,
        delta_plus_mhz: 0.0,
        omega_minus_mhz: 2.0,
        omega_plus_mhz: 2.0,
        phase_rad: 0.0,
    })
}

fn stirap_protocol() -> Protocol {
    Protocol::default_with(RamanParams {
        scheme: Scheme::Stirap { sigma_us: 0.85, lambda_us: 1.2 },
        delta_minus_mhz: 0.0,
        delta_plus_mhz: 0.0,
        omega_minus_mhz: 2.0,
        omega_plus_mhz: 2.0,
        phase_rad: 0.0,
    })
}

#[test]
fn detuning_map_center_cell_matches_single_run() {
    let spec = SweepSpec {
        protocol: stirap_protocol(),
        kind: SweepKind::DetuningMap {
            delta_minus_mhz: GridAxis::new(-0.4, 0.4, 3),
            delta_plus_mhz: GridAxis::new(-0.4, 0.4, 3),
        },
        audit: false,
        seed: 0,
    };
    let grid = run_sweep(&spec).unwrap();
    let center = grid.cell(1, 1);
    let single = stirap_protocol().run().unwrap();
    for k in 0..3 {
        assert_abs_diff_eq!(center[k], single[k], epsilon = 1e-9);
    }
}

#[test]
fn sweep_deterministic_and_cells_independent() {
    let spec = SweepSpec {
        protocol: srt_protocol(5.0, 1.25),
        kind: SweepKind::DetuningMap {
            delta_minus_mhz: GridAxis::new(-0.2, 0.2, 3),
            delta_plus_mhz: GridAxis::new(-0.2, 0.2, 2),
        },
        audit: false,
        seed: 0,
    };
    let a = run_sweep(&spec).unwrap();
    let b = run_sweep(&spec).unwrap();
    for (x, y) in a.cells.iter().zip(&b.cells) {
        assert_eq!(x, y, "grid rerun must be bit-identical");
    }

    // recompute cell (2, 1) in isolation
    let lone = SweepSpec {
        protocol: srt_protocol(5.0, 1.25),
        kind: SweepKind::DetuningMap {
            delta_minus_mhz: GridAxis::new(0.2, 0.2, 1),
            delta_plus_mhz: GridAxis::new(0.2, 0.2, 1),
        },
        audit: false,
        seed: 0,
    };
    let c = run_sweep(&lone).unwrap();
    assert_eq!(a.cell(2, 1), c.cell(0, 0), "cell recomputed in isolation must match");
}

#[test]
fn failed_cells_become_nan_without_aborting() {
    // sigma = 0 is rejected by drive synthesis; that cell must come back NaN
    // while the rest of the grid completes
    let spec = SweepSpec {
        protocol: stirap_protocol(),
        kind: SweepKind::StirapMap {
            lambda_us: GridAxis::new(0.5, 1.5, 2),
            sigma_us: GridAxis::new(0.0, 0.8, 2),
        },
        audit: false,
        seed: 0,
    };
    let grid = run_sweep(&spec).unwrap();
    assert!(grid.cell(0, 0)[0].is_nan());
    assert!(grid.cell(1, 0)[0].is_nan());
    assert!(grid.cell(0, 1)[0].is_finite());
    assert!(grid.cell(1, 1)[0].is_finite());
    assert_eq!(grid.failures.len(), 2);
}

#[test]
fn sweep_streams_cells_in_order() {
    let spec = SweepSpec {
        protocol: srt_protocol(5.0, 0.6),
        kind: SweepKind::TauScan { tau_us: GridAxis::new(0.0, 0.6, 7) },
        audit: false,
        seed: 0,
    };
    let mut seen = Vec::new();
    run_sweep_with(&spec, |cell| {
        seen.push(cell.index);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, (0..7).collect::<Vec<_>>());
}

#[test]
fn tau_scan_sweep_matches_protocol_scan() {
    let spec = SweepSpec {
        protocol: srt_protocol(5.0, 1.0),
        kind: SweepKind::TauScan { tau_us: GridAxis::new(0.25, 1.0, 4) },
        audit: false,
        seed: 0,
    };
    let grid = run_sweep(&spec).unwrap();
    let table = srt_protocol(5.0, 1.0).scan(&[0.25, 0.5, 0.75, 1.0]).unwrap();
    for (cell, pops) in grid.cells.iter().zip(&table.pops) {
        for k in 0..3 {
            // independent propagations of the same dynamics
            assert!((cell[k] - pops[k]).abs() < 1e-7);
        }
    }
}

#[test]
fn robust_area_thresholds() {
    let g = GridResult {
        x_name: "x".into(),
        x: vec![0.0, 1.0],
        y_name: Some("y".into()),
        y: vec![0.0, 1.0],
        cells: vec![[0.0, 0.0, 0.95], [0.0, 0.0, 0.5], [f64::NAN, f64::NAN, f64::NAN], [0.0, 0.0, 0.85]],
        failures: vec![(2, "boom".into())],
        audit: None,
    };
    // thresholds outside (0,1) are still meaningful: everything / nothing
    assert_abs_diff_eq!(robust_area(&g, SpinProj::PlusOne, 0.0).unwrap(), 1.0);
    assert_abs_diff_eq!(robust_area(&g, SpinProj::PlusOne, 1.0 + 1e-9).unwrap(), 0.0);
    assert_abs_diff_eq!(robust_area(&g, SpinProj::PlusOne, 0.8).unwrap(), 2.0 / 3.0);

    let all_nan = GridResult {
        x_name: "x".into(),
        x: vec![0.0],
        y_name: None,
        y: vec![],
        cells: vec![[f64::NAN; 3]],
        failures: vec![(0, "boom".into())],
        audit: None,
    };
    assert!(robust_area(&all_nan, SpinProj::PlusOne, 0.5).is_err());
}

#[test]
fn connected_region_flood_fill() {
    // 3x3 grid with an L-shaped region above 0.9 plus a detached corner
    let v = |p: f64| [0.0, 0.0, p];
    let g = GridResult {
        x_name: "x".into(),
        x: vec![0.0, 1.0, 2.0],
        y_name: Some("y".into()),
        y: vec![0.0, 1.0, 2.0],
        cells: vec![
            v(0.95), v(0.95), v(0.2),
            v(0.95), v(0.2), v(0.2),
            v(0.2), v(0.2), v(0.95),
        ],
        failures: vec![],
        audit: None,
    };
    assert_eq!(connected_region_size(&g, SpinProj::PlusOne, 0.9, 0, 0), 3);
    assert_eq!(connected_region_size(&g, SpinProj::PlusOne, 0.9, 2, 2), 1);
    assert_eq!(connected_region_size(&g, SpinProj::PlusOne, 0.9, 1, 1), 0);
}

#[test]
fn stirap_map_small_plateau_contains_paper_point() {
    let spec = SweepSpec {
        protocol: stirap_protocol(),
        kind: SweepKind::StirapMap {
            lambda_us: GridAxis::new(0.9, 1.5, 3),
            sigma_us: GridAxis::new(0.65, 1.05, 3),
        },
        audit: false,
        seed: 0,
    };
    let grid = run_sweep(&spec).unwrap();
    // (1.2, 0.85) is the center cell
    assert!(grid.cell(1, 1)[2] >= 0.9, "asterisk cell P(+1) = {}", grid.cell(1, 1)[2]);
}

#[test]
fn fluctuation_curve_temperature_keeps_inversion() {
    // dT = 10 K shifts both resonances by +1 MHz; the inversion slows but
    // still completes
    let spec = SweepSpec {
        protocol: srt_protocol(5.0, 1.25),
        kind: SweepKind::FluctuationCurve {
            kind: FluctuationKind::Temperature,
            offsets: vec![0.0, 10.0],
            tau_us: GridAxis::new(0.0, 3.5, 36),
        },
        audit: false,
        seed: 0,
    };
    let grid = run_sweep(&spec).unwrap();
    for ix in 0..2 {
        let min_pm1 = (0..36).map(|iy| grid.cell(ix, iy)[0]).fold(f64::INFINITY, f64::min);
        assert!(min_pm1 < 0.1, "offset index {ix}: min P(-1) = {min_pm1}");
    }
    // the shifted curve has a different inversion time
    let tau_min = |ix: usize| {
        (0..36)
            .min_by(|&a, &b| grid.cell(ix, a)[0].partial_cmp(&grid.cell(ix, b)[0]).unwrap())
            .unwrap()
    };
    assert_ne!(tau_min(0), tau_min(1));
}

#[test]
fn srt_common_mode_dominates_differential_detuning() {
    // temperature-like (common-mode) shifts hurt the SRT transfer less than
    // field-drift-like (differential) shifts of the same size
    let spec = SweepSpec {
        protocol: srt_protocol(5.0, 1.25),
        kind: SweepKind::DetuningMap {
            delta_minus_mhz: GridAxis::new(-0.3, 0.3, 7),
            delta_plus_mhz: GridAxis::new(-0.3, 0.3, 7),
        },
        audit: false,
        seed: 0,
    };
    let grid = run_sweep(&spec).unwrap();
    for k in 0..7 {
        if k == 3 {
            continue; // center cell is on both diagonals
        }
        let common = grid.cell(k, k)[2];
        let differential = grid.cell(k, 6 - k)[2];
        assert!(
            common > differential,
            "|delta| = {}: common {common:.4} vs differential {differential:.4}",
            grid.x[k].abs()
        );
    }
}

#[test]
fn audit_runs_on_rwa_2d_maps() {
    let spec = SweepSpec {
        protocol: srt_protocol(5.0, 1.25),
        kind: SweepKind::DetuningMap {
            delta_minus_mhz: GridAxis::new(-0.3, 0.3, 3),
            delta_plus_mhz: GridAxis::new(-0.3, 0.3, 3),
        },
        audit: true,
        seed: 0,
    };
    let grid = run_sweep(&spec).unwrap();
    let audit = grid.audit.expect("audit requested");
    assert!(audit.passed, "audit deviations: {:?}", audit.deviations);
    assert!(audit.max_deviation < 0.03);
    assert_eq!(audit.cell_indices.len(), 5);
}

#[test]
fn grid_csv_layout() {
    let spec = SweepSpec {
        protocol: srt_protocol(5.0, 1.0),
        kind: SweepKind::DetuningMap {
            delta_minus_mhz: GridAxis::new(-0.1, 0.1, 2),
            delta_plus_mhz: GridAxis::new(-0.1, 0.1, 2),
        },
        audit: false,
        seed: 0,
    };
    let grid = run_sweep(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("map.csv");
    grid.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "delta_minus_mhz,delta_plus_mhz,P_m1,P_0,P_p1");
    assert_eq!(lines.count(), 4);
    assert!(text.contains("-0.1,-0.1,"));
}

// ---- fit ----

fn fit_problem(truth: FitModelParams, data: FitData) -> FitProblem {
    FitProblem {
        nv: NVParams::default(),
        env: EnvironmentShift::default(),
        m_i: NuclearProj::Up,
        delta_mhz: 5.0,
        fixed: truth,
        free: vec![],
        data,
        frame: Frame::Rwa,
        integrator: IntegratorConfig::default(),
    }
}

fn synthetic_data(truth: &FitModelParams, noise: Option<&SignalModel>, n: usize) -> FitData {
    let tau: Vec<f64> = (1..=n).map(|k| k as f64 * 5.0 / n as f64).collect();
    let mut problem = fit_problem(*truth, FitData::default());
    problem.free = standard_free_params(truth);
    // simulate at the truth by evaluating the model through the public path
    let mut p = Protocol::default_with(RamanParams {
        scheme: Scheme::Srt { delta_mhz: 5.0, tau_us: 5.0 },
        delta_minus_mhz: truth.delta_minus_mhz,
        delta_plus_mhz: truth.delta_plus_mhz,
        omega_minus_mhz: truth.omega_minus_mhz,
        omega_plus_mhz: truth.omega_plus_mhz,
        phase_rad: 0.0,
    });
    p.channels = vec![CollapseChannel::Dephasing { rate_mhz: truth.gamma_phi_mhz }];
    let table = p.scan(&tau).unwrap();
    let mut data = FitData::default();
    for (state_idx, series) in
        [&mut data.minus, &mut data.zero, &mut data.plus].into_iter().enumerate()
    {
        series.tau_us = tau.clone();
        match noise {
            None => {
                series.value = table.pops.iter().map(|r| r[state_idx]).collect();
            }
            Some(sm) => {
                let mut sm = *sm;
                sm.seed = sm.seed.wrapping_add(state_idx as u64);
                let channel: Vec<[f64; 3]> =
                    table.pops.iter().map(|r| [r[state_idx]; 3]).collect();
                let counts = synthesize_counts(&channel, &sm).unwrap();
                series.value =
                    counts.counts.iter().map(|c| sm.normalize(c[0] as f64)).collect();
                series.sigma =
                    table.pops.iter().map(|r| sm.population_sigma(r[state_idx])).collect();
            }
        }
    }
    data
}

#[test]
fn fit_rejects_no_free_parameters() {
    let truth = FitModelParams {
        omega_minus_mhz: 2.0,
        omega_plus_mhz: 2.0,
        delta_minus_mhz: 0.0,
        delta_plus_mhz: 0.0,
        gamma_phi_mhz: 0.0,
    };
    let data = synthetic_data(&truth, None, 10);
    let problem = fit_problem(truth, data);
    assert!(matches!(fit_simultaneous(&problem, &FitOptions::default()), Err(Error::NoFreeParameters)));
}

#[test]
fn fit_noise_free_objective_at_truth_beats_random_draws() {
    let truth = FitModelParams {
        omega_minus_mhz: 2.0,
        omega_plus_mhz: 2.0,
        delta_minus_mhz: 0.2,
        delta_plus_mhz: -0.1,
        gamma_phi_mhz: 0.05,
    };
    let data = synthetic_data(&truth, None, 40);
    let mut problem = fit_problem(truth, data);
    problem.free = standard_free_params(&truth);

    // objective at the truth: zero up to integrator noise
    let opts = FitOptions {
        search: NelderMeadOptions { max_evals: 1, restarts: 1, ..Default::default() },
    };
    let at_truth = fit_simultaneous(&problem, &opts).unwrap().initial_objective;
    assert!(at_truth < 1e-10, "objective at truth = {at_truth}");

    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let draw = FitModelParams {
            omega_minus_mhz: rng.random_range(1.0..3.0),
            omega_plus_mhz: rng.random_range(1.0..3.0),
            delta_minus_mhz: rng.random_range(-0.5..0.5),
            delta_plus_mhz: rng.random_range(-0.5..0.5),
            gamma_phi_mhz: rng.random_range(0.0..0.3),
        };
        let mut p2 = problem.clone();
        p2.fixed = draw;
        let obj = fit_simultaneous(&p2, &opts).unwrap().initial_objective;
        assert!(obj >= at_truth, "random draw beat the truth: {obj} < {at_truth}");
    }
}

#[test]
fn fit_recovers_noise_free_truth_from_nominal_start() {
    let truth = FitModelParams {
        omega_minus_mhz: 2.1,
        omega_plus_mhz: 1.95,
        delta_minus_mhz: 0.15,
        delta_plus_mhz: -0.08,
        gamma_phi_mhz: 0.04,
    };
    let data = synthetic_data(&truth, None, 40);
    let nominal = FitModelParams {
        omega_minus_mhz: 2.0,
        omega_plus_mhz: 2.0,
        delta_minus_mhz: 0.0,
        delta_plus_mhz: 0.0,
        gamma_phi_mhz: 0.0,
    };
    let mut problem = fit_problem(nominal, data);
    problem.free = standard_free_params(&nominal);
    let opts = FitOptions {
        search: NelderMeadOptions { max_evals: 2000, restarts: 3, seed: 11, ..Default::default() },
    };
    let result = fit_simultaneous(&problem, &opts).unwrap();
    assert!(result.objective <= result.initial_objective);
    assert!((result.params.delta_minus_mhz - truth.delta_minus_mhz).abs() < 0.03);
    assert!((result.params.delta_plus_mhz - truth.delta_plus_mhz).abs() < 0.03);
    assert!((result.params.omega_minus_mhz - truth.omega_minus_mhz).abs() < 0.05);
    assert!((result.params.omega_plus_mhz - truth.omega_plus_mhz).abs() < 0.05);
}

#[test]
fn fit_result_serializes() {
    let truth = FitModelParams {
        omega_minus_mhz: 2.0,
        omega_plus_mhz: 2.0,
        delta_minus_mhz: 0.1,
        delta_plus_mhz: 0.0,
        gamma_phi_mhz: 0.02,
    };
    let data = synthetic_data(&truth, None, 12);
    let mut problem = fit_problem(truth, data);
    problem.free = standard_free_params(&truth);
    let opts = FitOptions {
        search: NelderMeadOptions { max_evals: 60, restarts: 1, ..Default::default() },
    };
    let result = fit_simultaneous(&problem, &opts).unwrap();
    let json = result.to_json();
    assert!(json.contains("\"objective\""));
    assert!(json.contains("omega_minus_mhz"));
}
