//! Command-line front end: declarative experiment configs, subcommands for
//! each experiment family, deterministic data outputs with provenance
//! manifests.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical/runtime failure.

mod config;
mod manifest;
mod svg;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use config::Config;
use manifest::{load_config, RunManifest};
use nvraman::fit::standard_free_params;
use nvraman::{
    calibrated_conversion, fit_simultaneous, robust_area, run_sweep_with, sample_waveform,
    sweep_axes, transition_frequencies, FitData, FitModelParams, FitOptions, FitProblem,
    NelderMeadOptions, NuclearProj, SpinProj, StateSeries,
};

/// Environment variable override prefix; `NVRAMAN_JOBS`, `NVRAMAN_SEED`,
/// `NVRAMAN_FRAME` and `NVRAMAN_OUT` override config values, command-line
/// flags override both.
const ENV_PREFIX: &str = "NVRAMAN_";

#[derive(Parser)]
#[command(
    name = "nvraman",
    version,
    about = "Microwave Raman (SRT) and STIRAP dynamics in the 15NV ground state",
    after_help = "Environment overrides: NVRAMAN_JOBS, NVRAMAN_SEED, NVRAMAN_FRAME, NVRAMAN_OUT \
                  (precedence: flags > environment > config file)."
)]
struct Cli {
    /// Path to a TOML config or a previous run's JSON manifest.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides run.out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Parallel sweep workers (0 = all cores; overrides run.jobs).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Propagation frame (overrides run.frame).
    #[arg(long, global = true, value_enum)]
    frame: Option<FrameArg>,

    /// RNG seed (overrides run.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FrameArg {
    Rwa,
    Lab,
}

#[derive(Clone, Copy, ValueEnum)]
enum MapKindArg {
    TauScan,
    StirapMap,
    DetuningMap,
    FluctuationCurve,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Srt,
    Stirap,
}

#[derive(Subcommand)]
enum Command {
    /// Print the six ground-state levels and the four transition frequencies.
    Levels,
    /// Run the configured sequence once and export the time-resolved
    /// populations over the Raman window.
    Run {
        /// Also render a line plot of the populations.
        #[arg(long)]
        svg: bool,
    },
    /// Raman pulse-length scan of the configured sequence.
    Scan {
        /// Also render a line plot of the populations.
        #[arg(long)]
        svg: bool,
    },
    /// 2D maps and fluctuation curves over protocol parameters.
    Map {
        /// Override sweep.kind.
        #[arg(long, value_enum)]
        kind: Option<MapKindArg>,
        /// Override drive.scheme.
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        /// Also render a P(+1) heat map (2D sweeps only).
        #[arg(long)]
        svg: bool,
    },
    /// Fit the SRT model to measured or synthesized three-state data.
    Fit {
        /// Scan CSV to fit (overrides fit.data).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Sample the configured drive and export it for waveform playback.
    Waveform,
    /// Calibrate field amplitudes for the configured Rabi frequencies.
    Calibrate,
}

enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            CliError::Config(e) | CliError::Runtime(e) => e,
        }
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Config(e.into())
}

fn runtime_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error());
            ExitCode::from(e.exit_code())
        }
    }
}

fn env_var(name: &str) -> Option<String> {
    std::env::var(format!("{ENV_PREFIX}{name}")).ok()
}

fn resolve_config(cli: &Cli) -> Result<Config, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| config_err(anyhow!("--config is required (TOML file or run manifest)")))?;
    let mut cfg = load_config(path).map_err(config_err)?;

    if let Some(jobs) = env_var("JOBS") {
        cfg.run.jobs = jobs.parse().map_err(|e| config_err(anyhow!("NVRAMAN_JOBS: {e}")))?;
    }
    if let Some(seed) = env_var("SEED") {
        cfg.run.seed = seed.parse().map_err(|e| config_err(anyhow!("NVRAMAN_SEED: {e}")))?;
    }
    if let Some(frame) = env_var("FRAME") {
        cfg.run.frame = frame;
    }
    if let Some(out) = env_var("OUT") {
        cfg.run.out_dir = out;
    }

    if let Some(jobs) = cli.jobs {
        cfg.run.jobs = jobs;
    }
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(frame) = cli.frame {
        cfg.run.frame = match frame {
            FrameArg::Rwa => "rwa".into(),
            FrameArg::Lab => "lab".into(),
        };
    }
    if let Some(out) = &cli.out {
        cfg.run.out_dir = out.to_string_lossy().into_owned();
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn out_dir(cfg: &Config) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(&cfg.run.out_dir);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))
        .map_err(runtime_err)?;
    Ok(dir)
}

fn init_thread_pool(cfg: &Config) {
    if cfg.run.jobs > 0 {
        // ignore the error if a pool already exists (tests call in-process)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.run.jobs).build_global();
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut cfg = resolve_config(&cli)?;
    match cli.command {
        Command::Levels => cmd_levels(&cfg),
        Command::Run { svg } => cmd_run(&cfg, svg),
        Command::Scan { svg } => cmd_scan(&cfg, svg),
        Command::Map { kind, scheme, svg } => {
            if let Some(kind) = kind {
                cfg.sweep.kind = match kind {
                    MapKindArg::TauScan => "tau_scan".into(),
                    MapKindArg::StirapMap => "stirap_map".into(),
                    MapKindArg::DetuningMap => "detuning_map".into(),
                    MapKindArg::FluctuationCurve => "fluctuation_curve".into(),
                };
            }
            if let Some(scheme) = scheme {
                cfg.drive.scheme = match scheme {
                    SchemeArg::Srt => "srt".into(),
                    SchemeArg::Stirap => "stirap".into(),
                };
            }
            cfg.validate().map_err(config_err)?;
            cmd_map(&cfg, svg)
        }
        Command::Fit { data } => {
            if let Some(data) = data {
                cfg.fit.data = data.to_string_lossy().into_owned();
            }
            cmd_fit(&cfg)
        }
        Command::Waveform => cmd_waveform(&cfg),
        Command::Calibrate => cmd_calibrate(&cfg),
    }
}

fn cmd_levels(cfg: &Config) -> Result<(), CliError> {
    let start = Instant::now();
    let p = cfg.nv_params();
    let env = cfg.environment_shift();
    let h = nvraman::build_static_hamiltonian(&p, &env).map_err(runtime_err)?;

    println!("# ground-state levels (MHz)");
    println!("{:>5} {:>6} {:>14}", "m_S", "m_I", "energy_mhz");
    let labels = [("-1", "+1/2"), ("-1", "-1/2"), ("0", "+1/2"), ("0", "-1/2"), ("+1", "+1/2"), ("+1", "-1/2")];
    let mut level_rows = Vec::new();
    for (k, (ms, mi)) in labels.iter().enumerate() {
        let e = h.matrix()[(k, k)].re / std::f64::consts::TAU;
        println!("{ms:>5} {mi:>6} {e:>14.6}");
        level_rows.push(format!("{ms},{mi},{e}"));
    }

    println!("\n# transition frequencies (MHz)");
    println!("{:>6} {:>16} {:>16}", "m_I", "omega_minus_mhz", "omega_plus_mhz");
    let mut transition_rows = Vec::new();
    for m_i in NuclearProj::ALL {
        let ts = transition_frequencies(&p, &env, m_i).map_err(runtime_err)?;
        let mi = if m_i == NuclearProj::Up { "+1/2" } else { "-1/2" };
        println!("{:>6} {:>16.6} {:>16.6}", mi, ts.omega_minus_mhz, ts.omega_plus_mhz);
        transition_rows.push(format!("{mi},{},{}", ts.omega_minus_mhz, ts.omega_plus_mhz));
    }

    let dir = out_dir(cfg)?;
    let levels_path = dir.join("levels.csv");
    let transitions_path = dir.join("transitions.csv");
    write_text(
        &levels_path,
        &format!("m_s,m_i,energy_mhz\n{}\n", level_rows.join("\n")),
    )?;
    write_text(
        &transitions_path,
        &format!("m_i,omega_minus_mhz,omega_plus_mhz\n{}\n", transition_rows.join("\n")),
    )?;
    let mut manifest = RunManifest::new("levels", cfg, &["levels.csv".into(), "transitions.csv".into()]);
    manifest.wall_time_s = Some(start.elapsed().as_secs_f64());
    manifest.write(&dir.join("levels.manifest.json")).map_err(runtime_err)?;
    Ok(())
}

fn cmd_run(cfg: &Config, svg: bool) -> Result<(), CliError> {
    let start = Instant::now();
    let protocol = cfg.protocol().map_err(config_err)?;
    let drive = protocol.raman_drive().map_err(runtime_err)?;
    let t_end = drive.support_end();
    let n = cfg.run.trajectory_points;
    let grid: Vec<f64> = (0..n).map(|k| k as f64 * t_end / (n - 1) as f64).collect();
    let mut table = protocol.scan(&grid).map_err(runtime_err)?;
    if cfg.signal.enabled {
        table = table.with_counts(&cfg.signal_model()).map_err(runtime_err)?;
    }

    let dir = out_dir(cfg)?;
    let path = dir.join("trajectory.csv");
    table.write_csv(&path).map_err(runtime_err)?;
    let mut outputs = vec!["trajectory.csv".to_string()];
    if svg {
        write_text(&dir.join("trajectory.svg"), &svg::render_scan("t_us", &table.tau_us, &table.pops))?;
        outputs.push("trajectory.svg".into());
    }
    let mut manifest = RunManifest::new("run", cfg, &outputs);
    manifest.wall_time_s = Some(start.elapsed().as_secs_f64());
    manifest.write(&dir.join("run.manifest.json")).map_err(runtime_err)?;

    let last = table.pops.last().expect("non-empty trajectory");
    println!(
        "run: {} points over {:.4} µs; final P(-1)={:.6} P(0)={:.6} P(+1)={:.6} -> {}",
        table.tau_us.len(),
        t_end,
        last[0],
        last[1],
        last[2],
        path.display()
    );
    Ok(())
}

fn cmd_scan(cfg: &Config, svg: bool) -> Result<(), CliError> {
    let start = Instant::now();
    let mut protocol = cfg.protocol().map_err(config_err)?;
    let grid = cfg.tau_grid();
    // the scan clips the drive at each tau; a rectangular drive must span
    // the whole window for that to be meaningful
    if let nvraman::Scheme::Srt { delta_mhz, tau_us } = protocol.raman.scheme {
        let end = grid.last().copied().unwrap_or(tau_us);
        protocol.raman.scheme = nvraman::Scheme::Srt { delta_mhz, tau_us: tau_us.max(end) };
    }
    let mut table = protocol.scan(&grid).map_err(runtime_err)?;
    if cfg.signal.enabled {
        table = table.with_counts(&cfg.signal_model()).map_err(runtime_err)?;
    }

    let dir = out_dir(cfg)?;
    let path = dir.join("scan.csv");
    table.write_csv(&path).map_err(runtime_err)?;
    let mut outputs = vec!["scan.csv".to_string()];
    if svg {
        write_text(&dir.join("scan.svg"), &svg::render_scan("tau_us", &table.tau_us, &table.pops))?;
        outputs.push("scan.svg".into());
    }
    let mut manifest = RunManifest::new("scan", cfg, &outputs);
    manifest.wall_time_s = Some(start.elapsed().as_secs_f64());
    manifest.write(&dir.join("scan.manifest.json")).map_err(runtime_err)?;
    println!("scan: {} points -> {}", table.tau_us.len(), path.display());
    Ok(())
}

fn cmd_map(cfg: &Config, svg: bool) -> Result<(), CliError> {
    let start = Instant::now();
    init_thread_pool(cfg);
    let spec = cfg.sweep_spec().map_err(config_err)?;
    let dir = out_dir(cfg)?;
    let path = dir.join("map.csv");
    let manifest_path = dir.join("map.manifest.json");

    // manifest first, so an interrupted run leaves no orphan data file
    let mut manifest = RunManifest::new("map", cfg, &["map.csv".into()]);
    manifest.write(&manifest_path).map_err(runtime_err)?;

    let (x_name, x, y_name, y) = sweep_axes(&spec).map_err(runtime_err)?;
    let header = match &y_name {
        Some(yn) => format!("{x_name},{yn},P_m1,P_0,P_p1"),
        None => format!("{x_name},P_m1,P_0,P_p1"),
    };
    let file = std::fs::File::create(&path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(runtime_err)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{header}").map_err(runtime_err)?;

    let ny = y.len().max(1);
    let grid = run_sweep_with(&spec, |cell| {
        let (ix, iy) = (cell.index / ny, cell.index % ny);
        match y_name {
            Some(_) => writeln!(
                w,
                "{},{},{},{},{}",
                x[ix], y[iy], cell.pops[0], cell.pops[1], cell.pops[2]
            )?,
            None => writeln!(w, "{},{},{},{}", x[ix], cell.pops[0], cell.pops[1], cell.pops[2])?,
        }
        // keep the on-disk prefix valid if the process is interrupted
        w.flush()?;
        Ok(())
    })
    .map_err(runtime_err)?;
    drop(w);

    if svg && grid.is_2d() {
        write_text(
            &dir.join("map.svg"),
            &svg::render_heatmap(
                &grid.x_name,
                grid.y_name.as_deref().unwrap_or(""),
                &grid.x,
                &grid.y,
                &grid.cells,
                nvraman::SpinProj::PlusOne.index(),
            ),
        )?;
        manifest.outputs.push("map.svg".into());
    }

    manifest.wall_time_s = Some(start.elapsed().as_secs_f64());
    manifest.diagnostics =
        grid.failures.iter().map(|(idx, msg)| format!("cell {idx}: {msg}")).collect();
    manifest.audit = grid.audit.clone();
    manifest.write(&manifest_path).map_err(runtime_err)?;

    let area = robust_area(&grid, SpinProj::PlusOne, 0.8).unwrap_or(f64::NAN);
    print!(
        "map: {} cells ({} failed), robust_area(P_+1, 0.8) = {:.4}",
        grid.n_cells(),
        grid.failures.len(),
        area
    );
    match &grid.audit {
        Some(a) => println!(
            ", lab audit max dev {:.4} ({})",
            a.max_deviation,
            if a.passed { "ok" } else { "FAILED" }
        ),
        None => println!(),
    }
    if grid.audit.as_ref().is_some_and(|a| !a.passed) {
        return Err(runtime_err(anyhow!("lab-frame audit outside tolerance")));
    }
    Ok(())
}

fn parse_fit_csv(path: &Path) -> anyhow::Result<FitData> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading fit data {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty data file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    let with_sigma = match cols.as_slice() {
        ["tau_us", "P_m1", "P_0", "P_p1"] => false,
        ["tau_us", "P_m1", "P_0", "P_p1", "sigma_m1", "sigma_0", "sigma_p1"] => true,
        _ => bail!("unsupported fit data header: {header}"),
    };
    let mut data = FitData::default();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("line {} of {}", lineno + 2, path.display()))?;
        let expected = if with_sigma { 7 } else { 4 };
        if fields.len() != expected {
            bail!("line {}: expected {expected} fields, got {}", lineno + 2, fields.len());
        }
        for (k, series) in [&mut data.minus, &mut data.zero, &mut data.plus].into_iter().enumerate()
        {
            series.tau_us.push(fields[0]);
            series.value.push(fields[1 + k]);
            if with_sigma {
                series.sigma.push(fields[4 + k]);
            }
        }
    }
    Ok(data)
}

fn synthesize_fit_data(cfg: &Config) -> Result<FitData, CliError> {
    let mut protocol = cfg.protocol().map_err(config_err)?;
    // the fit model drives the whole window; extend the drive to match
    if let nvraman::Scheme::Srt { delta_mhz, .. } = protocol.raman.scheme {
        protocol.raman.scheme =
            nvraman::Scheme::Srt { delta_mhz, tau_us: cfg.fit.tau_max_us };
    }
    let n = cfg.fit.n_tau.max(2);
    let tau: Vec<f64> =
        (1..=n).map(|k| k as f64 * cfg.fit.tau_max_us / n as f64).collect();
    let table = protocol.scan(&tau).map_err(runtime_err)?;
    let sm = cfg.signal_model();
    let mut data = FitData::default();
    for (si, series) in [&mut data.minus, &mut data.zero, &mut data.plus].into_iter().enumerate() {
        let mut smc = sm;
        smc.seed = sm.seed.wrapping_add(si as u64);
        let channel: Vec<[f64; 3]> = table.pops.iter().map(|r| [r[si]; 3]).collect();
        let counts = nvraman::synthesize_counts(&channel, &smc).map_err(runtime_err)?;
        *series = StateSeries {
            tau_us: tau.clone(),
            value: counts.counts.iter().map(|c| smc.normalize(c[0] as f64)).collect(),
            sigma: table.pops.iter().map(|r| smc.population_sigma(r[si])).collect(),
        };
    }
    Ok(data)
}

fn cmd_fit(cfg: &Config) -> Result<(), CliError> {
    let start = Instant::now();
    let (data, mode) = if cfg.fit.data.is_empty() {
        (synthesize_fit_data(cfg)?, "synthetic")
    } else {
        (parse_fit_csv(Path::new(&cfg.fit.data)).map_err(config_err)?, "file")
    };

    let f = &cfg.fit;
    let init = FitModelParams {
        omega_minus_mhz: f.omega_minus_init_mhz,
        omega_plus_mhz: f.omega_plus_init_mhz,
        delta_minus_mhz: f.delta_minus_init_mhz,
        delta_plus_mhz: f.delta_plus_init_mhz,
        gamma_phi_mhz: f.gamma_phi_init_mhz,
    };
    let mut free = standard_free_params(&init);
    for fp in &mut free {
        let (lo, hi) = match fp.param {
            nvraman::FitParam::OmegaMinusMhz | nvraman::FitParam::OmegaPlusMhz => {
                (f.omega_lo_mhz, f.omega_hi_mhz)
            }
            nvraman::FitParam::DeltaMinusMhz | nvraman::FitParam::DeltaPlusMhz => {
                (f.delta_lo_mhz, f.delta_hi_mhz)
            }
            nvraman::FitParam::GammaPhiMhz => (f.gamma_phi_lo_mhz, f.gamma_phi_hi_mhz),
        };
        fp.lo = lo;
        fp.hi = hi;
    }
    free.retain(|fp| f.free.iter().any(|name| name == fp.param.name()));
    if free.is_empty() {
        return Err(config_err(anyhow!("fit.free selects no valid parameters")));
    }

    let delta_mhz = match cfg.scheme().map_err(config_err)? {
        nvraman::Scheme::Srt { delta_mhz, .. } => delta_mhz,
        nvraman::Scheme::Stirap { .. } => {
            return Err(config_err(anyhow!("fit supports the srt scheme only")))
        }
    };
    let problem = FitProblem {
        nv: cfg.nv_params(),
        env: cfg.environment_shift(),
        m_i: match cfg.nuclear().map_err(config_err)? {
            nvraman::NuclearInit::Polarized(m) => m,
            nvraman::NuclearInit::Unpolarized => {
                return Err(config_err(anyhow!("fit requires a polarized nuclear state")))
            }
        },
        delta_mhz,
        fixed: init,
        free,
        data,
        frame: cfg.frame().map_err(config_err)?,
        integrator: cfg.integrator(),
    };
    let options = FitOptions {
        search: NelderMeadOptions {
            max_evals: f.max_evals,
            restarts: f.restarts,
            seed: cfg.run.seed,
            ..Default::default()
        },
    };
    let result = fit_simultaneous(&problem, &options).map_err(runtime_err)?;

    let dir = out_dir(cfg)?;
    let path = dir.join("fit.json");
    write_text(&path, &result.to_json())?;
    let mut manifest = RunManifest::new("fit", cfg, &["fit.json".into()]);
    manifest.wall_time_s = Some(start.elapsed().as_secs_f64());
    manifest.diagnostics = vec![format!("data source: {mode}")];
    manifest.write(&dir.join("fit.manifest.json")).map_err(runtime_err)?;

    println!(
        "fit ({mode}): objective {:.4} -> {:.4} in {} evaluations, converged = {}",
        result.initial_objective, result.objective, result.evaluations, result.converged
    );
    for (name, value) in &result.free_values {
        println!("  {name} = {value:.6}");
    }
    println!("-> {}", path.display());
    Ok(())
}

fn cmd_waveform(cfg: &Config) -> Result<(), CliError> {
    let start = Instant::now();
    let protocol = cfg.protocol().map_err(config_err)?;
    let drive = protocol.raman_drive().map_err(runtime_err)?;
    let t_end = if cfg.waveform.t_end_us > 0.0 { cfg.waveform.t_end_us } else { drive.support_end() };
    let wave = sample_waveform(&drive, cfg.waveform.sample_rate_gsps, t_end).map_err(runtime_err)?;

    let dir = out_dir(cfg)?;
    let (file_name, path) = match cfg.waveform.format.as_str() {
        "csv" => ("waveform.csv", dir.join("waveform.csv")),
        _ => ("waveform.f32", dir.join("waveform.f32")),
    };
    match cfg.waveform.format.as_str() {
        "csv" => wave.write_csv(&path).map_err(runtime_err)?,
        _ => wave.write_raw_f32(&path).map_err(runtime_err)?,
    }
    let mut manifest = RunManifest::new("waveform", cfg, &[file_name.into()]);
    manifest.wall_time_s = Some(start.elapsed().as_secs_f64());
    manifest.write(&dir.join("waveform.manifest.json")).map_err(runtime_err)?;
    println!(
        "waveform: {} samples at {} GSa/s over {:.4} µs -> {}",
        wave.samples.len(),
        wave.sample_rate_gsps,
        t_end,
        path.display()
    );
    Ok(())
}

fn cmd_calibrate(cfg: &Config) -> Result<(), CliError> {
    let start = Instant::now();
    let conv = calibrated_conversion(
        &cfg.nv_params(),
        &cfg.environment_shift(),
        cfg.drive.omega_minus_mhz,
        cfg.drive.omega_plus_mhz,
        &cfg.integrator(),
    )
    .map_err(runtime_err)?;

    let payload = serde_json::json!({
        "omega_minus_mhz": cfg.drive.omega_minus_mhz,
        "omega_plus_mhz": cfg.drive.omega_plus_mhz,
        "b_minus_gauss": conv.minus_g_per_mhz * cfg.drive.omega_minus_mhz,
        "b_plus_gauss": conv.plus_g_per_mhz * cfg.drive.omega_plus_mhz,
        "conversion_minus_g_per_mhz": conv.minus_g_per_mhz,
        "conversion_plus_g_per_mhz": conv.plus_g_per_mhz,
    });
    let dir = out_dir(cfg)?;
    let path = dir.join("calibration.json");
    write_text(&path, &serde_json::to_string_pretty(&payload).expect("serializable"))?;
    let mut manifest = RunManifest::new("calibrate", cfg, &["calibration.json".into()]);
    manifest.wall_time_s = Some(start.elapsed().as_secs_f64());
    manifest.write(&dir.join("calibrate.manifest.json")).map_err(runtime_err)?;
    println!(
        "calibrate: B_minus = {:.6} G, B_plus = {:.6} G -> {}",
        conv.minus_g_per_mhz * cfg.drive.omega_minus_mhz,
        conv.plus_g_per_mhz * cfg.drive.omega_plus_mhz,
        path.display()
    );
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime_err)
}
