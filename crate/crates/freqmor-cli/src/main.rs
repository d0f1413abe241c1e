//! Command-line pipeline for certified frequency-domain model reduction.

mod config;
mod pipeline;

use clap::{Parser, Subcommand};
use config::RunConfig;
use freqmor::error::{Error, Result};
use freqmor::io::{fmt_f64, CsvWriter};
use freqmor::param::ParameterPoint;
use freqmor::realify::project_time_domain;
use freqmor::verify::{
    bode_error, check_output_bound, dense_sigma_oracle, simulate, LtiSystem, Rom,
};
use pipeline::{
    load_basis_complex, load_basis_real, obtain_stability, run_pipeline, BandLimitedInput, Stage,
};
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "freqmor", version, about = "Certified frequency-domain model reduction")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Path to the run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for grid sweeps (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Seed override for test-input generation.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full offline pipeline (stability, greedy, realify, verify).
    Reduce {
        #[command(flatten)]
        common: Common,
        /// Stop after this stage: model|stability|greedy|realify|verify.
        #[arg(long)]
        stage: Option<String>,
    },
    /// Train (or refresh) only the stability model.
    ScmTrain {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a stored reduced model on the configured grid.
    Bode {
        #[command(flatten)]
        common: Common,
    },
    /// Time-domain check: simulate full and reduced systems with a seeded
    /// band-limited input and report the output-error bound.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Simulation horizon (default: derived from the input pulse).
        #[arg(long)]
        t_end: Option<f64>,
        /// Time step (default: t_end / 4000).
        #[arg(long)]
        dt: Option<f64>,
        /// Number of seeded inputs.
        #[arg(long, default_value_t = 1)]
        inputs: usize,
    },
    /// Dense stability-factor oracle sweep plus truth-error sweep when a
    /// basis artifact exists.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Maximum number of grid points checked.
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
}

fn setup(common: &Common) -> Result<(RunConfig, PathBuf)> {
    if let Some(t) = common.threads {
        // grid sweeps use rayon; dense kernels follow the BLAS thread pool
        std::env::set_var("OPENBLAS_NUM_THREADS", t.to_string());
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .ok();
    }
    let mut cfg = RunConfig::from_path(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.output.seed = seed;
    }
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    Ok((cfg, out))
}

fn cmd_scm_train(common: &Common) -> Result<()> {
    let (cfg, out) = setup(common)?;
    run_pipeline(&cfg, &out, Some(Stage::Stability))?;
    println!(
        "stability model written to {}",
        out.join("scm_model.bin").display()
    );
    Ok(())
}

fn cmd_reduce(common: &Common, stage: &Option<String>) -> Result<()> {
    let (cfg, out) = setup(common)?;
    let stop = match stage {
        Some(s) => Some(s.parse::<Stage>()?),
        None => None,
    };
    let arts = run_pipeline(&cfg, &out, stop)?;
    println!("model {} (n = {})", arts.model.name, arts.model.n);
    if let Some(trace) = &arts.trace {
        println!(
            "greedy finished with r0 = {} (status {:?}, max estimator {:.3e})",
            arts.basis.as_ref().map_or(0, |b| b.dim()),
            trace.status,
            trace.final_max_estimator
        );
    }
    if let Some(rom) = &arts.rom {
        println!("real reduced dimension r = {}", rom.dim());
    }
    if let Some(bode) = &arts.bode {
        println!("max Bode relative error {:.3e}", bode.max_rel_err());
    }
    println!("artifacts in {}", arts.out.display());
    Ok(())
}

fn cmd_bode(common: &Common) -> Result<()> {
    let (cfg, out) = setup(common)?;
    let model = Arc::new(cfg.build_model()?);
    let basis = load_basis_real(&out, cfg.realify.tau)?;
    let rom = project_time_domain(&model, &basis)?;
    let grid = cfg.greedy_grid()?;
    let bode = bode_error(&model, &Rom::Real(&rom), &grid)?;
    let path = out.join("bode_grid.csv");
    let d = model.parameter_dim();
    let mut header = vec!["omega".to_string()];
    for i in 0..d {
        header.push(format!("p{i}"));
    }
    header.extend([
        "abs_h".into(),
        "abs_h_rom".into(),
        "rel_err".into(),
        "absolute_flag".into(),
    ]);
    let refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut w = CsvWriter::create(&path, &refs)?;
    for (i, pt) in bode.grid.points().iter().enumerate() {
        let mut row = vec![fmt_f64(pt.omega)];
        row.extend(pt.p.iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(bode.h_full[i].norm()));
        row.push(fmt_f64(bode.h_reduced[i].norm()));
        row.push(fmt_f64(bode.rel_err[i]));
        row.push((bode.absolute_flag[i] as u8).to_string());
        w.row(&row)?;
    }
    w.finish()?;
    println!(
        "bode grid written to {} (max rel err {:.3e})",
        path.display(),
        bode.max_rel_err()
    );
    Ok(())
}

fn seeded_parameter(model: &freqmor::fom::ParametricLti, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xC0FFEE);
    model
        .param_box
        .iter()
        .map(|[lo, hi]| lo + (hi - lo) * rng.gen::<f64>())
        .collect()
}

fn cmd_simulate(common: &Common, t_end: Option<f64>, dt: Option<f64>, inputs: usize) -> Result<()> {
    let (cfg, out) = setup(common)?;
    let model = Arc::new(cfg.build_model()?);
    if model.name == "fractional_heat" {
        return Err(Error::Invalid(
            "time simulation is not defined for the fractional model".into(),
        ));
    }
    let basis = load_basis_real(&out, cfg.realify.tau)?;
    let rom = project_time_domain(&model, &basis)?;
    let rb = load_basis_complex(&out, model.clone())?;
    let mut notes = Vec::new();
    let stability = obtain_stability(&cfg, &out, &model, &mut notes)?;
    let grid = cfg.greedy_grid()?;

    let omega_lo = cfg.frequency.min.max(0.1);
    let omega_hi = (cfg.frequency.max).min(5.0).max(omega_lo * 2.0);
    for k in 0..inputs {
        let seed = cfg.output.seed.wrapping_add(k as u64);
        let input = BandLimitedInput::seeded(seed, omega_lo, omega_hi, 5);
        let horizon = t_end.unwrap_or_else(|| input.suggested_t_end());
        let step = dt.unwrap_or(horizon / 4000.0);
        let p = seeded_parameter(&model, seed);
        let u = |t: f64| input.eval(t);
        let report =
            check_output_bound(&model, &rom, &rb, &stability, &grid, &p, &u, horizon, step)?;
        println!(
            "input {k}: |y - y~|_L2 = {:.6e}, eps_greedy*|c||u| = {:.6e}, eps_real*|c||u| = {:.6e}",
            report.lhs, report.rhs_greedy, report.rhs_real_basis
        );
        // trajectory file
        let pt = ParameterPoint::new(0.0, p.clone());
        let full = LtiSystem::from_full(&model, &pt)?;
        let red = LtiSystem::from_reduced(&rom, &pt)?;
        let sf = simulate(&full, &u, horizon, step)?;
        let sr = simulate(&red, &u, horizon, step)?;
        let path = out.join(format!("sim_{k}.csv"));
        let mut w = CsvWriter::create(&path, &["t", "u", "y", "y_rom"])?;
        for i in 0..sf.times.len() {
            w.row(&[
                fmt_f64(sf.times[i]),
                fmt_f64(u(sf.times[i])),
                fmt_f64(sf.y[i]),
                fmt_f64(sr.y[i]),
            ])?;
        }
        w.finish()?;
        let report_path = out.join(format!("bound_report_{k}.json"));
        let json = serde_json::json!({
            "parameter": p,
            "lhs_l2_error": report.lhs,
            "epsilon_greedy": report.epsilon_greedy,
            "epsilon_real_basis": report.epsilon_real_basis,
            "rhs_greedy": report.rhs_greedy,
            "rhs_real_basis": report.rhs_real_basis,
            "u_norm": report.u_norm,
            "c_norm": report.c_norm,
            "t_end": horizon,
            "dt": step,
        });
        std::fs::write(&report_path, serde_json::to_string_pretty(&json).unwrap())?;
    }
    Ok(())
}

fn cmd_oracle(common: &Common, samples: usize) -> Result<()> {
    let (cfg, out) = setup(common)?;
    std::fs::create_dir_all(&out)?;
    let model = Arc::new(cfg.build_model()?);
    if model.n > 2000 {
        return Err(Error::Invalid(format!(
            "dense oracle capped at n = 2000; model has n = {}",
            model.n
        )));
    }
    let mut notes = Vec::new();
    let stability = obtain_stability(&cfg, &out, &model, &mut notes)?;
    let grid = cfg.stability_grid()?;
    let stride = (grid.len().div_ceil(samples)).max(1);
    let indices: Vec<usize> = (0..grid.len()).step_by(stride).collect();

    let d = model.parameter_dim();
    let mut header = vec!["omega".to_string()];
    for i in 0..d {
        header.push(format!("p{i}"));
    }
    header.extend([
        "lower".into(),
        "upper".into(),
        "sigma_oracle".into(),
        "sandwich_ok".into(),
        "delta_estimator".into(),
        "true_error".into(),
    ]);
    let refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let path = out.join("oracle_grid.csv");
    let mut w = CsvWriter::create(&path, &refs)?;

    // optional truth errors against a stored basis
    let rb = load_basis_complex(&out, model.clone()).ok();
    let mut violations = 0usize;
    for &i in &indices {
        let pt = &grid.points()[i];
        let lb = stability.query(pt)?;
        let ub = stability.upper(pt)?;
        let m = model.m.evaluate(pt)?;
        let sigma = dense_sigma_oracle(&m)?;
        let ok = lb <= sigma * (1.0 + 1e-8) && ub >= sigma * (1.0 - 1e-8);
        if !ok {
            violations += 1;
        }
        let mut row = vec![fmt_f64(pt.omega)];
        row.extend(pt.p.iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(lb));
        row.push(fmt_f64(ub));
        row.push(fmt_f64(sigma));
        row.push((ok as u8).to_string());
        if let Some(rb) = &rb {
            let delta = rb.estimator_with_sigma(pt, lb.max(f64::MIN_POSITIVE))?;
            let w_red = rb.reduced_solve(pt)?;
            let lifted = rb.reconstruct(&w_red);
            let wfull = model.solve_frequency(pt)?.w;
            let err: f64 = wfull
                .iter()
                .zip(&lifted)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            row.push(fmt_f64(delta));
            row.push(fmt_f64(err));
        } else {
            row.push(String::new());
            row.push(String::new());
        }
        w.row(&row)?;
    }
    w.finish()?;
    println!(
        "oracle sweep over {} points: {} sandwich violations ({})",
        indices.len(),
        violations,
        path.display()
    );
    if violations > 0 {
        return Err(Error::Invalid(format!(
            "{violations} sandwich violations detected"
        )));
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Reduce { common, stage } => cmd_reduce(common, stage),
        Cmd::ScmTrain { common } => cmd_scm_train(common),
        Cmd::Bode { common } => cmd_bode(common),
        Cmd::Simulate {
            common,
            t_end,
            dt,
            inputs,
        } => cmd_simulate(common, *t_end, *dt, *inputs),
        Cmd::Oracle { common, samples } => cmd_oracle(common, *samples),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
