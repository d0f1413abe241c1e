//! Pipeline orchestration: model -> stability -> greedy -> realify -> verify,
//! with every stage output persisted as a file artifact.

use crate::config::RunConfig;
use freqmor::error::{Error, Result};
use freqmor::fom::ParametricLti;
use freqmor::greedy::{run_greedy, GreedyOptions, GreedyTrace, ReducedBasis};
use freqmor::io::{
    fmt_f64, read_mm_complex, read_mm_real, write_mm_complex, write_mm_real, CsvWriter,
};
use freqmor::param::ParameterGrid;
use freqmor::realify::{columns_to_matrix, project_time_domain, realify, RealBasis, ReducedLti};
use freqmor::stability::{nnscm_train, scm_train, NnscmOptions, ScmOptions, StabilityModel};
use freqmor::verify::{bode_error, BodeGrid, Rom};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Model,
    Stability,
    Greedy,
    Realify,
    Verify,
}

impl std::str::FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(Self::Model),
            "stability" => Ok(Self::Stability),
            "greedy" => Ok(Self::Greedy),
            "realify" => Ok(Self::Realify),
            "verify" => Ok(Self::Verify),
            other => Err(Error::Invalid(format!(
                "unknown stage '{other}' (model|stability|greedy|realify|verify)"
            ))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: RunConfig,
    pub model_name: String,
    pub state_dim: usize,
    pub output_scale: f64,
    pub stages: Vec<(String, f64)>,
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
}

impl Manifest {
    fn new(cfg: &RunConfig, model: &ParametricLti) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            model_name: model.name.clone(),
            state_dim: model.n,
            output_scale: model.output_scale,
            stages: Vec::new(),
            artifacts: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn write(&self, out: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Serialization(e.to_string()))?;
        std::fs::write(out.join("manifest.json"), text)?;
        Ok(())
    }
}

pub struct PipelineArtifacts {
    pub out: PathBuf,
    pub model: Arc<ParametricLti>,
    pub stability: Option<StabilityModel>,
    pub basis: Option<ReducedBasis>,
    pub trace: Option<GreedyTrace>,
    pub rom: Option<ReducedLti>,
    pub bode: Option<BodeGrid>,
}

const ORACLE_COLUMN_MAX_DIM: usize = 2000;
const ORACLE_COLUMN_MAX_POINTS: usize = 200;

fn point_header(d: usize) -> Vec<String> {
    let mut h = vec!["omega".to_string()];
    for i in 0..d {
        h.push(format!("p{i}"));
    }
    h
}

fn write_stability_csv(
    path: &Path,
    grid: &ParameterGrid,
    stability: &StabilityModel,
    model: &ParametricLti,
) -> Result<()> {
    let d = model.parameter_dim();
    let mut header: Vec<String> = point_header(d);
    header.extend(["lower".into(), "upper".into(), "oracle".into()]);
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut w = CsvWriter::create(path, &header_refs)?;
    let with_oracle =
        model.n <= ORACLE_COLUMN_MAX_DIM && grid.len() <= ORACLE_COLUMN_MAX_POINTS;
    for pt in grid.points() {
        let mut row: Vec<String> = vec![fmt_f64(pt.omega)];
        row.extend(pt.p.iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(stability.query(pt)?));
        row.push(fmt_f64(stability.upper(pt)?));
        if with_oracle {
            let m = stability.matrix().evaluate(pt)?;
            row.push(fmt_f64(freqmor::verify::dense_sigma_oracle(&m)?));
        } else {
            row.push(String::new());
        }
        w.row(&row)?;
    }
    w.finish()
}

fn write_trace_csv(path: &Path, trace: &GreedyTrace, scale: f64, d: usize) -> Result<()> {
    let mut header = vec!["iteration".to_string()];
    header.extend(point_header(d));
    header.extend([
        "max_estimator".into(),
        "max_estimator_scaled".into(),
        "max_true_error".into(),
        "max_true_error_scaled".into(),
    ]);
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut w = CsvWriter::create(path, &header_refs)?;
    for rec in &trace.records {
        let mut row = vec![rec.iteration.to_string(), fmt_f64(rec.point.omega)];
        row.extend(rec.point.p.iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(rec.max_estimator));
        row.push(fmt_f64(rec.max_estimator * scale));
        match rec.max_true_error {
            Some(e) => {
                row.push(fmt_f64(e));
                row.push(fmt_f64(e * scale));
            }
            None => {
                row.push(String::new());
                row.push(String::new());
            }
        }
        w.row(&row)?;
    }
    w.finish()
}

fn write_bode_csv(path: &Path, bode: &BodeGrid, d: usize) -> Result<()> {
    let mut header = point_header(d);
    header.extend([
        "abs_h".into(),
        "abs_h_rom".into(),
        "rel_err".into(),
        "absolute_flag".into(),
    ]);
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut w = CsvWriter::create(path, &header_refs)?;
    for (i, pt) in bode.grid.points().iter().enumerate() {
        let mut row: Vec<String> = vec![fmt_f64(pt.omega)];
        row.extend(pt.p.iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(bode.h_full[i].norm()));
        row.push(fmt_f64(bode.h_reduced[i].norm()));
        row.push(fmt_f64(bode.rel_err[i]));
        row.push((bode.absolute_flag[i] as u8).to_string());
        w.row(&row)?;
    }
    w.finish()
}

/// Writes the reduced system as Matrix Market terms plus a JSON manifest of
/// coefficient identifiers.
fn write_reduced_lti(dir: &Path, rom: &ReducedLti) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    #[derive(Serialize)]
    struct RomManifest<'a> {
        model_name: &'a str,
        dim: usize,
        output_scale: f64,
        a_coefficients: Vec<&'a str>,
        b_coefficients: Vec<&'a str>,
        c_coefficients: Vec<&'a str>,
        m_coefficients: Vec<&'a str>,
        singular_values: &'a [f64],
        tau: f64,
    }
    let mani = RomManifest {
        model_name: &rom.model_name,
        dim: rom.dim(),
        output_scale: rom.output_scale,
        a_coefficients: rom.a_terms.iter().map(|(c, _)| c.id()).collect(),
        b_coefficients: rom.b_terms.iter().map(|(c, _)| c.id()).collect(),
        c_coefficients: rom.c_terms.iter().map(|(c, _)| c.id()).collect(),
        m_coefficients: rom.m_terms.iter().map(|(c, _)| c.id()).collect(),
        singular_values: &rom.basis.singular_values,
        tau: rom.basis.tau,
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&mani).map_err(|e| Error::Serialization(e.to_string()))?,
    )?;
    for (i, (_, term)) in rom.a_terms.iter().enumerate() {
        write_mm_real(&dir.join(format!("a_term_{i}.mtx")), term)?;
    }
    for (i, (_, term)) in rom.b_terms.iter().enumerate() {
        let col = Array2::from_shape_fn((term.len(), 1), |(r, _)| term[r]);
        write_mm_real(&dir.join(format!("b_term_{i}.mtx")), &col)?;
    }
    for (i, (_, term)) in rom.c_terms.iter().enumerate() {
        let col = Array2::from_shape_fn((term.len(), 1), |(r, _)| term[r]);
        write_mm_real(&dir.join(format!("c_term_{i}.mtx")), &col)?;
    }
    for (i, (_, term)) in rom.m_terms.iter().enumerate() {
        write_mm_complex(&dir.join(format!("m_term_{i}.mtx")), term)?;
    }
    Ok(())
}

pub fn missing_artifact(name: &str, producer: &str) -> Error {
    Error::Invalid(format!(
        "missing artifact '{name}'; run `freqmor {producer}` first"
    ))
}

/// Loads the complex basis artifact and reattaches the reduced machinery.
pub fn load_basis_complex(out: &Path, model: Arc<ParametricLti>) -> Result<ReducedBasis> {
    let path = out.join("basis_complex.mtx");
    if !path.exists() {
        return Err(missing_artifact("basis_complex.mtx", "reduce"));
    }
    let mat = read_mm_complex(&path)?;
    let cols: Vec<Vec<Complex64>> = (0..mat.ncols()).map(|j| mat.column(j).to_vec()).collect();
    ReducedBasis::from_columns(model, &cols)
}

/// Loads the real basis artifact.
pub fn load_basis_real(out: &Path, tau: f64) -> Result<RealBasis> {
    let path = out.join("basis_real.mtx");
    if !path.exists() {
        return Err(missing_artifact("basis_real.mtx", "reduce"));
    }
    let phi = read_mm_real(&path)?;
    let svals_path = out.join("basis_real_singular_values.mtx");
    let singular_values: Vec<f64> = if svals_path.exists() {
        read_mm_real(&svals_path)?.iter().cloned().collect()
    } else {
        vec![1.0; phi.ncols()]
    };
    let r = phi.ncols();
    Ok(RealBasis {
        phi,
        singular_values,
        r,
        tau,
    })
}

/// Trains or reloads the stability model for a config.
pub fn obtain_stability(
    cfg: &RunConfig,
    out: &Path,
    model: &ParametricLti,
    notes: &mut Vec<String>,
) -> Result<StabilityModel> {
    let matrix = Arc::new(model.m.clone());
    let path = out.join("scm_model.bin");
    if path.exists() {
        match StabilityModel::load(&path, matrix.clone()) {
            Ok(st) => {
                notes.push("stability: loaded scm_model.bin".into());
                return Ok(st);
            }
            Err(e) => notes.push(format!("stability: stale scm_model.bin ignored ({e})")),
        }
    }
    let grid = cfg.stability_grid()?;
    let st = match cfg.scm.method.as_str() {
        "scm" => scm_train(
            matrix,
            &grid,
            &ScmOptions {
                epsilon: cfg.scm.epsilon,
                m_alpha: cfg.scm.m_alpha,
            },
        )?,
        _ => nnscm_train(
            matrix,
            &grid,
            &NnscmOptions {
                epsilon: cfg.scm.epsilon,
                epsilon_beta: cfg.scm.epsilon_beta,
                m_alpha: cfg.scm.m_alpha,
                inside: cfg.scm.inside,
                phi: cfg.scm.phi,
            },
        )?,
    };
    st.save(&path)?;
    notes.push("stability: trained and saved scm_model.bin".into());
    Ok(st)
}

/// Runs the pipeline through `stop_after` (or all stages), writing artifacts
/// into the output directory. Already existing `scm_model.bin` is reused.
pub fn run_pipeline(
    cfg: &RunConfig,
    out: &Path,
    stop_after: Option<Stage>,
) -> Result<PipelineArtifacts> {
    std::fs::create_dir_all(out)?;
    let stop = stop_after.unwrap_or(Stage::Verify);
    let model = Arc::new(cfg.build_model()?);
    let mut manifest = Manifest::new(cfg, &model);
    let d = model.parameter_dim();

    let mut artifacts = PipelineArtifacts {
        out: out.to_path_buf(),
        model: model.clone(),
        stability: None,
        basis: None,
        trace: None,
        rom: None,
        bode: None,
    };

    let result = (|| -> Result<()> {
        manifest.stages.push(("model".into(), 0.0));
        if stop < Stage::Stability {
            return Ok(());
        }

        let t0 = Instant::now();
        let stability = obtain_stability(cfg, out, &model, &mut manifest.notes)?;
        let sgrid = cfg.stability_grid()?;
        write_stability_csv(&out.join("stability_grid.csv"), &sgrid, &stability, &model)?;
        manifest
            .stages
            .push(("stability".into(), t0.elapsed().as_secs_f64()));
        manifest.artifacts.push("scm_model.bin".into());
        manifest.artifacts.push("stability_grid.csv".into());
        artifacts.stability = Some(stability);
        if stop < Stage::Greedy {
            return Ok(());
        }

        let t0 = Instant::now();
        let ggrid = cfg.greedy_grid()?;
        let opts = GreedyOptions {
            max_basis: cfg.greedy.max_basis,
            tol: cfg.greedy.tol,
            track_truth: if cfg.greedy.track_truth > 0 {
                Some(cfg.greedy.track_truth)
            } else {
                None
            },
        };
        let (rb, trace) = run_greedy(
            model.clone(),
            &ggrid,
            artifacts.stability.as_ref().unwrap(),
            &opts,
        )?;
        write_trace_csv(
            &out.join("greedy_trace.csv"),
            &trace,
            model.output_scale,
            d,
        )?;
        let phi_c = columns_to_matrix(rb.columns())?;
        write_mm_complex(&out.join("basis_complex.mtx"), &phi_c)?;
        manifest
            .stages
            .push(("greedy".into(), t0.elapsed().as_secs_f64()));
        manifest.artifacts.push("greedy_trace.csv".into());
        manifest.artifacts.push("basis_complex.mtx".into());
        artifacts.basis = Some(rb);
        artifacts.trace = Some(trace);
        if stop < Stage::Realify {
            return Ok(());
        }

        let t0 = Instant::now();
        let phi_c = columns_to_matrix(artifacts.basis.as_ref().unwrap().columns())?;
        let basis = realify(&phi_c, cfg.realify.tau)?;
        write_mm_real(&out.join("basis_real.mtx"), &basis.phi)?;
        let svals = Array2::from_shape_fn((basis.singular_values.len(), 1), |(i, _)| {
            basis.singular_values[i]
        });
        write_mm_real(&out.join("basis_real_singular_values.mtx"), &svals)?;
        let rom = project_time_domain(&model, &basis)?;
        write_reduced_lti(&out.join("reduced_lti"), &rom)?;
        manifest
            .stages
            .push(("realify".into(), t0.elapsed().as_secs_f64()));
        manifest.artifacts.push("basis_real.mtx".into());
        manifest.artifacts.push("reduced_lti/".into());
        artifacts.rom = Some(rom);
        if stop < Stage::Verify {
            return Ok(());
        }

        let t0 = Instant::now();
        let ggrid = cfg.greedy_grid()?;
        let bode = bode_error(&model, &Rom::Real(artifacts.rom.as_ref().unwrap()), &ggrid)?;
        write_bode_csv(&out.join("bode_grid.csv"), &bode, d)?;
        manifest
            .stages
            .push(("verify".into(), t0.elapsed().as_secs_f64()));
        manifest.artifacts.push("bode_grid.csv".into());
        artifacts.bode = Some(bode);
        Ok(())
    })();

    match result {
        Ok(()) => {
            manifest.write(out)?;
            Ok(artifacts)
        }
        Err(e) => {
            manifest.notes.push(format!("FAILED: {e}"));
            manifest.write(out).ok();
            Err(e)
        }
    }
}

/// Seeded band-limited test input: a handful of windowed cosines with
/// frequencies inside `[omega_lo, omega_hi]`.
pub struct BandLimitedInput {
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub phases: Vec<f64>,
    pub center: f64,
    pub width: f64,
}

impl BandLimitedInput {
    pub fn seeded(seed: u64, omega_lo: f64, omega_hi: f64, tones: usize) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (llo, lhi) = (omega_lo.ln(), omega_hi.ln());
        let mut amplitudes = Vec::with_capacity(tones);
        let mut frequencies = Vec::with_capacity(tones);
        let mut phases = Vec::with_capacity(tones);
        for _ in 0..tones {
            frequencies.push((llo + (lhi - llo) * rng.gen::<f64>()).exp());
            amplitudes.push(0.5 + rng.gen::<f64>());
            phases.push(rng.gen::<f64>() * std::f64::consts::TAU);
        }
        // window wide enough that spectral leakage below omega_lo is negligible
        let width = 8.0 / omega_lo;
        let center = 4.0 * width;
        Self {
            amplitudes,
            frequencies,
            phases,
            center,
            width,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let env = (-0.5 * ((t - self.center) / self.width).powi(2)).exp();
        let mut v = 0.0;
        for ((a, w), ph) in self
            .amplitudes
            .iter()
            .zip(&self.frequencies)
            .zip(&self.phases)
        {
            v += a * (w * t + ph).cos();
        }
        v * env
    }

    /// Simulation horizon comfortably past the pulse.
    pub fn suggested_t_end(&self) -> f64 {
        self.center + 6.0 * self.width
    }
}
