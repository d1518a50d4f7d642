//! Command implementations behind the CLI; every stage reads and writes the output directory.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curves::{fit_monotone_spline_with_floor, read_manifest, synth_ensemble, PermeameterTable};
use crate::fem::probe::write_field_csv;
use crate::fem::{generate_dipole_mesh, FemSpace, Materials, Mesh, SolverOptions};
use crate::inversion::{self, ForwardModel, IdentificationResult, IdentifyConfig, ObservationSet, Provenance};
use crate::kle::{build_from_curves, MaterialModel};
use crate::sensitivity::{self, RankedProbe};
use crate::{Error, Result};

pub use config::RunConfig;

pub const MODEL_FILE: &str = "model.json";
pub const SPECTRUM_FILE: &str = "spectrum.csv";
pub const MODES_FILE: &str = "modes.csv";
pub const MESH_FILE: &str = "mesh.txt";
pub const SENSITIVITY_FILE: &str = "sensitivity.csv";
pub const NOMINAL_FIELD_FILE: &str = "nominal_field.csv";
pub const PROBES_FILE: &str = "probes.json";
pub const TRAINING_FILE: &str = "training.csv";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const RESULT_FILE: &str = "identification.json";
pub const E_REL_FILE: &str = "e_rel.csv";
pub const E_ABS_FILE: &str = "e_abs.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const VALIDATION_REPORT_FILE: &str = "validation.json";

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.paths.output.join(name)
}

fn ensure_output(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.paths.output).map_err(|e| Error::io(&cfg.paths.output, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// The configured mesh file, or the generated dipole mesh.
pub fn mesh_for(cfg: &RunConfig) -> Result<Mesh> {
    match &cfg.paths.mesh {
        Some(p) => Mesh::load(p),
        None => generate_dipole_mesh(&cfg.geometry, cfg.mesh.refinement),
    }
}

pub fn forward_model(cfg: &RunConfig) -> Result<ForwardModel> {
    let space = FemSpace::new(mesh_for(cfg)?, cfg.geometry.turns)?;
    Ok(ForwardModel::new(space, cfg.solver.clone()))
}

pub fn load_model(cfg: &RunConfig) -> Result<MaterialModel> {
    MaterialModel::load(&out_path(cfg, MODEL_FILE))
}

pub fn ensemble_tables(cfg: &RunConfig) -> Result<Vec<PermeameterTable>> {
    match &cfg.paths.manifest {
        Some(m) => read_manifest(m),
        None => synth_ensemble(
            cfg.model.synthetic_seed,
            cfg.model.synthetic_specimens,
            cfg.model.synthetic_samples,
            cfg.model.b_max,
        ),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildReport {
    pub spectrum: Vec<f64>,
    pub covariance_trace: f64,
    pub model: MaterialModel,
}

/// Fits the ensemble, builds the truncated KLE model and writes model, spectrum, modes and mesh.
pub fn cmd_build_model(cfg: &RunConfig) -> Result<BuildReport> {
    ensure_output(cfg)?;
    let tables = ensemble_tables(cfg)?;
    let curves = tables
        .iter()
        .map(|t| fit_monotone_spline_with_floor(t, cfg.model.alpha))
        .collect::<Result<Vec<_>>>()?;
    let kb = build_from_curves(&curves, cfg.model.grid_size, cfg.model.truncation, cfg.model.alpha)?;
    kb.model.save(&out_path(cfg, MODEL_FILE))?;

    let mut s = String::from("index,eigenvalue,ratio_to_first\n");
    let l1 = kb.spectrum[0];
    for (i, l) in kb.spectrum.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", i + 1, l, l / l1);
    }
    write(&out_path(cfg, SPECTRUM_FILE), &s)?;

    let m = &kb.model;
    let mut s = String::from("B_T,mean_Am");
    for k in 0..m.dim() {
        let _ = write!(s, ",mode{}", k + 1);
    }
    s.push('\n');
    for (i, b) in m.grid().iter().enumerate() {
        let _ = write!(s, "{},{}", b, m.mean_curve().values()[i]);
        for mode in m.modes() {
            let _ = write!(s, ",{}", mode.values()[i]);
        }
        s.push('\n');
    }
    write(&out_path(cfg, MODES_FILE), &s)?;
    mesh_for(cfg)?.save(&out_path(cfg, MESH_FILE))?;
    Ok(BuildReport {
        spectrum: kb.spectrum,
        covariance_trace: kb.stats.covariance_trace(),
        model: kb.model,
    })
}

/// Sensitivity maps at the nominal state and the probe ranking.
pub fn cmd_sensitivity(cfg: &RunConfig) -> Result<Vec<RankedProbe>> {
    ensure_output(cfg)?;
    let model = load_model(cfg)?;
    let fwd = forward_model(cfg)?;
    let opts = SolverOptions {
        retain_tangent: true,
        ..cfg.solver.clone()
    };
    let mean = model.curve_unchecked(&vec![0.0; model.dim()]);
    let sol = fwd
        .space
        .solve(&Materials::new(&mean), cfg.inversion.nominal(), None, &opts)?;
    let fields = sensitivity::solve_all_modes(&fwd.space, &sol, &model, &opts)?;
    let ranking = sensitivity::rank_probes(
        &fwd.space,
        &cfg.geometry,
        &fields,
        &cfg.geometry.candidate_probes(),
        cfg.inversion.probe_count,
    )?;
    sensitivity::write_sensitivity_csv(&out_path(cfg, SENSITIVITY_FILE), &fwd.space, &fields)?;
    write_field_csv(&out_path(cfg, NOMINAL_FIELD_FILE), fwd.space.mesh(), &sol.b)?;
    sensitivity::write_ranking_json(&out_path(cfg, PROBES_FILE), &ranking)?;
    Ok(ranking)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub y0: Vec<f64>,
}

/// Ground-truth parameters `y_min + u·(y_max − y_min)` with `u ~ U[0.3, 0.7]` per component.
pub fn draw_ground_truth(model: &MaterialModel, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..model.dim())
        .map(|k| model.y_min[k] + rng.gen_range(0.3..=0.7) * (model.y_max[k] - model.y_min[k]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSets {
    pub training: ObservationSet,
    pub validation: ObservationSet,
    pub ground_truth: GroundTruth,
}

/// Simulated training data at the ranked probes and validation data on the gap axis.
pub fn cmd_make_data(cfg: &RunConfig) -> Result<DataSets> {
    ensure_output(cfg)?;
    let model = load_model(cfg)?;
    let ranking = sensitivity::read_ranking_json(&out_path(cfg, PROBES_FILE))?;
    let probes: Vec<[f64; 2]> = ranking.iter().map(|r| r.position).collect();
    let fwd = forward_model(cfg)?;
    let seed = cfg.inversion.y0_seed;
    let y0 = draw_ground_truth(&model, seed);
    let training = fwd.observe(&model, &y0, &cfg.inversion.training_currents(), &probes)?;
    let axis = cfg.geometry.axis_probes(cfg.inversion.validation_probe_count);
    let validation = fwd.observe(&model, &y0, &cfg.inversion.validation_currents(), &axis)?;
    training.write_csv(&out_path(cfg, TRAINING_FILE))?;
    validation.write_csv(&out_path(cfg, VALIDATION_FILE))?;
    let ground_truth = GroundTruth { seed, y0 };
    write(
        &out_path(cfg, GROUND_TRUTH_FILE),
        &serde_json::to_string_pretty(&ground_truth)?,
    )?;
    Ok(DataSets {
        training,
        validation,
        ground_truth,
    })
}

fn read_ground_truth(cfg: &RunConfig) -> Result<Option<GroundTruth>> {
    let p = out_path(cfg, GROUND_TRUTH_FILE);
    if !p.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}

fn read_observations(cfg: &RunConfig, name: &str) -> Result<ObservationSet> {
    let provenance = match read_ground_truth(cfg)? {
        Some(g) => Provenance::Synthetic { y0: g.y0 },
        None => Provenance::External,
    };
    let obs = ObservationSet::read_csv(&out_path(cfg, name), provenance)?;
    obs.validate(&cfg.geometry)?;
    Ok(obs)
}

fn thresholds_met(cfg: &RunConfig, r: &IdentificationResult) -> Option<bool> {
    r.metrics.as_ref().map(|m| {
        m.max_e_rel < cfg.inversion.max_e_rel && m.max_e_abs < cfg.inversion.max_e_abs
    })
}

/// Runs the identification and writes result JSON, error tables and the summary.
pub fn cmd_identify(cfg: &RunConfig) -> Result<IdentificationResult> {
    ensure_output(cfg)?;
    let model = load_model(cfg)?;
    let fwd = forward_model(cfg)?;
    let training = read_observations(cfg, TRAINING_FILE)?;
    let validation = match out_path(cfg, VALIDATION_FILE).is_file() {
        true => Some(read_observations(cfg, VALIDATION_FILE)?),
        false => None,
    };
    let icfg = IdentifyConfig {
        pso: cfg.inversion.pso.clone(),
        regularization: cfg.inversion.regularization,
        anchor_at_mean: cfg.inversion.anchor_at_mean,
    };
    let result = inversion::identify(&training, &model, &fwd, &icfg, validation.as_ref())?;
    result.save(&out_path(cfg, RESULT_FILE))?;
    if let Some(m) = &result.metrics {
        let mut s = String::from("B_T,E_rel\n");
        for e in &m.e_rel {
            let _ = writeln!(s, "{},{}", e.b, e.e_rel);
        }
        write(&out_path(cfg, E_REL_FILE), &s)?;
        let mut s = String::from("current_A,x_m,y_m,E_abs_T\n");
        for (n, c) in m.currents.iter().enumerate() {
            for (p, probe) in m.probes.iter().enumerate() {
                let _ = writeln!(s, "{},{},{},{}", c, probe[0], probe[1], m.e_abs[n][p]);
            }
        }
        write(&out_path(cfg, E_ABS_FILE), &s)?;
    }
    write(&out_path(cfg, SUMMARY_FILE), &summary(cfg, &training, &result))?;
    Ok(result)
}

pub fn summary(cfg: &RunConfig, training: &ObservationSet, r: &IdentificationResult) -> String {
    let mut s = String::new();
    let c = &r.counters;
    let _ = writeln!(s, "identified y: {:?}", r.y_hat);
    if let Some(y0) = &r.y0 {
        let _ = writeln!(s, "ground truth y0: {y0:?}");
    }
    let _ = writeln!(s, "best objective: {:e} T^2", r.best_value);
    let _ = writeln!(s, "seed: {}", r.seed);
    let _ = writeln!(
        s,
        "swarm: {} particles, {} iterations, {} evaluations",
        cfg.inversion.pso.swarm_size,
        r.objective_history.len(),
        r.evaluations
    );
    let _ = writeln!(
        s,
        "forward solves: {} = {} evaluations x {} currents - {} cache hits - {} skipped",
        c.forward_solves,
        r.evaluations,
        training.currents.len(),
        c.cache_hits,
        c.skipped
    );
    let _ = writeln!(s, "flagged evaluations: {}", c.flagged);
    if let Some(m) = &r.metrics {
        let pass = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let _ = writeln!(
            s,
            "max E_rel: {:.4e} (threshold {:e}) {}",
            m.max_e_rel,
            cfg.inversion.max_e_rel,
            pass(m.max_e_rel < cfg.inversion.max_e_rel)
        );
        let _ = writeln!(
            s,
            "max E_abs: {:.4e} T (threshold {:e} T) {}",
            m.max_e_abs,
            cfg.inversion.max_e_abs,
            pass(m.max_e_abs < cfg.inversion.max_e_abs)
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub max_e_rel: f64,
    pub max_e_abs: f64,
    pub max_e_rel_threshold: f64,
    pub max_e_abs_threshold: f64,
    pub passed: bool,
}

/// Recomputes the error metrics of the stored result against the ground truth.
pub fn cmd_validate(cfg: &RunConfig) -> Result<ValidationReport> {
    let model = load_model(cfg)?;
    let fwd = forward_model(cfg)?;
    let result = IdentificationResult::load(&out_path(cfg, RESULT_FILE))?;
    let gt = read_ground_truth(cfg)?
        .ok_or_else(|| Error::Input("validation needs the ground-truth sidecar".into()))?;
    let validation = read_observations(cfg, VALIDATION_FILE)?;
    let m = inversion::error_metrics(&result.y_hat, &gt.y0, &model, &validation, &fwd)?;
    let mut with = result.clone();
    with.metrics = Some(m.clone());
    let report = ValidationReport {
        max_e_rel: m.max_e_rel,
        max_e_abs: m.max_e_abs,
        max_e_rel_threshold: cfg.inversion.max_e_rel,
        max_e_abs_threshold: cfg.inversion.max_e_abs,
        passed: thresholds_met(cfg, &with).unwrap_or(false),
    };
    write(
        &out_path(cfg, VALIDATION_REPORT_FILE),
        &serde_json::to_string_pretty(&report)?,
    )?;
    if !report.passed {
        return Err(Error::Threshold(format!(
            "max E_rel {:.4e} (limit {:e}), max E_abs {:.4e} T (limit {:e} T)",
            m.max_e_rel, cfg.inversion.max_e_rel, m.max_e_abs, cfg.inversion.max_e_abs
        )));
    }
    Ok(report)
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Threshold(_) => 4,
        _ => 3,
    }
}
