//! End-to-end runs driven by a [`RunConfig`].

use std::path::{Path, PathBuf};

use crate::config::{ReferenceSection, RunConfig};
use crate::error::{MeaError, Result};
use crate::geometry::{BoundaryProfile, DomainSpec};
use crate::mea::{check_admissibility, AdmissibilityReport, MeaContext};
use crate::postproc::{config_hash, export_principal, export_surface, report_metrics, write_atomic, RunReport};
use crate::reference::{
    compare_fields, compare_values, comparison_cloud, fd_solve_with_estimate, make_manufactured, FieldMetrics, GridSolution,
    ManufacturedCase, ManufacturedSolution, RichardsonEstimate,
};
use crate::residual::CoefficientField;
use crate::trainer::{train, write_log_csv, Problem, ReferenceSamples, TrainOptions, TrainResult, TrainedField};

/// Domain, boundary data and coefficients resolved from a configuration.
pub struct PreparedCase {
    pub domain: DomainSpec,
    pub profile: BoundaryProfile,
    pub context: MeaContext,
    pub manufactured: Option<ManufacturedCase>,
}

impl PreparedCase {
    pub fn coefficients(&self) -> &dyn CoefficientField {
        match &self.manufactured {
            Some(m) => m,
            None => &self.context,
        }
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<PreparedCase> {
    let context = cfg.context();
    let domain = cfg.case.domain;
    match &cfg.reference {
        ReferenceSection::Manufactured { id } => {
            let sol = ManufacturedSolution::preset(id, &domain)?;
            let case = make_manufactured(id, sol, domain, context.clone())?;
            Ok(PreparedCase { domain, profile: case.profile.clone(), context, manufactured: Some(case) })
        }
        _ => {
            let profile = cfg.case.profile.clone().ok_or_else(|| MeaError::Config("case.profile is required".into()))?;
            Ok(PreparedCase { domain, profile, context, manufactured: None })
        }
    }
}

pub fn admissibility(cfg: &RunConfig, case: &PreparedCase) -> Result<AdmissibilityReport> {
    check_admissibility(&case.context.airy, &case.context.loads, &case.domain, cfg.case.check_samples, cfg.train.seed)
}

pub enum ReferenceData {
    Grid { solution: GridSolution, estimate: RichardsonEstimate },
    Manufactured,
}

/// Builds the configured reference, if any. Finite-difference references also report a
/// grid-refinement error estimate.
pub fn build_reference(cfg: &RunConfig, case: &PreparedCase) -> Result<Option<ReferenceData>> {
    match &cfg.reference {
        ReferenceSection::None => Ok(None),
        ReferenceSection::Fd { nx, ny } => {
            let (solution, estimate) = fd_solve_with_estimate(&case.context, &case.domain, &case.profile, *nx, *ny)?;
            Ok(Some(ReferenceData::Grid { solution, estimate }))
        }
        ReferenceSection::Manufactured { .. } => Ok(Some(ReferenceData::Manufactured)),
    }
}

impl ReferenceData {
    /// Points and values tracked during training.
    pub fn samples(&self, case: &PreparedCase) -> Result<ReferenceSamples> {
        match self {
            ReferenceData::Grid { solution, .. } => Ok(solution.reference_samples()),
            ReferenceData::Manufactured => {
                let m = case.manufactured.as_ref().ok_or_else(|| MeaError::Config("manufactured case missing".into()))?;
                let points = comparison_cloud(&case.domain)?.points;
                let values = points.iter().map(|&p| m.solution.value(p)).collect();
                Ok(ReferenceSamples { points, values })
            }
        }
    }

    /// Metrics of a trained field on the nodal points of the reference.
    pub fn compare(&self, field: &TrainedField, case: &PreparedCase) -> Result<FieldMetrics> {
        match self {
            ReferenceData::Grid { solution, .. } => {
                let (points, values) = solution.interior_nodes();
                compare_values(&crate::residual::SurfaceField::values(field, &points)?, &values)
            }
            ReferenceData::Manufactured => {
                let m = case.manufactured.as_ref().ok_or_else(|| MeaError::Config("manufactured case missing".into()))?;
                compare_fields(field, &m.solution, &comparison_cloud(&case.domain)?.points)
            }
        }
    }
}

pub struct SolveOutcome {
    pub result: TrainResult,
    pub metrics: Option<FieldMetrics>,
    pub report: RunReport,
    pub output_dir: PathBuf,
}

/// Trains per the configuration and writes the log, trained field, report and exports
/// into `out`.
pub fn solve(cfg: &RunConfig, config_text: &str, out: &Path) -> Result<SolveOutcome> {
    let start = std::time::Instant::now();
    std::fs::create_dir_all(out)?;
    let case = prepare(cfg)?;
    let adm = admissibility(cfg, &case)?;
    let reference = build_reference(cfg, &case)?;
    let samples = reference.as_ref().map(|r| r.samples(&case)).transpose()?;
    if let Some(ReferenceData::Grid { estimate, .. }) = &reference {
        log::info!("reference grid-refinement estimate: {:.3e} relative L2", estimate.relative_l2);
    }
    let problem = Problem { domain: case.domain, profile: case.profile.clone(), coefficients: case.coefficients(), admissibility: Some(adm) };
    let options = TrainOptions { checkpoint_dir: cfg.outputs.checkpoints.then(|| out.join("checkpoints")) };
    let result = train(&cfg.train, &problem, samples.as_ref(), &options)?;

    let mut log = Vec::new();
    write_log_csv(&result.history, &mut log)?;
    write_atomic(&out.join("log.csv"), &log)?;
    result.field.save(&out.join("field.bin"))?;
    let metrics = reference.as_ref().map(|r| r.compare(&result.field, &case)).transpose()?;
    let [nx, ny] = cfg.outputs.grid;
    for &fmt in &cfg.outputs.formats {
        let mut buf = Vec::new();
        export_surface(&result.field, &case.domain, nx, ny, fmt, &mut buf)?;
        write_atomic(&out.join(format!("surface.{fmt}")), &buf)?;
    }
    if cfg.outputs.principal {
        let mut buf = Vec::new();
        export_principal(case.coefficients(), &case.domain, nx, ny, &mut buf)?;
        write_atomic(&out.join("principal.csv"), &buf)?;
    }
    let wallclock = if cfg.train.record_wallclock { start.elapsed().as_secs_f64() } else { 0.0 };
    let report = report_metrics(&cfg.case.name, &result, metrics.as_ref(), cfg.train.seed, config_hash(config_text), wallclock);
    write_atomic(&out.join("report.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(SolveOutcome { result, metrics, report, output_dir: out.to_path_buf() })
}
