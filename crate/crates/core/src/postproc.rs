//! Principal stresses, surface export and run reports.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MeaError, Result};
use crate::geometry::{DomainSpec, Point};
use crate::mea::AdmissibilityReport;
use crate::reference::FieldMetrics;
use crate::residual::{CoefficientField, SurfaceField};
use crate::trainer::{LossRecord, TrainResult, TrainStatus};

/// Eigen-decomposition of a plan stress tensor, `sigma1 >= sigma2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrincipalState {
    pub sigma1: f64,
    pub sigma2: f64,
    pub e1: [f64; 2],
    pub e2: [f64; 2],
    /// Equal eigenvalues; the directions are the coordinate axes.
    pub degenerate: bool,
}

pub fn principal_stresses(s11: f64, s22: f64, s12: f64) -> PrincipalState {
    let mean = 0.5 * (s11 + s22);
    let half = 0.5 * (s11 - s22);
    let radius = half.hypot(s12);
    if radius <= 1e-15 * (s11.abs() + s22.abs() + s12.abs()) {
        return PrincipalState { sigma1: mean, sigma2: mean, e1: [1.0, 0.0], e2: [0.0, 1.0], degenerate: true };
    }
    let phi = 0.5 * (2.0 * s12).atan2(s11 - s22);
    let (s, c) = phi.sin_cos();
    PrincipalState { sigma1: mean + radius, sigma2: mean - radius, e1: [c, s], e2: [-s, c], degenerate: false }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Obj,
}

impl FromStr for ExportFormat {
    type Err = MeaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "obj" => Ok(Self::Obj),
            _ => Err(MeaError::Format(s.to_string())),
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Obj => "obj",
        })
    }
}

/// Grid over the bounding box; `None` marks nodes outside the closed domain.
fn masked_grid(domain: &DomainSpec, nx: usize, ny: usize) -> Result<Vec<Option<Point>>> {
    if nx < 2 || ny < 2 {
        return Err(MeaError::Config(format!("export grid {nx} x {ny} needs at least 2 nodes per axis")));
    }
    let (lo, hi) = domain.bounding_box();
    let mut nodes = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let p = Point::new(
                lo.x1 + (hi.x1 - lo.x1) * i as f64 / (nx - 1) as f64,
                lo.x2 + (hi.x2 - lo.x2) * j as f64 / (ny - 1) as f64,
            );
            nodes.push(domain.contains_closure(p, 1e-12).then_some(p));
        }
    }
    Ok(nodes)
}

/// Writes the surface over a masked `nx x ny` grid and returns the vertex count.
pub fn export_surface<W: Write>(
    field: &dyn SurfaceField,
    domain: &DomainSpec,
    nx: usize,
    ny: usize,
    format: ExportFormat,
    mut w: W,
) -> Result<usize> {
    let nodes = masked_grid(domain, nx, ny)?;
    let kept: Vec<Point> = nodes.iter().flatten().copied().collect();
    let values = field.values(&kept)?;
    match format {
        ExportFormat::Csv => {
            writeln!(w, "x1,x2,f")?;
            for (p, f) in kept.iter().zip(&values) {
                writeln!(w, "{},{},{}", p.x1, p.x2, f)?;
            }
        }
        ExportFormat::Obj => {
            let mut index = vec![0usize; nodes.len()];
            let mut next = 1;
            for (k, n) in nodes.iter().enumerate() {
                if n.is_some() {
                    index[k] = next;
                    next += 1;
                }
            }
            for (p, f) in kept.iter().zip(&values) {
                writeln!(w, "v {} {} {}", p.x1, p.x2, f)?;
            }
            let id = |i: usize, j: usize| index[j * nx + i];
            for j in 0..ny - 1 {
                for i in 0..nx - 1 {
                    let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                    for tri in [[a, b, c], [a, c, d]] {
                        if tri.iter().all(|&v| v > 0) {
                            writeln!(w, "f {} {} {}", tri[0], tri[1], tri[2])?;
                        }
                    }
                }
            }
        }
    }
    Ok(kept.len())
}

/// Principal stresses of the projected tensor over the masked grid, as CSV.
pub fn export_principal<W: Write>(ctx: &dyn CoefficientField, domain: &DomainSpec, nx: usize, ny: usize, mut w: W) -> Result<usize> {
    let nodes = masked_grid(domain, nx, ny)?;
    writeln!(w, "x1,x2,s11,s22,s12,sigma1,sigma2,e1_x1,e1_x2,degenerate")?;
    let mut n = 0;
    for p in nodes.into_iter().flatten() {
        let c = ctx.coefficients(p);
        let ps = principal_stresses(c.s11, c.s22, c.s12);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            p.x1, p.x2, c.s11, c.s22, c.s12, ps.sigma1, ps.sigma2, ps.e1[0], ps.e1[1], ps.degenerate as u8
        )?;
        n += 1;
    }
    Ok(n)
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// 64-bit FNV-1a, stable across platforms and releases.
pub fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub case: String,
    pub formulation: String,
    pub status: String,
    pub rmse: Option<f64>,
    pub rel_l2_percent: Option<f64>,
    pub max_abs: Option<f64>,
    pub final_train_pde_rmse: Option<f64>,
    pub final_val_pde_rmse: Option<f64>,
    pub best_epoch: usize,
    pub best_val_pde_rmse: f64,
    pub boundary_error_max: Option<f64>,
    pub boundary_bound_max: Option<f64>,
    pub admissible: Option<bool>,
    pub admissibility: Option<AdmissibilityReport>,
    pub seed: u64,
    pub config_hash: String,
    pub wallclock_s: f64,
}

/// Summarizes a run; comparison fields stay `null` without a reference.
pub fn report_metrics(
    case: &str,
    result: &TrainResult,
    metrics: Option<&FieldMetrics>,
    seed: u64,
    config_hash: String,
    wallclock_s: f64,
) -> RunReport {
    let last_validated = result.history.iter().rev().find(|r| r.pde_rmse_val.is_some());
    RunReport {
        case: case.to_string(),
        formulation: result.field.formulation.name().to_string(),
        status: match &result.status {
            TrainStatus::Completed => "completed".to_string(),
            TrainStatus::Diverged { epoch, reason } => format!("diverged at epoch {epoch}: {reason}"),
        },
        rmse: metrics.map(|m| m.rmse),
        rel_l2_percent: metrics.map(|m| m.rel_l2_percent()),
        max_abs: metrics.map(|m| m.max_abs),
        final_train_pde_rmse: last_validated.map(|r: &LossRecord| r.pde_rmse_train),
        final_val_pde_rmse: last_validated.and_then(|r| r.pde_rmse_val),
        best_epoch: result.best_epoch,
        best_val_pde_rmse: result.best_val,
        boundary_error_max: result.boundary_error_max,
        boundary_bound_max: result.boundary_bound_max,
        admissible: result.admissibility.as_ref().map(|a| a.passed),
        admissibility: result.admissibility.clone(),
        seed,
        config_hash,
        wallclock_s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn check_eigen(s11: f64, s22: f64, s12: f64, ps: &PrincipalState, tol: f64) {
        for (sig, e) in [(ps.sigma1, ps.e1), (ps.sigma2, ps.e2)] {
            let r = [s11 * e[0] + s12 * e[1] - sig * e[0], s12 * e[0] + s22 * e[1] - sig * e[1]];
            assert!(r[0].abs() <= tol && r[1].abs() <= tol, "{r:?}");
            assert!((e[0].hypot(e[1]) - 1.0).abs() < 1e-14);
        }
        assert!((ps.e1[0] * ps.e2[0] + ps.e1[1] * ps.e2[1]).abs() < 1e-14);
        assert!(ps.sigma1 >= ps.sigma2);
    }

    #[test]
    fn isotropic_is_degenerate() {
        let ps = principal_stresses(-4.0, -4.0, 0.0);
        assert_eq!(ps, PrincipalState { sigma1: -4.0, sigma2: -4.0, e1: [1.0, 0.0], e2: [0.0, 1.0], degenerate: true });
    }

    #[test]
    fn diagonal_tensor() {
        let ps = principal_stresses(-4.0, -9.0, 0.0);
        assert_eq!((ps.sigma1, ps.sigma2, ps.e1, ps.degenerate), (-4.0, -9.0, [1.0, 0.0], false));
        check_eigen(-4.0, -9.0, 0.0, &ps, 1e-14);
    }

    #[test]
    fn pure_shear() {
        let ps = principal_stresses(0.0, 0.0, 1.0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((ps.sigma1 - 1.0).abs() < 1e-15 && (ps.sigma2 + 1.0).abs() < 1e-15);
        assert!((ps.e1[0] - h).abs() < 1e-15 && (ps.e1[1] - h).abs() < 1e-15);
        check_eigen(0.0, 0.0, 1.0, &ps, 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn eigen_identities(s11 in -50.0f64..50.0, s22 in -50.0f64..50.0, s12 in -50.0f64..50.0) {
            let ps = principal_stresses(s11, s22, s12);
            let scale = s11.abs() + s22.abs() + s12.abs();
            check_eigen(s11, s22, s12, &ps, 1e-12 * scale.max(1.0));
            prop_assert!((ps.sigma1 + ps.sigma2 - s11 - s22).abs() <= 1e-12 * scale.max(1e-300));
            let det = s11 * s22 - s12 * s12;
            prop_assert!((ps.sigma1 * ps.sigma2 - det).abs() <= 1e-12 * scale * scale);
        }
    }

    struct Bowl;

    impl SurfaceField for Bowl {
        fn jet(&self, p: Point) -> Result<crate::residual::Jet> {
            Ok(crate::residual::Jet::constant(p.x1 * p.x1 + p.x2))
        }
    }

    #[test]
    fn rectangle_csv_has_full_grid() {
        let dom = DomainSpec::Rectangle { l: 2.0, b: 1.0 };
        let mut buf = Vec::new();
        assert_eq!(export_surface(&Bowl, &dom, 3, 3, ExportFormat::Csv, &mut buf).unwrap(), 9);
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 10);
        assert!(s.lines().nth(1).unwrap().starts_with("-1,-0.5,"));
    }

    #[test]
    fn annulus_export_is_masked_and_obj_round_trips() {
        let dom = DomainSpec::Annulus { r_in: 0.6, r_out: 2.0 };
        let mut buf = Vec::new();
        let n = export_surface(&Bowl, &dom, 41, 41, ExportFormat::Obj, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let verts: Vec<(f64, f64)> = s
            .lines()
            .filter(|l| l.starts_with("v "))
            .map(|l| {
                let v: Vec<f64> = l[2..].split(' ').map(|x| x.parse().unwrap()).collect();
                (v[0], v[1])
            })
            .collect();
        assert_eq!(verts.len(), n);
        for (x, y) in &verts {
            let r = x.hypot(*y);
            assert!(r >= 0.6 * (1.0 - 1e-12) && r <= 2.0 * (1.0 + 1e-12));
        }
        for l in s.lines().filter(|l| l.starts_with("f ")) {
            assert!(l[2..].split(' ').all(|i| (1..=n).contains(&i.parse::<usize>().unwrap())));
        }
        assert!(matches!("png".parse::<ExportFormat>(), Err(MeaError::Format(_))));
        assert!(export_surface(&Bowl, &dom, 1, 5, ExportFormat::Csv, Vec::new()).is_err());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(config_hash(""), "cbf29ce484222325");
        assert_eq!(config_hash("a"), "af63dc4c8601ec8c");
    }
}
