//! Run configuration files.
//!
//! A run is described by a TOML file with the sections `[case]`, `[airy]`, `[loads]`,
//! `[train]`, `[outputs]` and `[reference]`. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{MeaError, Result};
use crate::geometry::{BoundaryProfile, DomainSpec};
use crate::mea::{diagonal_direction, AiryField, IntegrationReference, LoadModel, MeaContext, PointLoad};
use crate::postproc::ExportFormat;
use crate::trainer::TrainConfig;

/// Overrides `outputs.directory` when set.
pub const OUTPUT_ROOT_ENV: &str = "MEA_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: CaseSection,
    pub airy: AiryField,
    pub loads: LoadsSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub outputs: OutputsSection,
    #[serde(default)]
    pub reference: ReferenceSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSection {
    pub name: String,
    pub domain: DomainSpec,
    /// Required unless the reference is a manufactured case, which brings its own.
    #[serde(default)]
    pub profile: Option<BoundaryProfile>,
    /// Points per interior and boundary set in the admissibility check.
    #[serde(default = "default_check_samples")]
    pub check_samples: usize,
}

fn default_check_samples() -> usize {
    10_000
}

/// Direction of the horizontal action: an angle in radians or `"diagonal"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Direction {
    Angle(f64),
    Named(NamedDirection),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedDirection {
    /// Along the rectangle diagonal.
    Diagonal,
}

impl Default for Direction {
    fn default() -> Self {
        Direction::Angle(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadsSection {
    pub rho: f64,
    pub thickness: f64,
    #[serde(default)]
    pub point_loads: Vec<PointLoad>,
    #[serde(default)]
    pub alpha_h: f64,
    #[serde(default)]
    pub theta_h: Direction,
    #[serde(default)]
    pub reference: IntegrationReference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsSection {
    pub directory: PathBuf,
    pub formats: Vec<ExportFormat>,
    /// Export grid nodes along x1 and x2.
    pub grid: [usize; 2],
    pub principal: bool,
    pub checkpoints: bool,
}

impl Default for OutputsSection {
    fn default() -> Self {
        Self { directory: PathBuf::from("runs"), formats: vec![ExportFormat::Csv], grid: [101, 101], principal: true, checkpoints: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSection {
    #[default]
    None,
    /// Finite differences on an `nx x ny` grid; rectangles only.
    Fd { nx: usize, ny: usize },
    /// Named manufactured solution.
    Manufactured { id: String },
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| MeaError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MeaError::Config(format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::from_toml_str(&text)?, text))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| MeaError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.case.domain.validate()?;
        if self.case.name.is_empty() || self.case.name.contains(['/', '\\']) {
            return Err(MeaError::Config(format!("case name `{}` must be a plain file name", self.case.name)));
        }
        match (&self.case.profile, &self.reference) {
            (Some(p), ReferenceSection::Manufactured { .. }) => {
                return Err(MeaError::Config(format!("a manufactured reference supplies its own boundary profile; remove {p:?}")))
            }
            (Some(p), _) => p.validate_for(&self.case.domain)?,
            (None, ReferenceSection::Manufactured { .. }) => {}
            (None, _) => return Err(MeaError::Config("case.profile is required".into())),
        }
        if self.case.check_samples == 0 {
            return Err(MeaError::Config("case.check_samples must be positive".into()));
        }
        if ![self.airy.l1, self.airy.l2, self.airy.l3].iter().all(|v| v.is_finite()) {
            return Err(MeaError::Config("airy parameters must be finite".into()));
        }
        if self.loads.rho < 0.0 || self.loads.thickness <= 0.0 || self.loads.alpha_h < 0.0 {
            return Err(MeaError::Config("loads need rho >= 0, thickness > 0 and alpha_h >= 0".into()));
        }
        if let (Direction::Named(NamedDirection::Diagonal), false) =
            (self.loads.theta_h, matches!(self.case.domain, DomainSpec::Rectangle { .. }))
        {
            return Err(MeaError::Config("theta_h = \"diagonal\" needs a rectangle".into()));
        }
        self.load_model().validate()?;
        self.train.validate()?;
        if self.outputs.grid.iter().any(|&n| n < 2) {
            return Err(MeaError::Config("outputs.grid needs at least 2 nodes per axis".into()));
        }
        match &self.reference {
            ReferenceSection::Fd { nx, ny } => {
                if !matches!(self.case.domain, DomainSpec::Rectangle { .. }) {
                    return Err(MeaError::Config("the finite-difference reference is available on rectangles only".into()));
                }
                if *nx < 5 || *ny < 5 {
                    return Err(MeaError::Config("reference grid needs at least 5 x 5 nodes".into()));
                }
            }
            ReferenceSection::Manufactured { id } => {
                crate::reference::ManufacturedSolution::preset(id, &self.case.domain)?;
            }
            ReferenceSection::None => {}
        }
        Ok(())
    }

    pub fn theta_h(&self) -> f64 {
        match (self.loads.theta_h, self.case.domain) {
            (Direction::Angle(a), _) => a,
            (Direction::Named(NamedDirection::Diagonal), DomainSpec::Rectangle { l, b }) => diagonal_direction(l, b),
            (Direction::Named(NamedDirection::Diagonal), _) => 0.0,
        }
    }

    pub fn load_model(&self) -> LoadModel {
        let theta = self.theta_h();
        let (l1, l2) = (self.loads.alpha_h * theta.cos(), self.loads.alpha_h * theta.sin());
        LoadModel {
            rho: self.loads.rho,
            thickness: self.loads.thickness,
            point_loads: self.loads.point_loads.clone(),
            alpha_h: self.loads.alpha_h,
            theta_h: theta,
            reference: self.loads.reference.resolve(&self.case.domain, l1, l2),
        }
    }

    pub fn context(&self) -> MeaContext {
        let mut airy = self.airy.clone();
        airy.centroid = self.case.domain.centroid();
        MeaContext { airy, loads: self.load_model() }
    }

    /// `<root>/<case name>`, where the root is `$MEA_OUTPUT_ROOT` if set.
    pub fn output_dir(&self) -> PathBuf {
        let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| self.outputs.directory.clone());
        root.join(&self.case.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const RECT: &str = r#"
[case]
name = "rect_hard"
domain = { kind = "rectangle", l = 6.0, b = 4.0 }
profile = { kind = "arch", h_arch = 1.0 }

[airy]
l1 = 2.0
l2 = 0.0
l3 = 2.0
state = "compression"

[loads]
rho = 18.0
thickness = 0.1
alpha_h = 0.5
theta_h = "diagonal"
point_loads = [{ magnitude = 5.0, center = { x1 = -1.5, x2 = 0.0 }, sigma = 0.5 }]

[train]
formulation = "hard"
adam_epochs = 10
lbfgs_epochs = 0

[outputs]
formats = ["csv", "obj"]
grid = [31, 21]

[reference]
kind = "fd"
nx = 129
ny = 81
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::from_toml_str(RECT).unwrap();
        assert_eq!(cfg.train.adam_epochs, 10);
        assert_eq!(cfg.train.n_pde, 16_384);
        assert_eq!(cfg.reference, ReferenceSection::Fd { nx: 129, ny: 81 });
        assert!((cfg.theta_h() - (4.0f64).atan2(6.0)).abs() < 1e-15);
        assert_eq!(cfg.load_model().reference.x1, -3.0);
        let text = cfg.to_toml_string().unwrap();
        let again = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml_string().unwrap(), text);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for (from, to) in [("rho = 18.0", "rho = 18.0\nrhoo = 1.0"), ("[train]", "[train]\nepochs = 3"), ("[outputs]", "[output]")] {
            let bad = RECT.replace(from, to);
            assert!(matches!(RunConfig::from_toml_str(&bad), Err(MeaError::Config(_))), "{to}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        for (from, to) in [
            ("thickness = 0.1", "thickness = 0.0"),
            ("l = 6.0", "l = -6.0"),
            ("nx = 129", "nx = 3"),
            ("kind = \"arch\", h_arch = 1.0", "kind = \"disk\", series = { a0 = 1.0 }"),
            ("grid = [31, 21]", "grid = [1, 21]"),
        ] {
            assert!(RunConfig::from_toml_str(&RECT.replace(from, to)).is_err(), "{to}");
        }
        let manufactured = RECT.replace("kind = \"fd\"\nnx = 129\nny = 81", "kind = \"manufactured\"\nid = \"bubble\"");
        assert!(RunConfig::from_toml_str(&manufactured).is_err());
        let ok = manufactured.replace("profile = { kind = \"arch\", h_arch = 1.0 }\n", "");
        assert!(RunConfig::from_toml_str(&ok).is_ok());
    }

    #[test]
    fn output_root_follows_the_environment() {
        let cfg = RunConfig::from_toml_str(RECT).unwrap();
        std::env::remove_var(OUTPUT_ROOT_ENV);
        assert_eq!(cfg.output_dir(), PathBuf::from("runs/rect_hard"));
        std::env::set_var(OUTPUT_ROOT_ENV, "/tmp/elsewhere");
        assert_eq!(cfg.output_dir(), PathBuf::from("/tmp/elsewhere/rect_hard"));
        std::env::remove_var(OUTPUT_ROOT_ENV);
    }
}
