//! Scene files: a strict JSON description of one experiment.

use std::collections::BTreeMap;
use std::path::Path;

use cellavg::asymptotics::{FitOptions, ScheduleKind};
use cellavg::energy::QuadratureOptions;
use cellavg::geometry::{ConvexPolytope, DomainSpec, InterfacePlane};
use cellavg::lattice::{BoundaryRule, BravaisLattice, LatticeSpec, MillerTarget, MillerVector};
use cellavg::material::{builtin_potential, Deformation, PairPotential};
use cellavg::{Mat3, Vec3};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCENE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub potential: PotentialChoice,
    #[serde(default)]
    pub deformation: DeformationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interface: Option<InterfaceSpec>,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub boundary_rule: BoundaryRule,
    #[serde(default)]
    pub quadrature: QuadratureOptions,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
    /// Densities for the `density` command; empty means every one the scene supports.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub densities: Vec<DensityRequest>,
    /// Unit normal for `γ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<[f64; 3]>,
    /// Miller normal for `γ⋄`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub miller: Option<[i64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialChoice {
    pub builtin: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl Default for PotentialChoice {
    fn default() -> Self {
        PotentialChoice {
            builtin: "quadratic_cutoff".into(),
            params: BTreeMap::from([("cutoff".to_string(), 2.0)]),
        }
    }
}

/// Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum DeformationSpec {
    #[default]
    None,
    Affine { f: [[f64; 3]; 3] },
    /// `F⁻` on the minus side; the jump comes from `interface.a`.
    Piecewise { f_minus: [[f64; 3]; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub miller: Option<[i64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<[f64; 3]>,
    #[serde(default)]
    pub a: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleTag {
    Reciprocal,
    Offset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub kind: ScheduleTag,
    #[serde(default = "default_k_min")]
    pub k_min: u32,
    #[serde(default = "default_k_max")]
    pub k_max: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

fn default_k_min() -> u32 {
    4
}

fn default_k_max() -> u32 {
    40
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            kind: ScheduleTag::Reciprocal,
            k_min: default_k_min(),
            k_max: default_k_max(),
            theta: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DensityRequest {
    #[serde(rename = "W")]
    W,
    #[serde(rename = "gamma")]
    Gamma,
    #[serde(rename = "gamma_diamond")]
    GammaDiamond,
    #[serde(rename = "sigma")]
    Sigma,
    #[serde(rename = "tau")]
    Tau,
}

/// The interface data after validation.
#[derive(Debug, Clone)]
pub struct Phases {
    pub f_minus: Mat3,
    pub a: Vec3,
    pub plane: InterfacePlane,
}

impl Phases {
    pub fn f_plus(&self) -> Mat3 {
        self.f_minus + self.a * self.plane.unit_normal.transpose()
    }
}

/// A validated scene with every object built.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub lattice: BravaisLattice,
    pub domain: Option<ConvexPolytope>,
    pub potential: PairPotential,
    pub deformation: Deformation,
    /// Gradient of the affine map, or `F⁻` of the piecewise one.
    pub gradient: Mat3,
    pub phases: Option<Phases>,
    pub schedule: ScheduleKind,
    pub normal: Option<Vec3>,
    pub miller: Option<MillerVector>,
}

fn matrix(rows: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, j| rows[i][j])
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl Scene {
    /// Parses a scene file; syntax and unknown-field errors carry line and column.
    pub fn load(path: &Path) -> Result<Scene, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("{}: cannot read scene: {e}", path.display())))?;
        Scene::parse(&text).map_err(|e| match e {
            CliError::Validation(msg) => invalid(format!("{}:{msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Scene, CliError> {
        let scene: Scene = serde_json::from_str(text)
            .map_err(|e| invalid(format!("{}:{}: {e}", e.line(), e.column())))?;
        if scene.version != SCENE_VERSION {
            return Err(invalid(format!(
                " unsupported scene version {} (expected {SCENE_VERSION})",
                scene.version
            )));
        }
        Ok(scene)
    }

    pub fn schedule_kind(&self) -> Result<ScheduleKind, CliError> {
        match (self.schedule.kind, self.schedule.theta) {
            (ScheduleTag::Reciprocal, None) => Ok(ScheduleKind::Reciprocal),
            (ScheduleTag::Reciprocal, Some(_)) => Err(invalid("schedule: θ only applies to the offset schedule")),
            (ScheduleTag::Offset, Some(theta)) => Ok(ScheduleKind::Offset { theta }),
            (ScheduleTag::Offset, None) => Err(invalid("schedule: the offset schedule needs θ")),
        }
    }

    /// Builds every object and checks the cross references.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let lattice = match &self.lattice {
            Some(spec) => BravaisLattice::try_from(spec.clone())?,
            None => BravaisLattice::integer(),
        };
        let domain = self.domain.as_ref().map(|d| d.build(&lattice)).transpose()?;
        let potential = builtin_potential(&self.potential.builtin, &self.potential.params)?;
        let schedule = self.schedule_kind()?;
        let miller = self.miller.map(MillerVector::new).transpose()?;
        let normal = self.normal.map(Vec3::from);

        let plane = match &self.interface {
            None => None,
            Some(spec) => {
                let plane = match (spec.miller, spec.normal) {
                    (Some(m), None) => InterfacePlane::from_miller(&lattice, MillerVector::new(m)?),
                    (None, Some(n)) => InterfacePlane::new(Vec3::from(n))?,
                    (Some(_), Some(_)) => return Err(invalid("interface: give either `miller` or `normal`, not both")),
                    (None, None) => return Err(invalid("interface: needs `miller` or `normal`")),
                };
                Some((plane.with_anchor(spec.anchor.map(Vec3::from).unwrap_or_default()), Vec3::from(spec.a)))
            }
        };

        let (deformation, gradient, phases) = match (&self.deformation, plane) {
            (DeformationSpec::None, None) => (Deformation::identity(), Mat3::identity(), None),
            (DeformationSpec::Affine { f }, None) => {
                let f = matrix(f);
                (Deformation::affine(f)?, f, None)
            }
            (DeformationSpec::None | DeformationSpec::Affine { .. }, Some(_)) => {
                return Err(invalid("interface is given but the deformation is not piecewise"));
            }
            (DeformationSpec::Piecewise { .. }, None) => {
                return Err(invalid("a piecewise deformation requires an interface"));
            }
            (DeformationSpec::Piecewise { f_minus }, Some((plane, a))) => {
                let f_minus = matrix(f_minus);
                let d = Deformation::piecewise(f_minus, a, plane)?;
                (d, f_minus, Some(Phases { f_minus, a, plane }))
            }
        };

        Ok(Resolved {
            lattice,
            domain,
            potential,
            deformation,
            gradient,
            phases,
            schedule,
            normal,
            miller,
        })
    }
}

impl Resolved {
    pub fn domain(&self) -> Result<&ConvexPolytope, CliError> {
        self.domain.as_ref().ok_or_else(|| invalid("this command needs a `domain`"))
    }

    /// Target of a Miller-sequence study: the interface normal, else the scene normal.
    pub fn miller_target(&self) -> Result<MillerTarget, CliError> {
        if let Some(p) = &self.phases {
            if let Some(m) = p.plane.miller {
                return Ok(MillerTarget::Rational(m));
            }
            return Ok(MillerTarget::from_direction(p.plane.unit_normal, 1000)?);
        }
        if let Some(m) = self.miller {
            return Ok(MillerTarget::Rational(m));
        }
        match self.normal {
            Some(n) => Ok(MillerTarget::from_direction(n.try_normalize(0.0).ok_or(cellavg::Error::ZeroVector)?, 1000)?),
            None => Err(invalid("a Miller study needs an interface, `miller` or `normal`")),
        }
    }
}
