//! Shared domain types: material, sample geometry, cracks, scenarios and
//! failure paths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Elastic and strength parameters of the sample material (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialParams {
    /// Density, kg/m³.
    pub rho: f64,
    /// Young's modulus, Pa.
    #[serde(rename = "E")]
    pub young_modulus: f64,
    /// Shear modulus, Pa.
    #[serde(rename = "G")]
    pub shear_modulus: f64,
    /// Poisson's ratio.
    pub nu: f64,
    /// Ultimate tensile strength, Pa.
    pub sigma_u: f64,
    /// Applied boundary velocity at the loaded edge, m/s.
    pub v: f64,
}

impl MaterialParams {
    /// Concrete-like sample loaded at 0.1 m/s.
    pub fn concrete() -> Self {
        Self {
            rho: 2500.0,
            young_modulus: 22.6e9,
            shear_modulus: 9.1e9,
            nu: 0.24166,
            sigma_u: 4.0e6,
            v: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho", self.rho),
            ("E", self.young_modulus),
            ("G", self.shear_modulus),
            ("nu", self.nu),
            ("sigma_u", self.sigma_u),
            ("v", self.v),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidScenario(format!(
                    "material parameter {name} must be positive, got {value}"
                )));
            }
        }
        if self.nu >= 0.5 {
            return Err(Error::InvalidScenario(format!(
                "poisson ratio must be below 0.5, got {}",
                self.nu
            )));
        }
        Ok(())
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self::concrete()
    }
}

/// Rectangular sample `[0, w] × [0, h]`; the load acts on the edge `y = h`
/// and failure means a fracture spanning the width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleGeometry {
    pub w: f64,
    pub h: f64,
}

impl SampleGeometry {
    pub fn new(w: f64, h: f64) -> Result<Self> {
        let g = Self { w, h };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w.is_finite() && self.w > 0.0 && self.h.is_finite() && self.h > 0.0) {
            return Err(Error::InvalidScenario(format!(
                "sample dimensions must be positive, got w={} h={}",
                self.w, self.h
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.x <= self.w && p.y >= 0.0 && p.y <= self.h
    }
}

impl Default for SampleGeometry {
    fn default() -> Self {
        Self { w: 2.0, h: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrackKind {
    Interior,
    BoundaryLeft,
    BoundaryRight,
}

impl CrackKind {
    pub fn is_interior(self) -> bool {
        matches!(self, CrackKind::Interior)
    }
}

/// Lateral sample edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn x(self, geometry: &SampleGeometry) -> f64 {
        match self {
            Side::Left => 0.0,
            Side::Right => geometry.w,
        }
    }
}

/// A straight preexisting crack. `length` is the full tip-to-tip length and
/// `theta_deg` is measured from +x, in `[0, 180)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "CrackRecord", into = "CrackRecord")]
pub struct Crack {
    pub id: usize,
    pub center: Point,
    pub length: f64,
    pub theta_deg: f64,
    pub kind: CrackKind,
}

impl Crack {
    pub fn interior(id: usize, center: Point, length: f64, theta_deg: f64) -> Self {
        Self {
            id,
            center,
            length,
            theta_deg: normalize_angle_deg(theta_deg),
            kind: CrackKind::Interior,
        }
    }

    /// Zero-length, vertical stand-in for a lateral sample edge.
    pub fn boundary(id: usize, side: Side, geometry: &SampleGeometry) -> Self {
        Self {
            id,
            center: Point::new(side.x(geometry), geometry.h / 2.0),
            length: 0.0,
            theta_deg: 90.0,
            kind: match side {
                Side::Left => CrackKind::BoundaryLeft,
                Side::Right => CrackKind::BoundaryRight,
            },
        }
    }

    pub fn is_interior(&self) -> bool {
        self.kind.is_interior()
    }

    pub fn side(&self) -> Option<Side> {
        match self.kind {
            CrackKind::Interior => None,
            CrackKind::BoundaryLeft => Some(Side::Left),
            CrackKind::BoundaryRight => Some(Side::Right),
        }
    }

    pub fn theta_rad(&self) -> f64 {
        self.theta_deg.to_radians()
    }
}

#[derive(Serialize, Deserialize)]
struct CrackRecord {
    id: usize,
    cx: f64,
    cy: f64,
    length: f64,
    theta_deg: f64,
    #[serde(default = "interior_kind", skip_serializing_if = "CrackKind::is_interior_ref")]
    kind: CrackKind,
}

fn interior_kind() -> CrackKind {
    CrackKind::Interior
}

impl CrackKind {
    fn is_interior_ref(kind: &CrackKind) -> bool {
        kind.is_interior()
    }
}

impl From<CrackRecord> for Crack {
    fn from(r: CrackRecord) -> Self {
        Self {
            id: r.id,
            center: Point::new(r.cx, r.cy),
            length: r.length,
            theta_deg: r.theta_deg,
            kind: r.kind,
        }
    }
}

impl From<Crack> for CrackRecord {
    fn from(c: Crack) -> Self {
        Self {
            id: c.id,
            cx: c.center.x,
            cy: c.center.y,
            length: c.length,
            theta_deg: c.theta_deg,
            kind: c.kind,
        }
    }
}

/// Folds an angle in degrees into `[0, 180)`.
pub fn normalize_angle_deg(theta: f64) -> f64 {
    let t = theta.rem_euclid(180.0);
    if t >= 180.0 {
        0.0
    } else {
        t
    }
}

/// One randomized sample: geometry, material and crack population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub geometry: SampleGeometry,
    pub material: MaterialParams,
    pub cracks: Vec<Crack>,
}

impl Scenario {
    pub fn new(
        seed: u64,
        geometry: SampleGeometry,
        material: MaterialParams,
        cracks: Vec<Crack>,
    ) -> Result<Self> {
        let s = Self {
            seed,
            geometry,
            material,
            cracks,
        };
        s.validate()?;
        Ok(s)
    }

    /// Scenario with the given interior cracks plus the two boundary
    /// pseudo-cracks, which take the next free ids.
    pub fn with_boundaries(
        seed: u64,
        geometry: SampleGeometry,
        material: MaterialParams,
        interior: Vec<Crack>,
    ) -> Result<Self> {
        let next = interior.iter().map(|c| c.id + 1).max().unwrap_or(0);
        let mut cracks = interior;
        cracks.push(Crack::boundary(next, Side::Left, &geometry));
        cracks.push(Crack::boundary(next + 1, Side::Right, &geometry));
        Self::new(seed, geometry, material, cracks)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.material.validate()?;
        let mut ids: Vec<usize> = self.cracks.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidScenario("duplicate crack ids".into()));
        }
        let boundaries = self.cracks.iter().filter(|c| !c.is_interior()).count();
        if boundaries != 0 && boundaries != 2 {
            return Err(Error::InvalidScenario(format!(
                "expected 0 or 2 boundary pseudo-cracks, found {boundaries}"
            )));
        }
        for c in &self.cracks {
            if !(c.theta_deg >= 0.0 && c.theta_deg < 180.0) {
                return Err(Error::InvalidScenario(format!(
                    "crack {} orientation {} outside [0, 180)",
                    c.id, c.theta_deg
                )));
            }
            match c.kind {
                CrackKind::Interior => {
                    if !(c.length > 0.0) {
                        return Err(Error::InvalidScenario(format!(
                            "interior crack {} must have positive length",
                            c.id
                        )));
                    }
                    let (a, b) = crate::geometry::tip_positions(c)?;
                    let tol = 1e-9;
                    let inside = |p: Point| {
                        p.x >= -tol
                            && p.x <= self.geometry.w + tol
                            && p.y >= -tol
                            && p.y <= self.geometry.h + tol
                    };
                    if !(inside(a) && inside(b)) {
                        return Err(Error::InvalidScenario(format!(
                            "crack {} extends outside the sample",
                            c.id
                        )));
                    }
                }
                _ => {
                    if c.length != 0.0 || c.theta_deg != 90.0 {
                        return Err(Error::InvalidScenario(format!(
                            "boundary pseudo-crack {} must have zero length and 90° orientation",
                            c.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn interior(&self) -> impl Iterator<Item = &Crack> + '_ {
        self.cracks.iter().filter(|c| c.is_interior())
    }

    pub fn interior_count(&self) -> usize {
        self.interior().count()
    }

    pub fn crack(&self, id: usize) -> Option<&Crack> {
        self.cracks.iter().find(|c| c.id == id)
    }

    pub fn boundary(&self, side: Side) -> Option<&Crack> {
        self.cracks.iter().find(|c| c.side() == Some(side))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(s)?;
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Interior cracks recruited by a width-spanning fracture, listed from the
/// left boundary to the right one.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailurePath {
    pub crack_ids: Vec<usize>,
    pub spanning: bool,
}

impl FailurePath {
    pub fn new(crack_ids: Vec<usize>, spanning: bool) -> Self {
        Self {
            crack_ids,
            spanning,
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.crack_ids.is_empty()
    }

    pub fn id_set(&self) -> std::collections::BTreeSet<usize> {
        self.crack_ids.iter().copied().collect()
    }

    /// Checks the path only names distinct interior cracks of `scenario`.
    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        let set = self.id_set();
        if set.len() != self.crack_ids.len() {
            return Err(Error::InvalidArgument("duplicate crack in failure path".into()));
        }
        for id in &self.crack_ids {
            match scenario.crack(*id) {
                Some(c) if c.is_interior() => {}
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "failure path names unknown or boundary crack {id}"
                    )))
                }
            }
        }
        Ok(())
    }
}
