//! Camera models, pixel/ray conversions, ERP angular conventions, and
//! spherical geodesic distance.
//!
//! Shared frame convention: x right, y up, z forward. Image rows grow
//! downward, so a ray with positive y lands above the principal point.
//! The equirectangular grid samples pixel centers: latitude spans π across
//! the rows (`+π/2` at the top edge), longitude spans 2π across the columns
//! (`−π` at the left edge).

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `‖ray‖ = 1` accepted by [`project`].
pub const UNIT_RAY_TOL: f64 = 1e-9;

/// Newton solve for Kannala-Brandt unprojection: residual tolerance on the
/// normalized radius and iteration cap.
const KB_NEWTON_TOL: f64 = 1e-12;
const KB_NEWTON_MAX_ITER: usize = 50;

/// Continuous image location in pixel units, `(row, col)` with `(0, 0)` at
/// the center of the top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub row: f64,
    pub col: f64,
}

impl Pixel {
    pub fn new(row: f64, col: f64) -> Self {
        Self { row, col }
    }
}

/// A viewing direction on the unit sphere.
///
/// `theta` is the longitude in `[−π, π)`, `phi` the latitude in
/// `[−π/2, π/2]` with 0 at the equator and `+π/2` at the top pole. The
/// corresponding unit ray is `(cosφ·sinθ, sinφ, cosφ·cosθ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalDirection {
    pub theta: f64,
    pub phi: f64,
}

impl SphericalDirection {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    pub fn unit_vector(&self) -> Vector3<f64> {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vector3::new(cp * st, sp, cp * ct)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        let norm = v.norm();
        let phi = (v.y / norm).clamp(-1.0, 1.0).asin();
        let mut theta = v.x.atan2(v.z);
        if theta >= std::f64::consts::PI {
            theta = -std::f64::consts::PI;
        }
        Self { theta, phi }
    }
}

/// Camera intrinsics for the supported projection models.
#[derive(Debug, Clone, PartialEq)]
pub enum CameraModel {
    Pinhole {
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    },
    /// Kannala-Brandt fisheye: radius `r(ϑ) = ϑ + k1·ϑ³ + k2·ϑ⁵ + k3·ϑ⁷ + k4·ϑ⁹`
    /// in normalized units, with `ϑ` the angle from the optical axis.
    KannalaBrandt {
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        k: [f64; 4],
        width: usize,
        height: usize,
    },
    /// Unified/MEI model with mirror parameter `xi` (distortion terms zero):
    /// perspective projection of the point shifted by `xi` along the axis.
    UnifiedMei {
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        xi: f64,
        width: usize,
        height: usize,
    },
    Equirect {
        width: usize,
        height: usize,
    },
}

impl CameraModel {
    pub fn width(&self) -> usize {
        match self {
            Self::Pinhole { width, .. }
            | Self::KannalaBrandt { width, .. }
            | Self::UnifiedMei { width, .. }
            | Self::Equirect { width, .. } => *width,
        }
    }

    pub fn height(&self) -> usize {
        match self {
            Self::Pinhole { height, .. }
            | Self::KannalaBrandt { height, .. }
            | Self::UnifiedMei { height, .. }
            | Self::Equirect { height, .. } => *height,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Pinhole { .. } => "pinhole",
            Self::KannalaBrandt { .. } => "kb",
            Self::UnifiedMei { .. } => "mei",
            Self::Equirect { .. } => "erp",
        }
    }

    fn validate(&self) -> Result<()> {
        let check_core = |fx: f64, fy: f64, cx: f64, cy: f64, w: usize, h: usize| -> Result<()> {
            if !(fx > 0.0 && fy > 0.0) {
                return Err(Error::Config("focal lengths must be positive".into()));
            }
            if !(0.0..w as f64).contains(&cx) || !(0.0..h as f64).contains(&cy) {
                return Err(Error::Config(
                    "principal point must lie inside the image".into(),
                ));
            }
            if w == 0 || h == 0 {
                return Err(Error::Config("image size must be nonzero".into()));
            }
            Ok(())
        };
        match self {
            Self::Pinhole {
                fx,
                fy,
                cx,
                cy,
                width,
                height,
            } => check_core(*fx, *fy, *cx, *cy, *width, *height),
            Self::KannalaBrandt {
                fx,
                fy,
                cx,
                cy,
                k,
                width,
                height,
            } => {
                if k.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("distortion coefficients must be finite".into()));
                }
                check_core(*fx, *fy, *cx, *cy, *width, *height)
            }
            Self::UnifiedMei {
                fx,
                fy,
                cx,
                cy,
                xi,
                width,
                height,
            } => {
                if !xi.is_finite() {
                    return Err(Error::Config("xi must be finite".into()));
                }
                check_core(*fx, *fy, *cx, *cy, *width, *height)
            }
            Self::Equirect { width, height } => {
                if *width == 0 || *height == 0 {
                    return Err(Error::Config("image size must be nonzero".into()));
                }
                Ok(())
            }
        }
    }

    /// Parse a camera description from its JSON document. Unknown keys and
    /// keys irrelevant to the declared kind are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: CameraJson = serde_json::from_str(text)?;
        raw.into_model()
    }

    /// Canonical JSON form, stable across runs; also the string hashed into
    /// lookup-table fingerprints.
    pub fn to_json(&self) -> String {
        let raw = CameraJson::from_model(self);
        serde_json::to_string(&raw).expect("camera serialization cannot fail")
    }
}

/// Wire schema for camera JSON documents.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraJson {
    kind: String,
    width: usize,
    height: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    fx: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cx: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    xi: Option<f64>,
}

impl CameraJson {
    fn into_model(self) -> Result<CameraModel> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Config(format!("camera kind '{}' requires '{}'", self.kind, name)))
        };
        let reject = |present: bool, name: &str| -> Result<()> {
            if present {
                Err(Error::Config(format!(
                    "camera kind '{}' does not take '{}'",
                    self.kind, name
                )))
            } else {
                Ok(())
            }
        };
        let model = match self.kind.as_str() {
            "pinhole" => {
                reject(self.k.is_some(), "k")?;
                reject(self.xi.is_some(), "xi")?;
                CameraModel::Pinhole {
                    fx: need(self.fx, "fx")?,
                    fy: need(self.fy, "fy")?,
                    cx: need(self.cx, "cx")?,
                    cy: need(self.cy, "cy")?,
                    width: self.width,
                    height: self.height,
                }
            }
            "kb" => {
                reject(self.xi.is_some(), "xi")?;
                CameraModel::KannalaBrandt {
                    fx: need(self.fx, "fx")?,
                    fy: need(self.fy, "fy")?,
                    cx: need(self.cx, "cx")?,
                    cy: need(self.cy, "cy")?,
                    k: self
                        .k
                        .ok_or_else(|| Error::Config("camera kind 'kb' requires 'k'".into()))?,
                    width: self.width,
                    height: self.height,
                }
            }
            "mei" => {
                reject(self.k.is_some(), "k")?;
                CameraModel::UnifiedMei {
                    fx: need(self.fx, "fx")?,
                    fy: need(self.fy, "fy")?,
                    cx: need(self.cx, "cx")?,
                    cy: need(self.cy, "cy")?,
                    xi: self
                        .xi
                        .ok_or_else(|| Error::Config("camera kind 'mei' requires 'xi'".into()))?,
                    width: self.width,
                    height: self.height,
                }
            }
            "erp" => {
                reject(self.fx.is_some(), "fx")?;
                reject(self.fy.is_some(), "fy")?;
                reject(self.cx.is_some(), "cx")?;
                reject(self.cy.is_some(), "cy")?;
                reject(self.k.is_some(), "k")?;
                reject(self.xi.is_some(), "xi")?;
                CameraModel::Equirect {
                    width: self.width,
                    height: self.height,
                }
            }
            other => {
                return Err(Error::Config(format!("unknown camera kind '{other}'")));
            }
        };
        model.validate()?;
        Ok(model)
    }

    fn from_model(model: &CameraModel) -> Self {
        let (fx, fy, cx, cy, k, xi) = match model {
            CameraModel::Pinhole { fx, fy, cx, cy, .. } => {
                (Some(*fx), Some(*fy), Some(*cx), Some(*cy), None, None)
            }
            CameraModel::KannalaBrandt {
                fx, fy, cx, cy, k, ..
            } => (Some(*fx), Some(*fy), Some(*cx), Some(*cy), Some(*k), None),
            CameraModel::UnifiedMei {
                fx, fy, cx, cy, xi, ..
            } => (Some(*fx), Some(*fy), Some(*cx), Some(*cy), None, Some(*xi)),
            CameraModel::Equirect { .. } => (None, None, None, None, None, None),
        };
        Self {
            kind: model.kind_name().to_string(),
            width: model.width(),
            height: model.height(),
            fx,
            fy,
            cx,
            cy,
            k,
            xi,
        }
    }
}

/// Direction sampled at the center of an integer ERP pixel.
///
/// `phi = π·(0.5 − (row + 0.5)/H)`, `theta = 2π·((col + 0.5)/W) − π`.
pub fn erp_pixel_to_direction(
    pixel: (usize, usize),
    size: (usize, usize),
) -> Result<SphericalDirection> {
    let (row, col) = pixel;
    let (h, w) = size;
    if row >= h || col >= w {
        return Err(Error::Domain(format!(
            "pixel ({row}, {col}) outside {h}x{w} grid"
        )));
    }
    Ok(erp_continuous_to_direction(row as f64, col as f64, size))
}

/// Continuous variant of the ERP pixel-center convention.
pub fn erp_continuous_to_direction(row: f64, col: f64, size: (usize, usize)) -> SphericalDirection {
    let (h, w) = size;
    let phi = std::f64::consts::PI * (0.5 - (row + 0.5) / h as f64);
    let theta = 2.0 * std::f64::consts::PI * ((col + 0.5) / w as f64) - std::f64::consts::PI;
    SphericalDirection::new(theta, phi.clamp(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2))
}

/// Inverse of [`erp_pixel_to_direction`]; fractional results support
/// interpolation. Rows are clamped to `[−0.5, H−0.5]` so pole directions
/// stay on the image boundary.
pub fn direction_to_erp_pixel(d: &SphericalDirection, size: (usize, usize)) -> Pixel {
    let (h, w) = size;
    let row = h as f64 * (0.5 - d.phi / std::f64::consts::PI) - 0.5;
    let col = w as f64 * (d.theta + std::f64::consts::PI) / (2.0 * std::f64::consts::PI) - 0.5;
    Pixel::new(row.clamp(-0.5, h as f64 - 0.5), col)
}

/// Kannala-Brandt radius polynomial and its derivative.
fn kb_radius(theta: f64, k: &[f64; 4]) -> f64 {
    let t2 = theta * theta;
    theta * (1.0 + t2 * (k[0] + t2 * (k[1] + t2 * (k[2] + t2 * k[3]))))
}

fn kb_radius_derivative(theta: f64, k: &[f64; 4]) -> f64 {
    let t2 = theta * theta;
    1.0 + t2 * (3.0 * k[0] + t2 * (5.0 * k[1] + t2 * (7.0 * k[2] + t2 * 9.0 * k[3])))
}

/// Project a unit ray into the camera, or `None` when the ray cannot reach
/// the image plane (behind a pinhole, below the MEI denominator cutoff).
pub fn project(cam: &CameraModel, ray: &Vector3<f64>) -> Result<Option<Pixel>> {
    if (ray.norm() - 1.0).abs() > UNIT_RAY_TOL {
        return Err(Error::Domain(format!(
            "ray norm {} deviates from 1 by more than {UNIT_RAY_TOL}",
            ray.norm()
        )));
    }
    Ok(match cam {
        CameraModel::Pinhole { fx, fy, cx, cy, .. } => {
            if ray.z <= 0.0 {
                None
            } else {
                Some(Pixel::new(cy - fy * ray.y / ray.z, cx + fx * ray.x / ray.z))
            }
        }
        CameraModel::KannalaBrandt {
            fx, fy, cx, cy, k, ..
        } => {
            let rho = ray.x.hypot(ray.y);
            let theta = rho.atan2(ray.z);
            if rho < 1e-15 {
                // Azimuth is undefined on the axis: forward maps to the
                // principal point, backward maps to a circle, not a point.
                if ray.z > 0.0 {
                    Some(Pixel::new(*cy, *cx))
                } else {
                    None
                }
            } else {
                let r = kb_radius(theta, k);
                Some(Pixel::new(
                    cy - fy * r * (ray.y / rho),
                    cx + fx * r * (ray.x / rho),
                ))
            }
        }
        CameraModel::UnifiedMei {
            fx, fy, cx, cy, xi, ..
        } => {
            let denom = ray.z + xi;
            if denom <= 0.0 {
                None
            } else {
                Some(Pixel::new(
                    cy - fy * ray.y / denom,
                    cx + fx * ray.x / denom,
                ))
            }
        }
        CameraModel::Equirect { width, height } => {
            let d = SphericalDirection::from_vector(ray);
            Some(direction_to_erp_pixel(&d, (*height, *width)))
        }
    })
}

/// Invert the projection at a continuous pixel, returning a unit ray.
///
/// Kannala-Brandt inversion solves `r(ϑ) = r_obs` by Newton iteration seeded
/// at the observed normalized radius.
pub fn unproject(cam: &CameraModel, p: &Pixel) -> Result<Vector3<f64>> {
    match cam {
        CameraModel::Pinhole { fx, fy, cx, cy, .. } => {
            let mx = (p.col - cx) / fx;
            let my = (cy - p.row) / fy;
            Ok(Vector3::new(mx, my, 1.0).normalize())
        }
        CameraModel::KannalaBrandt {
            fx, fy, cx, cy, k, ..
        } => {
            let mx = (p.col - cx) / fx;
            let my = (cy - p.row) / fy;
            let r_obs = mx.hypot(my);
            if r_obs < 1e-15 {
                return Ok(Vector3::new(0.0, 0.0, 1.0));
            }
            let mut theta = r_obs;
            let mut residual = kb_radius(theta, k) - r_obs;
            let mut iterations = 0;
            while residual.abs() > KB_NEWTON_TOL {
                if iterations >= KB_NEWTON_MAX_ITER {
                    return Err(Error::Numeric(format!(
                        "KB unprojection did not converge in {KB_NEWTON_MAX_ITER} iterations (residual {residual:.3e})"
                    )));
                }
                let slope = kb_radius_derivative(theta, k);
                if slope.abs() < 1e-15 {
                    return Err(Error::Numeric(
                        "KB unprojection hit a flat radius polynomial".into(),
                    ));
                }
                theta -= residual / slope;
                residual = kb_radius(theta, k) - r_obs;
                iterations += 1;
            }
            let (st, ct) = theta.sin_cos();
            Ok(Vector3::new(st * mx / r_obs, st * my / r_obs, ct))
        }
        CameraModel::UnifiedMei {
            fx, fy, cx, cy, xi, ..
        } => {
            let mx = (p.col - cx) / fx;
            let my = (cy - p.row) / fy;
            let r2 = mx * mx + my * my;
            let disc = 1.0 + (1.0 - xi * xi) * r2;
            if disc < 0.0 {
                return Err(Error::Domain(
                    "pixel outside the valid MEI unprojection region".into(),
                ));
            }
            let factor = (xi + disc.sqrt()) / (1.0 + r2);
            Ok(Vector3::new(factor * mx, factor * my, factor - xi).normalize())
        }
        CameraModel::Equirect { width, height } => {
            let d = erp_continuous_to_direction(p.row, p.col, (*height, *width));
            Ok(d.unit_vector())
        }
    }
}

/// Great-circle distance between two directions, in radians.
///
/// `arccos(sinφ₁·sinφ₂ + cosφ₁·cosφ₂·cos Δθ)`, with the argument clamped to
/// the arccos domain to absorb floating-point drift near identical
/// directions. The result lies in `[0, π]`.
pub fn geodesic_distance(a: &SphericalDirection, b: &SphericalDirection) -> f64 {
    let cos_g = a.phi.sin() * b.phi.sin() + a.phi.cos() * b.phi.cos() * (a.theta - b.theta).cos();
    cos_g.clamp(-1.0, 1.0).acos()
}
