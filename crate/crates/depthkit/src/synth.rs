//! Analytic ground-truth scenes (indoor box room, outdoor ground plane)
//! rendered into arbitrary camera models, plus fixtures that exercise the
//! full relative-to-metric pipeline without any trained network.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgse::{self, ScaleField};
use crate::error::{Error, Result};
use crate::geometry::{self, CameraModel, Pixel};
use crate::grid::{DepthMap, Grid};

/// Analytic scene description. The camera rotation is fixed to identity;
/// only its position varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneSpec {
    /// Axis-aligned room `[-hx, hx] × [-hy, hy] × [-hz, hz]` viewed from a
    /// camera strictly inside it.
    BoxRoom {
        half_extents: [f64; 3],
        camera_pos: [f64; 3],
    },
    /// Infinite plane at `y = ground_offset` viewed from a camera at
    /// `y = camera_height` above it. Upward rays see sky (invalid).
    GroundPlane {
        camera_height: f64,
        ground_offset: f64,
    },
}

impl SceneSpec {
    pub fn unit_box() -> Self {
        Self::BoxRoom {
            half_extents: [1.0, 1.0, 1.0],
            camera_pos: [0.0, 0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::BoxRoom {
                half_extents,
                camera_pos,
            } => {
                if half_extents.iter().any(|h| !(*h > 0.0)) {
                    return Err(Error::Config("box half-extents must be positive".into()));
                }
                for axis in 0..3 {
                    if camera_pos[axis].abs() >= half_extents[axis] {
                        return Err(Error::Config(format!(
                            "camera axis {axis} at {} not strictly inside half-extent {}",
                            camera_pos[axis], half_extents[axis]
                        )));
                    }
                }
                Ok(())
            }
            Self::GroundPlane {
                camera_height,
                ground_offset,
            } => {
                if !(*camera_height > *ground_offset) {
                    return Err(Error::Config(
                        "camera must sit strictly above the ground plane".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Euclidean distance along `ray` (unit) to the first surface hit, or
    /// `None` for sky.
    pub fn ray_depth(&self, ray: &Vector3<f64>) -> Option<f64> {
        match self {
            Self::BoxRoom {
                half_extents,
                camera_pos,
            } => {
                // camera inside a convex box: first hit is the nearest slab exit
                let mut t = f64::INFINITY;
                for axis in 0..3 {
                    let dir = ray[axis];
                    if dir > 1e-15 {
                        t = t.min((half_extents[axis] - camera_pos[axis]) / dir);
                    } else if dir < -1e-15 {
                        t = t.min((-half_extents[axis] - camera_pos[axis]) / dir);
                    }
                }
                t.is_finite().then_some(t)
            }
            Self::GroundPlane {
                camera_height,
                ground_offset,
            } => {
                if ray.y < 0.0 {
                    Some((ground_offset - camera_height) / ray.y)
                } else {
                    None
                }
            }
        }
    }
}

/// Render the per-pixel Euclidean ray distance seen by `cam`.
///
/// Pixels whose rays miss the scene (sky) or cannot be unprojected are
/// invalid. Depth is ray distance, not planar z: the ERP grid has no single
/// optical axis to measure z against.
pub fn render_depth(scene: &SceneSpec, cam: &CameraModel) -> Result<DepthMap> {
    scene.validate()?;
    let (h, w) = (cam.height(), cam.width());
    let pixels: Vec<(f64, bool)> = (0..h * w)
        .into_par_iter()
        .map(|idx| {
            let pixel = Pixel::new((idx / w) as f64, (idx % w) as f64);
            match geometry::unproject(cam, &pixel) {
                Ok(ray) => match scene.ray_depth(&ray) {
                    Some(d) if d.is_finite() && d > 0.0 => (d, true),
                    _ => (0.0, false),
                },
                Err(_) => (0.0, false),
            }
        })
        .collect();
    DepthMap::new(
        Grid::from_vec(h, w, pixels.iter().map(|(d, _)| *d).collect())?,
        Grid::from_vec(h, w, pixels.iter().map(|(_, v)| *v).collect())?,
    )
}

/// Smooth separable multiplicative warp with values in
/// `[1/(1+amplitude), 1+amplitude]`.
///
/// The field is `(1+a)^e` with `e` a product of cosines whose frequencies
/// and phases derive from the seed; non-integer frequencies skew the
/// exponent distribution so a single median scale cannot absorb the warp.
pub fn smooth_warp_field(shape: (usize, usize), amplitude: f64, seed: u64) -> Result<Grid<f64>> {
    if !(amplitude >= 0.0) {
        return Err(Error::Config("warp amplitude must be non-negative".into()));
    }
    let (h, w) = shape;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let freq_u: f64 = rng.gen_range(0.6..1.6);
    let freq_v: f64 = rng.gen_range(0.6..1.6);
    let phase_u: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let phase_v: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let base = 1.0 + amplitude;
    Ok(Grid::from_fn(h, w, |r, c| {
        let eu = (std::f64::consts::TAU * freq_u * (r as f64 + 0.5) / h as f64 + phase_u).cos();
        let ev = (std::f64::consts::TAU * freq_v * (c as f64 + 0.5) / w as f64 + phase_v).cos();
        base.powf(eu * ev)
    }))
}

/// Multiply a depth map by a per-pixel factor field.
pub fn apply_warp(d: &DepthMap, warp: &Grid<f64>) -> Result<DepthMap> {
    if d.shape() != warp.shape() {
        return Err(Error::Shape(format!(
            "warp {:?} does not match depth {:?}",
            warp.shape(),
            d.shape()
        )));
    }
    let values = Grid::from_fn(d.height(), d.width(), |r, c| {
        if d.valid[(r, c)] {
            d.values[(r, c)] * warp[(r, c)]
        } else {
            0.0
        }
    });
    DepthMap::new(values, d.valid.clone())
}

/// Median-pooled per-pixel ratio `gt/d_rel`: the best low-resolution scale
/// field the upsampler could be handed.
pub fn oracle_scale_field(gt: &DepthMap, d_rel: &DepthMap, r: usize) -> Result<ScaleField> {
    if gt.shape() != d_rel.shape() {
        return Err(Error::Shape(format!(
            "ground truth {:?} does not match relative depth {:?}",
            gt.shape(),
            d_rel.shape()
        )));
    }
    let values = Grid::from_fn(gt.height(), gt.width(), |r_, c| {
        if gt.valid[(r_, c)] && d_rel.valid[(r_, c)] && d_rel.values[(r_, c)] > 0.0 {
            gt.values[(r_, c)] / d_rel.values[(r_, c)]
        } else {
            0.0
        }
    });
    let valid = Grid::from_fn(gt.height(), gt.width(), |r_, c| {
        gt.valid[(r_, c)] && d_rel.valid[(r_, c)] && d_rel.values[(r_, c)] > 0.0
    });
    let pooled = dgse::median_pool(&DepthMap::new(values, valid)?, r)?;
    ScaleField::new(pooled.values)
}

/// Everything needed to drive the relative-to-metric pipeline on analytic
/// data: ERP ground truth, its median-normalized relative map, the pooled
/// oracle scale field (constant, equal to the removed median), a zero
/// shift, and the same scene rendered through the source camera for
/// canonicalization cross-checks.
#[derive(Debug, Clone)]
pub struct PipelineFixture {
    pub gt_erp: DepthMap,
    pub d_rel: DepthMap,
    pub median_scale: f64,
    pub oracle_s_r: ScaleField,
    pub shift: f64,
    pub src_depth: DepthMap,
}

pub fn make_pipeline_fixture(
    scene: &SceneSpec,
    cam_src: &CameraModel,
    erp_size: (usize, usize),
    r: usize,
) -> Result<PipelineFixture> {
    let erp_cam = CameraModel::Equirect {
        width: erp_size.1,
        height: erp_size.0,
    };
    let gt_erp = render_depth(scene, &erp_cam)?;
    let (d_rel, median_scale) = crate::depth::median_scale_normalize(&gt_erp)?;
    let oracle_s_r = oracle_scale_field(&gt_erp, &d_rel, r)?;
    let src_depth = render_depth(scene, cam_src)?;
    Ok(PipelineFixture {
        gt_erp,
        d_rel,
        median_scale,
        oracle_s_r,
        shift: 0.0,
        src_depth,
    })
}
