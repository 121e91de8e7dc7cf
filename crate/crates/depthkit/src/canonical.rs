//! Resampling of source-camera images and depth maps into the canonical ERP
//! space: cached lookup tables, validity masks, and FoV-aligned cropping.

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{self, CameraModel};
use crate::grid::{DepthMap, Grid};

/// Sentinel stored in place of source coordinates for invalid entries.
pub const INVALID_COORD: f32 = -1.0;

/// Interpolation mode for [`ErpLookupTable::resample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMode {
    /// Recommended for depth: never blends across discontinuities.
    Nearest,
    Bilinear,
}

/// Per-ERP-pixel continuous source coordinates for one (camera, ERP size,
/// FoV limits) combination.
///
/// An entry is valid exactly when the ERP ray projects into the source
/// camera, lands inside the source image extent `[−0.5, size−0.5]`, and
/// satisfies the FoV limits. Coordinates are stored as `f32` to match the
/// on-disk record layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ErpLookupTable {
    pub erp_size: (usize, usize),
    pub src_size: (usize, usize),
    /// `(row, col)` into the source image; `(-1, -1)` when invalid.
    pub coords: Grid<(f32, f32)>,
    pub valid: Grid<bool>,
    /// SHA-256 over (camera JSON, ERP size, FoV limits).
    pub fingerprint: [u8; 32],
}

/// Content hash identifying a lookup table build.
pub fn table_fingerprint(
    cam: &CameraModel,
    erp_size: (usize, usize),
    fov_limits: Option<(f64, f64)>,
) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(cam.to_json().as_bytes());
    hasher.update((erp_size.0 as u32).to_le_bytes());
    hasher.update((erp_size.1 as u32).to_le_bytes());
    match fov_limits {
        Some((theta_max, phi_max)) => {
            hasher.update([1u8]);
            hasher.update(theta_max.to_le_bytes());
            hasher.update(phi_max.to_le_bytes());
        }
        None => hasher.update([0u8]),
    }
    hasher.finalize().into()
}

/// For every ERP pixel, project its direction into the source camera and
/// record the continuous source coordinate, or mark the entry invalid when
/// the projection fails, falls outside the source bounds, or exceeds the
/// optional `(θ_max, φ_max)` limits.
pub fn build_lookup_table(
    src: &CameraModel,
    erp_size: (usize, usize),
    fov_limits: Option<(f64, f64)>,
) -> Result<ErpLookupTable> {
    let (erp_h, erp_w) = erp_size;
    if erp_h < 2 || erp_w < 4 {
        return Err(Error::Config(format!(
            "ERP size {erp_h}x{erp_w} below the 2x4 minimum"
        )));
    }
    let src_size = (src.height(), src.width());
    let (src_h, src_w) = (src_size.0 as f64, src_size.1 as f64);

    let entries: Vec<(f32, f32, bool)> = (0..erp_h * erp_w)
        .into_par_iter()
        .map(|idx| {
            let (row, col) = (idx / erp_w, idx % erp_w);
            let dir = geometry::erp_continuous_to_direction(row as f64, col as f64, erp_size);
            if let Some((theta_max, phi_max)) = fov_limits {
                if dir.theta.abs() > theta_max || dir.phi.abs() > phi_max {
                    return (INVALID_COORD, INVALID_COORD, false);
                }
            }
            let ray = dir.unit_vector();
            match geometry::project(src, &ray) {
                Ok(Some(p))
                    if p.row >= -0.5
                        && p.row <= src_h - 0.5
                        && p.col >= -0.5
                        && p.col <= src_w - 0.5 =>
                {
                    (p.row as f32, p.col as f32, true)
                }
                _ => (INVALID_COORD, INVALID_COORD, false),
            }
        })
        .collect();

    let coords = Grid::from_vec(
        erp_h,
        erp_w,
        entries.iter().map(|(r, c, _)| (*r, *c)).collect(),
    )?;
    let valid = Grid::from_vec(erp_h, erp_w, entries.iter().map(|(_, _, v)| *v).collect())?;
    Ok(ErpLookupTable {
        erp_size,
        src_size,
        coords,
        valid,
        fingerprint: table_fingerprint(src, erp_size, fov_limits),
    })
}

fn nearest_index(coord: f32, len: usize) -> usize {
    (coord.round() as i64).clamp(0, len as i64 - 1) as usize
}

impl ErpLookupTable {
    fn check_src_shape(&self, shape: (usize, usize)) -> Result<()> {
        if shape != self.src_size {
            return Err(Error::Shape(format!(
                "source image {:?} does not match table source size {:?}",
                shape, self.src_size
            )));
        }
        Ok(())
    }

    /// Pull a scalar source image into ERP space.
    ///
    /// Invalid ERP pixels carry the sentinel value 0 with `valid = false`.
    /// Bilinear output is additionally marked invalid where the 2×2 source
    /// neighborhood would leave the pixel grid, so interpolation never
    /// extrapolates; nearest output follows the table validity.
    pub fn resample(&self, src: &Grid<f64>, mode: ResampleMode) -> Result<(Grid<f64>, Grid<bool>)> {
        self.check_src_shape(src.shape())?;
        let (src_h, src_w) = self.src_size;
        let mut out = Grid::filled(self.erp_size.0, self.erp_size.1, 0.0f64);
        let mut mask = Grid::filled(self.erp_size.0, self.erp_size.1, false);
        for (row, col, &(sr, sc)) in self.coords.iter_indexed() {
            if !self.valid[(row, col)] {
                continue;
            }
            match mode {
                ResampleMode::Nearest => {
                    let r = nearest_index(sr, src_h);
                    let c = nearest_index(sc, src_w);
                    out.set(row, col, src[(r, c)]);
                    mask.set(row, col, true);
                }
                ResampleMode::Bilinear => {
                    let (sr, sc) = (sr as f64, sc as f64);
                    if sr < 0.0 || sr > (src_h - 1) as f64 || sc < 0.0 || sc > (src_w - 1) as f64 {
                        continue;
                    }
                    let r0 = sr.floor() as usize;
                    let c0 = sc.floor() as usize;
                    let r1 = (r0 + 1).min(src_h - 1);
                    let c1 = (c0 + 1).min(src_w - 1);
                    let fr = sr - r0 as f64;
                    let fc = sc - c0 as f64;
                    let top = src[(r0, c0)] * (1.0 - fc) + src[(r0, c1)] * fc;
                    let bottom = src[(r1, c0)] * (1.0 - fc) + src[(r1, c1)] * fc;
                    out.set(row, col, top * (1.0 - fr) + bottom * fr);
                    mask.set(row, col, true);
                }
            }
        }
        Ok((out, mask))
    }

    /// Depth-aware variant: the source validity mask propagates. Nearest
    /// copies the nearest source pixel's validity; bilinear requires all
    /// contributing neighbors valid.
    pub fn resample_depth(&self, src: &DepthMap, mode: ResampleMode) -> Result<DepthMap> {
        self.check_src_shape(src.shape())?;
        let (src_h, src_w) = self.src_size;
        let mut out = Grid::filled(self.erp_size.0, self.erp_size.1, 0.0f64);
        let mut mask = Grid::filled(self.erp_size.0, self.erp_size.1, false);
        for (row, col, &(sr, sc)) in self.coords.iter_indexed() {
            if !self.valid[(row, col)] {
                continue;
            }
            match mode {
                ResampleMode::Nearest => {
                    let r = nearest_index(sr, src_h);
                    let c = nearest_index(sc, src_w);
                    if src.valid[(r, c)] {
                        out.set(row, col, src.values[(r, c)]);
                        mask.set(row, col, true);
                    }
                }
                ResampleMode::Bilinear => {
                    let (sr, sc) = (sr as f64, sc as f64);
                    if sr < 0.0 || sr > (src_h - 1) as f64 || sc < 0.0 || sc > (src_w - 1) as f64 {
                        continue;
                    }
                    let r0 = sr.floor() as usize;
                    let c0 = sc.floor() as usize;
                    let r1 = (r0 + 1).min(src_h - 1);
                    let c1 = (c0 + 1).min(src_w - 1);
                    if !(src.valid[(r0, c0)]
                        && src.valid[(r0, c1)]
                        && src.valid[(r1, c0)]
                        && src.valid[(r1, c1)])
                    {
                        continue;
                    }
                    let fr = sr - r0 as f64;
                    let fc = sc - c0 as f64;
                    let top = src.values[(r0, c0)] * (1.0 - fc) + src.values[(r0, c1)] * fc;
                    let bottom = src.values[(r1, c0)] * (1.0 - fc) + src.values[(r1, c1)] * fc;
                    out.set(row, col, top * (1.0 - fr) + bottom * fr);
                    mask.set(row, col, true);
                }
            }
        }
        DepthMap::new(out, mask)
    }
}

fn round_to_even(x: f64) -> usize {
    ((x / 2.0).round() as i64).max(0) as usize * 2
}

/// Centered angular crop of a full-sphere ERP map (extent `(π, π/2)` in
/// half-angles). See [`fov_aligned_crop_from`] for cropping maps that are
/// themselves crops.
pub fn fov_aligned_crop(d: &DepthMap, theta_half: f64, phi_half: f64) -> Result<DepthMap> {
    fov_aligned_crop_from(
        d,
        (std::f64::consts::PI, std::f64::consts::FRAC_PI_2),
        theta_half,
        phi_half,
    )
}

/// Centered sub-grid whose angular extent is `(2·θ_half, 2·φ_half)`, taken
/// from a map whose own half-extents are `input_extent`. Row/column counts
/// round to the nearest even integers; requesting the full input extent
/// returns an identity copy.
pub fn fov_aligned_crop_from(
    d: &DepthMap,
    input_extent: (f64, f64),
    theta_half: f64,
    phi_half: f64,
) -> Result<DepthMap> {
    let (theta_in, phi_in) = input_extent;
    if !(theta_half > 0.0 && theta_half <= std::f64::consts::PI) {
        return Err(Error::Config("theta_half must lie in (0, pi]".into()));
    }
    if !(phi_half > 0.0 && phi_half <= std::f64::consts::FRAC_PI_2) {
        return Err(Error::Config("phi_half must lie in (0, pi/2]".into()));
    }
    if theta_half > theta_in + 1e-12 || phi_half > phi_in + 1e-12 {
        return Err(Error::Range(format!(
            "requested extent ({theta_half}, {phi_half}) exceeds input extent ({theta_in}, {phi_in})"
        )));
    }
    let (h, w) = d.shape();
    if theta_half >= theta_in - 1e-12 && phi_half >= phi_in - 1e-12 {
        return Ok(d.clone());
    }
    let rows = round_to_even(h as f64 * phi_half / phi_in).min(h);
    let cols = round_to_even(w as f64 * theta_half / theta_in).min(w);
    if rows == 0 || cols == 0 {
        return Err(Error::Range("requested crop collapses to zero pixels".into()));
    }
    let row0 = (h - rows) / 2;
    let col0 = (w - cols) / 2;
    let values = Grid::from_fn(rows, cols, |r, c| d.values[(row0 + r, col0 + c)]);
    let valid = Grid::from_fn(rows, cols, |r, c| d.valid[(row0 + r, col0 + c)]);
    DepthMap::new(values, valid)
}
