//! Rotary positional embeddings over token grids: the plain 2D variant and
//! the latitude-weighted variant for ERP inputs, plus the attention-logit
//! surface used to verify their relative-position behavior.

use crate::error::{Error, Result};
use crate::geometry;
use crate::grid::Grid;

/// Suggested pole attenuation floor when none is configured.
pub const DEFAULT_DELTA: f64 = 0.5;

/// `h·w` tokens of `d` channels each, with an optional CLS vector.
///
/// `d` must be divisible by 4: channels split into pairs, pairs alternate
/// between the row and column axes.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    height: usize,
    width: usize,
    channels: usize,
    tokens: Vec<f64>,
    cls: Option<Vec<f64>>,
}

impl TokenGrid {
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        if channels % 4 != 0 || channels == 0 {
            return Err(Error::Config(format!(
                "channel count {channels} must be a positive multiple of 4"
            )));
        }
        let mut tokens = Vec::with_capacity(height * width * channels);
        for row in 0..height {
            for col in 0..width {
                for ch in 0..channels {
                    let v = f(row, col, ch);
                    if !v.is_finite() {
                        return Err(Error::Config(format!(
                            "non-finite token entry at ({row}, {col}, {ch})"
                        )));
                    }
                    tokens.push(v);
                }
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            tokens,
            cls: None,
        })
    }

    pub fn with_cls(mut self, cls: Vec<f64>) -> Result<Self> {
        if cls.len() != self.channels {
            return Err(Error::Shape(format!(
                "CLS length {} does not match channel count {}",
                cls.len(),
                self.channels
            )));
        }
        if cls.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite CLS entry".into()));
        }
        self.cls = Some(cls);
        Ok(self)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn cls(&self) -> Option<&[f64]> {
        self.cls.as_deref()
    }

    #[inline]
    pub fn token(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.tokens[start..start + self.channels]
    }

    fn token_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let start = (row * self.width + col) * self.channels;
        &mut self.tokens[start..start + self.channels]
    }
}

/// Per-token rotation angles realizing (weighted) 2D rotary embeddings.
///
/// Slot `2k` of token `(u, v)` carries `w(φ_u)·u·ψ_k`, slot `2k+1` carries
/// `w(φ_u)·v·ψ_k`, with `w(φ) = δ + (1−δ)·cos φ` and `φ_u` the ERP latitude
/// of the token row at the grid's own resolution. `δ = 1` (or no δ)
/// reproduces the unweighted embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    height: usize,
    width: usize,
    channels: usize,
    /// h·w·(d/2) angles, row-major by token.
    phases: Vec<f64>,
    weights: Grid<f64>,
    delta: f64,
}

/// Latitude weight `w(φ) = δ + (1−δ)·cos φ`, bounded in `[δ, 1]`.
pub fn latitude_weight(phi: f64, delta: f64) -> f64 {
    delta + (1.0 - delta) * phi.cos()
}

/// Angular frequencies `ψ_k = 100^(−4k/d)` for `k = 0..d/4`.
pub fn frequencies(channels: usize) -> Result<Vec<f64>> {
    if channels % 4 != 0 || channels == 0 {
        return Err(Error::Config(format!(
            "channel count {channels} must be a positive multiple of 4"
        )));
    }
    Ok((0..channels / 4)
        .map(|k| 100f64.powf(-4.0 * k as f64 / channels as f64))
        .collect())
}

/// Build the phase field for an `h×w` token grid with `d` channels.
/// `delta = None` produces the plain 2D field (no latitude weighting).
pub fn build_phase_field(
    size: (usize, usize),
    channels: usize,
    delta: Option<f64>,
) -> Result<PhaseField> {
    let (h, w) = size;
    if h == 0 || w == 0 {
        return Err(Error::Config("empty token grid".into()));
    }
    if let Some(d) = delta {
        if !(d > 0.0 && d <= 1.0) {
            return Err(Error::Config(format!("delta {d} outside (0, 1]")));
        }
    }
    let freqs = frequencies(channels)?;
    let delta = delta.unwrap_or(1.0);

    let mut weights = Grid::filled(h, w, 0.0f64);
    let mut phases = Vec::with_capacity(h * w * channels / 2);
    for u in 0..h {
        let phi = geometry::erp_continuous_to_direction(u as f64, 0.0, (h, w)).phi;
        let weight = latitude_weight(phi, delta);
        for v in 0..w {
            weights.set(u, v, weight);
            for &psi in &freqs {
                phases.push(weight * u as f64 * psi);
                phases.push(weight * v as f64 * psi);
            }
        }
    }
    Ok(PhaseField {
        height: h,
        width: w,
        channels,
        phases,
        weights,
        delta,
    })
}

impl PhaseField {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    #[inline]
    pub fn phase(&self, row: usize, col: usize, slot: usize) -> f64 {
        self.phases[(row * self.width + col) * (self.channels / 2) + slot]
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[(row, col)]
    }

    fn check_grid(&self, grid: &TokenGrid) -> Result<()> {
        if grid.height != self.height || grid.width != self.width || grid.channels != self.channels
        {
            return Err(Error::Shape(format!(
                "token grid {}x{}x{} does not match phase field {}x{}x{}",
                grid.height, grid.width, grid.channels, self.height, self.width, self.channels
            )));
        }
        Ok(())
    }
}

/// Rotate each consecutive channel pair `(2j, 2j+1)` by its phase angle.
/// The CLS token, having no position, passes through untouched.
pub fn apply_rotation(field: &PhaseField, grid: &TokenGrid) -> Result<TokenGrid> {
    field.check_grid(grid)?;
    let mut out = grid.clone();
    for row in 0..grid.height {
        for col in 0..grid.width {
            let token = out.token_mut(row, col);
            for slot in 0..grid.channels / 2 {
                let (sin, cos) = field.phase(row, col, slot).sin_cos();
                let a = token[2 * slot];
                let b = token[2 * slot + 1];
                token[2 * slot] = a * cos - b * sin;
                token[2 * slot + 1] = a * sin + b * cos;
            }
        }
    }
    Ok(out)
}

/// Raw rotary attention scores: `score(m, n) = rotate(q_m) · rotate(k_n)`,
/// no scaling, no softmax. Tokens flatten row-major into an `N×N` grid.
pub fn attention_logits(
    field: &PhaseField,
    queries: &TokenGrid,
    keys: &TokenGrid,
) -> Result<Grid<f64>> {
    field.check_grid(queries)?;
    field.check_grid(keys)?;
    let rot_q = apply_rotation(field, queries)?;
    let rot_k = apply_rotation(field, keys)?;
    let n = field.height * field.width;
    let mut scores = Grid::filled(n, n, 0.0f64);
    for m in 0..n {
        let q = rot_q.token(m / field.width, m % field.width);
        for j in 0..n {
            let k = rot_k.token(j / field.width, j % field.width);
            let dot: f64 = q.iter().zip(k).map(|(a, b)| a * b).sum();
            scores.set(m, j, dot);
        }
    }
    Ok(scores)
}
