//! Depth-guided scale estimation: a coarse per-patch scale head plus a
//! non-parametric upsampler that routes low-resolution scales to full
//! resolution using relative-depth similarity, with analytic gradients.

use crate::error::{Error, Result};
use crate::grid::{median_of, DepthMap, Grid};
use crate::rope::TokenGrid;

/// 3×3 neighborhood offsets in fixed slot order (row-major over the window;
/// slot 4 is the center).
pub const OMEGA: [(i64, i64); 9] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 0),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Spatial grid of per-pixel multiplicative scale factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleField {
    pub values: Grid<f64>,
}

impl ScaleField {
    /// Wrap a grid, enforcing strictly positive scales.
    pub fn new(values: Grid<f64>) -> Result<Self> {
        if values.data().iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("scale values must be strictly positive".into()));
        }
        Ok(Self { values })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }
}

/// Additive shift: a single scalar or a full-resolution map.
#[derive(Debug, Clone, PartialEq)]
pub enum Shift {
    Scalar(f64),
    Map(Grid<f64>),
}

/// Low-resolution grid size produced by pooling with stride `r`
/// (final partial blocks pool over the truncated block).
pub fn pooled_shape(shape: (usize, usize), r: usize) -> (usize, usize) {
    (shape.0.div_ceil(r), shape.1.div_ceil(r))
}

/// Median-pool a depth map with kernel size and stride `r`.
///
/// Invalid pixels are excluded from each block's median; a block with no
/// valid pixel becomes invalid. The even-count median is the mean of the
/// two middle values.
pub fn median_pool(d: &DepthMap, r: usize) -> Result<DepthMap> {
    if r == 0 {
        return Err(Error::Config("pooling stride must be positive".into()));
    }
    let (h, w) = d.shape();
    let (lo_h, lo_w) = pooled_shape((h, w), r);
    let mut values = Grid::filled(lo_h, lo_w, 0.0f64);
    let mut valid = Grid::filled(lo_h, lo_w, false);
    let mut block = Vec::with_capacity(r * r);
    for i in 0..lo_h {
        for j in 0..lo_w {
            block.clear();
            for u in i * r..((i + 1) * r).min(h) {
                for v in j * r..((j + 1) * r).min(w) {
                    if d.valid[(u, v)] {
                        block.push(d.values[(u, v)]);
                    }
                }
            }
            if let Ok(m) = median_of(&block) {
                values.set(i, j, m);
                valid.set(i, j, true);
            }
        }
    }
    DepthMap::new(values, valid)
}

/// Per-pixel convex weights over the 3×3 low-resolution neighborhood around
/// each pixel's anchor `p_r = (⌊u/r⌋, ⌊v/r⌋)`.
///
/// Neighbor indices clamp at the low-resolution border, so every pixel keeps
/// a full 9-slot simplex (clamped slots may repeat a border cell). Slots
/// pointing at invalid low-resolution cells carry weight 0 and the softmax
/// renormalizes over the rest; a pixel invalid in `d_hi` receives uniform
/// weights over the valid slots.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingWeights {
    hi_size: (usize, usize),
    lo_size: (usize, usize),
    stride: usize,
    /// hi_h·hi_w·9, slot-major within each pixel.
    weights: Vec<f64>,
}

impl RoutingWeights {
    pub fn hi_size(&self) -> (usize, usize) {
        self.hi_size
    }

    pub fn lo_size(&self) -> (usize, usize) {
        self.lo_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Anchor cell of a full-resolution pixel.
    pub fn anchor(&self, u: usize, v: usize) -> (usize, usize) {
        (
            (u / self.stride).min(self.lo_size.0 - 1),
            (v / self.stride).min(self.lo_size.1 - 1),
        )
    }

    /// Low-resolution cell addressed by `slot` from the anchor of `(u, v)`.
    pub fn neighbor(&self, u: usize, v: usize, slot: usize) -> (usize, usize) {
        let (ar, ac) = self.anchor(u, v);
        let (dr, dc) = OMEGA[slot];
        (
            (ar as i64 + dr).clamp(0, self.lo_size.0 as i64 - 1) as usize,
            (ac as i64 + dc).clamp(0, self.lo_size.1 as i64 - 1) as usize,
        )
    }

    #[inline]
    pub fn weights_at(&self, u: usize, v: usize) -> &[f64] {
        let start = (u * self.hi_size.1 + v) * 9;
        &self.weights[start..start + 9]
    }
}

fn check_lo_shape(hi: (usize, usize), lo: (usize, usize), r: usize) -> Result<()> {
    let expected = pooled_shape(hi, r);
    if lo != expected {
        return Err(Error::Shape(format!(
            "low-resolution shape {lo:?} does not match pooled {hi:?} at stride {r} (expected {expected:?})"
        )));
    }
    Ok(())
}

/// Distance matrix `Δ[p] = |d_hi[p] − d_lo[p_r + δ]|` over the 3×3 window,
/// turned into per-pixel weights by `softmax(−Δ)`.
pub fn routing_weights(d_hi: &DepthMap, d_lo: &DepthMap, r: usize) -> Result<RoutingWeights> {
    if r == 0 {
        return Err(Error::Config("stride must be positive".into()));
    }
    check_lo_shape(d_hi.shape(), d_lo.shape(), r)?;
    let hi_size = d_hi.shape();
    let lo_size = d_lo.shape();
    let mut out = RoutingWeights {
        hi_size,
        lo_size,
        stride: r,
        weights: vec![0.0; hi_size.0 * hi_size.1 * 9],
    };
    let mut neg_dist = [0.0f64; 9];
    let mut usable = [false; 9];
    for u in 0..hi_size.0 {
        for v in 0..hi_size.1 {
            let mut any = false;
            for slot in 0..9 {
                let n = out.neighbor(u, v, slot);
                usable[slot] = d_lo.valid[n];
                any |= usable[slot];
                neg_dist[slot] = if usable[slot] {
                    -(d_hi.values[(u, v)] - d_lo.values[n]).abs()
                } else {
                    f64::NEG_INFINITY
                };
            }
            if !any {
                continue;
            }
            let start = (u * hi_size.1 + v) * 9;
            if d_hi.valid[(u, v)] {
                let max = neg_dist
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for slot in 0..9 {
                    if usable[slot] {
                        let e = (neg_dist[slot] - max).exp();
                        out.weights[start + slot] = e;
                        sum += e;
                    }
                }
                for slot in 0..9 {
                    out.weights[start + slot] /= sum;
                }
            } else {
                let count = usable.iter().filter(|u| **u).count() as f64;
                for slot in 0..9 {
                    if usable[slot] {
                        out.weights[start + slot] = 1.0 / count;
                    }
                }
            }
        }
    }
    Ok(out)
}

fn upsample_grid(lo: &Grid<f64>, w: &RoutingWeights) -> Result<Grid<f64>> {
    if lo.shape() != w.lo_size() {
        return Err(Error::Shape(format!(
            "low-resolution grid {:?} does not match routing weights {:?}",
            lo.shape(),
            w.lo_size()
        )));
    }
    let (hi_h, hi_w) = w.hi_size();
    let mut out = Grid::filled(hi_h, hi_w, 0.0f64);
    for u in 0..hi_h {
        for v in 0..hi_w {
            let weights = w.weights_at(u, v);
            let mut acc = 0.0;
            for slot in 0..9 {
                if weights[slot] != 0.0 {
                    acc += weights[slot] * lo[w.neighbor(u, v, slot)];
                }
            }
            out.set(u, v, acc);
        }
    }
    Ok(out)
}

/// Weighted summation of the 3×3 low-resolution scale neighborhood:
/// `S[p] = W[p,:]ᵀ · N(S_r, p_r)`. Linear in `S_r` for fixed weights, and
/// bounded by the neighborhood extremes.
pub fn guided_upsample(s_lo: &ScaleField, w: &RoutingWeights) -> Result<ScaleField> {
    Ok(ScaleField {
        values: upsample_grid(&s_lo.values, w)?,
    })
}

/// Same routing applied to a low-resolution shift grid (shifts carry no
/// positivity constraint).
pub fn shift_map_upsample(t_lo: &Grid<f64>, w: &RoutingWeights) -> Result<Grid<f64>> {
    upsample_grid(t_lo, w)
}

/// Gradients of `guided_upsample(s_lo, routing_weights(d_hi, d_lo, r))`
/// with respect to `s_lo` and `d_hi`, given an upstream full-resolution
/// gradient.
///
/// `d_lo` is treated as an independent input (no flow through the pooling
/// that may have produced it). The depth gradient passes through the
/// softmax and the absolute-distance kernel, with subgradient 0 at ties.
pub fn guided_upsample_grad(
    s_lo: &ScaleField,
    d_hi: &DepthMap,
    d_lo: &DepthMap,
    r: usize,
    upstream: &Grid<f64>,
) -> Result<(Grid<f64>, Grid<f64>)> {
    if upstream.shape() != d_hi.shape() {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match {:?}",
            upstream.shape(),
            d_hi.shape()
        )));
    }
    if s_lo.shape() != d_lo.shape() {
        return Err(Error::Shape(format!(
            "scale grid {:?} does not match low-resolution depth {:?}",
            s_lo.shape(),
            d_lo.shape()
        )));
    }
    let w = routing_weights(d_hi, d_lo, r)?;
    let (hi_h, hi_w) = d_hi.shape();
    let mut grad_s_lo = Grid::filled(d_lo.height(), d_lo.width(), 0.0f64);
    let mut grad_d_hi = Grid::filled(hi_h, hi_w, 0.0f64);

    for u in 0..hi_h {
        for v in 0..hi_w {
            let up = upstream[(u, v)];
            let weights = w.weights_at(u, v);
            if up != 0.0 {
                for slot in 0..9 {
                    if weights[slot] != 0.0 {
                        let n = w.neighbor(u, v, slot);
                        grad_s_lo[n] += up * weights[slot];
                    }
                }
            }
            // Weights are constant (uniform) where d_hi is invalid.
            if !d_hi.valid[(u, v)] || up == 0.0 {
                continue;
            }
            // dW_m/dx = W_m · (Σ_j W_j·sign_j − sign_m), x = d_hi[p],
            // sign_m = sign(d_hi[p] − d_lo[n_m]).
            let mut signs = [0.0f64; 9];
            let mut weighted_sign = 0.0;
            for slot in 0..9 {
                if weights[slot] != 0.0 {
                    let n = w.neighbor(u, v, slot);
                    let diff = d_hi.values[(u, v)] - d_lo.values[n];
                    signs[slot] = if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    weighted_sign += weights[slot] * signs[slot];
                }
            }
            let mut grad = 0.0;
            for slot in 0..9 {
                if weights[slot] != 0.0 {
                    let n = w.neighbor(u, v, slot);
                    grad += s_lo.values[n] * weights[slot] * (weighted_sign - signs[slot]);
                }
            }
            grad_d_hi.set(u, v, up * grad);
        }
    }
    Ok((grad_s_lo, grad_d_hi))
}

/// Learned parameters of the toy scale/shift head.
///
/// Single-head attention projections are `d×d`; both MLPs use one hidden
/// layer of width `2d` and a softplus output.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub channels: usize,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub scale_w1: Vec<f64>,
    pub scale_b1: Vec<f64>,
    pub scale_w2: Vec<f64>,
    pub scale_b2: f64,
    pub shift_w1: Vec<f64>,
    pub shift_b1: Vec<f64>,
    pub shift_w2: Vec<f64>,
    pub shift_b2: f64,
}

impl HeadWeights {
    pub fn hidden(&self) -> usize {
        2 * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.channels;
        let hidden = 2 * d;
        let checks = [
            ("attn.wq", self.wq.len(), d * d),
            ("attn.wk", self.wk.len(), d * d),
            ("attn.wv", self.wv.len(), d * d),
            ("scale_mlp.w1", self.scale_w1.len(), hidden * d),
            ("scale_mlp.b1", self.scale_b1.len(), hidden),
            ("scale_mlp.w2", self.scale_w2.len(), hidden),
            ("shift_mlp.w1", self.shift_w1.len(), hidden * d),
            ("shift_mlp.b1", self.shift_b1.len(), hidden),
            ("shift_mlp.w2", self.shift_w2.len(), hidden),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::Shape(format!(
                    "tensor {name} has {got} entries, expected {want}"
                )));
            }
        }
        Ok(())
    }

    /// Deterministic pseudo-random weights. Values are quantized through f32
    /// so an in-memory head matches its file round trip bit for bit.
    pub fn seeded(channels: usize, seed: u64) -> Result<Self> {
        use rand::{Rng, SeedableRng};
        if channels % 4 != 0 || channels == 0 {
            return Err(Error::Config(format!(
                "channel count {channels} must be a positive multiple of 4"
            )));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize, scale: f64| -> Vec<f64> {
            (0..n)
                .map(|_| ((rng.gen::<f64>() - 0.5) * 2.0 * scale) as f32 as f64)
                .collect()
        };
        let d = channels;
        let hidden = 2 * d;
        let s = 1.0 / (d as f64).sqrt();
        let sh = 1.0 / (hidden as f64).sqrt();
        Ok(Self {
            channels,
            wq: draw(d * d, s),
            wk: draw(d * d, s),
            wv: draw(d * d, s),
            scale_w1: draw(hidden * d, s),
            scale_b1: draw(hidden, 0.1),
            scale_w2: draw(hidden, sh),
            scale_b2: draw(1, 0.1)[0],
            shift_w1: draw(hidden * d, s),
            shift_b1: draw(hidden, 0.1),
            shift_w2: draw(hidden, sh),
            shift_b2: draw(1, 0.1)[0],
        })
    }
}

fn matvec(w: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|i| {
            let row = &w[i * cols..(i + 1) * cols];
            row.iter().zip(x).map(|(a, b)| a * b).sum()
        })
        .collect()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn mlp_softplus(x: &[f64], w1: &[f64], b1: &[f64], w2: &[f64], b2: f64) -> f64 {
    let hidden = b1.len();
    let mut h = matvec(w1, x, hidden);
    for (v, b) in h.iter_mut().zip(b1) {
        *v = (*v + b).max(0.0);
    }
    let out: f64 = w2.iter().zip(&h).map(|(a, b)| a * b).sum();
    softplus(out + b2)
}

/// Predict a low-resolution scale map and a scalar shift from a token grid.
///
/// Single-head scaled-dot-product self-attention over the grid tokens (the
/// CLS token joins as key/value only), a two-layer softplus-output MLP per
/// token for the scales, and the same MLP shape on the CLS token for the
/// shift. Deterministic given the weights.
pub fn scale_head(f_g: &TokenGrid, weights: &HeadWeights) -> Result<(ScaleField, f64)> {
    weights.validate()?;
    let cls = f_g
        .cls()
        .ok_or_else(|| Error::Config("scale head requires a CLS token".into()))?;
    if f_g.channels() != weights.channels {
        return Err(Error::Shape(format!(
            "token channels {} do not match head channels {}",
            f_g.channels(),
            weights.channels
        )));
    }
    let d = weights.channels;
    let (h, w) = (f_g.height(), f_g.width());
    let n = h * w;

    let mut keys = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    for row in 0..h {
        for col in 0..w {
            let x = f_g.token(row, col);
            keys.push(matvec(&weights.wk, x, d));
            values.push(matvec(&weights.wv, x, d));
        }
    }
    keys.push(matvec(&weights.wk, cls, d));
    values.push(matvec(&weights.wv, cls, d));

    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let mut scales = Grid::filled(h, w, 0.0f64);
    let mut scores = vec![0.0f64; n + 1];
    for row in 0..h {
        for col in 0..w {
            let q = matvec(&weights.wq, f_g.token(row, col), d);
            for (score, key) in scores.iter_mut().zip(&keys) {
                *score = q.iter().zip(key).map(|(a, b)| a * b).sum::<f64>() * inv_sqrt_d;
            }
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            let mut attended = vec![0.0f64; d];
            for (score, value) in scores.iter().zip(&values) {
                let e = (score - max).exp();
                sum += e;
                for (a, v) in attended.iter_mut().zip(value) {
                    *a += e * v;
                }
            }
            for a in attended.iter_mut() {
                *a /= sum;
            }
            scales.set(
                row,
                col,
                mlp_softplus(
                    &attended,
                    &weights.scale_w1,
                    &weights.scale_b1,
                    &weights.scale_w2,
                    weights.scale_b2,
                ),
            );
        }
    }
    let shift = mlp_softplus(
        cls,
        &weights.shift_w1,
        &weights.shift_b1,
        &weights.shift_w2,
        weights.shift_b2,
    );
    Ok((ScaleField { values: scales }, shift))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(h: usize, w: usize, f: impl FnMut(usize, usize) -> f64) -> DepthMap {
        DepthMap::from_values(Grid::from_fn(h, w, f))
    }

    #[test]
    fn median_pool_constant_and_identity() {
        let d = full(4, 6, |_, _| 3.25);
        let lo = median_pool(&d, 2).unwrap();
        assert_eq!(lo.shape(), (2, 3));
        assert!(lo.values.data().iter().all(|v| *v == 3.25));

        let id = median_pool(&d, 1).unwrap();
        assert_eq!(id, d);
    }

    #[test]
    fn median_pool_even_count_rule() {
        let d = full(2, 2, |r, c| [[1.0, 2.0], [3.0, 100.0]][r][c]);
        let lo = median_pool(&d, 2).unwrap();
        assert_eq!(lo.values[(0, 0)], 2.5);
    }

    #[test]
    fn median_pool_partial_blocks_and_invalid() {
        // 5x5 at r=2: final row/column blocks are truncated
        let mut d = full(5, 5, |r, c| (r * 5 + c) as f64 + 1.0);
        d.valid.set(0, 0, false);
        let lo = median_pool(&d, 2).unwrap();
        assert_eq!(lo.shape(), (3, 3));
        // block (0,0) = {2, 6, 7} without the masked pixel
        assert_eq!(lo.values[(0, 0)], 6.0);
        // block (2,2) is the single pixel (4,4)
        assert_eq!(lo.values[(2, 2)], 25.0);

        // fully invalid block propagates invalidity
        let mut d2 = full(4, 4, |_, _| 1.0);
        for u in 0..2 {
            for v in 0..2 {
                d2.valid.set(u, v, false);
            }
        }
        let lo2 = median_pool(&d2, 2).unwrap();
        assert!(!lo2.valid[(0, 0)]);
        assert!(lo2.valid[(1, 1)]);
    }

    #[test]
    fn median_pool_rejects_zero_stride() {
        assert!(median_pool(&full(2, 2, |_, _| 1.0), 0).is_err());
    }

    #[test]
    fn equal_distances_give_uniform_weights() {
        let d_hi = full(6, 6, |_, _| 1.0);
        let d_lo = full(3, 3, |_, _| 1.0);
        let w = routing_weights(&d_hi, &d_lo, 2).unwrap();
        for u in 0..6 {
            for v in 0..6 {
                for weight in w.weights_at(u, v) {
                    assert!((weight - 1.0 / 9.0).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn softmax_closed_form() {
        // center distance 0, the other 8 slots at ln 2:
        // w_center = 1/(1+8/2) = 0.2, others 0.1
        let x = 5.0;
        let d_hi = full(6, 6, |_, _| x);
        let ln2 = std::f64::consts::LN_2;
        let d_lo = full(3, 3, |r, c| {
            if (r, c) == (1, 1) {
                x
            } else if (r + c) % 2 == 0 {
                x + ln2
            } else {
                x - ln2
            }
        });
        let w = routing_weights(&d_hi, &d_lo, 2).unwrap();
        // pixel (2,2) anchors at (1,1) with the full un-clamped window
        let weights = w.weights_at(2, 2);
        assert!((weights[4] - 0.2).abs() < 1e-12);
        for (slot, weight) in weights.iter().enumerate() {
            if slot != 4 {
                assert!((weight - 0.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weights_form_a_simplex() {
        let d_hi = full(9, 11, |r, c| ((r * 13 + c * 7) as f64 * 0.37).sin() + 2.0);
        let d_lo = median_pool(&d_hi, 4).unwrap();
        let w = routing_weights(&d_hi, &d_lo, 4).unwrap();
        for u in 0..9 {
            for v in 0..11 {
                let sum: f64 = w.weights_at(u, v).iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12);
                assert!(w.weights_at(u, v).iter().all(|x| *x > 0.0 && *x < 1.0));
            }
        }
    }

    #[test]
    fn invalid_lo_cells_get_renormalized_out() {
        let d_hi = full(4, 4, |r, c| (r + c) as f64 + 1.0);
        let mut d_lo = median_pool(&d_hi, 2).unwrap();
        d_lo.valid.set(0, 0, false);
        let w = routing_weights(&d_hi, &d_lo, 2).unwrap();
        for u in 0..4 {
            for v in 0..4 {
                let weights = w.weights_at(u, v);
                let sum: f64 = weights.iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12);
                for slot in 0..9 {
                    if w.neighbor(u, v, slot) == (0, 0) {
                        assert_eq!(weights[slot], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn upsample_constant_uniform_and_bounds() {
        let d_hi = full(8, 8, |r, c| ((r as f64 - c as f64) * 0.3).cos() + 1.5);
        let d_lo = median_pool(&d_hi, 2).unwrap();
        let w = routing_weights(&d_hi, &d_lo, 2).unwrap();

        let constant = ScaleField::new(Grid::filled(4, 4, 2.5)).unwrap();
        let up = guided_upsample(&constant, &w).unwrap();
        assert!(up.values.data().iter().all(|v| (*v - 2.5).abs() < 1e-12));

        let s_lo = ScaleField::new(Grid::from_fn(4, 4, |r, c| 1.0 + (r * 4 + c) as f64)).unwrap();
        let up = guided_upsample(&s_lo, &w).unwrap();
        for u in 0..8 {
            for v in 0..8 {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for slot in 0..9 {
                    let s = s_lo.values[w.neighbor(u, v, slot)];
                    lo = lo.min(s);
                    hi = hi.max(s);
                }
                let s = up.values[(u, v)];
                assert!(s >= lo - 1e-12 && s <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn uniform_weights_average_the_neighborhood() {
        // constant depths make every distance equal, so the upsample is the
        // plain mean of the (clamped) 3x3 window
        let d_hi = full(6, 6, |_, _| 1.0);
        let d_lo = full(3, 3, |_, _| 1.0);
        let w = routing_weights(&d_hi, &d_lo, 2).unwrap();
        let s_lo = ScaleField::new(Grid::from_fn(3, 3, |r, c| 1.0 + (3 * r + c) as f64)).unwrap();
        let up = guided_upsample(&s_lo, &w).unwrap();
        for u in 0..6 {
            for v in 0..6 {
                let mean: f64 = (0..9)
                    .map(|slot| s_lo.values[w.neighbor(u, v, slot)])
                    .sum::<f64>()
                    / 9.0;
                assert!((up.values[(u, v)] - mean).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn upsample_is_linear_in_scales() {
        let d_hi = full(6, 9, |r, c| ((r * 3 + c) as f64 * 0.11).sin() + 2.0);
        let d_lo = median_pool(&d_hi, 3).unwrap();
        let w = routing_weights(&d_hi, &d_lo, 3).unwrap();
        let xs = Grid::from_fn(2, 3, |r, c| 1.0 + (r + 2 * c) as f64);
        let ys = Grid::from_fn(2, 3, |r, c| 2.0 + ((r * c) as f64).sqrt());
        let (a, b) = (0.7, 1.9);
        let combo = Grid::from_fn(2, 3, |r, c| a * xs[(r, c)] + b * ys[(r, c)]);
        let up_x = upsample_grid(&xs, &w).unwrap();
        let up_y = upsample_grid(&ys, &w).unwrap();
        let up_c = upsample_grid(&combo, &w).unwrap();
        for (r, c, v) in up_c.iter_indexed() {
            assert!((v - (a * up_x[(r, c)] + b * up_y[(r, c)])).abs() <= 1e-12);
        }
    }

    #[test]
    fn shift_upsample_shares_routing() {
        let d_hi = full(4, 4, |r, c| (r * 4 + c) as f64 + 1.0);
        let d_lo = median_pool(&d_hi, 2).unwrap();
        let w = routing_weights(&d_hi, &d_lo, 2).unwrap();
        let t_lo = Grid::filled(2, 2, -0.75);
        let t = shift_map_upsample(&t_lo, &w).unwrap();
        assert!(t.data().iter().all(|v| (*v + 0.75).abs() < 1e-12));
    }

    #[test]
    fn edge_awareness_on_step_scene() {
        // left half depth 1, right half depth 2; every interior pixel should
        // route at least half its weight to its own region's cells
        let d_hi = full(16, 16, |_, c| if c < 8 { 1.0 } else { 2.0 });
        let d_lo = median_pool(&d_hi, 4).unwrap();
        let w = routing_weights(&d_hi, &d_lo, 4).unwrap();
        for u in 0..16 {
            for v in 0..16 {
                let own_region = |cell: (usize, usize)| (cell.1 < 2) == (v < 8);
                let own: f64 = (0..9)
                    .filter(|s| own_region(w.neighbor(u, v, *s)))
                    .map(|s| w.weights_at(u, v)[s])
                    .sum();
                assert!(own >= 0.5, "pixel ({u}, {v}) keeps only {own:.3} at home");
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let d_hi = full(6, 6, |r, c| ((r + c) as f64 * 0.2).exp());
        let d_lo = median_pool(&d_hi, 2).unwrap();
        let s_lo = ScaleField::new(Grid::filled(3, 3, 1.0)).unwrap();
        let upstream = Grid::filled(6, 6, 0.0);
        let (gs, gd) = guided_upsample_grad(&s_lo, &d_hi, &d_lo, 2, &upstream).unwrap();
        assert!(gs.data().iter().all(|v| *v == 0.0));
        assert!(gd.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_head_outputs_softplus_bias() {
        let d = 8;
        let mut weights = HeadWeights::seeded(d, 3).unwrap();
        weights.scale_w2 = vec![0.0; 2 * d];
        weights.scale_b2 = 0.7;
        let grid = TokenGrid::from_fn(2, 3, d, |r, c, ch| ((r + c + ch) as f64 * 0.3).sin())
            .unwrap()
            .with_cls(vec![0.2; d])
            .unwrap();
        let (s_r, _) = scale_head(&grid, &weights).unwrap();
        let expected = softplus(0.7);
        assert!(s_r
            .values
            .data()
            .iter()
            .all(|v| (*v - expected).abs() < 1e-15));
    }

    #[test]
    fn uniform_attention_gives_constant_scales() {
        let d = 8;
        let mut weights = HeadWeights::seeded(d, 4).unwrap();
        weights.wq = vec![0.0; d * d];
        weights.wk = vec![0.0; d * d];
        let grid = TokenGrid::from_fn(3, 3, d, |r, c, ch| ((r * 9 + c * 3 + ch) as f64).cos())
            .unwrap()
            .with_cls(vec![0.1; d])
            .unwrap();
        let (s_r, shift) = scale_head(&grid, &weights).unwrap();
        let first = s_r.values[(0, 0)];
        assert!(first > 0.0);
        assert!(shift > 0.0);
        for v in s_r.values.data() {
            assert!((v - first).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_head_requires_cls() {
        let d = 8;
        let weights = HeadWeights::seeded(d, 5).unwrap();
        let grid = TokenGrid::from_fn(2, 2, d, |_, _, _| 0.1).unwrap();
        assert!(matches!(
            scale_head(&grid, &weights),
            Err(Error::Config(_))
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn routing_rows_always_form_a_simplex(
                h in 2usize..20,
                w in 2usize..20,
                r_idx in 0usize..4,
                seed in any::<u64>(),
            ) {
                use rand::{Rng, SeedableRng};
                let r = [2, 4, 7, 14][r_idx];
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let d_hi = DepthMap::from_values(Grid::from_fn(h, w, |_, _| {
                    rng.gen_range(0.1..10.0)
                }));
                let d_lo = median_pool(&d_hi, r).unwrap();
                let weights = routing_weights(&d_hi, &d_lo, r).unwrap();
                for u in 0..h {
                    for v in 0..w {
                        let slots = weights.weights_at(u, v);
                        let sum: f64 = slots.iter().sum();
                        prop_assert!((sum - 1.0).abs() <= 1e-12);
                        prop_assert!(slots.iter().all(|x| *x > 0.0 && *x < 1.0));
                    }
                }
            }
        }
    }
}
