//! Independent oracles shared by the integration suites. Everything here is
//! written as straight-line loops against the formulas, deliberately not
//! reusing the library's computation paths.

#![allow(dead_code)]

use depthkit::dgse::OMEGA;
use depthkit::grid::{DepthMap, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_positive_map(rng: &mut ChaCha8Rng, h: usize, w: usize, lo: f64, hi: f64) -> DepthMap {
    DepthMap::from_values(Grid::from_fn(h, w, |_, _| rng.gen_range(lo..hi)))
}

fn clamp_idx(v: i64, len: usize) -> usize {
    v.clamp(0, len as i64 - 1) as usize
}

/// Literal per-pixel routing + upsampling: anchor, clamped 3x3 window,
/// direct softmax of the negative absolute distances, weighted sum.
pub fn naive_routing_and_upsample(
    d_hi: &DepthMap,
    d_lo: &DepthMap,
    s_lo: &Grid<f64>,
    r: usize,
) -> (Vec<[f64; 9]>, Grid<f64>) {
    let (hi_h, hi_w) = d_hi.shape();
    let (lo_h, lo_w) = d_lo.shape();
    let mut all_weights = Vec::with_capacity(hi_h * hi_w);
    let mut upsampled = Grid::filled(hi_h, hi_w, 0.0f64);
    for u in 0..hi_h {
        for v in 0..hi_w {
            let ar = clamp_idx((u / r) as i64, lo_h);
            let ac = clamp_idx((v / r) as i64, lo_w);
            let mut exps = [0.0f64; 9];
            let mut total = 0.0;
            for (slot, (dr, dc)) in OMEGA.iter().enumerate() {
                let nr = clamp_idx(ar as i64 + dr, lo_h);
                let nc = clamp_idx(ac as i64 + dc, lo_w);
                let delta = (d_hi.values[(u, v)] - d_lo.values[(nr, nc)]).abs();
                exps[slot] = (-delta).exp();
                total += exps[slot];
            }
            let mut weights = [0.0f64; 9];
            let mut acc = 0.0;
            for (slot, (dr, dc)) in OMEGA.iter().enumerate() {
                let nr = clamp_idx(ar as i64 + dr, lo_h);
                let nc = clamp_idx(ac as i64 + dc, lo_w);
                weights[slot] = exps[slot] / total;
                acc += weights[slot] * s_lo[(nr, nc)];
            }
            all_weights.push(weights);
            upsampled.set(u, v, acc);
        }
    }
    (all_weights, upsampled)
}

/// Max of `|a − b| / max(|a|, |b|, floor)` over paired grids.
pub fn max_rel_err(a: &Grid<f64>, b: &Grid<f64>, floor: f64) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Dense straight-line reimplementation of the toy scale head: explicit
/// projections, softmax attention with the CLS token appended as key/value,
/// ReLU hidden layer, softplus output.
pub fn dense_scale_head_oracle(
    tokens: &[Vec<f64>],
    cls: &[f64],
    d: usize,
    wq: &[f64],
    wk: &[f64],
    wv: &[f64],
    w1: &[f64],
    b1: &[f64],
    w2: &[f64],
    b2: f64,
) -> Vec<f64> {
    let n = tokens.len();
    let hidden = b1.len();
    let matvec = |w: &[f64], x: &[f64], rows: usize| -> Vec<f64> {
        let mut out = vec![0.0; rows];
        for i in 0..rows {
            for j in 0..x.len() {
                out[i] += w[i * x.len() + j] * x[j];
            }
        }
        out
    };
    let mut keys: Vec<Vec<f64>> = tokens.iter().map(|t| matvec(wk, t, d)).collect();
    keys.push(matvec(wk, cls, d));
    let mut vals: Vec<Vec<f64>> = tokens.iter().map(|t| matvec(wv, t, d)).collect();
    vals.push(matvec(wv, cls, d));

    let mut out = Vec::with_capacity(n);
    for token in tokens {
        let q = matvec(wq, token, d);
        let mut scores = vec![0.0f64; n + 1];
        for (s, k) in scores.iter_mut().zip(&keys) {
            for j in 0..d {
                *s += q[j] * k[j];
            }
            *s /= (d as f64).sqrt();
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let mut attended = vec![0.0f64; d];
        for (e, v) in exps.iter().zip(&vals) {
            for j in 0..d {
                attended[j] += e * v[j];
            }
        }
        for a in attended.iter_mut() {
            *a /= total;
        }
        let mut h = matvec(w1, &attended, hidden);
        for (hv, b) in h.iter_mut().zip(b1) {
            *hv = (*hv + b).max(0.0);
        }
        let mut y = b2;
        for j in 0..hidden {
            y += w2[j] * h[j];
        }
        out.push(y.max(0.0) + (-y.abs()).exp().ln_1p());
    }
    out
}
