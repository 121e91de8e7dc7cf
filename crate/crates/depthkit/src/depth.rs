//! Median-scaling normalization, metric-depth composition, the SIlog loss
//! family with analytic gradients, and the standard evaluation metrics.

use crate::dgse::{ScaleField, Shift};
use crate::error::{Error, Result};
use crate::grid::{DepthMap, Grid};

/// SIlog configuration: `lambda` interpolates between the scale-invariant
/// (1) and scale-sensitive (<1) regimes; `eps` floors log arguments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda: f64,
    pub eps: f64,
}

impl LossConfig {
    pub fn new(lambda: f64, eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!("lambda {lambda} outside [0, 1]")));
        }
        if !(eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        Ok(Self { lambda, eps })
    }

    /// Relative-depth loss setting (purely scale-invariant).
    pub fn relative() -> Self {
        Self {
            lambda: 1.0,
            eps: 1e-6,
        }
    }

    /// Metric-depth loss setting.
    pub fn metric() -> Self {
        Self {
            lambda: 0.85,
            eps: 1e-6,
        }
    }
}

/// Which algebraic route evaluates the loss. The two agree analytically;
/// the sum form is the raw moment expression and cancels catastrophically
/// near zero loss, the variance form centers first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SilogForm {
    /// `sqrt(Σε²/n − λ·(Σε)²/n²)`
    SumForm,
    /// `sqrt(V[ε] + (1−λ)·E[ε]²)`
    VarForm,
}

/// Inlier fractions and error statistics over the valid intersection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub abs_rel: f64,
    pub rmse: f64,
    pub valid_count: usize,
}

/// Divide by the median of the valid values so the result medians to 1.
/// Returns the normalized map and the scale that was removed.
pub fn median_scale_normalize(d_hat: &DepthMap) -> Result<(DepthMap, f64)> {
    let s = d_hat.median()?;
    if !(s > 0.0) {
        return Err(Error::Degenerate(format!("non-positive median {s}")));
    }
    let values = Grid::from_fn(d_hat.height(), d_hat.width(), |r, c| {
        if d_hat.valid[(r, c)] {
            d_hat.values[(r, c)] / s
        } else {
            0.0
        }
    });
    Ok((DepthMap::new(values, d_hat.valid.clone())?, s))
}

/// Elementwise metric composition `D = S ⊙ D_rel + t`.
///
/// Validity follows the relative map. Negative outputs are possible
/// numerically; [`DepthMap::count_nonpositive`] reports them.
pub fn compose_metric(d_rel: &DepthMap, s: &ScaleField, t: &Shift) -> Result<DepthMap> {
    if s.shape() != d_rel.shape() {
        return Err(Error::Shape(format!(
            "scale field {:?} does not match depth {:?}",
            s.shape(),
            d_rel.shape()
        )));
    }
    if let Shift::Map(map) = t {
        if map.shape() != d_rel.shape() {
            return Err(Error::Shape(format!(
                "shift map {:?} does not match depth {:?}",
                map.shape(),
                d_rel.shape()
            )));
        }
    }
    let values = Grid::from_fn(d_rel.height(), d_rel.width(), |r, c| {
        if d_rel.valid[(r, c)] {
            let shift = match t {
                Shift::Scalar(v) => *v,
                Shift::Map(map) => map[(r, c)],
            };
            s.values[(r, c)] * d_rel.values[(r, c)] + shift
        } else {
            0.0
        }
    });
    DepthMap::new(values, d_rel.valid.clone())
}

/// SIlog loss over the valid intersection, with its analytic gradient with
/// respect to the prediction.
///
/// The log error is `ε_p = ln(gt) − ln(pred)` after flooring both arguments
/// at `cfg.eps`. At (numerically) zero loss the square root is singular and
/// the gradient returns 0, which lies in the true subgradient set.
pub fn silog_loss(
    pred: &DepthMap,
    gt: &DepthMap,
    cfg: &LossConfig,
    form: SilogForm,
) -> Result<(f64, Grid<f64>)> {
    if pred.shape() != gt.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let (h, w) = pred.shape();
    let mut eps_terms = Vec::new();
    let mut positions = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if pred.valid[(r, c)] && gt.valid[(r, c)] {
                let g = gt.values[(r, c)].max(cfg.eps);
                let p = pred.values[(r, c)].max(cfg.eps);
                eps_terms.push(g.ln() - p.ln());
                positions.push((r, c));
            }
        }
    }
    let n = eps_terms.len();
    if n == 0 {
        return Err(Error::Degenerate(
            "no valid pixels shared by prediction and ground truth".into(),
        ));
    }
    let nf = n as f64;
    let sum: f64 = eps_terms.iter().sum();
    let mean = sum / nf;

    let loss = match form {
        SilogForm::SumForm => {
            let sum_sq: f64 = eps_terms.iter().map(|e| e * e).sum();
            (sum_sq / nf - cfg.lambda * (sum / nf) * (sum / nf)).max(0.0).sqrt()
        }
        SilogForm::VarForm => {
            let var: f64 = eps_terms.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / nf;
            (var + (1.0 - cfg.lambda) * mean * mean).max(0.0).sqrt()
        }
    };

    let mut grad = Grid::filled(h, w, 0.0f64);
    if loss >= 1e-12 {
        // dL/dε_p = (ε_p/n − λ·mean/n) / L, dε_p/dpred = −1/pred (0 below the floor)
        for (e, (r, c)) in eps_terms.iter().zip(&positions) {
            let p = pred.values[(*r, *c)];
            if p > cfg.eps {
                let dl_de = (e / nf - cfg.lambda * mean / nf) / loss;
                grad.set(*r, *c, -dl_de / p);
            }
        }
    }
    Ok((loss, grad))
}

/// Inlier ratios `δ_i` at thresholds `1.25^i`, mean absolute relative error,
/// and RMSE, over the valid intersection. `depth_cap` drops ground-truth
/// pixels beyond the cap.
pub fn evaluate(pred: &DepthMap, gt: &DepthMap, depth_cap: Option<f64>) -> Result<EvalReport> {
    if pred.shape() != gt.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let thresholds = [1.25, 1.25f64.powi(2), 1.25f64.powi(3)];
    let mut inliers = [0usize; 3];
    let mut abs_rel_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut count = 0usize;
    let (h, w) = pred.shape();
    for r in 0..h {
        for c in 0..w {
            if !(pred.valid[(r, c)] && gt.valid[(r, c)]) {
                continue;
            }
            let g = gt.values[(r, c)];
            if let Some(cap) = depth_cap {
                if g > cap {
                    continue;
                }
            }
            let p = pred.values[(r, c)];
            let ratio = if p > 0.0 {
                (p / g).max(g / p)
            } else {
                f64::INFINITY
            };
            for (slot, t) in thresholds.iter().enumerate() {
                if ratio < *t {
                    inliers[slot] += 1;
                }
            }
            abs_rel_sum += (p - g).abs() / g;
            sq_sum += (p - g) * (p - g);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Degenerate(
            "no valid pixels shared by prediction and ground truth".into(),
        ));
    }
    let nf = count as f64;
    Ok(EvalReport {
        delta1: inliers[0] as f64 / nf,
        delta2: inliers[1] as f64 / nf,
        delta3: inliers[2] as f64 / nf,
        abs_rel: abs_rel_sum / nf,
        rmse: (sq_sum / nf).sqrt(),
        valid_count: count,
    })
}
