//! Threshold sequences d_n, b_n, q_n and the uniformity modulus scan.

use serde::Serialize;

use crate::dist::{StableIndex, TailedDistribution};
use crate::error::{Error, Result};

/// Rules used to produce d_n, b_n and q_n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdRule {
    /// Offset added to alpha - 2 in the regularly varying rule.
    pub t_offset: f64,
    /// Optional override for l_n; `None` means l_n = d_n.
    pub ell_n: Option<f64>,
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule { t_offset: 0.5, ell_n: None }
    }
}

impl ThresholdRule {
    /// sqrt(t n ln n) with t = alpha - 2 + offset, for regularly varying tails with alpha > 2.
    pub fn d_n(&self, dist: &TailedDistribution, n: usize) -> Result<f64> {
        if n < 2 {
            return Err(Error::param("n", "d_n needs n >= 2"));
        }
        match dist.tail_index() {
            Some(alpha) if alpha > 2.0 => {
                let t = alpha - 2.0 + self.t_offset;
                let nf = n as f64;
                Ok((t * nf * nf.ln()).sqrt())
            }
            _ => Err(Error::UserGridRequired(dist.spec().to_string())),
        }
    }

    pub fn q_n(&self, dist: &TailedDistribution, n: usize) -> Result<f64> {
        let d = self.d_n(dist, n)?;
        Ok(d.max(self.ell_n.unwrap_or(d)))
    }
}

pub fn d_n(dist: &TailedDistribution, n: usize) -> Result<f64> {
    ThresholdRule::default().d_n(dist, n)
}

/// Scale and centering of S_{n-1}, plus the residual scale at x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizationPlan {
    pub b_n: f64,
    pub centering: f64,
    pub psi_x: f64,
}

/// b_n and the centering of S_{n-1}.
///
/// Finite variance: sigma sqrt(n-1) around (n-1) mean. Otherwise the
/// 1/(n-1) upper quantile of the unshifted law, centred by (n-1) mean when
/// the mean is finite.
pub fn b_n(dist: &TailedDistribution, n: usize) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::param("n", "b_n needs n >= 2"));
    }
    let m = (n - 1) as f64;
    if let (Some(var), Some(mean)) = (dist.variance(), dist.mean()) {
        return Ok((var.sqrt() * m.sqrt(), m * mean));
    }
    match dist.stable_index() {
        Some(StableIndex::Alpha(_)) | Some(StableIndex::Gaussian) => {
            let scale = dist.tail_quantile(1.0 / m) - dist.loc();
            let centering = dist.mean().map(|mu| m * mu).unwrap_or(0.0);
            Ok((scale, centering))
        }
        None => Err(Error::UserGridRequired(dist.spec().to_string())),
    }
}

pub fn normalization_plan(dist: &TailedDistribution, n: usize, x: f64) -> Result<NormalizationPlan> {
    let (b, centering) = b_n(dist, n)?;
    let psi_x = dist.residual_scale_psi(x)?;
    Ok(NormalizationPlan { b_n: b, centering, psi_x })
}

/// Geometric grid start, start r, start r^2, ...
pub fn geometric_grid(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start * ratio.powi(i as i32)).collect()
}

/// Grid ratio used to stand in for suprema over x.
pub const GRID_RATIO: f64 = 1.25;

/// max over the x-grid and |y| <= L b_n of 1 - mu(x - y + Delta) / mu(x + Delta).
pub fn uniformity_modulus(
    dist: &TailedDistribution,
    l: f64,
    b_n: f64,
    x_grid: &[f64],
    delta_len: f64,
) -> f64 {
    const Y_STEPS: usize = 200;
    let radius = l * b_n;
    let mut worst: f64 = 0.0;
    for &x in x_grid {
        let base = dist.mass(x, delta_len);
        if base <= 0.0 {
            return 1.0;
        }
        for i in 0..=Y_STEPS {
            let y = if radius == 0.0 { 0.0 } else { -radius + 2.0 * radius * i as f64 / Y_STEPS as f64 };
            let ratio = dist.mass(x - y, delta_len) / base;
            worst = worst.max(1.0 - ratio);
            if radius == 0.0 {
                break;
            }
        }
    }
    worst.min(1.0)
}
