//! Potential families, Lebesgue norms and short-range admissibility checks.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{check_len, Error, Result};
use crate::grid::{sphere_sampling, Grid};
use crate::quadrature;

/// Largest grid accepted by the O(M^2) Rollnik quadrature.
pub const ROLLNIK_NODE_LIMIT: usize = 60_000;

/// Real potential families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    /// `-beta * exp(-c |x|^2)`.
    Gaussian { beta: f64, c: f64 },
    /// `beta / (1 + |x|^q)`.
    RationalDecay { beta: f64, q: f64 },
    /// One-dimensional `v_plus - lambda (lambda + 1) sech^2(y)`.
    PoschlTeller { lambda: f64, v_plus: f64 },
    /// `v_plus - beta * exp(-c |y|^2)`.
    GaussianWell { beta: f64, c: f64, v_plus: f64 },
}

impl PotentialSpec {
    pub fn gaussian(beta: f64, c: f64) -> Self {
        Self::Gaussian { beta, c }
    }

    pub fn poschl_teller(lambda: f64, v_plus: f64) -> Self {
        Self::PoschlTeller { lambda, v_plus }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Gaussian { .. } => "gaussian",
            Self::RationalDecay { .. } => "rational_decay",
            Self::PoschlTeller { .. } => "poschl_teller",
            Self::GaussianWell { .. } => "gaussian_well",
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero => true,
            Self::Gaussian { beta, .. } | Self::RationalDecay { beta, .. } => *beta == 0.0,
            _ => false,
        }
    }

    /// Limit of the potential at infinity.
    pub fn v_plus(&self) -> f64 {
        match self {
            Self::PoschlTeller { v_plus, .. } | Self::GaussianWell { v_plus, .. } => *v_plus,
            _ => 0.0,
        }
    }

    /// True for the decaying families usable in the three-dimensional problem.
    pub fn is_short_range_family(&self) -> bool {
        matches!(self, Self::Zero | Self::Gaussian { .. } | Self::RationalDecay { .. })
    }

    /// Value as a function of |x| for the radially symmetric families.
    pub fn radial_profile(&self, r: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Gaussian { beta, c } => -beta * (-c * r * r).exp(),
            Self::RationalDecay { beta, q } => beta / (1.0 + r.powf(q)),
            Self::PoschlTeller { lambda, v_plus } => {
                let s = 1.0 / r.cosh();
                v_plus - lambda * (lambda + 1.0) * s * s
            }
            Self::GaussianWell { beta, c, v_plus } => v_plus - beta * (-c * r * r).exp(),
        }
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.radial_profile(r)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match *self {
            Self::Gaussian { beta, c } if !(beta.is_finite() && c > 0.0) => {
                bad(format!("gaussian potential needs finite beta and c > 0, got beta={beta}, c={c}"))
            }
            Self::RationalDecay { beta, q } if !(beta.is_finite() && q > 0.0) => {
                bad(format!("rational_decay needs finite beta and q > 0, got beta={beta}, q={q}"))
            }
            Self::PoschlTeller { lambda, v_plus } if !(lambda.is_finite() && v_plus.is_finite()) => {
                bad("poschl_teller parameters must be finite".into())
            }
            Self::GaussianWell { beta, c, v_plus } if !(beta.is_finite() && c > 0.0 && v_plus.is_finite()) => {
                bad("gaussian_well needs finite beta, v_plus and c > 0".into())
            }
            _ => Ok(()),
        }
    }

    /// Evaluates the potential on every node of `grid`.
    pub fn eval_field(&self, grid: &Grid) -> Result<Vec<f64>> {
        self.validate()?;
        if matches!(self, Self::PoschlTeller { .. }) && grid.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: grid.dim(),
            });
        }
        Ok(grid.sample(|x| self.value_at(x)))
    }

    /// Returns a copy with the named parameter replaced.
    pub fn with_param(&self, name: &str, value: f64) -> Result<Self> {
        let mut s = self.clone();
        let slot = match (&mut s, name) {
            (Self::Gaussian { beta, .. }, "beta")
            | (Self::RationalDecay { beta, .. }, "beta")
            | (Self::GaussianWell { beta, .. }, "beta") => beta,
            (Self::Gaussian { c, .. }, "c") | (Self::GaussianWell { c, .. }, "c") => c,
            (Self::RationalDecay { q, .. }, "q") => q,
            (Self::PoschlTeller { lambda, .. }, "lambda") => lambda,
            (Self::PoschlTeller { v_plus, .. }, "v_plus")
            | (Self::GaussianWell { v_plus, .. }, "v_plus") => v_plus,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "family {} has no parameter `{name}`",
                    self.name()
                )))
            }
        };
        *slot = value;
        Ok(s)
    }

    pub fn param(&self, name: &str) -> Result<f64> {
        let v = match (self, name) {
            (Self::Gaussian { beta, .. }, "beta")
            | (Self::RationalDecay { beta, .. }, "beta")
            | (Self::GaussianWell { beta, .. }, "beta") => *beta,
            (Self::Gaussian { c, .. }, "c") | (Self::GaussianWell { c, .. }, "c") => *c,
            (Self::RationalDecay { q, .. }, "q") => *q,
            (Self::PoschlTeller { lambda, .. }, "lambda") => *lambda,
            (Self::PoschlTeller { v_plus, .. }, "v_plus")
            | (Self::GaussianWell { v_plus, .. }, "v_plus") => *v_plus,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "family {} has no parameter `{name}`",
                    self.name()
                )))
            }
        };
        Ok(v)
    }

    /// Decay margin epsilon in |V(x)| <= C / (1 + |x|^{3.5 + epsilon}).
    pub fn decay_epsilon(&self) -> f64 {
        match *self {
            Self::RationalDecay { q, .. } => q - 3.5,
            Self::Zero | Self::Gaussian { .. } => 0.5,
            Self::PoschlTeller { .. } | Self::GaussianWell { .. } => f64::NEG_INFINITY,
        }
    }

    fn short_range(&self) -> Result<()> {
        self.validate()?;
        if self.is_short_range_family() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "family {} does not decay at infinity and cannot enter the three-dimensional problem",
                self.name()
            )))
        }
    }
}

/// Norms of a radial potential in R^3 computed by one-dimensional quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialNorms {
    pub l1: f64,
    pub l4_3: f64,
    pub l3_2: f64,
    pub sup: f64,
    /// Norm of |x| V in L^{4/3}.
    pub x_l4_3: f64,
    /// Supremum of |x| |V|.
    pub x_sup: f64,
}

fn radial_lp(v: &PotentialSpec, p: f64, weight_power: i32) -> f64 {
    let integral = quadrature::radial_integral(3, |r| (r.powi(weight_power) * v.radial_profile(r).abs()).powf(p));
    integral.powf(1.0 / p)
}

fn radial_sup<F: Fn(f64) -> f64>(f: F) -> f64 {
    let samples = 4000;
    let (lo, hi) = (1e-6f64.ln(), 1e4f64.ln());
    let mut best = (f(0.0).abs(), 0.0);
    let mut rs = Vec::with_capacity(samples);
    for i in 0..samples {
        let r = (lo + (hi - lo) * i as f64 / (samples - 1) as f64).exp();
        rs.push(r);
        let v = f(r).abs();
        if v > best.0 {
            best = (v, r);
        }
    }
    if best.1 > 0.0 {
        let step = ((hi - lo) / (samples - 1) as f64).exp();
        let (mut a, mut b) = (best.1 / step, best.1 * step);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c).abs() > f(d).abs() {
                b = d;
            } else {
                a = c;
            }
        }
        best.0 = best.0.max(f(0.5 * (a + b)).abs());
    }
    best.0
}

impl PotentialNorms {
    pub fn of(v: &PotentialSpec) -> Result<Self> {
        v.short_range()?;
        if v.is_zero() {
            return Ok(Self {
                l1: 0.0,
                l4_3: 0.0,
                l3_2: 0.0,
                sup: 0.0,
                x_l4_3: 0.0,
                x_sup: 0.0,
            });
        }
        Ok(Self {
            l1: radial_lp(v, 1.0, 0),
            l4_3: radial_lp(v, 4.0 / 3.0, 0),
            l3_2: radial_lp(v, 1.5, 0),
            sup: radial_sup(|r| v.radial_profile(r)),
            x_l4_3: radial_lp(v, 4.0 / 3.0, 1),
            x_sup: radial_sup(|r| r * v.radial_profile(r)),
        })
    }
}

/// Bound on the operator norm of Q_k on L^infinity, uniform in k.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QNormBound {
    pub bound: f64,
    /// Splitting radius minimising the near/far estimate.
    pub radius: f64,
}

/// Minimises (2 pi R^2 |V|_inf + (4 pi / R)^{1/4} |V|_{4/3}) / (4 pi) over R.
pub fn q_norm_bound(v: &PotentialSpec) -> Result<QNormBound> {
    let norms = PotentialNorms::of(v)?;
    Ok(q_norm_bound_from_norms(norms.sup, norms.l4_3))
}

pub fn q_norm_bound_from_norms(sup: f64, l4_3: f64) -> QNormBound {
    if sup == 0.0 || l4_3 == 0.0 {
        return QNormBound { bound: 0.0, radius: f64::INFINITY };
    }
    let four_pi = 4.0 * PI;
    let radius = ((four_pi.powf(0.25) * l4_3) / (16.0 * PI * sup)).powf(4.0 / 9.0);
    let bound = (2.0 * PI * radius * radius * sup + (four_pi / radius).powf(0.25) * l4_3) / four_pi;
    QNormBound { bound, radius }
}

/// Sharp Hardy-Littlewood-Sobolev constant for the kernel |x - y|^{-lambda} in R^n
/// with both exponents equal to 2n / (2n - lambda).
pub fn sharp_hls_constant(n: usize, lambda: f64) -> Result<f64> {
    let nf = n as f64;
    if !(lambda > 0.0 && lambda < nf) {
        return Err(Error::InvalidParameter(format!(
            "kernel exponent must lie in (0, {n}), got {lambda}"
        )));
    }
    let lead = PI.powf(lambda / 2.0) * gamma(nf / 2.0 - lambda / 2.0) / gamma(nf - lambda / 2.0);
    let ratio = gamma(nf / 2.0) / gamma(nf);
    Ok(lead * ratio.powf(-1.0 + lambda / nf))
}

/// Lebesgue norm of a complex field by grid quadrature; `p = inf` gives the maximum.
pub fn lp_norm(field: &[Complex64], p: f64, grid: &Grid) -> Result<f64> {
    check_len(grid.len(), field.len())?;
    lp_of_magnitudes(field.iter().map(|z| z.norm()), p, grid)
}

pub fn lp_norm_real(field: &[f64], p: f64, grid: &Grid) -> Result<f64> {
    check_len(grid.len(), field.len())?;
    lp_of_magnitudes(field.iter().map(|z| z.abs()), p, grid)
}

fn lp_of_magnitudes<I: Iterator<Item = f64>>(mags: I, p: f64, grid: &Grid) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidParameter(format!("Lebesgue exponent must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(mags.fold(0.0, f64::max));
    }
    let s: f64 = mags.zip(grid.weights()).map(|(m, w)| w * m.powf(p)).sum();
    Ok(s.powf(1.0 / p))
}

/// |x| f sampled on the grid.
pub fn times_radius(field: &[Complex64], grid: &Grid) -> Result<Vec<Complex64>> {
    check_len(grid.len(), field.len())?;
    Ok(field.iter().enumerate().map(|(i, z)| z * grid.radius(i)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub smallness_value: f64,
    pub hls_value: f64,
    pub hls_threshold: f64,
    pub decay_epsilon: f64,
    pub envelope_c: f64,
    pub decay_ok: bool,
    pub f_l2: f64,
    pub xf_l1: f64,
    pub passed: bool,
}

/// Checks the smallness, Hardy-Littlewood-Sobolev and decay requirements on a
/// short-range potential together with the integrability of the source.
pub fn check_short_range_assumptions(
    v: &PotentialSpec,
    f: &[Complex64],
    grid: &Grid,
    c_hls: f64,
) -> Result<AssumptionReport> {
    if grid.dim() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: grid.dim(),
        });
    }
    check_len(grid.len(), f.len())?;
    let norms = PotentialNorms::of(v)?;
    let smallness_value = q_norm_bound_from_norms(norms.sup, norms.l4_3).bound;
    let hls_value = c_hls.sqrt() * norms.l3_2;
    let hls_threshold = 4.0 * PI;
    let decay_epsilon = v.decay_epsilon();
    let envelope_c = decay_envelope(v, decay_epsilon);
    let decay_ok = decay_epsilon > 0.0 && envelope_c.is_finite();
    let f_l2 = lp_norm(f, 2.0, grid)?;
    let xf_l1 = lp_norm(&times_radius(f, grid)?, 1.0, grid)?;
    let passed = smallness_value < 1.0
        && hls_value < hls_threshold
        && decay_ok
        && f_l2.is_finite()
        && xf_l1.is_finite();
    Ok(AssumptionReport {
        smallness_value,
        hls_value,
        hls_threshold,
        decay_epsilon,
        envelope_c,
        decay_ok,
        f_l2,
        xf_l1,
        passed,
    })
}

/// Largest value of |V| (1 + r^{3.5 + eps}) over sampled radial shells.
fn decay_envelope(v: &PotentialSpec, eps: f64) -> f64 {
    if eps <= 0.0 {
        return f64::INFINITY;
    }
    let dirs = sphere_sampling(3, 1.0, 16).expect("unit sphere sampling");
    let shells = 600;
    let mut c: f64 = 0.0;
    for s in 0..=shells {
        let r = if s == 0 { 0.0 } else { (1e-3f64.ln() + (1e4f64.ln() - 1e-3f64.ln()) * s as f64 / shells as f64).exp() };
        let env = 1.0 + r.powf(3.5 + eps);
        for i in 0..dirs.len() {
            let x: Vec<f64> = dirs.point(i).iter().map(|d| d * r).collect();
            c = c.max(v.value_at(&x).abs() * env);
        }
    }
    c
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RollnikReport {
    pub value: f64,
    pub hls_bound: f64,
    pub threshold: f64,
    pub below_threshold: bool,
}

/// Rollnik norm of a sampled potential in R^3.
///
/// Off-diagonal pairs use the grid weights directly; each diagonal cell is
/// replaced by the ball of equal volume, where the integral of |y|^{-2} is
/// 4 pi r_eq.
pub fn rollnik_norm(v: &[f64], grid: &Grid, c_hls: f64) -> Result<RollnikReport> {
    if grid.dim() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: grid.dim(),
        });
    }
    check_len(grid.len(), v.len())?;
    if grid.len() > ROLLNIK_NODE_LIMIT {
        return Err(Error::NodeBudget {
            requested: grid.len(),
            budget: ROLLNIK_NODE_LIMIT,
        });
    }
    let pts: Vec<[f64; 3]> = (0..grid.len())
        .map(|i| {
            let mut p = [0.0; 3];
            grid.point(i, &mut p);
            p
        })
        .collect();
    let w = grid.weights();
    let a: Vec<f64> = v.iter().zip(w).map(|(v, w)| v.abs() * w).collect();
    let rows: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            if a[i] == 0.0 {
                return 0.0;
            }
            let (xi, yi, zi) = (pts[i][0], pts[i][1], pts[i][2]);
            let mut s = 0.0;
            for (j, p) in pts.iter().enumerate() {
                if j == i || a[j] == 0.0 {
                    continue;
                }
                let d2 = (xi - p[0]).powi(2) + (yi - p[1]).powi(2) + (zi - p[2]).powi(2);
                s += a[j] / d2;
            }
            let r_eq = (3.0 * w[i] / (4.0 * PI)).cbrt();
            a[i] * s + v[i] * v[i] * w[i] * 4.0 * PI * r_eq
        })
        .collect();
    let value = rows.iter().sum::<f64>().sqrt();
    let l3_2 = lp_norm_real(v, 1.5, grid)?;
    let hls_bound = c_hls.sqrt() * l3_2;
    let threshold = 4.0 * PI;
    Ok(RollnikReport {
        value,
        hls_bound,
        threshold,
        below_threshold: value < threshold,
    })
}
