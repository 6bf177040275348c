//! Source (right-hand side) families.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::Grid;
use crate::potential::{lp_norm, times_radius, PotentialSpec};
use crate::quadrature::unit_sphere_area;

/// One term `coeff * prod_d x_d^{powers[d]}` of a polynomial prefactor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Zero,
    /// `amplitude * exp(-c |x|^2)`.
    Gaussian { amplitude: f64, c: f64 },
    /// `sum_terms coeff * x^powers * exp(-c |x|^2)`.
    PolyGaussian { terms: Vec<Monomial>, c: f64 },
    /// Indicator of the ball of the given radius.
    BallIndicator { radius: f64 },
    /// `(-Laplacian + V - a) u` for `u = amplitude * exp(-c |x|^2)`.
    HelmholtzManufactured {
        a: f64,
        c: f64,
        amplitude: f64,
        potential: PotentialSpec,
    },
}

impl SourceSpec {
    pub fn gaussian(amplitude: f64, c: f64) -> Self {
        Self::Gaussian { amplitude, c }
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        match self {
            Self::Zero => 0.0,
            Self::Gaussian { amplitude, c } => amplitude * (-c * r2).exp(),
            Self::PolyGaussian { terms, c } => {
                let poly: f64 = terms
                    .iter()
                    .map(|t| {
                        t.coeff
                            * t.powers
                                .iter()
                                .zip(x)
                                .map(|(p, xi)| xi.powi(*p as i32))
                                .product::<f64>()
                    })
                    .sum();
                poly * (-c * r2).exp()
            }
            Self::BallIndicator { radius } => {
                if r2 <= radius * radius {
                    1.0
                } else {
                    0.0
                }
            }
            Self::HelmholtzManufactured {
                a,
                c,
                amplitude,
                potential,
            } => {
                let n = x.len() as f64;
                let lap = 2.0 * c * n - 4.0 * c * c * r2;
                amplitude * (lap + potential.value_at(x) - a) * (-c * r2).exp()
            }
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Self::Gaussian { c, .. } | Self::HelmholtzManufactured { c, .. } | Self::PolyGaussian { c, .. }
                if *c <= 0.0 =>
            {
                Err(Error::InvalidParameter(format!("gaussian width must be positive, got {c}")))
            }
            Self::PolyGaussian { terms, .. } => {
                for t in terms {
                    if t.powers.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: t.powers.len(),
                        });
                    }
                }
                Ok(())
            }
            Self::BallIndicator { radius } if *radius <= 0.0 => {
                Err(Error::InvalidParameter("ball radius must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn eval_field(&self, grid: &Grid) -> Result<Vec<Complex64>> {
        self.validate(grid.dim())?;
        Ok(grid.sample(|x| Complex64::new(self.value_at(x), 0.0)))
    }

    /// Exact solution of a manufactured source, if this is one.
    pub fn manufactured_solution(&self, grid: &Grid) -> Option<Vec<Complex64>> {
        match self {
            Self::HelmholtzManufactured { c, amplitude, .. } => Some(grid.sample(|x| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                Complex64::new(amplitude * (-c * r2).exp(), 0.0)
            })),
            _ => None,
        }
    }
}

/// The estimate ||f||_1 <= |B_1|^{1/2} ||f||_2 + || |x| f ||_1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct L1Bound {
    pub l1: f64,
    pub l2: f64,
    pub xf_l1: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn l1_bound(f: &[Complex64], grid: &Grid) -> Result<L1Bound> {
    check_len(grid.len(), f.len())?;
    let ball = unit_sphere_area(grid.dim()) / grid.dim() as f64;
    let l1 = lp_norm(f, 1.0, grid)?;
    let l2 = lp_norm(f, 2.0, grid)?;
    let xf_l1 = lp_norm(&times_radius(f, grid)?, 1.0, grid)?;
    let bound = ball.sqrt() * l2 + xf_l1;
    Ok(L1Bound {
        l1,
        l2,
        xf_l1,
        bound,
        holds: l1 <= bound * (1.0 + 1e-12),
    })
}
