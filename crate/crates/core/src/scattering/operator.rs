use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::kernel::{convolve_direct, KernelKind, TruncatedConvolver};
use crate::error::{check_len, Error, Result};
use crate::grid::Grid;
use crate::potential::{q_norm_bound, PotentialSpec};

/// Sup norm of the free plane wave e^{ik.x} / (2 pi)^{3/2}.
pub fn plane_wave_amplitude() -> f64 {
    (2.0 * PI).powf(-1.5)
}

pub fn plane_wave(k: [f64; 3], grid: &Grid) -> Vec<Complex64> {
    let amp = plane_wave_amplitude();
    grid.sample(|x| Complex64::from_polar(amp, k[0] * x[0] + k[1] * x[1] + k[2] * x[2]))
}

pub fn sup_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// How singular cells are integrated when applying Q_k.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureMode {
    /// FFT convolution with the ball-truncated kernel (spectrally accurate).
    #[default]
    Spectral,
    /// O(M^2) sums with an equal-volume ball on the diagonal.
    Direct,
}

/// The Lippmann-Schwinger operator
/// (Q_kappa phi)(x) = -1/(4 pi) int e^{i kappa |x-y|} / |x-y| V(y) phi(y) dy
/// discretised on a three-dimensional grid.
pub struct LsOperator<'g> {
    grid: &'g Grid,
    kappa: f64,
    v: Vec<f64>,
    wv: Vec<f64>,
    mode: QuadratureMode,
    conv: Option<TruncatedConvolver>,
    bound: f64,
}

impl<'g> LsOperator<'g> {
    pub fn new(grid: &'g Grid, v: &PotentialSpec, kappa: f64) -> Result<Self> {
        Self::with_mode(grid, v, kappa, QuadratureMode::Spectral)
    }

    pub fn with_mode(grid: &'g Grid, v: &PotentialSpec, kappa: f64, mode: QuadratureMode) -> Result<Self> {
        let bound = q_norm_bound(v)?.bound;
        let values = v.eval_field(grid)?;
        Self::from_values(grid, values, bound, kappa, mode)
    }

    /// Builds the operator from sampled potential values and a known norm bound.
    pub fn from_values(grid: &'g Grid, v: Vec<f64>, bound: f64, kappa: f64, mode: QuadratureMode) -> Result<Self> {
        if grid.dim() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: grid.dim(),
            });
        }
        check_len(grid.len(), v.len())?;
        let wv = v.iter().zip(grid.weights()).map(|(v, w)| v * w).collect();
        let zero = v.iter().all(|x| *x == 0.0);
        let conv = if zero || mode == QuadratureMode::Direct {
            None
        } else {
            Some(TruncatedConvolver::new(grid, kappa, KernelKind::Helmholtz)?)
        };
        Ok(Self {
            grid,
            kappa,
            v,
            wv,
            mode,
            conv,
            bound,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn mode(&self) -> QuadratureMode {
        self.mode
    }

    pub fn norm_bound(&self) -> f64 {
        self.bound
    }

    pub fn is_zero(&self) -> bool {
        self.v.iter().all(|x| *x == 0.0)
    }

    pub fn potential_values(&self) -> &[f64] {
        &self.v
    }

    pub fn apply(&self, phi: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.grid.len(), phi.len())?;
        if self.is_zero() {
            return Ok(vec![Complex64::default(); phi.len()]);
        }
        let rho: Vec<Complex64> = phi.iter().zip(&self.wv).map(|(p, w)| p * w).collect();
        match &self.conv {
            Some(c) => c.convolve(&rho),
            None => convolve_direct(self.grid, self.kappa, &rho),
        }
    }

    /// Adjoint in the grid-weighted inner product.
    pub fn apply_adjoint(&self, psi: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.grid.len(), psi.len())?;
        if self.is_zero() {
            return Ok(vec![Complex64::default(); psi.len()]);
        }
        let rho: Vec<Complex64> = psi.iter().zip(self.grid.weights()).map(|(p, w)| p * w).collect();
        let out = match &self.conv {
            Some(c) => c.convolve_conjugate(&rho)?,
            None => {
                let conj: Vec<Complex64> = rho.iter().map(|z| z.conj()).collect();
                convolve_direct(self.grid, self.kappa, &conj)?.iter().map(|z| z.conj()).collect()
            }
        };
        Ok(out.iter().zip(&self.v).map(|(z, v)| z * v).collect())
    }
}

/// Applies Q_k to a field for the potential `v`.
pub fn apply_q(phi: &[Complex64], k: [f64; 3], v: &PotentialSpec, grid: &Grid) -> Result<Vec<Complex64>> {
    let kappa = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
    LsOperator::new(grid, v, kappa)?.apply(phi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeumannOutcome {
    pub sum: Vec<Complex64>,
    /// Number of operator applications summed.
    pub iterations: usize,
    /// q^{n+1} / (1 - q) times the sup norm of the right-hand side.
    pub tail_bound: f64,
    /// Sup norm of each summed term, starting with the right-hand side.
    pub term_sup_norms: Vec<f64>,
}

/// Number of operator applications after which the analytic tail bound of a
/// plane-wave Neumann series falls below `tol`.
pub fn neumann_terms_needed(q: f64, tol: f64, max_iter: usize) -> Result<usize> {
    if !(q < 1.0) {
        return Err(Error::ContractionViolated { bound: q });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let amp = plane_wave_amplitude();
    let tail = |n: usize| q.powi(n as i32 + 1) / (1.0 - q) * amp;
    if q == 0.0 {
        return Ok(0);
    }
    let mut n = 0;
    while tail(n) >= tol {
        n += 1;
        if n > max_iter {
            return Err(Error::NonConvergence {
                iterations: max_iter,
                tail_bound: tail(max_iter),
                tol,
            });
        }
    }
    Ok(n)
}

/// Sums rhs + A rhs + A^2 rhs + ... for a contraction A with norm bound q.
pub fn neumann_sum<F>(apply: F, rhs: Vec<Complex64>, q: f64, tol: f64, max_iter: usize) -> Result<NeumannOutcome>
where
    F: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
{
    let terms = neumann_terms_needed(q, tol, max_iter)?;
    let rhs_sup = sup_norm(&rhs);
    let mut term_sup_norms = vec![rhs_sup];
    let mut sum = rhs.clone();
    let mut term = rhs;
    for _ in 0..terms {
        term = apply(&term)?;
        term_sup_norms.push(sup_norm(&term));
        sum.iter_mut().zip(&term).for_each(|(s, t)| *s += t);
    }
    let tail_bound = if q == 0.0 {
        0.0
    } else {
        q.powi(terms as i32 + 1) / (1.0 - q) * rhs_sup
    };
    Ok(NeumannOutcome {
        sum,
        iterations: terms,
        tail_bound,
        term_sup_norms,
    })
}
