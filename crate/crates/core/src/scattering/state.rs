use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::kernel::{KernelKind, TruncatedConvolver};
use super::operator::{neumann_sum, plane_wave, sup_norm, LsOperator};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::potential::PotentialSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringState {
    pub k: [f64; 3],
    pub values: Vec<Complex64>,
    pub iterations: usize,
    pub tail_bound: f64,
    pub term_sup_norms: Vec<f64>,
    /// Sup norm of phi - e_k - Q_k phi on the grid.
    pub residual: f64,
}

pub fn norm3(k: [f64; 3]) -> f64 {
    (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt()
}

fn warn_resolution(k: [f64; 3], grid: &Grid) {
    let kn = norm3(k);
    if kn > 0.0 && 2.0 * std::f64::consts::PI / kn < 8.0 * grid.spacing() {
        log::warn!(
            "wavelength {:.3} is resolved by fewer than 8 grid points (spacing {:.3})",
            2.0 * std::f64::consts::PI / kn,
            grid.spacing()
        );
    }
}

/// Solves phi_k = e_k + Q_k phi_k by a Neumann series.
pub fn scattering_state(k: [f64; 3], v: &PotentialSpec, grid: &Grid, tol: f64, max_iter: usize) -> Result<ScatteringState> {
    let op = LsOperator::new(grid, v, norm3(k))?;
    scattering_state_with(&op, k, tol, max_iter)
}

pub fn scattering_state_with(op: &LsOperator<'_>, k: [f64; 3], tol: f64, max_iter: usize) -> Result<ScatteringState> {
    if (norm3(k) - op.kappa()).abs() > 1e-12 * op.kappa().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "operator built for |k| = {} used with |k| = {}",
            op.kappa(),
            norm3(k)
        )));
    }
    warn_resolution(k, op.grid());
    let free = plane_wave(k, op.grid());
    if op.is_zero() {
        return Ok(ScatteringState {
            k,
            term_sup_norms: vec![sup_norm(&free)],
            values: free,
            iterations: 0,
            tail_bound: 0.0,
            residual: 0.0,
        });
    }
    let out = neumann_sum(|x| op.apply(x), free.clone(), op.norm_bound(), tol, max_iter)?;
    let q_phi = op.apply(&out.sum)?;
    let residual = out
        .sum
        .iter()
        .zip(&free)
        .zip(&q_phi)
        .map(|((p, e), q)| (p - e - q).norm())
        .fold(0.0, f64::max);
    Ok(ScatteringState {
        k,
        values: out.sum,
        iterations: out.iterations,
        tail_bound: out.tail_bound,
        term_sup_norms: out.term_sup_norms,
        residual,
    })
}

/// The k-gradient of a scattering state, split into its three contributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradState {
    pub k: [f64; 3],
    /// Components d/dk_j of phi_k.
    pub values: [Vec<Complex64>; 3],
    /// Sup norms of i x e_k, (I - Q)^{-1} Q (i x e_k) and (I - Q)^{-1} (grad_k Q) phi_k.
    pub term_sup_norms: [f64; 3],
    pub iterations: usize,
}

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn vector_sup(c: &[Vec<Complex64>; 3]) -> f64 {
    (0..c[0].len())
        .map(|i| (c[0][i].norm_sqr() + c[1][i].norm_sqr() + c[2][i].norm_sqr()).sqrt())
        .fold(0.0, f64::max)
}

pub fn grad_scattering_state(k: [f64; 3], v: &PotentialSpec, grid: &Grid, tol: f64, max_iter: usize) -> Result<GradState> {
    let kn = norm3(k);
    if kn == 0.0 {
        return Err(Error::InvalidParameter(
            "the k-gradient of a scattering state is undefined at k = 0".into(),
        ));
    }
    let op = LsOperator::new(grid, v, kn)?;
    let state = scattering_state_with(&op, k, tol, max_iter)?;
    let free = plane_wave(k, grid);
    let mut t1: [Vec<Complex64>; 3] = Default::default();
    for (d, t) in t1.iter_mut().enumerate() {
        *t = grid.sample(|x| I * x[d]).iter().zip(&free).map(|(a, b)| a * b).collect();
    }
    if op.is_zero() {
        let n1 = vector_sup(&t1);
        return Ok(GradState {
            k,
            values: t1,
            term_sup_norms: [n1, 0.0, 0.0],
            iterations: 0,
        });
    }
    let q = op.norm_bound();
    let mut t2: [Vec<Complex64>; 3] = Default::default();
    let mut iterations = state.iterations;
    for d in 0..3 {
        let qx = op.apply(&t1[d])?;
        let out = neumann_sum(|x| op.apply(x), qx, q, tol, max_iter)?;
        iterations = iterations.max(out.iterations);
        t2[d] = out.sum;
    }
    let conv = TruncatedConvolver::new(grid, kn, KernelKind::KappaDerivative)?;
    let v_vals = op.potential_values();
    let rho: Vec<Complex64> = state
        .values
        .iter()
        .zip(v_vals)
        .zip(grid.weights())
        .map(|((p, v), w)| p * v * w)
        .collect();
    let d_phi = conv.convolve(&rho)?;
    let scalar = neumann_sum(|x| op.apply(x), d_phi, q, tol, max_iter)?.sum;
    let t3: [Vec<Complex64>; 3] = [0, 1, 2].map(|d| scalar.iter().map(|z| z * (k[d] / kn)).collect());
    let term_sup_norms = [vector_sup(&t1), vector_sup(&t2), vector_sup(&t3)];
    let values = [0, 1, 2].map(|d| {
        t1[d]
            .iter()
            .zip(&t2[d])
            .zip(&t3[d])
            .map(|((a, b), c)| a + b + c)
            .collect()
    });
    Ok(GradState {
        k,
        values,
        term_sup_norms,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_box_grid;
    use crate::potential::q_norm_bound;
    use std::f64::consts::PI;

    #[test]
    fn zero_potential_gives_plane_wave_exactly() {
        let g = build_box_grid(3, 3.0, 8).unwrap();
        let k = [0.3, -1.1, 0.7];
        let s = scattering_state(k, &PotentialSpec::Zero, &g, 1e-10, 50).unwrap();
        assert_eq!(s.iterations, 0);
        let amp = (2.0 * PI).powf(-1.5);
        let mut x = [0.0; 3];
        for i in 0..g.len() {
            g.point(i, &mut x);
            let e = Complex64::from_polar(amp, k[0] * x[0] + k[1] * x[1] + k[2] * x[2]);
            assert_eq!(s.values[i], e);
        }
    }

    #[test]
    fn state_satisfies_equation_and_bound() {
        let g = build_box_grid(3, 4.0, 24).unwrap();
        let v = PotentialSpec::gaussian(0.5, 1.0);
        let q = q_norm_bound(&v).unwrap().bound;
        let s = scattering_state([0.0, 0.0, 0.0], &v, &g, 1e-8, 200).unwrap();
        let cap = (1e-8f64.ln() / q.ln()).ceil() as usize;
        assert!(s.iterations <= cap);
        assert!(s.residual < 1e-8);
        assert!(sup_norm(&s.values) <= (2.0 * PI).powf(-1.5) / (1.0 - q) + 1e-6);
        for w in s.term_sup_norms.windows(2) {
            assert!(w[1] <= q * w[0] * (1.0 + 1e-9) + 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let g = build_box_grid(3, 4.0, 20).unwrap();
        let v = PotentialSpec::gaussian(0.6, 1.0);
        let k = [0.4, 0.3, -0.5];
        let grad = grad_scattering_state(k, &v, &g, 1e-12, 200).unwrap();
        let d = 1e-4;
        for j in 0..3 {
            let mut kp = k;
            let mut km = k;
            kp[j] += d;
            km[j] -= d;
            let p = scattering_state(kp, &v, &g, 1e-12, 200).unwrap();
            let m = scattering_state(km, &v, &g, 1e-12, 200).unwrap();
            let err = (0..g.len())
                .map(|i| ((p.values[i] - m.values[i]) / (2.0 * d) - grad.values[j][i]).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-6, "component {j}: {err}");
        }
    }

    #[test]
    fn gradient_rejects_origin() {
        let g = build_box_grid(3, 2.0, 6).unwrap();
        assert!(matches!(
            grad_scattering_state([0.0; 3], &PotentialSpec::Zero, &g, 1e-8, 10),
            Err(Error::InvalidParameter(_))
        ));
    }
}
