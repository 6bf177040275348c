//! Free Helmholtz kernels truncated to a ball and applied by FFT.
//!
//! A kernel g(|x|) cut off at radius L has the smooth Fourier transform
//! 4 pi / s * int_0^L r g(r) sin(s r) dr, which is sampled on a periodic grid
//! wide enough that the periodic convolution equals the free one on the box.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::fft::{next_fast_len, next_fast_odd_len, FftNd};
use crate::grid::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    /// -exp(i kappa r) / (4 pi r)
    Helmholtz,
    /// -i exp(i kappa r) / (4 pi), the kappa-derivative of the Helmholtz kernel.
    KappaDerivative,
}

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// int_0^L r^n e^{i t r} dr for n = 0, 1, 2.
fn moment(n: u32, t: f64, l: f64) -> Complex64 {
    if (t * l).abs() < 2.0 {
        let mut sum = Complex64::default();
        let mut term = Complex64::new(l.powi(n as i32 + 1), 0.0);
        for j in 0..60u32 {
            let c = term / (n + j + 1) as f64;
            sum += c;
            if c.norm() < 1e-18 * sum.norm() {
                break;
            }
            term *= I * t * l / (j + 1) as f64;
        }
        return sum;
    }
    let e = Complex64::from_polar(1.0, t * l);
    let it = I * t;
    match n {
        0 => (e - 1.0) / it,
        1 => e * (l / it + 1.0 / (t * t)) - 1.0 / (t * t),
        2 => e * (l * l / it + 2.0 * l / (t * t) - 2.0 / (it * t * t)) + 2.0 / (it * t * t),
        _ => unreachable!("only moments up to r^2 are used"),
    }
}

/// Fourier transform of the kernel truncated at radius `l`, at frequency magnitude `s`.
pub fn truncated_spectrum(kind: KernelKind, kappa: f64, l: f64, s: f64) -> Complex64 {
    match kind {
        KernelKind::Helmholtz => {
            if s == 0.0 {
                -moment(1, kappa, l)
            } else {
                -(moment(0, kappa + s, l) - moment(0, kappa - s, l)) / (2.0 * I * s)
            }
        }
        KernelKind::KappaDerivative => {
            if s == 0.0 {
                -I * moment(2, kappa, l)
            } else {
                -(moment(1, kappa + s, l) - moment(1, kappa - s, l)) / (2.0 * s)
            }
        }
    }
}

/// Discrete convolution with a truncated kernel on a three-dimensional box grid:
/// `out_i = sum_j K(x_i - x_j) rho_j`.
pub struct TruncatedConvolver {
    n: usize,
    padded: usize,
    fft: FftNd,
    spectrum: Vec<Complex64>,
    kappa: f64,
    kind: KernelKind,
}

impl TruncatedConvolver {
    pub fn new(grid: &Grid, kappa: f64, kind: KernelKind) -> Result<Self> {
        if grid.dim() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: grid.dim(),
            });
        }
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::InvalidParameter(format!("wavenumber must be nonnegative, got {kappa}")));
        }
        let n = grid.points_per_axis();
        let h = grid.spacing();
        let span = (n - 1) as f64 * h;
        let l = 3f64.sqrt() * span * (1.0 + 1e-9);
        let wide = next_fast_odd_len(((n - 1) as f64 * (1.0 + 3f64.sqrt())).ceil() as usize + 2);
        let period = wide as f64 * h;
        let ds = 2.0 * PI / period;

        // The sampled spectrum is radial, so tabulate it by integer |m|^2.
        let half = (wide / 2) as i64;
        let max_m2 = 3 * half * half;
        let table: Vec<Complex64> = (0..=max_m2)
            .into_par_iter()
            .map(|m2| truncated_spectrum(kind, kappa, l, ds * (m2 as f64).sqrt()))
            .collect();
        let signed = |i: usize| -> i64 {
            let i = i as i64;
            if i > half {
                i - wide as i64
            } else {
                i
            }
        };
        let mut big = vec![Complex64::default(); wide * wide * wide];
        big.par_chunks_mut(wide * wide).enumerate().for_each(|(a, plane)| {
            let ma = signed(a);
            for b in 0..wide {
                let mb = signed(b);
                for c in 0..wide {
                    let mc = signed(c);
                    plane[b * wide + c] = table[(ma * ma + mb * mb + mc * mc) as usize];
                }
            }
        });
        FftNd::new(&[wide; 3]).inverse(&mut big);
        let vol = period.powi(3);

        let padded = next_fast_len(2 * n - 1);
        let mut kern = vec![Complex64::default(); padded * padded * padded];
        let reach = n as i64 - 1;
        let wrap = |d: i64, m: usize| -> usize { d.rem_euclid(m as i64) as usize };
        for da in -reach..=reach {
            let (ia, pa) = (wrap(da, wide), wrap(da, padded));
            for db in -reach..=reach {
                let (ib, pb) = (wrap(db, wide), wrap(db, padded));
                for dc in -reach..=reach {
                    let (ic, pc) = (wrap(dc, wide), wrap(dc, padded));
                    kern[(pa * padded + pb) * padded + pc] = big[(ia * wide + ib) * wide + ic] / vol;
                }
            }
        }
        drop(big);
        let fft = FftNd::new(&[padded; 3]);
        fft.forward(&mut kern);
        let scale = 1.0 / (padded * padded * padded) as f64;
        kern.iter_mut().for_each(|z| *z *= scale);
        Ok(Self {
            n,
            padded,
            fft,
            spectrum: kern,
            kappa,
            kind,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn convolve(&self, rho: &[Complex64]) -> Result<Vec<Complex64>> {
        self.apply(rho, false)
    }

    /// Convolution with the complex-conjugate kernel.
    pub fn convolve_conjugate(&self, rho: &[Complex64]) -> Result<Vec<Complex64>> {
        self.apply(rho, true)
    }

    fn apply(&self, rho: &[Complex64], conjugate: bool) -> Result<Vec<Complex64>> {
        check_len(self.len(), rho.len())?;
        let (n, p) = (self.n, self.padded);
        let mut buf = vec![Complex64::default(); p * p * p];
        for a in 0..n {
            for b in 0..n {
                let src = (a * n + b) * n;
                let dst = (a * p + b) * p;
                buf[dst..dst + n].copy_from_slice(&rho[src..src + n]);
            }
        }
        self.fft.forward(&mut buf);
        if conjugate {
            buf.par_iter_mut().zip(&self.spectrum).for_each(|(z, k)| *z *= k.conj());
        } else {
            buf.par_iter_mut().zip(&self.spectrum).for_each(|(z, k)| *z *= k);
        }
        self.fft.inverse(&mut buf);
        let mut out = vec![Complex64::default(); n * n * n];
        for a in 0..n {
            for b in 0..n {
                let src = (a * p + b) * p;
                let dst = (a * n + b) * n;
                out[dst..dst + n].copy_from_slice(&buf[src..src + n]);
            }
        }
        Ok(out)
    }
}

/// O(M^2) convolution with the Helmholtz kernel in which each singular cell is
/// replaced by the ball of equal volume.
pub fn convolve_direct(grid: &Grid, kappa: f64, rho_weighted: &[Complex64]) -> Result<Vec<Complex64>> {
    if grid.dim() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: grid.dim(),
        });
    }
    check_len(grid.len(), rho_weighted.len())?;
    let pts: Vec<[f64; 3]> = (0..grid.len())
        .map(|i| {
            let mut p = [0.0; 3];
            grid.point(i, &mut p);
            p
        })
        .collect();
    let w = grid.weights();
    let four_pi = 4.0 * PI;
    Ok((0..grid.len())
        .into_par_iter()
        .map(|i| {
            let xi = pts[i];
            let mut s = Complex64::default();
            for (j, p) in pts.iter().enumerate() {
                if j == i {
                    continue;
                }
                let r = ((xi[0] - p[0]).powi(2) + (xi[1] - p[1]).powi(2) + (xi[2] - p[2]).powi(2)).sqrt();
                s -= Complex64::from_polar(1.0 / (four_pi * r), kappa * r) * rho_weighted[j];
            }
            let r_eq = (3.0 * w[i] / four_pi).cbrt();
            let ball = moment(1, kappa, r_eq);
            s - ball * rho_weighted[i] / w[i]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_box_grid;
    use crate::quadrature::composite;

    fn spectrum_by_quadrature(kind: KernelKind, kappa: f64, l: f64, s: f64) -> Complex64 {
        let (r, w) = composite(0.0, l, 400, 12);
        let g = |r: f64| match kind {
            KernelKind::Helmholtz => -Complex64::from_polar(1.0, kappa * r) / (4.0 * PI * r),
            KernelKind::KappaDerivative => -I * Complex64::from_polar(1.0, kappa * r) / (4.0 * PI),
        };
        r.iter()
            .zip(&w)
            .map(|(r, w)| {
                let sinc = if s == 0.0 { 1.0 } else { (s * r).sin() / (s * r) };
                g(*r) * 4.0 * PI * r * r * sinc * *w
            })
            .sum()
    }

    #[test]
    fn spectrum_matches_quadrature() {
        for kind in [KernelKind::Helmholtz, KernelKind::KappaDerivative] {
            for &kappa in &[0.0, 0.7, 3.1] {
                for &s in &[0.0, 1e-3, 0.3, 0.7, 2.5, 3.1, 9.0] {
                    let a = truncated_spectrum(kind, kappa, 5.3, s);
                    let b = spectrum_by_quadrature(kind, kappa, 5.3, s);
                    assert!((a - b).norm() < 1e-10 * b.norm().max(1.0), "{kind:?} {kappa} {s}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn static_limit_closed_form() {
        let l = 4.0;
        for &s in &[0.2, 1.0, 3.0] {
            let a = truncated_spectrum(KernelKind::Helmholtz, 0.0, l, s);
            let b = -(1.0 - (s * l).cos()) / (s * s);
            assert!((a.re - b).abs() < 1e-13 && a.im.abs() < 1e-13);
        }
        let a = truncated_spectrum(KernelKind::Helmholtz, 0.0, l, 0.0);
        assert!((a.re + l * l / 2.0).abs() < 1e-13);
    }

    fn gaussian_density(grid: &Grid, c: f64) -> Vec<Complex64> {
        let w = grid.weights();
        grid.sample(|x| (-c * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp())
            .iter()
            .zip(w)
            .map(|(v, w)| Complex64::new(v * w, 0.0))
            .collect()
    }

    #[test]
    fn newtonian_potential_of_gaussian() {
        let g = build_box_grid(3, 5.0, 33).unwrap();
        let conv = TruncatedConvolver::new(&g, 0.0, KernelKind::Helmholtz).unwrap();
        let out = conv.convolve(&gaussian_density(&g, 1.0)).unwrap();
        for i in (0..g.len()).step_by(997) {
            let r = g.radius(i);
            let exact = if r == 0.0 {
                -PI.powf(1.5) * 2.0 / PI.sqrt() / (4.0 * PI)
            } else {
                -PI.powf(1.5) * statrs::function::erf::erf(r) / r / (4.0 * PI)
            };
            assert!((out[i].re - exact).abs() < 1e-9, "r={r}: {} vs {exact}", out[i].re);
            assert!(out[i].im.abs() < 1e-9);
        }
    }

    #[test]
    fn oscillatory_kernel_at_origin() {
        let g = build_box_grid(3, 5.0, 33).unwrap();
        let kappa = 1.7;
        let conv = TruncatedConvolver::new(&g, kappa, KernelKind::Helmholtz).unwrap();
        let out = conv.convolve(&gaussian_density(&g, 1.0)).unwrap();
        let centre = g.len() / 2;
        assert!(g.radius(centre) < 1e-12);
        let (r, w) = composite(0.0, 8.0, 200, 10);
        let exact: Complex64 = r
            .iter()
            .zip(&w)
            .map(|(r, w)| -Complex64::from_polar(r * (-r * r).exp() * w, kappa * r))
            .sum();
        assert!((out[centre] - exact).norm() < 1e-9);
    }

    #[test]
    fn conjugate_convolution_is_adjoint() {
        let g = build_box_grid(3, 3.0, 10).unwrap();
        let conv = TruncatedConvolver::new(&g, 1.3, KernelKind::Helmholtz).unwrap();
        let a: Vec<Complex64> = (0..g.len()).map(|i| Complex64::new((i as f64).sin(), (0.3 * i as f64).cos())).collect();
        let b: Vec<Complex64> = (0..g.len()).map(|i| Complex64::new((0.7 * i as f64).cos(), (i as f64).sqrt().sin())).collect();
        let ka = conv.convolve(&a).unwrap();
        let kb = conv.convolve_conjugate(&b).unwrap();
        let lhs: Complex64 = ka.iter().zip(&b).map(|(x, y)| x * y.conj()).sum();
        let rhs: Complex64 = a.iter().zip(&kb).map(|(x, y)| x * y.conj()).sum();
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
    }

    #[test]
    fn direct_rule_agrees_to_second_order() {
        let g = build_box_grid(3, 4.0, 17).unwrap();
        let rho = gaussian_density(&g, 1.0);
        let fast = TruncatedConvolver::new(&g, 0.8, KernelKind::Helmholtz).unwrap().convolve(&rho).unwrap();
        let slow = convolve_direct(&g, 0.8, &rho).unwrap();
        let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let scale = fast.iter().map(|a| a.norm()).fold(0.0, f64::max);
        assert!(err < 0.05 * scale, "err {err} scale {scale}");
    }
}
