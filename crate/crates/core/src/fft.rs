//! Multidimensional FFTs and the shifted DFT between a box grid and its
//! matched frequency grid.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Result};
use crate::grid::{Grid, GridSpec, QuadratureRule};

/// Unnormalised FFT over a row-major array of the given shape.
pub struct FftNd {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl FftNd {
    pub fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        Self {
            shape: shape.to_vec(),
            forward,
            inverse,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Inverse transform without the 1/len normalisation.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        assert_eq!(data.len(), self.len(), "FFT buffer length mismatch");
        for (axis, plan) in plans.iter().enumerate() {
            let n = self.shape[axis];
            if n <= 1 {
                continue;
            }
            let stride: usize = self.shape[axis + 1..].iter().product();
            if stride == 1 {
                data.par_chunks_mut(n * 64).for_each(|chunk| {
                    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
                    plan.process_with_scratch(chunk, &mut scratch);
                });
            } else {
                let block = n * stride;
                data.par_chunks_mut(block).for_each(|blk| {
                    transform_strided(blk, n, stride, plan.as_ref());
                });
            }
        }
    }
}

fn transform_strided(blk: &mut [Complex64], n: usize, stride: usize, plan: &dyn Fft<f64>) {
    const BATCH: usize = 32;
    let mut buf = vec![Complex64::default(); n * BATCH];
    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
    let mut o = 0;
    while o < stride {
        let b = BATCH.min(stride - o);
        for j in 0..n {
            let row = &blk[j * stride + o..j * stride + o + b];
            for (l, v) in row.iter().enumerate() {
                buf[l * n + j] = *v;
            }
        }
        plan.process_with_scratch(&mut buf[..b * n], &mut scratch);
        for j in 0..n {
            let row = &mut blk[j * stride + o..j * stride + o + b];
            for (l, v) in row.iter_mut().enumerate() {
                *v = buf[l * n + j];
            }
        }
        o += b;
    }
}

/// Smallest integer at least `n` whose prime factors are 2, 3, 5 or 7.
pub fn next_fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Smallest odd integer at least `n` whose prime factors are 3, 5 or 7.
pub fn next_fast_odd_len(n: usize) -> usize {
    let mut m = n.max(1) | 1;
    loop {
        let mut r = m;
        for p in [3, 5, 7] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 2;
    }
}

/// Frequency grid matched to a box grid: N midpoint nodes with step 2 pi/(N h).
pub fn matched_frequency_grid(x: &Grid) -> Result<Grid> {
    oversampled_frequency_grid(x, 1)
}

/// Frequency grid with step 2 pi/(s N h) covering the same band as the
/// matched grid, using s N midpoint nodes per axis.
pub fn oversampled_frequency_grid(x: &Grid, s: usize) -> Result<Grid> {
    if s == 0 {
        return Err(crate::Error::InvalidParameter("oversampling factor must be positive".into()));
    }
    let n = x.points_per_axis();
    let dp = 2.0 * PI / (n as f64 * x.spacing());
    Grid::new(&GridSpec {
        dim: x.dim(),
        extent: 0.5 * n as f64 * dp,
        points_per_axis: s * n,
        rule: QuadratureRule::Midpoint,
    })
}

/// Discrete Fourier transform with the unitary (2 pi)^{-n/2} normalisation
/// between a box grid and its matched frequency grid.
///
/// Node sums use the uniform weight h^n, so `inverse(forward(u)) == u`.
pub struct ShiftedDft {
    dim: usize,
    n: usize,
    fft: FftNd,
    pre_fwd: Vec<Complex64>,
    post_fwd: Vec<Complex64>,
    pre_inv: Vec<Complex64>,
    post_inv: Vec<Complex64>,
    scale_fwd: f64,
    scale_inv: f64,
    frequencies: Vec<f64>,
}

impl ShiftedDft {
    pub fn new(x: &Grid) -> Self {
        let n = x.points_per_axis();
        let dim = x.dim();
        let h = x.spacing();
        let dp = 2.0 * PI / (n as f64 * h);
        let x0 = x.axis()[0];
        let p0 = -0.5 * (n as f64 - 1.0) * dp;
        let frequencies: Vec<f64> = (0..n).map(|m| p0 + m as f64 * dp).collect();
        let cis = |t: f64| Complex64::from_polar(1.0, t);
        let pre_fwd = (0..n).map(|j| cis(-p0 * j as f64 * h)).collect();
        let post_fwd = (0..n).map(|m| cis(-p0 * x0 - m as f64 * dp * x0)).collect();
        let pre_inv = (0..n).map(|m| cis(m as f64 * dp * x0)).collect();
        let post_inv = (0..n).map(|j| cis(p0 * x0 + p0 * j as f64 * h)).collect();
        let norm = (2.0 * PI).powf(-0.5 * dim as f64);
        Self {
            dim,
            n,
            fft: FftNd::new(&vec![n; dim]),
            pre_fwd,
            post_fwd,
            pre_inv,
            post_inv,
            scale_fwd: norm * h.powi(dim as i32),
            scale_inv: norm * dp.powi(dim as i32),
            frequencies,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.fft.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Frequency values along one axis.
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn frequency_squared(&self, i: usize) -> f64 {
        let mut rest = i;
        let mut s = 0.0;
        for _ in 0..self.dim {
            let p = self.frequencies[rest % self.n];
            s += p * p;
            rest /= self.n;
        }
        s
    }

    pub fn frequency(&self, i: usize, out: &mut [f64]) {
        let mut rest = i;
        for d in (0..self.dim).rev() {
            out[d] = self.frequencies[rest % self.n];
            rest /= self.n;
        }
    }

    fn apply_phase(&self, data: &mut [Complex64], phase: &[Complex64], scale: f64) {
        let n = self.n;
        let dim = self.dim;
        data.par_chunks_mut(n).enumerate().for_each(|(row, chunk)| {
            let mut rest = row;
            let mut common = Complex64::new(scale, 0.0);
            for _ in 1..dim {
                common *= phase[rest % n];
                rest /= n;
            }
            for (v, p) in chunk.iter_mut().zip(phase) {
                *v *= common * p;
            }
        });
    }

    pub fn forward(&self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.len(), u.len())?;
        let mut d = u.to_vec();
        self.apply_phase(&mut d, &self.pre_fwd, 1.0);
        self.fft.forward(&mut d);
        self.apply_phase(&mut d, &self.post_fwd, self.scale_fwd);
        Ok(d)
    }

    pub fn inverse(&self, uhat: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.len(), uhat.len())?;
        let mut d = uhat.to_vec();
        self.apply_phase(&mut d, &self.pre_inv, 1.0);
        self.fft.inverse(&mut d);
        self.apply_phase(&mut d, &self.post_inv, self.scale_inv);
        Ok(d)
    }
}
