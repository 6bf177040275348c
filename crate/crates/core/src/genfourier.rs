//! Generalized Fourier transform with respect to scattering states.
//!
//! The transform value at k is (f, phi_k) = ((I - Q_|k|^*)^{-1} f, e_k), so one
//! adjoint Neumann solve serves every k on a sphere |k| = const. Box k-grids
//! are therefore processed shell by shell.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::{Grid, SphereSampling};
use crate::potential::{lp_norm, times_radius, PotentialNorms, PotentialSpec};
use crate::scattering::{neumann_sum, LsOperator};

/// Which k-nodes of a box grid receive transform values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum BandLimit {
    /// Every node.
    Full,
    /// Nodes with |k| <= the given radius.
    Radius(f64),
    /// Radius beyond which the free transform of f stays below the given
    /// fraction of its maximum.
    Auto(f64),
}

impl Default for BandLimit {
    fn default() -> Self {
        Self::Auto(1e-8)
    }
}

/// How box-grid transforms treat the dependence on |k|.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum ShellMode {
    /// One resolvent solve per distinct |k|.
    Exact,
    /// Resolvent solves at this many Chebyshev nodes in |k|, with the
    /// scattered part interpolated in between. The free part stays exact.
    Chebyshev(usize),
    /// Chebyshev with a node count from the size of the box and the band,
    /// unless exact shells are cheaper.
    Auto,
}

impl Default for ShellMode {
    fn default() -> Self {
        Self::Auto
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub band: BandLimit,
    #[serde(default)]
    pub shells: ShellMode,
}

impl Default for TransformOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
            band: BandLimit::default(),
            shells: ShellMode::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenTransform {
    /// Values at the k-grid nodes; zero outside the band.
    pub values: Vec<Complex64>,
    pub band_radius: f64,
    /// Largest |f~| on nodes within one k-spacing of the band edge, relative
    /// to the overall maximum.
    pub band_edge_max: f64,
    /// Number of resolvent solves: distinct shells or Chebyshev nodes.
    pub shells: usize,
    pub max_iterations: usize,
}

fn unitary_norm(dim: usize) -> f64 {
    (2.0 * PI).powf(-0.5 * dim as f64)
}

/// (2 pi)^{-n/2} sum_i w_i v_i e^{sign i k.x_i} at one wavevector.
pub fn direct_dft(values: &[Complex64], grid: &Grid, k: &[f64], sign: f64) -> Result<Complex64> {
    check_len(grid.len(), values.len())?;
    if k.len() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: k.len(),
        });
    }
    let n = grid.points_per_axis();
    let dim = grid.dim();
    let axis = grid.axis();
    let aw = grid.axis_weights();
    let phases: Vec<Vec<Complex64>> = (0..dim)
        .map(|d| (0..n).map(|j| Complex64::from_polar(aw[j], sign * k[d] * axis[j])).collect())
        .collect();
    let mut cur: Vec<Complex64> = values.to_vec();
    for d in (0..dim).rev() {
        let ph = &phases[d];
        cur = cur
            .chunks(n)
            .map(|row| row.iter().zip(ph).map(|(a, b)| a * b).sum())
            .collect();
    }
    Ok(cur[0] * unitary_norm(dim))
}

/// Separable DFT between tensor grids:
/// out(k) = (2 pi)^{-n/2} sum_x in_w(x) e^{sign i k.x}, where `in_w` already
/// carries the quadrature weights and `k_axis` lists the output axis values.
fn tensor_dft(weighted: &[Complex64], n_in: usize, dim: usize, in_axis: &[f64], k_axis: &[f64], sign: f64) -> Vec<Complex64> {
    let nk = k_axis.len();
    let mat: Vec<Complex64> = k_axis
        .iter()
        .flat_map(|k| in_axis.iter().map(move |x| Complex64::from_polar(1.0, sign * k * x)))
        .collect();
    let mut cur = weighted.to_vec();
    let mut shape = vec![n_in; dim];
    for d in 0..dim {
        let outer: usize = shape[..d].iter().product();
        let inner: usize = shape[d + 1..].iter().product();
        let len_in = shape[d];
        let mut next = vec![Complex64::default(); outer * nk * inner];
        next.par_chunks_mut(nk * inner).enumerate().for_each(|(o, dst)| {
            let src = &cur[o * len_in * inner..(o + 1) * len_in * inner];
            for (ki, out_row) in dst.chunks_mut(inner).enumerate() {
                let m = &mat[ki * len_in..(ki + 1) * len_in];
                for (j, e) in m.iter().enumerate() {
                    let row = &src[j * inner..(j + 1) * inner];
                    for (o, v) in out_row.iter_mut().zip(row) {
                        *o += e * v;
                    }
                }
            }
        });
        cur = next;
        shape[d] = nk;
    }
    let norm = unitary_norm(dim);
    cur.iter_mut().for_each(|z| *z *= norm);
    cur
}

/// Groups indices by |k|^2 within a relative tolerance; returns (|k|, members).
fn shells_of(indices: &[usize], radius2: impl Fn(usize) -> f64) -> Vec<(f64, Vec<usize>)> {
    let mut keyed: Vec<(f64, usize)> = indices.iter().map(|&i| (radius2(i), i)).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut anchor = f64::NAN;
    for (r2, i) in keyed {
        if out.is_empty() || (r2 - anchor).abs() > 1e-10 * anchor.max(1.0) {
            anchor = r2;
            out.push((r2.sqrt(), vec![i]));
        } else {
            out.last_mut().expect("nonempty").1.push(i);
        }
    }
    out
}

fn check_three_dim(grid: &Grid, what: &str) -> Result<()> {
    if grid.dim() != 3 {
        return Err(Error::InvalidParameter(format!(
            "{what} must be three-dimensional, got dimension {}",
            grid.dim()
        )));
    }
    Ok(())
}

fn k_radius2(kgrid: &Grid, i: usize) -> f64 {
    let r = kgrid.radius(i);
    r * r
}

/// Radius past which the free transform of `f` on the k-grid stays below
/// `rel` times its maximum.
pub fn auto_band_radius(f: &[Complex64], xgrid: &Grid, kgrid: &Grid, rel: f64) -> Result<f64> {
    let free = free_transform(f, xgrid, kgrid)?;
    let peak = free.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut radius: f64 = 0.0;
    for (i, z) in free.iter().enumerate() {
        if z.norm() >= rel * peak {
            radius = radius.max(kgrid.radius(i));
        }
    }
    Ok(radius)
}

/// Plain Fourier transform (2 pi)^{-3/2} int f e^{-ik.x} on every k-node.
pub fn free_transform(f: &[Complex64], xgrid: &Grid, kgrid: &Grid) -> Result<Vec<Complex64>> {
    check_len(xgrid.len(), f.len())?;
    if xgrid.dim() != kgrid.dim() {
        return Err(Error::DimensionMismatch {
            expected: xgrid.dim(),
            got: kgrid.dim(),
        });
    }
    let weighted: Vec<Complex64> = f.iter().zip(xgrid.weights()).map(|(v, w)| v * w).collect();
    Ok(tensor_dft(
        &weighted,
        xgrid.points_per_axis(),
        xgrid.dim(),
        xgrid.axis(),
        kgrid.axis(),
        -1.0,
    ))
}

/// Index range of k-axis values with |k_d| <= radius.
fn axis_window(axis: &[f64], radius: f64) -> (usize, usize) {
    let lo = axis.iter().position(|k| *k >= -radius - 1e-12).unwrap_or(axis.len());
    let hi = axis.iter().rposition(|k| *k <= radius + 1e-12).map(|i| i + 1).unwrap_or(0);
    (lo, hi.max(lo))
}

fn band_edge(values: &[Complex64], kgrid: &Grid, radius: f64) -> f64 {
    let peak = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    let dk = kgrid.spacing();
    let mut edge: f64 = 0.0;
    for (i, z) in values.iter().enumerate() {
        let r = kgrid.radius(i);
        if r <= radius && r > radius - dk {
            edge = edge.max(z.norm());
        }
    }
    edge / peak
}

/// Chebyshev nodes of the second kind on [0, kmax] and their barycentric weights.
fn chebyshev_nodes(n: usize, kmax: f64) -> (Vec<f64>, Vec<f64>) {
    if n == 1 {
        return (vec![0.5 * kmax], vec![1.0]);
    }
    let nodes = (0..n)
        .map(|j| 0.5 * kmax * (1.0 - (PI * j as f64 / (n - 1) as f64).cos()))
        .collect();
    let weights = (0..n)
        .map(|j| {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n - 1 {
                0.5 * s
            } else {
                s
            }
        })
        .collect();
    (nodes, weights)
}

/// Per-point data for evaluating Lagrange basis polynomials barycentrically.
struct Barycentric {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    x: Vec<f64>,
    denom: Vec<f64>,
    hit: Vec<Option<usize>>,
}

impl Barycentric {
    fn new(nodes: Vec<f64>, weights: Vec<f64>, x: Vec<f64>) -> Self {
        let scale = nodes.last().copied().unwrap_or(1.0).abs().max(1.0);
        let mut denom = vec![0.0; x.len()];
        let mut hit = vec![None; x.len()];
        for (p, &xp) in x.iter().enumerate() {
            for (j, (&xj, &wj)) in nodes.iter().zip(&weights).enumerate() {
                let d = xp - xj;
                if d.abs() <= 1e-14 * scale {
                    hit[p] = Some(j);
                    break;
                }
                denom[p] += wj / d;
            }
        }
        Self {
            nodes,
            weights,
            x,
            denom,
            hit,
        }
    }

    fn basis(&self, j: usize, p: usize) -> f64 {
        match self.hit[p] {
            Some(h) => (h == j) as u8 as f64,
            None => self.weights[j] / ((self.x[p] - self.nodes[j]) * self.denom[p]),
        }
    }
}

/// Radius beyond which |V| stays below 1e-12 of its sup, capped at `cap`.
fn potential_reach(v: &PotentialSpec, cap: f64) -> f64 {
    let peak = (0..=2000)
        .map(|s| v.radial_profile(cap * s as f64 / 2000.0).abs())
        .fold(0.0, f64::max);
    (0..=2000)
        .rev()
        .map(|s| cap * s as f64 / 2000.0)
        .find(|&r| v.radial_profile(r).abs() > 1e-12 * peak)
        .unwrap_or(0.0)
}

/// Chebyshev node count for the scattered part over [0, kmax], or None when
/// exact shells are no more expensive.
fn chebyshev_count(mode: ShellMode, v: &PotentialSpec, xgrid: &Grid, kmax: f64, exact_shells: usize) -> Option<usize> {
    match mode {
        ShellMode::Exact => None,
        ShellMode::Chebyshev(n) => Some(n.max(1)),
        ShellMode::Auto => {
            let half_diag = 3f64.sqrt() * xgrid.extent();
            let reach = half_diag + potential_reach(v, half_diag);
            let n = (0.5 * kmax * reach).ceil() as usize + 24;
            (n < exact_shells).then_some(n)
        }
    }
}

/// Forward generalized transform on a three-dimensional box k-grid.
pub fn forward(f: &[Complex64], v: &PotentialSpec, xgrid: &Grid, kgrid: &Grid, opts: &TransformOptions) -> Result<GenTransform> {
    check_three_dim(xgrid, "x-grid")?;
    check_three_dim(kgrid, "k-grid")?;
    check_len(xgrid.len(), f.len())?;
    let band_radius = match opts.band {
        BandLimit::Full => f64::INFINITY,
        BandLimit::Radius(r) => r,
        BandLimit::Auto(rel) => auto_band_radius(f, xgrid, kgrid, rel)?,
    };
    let inside: Vec<usize> = (0..kgrid.len()).filter(|&i| kgrid.radius(i) <= band_radius).collect();
    let mut values = vec![Complex64::default(); kgrid.len()];
    if v.is_zero() {
        let free = free_transform(f, xgrid, kgrid)?;
        for &i in &inside {
            values[i] = free[i];
        }
        let band_edge_max = band_edge(&values, kgrid, band_radius);
        return Ok(GenTransform {
            values,
            band_radius,
            band_edge_max,
            shells: 0,
            max_iterations: 0,
        });
    }
    let (lo, hi) = axis_window(kgrid.axis(), band_radius);
    let sub_axis = &kgrid.axis()[lo..hi];
    let ns = hi - lo;
    let shells = shells_of(&inside, |i| k_radius2(kgrid, i));
    let kmax = inside.iter().map(|&i| kgrid.radius(i)).fold(0.0, f64::max);
    let mut max_iterations = 0;
    let mut idx = [0usize; 3];
    let sub_index = |i: usize, idx: &mut [usize; 3]| {
        kgrid.multi_index(i, idx);
        ((idx[0] - lo) * ns + idx[1] - lo) * ns + idx[2] - lo
    };
    if let Some(n) = chebyshev_count(opts.shells, v, xgrid, kmax, shells.len()) {
        let weigh = |u: &[Complex64]| -> Vec<Complex64> { u.iter().zip(xgrid.weights()).map(|(v, w)| v * w).collect() };
        let free = tensor_dft(&weigh(f), xgrid.points_per_axis(), 3, xgrid.axis(), sub_axis, -1.0);
        for &i in &inside {
            values[i] = free[sub_index(i, &mut idx)];
        }
        let (nodes, bw) = chebyshev_nodes(n, kmax);
        let bary = Barycentric::new(nodes, bw, inside.iter().map(|&i| kgrid.radius(i)).collect());
        for j in 0..n {
            let op = LsOperator::new(xgrid, v, bary.nodes[j])?;
            let rhs = op.apply_adjoint(f)?;
            let out = neumann_sum(|x| op.apply_adjoint(x), rhs, op.norm_bound(), opts.tol, opts.max_iter)?;
            max_iterations = max_iterations.max(out.iterations + 1);
            let sub = tensor_dft(&weigh(&out.sum), xgrid.points_per_axis(), 3, xgrid.axis(), sub_axis, -1.0);
            for (p, &i) in inside.iter().enumerate() {
                let l = bary.basis(j, p);
                if l != 0.0 {
                    values[i] += l * sub[sub_index(i, &mut idx)];
                }
            }
        }
        let band_edge_max = band_edge(&values, kgrid, band_radius);
        return Ok(GenTransform {
            values,
            band_radius,
            band_edge_max,
            shells: n,
            max_iterations,
        });
    }
    for (kappa, members) in &shells {
        let op = LsOperator::new(xgrid, v, *kappa)?;
        let out = neumann_sum(|x| op.apply_adjoint(x), f.to_vec(), op.norm_bound(), opts.tol, opts.max_iter)?;
        max_iterations = max_iterations.max(out.iterations);
        let weighted: Vec<Complex64> = out.sum.iter().zip(xgrid.weights()).map(|(v, w)| v * w).collect();
        let sub = tensor_dft(&weighted, xgrid.points_per_axis(), 3, xgrid.axis(), sub_axis, -1.0);
        for &i in members {
            kgrid.multi_index(i, &mut idx);
            let (a, b, c) = (idx[0] - lo, idx[1] - lo, idx[2] - lo);
            values[i] = sub[(a * ns + b) * ns + c];
        }
    }
    let band_edge_max = band_edge(&values, kgrid, band_radius);
    Ok(GenTransform {
        values,
        band_radius,
        band_edge_max,
        shells: shells.len(),
        max_iterations,
    })
}

/// Inverse transform u(x) = sum_k w_k t(k) phi_k(x) over a box k-grid.
pub fn inverse(t: &[Complex64], v: &PotentialSpec, xgrid: &Grid, kgrid: &Grid, opts: &TransformOptions) -> Result<Vec<Complex64>> {
    check_three_dim(xgrid, "x-grid")?;
    check_three_dim(kgrid, "k-grid")?;
    check_len(kgrid.len(), t.len())?;
    let weighted: Vec<Complex64> = t.iter().zip(kgrid.weights()).map(|(v, w)| v * w).collect();
    if v.is_zero() {
        return Ok(tensor_dft(&weighted, kgrid.points_per_axis(), 3, kgrid.axis(), xgrid.axis(), 1.0));
    }
    let support: Vec<usize> = (0..kgrid.len()).filter(|&i| weighted[i] != Complex64::default()).collect();
    let radius = support.iter().map(|&i| kgrid.radius(i)).fold(0.0, f64::max);
    let (lo, hi) = axis_window(kgrid.axis(), radius);
    let ns = hi - lo;
    let sub_axis = &kgrid.axis()[lo..hi];
    let shells = shells_of(&support, |i| k_radius2(kgrid, i));
    let mut u = vec![Complex64::default(); xgrid.len()];
    let mut idx = [0usize; 3];
    let kmax = radius;
    if let Some(n) = chebyshev_count(opts.shells, v, xgrid, kmax, shells.len()) {
        let slots: Vec<usize> = support
            .iter()
            .map(|&i| {
                kgrid.multi_index(i, &mut idx);
                ((idx[0] - lo) * ns + idx[1] - lo) * ns + idx[2] - lo
            })
            .collect();
        let mut masked = vec![Complex64::default(); ns * ns * ns];
        for (&i, &s) in support.iter().zip(&slots) {
            masked[s] = weighted[i];
        }
        u = tensor_dft(&masked, ns, 3, sub_axis, xgrid.axis(), 1.0);
        let (nodes, bw) = chebyshev_nodes(n, kmax);
        let bary = Barycentric::new(nodes, bw, support.iter().map(|&i| kgrid.radius(i)).collect());
        for j in 0..n {
            for (p, (&i, &s)) in support.iter().zip(&slots).enumerate() {
                masked[s] = weighted[i] * bary.basis(j, p);
            }
            let waves = tensor_dft(&masked, ns, 3, sub_axis, xgrid.axis(), 1.0);
            let op = LsOperator::new(xgrid, v, bary.nodes[j])?;
            let rhs = op.apply(&waves)?;
            let out = neumann_sum(|x| op.apply(x), rhs, op.norm_bound(), opts.tol, opts.max_iter)?;
            u.iter_mut().zip(&out.sum).for_each(|(a, b)| *a += b);
        }
        return Ok(u);
    }
    for (kappa, members) in &shells {
        let mut masked = vec![Complex64::default(); ns * ns * ns];
        for &i in members {
            kgrid.multi_index(i, &mut idx);
            masked[((idx[0] - lo) * ns + idx[1] - lo) * ns + idx[2] - lo] = weighted[i];
        }
        let waves = tensor_dft(&masked, ns, 3, sub_axis, xgrid.axis(), 1.0);
        let op = LsOperator::new(xgrid, v, *kappa)?;
        let out = neumann_sum(|x| op.apply(x), waves, op.norm_bound(), opts.tol, opts.max_iter)?;
        u.iter_mut().zip(&out.sum).for_each(|(a, b)| *a += b);
    }
    Ok(u)
}

/// Transform values at arbitrary wavevectors.
pub fn transform_at_points(
    f: &[Complex64],
    v: &PotentialSpec,
    points: &[[f64; 3]],
    xgrid: &Grid,
    opts: &TransformOptions,
) -> Result<Vec<Complex64>> {
    check_three_dim(xgrid, "x-grid")?;
    check_len(xgrid.len(), f.len())?;
    let all: Vec<usize> = (0..points.len()).collect();
    let shells = shells_of(&all, |i| points[i].iter().map(|x| x * x).sum());
    let mut out = vec![Complex64::default(); points.len()];
    for (kappa, members) in &shells {
        let field = adjoint_resolvent(f, v, xgrid, *kappa, opts)?;
        let vals: Vec<Complex64> = members
            .par_iter()
            .map(|&i| direct_dft(&field, xgrid, &points[i], -1.0))
            .collect::<Result<_>>()?;
        for (&i, z) in members.iter().zip(vals) {
            out[i] = z;
        }
    }
    Ok(out)
}

/// (I - Q_kappa^*)^{-1} f.
pub fn adjoint_resolvent(f: &[Complex64], v: &PotentialSpec, xgrid: &Grid, kappa: f64, opts: &TransformOptions) -> Result<Vec<Complex64>> {
    if v.is_zero() {
        return Ok(f.to_vec());
    }
    let op = LsOperator::new(xgrid, v, kappa)?;
    Ok(neumann_sum(|x| op.apply_adjoint(x), f.to_vec(), op.norm_bound(), opts.tol, opts.max_iter)?.sum)
}

/// Transform restricted to a sphere in k-space.
pub fn restrict_to_sphere(
    f: &[Complex64],
    v: &PotentialSpec,
    sphere: &SphereSampling,
    xgrid: &Grid,
    opts: &TransformOptions,
) -> Result<Vec<Complex64>> {
    if sphere.dim != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: sphere.dim,
        });
    }
    let pts: Vec<[f64; 3]> = (0..sphere.len())
        .map(|i| {
            let p = sphere.point(i);
            [p[0], p[1], p[2]]
        })
        .collect();
    transform_at_points(f, v, &pts, xgrid, opts)
}

/// Uniform bound on |grad_k f~| assembled from three contributions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradBoundReport {
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
    pub total: f64,
}

pub fn grad_sup_bound(f: &[Complex64], v: &PotentialSpec, xgrid: &Grid) -> Result<GradBoundReport> {
    check_three_dim(xgrid, "x-grid")?;
    let norms = PotentialNorms::of(v)?;
    let q = crate::potential::q_norm_bound_from_norms(norms.sup, norms.l4_3).bound;
    if !(q < 1.0) {
        return Err(Error::ContractionViolated { bound: q });
    }
    let amp = (2.0 * PI).powf(-1.5);
    let f_l1 = lp_norm(f, 1.0, xgrid)?;
    let xf_l1 = lp_norm(&times_radius(f, xgrid)?, 1.0, xgrid)?;
    let four_pi = 4.0 * PI;
    let term1 = amp * xf_l1;
    let qx = (2.0 * PI * norms.x_sup + four_pi.powf(0.25) * norms.x_l4_3) / four_pi;
    let term2 = amp * f_l1 / (1.0 - q) * qx;
    let term3 = amp * f_l1 * norms.l1 / (four_pi * (1.0 - q).powi(2));
    Ok(GradBoundReport {
        term1,
        term2,
        term3,
        total: term1 + term2 + term3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::{matched_frequency_grid, oversampled_frequency_grid, ShiftedDft};
    use crate::grid::{build_box_grid, sphere_sampling};
    use crate::scattering::scattering_state;

    fn gaussian(grid: &Grid, c: f64) -> Vec<Complex64> {
        grid.sample(|x| Complex64::new((-c * x.iter().map(|t| t * t).sum::<f64>()).exp(), 0.0))
    }

    #[test]
    fn direct_dft_of_gaussian() {
        let g = build_box_grid(3, 6.0, 40).unwrap();
        let f = gaussian(&g, 1.0);
        let k = [0.5, -0.3, 1.2];
        let got = direct_dft(&f, &g, &k, -1.0).unwrap();
        let k2: f64 = k.iter().map(|x| x * x).sum();
        let exact = 2f64.powf(-1.5) * (-k2 / 4.0).exp();
        assert!((got.re - exact).abs() < 1e-12 && got.im.abs() < 1e-12);
    }

    #[test]
    fn chebyshev_shells_match_exact() {
        let g = build_box_grid(3, 4.0, 14).unwrap();
        let kg = oversampled_frequency_grid(&g, 2).unwrap();
        let v = PotentialSpec::gaussian(0.5, 1.0);
        let f = gaussian(&g, 1.0);
        let exact = TransformOptions { shells: ShellMode::Exact, ..Default::default() };
        let cheb = TransformOptions { shells: ShellMode::Auto, ..Default::default() };
        let a = forward(&f, &v, &g, &kg, &exact).unwrap();
        let b = forward(&f, &v, &g, &kg, &cheb).unwrap();
        assert!(b.shells < a.shells, "{} vs {}", b.shells, a.shells);
        let scale = a.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let err = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9 * scale, "forward {err:e}");
        let ua = inverse(&a.values, &v, &g, &kg, &exact).unwrap();
        let ub = inverse(&a.values, &v, &g, &kg, &cheb).unwrap();
        let scale = ua.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let err = ua.iter().zip(&ub).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9 * scale, "inverse {err:e}");
    }

    #[test]
    fn barycentric_reproduces_polynomials() {
        let (nodes, w) = chebyshev_nodes(9, 3.0);
        let xs = vec![0.0, 0.37, 1.5, 2.99, 3.0];
        let b = Barycentric::new(nodes.clone(), w, xs.clone());
        for (p, x) in xs.iter().enumerate() {
            let got: f64 = (0..9).map(|j| b.basis(j, p) * nodes[j].powi(5)).sum();
            assert!((got - x.powi(5)).abs() < 1e-10);
        }
    }

    #[test]
    fn free_forward_matches_fft() {
        let g = build_box_grid(3, 5.0, 16).unwrap();
        let kg = matched_frequency_grid(&g).unwrap();
        let f = g.sample(|x| Complex64::new((-(x[0] - 0.3).powi(2) - x[1] * x[1] - 2.0 * x[2] * x[2]).exp(), 0.0));
        let opts = TransformOptions { band: BandLimit::Full, ..Default::default() };
        let t = forward(&f, &PotentialSpec::Zero, &g, &kg, &opts).unwrap();
        let fft = ShiftedDft::new(&g).forward(&f).unwrap();
        let err = t.values.iter().zip(&fft).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn shells_group_equal_radii() {
        let pts = [1.0, 4.0, 1.0 + 1e-14, 9.0, 4.0];
        let s = shells_of(&[0, 1, 2, 3, 4], |i| pts[i]);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].1, vec![0, 2]);
        assert_eq!(s[1].1, vec![1, 4]);
    }

    #[test]
    fn sphere_values_agree_with_explicit_states() {
        let g = build_box_grid(3, 4.0, 20).unwrap();
        let v = PotentialSpec::gaussian(0.5, 1.0);
        let f = g.sample(|x| Complex64::new((-x[0] * x[0] - x[1] * x[1] - x[2] * x[2]).exp() * (1.0 + x[0]), 0.0));
        let sphere = sphere_sampling(3, 1.1, 6).unwrap();
        let opts = TransformOptions::default();
        let via_adjoint = restrict_to_sphere(&f, &v, &sphere, &g, &opts).unwrap();
        for i in 0..sphere.len() {
            let p = sphere.point(i);
            let phi = scattering_state([p[0], p[1], p[2]], &v, &g, 1e-12, 300).unwrap();
            let direct: Complex64 = (0..g.len()).map(|j| g.weights()[j] * f[j] * phi.values[j].conj()).sum();
            assert!((direct - via_adjoint[i]).norm() < 1e-11, "{direct} vs {}", via_adjoint[i]);
        }
    }

    #[test]
    fn forward_inverse_roundtrip_with_potential() {
        let g = build_box_grid(3, 4.5, 16).unwrap();
        let kg = oversampled_frequency_grid(&g, 2).unwrap();
        let v = PotentialSpec::gaussian(0.5, 1.0);
        let f = gaussian(&g, 1.0);
        let opts = TransformOptions::default();
        let t = forward(&f, &v, &g, &kg, &opts).unwrap();
        assert!(t.shells > 0);
        let back = inverse(&t.values, &v, &g, &kg, &opts).unwrap();
        let num: f64 = back.iter().zip(&f).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = f.iter().map(|a| a.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-4, "{}", (num / den).sqrt());
    }

    #[test]
    fn grad_bound_without_potential_is_first_term() {
        let g = build_box_grid(3, 5.0, 20).unwrap();
        let f = gaussian(&g, 1.0);
        let b = grad_sup_bound(&f, &PotentialSpec::Zero, &g).unwrap();
        assert_eq!(b.term2, 0.0);
        assert_eq!(b.term3, 0.0);
        assert!((b.total - (2.0 * PI).powf(-1.5) * 2.0 * PI).abs() < 1e-3);
    }
}
