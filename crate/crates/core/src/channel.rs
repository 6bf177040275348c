//! Discrete spectrum of the transverse operator h = -Laplacian_y + V(y) and
//! projections of right-hand sides onto its channels.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::{Grid, GridSpec, QuadratureRule};
use crate::potential::PotentialSpec;

/// Smallest half-width beyond which |V(y) - V+| < 1e-10 along the radial profile.
pub fn transverse_extent(v: &PotentialSpec) -> f64 {
    let vp = v.v_plus();
    let mut r = 200.0;
    let step = 0.01;
    while r > 0.0 && (v.radial_profile(r) - vp).abs() < 1e-10 {
        r -= step;
    }
    (r + step).max(1.0)
}

/// Midpoint grid for the transverse variable, truncated where V has settled.
pub fn transverse_grid(v: &PotentialSpec, dim: usize, points_per_axis: usize) -> Result<Grid> {
    Grid::new(&GridSpec {
        dim,
        extent: transverse_extent(v),
        points_per_axis,
        rule: QuadratureRule::Midpoint,
    })
}

/// Second-order Dirichlet discretization of h on a midpoint grid.
///
/// The stencil is symmetric, so eigenvectors are orthonormal under the
/// uniform grid quadrature.
#[derive(Clone, Debug, PartialEq)]
pub struct HOperator {
    dim: usize,
    n: usize,
    spacing: f64,
    /// V(y_i) + 2 m / h^2.
    diag: Vec<f64>,
    /// The constant off-diagonal -1/h^2.
    off: f64,
}

pub fn discretize_h(v: &PotentialSpec, ygrid: &Grid) -> Result<HOperator> {
    let dim = ygrid.dim();
    if dim != 1 && dim != 2 {
        return Err(Error::InvalidParameter(format!(
            "transverse dimension must be 1 or 2, got {dim}"
        )));
    }
    if ygrid.rule() != QuadratureRule::Midpoint {
        return Err(Error::InvalidParameter(
            "transverse grids use the midpoint rule so that h is self-adjoint under grid quadrature".into(),
        ));
    }
    let h = ygrid.spacing();
    let vals = v.eval_field(ygrid)?;
    let shift = 2.0 * dim as f64 / (h * h);
    Ok(HOperator {
        dim,
        n: ygrid.points_per_axis(),
        spacing: h,
        diag: vals.iter().map(|x| x + shift).collect(),
        off: -1.0 / (h * h),
    })
}

impl HOperator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Quadrature weight of one node.
    pub fn cell(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn apply<T>(&self, u: &[T]) -> Result<Vec<T>>
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        check_len(self.len(), u.len())?;
        let n = self.n;
        let mut out = vec![T::default(); u.len()];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = u[i] * self.diag[i];
            let (row, col) = if self.dim == 1 { (0, i) } else { (i / n, i % n) };
            if col > 0 {
                acc = acc + u[i - 1] * self.off;
            }
            if col + 1 < n {
                acc = acc + u[i + 1] * self.off;
            }
            if self.dim == 2 {
                if row > 0 {
                    acc = acc + u[i - n] * self.off;
                }
                if row + 1 < n {
                    acc = acc + u[i + n] * self.off;
                }
            }
            *o = acc;
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let len = self.len();
        let mut m = DMatrix::zeros(len, len);
        let mut e = vec![0.0; len];
        for j in 0..len {
            e[j] = 1.0;
            let col = self.apply(&e).expect("length matches");
            for (i, v) in col.into_iter().enumerate() {
                m[(i, j)] = v;
            }
            e[j] = 0.0;
        }
        m
    }

    /// Number of eigenvalues below `x` (one-dimensional operators only).
    fn sturm_count(&self, x: f64) -> usize {
        let e2 = self.off * self.off;
        let tiny = f64::MIN_POSITIVE.sqrt();
        let mut count = 0;
        let mut q = 1.0;
        for (i, d) in self.diag.iter().enumerate() {
            q = if i == 0 { d - x } else { d - x - e2 / q };
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The k-th smallest eigenvalue of a one-dimensional operator by bisection.
    fn sturm_eigenvalue(&self, k: usize) -> f64 {
        let r = 2.0 * self.off.abs();
        let mut lo = self.diag.iter().copied().fold(f64::INFINITY, f64::min) - r;
        let mut hi = self.diag.iter().copied().fold(f64::NEG_INFINITY, f64::max) + r;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.sturm_count(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Eigenvector for an isolated eigenvalue of a one-dimensional operator.
    fn inverse_iteration(&self, lambda: f64) -> Vec<f64> {
        let n = self.len();
        let scale = self.diag.iter().map(|d| d.abs()).fold(self.off.abs(), f64::max);
        let mu = lambda + 1e-13 * scale;
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7).sin()).collect();
        for _ in 0..4 {
            x = solve_tridiagonal(&self.diag, self.off, mu, &x);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= norm);
        }
        x
    }

    /// The lowest `count` eigenpairs, eigenvectors orthonormal under grid
    /// quadrature.
    pub fn lowest_eigenpairs(&self, count: usize) -> Vec<(f64, Vec<f64>)> {
        let count = count.min(self.len());
        let cell = self.cell().sqrt();
        let mut out = if self.dim == 1 {
            (0..count)
                .map(|k| {
                    let lambda = self.sturm_eigenvalue(k);
                    (lambda, self.inverse_iteration(lambda))
                })
                .collect()
        } else {
            let mut all = self.dense_eigenpairs();
            all.truncate(count);
            all
        };
        for (_, v) in out.iter_mut() {
            fix_sign(v);
            v.iter_mut().for_each(|x| *x /= cell);
        }
        out
    }

    /// Lowest `count` eigenvalues only.
    pub fn lowest_eigenvalues(&self, count: usize) -> Vec<f64> {
        let count = count.min(self.len());
        if self.dim == 1 {
            (0..count).map(|k| self.sturm_eigenvalue(k)).collect()
        } else {
            let mut e: Vec<f64> = SymmetricEigen::new(self.to_dense()).eigenvalues.iter().copied().collect();
            e.sort_by(f64::total_cmp);
            e.truncate(count);
            e
        }
    }

    /// Eigenvalues below `x`, counted with multiplicity.
    pub fn count_below(&self, x: f64) -> usize {
        if self.dim == 1 {
            self.sturm_count(x)
        } else {
            self.lowest_eigenvalues(self.len()).iter().filter(|e| **e < x).count()
        }
    }

    fn dense_eigenpairs(&self) -> Vec<(f64, Vec<f64>)> {
        let eig = SymmetricEigen::new(self.to_dense());
        let mut pairs: Vec<(f64, Vec<f64>)> = eig
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(j, e)| (*e, eig.eigenvectors.column(j).iter().copied().collect()))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs
    }

    /// Every eigenpair, ascending, orthonormal under grid quadrature.
    pub fn full_eigenbasis(&self) -> Vec<(f64, Vec<f64>)> {
        let cell = self.cell().sqrt();
        let mut pairs = self.dense_eigenpairs();
        for (_, v) in pairs.iter_mut() {
            fix_sign(v);
            v.iter_mut().for_each(|x| *x /= cell);
        }
        pairs
    }

    /// ||h phi - e phi|| under grid quadrature.
    pub fn residual(&self, e: f64, phi: &[f64]) -> Result<f64> {
        let hp = self.apply(phi)?;
        Ok((hp.iter().zip(phi).map(|(a, b)| (a - e * b).powi(2)).sum::<f64>() * self.cell()).sqrt())
    }
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    for x in v.iter() {
        if x.abs() > best.abs() + 1e-12 {
            best = *x;
        }
    }
    if best < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Solves (T - mu I) x = b for a symmetric tridiagonal T with constant
/// off-diagonal, using Gaussian elimination with partial pivoting.
fn solve_tridiagonal(diag: &[f64], off: f64, mu: f64, b: &[f64]) -> Vec<f64> {
    let n = diag.len();
    if n == 1 {
        let d = diag[0] - mu;
        return vec![b[0] / if d == 0.0 { f64::EPSILON } else { d }];
    }
    // Rows of the upper factor hold up to three entries: u0 (diagonal), u1, u2.
    let mut u0 = vec![0.0; n];
    let mut u1 = vec![0.0; n];
    let mut u2 = vec![0.0; n];
    let mut rhs = b.to_vec();
    let mut cur_d = diag[0] - mu;
    let mut cur_u = off;
    let mut cur_u2 = 0.0;
    for i in 0..n - 1 {
        let below_l = off;
        let below_d = diag[i + 1] - mu;
        let below_u = if i + 2 < n { off } else { 0.0 };
        if cur_d.abs() >= below_l.abs() {
            let piv = if cur_d == 0.0 { f64::EPSILON } else { cur_d };
            let m = below_l / piv;
            u0[i] = piv;
            u1[i] = cur_u;
            u2[i] = cur_u2;
            rhs[i + 1] -= m * rhs[i];
            cur_d = below_d - m * cur_u;
            cur_u = below_u - m * cur_u2;
            cur_u2 = 0.0;
        } else {
            let m = cur_d / below_l;
            u0[i] = below_l;
            u1[i] = below_d;
            u2[i] = below_u;
            rhs.swap(i, i + 1);
            rhs[i + 1] -= m * rhs[i];
            let nd = cur_u - m * below_d;
            let nu = cur_u2 - m * below_u;
            cur_d = nd;
            cur_u = nu;
            cur_u2 = 0.0;
        }
    }
    u0[n - 1] = if cur_d == 0.0 { f64::EPSILON } else { cur_d };
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        if i + 1 < n {
            s -= u1[i] * x[i + 1];
        }
        if i + 2 < n {
            s -= u2[i] * x[i + 2];
        }
        x[i] = s / u0[i];
    }
    x
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    pub zero_tol: f64,
    /// Defaults to 1e-6 max(1, |V+|).
    pub cluster_tol: Option<f64>,
    /// Levels within this distance below V+ count as continuum surrogates.
    /// Defaults to half the lowest free Dirichlet level of the box.
    pub margin: Option<f64>,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            zero_tol: 1e-8,
            cluster_tol: None,
            margin: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDecomposition {
    pub v_plus: f64,
    /// Distinct levels below V+ - margin, ascending.
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// eigenvectors[j][k] is the k-th member of level j.
    pub eigenvectors: Vec<Vec<Vec<f64>>>,
    /// Largest eigen-residual per level.
    pub residuals: Vec<f64>,
    /// Level with |e| <= zero_tol, if any.
    pub zero_index: Option<usize>,
    /// min(V+, smallest eigenvalue of the discrete h above the zero level).
    pub e_next: f64,
    pub zero_tol: f64,
}

impl SpectrumDecomposition {
    pub fn total_multiplicity(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    /// Levels below the zero level.
    pub fn negative_levels(&self) -> std::ops::Range<usize> {
        0..self.zero_index.unwrap_or_else(|| self.eigenvalues.iter().take_while(|e| **e < -self.zero_tol).count())
    }

    /// Achieved value of the zero level.
    pub fn zero_value(&self) -> Option<f64> {
        self.zero_index.map(|i| self.eigenvalues[i])
    }

    /// Checks that every level below the zero level is negative and that the
    /// zero level is the last one below V+.
    pub fn check_zero_mode(&self) -> Result<usize> {
        let n = self.zero_index.ok_or_else(|| {
            Error::ZeroModeAssumption(match self.eigenvalues.len() {
                0 => "no discrete eigenvalue below V+".into(),
                _ => format!(
                    "no eigenvalue within {:e} of zero; levels are {:?}",
                    self.zero_tol, self.eigenvalues
                ),
            })
        })?;
        if let Some(e) = self.eigenvalues[n + 1..].first() {
            return Err(Error::ZeroModeAssumption(format!(
                "positive discrete eigenvalue {e} lies between the zero level and V+ = {}",
                self.v_plus
            )));
        }
        Ok(n)
    }
}

fn default_margin(hop: &HOperator) -> f64 {
    let width = hop.n as f64 * hop.spacing;
    0.5 * hop.dim as f64 * (PI / width).powi(2)
}

/// Eigenpairs with eigenvalue below V+ - margin, grouped into levels.
pub fn discrete_eigenpairs(hop: &HOperator, v_plus: f64, opts: &SpectrumOptions) -> Result<SpectrumDecomposition> {
    let margin = opts.margin.unwrap_or_else(|| default_margin(hop));
    let cluster_tol = opts.cluster_tol.unwrap_or(1e-6 * v_plus.abs().max(1.0));
    let zero_cut = opts.zero_tol * (1.0 + 1e-12) + f64::MIN_POSITIVE;
    let (pairs, next) = if hop.dim == 1 {
        let below = hop.count_below(v_plus - margin);
        let at_or_below = hop.count_below(zero_cut);
        let next = hop.lowest_eigenvalues(at_or_below + 1).get(at_or_below).copied();
        (hop.lowest_eigenpairs(below), next)
    } else {
        let mut all = hop.full_eigenbasis();
        let next = all.iter().map(|p| p.0).find(|e| *e >= zero_cut);
        all.retain(|p| p.0 < v_plus - margin);
        (all, next)
    };
    let mut eigenvalues: Vec<f64> = Vec::new();
    let mut multiplicities = Vec::new();
    let mut eigenvectors: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut residuals: Vec<f64> = Vec::new();
    let mut sum = 0.0;
    for (e, phi) in pairs {
        let r = hop.residual(e, &phi)?;
        let join = multiplicities.last().is_some_and(|&m| (e - sum / m as f64).abs() <= cluster_tol);
        if join {
            let j = eigenvalues.len() - 1;
            multiplicities[j] += 1;
            sum += e;
            eigenvalues[j] = sum / multiplicities[j] as f64;
            eigenvectors[j].push(phi);
            residuals[j] = residuals[j].max(r);
        } else {
            sum = e;
            eigenvalues.push(e);
            multiplicities.push(1);
            eigenvectors.push(vec![phi]);
            residuals.push(r);
        }
    }
    let zeros: Vec<usize> = (0..eigenvalues.len()).filter(|&j| eigenvalues[j].abs() <= opts.zero_tol).collect();
    if zeros.len() > 1 {
        return Err(Error::ZeroModeAssumption(format!(
            "distinct levels {:?} all lie within {:e} of zero",
            zeros.iter().map(|&j| eigenvalues[j]).collect::<Vec<_>>(),
            opts.zero_tol
        )));
    }
    let next = next.unwrap_or(f64::INFINITY);
    Ok(SpectrumDecomposition {
        v_plus,
        eigenvalues,
        multiplicities,
        eigenvectors,
        residuals,
        zero_index: zeros.first().copied(),
        e_next: next.min(v_plus),
        zero_tol: opts.zero_tol,
    })
}

/// Discrete spectrum below V+ with the zero-mode classification enforced.
pub fn spectrum_below_vplus(hop: &HOperator, v_plus: f64, opts: &SpectrumOptions) -> Result<SpectrumDecomposition> {
    let spec = discrete_eigenpairs(hop, v_plus, opts)?;
    spec.check_zero_mode()?;
    Ok(spec)
}

/// Lowest `count` eigenvalues extrapolated from grids with N and 2N points per
/// axis, assuming O(h^2) error.
pub fn richardson_eigenvalues(v: &PotentialSpec, coarse: &Grid, count: usize) -> Result<Vec<f64>> {
    let mut fine_spec = coarse.spec().clone();
    fine_spec.points_per_axis *= 2;
    let fine = Grid::new(&fine_spec)?;
    let ec = discretize_h(v, coarse)?.lowest_eigenvalues(count);
    let ef = discretize_h(v, &fine)?.lowest_eigenvalues(count);
    Ok(ec.iter().zip(&ef).map(|(c, f)| (4.0 * f - c) / 3.0).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    pub zero_tol: f64,
    pub max_iter: usize,
    /// Tune the two-grid extrapolated eigenvalue instead of the raw one.
    pub richardson: bool,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            zero_tol: 1e-8,
            max_iter: 200,
            richardson: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub param: String,
    pub value: f64,
    pub achieved: f64,
    pub iterations: usize,
    pub potential: PotentialSpec,
}

/// Bisects one parameter of `family` until the eigenvalue with index
/// `target_index` (ascending, with multiplicity) is within zero_tol of zero.
pub fn tune_zero_mode(
    family: &PotentialSpec,
    param: &str,
    bracket: (f64, f64),
    ygrid: &Grid,
    target_index: usize,
    opts: &TuneOptions,
) -> Result<TuneResult> {
    let level = |p: f64| -> Result<f64> {
        let v = family.with_param(param, p)?;
        let e = if opts.richardson {
            richardson_eigenvalues(&v, ygrid, target_index + 1)?
        } else {
            discretize_h(&v, ygrid)?.lowest_eigenvalues(target_index + 1)
        };
        e.get(target_index).copied().ok_or_else(|| {
            Error::InvalidParameter(format!("grid has fewer than {} eigenvalues", target_index + 1))
        })
    };
    let done = |p: f64, e: f64, iterations: usize| -> Result<TuneResult> {
        Ok(TuneResult {
            param: param.to_string(),
            value: p,
            achieved: e,
            iterations,
            potential: family.with_param(param, p)?,
        })
    };
    let p0 = family.param(param)?;
    let e0 = level(p0)?;
    if e0.abs() <= opts.zero_tol {
        return done(p0, e0, 0);
    }
    let (mut lo, mut hi) = bracket;
    let (mut elo, ehi) = (level(lo)?, level(hi)?);
    if elo.abs() <= opts.zero_tol {
        return done(lo, elo, 1);
    }
    if ehi.abs() <= opts.zero_tol {
        return done(hi, ehi, 1);
    }
    if elo.signum() == ehi.signum() {
        return Err(Error::InvalidBracket { lo, hi });
    }
    for it in 1..=opts.max_iter {
        let mid = 0.5 * (lo + hi);
        let em = level(mid)?;
        if em.abs() <= opts.zero_tol {
            return done(mid, em, it);
        }
        if em.signum() == elo.signum() {
            lo = mid;
            elo = em;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * mid.abs().max(1.0) {
            return Err(Error::NonConvergence {
                iterations: it,
                tail_bound: em.abs(),
                tol: opts.zero_tol,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        tail_bound: elo.abs(),
        tol: opts.zero_tol,
    })
}

/// Tensor grid of an x-grid and a transverse y-grid; y is the fast index.
#[derive(Clone, Debug)]
pub struct ProductGrid {
    pub x: Grid,
    pub y: Grid,
}

impl ProductGrid {
    pub fn new(x: Grid, y: Grid) -> Self {
        Self { x, y }
    }

    pub fn len(&self) -> usize {
        self.x.len() * self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample<F: FnMut(&[f64], &[f64]) -> Complex64>(&self, mut f: F) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.len());
        let mut xp = vec![0.0; self.x.dim()];
        let mut yp = vec![0.0; self.y.dim()];
        for i in 0..self.x.len() {
            self.x.point(i, &mut xp);
            for j in 0..self.y.len() {
                self.y.point(j, &mut yp);
                out.push(f(&xp, &yp));
            }
        }
        out
    }

    /// L2 norm under the product quadrature.
    pub fn l2_norm(&self, u: &[Complex64]) -> Result<f64> {
        check_len(self.len(), u.len())?;
        let ny = self.y.len();
        let rows: Vec<f64> = u
            .par_chunks(ny)
            .zip(self.x.weights())
            .map(|(row, wx)| wx * row.iter().zip(self.y.weights()).map(|(z, wy)| wy * z.norm_sqr()).sum::<f64>())
            .collect();
        Ok(rows.iter().sum::<f64>().sqrt())
    }

    pub fn inner(&self, a: &[Complex64], b: &[Complex64]) -> Result<Complex64> {
        check_len(self.len(), a.len())?;
        check_len(self.len(), b.len())?;
        let ny = self.y.len();
        let rows: Vec<Complex64> = a
            .par_chunks(ny)
            .zip(b.par_chunks(ny))
            .zip(self.x.weights())
            .map(|((ra, rb), wx)| {
                *wx * ra
                    .iter()
                    .zip(rb)
                    .zip(self.y.weights())
                    .map(|((p, q), wy)| p.conj() * q * *wy)
                    .sum::<Complex64>()
            })
            .collect();
        Ok(rows.iter().sum())
    }

    /// u(x) phi(y).
    pub fn outer(&self, u: &[Complex64], phi: &[f64]) -> Vec<Complex64> {
        u.iter().flat_map(|a| phi.iter().map(move |p| a * p)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRhs {
    pub level: usize,
    pub member: usize,
    /// v(x) = int g(x, y) phi(y) dy.
    pub values: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelProjection {
    pub channels: Vec<ChannelRhs>,
    /// g minus every discrete channel, on the product grid.
    pub remainder: Vec<Complex64>,
    /// Largest |v(x)| / ||g(x, .)|| over channels and x-nodes.
    pub schwarz_ratio: f64,
}

impl ChannelProjection {
    pub fn channel(&self, level: usize, member: usize) -> Option<&ChannelRhs> {
        self.channels.iter().find(|c| c.level == level && c.member == member)
    }

    pub fn reconstruct(&self, spec: &SpectrumDecomposition, grid: &ProductGrid) -> Vec<Complex64> {
        let mut g = self.remainder.clone();
        for c in &self.channels {
            let phi = &spec.eigenvectors[c.level][c.member];
            for (z, w) in g.iter_mut().zip(grid.outer(&c.values, phi)) {
                *z += w;
            }
        }
        g
    }
}

/// Projects g onto every discrete level of `spec`.
pub fn project_channels(g: &[Complex64], spec: &SpectrumDecomposition, grid: &ProductGrid) -> Result<ChannelProjection> {
    check_len(grid.len(), g.len())?;
    let ny = grid.y.len();
    let wy = grid.y.weights();
    let slice_norms: Vec<f64> = g
        .par_chunks(ny)
        .map(|row| row.iter().zip(wy).map(|(z, w)| w * z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let mut channels = Vec::new();
    let mut remainder = g.to_vec();
    let mut schwarz_ratio: f64 = 0.0;
    for (level, members) in spec.eigenvectors.iter().enumerate() {
        for (member, phi) in members.iter().enumerate() {
            check_len(ny, phi.len())?;
            let values: Vec<Complex64> = g
                .par_chunks(ny)
                .map(|row| row.iter().zip(phi).zip(wy).map(|((z, p), w)| z * (p * w)).sum())
                .collect();
            for (v, s) in values.iter().zip(&slice_norms) {
                if *s > 0.0 {
                    schwarz_ratio = schwarz_ratio.max(v.norm() / s);
                } else if v.norm() > 0.0 {
                    schwarz_ratio = f64::INFINITY;
                }
            }
            remainder.par_chunks_mut(ny).zip(&values).for_each(|(row, v)| {
                for (z, p) in row.iter_mut().zip(phi) {
                    *z -= v * p;
                }
            });
            channels.push(ChannelRhs { level, member, values });
        }
    }
    if schwarz_ratio > 1.0 + 1e-10 {
        return Err(Error::ConditionFailed {
            condition: "pointwise Schwarz bound |v(x)| <= ||g(x, .)||".into(),
            value: schwarz_ratio,
            threshold: 1.0,
        });
    }
    Ok(ChannelProjection {
        channels,
        remainder,
        schwarz_ratio,
    })
}
