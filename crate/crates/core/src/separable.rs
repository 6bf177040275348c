//! Solvability conditions and solution of (-Laplacian_x - Laplacian_y + V(y)) u = g
//! on R^n x R^m, channel by channel.
//!
//! The x-direction is treated spectrally with the unitary shifted DFT, the
//! y-direction with the finite-difference operator of [`crate::channel`].
//! Both grids use the midpoint rule, so every quadrature weight is uniform
//! and the discrete Parseval identity is exact.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{project_channels, HOperator, ProductGrid, SpectrumDecomposition};
use crate::error::{check_len, Error, Result};
use crate::fft::ShiftedDft;
use crate::genfourier::direct_dft;
use crate::grid::{sphere_sampling, Grid, QuadratureRule};
use crate::quadrature::gauss_legendre;

fn zero() -> Complex64 {
    Complex64::default()
}

fn x_l2(u: &[Complex64], xgrid: &Grid) -> f64 {
    u.iter().zip(xgrid.weights()).map(|(z, w)| w * z.norm_sqr()).sum::<f64>().sqrt()
}

fn check_midpoint(grid: &Grid, what: &str) -> Result<()> {
    if grid.rule() != QuadratureRule::Midpoint {
        return Err(Error::InvalidParameter(format!("{what} must use the midpoint rule")));
    }
    Ok(())
}

/// Smallest admissible weight exponent exceeded strictly by alpha.
pub fn required_alpha(n: usize) -> f64 {
    match n {
        1 => 5.0,
        2 => 6.0,
        _ => n as f64 + 2.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedNormReport {
    pub alpha: f64,
    pub n: usize,
    pub required_alpha: f64,
    /// || |x|^{alpha/2} g ||_2.
    pub weighted_norm: f64,
    pub plain_norm: f64,
    pub passed: bool,
}

pub fn weighted_norm_check(g: &[Complex64], alpha: f64, grid: &ProductGrid) -> Result<WeightedNormReport> {
    check_len(grid.len(), g.len())?;
    let n = grid.x.dim();
    let ny = grid.y.len();
    let wy = grid.y.weights();
    let mut weighted = 0.0;
    let mut plain = 0.0;
    for (i, row) in g.chunks(ny).enumerate() {
        let slice: f64 = row.iter().zip(wy).map(|(z, w)| w * z.norm_sqr()).sum();
        let wx = grid.x.weights()[i];
        plain += wx * slice;
        weighted += wx * grid.x.radius(i).powf(alpha) * slice;
    }
    let required = required_alpha(n);
    let (weighted_norm, plain_norm) = (weighted.sqrt(), plain.sqrt());
    Ok(WeightedNormReport {
        alpha,
        n,
        required_alpha: required,
        weighted_norm,
        plain_norm,
        passed: alpha > required && weighted_norm.is_finite() && plain_norm.is_finite(),
    })
}

/// Number of scalar zero-channel conditions for zero-mode multiplicity m0.
pub fn zero_condition_count(n: usize, m0: usize) -> usize {
    match n {
        1 | 2 => (1 + n) * m0,
        3 | 4 => m0,
        _ => 0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub id: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereCondition {
    pub level: usize,
    pub member: usize,
    pub energy: f64,
    pub radius: f64,
    /// Number of sphere samples, each one scalar condition.
    pub samples: usize,
    pub max_abs: f64,
    pub threshold: f64,
    pub pass: bool,
    pub values: Vec<Complex64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub zero_channel: Vec<Condition>,
    pub negative_channels: Vec<SphereCondition>,
    pub overall: bool,
}

impl MomentReport {
    pub fn zero_condition_count(&self) -> usize {
        self.zero_channel.len()
    }

    pub fn negative_condition_count(&self) -> usize {
        self.negative_channels.iter().map(|c| c.samples).sum()
    }

    pub fn failed(&self) -> Vec<String> {
        let mut out: Vec<String> = self.zero_channel.iter().filter(|c| !c.pass).map(|c| c.id.clone()).collect();
        out.extend(
            self.negative_channels
                .iter()
                .filter(|c| !c.pass)
                .map(|c| format!("v_hat[j={},k={}] on |p| = {}", c.level + 1, c.member + 1, c.radius)),
        );
        out
    }
}

fn spectral_divide<F>(v: &[Complex64], xgrid: &Grid, mut f: F) -> Result<Vec<Complex64>>
where
    F: FnMut(usize, &[f64], Complex64) -> Complex64,
{
    let dft = ShiftedDft::new(xgrid);
    let vh = dft.forward(v)?;
    let mut p = vec![0.0; xgrid.dim()];
    let uh: Vec<Complex64> = vh
        .iter()
        .enumerate()
        .map(|(i, z)| {
            dft.frequency(i, &mut p);
            f(i, &p, *z)
        })
        .collect();
    dft.inverse(&uh)
}

/// Solves (-Laplacian_x + e) u = v for e > 0 by Fourier division.
pub fn solve_massive(v: &[Complex64], e: f64, xgrid: &Grid) -> Result<Vec<Complex64>> {
    if !(e > 0.0) {
        return Err(Error::InvalidParameter(format!("mass term must be positive, got {e}")));
    }
    spectral_divide(v, xgrid, |_, p, z| z / (p.iter().map(|t| t * t).sum::<f64>() + e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositiveSolution {
    pub u: Vec<Complex64>,
    pub g_norm: f64,
    pub u_norm: f64,
    /// 1 / e_next.
    pub bound: f64,
    pub modes: usize,
}

/// Solves the positive channel in the full transverse eigenbasis above the
/// zero level.
pub fn solve_positive_channel(
    g_plus: &[Complex64],
    hop: &HOperator,
    spec: &SpectrumDecomposition,
    grid: &ProductGrid,
) -> Result<PositiveSolution> {
    let scale = grid.l2_norm(g_plus)?;
    positive_channel(g_plus, hop, spec, grid, scale)
}

/// Leakage into the lower channels is measured against `scale`, the norm of
/// the source the remainder was split from.
fn positive_channel(
    g_plus: &[Complex64],
    hop: &HOperator,
    spec: &SpectrumDecomposition,
    grid: &ProductGrid,
    scale: f64,
) -> Result<PositiveSolution> {
    check_len(grid.len(), g_plus.len())?;
    check_len(hop.len(), grid.y.len())?;
    let g_norm = grid.l2_norm(g_plus)?;
    let check = project_channels(g_plus, spec, grid)?;
    let threshold = 1e-10 * scale.max(g_norm);
    for c in &check.channels {
        let leak = x_l2(&c.values, &grid.x);
        if leak > threshold.max(f64::MIN_POSITIVE) {
            return Err(Error::ConditionFailed {
                condition: format!("positive-channel input orthogonal to phi[j={},k={}]", c.level + 1, c.member + 1),
                value: leak,
                threshold,
            });
        }
    }
    let bound = 1.0 / spec.e_next;
    if g_norm == 0.0 {
        return Ok(PositiveSolution {
            u: vec![zero(); grid.len()],
            g_norm,
            u_norm: 0.0,
            bound,
            modes: 0,
        });
    }
    let basis: Vec<(f64, Vec<f64>)> = hop.full_eigenbasis().into_iter().filter(|(e, _)| *e > spec.zero_tol).collect();
    let nx = grid.x.len();
    let ny = grid.y.len();
    let cell = hop.cell();
    let psi = DMatrix::<Complex64>::from_fn(ny, basis.len(), |i, l| Complex64::new(basis[l].1[i], 0.0));
    let gm = DMatrix::<Complex64>::from_row_slice(nx, ny, g_plus);
    let coeffs = &gm * &psi * Complex64::new(cell, 0.0);
    let mut solved = DMatrix::<Complex64>::zeros(nx, basis.len());
    let cols: Vec<Vec<Complex64>> = (0..basis.len())
        .into_par_iter()
        .map(|l| {
            let c: Vec<Complex64> = coeffs.column(l).iter().copied().collect();
            solve_massive(&c, basis[l].0, &grid.x)
        })
        .collect::<Result<_>>()?;
    for (l, c) in cols.iter().enumerate() {
        for (i, z) in c.iter().enumerate() {
            solved[(i, l)] = *z;
        }
    }
    let um = solved * psi.transpose();
    let mut u = Vec::with_capacity(grid.len());
    for i in 0..nx {
        for j in 0..ny {
            u.push(um[(i, j)]);
        }
    }
    let u_norm = grid.l2_norm(&u)?;
    if u_norm > bound * g_norm * (1.0 + 1e-10) + 1e-14 {
        return Err(Error::ConditionFailed {
            condition: "positive-channel inverse bound ||u|| <= ||g|| / e_next".into(),
            value: u_norm / g_norm,
            threshold: bound,
        });
    }
    Ok(PositiveSolution {
        u,
        g_norm,
        u_norm,
        bound,
        modes: basis.len(),
    })
}

fn label(level: usize, member: usize) -> String {
    format!("phi[N={},k={}]", level + 1, member + 1)
}

/// Zero-channel conditions for one zero mode of the transverse operator.
pub fn zero_channel_conditions(v0: &[Complex64], xgrid: &Grid, level: usize, member: usize, threshold: f64) -> Result<Vec<Condition>> {
    check_len(xgrid.len(), v0.len())?;
    let n = xgrid.dim();
    let phi = label(level, member);
    let w = xgrid.weights();
    let mut out = Vec::new();
    let mut push = |id: String, value: Complex64| {
        out.push(Condition {
            id,
            value: value.norm(),
            threshold,
            pass: value.norm() <= threshold,
        })
    };
    if n <= 4 {
        push(format!("(g, {phi})"), v0.iter().zip(w).map(|(z, w)| z * w).sum());
    }
    if n <= 2 {
        let mut x = vec![0.0; n];
        for d in 0..n {
            let mut m = zero();
            for (i, z) in v0.iter().enumerate() {
                xgrid.point(i, &mut x);
                m += z * (x[d] * w[i]);
            }
            let name = if n == 1 { format!("(g, x {phi})") } else { format!("(g, x{} {phi})", d + 1) };
            push(name, m);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSolution {
    pub conditions: Vec<Condition>,
    pub u: Option<Vec<Complex64>>,
}

/// Solves -Laplacian_x u = v0 after checking the zero-channel conditions.
pub fn solve_zero_channel(v0: &[Complex64], xgrid: &Grid, level: usize, member: usize, threshold: f64) -> Result<ChannelSolution> {
    check_midpoint(xgrid, "x-grid")?;
    let conditions = zero_channel_conditions(v0, xgrid, level, member, threshold)?;
    if conditions.iter().any(|c| !c.pass) {
        return Ok(ChannelSolution { conditions, u: None });
    }
    let n = xgrid.dim();
    let origin = vec![0.0; n];
    let v_at0 = direct_dft(v0, xgrid, &origin, -1.0)?;
    let mut grad0 = vec![zero(); n];
    if n <= 2 {
        let amp = (2.0 * PI).powf(-0.5 * n as f64);
        let mut x = vec![0.0; n];
        for (i, z) in v0.iter().enumerate() {
            xgrid.point(i, &mut x);
            for d in 0..n {
                grad0[d] += Complex64::new(0.0, -x[d] * amp * xgrid.weights()[i]) * z;
            }
        }
    }
    let subtract_value = n <= 4;
    let taylor = |p: &[f64], z: Complex64| -> Complex64 {
        let mut t = z;
        if subtract_value {
            t -= v_at0;
        }
        for d in 0..n.min(2) {
            if n <= 2 {
                t -= grad0[d] * p[d];
            }
        }
        t
    };
    let dft = ShiftedDft::new(xgrid);
    let vh = dft.forward(v0)?;
    let mut p = vec![0.0; n];
    let mut uh = vec![zero(); vh.len()];
    let mut origin_node = None;
    for (i, z) in vh.iter().enumerate() {
        dft.frequency(i, &mut p);
        let p2: f64 = p.iter().map(|t| t * t).sum();
        if p2 == 0.0 {
            origin_node = Some(i);
        } else if p2 <= 1.0 {
            uh[i] = taylor(&p, *z) / p2;
        } else {
            uh[i] = z / p2;
        }
    }
    if let Some(i0) = origin_node {
        let nax = xgrid.points_per_axis();
        let mut acc = zero();
        let mut count = 0;
        let mut stride = 1;
        for _ in 0..n {
            for j in [i0 + stride, i0.wrapping_sub(stride)] {
                if j < uh.len() {
                    acc += uh[j];
                    count += 1;
                }
            }
            stride *= nax;
        }
        uh[i0] = acc / count.max(1) as f64;
    }
    Ok(ChannelSolution {
        conditions,
        u: Some(dft.inverse(&uh)?),
    })
}

fn points_of(s: &crate::grid::SphereSampling) -> Vec<Vec<f64>> {
    (0..s.len()).map(|i| s.point(i).to_vec()).collect()
}

fn transform_at(v: &[Complex64], xgrid: &Grid, pts: &[Vec<f64>]) -> Result<Vec<Complex64>> {
    pts.par_iter().map(|p| direct_dft(v, xgrid, p, -1.0)).collect()
}

/// Sphere condition for a negative channel with energy e < 0.
#[allow(clippy::too_many_arguments)]
pub fn negative_channel_condition(
    v: &[Complex64],
    e: f64,
    xgrid: &Grid,
    level: usize,
    member: usize,
    threshold: f64,
    resolution: usize,
) -> Result<SphereCondition> {
    check_len(xgrid.len(), v.len())?;
    if !(e < 0.0) {
        return Err(Error::InvalidParameter(format!("negative channel needs e < 0, got {e}")));
    }
    let radius = (-e).sqrt();
    let sphere = sphere_sampling(xgrid.dim(), radius, resolution)?;
    let values = transform_at(v, xgrid, &points_of(&sphere))?;
    let max_abs = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(SphereCondition {
        level,
        member,
        energy: e,
        radius,
        samples: values.len(),
        max_abs,
        threshold,
        pass: max_abs <= threshold,
        values,
    })
}

/// Largest useful layer half-width for a negative channel: at most r/4, at
/// least two p-spacings, otherwise chosen so that the Lipschitz bound of v^
/// times delta stays below a tenth of the threshold.
pub fn default_delta(v: &[Complex64], e: f64, xgrid: &Grid, threshold: f64) -> f64 {
    let n = xgrid.dim();
    let amp = (2.0 * PI).powf(-0.5 * n as f64);
    let lip = amp
        * v.iter()
            .enumerate()
            .map(|(i, z)| xgrid.radius(i) * z.norm() * xgrid.weights()[i])
            .sum::<f64>();
    let dp = 2.0 * PI / (xgrid.points_per_axis() as f64 * xgrid.spacing());
    let by_lip = if lip > 0.0 { 0.1 * threshold / lip } else { f64::INFINITY };
    (0.25 * (-e).sqrt()).min(by_lip.max(2.0 * dp))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeSolution {
    pub condition: SphereCondition,
    pub delta: f64,
    pub u: Option<Vec<Complex64>>,
}

/// Solves (-Laplacian_x + e) u = v for e < 0 when v^ vanishes on |p| = sqrt(-e).
#[allow(clippy::too_many_arguments)]
pub fn solve_negative_channel(
    v: &[Complex64],
    e: f64,
    xgrid: &Grid,
    level: usize,
    member: usize,
    delta: Option<f64>,
    threshold: f64,
    resolution: usize,
) -> Result<NegativeSolution> {
    check_midpoint(xgrid, "x-grid")?;
    let condition = negative_channel_condition(v, e, xgrid, level, member, threshold, resolution)?;
    let r = condition.radius;
    let delta = delta.unwrap_or_else(|| default_delta(v, e, xgrid, threshold));
    if !(delta > 0.0 && delta < r) {
        return Err(Error::InvalidParameter(format!("layer half-width must lie in (0, {r}), got {delta}")));
    }
    if !condition.pass {
        return Ok(NegativeSolution { condition, delta, u: None });
    }
    let n = xgrid.dim();
    let dft = ShiftedDft::new(xgrid);
    let vh = dft.forward(v)?;
    let mut p = vec![0.0; n];
    let gap = 1e-6 * r.max(1.0);
    let step = 1e-3 * r.max(1.0);
    let mut layer = Vec::new();
    let mut pts = Vec::new();
    let mut uh = vec![zero(); vh.len()];
    for (i, z) in vh.iter().enumerate() {
        dft.frequency(i, &mut p);
        let s = p.iter().map(|t| t * t).sum::<f64>().sqrt();
        if (s - r).abs() > delta {
            uh[i] = z / (s * s - r * r);
            continue;
        }
        let dir: Vec<f64> = p.iter().map(|t| t / s).collect();
        layer.push((i, s));
        if (s - r).abs() < gap {
            pts.push(dir.iter().map(|d| d * (r + step)).collect());
            pts.push(dir.iter().map(|d| d * (r - step)).collect());
        } else {
            pts.push(dir.iter().map(|d| d * r).collect::<Vec<f64>>());
        }
    }
    let vals = transform_at(v, xgrid, &pts)?;
    let mut it = vals.into_iter();
    for (i, s) in layer {
        if (s - r).abs() < gap {
            let (a, b) = (it.next().expect("pair"), it.next().expect("pair"));
            uh[i] = (a - b) / (2.0 * step) / (2.0 * r);
        } else {
            let proj = it.next().expect("projection");
            uh[i] = (vh[i] - proj) / (s * s - r * r);
        }
    }
    Ok(NegativeSolution {
        condition,
        delta,
        u: Some(dft.inverse(&uh)?),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparableOptions {
    pub alpha: f64,
    /// Defaults to 1e-6 ||g||_2.
    pub zero_threshold: Option<f64>,
    /// Defaults to 1e-6 ||g||_2.
    pub sphere_threshold: Option<f64>,
    pub delta: Option<f64>,
    pub sphere_resolution: usize,
}

impl Default for SeparableOptions {
    fn default() -> Self {
        Self {
            alpha: 8.0,
            zero_threshold: None,
            sphere_threshold: None,
            delta: None,
            sphere_resolution: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelNorm {
    pub channel: String,
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparableSolution {
    pub u_plus: Vec<Complex64>,
    pub u_zero: Vec<Complex64>,
    pub u_minus: Vec<Vec<Complex64>>,
    /// ||L u - g|| / ||g||.
    pub residual_l2: f64,
    pub channel_norms: Vec<ChannelNorm>,
}

impl SeparableSolution {
    pub fn total(&self) -> Vec<Complex64> {
        let mut u = self.u_plus.clone();
        for (a, b) in u.iter_mut().zip(&self.u_zero) {
            *a += b;
        }
        for m in &self.u_minus {
            for (a, b) in u.iter_mut().zip(m) {
                *a += b;
            }
        }
        u
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparableOutcome {
    pub solution: Option<SeparableSolution>,
    pub moments: MomentReport,
    pub weighted: WeightedNormReport,
    pub deltas: Vec<f64>,
}

impl SeparableOutcome {
    pub fn solvable(&self) -> bool {
        self.solution.is_some()
    }
}

/// L u with spectral -Laplacian_x and the finite-difference h in y.
pub fn apply_separable(u: &[Complex64], hop: &HOperator, grid: &ProductGrid) -> Result<Vec<Complex64>> {
    check_len(grid.len(), u.len())?;
    let nx = grid.x.len();
    let ny = grid.y.len();
    let dft = ShiftedDft::new(&grid.x);
    let p2: Vec<f64> = (0..nx).map(|i| dft.frequency_squared(i)).collect();
    let mut out = vec![zero(); u.len()];
    let cols: Vec<Vec<Complex64>> = (0..ny)
        .into_par_iter()
        .map(|j| {
            let col: Vec<Complex64> = (0..nx).map(|i| u[i * ny + j]).collect();
            let mut h = dft.forward(&col)?;
            h.iter_mut().zip(&p2).for_each(|(z, q)| *z *= q);
            dft.inverse(&h)
        })
        .collect::<Result<_>>()?;
    for (j, col) in cols.iter().enumerate() {
        for (i, z) in col.iter().enumerate() {
            out[i * ny + j] = *z;
        }
    }
    out.par_chunks_mut(ny).zip(u.par_chunks(ny)).try_for_each(|(o, row)| -> Result<()> {
        let hy = hop.apply(row)?;
        o.iter_mut().zip(hy).for_each(|(a, b)| *a += b);
        Ok(())
    })?;
    Ok(out)
}

/// Checks every condition and, when all hold, assembles u = u+ + u0 + sum u-.
pub fn solve_full(
    g: &[Complex64],
    hop: &HOperator,
    spec: &SpectrumDecomposition,
    grid: &ProductGrid,
    opts: &SeparableOptions,
) -> Result<SeparableOutcome> {
    check_midpoint(&grid.x, "x-grid")?;
    check_midpoint(&grid.y, "y-grid")?;
    let zero_level = spec.check_zero_mode()?;
    let weighted = weighted_norm_check(g, opts.alpha, grid)?;
    let g_norm = weighted.plain_norm;
    let zero_thr = opts.zero_threshold.unwrap_or(1e-6 * g_norm);
    let sphere_thr = opts.sphere_threshold.unwrap_or(1e-6 * g_norm);
    let proj = project_channels(g, spec, grid)?;
    let mut moments = MomentReport::default();
    let mut u_zero = vec![zero(); grid.len()];
    let mut u_minus = Vec::new();
    let mut channel_norms = Vec::new();
    let mut deltas = Vec::new();
    let mut ok = true;
    for c in &proj.channels {
        let phi = &spec.eigenvectors[c.level][c.member];
        if c.level == zero_level {
            let sol = solve_zero_channel(&c.values, &grid.x, c.level, c.member, zero_thr)?;
            moments.zero_channel.extend(sol.conditions);
            match sol.u {
                Some(u) => {
                    channel_norms.push(ChannelNorm { channel: label(c.level, c.member), norm: x_l2(&u, &grid.x) });
                    for (a, b) in u_zero.iter_mut().zip(grid.outer(&u, phi)) {
                        *a += b;
                    }
                }
                None => ok = false,
            }
        } else {
            let e = spec.eigenvalues[c.level];
            let sol = solve_negative_channel(&c.values, e, &grid.x, c.level, c.member, opts.delta, sphere_thr, opts.sphere_resolution)?;
            deltas.push(sol.delta);
            moments.negative_channels.push(sol.condition);
            match sol.u {
                Some(u) => {
                    channel_norms.push(ChannelNorm {
                        channel: format!("phi[j={},k={}]", c.level + 1, c.member + 1),
                        norm: x_l2(&u, &grid.x),
                    });
                    u_minus.push(grid.outer(&u, phi));
                }
                None => ok = false,
            }
        }
    }
    moments.overall = ok;
    if !ok || !weighted.passed {
        return Ok(SeparableOutcome {
            solution: None,
            moments,
            weighted,
            deltas,
        });
    }
    let plus = positive_channel(&proj.remainder, hop, spec, grid, grid.l2_norm(g)?)?;
    channel_norms.push(ChannelNorm { channel: "positive".into(), norm: plus.u_norm });
    let mut solution = SeparableSolution {
        u_plus: plus.u,
        u_zero,
        u_minus,
        residual_l2: 0.0,
        channel_norms,
    };
    let lu = apply_separable(&solution.total(), hop, grid)?;
    let r: Vec<Complex64> = lu.iter().zip(g).map(|(a, b)| a - b).collect();
    solution.residual_l2 = if g_norm > 0.0 { grid.l2_norm(&r)? / g_norm } else { grid.l2_norm(&r)? };
    Ok(SeparableOutcome {
        solution: Some(solution),
        moments,
        weighted,
        deltas,
    })
}

/// Norms of v^ / (|p|^2 + e) over delta <= ||p| - sqrt(-e)| <= outer for
/// decreasing deltas, with successive ratios.
pub fn channel_divergence_witness(
    v: &[Complex64],
    e: f64,
    xgrid: &Grid,
    deltas: &[f64],
    outer: f64,
    resolution: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(xgrid.len(), v.len())?;
    if !(e < 0.0) {
        return Err(Error::InvalidParameter(format!("negative channel needs e < 0, got {e}")));
    }
    let r = (-e).sqrt();
    if deltas.is_empty() || deltas.windows(2).any(|w| w[1] >= w[0]) || outer <= deltas[0] || outer >= r {
        return Err(Error::InvalidParameter(
            "layer widths must decrease, stay below the outer width, and the outer width below sqrt(-e)".into(),
        ));
    }
    let (t, w) = gauss_legendre(10);
    let mut edges = vec![outer];
    edges.extend_from_slice(deltas);
    let mut sums = vec![0.0; deltas.len()];
    for seg in 0..deltas.len() {
        let (hi, lo) = (edges[seg].ln(), edges[seg + 1].ln());
        for (ti, wi) in t.iter().zip(&w) {
            let d = (0.5 * (hi + lo) + 0.5 * (hi - lo) * ti).exp();
            let wt = 0.5 * (hi - lo) * wi * d;
            for s in [r + d, r - d] {
                let sph = sphere_sampling(xgrid.dim(), s, resolution)?;
                let vals = transform_at(v, xgrid, &points_of(&sph))?;
                let acc: f64 = vals.iter().zip(&sph.weights).map(|(z, q)| q * z.norm_sqr()).sum();
                sums[seg] += wt * acc / (s * s - r * r).powi(2);
            }
        }
    }
    let mut acc = 0.0;
    let norms: Vec<f64> = sums
        .iter()
        .map(|s| {
            acc += s;
            acc.sqrt()
        })
        .collect();
    let ratios = norms.windows(2).map(|p| p[1] / p[0]).collect();
    Ok((norms, ratios))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{discretize_h, spectrum_below_vplus, tune_zero_mode, SpectrumOptions, TuneOptions};
    use crate::grid::GridSpec;
    use crate::potential::PotentialSpec;
    use proptest::prelude::*;

    fn xgrid(dim: usize, extent: f64, n: usize) -> Grid {
        Grid::new(&GridSpec {
            dim,
            extent,
            points_per_axis: n,
            rule: QuadratureRule::Midpoint,
        })
        .unwrap()
    }

    fn fixture(nx_dim: usize, nx: usize) -> (HOperator, SpectrumDecomposition, ProductGrid) {
        let y = xgrid(1, 14.0, 160);
        let family = PotentialSpec::poschl_teller(2.0, 1.0);
        let tuned = tune_zero_mode(&family, "v_plus", (0.9, 1.1), &y, 1, &TuneOptions { zero_tol: 1e-12, ..Default::default() }).unwrap();
        let h = discretize_h(&tuned.potential, &y).unwrap();
        let spec = spectrum_below_vplus(&h, tuned.potential.v_plus(), &SpectrumOptions::default()).unwrap();
        (h, spec, ProductGrid::new(xgrid(nx_dim, 10.0, nx), y))
    }

    #[test]
    fn weighted_thresholds() {
        let (_, _, pg) = fixture(1, 32);
        let g = pg.sample(|x, y| Complex64::new((-x[0] * x[0] - y[0] * y[0]).exp(), 0.0));
        assert!(weighted_norm_check(&g, 6.0, &pg).unwrap().passed);
        assert!(!weighted_norm_check(&g, 5.0, &pg).unwrap().passed);
        assert_eq!(required_alpha(2), 6.0);
        assert_eq!(required_alpha(5), 7.0);
    }

    #[test]
    fn condition_law() {
        for (n, want) in [(1, 2), (2, 3), (3, 1), (4, 1), (5, 0)] {
            assert_eq!(zero_condition_count(n, 1), want);
            let g = xgrid(n, 4.0, if n <= 2 { 16 } else { 4 });
            let v = vec![Complex64::new(1.0, 0.0); g.len()];
            assert_eq!(zero_channel_conditions(&v, &g, 1, 0, 1e-6).unwrap().len(), want);
        }
    }

    #[test]
    fn first_moment_obstruction_is_named() {
        let g = xgrid(1, 10.0, 256);
        let v: Vec<Complex64> = g.sample(|x| Complex64::new(x[0] * (-x[0] * x[0]).exp(), 0.0));
        let sol = solve_zero_channel(&v, &g, 1, 0, 1e-8).unwrap();
        assert!(sol.u.is_none());
        let failed: Vec<_> = sol.conditions.iter().filter(|c| !c.pass).collect();
        assert_eq!(failed.len(), 1);
        assert_eq!(failed[0].id, "(g, x phi[N=2,k=1])");
        assert!((failed[0].value - PI.sqrt() / 2.0).abs() < 1e-10);
    }

    #[test]
    fn zero_channel_solution() {
        let g = xgrid(1, 10.0, 256);
        let v: Vec<Complex64> = g.sample(|x| Complex64::new((x[0] * x[0] - 0.5) * (-x[0] * x[0]).exp(), 0.0));
        let sol = solve_zero_channel(&v, &g, 1, 0, 1e-8).unwrap();
        let u = sol.u.unwrap();
        let exact: Vec<Complex64> = g.sample(|x| Complex64::new(-0.25 * (-x[0] * x[0]).exp(), 0.0));
        let err = u.iter().zip(&exact).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn zero_channel_in_five_dimensions_has_no_conditions() {
        let g = xgrid(5, 4.0, 6);
        let v: Vec<Complex64> = g.sample(|x| Complex64::new((-x.iter().map(|t| t * t).sum::<f64>()).exp(), 0.0));
        let sol = solve_zero_channel(&v, &g, 1, 0, 1e-8).unwrap();
        assert!(sol.conditions.is_empty());
        assert!(sol.u.unwrap().iter().all(|z| z.is_finite()));
    }

    #[test]
    fn negative_channel_obstruction() {
        let g = xgrid(1, 10.0, 256);
        let v: Vec<Complex64> = g.sample(|x| Complex64::new((-x[0] * x[0]).exp(), 0.0));
        let c = negative_channel_condition(&v, -3.0, &g, 0, 0, 1e-8, 1).unwrap();
        assert_eq!(c.samples, 2);
        let exact = 2f64.powf(-0.5) * (-0.75f64).exp();
        assert!((c.max_abs - exact).abs() < 1e-10);
        assert!(!c.pass);
        let (_, ratios) = channel_divergence_witness(&v, -3.0, &g, &[0.04, 0.02, 0.01], 0.4, 1).unwrap();
        for r in ratios {
            assert!(r > 1.3 && r < 1.53, "{r}");
        }
    }

    #[test]
    fn negative_channel_manufactured() {
        let g = xgrid(1, 10.0, 256);
        let w = |x: f64| (-x * x).exp();
        let v: Vec<Complex64> = g.sample(|x| {
            let t = x[0];
            Complex64::new(-(4.0 * t * t - 2.0) * w(t) - 3.0 * w(t), 0.0)
        });
        let sol = solve_negative_channel(&v, -3.0, &g, 0, 0, None, 1e-8, 1).unwrap();
        assert!(sol.condition.pass);
        let u = sol.u.unwrap();
        let exact: Vec<Complex64> = g.sample(|x| Complex64::new(w(x[0]), 0.0));
        let num: f64 = u.iter().zip(&exact).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = exact.iter().map(|a| a.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-6);
    }

    #[test]
    fn negative_channel_manufactured_in_two_dimensions() {
        let g = xgrid(2, 9.0, 64);
        let w = |r2: f64| (-r2).exp();
        let v: Vec<Complex64> = g.sample(|x| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            Complex64::new(-(4.0 * r2 - 4.0) * w(r2) - w(r2), 0.0)
        });
        let sol = solve_negative_channel(&v, -1.0, &g, 0, 0, None, 1e-6, 64).unwrap();
        assert!(sol.condition.pass, "{}", sol.condition.max_abs);
        let u = sol.u.unwrap();
        let exact: Vec<Complex64> = g.sample(|x| Complex64::new(w(x[0] * x[0] + x[1] * x[1]), 0.0));
        let num: f64 = u.iter().zip(&exact).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = exact.iter().map(|a| a.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-2);
    }

    #[test]
    fn massive_division_bound() {
        let g = xgrid(1, 10.0, 128);
        let v: Vec<Complex64> = g.sample(|x| Complex64::new((-x[0] * x[0]).exp(), 0.0));
        let u = solve_massive(&v, 2.0, &g).unwrap();
        assert!(x_l2(&u, &g) <= x_l2(&v, &g) / 2.0);
    }

    #[test]
    fn full_solve_of_zero_source() {
        let (h, spec, pg) = fixture(1, 32);
        let g = vec![zero(); pg.len()];
        let out = solve_full(&g, &h, &spec, &pg, &SeparableOptions::default()).unwrap();
        let sol = out.solution.unwrap();
        assert!(sol.total().iter().all(|z| *z == zero()));
        assert!(out.moments.overall);
    }

    #[test]
    fn full_solve_of_manufactured_source() {
        let (h, spec, pg) = fixture(1, 128);
        let phi0 = spec.eigenvectors[0][0].clone();
        let phi1 = spec.eigenvectors[1][0].clone();
        let w = |x: f64| (-x * x).exp();
        let yv: Vec<f64> = (0..pg.y.len()).map(|j| pg.y.point_vec(j)[0]).collect();
        let mut ustar = Vec::new();
        for i in 0..pg.x.len() {
            let x = pg.x.point_vec(i)[0];
            for j in 0..pg.y.len() {
                let cont = 0.3 * (-(yv[j] - 1.0).powi(2)).exp();
                let u = w(x) * (phi0[j] + phi1[j] + cont);
                ustar.push(Complex64::new(u, 0.0));
            }
        }
        let g = apply_separable(&ustar, &h, &pg).unwrap();
        let proj = project_channels(&g, &spec, &pg).unwrap();
        assert!(proj.channel(1, 0).is_some());
        let out = solve_full(&g, &h, &spec, &pg, &SeparableOptions::default()).unwrap();
        let sol = out.solution.expect("manufactured source is solvable");
        assert!(sol.residual_l2 < 1e-8, "{}", sol.residual_l2);
        let u = sol.total();
        let diff: Vec<Complex64> = u.iter().zip(&ustar).map(|(a, b)| a - b).collect();
        assert!(pg.l2_norm(&diff).unwrap() / pg.l2_norm(&ustar).unwrap() < 1e-2);
        assert!(pg.inner(&sol.u_plus, &sol.u_zero).unwrap().norm() < 1e-10);
        assert!(pg.inner(&sol.u_zero, &sol.u_minus[0]).unwrap().norm() < 1e-10);
        assert_eq!(out.moments.zero_condition_count(), 2);
        assert_eq!(out.moments.negative_condition_count(), 2);
    }

    #[test]
    fn gaussian_zero_channel_in_three_dimensions_is_rejected() {
        let (h, spec, _) = fixture(1, 8);
        let pg = ProductGrid::new(xgrid(3, 5.0, 16), xgrid(1, 14.0, 160));
        let phi = spec.eigenvectors[1][0].clone();
        let v: Vec<Complex64> = pg.x.sample(|x| Complex64::new((-x.iter().map(|t| t * t).sum::<f64>()).exp(), 0.0));
        let g = pg.outer(&v, &phi);
        let out = solve_full(&g, &h, &spec, &pg, &SeparableOptions::default()).unwrap();
        assert!(out.solution.is_none());
        assert_eq!(out.moments.zero_channel.len(), 1);
        assert!((out.moments.zero_channel[0].value - PI.powf(1.5)).abs() < 1e-6);
        assert!(!out.moments.zero_channel[0].pass);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn positive_channel_inverse_bound(a in -2.0f64..2.0, b in 0.3f64..2.0, c in -2.0f64..2.0, d in 0.2f64..1.5) {
            let (h, spec, pg) = fixture(1, 64);
            let g = pg.sample(|x, y| Complex64::new((-b * (x[0] - c).powi(2) - d * (y[0] - a).powi(2)).exp(), a * x[0] * (-x[0] * x[0] - y[0] * y[0]).exp()));
            let proj = project_channels(&g, &spec, &pg).unwrap();
            let sol = solve_positive_channel(&proj.remainder, &h, &spec, &pg).unwrap();
            prop_assert!(sol.u_norm / sol.g_norm <= sol.bound + 1e-8);
        }
    }
}
