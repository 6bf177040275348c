//! Solvability and solution of (-Laplacian + V - a) u = f in R^3.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fft::oversampled_frequency_grid;
use crate::genfourier::{self, grad_sup_bound, transform_at_points, GenTransform, GradBoundReport, TransformOptions};
use crate::grid::{sphere_sampling, Grid, SphereSampling};
use crate::potential::{lp_norm, PotentialSpec};
use crate::quadrature::gauss_legendre;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Solvable,
    Indeterminate,
    NotSolvable,
}

impl Verdict {
    /// Solvable at or below the threshold, indeterminate up to ten times it.
    pub fn classify(max_abs: f64, threshold: f64) -> Self {
        if max_abs <= threshold {
            Self::Solvable
        } else if max_abs <= 10.0 * threshold {
            Self::Indeterminate
        } else {
            Self::NotSolvable
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolvabilityReport {
    pub a: f64,
    pub sphere: SphereSampling,
    pub sphere_values: Vec<Complex64>,
    pub max_abs: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    pub grad_bound: GradBoundReport,
    pub f_l2: f64,
}

fn check_a(a: f64) -> Result<()> {
    if a.is_finite() && a >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("spectral parameter a must be nonnegative, got {a}")))
    }
}

/// Evaluates f~ on the sphere |k| = sqrt(a) and classifies the source.
///
/// The default threshold is 1e-6 ||f||_2.
pub fn check_solvability(
    f: &[Complex64],
    a: f64,
    v: &PotentialSpec,
    xgrid: &Grid,
    sphere_resolution: usize,
    threshold: Option<f64>,
    opts: &TransformOptions,
) -> Result<SolvabilityReport> {
    check_a(a)?;
    check_len(xgrid.len(), f.len())?;
    let sphere = sphere_sampling(3, a.sqrt(), sphere_resolution)?;
    let sphere_values = genfourier::restrict_to_sphere(f, v, &sphere, xgrid, opts)?;
    let max_abs = sphere_values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let f_l2 = lp_norm(f, 2.0, xgrid)?;
    let threshold = threshold.unwrap_or(1e-6 * f_l2);
    let grad_bound = grad_sup_bound(f, v, xgrid)?;
    Ok(SolvabilityReport {
        a,
        sphere,
        sphere_values,
        max_abs,
        threshold,
        verdict: Verdict::classify(max_abs, threshold),
        grad_bound,
        f_l2,
    })
}

/// Largest sigma <= sqrt(a)/2 with G sigma <= 0.1 F / sqrt(|A_sigma|).
pub fn default_sigma(grad_bound: f64, f_l2: f64, a: f64) -> f64 {
    let ra = a.sqrt();
    let cap = 0.5 * ra;
    let measure = |s: f64| 4.0 * PI / 3.0 * ((ra + s).powi(3) - (ra - s).powi(3));
    let ok = |s: f64| grad_bound * s * measure(s).sqrt() <= 0.1 * f_l2;
    if ok(cap) {
        return cap;
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub sigma: Option<f64>,
    /// k-grid spacing is 2 pi / (oversample N h).
    pub oversample: usize,
    pub transform: TransformOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            sigma: None,
            oversample: 2,
            transform: TransformOptions::default(),
        }
    }
}

/// Pieces of u~ on the k-grid: the plain quotient outside the layer, the
/// subtracted part inside it, and the dropped sphere term.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitTransform {
    pub outer: Vec<Complex64>,
    pub near: Vec<Complex64>,
    pub dropped: Vec<Complex64>,
}

impl SplitTransform {
    pub fn kept(&self) -> Vec<Complex64> {
        self.outer.iter().zip(&self.near).map(|(a, b)| a + b).collect()
    }
}

/// Data at one k-node for the split.
#[derive(Clone, Copy, Debug)]
pub struct SplitInput {
    pub k: f64,
    pub value: Complex64,
    /// f~ at the radial projection onto the sphere (or at 0 when a = 0).
    pub projected: Complex64,
    /// Radial derivative of f~ at the projection, used on the sphere itself.
    pub radial_derivative: Complex64,
}

/// Splits f~ / (|k|^2 - a) into outer, near and dropped parts.
///
/// For a > 0 the layer is ||k| - sqrt(a)| <= sigma; for a = 0 it is |k| <= 1.
pub fn split_transform(nodes: &[SplitInput], a: f64, sigma: f64) -> SplitTransform {
    let n = nodes.len();
    let mut s = SplitTransform {
        outer: vec![Complex64::default(); n],
        near: vec![Complex64::default(); n],
        dropped: vec![Complex64::default(); n],
    };
    let ra = a.sqrt();
    let singular_gap = 1e-6 * ra.max(1.0);
    for (i, nd) in nodes.iter().enumerate() {
        let denom = nd.k * nd.k - a;
        let in_layer = if a > 0.0 { (nd.k - ra).abs() <= sigma } else { nd.k <= 1.0 };
        if !in_layer {
            s.outer[i] = nd.value / denom;
        } else if a > 0.0 && (nd.k - ra).abs() < singular_gap {
            s.near[i] = nd.radial_derivative / (2.0 * ra);
        } else if a == 0.0 && nd.k == 0.0 {
            s.near[i] = nd.radial_derivative;
        } else {
            s.near[i] = (nd.value - nd.projected) / denom;
            s.dropped[i] = nd.projected / denom;
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionField {
    pub values: Vec<Complex64>,
    /// ||(-Laplacian_h + V - a) u - f||_2 / ||f||_2 with a second-order stencil.
    pub residual: f64,
    pub sigma: f64,
    pub band_radius: f64,
    pub band_edge_max: f64,
    pub outer_l2: f64,
    pub near_l2: f64,
    pub dropped_l2: f64,
}

/// Solves (-Laplacian + V - a) u = f through the generalized transform.
pub fn solve(
    f: &[Complex64],
    report: &SolvabilityReport,
    v: &PotentialSpec,
    xgrid: &Grid,
    opts: &SolveOptions,
) -> Result<SolutionField> {
    if report.verdict == Verdict::NotSolvable {
        return Err(Error::NotSolvable {
            max_abs: report.max_abs,
            threshold: report.threshold,
        });
    }
    check_a(report.a)?;
    let kgrid = oversampled_frequency_grid(xgrid, opts.oversample)?;
    let t = genfourier::forward(f, v, xgrid, &kgrid, &opts.transform)?;
    solve_with_transform(f, report, v, xgrid, &kgrid, &t, opts)
}

/// As [`solve`], reusing a forward transform of `f` on `kgrid`.
pub fn solve_with_transform(
    f: &[Complex64],
    report: &SolvabilityReport,
    v: &PotentialSpec,
    xgrid: &Grid,
    kgrid: &Grid,
    t: &GenTransform,
    opts: &SolveOptions,
) -> Result<SolutionField> {
    if report.verdict == Verdict::NotSolvable {
        return Err(Error::NotSolvable {
            max_abs: report.max_abs,
            threshold: report.threshold,
        });
    }
    if report.verdict == Verdict::Indeterminate {
        log::warn!(
            "sphere restriction {:.3e} lies between the threshold and ten times it; solving anyway",
            report.max_abs
        );
    }
    check_len(kgrid.len(), t.values.len())?;
    let a = report.a;
    check_a(a)?;
    let sigma = match opts.sigma {
        Some(s) => s,
        None if a > 0.0 => default_sigma(report.grad_bound.total, report.f_l2, a),
        None => 1.0,
    };
    if !(sigma > 0.0) || (a > 0.0 && sigma >= a.sqrt()) {
        return Err(Error::InvalidParameter(format!(
            "layer half-width sigma must lie in (0, sqrt(a)), got {sigma}"
        )));
    }
    let ra = a.sqrt();
    let mut inputs: Vec<SplitInput> = (0..kgrid.len())
        .map(|i| SplitInput {
            k: kgrid.radius(i),
            value: t.values[i],
            projected: Complex64::default(),
            radial_derivative: Complex64::default(),
        })
        .collect();
    let band = t.band_radius;
    let layer: Vec<usize> = (0..kgrid.len())
        .filter(|&i| {
            inputs[i].k <= band
                && if a > 0.0 {
                    (inputs[i].k - ra).abs() <= sigma
                } else {
                    inputs[i].k <= 1.0
                }
        })
        .collect();
    let mut kp = [0.0; 3];
    let mut projections = Vec::with_capacity(layer.len());
    for &i in &layer {
        kgrid.point(i, &mut kp);
        let r = inputs[i].k;
        if a > 0.0 && r > 0.0 {
            projections.push([kp[0] * ra / r, kp[1] * ra / r, kp[2] * ra / r]);
        } else {
            projections.push([0.0; 3]);
        }
    }
    let projected = transform_at_points(f, v, &projections, xgrid, &opts.transform)?;
    for (j, &i) in layer.iter().enumerate() {
        inputs[i].projected = projected[j];
    }
    let singular: Vec<usize> = layer
        .iter()
        .copied()
        .filter(|&i| (a > 0.0 && (inputs[i].k - ra).abs() < 1e-6 * ra.max(1.0)) || (a == 0.0 && inputs[i].k == 0.0))
        .collect();
    if !singular.is_empty() {
        let d = 1e-3 * ra.max(1.0);
        let mut pts = Vec::new();
        for &i in &singular {
            kgrid.point(i, &mut kp);
            let r = inputs[i].k;
            if a > 0.0 {
                for s in [ra + d, ra - d] {
                    pts.push([kp[0] * s / r, kp[1] * s / r, kp[2] * s / r]);
                }
            } else {
                for axis in 0..3 {
                    let mut e = [0.0; 3];
                    e[axis] = d;
                    pts.push(e);
                    pts.push([-e[0], -e[1], -e[2]]);
                }
            }
        }
        let vals = transform_at_points(f, v, &pts, xgrid, &opts.transform)?;
        let mut it = vals.chunks(if a > 0.0 { 2 } else { 6 });
        for &i in &singular {
            let c = it.next().expect("one chunk per singular node");
            inputs[i].radial_derivative = if a > 0.0 {
                (c[0] - c[1]) / (2.0 * d)
            } else {
                let centre = inputs[i].value;
                let lap: Complex64 = c.iter().map(|z| z - centre).sum::<Complex64>() / (d * d);
                lap / 6.0
            };
        }
    }
    let split = split_transform(&inputs, a, sigma);
    let mut kept = split.kept();
    for (i, z) in kept.iter_mut().enumerate() {
        if kgrid.radius(i) > band {
            *z = Complex64::default();
        }
    }
    let values = genfourier::inverse(&kept, v, xgrid, kgrid, &opts.transform)?;
    let residual = helmholtz_residual(&values, f, a, v, xgrid)? / report.f_l2.max(f64::MIN_POSITIVE);
    let norm = |z: &[Complex64]| lp_norm(z, 2.0, kgrid);
    Ok(SolutionField {
        residual,
        sigma,
        band_radius: t.band_radius,
        band_edge_max: t.band_edge_max,
        outer_l2: norm(&split.outer)?,
        near_l2: norm(&split.near)?,
        dropped_l2: norm(&split.dropped)?,
        values,
    })
}

/// Second-order finite-difference Laplacian with zero values outside the box.
pub fn fd_laplacian(u: &[Complex64], grid: &Grid) -> Result<Vec<Complex64>> {
    check_len(grid.len(), u.len())?;
    let n = grid.points_per_axis();
    let dim = grid.dim();
    let h2 = grid.spacing() * grid.spacing();
    let mut out = vec![Complex64::default(); u.len()];
    let mut idx = vec![0usize; dim];
    for (i, o) in out.iter_mut().enumerate() {
        grid.multi_index(i, &mut idx);
        let mut acc = -2.0 * dim as f64 * u[i];
        let mut stride = 1;
        for d in (0..dim).rev() {
            if idx[d] > 0 {
                acc += u[i - stride];
            }
            if idx[d] + 1 < n {
                acc += u[i + stride];
            }
            stride *= n;
        }
        *o = acc / h2;
    }
    Ok(out)
}

/// L2 norm of (-Laplacian_h + V - a) u - f.
pub fn helmholtz_residual(u: &[Complex64], f: &[Complex64], a: f64, v: &PotentialSpec, grid: &Grid) -> Result<f64> {
    check_len(grid.len(), f.len())?;
    let lap = fd_laplacian(u, grid)?;
    let vv = v.eval_field(grid)?;
    let r: Vec<Complex64> = (0..grid.len()).map(|i| -lap[i] + (vv[i] - a) * u[i] - f[i]).collect();
    lp_norm(&r, 2.0, grid)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub a: f64,
    pub outer: f64,
    pub sigmas: Vec<f64>,
    /// L2 norm of f~ / (|k|^2 - a) over sigma <= ||k| - sqrt(a)| <= outer.
    pub norms: Vec<f64>,
    /// norms[i + 1] / norms[i].
    pub ratios: Vec<f64>,
}

/// Norms of the unsubtracted quotient over shrinking excised layers around
/// the sphere. For a source with nonzero sphere restriction these grow like
/// sigma^{-1/2}.
#[allow(clippy::too_many_arguments)]
pub fn divergence_witness(
    f: &[Complex64],
    a: f64,
    v: &PotentialSpec,
    xgrid: &Grid,
    sigmas: &[f64],
    outer: Option<f64>,
    sphere_resolution: usize,
    opts: &TransformOptions,
) -> Result<WitnessReport> {
    check_a(a)?;
    check_len(xgrid.len(), f.len())?;
    if sigmas.is_empty() || sigmas.windows(2).any(|w| w[1] >= w[0]) || sigmas.iter().any(|s| *s <= 0.0) {
        return Err(Error::InvalidParameter("sigmas must be positive and strictly decreasing".into()));
    }
    let ra = a.sqrt();
    let outer = outer.unwrap_or(if a > 0.0 { 0.5 * ra } else { 1.0 });
    if outer <= sigmas[0] || (a > 0.0 && outer >= ra) {
        return Err(Error::InvalidParameter(format!(
            "outer layer radius {outer} must exceed every sigma and stay below sqrt(a)"
        )));
    }
    let (gl_t, gl_w) = gauss_legendre(10);
    let mut edges = vec![outer];
    edges.extend_from_slice(sigmas);
    let sides: &[f64] = if a > 0.0 { &[1.0, -1.0] } else { &[1.0] };
    let mut radial: Vec<(usize, f64, f64)> = Vec::new();
    for seg in 0..sigmas.len() {
        let (hi, lo) = (edges[seg].ln(), edges[seg + 1].ln());
        for (t, w) in gl_t.iter().zip(&gl_w) {
            let lt = 0.5 * (hi + lo) + 0.5 * (hi - lo) * t;
            let dist = lt.exp();
            let wt = 0.5 * (hi - lo) * w * dist;
            for &side in sides {
                let s = if a > 0.0 { ra + side * dist } else { dist };
                radial.push((seg, s, wt));
            }
        }
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for &(_, s, _) in &radial {
        let sph = sphere_sampling(3, s, sphere_resolution)?;
        for i in 0..sph.len() {
            let p = sph.point(i);
            points.push([p[0], p[1], p[2]]);
        }
        weights.push(sph.weights[0]);
    }
    let vals = transform_at_points(f, v, &points, xgrid, opts)?;
    let m = points.len() / radial.len();
    let mut seg_sums = vec![0.0; sigmas.len()];
    for (r, &(seg, s, wt)) in radial.iter().enumerate() {
        let denom = (s * s - a).powi(2);
        let sum: f64 = vals[r * m..(r + 1) * m].iter().map(|z| z.norm_sqr()).sum();
        seg_sums[seg] += wt * weights[r] * sum / denom;
    }
    let mut acc = 0.0;
    let norms: Vec<f64> = seg_sums
        .iter()
        .map(|s| {
            acc += s;
            acc.sqrt()
        })
        .collect();
    let ratios = norms.windows(2).map(|w| w[1] / w[0]).collect();
    Ok(WitnessReport {
        a,
        outer,
        sigmas: sigmas.to_vec(),
        norms,
        ratios,
    })
}
