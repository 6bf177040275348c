//! Tensor-product box grids and sphere samplings.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::quadrature;

/// Default limit on the number of grid nodes.
pub const DEFAULT_NODE_BUDGET: usize = 1 << 24;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    /// Nodes include both endpoints; endpoint weights are halved.
    #[default]
    Trapezoid,
    /// Nodes at cell centres with uniform weights.
    Midpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    /// Half-width R of the box [-R, R]^dim.
    pub extent: f64,
    pub points_per_axis: usize,
    #[serde(default)]
    pub rule: QuadratureRule,
}

impl GridSpec {
    pub fn new(dim: usize, extent: f64, points_per_axis: usize) -> Self {
        Self {
            dim,
            extent,
            points_per_axis,
            rule: QuadratureRule::Trapezoid,
        }
    }
}

/// Box grid on [-R, R]^dim with row-major node ordering (last axis fastest).
#[derive(Clone, Debug)]
pub struct Grid {
    spec: GridSpec,
    spacing: f64,
    axis: Vec<f64>,
    axis_weights: Vec<f64>,
    weights: Vec<f64>,
}

/// Builds a trapezoid box grid under the default node budget.
pub fn build_box_grid(dim: usize, extent: f64, points_per_axis: usize) -> Result<Grid> {
    Grid::new(&GridSpec::new(dim, extent, points_per_axis))
}

impl Grid {
    pub fn new(spec: &GridSpec) -> Result<Self> {
        Self::with_budget(spec, DEFAULT_NODE_BUDGET)
    }

    pub fn with_budget(spec: &GridSpec, budget: usize) -> Result<Self> {
        if spec.dim == 0 {
            return Err(Error::InvalidParameter("grid dimension must be at least 1".into()));
        }
        if !(spec.extent.is_finite() && spec.extent > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid extent must be positive and finite, got {}",
                spec.extent
            )));
        }
        let n = spec.points_per_axis;
        let min_points = match spec.rule {
            QuadratureRule::Trapezoid => 2,
            QuadratureRule::Midpoint => 1,
        };
        if n < min_points {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least {min_points} points per axis, got {n}"
            )));
        }
        let requested = (0..spec.dim).try_fold(1usize, |acc, _| acc.checked_mul(n));
        let requested = match requested {
            Some(r) if r <= budget => r,
            Some(r) => return Err(Error::NodeBudget { requested: r, budget }),
            None => {
                return Err(Error::NodeBudget {
                    requested: usize::MAX,
                    budget,
                })
            }
        };
        let r = spec.extent;
        let (spacing, axis, axis_weights) = match spec.rule {
            QuadratureRule::Trapezoid => {
                let h = 2.0 * r / (n - 1) as f64;
                let axis: Vec<f64> = (0..n).map(|j| -r + j as f64 * h).collect();
                let mut w = vec![h; n];
                w[0] = 0.5 * h;
                w[n - 1] = 0.5 * h;
                (h, axis, w)
            }
            QuadratureRule::Midpoint => {
                let h = 2.0 * r / n as f64;
                let axis: Vec<f64> = (0..n).map(|j| -r + (j as f64 + 0.5) * h).collect();
                (h, axis, vec![h; n])
            }
        };
        let mut weights = vec![1.0; requested];
        for (i, w) in weights.iter_mut().enumerate() {
            let mut rest = i;
            for _ in 0..spec.dim {
                *w *= axis_weights[rest % n];
                rest /= n;
            }
        }
        Ok(Self {
            spec: spec.clone(),
            spacing,
            axis,
            axis_weights,
            weights,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn extent(&self) -> f64 {
        self.spec.extent
    }

    pub fn points_per_axis(&self) -> usize {
        self.spec.points_per_axis
    }

    pub fn rule(&self) -> QuadratureRule {
        self.spec.rule
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn axis_weights(&self) -> &[f64] {
        &self.axis_weights
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Per-axis indices of node `i`, first axis first.
    pub fn multi_index(&self, i: usize, out: &mut [usize]) {
        let n = self.spec.points_per_axis;
        let mut rest = i;
        for d in (0..self.spec.dim).rev() {
            out[d] = rest % n;
            rest /= n;
        }
    }

    pub fn point(&self, i: usize, out: &mut [f64]) {
        let n = self.spec.points_per_axis;
        let mut rest = i;
        for d in (0..self.spec.dim).rev() {
            out[d] = self.axis[rest % n];
            rest /= n;
        }
    }

    pub fn point_vec(&self, i: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.spec.dim];
        self.point(i, &mut p);
        p
    }

    pub fn radius(&self, i: usize) -> f64 {
        let n = self.spec.points_per_axis;
        let mut rest = i;
        let mut r2 = 0.0;
        for _ in 0..self.spec.dim {
            let x = self.axis[rest % n];
            r2 += x * x;
            rest /= n;
        }
        r2.sqrt()
    }

    /// Samples a function of position at every node.
    pub fn sample<T, F: FnMut(&[f64]) -> T>(&self, mut f: F) -> Vec<T> {
        let mut p = vec![0.0; self.spec.dim];
        (0..self.len())
            .map(|i| {
                self.point(i, &mut p);
                f(&p)
            })
            .collect()
    }

    pub fn integrate(&self, values: &[Complex64]) -> Result<Complex64> {
        check_len(self.len(), values.len())?;
        Ok(values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v * w)
            .sum())
    }

    pub fn integrate_real(&self, values: &[f64]) -> Result<f64> {
        check_len(self.len(), values.len())?;
        Ok(values.iter().zip(&self.weights).map(|(v, w)| v * w).sum())
    }

    /// Writes one CSV row per node: coordinates followed by the weight.
    pub fn write_nodes_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.dim()).map(|d| format!("x{d}")).collect();
        writeln!(w, "{},weight", header.join(","))?;
        let mut p = vec![0.0; self.dim()];
        for i in 0..self.len() {
            self.point(i, &mut p);
            let coords: Vec<String> = p.iter().map(|x| format!("{x:.17e}")).collect();
            writeln!(w, "{},{:.17e}", coords.join(","), self.weights[i])?;
        }
        Ok(())
    }
}

/// Quadrature on the sphere of a given radius in R^dim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereSampling {
    pub dim: usize,
    pub radius: f64,
    /// Flattened point coordinates, `dim` values per point.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SphereSampling {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Analytic surface measure of the sphere of radius `radius` in R^dim.
pub fn sphere_measure(dim: usize, radius: f64) -> f64 {
    quadrature::unit_sphere_area(dim) * radius.powi(dim as i32 - 1)
}

/// Samples the sphere of radius `radius` in R^dim.
///
/// `resolution` is the total point count in dimensions 2 and 3 and the number
/// of nodes per angle in dimension 4 and above. A zero radius yields the origin
/// with unit weight.
pub fn sphere_sampling(dim: usize, radius: f64, resolution: usize) -> Result<SphereSampling> {
    if dim == 0 {
        return Err(Error::InvalidParameter("sphere dimension must be at least 1".into()));
    }
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sphere radius must be nonnegative, got {radius}"
        )));
    }
    if radius == 0.0 {
        return Ok(SphereSampling {
            dim,
            radius,
            points: vec![0.0; dim],
            weights: vec![1.0],
        });
    }
    if resolution == 0 && dim > 1 {
        return Err(Error::InvalidParameter("sphere resolution must be positive".into()));
    }
    let r = radius;
    let (points, weights) = match dim {
        1 => (vec![-r, r], vec![1.0, 1.0]),
        2 => {
            let m = resolution;
            let w = 2.0 * PI * r / m as f64;
            let mut pts = Vec::with_capacity(2 * m);
            for j in 0..m {
                let t = 2.0 * PI * j as f64 / m as f64;
                pts.push(r * t.cos());
                pts.push(r * t.sin());
            }
            (pts, vec![w; m])
        }
        3 => {
            let m = resolution;
            let golden = PI * (3.0 - 5f64.sqrt());
            let mut pts = Vec::with_capacity(3 * m);
            for j in 0..m {
                let z = 1.0 - (2.0 * j as f64 + 1.0) / m as f64;
                let s = (1.0 - z * z).max(0.0).sqrt();
                let phi = golden * j as f64;
                pts.push(r * s * phi.cos());
                pts.push(r * s * phi.sin());
                pts.push(r * z);
            }
            (pts, vec![4.0 * PI * r * r / m as f64; m])
        }
        _ => hyperspherical(dim, r, resolution),
    };
    Ok(SphereSampling {
        dim,
        radius,
        points,
        weights,
    })
}

fn polar_rule(exponent: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
    if exponent % 2 == 0 {
        let h = PI / m as f64;
        let th: Vec<f64> = (0..m).map(|j| (j as f64 + 0.5) * h).collect();
        let w = th.iter().map(|t| h * t.sin().powi(exponent as i32)).collect();
        (th, w)
    } else {
        let (t, w) = quadrature::gauss_legendre(m);
        let half = (exponent as i32 - 1) / 2;
        let th = t.iter().map(|x| x.acos()).collect();
        let w = t
            .iter()
            .zip(&w)
            .map(|(x, w)| w * (1.0 - x * x).powi(half))
            .collect();
        (th, w)
    }
}

fn hyperspherical(dim: usize, r: f64, m: usize) -> (Vec<f64>, Vec<f64>) {
    let rules: Vec<(Vec<f64>, Vec<f64>)> = (1..dim - 1).map(|i| polar_rule(dim - 1 - i, m)).collect();
    let naz = 2 * m;
    let az: Vec<f64> = (0..naz).map(|j| 2.0 * PI * j as f64 / naz as f64).collect();
    let waz = 2.0 * PI / naz as f64;
    let total = m.pow((dim - 2) as u32) * naz;
    let rscale = r.powi(dim as i32 - 1);
    let mut pts = Vec::with_capacity(total * dim);
    let mut wts = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim - 2];
    for _ in 0..total / naz {
        let mut w = rscale * waz;
        let mut sin_prod = r;
        let mut head = Vec::with_capacity(dim);
        for (d, &ii) in idx.iter().enumerate() {
            let th = rules[d].0[ii];
            w *= rules[d].1[ii];
            head.push(sin_prod * th.cos());
            sin_prod *= th.sin();
        }
        for &phi in &az {
            pts.extend_from_slice(&head);
            pts.push(sin_prod * phi.cos());
            pts.push(sin_prod * phi.sin());
            wts.push(w);
        }
        for d in (0..dim - 2).rev() {
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
        }
    }
    (pts, wts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn trapezoid_grid_layout() {
        let g = build_box_grid(1, 1.0, 5).unwrap();
        assert_eq!(g.len(), 5);
        assert_relative_eq!(g.spacing(), 0.5);
        assert_eq!(g.axis(), &[-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.weights(), &[0.25, 0.5, 0.5, 0.5, 0.25]);
    }

    #[test]
    fn integrates_constant_to_box_volume() {
        let g = build_box_grid(3, 2.0, 9).unwrap();
        let ones = vec![Complex64::new(1.0, 0.0); g.len()];
        assert_relative_eq!(g.integrate(&ones).unwrap().re, 64.0, max_relative = 1e-14);
    }

    #[test]
    fn gaussian_integral_is_accurate() {
        let g = build_box_grid(3, 6.0, 64).unwrap();
        let f = g.sample(|x| Complex64::new((-x.iter().map(|v| v * v).sum::<f64>()).exp(), 0.0));
        let got = g.integrate(&f).unwrap().re;
        assert!((got - PI.powf(1.5)).abs() < 1e-10);
    }

    #[test]
    fn rejects_invalid_grids() {
        assert!(matches!(build_box_grid(3, 0.0, 8), Err(Error::InvalidParameter(_))));
        assert!(matches!(build_box_grid(2, 1.0, 1), Err(Error::InvalidParameter(_))));
        assert!(matches!(
            build_box_grid(3, 1.0, 1000),
            Err(Error::NodeBudget { .. })
        ));
    }

    #[test]
    fn length_mismatch_is_typed() {
        let g = build_box_grid(2, 1.0, 4).unwrap();
        let v = vec![Complex64::new(1.0, 0.0); 3];
        assert!(matches!(g.integrate(&v), Err(Error::LengthMismatch { expected: 16, got: 3 })));
    }

    #[test]
    fn midpoint_grid_is_symmetric() {
        let spec = GridSpec {
            rule: QuadratureRule::Midpoint,
            ..GridSpec::new(1, 1.0, 4)
        };
        let g = Grid::new(&spec).unwrap();
        assert_eq!(g.axis(), &[-0.75, -0.25, 0.25, 0.75]);
        assert_relative_eq!(g.weights().iter().sum::<f64>(), 2.0);
    }

    #[test]
    fn node_csv_has_one_row_per_node() {
        let g = build_box_grid(2, 1.0, 3).unwrap();
        let mut buf = Vec::new();
        g.write_nodes_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(text.starts_with("x0,x1,weight"));
    }

    #[test]
    fn circle_sampling_measure() {
        let s = sphere_sampling(2, 2.0, 64).unwrap();
        assert_relative_eq!(s.total_weight(), 4.0 * PI, max_relative = 1e-12);
    }

    #[test]
    fn zero_radius_is_origin() {
        let s = sphere_sampling(3, 0.0, 100).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.weights, vec![1.0]);
        assert_eq!(s.point(0), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn line_sampling_is_two_points() {
        let s = sphere_sampling(1, 1.5, 10).unwrap();
        assert_eq!(s.points, vec![-1.5, 1.5]);
    }

    #[test]
    fn hypersphere_integrates_coordinate_squares() {
        for dim in 4..=6 {
            let s = sphere_sampling(dim, 1.0, 8).unwrap();
            let total = s.total_weight();
            for d in 0..dim {
                let m: f64 = (0..s.len()).map(|i| s.weights[i] * s.point(i)[d].powi(2)).sum();
                assert_relative_eq!(m, total / dim as f64, max_relative = 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn sampling_weights_sum_to_measure(dim in 1usize..=6, radius in 0.05f64..5.0, res in 4usize..40) {
            let res = if dim >= 4 { res.min(10) } else { res };
            let s = sphere_sampling(dim, radius, res).unwrap();
            let exact = sphere_measure(dim, radius);
            prop_assert!((s.total_weight() - exact).abs() <= 1e-10 * exact);
            for i in 0..s.len() {
                let r: f64 = s.point(i).iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!((r - radius).abs() <= 1e-12 * radius.max(1.0));
            }
        }

        #[test]
        fn weights_positive_and_sum_to_volume(dim in 1usize..=4, extent in 0.1f64..10.0, n in 2usize..12) {
            let g = build_box_grid(dim, extent, n).unwrap();
            prop_assert!(g.weights().iter().all(|w| *w > 0.0));
            let vol = (2.0 * extent).powi(dim as i32);
            let s: f64 = g.weights().iter().sum();
            prop_assert!((s - vol).abs() <= 1e-12 * vol);
        }
    }
}
