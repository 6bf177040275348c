//! One-dimensional Gauss-Legendre rules and radial integrals.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss-Legendre rule on [a, b] with `panels` equal panels.
pub fn composite(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (t, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (ti, wi) in t.iter().zip(&w) {
            xs.push(lo + 0.5 * h * (ti + 1.0));
            ws.push(0.5 * h * wi);
        }
    }
    (xs, ws)
}

/// Integral over [0, inf) using the substitution r = t / (1 - t).
pub fn semi_infinite<F: Fn(f64) -> f64>(f: F) -> f64 {
    let (ts, ws) = composite(0.0, 1.0, 400, 10);
    let mut sum = 0.0;
    for (t, w) in ts.iter().zip(&ws) {
        let one_minus = 1.0 - t;
        let r = t / one_minus;
        let v = f(r);
        if v != 0.0 {
            sum += w * v / (one_minus * one_minus);
        }
    }
    sum
}

/// Surface measure of the unit sphere in R^dim.
pub fn unit_sphere_area(dim: usize) -> f64 {
    let d = dim as f64;
    2.0 * PI.powf(d / 2.0) / statrs::function::gamma::gamma(d / 2.0)
}

/// Integral of a radial profile over R^dim.
pub fn radial_integral<F: Fn(f64) -> f64>(dim: usize, f: F) -> f64 {
    let area = unit_sphere_area(dim);
    let p = dim as i32 - 1;
    area * semi_infinite(|r| r.powi(p) * f(r))
}
