//! Pipelines behind the `nfsolve` executable: each subcommand reads a
//! [`RunConfig`], writes data files into the output directory and returns a
//! [`RunReport`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::channel::{
    discrete_eigenpairs, discretize_h, richardson_eigenvalues, transverse_extent, tune_zero_mode, HOperator, ProductGrid,
    SpectrumDecomposition, SpectrumOptions, TuneOptions, TuneResult,
};
use crate::config::{Command, RunConfig, SeparableSource};
use crate::error::{Error, Result};
use crate::fft::oversampled_frequency_grid;
use crate::genfourier::{self, GenTransform, TransformOptions};
use crate::grid::{Grid, GridSpec, QuadratureRule};
use crate::helmholtz::{self, SolvabilityReport, SolveOptions, Verdict, WitnessReport};
use crate::io::{content_key, write_atomic, write_tensor, Cache};
use crate::potential::{
    check_short_range_assumptions, lp_norm, q_norm_bound, rollnik_norm, sharp_hls_constant, AssumptionReport, PotentialSpec,
    QNormBound, RollnikReport, ROLLNIK_NODE_LIMIT,
};
use crate::scattering::{grad_scattering_state, scattering_state, ScatteringState};
use crate::separable::{self, ChannelNorm, MomentReport, SeparableOptions, WeightedNormReport};
use crate::source::SourceSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunVerdict {
    Pass,
    Fail,
    Solvable,
    Indeterminate,
    NotSolvable,
}

impl RunVerdict {
    /// 0 when the pipeline passed, 2 when a condition failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Pass | Self::Solvable | Self::Indeterminate => 0,
            Self::Fail | Self::NotSolvable => 2,
        }
    }
}

impl From<Verdict> for RunVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Solvable => Self::Solvable,
            Verdict::Indeterminate => Self::Indeterminate,
            Verdict::NotSolvable => Self::NotSolvable,
        }
    }
}

/// Exit status for an error that escaped a pipeline.
pub fn error_exit_code(e: &Error) -> i32 {
    if e.is_condition_failure() {
        2
    } else {
        1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringSummary {
    pub k: [f64; 3],
    pub q: f64,
    pub iterations: usize,
    pub tail_bound: f64,
    pub residual: f64,
    pub sup_norm: f64,
    /// (2 pi)^{-3/2} / (1 - q).
    pub sup_bound: f64,
    pub term_sup_norms: Vec<f64>,
    pub gradient_iterations: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub sigma: f64,
    pub residual: f64,
    pub band_radius: f64,
    pub band_edge_max: f64,
    pub shells: usize,
    pub outer_l2: f64,
    pub near_l2: f64,
    pub dropped_l2: f64,
    pub u_l2: f64,
    /// Relative L2 error against the exact solution of a manufactured source.
    pub manufactured_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub potential: PotentialSpec,
    pub v_plus: f64,
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub residuals: Vec<f64>,
    pub zero_index: Option<usize>,
    pub e_next: f64,
    pub zero_tol: f64,
    /// Two-grid extrapolation of the lowest eigenvalues (one-dimensional y only).
    pub richardson: Option<Vec<f64>>,
    /// Why the zero-mode assumption fails, if it does.
    pub zero_mode_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparableSummary {
    pub n: usize,
    pub m: usize,
    pub g_l2: f64,
    pub residual_l2: Option<f64>,
    pub channel_norms: Vec<ChannelNorm>,
    pub deltas: Vec<f64>,
    pub manufactured_error: Option<f64>,
    pub failed_conditions: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stages {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_bound: Option<QNormBound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assumptions: Option<AssumptionReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollnik: Option<RollnikReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scattering: Option<ScatteringSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solvability: Option<SolvabilityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<SolutionSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuneResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weighted: Option<WeightedNormReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separable: Option<SeparableSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub command: Command,
    pub config: RunConfig,
    pub verdict: RunVerdict,
    pub exit_code: i32,
    pub stages: Stages,
    /// Artifact name to file name inside the output directory.
    pub artifacts: BTreeMap<String, String>,
    /// Wall-clock seconds per stage; left out of report.json.
    #[serde(default)]
    pub timings: Vec<Timing>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    SphereRestriction,
    Witness,
    NeumannTail,
    EigenLadder,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [Self::SphereRestriction, Self::Witness, Self::NeumannTail, Self::EigenLadder];

    pub fn file_name(&self) -> &'static str {
        match self {
            Self::SphereRestriction => "plot_sphere_restriction.csv",
            Self::Witness => "plot_witness.csv",
            Self::NeumannTail => "plot_neumann_tail.csv",
            Self::EigenLadder => "plot_eigen_ladder.csv",
        }
    }

    fn stage(&self) -> &'static str {
        match self {
            Self::SphereRestriction => "solvability",
            Self::Witness => "witness",
            Self::NeumannTail => "scattering",
            Self::EigenLadder => "spectrum",
        }
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(json!(s)).map_err(|_| Error::Config(format!("unknown plot kind `{s}`")))
    }
}

/// Writes the CSV for one plot from the data held in the report.
pub fn emit_plot_data(report: &RunReport, which: PlotKind, dir: &Path) -> Result<PathBuf> {
    let missing = || Error::MissingStage(which.stage().into());
    let mut out = String::new();
    match which {
        PlotKind::SphereRestriction => {
            let s = report.stages.solvability.as_ref().ok_or_else(missing)?;
            out.push_str("theta,phi,abs\n");
            let d = s.sphere.dim;
            for (i, z) in s.sphere_values.iter().enumerate() {
                let p = &s.sphere.points[i * d..(i + 1) * d];
                let r = p.iter().map(|c| c * c).sum::<f64>().sqrt();
                let theta = if r > 0.0 { (p[2] / r).clamp(-1.0, 1.0).acos() } else { 0.0 };
                let phi = p[1].atan2(p[0]);
                writeln!(out, "{theta},{phi},{}", z.norm()).unwrap();
            }
        }
        PlotKind::Witness => {
            let w = report.stages.witness.as_ref().ok_or_else(missing)?;
            out.push_str("sigma,norm\n");
            for (s, n) in w.sigmas.iter().zip(&w.norms) {
                writeln!(out, "{s},{n}").unwrap();
            }
        }
        PlotKind::NeumannTail => {
            let s = report.stages.scattering.as_ref().ok_or_else(missing)?;
            out.push_str("iteration,sup_norm,bound\n");
            let amp = (2.0 * PI).powf(-1.5);
            for (n, t) in s.term_sup_norms.iter().enumerate() {
                writeln!(out, "{n},{t},{}", amp * s.q.powi(n as i32)).unwrap();
            }
        }
        PlotKind::EigenLadder => {
            let s = report.stages.spectrum.as_ref().ok_or_else(missing)?;
            out.push_str("index,eigenvalue,multiplicity\n");
            for (j, (e, m)) in s.eigenvalues.iter().zip(&s.multiplicities).enumerate() {
                writeln!(out, "{j},{e},{m}").unwrap();
            }
        }
    }
    let path = dir.join(which.file_name());
    write_atomic(&path, out.as_bytes())?;
    Ok(path)
}

/// Writes report.json (without timings) and timings.json.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<()> {
    let mut stable = report.clone();
    stable.timings.clear();
    write_atomic(&dir.join("report.json"), stable.to_json()?.as_bytes())?;
    write_atomic(&dir.join("timings.json"), serde_json::to_string_pretty(&report.timings)?.as_bytes())?;
    Ok(())
}

/// Replaces an infinite value by the largest finite one so reports stay
/// valid JSON.
fn finite(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else if x < 0.0 {
        f64::MIN
    } else {
        f64::MAX
    }
}

macro_rules! timed {
    ($ctx:expr, $stage:expr, $e:expr) => {{
        let t0 = Instant::now();
        let out = $e;
        $ctx.lap($stage, t0);
        out
    }};
}

struct Ctx<'c> {
    config: &'c RunConfig,
    dir: PathBuf,
    cache: Option<Cache>,
    stages: Stages,
    artifacts: BTreeMap<String, String>,
    timings: Vec<Timing>,
}

impl Ctx<'_> {
    fn lap(&mut self, stage: &str, t0: Instant) {
        self.timings.push(Timing {
            stage: stage.into(),
            seconds: t0.elapsed().as_secs_f64(),
        });
    }

    fn artifact(&mut self, name: &str, file: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(file), bytes)?;
        self.artifacts.insert(name.into(), file.into());
        Ok(())
    }

    fn tensor(&mut self, name: &str, file: &str, shape: &[usize], data: &[Complex64]) -> Result<()> {
        write_tensor(&self.dir.join(file), shape, data)?;
        self.artifacts.insert(name.into(), file.into());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, file: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.artifact(name, file, text.as_bytes())
    }

    fn transform(&self) -> TransformOptions {
        self.config.solver.transform()
    }

    fn cached_state(&self, k: [f64; 3], v: &PotentialSpec, grid: &Grid) -> Result<ScatteringState> {
        let s = &self.config.solver;
        let key = content_key(&json!({ "potential": v, "grid": grid.spec(), "k": k, "tol": s.tol, "max_iter": s.max_iter }))?;
        if let Some(cache) = &self.cache {
            if let Some((meta, values)) = cache.load("state", &key)? {
                if values.len() == grid.len() {
                    let meta: StateMeta = serde_json::from_value(meta)?;
                    return Ok(ScatteringState {
                        k: meta.k,
                        values,
                        iterations: meta.iterations,
                        tail_bound: meta.tail_bound,
                        term_sup_norms: meta.term_sup_norms,
                        residual: meta.residual,
                    });
                }
            }
        }
        let state = scattering_state(k, v, grid, s.tol, s.max_iter)?;
        if let Some(cache) = &self.cache {
            let meta = StateMeta {
                k: state.k,
                iterations: state.iterations,
                tail_bound: state.tail_bound,
                term_sup_norms: state.term_sup_norms.clone(),
                residual: state.residual,
            };
            cache.store("state", &key, &serde_json::to_value(meta)?, &state.values)?;
        }
        Ok(state)
    }

    fn cached_forward(&self, f: &[Complex64], source: &SourceSpec, v: &PotentialSpec, xgrid: &Grid, kgrid: &Grid) -> Result<GenTransform> {
        let opts = self.transform();
        let key = content_key(&json!({
            "potential": v,
            "source": source,
            "grid": xgrid.spec(),
            "oversample": self.config.k_grid.oversample,
            "transform": opts,
        }))?;
        if let Some(cache) = &self.cache {
            if let Some((meta, values)) = cache.load("transform", &key)? {
                if values.len() == kgrid.len() {
                    let meta: TransformMeta = serde_json::from_value(meta)?;
                    return Ok(GenTransform {
                        values,
                        band_radius: meta.band_radius,
                        band_edge_max: meta.band_edge_max,
                        shells: meta.shells,
                        max_iterations: meta.max_iterations,
                    });
                }
            }
        }
        let t = genfourier::forward(f, v, xgrid, kgrid, &opts)?;
        if let Some(cache) = &self.cache {
            let meta = TransformMeta {
                band_radius: t.band_radius,
                band_edge_max: t.band_edge_max,
                shells: t.shells,
                max_iterations: t.max_iterations,
            };
            cache.store("transform", &key, &serde_json::to_value(meta)?, &t.values)?;
        }
        Ok(t)
    }
}

#[derive(Serialize, Deserialize)]
struct StateMeta {
    k: [f64; 3],
    iterations: usize,
    tail_bound: f64,
    term_sup_norms: Vec<f64>,
    residual: f64,
}

#[derive(Serialize, Deserialize)]
struct TransformMeta {
    band_radius: f64,
    band_edge_max: f64,
    shells: usize,
    max_iterations: usize,
}

/// Runs the pipeline named by `config.command`, writes its artifacts,
/// report.json and timings.json into `config.output.dir`, and returns the
/// report.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    let command = config
        .command
        .ok_or_else(|| Error::Config("no subcommand given".into()))?;
    let dir = PathBuf::from(&config.output.dir);
    std::fs::create_dir_all(&dir)?;
    let cache = config.output.cache.as_ref().map(Cache::new).transpose()?;
    let mut ctx = Ctx {
        config,
        dir: dir.clone(),
        cache,
        stages: Stages::default(),
        artifacts: BTreeMap::new(),
        timings: Vec::new(),
    };
    let verdict = match command {
        Command::CheckPotential => check_potential(&mut ctx)?,
        Command::ScatteringState => scattering(&mut ctx)?,
        Command::SolveH => solve_h(&mut ctx)?,
        Command::Witness => witness(&mut ctx)?,
        Command::Spectrum => spectrum(&mut ctx)?,
        Command::SolveSeparable => solve_separable(&mut ctx)?,
    };
    let mut report = RunReport {
        command,
        config: config.clone(),
        verdict,
        exit_code: verdict.exit_code(),
        stages: ctx.stages,
        artifacts: ctx.artifacts,
        timings: ctx.timings,
    };
    for kind in PlotKind::ALL {
        match emit_plot_data(&report, kind, &dir) {
            Ok(_) => {
                report.artifacts.insert(format!("plot_{}", kind.stage()), kind.file_name().into());
            }
            Err(Error::MissingStage(_)) => {}
            Err(e) => return Err(e),
        }
    }
    write_report(&report, &dir)?;
    Ok(report)
}

fn x_grid(config: &RunConfig) -> Result<Grid> {
    Grid::new(&config.x_grid)
}

fn field_csv(grid: &Grid, values: &[Complex64]) -> String {
    let mut out = String::new();
    let names = ["x", "y", "z"];
    for d in 0..grid.dim() {
        if d < 3 {
            out.push_str(names[d]);
        } else {
            write!(out, "x{}", d + 1).unwrap();
        }
        out.push(',');
    }
    out.push_str("re,im\n");
    let mut p = vec![0.0; grid.dim()];
    for (i, z) in values.iter().enumerate() {
        grid.point(i, &mut p);
        for c in &p {
            write!(out, "{c},").unwrap();
        }
        writeln!(out, "{},{}", z.re, z.im).unwrap();
    }
    out
}

fn relative_error(u: &[Complex64], exact: &[Complex64], grid: &Grid) -> Result<f64> {
    let diff: Vec<Complex64> = u.iter().zip(exact).map(|(a, b)| a - b).collect();
    Ok(lp_norm(&diff, 2.0, grid)? / lp_norm(exact, 2.0, grid)?.max(f64::MIN_POSITIVE))
}

fn check_potential(ctx: &mut Ctx<'_>) -> Result<RunVerdict> {
    let config = ctx.config;
    let v = &config.potential;
    let grid = x_grid(config)?;
    let mut q = timed!(ctx, "q_norm_bound", q_norm_bound(v))?;
    q.radius = finite(q.radius);
    let c_hls = match config.solver.c_hls {
        Some(c) => c,
        None => sharp_hls_constant(3, 2.0)?,
    };
    let f = config.source.eval_field(&grid)?;
    let mut a = timed!(ctx, "assumptions", check_short_range_assumptions(v, &f, &grid, c_hls))?;
    a.envelope_c = finite(a.envelope_c);
    if grid.len() <= ROLLNIK_NODE_LIMIT {
        let values = v.eval_field(&grid)?;
        let r = timed!(ctx, "rollnik", rollnik_norm(&values, &grid, c_hls))?;
        ctx.stages.rollnik = Some(r);
    }
    let verdict = if a.passed { RunVerdict::Pass } else { RunVerdict::Fail };
    ctx.stages.q_bound = Some(q);
    ctx.stages.assumptions = Some(a);
    Ok(verdict)
}

fn scattering(ctx: &mut Ctx<'_>) -> Result<RunVerdict> {
    let config = ctx.config;
    let v = &config.potential;
    let grid = x_grid(config)?;
    let k = config.solver.k;
    let q = q_norm_bound(v)?.bound;
    let state = timed!(ctx, "scattering_state", ctx.cached_state(k, v, &grid))?;
    let sup_norm = state.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let sup_bound = finite((2.0 * PI).powf(-1.5) / (1.0 - q));
    ctx.artifact("state_csv", "state.csv", field_csv(&grid, &state.values).as_bytes())?;
    let n = grid.points_per_axis();
    ctx.tensor("state_bin", "state.bin", &[n; 3], &state.values)?;
    let mut gradient_iterations = None;
    if config.solver.gradient {
        let g = timed!(ctx, "gradient", grad_scattering_state(k, v, &grid, config.solver.tol, config.solver.max_iter))?;
        let stacked: Vec<Complex64> = g.values.iter().flatten().copied().collect();
        ctx.tensor("gradient_bin", "gradient.bin", &[3, n, n, n], &stacked)?;
        gradient_iterations = Some(g.iterations);
    }
    let pass = sup_norm <= sup_bound + 1e-6;
    ctx.stages.scattering = Some(ScatteringSummary {
        k,
        q,
        iterations: state.iterations,
        tail_bound: state.tail_bound,
        residual: state.residual,
        sup_norm,
        sup_bound,
        term_sup_norms: state.term_sup_norms,
        gradient_iterations,
    });
    Ok(if pass { RunVerdict::Pass } else { RunVerdict::Fail })
}

fn sphere_csv(report: &SolvabilityReport) -> String {
    let mut out = String::from("kx,ky,kz,re,im,abs\n");
    let d = report.sphere.dim;
    for (i, z) in report.sphere_values.iter().enumerate() {
        for c in &report.sphere.points[i * d..(i + 1) * d] {
            write!(out, "{c},").unwrap();
        }
        writeln!(out, "{},{},{}", z.re, z.im, z.norm()).unwrap();
    }
    out
}

fn solvability(ctx: &mut Ctx<'_>, f: &[Complex64], grid: &Grid) -> Result<SolvabilityReport> {
    let config = ctx.config;
    let s = &config.solver;
    let opts = ctx.transform();
    let mut report = timed!(ctx, "solvability", {
        helmholtz::check_solvability(f, s.a, &config.potential, grid, s.sphere_resolution, s.thresholds.solvability, &opts)
    })?;
    report.grad_bound.term1 = finite(report.grad_bound.term1);
    report.grad_bound.term2 = finite(report.grad_bound.term2);
    report.grad_bound.term3 = finite(report.grad_bound.term3);
    report.grad_bound.total = finite(report.grad_bound.total);
    ctx.artifact("sphere_csv", "sphere.csv", sphere_csv(&report).as_bytes())?;
    Ok(report)
}

fn solve_h(ctx: &mut Ctx<'_>) -> Result<RunVerdict> {
    let config = ctx.config;
    let v = &config.potential;
    let grid = x_grid(config)?;
    let f = config.source.eval_field(&grid)?;
    let report = solvability(ctx, &f, &grid)?;
    let verdict = RunVerdict::from(report.verdict);
    if report.verdict == Verdict::NotSolvable {
        ctx.stages.solvability = Some(report);
        return Ok(verdict);
    }
    let kgrid = oversampled_frequency_grid(&grid, config.k_grid.oversample)?;
    let t = timed!(ctx, "forward_transform", ctx.cached_forward(&f, &config.source, v, &grid, &kgrid))?;
    let opts = SolveOptions {
        sigma: config.solver.sigma,
        oversample: config.k_grid.oversample,
        transform: ctx.transform(),
    };
    let sol = timed!(ctx, "solve", helmholtz::solve_with_transform(&f, &report, v, &grid, &kgrid, &t, &opts))?;
    let manufactured_error = match config.source.manufactured_solution(&grid) {
        Some(exact) => Some(relative_error(&sol.values, &exact, &grid)?),
        None => None,
    };
    ctx.artifact("solution_csv", "solution.csv", field_csv(&grid, &sol.values).as_bytes())?;
    let n = grid.points_per_axis();
    ctx.tensor("solution_bin", "solution.bin", &[n; 3], &sol.values)?;
    let nk = kgrid.points_per_axis();
    ctx.tensor("transform_bin", "transform.bin", &[nk; 3], &t.values)?;
    ctx.stages.solution = Some(SolutionSummary {
        sigma: sol.sigma,
        residual: sol.residual,
        band_radius: sol.band_radius,
        band_edge_max: sol.band_edge_max,
        shells: t.shells,
        outer_l2: sol.outer_l2,
        near_l2: sol.near_l2,
        dropped_l2: sol.dropped_l2,
        u_l2: lp_norm(&sol.values, 2.0, &grid)?,
        manufactured_error,
    });
    ctx.stages.solvability = Some(report);
    Ok(verdict)
}

fn witness(ctx: &mut Ctx<'_>) -> Result<RunVerdict> {
    let config = ctx.config;
    let s = &config.solver;
    let grid = x_grid(config)?;
    let f = config.source.eval_field(&grid)?;
    let report = solvability(ctx, &f, &grid)?;
    let opts = ctx.transform();
    let w = timed!(ctx, "witness", {
        helmholtz::divergence_witness(&f, s.a, &config.potential, &grid, &s.witness.sigmas, s.witness.outer, s.sphere_resolution, &opts)
    })?;
    let mut csv = String::from("sigma,norm,ratio\n");
    for (i, (sg, n)) in w.sigmas.iter().zip(&w.norms).enumerate() {
        match i.checked_sub(1).and_then(|j| w.ratios.get(j)) {
            Some(r) => writeln!(csv, "{sg},{n},{r}").unwrap(),
            None => writeln!(csv, "{sg},{n},").unwrap(),
        }
    }
    ctx.artifact("witness_csv", "witness.csv", csv.as_bytes())?;
    let verdict = RunVerdict::from(report.verdict);
    ctx.stages.solvability = Some(report);
    ctx.stages.witness = Some(w);
    Ok(verdict)
}

/// Transverse operator after optional zero-mode tuning.
fn transverse(ctx: &mut Ctx<'_>) -> Result<(PotentialSpec, Grid, HOperator, SpectrumDecomposition)> {
    let config = ctx.config;
    let yc = &config.y_grid;
    let mut v = config.transverse_potential.clone();
    let spec = GridSpec {
        dim: yc.dim,
        extent: yc.extent.unwrap_or_else(|| transverse_extent(&v)),
        points_per_axis: yc.points_per_axis,
        rule: QuadratureRule::Midpoint,
    };
    let ygrid = Grid::new(&spec)?;
    if let Some(t) = &config.spectrum.tune {
        let opts = TuneOptions {
            zero_tol: t.zero_tol,
            max_iter: 200,
            richardson: t.richardson,
        };
        let tuned = timed!(ctx, "tune", tune_zero_mode(&v, &t.param, (t.lo, t.hi), &ygrid, t.target_index, &opts))?;
        v = tuned.potential.clone();
        ctx.json("tuned_patch", "tuned_patch.json", &json!({ "transverse_potential": v }))?;
        ctx.stages.tuning = Some(tuned);
    }
    let hop = discretize_h(&v, &ygrid)?;
    let opts = SpectrumOptions {
        zero_tol: config.spectrum.zero_tol,
        cluster_tol: config.spectrum.cluster_tol,
        margin: config.spectrum.margin,
    };
    let dec = timed!(ctx, "spectrum", discrete_eigenpairs(&hop, v.v_plus(), &opts))?;
    let richardson = if yc.dim == 1 && dec.total_multiplicity() > 0 {
        Some(timed!(ctx, "richardson", richardson_eigenvalues(&v, &ygrid, dec.total_multiplicity()))?)
    } else {
        None
    };
    let zero_mode_error = dec.check_zero_mode().err().map(|e| e.to_string());
    let summary = SpectrumSummary {
        potential: v.clone(),
        v_plus: dec.v_plus,
        eigenvalues: dec.eigenvalues.clone(),
        multiplicities: dec.multiplicities.clone(),
        residuals: dec.residuals.clone(),
        zero_index: dec.zero_index,
        e_next: dec.e_next,
        zero_tol: dec.zero_tol,
        richardson,
        zero_mode_error,
    };
    ctx.json("spectrum_json", "spectrum.json", &summary)?;
    ctx.stages.spectrum = Some(summary);
    Ok((v, ygrid, hop, dec))
}

fn spectrum(ctx: &mut Ctx<'_>) -> Result<RunVerdict> {
    let (_, ygrid, _, dec) = transverse(ctx)?;
    for (j, members) in dec.eigenvectors.iter().enumerate() {
        for (k, phi) in members.iter().enumerate() {
            let values: Vec<Complex64> = phi.iter().map(|p| Complex64::new(*p, 0.0)).collect();
            let file = format!("eigenvector_j{}_k{}.csv", j + 1, k + 1);
            ctx.artifact(&format!("eigenvector_j{}_k{}", j + 1, k + 1), &file, field_csv(&ygrid, &values).as_bytes())?;
        }
    }
    let ok = ctx.stages.spectrum.as_ref().is_some_and(|s| s.zero_mode_error.is_none());
    Ok(if ok { RunVerdict::Pass } else { RunVerdict::Fail })
}

fn separable_source(
    src: &SeparableSource,
    hop: &HOperator,
    dec: &SpectrumDecomposition,
    grid: &ProductGrid,
) -> Result<(Vec<Complex64>, Option<Vec<Complex64>>)> {
    let phi = |level: usize| -> Result<&Vec<f64>> {
        dec.eigenvectors
            .get(level)
            .and_then(|m| m.first())
            .ok_or_else(|| Error::InvalidParameter(format!("no discrete level {level} below V+")))
    };
    Ok(match src {
        SeparableSource::Zero => (vec![Complex64::default(); grid.len()], None),
        SeparableSource::Gaussian { c } => (
            grid.sample(|x, y| {
                let r2: f64 = x.iter().chain(y).map(|t| t * t).sum();
                Complex64::new((-c * r2).exp(), 0.0)
            }),
            None,
        ),
        SeparableSource::Product { x, level } => {
            let fx = x.eval_field(&grid.x)?;
            (grid.outer(&fx, phi(*level)?), None)
        }
        SeparableSource::Manufactured { x, levels, continuum } => {
            let fx = x.eval_field(&grid.x)?;
            let ny = grid.y.len();
            let mut profile = vec![0.0; ny];
            for &l in levels {
                for (p, q) in profile.iter_mut().zip(phi(l)?) {
                    *p += q;
                }
            }
            let mut yp = vec![0.0; grid.y.dim()];
            for (j, p) in profile.iter_mut().enumerate() {
                grid.y.point(j, &mut yp);
                let d2: f64 = yp.iter().enumerate().map(|(d, t)| if d == 0 { (t - 1.0).powi(2) } else { t * t }).sum();
                *p += continuum * (-d2).exp();
            }
            let ustar = grid.outer(&fx, &profile);
            let g = separable::apply_separable(&ustar, hop, grid)?;
            (g, Some(ustar))
        }
    })
}

fn solve_separable(ctx: &mut Ctx<'_>) -> Result<RunVerdict> {
    let (_, ygrid, hop, dec) = transverse(ctx)?;
    if ctx.stages.spectrum.as_ref().is_some_and(|s| s.zero_mode_error.is_some()) {
        return Ok(RunVerdict::Fail);
    }
    let config = ctx.config;
    let sc = &config.separable;
    let xgrid = Grid::new(&sc.x_grid())?;
    let grid = ProductGrid::new(xgrid, ygrid);
    let (g, ustar) = separable_source(&sc.source, &hop, &dec, &grid)?;
    let opts = SeparableOptions {
        alpha: sc.alpha,
        zero_threshold: config.solver.thresholds.zero,
        sphere_threshold: config.solver.thresholds.sphere,
        delta: sc.delta,
        sphere_resolution: config.solver.sphere_resolution,
    };
    let out = timed!(ctx, "solve_separable", separable::solve_full(&g, &hop, &dec, &grid, &opts))?;
    let proj = crate::channel::project_channels(&g, &dec, &grid)?;
    for c in &proj.channels {
        let name = format!("channel_j{}_k{}", c.level + 1, c.member + 1);
        ctx.artifact(&name, &format!("{name}.csv"), field_csv(&grid.x, &c.values).as_bytes())?;
    }
    let mut shape = vec![grid.x.points_per_axis(); grid.x.dim()];
    shape.extend(std::iter::repeat_n(grid.y.points_per_axis(), grid.y.dim()));
    let g_l2 = grid.l2_norm(&g)?;
    let mut summary = SeparableSummary {
        n: grid.x.dim(),
        m: grid.y.dim(),
        g_l2,
        residual_l2: None,
        channel_norms: Vec::new(),
        deltas: out.deltas.clone(),
        manufactured_error: None,
        failed_conditions: out.moments.failed(),
    };
    if let Some(sol) = &out.solution {
        let u = sol.total();
        summary.residual_l2 = Some(sol.residual_l2);
        summary.channel_norms = sol.channel_norms.clone();
        if let Some(exact) = &ustar {
            let diff: Vec<Complex64> = u.iter().zip(exact).map(|(a, b)| a - b).collect();
            summary.manufactured_error = Some(grid.l2_norm(&diff)? / grid.l2_norm(exact)?.max(f64::MIN_POSITIVE));
        }
        ctx.tensor("solution_bin", "solution.bin", &shape, &u)?;
        let mut csv = String::from("channel,norm\n");
        for c in &sol.channel_norms {
            writeln!(csv, "{},{}", c.channel, c.norm).unwrap();
        }
        ctx.artifact("channel_norms_csv", "channel_norms.csv", csv.as_bytes())?;
    }
    ctx.json("moments_json", "moments.json", &out.moments)?;
    ctx.json("weighted_json", "weighted.json", &out.weighted)?;
    let verdict = if out.solvable() { RunVerdict::Solvable } else { RunVerdict::NotSolvable };
    ctx.stages.moments = Some(out.moments);
    ctx.stages.weighted = Some(out.weighted);
    ctx.stages.separable = Some(summary);
    Ok(verdict)
}
