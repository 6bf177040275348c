//! Run configuration: a single JSON document with defaults for every field.
//! Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::genfourier::{BandLimit, ShellMode, TransformOptions};
use crate::grid::{GridSpec, QuadratureRule};
use crate::potential::PotentialSpec;
use crate::source::SourceSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    CheckPotential,
    ScatteringState,
    SolveH,
    Spectrum,
    SolveSeparable,
    Witness,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::CheckPotential => "check-potential",
            Self::ScatteringState => "scattering-state",
            Self::SolveH => "solve-h",
            Self::Spectrum => "spectrum",
            Self::SolveSeparable => "solve-separable",
            Self::Witness => "witness",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KGridConfig {
    /// The k-grid step is 2 pi / (oversample N h).
    pub oversample: usize,
}

impl Default for KGridConfig {
    fn default() -> Self {
        Self { oversample: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct YGridConfig {
    pub dim: usize,
    /// Half-width; defaults to where the transverse potential has settled.
    pub extent: Option<f64>,
    pub points_per_axis: usize,
}

impl Default for YGridConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            extent: None,
            points_per_axis: 160,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Sphere-restriction threshold for solve-h; defaults to 1e-6 ||f||_2.
    pub solvability: Option<f64>,
    /// Zero-channel moment threshold; defaults to 1e-6 ||g||_2.
    pub zero: Option<f64>,
    /// Negative-channel sphere threshold; defaults to 1e-6 ||g||_2.
    pub sphere: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            solvability: None,
            zero: None,
            sphere: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WitnessConfig {
    pub sigmas: Vec<f64>,
    /// Defaults to sqrt(a)/2, or 1 when a = 0.
    pub outer: Option<f64>,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        Self {
            sigmas: vec![0.05, 0.025, 0.0125, 0.00625],
            outer: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Spectral parameter of -Laplacian + V - a.
    pub a: f64,
    /// Wavevector for scattering-state.
    pub k: [f64; 3],
    pub gradient: bool,
    pub sigma: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub band: BandLimit,
    pub shells: ShellMode,
    pub sphere_resolution: usize,
    /// Hardy-Littlewood-Sobolev constant; defaults to the sharp value.
    pub c_hls: Option<f64>,
    pub thresholds: Thresholds,
    pub witness: WitnessConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            k: [0.0, 0.0, 1.0],
            gradient: false,
            sigma: None,
            tol: 1e-10,
            max_iter: 500,
            band: BandLimit::default(),
            shells: ShellMode::default(),
            sphere_resolution: 64,
            c_hls: None,
            thresholds: Thresholds::default(),
            witness: WitnessConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn transform(&self) -> TransformOptions {
        TransformOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            band: self.band,
            shells: self.shells,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneConfig {
    pub param: String,
    pub lo: f64,
    pub hi: f64,
    /// Eigenvalue index (ascending from 0, with multiplicity) driven to zero.
    pub target_index: usize,
    pub zero_tol: f64,
    pub richardson: bool,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            param: "v_plus".into(),
            lo: 0.5,
            hi: 1.5,
            target_index: 1,
            zero_tol: 1e-12,
            richardson: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub zero_tol: f64,
    pub cluster_tol: Option<f64>,
    pub margin: Option<f64>,
    pub tune: Option<TuneConfig>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            zero_tol: 1e-8,
            cluster_tol: None,
            margin: None,
            tune: Some(TuneConfig::default()),
        }
    }
}

/// Right-hand side on the product grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeparableSource {
    Zero,
    /// f(x) phi_level(y) for the first member of a discrete level.
    Product { x: SourceSpec, level: usize },
    /// L u* with u*(x, y) = f(x) (sum of phi_level(y) + continuum exp(-(y - 1)^2)).
    Manufactured { x: SourceSpec, levels: Vec<usize>, continuum: f64 },
    /// exp(-c (|x|^2 + |y|^2)).
    Gaussian { c: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparableConfig {
    /// Dimension n of the x-variable.
    pub n: usize,
    pub x_extent: f64,
    pub x_points: usize,
    pub alpha: f64,
    pub delta: Option<f64>,
    pub source: SeparableSource,
}

impl Default for SeparableConfig {
    fn default() -> Self {
        Self {
            n: 1,
            x_extent: 10.0,
            x_points: 128,
            alpha: 8.0,
            delta: None,
            source: SeparableSource::Manufactured {
                x: SourceSpec::gaussian(1.0, 1.0),
                levels: vec![0, 1],
                continuum: 0.3,
            },
        }
    }
}

impl SeparableConfig {
    pub fn x_grid(&self) -> GridSpec {
        GridSpec {
            dim: self.n,
            extent: self.x_extent,
            points_per_axis: self.x_points,
            rule: QuadratureRule::Midpoint,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub cache: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            cache: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Pipeline to run; the command line sets it.
    pub command: Option<Command>,
    pub x_grid: GridSpec,
    pub k_grid: KGridConfig,
    pub y_grid: YGridConfig,
    pub potential: PotentialSpec,
    pub source: SourceSpec,
    pub transverse_potential: PotentialSpec,
    pub solver: SolverConfig,
    pub spectrum: SpectrumConfig,
    pub separable: SeparableConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            x_grid: GridSpec::new(3, 5.0, 24),
            k_grid: KGridConfig::default(),
            y_grid: YGridConfig::default(),
            potential: PotentialSpec::gaussian(0.5, 1.0),
            source: SourceSpec::gaussian(1.0, 1.0),
            transverse_potential: PotentialSpec::poschl_teller(2.0, 1.0),
            solver: SolverConfig::default(),
            spectrum: SpectrumConfig::default(),
            separable: SeparableConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Short override keys and the dotted paths they stand for.
const ALIASES: &[(&str, &str)] = &[
    ("a", "solver.a"),
    ("sigma", "solver.sigma"),
    ("tol", "solver.tol"),
    ("n", "separable.n"),
    ("alpha", "separable.alpha"),
    ("delta", "separable.delta"),
    ("thresholds", "solver.thresholds"),
    ("threshold", "solver.thresholds.solvability"),
    ("grid", "x_grid"),
];

fn expand_alias(key: &str) -> String {
    let (head, tail) = match key.split_once('.') {
        Some((h, t)) => (h, Some(t)),
        None => (key, None),
    };
    match ALIASES.iter().find(|(a, _)| *a == head) {
        Some((_, full)) => match tail {
            Some(t) => format!("{full}.{t}"),
            None => full.to_string(),
        },
        None => key.to_string(),
    }
}

/// Parses an override value as JSON, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("empty component in override key `{path}`")));
        }
        let obj = match cur {
            Value::Object(m) => m,
            Value::Null => {
                *cur = Value::Object(Default::default());
                match cur {
                    Value::Object(m) => m,
                    _ => unreachable!(),
                }
            }
            _ => return Err(Error::Config(format!("override `{path}` descends into a non-object"))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Applies `key=value` overrides with dotted keys; values are JSON.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        for o in overrides {
            let o = o.as_ref().trim_start_matches("--");
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` must have the form key=value")))?;
            set_path(&mut value, &expand_alias(key), parse_value(raw))?;
        }
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
        assert_eq!(RunConfig::from_json("{}").unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_json(r#"{"solver": {"aa": 1}}"#), Err(Error::Config(_))));
        assert!(RunConfig::from_json(r#"{"potential": {"family": "gaussian", "params": {"beta": 1, "c": 1, "x": 0}}}"#).is_err());
        assert!(RunConfig::default().with_overrides(&["--solver.nope=1"]).is_err());
    }

    #[test]
    fn dotted_overrides_and_aliases() {
        let c = RunConfig::default()
            .with_overrides(&[
                "--solver.a=0.25",
                "--n=2",
                "--thresholds.zero=1e-9",
                "--potential.params.beta=0.7",
                "--output.dir=run1",
                "--grid.points_per_axis=16",
                "--command=\"solve-h\"",
            ])
            .unwrap();
        assert_eq!(c.solver.a, 0.25);
        assert_eq!(c.separable.n, 2);
        assert_eq!(c.solver.thresholds.zero, Some(1e-9));
        assert_eq!(c.potential, PotentialSpec::gaussian(0.7, 1.0));
        assert_eq!(c.output.dir, "run1");
        assert_eq!(c.x_grid.points_per_axis, 16);
        assert_eq!(c.command, Some(Command::SolveH));
        assert!(RunConfig::default().with_overrides(&["--solver.a"]).is_err());
    }
}
