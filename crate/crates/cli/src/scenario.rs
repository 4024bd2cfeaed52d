//! Scenario configs: a TOML file with top-level keys and at most one level
//! of nesting (`[params]`, `[fan]`, `[outputs]`). Loading applies defaults
//! and validates every field, so commands never see a half-formed scenario.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use rhotrace_core::builtin::{builtin_metric, MetricParams};
use rhotrace_core::geodesic::{Formulation, TraceLimit};
use rhotrace_core::metric::MetricField;

use crate::CliError;

pub const DEFAULT_H: f64 = 1e-3;
pub const DEFAULT_FAN_COUNT: usize = 64;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TOL_CHART: f64 = 1e-5;
pub const DEFAULT_TOL_ANGLE: f64 = 1e-4;

pub const METRIC_NAMES: [&str; 6] = [
    "euclidean",
    "sphere",
    "poincare_half_plane",
    "isotropic_index",
    "grid_index",
    "graded_interface",
];

/// Which formulations a command should run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormulationChoice {
    One(Formulation),
    Both,
}

impl FormulationChoice {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "both" => Ok(FormulationChoice::Both),
            other => other
                .parse::<Formulation>()
                .map(FormulationChoice::One)
                .map_err(|_| {
                    CliError::Config(format!(
                        "key `formulation`: expected alpha_form, christoffel or both, got `{other}`"
                    ))
                }),
        }
    }

    pub fn list(self) -> Vec<Formulation> {
        match self {
            FormulationChoice::One(f) => vec![f],
            FormulationChoice::Both => vec![Formulation::AlphaForm, Formulation::Christoffel],
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    metric: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    /// Grid file for `grid_index`, relative to the config file.
    grid: Option<String>,
    start: Vec<f64>,
    direction: Vec<f64>,
    formulation: Option<String>,
    h: Option<f64>,
    max_s: Option<f64>,
    max_r: Option<f64>,
    seed: Option<u64>,
    tol_chart: Option<f64>,
    tol_angle: Option<f64>,
    fan: Option<RawFan>,
    outputs: Option<RawOutputs>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFan {
    count: Option<usize>,
    /// Angular window (start, span) in radians; omitted = full circle.
    window: Option<[f64; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutputs {
    csv: Option<String>,
    svg: Option<String>,
}

/// A fully validated run description with all defaults applied.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub metric_name: String,
    pub params: MetricParams,
    pub start: Vec<f64>,
    pub direction: Vec<f64>,
    pub formulation: FormulationChoice,
    pub h: f64,
    pub limit: TraceLimit,
    pub fan_count: usize,
    pub fan_window: Option<(f64, f64)>,
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub seed: u64,
    pub tol_chart: f64,
    pub tol_angle: f64,
}

fn key_err(key: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("key `{key}`: {why}"))
}

fn finite_positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(key_err(key, format!("must be a positive finite number, got {v}")))
    }
}

fn finite_vector(key: &str, v: &[f64]) -> Result<(), CliError> {
    if v.is_empty() {
        return Err(key_err(key, "must not be empty"));
    }
    if let Some(bad) = v.iter().find(|c| !c.is_finite()) {
        return Err(key_err(key, format!("contains a non-finite entry {bad}")));
    }
    Ok(())
}

impl Scenario {
    /// Loads and validates a config file. Grid paths resolve relative to the
    /// config so scenario directories stay relocatable.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let raw: RawScenario = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_raw(raw, path.parent().unwrap_or(Path::new(".")))
    }

    fn from_raw(raw: RawScenario, config_dir: &Path) -> Result<Self, CliError> {
        if !METRIC_NAMES.contains(&raw.metric.as_str()) {
            return Err(key_err(
                "metric",
                format!("unknown metric `{}`; known: {}", raw.metric, METRIC_NAMES.join(", ")),
            ));
        }
        for (k, v) in &raw.params {
            if !v.is_finite() {
                return Err(key_err(&format!("params.{k}"), format!("non-finite value {v}")));
            }
        }
        let grid_file = match (&raw.grid, raw.metric.as_str()) {
            (Some(rel), "grid_index") => Some(config_dir.join(rel)),
            (Some(_), other) => {
                return Err(key_err("grid", format!("only `grid_index` takes a grid file, metric is `{other}`")));
            }
            (None, "grid_index") => {
                return Err(key_err("grid", "metric `grid_index` needs a grid file"));
            }
            (None, _) => None,
        };

        finite_vector("start", &raw.start)?;
        finite_vector("direction", &raw.direction)?;
        if raw.start.len() != raw.direction.len() {
            return Err(key_err(
                "direction",
                format!("length {} does not match start length {}", raw.direction.len(), raw.start.len()),
            ));
        }
        if raw.direction.iter().all(|c| c.abs() < 1e-300) {
            return Err(key_err("direction", "must not be the zero vector"));
        }

        let formulation = match &raw.formulation {
            Some(s) => FormulationChoice::parse(s)?,
            None => FormulationChoice::One(Formulation::AlphaForm),
        };
        let h = finite_positive("h", raw.h.unwrap_or(DEFAULT_H))?;
        let limit = match (raw.max_s, raw.max_r) {
            (Some(s), None) => TraceLimit::MaxS(finite_positive("max_s", s)?),
            (None, Some(r)) => TraceLimit::MaxR(finite_positive("max_r", r)?),
            (None, None) => {
                return Err(key_err("max_s", "exactly one of `max_s` / `max_r` is required, found neither"));
            }
            (Some(_), Some(_)) => {
                return Err(key_err("max_s", "exactly one of `max_s` / `max_r` is required, found both"));
            }
        };

        let (fan_count, fan_window) = match &raw.fan {
            None => (DEFAULT_FAN_COUNT, None),
            Some(f) => {
                let count = f.count.unwrap_or(DEFAULT_FAN_COUNT);
                if count < 3 {
                    return Err(key_err("fan.count", format!("need at least 3 rays, got {count}")));
                }
                let window = match f.window {
                    None => None,
                    Some([start, span]) => {
                        if !start.is_finite() {
                            return Err(key_err("fan.window", format!("non-finite start {start}")));
                        }
                        finite_positive("fan.window", span)?;
                        Some((start, span))
                    }
                };
                (count, window)
            }
        };

        let (csv, svg) = match &raw.outputs {
            None => (None, None),
            Some(o) => (
                o.csv.as_ref().map(PathBuf::from),
                o.svg.as_ref().map(PathBuf::from),
            ),
        };

        Ok(Scenario {
            metric_name: raw.metric,
            params: MetricParams {
                numbers: raw.params,
                grid_file,
            },
            start: raw.start,
            direction: raw.direction,
            formulation,
            h,
            limit,
            fan_count,
            fan_window,
            csv,
            svg,
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
            tol_chart: finite_positive("tol_chart", raw.tol_chart.unwrap_or(DEFAULT_TOL_CHART))?,
            tol_angle: finite_positive("tol_angle", raw.tol_angle.unwrap_or(DEFAULT_TOL_ANGLE))?,
        })
    }

    /// Builds the metric field this scenario names. Bad names, parameters or
    /// grid files are config errors; they happen before any tracing.
    pub fn metric(&self) -> Result<MetricField, CliError> {
        let built = if self.metric_name == "graded_interface" {
            // Outside the shared name dispatch: the interface medium is the
            // refraction apparatus, exposed to scenario files so fans and
            // comparisons can run on the same geometry as `snell`.
            interface_from_params(&self.params)
        } else {
            builtin_metric(&self.metric_name, &self.params)
        };
        built.map_err(|e| CliError::Config(format!("metric `{}`: {e}", self.metric_name)))
    }

    pub fn limit_value(&self) -> f64 {
        match self.limit {
            TraceLimit::MaxS(v) | TraceLimit::MaxR(v) => v,
        }
    }
}

/// Two half-spaces of constant index joined by a smooth profile; `n1` and
/// `n2` are required, the blend width defaults to 0.01.
fn interface_from_params(params: &MetricParams) -> rhotrace_core::Result<MetricField> {
    use rhotrace_core::Error as CoreError;
    for key in params.numbers.keys() {
        if !["n1", "n2", "width"].contains(&key.as_str()) {
            return Err(CoreError::InvalidParam {
                name: key.clone(),
                reason: "graded_interface takes n1, n2 and width".into(),
            });
        }
    }
    let req = |key: &str| {
        params.numbers.get(key).copied().ok_or_else(|| CoreError::MissingParam {
            metric: "graded_interface".into(),
            key: key.into(),
        })
    };
    let width = params.numbers.get("width").copied().unwrap_or(0.01);
    rhotrace_core::builtin::graded_interface(req("n1")?, req("n2")?, width)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Scenario, CliError> {
        let raw: RawScenario = toml::from_str(text).expect("test configs are valid toml");
        Scenario::from_raw(raw, Path::new("/configs"))
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let sc = parse(
            "metric = \"euclidean\"\nstart = [0.0, 0.0]\ndirection = [1.0, 0.0]\nmax_r = 5.0\n",
        )
        .unwrap();
        assert_eq!(sc.h, DEFAULT_H);
        assert_eq!(sc.formulation, FormulationChoice::One(Formulation::AlphaForm));
        assert_eq!(sc.fan_count, DEFAULT_FAN_COUNT);
        assert_eq!(sc.seed, DEFAULT_SEED);
        assert_eq!(sc.limit, TraceLimit::MaxR(5.0));
        assert!(sc.csv.is_none());
        sc.metric().unwrap();
    }

    #[test]
    fn zero_step_is_rejected_naming_the_key() {
        let err = parse(
            "metric = \"euclidean\"\nstart = [0.0]\ndirection = [1.0]\nmax_r = 1.0\nh = 0.0\n",
        )
        .unwrap_err();
        match err {
            CliError::Config(msg) => assert!(msg.contains("`h`"), "{msg}"),
            other => panic!("wrong class: {other:?}"),
        }
    }

    #[test]
    fn limit_must_be_exactly_one_of_the_two() {
        for body in [
            "metric = \"euclidean\"\nstart = [0.0]\ndirection = [1.0]\n",
            "metric = \"euclidean\"\nstart = [0.0]\ndirection = [1.0]\nmax_r = 1.0\nmax_s = 1.0\n",
        ] {
            assert!(matches!(parse(body), Err(CliError::Config(_))));
        }
    }

    #[test]
    fn grid_paths_resolve_against_the_config_directory() {
        let sc = parse(
            "metric = \"grid_index\"\ngrid = \"lens.grid\"\nstart = [0.5, 0.5]\ndirection = [1.0, 0.0]\nmax_s = 1.0\n",
        )
        .unwrap();
        assert_eq!(sc.params.grid_file.as_deref(), Some(Path::new("/configs/lens.grid")));
        // grid file for a non-grid metric is refused
        assert!(parse(
            "metric = \"euclidean\"\ngrid = \"lens.grid\"\nstart = [0.0]\ndirection = [1.0]\nmax_r = 1.0\n",
        )
        .is_err());
    }

    #[test]
    fn unknown_keys_and_metrics_are_config_errors() {
        let raw: Result<RawScenario, _> =
            toml::from_str("metric = \"euclidean\"\nstart = [0.0]\ndirection = [1.0]\nmax_r = 1.0\nstep = 0.1\n");
        assert!(raw.is_err(), "unknown key must not parse");
        assert!(parse(
            "metric = \"torus\"\nstart = [0.0]\ndirection = [1.0]\nmax_r = 1.0\n"
        )
        .is_err());
    }

    #[test]
    fn interface_scenarios_build_their_medium() {
        let sc = parse(
            "metric = \"graded_interface\"\nstart = [0.0, -0.4]\ndirection = [0.5, 0.8660254037844386]\nmax_r = 0.9\n\n[params]\nn1 = 1.0\nn2 = 1.5\n",
        )
        .unwrap();
        let m = sc.metric().unwrap();
        // defaulted width 0.01: deep below the blend the index is n1
        let rho = m.eval(&[0.0, -0.4]).unwrap();
        assert!((rho.get(0, 0) - 1.0).abs() < 1e-12);
        // n2 is required
        let missing = parse(
            "metric = \"graded_interface\"\nstart = [0.0, -0.4]\ndirection = [0.0, 1.0]\nmax_r = 0.9\n\n[params]\nn1 = 1.0\n",
        )
        .unwrap();
        assert!(missing.metric().is_err());
    }

    #[test]
    fn formulation_spellings() {
        assert_eq!(
            FormulationChoice::parse("christoffel").unwrap(),
            FormulationChoice::One(Formulation::Christoffel)
        );
        assert_eq!(FormulationChoice::parse("both").unwrap(), FormulationChoice::Both);
        assert!(FormulationChoice::parse("euler").is_err());
        assert_eq!(FormulationChoice::Both.list().len(), 2);
    }
}
