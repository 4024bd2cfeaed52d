//! Subcommand implementations. Every command produces a [`Report`] whose
//! text is deterministic; artifacts (CSV, SVG, report file) are written
//! before returning so a failing check still leaves its evidence on disk.

use std::path::{Path, PathBuf};

use rhotrace_core::error::Error as CoreError;
use rhotrace_core::geodesic::{
    compare_traces, convergence_study, trace, Formulation, GeodesicTrace, TraceLimit,
};
use rhotrace_core::wavefront::{
    equal_increment_check, gradient_alignment_check, huygens_tangency_check, level_set,
    pair_turning_rate, trace_fan, GeodesicFan,
};

use crate::emit::{csv_for_rays, svg_for_figure, write_text, Figure, Report};
use crate::scenario::{FormulationChoice, Scenario};
use crate::validation::{self, snell_oracle_degrees, snell_refraction_degrees};
use crate::CliError;

/// What a finished command hands back to `run`: the report to print and,
/// when a validation ran and missed its tolerance, the failure note that
/// turns the exit code into 1.
pub struct CommandOutcome {
    pub report: Report,
    pub failed_check: Option<String>,
}

impl CommandOutcome {
    fn ok(report: Report) -> Self {
        Self {
            report,
            failed_check: None,
        }
    }

    fn failed(report: Report, why: impl Into<String>) -> Self {
        Self {
            report,
            failed_check: Some(why.into()),
        }
    }
}

/// Flag-level overrides shared by the scenario-driven commands.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub h: Option<f64>,
    pub formulation: Option<String>,
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

fn fmt6(v: f64) -> String {
    format!("{v:.6e}")
}

fn fmt_point(x: &[f64]) -> String {
    let inner: Vec<String> = x.iter().map(|c| fmt6(*c)).collect();
    format!("[{}]", inner.join(", "))
}

pub fn load_scenario(config: &Path, over: &Overrides) -> Result<Scenario, CliError> {
    let mut sc = Scenario::load(config)?;
    if let Some(h) = over.h {
        if !(h.is_finite() && h > 0.0) {
            return Err(CliError::Config(format!(
                "flag --h: must be a positive finite number, got {h}"
            )));
        }
        sc.h = h;
    }
    if let Some(f) = &over.formulation {
        sc.formulation = FormulationChoice::parse(f)?;
    }
    if over.csv.is_some() {
        sc.csv = over.csv.clone();
    }
    if over.svg.is_some() {
        sc.svg = over.svg.clone();
    }
    Ok(sc)
}

fn single_formulation(sc: &Scenario, command: &str) -> Result<Formulation, CliError> {
    match sc.formulation {
        FormulationChoice::One(f) => Ok(f),
        FormulationChoice::Both => Err(CliError::Config(format!(
            "`{command}` runs one formulation per fan; set formulation to alpha_form or christoffel"
        ))),
    }
}

fn fan_limit(sc: &Scenario, command: &str) -> Result<f64, CliError> {
    match sc.limit {
        TraceLimit::MaxS(s) => Ok(s),
        TraceLimit::MaxR(_) => Err(CliError::Config(format!(
            "`{command}` builds equal-S wavefronts; the scenario must set max_s, not max_r"
        ))),
    }
}

fn scenario_echo(report: &mut Report, sc: &Scenario) {
    report.set("metric", &sc.metric_name);
    report.set("start", fmt_point(&sc.start));
    report.set("direction", fmt_point(&sc.direction));
    report.set("h", fmt6(sc.h));
    let (kind, v) = match sc.limit {
        TraceLimit::MaxS(v) => ("max_s", v),
        TraceLimit::MaxR(v) => ("max_r", v),
    };
    report.set("limit", format!("{kind} = {}", fmt6(v)));
}

fn write_scenario_artifacts(
    sc: &Scenario,
    rays: &[&GeodesicTrace],
    figure: Option<&Figure>,
) -> Result<(), CliError> {
    if let Some(path) = &sc.csv {
        write_text(path, &csv_for_rays(rays))?;
    }
    if let Some(path) = &sc.svg {
        match figure {
            Some(fig) => write_text(path, &svg_for_figure(fig))?,
            None => {
                return Err(CliError::Config(
                    "svg output needs a two-dimensional scenario".into(),
                ))
            }
        }
    }
    Ok(())
}

fn finish(report: Report, report_path: Option<&Path>) -> Result<Report, CliError> {
    if let Some(path) = report_path {
        write_text(path, &report.to_text())?;
    }
    Ok(report)
}

/// `trace`: one geodesic per configured formulation, CSV/SVG on request.
pub fn trace_command(
    config: &Path,
    over: &Overrides,
    report_path: Option<&Path>,
) -> Result<CommandOutcome, CliError> {
    let sc = load_scenario(config, over)?;
    let m = sc.metric()?;
    let mut report = Report::new(format!("trace {}", config.display()));
    scenario_echo(&mut report, &sc);
    let mut traces = Vec::new();
    for form in sc.formulation.list() {
        let t = trace(&m, &sc.start, &sc.direction, form, sc.h, sc.limit)?;
        let prefix = format!("trace.{}", form.name());
        report.set(&format!("{prefix}.samples"), t.samples.len());
        report.set(&format!("{prefix}.end"), fmt_point(&t.end().x));
        report.set(&format!("{prefix}.S_end"), fmt6(t.s_end()));
        report.set(&format!("{prefix}.r_end"), fmt6(t.r_end()));
        if let Some(exit) = &t.truncated {
            report.set(&format!("{prefix}.truncated_at"), fmt_point(exit));
        }
        traces.push(t);
    }
    let refs: Vec<&GeodesicTrace> = traces.iter().collect();
    let figure = (m.dim() == 2).then(|| {
        let mut fig = Figure::default();
        for t in &refs {
            fig.push_trace(t);
        }
        fig.dots.push([sc.start[0], sc.start[1]]);
        fig
    });
    write_scenario_artifacts(&sc, &refs, figure.as_ref())?;
    report.set("status", "ok");
    Ok(CommandOutcome::ok(finish(report, report_path)?))
}

/// `compare`: both formulations on one scenario, deviation against the
/// scenario tolerances, optional step-halving study.
pub fn compare_command(
    config: &Path,
    over: &Overrides,
    study: bool,
    report_path: Option<&Path>,
) -> Result<CommandOutcome, CliError> {
    let mut sc = load_scenario(config, over)?;
    sc.formulation = FormulationChoice::Both;
    let m = sc.metric()?;
    let mut report = Report::new(format!("compare {}", config.display()));
    scenario_echo(&mut report, &sc);
    let a = trace(&m, &sc.start, &sc.direction, Formulation::AlphaForm, sc.h, sc.limit)?;
    let b = trace(&m, &sc.start, &sc.direction, Formulation::Christoffel, sc.h, sc.limit)?;
    let dev = compare_traces(&a, &b)?;
    report.set("deviation.chart", fmt6(dev.max_chart_distance));
    report.set("deviation.angle", fmt6(dev.max_tangent_angle));
    report.set("deviation.S_compared_to", fmt6(dev.s_hi));
    report.set("deviation.points", dev.compared);
    report.set("tolerance.chart", fmt6(sc.tol_chart));
    report.set("tolerance.angle", fmt6(sc.tol_angle));
    if study {
        let ladder = [4.0 * sc.h, 2.0 * sc.h, sc.h];
        let st = convergence_study(&m, &sc.start, &sc.direction, sc.limit, &ladder)?;
        report.set("study", st.to_string());
    }
    let refs = [&a, &b];
    let figure = (m.dim() == 2).then(|| {
        let mut fig = Figure::default();
        fig.push_trace(&a);
        fig.push_trace(&b);
        fig.dots.push([sc.start[0], sc.start[1]]);
        fig
    });
    write_scenario_artifacts(&sc, &refs, figure.as_ref())?;
    let pass = dev.max_chart_distance <= sc.tol_chart && dev.max_tangent_angle <= sc.tol_angle;
    report.set("status", if pass { "pass" } else { "fail" });
    let report = finish(report, report_path)?;
    if pass {
        Ok(CommandOutcome::ok(report))
    } else {
        Ok(CommandOutcome::failed(
            report,
            format!(
                "formulations deviate: chart {} (tol {}), angle {} (tol {})",
                fmt6(dev.max_chart_distance),
                fmt6(sc.tol_chart),
                fmt6(dev.max_tangent_angle),
                fmt6(sc.tol_angle)
            ),
        ))
    }
}

fn build_fan(sc: &Scenario, command: &str) -> Result<GeodesicFan, CliError> {
    let m = sc.metric()?;
    if m.dim() != 2 {
        return Err(CliError::Config(format!(
            "`{command}` needs a two-dimensional metric, `{}` has dimension {}",
            sc.metric_name,
            m.dim()
        )));
    }
    let form = single_formulation(sc, command)?;
    let max_s = fan_limit(sc, command)?;
    Ok(trace_fan(&m, &sc.start, sc.fan_count, form, sc.h, max_s, sc.fan_window)?)
}

fn fan_echo(report: &mut Report, fan: &GeodesicFan) {
    report.set("fan.count", fan.count());
    let flagged = fan.flagged();
    report.set(
        "fan.flagged",
        if flagged.is_empty() {
            "none".to_string()
        } else {
            flagged.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
        },
    );
    let counts: Vec<String> = fan.traces.iter().map(|t| t.samples.len().to_string()).collect();
    report.set("fan.samples", counts.join(" "));
}

/// `fan`: a fan of geodesics from the scenario start.
pub fn fan_command(
    config: &Path,
    over: &Overrides,
    report_path: Option<&Path>,
) -> Result<CommandOutcome, CliError> {
    let sc = load_scenario(config, over)?;
    let fan = build_fan(&sc, "fan")?;
    let mut report = Report::new(format!("fan {}", config.display()));
    scenario_echo(&mut report, &sc);
    fan_echo(&mut report, &fan);
    let refs: Vec<&GeodesicTrace> = fan.traces.iter().collect();
    let mut fig = Figure::default();
    for t in &refs {
        fig.push_trace(t);
    }
    fig.dots.push([sc.start[0], sc.start[1]]);
    write_scenario_artifacts(&sc, &refs, Some(&fig))?;
    report.set("status", "ok");
    Ok(CommandOutcome::ok(finish(report, report_path)?))
}

/// Check-phase errors talk about the user's S choices or fan density, so
/// they surface as usage errors rather than runtime faults.
fn usage_err(e: CoreError) -> CliError {
    CliError::Config(e.to_string())
}

/// `wavefront`: fan plus the level-set checks between two wavefronts.
#[allow(clippy::too_many_arguments)]
pub fn wavefront_command(
    config: &Path,
    over: &Overrides,
    s1: f64,
    s2: f64,
    extra_levels: &[f64],
    discs: bool,
    report_path: Option<&Path>,
) -> Result<CommandOutcome, CliError> {
    let sc = load_scenario(config, over)?;
    let m = sc.metric()?;
    let fan = build_fan(&sc, "wavefront")?;
    let mut report = Report::new(format!("wavefront {}", config.display()));
    scenario_echo(&mut report, &sc);
    fan_echo(&mut report, &fan);
    report.set("S1", fmt6(s1));
    report.set("S2", fmt6(s2));

    let increment_dev = equal_increment_check(&fan, s1, s2).map_err(usage_err)?;
    let increment_bound = 4.0
        * fan
            .traces
            .iter()
            .flat_map(|t| t.alphas.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max)
        * fan.h;
    report.set("increment.deviation", fmt6(increment_dev));
    report.set("increment.bound", fmt6(increment_bound));

    let alignment = gradient_alignment_check(&m, &fan, s1).map_err(usage_err)?;
    report.set("alignment.max_angle", fmt6(alignment));

    let hug = huygens_tangency_check(&fan, s1, s2).map_err(usage_err)?;
    report.set("huygens.tol", fmt6(hug.tol));
    report.set("huygens.alpha_max", fmt6(hug.alpha_max));
    report.set("huygens.kappa_max", fmt6(hug.kappa_max));
    report.set("huygens.penetrations", hug.penetrations);
    report.set("huygens.tangencies", format!("{} of {}", hug.tangencies, hug.rays));
    report.set("huygens.min_clearance", fmt6(hug.min_clearance));
    report.set("huygens.max_own_gap", fmt6(hug.max_own_gap));
    report.set("huygens.passed", hug.passed);

    // figure: rays, the two wavefronts, any extra levels, optionally discs
    let mut fig = Figure::default();
    for t in &fan.traces {
        fig.push_trace(t);
    }
    fig.dots.push([sc.start[0], sc.start[1]]);
    let mut level_values = vec![s1, s2];
    level_values.extend_from_slice(extra_levels);
    let mut inner_level = None;
    for (i, &s) in level_values.iter().enumerate() {
        let level = level_set(&fan, s).map_err(usage_err)?;
        fig.levels
            .push(level.points.iter().map(|p| [p[0], p[1]]).collect());
        fig.closed_levels.push(level.closed);
        if i == 0 {
            inner_level = Some(level);
        }
    }
    if discs {
        let inner = inner_level.as_ref().expect("s1 level extracted above");
        for (p, &a) in inner.points.iter().zip(&inner.alphas) {
            fig.discs.push(([p[0], p[1]], (s2 - s1) / a));
        }
    }
    let refs: Vec<&GeodesicTrace> = fan.traces.iter().collect();
    write_scenario_artifacts(&sc, &refs, Some(&fig))?;

    let mut failures = Vec::new();
    if !hug.passed {
        failures.push(format!(
            "tangency check failed: {} penetrations, {} of {} tangencies",
            hug.penetrations, hug.tangencies, hug.rays
        ));
    }
    if increment_dev > increment_bound {
        failures.push(format!(
            "equal-increment deviation {} above bound {}",
            fmt6(increment_dev),
            fmt6(increment_bound)
        ));
    }
    report.set("status", if failures.is_empty() { "pass" } else { "fail" });
    let report = finish(report, report_path)?;
    if failures.is_empty() {
        Ok(CommandOutcome::ok(report))
    } else {
        Ok(CommandOutcome::failed(report, failures.join("; ")))
    }
}

/// `pairs`: the paired-probe turning-rate estimate at the scenario start,
/// repeated over jointly halved probe scales.
pub fn pairs_command(
    config: &Path,
    over: &Overrides,
    lambda: f64,
    dr: f64,
    halvings: usize,
    report_path: Option<&Path>,
) -> Result<CommandOutcome, CliError> {
    let sc = load_scenario(config, over)?;
    let m = sc.metric()?;
    for (name, v) in [("--lambda", lambda), ("--dr", dr)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(CliError::Config(format!(
                "flag {name}: must be a positive finite number, got {v}"
            )));
        }
    }
    let mut report = Report::new(format!("pairs {}", config.display()));
    scenario_echo(&mut report, &sc);
    for k in 0..=halvings {
        let f = (1u64 << k) as f64;
        let est = pair_turning_rate(&m, &sc.start, &sc.direction, lambda / f, dr / f)
            .map_err(usage_err)?;
        report.set(&format!("pair.{k}"), est);
    }
    report.set("status", "ok");
    Ok(CommandOutcome::ok(finish(report, report_path)?))
}

/// `snell`: refraction through a smoothed index interface, measured against
/// the closed-form refraction angle under one or both formulations.
#[allow(clippy::too_many_arguments)]
pub fn snell_command(
    n1: f64,
    n2: f64,
    angle_deg: f64,
    width: f64,
    h: f64,
    formulation: &str,
    tol_deg: f64,
    report_path: Option<&Path>,
) -> Result<CommandOutcome, CliError> {
    for (name, v) in [
        ("--n1", n1),
        ("--n2", n2),
        ("--width", width),
        ("--h", h),
        ("--tol-deg", tol_deg),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(CliError::Config(format!(
                "flag {name}: must be a positive finite number, got {v}"
            )));
        }
    }
    if !(angle_deg > 0.0 && angle_deg < 90.0) {
        return Err(CliError::Config(format!(
            "flag --angle-deg: incidence must lie strictly between 0 and 90 degrees, got {angle_deg}"
        )));
    }
    let oracle = snell_oracle_degrees(n1, n2, angle_deg).ok_or_else(|| {
        CliError::Config(format!(
            "total internal reflection: sin({angle_deg} deg) * {n1} / {n2} exceeds 1, no refracted ray"
        ))
    })?;
    let choice = FormulationChoice::parse(formulation)?;
    let mut report = Report::new("snell");
    report.set("n1", fmt6(n1));
    report.set("n2", fmt6(n2));
    report.set("incidence_deg", fmt6(angle_deg));
    report.set("width", fmt6(width));
    report.set("h", fmt6(h));
    report.set("oracle_deg", fmt6(oracle));
    let mut worst: f64 = 0.0;
    for form in choice.list() {
        let measured = snell_refraction_degrees(n1, n2, angle_deg, width, h, form)?;
        report.set(&format!("refracted_deg.{}", form.name()), fmt6(measured));
        worst = worst.max((measured - oracle).abs());
    }
    report.set("max_error_deg", fmt6(worst));
    report.set("tolerance_deg", fmt6(tol_deg));
    let pass = worst <= tol_deg;
    report.set("status", if pass { "pass" } else { "fail" });
    let report = finish(report, report_path)?;
    if pass {
        Ok(CommandOutcome::ok(report))
    } else {
        Ok(CommandOutcome::failed(
            report,
            format!("refracted angle off the closed form by {} deg (tol {})", fmt6(worst), fmt6(tol_deg)),
        ))
    }
}

/// `frames`: the randomized frame-algebra battery.
pub fn frames_command(
    seed: u64,
    metrics: usize,
    report_path: Option<&Path>,
) -> Result<CommandOutcome, CliError> {
    if metrics == 0 {
        return Err(CliError::Config("flag --metrics: need at least one metric".into()));
    }
    let b = validation::frames_battery(seed, metrics)?;
    let mut report = Report::new("frames");
    report.set("seed", seed);
    report.set("metrics", metrics);
    report.set("max.metric_round_trip", fmt6(b.metric_round_trip));
    report.set("max.displacement_round_trip", fmt6(b.displacement_round_trip));
    report.set("max.inverse_identity", fmt6(b.inverse_identity));
    report.set("max.rotation_drift", fmt6(b.rotation_drift));
    let pass = b.passed();
    report.set("status", if pass { "pass" } else { "fail" });
    let report = finish(report, report_path)?;
    if pass {
        Ok(CommandOutcome::ok(report))
    } else {
        Ok(CommandOutcome::failed(report, "frame identities out of tolerance"))
    }
}

/// `validate`: the acceptance battery, one PASS/FAIL line per criterion.
pub fn validate_command(seed: u64, report_path: Option<&Path>) -> Result<CommandOutcome, CliError> {
    let outcomes = validation::run_all(seed);
    let mut report = Report::new("validate");
    report.set("seed", seed);
    let mut fails = Vec::new();
    for o in &outcomes {
        report.set(
            &format!("criterion.{}", o.index),
            format!("{} | {} | {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail),
        );
        if !o.passed {
            fails.push(o.index.to_string());
        }
    }
    let pass = fails.is_empty();
    report.set("status", if pass { "pass" } else { "fail" });
    let report = finish(report, report_path)?;
    if pass {
        Ok(CommandOutcome::ok(report))
    } else {
        Ok(CommandOutcome::failed(
            report,
            format!("criteria failed: {}", fails.join(", ")),
        ))
    }
}
