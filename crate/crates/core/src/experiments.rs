//! Experiment drivers behind the command-line subcommands. Each driver
//! reads an [`ExperimentConfig`], runs its solves, and writes CSV, JSON and
//! SVG reports plus a manifest through one [`ReportWriter`].

use std::f64::consts::{FRAC_PI_2, TAU};
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::boundary_layer::{
    boundary_layer_limit_with_solution, decay_points, phi_star_profile, shift_periodicity_defect, BoundaryLayerResult,
    PhiStarProfile,
};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::fields::{BoundaryData, PeriodicFieldExpr, Phase};
use crate::homogenization::{epsilon_refinement_study, homogenize_linear, EffectiveMap, EpsilonStudyOptions};
use crate::interp::InterpKind;
use crate::lattice::{make_rational_direction, RationalDirection};
use crate::operators::validate_operator;
use crate::report::{fmt_f64, render_svg, CsvTable, Panel, ReportWriter, RunManifest, Series};
use crate::second_cell::{
    approach_angle_sweep, continuity_sweep, directional_limit, eta_independence_check, gap_certificate,
    transverse_basis, EffectiveOperator, PredictionSetup, Provenance, SecondCellOptions,
};
use crate::strip::{solve, StripOperator, StripProblem, StripSolution, TopBoundary};

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Human-readable lines for the terminal.
    pub summary: Vec<String>,
    /// False when a height ladder ran out before the boundary layer settled.
    pub converged: bool,
    pub manifest: RunManifest,
}

/// Runs `kind` with `cfg`, writing every report under `out`.
pub fn run(cfg: &ExperimentConfig, kind: ExperimentKind, out: &Path, threads: usize) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut writer = ReportWriter::new(out)?;
    writer.write_text("config.toml", &cfg.to_toml()?)?;
    let (summary, converged) = match kind {
        ExperimentKind::CellSolve => cmd_cell_solve(cfg, &mut writer)?,
        ExperimentKind::PhiStar => cmd_phi_star(cfg, &mut writer)?,
        ExperimentKind::SecondCell => cmd_second_cell(cfg, &mut writer)?,
        ExperimentKind::Homogenize => cmd_homogenize(cfg, &mut writer)?,
        ExperimentKind::Sweep => cmd_sweep(cfg, &mut writer)?,
        ExperimentKind::DiscontinuityDemo => cmd_discontinuity_demo(cfg, &mut writer)?,
        ExperimentKind::DecayFit => cmd_decay_fit(cfg, &mut writer)?,
    };
    let manifest = writer.finish(kind.name(), &cfg.hash()?, cfg.seed, threads)?;
    Ok(RunOutcome {
        summary,
        converged,
        manifest,
    })
}

type DriverOutput = Result<(Vec<String>, bool)>;

#[derive(Debug, Serialize)]
struct ProblemSummary {
    direction: Vec<i64>,
    shift: f64,
    height: f64,
    h: f64,
    period: f64,
    top: TopBoundary,
    operator_sha256: String,
    nodes: usize,
}

impl ProblemSummary {
    fn of(sol: &StripSolution) -> Self {
        let p = &sol.problem;
        Self {
            direction: p.xi.xi.clone(),
            shift: p.shift,
            height: p.height,
            h: p.h,
            period: p.period,
            top: p.top.clone(),
            operator_sha256: p.operator.fingerprint(),
            nodes: sol.grid.n_nodes(),
        }
    }
}

fn first_direction(cfg: &ExperimentConfig) -> Result<RationalDirection> {
    cfg.rational_directions()?
        .into_iter()
        .next()
        .ok_or_else(|| Error::Config("this experiment needs one rational direction".into()))
}

fn direction_tag(xi: &RationalDirection) -> String {
    xi.xi.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("_")
}

fn slices_csv(sol: &StripSolution) -> String {
    let c = sol.components();
    let mut header = vec!["z".to_string()];
    header.extend((1..=c).map(|k| format!("mean_u{k}")));
    header.push("oscillation".into());
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = CsvTable::new(&refs);
    for k in 0..sol.vertical_slices() {
        let (mean, osc) = sol.slice_stats(k);
        let mut row = vec![sol.slice_height(k)];
        row.extend(mean);
        row.push(osc);
        t.push_numbers(&row);
    }
    t.render()
}

fn decay_panel(sol: &StripSolution, result: &BoundaryLayerResult) -> Panel {
    let pts: Vec<(f64, f64)> = (0..sol.vertical_slices())
        .map(|k| (sol.slice_height(k), sol.slice_stats(k).1))
        .filter(|p| p.1 > 0.0)
        .collect();
    let mut panel = Panel::new("slice oscillation", "height z", "osc")
        .with_log_y()
        .with_series(Series::markers("computed", pts, "#1f77b4"));
    if let Some(fit) = result.decay.as_ref().filter(|f| !f.degenerate) {
        let zmax = fit.points.last().map_or(0.0, |p| p.0);
        let line: Vec<(f64, f64)> = (0..=32)
            .map(|j| {
                let z = zmax * j as f64 / 32.0;
                (z, fit.amplitude * (-fit.rate * z).exp())
            })
            .collect();
        panel = panel.with_series(Series::line(&format!("fit rate {:.4}", fit.rate), line, "#d62728"));
    }
    panel
}

fn cmd_cell_solve(cfg: &ExperimentConfig, w: &mut ReportWriter) -> DriverOutput {
    let xi = first_direction(cfg)?;
    let problem = cfg.strip_problem(&xi)?;
    if cfg.numerics.height.is_some() {
        let sol = w.time("strip solve", || solve(&problem))?;
        w.write_text("solution.csv", &sol.to_csv())?;
        w.write_text("slices.csv", &slices_csv(&sol))?;
        #[derive(Serialize)]
        struct Single {
            problem: ProblemSummary,
            method: &'static str,
            iterations: usize,
            residual_norm: f64,
            energy: Option<f64>,
            top_mean: Vec<f64>,
            top_oscillation: f64,
            linf_ratio: f64,
        }
        let out = Single {
            problem: ProblemSummary::of(&sol),
            method: sol.method,
            iterations: sol.iterations,
            residual_norm: sol.residual_norm,
            energy: sol.energy,
            top_mean: sol.top_mean(),
            top_oscillation: sol.top_oscillation(),
            linf_ratio: sol.linf_ratio(),
        };
        w.write_json("result.json", &out)?;
        return Ok((
            vec![format!(
                "top mean {:?}, top oscillation {:.3e}, {} {} iterations",
                out.top_mean, out.top_oscillation, out.method, out.iterations
            )],
            true,
        ));
    }
    let (result, sol) = w.time("boundary layer limit", || {
        boundary_layer_limit_with_solution(&problem, cfg.numerics.tolerance, &cfg.ladder())
    })?;
    write_limit_reports(w, &result, &sol)?;
    Ok((
        vec![format!(
            "c* = {:?} ± {:.3e} (heights {:?}, decay rate {:?}, converged {})",
            result.value, result.error_bar, result.heights_used, result.decay_rate, result.converged
        )],
        result.converged,
    ))
}

fn write_limit_reports(w: &mut ReportWriter, result: &BoundaryLayerResult, sol: &StripSolution) -> Result<()> {
    #[derive(Serialize)]
    struct Limit<'a> {
        problem: ProblemSummary,
        result: &'a BoundaryLayerResult,
    }
    w.write_json(
        "result.json",
        &Limit {
            problem: ProblemSummary::of(sol),
            result,
        },
    )?;
    w.write_text("solution.csv", &sol.to_csv())?;
    w.write_text("slices.csv", &slices_csv(sol))?;
    w.write_text("decay.svg", &render_svg(&[decay_panel(sol, result)]))?;
    Ok(())
}

fn cmd_decay_fit(cfg: &ExperimentConfig, w: &mut ReportWriter) -> DriverOutput {
    let xi = first_direction(cfg)?;
    let problem = cfg.strip_problem(&xi)?;
    let (result, sol) = w.time("boundary layer limit", || {
        boundary_layer_limit_with_solution(&problem, cfg.numerics.tolerance, &cfg.ladder())
    })?;
    let mut t = CsvTable::new(&["z", "oscillation"]);
    for (z, o) in decay_points(&sol) {
        t.push_numbers(&[z, o]);
    }
    w.write_text("decay_points.csv", &t.render())?;
    w.write_json("decay.json", &result.decay)?;
    w.write_text("decay.svg", &render_svg(&[decay_panel(&sol, &result)]))?;
    let line = match &result.decay {
        Some(f) if !f.degenerate => format!(
            "decay rate {:.6} (amplitude {:.4e}, fit residual {:.3e}, {} points)",
            f.rate,
            f.amplitude,
            f.fit_residual,
            f.points.len()
        ),
        _ => "decay fit degenerate: too few points above the roundoff floor".to_string(),
    };
    Ok((vec![line], result.converged))
}

fn profile_samples(cfg: &ExperimentConfig, op: &StripOperator) -> usize {
    match op {
        StripOperator::Linear(_) => cfg.numerics.profile_samples,
        StripOperator::Nonlinear(_) => 2 * cfg.numerics.profile_samples,
    }
}

fn profile_csv(profile: &PhiStarProfile) -> String {
    let c = profile.mean.len();
    let mut header = vec!["s".to_string()];
    header.extend((1..=c).map(|k| format!("phi_star_{k}")));
    header.push("error_bar".into());
    header.push("converged".into());
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = CsvTable::new(&refs);
    for (s, r) in profile.shifts.iter().zip(&profile.samples) {
        let mut row = vec![fmt_f64(*s)];
        row.extend(r.value.iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(r.error_bar));
        row.push(r.converged.to_string());
        t.push(row);
    }
    t.render()
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn cmd_phi_star(cfg: &ExperimentConfig, w: &mut ReportWriter) -> DriverOutput {
    let op = cfg.operator()?;
    let mut lines = Vec::new();
    let mut converged = true;
    let mut panel = Panel::new("boundary layer constant", "shift s", "phi*");
    #[derive(Serialize)]
    struct ProfileReport<'a> {
        profile: &'a PhiStarProfile,
        periodicity_defect: f64,
        periodicity_error_bar: f64,
    }
    for (i, xi) in cfg.rational_directions()?.iter().enumerate() {
        let base = cfg.strip_problem(xi)?;
        let samples = profile_samples(cfg, &op);
        let profile = w.time(&format!("profile {xi}"), || {
            phi_star_profile(&base, samples, cfg.numerics.tolerance, &cfg.ladder())
        })?;
        let (defect, bar) = w.time(&format!("periodicity {xi}"), || {
            shift_periodicity_defect(&base, &profile, cfg.numerics.tolerance, &cfg.ladder())
        })?;
        let tag = direction_tag(xi);
        w.write_text(&format!("profile_{tag}.csv"), &profile_csv(&profile))?;
        w.write_json(
            &format!("profile_{tag}.json"),
            &ProfileReport {
                profile: &profile,
                periodicity_defect: defect,
                periodicity_error_bar: bar,
            },
        )?;
        let pts = profile.shifts.iter().zip(&profile.samples).map(|(s, r)| (*s, r.value[0])).collect();
        panel = panel.with_series(Series::line(&format!("{xi}"), pts, COLORS[i % COLORS.len()]));
        converged &= profile.converged;
        lines.push(format!(
            "{xi}: mean {:?}, error bar {:.3e}, period {:.6}, periodicity defect {:.3e} (bar {:.3e})",
            profile.mean,
            profile.error_bar,
            profile.shift_period(),
            defect,
            bar
        ));
    }
    w.write_text("profiles.svg", &render_svg(&[panel]))?;
    Ok((lines, converged))
}

fn second_cell_options(cfg: &ExperimentConfig) -> SecondCellOptions {
    SecondCellOptions {
        tolerance: cfg.numerics.tolerance,
        ladder: cfg.ladder(),
        cells_per_period: cfg.numerics.second_cells_per_period,
        tau: cfg.numerics.tau,
        ..SecondCellOptions::default()
    }
}

fn default_etas(xi: &RationalDirection) -> Vec<Vec<f64>> {
    let basis = transverse_basis(xi);
    if basis.len() == 1 {
        return vec![basis[0].clone(), basis[0].iter().map(|v| -v).collect()];
    }
    let diag: Vec<f64> = (0..3).map(|i| (basis[0][i] + basis[1][i]) / 2f64.sqrt()).collect();
    vec![basis[0].clone(), basis[1].clone(), diag]
}

fn cmd_second_cell(cfg: &ExperimentConfig, w: &mut ReportWriter) -> DriverOutput {
    let op = cfg.operator()?;
    let xi = first_direction(cfg)?;
    let base = cfg.strip_problem(&xi)?;
    let samples = profile_samples(cfg, &op);
    let profile = w.time("profile", || {
        phi_star_profile(&base, samples, cfg.numerics.tolerance, &cfg.ladder())
    })?;
    let effective = w.time("effective operator", || {
        EffectiveOperator::from_operator(&op, cfg.h_cell(op.dim()))
    })?;
    let etas = if cfg.eta.is_empty() { default_etas(&xi) } else { cfg.eta.clone() };
    let opts = second_cell_options(cfg);
    let spread = w.time("directional limits", || {
        eta_independence_check(&xi, &profile, &effective, &etas, &opts)
    })?;
    let d = xi.dim();
    let mut header: Vec<String> = (1..=d).map(|k| format!("eta_{k}")).collect();
    header.extend(["limit", "error_bar", "strip_error_bar", "profile_error_bar", "interpolation_error"].map(String::from));
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = CsvTable::new(&refs);
    for l in &spread.limits {
        let mut row = l.eta.clone();
        row.extend([l.scalar(), l.error_bar, l.strip_error_bar, l.profile_error_bar, l.interpolation_error]);
        t.push_numbers(&row);
    }
    w.write_text("limits.csv", &t.render())?;
    w.write_text("profile.csv", &profile_csv(&profile))?;
    #[derive(Serialize)]
    struct SecondCellReport<'a> {
        direction: &'a RationalDirection,
        profile_mean: &'a [f64],
        linear: bool,
        spread: f64,
        error_bar: f64,
        limits: &'a [crate::second_cell::DirectionalLimit],
    }
    w.write_json(
        "second_cell.json",
        &SecondCellReport {
            direction: &xi,
            profile_mean: &profile.mean,
            linear: effective.is_linear(),
            spread: spread.spread,
            error_bar: spread.error_bar,
            limits: &spread.limits,
        },
    )?;
    let mut lines: Vec<String> = spread
        .limits
        .iter()
        .map(|l| format!("L({xi}, {:?}) = {:.10} ± {:.3e}", l.eta, l.scalar(), l.error_bar))
        .collect();
    lines.push(format!(
        "profile average {:.10}; spread over approach directions {:.3e} (error bar {:.3e})",
        profile.mean[0], spread.spread, spread.error_bar
    ));
    let converged = profile.converged && spread.limits.iter().all(|l| l.limit.converged);
    Ok((lines, converged))
}

fn cmd_homogenize(cfg: &ExperimentConfig, w: &mut ReportWriter) -> DriverOutput {
    let op = cfg.operator()?;
    let h_cell = cfg.h_cell(op.dim());
    let mut lines = Vec::new();
    match &op {
        StripOperator::Linear(t) => {
            let h = w.time("correctors", || homogenize_linear(t, h_cell))?;
            w.write_json("a0.json", &h)?;
            let mut table = CsvTable::new(&["row", "col", "value"]);
            let s = h.size();
            for r in 0..s {
                for c in 0..s {
                    table.push(vec![r.to_string(), c.to_string(), fmt_f64(h.entry(r, c))]);
                }
            }
            w.write_text("a0.csv", &table.render())?;
            let (lo, hi) = h.ellipticity_range();
            lines.push(format!("A0 = {:?}", h.a0));
            lines.push(format!(
                "ellipticity range [{lo:.6}, {hi:.6}], asymmetry {:.3e}, corrector mean {:.3e}",
                h.asymmetry(),
                h.corrector_mean
            ));
        }
        StripOperator::Nonlinear(spec) => {
            let report = validate_operator(spec, 4000, 1.0, cfg.seed)?;
            w.write_json("operator_validation.json", &report)?;
            let map = EffectiveMap::new(spec.clone(), h_cell);
            let d = spec.dim();
            let dirs: Vec<Vec<f64>> = if d == 2 {
                (0..32)
                    .map(|k| {
                        let th = TAU * k as f64 / 32.0;
                        vec![th.cos(), th.sin()]
                    })
                    .collect()
            } else {
                (0..6)
                    .flat_map(|i| {
                        (0..12).map(move |j| {
                            let th = std::f64::consts::PI * (i as f64 + 0.5) / 6.0;
                            let ph = TAU * j as f64 / 12.0;
                            vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]
                        })
                    })
                    .collect()
            };
            let values = w.time("effective map", || {
                dirs.iter().map(|p| map.eval(p)).collect::<Result<Vec<_>>>()
            })?;
            let mut header: Vec<String> = (1..=d).map(|k| format!("p_{k}")).collect();
            header.extend((1..=d).map(|k| format!("a0_{k}")));
            let refs: Vec<&str> = header.iter().map(String::as_str).collect();
            let mut table = CsvTable::new(&refs);
            let mut lambda_eff = f64::INFINITY;
            for (i, (p, a)) in dirs.iter().zip(&values).enumerate() {
                let mut row = p.clone();
                row.extend(a);
                table.push_numbers(&row);
                for (q, b) in dirs.iter().zip(&values).skip(i + 1) {
                    let dp: Vec<f64> = p.iter().zip(q).map(|(x, y)| x - y).collect();
                    let num: f64 = a.iter().zip(b).zip(&dp).map(|((x, y), z)| (x - y) * z).sum();
                    let den: f64 = dp.iter().map(|v| v * v).sum();
                    lambda_eff = lambda_eff.min(num / den);
                }
            }
            w.write_text("effective_map.csv", &table.render())?;
            lines.push(format!(
                "sampled monotonicity {:.6} (operator λ̂ = {:.6}), exact map: {}",
                lambda_eff,
                report.lambda_hat,
                map.is_exact()
            ));
        }
    }
    if let (Some(xi), Some(data)) = (cfg.rational_directions()?.first(), cfg.data.as_ref()) {
        let opts = EpsilonStudyOptions {
            height: cfg.numerics.eps_height,
            cells_per_eps: cfg.numerics.cells_per_eps,
            h_cell,
            mesh_check: cfg.numerics.mesh_check,
        };
        let data: Arc<dyn BoundaryData> = Arc::new(data.clone());
        let study = w.time("epsilon study", || {
            epsilon_refinement_study(&op, data, xi, &cfg.numerics.eps_ladder, &opts)
        })?;
        let mut t = CsvTable::new(&["eps", "sup_error", "ratio", "order"]);
        for r in &study.rows {
            t.push(vec![
                fmt_f64(r.eps),
                fmt_f64(r.sup_error),
                r.ratio.map(fmt_f64).unwrap_or_default(),
                r.order.map(fmt_f64).unwrap_or_default(),
            ]);
        }
        w.write_text("eps_study.csv", &t.render())?;
        w.write_json("eps_study.json", &study)?;
        for r in &study.rows {
            lines.push(format!(
                "eps = {:.6}: sup error {:.6e}, ratio {}",
                r.eps,
                r.sup_error,
                r.ratio.map_or("-".into(), |v| format!("{v:.4}"))
            ));
        }
        lines.push(format!("fitted order {:?}", study.fitted_order));
        if let Some(m) = study.mesh_check {
            lines.push(format!("mesh check at the smallest ε: {m:.3e}"));
        }
        if let Some(e) = &study.aborted {
            lines.push(format!("study aborted: {e}"));
        }
    }
    Ok((lines, true))
}

fn cmd_sweep(cfg: &ExperimentConfig, w: &mut ReportWriter) -> DriverOutput {
    let op = cfg.operator()?;
    let directions = cfg
        .direction_specs()?
        .iter()
        .map(|d| d.unit_vector())
        .collect::<Result<Vec<_>>>()?;
    let mut setup = PredictionSetup::new(op.clone(), cfg.data()?);
    setup.q_budget = cfg.numerics.q_budget;
    setup.h = cfg.numerics.h;
    setup.tau = cfg.numerics.tau;
    setup.tolerance = cfg.numerics.tolerance;
    setup.profile_samples = cfg.numerics.profile_samples;
    setup.ladder = cfg.ladder();
    setup.alpha = cfg.numerics.alpha;
    setup.h_cell = cfg.h_cell(op.dim());
    setup.second = second_cell_options(cfg);
    let report = w.time("sweep", || continuity_sweep(&setup, &directions))?;
    let d = op.dim();
    let mut header: Vec<String> = (1..=d).map(|k| format!("n_{k}")).collect();
    header.extend(["value", "error_bar", "approximation_term", "epsilon", "approximant", "provenance", "failure"].map(String::from));
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = CsvTable::new(&refs);
    let mut scatter = Vec::new();
    for r in &report.rows {
        let mut row: Vec<String> = r.n.iter().map(|v| fmt_f64(*v)).collect();
        match &r.prediction {
            Some(p) => {
                row.extend([
                    fmt_f64(p.value[0]),
                    fmt_f64(p.error_bar),
                    fmt_f64(p.approximation_term),
                    fmt_f64(p.epsilon),
                    p.approximant.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
                    match p.provenance {
                        Provenance::DirectRational => "direct_rational".into(),
                        Provenance::Prediction => "prediction".into(),
                    },
                    String::new(),
                ]);
                scatter.push((r.n[1].atan2(r.n[0]), p.value[0]));
            }
            None => {
                row.extend(std::iter::repeat(String::new()).take(6));
                row.push(r.failure.clone().unwrap_or_default().replace(',', ";"));
            }
        }
        t.push(row);
    }
    w.write_text("sweep.csv", &t.render())?;
    w.write_json("sweep.json", &report)?;
    let mut pairs = Vec::new();
    let ok: Vec<_> = report.rows.iter().filter_map(|r| r.prediction.as_ref()).collect();
    for (i, a) in ok.iter().enumerate() {
        for b in &ok[i + 1..] {
            let dn = a.n.iter().zip(&b.n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let dv = (a.value[0] - b.value[0]).abs();
            if dn > 0.0 && dv > 0.0 {
                pairs.push((dn.log10(), dv));
            }
        }
    }
    let mut fit_panel = Panel::new("pairwise differences", "log10 |n1 - n2|", "|phi*(n1) - phi*(n2)|")
        .with_log_y()
        .with_series(Series::markers("pairs", pairs.clone(), "#1f77b4"));
    let mut lines = Vec::new();
    match &report.fit {
        Some(f) => {
            let (lo, hi) = pairs
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
            let line = (0..=16)
                .map(|j| {
                    let x = lo + (hi - lo) * j as f64 / 16.0;
                    (x, f.c * 10f64.powf(f.alpha * x))
                })
                .collect();
            fit_panel = fit_panel.with_series(Series::line(&format!("alpha {:.3}", f.alpha), line, "#d62728"));
            lines.push(format!(
                "Hölder fit: alpha = {:.4}, C = {:.4e} over {} pairs; largest jump {:.3e}",
                f.alpha, f.c, f.pairs_used, report.max_jump
            ));
        }
        None => lines.push(format!(
            "degenerate fit: no pair differs by more than its combined error bars (largest jump {:.3e})",
            report.max_jump
        )),
    }
    let values_panel = Panel::new("phi* along the sweep", "angle of n", "phi*")
        .with_series(Series::markers("phi*", scatter, "#2ca02c"));
    w.write_text("sweep.svg", &render_svg(&[values_panel, fit_panel]))?;
    let failed = report.rows.iter().filter(|r| r.failure.is_some()).count();
    if failed > 0 {
        lines.push(format!("{failed} rows failed and are flagged in sweep.csv"));
    }
    let converged = ok.iter().all(|p| p.limit.limit.converged);
    Ok((lines, converged))
}

fn cmd_discontinuity_demo(cfg: &ExperimentConfig, w: &mut ReportWriter) -> DriverOutput {
    let op = cfg.operator()?;
    if op.dim() != 3 {
        return Err(Error::Config("the discontinuity demo needs a three-dimensional operator".into()));
    }
    let xi = make_rational_direction(&[0, 0, 1])?;
    let data: Arc<dyn BoundaryData> = match &cfg.data {
        Some(d) => Arc::new(d.clone()),
        None => Arc::new(PeriodicFieldExpr::scalar(3, 1.0 / 3.0).with_term(&[1.0], &[0, 0, 1], Phase::Cos)),
    };
    let mut base = StripProblem::new(xi.clone(), op.clone(), data)
        .with_h(cfg.numerics.h)
        .with_options(cfg.solver_options());
    if let Some(tau) = cfg.numerics.tau {
        base = base.with_tau(tau);
    }
    let samples = profile_samples(cfg, &op);
    let profile = w.time("profile", || {
        phi_star_profile(&base, samples, cfg.numerics.tolerance, &cfg.ladder())
    })?;
    let effective = w.time("effective operator", || {
        EffectiveOperator::from_operator(&op, cfg.h_cell(3))
    })?;
    let opts = second_cell_options(cfg);
    let e1 = vec![1.0, 0.0, 0.0];
    let e2 = vec![0.0, 1.0, 0.0];
    let l1 = w.time("limit e1", || directional_limit(&xi, &e1, &profile, &effective, &opts))?;
    let l2 = w.time("limit e2", || directional_limit(&xi, &e2, &profile, &effective, &opts))?;
    let h2 = 1.0 / cfg.numerics.second_cells_per_period as f64;
    let tau = cfg.numerics.tau.unwrap_or(h2);
    let cert = w.time("gap certificate", || gap_certificate(h2, tau, cfg.numerics.tolerance, &cfg.ladder()))?;
    let n_angles = cfg.numerics.angles.max(2);
    let angles: Vec<f64> = (0..n_angles).map(|k| FRAC_PI_2 * k as f64 / (n_angles - 1) as f64).collect();
    let sweep = w.time("approach angles", || approach_angle_sweep(&xi, &profile, &effective, &angles, &opts))?;

    let gap = l2.scalar() - l1.scalar();
    let bars = l1.error_bar + l2.error_bar;
    let pass = cert.delta_hat > 0.0 && gap - bars > 0.0 && gap + bars >= cert.delta_hat;
    let mut t = CsvTable::new(&["angle", "eta_1", "eta_2", "eta_3", "limit", "error_bar"]);
    for r in &sweep {
        t.push_numbers(&[r.angle, r.limit.eta[0], r.limit.eta[1], r.limit.eta[2], r.limit.scalar(), r.limit.error_bar]);
    }
    w.write_text("angles.csv", &t.render())?;
    w.write_text("profile.csv", &profile_csv(&profile))?;
    #[derive(Serialize)]
    struct Demo<'a> {
        limit_e1: &'a crate::second_cell::DirectionalLimit,
        limit_e2: &'a crate::second_cell::DirectionalLimit,
        gap: f64,
        certificate: &'a crate::second_cell::GapCertificate,
        pass: bool,
    }
    w.write_json(
        "discontinuity.json",
        &Demo {
            limit_e1: &l1,
            limit_e2: &l2,
            gap,
            certificate: &cert,
            pass,
        },
    )?;
    let kind = InterpKind::Linear;
    let interp = profile.interpolant(kind);
    let period = profile.shift_period();
    let curve = (0..=128)
        .map(|j| {
            let s = period * j as f64 / 128.0;
            (s, interp.eval(s)[0])
        })
        .collect();
    let samples_pts = profile.shifts.iter().zip(&profile.samples).map(|(s, r)| (*s, r.value[0])).collect();
    let profile_panel = Panel::new("phi*(e3, s)", "shift s", "phi*")
        .with_series(Series::line("interpolant", curve, "#1f77b4"))
        .with_series(Series::markers("samples", samples_pts, "#d62728"));
    let angle_panel = Panel::new("L(e3, eta(theta))", "approach angle theta", "L").with_series(Series::line(
        "limit",
        sweep.iter().map(|r| (r.angle, r.limit.scalar())).collect(),
        "#2ca02c",
    ));
    w.write_text("discontinuity.svg", &render_svg(&[profile_panel, angle_panel]))?;
    let lines = vec![
        format!(
            "L(e3,e1)={:.6}±{:.1e}, L(e3,e2)={:.6}±{:.1e}, delta_hat={:.6}, gap>0: {}",
            l1.scalar(),
            l1.error_bar,
            l2.scalar(),
            l2.error_bar,
            cert.delta_hat,
            if pass { "PASS" } else { "FAIL" }
        ),
        format!(
            "certificate at h = {h2}, tau = {tau}: min gap at y = {:.4}, ordering violation {:.3e}",
            cert.argmin_y, cert.ordering_violation
        ),
    ];
    let converged = profile.converged && l1.limit.converged && l2.limit.converged && cert.limit.converged;
    Ok((lines, converged))
}
