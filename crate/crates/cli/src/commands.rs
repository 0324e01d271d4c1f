use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde_json::{json, Value as Json};
use pointer_sim_core::branches::{node_phase_step, BoundaryWeight, PrefactorConvention, SaddleOptions};
use pointer_sim_core::model::{Quadrature, ScenarioDocument};
use pointer_sim_core::propagators::branch_error;
use pointer_sim_core::{
    action_mixing_check, decoherence_report, decoherence_time_with, evolve_exact, fidelity, mean_field_error,
    numeric_stationary_points, orthogonality_report, reduced_density, saddle_point_state_with, stationary_points,
    superpose_branches, validate_non_demolition, BranchFamily, Error, MeanFieldEngine, Scenario, StateVector,
    ThetaProfile, TimeGrid, C64,
};

use crate::error::{CliError, CliResult};
use crate::output::{json, Artifact, Cell, Table};
use crate::overrides::set_path;
use crate::{CommandKind, Loaded};

/// Amplitude columns written by `run`.
pub const MAX_AMPLITUDE_COLUMNS: usize = 8;

fn complex(z: C64) -> Json {
    json!([z.re, z.im])
}

fn metadata(ctx: &Loaded) -> Json {
    json!({
        "tool": "pointer-sim",
        "version": env!("CARGO_PKG_VERSION"),
        "command": ctx.manifest.command.name(),
        "input_sha256": ctx.input_hash,
        "overrides": ctx.manifest.overrides,
        "seed": ctx.manifest.seed,
    })
}

fn summary(ctx: &Loaded, body: Json) -> Artifact {
    let mut map = serde_json::Map::new();
    map.insert("metadata".into(), metadata(ctx));
    if let Json::Object(fields) = body {
        map.extend(fields);
    }
    Artifact::new("summary.json", json(&Json::Object(map)))
}

pub fn execute(ctx: &Loaded) -> CliResult<Vec<Artifact>> {
    match ctx.manifest.command {
        CommandKind::Run => run(ctx),
        CommandKind::Branches => branches(ctx),
        CommandKind::SaddleCompare => saddle_compare(ctx),
        CommandKind::Orthogonality => orthogonality(ctx),
        CommandKind::Decoherence => decoherence(ctx),
        CommandKind::Sweep => sweep(ctx),
        CommandKind::Validate => validate(ctx),
    }
}

fn run(ctx: &Loaded) -> CliResult<Vec<Artifact>> {
    let s = &ctx.scenario;
    let engine = MeanFieldEngine::new(s)?;
    let up = engine.branch(0.0)?;
    let down = engine.branch(FRAC_PI_2)?;
    let initial = engine.branch_from(s.initial_system())?;
    let exact = evolve_exact(&s.initial_product_state()?, s)?;
    let theta_mf = s.analysis().mean_field_theta;
    let mf_error = branch_error(&engine.branch(theta_mf)?, s)?;

    let width = exact.states[0].dim().min(MAX_AMPLITUDE_COLUMNS);
    let mut columns: Vec<String> = ["t", "lambda_up", "lambda_down", "lambda_initial", "norm", "mean_field_error"]
        .iter()
        .map(|c| c.to_string())
        .collect();
    for j in 0..width {
        columns.push(format!("re_{j}"));
        columns.push(format!("im_{j}"));
    }
    let mut table = Table::new(columns);
    let mut norm_dev = 0.0f64;
    for (k, t) in exact.times.iter().enumerate() {
        let psi = &exact.states[k];
        norm_dev = norm_dev.max((psi.norm() - 1.0).abs());
        let mut row: Vec<Cell> = vec![
            (*t).into(),
            up.action.lambda[k].into(),
            down.action.lambda[k].into(),
            initial.action.lambda[k].into(),
            psi.norm().into(),
            mf_error[k].into(),
        ];
        for z in psi.amplitudes().iter().take(width) {
            row.push(z.re.into());
            row.push(z.im.into());
        }
        table.push(row);
    }
    let max_err = mf_error.iter().copied().fold(0.0, f64::max);
    let body = json!({
        "dims": s.total_dims(),
        "final": {
            "t": exact.times.last(),
            "lambda_up": up.action.last(),
            "lambda_down": down.action.last(),
            "lambda_initial": initial.action.last(),
            "norm": exact.states.last().map(StateVector::norm),
        },
        "norm_max_deviation": norm_dev,
        "mean_field_theta": theta_mf,
        "mean_field_error_max": max_err,
        "mean_field_error_final": mf_error.last(),
        "non_demolition": validate_non_demolition(s),
    });
    Ok(vec![Artifact::new("timeseries.csv", table.to_bytes()), summary(ctx, body)])
}

fn stationary_json(family: &BranchFamily, t: f64) -> Json {
    match stationary_points(family, t) {
        Ok(report) => Json::Array(
            report
                .points
                .iter()
                .map(|p| {
                    json!({
                        "theta_star": p.theta_star,
                        "lambda_second": p.lambda_second,
                        "amplitude": complex(p.amplitude),
                        "prefactor": complex(p.prefactor),
                        "literal_prefactor": complex(p.literal_prefactor),
                        "half_weight_prefactor": complex(p.half_weight_prefactor),
                    })
                })
                .collect(),
        ),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn branches(ctx: &Loaded) -> CliResult<Vec<Artifact>> {
    let s = &ctx.scenario;
    let family = BranchFamily::build(s)?;
    let k = family.times().len() - 1;
    let t_final = family.times()[k];
    let (lu, ld) = (family.lambda_up.lambda[k], family.lambda_down.lambda[k]);
    let mut table = Table::new(["theta", "c_re", "c_im", "weight", "lambda_final", "mixing_residual"]);
    let profile = &family.profile;
    for (j, b) in family.branches.iter().enumerate() {
        let (c, sn) = (b.theta.cos(), b.theta.sin());
        table.push(vec![
            b.theta.into(),
            profile.amplitudes()[j].re.into(),
            profile.amplitudes()[j].im.into(),
            profile.weights()[j].into(),
            b.action.lambda[k].into(),
            (b.action.lambda[k] - (c * c * lu + sn * sn * ld)).abs().into(),
        ]);
    }
    let numeric = match numeric_stationary_points(&family, t_final, 1e-10) {
        Ok(roots) => json!(roots),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let body = json!({
        "nodes": profile.len(),
        "quadrature": match profile.quadrature() {
            Quadrature::GaussLegendre => "gauss-legendre",
            Quadrature::Trapezoid => "trapezoid",
        },
        "profile_norm": profile.norm_squared(),
        "max_delta_lambda": family.max_delta_lambda(),
        "final_time": t_final,
        "mixing_residual_max": action_mixing_check(&family, t_final)?,
        "stationary_points": stationary_json(&family, t_final),
        "numeric_stationary_points": numeric,
        "non_demolition": validate_non_demolition(s),
    });
    Ok(vec![Artifact::new("branches.csv", table.to_bytes()), summary(ctx, body)])
}

fn pointer_weights(state: &StateVector, s: &Scenario) -> CliResult<(f64, f64)> {
    let rho = reduced_density(state, s)?;
    let p = rho.in_basis(&s.pointer_basis()?.matrix())?;
    Ok((p.element(0, 0).re, p.element(1, 1).re))
}

fn requested_times(family: &BranchFamily, wanted: &[f64], field: &str) -> CliResult<Vec<usize>> {
    if wanted.is_empty() {
        return Ok((0..family.times().len()).collect());
    }
    let t0 = family.times()[0];
    wanted
        .iter()
        .enumerate()
        .map(|(i, &t)| family.node(t0 + t).map_err(|e| CliError::Core(e.within(&format!("{field}[{i}]")))))
        .collect()
}

fn saddle_compare(ctx: &Loaded) -> CliResult<Vec<Artifact>> {
    let s = &ctx.scenario;
    let family = BranchFamily::build(s)?;
    let nodes = requested_times(&family, &s.analysis().saddle_times, "analysis.saddle_times")?;
    // fail before any row is produced if the profile cannot resolve the phases
    if let Some(&worst) = nodes
        .iter()
        .max_by(|&&a, &&b| node_phase_step(&family, a).total_cmp(&node_phase_step(&family, b)))
    {
        superpose_branches(&family, family.times()[worst])?;
    }
    let full = SaddleOptions::default();
    let half = SaddleOptions {
        convention: PrefactorConvention::Consistent,
        boundary: BoundaryWeight::Half,
    };
    let mut table = Table::new([
        "t",
        "delta_lambda_over_hbar",
        "fidelity",
        "norm_ratio",
        "half_weight_norm_ratio",
        "quadrature_norm",
        "up_weight_quadrature",
        "up_weight_saddle",
        "down_weight_quadrature",
        "down_weight_saddle",
        "status",
    ]);
    let mut fid_final = f64::NAN;
    for &k in &nodes {
        let t = family.times()[k];
        let x = family.delta_lambda(k) / family.hbar();
        let sup = superpose_branches(&family, t)?;
        let (qu, qd) = pointer_weights(&sup.state, s)?;
        let (row_nums, status) = match (saddle_point_state_with(&family, t, full), saddle_point_state_with(&family, t, half)) {
            (Ok(sad), Ok(sad_half)) => {
                let f = fidelity(&sad, &sup.state)?;
                let (su, sd) = pointer_weights(&sad, s)?;
                fid_final = f;
                ([f, sad.norm() / sup.norm, sad_half.norm() / sup.norm, su, sd], "ok")
            }
            (Err(Error::Degeneracy { .. }), _) => {
                fid_final = f64::NAN;
                let status = if k == 0 { "pre-asymptotic" } else { "degenerate" };
                ([f64::NAN; 5], status)
            }
            (Err(e), _) | (_, Err(e)) => return Err(e.into()),
        };
        let [f, ratio, half_ratio, su, sd] = row_nums;
        table.push(vec![
            t.into(),
            x.into(),
            f.into(),
            ratio.into(),
            half_ratio.into(),
            sup.norm.into(),
            qu.into(),
            su.into(),
            qd.into(),
            sd.into(),
            status.into(),
        ]);
    }
    let body = json!({
        "nodes": family.profile.len(),
        "rows": table.len(),
        "fidelity_final": fid_final,
        "prefactor_convention": "consistent",
        "boundary_weight": "full",
    });
    Ok(vec![Artifact::new("saddle_vs_quadrature.csv", table.to_bytes()), summary(ctx, body)])
}

/// Least-squares slope of `y` against `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn window_nodes(engine: &MeanFieldEngine, windows: &[f64]) -> CliResult<Vec<usize>> {
    let times = engine.times();
    let t0 = times[0];
    if windows.is_empty() {
        let steps = times.len() - 1;
        let mut nodes: Vec<usize> = (1..=8).map(|j| ((steps * j) as f64 / 8.0).round() as usize).collect();
        nodes.dedup();
        return Ok(nodes.into_iter().filter(|&k| k > 0).collect());
    }
    windows
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let k = engine
                .grid()
                .node_index(t0 + w)
                .map_err(|e| CliError::Core(e.within(&format!("analysis.windows[{i}]"))))?;
            if k == 0 {
                return Err(CliError::Core(Error::validation(
                    format!("analysis.windows[{i}]"),
                    "window must be longer than zero",
                )));
            }
            Ok(k)
        })
        .collect()
}

fn orthogonality(ctx: &Loaded) -> CliResult<Vec<Artifact>> {
    let s = &ctx.scenario;
    let engine = MeanFieldEngine::new(s)?;
    let hbar = s.hbar();
    let nodes = window_nodes(&engine, &s.analysis().windows)?;
    let times = engine.times();
    let mut table = Table::new([
        "theta",
        "theta_prime",
        "window",
        "instantaneous_abs",
        "average_abs",
        "half_window_average_abs",
        "predicted_abs",
        "abs_diff",
    ]);
    let mut worst = 0.0f64;
    for (i, pair) in s.analysis().pairs.iter().enumerate() {
        let field = format!("analysis.pairs[{i}]");
        let a = engine.branch(pair[0]).map_err(|e| CliError::Core(e.within(&field)))?;
        let b = engine.branch(pair[1]).map_err(|e| CliError::Core(e.within(&field)))?;
        for &k in &nodes {
            let window = TimeGrid::new(times[0], times[k], k)?;
            let report = orthogonality_report(&a, &b, &window)?;
            let diff: Vec<f64> = (0..=k).map(|j| a.action.lambda[j] - b.action.lambda[j]).collect();
            let rate = slope(&times[..=k], &diff);
            let big_t = times[k] - times[0];
            let predicted = ((pair[0] - pair[1]).cos() * sinc(rate * big_t / (2.0 * hbar))).abs();
            let measured = report.average.norm();
            worst = worst.max((measured - predicted).abs());
            table.push(vec![
                pair[0].into(),
                pair[1].into(),
                big_t.into(),
                report.instantaneous.norm().into(),
                measured.into(),
                report.half_window_average.norm().into(),
                predicted.into(),
                (measured - predicted).abs().into(),
            ]);
        }
    }
    let body = json!({
        "rows": table.len(),
        "max_abs_diff": worst,
    });
    Ok(vec![Artifact::new("overlap.csv", table.to_bytes()), summary(ctx, body)])
}

fn pointer_family(s: &Scenario) -> CliResult<BranchFamily> {
    Ok(BranchFamily::with_profile(s, ThetaProfile::delta(0.0)?)?)
}

fn decoherence(ctx: &Loaded) -> CliResult<Vec<Artifact>> {
    let s = &ctx.scenario;
    let family = pointer_family(s)?;
    let threshold = s.analysis().half_threshold;
    let report = decoherence_report(&family, threshold)?;
    let taus = decoherence_time_with(&family, threshold)?;
    let mut table = Table::new(["t", "r_re", "r_im", "average_re", "average_im", "average_abs", "coherence_abs"]);
    for k in 0..report.times.len() {
        let (r, a) = (report.decoherence_factor[k], report.time_averaged_factor[k]);
        table.push(vec![
            report.times[k].into(),
            r.re.into(),
            r.im.into(),
            a.re.into(),
            a.im.into(),
            a.norm().into(),
            report.coherence_magnitude[k].into(),
        ]);
    }
    let body = json!({
        "rate_up": taus.rate_up,
        "rate_down": taus.rate_down,
        "tau_estimate": taus.tau_estimate,
        "tau_measured": taus.tau_measured,
        "tau_single_rate": taus.tau_single_rate,
        "tau_ratio": taus.tau_measured.map(|m| m / taus.tau_estimate),
        "half_threshold": threshold,
        "final_average_abs": report.time_averaged_factor.last().map(|a| a.norm()),
    });
    Ok(vec![Artifact::new("decoherence.csv", table.to_bytes()), summary(ctx, body)])
}

/// Outcome of one sweep grid point.
#[derive(Clone, Debug)]
struct SweepRow {
    values: Vec<String>,
    error: Option<String>,
    tau_estimate: f64,
    tau_measured: f64,
    max_mean_field_error: f64,
    saddle_fidelity_final: f64,
    notes: Vec<String>,
}

fn sweep_point(ctx: &Loaded, assignment: &[(String, toml::Value)]) -> SweepRow {
    let mut row = SweepRow {
        values: assignment.iter().map(|(_, v)| v.to_string()).collect(),
        error: None,
        tau_estimate: f64::NAN,
        tau_measured: f64::NAN,
        max_mean_field_error: f64::NAN,
        saddle_fidelity_final: f64::NAN,
        notes: Vec::new(),
    };
    let mut tree = ctx.tree.clone();
    let scenario = assignment
        .iter()
        .try_for_each(|(k, v)| set_path(&mut tree, k, v.clone()))
        .and_then(|_| Ok(ScenarioDocument::from_value(tree)?.to_scenario()?));
    let s = match scenario {
        Ok(s) => s,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    match mean_field_error(s.analysis().mean_field_theta, &s) {
        Ok(err) => row.max_mean_field_error = err.into_iter().fold(0.0, f64::max),
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    }
    match pointer_family(&s).and_then(|f| Ok(decoherence_time_with(&f, s.analysis().half_threshold)?)) {
        Ok(t) => {
            row.tau_estimate = t.tau_estimate;
            row.tau_measured = t.tau_measured.unwrap_or(f64::NAN);
        }
        Err(e) => row.notes.push(format!("tau: {e}")),
    }
    let fid = BranchFamily::build(&s).map_err(CliError::from).and_then(|f| {
        let t = *f.times().last().expect("grid has nodes");
        let sup = superpose_branches(&f, t)?;
        let sad = saddle_point_state_with(&f, t, SaddleOptions::default())?;
        Ok(fidelity(&sad, &sup.state)?)
    });
    match fid {
        Ok(f) => row.saddle_fidelity_final = f,
        Err(e) => row.notes.push(format!("saddle: {e}")),
    }
    row
}

fn sweep(ctx: &Loaded) -> CliResult<Vec<Artifact>> {
    let axes = ctx.scenario.sweep().map(|s| s.axes.clone()).unwrap_or_default();
    if axes.is_empty() {
        return Err(Error::validation("sweep.axes", "the sweep grid is empty").into());
    }
    for (i, axis) in axes.iter().enumerate() {
        if axis.values.is_empty() {
            return Err(Error::validation(format!("sweep.axes[{i}].values"), "the sweep grid is empty").into());
        }
    }
    let total: usize = axes.iter().map(|a| a.values.len()).product();
    let points: Vec<Vec<(String, toml::Value)>> = (0..total)
        .map(|mut idx| {
            let mut assignment = vec![(String::new(), toml::Value::Boolean(false)); axes.len()];
            for (j, axis) in axes.iter().enumerate().rev() {
                let n = axis.values.len();
                assignment[j] = (axis.key.clone(), axis.values[idx % n].clone());
                idx /= n;
            }
            assignment
        })
        .collect();
    let rows: Vec<SweepRow> = points.par_iter().map(|p| sweep_point(ctx, p)).collect();

    let mut columns = vec!["index".to_string()];
    columns.extend(axes.iter().map(|a| a.key.clone()));
    columns.extend(
        ["status", "tau_estimate", "tau_measured", "max_mean_field_error", "saddle_fidelity_final", "notes"]
            .map(String::from),
    );
    let mut table = Table::new(columns);
    let mut failed = 0;
    for (i, row) in rows.iter().enumerate() {
        let mut cells: Vec<Cell> = vec![i.into()];
        cells.extend(row.values.iter().map(|v| Cell::from(v.clone())));
        let status = match &row.error {
            Some(e) => {
                failed += 1;
                format!("error: {e}")
            }
            None => "ok".to_string(),
        };
        cells.push(status.into());
        cells.extend([row.tau_estimate, row.tau_measured, row.max_mean_field_error, row.saddle_fidelity_final].map(Cell::from));
        cells.push(row.notes.join("; ").into());
        table.push(cells);
    }
    let body = json!({
        "rows": rows.len(),
        "failed_rows": failed,
        "axes": axes.iter().map(|a| a.key.clone()).collect::<Vec<_>>(),
    });
    let artifacts = vec![Artifact::new("sweep.csv", table.to_bytes()), summary(ctx, body)];
    if failed == rows.len() {
        crate::output::write_artifacts(&ctx.manifest.out, &artifacts)?;
        return Err(CliError::AllRowsFailed(failed));
    }
    Ok(artifacts)
}

fn validate(ctx: &Loaded) -> CliResult<Vec<Artifact>> {
    let s = &ctx.scenario;
    let basis = s.pointer_basis()?;
    let grid = s.time_grid();
    let body = json!({
        "valid": true,
        "dims": s.total_dims(),
        "mode": s.interaction().mode,
        "pointer_energies": [basis.energy_up, basis.energy_down],
        "time_grid": { "t0": grid.t0, "t_end": grid.t_end, "steps": grid.steps },
        "non_demolition": validate_non_demolition(s),
    });
    Ok(vec![summary(ctx, body)])
}
