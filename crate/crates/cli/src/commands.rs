//! Subcommand implementations.

use crate::config::{ConfigFile, Resolved};
use crate::output;
use anyhow::Context;
use num_complex::Complex64;
use semiclassical::assembly::assemble;
use semiclassical::bomca::{evolve_bomca, verify_f_representation};
use semiclassical::dynamics::branch_search;
use semiclassical::oracle::{compare, packet_on_grid, split_step_propagate};
use semiclassical::packet::SInit;
use semiclassical::path_checks::{
    discrete_determinant, first_order_factor, gaussian_moment, inverse_limit_check, ln_gamma,
    moment_by_quadrature, stirling_correction_term, stirling_modified, DiscretePathMatrix,
    MomentPattern, StirlingQuery,
};
use semiclassical::potential::PotentialModel;
use semiclassical::propagator::{
    coherent_overlap, default_guess, free_particle_overlap_exact, solve_two_sided,
    PropagatorQuery, TwoSidedBranch,
};
use serde::Serialize;

fn echo_config(r: &Resolved, cfg: &ConfigFile) -> anyhow::Result<()> {
    let text = toml::to_string_pretty(cfg).context("serializing effective config")?;
    output::write(&r.out_dir, &format!("{}_config.toml", r.prefix), &text)
}

fn complex_json(z: Complex64) -> serde_json::Value {
    serde_json::json!([z.re, z.im])
}

pub fn cmd_propagate(r: &Resolved, cfg: &ConfigFile) -> anyhow::Result<u8> {
    let sinit = SInit::new(r.packet.clone());
    let field = assemble(
        &r.targets,
        &r.model,
        &sinit,
        r.method,
        r.order,
        r.t_end,
        &r.search,
        r.opts,
    )?;
    output::write(
        &r.out_dir,
        &format!("{}_field.csv", r.prefix),
        &output::field_csv(&field),
    )?;
    let summary = serde_json::json!({
        "method": field.method.name(),
        "order": field.order,
        "hbar": field.hbar,
        "time": field.t_end,
        "targets": field.targets.len(),
        "empty_targets": field.results.iter().filter(|t| t.empty).count(),
        "excluded_targets": field.excluded_targets(),
        "newton_iterations": field.stats.newton_iterations,
        "shots_attempted": field.stats.shots_attempted,
        "notes": field.results.iter().enumerate()
            .filter_map(|(k, t)| t.note.as_ref().map(|n| serde_json::json!([k, n])))
            .collect::<Vec<_>>(),
    });
    output::write_json(&r.out_dir, &format!("{}_summary.json", r.prefix), &summary)?;
    echo_config(r, cfg)?;
    println!(
        "propagate: {} targets, {} newton iterations -> {}",
        field.targets.len(),
        field.stats.newton_iterations,
        r.out_dir.join(format!("{}_field.csv", r.prefix)).display()
    );
    Ok(0)
}

pub fn cmd_compare(r: &Resolved, cfg: &ConfigFile) -> anyhow::Result<u8> {
    let oracle_sec = r
        .oracle
        .as_ref()
        .context("compare needs an [oracle] section")?;
    let sinit = SInit::new(r.packet.clone());
    let field = assemble(
        &r.targets,
        &r.model,
        &sinit,
        r.method,
        r.order,
        r.t_end,
        &r.search,
        r.opts,
    )?;
    let grid0 = packet_on_grid(&r.packet, &oracle_sec.lo, &oracle_sec.hi, &oracle_sec.points)?;
    let grid_t = split_step_propagate(&grid0, &r.model, r.t_end, oracle_sec.steps)?;
    let report = compare(&field, &grid_t);

    output::write(
        &r.out_dir,
        &format!("{}_field.csv", r.prefix),
        &output::field_csv(&field),
    )?;
    output::write(
        &r.out_dir,
        &format!("{}_oracle.csv", r.prefix),
        &output::grid_csv(&grid_t),
    )?;
    output::write_json(
        &r.out_dir,
        &format!("{}_oracle.json", r.prefix),
        &output::grid_metadata(&grid_t),
    )?;
    let report_json = serde_json::json!({
        "method": field.method.name(),
        "order": field.order,
        "hbar": field.hbar,
        "time": field.t_end,
        "relative_l2": report.relative_l2,
        "max_pointwise": report.max_pointwise,
        "compared_targets": report.compared_targets,
        "excluded_targets": report.excluded_targets,
    });
    output::write_json(&r.out_dir, &format!("{}_compare.json", r.prefix), &report_json)?;
    echo_config(r, cfg)?;
    println!(
        "compare: relative L2 {:.3e}, max pointwise {:.3e}, {} targets compared",
        report.relative_l2, report.max_pointwise, report.compared_targets
    );
    Ok(0)
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub params: serde_json::Value,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn check_determinant(r: &Resolved) -> anyhow::Result<Vec<CheckOutcome>> {
    let sinit = SInit::new(r.packet.clone());
    let x0: Vec<Complex64> = r.packet.x0.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let t_end = if r.t_end > 0.0 { r.t_end } else { 1.0 };
    let mut out = Vec::new();
    if matches!(r.model, PotentialModel::Free { .. }) {
        let mut worst = 0.0f64;
        for n in [2usize, 4, 16, 64] {
            let rep = discrete_determinant(&x0, &r.model, &sinit, t_end, n, r.opts)?;
            worst = worst.max(rep.rel_error);
        }
        out.push(CheckOutcome {
            name: "determinant_free_exact".into(),
            params: serde_json::json!({"t": t_end, "n": [2, 4, 16, 64]}),
            measured: worst,
            tolerance: 1e-10,
            pass: worst < 1e-10,
        });
        return Ok(out);
    }
    let mut errs = Vec::new();
    for n in [64usize, 128, 256] {
        errs.push(discrete_determinant(&x0, &r.model, &sinit, t_end, n, r.opts)?.rel_error);
    }
    let mut worst_order = f64::INFINITY;
    let mut best_order: f64 = 0.0;
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        worst_order = worst_order.min(order);
        best_order = best_order.max(order);
    }
    let pass = worst_order >= 1.7 && best_order <= 2.3;
    out.push(CheckOutcome {
        name: "determinant_convergence_order".into(),
        params: serde_json::json!({"t": t_end, "n": [64, 128, 256], "errors": errs}),
        measured: worst_order,
        tolerance: 1.7,
        pass,
    });
    Ok(out)
}

fn check_ainv(r: &Resolved) -> anyhow::Result<Vec<CheckOutcome>> {
    let sinit = SInit::new(r.packet.clone());
    let x0: Vec<Complex64> = r.packet.x0.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let t_end = if r.t_end > 0.0 { r.t_end } else { 1.0 };
    let err = inverse_limit_check(&x0, &r.model, &sinit, t_end, 200, 60, 140, r.opts)?;
    Ok(vec![CheckOutcome {
        name: "inverse_limit".into(),
        params: serde_json::json!({"t": t_end, "n": 200, "i": 60, "j": 140}),
        measured: err,
        tolerance: 0.05,
        pass: err < 0.05,
    }])
}

fn check_moments() -> anyhow::Result<Vec<CheckOutcome>> {
    let a2 = DiscretePathMatrix::from_diag(vec![
        Complex64::new(2.0, 0.0),
        Complex64::new(2.0, 0.0),
    ]);
    let cases: [(MomentPattern, usize, usize, [u32; 2]); 4] = [
        (MomentPattern::Ij, 0, 1, [1, 1]),
        (MomentPattern::I4, 0, 0, [4, 0]),
        (MomentPattern::I3j, 0, 1, [3, 1]),
        (MomentPattern::I3j3, 0, 1, [3, 3]),
    ];
    let mut worst = 0.0f64;
    for (pattern, i, j, powers) in &cases {
        let closed = gaussian_moment(&a2, *pattern, *i, *j)?;
        let brute = moment_by_quadrature(&a2, powers)?;
        worst = worst.max((closed - brute).norm() / closed.norm().max(1e-12));
    }
    Ok(vec![CheckOutcome {
        name: "gaussian_moments_vs_quadrature".into(),
        params: serde_json::json!({"matrix": "tridiag(2, -1), N = 2", "patterns": 4}),
        measured: worst,
        tolerance: 1e-6,
        pass: worst < 1e-6,
    }])
}

fn check_foc1(r: &Resolved) -> anyhow::Result<Vec<CheckOutcome>> {
    let sinit = SInit::new(r.packet.clone());
    let x0: Vec<Complex64> = r.packet.x0.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let t_end = if r.t_end > 0.0 { r.t_end } else { 1.0 };
    let rec = semiclassical::dynamics::integrate_classical(
        &x0, &r.model, &sinit, t_end, r.opts, 2048, r.search.caustic_threshold,
    )?;
    let report = first_order_factor(&rec, &r.model, &sinit, 1e-4);
    let (measured, pass) = match &report {
        Ok(rep) => {
            if r.model.is_quadratic() {
                ((rep.factor - Complex64::ONE).norm(), true)
            } else {
                (rep.rel_discrepancy, rep.rel_discrepancy < 1e-4)
            }
        }
        Err(semiclassical::Error::ToleranceExceeded { measured, .. }) => (*measured, false),
        Err(e) => anyhow::bail!("first-order factor check failed: {e}"),
    };
    Ok(vec![CheckOutcome {
        name: "first_order_factor_vs_hierarchy".into(),
        params: serde_json::json!({"t": t_end, "samples": 2048}),
        measured,
        tolerance: 1e-4,
        pass,
    }])
}

fn check_stirling() -> anyhow::Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    let mut worst = 0.0f64;
    for n in [5.0, 10.0, 50.0] {
        let corr = stirling_correction_term(n, n, n);
        worst = worst.max(((corr - 1.0 / (12.0 * n)) / (1.0 / (12.0 * n))).abs());
    }
    out.push(CheckOutcome {
        name: "stirling_collapse_centered".into(),
        params: serde_json::json!({"n": [5, 10, 50]}),
        measured: worst,
        tolerance: 1e-12,
        pass: worst < 1e-12,
    });

    let n = 4000.0;
    let res = stirling_modified(StirlingQuery {
        n,
        n_param: n + 1.0,
        s_param: n - 2.0,
    })?;
    let std_leading = 0.5 * (2.0 * std::f64::consts::PI * n).ln() + n * n.ln() - n;
    let eff = n * ((res.log_corrected - std_leading).exp() - 1.0) * 12.0;
    out.push(CheckOutcome {
        name: "stirling_effective_one_twelfth".into(),
        params: serde_json::json!({"n": n, "n_param": n + 1.0, "s_param": n - 2.0}),
        measured: (eff - 1.0).abs(),
        tolerance: 0.1,
        pass: (eff - 1.0).abs() < 0.1,
    });

    let mut all_better = true;
    let mut worst_ratio = 0.0f64;
    for n in [5.0, 10.0, 20.0] {
        let r = stirling_modified(StirlingQuery {
            n,
            n_param: n,
            s_param: n,
        })?;
        all_better &= r.rel_err_corrected < r.rel_err_leading;
        worst_ratio = worst_ratio.max(r.rel_err_corrected / r.rel_err_leading);
        // library gamma agrees with the Lanczos route used inside
        debug_assert!((r.log_reference - ln_gamma(n + 1.0)).abs() < 1e-14);
    }
    out.push(CheckOutcome {
        name: "stirling_corrected_beats_leading".into(),
        params: serde_json::json!({"n": [5, 10, 20]}),
        measured: worst_ratio,
        tolerance: 1.0,
        pass: all_better,
    });
    Ok(out)
}

fn check_fsubst(r: &Resolved) -> anyhow::Result<Vec<CheckOutcome>> {
    let sinit = SInit::new(r.packet.clone());
    let x0: Vec<Complex64> = r.packet.x0.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let t_end = if r.t_end > 0.0 { r.t_end } else { 1.0 };
    let run = evolve_bomca(&x0, &r.model, &sinit, 2, t_end, r.opts, 2048)?;
    let (measured, pass) = match verify_f_representation(&run, &r.model, 1e-6) {
        Ok(rep) => (
            rep.max_residual_cubic.max(rep.max_residual_quartic),
            true,
        ),
        Err(semiclassical::Error::ToleranceExceeded { measured, .. }) => (measured, false),
        Err(e) => anyhow::bail!("f-representation check failed: {e}"),
    };
    Ok(vec![CheckOutcome {
        name: "f_representation_residuals".into(),
        params: serde_json::json!({"t": t_end, "order": 2, "samples": 2048}),
        measured,
        tolerance: 1e-6,
        pass,
    }])
}

pub fn cmd_checks(r: &Resolved, cfg: &ConfigFile, selector: &str) -> anyhow::Result<u8> {
    let needs_1d = ["determinant", "ainv", "foc1", "fsubst"];
    if (selector == "all" || needs_1d.contains(&selector)) && r.model.dim() != 1 {
        anyhow::bail!("check {selector:?} needs a 1D potential configuration");
    }

    let mut checks: Vec<CheckOutcome> = Vec::new();
    match selector {
        "determinant" => checks.extend(check_determinant(r)?),
        "ainv" => checks.extend(check_ainv(r)?),
        "moments" => checks.extend(check_moments()?),
        "foc1" => checks.extend(check_foc1(r)?),
        "stirling" => checks.extend(check_stirling()?),
        "fsubst" => checks.extend(check_fsubst(r)?),
        "all" => {
            checks.extend(check_determinant(r)?);
            checks.extend(check_ainv(r)?);
            checks.extend(check_moments()?);
            checks.extend(check_foc1(r)?);
            checks.extend(check_stirling()?);
            checks.extend(check_fsubst(r)?);
        }
        other => anyhow::bail!(
            "unknown check selector {other:?}; expected determinant | ainv | moments | foc1 | stirling | fsubst | all"
        ),
    }

    let all_pass = checks.iter().all(|c| c.pass);
    for c in &checks {
        println!(
            "check {:<36} {}  measured {:.3e} (tolerance {:.1e})",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.measured,
            c.tolerance
        );
    }
    let report = serde_json::json!({
        "selector": selector,
        "all_pass": all_pass,
        "checks": checks,
    });
    output::write_json(&r.out_dir, &format!("{}_checks.json", r.prefix), &report)?;
    echo_config(r, cfg)?;
    Ok(if all_pass { 0 } else { 3 })
}

pub fn cmd_propagator(r: &Resolved, cfg: &ConfigFile) -> anyhow::Result<u8> {
    let query = PropagatorQuery {
        initial: r.packet.clone(),
        final_packet: r.final_packet.clone().context("needs [final_packet]")?,
        t_end: r.t_end,
        model: r.model.clone(),
    };
    query.validate()?;

    // multi-start on x(0): midpoint guess plus the search lattice
    let mut guesses = vec![default_guess(&query)];
    let d = query.initial.dim();
    if d == 1 {
        let n = r.search.grid_n.max(1);
        for a in 0..n {
            for b in 0..n {
                let fa = if n == 1 { 0.5 } else { a as f64 / (n - 1) as f64 };
                let fb = if n == 1 { 0.5 } else { b as f64 / (n - 1) as f64 };
                guesses.push(vec![Complex64::new(
                    r.search.re_range.0 + fa * (r.search.re_range.1 - r.search.re_range.0),
                    r.search.im_range.0 + fb * (r.search.im_range.1 - r.search.im_range.0),
                )]);
            }
        }
    }
    let mut branches: Vec<TwoSidedBranch> = Vec::new();
    for g in &guesses {
        if let Ok(b) = solve_two_sided(&query, g, r.opts, r.search.shoot_tol, r.search.max_newton)
        {
            let dup = branches.iter().any(|k| {
                k.x_start
                    .iter()
                    .zip(&b.x_start)
                    .map(|(x, y)| (x - y).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
                    < r.search.dedup_tol
            });
            if !dup {
                branches.push(b);
            }
        }
    }
    if branches.is_empty() {
        return Err(semiclassical::Error::NoConvergence {
            iterations: r.search.max_newton,
            residual: f64::NAN,
        }
        .into());
    }
    branches.sort_by(|a, b| {
        a.x_start[0]
            .im
            .abs()
            .total_cmp(&b.x_start[0].im.abs())
            .then(a.x_start[0].re.total_cmp(&b.x_start[0].re))
    });
    let overlap = coherent_overlap(&query, &mut branches)?;

    let mut report = serde_json::json!({
        "t": r.t_end,
        "branch_count": overlap.branch_count,
        "p_raw": complex_json(overlap.p_raw),
        "p_normalized": complex_json(overlap.p_normalized),
        "branches": branches.iter().map(|b| serde_json::json!({
            "x_start": b.x_start.iter().map(|z| complex_json(*z)).collect::<Vec<_>>(),
            "residual": b.residual,
            "contribution": complex_json(b.contribution),
            "wronskian_drift": b.wronskian_drift,
        })).collect::<Vec<_>>(),
    });
    if matches!(query.model, PotentialModel::Free { .. }) && d == 1 {
        let exact = free_particle_overlap_exact(&query)?;
        report["free_particle_closed_form"] = complex_json(exact);
        report["closed_form_rel_err"] =
            serde_json::json!((overlap.p_raw - exact).norm() / exact.norm());
    }
    output::write_json(&r.out_dir, &format!("{}_propagator.json", r.prefix), &report)?;
    echo_config(r, cfg)?;
    println!(
        "propagator: {} branch(es), P_raw = {} + {}i, |P_norm| = {:.6}",
        overlap.branch_count,
        overlap.p_raw.re,
        overlap.p_raw.im,
        overlap.p_normalized.norm()
    );
    Ok(0)
}

pub fn cmd_branches(r: &Resolved, cfg: &ConfigFile) -> anyhow::Result<u8> {
    let sinit = SInit::new(r.packet.clone());
    let mut rows = Vec::new();
    for target in &r.targets {
        let tc: Vec<Complex64> = target.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let rep = branch_search(&tc, &r.model, &sinit, r.t_end, r.opts, &r.search);
        rows.push(serde_json::json!({
            "target": target,
            "attempts": rep.attempts,
            "converged": rep.converged,
            "duplicates": rep.duplicates,
            "failures": rep.failures,
            "branches": rep.branches.iter().map(|b| serde_json::json!({
                "x_start": b.x_start.iter().map(|z| complex_json(*z)).collect::<Vec<_>>(),
                "residual": b.residual,
                "im_start_norm": b.im_start_norm(),
                "caustic_flag": b.trajectory.caustic_flag,
                "newton_iterations": b.newton_iterations,
                "log_det_stability_end": complex_json(b.trajectory.final_log_det()),
            })).collect::<Vec<_>>(),
        }));
    }
    let report = serde_json::json!({
        "time": r.t_end,
        "targets": rows,
    });
    output::write_json(&r.out_dir, &format!("{}_branches.json", r.prefix), &report)?;
    echo_config(r, cfg)?;
    println!(
        "branches: {} targets -> {}",
        r.targets.len(),
        r.out_dir.join(format!("{}_branches.json", r.prefix)).display()
    );
    Ok(0)
}
