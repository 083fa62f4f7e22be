//! Subcommand implementations: each produces CSV/JSON artifacts in the
//! output directory and returns the process exit code
//! (0 success, 2 validation failure; errors bubble up as code 1).

use std::fmt::Write as _;
use std::path::Path;

use filmreduce_core::error::Error;
use filmreduce_core::expansion::{
    cascade_constraints, identity_recovery_expansion, term_energies, DeformationExpansion,
};
use filmreduce_core::grid::{Grid2D, Grid3D};
use filmreduce_core::harness::{
    consistency_report, gamma_limit_check, lift_state, random_membrane_state, random_q0_expansion,
    series_fit, FitReport,
};
use filmreduce_core::limit_energy::{
    el_residual, j0_general, j0_specialized, FrozenData, MembraneState,
};
use filmreduce_core::rescaled_energy::{energy_j, EvalContext};
use filmreduce_core::solver::{boundary_extension_init, minimize};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{RunConfig, StateSpec};

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::ConfigInvalid {
        key: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::ConfigInvalid {
        key: path.display().to_string(),
        message: e.to_string(),
    })
}

fn grid3(cfg: &RunConfig) -> Result<Grid3D, Error> {
    Grid3D::new(cfg.n1, cfg.n2, cfg.n3, cfg.chart.domain)
}

fn grid2(cfg: &RunConfig) -> Result<Grid2D, Error> {
    Grid2D::new(cfg.n1, cfg.n2, cfg.chart.domain)
}

fn membrane_state(cfg: &RunConfig, grid: Grid2D) -> MembraneState {
    match &cfg.state {
        StateSpec::Token(_) => MembraneState::identity_recovery(&cfg.chart, grid),
        StateSpec::Random { amplitude, .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            random_membrane_state(&cfg.chart, grid, *amplitude, &mut rng)
        }
    }
}

fn expansion(cfg: &RunConfig, grid: Grid3D) -> DeformationExpansion {
    match &cfg.state {
        StateSpec::Token(_) => identity_recovery_expansion(&cfg.chart, grid),
        StateSpec::Random { amplitude, .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            random_q0_expansion(&cfg.chart, grid, *amplitude, &mut rng)
        }
    }
}

/// Frame and Jacobian-coefficient dump over the 3D grid.
pub fn cmd_geometry(cfg: &RunConfig) -> Result<i32, Error> {
    let grid = grid3(cfg)?;
    let mut csv = String::from("i,j,k,x1,x2,x3,det_a,c0,c1,c2\n");
    for (i, j, k) in grid.nodes() {
        let (x1, x2, x3) = grid.coord(i, j, k);
        let frame = cfg.chart.frame(x1, x2)?;
        let jc = cfg.chart.jacobian_coeffs(x1, x2, x3);
        writeln!(
            csv,
            "{i},{j},{k},{x1},{x2},{x3},{},{},{},{}",
            frame.det_a, jc.c0, jc.c1, jc.c2
        )
        .unwrap();
    }
    write_file(&cfg.out_dir, "geometry.csv", &csv)?;
    println!(
        "geometry: wrote {} ({} nodes)",
        cfg.out_dir.join("geometry.csv").display(),
        grid.node_count()
    );
    Ok(0)
}

/// Direct 3D energies over the schedule plus the limit-energy breakdown.
pub fn cmd_energy(cfg: &RunConfig) -> Result<i32, Error> {
    let g3 = grid3(cfg)?;
    let state = membrane_state(cfg, g3.plane());
    let exp = lift_state(&state, g3)?;

    let mut csv = String::from("h,i_part,k_part,total\n");
    for h in cfg.schedule.values() {
        let ctx = EvalContext::new(&cfg.chart, g3, cfg.material.clone(), cfg.qform.clone(), h)?;
        let e = energy_j(&exp.sum_at(h), &ctx);
        writeln!(csv, "{h},{},{},{}", e.i_part, e.k_part, e.total).unwrap();
    }
    write_file(&cfg.out_dir, "energy3d.csv", &csv)?;

    let mut csv = String::from("chart,variant,membrane,second_order,total\n");
    let general = j0_general(&state, &cfg.chart, &cfg.material, &cfg.qform)?;
    writeln!(
        csv,
        "{},general,{},{},{}",
        cfg.chart.describe(),
        general.membrane,
        general.second_order,
        general.total
    )
    .unwrap();
    match j0_specialized(
        &state,
        &cfg.chart,
        &cfg.material,
        &cfg.qform,
        cfg.variant.to_energy_variant(),
    ) {
        Ok(special) => {
            let label = match cfg.variant {
                crate::config::Variant::Printed => "printed",
                crate::config::Variant::Derived => "derived",
            };
            writeln!(
                csv,
                "{},{label},{},{},{}",
                cfg.chart.describe(),
                special.membrane,
                special.second_order,
                special.total
            )
            .unwrap();
        }
        Err(Error::UnsupportedChart { .. }) => {}
        Err(e) => return Err(e),
    }
    write_file(&cfg.out_dir, "j0.csv", &csv)?;
    println!(
        "energy: wrote energy3d.csv and j0.csv (J0 general = {})",
        general.total
    );
    Ok(0)
}

/// Cascade constraint report plus the per-order term energies.
pub fn cmd_cascade(cfg: &RunConfig) -> Result<i32, Error> {
    let g3 = grid3(cfg)?;
    let exp = expansion(cfg, g3);
    let report = cascade_constraints(&exp, &cfg.boundary, &cfg.chart, cfg.tolerance);

    let mut csv =
        String::from("i,j,k,x1,x2,x3,phi0_d3,phi1_d33,is_boundary,bnd_phi0,bnd_phi1,bnd_higher\n");
    for row in &report.rows {
        let (i, j, k) = row.node;
        let (x1, x2, x3) = row.coords;
        writeln!(
            csv,
            "{i},{j},{k},{x1},{x2},{x3},{},{},{},{},{},{}",
            row.phi0_d3,
            row.phi1_d33,
            row.is_boundary as u8,
            row.boundary_phi0,
            row.boundary_phi1,
            row.boundary_higher
        )
        .unwrap();
    }
    write_file(&cfg.out_dir, "cascade.csv", &csv)?;

    let h = cfg.schedule.h0;
    let ctx = EvalContext::new(&cfg.chart, g3, cfg.material.clone(), cfg.qform.clone(), h)?;
    let te = term_energies(&exp, &ctx, 2);
    let mut csv = String::from("order,value\n");
    for (n, v) in te.orders() {
        writeln!(csv, "{n},{v}").unwrap();
    }
    write_file(&cfg.out_dir, "term_energies.csv", &csv)?;

    println!("{}", report.summary());
    Ok(if report.pass { 0 } else { 2 })
}

/// Reduced-problem minimization with its history and field dumps.
pub fn cmd_solve(cfg: &RunConfig) -> Result<i32, Error> {
    let g2 = grid2(cfg)?;
    let state = membrane_state(cfg, g2);
    let frozen = FrozenData::from_state(&state);
    let init = boundary_extension_init(&cfg.chart, g2, &cfg.boundary);
    let result = minimize(
        &cfg.chart,
        &frozen,
        &cfg.material,
        &cfg.boundary,
        &init,
        &cfg.solver,
    )?;

    let mut csv = String::from("iteration,energy,grad_norm\n");
    for (it, (e, g)) in result
        .energy_history
        .iter()
        .zip(&result.grad_history)
        .enumerate()
    {
        writeln!(csv, "{it},{e},{g}").unwrap();
    }
    write_file(&cfg.out_dir, "solve_history.csv", &csv)?;

    let mut csv = String::from("x1,x2,u1,u2,u3\n");
    for (i, j) in g2.nodes() {
        let (x1, x2) = g2.coord(i, j);
        let u = result.u.value(i, j);
        writeln!(csv, "{x1},{x2},{},{},{}", u.x, u.y, u.z).unwrap();
    }
    write_file(&cfg.out_dir, "solve_field.csv", &csv)?;

    let res = el_residual(&cfg.chart, &result.u, &frozen, &cfg.material, &cfg.boundary)?;
    println!(
        "solve: {} after {} iterations (grad density {:.3e}, pde residual {:.3e}, boundary {:.3e})",
        if result.converged {
            "converged"
        } else {
            "NOT converged"
        },
        result.iterations,
        result.final_el_residual_norm,
        res.pde_norm,
        res.boundary_max,
    );
    Ok(if result.converged { 0 } else { 2 })
}

fn fit_to_json(
    fit: &Result<FitReport, Error>,
    pass_threshold: f64,
) -> (serde_json::Value, bool, String) {
    match fit {
        Ok(report) => {
            let pass = report.slope >= pass_threshold && report.fit_residual < 0.1;
            let mut csv = String::from("h,j_direct,j_model,residual\n");
            for row in &report.rows {
                writeln!(
                    csv,
                    "{},{},{},{}",
                    row.h, row.direct, row.model, row.residual
                )
                .unwrap();
            }
            (
                serde_json::json!({
                    "slope": report.slope,
                    "intercept": report.intercept,
                    "fit_residual": report.fit_residual,
                    "pass": pass,
                }),
                pass,
                csv,
            )
        }
        Err(Error::DegenerateFit { max_residual }) => (
            serde_json::json!({
                "slope": null,
                "intercept": null,
                "fit_residual": null,
                "pass": true,
                "exact_agreement_below": max_residual,
            }),
            true,
            String::from("h,j_direct,j_model,residual\n"),
        ),
        Err(_) => (
            serde_json::json!({"slope": null, "intercept": null, "fit_residual": null, "pass": false}),
            false,
            String::new(),
        ),
    }
}

/// Truncation-order fit plus the dimension-reduction limit check.
pub fn cmd_validate(cfg: &RunConfig) -> Result<i32, Error> {
    let g3 = grid3(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let amplitude = match &cfg.state {
        StateSpec::Random { amplitude, .. } => *amplitude,
        _ => 0.05,
    };

    let exp = random_q0_expansion(&cfg.chart, g3, amplitude, &mut rng);
    let series = series_fit(
        &exp,
        &cfg.chart,
        &cfg.material,
        &cfg.qform,
        &cfg.schedule,
        0,
    );
    if let Err(e) = &series {
        if !matches!(e, Error::DegenerateFit { .. }) {
            return Err(Error::ConfigInvalid {
                key: "validate.series".to_string(),
                message: e.to_string(),
            });
        }
    }
    let (series_json, series_pass, series_csv) = fit_to_json(&series, 0.9);
    write_file(&cfg.out_dir, "series_fit.csv", &series_csv)?;
    write_file(
        &cfg.out_dir,
        "series_fit.json",
        &serde_json::to_string_pretty(&series_json).unwrap(),
    )?;

    let state = random_membrane_state(&cfg.chart, g3.plane(), amplitude, &mut rng);
    let gamma = gamma_limit_check(
        &state,
        &cfg.chart,
        &cfg.material,
        &cfg.qform,
        g3,
        &cfg.schedule,
    );
    if let Err(e) = &gamma {
        if !matches!(e, Error::DegenerateFit { .. }) {
            return Err(Error::ConfigInvalid {
                key: "validate.gamma".to_string(),
                message: e.to_string(),
            });
        }
    }
    let (gamma_json, gamma_pass, gamma_csv) = fit_to_json(&gamma, 0.9);
    write_file(&cfg.out_dir, "gamma_limit.csv", &gamma_csv)?;
    write_file(
        &cfg.out_dir,
        "gamma_limit.json",
        &serde_json::to_string_pretty(&gamma_json).unwrap(),
    )?;

    let pass = series_pass && gamma_pass;
    let summary = serde_json::json!({
        "series_fit": series_json,
        "gamma_limit": gamma_json,
        "pass": pass,
    });
    write_file(
        &cfg.out_dir,
        "validate.json",
        &serde_json::to_string_pretty(&summary).unwrap(),
    )?;
    println!(
        "validate: series {} / gamma {} -> {}",
        if series_pass { "pass" } else { "fail" },
        if gamma_pass { "pass" } else { "fail" },
        if pass { "PASS" } else { "FAIL" },
    );
    Ok(if pass { 0 } else { 2 })
}

/// Cross-variant audit of the limit-energy routes.
pub fn cmd_crosscheck(cfg: &RunConfig) -> Result<i32, Error> {
    let g2 = grid2(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let amplitude = match &cfg.state {
        StateSpec::Random { amplitude, .. } => *amplitude,
        _ => 0.05,
    };
    let report = consistency_report(
        &cfg.chart,
        &cfg.material,
        &cfg.qform,
        g2,
        cfg.samples,
        amplitude,
        &mut rng,
    )?;
    let mut csv = String::from("sample,general,printed,derived,d_gp,d_gd,d_pd\n");
    for row in &report.rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            row.sample,
            row.general,
            row.printed,
            row.derived,
            row.diff_general_printed,
            row.diff_general_derived,
            row.diff_printed_derived
        )
        .unwrap();
    }
    writeln!(
        csv,
        "max,,,,{},{},{}",
        report.max_general_printed, report.max_general_derived, report.max_printed_derived
    )
    .unwrap();
    write_file(&cfg.out_dir, "crosscheck.csv", &csv)?;
    println!(
        "crosscheck: max |general - printed| = {:.3e}, max |general - derived| = {:.3e}",
        report.max_general_printed, report.max_general_derived
    );
    Ok(0)
}

/// Dispatches a subcommand; `Ok(code)` is the process exit code.
pub fn run(command: &str, cfg: &RunConfig) -> Result<i32, Error> {
    match command {
        "geometry" => cmd_geometry(cfg),
        "energy" => cmd_energy(cfg),
        "cascade" => cmd_cascade(cfg),
        "solve" => cmd_solve(cfg),
        "validate" => cmd_validate(cfg),
        "crosscheck" => cmd_crosscheck(cfg),
        other => Err(Error::ConfigInvalid {
            key: "command".to_string(),
            message: format!("unknown subcommand '{other}'"),
        }),
    }
}
