//! The four batch commands: simulate, audit, difflimit, compare.

use std::path::{Path, PathBuf};

use nrd_core::experiments::{
    fit_convergence_order, run_difflimit_study, run_side_by_side, TableNorm,
};
use nrd_core::integrate::run;

use crate::artifacts::{
    atomic_write, comparison_csv, convergence_csv, convergence_markdown, diagnostics_csv,
    snapshot_bytes,
};
use crate::config::{build_difflimit, build_system, LoadedConfig};
use crate::report::{run_audit, termination_label, Report};
use crate::CliError;

/// Integrate the configured system, writing snapshots, the diagnostics
/// series and a report. When the audit flag is set the hypothesis checkers
/// run first and a failure stops the run before any stepping.
pub fn cmd_simulate(loaded: &LoadedConfig, out_dir: &Path) -> Result<(), CliError> {
    let built = build_system(loaded)?;
    let mut report = Report::new("simulate", &loaded.path);
    report.echo_parameters(&built.echo);

    if built.audit.enabled {
        let outcome = run_audit(&built.system.reaction, &built.audit)?;
        report.section("assumption audit");
        for line in &outcome.lines {
            report.line(line);
        }
        if !outcome.all_pass {
            report.section("run");
            report.line("not started: assumption audit failed");
            atomic_write(&out_dir.join("report.txt"), &report.finish())?;
            return Err(CliError::AuditFailed);
        }
    }

    let traj = run(&built.system, &built.solver)
        .map_err(|e| CliError::Config(format!("run: {e}")))?;

    let m = built.system.num_components();
    atomic_write(
        &out_dir.join("diagnostics.csv"),
        &diagnostics_csv(&traj, m, &built.solver.diagnostics.lp_orders),
    )?;
    if built.write_snapshots {
        for snap in &traj.snapshots {
            let name = format!("snapshot_{:06}.csv", snap.step);
            atomic_write(&out_dir.join(name), &snapshot_bytes(&snap.field)?)?;
        }
    }
    atomic_write(
        &out_dir.join("snapshot_final.csv"),
        &snapshot_bytes(&traj.final_field)?,
    )?;

    report.theta_certificates(&traj.theta, &built.system.diffusivities());
    report.run_summary(&traj);
    atomic_write(&out_dir.join("report.txt"), &report.finish())?;

    if traj.termination.is_completed() {
        Ok(())
    } else {
        eprintln!("terminated: {}", termination_label(&traj.termination));
        Err(CliError::Runtime(termination_label(&traj.termination)))
    }
}

/// Run every applicable hypothesis checker and report pass/fail with
/// witnesses.
pub fn cmd_audit(loaded: &LoadedConfig, out_dir: &Path) -> Result<(), CliError> {
    let reaction = crate::config::build_reaction(&loaded.config.reaction)?;
    let built_audit = {
        // Reuse the full builder for settings without assembling operators.
        let defaults = crate::config::AuditSettings {
            enabled: true,
            checker: Default::default(),
            t_samples: 16,
            u_samples: 400,
        };
        match &loaded.config.audit {
            None => defaults,
            Some(a) => crate::config::AuditSettings {
                enabled: true,
                checker: nrd_core::reactions::CheckerSettings {
                    samples: a.samples.unwrap_or(defaults.checker.samples),
                    box_max: a.box_max.unwrap_or(defaults.checker.box_max),
                    seed: a.seed.unwrap_or(defaults.checker.seed),
                },
                t_samples: a.t_samples.unwrap_or(16),
                u_samples: a.u_samples.unwrap_or(400),
            },
        }
    };
    let outcome = run_audit(&reaction, &built_audit)?;
    let mut report = Report::new("audit", &loaded.path);
    report.section("assumption audit");
    report.line(format!("reaction: {}", reaction.name()));
    for line in &outcome.lines {
        report.line(line);
    }
    report.line(if outcome.all_pass {
        "result: all declared hypotheses pass"
    } else {
        "result: FAILURES above"
    });
    atomic_write(&out_dir.join("report.txt"), &report.finish())?;
    if outcome.all_pass {
        Ok(())
    } else {
        Err(CliError::AuditFailed)
    }
}

/// Run the kernel-rescaling study and write the convergence table, its
/// markdown rendering, final snapshots and the fitted order.
pub fn cmd_difflimit(loaded: &LoadedConfig, out_dir: &Path) -> Result<(), CliError> {
    let (spec, config, built) = build_difflimit(loaded)?;
    let study = run_difflimit_study(&spec, &config)
        .map_err(|e| CliError::Runtime(format!("difflimit: {e}")))?;
    let m = spec.reaction.num_components();

    atomic_write(
        &out_dir.join("convergence_table.csv"),
        &convergence_csv(&study, m),
    )?;
    atomic_write(&out_dir.join("table.md"), &convergence_markdown(&study, m))?;
    atomic_write(
        &out_dir.join("snapshot_local.csv"),
        &snapshot_bytes(&study.local_final)?,
    )?;
    for (j, field) in &study.nonlocal_finals {
        atomic_write(
            &out_dir.join(format!("snapshot_j{j}.csv")),
            &snapshot_bytes(field)?,
        )?;
    }

    let mut report = Report::new("difflimit", &loaded.path);
    report.echo_parameters(&built.echo);
    report.section("study");
    report.line(format!("j list: {:?}", config.j_list));
    report.line(format!("second moment M = {:e}", study.second_moment));
    report.line(format!(
        "matched local diffusivities: {:?}",
        study.local_diffusivities
    ));
    report.line(format!("common dt: {:e}", study.dt));
    for note in &study.notes {
        report.line(format!("note: {note}"));
    }
    if study.table.rows.len() >= 3 {
        for (norm, label) in [(TableNorm::L2, "l2"), (TableNorm::LInf, "linf")] {
            let order = fit_convergence_order(&study.table, norm)
                .map_err(|e| CliError::Config(format!("order fit: {e}")))?;
            report.line(format!(
                "fitted order ({label}): {:.4} (fit residual {:.3e})",
                order.order, order.fit_residual
            ));
        }
    }
    for row in &study.table.rows {
        report.line(format!(
            "j = {}: combined l2 diff {:e}, linf {:e}",
            row.j,
            row.l2_combined(),
            row.linf_combined()
        ));
    }
    atomic_write(&out_dir.join("report.txt"), &report.finish())?;
    Ok(())
}

/// Run two configurations side by side and report the smoothness proxies.
pub fn cmd_compare(
    loaded_a: &LoadedConfig,
    loaded_b: &LoadedConfig,
    out_dir: &Path,
) -> Result<(), CliError> {
    let built_a = build_system(loaded_a)?;
    let built_b = build_system(loaded_b)?;
    let report_data = run_side_by_side(&built_a.system, &built_b.system, &built_a.solver)
        .map_err(|e| CliError::Config(format!("compare: {e}")))?;
    let m = built_a.system.num_components();

    atomic_write(
        &out_dir.join("comparison.csv"),
        &comparison_csv(&report_data, m),
    )?;
    atomic_write(
        &out_dir.join("final_a.csv"),
        &snapshot_bytes(&report_data.final_a)?,
    )?;
    atomic_write(
        &out_dir.join("final_b.csv"),
        &snapshot_bytes(&report_data.final_b)?,
    )?;

    let mut report = Report::new("compare", &loaded_a.path);
    report.line(format!("config b: {}", loaded_b.path));
    report.echo_parameters(&built_a.echo);
    report.section("comparison");
    report.line(format!("dt: {:e}", report_data.dt));
    report.line(format!(
        "termination a: {}",
        termination_label(&report_data.termination_a)
    ));
    report.line(format!(
        "termination b: {}",
        termination_label(&report_data.termination_b)
    ));
    for c in 0..m {
        let (h1a, h1b) = report_data.final_h1(c);
        let verdict = if h1b < h1a { "b smoother" } else { "a smoother or equal" };
        report.line(format!(
            "component {}: final H1 a = {:e}, b = {:e} ({verdict})",
            c + 1,
            h1a,
            h1b
        ));
    }
    atomic_write(&out_dir.join("report.txt"), &report.finish())?;

    if report_data.termination_a.is_completed() && report_data.termination_b.is_completed() {
        Ok(())
    } else {
        Err(CliError::Runtime("a side-by-side run terminated early".into()))
    }
}

/// Resolve the output directory: flag, then config, then environment, then
/// a local default.
pub fn resolve_out_dir(flag: Option<PathBuf>, loaded: &LoadedConfig) -> PathBuf {
    if let Some(dir) = flag {
        return dir;
    }
    if let Some(dir) = loaded
        .config
        .output
        .as_ref()
        .and_then(|o| o.dir.as_ref())
    {
        return PathBuf::from(dir);
    }
    if let Ok(dir) = std::env::var("NRD_OUT_DIR") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from("nrd-out")
}
