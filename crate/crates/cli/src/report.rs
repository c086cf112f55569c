//! Human-readable run report: effective parameters (with default markers),
//! audit results, certificates and the run summary.

use nrd_core::diagnostics::{build_m_matrix, leading_principal_minors, ThetaWeights};
use nrd_core::integrate::{Termination, Trajectory};
use nrd_core::reactions::{
    check_intsum, check_intsum_periodic, check_qbal, check_quasi_positivity, estimate_poly_degree,
    ReactionSystem, CHECKER_DISCLAIMER,
};

use crate::config::AuditSettings;
use crate::CliError;

pub struct Report {
    text: String,
}

impl Report {
    pub fn new(command: &str, config_path: &str) -> Self {
        let mut text = String::new();
        text.push_str(&format!(
            "nrd {} v{}\ncommand: {command}\nconfig: {config_path}\n",
            env!("CARGO_PKG_NAME"),
            env!("CARGO_PKG_VERSION")
        ));
        Report { text }
    }

    pub fn section(&mut self, title: &str) {
        self.text.push_str(&format!("\n== {title} ==\n"));
    }

    pub fn line(&mut self, s: impl AsRef<str>) {
        self.text.push_str(s.as_ref());
        self.text.push('\n');
    }

    /// Echo every effective parameter; defaulted values are marked so no
    /// default stays silent.
    pub fn echo_parameters(&mut self, echo: &[(String, String, bool)]) {
        self.section("parameters");
        for (key, value, defaulted) in echo {
            if *defaulted {
                self.line(format!("{key} = {value} (default)"));
            } else {
                self.line(format!("{key} = {value}"));
            }
        }
    }

    pub fn theta_certificates(&mut self, theta: &[ThetaWeights], d: &[f64]) {
        if theta.is_empty() {
            return;
        }
        self.section("theta certificates");
        for w in theta {
            let minors = build_m_matrix(&w.theta, d)
                .map(|m| leading_principal_minors(&m))
                .unwrap_or_default();
            self.line(format!(
                "p = {}: theta = {:?}, certified = {}, leading minors = {:?}",
                w.p, w.theta, w.certified, minors
            ));
        }
    }

    pub fn run_summary(&mut self, traj: &Trajectory) {
        self.section("run");
        self.line(format!("steps accepted: {}", traj.times.len() - 1));
        self.line(format!("dt: {:e} (stability limit {:e})", traj.dt, traj.stable_dt));
        if traj.dt_overridden {
            self.line("dt override: requested step above the stability limit");
        }
        self.line(format!("termination: {}", termination_label(&traj.termination)));
        if traj.newton.solves > 0 {
            self.line(format!(
                "newton: {} solves, max {} iterations, {} linear iterations total",
                traj.newton.solves, traj.newton.max_iterations, traj.newton.total_linear_iterations
            ));
        }
        for note in &traj.notes {
            self.line(format!("note: {note}"));
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

pub fn termination_label(t: &Termination) -> String {
    match t {
        Termination::Completed => "completed".into(),
        Termination::BlowUp {
            t,
            component,
            max_value,
        } => format!("blow_up at t = {t} (component {component}, max finite value {max_value})"),
        Termination::Negativity {
            t,
            component,
            min_value,
        } => format!("negativity at t = {t} (component {component}, min value {min_value})"),
        Termination::NewtonFailure { t } => format!("newton_failure at t = {t}"),
    }
}

pub struct AuditOutcome {
    pub all_pass: bool,
    pub lines: Vec<String>,
}

/// Run every checker the reaction declares metadata for.
pub fn run_audit(
    reaction: &ReactionSystem,
    settings: &AuditSettings,
) -> Result<AuditOutcome, CliError> {
    let mut lines = Vec::new();
    let mut all_pass = true;
    lines.push(format!("[{}]", CHECKER_DISCLAIMER));
    lines.push(
        "local Lipschitz continuity: holds automatically for polynomial fields (not sampled)"
            .into(),
    );

    let qp = check_quasi_positivity(reaction, &settings.checker);
    all_pass &= qp.pass;
    lines.push(format!(
        "quasi-positivity: {}",
        if qp.pass { "pass" } else { "FAIL" }
    ));
    for (i, w) in qp.per_component.iter().enumerate() {
        lines.push(format!(
            "  face u_{} = 0: worst f = {:e} at t = {}, u = {:?}",
            i + 1,
            w.value,
            w.t,
            w.u
        ));
    }

    if reaction.metadata().qbal_weights.is_some() {
        let qb = check_qbal(reaction, &settings.checker)
            .map_err(|e| CliError::Config(format!("audit: {e}")))?;
        all_pass &= qb.pass;
        lines.push(format!(
            "quasi-balance: {} (L_hat = {:e}, declared balanced = {})",
            if qb.pass { "pass" } else { "FAIL" },
            qb.l_hat,
            qb.balanced_declared
        ));
    } else {
        lines.push("quasi-balance: skipped (no weights declared)".into());
    }

    if reaction.metadata().intsum_matrix.is_some() {
        let is = check_intsum(reaction, &settings.checker)
            .map_err(|e| CliError::Config(format!("audit: {e}")))?;
        all_pass &= is.pass;
        lines.push(format!(
            "intermediate sums: {} (row estimates {:?}, declared bound {:?})",
            if is.pass { "pass" } else { "FAIL" },
            is.l_hat_rows,
            is.declared_bound
        ));
        if !is.pass {
            lines.push(format!(
                "  worst violation {:e} at t = {}, u = {:?}",
                is.worst_violation, is.witness.t, is.witness.u
            ));
        }
    } else {
        lines.push("intermediate sums: skipped (no matrix declared)".into());
    }

    if reaction.metadata().periodic_damping.is_some() {
        let pr = check_intsum_periodic(
            reaction,
            settings.t_samples,
            settings.u_samples,
            settings.checker.seed,
        )
        .map_err(|e| CliError::Config(format!("audit: {e}")))?;
        all_pass &= pr.pass;
        lines.push(format!(
            "periodic damping: {} (worst residual {:e})",
            if pr.pass { "pass" } else { "FAIL" },
            pr.worst_residual
        ));
        if !pr.pass {
            lines.push(format!(
                "  witness t = {}, u = {:?}",
                pr.witness.t, pr.witness.u
            ));
        }
    } else {
        lines.push("periodic damping: skipped (no damping declared)".into());
    }

    match estimate_poly_degree(reaction, settings.checker.box_max) {
        Ok(est) => {
            let declared = reaction.metadata().poly_degree;
            let ok = declared.is_none_or(|r| r == est.degree);
            all_pass &= ok;
            lines.push(format!(
                "growth degree: {} (estimated {}, declared {:?}, tail slope {:.3})",
                if ok { "pass" } else { "FAIL" },
                est.degree,
                declared,
                est.slope
            ));
        }
        Err(e) => {
            all_pass = false;
            lines.push(format!("growth degree: FAIL ({e})"));
        }
    }

    Ok(AuditOutcome { all_pass, lines })
}
