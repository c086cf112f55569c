//! CSV artifacts and atomic file writes.
//!
//! All CSVs are UTF-8, comma-separated with `.` decimals and mandatory
//! headers. Floats are printed with Rust's shortest round-trip formatting,
//! so reruns of the same configuration produce byte-identical files.

use std::io::Write;
use std::path::{Path, PathBuf};

use nrd_core::experiments::{ComparisonReport, DifflimitStudy};
use nrd_core::grid::{write_snapshot_csv, Field};
use nrd_core::integrate::Trajectory;

use crate::CliError;

/// Write through a temp file in the target directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    let tmp: PathBuf = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", tmp.display())))?;
        f.write_all(bytes)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", tmp.display())))?;
        f.sync_all().ok();
    }
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::Config(format!("cannot rename to {}: {e}", path.display())))?;
    Ok(())
}

pub fn snapshot_bytes(field: &Field) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_snapshot_csv(&mut buf, field)
        .map_err(|e| CliError::Config(format!("snapshot: {e}")))?;
    Ok(buf)
}

/// Diagnostics series: one row per accepted step.
pub fn diagnostics_csv(traj: &Trajectory, m: usize, lp_orders: &[u32]) -> Vec<u8> {
    let mut out = String::new();
    out.push('t');
    for c in 1..=m {
        out.push_str(&format!(",min_u{c},max_u{c}"));
    }
    out.push_str(",weighted_mass");
    for p in lp_orders {
        out.push_str(&format!(",lp_energy_p{p}"));
    }
    out.push_str(",dissipation");
    for c in 1..=m {
        out.push_str(&format!(",cfl_u{c}"));
    }
    out.push('\n');
    for rec in &traj.diagnostics {
        out.push_str(&format!("{}", rec.t));
        for c in 0..m {
            out.push_str(&format!(",{},{}", rec.min[c], rec.max[c]));
        }
        out.push_str(&format!(",{}", rec.weighted_mass));
        for v in &rec.lp_energy {
            out.push_str(&format!(",{v}"));
        }
        match rec.dissipation {
            Some(y) => out.push_str(&format!(",{y}")),
            None => out.push(','),
        }
        for v in &rec.cfl_margins {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out.into_bytes()
}

/// Convergence table: one row per scale index.
pub fn convergence_csv(study: &DifflimitStudy, m: usize) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("j,eps");
    for c in 1..=m {
        out.push_str(&format!(",l2_diff_u{c}"));
    }
    for c in 1..=m {
        out.push_str(&format!(",linf_diff_u{c}"));
    }
    for c in 1..=m {
        for node in 0..5 {
            out.push_str(&format!(",node{node}_u{c}"));
        }
    }
    out.push('\n');
    for row in &study.table.rows {
        out.push_str(&format!("{}", row.j));
        match row.eps {
            Some(e) => out.push_str(&format!(",{e}")),
            None => out.push(','),
        }
        for v in &row.l2_diff {
            out.push_str(&format!(",{v}"));
        }
        for v in &row.linf_diff {
            out.push_str(&format!(",{v}"));
        }
        for comp in &row.node_diffs {
            for v in comp {
                out.push_str(&format!(",{v}"));
            }
        }
        out.push('\n');
    }
    out.into_bytes()
}

/// Markdown rendering of the convergence table.
pub fn convergence_markdown(study: &DifflimitStudy, m: usize) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("# Kernel-rescaling convergence\n\n");
    out.push_str(&format!(
        "Second moment M = {:.6e}; matched local diffusivities: {:?}; dt = {:.6e}\n\n",
        study.second_moment, study.local_diffusivities, study.dt
    ));
    out.push_str("| j | eps |");
    for c in 1..=m {
        out.push_str(&format!(" l2_diff_u{c} |"));
    }
    for c in 1..=m {
        out.push_str(&format!(" linf_diff_u{c} |"));
    }
    out.push('\n');
    out.push_str("|---|-----|");
    for _ in 0..2 * m {
        out.push_str("---|");
    }
    out.push('\n');
    for row in &study.table.rows {
        out.push_str(&format!("| {} |", row.j));
        match row.eps {
            Some(e) => out.push_str(&format!(" {e:.4} |")),
            None => out.push_str(" - |"),
        }
        for v in &row.l2_diff {
            out.push_str(&format!(" {v:.6e} |"));
        }
        for v in &row.linf_diff {
            out.push_str(&format!(" {v:.6e} |"));
        }
        out.push('\n');
    }
    out.into_bytes()
}

/// Smoothness-proxy series of a side-by-side run.
pub fn comparison_csv(report: &ComparisonReport, m: usize) -> Vec<u8> {
    let mut out = String::new();
    out.push('t');
    for c in 1..=m {
        out.push_str(&format!(",h1_a_u{c},h1_b_u{c}"));
    }
    for c in 1..=m {
        out.push_str(&format!(",max2_a_u{c},max2_b_u{c}"));
    }
    out.push('\n');
    for s in &report.series {
        out.push_str(&format!("{}", s.t));
        for c in 0..m {
            out.push_str(&format!(",{},{}", s.h1_a[c], s.h1_b[c]));
        }
        for c in 0..m {
            out.push_str(&format!(",{},{}", s.max_second_a[c], s.max_second_b[c]));
        }
        out.push('\n');
    }
    out.into_bytes()
}
