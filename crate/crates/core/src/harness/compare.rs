use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::Config;
use crate::error::Result;
use crate::two_body::{compare_run, CompareConfig, CompareRow, FAMILIES};

const KEYS: [&str; 9] = ["grid", "eps", "sign", "dt", "t_final", "every", "zero_coupling", "opt_in_large", "out"];

/// `compare2` section over [`CompareConfig::default`], plus the output
/// directory if given.
pub fn compare_config(cfg: &Config) -> Result<(CompareConfig, Option<PathBuf>)> {
    cfg.check_keys("compare2", &KEYS)?;
    let s = "compare2";
    let mut c = CompareConfig::default();
    if let Some(v) = cfg.parsed(s, "grid")? {
        c.n = v;
    }
    if let Some(v) = cfg.parsed(s, "eps")? {
        c.eps = v;
    }
    if let Some(v) = cfg.parsed(s, "sign")? {
        c.sign = v;
    }
    if let Some(v) = cfg.parsed(s, "dt")? {
        c.dt = v;
    }
    if let Some(v) = cfg.parsed(s, "t_final")? {
        c.t_final = v;
    }
    if let Some(v) = cfg.parsed(s, "every")? {
        c.every = v;
    }
    if let Some(v) = cfg.flag(s, "zero_coupling")? {
        c.zero_coupling = v;
    }
    if let Some(v) = cfg.flag(s, "opt_in_large")? {
        c.allow_large = v;
    }
    Ok((c, cfg.get(s, "out").map(PathBuf::from)))
}

/// Every column of a comparison, 17 significant digits.
pub fn format_compare_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from("t");
    for name in ["d", "alpha", "sandwich_slack"] {
        for f in FAMILIES {
            let _ = write!(out, ",{name}_{f}");
        }
    }
    out.push_str(",energy,norm_drift,antisymmetry\n");
    for r in rows {
        let _ = write!(out, "{:.16e}", r.t);
        let slack = r.sandwich.map(|s| s.slack());
        for v in r.distance.iter().chain(&r.alpha).chain(&slack) {
            let _ = write!(out, ",{v:.16e}");
        }
        let _ = writeln!(out, ",{:.16e},{:.16e},{:.16e}", r.energy, r.norm_drift, r.antisymmetry);
    }
    out
}

/// Distances below this are round-off and print as zero in the distance table.
pub const DISTANCE_FLOOR: f64 = 1e-12;

/// Distances against time at 10 significant digits: the golden-file table.
/// The coarser rounding and the [`DISTANCE_FLOOR`] keep it stable across
/// linear-algebra kernels that differ in the last bits.
pub fn format_distance_table(rows: &[CompareRow]) -> String {
    let mut out = String::from("t");
    for f in FAMILIES {
        let _ = write!(out, ",d_{f}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{:.3}", r.t);
        for d in r.distance {
            let d = if d.abs() < DISTANCE_FLOOR { 0.0 } else { d };
            let _ = write!(out, ",{d:.9e}");
        }
        out.push('\n');
    }
    out
}

/// Runs the comparison and writes `compare2.csv` and `distances.csv`.
pub fn run_compare(cfg: &CompareConfig, out: &Path) -> Result<Vec<CompareRow>> {
    let rows = compare_run(cfg)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("compare2.csv"), format_compare_csv(&rows))?;
    std::fs::write(out.join("distances.csv"), format_distance_table(&rows))?;
    Ok(rows)
}
