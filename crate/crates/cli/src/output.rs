//! Result emission: CSV tables with 17-significant-digit floats, JSON
//! reports, and the effective-config echo. All writers are deterministic.

use anyhow::Context;
use semiclassical::assembly::SemiclassicalField;
use semiclassical::dynamics::BranchClass;
use semiclassical::oracle::GridWaveFunction;
use std::fmt::Write as _;
use std::path::Path;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn class_name(c: BranchClass) -> &'static str {
    match c {
        BranchClass::Contributing => "contributing",
        BranchClass::DiscardedLarge => "discarded_large",
        BranchClass::CausticAdjacent => "caustic_adjacent",
        BranchClass::Duplicate => "duplicate",
    }
}

/// One row per (target, branch) plus a total row per target.
pub fn field_csv(field: &SemiclassicalField) -> String {
    let d = field.targets.first().map_or(1, Vec::len);
    let mut out = String::new();
    for i in 0..d {
        let _ = write!(out, "target_{i},");
    }
    out.push_str("branch,");
    for i in 0..d {
        let _ = write!(out, "x_start_re_{i},x_start_im_{i},");
    }
    out.push_str("psi_re,psi_im,classification\n");

    for r in &field.results {
        let coords: String = r.target.iter().map(|t| fmt_f64(*t) + ",").collect();
        for b in &r.branches {
            out.push_str(&coords);
            let _ = write!(out, "{},", b.branch_id);
            for z in &b.x_start {
                let _ = write!(out, "{},{},", fmt_f64(z.re), fmt_f64(z.im));
            }
            let _ = writeln!(
                out,
                "{},{},{}",
                fmt_f64(b.contribution.re),
                fmt_f64(b.contribution.im),
                class_name(b.classification)
            );
        }
        out.push_str(&coords);
        out.push_str("total,");
        for _ in 0..d {
            out.push_str(",,");
        }
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt_f64(r.total.re),
            fmt_f64(r.total.im),
            if r.empty { "empty" } else { "total" }
        );
    }
    out
}

/// Grid metadata JSON plus interleaved re/im CSV columns.
pub fn grid_csv(g: &GridWaveFunction) -> String {
    let d = g.dim();
    let mut out = String::new();
    for i in 0..d {
        let _ = write!(out, "x_{i},");
    }
    out.push_str("re,im\n");
    match d {
        1 => {
            for (k, a) in g.amplitudes.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    fmt_f64(g.coord(0, k)),
                    fmt_f64(a.re),
                    fmt_f64(a.im)
                );
            }
        }
        _ => {
            let n1 = g.n_points[1];
            for (k, a) in g.amplitudes.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    fmt_f64(g.coord(0, k / n1)),
                    fmt_f64(g.coord(1, k % n1)),
                    fmt_f64(a.re),
                    fmt_f64(a.im)
                );
            }
        }
    }
    out
}

pub fn grid_metadata(g: &GridWaveFunction) -> serde_json::Value {
    serde_json::json!({
        "lo": g.lo,
        "hi": g.hi,
        "n_points": g.n_points,
        "hbar": g.hbar,
        "masses": g.masses,
        "t": g.t,
        "norm": g.norm(),
    })
}

pub fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output dir {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> anyhow::Result<()> {
    write(dir, name, &(serde_json::to_string_pretty(value)? + "\n"))
}
