//! File outputs. Everything goes through [`write_atomic`], so a reader sees
//! either the previous file or the complete new one.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rid_core::rid::{VIDistribution, VariableReport};
use serde::Serialize;

use crate::CliError;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Data(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report serialization cannot fail");
    out.push(b'\n');
    out
}

/// Writes JSON to `path`, or to standard output without one.
pub fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let bytes = to_json(value);
    match path {
        Some(p) => write_atomic(p, &bytes),
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| CliError::Data(format!("stdout: {e}"))),
    }
}

pub fn summary_csv(vars: &[VariableReport]) -> String {
    let mut s = String::from("variable,mean,q25,q50,q75,iqr,bwr_lo,bwr_hi,p_gt_zero\n");
    for v in vars {
        let t = &v.stats;
        let name = if v.name.contains([',', '"', '\n']) {
            format!("\"{}\"", v.name.replace('"', "\"\""))
        } else {
            v.name.clone()
        };
        writeln!(
            s,
            "{name},{},{},{},{},{},{},{},{}",
            t.mean, t.q25, t.q50, t.q75, t.iqr, t.bwr[0], t.bwr[1], t.p_gt_zero
        )
        .unwrap();
    }
    s
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 610.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 420.0;

/// Step plot of a distribution's CDF over its support.
pub fn cdf_svg(name: &str, dist: &VIDistribution) -> String {
    let (lo, hi) = dist.support();
    let x = |v: f64| LEFT + (v - lo) / (hi - lo) * (RIGHT - LEFT);
    let y = |f: f64| BOTTOM - f.clamp(0.0, 1.0) * (BOTTOM - TOP);
    let mut points = vec![(x(lo), y(0.0))];
    let mut cum = 0.0;
    for &(v, w) in dist.atoms() {
        points.push((x(v), y(cum)));
        cum += w;
        points.push((x(v), y(cum)));
    }
    points.push((x(hi), y(cum)));
    let polyline = points
        .iter()
        .map(|(a, b)| format!("{a:.2},{b:.2}"))
        .collect::<Vec<_>>()
        .join(" ");

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#).unwrap();
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="30" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape_xml(name)).unwrap();
    writeln!(s, r#"<path d="M{LEFT} {TOP} V{BOTTOM} H{RIGHT}" fill="none" stroke="black"/>"#).unwrap();
    writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{RIGHT}" y2="{TOP}" stroke="lightgray" stroke-dasharray="4 4"/>"#).unwrap();
    let zero = x(0.0);
    if zero > LEFT && zero < RIGHT {
        writeln!(s, r#"<line x1="{zero:.2}" y1="{TOP}" x2="{zero:.2}" y2="{BOTTOM}" stroke="lightgray" stroke-dasharray="4 4"/>"#).unwrap();
    }
    let label = |s: &mut String, x: f64, y: f64, anchor: &str, text: &str| {
        writeln!(s, r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="12" text-anchor="{anchor}">{text}</text>"#).unwrap();
    };
    label(&mut s, LEFT, BOTTOM + 18.0, "middle", &format!("{lo}"));
    label(&mut s, RIGHT, BOTTOM + 18.0, "middle", &format!("{hi}"));
    label(&mut s, (LEFT + RIGHT) / 2.0, BOTTOM + 40.0, "middle", "importance");
    label(&mut s, LEFT - 8.0, BOTTOM + 4.0, "end", "0");
    label(&mut s, LEFT - 8.0, TOP + 4.0, "end", "1");
    label(&mut s, LEFT - 30.0, (TOP + BOTTOM) / 2.0, "middle", "CDF");
    writeln!(s, r#"<polyline points="{polyline}" fill="none" stroke="steelblue" stroke-width="2"/>"#).unwrap();
    s.push_str("</svg>\n");
    s
}

/// File name for a variable's plot: unsafe characters become `_`.
pub fn plot_name(index: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{index:03}_{clean}.svg")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_a_step_function() {
        let d = VIDistribution::from_weighted([(0.0, 0.5), (0.5, 0.5)], (-1.0, 1.0)).unwrap();
        let s = cdf_svg("x<1", &d);
        assert!(s.contains("x&lt;1"));
        assert!(s.contains(r#"points="70.00,420.00 340.00,420.00 340.00,235.00 475.00,235.00 475.00,50.00 610.00,50.00""#));
        assert_eq!(s, cdf_svg("x<1", &d));
    }

    #[test]
    fn plot_names_are_safe() {
        assert_eq!(plot_name(2, "a b/c"), "002_a_b_c.svg");
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.json");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
