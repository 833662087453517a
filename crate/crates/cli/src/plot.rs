use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::config::ConfigError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 55.0;
const TICKS: usize = 5;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Seed-averaged learning curve of one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub algo: String,
    pub points: Vec<(usize, f64)>,
}

/// Reads every `curve_*.csv` under `dir` and averages seeds per algorithm.
pub fn read_curves(dir: &Path) -> Result<Vec<Series>> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("curve_") && name.ends_with(".csv")
        })
        .collect();
    files.sort();
    if files.is_empty() {
        bail!(ConfigError(format!("{}: no curve_*.csv files", dir.display())));
    }

    // algo -> queries -> (sum, count)
    let mut acc: BTreeMap<String, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for path in &files {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut algo = None;
        let name_of = |algo: &Option<String>| algo.clone().unwrap_or_else(|| algo_from_name(path));
        let mut rows = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(meta) = line.strip_prefix('#') {
                algo = meta
                    .split_whitespace()
                    .find_map(|kv| kv.strip_prefix("algo="))
                    .map(str::to_string);
                continue;
            }
            if line.is_empty() || line == "queries,test_error" {
                continue;
            }
            let parse = || -> Option<(usize, f64)> {
                let (q, e) = line.split_once(',')?;
                Some((q.trim().parse().ok()?, e.trim().parse().ok()?))
            };
            match parse() {
                Some(p) => rows.push(p),
                None => bail!("{}:{}: expected `queries,test_error`", path.display(), k + 1),
            }
        }
        let entry = acc.entry(name_of(&algo)).or_default();
        for (q, e) in rows {
            let slot = entry.entry(q).or_insert((0.0, 0));
            slot.0 += e;
            slot.1 += 1;
        }
    }
    Ok(acc
        .into_iter()
        .map(|(algo, m)| Series {
            algo,
            points: m.into_iter().map(|(q, (s, c))| (q, s / c as f64)).collect(),
        })
        .collect())
}

fn algo_from_name(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("curve");
    let rest = stem.strip_prefix("curve_").unwrap_or(stem);
    match rest.rsplit_once('_') {
        Some((a, _)) => a.to_string(),
        None => rest.to_string(),
    }
}

fn fmt_tick(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e9 {
        format!("{}", v as i64)
    } else {
        format!("{v:.3}")
    }
}

/// Renders the series as an SVG line chart. Output depends only on the input.
pub fn render_svg(series: &[Series]) -> String {
    let q_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let e_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .fold(0.0f64, f64::max);
    let e_max = if e_max > 0.0 { (e_max * 1.1).min(1.0).max(e_max) } else { 1.0 };
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |q: f64| LEFT + pw * q / q_max;
    let sy = |e: f64| TOP + ph * (1.0 - e / e_max);

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    let (x0, y0, x1, y1) = (LEFT, TOP + ph, LEFT + pw, TOP);
    writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#).unwrap();
    writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#).unwrap();
    for k in 0..=TICKS {
        let f = k as f64 / TICKS as f64;
        let (qx, ey) = (sx(f * q_max), sy(f * e_max));
        writeln!(
            svg,
            r#"<line x1="{qx:.2}" y1="{y0}" x2="{qx:.2}" y2="{:.2}" stroke="black"/><text x="{qx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 18.0,
            fmt_tick((f * q_max * 100.0).round() / 100.0)
        )
        .unwrap();
        writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{ey:.2}" x2="{x0}" y2="{ey:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            ey + 4.0,
            fmt_tick((f * e_max * 1000.0).round() / 1000.0)
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">queries</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">test error</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    )
    .unwrap();

    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(q, e)| format!("{:.2},{:.2}", sx(q as f64), sy(e)))
            .collect();
        writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        )
        .unwrap();
        if let [(q, e)] = s.points[..] {
            writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                sx(q as f64),
                sy(e)
            )
            .unwrap();
        }
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = WIDTH - RIGHT + 15.0;
        writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.algo)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn cmd_plot(curves_dir: &Path, out: &Path) -> Result<usize> {
    let series = read_curves(curves_dir)?;
    fs::write(out, render_svg(&series)).with_context(|| format!("writing {}", out.display()))?;
    Ok(series.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algo_name_falls_back_to_file_name() {
        assert_eq!(algo_from_name(Path::new("x/curve_upal_3.csv")), "upal");
        assert_eq!(algo_from_name(Path::new("curve_my_algo_10.csv")), "my_algo");
    }

    #[test]
    fn empty_series_still_renders() {
        let svg = render_svg(&[Series { algo: "a<b".into(), points: vec![] }]);
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }
}
