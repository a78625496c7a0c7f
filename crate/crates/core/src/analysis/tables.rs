//! CSV summaries in the layout of the published tables, and minimal SVG
//! line plots.

use std::fmt::Write as _;

use crate::error::Result;
use crate::metrics::AggregateMetrics;

use super::SweepReport;

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

fn metric_cells(a: &AggregateMetrics) -> Vec<String> {
    [a.em, a.pm, a.bleu, a.em_max, a.pm_max, a.bleu_max]
        .into_iter()
        .map(fmt2)
        .collect()
}

const METRIC_HEADER: [&str; 6] = ["EM", "PM", "BLEU", "EM-max", "PM-max", "BLEU-max"];

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One row per labelled configuration.
pub fn recovery_csv(rows: &[(String, AggregateMetrics)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["Config"];
    header.extend(METRIC_HEADER);
    w.write_record(&header)?;
    for (label, a) in rows {
        let mut rec = vec![label.clone()];
        rec.extend(metric_cells(a));
        w.write_record(&rec)?;
    }
    finish(w)
}

/// "Complete" rows (genre macro-average) per dimension, then one block per
/// genre.
pub fn dimension_csv(report: &SweepReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["Dataset", "Dimension"];
    header.extend(METRIC_HEADER);
    w.write_record(&header)?;
    let push =
        |w: &mut csv::Writer<Vec<u8>>, name: &str, dp: usize, a: &AggregateMetrics| -> Result<()> {
            let mut rec = vec![name.to_string(), dp.to_string()];
            rec.extend(metric_cells(a));
            w.write_record(&rec)?;
            Ok(())
        };
    for d in &report.dims {
        push(&mut w, "Complete", d.d_prime, &d.macro_mean)?;
    }
    let genres: std::collections::BTreeSet<&String> =
        report.dims.iter().flat_map(|d| d.genres.keys()).collect();
    for g in genres {
        for d in &report.dims {
            if let Some(a) = d.genres.get(g) {
                push(&mut w, g, d.d_prime, a)?;
            }
        }
    }
    finish(w)
}

/// One row per (d', length bin, genre) cell.
pub fn cells_csv(report: &SweepReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["Dimension", "Bin", "Genre", "Sentences"];
    header.extend(METRIC_HEADER);
    header.extend(["EM-std", "PM-std", "BLEU-std"]);
    w.write_record(&header)?;
    for c in &report.cells {
        let mut rec = vec![
            c.d_prime.to_string(),
            c.bin_label.clone(),
            c.genre.clone(),
            c.n_sentences.to_string(),
        ];
        rec.extend(metric_cells(&c.mean));
        rec.extend([c.em_std, c.pm_std, c.bleu_std].into_iter().map(fmt2));
        w.write_record(&rec)?;
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h, m) = (640.0, 400.0, 60.0);
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#,
        h - m,
        w - m,
        h - m,
        h - m
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{fx:.3}</text>"#,
            sx(fx),
            h - m + 16.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{fy:.3}</text>"#,
            m - 6.0,
            sy(fy) + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        w / 2.0,
        h - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{c}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let ly = m + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{c}"/>"#,
            w - m - 110.0,
            ly - 9.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly}">{}</text>"#,
            w - m - 95.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovery_layout() {
        let a = AggregateMetrics {
            n: 4,
            em: 99.0,
            pm: 99.0,
            bleu: 98.9,
            em_max: 100.0,
            pm_max: 100.0,
            bleu_max: 100.0,
        };
        let csv = recovery_csv(&[("Xavier All None".into(), a)]).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "Config,EM,PM,BLEU,EM-max,PM-max,BLEU-max"
        );
        assert_eq!(
            lines.next().unwrap(),
            "Xavier All None,99.00,99.00,98.90,100.00,100.00,100.00"
        );
    }

    #[test]
    fn svg_is_well_formed() {
        let s = line_plot_svg(
            "t <1>",
            "x",
            "y",
            &[Series {
                name: "a".into(),
                points: vec![(0.0, 1.0), (1.0, 2.0)],
            }],
        );
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("t &lt;1&gt;"));
        assert_eq!(s.matches("<circle").count(), 2);
        assert!(line_plot_svg("e", "x", "y", &[]).contains("</svg>"));
    }
}
