use std::fmt::Write as _;
use std::io::{self, Write};

use super::EvalReport;

/// `metric,value` rows: rank1, rank5, rank10, val_acc, n_probes.
pub fn write_report_csv<W: Write>(report: &EvalReport, out: &mut W) -> io::Result<()> {
    writeln!(out, "metric,value")?;
    for k in super::REPORTED_RANKS {
        writeln!(out, "rank{k},{}", report.rank(k))?;
    }
    match report.val_accuracy {
        Some(acc) => writeln!(out, "val_acc,{acc}")?,
        None => writeln!(out, "val_acc,")?,
    }
    writeln!(out, "n_probes,{}", report.n_probes)
}

/// `rank,match_rate` rows, ranks from 1.
pub fn write_cmc_csv<W: Write>(report: &EvalReport, out: &mut W) -> io::Result<()> {
    writeln!(out, "rank,match_rate")?;
    for (i, v) in report.cmc.iter().enumerate() {
        writeln!(out, "{},{v}", i + 1)?;
    }
    Ok(())
}

/// Standalone SVG line plot of the CMC curve.
pub fn write_cmc_svg<W: Write>(report: &EvalReport, title: &str, out: &mut W) -> io::Result<()> {
    const W_PX: f64 = 480.0;
    const H_PX: f64 = 320.0;
    const LEFT: f64 = 56.0;
    const RIGHT: f64 = 16.0;
    const TOP: f64 = 32.0;
    const BOTTOM: f64 = 44.0;
    let pw = W_PX - LEFT - RIGHT;
    let ph = H_PX - TOP - BOTTOM;
    let n = report.cmc.len().max(1);
    let x_of = |rank: usize| {
        if n == 1 {
            LEFT + pw / 2.0
        } else {
            LEFT + pw * (rank - 1) as f64 / (n - 1) as f64
        }
    };
    let y_of = |v: f64| TOP + ph * (1.0 - v);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W_PX}" height="{H_PX}" viewBox="0 0 {W_PX} {H_PX}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        W_PX / 2.0,
        escape(title)
    );
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let y = y_of(v);
        let _ = writeln!(
            s,
            "<line x1=\"{LEFT}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>",
            LEFT + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let step = (n / 10).max(1);
    for rank in (1..=n).filter(|r| r % step == 0 || *r == 1) {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{rank}</text>"#,
            x_of(rank),
            TOP + ph + 16.0
        );
    }
    let _ = writeln!(
        s,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#333\"/>"
    );
    let points: Vec<String> = report
        .cmc
        .iter()
        .enumerate()
        .map(|(i, &v)| format!("{:.2},{:.2}", x_of(i + 1), y_of(v)))
        .collect();
    let _ = writeln!(
        s,
        "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"{}\"/>",
        points.join(" ")
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">rank</text>"#,
        LEFT + pw / 2.0,
        H_PX - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">match rate</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    let _ = writeln!(s, "</svg>");
    out.write_all(s.as_bytes())
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::super::cmc_curve;
    use super::*;

    fn report() -> EvalReport {
        let mut r = cmc_curve(&[(vec![0.6, 0.3, 0.1], 0), (vec![0.6, 0.3, 0.1], 1)]).unwrap();
        r.val_accuracy = Some(0.5);
        r
    }

    #[test]
    fn report_csv_rows() {
        let mut buf = Vec::new();
        write_report_csv(&report(), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "metric,value\nrank1,0.5\nrank5,1\nrank10,1\nval_acc,0.5\nn_probes,2\n"
        );
    }

    #[test]
    fn cmc_csv_rows() {
        let mut buf = Vec::new();
        write_cmc_csv(&report(), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "rank,match_rate\n1,0.5\n2,1\n3,1\n"
        );
    }

    #[test]
    fn svg_has_one_point_per_rank() {
        let mut buf = Vec::new();
        write_cmc_svg(&report(), "a <b>", &mut buf).unwrap();
        let svg = String::from_utf8(buf).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt;b&gt;"));
        let poly = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let pts = poly.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
        assert_eq!(pts.split(' ').count(), 3);
    }
}
