//! Minimal SVG line chart of one plot table.

use std::fmt::Write;

use kbr_core::experiments::ClassifierId;

use crate::output::PlotTable;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn color(id: ClassifierId) -> &'static str {
    match id {
        ClassifierId::Br => "#1f77b4",
        ClassifierId::BrTh => "#7f7f7f",
        ClassifierId::Kbr1 => "#d62728",
        ClassifierId::Kbr2 => "#2ca02c",
    }
}

/// Posterior for `C_1` against the prior, with `mean +- sem` error bars.
/// Non-finite values are skipped.
pub fn render_svg(table: &PlotTable) -> String {
    let finite = table
        .series
        .iter()
        .flat_map(|(_, v)| v.iter().flat_map(|(m, lo, hi)| [*m, *lo, *hi]))
        .filter(|x| x.is_finite());
    let (mut y_min, mut y_max) = (0.0f64, 1.0f64);
    for x in finite {
        y_min = y_min.min(x);
        y_max = y_max.max(x);
    }
    let (x_min, x_max) = (0.0, 1.0);
    let sx = |x: f64| MARGIN + (x - x_min) / (x_max - x_min) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_min) / (y_max - y_min) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="16" text-anchor="middle">y=({}, {}) sigma={:e} eps={:e} delta={:e}</text>"#,
        WIDTH / 2.0,
        table.test_point[0],
        table.test_point[1],
        table.sigma,
        table.epsilon,
        table.delta
    );
    // axes
    let _ = writeln!(
        s,
        r#"<path d="M{x0} {y0} H{x1} M{x0} {y0} V{y1}" stroke="black" fill="none"/>"#,
        x0 = sx(x_min),
        y0 = sy(y_min),
        x1 = sx(x_max),
        y1 = sy(y_max)
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let x = x_min + t * (x_max - x_min);
        let y = y_min + t * (y_max - y_min);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{x:.2}</text>"#,
            sx(x),
            sy(y_min) + 14.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{y:.2}</text>"#,
            sx(x_min) - 4.0,
            sy(y) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">prior of C1</text>"#,
        WIDTH / 2.0,
        HEIGHT - 8.0
    );

    for (i, (id, values)) in table.series.iter().enumerate() {
        let c = color(*id);
        let pts: Vec<String> = table
            .priors
            .iter()
            .zip(values)
            .filter(|(_, (m, _, _))| m.is_finite())
            .map(|(p, (m, _, _))| format!("{:.2},{:.2}", sx(*p), sy(*m)))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#,
                pts.join(" ")
            );
        }
        for (p, (_, lo, hi)) in table.priors.iter().zip(values) {
            if lo.is_finite() && hi.is_finite() {
                let _ = writeln!(
                    s,
                    r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{c}"/>"#,
                    sy(*lo),
                    sy(*hi),
                    x = sx(*p)
                );
            }
        }
        let ly = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="2"/><text x="{}" y="{}">{id}</text>"#,
            WIDTH - MARGIN - 60.0,
            WIDTH - MARGIN - 44.0,
            WIDTH - MARGIN - 40.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}
