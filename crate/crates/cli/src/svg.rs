//! Minimal static SVG line charts for the calibration and eigengap
//! curves. The CSV files are the data contract; these renderings are a
//! convenience for quick inspection.

/// Render one polyline with axes and tick labels. `log_x` plots the
/// abscissa on a log10 scale.
pub fn line_chart(
    points: &[(f64, f64)],
    log_x: bool,
    title: &str,
    xlabel: &str,
    ylabel: &str,
) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const ML: f64 = 70.0; // left margin
    const MR: f64 = 20.0;
    const MT: f64 = 40.0;
    const MB: f64 = 50.0;

    let xs: Vec<f64> = points
        .iter()
        .map(|&(x, _)| if log_x { x.log10() } else { x })
        .collect();
    let ys: Vec<f64> = points.iter().map(|&(_, y)| y).collect();
    let (x_min, x_max) = bounds(&xs);
    let (y_min, y_max) = bounds(&ys);
    let sx = |x: f64| ML + (x - x_min) / (x_max - x_min) * (W - ML - MR);
    let sy = |y: f64| H - MB - (y - y_min) / (y_max - y_min) * (H - MT - MB);

    let mut path = String::new();
    for (i, (&x, &y)) in xs.iter().zip(&ys).enumerate() {
        path.push_str(if i == 0 { "M" } else { " L" });
        path.push_str(&format!("{:.2},{:.2}", sx(x), sy(y)));
    }

    let mut out = String::new();
    out.push_str(&format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    ));
    out.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
    out.push_str(&format!(
        r#"<text x="{:.0}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{title}</text>"#,
        W / 2.0
    ));
    // axes
    out.push_str(&format!(
        r#"<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{:.0}" stroke="black"/>"#,
        H - MB
    ));
    out.push_str(&format!(
        r#"<line x1="{ML}" y1="{:.0}" x2="{:.0}" y2="{:.0}" stroke="black"/>"#,
        H - MB,
        W - MR,
        H - MB
    ));
    // tick labels at the extremes
    let x_fmt = |v: f64| {
        if log_x {
            format!("{:.3}", 10f64.powf(v))
        } else {
            format!("{v:.3}")
        }
    };
    out.push_str(&format!(
        r#"<text x="{ML}" y="{:.0}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
        H - MB + 18.0,
        x_fmt(x_min)
    ));
    out.push_str(&format!(
        r#"<text x="{:.0}" y="{:.0}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
        W - MR,
        H - MB + 18.0,
        x_fmt(x_max)
    ));
    out.push_str(&format!(
        r#"<text x="{:.0}" y="{:.0}" text-anchor="end" font-family="sans-serif" font-size="11">{y_min:.3}</text>"#,
        ML - 6.0,
        H - MB
    ));
    out.push_str(&format!(
        r#"<text x="{:.0}" y="{MT}" text-anchor="end" font-family="sans-serif" font-size="11">{y_max:.3}</text>"#,
        ML - 6.0
    ));
    out.push_str(&format!(
        r#"<text x="{:.0}" y="{:.0}" text-anchor="middle" font-family="sans-serif" font-size="13">{xlabel}</text>"#,
        (ML + W - MR) / 2.0,
        H - 12.0
    ));
    out.push_str(&format!(
        r#"<text x="16" y="{:.0}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 {:.0})">{ylabel}</text>"#,
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0
    ));
    out.push_str(&format!(
        r#"<path d="{path}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#
    ));
    for (&x, &y) in xs.iter().zip(&ys) {
        out.push_str(&format!(
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="steelblue"/>"#,
            sx(x),
            sy(y)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
