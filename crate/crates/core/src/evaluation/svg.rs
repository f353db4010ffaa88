//! Minimal standalone SVG plots.

use std::fmt::Write;

use super::compare::FiveNumberSummary;
use super::dvh::DvhCurve;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(
        out,
        r#"<rect width="100%" height="100%" fill="white"/><text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn nice_max(v: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    let step = 10f64.powf(v.log10().floor());
    (v / step).ceil() * step
}

/// Cumulative DVH line plot: dose in Gy on x, volume fraction on y.
pub fn render_dvh_svg(title: &str, curves: &[(String, &DvhCurve)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let x_max = nice_max(
        curves
            .iter()
            .filter_map(|(_, c)| c.dose_gy.last().copied())
            .fold(0.0, f64::max),
    );
    let (pw, ph) = (WIDTH - 2.0 * MARGIN - 120.0, HEIGHT - 2.0 * MARGIN);
    let sx = |x: f64| MARGIN + x / x_max * pw;
    let sy = |y: f64| MARGIN + (1.0 - y) * ph;
    axes(&mut out, pw, ph, "Dose (Gy)", "Volume fraction");
    for i in 0..=5 {
        let x = x_max * i as f64 / 5.0;
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(x),
            MARGIN + ph + 16.0,
            x
        );
        let y = i as f64 / 5.0;
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.1}</text>"#,
            MARGIN - 6.0,
            sy(y) + 4.0,
            y
        );
    }
    for (i, (name, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = curve
            .dose_gy
            .iter()
            .zip(&curve.volume_fraction)
            .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = write!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = MARGIN + 14.0 * i as f64;
        let lx = MARGIN + pw + 12.0;
        let _ = write!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 16.0,
            lx + 20.0,
            ly + 4.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn axes(out: &mut String, pw: f64, ph: f64, xlabel: &str, ylabel: &str) {
    let _ = write!(
        out,
        r#"<path d="M{m} {m} V{b} H{r}" fill="none" stroke="black"/><text x="{}" y="{}" text-anchor="middle">{}</text><text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        MARGIN + pw / 2.0,
        HEIGHT - 14.0,
        escape(xlabel),
        MARGIN + ph / 2.0,
        MARGIN + ph / 2.0,
        escape(ylabel),
        m = MARGIN,
        b = MARGIN + ph,
        r = MARGIN + pw,
    );
}

/// Quartile-band plot: one box (q1..q3) with whiskers (min..max) and a median tick per label.
pub fn render_band_svg(title: &str, ylabel: &str, bands: &[(String, FiveNumberSummary)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN - 40.0);
    let lo = bands.iter().map(|(_, s)| s.min).fold(0.0, f64::min);
    let hi = bands.iter().map(|(_, s)| s.max).fold(0.0, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let sy = |y: f64| MARGIN + (hi - y) / span * ph;
    axes(&mut out, pw, ph, "", ylabel);
    let _ = write!(
        out,
        r##"<line x1="{MARGIN}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
        sy(0.0),
        MARGIN + pw
    );
    for i in 0..=4 {
        let y = lo + span * i as f64 / 4.0;
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.2}</text>"#,
            MARGIN - 6.0,
            sy(y) + 4.0,
            y
        );
    }
    let slot = pw / bands.len().max(1) as f64;
    for (i, (label, s)) in bands.iter().enumerate() {
        let cx = MARGIN + slot * (i as f64 + 0.5);
        let half = (slot * 0.3).min(24.0);
        let color = PALETTE[i % PALETTE.len()];
        let _ = write!(
            out,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            sy(s.max),
            sy(s.min)
        );
        let _ = write!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.6" stroke="black"/>"#,
            cx - half,
            sy(s.q3),
            2.0 * half,
            (sy(s.q1) - sy(s.q3)).max(0.5)
        );
        let _ = write!(
            out,
            r#"<line x1="{:.2}" y1="{2:.2}" x2="{:.2}" y2="{2:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            cx + half,
            sy(s.median)
        );
        let _ = write!(
            out,
            r#"<text x="{cx:.2}" y="{:.1}" text-anchor="end" transform="rotate(-35 {cx:.2} {:.1})">{}</text>"#,
            MARGIN + ph + 16.0,
            MARGIN + ph + 16.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_documents() {
        let c = DvhCurve {
            dose_gy: vec![0.0, 1.0, 2.0],
            volume_fraction: vec![1.0, 0.5, 0.0],
        };
        let svg = render_dvh_svg("a <b>", &[("ptv70".into(), &c)]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt;b&gt;") && svg.contains("polyline"));
        let s = FiveNumberSummary::of(&[-1.0, 0.0, 2.0]).unwrap();
        let svg = render_band_svg("t", "Gy", &[("D_mean".into(), s)]);
        assert_eq!(svg.matches("<rect").count(), 2);
    }
}
