//! Plain SVG line plots: one polyline per series plus axis metadata.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * lo.abs().max(1.0) {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

impl Plot {
    pub fn render(&self) -> String {
        let all = || self.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = bounds(all().map(|p| p.0));
        let (y0, y1) = bounds(all().map(|p| p.1));
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(s, "<title>{}</title>", escape(&self.title));
        let _ = writeln!(
            s,
            r#"<g id="axes" data-xmin="{x0:e}" data-xmax="{x1:e}" data-ymin="{y0:e}" data-ymax="{y1:e}" data-xlabel="{}" data-ylabel="{}" stroke="black" fill="none">"#,
            escape(&self.x_label),
            escape(&self.y_label)
        );
        let (l, r, b, t) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
        let _ = writeln!(s, r#"<polyline points="{l},{t} {l},{b} {r},{b}"/>"#);
        if x0 < 0.0 && x1 > 0.0 {
            let _ = writeln!(s, r#"<line x1="{:.3}" y1="{t}" x2="{:.3}" y2="{b}" stroke-dasharray="4"/>"#, sx(0.0), sx(0.0));
        }
        if y0 < 0.0 && y1 > 0.0 {
            let _ = writeln!(s, r#"<line x1="{l}" y1="{:.3}" x2="{r}" y2="{:.3}" stroke-dasharray="4"/>"#, sy(0.0), sy(0.0));
        }
        s.push_str("</g>\n");
        let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(&self.title));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 15.0, escape(&self.x_label));
        let _ = writeln!(s, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">{}</text>"#, HEIGHT / 2.0, HEIGHT / 2.0, escape(&self.y_label));
        for (v, x, anchor) in [(x0, l, "start"), (x1, r, "end")] {
            let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="{anchor}">{}</text>"#, b + 15.0, tick(v));
        }
        for (v, y) in [(y0, b), (y1, t)] {
            let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, l - 5.0, tick(v));
        }
        s.push_str("</g>\n");
        for (i, series) in self.series.iter().enumerate() {
            let colour = PALETTE[i % PALETTE.len()];
            let mut pts = String::new();
            for (x, y) in series.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
                let _ = write!(pts, "{:.3},{:.3} ", sx(*x), sy(*y));
            }
            let _ = writeln!(
                s,
                r#"<polyline data-label="{}" stroke="{colour}" fill="none" points="{}"/>"#,
                escape(&series.label),
                pts.trim_end()
            );
        }
        if self.series.len() <= PALETTE.len() {
            let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="11">"#);
            for (i, series) in self.series.iter().enumerate() {
                let y = MARGIN + 14.0 * i as f64;
                let _ = writeln!(
                    s,
                    r#"<text x="{}" y="{y}" fill="{}" text-anchor="end">{}</text>"#,
                    WIDTH - MARGIN - 5.0,
                    PALETTE[i],
                    escape(&series.label)
                );
            }
            s.push_str("</g>\n");
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_one_polyline_per_series() {
        let plot = Plot {
            title: "a < b".into(),
            x_label: "t".into(),
            y_label: "|x|".into(),
            series: vec![
                Series { label: "one".into(), points: vec![(0.0, 1.0), (1.0, 0.5), (2.0, f64::NAN)] },
                Series { label: "two".into(), points: vec![(0.0, -1.0), (2.0, 0.0)] },
            ],
        };
        let svg = plot.render();
        assert_eq!(svg.matches("data-label=").count(), 2);
        assert!(svg.contains("a &lt; b"));
        assert!(svg.contains(r#"data-xmin="0e0""#));
        assert!(svg.contains(&format!("{:.3},{:.3}", MARGIN, MARGIN)));
        assert_eq!(svg, plot.render());
    }

    #[test]
    fn degenerate_ranges_are_padded() {
        assert_eq!(bounds([2.0, 2.0].into_iter()), (1.5, 2.5));
        assert_eq!(bounds(std::iter::empty()), (0.0, 1.0));
    }
}
