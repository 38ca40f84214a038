//! Minimal SVG 1.1 line plots with log-log or log-linear axes.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Log,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Marker {
    Circle,
    Square,
    Triangle,
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub marker: Marker,
    pub dashed: bool,
}

#[derive(Clone, Debug)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub y_scale: Scale,
    pub series: Vec<Series>,
    /// Exponent `p` of an unmarked dashed reference line `c·x^p`.
    pub reference_slope: Option<f64>,
}

struct Axis {
    scale: Scale,
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(scale: Scale, values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (scale == Scale::Linear || *v > 0.0)) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (1.0, 10.0);
        }
        match scale {
            Scale::Log => {
                let (a, b) = (lo.log10().floor(), hi.log10().ceil());
                Self {
                    scale,
                    lo: a,
                    hi: if b > a { b } else { a + 1.0 },
                }
            }
            Scale::Linear => Self {
                scale,
                lo: 0.0f64.min(lo),
                hi: if hi > 0.0 {
                    nice_ceiling(1.15 * hi)
                } else {
                    1.0
                },
            },
        }
    }

    fn unit(&self, v: f64) -> Option<f64> {
        let t = match self.scale {
            Scale::Log if v > 0.0 => v.log10(),
            Scale::Log => return None,
            Scale::Linear => v,
        };
        t.is_finite().then(|| (t - self.lo) / (self.hi - self.lo))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        match self.scale {
            Scale::Log => (self.lo as i32..=self.hi as i32)
                .map(|e| (10f64.powi(e), format!("1e{e}")))
                .collect(),
            Scale::Linear => {
                let step = nice_ceiling((self.hi - self.lo) / 6.0);
                let n = ((self.hi - self.lo) / step + 1e-9).floor() as usize;
                (0..=n)
                    .map(|i| {
                        let v = self.lo + i as f64 * step;
                        // strip accumulated binary noise from the label
                        (v, format!("{}", (v * 1e9).round() / 1e9))
                    })
                    .collect()
            }
        }
    }
}

fn nice_ceiling(v: f64) -> f64 {
    let e = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * e)
        .find(|&c| c >= v)
        .unwrap_or(10.0 * e)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn marker(out: &mut String, m: Marker, x: f64, y: f64, color: &str) {
    match m {
        Marker::Circle => {
            let _ = write!(
                out,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="none" stroke="{color}"/>"#
            );
        }
        Marker::Square => {
            let _ = write!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="6" height="6" fill="none" stroke="{color}"/>"#,
                x - 3.0,
                y - 3.0
            );
        }
        Marker::Triangle => {
            let _ = write!(
                out,
                r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="none" stroke="{color}"/>"#,
                x,
                y - 3.5,
                x - 3.5,
                y + 3.0,
                x + 3.5,
                y + 3.0
            );
        }
    }
}

impl Plot {
    pub fn render(&self) -> String {
        let xs = Axis::fit(
            Scale::Log,
            self.series
                .iter()
                .flat_map(|s| s.points.iter().map(|p| p.0)),
        );
        let ys = Axis::fit(
            self.y_scale,
            self.series
                .iter()
                .flat_map(|s| s.points.iter().map(|p| p.1)),
        );
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let px = |v: f64| xs.unit(v).map(|u| LEFT + u * pw);
        let py = |v: f64| ys.unit(v).map(|u| TOP + (1.0 - u) * ph);

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );

        out.push_str(r##"<g stroke="#dddddd" stroke-width="1">"##);
        for (v, _) in xs.ticks() {
            if let Some(x) = px(v) {
                let _ = write!(
                    out,
                    r#"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}"/>"#,
                    TOP + ph
                );
            }
        }
        for (v, _) in ys.ticks() {
            if let Some(y) = py(v) {
                let _ = write!(
                    out,
                    r#"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}"/>"#,
                    LEFT + pw
                );
            }
        }
        out.push_str("</g>\n");
        let _ = writeln!(
            out,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for (v, label) in xs.ticks() {
            if let Some(x) = px(v) {
                let _ = writeln!(
                    out,
                    r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
                    TOP + ph + 18.0
                );
            }
        }
        for (v, label) in ys.ticks() {
            if let Some(y) = py(v) {
                let _ = writeln!(
                    out,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#,
                    LEFT - 6.0,
                    y + 4.0
                );
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>
<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label),
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        let mut legend: Vec<(String, String, Option<Marker>, bool)> = Vec::new();
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter_map(|&(x, y)| Some((px(x)?, py(y)?)))
                .collect();
            let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{}/>"#,
                path.join(" "),
                if s.dashed {
                    r#" stroke-dasharray="6,3""#
                } else {
                    ""
                }
            );
            for &(x, y) in &pts {
                marker(&mut out, s.marker, x, y, color);
            }
            out.push('\n');
            legend.push((s.label.clone(), color.to_string(), Some(s.marker), s.dashed));
        }

        if let (Some(p), Scale::Log) = (self.reference_slope, self.y_scale) {
            // anchor the reference line at the first point of the first series
            let anchor = self.series.iter().flat_map(|s| s.points.first()).next();
            if let Some(&(x0, y0)) = anchor {
                let x1 = 10f64.powf(xs.hi);
                let y1 = y0 * (x1 / x0).powf(p) * 0.5;
                if let (Some(a), Some(b), Some(c), Some(d)) = (px(x0), py(y0 * 0.5), px(x1), py(y1))
                {
                    let _ = writeln!(
                        out,
                        r#"<line x1="{a:.2}" y1="{b:.2}" x2="{c:.2}" y2="{d:.2}" stroke="black" stroke-dasharray="6,4"/>"#
                    );
                }
                legend.push((format!("O(|T|^{p})"), "black".into(), None, true));
            }
        }

        let lx = LEFT + pw + 14.0;
        for (i, (label, color, m, dashed)) in legend.iter().enumerate() {
            let y = TOP + 10.0 + 20.0 * i as f64;
            let _ = write!(
                out,
                r#"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="1.5"{}/>"#,
                lx + 24.0,
                if *dashed {
                    r#" stroke-dasharray="6,3""#
                } else {
                    ""
                }
            );
            if let Some(m) = m {
                marker(&mut out, *m, lx + 12.0, y, color);
            }
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}">{}</text>"#,
                lx + 30.0,
                y + 4.0,
                escape(label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plot(scale: Scale) -> Plot {
        Plot {
            title: "t<1>".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            y_scale: scale,
            series: vec![Series {
                label: "a".into(),
                points: vec![(100.0, 1.0), (1000.0, 0.3), (10000.0, 0.1)],
                marker: Marker::Circle,
                dashed: false,
            }],
            reference_slope: Some(-0.5),
        }
    }

    #[test]
    fn renders_well_formed_document() {
        let s = plot(Scale::Log).render();
        assert!(s.starts_with("<?xml"));
        assert!(s.trim_end().ends_with("</svg>"));
        assert!(s.contains("t&lt;1&gt;"));
        assert_eq!(s.matches("<circle").count(), 4);
        assert!(s.contains("stroke-dasharray=\"6,4\""));
    }

    #[test]
    fn linear_axis_has_no_reference_line() {
        let s = plot(Scale::Linear).render();
        assert!(!s.contains("stroke-dasharray=\"6,4\""));
    }

    #[test]
    fn nice_numbers() {
        assert_eq!(nice_ceiling(7.0), 10.0);
        assert_eq!(nice_ceiling(1.5), 2.0);
        assert_eq!(nice_ceiling(30.0), 50.0);
    }
}
