//! Static SVG overlays of one localized window.

use std::fmt::Write as _;

const WIDTH: f64 = 900.0;
const PANEL: f64 = 160.0;
const MARGIN: f64 = 40.0;

/// One line of a panel.
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
}

/// Stacked panels sharing the time axis: power lines on top, then the CAM,
/// then predicted and true status.
pub struct WindowPlot<'a> {
    pub title: String,
    pub power: Vec<Series<'a>>,
    pub cam: Option<&'a [f64]>,
    pub status: Vec<Series<'a>>,
}

fn polyline(out: &mut String, values: &[f64], top: f64, lo: f64, hi: f64, color: &str) {
    let n = values.len().max(2) - 1;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pts: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / n as f64;
            let y = top + PANEL - PANEL * ((v - lo) / span).clamp(0.0, 1.0);
            format!("{x:.1},{y:.1}")
        })
        .collect();
    let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#, pts.join(" "));
}

fn panel(out: &mut String, top: f64, series: &[Series], lo: f64, hi: f64, unit: &str) {
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{top}" width="{}" height="{PANEL}" fill="none" stroke="#999"/>"##,
        WIDTH - 2.0 * MARGIN
    );
    let _ = writeln!(out, r#"<text x="4" y="{:.1}" font-size="10">{hi:.0}{unit}</text>"#, top + 10.0);
    let _ = writeln!(out, r#"<text x="4" y="{:.1}" font-size="10">{lo:.0}</text>"#, top + PANEL);
    for (i, s) in series.iter().enumerate() {
        polyline(out, s.values, top, lo, hi, s.color);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{}">{}</text>"#,
            MARGIN + 6.0 + 140.0 * i as f64,
            top + 14.0,
            s.color,
            escape(s.label)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl WindowPlot<'_> {
    pub fn to_svg(&self) -> String {
        let panels = 1 + usize::from(self.cam.is_some()) + usize::from(!self.status.is_empty());
        let height = 30.0 + panels as f64 * (PANEL + 20.0);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{MARGIN}" y="18" font-size="13">{}</text>"#, escape(&self.title));
        let mut top = 30.0;
        let hi = self.power.iter().flat_map(|s| s.values.iter().copied()).fold(0.0, f64::max);
        panel(&mut out, top, &self.power, 0.0, hi, " W");
        top += PANEL + 20.0;
        if let Some(cam) = self.cam {
            panel(&mut out, top, &[Series { label: "CAM", color: "#d62728", values: cam }], 0.0, 1.0, "");
            top += PANEL + 20.0;
        }
        if !self.status.is_empty() {
            panel(&mut out, top, &self.status, 0.0, 1.0, "");
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_has_one_polyline_per_series() {
        let agg = [100.0, 900.0, 950.0, 120.0];
        let est = [0.0, 800.0, 800.0, 0.0];
        let cam = [0.0, 1.0, 0.7, 0.1];
        let st = [0.0, 1.0, 1.0, 0.0];
        let plot = WindowPlot {
            title: "house <1>".into(),
            power: vec![
                Series { label: "aggregate", color: "#333", values: &agg },
                Series { label: "estimate", color: "#1f77b4", values: &est },
            ],
            cam: Some(&cam),
            status: vec![Series { label: "status", color: "#2ca02c", values: &st }],
        };
        let svg = plot.to_svg();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.contains("house &lt;1&gt;"));
    }
}
