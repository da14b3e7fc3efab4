//! Minimal deterministic SVG line plots (standalone SVG 1.1).

use std::fmt::Write as _;

const PALETTE: [&str; 7] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
    /// Defaults to the palette entry for the series index.
    pub color: Option<String>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
            dashed: false,
            color: None,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }

    pub fn color(mut self, c: impl Into<String>) -> Self {
        self.color = Some(c.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub width: u32,
    pub height: u32,
    pub series: Vec<Series>,
}

impl Plot {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            log_y: false,
            width: 640,
            height: 440,
            series: Vec::new(),
        }
    }

    pub fn log_log(mut self) -> Self {
        self.log_x = true;
        self.log_y = true;
        self
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    fn transform(&self, (x, y): (f64, f64)) -> Option<(f64, f64)> {
        let tx = if self.log_x { (x > 0.0).then(|| x.log10())? } else { x };
        let ty = if self.log_y { (y > 0.0).then(|| y.log10())? } else { y };
        (tx.is_finite() && ty.is_finite()).then_some((tx, ty))
    }

    pub fn render(&self) -> String {
        let (w, h) = (self.width as f64, self.height as f64);
        let (left, right, top, bottom) = (72.0, 20.0, 36.0, 52.0);
        let pw = w - left - right;
        let ph = h - top - bottom;

        let data: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|s| s.points.iter().filter_map(|&p| self.transform(p)).collect())
            .collect();
        let all = data.iter().flatten();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        let (x0, x1) = pad(x0, x1, self.log_x);
        let (y0, y1) = pad(y0, y1, self.log_y);
        let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

        let mut out = String::new();
        let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>"#);
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}px" height="{}px" viewBox="0 0 {} {}">"#,
            self.width, self.height, self.width, self.height
        );
        let _ = writeln!(out, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, self.width, self.height);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="22" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
            w / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{left:.1}" y="{top:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#333" stroke-width="1"/>"##
        );

        for (v, label) in ticks(x0, x1, self.log_x) {
            let px = sx(v);
            let _ = writeln!(
                out,
                r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#ddd" stroke-width="0.6"/>"##,
                top,
                top + ph
            );
            let _ = writeln!(
                out,
                r#"<text x="{px:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{label}</text>"#,
                top + ph + 16.0
            );
        }
        for (v, label) in ticks(y0, y1, self.log_y) {
            let py = sy(v);
            let _ = writeln!(
                out,
                r##"<line x1="{left:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd" stroke-width="0.6"/>"##,
                left + pw
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{label}</text>"#,
                left - 6.0,
                py + 4.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
            left + pw / 2.0,
            h - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            top + ph / 2.0,
            top + ph / 2.0,
            escape(&self.y_label)
        );

        let _ = writeln!(out, r#"<g>"#);
        for (i, (s, pts)) in self.series.iter().zip(&data).enumerate() {
            if pts.is_empty() {
                continue;
            }
            let color = s.color.clone().unwrap_or_else(|| PALETTE[i % PALETTE.len()].to_string());
            let mut path = String::new();
            for (k, &(x, y)) in pts.iter().enumerate() {
                let _ = write!(path, "{}{:.2},{:.2}", if k == 0 { "" } else { " " }, sx(x), sy(y));
            }
            let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
            let _ = writeln!(
                out,
                r#"<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>"#
            );
        }
        let _ = writeln!(out, "</g>");

        let lx = left + pw - 150.0;
        let mut ly = top + 14.0;
        for (i, s) in self.series.iter().enumerate() {
            let color = s.color.clone().unwrap_or_else(|| PALETTE[i % PALETTE.len()].to_string());
            let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
            let _ = writeln!(
                out,
                r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/>"#,
                lx + 22.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
                lx + 28.0,
                ly + 4.0,
                escape(&s.label)
            );
            ly += 16.0;
        }
        out.push_str("</svg>\n");
        out
    }
}

fn pad(lo: f64, hi: f64, log: bool) -> (f64, f64) {
    if hi - lo < 1e-12 {
        let d = if log { 0.5 } else { 0.5 * (1.0 + lo.abs()) };
        return (lo - d, hi + d);
    }
    let d = 0.04 * (hi - lo);
    (lo - d, hi + d)
}

fn ticks(lo: f64, hi: f64, log: bool) -> Vec<(f64, String)> {
    if log {
        let (a, b) = (lo.ceil() as i64, hi.floor() as i64);
        let step = ((b - a) / 8 + 1).max(1);
        let mut out: Vec<(f64, String)> = (a..=b)
            .filter(|k| (k - a) % step == 0)
            .map(|k| (k as f64, format!("1e{k}")))
            .collect();
        if out.is_empty() {
            let mid = 0.5 * (lo + hi);
            out.push((mid, format!("{:.3e}", 10f64.powf(mid))));
        }
        return out;
    }
    let raw = (hi - lo) / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    let digits = (-(step.log10().floor()) as i64).max(0) as usize;
    (first..=last)
        .map(|k| {
            let v = k as f64 * step;
            let v = if v.abs() < 1e-12 * step { 0.0 } else { v };
            (v, format!("{v:.digits$}"))
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Plot {
        Plot::new("decay <test>", "t", "|ζ|")
            .log_log()
            .with(Series::new("r = 3", (1..50).map(|t| (t as f64, (t as f64).powi(-2))).collect()))
            .with(Series::new("guide", vec![(1.0, 1.0), (50.0, 1.0 / 2500.0)]).dashed())
    }

    #[test]
    fn rendering_is_deterministic_and_standalone() {
        let a = sample().render();
        assert_eq!(a, sample().render());
        assert!(a.starts_with("<?xml"));
        assert!(a.contains(r#"version="1.1""#));
        assert!(a.contains("decay &lt;test&gt;"));
        assert!(!a.contains("href"));
        assert_eq!(a.matches("<polyline").count(), 2);
    }

    #[test]
    fn log_axes_drop_nonpositive_points() {
        let p = Plot::new("x", "t", "y").log_log().with(Series::new("s", vec![(1.0, 0.0), (2.0, 1.0), (3.0, 2.0)]));
        let svg = p.render();
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        assert_eq!(line.matches(',').count(), 2);
    }

    #[test]
    fn linear_ticks_are_round() {
        let t = ticks(0.0, 1.0, false);
        assert_eq!(t.iter().map(|(_, l)| l.as_str()).collect::<Vec<_>>(), ["0.0", "0.2", "0.4", "0.6", "0.8", "1.0"]);
    }
}
