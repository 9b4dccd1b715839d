//! Dependency-free SVG chart primitives: line charts with bands, bar
//! charts, and heatmaps. Text output, diffable in tests.

use std::fmt::Write as _;

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

pub struct Chart {
    width: f64,
    height: f64,
    margin: f64,
    body: String,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Chart {
    pub fn new(width: f64, height: f64, x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        let mut c = Chart {
            width,
            height,
            margin: 46.0,
            body: String::new(),
            x_range: pad_range(x_range),
            y_range: pad_range(y_range),
        };
        c.draw_axes();
        c
    }

    fn x(&self, v: f64) -> f64 {
        let (lo, hi) = self.x_range;
        self.margin + (v - lo) / (hi - lo) * (self.width - 2.0 * self.margin)
    }

    fn y(&self, v: f64) -> f64 {
        let (lo, hi) = self.y_range;
        self.height - self.margin - (v - lo) / (hi - lo) * (self.height - 2.0 * self.margin)
    }

    fn draw_axes(&mut self) {
        let (x0, x1) = (self.margin, self.width - self.margin);
        let (y0, y1) = (self.height - self.margin, self.margin);
        let _ = write!(
            self.body,
            r##"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#333" stroke-width="1"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#333" stroke-width="1"/>"##
        );
        for frac in [0.0, 0.5, 1.0] {
            let vx = self.x_range.0 + frac * (self.x_range.1 - self.x_range.0);
            let vy = self.y_range.0 + frac * (self.y_range.1 - self.y_range.0);
            let _ = write!(
                self.body,
                r##"<text x="{:.1}" y="{:.1}" font-size="9" fill="#333" text-anchor="middle">{}</text>"##,
                self.x(vx),
                y0 + 14.0,
                trim_num(vx)
            );
            let _ = write!(
                self.body,
                r##"<text x="{:.1}" y="{:.1}" font-size="9" fill="#333" text-anchor="end">{}</text>"##,
                x0 - 4.0,
                self.y(vy) + 3.0,
                trim_num(vy)
            );
        }
    }

    pub fn title(&mut self, text: &str) {
        let _ = write!(
            self.body,
            r##"<text x="{:.1}" y="16" font-size="12" fill="#111" text-anchor="middle">{}</text>"##,
            self.width / 2.0,
            escape(text)
        );
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], color: &str) {
        let pts: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.x(x), self.y(y)))
            .collect();
        let _ = write!(
            self.body,
            r##"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"##,
            pts.join(" ")
        );
    }

    /// Filled ±band around a center line.
    pub fn band(&mut self, center: &[(f64, f64)], half_width: &[f64], color: &str) {
        let mut pts = Vec::with_capacity(center.len() * 2);
        for (i, &(x, y)) in center.iter().enumerate() {
            pts.push(format!("{:.2},{:.2}", self.x(x), self.y(y + half_width[i])));
        }
        for (i, &(x, y)) in center.iter().enumerate().rev() {
            pts.push(format!("{:.2},{:.2}", self.x(x), self.y(y - half_width[i])));
        }
        let _ = write!(
            self.body,
            r##"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"##,
            pts.join(" ")
        );
    }

    pub fn bar(&mut self, x: f64, width: f64, value: f64, color: &str) {
        let x0 = self.x(x - width / 2.0);
        let x1 = self.x(x + width / 2.0);
        let y_zero = self.y(self.y_range.0.max(0.0));
        let y_val = self.y(value);
        let (top, h) = if y_val < y_zero {
            (y_val, y_zero - y_val)
        } else {
            (y_zero, y_val - y_zero)
        };
        let _ = write!(
            self.body,
            r##"<rect x="{x0:.2}" y="{top:.2}" width="{:.2}" height="{h:.2}" fill="{color}"/>"##,
            x1 - x0
        );
    }

    /// Horizontal reference line with label.
    pub fn hline(&mut self, value: f64, color: &str, label: &str) {
        let y = self.y(value);
        let _ = write!(
            self.body,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="1" stroke-dasharray="5,3"/><text x="{:.1}" y="{:.1}" font-size="9" fill="{color}">{}</text>"##,
            self.margin,
            self.width - self.margin,
            self.width - self.margin + 2.0,
            y + 3.0,
            escape(label)
        );
    }

    pub fn legend(&mut self, entries: &[(String, String)]) {
        for (i, (label, color)) in entries.iter().enumerate() {
            let y = self.margin + 12.0 * i as f64;
            let _ = write!(
                self.body,
                r##"<rect x="{:.1}" y="{:.1}" width="9" height="9" fill="{color}"/><text x="{:.1}" y="{:.1}" font-size="9" fill="#111">{}</text>"##,
                self.width - self.margin + 6.0,
                y,
                self.width - self.margin + 18.0,
                y + 8.0,
                escape(label)
            );
        }
    }

    pub fn label_x(&mut self, x: f64, text: &str) {
        let _ = write!(
            self.body,
            r##"<text x="{:.1}" y="{:.1}" font-size="8" fill="#333" text-anchor="middle">{}</text>"##,
            self.x(x),
            self.height - self.margin + 24.0,
            escape(text)
        );
    }

    pub fn into_svg(self, deterministic: bool) -> String {
        render_svg(self.width, self.height, &self.body, deterministic)
    }
}

/// Square heatmap with a symmetric blue-white-red colormap.
pub fn heatmap(values: &[Vec<f64>], cell: f64, title: &str, deterministic: bool) -> String {
    let n = values.len();
    let margin = 28.0;
    let size = n as f64 * cell + 2.0 * margin;
    let vmax = values
        .iter()
        .flatten()
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1e-12);
    let mut body = String::new();
    let _ = write!(
        body,
        r##"<text x="{:.1}" y="16" font-size="11" fill="#111" text-anchor="middle">{}</text>"##,
        size / 2.0,
        escape(title)
    );
    for (r, row) in values.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let frac = (v / vmax).clamp(-1.0, 1.0);
            let (red, green, blue) = if frac >= 0.0 {
                (255, (255.0 * (1.0 - frac)) as u8, (255.0 * (1.0 - frac)) as u8)
            } else {
                ((255.0 * (1.0 + frac)) as u8, (255.0 * (1.0 + frac)) as u8, 255)
            };
            let _ = write!(
                body,
                r##"<rect x="{:.1}" y="{:.1}" width="{cell:.1}" height="{cell:.1}" fill="rgb({red},{green},{blue})"/>"##,
                margin + c as f64 * cell,
                margin + r as f64 * cell
            );
        }
    }
    render_svg(size, size, &body, deterministic)
}

fn render_svg(width: f64, height: f64, body: &str, deterministic: bool) -> String {
    let stamp = if deterministic {
        String::new()
    } else {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        format!("<!-- generated at unix {secs} -->\n")
    };
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n{stamp}<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}\n</svg>\n"
    )
}

fn pad_range((lo, hi): (f64, f64)) -> (f64, f64) {
    if (hi - lo).abs() < 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

fn trim_num(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
