//! Static SVG plot of error curves against `1/σ²` on log-log axes: the bound
//! as a solid line and Monte Carlo estimates as markers, one colour per `M`.

use std::fmt::Write as _;

use crate::experiment::MeasurementResult;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
/// Bounds below this are clipped to the bottom of the plot.
const Y_FLOOR: f64 = 1e-12;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

struct Axes {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Axes {
    fn x(&self, log_x: f64) -> f64 {
        LEFT + (log_x - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, log_y: f64) -> f64 {
        let clamped = log_y.clamp(self.y_lo, self.y_hi);
        TOP + (self.y_hi - clamped) / (self.y_hi - self.y_lo) * (HEIGHT - TOP - BOTTOM)
    }
}

pub fn render_svg(results: &[MeasurementResult]) -> String {
    let xs = results.iter().flat_map(|r| r.curve.rows.iter().map(|row| (1.0 / row.sigma2).log10()));
    let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let (x_lo, x_hi) = if x_lo < x_hi { (x_lo.floor(), x_hi.ceil()) } else { (0.0, 1.0) };
    let y_min = results
        .iter()
        .flat_map(|r| r.curve.rows.iter())
        .flat_map(|row| [Some(row.bound()), row.mc.map(|mc| mc.p_hat)])
        .flatten()
        .filter(|&v| v > 0.0)
        .fold(1.0f64, f64::min)
        .max(Y_FLOOR);
    let axes = Axes {
        x_lo,
        x_hi,
        y_lo: y_min.log10().floor().min(-1.0),
        y_hi: 0.0,
    };

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();

    let (px0, px1, py0, py1) = (axes.x(x_lo), axes.x(x_hi), axes.y(axes.y_lo), axes.y(0.0));
    writeln!(out, r#"<rect x="{px0}" y="{py1}" width="{}" height="{}" fill="none" stroke="black"/>"#, px1 - px0, py0 - py1).unwrap();
    let mut decade = x_lo as i64;
    while decade as f64 <= x_hi {
        let x = axes.x(decade as f64);
        writeln!(out, r##"<line x1="{x}" y1="{py1}" x2="{x}" y2="{py0}" stroke="#ddd"/>"##).unwrap();
        writeln!(out, r#"<text x="{x}" y="{}" text-anchor="middle">1e{decade}</text>"#, py0 + 16.0).unwrap();
        decade += 1;
    }
    let y_step = ((-axes.y_lo) / 12.0).ceil().max(1.0) as i64;
    let mut decade = 0i64;
    while decade as f64 >= axes.y_lo {
        let y = axes.y(decade as f64);
        writeln!(out, r##"<line x1="{px0}" y1="{y}" x2="{px1}" y2="{y}" stroke="#ddd"/>"##).unwrap();
        writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">1e{decade}</text>"#, px0 - 6.0, y + 4.0).unwrap();
        decade -= y_step;
    }
    writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">1/sigma^2</text>"#, (px0 + px1) / 2.0, HEIGHT - 8.0).unwrap();
    writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">error probability</text>"#,
        (py0 + py1) / 2.0,
        (py0 + py1) / 2.0
    )
    .unwrap();

    for (k, r) in results.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = r
            .curve
            .rows
            .iter()
            .map(|row| {
                let y = (row.ln_bound / std::f64::consts::LN_10).min(0.0);
                format!("{:.2},{:.2}", axes.x((1.0 / row.sigma2).log10()), axes.y(y))
            })
            .collect();
        writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, points.join(" ")).unwrap();
        for row in &r.curve.rows {
            if let Some(mc) = row.mc.filter(|mc| mc.p_hat > 0.0) {
                writeln!(
                    out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="none" stroke="{color}"/>"#,
                    axes.x((1.0 / row.sigma2).log10()),
                    axes.y(mc.p_hat.log10())
                )
                .unwrap();
            }
        }
        let ly = TOP + 14.0 + 18.0 * k as f64;
        writeln!(out, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="1.5"/>"#, px1 + 12.0, px1 + 36.0).unwrap();
        writeln!(out, r#"<text x="{}" y="{}">M = {}</text>"#, px1 + 42.0, ly + 4.0, r.m).unwrap();
    }
    let ly = TOP + 14.0 + 18.0 * results.len() as f64 + 6.0;
    writeln!(out, r#"<text x="{}" y="{ly}">line: bound</text>"#, px1 + 12.0).unwrap();
    writeln!(out, r#"<text x="{}" y="{}">o: simulated</text>"#, px1 + 12.0, ly + 16.0).unwrap();
    out.push_str("</svg>\n");
    out
}
