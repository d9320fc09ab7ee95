//! Minimal native SVG output: bar and line charts for report figures. No
//! plotting dependency; the charts are simple rect/polyline primitives with
//! fixed margins, good enough for per-subject bars and sweep curves.

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;

fn axis_range(values: &[f64]) -> (f64, f64) {
    let mut lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo > 0.0 {
        lo = 0.0;
    }
    if hi < 0.0 {
        hi = 0.0;
    }
    if (hi - lo).abs() < 1e-12 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    (lo - if lo < 0.0 { pad } else { 0.0 }, hi + pad)
}

fn header(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"24\" text-anchor=\"middle\" ",
            "font-family=\"sans-serif\" font-size=\"16\">{title}</text>\n"
        ),
        w = WIDTH,
        h = HEIGHT,
        tx = WIDTH / 2.0,
        title = title
    )
}

fn axes(lo: f64, hi: f64) -> String {
    let y0 = HEIGHT - MARGIN;
    let x0 = MARGIN;
    let x1 = WIDTH - MARGIN / 2.0;
    let mut s = format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{m}\" x2=\"{x0}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        m = MARGIN / 2.0
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let y = y0 - (v - lo) / (hi - lo) * (y0 - MARGIN / 2.0);
        s.push_str(&format!(
            "<text x=\"{x}\" y=\"{y:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" \
             font-size=\"11\">{v:.3}</text>\n",
            x = MARGIN - 6.0
        ));
    }
    s
}

pub fn bar_chart(title: &str, labels: &[String], values: &[f64]) -> String {
    let (lo, hi) = axis_range(values);
    let mut svg = header(title);
    svg.push_str(&axes(lo, hi));
    let n = values.len().max(1);
    let span = WIDTH - MARGIN - MARGIN / 2.0;
    let slot = span / n as f64;
    let bar_w = 0.7 * slot;
    let y0 = HEIGHT - MARGIN;
    let scale = (y0 - MARGIN / 2.0) / (hi - lo);
    let zero_y = y0 - (0.0 - lo) * scale;
    for (i, &v) in values.iter().enumerate() {
        let x = MARGIN + slot * i as f64 + (slot - bar_w) / 2.0;
        let y = y0 - (v - lo) * scale;
        let (top, h) = if y < zero_y {
            (y, zero_y - y)
        } else {
            (zero_y, y - zero_y)
        };
        svg.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{top:.1}\" width=\"{bar_w:.1}\" height=\"{h:.1}\" \
             fill=\"steelblue\"/>\n"
        ));
        if let Some(label) = labels.get(i) {
            svg.push_str(&format!(
                "<text x=\"{cx:.1}\" y=\"{ly:.1}\" text-anchor=\"middle\" \
                 font-family=\"sans-serif\" font-size=\"11\">{label}</text>\n",
                cx = x + bar_w / 2.0,
                ly = y0 + 16.0
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn line_chart(title: &str, xs: &[f64], ys: &[f64]) -> String {
    let (lo, hi) = axis_range(ys);
    let mut svg = header(title);
    svg.push_str(&axes(lo, hi));
    if !xs.is_empty() {
        let x_lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let x_hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let x_span = if (x_hi - x_lo).abs() < 1e-12 {
            1.0
        } else {
            x_hi - x_lo
        };
        let y0 = HEIGHT - MARGIN;
        let scale = (y0 - MARGIN / 2.0) / (hi - lo);
        let width = WIDTH - MARGIN - MARGIN / 2.0;
        let mut points = String::new();
        for (&x, &y) in xs.iter().zip(ys) {
            let px = MARGIN + (x - x_lo) / x_span * width;
            let py = y0 - (y - lo) * scale;
            points.push_str(&format!("{px:.1},{py:.1} "));
            svg.push_str(&format!(
                "<circle cx=\"{px:.1}\" cy=\"{py:.1}\" r=\"3\" fill=\"steelblue\"/>\n"
            ));
            svg.push_str(&format!(
                "<text x=\"{px:.1}\" y=\"{ly:.1}\" text-anchor=\"middle\" \
                 font-family=\"sans-serif\" font-size=\"11\">{x}</text>\n",
                ly = y0 + 16.0
            ));
        }
        svg.push_str(&format!(
            "<polyline points=\"{points}\" fill=\"none\" stroke=\"steelblue\" \
             stroke-width=\"2\"/>\n"
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
