//! Minimal self-contained SVG line charts: linear x, log10 y, one polyline
//! per series, whiskers of plus/minus one standard error around each mean.
//! No external assets, fixed palette, fixed-precision coordinates so equal
//! inputs render byte-identical files.

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 590.0;
const TOP: f64 = 46.0;
const BOTTOM: f64 = 430.0;
const Y_FLOOR: f64 = 1e-30;

const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One plotted line: `(x, mean, std_error)` per point.
#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64, f64)>,
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        fmt((LEFT + RIGHT) / 2.0),
        title
    ));

    let points: Vec<(f64, f64, f64)> =
        series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if points.is_empty() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">no data</text>\n</svg>\n",
            fmt((LEFT + RIGHT) / 2.0),
            fmt((TOP + BOTTOM) / 2.0)
        ));
        return svg;
    }

    let x_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let (x_min, x_max) = if x_min == x_max { (x_min - 0.5, x_max + 0.5) } else { (x_min, x_max) };

    let y_lo_val = points.iter().map(|p| p.1.max(Y_FLOOR)).fold(f64::INFINITY, f64::min);
    let y_hi_val =
        points.iter().map(|p| (p.1 + p.2).max(Y_FLOOR)).fold(f64::NEG_INFINITY, f64::max);
    let mut exp_lo = y_lo_val.log10().floor() as i32;
    let mut exp_hi = y_hi_val.log10().ceil() as i32;
    if exp_lo == exp_hi {
        exp_lo -= 1;
        exp_hi += 1;
    }
    let log_lo = f64::from(exp_lo);
    let log_hi = f64::from(exp_hi);

    let sx = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * (RIGHT - LEFT);
    let sy = |y: f64| {
        let l = y.max(Y_FLOOR).log10().clamp(log_lo, log_hi);
        BOTTOM - (l - log_lo) / (log_hi - log_lo) * (BOTTOM - TOP)
    };

    // Frame and y grid at decade lines.
    svg.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333333\"/>\n",
        fmt(LEFT),
        fmt(TOP),
        fmt(RIGHT - LEFT),
        fmt(BOTTOM - TOP)
    ));
    let span = exp_hi - exp_lo;
    let step = ((span as f64 / 10.0).ceil() as i32).max(1);
    let mut e = exp_lo;
    while e <= exp_hi {
        let y = sy(10f64.powi(e));
        if e != exp_lo && e != exp_hi {
            svg.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>\n",
                fmt(LEFT),
                fmt(y),
                fmt(RIGHT),
                fmt(y)
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">1e{}</text>\n",
            fmt(LEFT - 6.0),
            fmt(y + 4.0),
            e
        ));
        e += step;
    }

    // X ticks at each distinct x, in order.
    let mut xticks: Vec<f64> = Vec::new();
    for p in &points {
        if !xticks.contains(&p.0) {
            xticks.push(p.0);
        }
    }
    xticks.sort_by(f64::total_cmp);
    for &x in &xticks {
        let px = sx(x);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\"/>\n",
            fmt(px),
            fmt(BOTTOM),
            fmt(px),
            fmt(BOTTOM + 5.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{x}</text>\n",
            fmt(px),
            fmt(BOTTOM + 18.0)
        ));
    }

    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        fmt((LEFT + RIGHT) / 2.0),
        fmt(HEIGHT - 10.0),
        x_label
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {})\">{}</text>\n",
        fmt((TOP + BOTTOM) / 2.0),
        fmt((TOP + BOTTOM) / 2.0),
        y_label
    ));

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        if s.points.is_empty() {
            continue;
        }
        let path: Vec<String> =
            s.points.iter().map(|&(x, y, _)| format!("{},{}", fmt(sx(x)), fmt(sy(y)))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            color,
            path.join(" ")
        ));
        for &(x, y, se) in &s.points {
            let px = sx(x);
            // Whisker from mean - se to mean + se, clamped into the frame.
            if se > 0.0 {
                let y_top = sy(y + se);
                let y_bot = sy((y - se).max(Y_FLOOR));
                svg.push_str(&format!(
                    "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"{3}\"/>\n",
                    fmt(px),
                    fmt(y_top),
                    fmt(y_bot),
                    color
                ));
                for wy in [y_top, y_bot] {
                    svg.push_str(&format!(
                        "<line x1=\"{}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\"/>\n",
                        fmt(px - 3.0),
                        fmt(wy),
                        fmt(px + 3.0),
                        color
                    ));
                }
            }
            svg.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\"/>\n",
                fmt(px),
                fmt(sy(y)),
                color
            ));
        }
        // Legend row.
        let ly = TOP + 10.0 + si as f64 * 18.0;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>\n",
            fmt(RIGHT + 12.0),
            fmt(ly),
            fmt(RIGHT + 36.0),
            color
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>\n",
            fmt(RIGHT + 42.0),
            fmt(ly + 4.0),
            s.label
        ));
    }

    svg.push_str("</svg>\n");
    svg
}
