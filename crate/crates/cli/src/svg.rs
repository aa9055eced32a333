//! Self-contained SVG rendering for scan line plots and 2D heat maps. Data
//! outputs stay plotter-agnostic CSV; these renderings are an opt-in
//! convenience (`--svg`).

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 24.0;
const MARGIN_B: f64 = 48.0;

const SERIES_COLORS: [&str; 3] = ["#d95f02", "#1b9e77", "#7570b3"];
const SERIES_NAMES: [&str; 3] = ["P(-1)", "P(0)", "P(+1)"];

fn x_px(x: f64, x0: f64, x1: f64) -> f64 {
    let w = WIDTH - MARGIN_L - MARGIN_R;
    MARGIN_L + (x - x0) / (x1 - x0).max(f64::MIN_POSITIVE) * w
}

fn y_px(y: f64, y0: f64, y1: f64) -> f64 {
    let h = HEIGHT - MARGIN_T - MARGIN_B;
    HEIGHT - MARGIN_B - (y - y0) / (y1 - y0).max(f64::MIN_POSITIVE) * h
}

fn header(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
}

/// Line plot of the three populations over the scan variable.
pub fn render_scan(x_name: &str, xs: &[f64], pops: &[[f64; 3]]) -> String {
    let mut out = String::new();
    header(&mut out);
    let (x0, x1) = (xs.first().copied().unwrap_or(0.0), xs.last().copied().unwrap_or(1.0));
    let (y0, y1) = (0.0, 1.0);

    // frame and ticks
    let _ = writeln!(
        out,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
        MARGIN_L,
        MARGIN_T,
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B
    );
    for k in 0..=5 {
        let xv = x0 + (x1 - x0) * k as f64 / 5.0;
        let yv = y0 + (y1 - y0) * k as f64 / 5.0;
        let xp = x_px(xv, x0, x1);
        let yp = y_px(yv, y0, y1);
        let _ = writeln!(
            out,
            r#"<text x="{xp:.1}" y="{}" text-anchor="middle">{xv:.3}</text>"#,
            HEIGHT - MARGIN_B + 16.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{yv:.1}</text>"#,
            MARGIN_L - 6.0,
            yp + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_name}</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 10.0
    );

    for (s, color) in SERIES_COLORS.iter().enumerate() {
        let mut path = String::new();
        for (i, (x, row)) in xs.iter().zip(pops).enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            let _ = write!(path, "{cmd}{:.2},{:.2} ", x_px(*x, x0, x1), y_px(row[s], y0, y1));
        }
        let _ = writeln!(out, r#"<path d="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            MARGIN_L + 8.0 + 70.0 * s as f64,
            MARGIN_T + 14.0,
            SERIES_NAMES[s]
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Heat map of P(+1) over a 2D grid (row-major cells, x outer).
pub fn render_heatmap(
    x_name: &str,
    y_name: &str,
    xs: &[f64],
    ys: &[f64],
    cells: &[[f64; 3]],
    state_index: usize,
) -> String {
    let mut out = String::new();
    header(&mut out);
    let (nx, ny) = (xs.len(), ys.len());
    let plot_w = WIDTH - MARGIN_L - MARGIN_R - 60.0;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let cw = plot_w / nx as f64;
    let ch = plot_h / ny as f64;

    for ix in 0..nx {
        for iy in 0..ny {
            let v = cells[ix * ny + iy][state_index];
            let color = if v.is_finite() { viridis(v.clamp(0.0, 1.0)) } else { String::from("#999999") };
            let x = MARGIN_L + ix as f64 * cw;
            // y axis points up
            let y = MARGIN_T + (ny - 1 - iy) as f64 * ch;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                cw + 0.5,
                ch + 0.5
            );
        }
    }
    // labels
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_name}</text>"#,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{y_name}</text>"#,
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="start">{} = {:.3}..{:.3}, {} = {:.3}..{:.3}</text>"#,
        MARGIN_L,
        MARGIN_T - 8.0,
        x_name,
        xs.first().unwrap_or(&0.0),
        xs.last().unwrap_or(&0.0),
        y_name,
        ys.first().unwrap_or(&0.0),
        ys.last().unwrap_or(&0.0)
    );
    // colorbar
    let bar_x = WIDTH - MARGIN_R - 40.0;
    for k in 0..64 {
        let v = k as f64 / 63.0;
        let y = MARGIN_T + plot_h * (1.0 - v) - plot_h / 64.0;
        let _ = writeln!(
            out,
            r#"<rect x="{bar_x:.1}" y="{y:.2}" width="16" height="{:.2}" fill="{}"/>"#,
            plot_h / 64.0 + 0.5,
            viridis(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}">1.0</text><text x="{}" y="{}">0.0</text>"#,
        bar_x + 20.0,
        MARGIN_T + 10.0,
        bar_x + 20.0,
        MARGIN_T + plot_h
    );
    out.push_str("</svg>\n");
    out
}

/// Coarse viridis-like colormap.
fn viridis(v: f64) -> String {
    const STOPS: [(f64, [u8; 3]); 5] = [
        (0.0, [68, 1, 84]),
        (0.25, [59, 82, 139]),
        (0.5, [33, 145, 140]),
        (0.75, [94, 201, 98]),
        (1.0, [253, 231, 37]),
    ];
    let mut lo = STOPS[0];
    let mut hi = STOPS[STOPS.len() - 1];
    for w in STOPS.windows(2) {
        if v >= w[0].0 && v <= w[1].0 {
            lo = w[0];
            hi = w[1];
            break;
        }
    }
    let t = if hi.0 > lo.0 { (v - lo.0) / (hi.0 - lo.0) } else { 0.0 };
    let mix = |a: u8, b: u8| (a as f64 + t * (b as f64 - a as f64)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(lo.1[0], hi.1[0]), mix(lo.1[1], hi.1[1]), mix(lo.1[2], hi.1[2]))
}
