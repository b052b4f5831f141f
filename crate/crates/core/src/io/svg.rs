use std::fmt::Write as _;
use std::path::Path;

use super::IoError;

#[derive(Debug, Clone, PartialEq)]
pub struct MapPoint {
    pub lat: f64,
    pub lon: f64,
    pub value: f64,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 40.0;
const LEGEND_W: f64 = 110.0;

/// Viridis-like stops from low to high.
const RAMP: [(u8, u8, u8); 5] = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)];

fn ramp_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0) * (RAMP.len() - 1) as f64;
    let i = (t.floor() as usize).min(RAMP.len() - 2);
    let f = t - i as f64;
    let mix = |a: u8, b: u8| (f64::from(a) + f * (f64::from(b) - f64::from(a))).round() as u8;
    let (a, b) = (RAMP[i], RAMP[i + 1]);
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Standalone SVG scatter map of values by location with a color legend.
pub fn render_map_svg(points: &[MapPoint], title: &str) -> Result<String, IoError> {
    let finite: Vec<&MapPoint> = points.iter().filter(|p| p.value.is_finite()).collect();
    if finite.is_empty() {
        return Err(IoError::EmptyMap);
    }
    let min_max = |f: fn(&MapPoint) -> f64| {
        finite.iter().map(|p| f(p)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (vlo, vhi) = min_max(|p| p.value);
    let (latlo, lathi) = min_max(|p| p.lat);
    let (lonlo, lonhi) = min_max(|p| p.lon);
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let plot_w = WIDTH - 2.0 * MARGIN - LEGEND_W;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x = |lon: f64| MARGIN + if lonhi > lonlo { (lon - lonlo) / span(lonlo, lonhi) * plot_w } else { plot_w / 2.0 };
    let y = |lat: f64| MARGIN + if lathi > latlo { (lathi - lat) / span(latlo, lathi) * plot_h } else { plot_h / 2.0 };
    let constant = vhi <= vlo;

    let mut s = String::new();
    let w = &mut s;
    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#).unwrap();
    writeln!(w, r#"<title>{}</title>"#, escape(title)).unwrap();
    writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(w, r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(title)).unwrap();
    writeln!(w, r#"<g class="marks">"#).unwrap();
    for p in &finite {
        let t = if constant { 0.5 } else { (p.value - vlo) / (vhi - vlo) };
        writeln!(w, r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="{}" stroke="black" stroke-width="0.5"/>"#, x(p.lon), y(p.lat), ramp_color(t)).unwrap();
    }
    writeln!(w, "</g>").unwrap();
    let lx = WIDTH - LEGEND_W;
    writeln!(w, r#"<g class="legend">"#).unwrap();
    if constant {
        writeln!(w, r#"<rect x="{lx}" y="{MARGIN}" width="20" height="20" fill="{}"/>"#, ramp_color(0.5)).unwrap();
        writeln!(w, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{vlo:.1}</text>"#, lx + 26.0, MARGIN + 14.0).unwrap();
    } else {
        writeln!(w, r#"<defs><linearGradient id="ramp" x1="0" y1="1" x2="0" y2="0">"#).unwrap();
        for (i, _) in RAMP.iter().enumerate() {
            let t = i as f64 / (RAMP.len() - 1) as f64;
            writeln!(w, r#"<stop offset="{t}" stop-color="{}"/>"#, ramp_color(t)).unwrap();
        }
        writeln!(w, "</linearGradient></defs>").unwrap();
        writeln!(w, r#"<rect x="{lx}" y="{MARGIN}" width="20" height="{plot_h}" fill="url(#ramp)"/>"#).unwrap();
        writeln!(w, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{vhi:.1}</text>"#, lx + 26.0, MARGIN + 10.0).unwrap();
        writeln!(w, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{vlo:.1}</text>"#, lx + 26.0, MARGIN + plot_h).unwrap();
    }
    writeln!(w, "</g>").unwrap();
    writeln!(w, "</svg>").unwrap();
    Ok(s)
}

pub fn render_map(points: &[MapPoint], title: &str, path: &Path) -> Result<(), IoError> {
    let svg = render_map_svg(points, title)?;
    std::fs::write(path, svg).map_err(|e| IoError::io(path, e))
}
