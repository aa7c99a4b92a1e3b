//! Static SVG line plots and 2-D PCA scatters.

use std::fmt::Write as _;

use headlab_core::linalg::{center_rows, principal_axes};
use headlab_core::Tensor;

use crate::error::CliError;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Option<Frame> {
        let mut f = Frame {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for (x, y) in points {
            f.x0 = f.x0.min(x);
            f.x1 = f.x1.max(x);
            f.y0 = f.y0.min(y);
            f.y1 = f.y1.max(y);
        }
        if !f.x0.is_finite() {
            return None;
        }
        if f.x1 == f.x0 {
            f.x0 -= 0.5;
            f.x1 += 0.5;
        }
        if f.y1 == f.y0 {
            let pad = 0.5 * f.y0.abs().max(1.0);
            f.y0 -= pad;
            f.y1 += pad;
        }
        Some(f)
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(svg: &mut String, title: &str, f: &Frame, x_label: &str, y_label: &str) {
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(svg, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(svg, "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>", W / 2.0, escape(title));
    let (l, r, t, b) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    let _ = writeln!(svg, "<path d=\"M{l} {t} L{l} {b} L{r} {b}\" stroke=\"black\" fill=\"none\"/>");
    let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", W / 2.0, H - 14.0, escape(x_label));
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    let _ = writeln!(svg, "<text x=\"{l}\" y=\"{}\" text-anchor=\"middle\">{:.3}</text>", b + 16.0, f.x0);
    let _ = writeln!(svg, "<text x=\"{r}\" y=\"{}\" text-anchor=\"middle\">{:.3}</text>", b + 16.0, f.x1);
    let _ = writeln!(svg, "<text x=\"{}\" y=\"{b}\" text-anchor=\"end\">{:.3e}</text>", l - 4.0, f.y0);
    let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.3e}</text>", l - 4.0, t + 4.0, f.y1);
}

/// One polyline per series; non-finite points are dropped. Fails when no
/// finite point remains.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String, CliError> {
    let clean: Vec<(String, Vec<(f64, f64)>)> = series
        .iter()
        .map(|s| {
            let pts = s.points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
            (s.label.clone(), pts)
        })
        .collect();
    let frame = Frame::fit(clean.iter().flat_map(|(_, p)| p.iter().copied()))
        .ok_or_else(|| CliError::Malformed(format!("`{title}` has no finite points")))?;
    let mut svg = String::new();
    open(&mut svg, title, &frame, x_label, y_label);
    for (i, (label, pts)) in clean.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y))).collect();
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            path.join(" ")
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>",
            W - MARGIN + 4.0,
            MARGIN + 14.0 * i as f64,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[derive(Clone, Debug)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    /// Share of total variance in the top two components.
    pub explained: f64,
}

/// Top-2 principal components of the centered points. Each axis has its
/// largest-magnitude entry positive.
pub fn pca_2d(points: &[Vec<f64>]) -> Result<Projection, CliError> {
    let n = points.len();
    let d = points.first().map_or(0, Vec::len);
    if n < 2 || d < 2 || points.iter().any(|p| p.len() != d) {
        return Err(CliError::Malformed("PCA needs at least 2 points of equal dimension ≥ 2".into()));
    }
    let centered = center_rows(&Tensor::matrix(n, d, points.concat()));
    let (s, axes) = principal_axes(&centered);
    let total: f64 = s.iter().map(|x| x * x).sum();
    let top: f64 = s.iter().take(2).map(|x| x * x).sum();
    let coords = (0..n)
        .map(|i| {
            let r = centered.row(i);
            let p = |k: usize| if k < axes.rows() { r.iter().zip(axes.row(k)).map(|(a, b)| a * b).sum() } else { 0.0 };
            [p(0), p(1)]
        })
        .collect();
    Ok(Projection {
        coords,
        explained: if total > 0.0 { top / total } else { 1.0 },
    })
}

/// Scatter of projected orbit points colored by group; `stars` are drawn
/// as star markers (the unaugmented anchors).
pub fn scatter_plot(title: &str, coords: &[[f64; 2]], groups: &[usize], stars: &[bool]) -> Result<String, CliError> {
    let frame = Frame::fit(coords.iter().map(|c| (c[0], c[1])).filter(|(x, y)| x.is_finite() && y.is_finite()))
        .ok_or_else(|| CliError::Malformed(format!("`{title}` has no finite points")))?;
    let mut svg = String::new();
    open(&mut svg, title, &frame, "PC1", "PC2");
    for ((c, &g), &star) in coords.iter().zip(groups).zip(stars) {
        let (x, y) = (frame.px(c[0]), frame.py(c[1]));
        let color = PALETTE[g % PALETTE.len()];
        if star {
            let pts: Vec<String> = (0..10)
                .map(|k| {
                    let r = if k % 2 == 0 { 7.0 } else { 3.0 };
                    let a = std::f64::consts::PI * (k as f64 / 5.0 - 0.5);
                    format!("{:.2},{:.2}", x + r * a.cos(), y + r * a.sin())
                })
                .collect();
            let _ = writeln!(svg, "<polygon points=\"{}\" fill=\"{color}\" stroke=\"black\"/>", pts.join(" "));
        } else {
            let _ = writeln!(svg, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2.5\" fill=\"{color}\"/>");
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_series_is_one_polyline() {
        let s = Series {
            label: "seed0".into(),
            points: vec![(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN)],
        };
        let svg = line_plot("variance", "epoch", "variance", &[s]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains(">epoch<") && svg.contains(">variance<"));
    }

    #[test]
    fn empty_series_is_an_error() {
        let s = Series {
            label: "x".into(),
            points: vec![(0.0, f64::NAN)],
        };
        assert!(line_plot("t", "x", "y", &[s]).is_err());
        assert!(line_plot("t", "x", "y", &[]).is_err());
    }

    #[test]
    fn planar_orbit_in_high_dimension() {
        let (u, v) = (
            (0..32).map(|i| ((i * 7 % 11) as f64 - 5.0) / 10.0).collect::<Vec<_>>(),
            (0..32).map(|i| if i % 3 == 0 { 1.0 } else { -0.5 }).collect::<Vec<_>>(),
        );
        let pts: Vec<Vec<f64>> = (0..12)
            .map(|k| {
                let t = k as f64 * std::f64::consts::PI / 6.0;
                u.iter().zip(&v).map(|(a, b)| 1.0 + a * t.cos() + b * t.sin()).collect()
            })
            .collect();
        let p = pca_2d(&pts).unwrap();
        assert!(p.explained >= 0.99, "{}", p.explained);
        assert_eq!(p.coords.len(), 12);
    }

    #[test]
    fn stars_are_drawn() {
        let svg = scatter_plot("orbits", &[[0.0, 0.0], [1.0, 1.0]], &[0, 1], &[true, false]).unwrap();
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 1);
    }
}
