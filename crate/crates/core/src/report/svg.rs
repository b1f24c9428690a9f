use std::fmt::Write as _;

use crate::fluctuations::Reference;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 48.0;

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let i = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[i]
}

fn ecdf_points(sorted: &[f64], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let n = sorted.len() as f64;
    let mut pts = vec![(lo, 0.0)];
    for (i, v) in sorted.iter().enumerate() {
        if *v < lo || *v > hi {
            continue;
        }
        pts.push((*v, i as f64 / n));
        pts.push((*v, (i + 1) as f64 / n));
    }
    let last = sorted.partition_point(|v| *v <= hi) as f64 / n;
    pts.push((hi, last));
    pts
}

fn thin(pts: Vec<(f64, f64)>, max: usize) -> Vec<(f64, f64)> {
    if pts.len() <= max {
        return pts;
    }
    let step = pts.len().div_ceil(max);
    let last = *pts.last().expect("nonempty");
    let mut v: Vec<_> = pts.into_iter().step_by(step).collect();
    v.push(last);
    v
}

fn polyline(pts: &[(f64, f64)], lo: f64, hi: f64, color: &str) -> String {
    let sx = |x: f64| PAD + (x - lo) / (hi - lo) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - y * (H - 2.0 * PAD);
    let mut s = String::new();
    for (x, y) in pts {
        let _ = write!(s, "{:.2},{:.2} ", sx(*x), sy(*y));
    }
    format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n", s.trim_end())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Empirical CDF of `sample` (black) over the reference CDF or ECDF (red).
pub fn ecdf_overlay(title: &str, sample: &[f64], reference: &Reference) -> String {
    let mut sorted: Vec<f64> = sample.iter().cloned().filter(|v| v.is_finite()).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{PAD}\" y=\"24\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
        escape(title)
    );
    if sorted.is_empty() {
        return svg + "</svg>\n";
    }
    let (mut lo, mut hi) = (quantile(&sorted, 0.005), quantile(&sorted, 0.995));
    if !(hi > lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    let _ = write!(
        svg,
        "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>\n\
         <text x=\"{PAD}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{lo:.3}</text>\n\
         <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{hi:.3}</text>\n",
        W - 2.0 * PAD,
        H - 2.0 * PAD,
        H - PAD + 16.0,
        W - PAD,
        H - PAD + 16.0,
    );
    let reference_pts = match reference {
        Reference::Cdf(c) => (0..=200).map(|i| lo + (hi - lo) * i as f64 / 200.0).map(|x| (x, c.cdf(x))).collect(),
        Reference::Sample(r) => {
            let mut r = r.clone();
            r.sort_by(|a, b| a.total_cmp(b));
            thin(ecdf_points(&r, lo, hi), 2000)
        }
    };
    svg += &polyline(&reference_pts, lo, hi, "#c0392b");
    svg += &polyline(&thin(ecdf_points(&sorted, lo, hi), 2000), lo, hi, "black");
    svg + "</svg>\n"
}
