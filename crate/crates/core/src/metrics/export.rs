//! CSV tables and SVG figures. Everything returns text; callers decide where
//! it goes.

use std::fmt::Write as _;

use super::rationality::RationalityReport;
use super::scan::{DisentanglementProfile, PriorMetricProfile, RatioPoint};
use crate::data::io::fmt_f64;
use crate::data::Encounter;

/// `target_code,sigma,out_code,variance`
pub fn disentanglement_csv(p: &DisentanglementProfile) -> String {
    let mut s = String::from("target_code,sigma,out_code,variance\n");
    for (i, per_sigma) in p.omega.iter().enumerate() {
        for (sigma, w) in p.sigma_grid.iter().zip(per_sigma) {
            for (j, v) in w.iter().enumerate() {
                let _ = writeln!(s, "{i},{sigma},{j},{}", fmt_f64(*v));
            }
        }
    }
    s
}

/// `code,sigma_sq,ratio`; the ratio is left empty where the realized input
/// variance was zero.
pub fn ratio_csv(ratios: &[Vec<RatioPoint>]) -> String {
    let mut s = String::from("code,sigma_sq,ratio\n");
    for (i, row) in ratios.iter().enumerate() {
        for r in row {
            let ratio = r.ratio.map(fmt_f64).unwrap_or_default();
            let _ = writeln!(s, "{i},{},{ratio}", fmt_f64(r.sigma_sq));
        }
    }
    s
}

/// `fixed_code,out_code,normalized_variance,excluded`
pub fn prior_metric_csv(p: &PriorMetricProfile) -> String {
    let mut s = String::from("fixed_code,out_code,normalized_variance,excluded\n");
    for (k, row) in p.variance.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let _ = writeln!(s, "{k},{j},{},{}", fmt_f64(*v), p.excluded[j]);
        }
    }
    s
}

/// One table per profile: `("distance", csv)`, `("speed", csv)`,
/// `("direction", csv)`. Reference columns appear only with an overlay.
pub fn profile_csv(r: &RationalityReport) -> Vec<(&'static str, String)> {
    let overlay = r.reference.as_ref();
    let mut distance = String::from("t,distance");
    let mut speed = String::from("t,speed1,speed2");
    let mut direction = String::from("t,direction1_deg,direction2_deg,degenerate");
    if overlay.is_some() {
        distance.push_str(",reference_mean");
        speed.push_str(",reference_speed1,reference_speed2");
        direction.push_str(",reference_direction1_deg,reference_direction2_deg");
    }
    for s in [&mut distance, &mut speed, &mut direction] {
        s.push('\n');
    }
    for (t, d) in r.distance.iter().enumerate() {
        let _ = write!(distance, "{t},{}", fmt_f64(*d));
        if let Some(o) = overlay {
            let _ = write!(distance, ",{}", fmt_f64(o.distance[t]));
        }
        distance.push('\n');
    }
    for t in 0..r.speed[0].len() {
        let _ = write!(
            speed,
            "{t},{},{}",
            fmt_f64(r.speed[0][t]),
            fmt_f64(r.speed[1][t])
        );
        if let Some(o) = overlay {
            let _ = write!(
                speed,
                ",{},{}",
                fmt_f64(o.speed[0][t]),
                fmt_f64(o.speed[1][t])
            );
        }
        speed.push('\n');
    }
    for t in 0..r.direction[0].degrees.len() {
        let degenerate = r.direction.iter().any(|d| d.degenerate.contains(&t));
        let _ = write!(
            direction,
            "{t},{},{},{degenerate}",
            fmt_f64(r.direction[0].degrees[t]),
            fmt_f64(r.direction[1].degrees[t])
        );
        if let Some(o) = overlay {
            let _ = write!(
                direction,
                ",{},{}",
                fmt_f64(o.direction[0][t]),
                fmt_f64(o.direction[1][t])
            );
        }
        direction.push('\n');
    }
    vec![
        ("distance", distance),
        ("speed", speed),
        ("direction", direction),
    ]
}

/// `frame,value,t,x1,y1,x2,y2`
pub fn sweep_csv(frames: &[(f64, Encounter)]) -> String {
    let mut s = String::from("frame,value,t,x1,y1,x2,y2\n");
    for (f, (v, e)) in frames.iter().enumerate() {
        for t in 0..e.len() {
            let [x1, y1, x2, y2] = e.step(t);
            let _ = writeln!(
                s,
                "{f},{},{t},{},{},{},{}",
                fmt_f64(*v),
                fmt_f64(x1),
                fmt_f64(y1),
                fmt_f64(x2),
                fmt_f64(y2)
            );
        }
    }
    s
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

struct Svg(String);

impl Svg {
    fn new(w: f64, h: f64) -> Self {
        Self(format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"10\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        ))
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, body: &str) {
        let _ = writeln!(
            self.0,
            "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"{anchor}\">{body}</text>"
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.0,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"/>"
        );
    }

    fn frame(&mut self, x: f64, y: f64, w: f64, h: f64) {
        let _ = writeln!(
            self.0,
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{w:.1}\" height=\"{h:.1}\" fill=\"none\" stroke=\"#444\"/>"
        );
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), stroke: &str, width: f64) {
        let _ = writeln!(
            self.0,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{stroke}\" stroke-width=\"{width}\"/>",
            a.0, a.1, b.0, b.1
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, dashed: bool) {
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let dash = if dashed {
            " stroke-dasharray=\"4 3\""
        } else {
            ""
        };
        let _ = writeln!(
            self.0,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"{dash}/>",
            coords.join(" ")
        );
    }

    fn circle(&mut self, c: (f64, f64), r: f64, fill: &str) {
        let _ = writeln!(
            self.0,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{r}\" fill=\"{fill}\"/>",
            c.0, c.1
        );
    }

    fn finish(mut self) -> String {
        self.0.push_str("</svg>\n");
        self.0
    }
}

/// Grouped bars: one panel per target code, one group per sigma, one bar per
/// output code.
pub fn disentanglement_svg(p: &DisentanglementProfile) -> String {
    let k = p.latent_dim();
    let cols = k.clamp(1, 2);
    let rows = k.div_ceil(cols);
    let (pw, ph) = (420.0, 170.0);
    let mut svg = Svg::new(cols as f64 * pw + 20.0, rows as f64 * ph + 40.0);
    svg.text(
        10.0,
        16.0,
        "start",
        "output variance of recovered codes, grouped by input sigma",
    );
    for i in 0..k {
        let (x0, y0) = (10.0 + (i % cols) as f64 * pw, 30.0 + (i / cols) as f64 * ph);
        let (w, h) = (pw - 20.0, ph - 40.0);
        svg.frame(x0, y0, w, h);
        svg.text(x0 + 4.0, y0 + 12.0, "start", &format!("target code {i}"));
        let peak = p.omega[i].iter().flatten().copied().fold(0.0, f64::max);
        let scale = if peak > 0.0 { (h - 16.0) / peak } else { 0.0 };
        let group_w = w / p.sigma_grid.len() as f64;
        let bar_w = group_w * 0.8 / k as f64;
        for (m, (sigma, w_m)) in p.sigma_grid.iter().zip(&p.omega[i]).enumerate() {
            let gx = x0 + m as f64 * group_w + group_w * 0.1;
            for (j, v) in w_m.iter().enumerate() {
                let bh = v * scale;
                svg.rect(
                    gx + j as f64 * bar_w,
                    y0 + h - bh,
                    bar_w,
                    bh,
                    PALETTE[j % PALETTE.len()],
                );
            }
            svg.text(
                gx + group_w * 0.4,
                y0 + h + 12.0,
                "middle",
                &format!("{sigma}"),
            );
        }
        svg.text(x0 + w, y0 + 12.0, "end", &format!("max {peak:.3}"));
    }
    svg.finish()
}

fn line_panel(
    svg: &mut Svg,
    origin: (f64, f64),
    size: (f64, f64),
    title: &str,
    series: &[(&[f64], &str, bool)],
) {
    let (x0, y0) = origin;
    let (w, h) = size;
    svg.frame(x0, y0, w, h);
    svg.text(x0 + 4.0, y0 - 4.0, "start", title);
    let all = series.iter().flat_map(|s| s.0.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let (lo, hi) = if lo.is_finite() && hi > lo {
        (lo, hi)
    } else {
        (lo.min(0.0), lo.max(0.0) + 1.0)
    };
    svg.text(x0 - 4.0, y0 + 10.0, "end", &format!("{hi:.3}"));
    svg.text(x0 - 4.0, y0 + h, "end", &format!("{lo:.3}"));
    for (values, stroke, dashed) in series {
        let n = values.len().max(2) - 1;
        let pts: Vec<(f64, f64)> = values
            .iter()
            .enumerate()
            .map(|(t, v)| {
                (
                    x0 + w * t as f64 / n as f64,
                    y0 + h - h * (v - lo) / (hi - lo),
                )
            })
            .collect();
        svg.polyline(&pts, stroke, *dashed);
    }
}

/// Distance, speed and direction profiles; reference means are drawn as
/// black dashed lines.
pub fn rationality_svg(r: &RationalityReport) -> String {
    let (w, h) = (460.0, 150.0);
    let mut svg = Svg::new(w + 80.0, 3.0 * (h + 40.0) + 20.0);
    let o = r.reference.as_ref();
    let mut distance = vec![(r.distance.as_slice(), "#1f77b4", false)];
    let mut speed = vec![
        (r.speed[0].as_slice(), "#1f77b4", false),
        (r.speed[1].as_slice(), "#d62728", false),
    ];
    let mut direction = vec![
        (r.direction[0].degrees.as_slice(), "#1f77b4", false),
        (r.direction[1].degrees.as_slice(), "#d62728", false),
    ];
    if let Some(o) = o {
        distance.push((o.distance.as_slice(), "black", true));
        speed.push((o.speed[0].as_slice(), "black", true));
        speed.push((o.speed[1].as_slice(), "black", true));
        direction.push((o.direction[0].as_slice(), "black", true));
        direction.push((o.direction[1].as_slice(), "black", true));
    }
    let panels = [
        ("distance between vehicles", distance),
        ("speed (step length)", speed),
        ("direction change (degrees)", direction),
    ];
    for (n, (title, series)) in panels.iter().enumerate() {
        line_panel(
            &mut svg,
            (60.0, 30.0 + n as f64 * (h + 40.0)),
            (w, h),
            title,
            series,
        );
    }
    svg.finish()
}

fn blend(t: f64) -> String {
    // green at the start, red at the end
    let t = t.clamp(0.0, 1.0);
    let r = (40.0 + 200.0 * t) as u8;
    let g = (170.0 * (1.0 - t) + 30.0) as u8;
    format!("#{r:02x}{g:02x}30")
}

/// One square per sweep frame on fixed `[-1.05, 1.05]` axes. Points run from
/// green (start) to red (end); thin grey lines join the vehicles at every
/// fifth step.
pub fn sweep_svg(frames: &[(f64, Encounter)], title: &str) -> String {
    let cell = 120.0;
    let cols = frames.len().clamp(1, 7);
    let rows = frames.len().div_ceil(cols).max(1);
    let mut svg = Svg::new(
        cols as f64 * cell + 20.0,
        rows as f64 * (cell + 16.0) + 30.0,
    );
    svg.text(10.0, 16.0, "start", title);
    for (f, (v, e)) in frames.iter().enumerate() {
        let (x0, y0) = (
            10.0 + (f % cols) as f64 * cell,
            30.0 + (f / cols) as f64 * (cell + 16.0),
        );
        let size = cell - 8.0;
        svg.frame(x0, y0, size, size);
        svg.text(
            x0 + size / 2.0,
            y0 + size + 12.0,
            "middle",
            &format!("{v:.2}"),
        );
        let map = |p: [f64; 2]| {
            (
                x0 + (p[0] + 1.05) / 2.1 * size,
                y0 + size - (p[1] + 1.05) / 2.1 * size,
            )
        };
        let n = e.len().max(2) - 1;
        for t in (0..e.len()).step_by(5) {
            svg.line(map(e.s1[t]), map(e.s2[t]), "#bbbbbb", 0.5);
        }
        for t in 0..e.len() {
            let c = blend(t as f64 / n as f64);
            svg.circle(map(e.s1[t]), 1.6, &c);
            svg.circle(map(e.s2[t]), 1.6, &c);
        }
    }
    svg.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{
        disentanglement_scan, rationality_report, variance_ratio, IdentityModel, ScanOptions,
    };

    fn enc() -> Encounter {
        let s1 = (0..5).map(|i| [i as f64 * 0.2 - 0.5, 0.0]).collect();
        let s2 = (0..5).map(|i| [0.0, i as f64 * 0.2 - 0.5]).collect();
        Encounter::generated("e", s1, s2).unwrap()
    }

    #[test]
    fn scan_tables_have_expected_rows() {
        let p = disentanglement_scan(
            &IdentityModel { latent: 3 },
            &ScanOptions {
                samples: 5,
                ..ScanOptions::default()
            },
        )
        .unwrap();
        let csv = disentanglement_csv(&p);
        assert_eq!(csv.lines().count(), 1 + 3 * 10 * 3);
        assert!(csv.starts_with("target_code,sigma,out_code,variance\n0,0.1,0,"));
        let r = ratio_csv(&variance_ratio(&p).unwrap());
        assert_eq!(r.lines().count(), 1 + 30);
        assert!(r.lines().nth(1).unwrap().ends_with(",1.0000000000000000e0"));
        assert!(disentanglement_svg(&p).matches("<rect").count() > 90);
    }

    #[test]
    fn overlay_columns_only_with_reference() {
        let e = enc();
        let plain = profile_csv(&rationality_report(&e, None).unwrap());
        assert_eq!(plain[0].1.lines().next().unwrap(), "t,distance");
        assert!(
            !rationality_svg(&rationality_report(&e, None).unwrap()).contains("stroke-dasharray")
        );
        let with = rationality_report(&e, Some(std::slice::from_ref(&e))).unwrap();
        assert_eq!(
            profile_csv(&with)[0].1.lines().next().unwrap(),
            "t,distance,reference_mean"
        );
        assert!(rationality_svg(&with).contains("stroke-dasharray"));
        assert_eq!(profile_csv(&with)[2].1.lines().count(), 1 + 3);
    }

    #[test]
    fn sweep_outputs() {
        let frames = vec![(-1.0, enc()), (1.0, enc())];
        let csv = sweep_csv(&frames);
        assert_eq!(csv.lines().count(), 1 + 2 * 5);
        let svg = sweep_svg(&frames, "code 0");
        assert_eq!(svg.matches("<circle").count(), 20);
        assert!(svg.contains(&blend(0.0)) && svg.contains(&blend(1.0)));
    }
}
