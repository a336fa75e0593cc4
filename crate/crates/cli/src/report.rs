use std::collections::BTreeMap;
use std::fmt::Write as _;

use ciprio::metrics::{cle, MetricKind};
use ciprio::orchestrator::CycleResult;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

const APFD_COLOR: &str = "#1f77b4";
const NRPA_COLOR: &str = "#ff7f0e";

/// The numbers behind one chart, in plotting order.
pub fn plot_table(results: &[CycleResult]) -> Vec<(u64, MetricKind, f64)> {
    let mut rows: Vec<_> = results.iter().map(|r| (r.cycle_id, r.metric_kind, r.metric_value)).collect();
    rows.sort_by_key(|r| r.0);
    rows
}

pub fn plot_csv(rows: &[(u64, MetricKind, f64)]) -> String {
    let mut out = String::from("cycle_id,metric_kind,metric_value\n");
    for (id, kind, v) in rows {
        let kind = match kind {
            MetricKind::Apfd => "APFD",
            MetricKind::Nrpa => "NRPA",
        };
        writeln!(out, "{id},{kind},{v}").unwrap();
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Per-cycle line chart. APFD cycles are drawn as circles and NRPA cycles
/// as squares so both metric kinds stay distinguishable on one axis.
pub fn plot_svg(title: &str, rows: &[(u64, MetricKind, f64)]) -> String {
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let (lo, hi) = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => (a.0 as f64, b.0 as f64),
        _ => (0.0, 1.0),
    };
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x = |c: u64| LEFT + (c as f64 - lo) / span * plot_w;
    let y = |v: f64| TOP + (1.0 - v.clamp(0.0, 1.0)) * plot_h;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title)).unwrap();

    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let yy = y(v);
        writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            yy + 4.0
        )
        .unwrap();
    }
    let ticks = 5.min(rows.len().max(1));
    for i in 0..=ticks {
        let c = lo + span * i as f64 / ticks as f64;
        let xx = LEFT + (c - lo) / span * plot_w;
        writeln!(
            s,
            r#"<text x="{xx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h + 18.0,
            c.round()
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">cycle</text>"#, LEFT + plot_w / 2.0, HEIGHT - 10.0).unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">metric</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    )
    .unwrap();

    if !rows.is_empty() {
        let points: Vec<String> = rows.iter().map(|&(c, _, v)| format!("{:.2},{:.2}", x(c), y(v))).collect();
        writeln!(s, r##"<polyline fill="none" stroke="#888" stroke-width="1" points="{}"/>"##, points.join(" ")).unwrap();
    }
    for &(c, kind, v) in rows {
        let (cx, cy) = (x(c), y(v));
        match kind {
            MetricKind::Apfd => {
                writeln!(s, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{APFD_COLOR}"/>"#).unwrap();
            }
            MetricKind::Nrpa => {
                writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="6" height="6" fill="{NRPA_COLOR}"/>"#,
                    cx - 3.0,
                    cy - 3.0
                )
                .unwrap();
            }
        }
    }
    let lx = LEFT + plot_w - 90.0;
    writeln!(
        s,
        r#"<circle cx="{lx}" cy="{}" r="3" fill="{APFD_COLOR}"/><text x="{}" y="{}">APFD</text>"#,
        TOP + 12.0,
        lx + 8.0,
        TOP + 16.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<rect x="{}" y="{}" width="6" height="6" fill="{NRPA_COLOR}"/><text x="{}" y="{}">NRPA</text>"#,
        lx - 3.0,
        TOP + 25.0,
        lx + 8.0,
        TOP + 32.0
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

/// CLE of `a` over `b` on the cycles both evaluated, with the number of
/// shared cycles. `None` when they share none.
pub fn overlap_cle(a: &[CycleResult], b: &[CycleResult]) -> Option<(usize, f64)> {
    let bm: BTreeMap<u64, f64> = b.iter().map(|r| (r.cycle_id, r.metric_value)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .iter()
        .filter_map(|r| bm.get(&r.cycle_id).map(|&v| (r.metric_value, v)))
        .unzip();
    let value = cle(&xs, &ys).ok()?;
    Some((xs.len(), value))
}
