//! Minimal hand-written SVG charts.

use std::fmt::Write as _;

const CELL: f64 = 24.0;
const MARGIN: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Heat map of `weights` (one row per output step) with the source token
/// labels on top, target labels on the left, and an outlined cell at each
/// row's head position (1-indexed).
pub fn attention_heatmap(weights: &[Vec<f64>], heads: &[usize], source: &[String], target: &[String]) -> String {
    let cols = source.len();
    let rows = weights.len();
    let width = MARGIN + CELL * cols as f64 + 10.0;
    let height = MARGIN + CELL * rows as f64 + 10.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="11">"#
    );
    for (j, tok) in source.iter().enumerate() {
        let x = MARGIN + CELL * (j as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN - 8.0,
            escape(tok)
        );
    }
    for (i, row) in weights.iter().enumerate() {
        let y = MARGIN + CELL * i as f64;
        if let Some(tok) = target.get(i) {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                MARGIN - 8.0,
                y + CELL * 0.65,
                escape(tok)
            );
        }
        for (j, &w) in row.iter().enumerate().take(cols) {
            let shade = (255.0 * (1.0 - w.clamp(0.0, 1.0))).round() as u8;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},{shade})"/>"#,
                MARGIN + CELL * j as f64
            );
        }
        if let Some(&t) = heads.get(i) {
            if t >= 1 && t <= cols {
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{y}" width="{CELL}" height="{CELL}" fill="none" stroke="rgb(220,40,40)" stroke-width="2.5"/>"#,
                    MARGIN + CELL * (t - 1) as f64
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Grouped bar chart of counts per bin, one colour per series.
pub fn histogram(series: &[(String, Vec<usize>)], bins: &[usize]) -> String {
    const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let bar = 10.0;
    let group = bar * series.len().max(1) as f64 + 6.0;
    let plot_h = 200.0;
    let width = MARGIN + group * bins.len() as f64 + 160.0;
    let height = plot_h + MARGIN + 40.0;
    let max = series
        .iter()
        .flat_map(|(_, c)| c.iter().copied())
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let base = MARGIN + plot_h;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#,
        MARGIN + group * bins.len() as f64
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
        MARGIN - 6.0,
        MARGIN + 4.0,
        max as usize
    );
    for (b, bin) in bins.iter().enumerate() {
        let gx = MARGIN + group * b as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{bin}</text>"#,
            gx + group / 2.0,
            base + 14.0
        );
        for (k, (_, counts)) in series.iter().enumerate() {
            let c = counts.get(b).copied().unwrap_or(0) as f64;
            let h = plot_h * c / max;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{bar}" height="{h}" fill="{}"/>"#,
                gx + 3.0 + bar * k as f64,
                base - h,
                PALETTE[k % PALETTE.len()]
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">initial delay (source tokens read before first write)</text>"#,
        MARGIN + group * bins.len() as f64 / 2.0,
        base + 32.0
    );
    let lx = MARGIN + group * bins.len() as f64 + 16.0;
    for (k, (name, _)) in series.iter().enumerate() {
        let y = MARGIN + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{y}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            PALETTE[k % PALETTE.len()],
            lx + 14.0,
            y + 9.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_has_one_cell_per_weight_and_one_outline_per_head() {
        let w = vec![vec![1.0, 0.0, 0.0], vec![0.25, 0.75, 0.0]];
        let svg = attention_heatmap(&w, &[1, 2], &["a".into(), "<b>".into(), "c".into()], &["x".into(), "y".into()]);
        assert_eq!(svg.matches("<rect").count(), 6 + 2);
        assert_eq!(svg.matches("stroke=\"rgb(220,40,40)\"").count(), 2);
        assert!(svg.contains("&lt;b&gt;"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn histogram_draws_every_bar() {
        let svg = histogram(&[("milk".into(), vec![3, 0, 5]), ("wait".into(), vec![0, 8, 0])], &[1, 2, 3]);
        assert_eq!(svg.matches("<rect").count(), 6 + 2);
    }
}
