//! Tabular and graphical renderings of TCAV results.
//!
//! Each class gets one SVG grouped bar chart: groups are layers, bars are
//! concepts, bar height is the mean score rounded to three decimals, and
//! bars that failed the significance test carry a `*` marker.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use tcav_core::concepts::Color;
use tcav_core::tcav::TcavResult;
use tcav_core::{Error, Result};

use crate::results::ResultsDocument;

pub const CSV_HEADER: [&str; 8] = [
    "concept",
    "class",
    "layer",
    "mean_score",
    "p_value",
    "significant",
    "n_runs",
    "mean_cav_accuracy",
];

/// One CSV row per result, in file order.
pub fn render_csv(doc: &ResultsDocument) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidConfig(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(err)?;
    for r in &doc.results {
        w.write_record([
            r.concept_name.clone(),
            doc.class_label(r.class_k),
            r.layer_name.clone(),
            r.mean_score.to_string(),
            r.p_value.to_string(),
            r.significant.to_string(),
            r.concept_scores.len().to_string(),
            r.mean_cav_accuracy().to_string(),
        ])
        .map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidConfig(format!("csv: {e}")))
}

fn fmt_score(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.3}")
    } else {
        "n/a".into()
    }
}

/// Fixed-width text table.
pub fn render_table(doc: &ResultsDocument) -> String {
    let mut rows = vec![[
        "class".to_string(),
        "layer".into(),
        "concept".into(),
        "mean".into(),
        "p".into(),
        "sig".into(),
        "runs".into(),
        "cav_acc".into(),
    ]];
    for r in &doc.results {
        rows.push([
            doc.class_label(r.class_k),
            r.layer_name.clone(),
            r.concept_name.clone(),
            fmt_score(r.mean_score),
            format!("{:.3e}", r.p_value),
            if r.significant {
                "yes".into()
            } else {
                "no *".into()
            },
            r.concept_scores.len().to_string(),
            fmt_score(r.mean_cav_accuracy()),
        ]);
    }
    let widths: Vec<usize> = (0..8)
        .map(|c| {
            rows.iter()
                .map(|row| row[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#9c755f",
];

const BAR_W: f64 = 22.0;
const GROUP_GAP: f64 = 28.0;
const PLOT_H: f64 = 240.0;
const TOP: f64 = 56.0;
const LEFT: f64 = 56.0;
const BOTTOM: f64 = 48.0;
const LEGEND_W: f64 = 170.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn concept_fill(name: &str, index: usize) -> String {
    match name.parse::<Color>() {
        Ok(c) => {
            let [r, g, b] = c.reference().map(|v| (v * 255.0).round() as u8);
            format!("#{r:02x}{g:02x}{b:02x}")
        }
        Err(_) => PALETTE[index % PALETTE.len()].to_string(),
    }
}

/// Bar height in score units: the mean rounded to three decimals.
pub fn bar_value(mean_score: f64) -> f64 {
    if mean_score.is_finite() {
        (mean_score.clamp(0.0, 1.0) * 1000.0).round() / 1000.0
    } else {
        0.0
    }
}

/// Grouped bar chart for the results of one class.
pub fn render_svg(doc: &ResultsDocument, class_k: usize) -> String {
    let results: Vec<&TcavResult> = doc
        .results
        .iter()
        .filter(|r| r.class_k == class_k)
        .collect();
    let mut layers: Vec<&str> = Vec::new();
    for r in &results {
        if !layers.contains(&r.layer_name.as_str()) {
            layers.push(&r.layer_name);
        }
    }
    let concepts: Vec<&str> = results
        .iter()
        .map(|r| r.concept_name.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let group_w = concepts.len() as f64 * BAR_W;
    let plot_w = (layers.len() as f64 * (group_w + GROUP_GAP)).max(GROUP_GAP);
    let width = LEFT + plot_w + LEGEND_W;
    let height = TOP + PLOT_H + BOTTOM;
    let base = TOP + PLOT_H;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r##"<text x="{:.2}" y="24" font-size="15" text-anchor="middle">TCAV scores for class {}</text>"##,
        LEFT + plot_w / 2.0,
        escape(&doc.class_label(class_k))
    );
    let _ = writeln!(
        s,
        r##"<text x="{:.2}" y="42" font-size="10" text-anchor="middle" fill="#555555">* did not pass the significance test</text>"##,
        LEFT + plot_w / 2.0
    );
    for tick in 0..=4 {
        let v = f64::from(tick) * 0.25;
        let y = base - v * PLOT_H;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{v:.2}</text>"##,
            LEFT - 6.0,
            y + 3.5
        );
    }
    let _ = writeln!(
        s,
        r##"<line x1="{LEFT:.2}" y1="{TOP:.2}" x2="{LEFT:.2}" y2="{base:.2}" stroke="#333333"/>"##
    );

    for (g, layer) in layers.iter().enumerate() {
        let gx = LEFT + GROUP_GAP / 2.0 + g as f64 * (group_w + GROUP_GAP);
        for (c, concept) in concepts.iter().enumerate() {
            let Some(r) = results
                .iter()
                .find(|r| r.layer_name == *layer && r.concept_name == *concept)
            else {
                continue;
            };
            let value = bar_value(r.mean_score);
            let h = value * PLOT_H;
            let x = gx + c as f64 * BAR_W;
            let _ = writeln!(
                s,
                r##"<rect class="bar" x="{:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{}" data-concept="{}" data-layer="{}" data-score="{value:.3}"/>"##,
                x + 1.0,
                base - h,
                BAR_W - 2.0,
                concept_fill(concept, c),
                escape(concept),
                escape(layer)
            );
            let _ = writeln!(
                s,
                r##"<text x="{:.2}" y="{:.2}" font-size="8" text-anchor="middle">{}</text>"##,
                x + BAR_W / 2.0,
                base - h - 3.0,
                fmt_score(r.mean_score)
            );
            if !r.significant {
                let _ = writeln!(
                    s,
                    r##"<text class="star" x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">*</text>"##,
                    x + BAR_W / 2.0,
                    base - h - 12.0
                );
            }
        }
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"##,
            gx + group_w / 2.0,
            base + 18.0,
            escape(layer)
        );
    }
    let _ = writeln!(
        s,
        r##"<line x1="{LEFT:.2}" y1="{base:.2}" x2="{:.2}" y2="{base:.2}" stroke="#333333"/>"##,
        LEFT + plot_w
    );

    let lx = LEFT + plot_w + 20.0;
    for (c, concept) in concepts.iter().enumerate() {
        let y = TOP + c as f64 * 18.0;
        let _ = writeln!(
            s,
            r##"<rect x="{lx:.2}" y="{y:.2}" width="12" height="12" fill="{}"/>"##,
            concept_fill(concept, c)
        );
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"##,
            lx + 18.0,
            y + 10.0,
            escape(concept)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Classes present in the results, ascending.
pub fn classes(doc: &ResultsDocument) -> Vec<usize> {
    doc.results
        .iter()
        .map(|r| r.class_k)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

pub fn svg_file_name(doc: &ResultsDocument, class_k: usize) -> String {
    let label: String = doc
        .class_label(class_k)
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("tcav_{label}.svg")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::results::tests::record;

    fn doc(records: Vec<TcavResult>) -> ResultsDocument {
        let mut d = ResultsDocument::new(vec!["healthy".into(), "late_blight".into()]);
        d.results = records;
        d.complete = true;
        d
    }

    #[test]
    fn single_bar_is_labeled_to_three_decimals() {
        let d = doc(vec![record("brown", "dense1", 0.83, true)]);
        let svg = render_svg(&d, 1);
        assert!(svg.contains(">0.830<"));
        assert!(svg.contains(r#"data-score="0.830""#));
        assert!(!svg.contains(r#"class="star""#));
        assert!(svg.contains(&format!(r##"height="{:.2}""##, 0.83 * PLOT_H)));
    }

    #[test]
    fn stars_only_on_insignificant_bars() {
        let d = doc(vec![
            record("blue", "dense1", 0.4, false),
            record("brown", "dense1", 0.9, true),
            record("blue", "relu2", 0.5, false),
            record("brown", "relu2", 0.95, true),
        ]);
        let svg = render_svg(&d, 1);
        assert_eq!(svg.matches(r#"class="bar""#).count(), 4);
        assert_eq!(svg.matches(r#"class="star""#).count(), 2);
        assert_eq!(render_svg(&d, 1), svg);
    }

    #[test]
    fn csv_has_one_row_per_result() {
        let d = doc(vec![
            record("brown", "dense1", 0.83, true),
            record("blue", "dense1", 0.5, false),
        ]);
        let text = String::from_utf8(render_csv(&d).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert_eq!(lines[1], "brown,late_blight,dense1,0.83,0.001,true,2,0.95");
    }

    #[test]
    fn empty_results_render_an_empty_table() {
        let d = doc(vec![]);
        assert_eq!(render_table(&d).lines().count(), 1);
        assert!(classes(&d).is_empty());
    }

    #[test]
    fn bar_value_rounds_and_clamps() {
        assert_eq!(bar_value(0.8304), 0.83);
        assert_eq!(bar_value(0.8306), 0.831);
        assert_eq!(bar_value(f64::NAN), 0.0);
    }
}
