//! SVG overlays of a page: frame outlines labelled with their reading
//! position, character and text boxes, and one line per predicted
//! speaker→text link, green when the link is in the ground truth and red
//! otherwise. Output depends only on its inputs, so it can be golden-tested.

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::dataset::Page;
use crate::geometry::BBox;
use crate::order::FrameOrder;
use crate::predict::Prediction;

pub const CORRECT_COLOR: &str = "#1aff1a";
pub const WRONG_COLOR: &str = "#ff1a1a";
const FRAME_COLOR: &str = "#444444";
const CHARACTER_COLOR: &str = "#1f77b4";
const TEXT_COLOR: &str = "#ff7f0e";

/// Counts of drawn links, by outcome.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkTally {
    pub correct: usize,
    pub wrong: usize,
}

fn num(v: f64) -> String {
    // Integers print without a fraction; others with two decimals.
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn rect(out: &mut String, b: &BBox, stroke: &str, width: f64, id: &str) {
    let _ = writeln!(
        out,
        r#"  <rect data-id="{}" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="{stroke}" stroke-width="{}"/>"#,
        escape(id),
        num(b.x_min),
        num(b.y_min),
        num(b.width()),
        num(b.height()),
        num(width)
    );
}

/// Renders the overlay. Predicted links whose character or text is not on
/// the page are skipped.
pub fn render_svg(page: &Page, order: &FrameOrder, prediction: &Prediction) -> (String, LinkTally) {
    let truth: BTreeSet<(&str, &str)> = page
        .pairs
        .iter()
        .flat_map(|p| p.speaker_box_ids.iter().map(move |s| (s.as_str(), p.text_id.as_str())))
        .collect();
    let stroke = (page.width.max(page.height) / 400.0).max(1.0);
    let font = (page.width.max(page.height) / 40.0).max(8.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" width="{w}" height="{h}">"#,
        w = num(page.width),
        h = num(page.height)
    );
    let _ = writeln!(
        s,
        "  <title>{} page {}</title>",
        escape(&page.book_title),
        page.page_index
    );
    if let Some(img) = &page.image_path {
        let _ = writeln!(
            s,
            r#"  <image href="{}" x="0" y="0" width="{}" height="{}"/>"#,
            escape(img),
            num(page.width),
            num(page.height)
        );
    }
    for (i, f) in order.ordered_frames.iter().enumerate() {
        rect(&mut s, &f.bbox, FRAME_COLOR, stroke, &f.id);
        let _ = writeln!(
            s,
            r#"  <text x="{}" y="{}" font-size="{}" fill="{FRAME_COLOR}">{}</text>"#,
            num(f.bbox.x_min + font * 0.3),
            num(f.bbox.y_min + font),
            num(font),
            i + 1
        );
    }
    for c in &page.characters {
        rect(&mut s, &c.bbox, CHARACTER_COLOR, stroke, &c.id);
    }
    for t in &page.texts {
        rect(&mut s, &t.bbox, TEXT_COLOR, stroke, &t.id);
    }
    let mut tally = LinkTally::default();
    for (text_id, ranked) in &prediction.rankings {
        let Some(t) = page.text(text_id) else { continue };
        for r in ranked {
            let Some(c) = page.character(&r.character_id) else { continue };
            let ok = truth.contains(&(c.id.as_str(), t.id.as_str()));
            if ok {
                tally.correct += 1;
            } else {
                tally.wrong += 1;
            }
            let (a, b) = (c.bbox.centroid(), t.bbox.centroid());
            let _ = writeln!(
                s,
                r#"  <line data-character="{}" data-text="{}" x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="{}"/>"#,
                escape(&c.id),
                escape(&t.id),
                num(a.x),
                num(a.y),
                num(b.x),
                num(b.y),
                if ok { CORRECT_COLOR } else { WRONG_COLOR },
                num(stroke * 2.0)
            );
        }
    }
    s.push_str("</svg>\n");
    (s, tally)
}
