//! Synthetic pages with known ground truth, plus brute-force oracles for
//! reading order and per-text selection.
//!
//! Generation is driven by `ChaCha8Rng`: the stream for page `i` of a config
//! is `seed_from_u64(seed)` with `set_stream(i)`, so pages are independent,
//! reproducible across platforms and can be generated in any order. All
//! coordinates are whole pixels.
//!
//! Layout: rows of frames on a jittered grid. Row heights and column widths
//! are random weights in `[1, 2)`; margins are 4% and gutters 7% of the page
//! dimension, and frame edges are pulled inward by up to 1% more, so every
//! gutter exceeds twice the default cut tolerance.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    assign_difficulty, Book, CharacterBox, CharacterInfo, Frame, Page, SpeakerPair, TextBox,
};
use crate::error::{Error, Result};
use crate::geometry::{BBox, Point};
use crate::order::{assign_page, order_frames, OrderConfig, DEFAULT_CUT_TOLERANCE};
use crate::predict::{Prediction, Ranked, ScoreMatrix};

const MARGIN: f64 = 0.04;
const GUTTER: f64 = 0.07;
const JITTER: f64 = 0.01;
const CAST: [(&str, &str); 4] = [("ch0", "Aki"), ("ch1", "Ben"), ("ch2", "Chie"), ("ch3", "Dai")];

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub min: usize,
    pub max: usize,
}

impl Span {
    pub const fn new(min: usize, max: usize) -> Self {
        Span { min, max }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        rng.gen_range(self.min..=self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scenario {
    /// Every speaker stands in its text's frame.
    EasySameFrame,
    /// Every speaker stands in a frame one reading step away from its text,
    /// and the text's own frame holds at least one other character.
    HardNeighborFrame,
    /// Each text is Hard with the given probability, Easy otherwise.
    Mixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub rows: Span,
    /// Frames per row, drawn independently for each row.
    pub cols: Span,
    /// Characters drawn in every frame, before Hard speakers are added.
    pub characters_per_frame: Span,
    pub texts_per_frame: Span,
    pub scenario: Scenario,
    pub page_width: f64,
    pub page_height: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            rows: Span::new(2, 3),
            cols: Span::new(1, 3),
            characters_per_frame: Span::new(1, 2),
            texts_per_frame: Span::new(1, 2),
            scenario: Scenario::Mixed(0.15),
            page_width: 827.0,
            page_height: 1170.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, s) in [
            ("rows", self.rows),
            ("cols", self.cols),
            ("characters_per_frame", self.characters_per_frame),
            ("texts_per_frame", self.texts_per_frame),
        ] {
            if s.min > s.max {
                return bad(format!("{name}: empty range {}..={}", s.min, s.max));
            }
        }
        if self.rows.min == 0 || self.cols.min == 0 {
            return bad("layouts need at least one row and one column".into());
        }
        if self.characters_per_frame.min == 0 {
            return bad("every frame needs a character (speaker or decoy)".into());
        }
        if self.rows.max > 8 || self.cols.max > 8 {
            return bad("at most 8 rows and 8 columns".into());
        }
        if !(self.page_width >= 100.0 && self.page_height >= 100.0) {
            return bad(format!(
                "page must be at least 100x100 px, got {}x{}",
                self.page_width, self.page_height
            ));
        }
        let hard_share = match self.scenario {
            Scenario::EasySameFrame => 0.0,
            Scenario::HardNeighborFrame => 1.0,
            Scenario::Mixed(r) if (0.0..=1.0).contains(&r) => r,
            Scenario::Mixed(r) => return bad(format!("mixed ratio must be in [0, 1], got {r}")),
        };
        if hard_share > 0.0 && self.rows.max * self.cols.max < 2 {
            return bad("Hard texts need at least two frames per page".into());
        }
        Ok(())
    }

    fn hard_share(&self) -> f64 {
        match self.scenario {
            Scenario::EasySameFrame => 0.0,
            Scenario::HardNeighborFrame => 1.0,
            Scenario::Mixed(r) => r,
        }
    }
}

fn rng_for(seed: u64, page_index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(page_index));
    rng
}

/// Splits `[start, start + length)` into `n` cells separated by `gap`, with
/// random relative sizes. Returns `(lo, hi)` pairs.
fn cells(rng: &mut ChaCha8Rng, n: usize, start: f64, length: f64, gap: f64) -> Vec<(f64, f64)> {
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..2.0)).collect();
    let total: f64 = weights.iter().sum();
    let usable = length - gap * (n - 1) as f64;
    let mut lo = start;
    weights
        .iter()
        .map(|w| {
            let hi = lo + usable * w / total;
            let cell = (lo, hi);
            lo = hi + gap;
            cell
        })
        .collect()
}

fn jittered_grid(rng: &mut ChaCha8Rng, cfg: &SynthConfig, page_index: u32) -> Vec<Frame> {
    let (w, h) = (cfg.page_width, cfg.page_height);
    let n_rows = cfg.rows.sample(rng);
    let rows = cells(rng, n_rows, MARGIN * h, h * (1.0 - 2.0 * MARGIN), GUTTER * h);
    let mut frames = Vec::new();
    for (y0, y1) in rows {
        let n_cols = cfg.cols.sample(rng);
        for (x0, x1) in cells(rng, n_cols, MARGIN * w, w * (1.0 - 2.0 * MARGIN), GUTTER * w) {
            let mut inset = |lo: f64, hi: f64, dim: f64| {
                let a = lo + rng.gen_range(0.0..=JITTER) * dim;
                let b = hi - rng.gen_range(0.0..=JITTER) * dim;
                (a.ceil(), b.floor())
            };
            let (xa, xb) = inset(x0, x1, w);
            let (ya, yb) = inset(y0, y1, h);
            frames.push(Frame {
                id: format!("p{page_index}f{}", frames.len()),
                bbox: BBox { x_min: xa, y_min: ya, x_max: xb, y_max: yb },
            });
        }
    }
    frames
}

/// Box of size `w`×`h` (fractions of the frame) with its centre as close to
/// `target` as fits inside `frame`; uniform over the frame when `target` is
/// `None`.
fn place(rng: &mut ChaCha8Rng, frame: &BBox, fw: (f64, f64), fh: (f64, f64), target: Option<Point>) -> BBox {
    let bw = (frame.width() * rng.gen_range(fw.0..fw.1)).round().max(2.0);
    let bh = (frame.height() * rng.gen_range(fh.0..fh.1)).round().max(2.0);
    let (x_lo, x_hi) = (frame.x_min, (frame.x_max - bw).max(frame.x_min));
    let (y_lo, y_hi) = (frame.y_min, (frame.y_max - bh).max(frame.y_min));
    let (x, y) = match target {
        None => (rng.gen_range(x_lo..=x_hi), rng.gen_range(y_lo..=y_hi)),
        Some(p) => ((p.x - bw / 2.0).clamp(x_lo, x_hi), (p.y - bh / 2.0).clamp(y_lo, y_hi)),
    };
    let (x, y) = (x.round().clamp(x_lo, x_hi), y.round().clamp(y_lo, y_hi));
    BBox { x_min: x, y_min: y, x_max: (x + bw).min(frame.x_max), y_max: (y + bh).min(frame.y_max) }
}

fn nearest_point(b: &BBox, p: Point) -> Point {
    Point { x: p.x.clamp(b.x_min, b.x_max), y: p.y.clamp(b.y_min, b.y_max) }
}

const CHAR_W: (f64, f64) = (0.15, 0.3);
const CHAR_H: (f64, f64) = (0.3, 0.5);
const TEXT_W: (f64, f64) = (0.08, 0.15);
const TEXT_H: (f64, f64) = (0.1, 0.25);

/// Generates page `page_index` of the corpus described by `config`.
///
/// Every frame receives `characters_per_frame` characters at uniform
/// positions and `texts_per_frame` texts. An Easy text is spoken by one of
/// its frame's characters. A Hard text is moved to the side of its frame
/// facing a frame one reading step away, and a new speaker is placed in that
/// frame as close to the text as fits; the characters already in the text's
/// frame remain as decoys. Pages are redrawn (up to 64 times) when a Hard
/// text is requested on a single-frame layout.
pub fn gen_page(config: &SynthConfig, page_index: u32) -> Result<Page> {
    config.validate()?;
    let mut rng = rng_for(config.seed, page_index);
    let hard_share = config.hard_share();
    let order_cfg = OrderConfig::default();
    let mut frames = jittered_grid(&mut rng, config, page_index);
    let mut tries = 1;
    while hard_share > 0.0 && frames.len() < 2 {
        if tries == 64 {
            return Err(Error::Config("could not draw a multi-frame layout for Hard texts".into()));
        }
        frames = jittered_grid(&mut rng, config, page_index);
        tries += 1;
    }
    let order = order_frames(&frames, config.page_width, config.page_height, &order_cfg);
    let ordered: Vec<BBox> = order.ordered_frames.iter().map(|f| f.bbox).collect();

    let mut page = Page::new("synthetic", page_index, config.page_width, config.page_height);
    // characters per frame, indexed by reading position
    let mut residents: Vec<Vec<usize>> = vec![Vec::new(); ordered.len()];
    let new_char = |page: &mut Page, rng: &mut ChaCha8Rng, bbox: BBox| {
        let id = format!("p{page_index}c{}", page.characters.len());
        let cast = CAST[rng.gen_range(0..CAST.len())].0;
        page.characters.push(CharacterBox { id, bbox, character_name: cast.to_string() });
        page.characters.len() - 1
    };
    for (k, fb) in ordered.iter().enumerate() {
        for _ in 0..config.characters_per_frame.sample(&mut rng) {
            let cb = place(&mut rng, fb, CHAR_W, CHAR_H, None);
            let c = new_char(&mut page, &mut rng, cb);
            residents[k].push(c);
        }
    }
    for (k, fb) in ordered.iter().enumerate() {
        for _ in 0..config.texts_per_frame.sample(&mut rng) {
            let text_id = format!("p{page_index}t{}", page.texts.len());
            let hard = hard_share > 0.0 && rng.gen_bool(hard_share);
            let (bbox, speaker) = if hard {
                let mut neighbours = Vec::with_capacity(2);
                if k > 0 {
                    neighbours.push(k - 1);
                }
                if k + 1 < ordered.len() {
                    neighbours.push(k + 1);
                }
                let s = *neighbours.choose(&mut rng).expect("at least two frames");
                let toward = nearest_point(fb, ordered[s].centroid());
                let tb = place(&mut rng, fb, TEXT_W, TEXT_H, Some(toward));
                let at = nearest_point(&ordered[s], tb.centroid());
                let cb = place(&mut rng, &ordered[s], CHAR_W, CHAR_H, Some(at));
                (tb, new_char(&mut page, &mut rng, cb))
            } else {
                let tb = place(&mut rng, fb, TEXT_W, TEXT_H, None);
                (tb, *residents[k].choose(&mut rng).expect("frames have characters"))
            };
            page.texts.push(TextBox { id: text_id.clone(), bbox, content: None });
            page.pairs.push(SpeakerPair {
                text_id,
                speaker_box_ids: vec![page.characters[speaker].id.clone()],
                difficulty: crate::dataset::Difficulty::Unassigned,
            });
        }
    }
    page.frames = frames;
    let assignment = assign_page(&page, &order);
    assign_difficulty(&mut page, &assignment);
    page.validate()?;
    Ok(page)
}

/// `pages` consecutive pages (indices `0..pages`) bound into one book.
pub fn gen_book(config: &SynthConfig, title: &str, pages: u32) -> Result<Book> {
    let mut out = Vec::with_capacity(pages as usize);
    for i in 0..pages {
        let mut p = gen_page(config, i)?;
        p.book_title = title.to_string();
        out.push(p);
    }
    Ok(Book {
        title: title.to_string(),
        characters: CAST
            .iter()
            .map(|(id, name)| CharacterInfo { id: id.to_string(), name: name.to_string() })
            .collect(),
        pages: out,
    })
}

/// Random frame layout for order testing: `(frames, width, height)`.
///
/// Two families, both with at most 8 frames. Guillotine layouts split a
/// rectangle recursively; horizontal splits may subdivide both parts, while
/// a vertical split keeps one side a single frame and the other a vertical
/// stack (a tall panel beside a column of panels). Gaps between parts range from a 1.5τ overlap to a 4τ gutter.
/// Staircases chain 2 to 6 frames stepping down and to the left, each
/// overlapping the previous one in both axes.
pub fn random_layout(seed: u64) -> (Vec<Frame>, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.gen_range(600.0_f64..1800.0).round();
    let h = rng.gen_range(800.0_f64..1800.0).round();
    let mut boxes = Vec::new();
    if rng.gen_bool(0.2) {
        staircase(&mut rng, w, h, &mut boxes);
    } else {
        let n = rng.gen_range(1..=8);
        let root = BBox { x_min: 0.0, y_min: 0.0, x_max: w, y_max: h };
        guillotine(&mut rng, root, n, w, h, false, &mut boxes);
    }
    boxes.shuffle(&mut rng);
    let frames = boxes
        .into_iter()
        .enumerate()
        .map(|(i, bbox)| Frame { id: format!("f{i}"), bbox })
        .collect();
    (frames, w, h)
}

fn guillotine(
    rng: &mut ChaCha8Rng,
    r: BBox,
    n: usize,
    w: f64,
    h: f64,
    stack_only: bool,
    out: &mut Vec<BBox>,
) {
    let horizontal = stack_only || rng.gen_bool(0.5);
    let extent = if horizontal { r.height() } else { r.width() };
    let tau = DEFAULT_CUT_TOLERANCE * if horizontal { h } else { w };
    if n == 1 || extent < 12.0 * tau {
        // Small rectangles stay whole; the layout just ends up with fewer frames.
        out.push(r);
        return;
    }
    let gap = (rng.gen_range(-1.5..4.0) * tau).round();
    let at = (if horizontal { r.y_min } else { r.x_min } + extent * rng.gen_range(0.3..0.7)).round();
    let (lo_end, hi_start) = ((at - gap / 2.0).floor(), (at + gap / 2.0).ceil());
    let (a, b) = if horizontal {
        (BBox { y_max: lo_end, ..r }, BBox { y_min: hi_start, ..r })
    } else {
        (BBox { x_max: lo_end, ..r }, BBox { x_min: hi_start, ..r })
    };
    let (na, nb) = if horizontal {
        let na = rng.gen_range(1..n);
        (na, n - na)
    } else if rng.gen_bool(0.5) {
        (1, n - 1)
    } else {
        (n - 1, 1)
    };
    // The subdivided side of a vertical split is a plain stack, so no
    // vertical gutter inside it can line up into a page-wide cut.
    let stack = stack_only || !horizontal;
    guillotine(rng, a, na, w, h, stack, out);
    guillotine(rng, b, nb, w, h, stack, out);
}

fn staircase(rng: &mut ChaCha8Rng, w: f64, h: f64, out: &mut Vec<BBox>) {
    let n = rng.gen_range(2..=6);
    let (fw, fh) = ((w * 0.45).round(), (h * 0.3).round());
    let dx = ((w - fw) / (n - 1) as f64).floor().min(fw - 0.1 * w);
    let dy = ((h - fh) / (n - 1) as f64).floor().min(fh - 0.1 * h);
    for i in 0..n {
        let x = (w - fw - dx * i as f64).max(0.0);
        let y = dy * i as f64;
        out.push(BBox { x_min: x, y_min: y, x_max: x + fw, y_max: y + fh });
    }
}

/// Brute-force reading order. Every permutation of the frames is checked
/// against the pairwise rule: A precedes B when A's shrunk box lies entirely
/// above B's, otherwise (when they are horizontally separated) the one on the
/// reading-side first. Among consistent permutations the one whose base keys
/// (y-centroid, x-centroid toward the reading side, id) are lexicographically
/// smallest wins. Returns frame ids in order.
pub fn oracle_reading_order(
    frames: &[Frame],
    page_width: f64,
    page_height: f64,
    config: &OrderConfig,
) -> Result<Vec<String>> {
    let n = frames.len();
    if n > 8 {
        return Err(Error::OracleScale(n));
    }
    let (tx, ty) = (config.cut_tolerance * page_width, config.cut_tolerance * page_height);
    let shrink = |lo: f64, hi: f64, t: f64| {
        if hi - lo < 2.0 * t {
            let m = (lo + hi) / 2.0;
            (m, m)
        } else {
            (lo + t, hi - t)
        }
    };
    let shrunk: Vec<((f64, f64), (f64, f64))> = frames
        .iter()
        .map(|f| {
            let b = &f.bbox;
            (shrink(b.x_min, b.x_max, tx), shrink(b.y_min, b.y_max, ty))
        })
        .collect();
    let rtl = config.direction == crate::order::ReadingDirection::RightToLeft;
    // before[a][b]: a must be read before b
    let mut before = vec![vec![false; n]; n];
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let ((ax, ay), (bx, by)) = (shrunk[a], shrunk[b]);
            before[a][b] = if ay.1 <= by.0 && ay.0 < by.0 {
                true
            } else if by.1 <= ay.0 && by.0 < ay.0 {
                false
            } else if bx.1 <= ax.0 && bx.0 < ax.0 {
                rtl // a is to the right of b
            } else if ax.1 <= bx.0 && ax.0 < bx.0 {
                !rtl
            } else {
                false
            };
        }
    }
    let key = |i: usize| {
        let c = frames[i].bbox.centroid();
        (c.y, if rtl { -c.x } else { c.x }, frames[i].id.clone())
    };
    let key_cmp = |a: usize, b: usize| {
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then_with(|| ka.2.cmp(&kb.2))
    };
    let mut best: Option<Vec<usize>> = None;
    let mut perm = Vec::with_capacity(n);
    let mut used = vec![false; n];
    enumerate(n, &before, &mut perm, &mut used, &mut |p: &[usize]| {
        let better = match &best {
            None => true,
            Some(b) => p
                .iter()
                .zip(b)
                .map(|(&x, &y)| key_cmp(x, y))
                .find(|o| *o != Ordering::Equal)
                == Some(Ordering::Less),
        };
        if better {
            best = Some(p.to_vec());
        }
    });
    let best = best.ok_or_else(|| Error::Config("no permutation satisfies the precedence rules".into()))?;
    Ok(best.into_iter().map(|i| frames[i].id.clone()).collect())
}

/// Visits every permutation consistent with `before`.
fn enumerate(
    n: usize,
    before: &[Vec<bool>],
    perm: &mut Vec<usize>,
    used: &mut [bool],
    visit: &mut dyn FnMut(&[usize]),
) {
    if perm.len() == n {
        visit(perm);
        return;
    }
    for i in 0..n {
        // i may come next only if no unplaced frame must precede it
        if used[i] || (0..n).any(|j| !used[j] && j != i && before[j][i]) {
            continue;
        }
        used[i] = true;
        perm.push(i);
        enumerate(n, before, perm, used, visit);
        perm.pop();
        used[i] = false;
    }
}

/// Reference selection: for each text, every character's score is looked up
/// by id, the list is sorted (higher score, then smaller character id) and
/// the first `N` kept.
pub fn oracle_select(scores: &ScoreMatrix, counts: &BTreeMap<String, usize>) -> Prediction {
    let mut p = Prediction::default();
    for (text, &n) in counts {
        let mut col: Vec<Ranked> = scores
            .characters
            .iter()
            .filter_map(|c| {
                scores.score(c, text).map(|s| Ranked { character_id: c.clone(), score: s })
            })
            .collect();
        col.sort_by(|a, b| match b.score.partial_cmp(&a.score) {
            Some(Ordering::Equal) | None => a.character_id.cmp(&b.character_id),
            Some(o) => o,
        });
        if col.len() < n || !scores.texts.contains(text) {
            p.flagged.insert(text.clone());
        }
        col.truncate(n);
        p.rankings.insert(text.clone(), col);
    }
    p
}
