//! Frame reading order by recursive horizontal/vertical cuts, and
//! assignment of page objects to frames.
//!
//! A group of frames is split by a horizontal line whenever one exists that
//! crosses no frame's shrunk interior; the upper part is read first and both
//! parts are processed again from the horizontal step. Only when no
//! horizontal cut exists is a vertical cut tried (right part first for
//! right-to-left reading). Groups admitting neither are read by ascending
//! y-centroid, then by x-centroid in reading direction.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Frame, Page};
use crate::geometry::{centroid_distance, overlap_fraction, BBox};

/// Default shrink applied to frames before testing cut lines, as a fraction
/// of the page dimension perpendicular to the cut.
pub const DEFAULT_CUT_TOLERANCE: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ReadingDirection {
    #[default]
    RightToLeft,
    LeftToRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderConfig {
    pub direction: ReadingDirection,
    pub cut_tolerance: f64,
}

impl Default for OrderConfig {
    fn default() -> Self {
        OrderConfig {
            direction: ReadingDirection::RightToLeft,
            cut_tolerance: DEFAULT_CUT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameOrder {
    pub ordered_frames: Vec<Frame>,
    /// Frame id to 1-based reading position.
    pub order_index: BTreeMap<String, usize>,
}

impl FrameOrder {
    pub fn k(&self, frame_id: &str) -> Option<usize> {
        self.order_index.get(frame_id).copied()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.ordered_frames.iter().map(|f| f.id.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered_frames.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    /// Cut by a horizontal line; intervals are along y.
    Horizontal,
    /// Cut by a vertical line; intervals are along x.
    Vertical,
}

/// Interval of `b` along the axis, shrunk by `tau` on both ends. Intervals
/// shorter than `2 * tau` collapse to their midpoint.
fn shrunk(b: &BBox, axis: Axis, tau: f64) -> (f64, f64) {
    let (lo, hi) = match axis {
        Axis::Horizontal => (b.y_min, b.y_max),
        Axis::Vertical => (b.x_min, b.x_max),
    };
    if hi - lo <= 2.0 * tau {
        let mid = (lo + hi) / 2.0;
        (mid, mid)
    } else {
        (lo + tau, hi - tau)
    }
}

struct Cutter<'a> {
    frames: &'a [Frame],
    tau_y: f64,
    tau_x: f64,
    direction: ReadingDirection,
}

impl Cutter<'_> {
    /// Returns `(low, high)` sides of the best cut along `axis`, where low is
    /// top (horizontal) or left (vertical).
    fn best_cut(&self, group: &[usize], axis: Axis) -> Option<(Vec<usize>, Vec<usize>)> {
        let tau = match axis {
            Axis::Horizontal => self.tau_y,
            Axis::Vertical => self.tau_x,
        };
        let mut spans: Vec<(f64, f64, usize)> = group
            .iter()
            .map(|&i| {
                let (s, e) = shrunk(&self.frames[i].bbox, axis, tau);
                (s, e, i)
            })
            .collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));

        // (gap, position in `spans`)
        let mut best: Option<(f64, usize)> = None;
        let mut reach = spans[0].1;
        for i in 1..spans.len() {
            let start = spans[i].0;
            if start > spans[i - 1].0 && reach <= start {
                let gap = start - reach;
                let better = match best {
                    None => true,
                    Some((g, _)) => match gap.total_cmp(&g) {
                        Ordering::Greater => true,
                        // Equal gaps: topmost for horizontal cuts, and the
                        // cut nearest the reading start for vertical ones.
                        Ordering::Equal => {
                            axis == Axis::Vertical && self.direction == ReadingDirection::RightToLeft
                        }
                        Ordering::Less => false,
                    },
                };
                if better {
                    best = Some((gap, i));
                }
            }
            reach = reach.max(spans[i].1);
        }
        let (_, at) = best?;
        let low = spans[..at].iter().map(|s| s.2).collect();
        let high = spans[at..].iter().map(|s| s.2).collect();
        Some((low, high))
    }

    fn order(&self, group: Vec<usize>, out: &mut Vec<usize>) {
        if group.len() <= 1 {
            out.extend(group);
            return;
        }
        if let Some((upper, lower)) = self.best_cut(&group, Axis::Horizontal) {
            self.order(upper, out);
            self.order(lower, out);
            return;
        }
        if let Some((left, right)) = self.best_cut(&group, Axis::Vertical) {
            let (first, second) = match self.direction {
                ReadingDirection::RightToLeft => (right, left),
                ReadingDirection::LeftToRight => (left, right),
            };
            self.order(first, out);
            self.order(second, out);
            return;
        }
        let mut rest = group;
        rest.sort_by(|&a, &b| base_order(&self.frames[a], &self.frames[b], self.direction));
        out.extend(rest);
    }
}

/// Ordering for frames no cut can separate: y-centroid ascending, then
/// x-centroid in reading direction, then id.
pub fn base_order(a: &Frame, b: &Frame, direction: ReadingDirection) -> Ordering {
    let (ca, cb) = (a.bbox.centroid(), b.bbox.centroid());
    let x = match direction {
        ReadingDirection::RightToLeft => cb.x.total_cmp(&ca.x),
        ReadingDirection::LeftToRight => ca.x.total_cmp(&cb.x),
    };
    ca.y.total_cmp(&cb.y).then(x).then_with(|| a.id.cmp(&b.id))
}

pub fn order_frames(
    frames: &[Frame],
    page_width: f64,
    page_height: f64,
    config: &OrderConfig,
) -> FrameOrder {
    let cutter = Cutter {
        frames,
        tau_y: config.cut_tolerance * page_height,
        tau_x: config.cut_tolerance * page_width,
        direction: config.direction,
    };
    let mut idx = Vec::with_capacity(frames.len());
    cutter.order((0..frames.len()).collect(), &mut idx);
    let ordered_frames: Vec<Frame> = idx.into_iter().map(|i| frames[i].clone()).collect();
    let order_index = ordered_frames
        .iter()
        .enumerate()
        .map(|(k, f)| (f.id.clone(), k + 1))
        .collect();
    FrameOrder {
        ordered_frames,
        order_index,
    }
}

pub fn order_page(page: &Page, config: &OrderConfig) -> FrameOrder {
    order_frames(&page.frames, page.width, page.height, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `None` only when the page has no frames.
    pub frame_id: Option<String>,
    pub k: usize,
    /// Set when the object overlaps no frame and was placed by nearest centroid.
    pub fallback: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameAssignment {
    pub assignments: BTreeMap<String, Assignment>,
}

impl FrameAssignment {
    pub fn get(&self, object_id: &str) -> Option<&Assignment> {
        self.assignments.get(object_id)
    }

    pub fn k(&self, object_id: &str) -> Option<usize> {
        self.get(object_id).map(|a| a.k)
    }

    /// Whether both objects sit in the same frame. On pages without frames
    /// every object shares the single implicit frame.
    pub fn same_frame(&self, a: &str, b: &str) -> bool {
        match (self.get(a), self.get(b)) {
            (Some(x), Some(y)) => x.frame_id == y.frame_id,
            _ => false,
        }
    }
}

/// Frame with the largest share of `b`'s area; ties go to the smaller k.
/// Boxes overlapping nothing fall back to the nearest frame centroid.
pub fn assign_frame(b: &BBox, order: &FrameOrder) -> Assignment {
    if order.is_empty() {
        return Assignment {
            frame_id: None,
            k: 1,
            fallback: true,
        };
    }
    let c = b.centroid();
    let mut best: Option<(f64, usize)> = None;
    for (i, f) in order.ordered_frames.iter().enumerate() {
        // Zero-area boxes count as fully inside any frame holding their centroid.
        let share = overlap_fraction(b, &f.bbox)
            .unwrap_or_else(|_| if f.bbox.contains_point(c) { 1.0 } else { 0.0 });
        if share > 0.0 && best.is_none_or(|(s, _)| share > s) {
            best = Some((share, i));
        }
    }
    let (i, fallback) = match best {
        Some((_, i)) => (i, false),
        None => {
            let mut near = 0;
            let mut near_d = f64::INFINITY;
            for (i, f) in order.ordered_frames.iter().enumerate() {
                let d = centroid_distance(b, &f.bbox);
                if d < near_d {
                    near_d = d;
                    near = i;
                }
            }
            (near, true)
        }
    };
    Assignment {
        frame_id: Some(order.ordered_frames[i].id.clone()),
        k: i + 1,
        fallback,
    }
}

/// Assigns every character and text box on the page.
pub fn assign_page(page: &Page, order: &FrameOrder) -> FrameAssignment {
    let assignments = page
        .characters
        .iter()
        .map(|c| (c.id.clone(), assign_frame(&c.bbox, order)))
        .chain(
            page.texts
                .iter()
                .map(|t| (t.id.clone(), assign_frame(&t.bbox, order))),
        )
        .collect();
    FrameAssignment { assignments }
}
