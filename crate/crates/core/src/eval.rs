//! Recall@K and Recall@(#text) under PredCls, SGCls and SGDet matching.
//!
//! The unit of recall is a speaker→text link: a text with two speakers
//! contributes two ground-truth links. Counts are summed over pages
//! (micro-average) and pages without ground truth are left out.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Difficulty, Page};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::order::{assign_page, order_page, FrameAssignment, OrderConfig};
use crate::predict::{
    rank_order, select_per_text, top_k_triplets, triplet_score, DetectionSet, LabelProbs,
    label_from_probs, ObjectLabel, Prediction, Predictor, ScoreMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalMode {
    PredCls,
    SgCls,
    SgDet,
}

impl EvalMode {
    pub fn name(&self) -> &'static str {
        match self {
            EvalMode::PredCls => "predcls",
            EvalMode::SgCls => "sgcls",
            EvalMode::SgDet => "sgdet",
        }
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "predcls" => Ok(EvalMode::PredCls),
            "sgcls" => Ok(EvalMode::SgCls),
            "sgdet" => Ok(EvalMode::SgDet),
            _ => Err(Error::Config(format!(
                "unknown mode {s:?}; expected predcls, sgcls or sgdet"
            ))),
        }
    }
}

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchCriteria {
    pub mode: EvalMode,
    /// Only consulted under SGDet.
    pub iou_threshold: f64,
}

impl MatchCriteria {
    pub fn new(mode: EvalMode, iou_threshold: f64) -> Result<Self> {
        if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "IoU threshold must be in (0, 1], got {iou_threshold}"
            )));
        }
        Ok(MatchCriteria {
            mode,
            iou_threshold,
        })
    }

    pub fn pred_cls() -> Self {
        MatchCriteria {
            mode: EvalMode::PredCls,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRef {
    pub id: String,
    pub bbox: BBox,
    pub label: ObjectLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedTriplet {
    pub subject: ObjectRef,
    pub object: ObjectRef,
    pub score: f64,
}

/// One ground-truth speaker→text link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtLink {
    pub speaker: ObjectRef,
    pub text: ObjectRef,
    pub difficulty: Difficulty,
}

/// Links of every pair on the page, in pair order.
pub fn gt_links(page: &Page) -> Vec<GtLink> {
    let mut out = Vec::new();
    for pair in &page.pairs {
        let Some(text) = page.text(&pair.text_id) else {
            continue;
        };
        for s in &pair.speaker_box_ids {
            if let Some(c) = page.character(s) {
                out.push(GtLink {
                    speaker: ObjectRef {
                        id: c.id.clone(),
                        bbox: c.bbox,
                        label: ObjectLabel::Character,
                    },
                    text: ObjectRef {
                        id: text.id.clone(),
                        bbox: text.bbox,
                        label: ObjectLabel::Text,
                    },
                    difficulty: pair.difficulty,
                });
            }
        }
    }
    out
}

/// A predicted triplet is correct when subject and object carry the right
/// labels and coincide with the ground truth: by id under PredCls/SGCls, by
/// IoU at the threshold under SGDet.
pub fn match_pair(pred: &PredictedTriplet, gt: &GtLink, criteria: &MatchCriteria) -> bool {
    let labels_ok =
        pred.subject.label == ObjectLabel::Character && pred.object.label == ObjectLabel::Text;
    match criteria.mode {
        EvalMode::PredCls => pred.subject.id == gt.speaker.id && pred.object.id == gt.text.id,
        EvalMode::SgCls => {
            labels_ok && pred.subject.id == gt.speaker.id && pred.object.id == gt.text.id
        }
        EvalMode::SgDet => {
            labels_ok
                && iou(&pred.subject.bbox, &gt.speaker.bbox) >= criteria.iou_threshold
                && iou(&pred.object.bbox, &gt.text.bbox) >= criteria.iou_threshold
        }
    }
}

/// Greedy one-to-one assignment in prediction order (callers pass triplets
/// best first). Each prediction takes the unmatched link it matches best
/// (highest smaller-IoU under SGDet, first in order otherwise). Returns which
/// links were matched.
pub fn greedy_match(
    preds: &[PredictedTriplet],
    gt: &[GtLink],
    criteria: &MatchCriteria,
) -> Vec<bool> {
    let mut matched = vec![false; gt.len()];
    for p in preds {
        let mut best: Option<(f64, usize)> = None;
        for (i, g) in gt.iter().enumerate() {
            if matched[i] || !match_pair(p, g, criteria) {
                continue;
            }
            let quality = match criteria.mode {
                EvalMode::SgDet => iou(&p.subject.bbox, &g.speaker.bbox)
                    .min(iou(&p.object.bbox, &g.text.bbox)),
                _ => 1.0,
            };
            if best.is_none_or(|(q, _)| quality > q) {
                best = Some((quality, i));
            }
        }
        if let Some((_, i)) = best {
            matched[i] = true;
        }
    }
    matched
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub correct: usize,
    pub total: usize,
}

impl Counts {
    pub fn recall(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    fn add(&mut self, other: Counts) {
        self.correct += other.correct;
        self.total += other.total;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecallCounts {
    pub easy: Counts,
    pub hard: Counts,
    /// Links whose pair had no difficulty label.
    pub unassigned: Counts,
}

impl RecallCounts {
    pub fn total(&self) -> Counts {
        Counts {
            correct: self.easy.correct + self.hard.correct + self.unassigned.correct,
            total: self.easy.total + self.hard.total + self.unassigned.total,
        }
    }

    pub fn add(&mut self, other: &RecallCounts) {
        self.easy.add(other.easy);
        self.hard.add(other.hard);
        self.unassigned.add(other.unassigned);
    }
}

pub fn count_matches(
    preds: &[PredictedTriplet],
    gt: &[GtLink],
    criteria: &MatchCriteria,
) -> RecallCounts {
    let matched = greedy_match(preds, gt, criteria);
    let mut c = RecallCounts::default();
    for (g, hit) in gt.iter().zip(matched) {
        let slot = match g.difficulty {
            Difficulty::Easy => &mut c.easy,
            Difficulty::Hard => &mut c.hard,
            Difficulty::Unassigned => &mut c.unassigned,
        };
        slot.total += 1;
        slot.correct += usize::from(hit);
    }
    c
}

/// Fraction of links matched by `triplets` (already cut to K, best first).
/// `None` when there is no ground truth.
pub fn recall_at_k(
    triplets: &[PredictedTriplet],
    gt: &[GtLink],
    criteria: &MatchCriteria,
) -> Option<f64> {
    (!gt.is_empty()).then(|| count_matches(triplets, gt, criteria).total().recall())
}

/// Objects a prediction may refer to, by id.
pub type ObjectIndex = BTreeMap<String, ObjectRef>;

/// Characters and texts of a page with their annotated labels.
pub fn page_objects(page: &Page) -> ObjectIndex {
    page.characters
        .iter()
        .map(|c| ObjectRef {
            id: c.id.clone(),
            bbox: c.bbox,
            label: ObjectLabel::Character,
        })
        .chain(page.texts.iter().map(|t| ObjectRef {
            id: t.id.clone(),
            bbox: t.bbox,
            label: ObjectLabel::Text,
        }))
        .map(|o| (o.id.clone(), o))
        .collect()
}

/// Flattens per-text selections into triplets, best first.
pub fn prediction_triplets(prediction: &Prediction, objects: &ObjectIndex) -> Vec<PredictedTriplet> {
    let mut out = Vec::new();
    for (text, ranked) in &prediction.rankings {
        let Some(object) = objects.get(text) else {
            continue;
        };
        for r in ranked {
            if let Some(subject) = objects.get(&r.character_id) {
                out.push(PredictedTriplet {
                    subject: subject.clone(),
                    object: object.clone(),
                    score: r.score,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        rank_order(
            (a.score, &a.subject.id, &a.object.id),
            (b.score, &b.subject.id, &b.object.id),
        )
    });
    out
}

/// Recall of a per-text selection (N candidates for an N-speaker text).
/// Texts without candidates simply miss. `None` when there is no ground truth.
pub fn recall_at_num_text(
    prediction: &Prediction,
    objects: &ObjectIndex,
    gt: &[GtLink],
    criteria: &MatchCriteria,
) -> Option<f64> {
    let triplets = prediction_triplets(prediction, objects);
    recall_at_k(&triplets, gt, criteria)
}

/// Speakers required per text, from ground truth.
pub fn required_counts(gt: &[GtLink]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for g in gt {
        *m.entry(g.text.id.clone()).or_insert(0) += 1;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    /// Recall@(#text).
    NumText,
    /// Recall@K with a fixed K per page.
    AtK(usize),
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub order: OrderConfig,
    pub criteria: MatchCriteria,
    pub metric: Metric,
    /// Keep only links of this difficulty.
    pub difficulty: Option<Difficulty>,
    /// Label probabilities (SGCls, keyed by annotated ids) or detected boxes
    /// (SGDet).
    pub detections: Option<Arc<DetectionSet>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            order: OrderConfig::default(),
            criteria: MatchCriteria::pred_cls(),
            metric: Metric::NumText,
            difficulty: None,
            detections: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRecall {
    pub recall: f64,
    pub correct: usize,
    pub gt_pairs: usize,
}

impl From<Counts> for DifficultyRecall {
    fn from(c: Counts) -> Self {
        DifficultyRecall {
            recall: c.recall(),
            correct: c.correct,
            gt_pairs: c.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageCounts {
    pub book: String,
    pub page: u32,
    pub counts: RecallCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageFailure {
    pub book: String,
    pub page: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub predictor: String,
    pub mode: EvalMode,
    pub metric: Metric,
    pub pages_evaluated: usize,
    pub easy: DifficultyRecall,
    pub hard: DifficultyRecall,
    pub total: DifficultyRecall,
    pub failures: Vec<PageFailure>,
    pub per_page: Vec<PageCounts>,
}

impl EvalReport {
    pub fn from_pages(
        predictor: &str,
        mode: EvalMode,
        metric: Metric,
        per_page: Vec<PageCounts>,
        failures: Vec<PageFailure>,
    ) -> Self {
        let mut sum = RecallCounts::default();
        for p in &per_page {
            sum.add(&p.counts);
        }
        EvalReport {
            predictor: predictor.to_string(),
            mode,
            metric,
            pages_evaluated: per_page.len(),
            easy: sum.easy.into(),
            hard: sum.hard.into(),
            total: sum.total().into(),
            failures,
            per_page,
        }
    }
}

/// Rows of `Method | Easy | Hard | Total` in percent.
pub fn format_table(reports: &[EvalReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.predictor.len())
        .chain(std::iter::once(6))
        .max()
        .unwrap_or(6);
    let mut s = format!("{:<width$}  {:>7}  {:>7}  {:>7}\n", "Method", "Easy", "Hard", "Total");
    for r in reports {
        s.push_str(&format!(
            "{:<width$}  {:>7.2}  {:>7.2}  {:>7.2}\n",
            r.predictor,
            100.0 * r.easy.recall,
            100.0 * r.hard.recall,
            100.0 * r.total.recall
        ));
    }
    s
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let metric = match self.metric {
            Metric::NumText => "Recall@(#text)".to_string(),
            Metric::AtK(k) => format!("Recall@{k}"),
        };
        writeln!(f, "{metric}, {}", self.mode.name())?;
        f.write_str(&format_table(std::slice::from_ref(self)))?;
        write!(
            f,
            "links: easy {}/{}  hard {}/{}  total {}/{}  pages {}  failures {}",
            self.easy.correct,
            self.easy.gt_pairs,
            self.hard.correct,
            self.hard.gt_pairs,
            self.total.correct,
            self.total.gt_pairs,
            self.pages_evaluated,
            self.failures.len()
        )
    }
}

/// Per-page state shared by the evaluation modes.
struct PageRun<'a> {
    page: &'a Page,
    assignment: FrameAssignment,
    gt: Vec<GtLink>,
}

/// Scores and candidate objects for one page under the configured mode.
fn mode_inputs(
    predictor: &Predictor,
    run: &PageRun,
    opts: &EvalOptions,
) -> Result<(ScoreMatrix, ObjectIndex, BTreeMap<String, usize>)> {
    let required = required_counts(&run.gt);
    let detections = || {
        opts.detections.as_ref().ok_or_else(|| {
            Error::Config(format!("mode {} needs a detection file", opts.criteria.mode.name()))
        })
    };
    match opts.criteria.mode {
        EvalMode::PredCls => {
            let scores = predictor.scores(run.page, &run.assignment)?;
            Ok((scores, page_objects(run.page), required))
        }
        EvalMode::SgCls => {
            let probs = detections()?.probs_for_page(&run.page.book_title, run.page.page_index);
            let scores = with_label_probs(&predictor.scores(run.page, &run.assignment)?, &probs);
            let mut objects = page_objects(run.page);
            for o in objects.values_mut() {
                o.label = probs.get(&o.id).map_or(ObjectLabel::Background, label_from_probs);
            }
            Ok((scores, objects, required))
        }
        EvalMode::SgDet => {
            let dets = detections()?.for_page(&run.page.book_title, run.page.page_index);
            let mut detected = Page::new(
                run.page.book_title.clone(),
                run.page.page_index,
                run.page.width,
                run.page.height,
            );
            detected.frames = run.page.frames.clone();
            let mut objects = ObjectIndex::new();
            let mut probs = LabelProbs::new();
            for d in dets {
                let bbox = d.bbox()?;
                let label = d.label();
                match label {
                    ObjectLabel::Character => detected.characters.push(crate::dataset::CharacterBox {
                        id: d.id.clone(),
                        bbox,
                        character_name: String::new(),
                    }),
                    ObjectLabel::Text => detected.texts.push(crate::dataset::TextBox {
                        id: d.id.clone(),
                        bbox,
                        content: None,
                    }),
                    ObjectLabel::Background => continue,
                }
                probs.insert(d.id.clone(), d.probs);
                objects.insert(d.id.clone(), ObjectRef { id: d.id.clone(), bbox, label });
            }
            let order = order_page(&detected, &opts.order);
            let assignment = assign_page(&detected, &order);
            let scores = with_label_probs(&predictor.scores(&detected, &assignment)?, &probs);
            // each detected text asks for as many speakers as the annotated
            // text it overlaps best; unmatched detections ask for one
            let mut det_required = BTreeMap::new();
            for t in &detected.texts {
                let n = run
                    .gt
                    .iter()
                    .map(|g| (iou(&t.bbox, &g.text.bbox), &g.text.id))
                    .filter(|(v, _)| *v >= opts.criteria.iou_threshold)
                    .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.cmp(a.1)))
                    .and_then(|(_, id)| required.get(id).copied())
                    .unwrap_or(1);
                det_required.insert(t.id.clone(), n);
            }
            Ok((scores, objects, det_required))
        }
    }
}

fn with_label_probs(scores: &ScoreMatrix, probs: &LabelProbs) -> ScoreMatrix {
    scores.map(scores.provenance, |c, t, s| triplet_score(s, c, t, Some(probs)))
}

fn evaluate_page(predictor: &Predictor, run: &PageRun, opts: &EvalOptions) -> Result<RecallCounts> {
    let (scores, objects, required) = mode_inputs(predictor, run, opts)?;
    let triplets = match opts.metric {
        Metric::NumText => prediction_triplets(&select_per_text(&scores, &required), &objects),
        Metric::AtK(k) => top_k_triplets(&scores, None, k)
            .into_iter()
            .filter_map(|t| {
                Some(PredictedTriplet {
                    subject: objects.get(&t.character_id)?.clone(),
                    object: objects.get(&t.text_id)?.clone(),
                    score: t.score,
                })
            })
            .collect(),
    };
    Ok(count_matches(&triplets, &run.gt, &opts.criteria))
}

/// Runs `predictor` over every page with ground truth and aggregates recall
/// per difficulty. Pairs without a difficulty label are labeled on the fly
/// from the same frame assignment. A page that fails is recorded in the
/// report and left out of the counts.
pub fn evaluate(predictor: &Predictor, dataset: &Dataset, opts: &EvalOptions) -> EvalReport {
    let mut per_page = Vec::new();
    let mut failures = Vec::new();
    for page in dataset.pages() {
        if page.pairs.is_empty() {
            continue;
        }
        let order = order_page(page, &opts.order);
        let assignment = assign_page(page, &order);
        let mut gt = gt_links(page);
        for g in &mut gt {
            if g.difficulty == Difficulty::Unassigned {
                let easy = page
                    .pair_for_text(&g.text.id)
                    .is_some_and(|p| p.speaker_box_ids.iter().any(|s| assignment.same_frame(s, &g.text.id)));
                g.difficulty = if easy { Difficulty::Easy } else { Difficulty::Hard };
            }
        }
        if let Some(d) = opts.difficulty {
            gt.retain(|g| g.difficulty == d);
        }
        if gt.is_empty() {
            continue;
        }
        let run = PageRun { page, assignment, gt };
        match evaluate_page(predictor, &run, opts) {
            Ok(counts) => per_page.push(PageCounts {
                book: page.book_title.clone(),
                page: page.page_index,
                counts,
            }),
            Err(e) => failures.push(PageFailure {
                book: page.book_title.clone(),
                page: page.page_index,
                error: e.to_string(),
            }),
        }
    }
    EvalReport::from_pages(
        predictor.kind.name(),
        opts.criteria.mode,
        opts.metric,
        per_page,
        failures,
    )
}

/// Scores `page` and selects per-text candidates with ground-truth speaker
/// counts (texts without ground truth get one candidate).
pub fn predict_page(
    predictor: &Predictor,
    page: &Page,
    order: &OrderConfig,
) -> Result<(Prediction, FrameAssignment)> {
    let assignment = assign_page(page, &order_page(page, order));
    let scores = predictor.scores(page, &assignment)?;
    let gt = required_counts(&gt_links(page));
    let required = page
        .texts
        .iter()
        .map(|t| (t.id.clone(), gt.get(&t.id).copied().unwrap_or(1)))
        .collect();
    Ok((select_per_text(&scores, &required), assignment))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CharacterBox, Frame, SpeakerPair, TextBox};
    use crate::predict::{PredictorKind, Ranked};

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn obj(id: &str, b: BBox, label: ObjectLabel) -> ObjectRef {
        ObjectRef { id: id.into(), bbox: b, label }
    }

    fn link(s: &str, t: &str) -> GtLink {
        GtLink {
            speaker: obj(s, bx(0.0, 0.0, 10.0, 10.0), ObjectLabel::Character),
            text: obj(t, bx(20.0, 0.0, 30.0, 10.0), ObjectLabel::Text),
            difficulty: Difficulty::Easy,
        }
    }

    fn trip(s: &str, t: &str, score: f64) -> PredictedTriplet {
        let l = link(s, t);
        PredictedTriplet { subject: l.speaker, object: l.text, score }
    }

    #[test]
    fn recall_at_k_identity_and_counting() {
        let gt = vec![link("a", "x"), link("b", "y"), link("c", "z")];
        let preds = vec![trip("a", "x", 0.9), trip("b", "y", 0.8), trip("c", "z", 0.7)];
        let c = MatchCriteria::pred_cls();
        assert_eq!(recall_at_k(&preds, &gt, &c), Some(1.0));
        let k2 = vec![trip("a", "x", 0.9), trip("q", "y", 0.8)];
        assert_eq!(recall_at_k(&k2, &gt, &c), Some(1.0 / 3.0));
        assert_eq!(recall_at_k(&preds, &[], &c), None);
    }

    #[test]
    fn each_link_matches_once() {
        let gt = vec![link("a", "x")];
        let preds = vec![trip("a", "x", 0.9), trip("a", "x", 0.8)];
        let m = greedy_match(&preds, &gt, &MatchCriteria::pred_cls());
        assert_eq!(m, vec![true]);
        let gt2 = vec![link("a", "x"), link("a", "x")];
        let m = greedy_match(&preds[..1], &gt2, &MatchCriteria::pred_cls());
        assert_eq!(m, vec![true, false]);
    }

    #[test]
    fn match_pair_modes() {
        let g = link("a", "x");
        assert!(match_pair(&trip("a", "x", 1.0), &g, &MatchCriteria::pred_cls()));
        assert!(!match_pair(&trip("b", "x", 1.0), &g, &MatchCriteria::pred_cls()));

        let sgcls = MatchCriteria::new(EvalMode::SgCls, 0.5).unwrap();
        let mut wrong = trip("a", "x", 1.0);
        wrong.object.label = ObjectLabel::Background;
        assert!(!match_pair(&wrong, &g, &sgcls));
        assert!(match_pair(&trip("a", "x", 1.0), &g, &sgcls));

        // ground truth boxes: speaker [0,0,10,10], text [20,0,30,10]
        let sgdet = MatchCriteria::new(EvalMode::SgDet, 0.5).unwrap();
        let shifted = |dx_s: f64, dx_t: f64| PredictedTriplet {
            subject: obj("d1", bx(dx_s, 0.0, 10.0 + dx_s, 10.0), ObjectLabel::Character),
            object: obj("d2", bx(20.0 + dx_t, 0.0, 30.0 + dx_t, 10.0), ObjectLabel::Text),
            score: 1.0,
        };
        // shift 2.5: inter 7.5, union 12.5 -> IoU 0.6
        assert_eq!(iou(&bx(2.5, 0.0, 12.5, 10.0), &bx(0.0, 0.0, 10.0, 10.0)), 0.6);
        assert!(match_pair(&shifted(2.5, 2.5), &g, &sgdet));
        // shift 30/7: inter 400/7, union 1000/7 -> IoU 0.4
        let d = 30.0 / 7.0;
        let v = iou(&bx(d, 0.0, 10.0 + d, 10.0), &bx(0.0, 0.0, 10.0, 10.0));
        assert!((v - 0.4).abs() < 1e-12);
        assert!(!match_pair(&shifted(0.0, d), &g, &sgdet));
        assert!(MatchCriteria::new(EvalMode::SgDet, 0.0).is_err());
        assert!(MatchCriteria::new(EvalMode::SgDet, 1.5).is_err());
    }

    #[test]
    fn num_text_counts_multi_speaker_links() {
        let gt = vec![link("a", "x"), link("b", "x")];
        let mut pred = Prediction::default();
        pred.rankings.insert(
            "x".into(),
            vec![
                Ranked { character_id: "a".into(), score: 0.9 },
                Ranked { character_id: "c".into(), score: 0.8 },
            ],
        );
        let mut objects = ObjectIndex::new();
        for g in &gt {
            objects.insert(g.speaker.id.clone(), g.speaker.clone());
            objects.insert(g.text.id.clone(), g.text.clone());
        }
        objects.insert("c".into(), obj("c", bx(0.0, 0.0, 1.0, 1.0), ObjectLabel::Character));
        let c = MatchCriteria::pred_cls();
        assert_eq!(recall_at_num_text(&pred, &objects, &gt, &c), Some(0.5));

        let single = vec![link("a", "x")];
        let mut p1 = Prediction::default();
        p1.rankings.insert("x".into(), vec![Ranked { character_id: "a".into(), score: 1.0 }]);
        assert_eq!(recall_at_num_text(&p1, &objects, &single, &c), Some(1.0));
        // no prediction for the text at all
        assert_eq!(recall_at_num_text(&Prediction::default(), &objects, &single, &c), Some(0.0));
    }

    fn fixture_dataset() -> Dataset {
        // two frames side by side; text in the right frame (k=1)
        let mut p = Page::new("b", 0, 1000.0, 500.0);
        p.frames = vec![
            Frame { id: "L".into(), bbox: bx(0.0, 0.0, 490.0, 500.0) },
            Frame { id: "R".into(), bbox: bx(510.0, 0.0, 1000.0, 500.0) },
        ];
        let ch = |id: &str, b| CharacterBox { id: id.into(), bbox: b, character_name: id.into() };
        let tx = |id: &str, b| TextBox { id: id.into(), bbox: b, content: None };
        p.characters = vec![
            ch("in_far", bx(900.0, 400.0, 950.0, 450.0)),
            ch("out_near", bx(440.0, 50.0, 480.0, 90.0)),
        ];
        p.texts = vec![tx("t1", bx(520.0, 50.0, 560.0, 90.0)), tx("t2", bx(100.0, 300.0, 140.0, 340.0))];
        p.pairs = vec![
            SpeakerPair { text_id: "t1".into(), speaker_box_ids: vec!["in_far".into()], difficulty: Difficulty::Unassigned },
            SpeakerPair { text_id: "t2".into(), speaker_box_ids: vec!["in_far".into()], difficulty: Difficulty::Unassigned },
        ];
        let mut empty = Page::new("b", 1, 1000.0, 500.0);
        empty.texts = vec![tx("t9", bx(0.0, 0.0, 1.0, 1.0))];
        Dataset::new(vec![crate::dataset::Book { title: "b".into(), characters: vec![], pages: vec![p, empty] }])
    }

    #[test]
    fn evaluate_aggregates_by_difficulty() {
        let ds = fixture_dataset();
        let opts = EvalOptions::default();
        let frame = evaluate(&Predictor::new(PredictorKind::Frame), &ds, &opts);
        // t1 Easy: frame distance picks in_far (correct); t2 Hard: picks out_near (wrong)
        assert_eq!(frame.pages_evaluated, 1);
        assert_eq!((frame.easy.correct, frame.easy.gt_pairs), (1, 1));
        assert_eq!((frame.hard.correct, frame.hard.gt_pairs), (0, 1));
        assert_eq!(frame.total.correct, 1);
        let short = evaluate(&Predictor::new(PredictorKind::Shortest), &ds, &opts);
        assert_eq!(short.easy.correct, 0);
        assert_eq!(short.total.recall, 0.0);

        let hard_only = EvalOptions { difficulty: Some(Difficulty::Hard), ..EvalOptions::default() };
        let r = evaluate(&Predictor::new(PredictorKind::Frame), &ds, &hard_only);
        assert_eq!(r.total.gt_pairs, 1);
        assert_eq!(r.easy.gt_pairs, 0);
    }

    #[test]
    fn failing_pages_are_reported_not_fatal() {
        let ds = fixture_dataset();
        let r = evaluate(&Predictor::new(PredictorKind::External), &ds, &EvalOptions::default());
        assert_eq!(r.pages_evaluated, 0);
        assert_eq!(r.failures.len(), 1);
        assert!(r.failures[0].error.contains("external"));
    }

    #[test]
    fn sgdet_uses_detected_boxes() {
        let ds = fixture_dataset();
        let det = |id: &str, b: [f64; 4], probs: [f64; 3]| crate::predict::ExternalDetection {
            book: "b".into(),
            page: 0,
            id: id.into(),
            bbox: b,
            probs,
        };
        let set = DetectionSet::from_detections([
            det("d_char", [902.0, 402.0, 950.0, 450.0], [0.9, 0.05, 0.05]),
            det("d_text", [520.0, 52.0, 560.0, 90.0], [0.1, 0.8, 0.1]),
            det("d_bg", [0.0, 0.0, 5.0, 5.0], [0.1, 0.1, 0.8]),
        ]);
        let opts = EvalOptions {
            criteria: MatchCriteria::new(EvalMode::SgDet, 0.5).unwrap(),
            detections: Some(Arc::new(set)),
            ..EvalOptions::default()
        };
        let r = evaluate(&Predictor::new(PredictorKind::Shortest), &ds, &opts);
        assert!(r.failures.is_empty());
        assert_eq!(r.total.gt_pairs, 2);
        // only one detected text, matched to t1 through the detected character
        assert_eq!(r.total.correct, 1);

        let missing = EvalOptions { detections: None, ..opts };
        assert_eq!(evaluate(&Predictor::new(PredictorKind::Shortest), &ds, &missing).failures.len(), 1);
    }

    #[test]
    fn report_table_has_percentages() {
        let ds = fixture_dataset();
        let r = evaluate(&Predictor::new(PredictorKind::Frame), &ds, &EvalOptions::default());
        let t = format_table(&[r]);
        assert!(t.contains("Method"));
        assert!(t.contains("frame"));
        assert!(t.contains("100.00"));
        assert!(t.contains("50.00"));
    }
}
