//! Character→text relation scores and the selections built on them.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataset::{CharacterBox, Page, TextBox};
use crate::error::{Error, Result};
use crate::geometry::{centroid_distance, BBox};
use crate::order::FrameAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Rule,
    Heuristic,
    External,
    Weighted,
}

/// Dense scores over every (character, text) pair of one page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub book: String,
    pub page: u32,
    pub characters: Vec<String>,
    pub texts: Vec<String>,
    /// Row-major: `scores[c * texts.len() + t]`.
    scores: Vec<f64>,
    pub provenance: Provenance,
}

impl ScoreMatrix {
    pub fn new(
        book: impl Into<String>,
        page: u32,
        characters: Vec<String>,
        texts: Vec<String>,
        scores: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        if scores.len() != characters.len() * texts.len() {
            return Err(Error::Config(format!(
                "score matrix needs {}x{} entries, got {}",
                characters.len(),
                texts.len(),
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::Config(format!("non-finite score {bad}")));
        }
        Ok(ScoreMatrix {
            book: book.into(),
            page,
            characters,
            texts,
            scores,
            provenance,
        })
    }

    /// Scores every character→text pair of `page` with `f`.
    pub fn from_page(
        page: &Page,
        provenance: Provenance,
        f: impl Fn(&CharacterBox, &TextBox) -> f64,
    ) -> Self {
        let mut scores = Vec::with_capacity(page.characters.len() * page.texts.len());
        for c in &page.characters {
            for t in &page.texts {
                scores.push(f(c, t));
            }
        }
        ScoreMatrix {
            book: page.book_title.clone(),
            page: page.page_index,
            characters: page.characters.iter().map(|c| c.id.clone()).collect(),
            texts: page.texts.iter().map(|t| t.id.clone()).collect(),
            scores,
            provenance,
        }
    }

    pub fn get(&self, character: usize, text: usize) -> f64 {
        self.scores[character * self.texts.len() + text]
    }

    pub fn score(&self, character_id: &str, text_id: &str) -> Option<f64> {
        let c = self.characters.iter().position(|x| x == character_id)?;
        let t = self.texts.iter().position(|x| x == text_id)?;
        Some(self.get(c, t))
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// `(character_id, text_id, score)` for every entry.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, f64)> + '_ {
        self.characters.iter().enumerate().flat_map(move |(ci, c)| {
            self.texts
                .iter()
                .enumerate()
                .map(move |(ti, t)| (c.as_str(), t.as_str(), self.get(ci, ti)))
        })
    }

    /// Applies `f(character_id, text_id, score)` to every entry.
    pub fn map(&self, provenance: Provenance, f: impl Fn(&str, &str, f64) -> f64) -> ScoreMatrix {
        let scores = self.entries().map(|(c, t, s)| f(c, t, s)).collect();
        ScoreMatrix {
            scores,
            provenance,
            ..self.clone()
        }
    }
}

/// Descending score, then character id, then text id.
pub fn rank_order(a: (f64, &str, &str), b: (f64, &str, &str)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| a.1.cmp(b.1))
        .then_with(|| a.2.cmp(b.2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub character_id: String,
    pub score: f64,
}

/// Per-text candidate lists, best first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub rankings: BTreeMap<String, Vec<Ranked>>,
    /// Texts whose list is shorter than requested (or empty).
    pub flagged: BTreeSet<String>,
}

impl Prediction {
    pub fn top(&self, text_id: &str) -> Option<&Ranked> {
        self.rankings.get(text_id).and_then(|r| r.first())
    }
}

fn ranked_column(scores: &ScoreMatrix, t: usize) -> Vec<Ranked> {
    let text = scores.texts[t].as_str();
    let mut col: Vec<(f64, &str)> = (0..scores.characters.len())
        .map(|c| (scores.get(c, t), scores.characters[c].as_str()))
        .collect();
    col.sort_by(|a, b| rank_order((a.0, a.1, text), (b.0, b.1, text)));
    col.into_iter()
        .map(|(score, id)| Ranked {
            character_id: id.to_string(),
            score,
        })
        .collect()
}

/// Full ranking of every character for every text.
pub fn rank_all(scores: &ScoreMatrix) -> Prediction {
    let mut p = Prediction::default();
    for (t, text) in scores.texts.iter().enumerate() {
        if scores.characters.is_empty() {
            p.flagged.insert(text.clone());
        }
        p.rankings.insert(text.clone(), ranked_column(scores, t));
    }
    p
}

/// Negative centroid distance: the closest character scores highest.
pub fn shortest_distance_scores(page: &Page) -> ScoreMatrix {
    ScoreMatrix::from_page(page, Provenance::Rule, |c, t| {
        -centroid_distance(&c.bbox, &t.bbox)
    })
}

pub fn predict_shortest_distance(page: &Page) -> Prediction {
    rank_all(&shortest_distance_scores(page))
}

/// Negative distance, with characters outside the text's frame shifted below
/// every in-frame character by more than the page's largest distance.
pub fn frame_distance_scores(page: &Page, assignment: &FrameAssignment) -> ScoreMatrix {
    let spread = page
        .characters
        .iter()
        .flat_map(|c| page.texts.iter().map(move |t| centroid_distance(&c.bbox, &t.bbox)))
        .fold(0.0_f64, f64::max)
        + 1.0;
    ScoreMatrix::from_page(page, Provenance::Rule, |c, t| {
        let d = centroid_distance(&c.bbox, &t.bbox);
        if assignment.same_frame(&c.id, &t.id) {
            -d
        } else {
            -d - spread
        }
    })
}

pub fn predict_frame_distance(page: &Page, assignment: &FrameAssignment) -> Prediction {
    rank_all(&frame_distance_scores(page, assignment))
}

/// `1 / (1 + d / diag)` with `d` the centroid distance and `diag` the page
/// diagonal; a distance-only stand-in for a learned relation classifier.
pub fn heuristic_scores(page: &Page) -> ScoreMatrix {
    let diag = page.diagonal();
    ScoreMatrix::from_page(page, Provenance::Heuristic, |c, t| {
        if diag > 0.0 {
            1.0 / (1.0 + centroid_distance(&c.bbox, &t.bbox) / diag)
        } else {
            1.0
        }
    })
}

/// `w(i, j) = 1 / (offset + |k_i - k_j|)`; the offset defaults to 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameWeight {
    pub offset: f64,
}

impl Default for FrameWeight {
    fn default() -> Self {
        FrameWeight { offset: 2.0 }
    }
}

impl FrameWeight {
    pub fn weight(&self, k_character: usize, k_text: usize) -> f64 {
        1.0 / (self.offset + k_character.abs_diff(k_text) as f64)
    }
}

/// Multiplies each entry by the reading-order weight of its pair.
pub fn apply_frame_weight(
    scores: &ScoreMatrix,
    assignment: &FrameAssignment,
    weight: FrameWeight,
) -> Result<ScoreMatrix> {
    let k = |id: &str| {
        assignment
            .k(id)
            .ok_or_else(|| Error::UnknownId { id: id.to_string() })
    };
    let kc: Vec<usize> = scores.characters.iter().map(|c| k(c)).collect::<Result<_>>()?;
    let kt: Vec<usize> = scores.texts.iter().map(|t| k(t)).collect::<Result<_>>()?;
    let mut out = scores.clone();
    out.provenance = Provenance::Weighted;
    let n_t = scores.texts.len();
    for (ci, &a) in kc.iter().enumerate() {
        for (ti, &b) in kt.iter().enumerate() {
            out.scores[ci * n_t + ti] *= weight.weight(a, b);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScoreRecord {
    book: String,
    page: u32,
    #[serde(rename = "char")]
    character: String,
    text: String,
    score: f64,
}

/// (character, text) -> (score, source line)
type PageScores = BTreeMap<(String, String), (f64, usize)>;

/// Relation scores produced offline, keyed by page.
#[derive(Debug, Clone, Default)]
pub struct ExternalScores {
    source: PathBuf,
    pages: BTreeMap<(String, u32), PageScores>,
}

impl ExternalScores {
    /// Reads `{"book", "page", "char", "text", "score"}` lines. Scores must lie
    /// in `[0, 1]` and each pair may appear once.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut out = ExternalScores {
            source: path.to_path_buf(),
            pages: BTreeMap::new(),
        };
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Record {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let rec: ScoreRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            if !(0.0..=1.0).contains(&rec.score) {
                return Err(err(format!(
                    "score {} for char={} text={} outside [0, 1]",
                    rec.score, rec.character, rec.text
                )));
            }
            let page = out.pages.entry((rec.book, rec.page)).or_default();
            let key = (rec.character, rec.text);
            if let Some((_, first)) = page.get(&key) {
                return Err(err(format!(
                    "duplicate score for char={} text={} (first on line {first})",
                    key.0, key.1
                )));
            }
            page.insert(key, (rec.score, i + 1));
        }
        Ok(out)
    }

    /// Dense matrix for `page`; absent pairs score 0. Returns the matrix and
    /// the number of defaulted entries.
    pub fn matrix_for_page(&self, page: &Page) -> Result<(ScoreMatrix, usize)> {
        let empty = BTreeMap::new();
        let recs = self
            .pages
            .get(&(page.book_title.clone(), page.page_index))
            .unwrap_or(&empty);
        for ((c, t), (_, line)) in recs {
            let bad = if page.character(c).is_none() {
                Some(format!("unknown character id {c}"))
            } else if page.text(t).is_none() {
                Some(format!("unknown text id {t}"))
            } else {
                None
            };
            if let Some(message) = bad {
                return Err(Error::Record {
                    path: self.source.clone(),
                    line: *line,
                    message,
                });
            }
        }
        let m = ScoreMatrix::from_page(page, Provenance::External, |c, t| {
            recs.get(&(c.id.clone(), t.id.clone())).map_or(0.0, |(s, _)| *s)
        });
        // every record was checked against the page above
        let missing = m.len() - recs.len();
        Ok((m, missing))
    }
}

pub fn load_external_scores(score_file: &Path, page: &Page) -> Result<ScoreMatrix> {
    let (m, missing) = ExternalScores::load(score_file)?.matrix_for_page(page)?;
    if missing > 0 {
        warn!(
            "{} page {}: {missing} pairs missing from {}, scored 0",
            page.book_title,
            page.page_index,
            score_file.display()
        );
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectLabel {
    Character,
    Text,
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalDetection {
    pub book: String,
    pub page: u32,
    pub id: String,
    pub bbox: [f64; 4],
    /// Probabilities of character, text, background.
    pub probs: [f64; 3],
}

impl ExternalDetection {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(format!("probabilities {:?} outside [0, 1]", self.probs));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(format!("probabilities sum to {sum}, not 1"));
        }
        self.bbox()
            .map(|_| ())
            .map_err(|e| e.to_string())
    }

    pub fn bbox(&self) -> Result<BBox> {
        let [a, b, c, d] = self.bbox;
        BBox::new(a, b, c, d)
    }

    pub fn label(&self) -> ObjectLabel {
        label_from_probs(&self.probs)
    }
}

/// Most probable of character/text/background; earlier labels win exact ties.
pub fn label_from_probs(probs: &[f64; 3]) -> ObjectLabel {
    let labels = [ObjectLabel::Character, ObjectLabel::Text, ObjectLabel::Background];
    let mut best = 0;
    for i in 1..3 {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    labels[best]
}

/// Label probabilities by object id.
pub type LabelProbs = BTreeMap<String, [f64; 3]>;

#[derive(Debug, Clone, Default)]
pub struct DetectionSet {
    pages: BTreeMap<(String, u32), Vec<ExternalDetection>>,
}

impl DetectionSet {
    /// Reads `{"book", "page", "id", "bbox", "probs"}` lines.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut out = DetectionSet::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Record {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let det: ExternalDetection =
                serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            det.validate().map_err(|m| err(format!("detection {}: {m}", det.id)))?;
            let list = out.pages.entry((det.book.clone(), det.page)).or_default();
            if list.iter().any(|d| d.id == det.id) {
                return Err(err(format!("duplicate detection id {}", det.id)));
            }
            list.push(det);
        }
        Ok(out)
    }

    pub fn from_detections(dets: impl IntoIterator<Item = ExternalDetection>) -> Self {
        let mut out = DetectionSet::default();
        for d in dets {
            out.pages.entry((d.book.clone(), d.page)).or_default().push(d);
        }
        out
    }

    pub fn for_page(&self, book: &str, page: u32) -> &[ExternalDetection] {
        self.pages
            .get(&(book.to_string(), page))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn probs_for_page(&self, book: &str, page: u32) -> LabelProbs {
        self.for_page(book, page)
            .iter()
            .map(|d| (d.id.clone(), d.probs))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub character_id: String,
    pub text_id: String,
    pub score: f64,
}

/// Combined triplet score: relation score times P(character) of the subject
/// and P(text) of the object. Without detections both probabilities are 1;
/// with detections an object missing from them has probability 0.
pub fn triplet_score(
    relation: f64,
    character_id: &str,
    text_id: &str,
    detections: Option<&LabelProbs>,
) -> f64 {
    match detections {
        None => relation,
        Some(probs) => {
            let pc = probs.get(character_id).map_or(0.0, |p| p[0]);
            let pt = probs.get(text_id).map_or(0.0, |p| p[1]);
            relation * pc * pt
        }
    }
}

/// The `k` best triplets (all of them when fewer exist).
pub fn top_k_triplets(
    scores: &ScoreMatrix,
    detections: Option<&LabelProbs>,
    k: usize,
) -> Vec<Triplet> {
    let mut all: Vec<Triplet> = scores
        .entries()
        .map(|(c, t, s)| Triplet {
            character_id: c.to_string(),
            text_id: t.to_string(),
            score: triplet_score(s, c, t, detections),
        })
        .collect();
    all.sort_by(|a, b| {
        rank_order(
            (a.score, &a.character_id, &a.text_id),
            (b.score, &b.character_id, &b.text_id),
        )
    });
    all.truncate(k);
    all
}

/// For each text in `required_count`, its `N` best characters. Texts asking
/// for more characters than exist get all of them and are flagged.
pub fn select_per_text(scores: &ScoreMatrix, required_count: &BTreeMap<String, usize>) -> Prediction {
    let mut p = Prediction::default();
    for (text, &n) in required_count {
        let Some(t) = scores.texts.iter().position(|x| x == text) else {
            p.flagged.insert(text.clone());
            p.rankings.insert(text.clone(), Vec::new());
            continue;
        };
        let mut col = ranked_column(scores, t);
        if n > col.len() {
            p.flagged.insert(text.clone());
        }
        col.truncate(n);
        p.rankings.insert(text.clone(), col);
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictorKind {
    Shortest,
    Frame,
    Heuristic,
    HeuristicWeighted,
    External,
    ExternalWeighted,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 6] = [
        PredictorKind::Shortest,
        PredictorKind::Frame,
        PredictorKind::Heuristic,
        PredictorKind::HeuristicWeighted,
        PredictorKind::External,
        PredictorKind::ExternalWeighted,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PredictorKind::Shortest => "shortest",
            PredictorKind::Frame => "frame",
            PredictorKind::Heuristic => "heuristic",
            PredictorKind::HeuristicWeighted => "heuristic+weight",
            PredictorKind::External => "external",
            PredictorKind::ExternalWeighted => "external+weight",
        }
    }

    pub fn needs_scores(&self) -> bool {
        matches!(self, PredictorKind::External | PredictorKind::ExternalWeighted)
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PredictorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown predictor {s:?}; expected one of: {}",
                    PredictorKind::ALL.map(|k| k.name()).join(", ")
                ))
            })
    }
}

/// A configured scoring method.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub kind: PredictorKind,
    pub weight: FrameWeight,
    pub external: Option<Arc<ExternalScores>>,
}

impl Predictor {
    pub fn new(kind: PredictorKind) -> Self {
        Predictor {
            kind,
            weight: FrameWeight::default(),
            external: None,
        }
    }

    pub fn with_scores(mut self, scores: Arc<ExternalScores>) -> Self {
        self.external = Some(scores);
        self
    }

    pub fn scores(&self, page: &Page, assignment: &FrameAssignment) -> Result<ScoreMatrix> {
        let external = || -> Result<ScoreMatrix> {
            let ext = self.external.as_ref().ok_or_else(|| {
                Error::Config(format!("predictor {} needs an external score file", self.kind))
            })?;
            Ok(ext.matrix_for_page(page)?.0)
        };
        Ok(match self.kind {
            PredictorKind::Shortest => shortest_distance_scores(page),
            PredictorKind::Frame => frame_distance_scores(page, assignment),
            PredictorKind::Heuristic => heuristic_scores(page),
            PredictorKind::HeuristicWeighted => {
                apply_frame_weight(&heuristic_scores(page), assignment, self.weight)?
            }
            PredictorKind::External => external()?,
            PredictorKind::ExternalWeighted => {
                apply_frame_weight(&external()?, assignment, self.weight)?
            }
        })
    }
}
