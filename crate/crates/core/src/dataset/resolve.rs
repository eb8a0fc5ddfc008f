use serde::{Deserialize, Serialize};

use super::{Difficulty, Page, SpeakerPair};
use crate::geometry::centroid_distance;
use crate::order::FrameAssignment;

/// Name-level annotation: a text and the identity label of its speaker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamePair {
    pub text_id: String,
    pub character_name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub pairs: Vec<SpeakerPair>,
    /// Name pairs that could not be resolved, with the reason.
    pub skipped: Vec<(NamePair, String)>,
}

/// Turns name-level pairs into box-level pairs. Among the boxes carrying the
/// requested name, boxes sharing the text's frame are preferred; the nearest
/// centroid wins within the preferred set (ids break exact ties). Several
/// names for one text produce one multi-speaker pair.
pub fn resolve_speaker_boxes(
    page: &Page,
    assignment: &FrameAssignment,
    name_pairs: &[NamePair],
) -> Resolution {
    let mut out = Resolution::default();
    for np in name_pairs {
        let Some(text) = page.text(&np.text_id) else {
            out.skipped.push((np.clone(), "unknown text id".into()));
            continue;
        };
        let candidates: Vec<_> = page
            .characters
            .iter()
            .filter(|c| c.character_name == np.character_name)
            .collect();
        if candidates.is_empty() {
            out.skipped
                .push((np.clone(), format!("character {} not on page", np.character_name)));
            continue;
        }
        let nearest = |pool: &[&crate::dataset::CharacterBox]| {
            pool.iter()
                .min_by(|a, b| {
                    centroid_distance(&a.bbox, &text.bbox)
                        .total_cmp(&centroid_distance(&b.bbox, &text.bbox))
                        .then_with(|| a.id.cmp(&b.id))
                })
                .map(|c| c.id.clone())
        };
        let same_frame: Vec<_> = candidates
            .iter()
            .copied()
            .filter(|c| assignment.same_frame(&c.id, &text.id))
            .collect();
        let chosen = if same_frame.is_empty() {
            nearest(&candidates)
        } else {
            nearest(&same_frame)
        }
        .expect("candidates non-empty");

        match out.pairs.iter_mut().find(|p| p.text_id == np.text_id) {
            Some(p) => {
                if !p.speaker_box_ids.contains(&chosen) {
                    p.speaker_box_ids.push(chosen);
                }
            }
            None => out.pairs.push(SpeakerPair {
                text_id: np.text_id.clone(),
                speaker_box_ids: vec![chosen],
                difficulty: Difficulty::Unassigned,
            }),
        }
    }
    out
}

/// Labels every pair: Easy when at least one speaker shares the text's frame.
pub fn assign_difficulty(page: &mut Page, membership: &FrameAssignment) {
    for pair in &mut page.pairs {
        let easy = pair
            .speaker_box_ids
            .iter()
            .any(|s| membership.same_frame(s, &pair.text_id));
        pair.difficulty = if easy {
            Difficulty::Easy
        } else {
            Difficulty::Hard
        };
    }
}
