use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Dataset, Difficulty};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub books: usize,
    pub pages: usize,
    /// Pages carrying at least one speaker pair.
    pub annotated_images: usize,
    pub texts: usize,
    pub easy: usize,
    pub hard: usize,
    pub unassigned: usize,
    pub total_pairs: usize,
    /// Speaker-to-text links; exceeds `total_pairs` when texts have several speakers.
    pub speaker_links: usize,
    pub multi_speaker_pairs: usize,
    /// Physical pages in annotated images; a landscape image is a two-page spread.
    pub annotated_pages: usize,
    /// `total_pairs / annotated_images`, 0 when nothing is annotated.
    pub pairs_per_image: f64,
    /// `total_pairs / annotated_pages`, 0 when nothing is annotated.
    pub pairs_per_page: f64,
}

pub fn dataset_stats(dataset: &Dataset) -> StatsReport {
    let mut r = StatsReport {
        books: dataset.books.len(),
        ..Default::default()
    };
    for page in dataset.pages() {
        r.pages += 1;
        r.texts += page.texts.len();
        if !page.pairs.is_empty() {
            r.annotated_images += 1;
            r.annotated_pages += page.physical_pages();
        }
        for pair in &page.pairs {
            r.total_pairs += 1;
            r.speaker_links += pair.speaker_box_ids.len();
            if pair.speaker_box_ids.len() > 1 {
                r.multi_speaker_pairs += 1;
            }
            match pair.difficulty {
                Difficulty::Easy => r.easy += 1,
                Difficulty::Hard => r.hard += 1,
                Difficulty::Unassigned => r.unassigned += 1,
            }
        }
    }
    if r.annotated_images > 0 {
        r.pairs_per_image = r.total_pairs as f64 / r.annotated_images as f64;
        r.pairs_per_page = r.total_pairs as f64 / r.annotated_pages as f64;
    }
    r
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>16} {:>8} {:>8} {:>8} {:>8} {:>12}",
            "Annotated images", "Texts", "Easy", "Hard", "Total", "Pairs / page"
        )?;
        writeln!(
            f,
            "{:>16} {:>8} {:>8} {:>8} {:>8} {:>12.2}",
            self.annotated_images, self.texts, self.easy, self.hard, self.total_pairs, self.pairs_per_page
        )?;
        write!(
            f,
            "books={} images={} annotated-pages={} pairs/image={:.2} links={} multi-speaker={} unassigned={}",
            self.books,
            self.pages,
            self.annotated_pages,
            self.pairs_per_image,
            self.speaker_links,
            self.multi_speaker_pairs,
            self.unassigned
        )
    }
}
