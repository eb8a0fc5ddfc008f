//! Canonical in-memory model of annotated comic pages and speaker pairs.

mod pairs;
mod resolve;
mod split;
mod stats;
mod xml;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

pub use pairs::{
    attach_pairs, load_pair_records, load_pairs, pair_records, read_dialog_xml, read_pair_jsonl,
    write_pair_jsonl, PairRecord,
};
pub use resolve::{assign_difficulty, resolve_speaker_boxes, NamePair, Resolution};
pub use split::{split_dataset, Split};
pub use stats::{dataset_stats, StatsReport};
pub use xml::{load_book, parse_book, write_book};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub id: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterBox {
    pub id: String,
    pub bbox: BBox,
    /// Identity label: which character this body depicts.
    pub character_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextBox {
    pub id: String,
    pub bbox: BBox,
    pub content: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Hard,
    Unassigned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerPair {
    pub text_id: String,
    pub speaker_box_ids: Vec<String>,
    pub difficulty: Difficulty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub book_title: String,
    pub page_index: u32,
    pub width: f64,
    pub height: f64,
    pub frames: Vec<Frame>,
    pub characters: Vec<CharacterBox>,
    pub texts: Vec<TextBox>,
    pub pairs: Vec<SpeakerPair>,
    pub image_path: Option<String>,
}

impl Page {
    pub fn new(book_title: impl Into<String>, page_index: u32, width: f64, height: f64) -> Self {
        Page {
            book_title: book_title.into(),
            page_index,
            width,
            height,
            frames: Vec::new(),
            characters: Vec::new(),
            texts: Vec::new(),
            pairs: Vec::new(),
            image_path: None,
        }
    }

    pub fn character(&self, id: &str) -> Option<&CharacterBox> {
        self.characters.iter().find(|c| c.id == id)
    }

    pub fn text(&self, id: &str) -> Option<&TextBox> {
        self.texts.iter().find(|t| t.id == id)
    }

    /// Manga109 stores facing pages as one landscape image.
    pub fn physical_pages(&self) -> usize {
        if self.width > self.height {
            2
        } else {
            1
        }
    }

    pub fn diagonal(&self) -> f64 {
        self.width.hypot(self.height)
    }

    pub fn pair_for_text(&self, text_id: &str) -> Option<&SpeakerPair> {
        self.pairs.iter().find(|p| p.text_id == text_id)
    }

    /// Checks id uniqueness and that every pair points at boxes on this page.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let ids = self
            .frames
            .iter()
            .map(|f| &f.id)
            .chain(self.characters.iter().map(|c| &c.id))
            .chain(self.texts.iter().map(|t| &t.id));
        for id in ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId {
                    book: self.book_title.clone(),
                    page: self.page_index,
                    id: id.clone(),
                });
            }
        }
        let mut problems = Vec::new();
        let mut texts_seen = HashSet::new();
        for pair in &self.pairs {
            let here = format!("{} page {}", self.book_title, self.page_index);
            if self.text(&pair.text_id).is_none() {
                problems.push(format!("{here}: unknown text id {}", pair.text_id));
            }
            if !texts_seen.insert(pair.text_id.as_str()) {
                problems.push(format!("{here}: text {} paired twice", pair.text_id));
            }
            if pair.speaker_box_ids.is_empty() {
                problems.push(format!("{here}: text {} has no speakers", pair.text_id));
            }
            let mut speakers = HashSet::new();
            for s in &pair.speaker_box_ids {
                if self.character(s).is_none() {
                    problems.push(format!("{here}: unknown speaker id {s}"));
                }
                if !speakers.insert(s) {
                    problems.push(format!("{here}: duplicate speaker id {s}"));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::DanglingPairs(problems))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterInfo {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Book {
    pub title: String,
    pub characters: Vec<CharacterInfo>,
    pub pages: Vec<Page>,
}

impl Book {
    pub fn page(&self, index: u32) -> Option<&Page> {
        self.pages.iter().find(|p| p.page_index == index)
    }

    pub fn page_mut(&mut self, index: u32) -> Option<&mut Page> {
        self.pages.iter_mut().find(|p| p.page_index == index)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub books: Vec<Book>,
    /// Book title to split. Empty until [`split_dataset`] runs.
    pub split: BTreeMap<String, Split>,
}

impl Dataset {
    pub fn new(books: Vec<Book>) -> Self {
        Dataset {
            books,
            split: BTreeMap::new(),
        }
    }

    pub fn pages(&self) -> impl Iterator<Item = &Page> {
        self.books.iter().flat_map(|b| b.pages.iter())
    }

    pub fn pages_mut(&mut self) -> impl Iterator<Item = &mut Page> {
        self.books.iter_mut().flat_map(|b| b.pages.iter_mut())
    }

    pub fn book_mut(&mut self, title: &str) -> Option<&mut Book> {
        self.books.iter_mut().find(|b| b.title == title)
    }

    /// Books in the requested split; `None` selects everything.
    pub fn select(&self, which: Option<Split>) -> Dataset {
        let books = self
            .books
            .iter()
            .filter(|b| which.is_none() || self.split.get(&b.title).copied() == which)
            .cloned()
            .collect();
        Dataset {
            books,
            split: self.split.clone(),
        }
    }

    /// Orders frames on every page and labels each pair Easy or Hard.
    pub fn label_difficulty(&mut self, order: &crate::order::OrderConfig) {
        for page in self.pages_mut() {
            let order = crate::order::order_page(page, order);
            let assignment = crate::order::assign_page(page, &order);
            assign_difficulty(page, &assignment);
        }
    }

    /// Loads every book annotation under `root`. Looks in `root/annotations`
    /// when present, else in `root` itself; files are read in name order.
    pub fn load_dir(root: &Path) -> Result<Dataset> {
        let ann = root.join("annotations");
        let dir = if ann.is_dir() { ann } else { root.to_path_buf() };
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "xml"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Config(format!(
                "no annotation files found in {}",
                dir.display()
            )));
        }
        let images = root.join("images");
        let mut books = Vec::with_capacity(files.len());
        for f in &files {
            let mut book = load_book(f)?;
            if images.is_dir() {
                for page in &mut book.pages {
                    let p = images
                        .join(&book.title)
                        .join(format!("{:03}.jpg", page.page_index));
                    page.image_path = Some(p.to_string_lossy().into_owned());
                }
            }
            books.push(book);
        }
        Ok(Dataset::new(books))
    }
}
