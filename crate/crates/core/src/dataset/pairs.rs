//! Speaker-pair files.
//!
//! The canonical format is JSON Lines, one record per text:
//! `{"book": "...", "page": 3, "text_id": "...", "speaker_ids": ["...", ...]}`.
//! [`read_dialog_xml`] adapts per-book XML of the form
//! `<book title><pages><page index><speaker_to_text text_id speaker_id/>` into
//! canonical records, merging rows that share a text.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use roxmltree::Document;
use serde::{Deserialize, Serialize};

use super::{Book, Dataset, Difficulty, SpeakerPair};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub book: String,
    pub page: u32,
    pub text_id: String,
    pub speaker_ids: Vec<String>,
}

pub fn read_pair_jsonl(path: &Path) -> Result<Vec<PairRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_pair_jsonl<W: Write>(mut w: W, records: &[PairRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Canonical records for every pair in the dataset, in book/page order.
pub fn pair_records(dataset: &Dataset) -> Vec<PairRecord> {
    dataset
        .pages()
        .flat_map(|p| {
            p.pairs.iter().map(move |pair| PairRecord {
                book: p.book_title.clone(),
                page: p.page_index,
                text_id: pair.text_id.clone(),
                speaker_ids: pair.speaker_box_ids.clone(),
            })
        })
        .collect()
}

/// Reads one dialog-annotation XML file into canonical records.
pub fn read_dialog_xml(path: &Path) -> Result<Vec<PairRecord>> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc = Document::parse(&src).map_err(|e| Error::Xml {
        path: path.to_path_buf(),
        line: e.pos().row,
        column: e.pos().col,
        message: e.to_string(),
    })?;
    let root = doc.root_element();
    let field = |node: roxmltree::Node, msg: &str| Error::Field {
        path: path.to_path_buf(),
        element: node.tag_name().name().to_string(),
        id: node.attribute("id").unwrap_or("?").to_string(),
        message: msg.to_string(),
    };
    let title = root
        .attribute("title")
        .ok_or_else(|| field(root, "missing attribute `title`"))?;

    let mut records: Vec<PairRecord> = Vec::new();
    let mut slot: BTreeMap<(u32, String), usize> = BTreeMap::new();
    for page in root.descendants().filter(|n| n.has_tag_name("page")) {
        let index: u32 = page
            .attribute("index")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| field(page, "missing or bad attribute `index`"))?;
        for link in page.children().filter(|n| n.has_tag_name("speaker_to_text")) {
            let text = link
                .attribute("text_id")
                .ok_or_else(|| field(link, "missing attribute `text_id`"))?;
            let speaker = link
                .attribute("speaker_id")
                .ok_or_else(|| field(link, "missing attribute `speaker_id`"))?;
            let at = *slot.entry((index, text.to_string())).or_insert_with(|| {
                records.push(PairRecord {
                    book: title.to_string(),
                    page: index,
                    text_id: text.to_string(),
                    speaker_ids: Vec::new(),
                });
                records.len() - 1
            });
            let rec = &mut records[at];
            if !rec.speaker_ids.iter().any(|s| s == speaker) {
                rec.speaker_ids.push(speaker.to_string());
            }
        }
    }
    Ok(records)
}

/// Reads pair records from a JSON Lines file, a dialog XML file, or a
/// directory of dialog XML files.
pub fn load_pair_records(path: &Path) -> Result<Vec<PairRecord>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "xml"))
            .collect();
        files.sort();
        let mut all = Vec::new();
        for f in files {
            all.extend(read_dialog_xml(&f)?);
        }
        Ok(all)
    } else if path.extension().is_some_and(|x| x == "xml") {
        read_dialog_xml(path)
    } else {
        read_pair_jsonl(path)
    }
}

fn check_record(book: &Book, rec: &PairRecord, problems: &mut Vec<String>) -> bool {
    let at = format!(
        "book={} page={} text={} speakers={:?}",
        rec.book, rec.page, rec.text_id, rec.speaker_ids
    );
    let Some(page) = book.page(rec.page) else {
        problems.push(format!("{at}: unknown page"));
        return false;
    };
    let mut ok = true;
    if page.text(&rec.text_id).is_none() {
        problems.push(format!("{at}: unknown text id {}", rec.text_id));
        ok = false;
    }
    if rec.speaker_ids.is_empty() {
        problems.push(format!("{at}: empty speaker list"));
        ok = false;
    }
    let mut seen = HashSet::new();
    for s in &rec.speaker_ids {
        if page.character(s).is_none() {
            problems.push(format!("{at}: unknown speaker id {s}"));
            ok = false;
        }
        if !seen.insert(s) {
            problems.push(format!("{at}: duplicate speaker id {s}"));
            ok = false;
        }
    }
    if page.pair_for_text(&rec.text_id).is_some() {
        problems.push(format!("{at}: text already paired"));
        ok = false;
    }
    ok
}

/// Attaches the records addressed to `book` (others are ignored). All
/// referential problems are collected and reported together; nothing is
/// attached when any record is bad.
pub fn load_pairs(pair_file: &Path, book: &mut Book) -> Result<usize> {
    let records: Vec<PairRecord> = load_pair_records(pair_file)?
        .into_iter()
        .filter(|r| r.book == book.title)
        .collect();
    attach_to_book(book, &records)
}

fn attach_to_book(book: &mut Book, records: &[PairRecord]) -> Result<usize> {
    let mut problems = Vec::new();
    let mut staged = book.clone();
    for rec in records {
        if check_record(&staged, rec, &mut problems) {
            let page = staged.page_mut(rec.page).expect("checked");
            page.pairs.push(SpeakerPair {
                text_id: rec.text_id.clone(),
                speaker_box_ids: rec.speaker_ids.clone(),
                difficulty: Difficulty::Unassigned,
            });
        }
    }
    if !problems.is_empty() {
        return Err(Error::DanglingPairs(problems));
    }
    *book = staged;
    Ok(records.len())
}

/// Attaches records to every book of the dataset; records naming an unknown
/// book are errors.
pub fn attach_pairs(dataset: &mut Dataset, records: &[PairRecord]) -> Result<usize> {
    let mut by_book: BTreeMap<&str, Vec<PairRecord>> = BTreeMap::new();
    let mut problems = Vec::new();
    for r in records {
        if dataset.books.iter().any(|b| b.title == r.book) {
            by_book.entry(r.book.as_str()).or_default().push(r.clone());
        } else {
            problems.push(format!("book={} page={} text={}: unknown book", r.book, r.page, r.text_id));
        }
    }
    let mut count = 0;
    let mut staged = dataset.clone();
    for (title, recs) in &by_book {
        let book = staged.book_mut(title).expect("filtered above");
        match attach_to_book(book, recs) {
            Ok(n) => count += n,
            Err(Error::DanglingPairs(p)) => problems.extend(p),
            Err(e) => return Err(e),
        }
    }
    if !problems.is_empty() {
        return Err(Error::DanglingPairs(problems));
    }
    *dataset = staged;
    Ok(count)
}
