//! Manga109-style book annotations.
//!
//! ```xml
//! <book title="...">
//!   <characters><character id="..." name="..."/></characters>
//!   <pages>
//!     <page index="0" width="1654" height="1170">
//!       <frame id=".." xmin=".." ymin=".." xmax=".." ymax=".."/>
//!       <body id=".." character=".." xmin=".." .../>
//!       <text id=".." xmin=".." ...>content</text>
//!     </page>
//!   </pages>
//! </book>
//! ```
//!
//! `face` elements are skipped: speaker pairs reference bodies.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use roxmltree::{Document, Node};

use super::{Book, CharacterBox, CharacterInfo, Frame, Page, TextBox};
use crate::error::{Error, Result};
use crate::geometry::BBox;

pub fn load_book(path: &Path) -> Result<Book> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_book(&src, path)
}

/// Parses annotation XML; `path` is used for error context only.
pub fn parse_book(src: &str, path: &Path) -> Result<Book> {
    let doc = Document::parse(src).map_err(|e| {
        let pos = e.pos();
        Error::Xml {
            path: path.to_path_buf(),
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })?;
    let root = doc.root_element();
    let ctx = Ctx { doc: &doc, path };
    if root.tag_name().name() != "book" {
        return Err(ctx.field(root, "root element must be <book>"));
    }
    let title = ctx.attr(root, "title")?.to_string();

    let mut characters = Vec::new();
    let mut pages = Vec::new();
    for child in root.children().filter(Node::is_element) {
        match child.tag_name().name() {
            "characters" => {
                for c in child.children().filter(|n| n.has_tag_name("character")) {
                    characters.push(CharacterInfo {
                        id: ctx.attr(c, "id")?.to_string(),
                        name: c.attribute("name").unwrap_or_default().to_string(),
                    });
                }
            }
            "pages" => {
                for p in child.children().filter(|n| n.has_tag_name("page")) {
                    pages.push(ctx.page(p, &title)?);
                }
            }
            _ => {}
        }
    }

    let mut indices = HashSet::new();
    for p in &pages {
        if !indices.insert(p.page_index) {
            return Err(Error::Field {
                path: path.to_path_buf(),
                element: "page".into(),
                id: p.page_index.to_string(),
                message: "duplicate page index".into(),
            });
        }
        p.validate()?;
    }

    Ok(Book {
        title,
        characters,
        pages,
    })
}

struct Ctx<'a, 'input> {
    doc: &'a Document<'input>,
    path: &'a Path,
}

impl Ctx<'_, '_> {
    fn field(&self, node: Node, message: &str) -> Error {
        let pos = self.doc.text_pos_at(node.range().start);
        Error::Field {
            path: self.path.to_path_buf(),
            element: node.tag_name().name().to_string(),
            id: node.attribute("id").unwrap_or("?").to_string(),
            message: format!("{message} (line {})", pos.row),
        }
    }

    fn attr<'n>(&self, node: Node<'n, '_>, name: &str) -> Result<&'n str> {
        node.attribute(name)
            .ok_or_else(|| self.field(node, &format!("missing attribute `{name}`")))
    }

    fn number(&self, node: Node, name: &str) -> Result<f64> {
        let raw = self.attr(node, name)?;
        raw.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.field(node, &format!("attribute `{name}`={raw:?} is not a number")))
    }

    fn bbox(&self, node: Node, page: &Page) -> Result<BBox> {
        let raw = BBox {
            x_min: self.number(node, "xmin")?,
            y_min: self.number(node, "ymin")?,
            x_max: self.number(node, "xmax")?,
            y_max: self.number(node, "ymax")?,
        };
        if raw.x_min > raw.x_max || raw.y_min > raw.y_max {
            return Err(self.field(node, "min corner exceeds max corner"));
        }
        let (clamped, changed) = raw.clamp_to(page.width, page.height);
        if changed {
            warn!(
                "{}: {} page {} <{} id={}> clamped to page bounds",
                self.path.display(),
                page.book_title,
                page.page_index,
                node.tag_name().name(),
                node.attribute("id").unwrap_or("?")
            );
        }
        Ok(clamped)
    }

    fn page(&self, node: Node, title: &str) -> Result<Page> {
        let index_raw = self.attr(node, "index")?;
        let index = index_raw
            .trim()
            .parse::<u32>()
            .map_err(|_| self.field(node, &format!("bad page index {index_raw:?}")))?;
        let width = self.number(node, "width")?;
        let height = self.number(node, "height")?;
        if width < 0.0 || height < 0.0 {
            return Err(self.field(node, "negative page size"));
        }
        let mut page = Page::new(title, index, width, height);
        for el in node.children().filter(Node::is_element) {
            match el.tag_name().name() {
                "frame" => {
                    let bbox = self.bbox(el, &page)?;
                    page.frames.push(Frame {
                        id: self.attr(el, "id")?.to_string(),
                        bbox,
                    });
                }
                "body" => {
                    let bbox = self.bbox(el, &page)?;
                    page.characters.push(CharacterBox {
                        id: self.attr(el, "id")?.to_string(),
                        bbox,
                        character_name: self.attr(el, "character")?.to_string(),
                    });
                }
                "text" => {
                    let bbox = self.bbox(el, &page)?;
                    let content: String = el
                        .children()
                        .filter(|n| n.is_text())
                        .filter_map(|n| n.text())
                        .collect();
                    page.texts.push(TextBox {
                        id: self.attr(el, "id")?.to_string(),
                        bbox,
                        content: (!content.is_empty()).then_some(content),
                    });
                }
                _ => {}
            }
        }
        Ok(page)
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\r' => out.push_str("&#13;"),
            '\n' => out.push_str("&#10;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out
}

fn coords(b: &BBox) -> String {
    format!(
        "xmin=\"{}\" ymin=\"{}\" xmax=\"{}\" ymax=\"{}\"",
        b.x_min, b.y_min, b.x_max, b.y_max
    )
}

/// Serializes a book in the same schema [`parse_book`] reads.
pub fn write_book(book: &Book) -> String {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n");
    let _ = writeln!(s, "<book title=\"{}\">", escape(&book.title));
    s.push_str("  <characters>\n");
    for c in &book.characters {
        let _ = writeln!(
            s,
            "    <character id=\"{}\" name=\"{}\"/>",
            escape(&c.id),
            escape(&c.name)
        );
    }
    s.push_str("  </characters>\n  <pages>\n");
    for p in &book.pages {
        let _ = writeln!(
            s,
            "    <page index=\"{}\" width=\"{}\" height=\"{}\">",
            p.page_index, p.width, p.height
        );
        for f in &p.frames {
            let _ = writeln!(s, "      <frame id=\"{}\" {}/>", escape(&f.id), coords(&f.bbox));
        }
        for c in &p.characters {
            let _ = writeln!(
                s,
                "      <body id=\"{}\" {} character=\"{}\"/>",
                escape(&c.id),
                coords(&c.bbox),
                escape(&c.character_name)
            );
        }
        for t in &p.texts {
            match &t.content {
                Some(content) => {
                    let _ = writeln!(
                        s,
                        "      <text id=\"{}\" {}>{}</text>",
                        escape(&t.id),
                        coords(&t.bbox),
                        escape(content)
                    );
                }
                None => {
                    let _ = writeln!(s, "      <text id=\"{}\" {}/>", escape(&t.id), coords(&t.bbox));
                }
            }
        }
        s.push_str("    </page>\n");
    }
    s.push_str("  </pages>\n</book>\n");
    s
}
