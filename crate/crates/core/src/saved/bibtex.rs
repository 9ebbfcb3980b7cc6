//! BibTeX rendering for saved papers.
//!
//! Keys are `surname + year + first title word` folded to lowercase ASCII,
//! for example `lovelace1843notes`. When several papers in one export share
//! a key, every one of them gets a letter suffix in export order: `…a`, `…b`.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::PaperRecord;
use crate::text;

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "on", "in", "for", "and", "or", "to", "with", "at", "by", "from", "as", "is", "are",
    "towards", "toward", "via", "into", "how", "what", "why", "when", "do", "does",
];

const INPROCEEDINGS_MARKERS: &[&str] = &["conference", "symposium", "proceedings"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BibEntry {
    pub key: String,
    pub paper_id: String,
    pub bibtex: String,
}

fn ascii_fold(s: &str) -> String {
    deunicode::deunicode(s).chars().filter(char::is_ascii_alphanumeric).map(|c| c.to_ascii_lowercase()).collect()
}

/// Last name of an author written either "First Last" or "Last, First".
fn surname(author: &str) -> &str {
    match author.split_once(',') {
        Some((last, _)) => last.trim(),
        None => author.split_whitespace().last().unwrap_or(""),
    }
}

/// Key before collision handling.
pub fn base_key(record: &PaperRecord) -> String {
    let name = record.authors.first().map(|a| ascii_fold(surname(a))).filter(|s| !s.is_empty());
    let year = record.year.map_or_else(|| "nd".to_string(), |y| y.to_string());
    let word = text::tokenize(&record.title)
        .into_iter()
        .map(|t| ascii_fold(&t))
        .find(|t| !t.is_empty() && !STOPWORDS.contains(&t.as_str()));
    format!("{}{year}{}", name.unwrap_or_else(|| "anon".into()), word.unwrap_or_else(|| "untitled".into()))
}

/// a, b, ..., z, aa, ab, ...
fn suffix(mut n: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'a' + (n % 26) as u8);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// Unique keys for `records`, in order.
pub fn assign_keys(records: &[&PaperRecord]) -> Vec<String> {
    let bases: Vec<String> = records.iter().map(|r| base_key(r)).collect();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for b in &bases {
        *counts.entry(b.as_str()).or_default() += 1;
    }
    let mut used: HashSet<String> = bases.iter().filter(|b| counts[b.as_str()] == 1).cloned().collect();
    let mut next: HashMap<&str, usize> = HashMap::new();
    bases
        .iter()
        .map(|b| {
            if counts[b.as_str()] == 1 {
                return b.clone();
            }
            let n = next.entry(b.as_str()).or_default();
            loop {
                let candidate = format!("{b}{}", suffix(*n));
                *n += 1;
                if used.insert(candidate.clone()) {
                    return candidate;
                }
            }
        })
        .collect()
}

/// Escapes characters special to BibTeX/LaTeX.
pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' | '%' | '$' | '#' | '_' | '{' | '}' => {
                out.push('\\');
                out.push(c);
            }
            '~' => out.push_str("\\textasciitilde{}"),
            '^' => out.push_str("\\textasciicircum{}"),
            '\\' => out.push_str("\\textbackslash{}"),
            '\n' | '\r' => out.push(' '),
            _ => out.push(c),
        }
    }
    out
}

/// Escapes a title and braces every word with two or more capitals so
/// styles cannot lowercase acronyms.
pub fn escape_title(title: &str) -> String {
    title
        .split(' ')
        .map(|w| {
            let escaped = escape(w);
            if w.chars().filter(|c| c.is_uppercase()).count() >= 2 {
                format!("{{{escaped}}}")
            } else {
                escaped
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn is_inproceedings(venue: &str) -> bool {
    let v = venue.to_lowercase();
    INPROCEEDINGS_MARKERS.iter().any(|m| v.contains(m))
}

pub fn render_entry(record: &PaperRecord, key: &str) -> String {
    let inproceedings = is_inproceedings(&record.venue);
    let kind = if inproceedings { "inproceedings" } else { "article" };
    let mut fields: Vec<(&str, String)> = Vec::new();
    if !record.authors.is_empty() {
        fields.push(("author", record.authors.iter().map(|a| escape(a)).collect::<Vec<_>>().join(" and ")));
    }
    fields.push(("title", escape_title(&record.title)));
    if !record.venue.is_empty() {
        fields.push((if inproceedings { "booktitle" } else { "journal" }, escape(&record.venue)));
    }
    if let Some(y) = record.year {
        fields.push(("year", y.to_string()));
    }
    if !record.abstract_text.is_empty() {
        fields.push(("abstract", escape(&record.abstract_text)));
    }
    if !record.keywords.is_empty() {
        fields.push(("keywords", escape(&record.keywords.join(", "))));
    }
    if let Some(url) = &record.source_url {
        // URLs are verbatim; only braces would break the field.
        fields.push(("url", url.replace('{', "%7B").replace('}', "%7D")));
    }
    let body: Vec<String> = fields.iter().map(|(k, v)| format!("  {k} = {{{v}}}")).collect();
    format!("@{kind}{{{key},\n{}\n}}\n", body.join(",\n"))
}

pub fn bib_entries(records: &[&PaperRecord]) -> Vec<BibEntry> {
    assign_keys(records)
        .into_iter()
        .zip(records)
        .map(|(key, r)| BibEntry { bibtex: render_entry(r, &key), key, paper_id: r.id.clone() })
        .collect()
}

pub fn export_bibtex(records: &[&PaperRecord]) -> String {
    bib_entries(records).into_iter().map(|e| e.bibtex).collect::<Vec<_>>().join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, authors: &[&str], year: Option<i32>, title: &str, venue: &str) -> PaperRecord {
        PaperRecord {
            id: id.into(),
            title: title.into(),
            abstract_text: String::new(),
            authors: authors.iter().map(|s| s.to_string()).collect(),
            keywords: vec![],
            venue: venue.into(),
            year,
            citation_count: None,
            source_url: None,
        }
    }

    #[test]
    fn key_rule() {
        let r = rec("p1", &["Ada Lovelace"], Some(1843), "Notes on the Analytical Engine", "");
        assert_eq!(base_key(&r), "lovelace1843notes");
        let r = rec("p2", &["Müller, Jörg"], None, "The Über Study", "");
        assert_eq!(base_key(&r), "mullernduber");
        assert_eq!(base_key(&rec("p3", &[], Some(2000), "", "")), "anon2000untitled");
    }

    #[test]
    fn collisions_get_letters() {
        let a = rec("p1", &["Jane Smith"], Some(2020), "Maps", "");
        let b = rec("p2", &["John Smith"], Some(2020), "Maps again", "");
        let c = rec("p3", &["Ann Other"], Some(2020), "Solo", "");
        assert_eq!(assign_keys(&[&a, &b, &c]), vec!["smith2020mapsa", "smith2020mapsb", "other2020solo"]);
        // A natural key equal to a generated one forces skipping that letter.
        let d = rec("p4", &["X Smith"], Some(2020), "Mapsa", "");
        let keys = assign_keys(&[&a, &b, &d]);
        assert_eq!(keys, vec!["smith2020mapsb", "smith2020mapsc", "smith2020mapsa"]);
        assert_eq!(suffix(0), "a");
        assert_eq!(suffix(25), "z");
        assert_eq!(suffix(26), "aa");
    }

    #[test]
    fn entry_shape() {
        let mut r = rec("p1", &["Ada Lovelace", "C. Babbage"], Some(1843), "An LLM & UMAP 50% study", "Proceedings of the IEEE VIS Conference");
        r.source_url = Some("https://example.org/a_b?x=1".into());
        let e = render_entry(&r, "k");
        assert!(e.starts_with("@inproceedings{k,\n"));
        assert!(e.contains("author = {Ada Lovelace and C. Babbage}"));
        assert!(e.contains("title = {An {LLM} \\& {UMAP} 50\\% study}"));
        assert!(e.contains("booktitle = {Proceedings of the IEEE VIS Conference}"));
        assert!(e.contains("url = {https://example.org/a_b?x=1}"));
        let j = render_entry(&rec("p2", &[], None, "T", "Computer Graphics Forum"), "j");
        assert!(j.starts_with("@article{j,") && j.contains("journal = {Computer Graphics Forum}"));
        assert!(!j.contains("year"));
    }

    #[test]
    fn parses_back() {
        let rs = [
            rec("p1", &["Ada Lovelace"], Some(1843), "Notes on the Analytical Engine", "Symposium on Engines"),
            rec("p2", &["Ada Lovelace"], Some(1843), "Notes {and} more_notes #1", "Journal ~ of ^ Things \\ x"),
        ];
        let refs: Vec<&PaperRecord> = rs.iter().collect();
        let src = export_bibtex(&refs);
        let bib = biblatex::Bibliography::parse(&src).unwrap();
        assert_eq!(bib.len(), 2);
        assert!(bib.get("lovelace1843notesa").is_some() && bib.get("lovelace1843notesb").is_some());
    }
}
