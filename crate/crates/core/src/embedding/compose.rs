use crate::corpus::PaperRecord;

/// Canonical embedding text for a paper: labeled segments in the fixed order
/// title, authors, venue, year, keywords, abstract. Empty fields are left out.
pub fn compose_document_text(record: &PaperRecord) -> String {
    compose_parts(DocumentParts {
        title: &record.title,
        authors: &record.authors,
        venue: &record.venue,
        year: record.year,
        keywords: &record.keywords,
        abstract_text: &record.abstract_text,
    })
}

/// Text for a work-in-progress title and abstract, composed the same way.
pub fn compose_query_text(title: &str, abstract_text: &str) -> String {
    compose_parts(DocumentParts { title, abstract_text, ..Default::default() })
}

#[derive(Default)]
struct DocumentParts<'a> {
    title: &'a str,
    authors: &'a [String],
    venue: &'a str,
    year: Option<i32>,
    keywords: &'a [String],
    abstract_text: &'a str,
}

fn compose_parts(p: DocumentParts<'_>) -> String {
    let mut segments: Vec<String> = Vec::with_capacity(6);
    let title = p.title.trim();
    if !title.is_empty() {
        segments.push(format!("Title: {title}"));
    }
    let authors: Vec<&str> = p.authors.iter().map(|a| a.trim()).filter(|a| !a.is_empty()).collect();
    if !authors.is_empty() {
        segments.push(format!("Authors: {}", authors.join(", ")));
    }
    let venue = p.venue.trim();
    if !venue.is_empty() {
        segments.push(format!("Venue: {venue}"));
    }
    if let Some(y) = p.year {
        segments.push(format!("Year: {y}"));
    }
    let keywords: Vec<&str> = p.keywords.iter().map(|k| k.trim()).filter(|k| !k.is_empty()).collect();
    if !keywords.is_empty() {
        segments.push(format!("Keywords: {}", keywords.join(", ")));
    }
    let abstract_text = p.abstract_text.trim();
    if !abstract_text.is_empty() {
        segments.push(format!("Abstract: {abstract_text}"));
    }
    segments.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full() -> PaperRecord {
        PaperRecord {
            id: "p1".into(),
            title: "Boba".into(),
            abstract_text: "We present Boba.".into(),
            authors: vec!["Yang Liu".into(), "Alex Kale".into()],
            keywords: vec!["multiverse".into(), "analysis".into()],
            venue: "IEEE VIS".into(),
            year: Some(2020),
            citation_count: Some(3),
            source_url: None,
        }
    }

    #[test]
    fn all_six_segments_in_order() {
        let t = compose_document_text(&full());
        assert_eq!(
            t,
            "Title: Boba\nAuthors: Yang Liu, Alex Kale\nVenue: IEEE VIS\nYear: 2020\n\
             Keywords: multiverse, analysis\nAbstract: We present Boba."
        );
    }

    #[test]
    fn empty_abstract_is_omitted() {
        let mut r = full();
        r.abstract_text = "  ".into();
        assert!(!compose_document_text(&r).contains("Abstract:"));
    }

    #[test]
    fn deterministic_and_id_independent() {
        let mut other = full();
        other.id = "zz".into();
        other.citation_count = None;
        assert_eq!(compose_document_text(&full()), compose_document_text(&other));
    }

    #[test]
    fn query_text_matches_bare_record() {
        let bare = PaperRecord {
            id: "q".into(),
            title: "T".into(),
            abstract_text: "A".into(),
            authors: vec![],
            keywords: vec![],
            venue: String::new(),
            year: None,
            citation_count: None,
            source_url: None,
        };
        assert_eq!(compose_query_text("T", "A"), compose_document_text(&bare));
        assert_eq!(compose_query_text("", "A"), "Abstract: A");
    }
}
