//! Rule-based phrase chunking over normalized captions.
//!
//! Captions are segmented into words, tagged from bundled word lists plus
//! suffix heuristics, and chunked into object, relation and predicate spans.
//! Each span carries one head word, the token a nonce later replaces.

use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::lexicon::TaggerLexicon;

pub const DEFAULT_MAX_K: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Tag {
    Noun,
    Verb,
    Adp,
    Adj,
    Det,
    Pron,
    Other,
}

impl Tag {
    pub fn is_content_head(self) -> bool {
        matches!(self, Tag::Noun | Tag::Verb)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordToken {
    pub surface: String,
    /// Byte offsets into the normalized caption.
    pub char_span: (usize, usize),
    pub tag: Tag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SpanKind {
    Object,
    Relation,
    Predicate,
}

/// Inclusive word range with a single head word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhraseSpan {
    pub first: usize,
    pub last: usize,
    pub kind: SpanKind,
    pub head: usize,
}

impl PhraseSpan {
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &PhraseSpan) -> bool {
        self.first <= other.last && other.first <= self.last
    }
}

/// Splits a caption into word and punctuation tokens with byte spans.
///
/// Words are runs of letters and digits; an apostrophe stays inside a word
/// when it joins two alphanumerics (`dog's`) or closes a plural (`dogs'`).
pub fn segment(caption: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = caption.char_indices().collect();
    let end_of = |i: usize| chars.get(i).map_or(caption.len(), |&(b, _)| b);
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i].1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_alphanumeric() {
            i += 1;
            while i < chars.len() {
                let c = chars[i].1;
                if c.is_alphanumeric() {
                    i += 1;
                } else if c == '\'' {
                    let next_alnum = chars.get(i + 1).is_some_and(|&(_, n)| n.is_alphanumeric());
                    let after_s = matches!(chars[i - 1].1, 's' | 'S');
                    if next_alnum {
                        i += 1;
                    } else if after_s {
                        i += 1;
                        break;
                    } else {
                        break;
                    }
                } else {
                    break;
                }
            }
        } else {
            i += 1;
            while i < chars.len() && !chars[i].1.is_whitespace() && !chars[i].1.is_alphanumeric() {
                i += 1;
            }
        }
        spans.push((chars[start].0, end_of(i)));
    }
    spans
}

/// Deterministic lexicon-and-suffix part-of-speech tagger.
#[derive(Debug, Clone, Copy)]
pub struct Tagger<'a> {
    lexicon: &'a TaggerLexicon,
}

impl Default for Tagger<'static> {
    fn default() -> Self {
        Self::new(TaggerLexicon::bundled())
    }
}

impl<'a> Tagger<'a> {
    pub fn new(lexicon: &'a TaggerLexicon) -> Self {
        Self { lexicon }
    }

    pub fn tag(&self, caption: &str) -> Vec<WordToken> {
        segment(caption)
            .into_iter()
            .map(|(s, e)| {
                let surface = &caption[s..e];
                WordToken {
                    surface: surface.to_string(),
                    char_span: (s, e),
                    tag: self.tag_word(surface),
                }
            })
            .collect()
    }

    pub fn tag_word(&self, surface: &str) -> Tag {
        let word = surface.to_lowercase();
        if !word.chars().any(char::is_alphanumeric) {
            return Tag::Other;
        }
        if word.chars().all(|c| c.is_numeric()) {
            return Tag::Det;
        }
        if let Some(tag) = self.lexicon.closed(&word) {
            return tag;
        }
        if let Some(base) = word.strip_suffix("'s") {
            return match self.lexicon.closed(base) {
                Some(tag) => tag,
                None => Tag::Noun,
            };
        }
        if word.ends_with("s'") {
            return Tag::Noun;
        }
        if word.contains('\'') {
            return Tag::Other;
        }
        if let Some(tag) = self.lexicon.open(&word) {
            return tag;
        }
        for stem in plural_stems(&word) {
            match self.lexicon.open(&stem) {
                Some(Tag::Noun) => return Tag::Noun,
                Some(Tag::Verb) => return Tag::Verb,
                _ => {}
            }
        }
        let n = word.chars().count();
        if n >= 5 && word.ends_with("ing") || n >= 4 && word.ends_with("ed") {
            return Tag::Verb;
        }
        if n >= 4 && word.ends_with("ly") {
            return Tag::Other;
        }
        const ADJ_SUFFIXES: [&str; 8] = ["ous", "ful", "ive", "able", "ible", "less", "ical", "ish"];
        if n >= 6 && ADJ_SUFFIXES.iter().any(|s| word.ends_with(s)) {
            return Tag::Adj;
        }
        Tag::Noun
    }
}

fn plural_stems(word: &str) -> Vec<String> {
    let mut stems = Vec::new();
    if let Some(s) = word.strip_suffix("ies") {
        stems.push(format!("{s}y"));
    }
    if let Some(s) = word.strip_suffix("es") {
        stems.push(s.to_string());
    }
    if let Some(s) = word.strip_suffix('s') {
        if !s.ends_with('s') {
            stems.push(s.to_string());
        }
    }
    stems
}

/// Tags with the bundled lexicon.
pub fn tag(caption: &str) -> Vec<WordToken> {
    Tagger::default().tag(caption)
}

/// `(DET|ADJ)* NOUN+` chunks as inclusive word ranges.
fn noun_chunks(tokens: &[WordToken]) -> Vec<(usize, usize)> {
    let mut chunks = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if !matches!(tokens[i].tag, Tag::Det | Tag::Adj | Tag::Noun) {
            i += 1;
            continue;
        }
        let start = i;
        while i < tokens.len() && matches!(tokens[i].tag, Tag::Det | Tag::Adj) {
            i += 1;
        }
        if i < tokens.len() && tokens[i].tag == Tag::Noun {
            while i < tokens.len() && tokens[i].tag == Tag::Noun {
                i += 1;
            }
            chunks.push((start, i - 1));
        }
    }
    chunks
}

/// Proposes object, relation and predicate spans; candidates may overlap.
pub fn extract_candidates(tokens: &[WordToken]) -> Vec<PhraseSpan> {
    let chunks = noun_chunks(tokens);
    let chunk_at = |start: usize| chunks.iter().find(|c| c.0 == start).copied();
    let mut out: Vec<PhraseSpan> = chunks
        .iter()
        .map(|&(first, last)| PhraseSpan {
            first,
            last,
            kind: SpanKind::Object,
            head: last,
        })
        .collect();
    for (i, tok) in tokens.iter().enumerate() {
        match tok.tag {
            Tag::Adp => {
                if let Some((_, last)) = chunk_at(i + 1) {
                    out.push(PhraseSpan {
                        first: i,
                        last,
                        kind: SpanKind::Relation,
                        head: last,
                    });
                }
            }
            Tag::Verb => {
                let last = chunk_at(i + 1).map_or(i, |(_, last)| last);
                out.push(PhraseSpan {
                    first: i,
                    last,
                    kind: SpanKind::Predicate,
                    head: i,
                });
            }
            _ => {}
        }
    }
    out.sort_by_key(|s| (s.first, s.last, s.kind));
    out
}

/// Greedy non-overlapping selection: longer spans first, then leftmost,
/// then object > relation > predicate. Returns spans in caption order.
pub fn select_nonoverlapping(candidates: &[PhraseSpan], max_k: usize) -> Vec<PhraseSpan> {
    let mut order: Vec<&PhraseSpan> = candidates.iter().collect();
    order.sort_by_key(|s| (Reverse(s.len()), s.first, s.kind, s.head));
    let mut chosen: Vec<PhraseSpan> = Vec::new();
    for span in order {
        if chosen.len() == max_k {
            break;
        }
        if chosen.iter().all(|c| !c.overlaps(span)) {
            chosen.push(*span);
        }
    }
    chosen.sort_by_key(|s| s.first);
    chosen
}

/// Tag, extract and select in one call.
pub fn extract_phrases(caption: &str, max_k: usize) -> (Vec<WordToken>, Vec<PhraseSpan>) {
    let tokens = tag(caption);
    let spans = select_nonoverlapping(&extract_candidates(&tokens), max_k);
    (tokens, spans)
}
