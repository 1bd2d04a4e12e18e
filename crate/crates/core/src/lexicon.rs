//! Word lists shipped with the crate.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::OnceLock;

use crate::phrase::Tag;

const CLOSED_CLASS: &str = include_str!("../assets/lexicon/closed_class.txt");
const OPEN_CLASS: &str = include_str!("../assets/lexicon/open_class.txt");
const EXCLUSION: &str = include_str!("../assets/lexicon/exclusion.txt");
const CATEGORIES: &str = include_str!("../assets/lexicon/categories.txt");

fn entries(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

fn parse_tag(s: &str) -> Option<Tag> {
    Some(match s {
        "NOUN" => Tag::Noun,
        "VERB" => Tag::Verb,
        "ADP" => Tag::Adp,
        "ADJ" => Tag::Adj,
        "DET" => Tag::Det,
        "PRON" => Tag::Pron,
        "OTHER" => Tag::Other,
        _ => return None,
    })
}

/// Closed-class and open-class word lists used by the tagger.
#[derive(Debug, Clone)]
pub struct TaggerLexicon {
    closed: HashMap<String, Tag>,
    open: HashMap<String, Tag>,
}

impl TaggerLexicon {
    pub fn bundled() -> &'static TaggerLexicon {
        static LEX: OnceLock<TaggerLexicon> = OnceLock::new();
        LEX.get_or_init(|| TaggerLexicon::parse(CLOSED_CLASS, OPEN_CLASS))
    }

    /// Parses `word<TAB>TAG` lists; the first listing of a word wins.
    pub fn parse(closed: &str, open: &str) -> Self {
        let load = |text: &str| {
            let mut map = HashMap::new();
            for line in entries(text) {
                if let Some((w, t)) = line.split_once('\t') {
                    if let Some(tag) = parse_tag(t.trim()) {
                        map.entry(w.to_lowercase()).or_insert(tag);
                    }
                }
            }
            map
        };
        Self {
            closed: load(closed),
            open: load(open),
        }
    }

    pub fn closed(&self, word: &str) -> Option<Tag> {
        self.closed.get(word).copied()
    }

    pub fn open(&self, word: &str) -> Option<Tag> {
        self.open.get(word).copied()
    }
}

/// Real English words a nonce must never coincide with.
#[derive(Debug, Clone)]
pub struct ExclusionLexicon {
    words: HashSet<String>,
}

impl ExclusionLexicon {
    pub fn bundled() -> &'static ExclusionLexicon {
        static LEX: OnceLock<ExclusionLexicon> = OnceLock::new();
        LEX.get_or_init(|| ExclusionLexicon::from_words(entries(EXCLUSION)))
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            words: words.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
        }
    }

    /// Case-insensitive membership.
    pub fn contains(&self, word: &str) -> bool {
        if word.chars().any(char::is_uppercase) {
            self.words.contains(&word.to_lowercase())
        } else {
            self.words.contains(word)
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Word-to-category map for the real-word substitution controls.
#[derive(Debug, Clone)]
pub struct CategoryLexicon {
    category_of: HashMap<String, String>,
    /// category -> words, both sorted for deterministic picks.
    members: BTreeMap<String, Vec<String>>,
}

impl CategoryLexicon {
    pub fn bundled() -> &'static CategoryLexicon {
        static LEX: OnceLock<CategoryLexicon> = OnceLock::new();
        LEX.get_or_init(|| CategoryLexicon::parse(CATEGORIES))
    }

    pub fn parse(text: &str) -> Self {
        let mut category_of = HashMap::new();
        let mut members: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for line in entries(text) {
            let Some((w, c)) = line.split_once('\t') else {
                continue;
            };
            let (w, c) = (w.trim().to_lowercase(), c.trim().to_string());
            if category_of.contains_key(&w) {
                continue;
            }
            category_of.insert(w.clone(), c.clone());
            members.entry(c).or_default().push(w);
        }
        for words in members.values_mut() {
            words.sort();
        }
        Self { category_of, members }
    }

    pub fn category(&self, word: &str) -> Option<&str> {
        self.category_of.get(word).map(String::as_str)
    }

    pub fn members(&self, category: &str) -> &[String] {
        self.members.get(category).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.members.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.category_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.category_of.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_lists_load() {
        let ex = ExclusionLexicon::bundled();
        assert!(ex.len() >= 50_000);
        assert!(ex.contains("dog") && ex.contains("Dog"));
        let cats = CategoryLexicon::bundled();
        assert_eq!(cats.category("dog"), Some("animal"));
        assert!(cats.categories().count() >= 20);
        assert!(cats.members("animal").windows(2).all(|w| w[0] < w[1]));
        let tags = TaggerLexicon::bundled();
        assert_eq!(tags.closed("the"), Some(Tag::Det));
        assert_eq!(tags.open("bench"), Some(Tag::Noun));
    }

    #[test]
    fn first_listing_wins() {
        let lex = TaggerLexicon::parse("", "# c\nswing\tNOUN\nswing\tVERB\n");
        assert_eq!(lex.open("swing"), Some(Tag::Noun));
    }
}
