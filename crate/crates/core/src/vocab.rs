//! Object class vocabulary shared by label ingestion, caption generation,
//! caption parsing and matching.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("synonym `{surface}` maps to unknown class `{target}`")]
    NotClosed { surface: String, target: String },
    #[error("vocabulary has no classes")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const DEFAULT_CLASSES: &[(&str, &[&str])] = &[
    ("sedan", &["car", "automobile", "passenger car"]),
    (
        "bus or truck",
        &["bus", "truck", "bus/truck", "truck or bus", "lorry", "van"],
    ),
    ("motorcycle", &["motorbike", "scooter", "motorcyclist"]),
    ("bicycle", &["bike", "cyclist", "bicyclist"]),
    ("pedestrian", &["person", "walker"]),
    (
        "pedestrian group",
        &["group of pedestrians", "pedestrians group", "crowd", "group of people"],
    ),
    (
        "bicycle group",
        &["group of bicycles", "group of cyclists", "bicycles group"],
    ),
];

const ARTICLES: &[&str] = &["a", "an", "the"];

/// Canonical class names plus a surface-form synonym map.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassVocabulary {
    canonical: Vec<String>,
    synonyms: HashMap<String, usize>,
}

impl Default for ClassVocabulary {
    fn default() -> Self {
        let entries = DEFAULT_CLASSES
            .iter()
            .map(|(c, syns)| (c.to_string(), syns.iter().map(|s| s.to_string()).collect()))
            .collect();
        Self::from_entries(entries).expect("default vocabulary is closed")
    }
}

/// Lowercases, maps `_`/`-` to spaces and collapses whitespace.
fn squash(surface: &str) -> String {
    surface
        .to_lowercase()
        .replace(['_', '-'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn plural(word: &str) -> String {
    if word.ends_with('s') || word.ends_with('x') || word.ends_with("ch") || word.ends_with("sh") {
        format!("{word}es")
    } else if let Some(stem) = word.strip_suffix('y').filter(|s| !s.ends_with(['a', 'e', 'o', 'u'])) {
        format!("{stem}ies")
    } else {
        format!("{word}s")
    }
}

impl ClassVocabulary {
    /// Builds a vocabulary from `(canonical, synonyms)` entries.
    pub fn from_entries(entries: Vec<(String, Vec<String>)>) -> Result<Self, VocabError> {
        if entries.is_empty() {
            return Err(VocabError::Empty);
        }
        let mut canonical = Vec::new();
        let mut synonyms = HashMap::new();
        for (name, _) in &entries {
            let name = squash(name);
            if name.is_empty() {
                return Err(VocabError::Malformed {
                    line: 0,
                    reason: "empty class name".into(),
                });
            }
            if !canonical.contains(&name) {
                synonyms.insert(name.clone(), canonical.len());
                canonical.push(name);
            }
        }
        for (name, syns) in entries {
            let idx = synonyms[&squash(&name)];
            for s in syns {
                let s = squash(&s);
                if !s.is_empty() {
                    synonyms.entry(s).or_insert(idx);
                }
            }
        }
        Ok(Self { canonical, synonyms })
    }

    /// Parses a vocabulary file: one class per line, `canonical: syn, syn`.
    pub fn parse(text: &str) -> Result<Self, VocabError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, rest) = line.split_once(':').unwrap_or((line, ""));
            if name.trim().is_empty() {
                return Err(VocabError::Malformed {
                    line: i + 1,
                    reason: "missing class name".into(),
                });
            }
            let syns = rest
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
            entries.push((name.trim().to_string(), syns));
        }
        Self::from_entries(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn classes(&self) -> &[String] {
        &self.canonical
    }

    pub fn contains(&self, canonical: &str) -> bool {
        self.canonical.iter().any(|c| c == canonical)
    }

    /// Maps a surface form to its canonical class. Case-insensitive; leading
    /// articles and a trailing plural are stripped. `None` means the form is
    /// out of vocabulary.
    pub fn normalize(&self, surface: &str) -> Option<&str> {
        let squashed = squash(surface.trim_matches(|c: char| !c.is_alphanumeric()));
        let mut words: Vec<&str> = squashed.split(' ').collect();
        while words.len() > 1 && ARTICLES.contains(&words[0]) {
            words.remove(0);
        }
        let key = words.join(" ");
        if let Some(&i) = self.synonyms.get(&key) {
            return Some(&self.canonical[i]);
        }
        let last = *words.last()?;
        let stems = [
            last.strip_suffix("ies").map(|s| format!("{s}y")),
            last.strip_suffix("es").map(String::from),
            last.strip_suffix('s').map(String::from),
        ];
        for stem in stems.into_iter().flatten() {
            let mut w: Vec<&str> = words[..words.len() - 1].to_vec();
            w.push(&stem);
            if let Some(&i) = self.synonyms.get(&w.join(" ")) {
                return Some(&self.canonical[i]);
            }
        }
        None
    }

    /// Every recognized surface form (canonical names, synonyms and their
    /// plurals) with its canonical class.
    pub fn surface_forms(&self) -> Vec<(String, &str)> {
        let mut out = Vec::with_capacity(self.synonyms.len() * 2);
        for (surface, &i) in &self.synonyms {
            let canon = self.canonical[i].as_str();
            out.push((surface.clone(), canon));
            let (head, last) = surface.rsplit_once(' ').unwrap_or(("", surface));
            let pl = plural(last);
            let pl = if head.is_empty() { pl } else { format!("{head} {pl}") };
            out.push((pl, canon));
        }
        out.sort();
        out
    }

    /// Serialized form accepted by [`ClassVocabulary::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, name) in self.canonical.iter().enumerate() {
            let mut syns: Vec<&str> = self
                .synonyms
                .iter()
                .filter(|(s, &j)| j == i && *s != name)
                .map(|(s, _)| s.as_str())
                .collect();
            syns.sort_unstable();
            out.push_str(name);
            if !syns.is_empty() {
                out.push_str(": ");
                out.push_str(&syns.join(", "));
            }
            out.push('\n');
        }
        out
    }
}
