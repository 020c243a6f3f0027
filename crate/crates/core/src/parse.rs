//! Fault-tolerant parsing of model-emitted captions into predicted objects.
//!
//! Both parsers accept arbitrary text and never fail: input they cannot
//! make sense of yields [`ParseStatus::Unparsed`] with no objects.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::caption::CaptionFormat;
use crate::geometry::{BearingSector, SceneObject, SectorTable};
use crate::vocab::ClassVocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredObject {
    #[serde(rename = "class")]
    pub class_name: String,
    pub range_m: Option<f64>,
    pub azimuth_deg: Option<f64>,
    pub sector: Option<BearingSector>,
}

impl PredObject {
    pub fn has_spatial(&self) -> bool {
        self.range_m.is_some() || self.azimuth_deg.is_some() || self.sector.is_some()
    }

    /// Ground-truth object carrying every spatial field.
    pub fn from_scene(o: &SceneObject, sectors: &SectorTable) -> Self {
        Self {
            class_name: o.class_name.clone(),
            range_m: Some(o.range_m),
            azimuth_deg: Some(o.azimuth_deg),
            sector: sectors.sector(o.azimuth_deg).ok(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    Partial,
    Unparsed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedPrediction {
    pub frame_key: String,
    pub status: ParseStatus,
    pub raw_length: usize,
    /// Object count stated by a prose caption's leading sentence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stated_count: Option<usize>,
    pub objects: Vec<PredObject>,
    /// Surface forms of class mentions outside the vocabulary.
    #[serde(default)]
    pub oov: Vec<String>,
}

impl ParsedPrediction {
    fn unparsed(frame_key: &str, raw_length: usize) -> Self {
        Self {
            frame_key: frame_key.to_string(),
            status: ParseStatus::Unparsed,
            raw_length,
            stated_count: None,
            objects: Vec::new(),
            oov: Vec::new(),
        }
    }
}

// ---------------------------------------------------------------------------
// prose

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok<'a> {
    Word(&'a str),
    Num(f64),
    Sym(&'a str),
    Break,
}

/// Splits lowercased text into words, numbers, `/` symbols and clause
/// breaks (`. , ; : ! ?` and newlines). A `.` between digits belongs to the
/// number.
fn tokenize(s: &str) -> Vec<Tok<'_>> {
    let bytes = s.as_bytes();
    let mut toks = Vec::new();
    let mut chars = s.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c.is_ascii_digit() {
            let mut end = i + 1;
            while end < bytes.len() && bytes[end].is_ascii_digit() {
                end += 1;
            }
            if end + 1 < bytes.len() && bytes[end] == b'.' && bytes[end + 1].is_ascii_digit() {
                end += 1;
                while end < bytes.len() && bytes[end].is_ascii_digit() {
                    end += 1;
                }
            }
            if let Ok(v) = s[i..end].parse::<f64>() {
                if v.is_finite() {
                    toks.push(Tok::Num(v));
                }
            }
            while chars.peek().is_some_and(|&(j, _)| j < end) {
                chars.next();
            }
        } else if c.is_alphabetic() {
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = chars.peek() {
                if d.is_alphabetic() {
                    end = j + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            toks.push(Tok::Word(&s[i..end]));
        } else if matches!(c, '.' | ',' | ';' | ':' | '!' | '?' | '\n' | '\r') {
            if toks.last() != Some(&Tok::Break) {
                toks.push(Tok::Break);
            }
        } else if c == '/' {
            toks.push(Tok::Sym(&s[i..i + 1]));
        }
    }
    toks
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phrase {
    Class(usize),
    Bearing(BearingSector),
}

#[derive(Default, Debug)]
struct TrieNode {
    next: HashMap<String, usize>,
    value: Option<Phrase>,
}

/// Word-sequence trie for longest-match phrase lookup.
#[derive(Debug)]
struct PhraseTrie {
    nodes: Vec<TrieNode>,
}

impl PhraseTrie {
    fn new() -> Self {
        Self {
            nodes: vec![TrieNode::default()],
        }
    }

    fn insert(&mut self, phrase: &str, value: Phrase) {
        let mut at = 0;
        for tok in tokenize(phrase) {
            let key = match tok {
                Tok::Word(w) | Tok::Sym(w) => w.to_string(),
                Tok::Num(v) => v.to_string(),
                Tok::Break => continue,
            };
            at = match self.nodes[at].next.get(&key) {
                Some(&n) => n,
                None => {
                    self.nodes.push(TrieNode::default());
                    let n = self.nodes.len() - 1;
                    self.nodes[at].next.insert(key, n);
                    n
                }
            };
        }
        if at != 0 {
            self.nodes[at].value.get_or_insert(value);
        }
    }

    /// Longest phrase starting at `toks[0]`: `(tokens consumed, value)`.
    fn longest(&self, toks: &[Tok<'_>]) -> Option<(usize, Phrase)> {
        let mut at = 0;
        let mut best = None;
        for (i, tok) in toks.iter().enumerate() {
            let key = match tok {
                Tok::Word(w) | Tok::Sym(w) => *w,
                _ => break,
            };
            match self.nodes[at].next.get(key) {
                Some(&n) => at = n,
                None => break,
            }
            if let Some(v) = self.nodes[at].value {
                best = Some((i + 1, v));
            }
        }
        best
    }
}

const BEARING_ALIASES: &[(&str, BearingSector)] = &[
    ("far left", BearingSector::FarLeft),
    ("far right", BearingSector::FarRight),
    ("on the left", BearingSector::Left),
    ("on the right", BearingSector::Right),
    ("slightly left", BearingSector::SlightlyLeft),
    ("slightly right", BearingSector::SlightlyRight),
    ("ahead", BearingSector::Ahead),
    ("directly ahead", BearingSector::Ahead),
    ("dead ahead", BearingSector::Ahead),
    ("in front", BearingSector::Ahead),
];

const METER_UNITS: &[&str] = &["m", "meter", "meters", "metre", "metres"];
const ARTICLES: &[&str] = &["a", "an", "the", "some", "one"];

/// Prose parser bound to a vocabulary. Build once, reuse across captions.
#[derive(Debug)]
pub struct ProseParser {
    classes: Vec<String>,
    trie: PhraseTrie,
}

#[derive(Debug, Clone, Copy)]
enum Mention {
    Class(usize),
    Bearing(BearingSector),
    Range(f64),
}

impl ProseParser {
    pub fn new(vocab: &ClassVocabulary) -> Self {
        let classes = vocab.classes().to_vec();
        let mut trie = PhraseTrie::new();
        for s in BearingSector::ALL {
            trie.insert(s.phrase(), Phrase::Bearing(s));
        }
        for &(p, s) in BEARING_ALIASES {
            trie.insert(p, Phrase::Bearing(s));
        }
        for (surface, canon) in vocab.surface_forms() {
            let idx = classes.iter().position(|c| c == canon).expect("closed vocabulary");
            trie.insert(&surface, Phrase::Class(idx));
        }
        Self { classes, trie }
    }

    /// Left-to-right scan. Within a clause each class mention takes the first
    /// unclaimed range (`<number> m`) and bearing phrase between it and the
    /// next class mention; a missing attribute falls back to the nearest
    /// unclaimed one between the previous class mention and this one.
    pub fn parse(&self, frame_key: &str, text: &str) -> ParsedPrediction {
        let lower = text.to_lowercase();
        let toks = tokenize(&lower);
        let mut out = ParsedPrediction::unparsed(frame_key, text.len());

        for clause in toks.split(|t| *t == Tok::Break) {
            if out.stated_count.is_none() {
                out.stated_count = stated_count(clause);
            }
            let mentions = self.mentions(clause);
            let class_pos: Vec<usize> = mentions
                .iter()
                .enumerate()
                .filter(|(_, (_, m))| matches!(m, Mention::Class(_)))
                .map(|(i, _)| i)
                .collect();

            if class_pos.is_empty() {
                if let Some(&(at, _)) = mentions.first() {
                    out.oov.push(orphan_surface(&clause[..at]));
                }
                continue;
            }
            let mut taken = vec![false; mentions.len()];
            for (j, &ci) in class_pos.iter().enumerate() {
                let Mention::Class(c) = mentions[ci].1 else { unreachable!() };
                let prev = if j == 0 { 0 } else { class_pos[j - 1] + 1 };
                let next = class_pos.get(j + 1).copied().unwrap_or(mentions.len());
                let mut obj = PredObject {
                    class_name: self.classes[c].clone(),
                    range_m: None,
                    azimuth_deg: None,
                    sector: None,
                };
                let order = (ci + 1..next).chain((prev..ci).rev());
                for k in order {
                    if taken[k] {
                        continue;
                    }
                    match mentions[k].1 {
                        Mention::Range(r) if obj.range_m.is_none() => obj.range_m = Some(r),
                        Mention::Bearing(s) if obj.sector.is_none() => obj.sector = Some(s),
                        _ => continue,
                    }
                    taken[k] = true;
                }
                out.objects.push(obj);
            }
        }

        out.status = if out.objects.is_empty() && out.stated_count.is_none() {
            ParseStatus::Unparsed
        } else if out.objects.iter().all(PredObject::has_spatial) {
            ParseStatus::Ok
        } else {
            ParseStatus::Partial
        };
        out
    }

    fn mentions(&self, clause: &[Tok<'_>]) -> Vec<(usize, Mention)> {
        let mut found = Vec::new();
        let mut i = 0;
        while i < clause.len() {
            if let Some((n, p)) = self.trie.longest(&clause[i..]) {
                let m = match p {
                    Phrase::Class(c) => Mention::Class(c),
                    Phrase::Bearing(s) => Mention::Bearing(s),
                };
                found.push((i, m));
                i += n;
                continue;
            }
            if let (Tok::Num(v), Some(Tok::Word(unit))) = (clause[i], clause.get(i + 1)) {
                if METER_UNITS.contains(unit) {
                    found.push((i, Mention::Range(v)));
                    i += 2;
                    continue;
                }
            }
            i += 1;
        }
        found
    }
}

/// `there are N objects` / `there is 1 object` / `there are no objects`.
fn stated_count(clause: &[Tok<'_>]) -> Option<usize> {
    clause.windows(4).find_map(|w| match w {
        [Tok::Word("there"), Tok::Word("are" | "is"), n, Tok::Word("objects" | "object")] => match n {
            Tok::Num(v) if v.fract() == 0.0 && *v >= 0.0 => Some(*v as usize),
            Tok::Word("no") => Some(0),
            _ => None,
        },
        _ => None,
    })
}

/// Best-effort name for an attribute group with no class: the nearest
/// preceding non-article word.
fn orphan_surface(before: &[Tok<'_>]) -> String {
    before
        .iter()
        .rev()
        .find_map(|t| match t {
            Tok::Word(w) if !ARTICLES.contains(w) => Some(w.to_string()),
            _ => None,
        })
        .unwrap_or_else(|| "unknown".to_string())
}

/// Parses a prose caption with a one-off parser.
pub fn parse_prose(frame_key: &str, text: &str, vocab: &ClassVocabulary) -> ParsedPrediction {
    ProseParser::new(vocab).parse(frame_key, text)
}

// ---------------------------------------------------------------------------
// structured

const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Null,
    Bool(bool),
    Num(f64),
    Str(String),
    Arr(Vec<Value>, bool),
    Obj(Vec<(String, Value)>, bool),
}

impl Value {
    fn complete(&self) -> bool {
        match self {
            Value::Arr(_, c) | Value::Obj(_, c) => *c,
            _ => true,
        }
    }
}

/// Byte range of the first `{...}` region, or from the first `{` to the end
/// when the region never closes.
fn first_brace_region(s: &[u8]) -> Option<&[u8]> {
    let start = s.iter().position(|&b| b == b'{')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut esc = false;
    for (i, &b) in s.iter().enumerate().skip(start) {
        if in_str {
            if esc {
                esc = false;
            } else if b == b'\\' {
                esc = true;
            } else if b == b'"' {
                in_str = false;
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&s[start..=i]);
                }
            }
            _ => {}
        }
    }
    Some(&s[start..])
}

/// Lenient JSON-like reader: trailing or missing commas, single quotes,
/// bare keys and words, and truncation are tolerated. Truncated strings and
/// containers come back marked incomplete.
struct Lenient<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Lenient<'a> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|b| b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    /// `None` when nothing usable starts here (end of input, stray closer,
    /// depth limit).
    fn value(&mut self, depth: usize) -> Option<(Value, bool)> {
        self.skip_ws();
        match self.peek()? {
            b'{' if depth < MAX_DEPTH => {
                self.pos += 1;
                let v = self.object(depth + 1);
                let c = v.complete();
                Some((v, c))
            }
            b'[' if depth < MAX_DEPTH => {
                self.pos += 1;
                let v = self.array(depth + 1);
                let c = v.complete();
                Some((v, c))
            }
            b'{' | b'[' => None,
            q @ (b'"' | b'\'') => {
                self.pos += 1;
                let (s, closed) = self.string(q);
                Some((Value::Str(s), closed))
            }
            b'}' | b']' | b',' | b':' => None,
            _ => self.bare().map(|v| (v, true)),
        }
    }

    fn string(&mut self, quote: u8) -> (String, bool) {
        let mut buf = Vec::new();
        while let Some(b) = self.peek() {
            self.pos += 1;
            if b == quote {
                return (String::from_utf8_lossy(&buf).into_owned(), true);
            }
            if b != b'\\' {
                buf.push(b);
                continue;
            }
            let Some(e) = self.peek() else { break };
            self.pos += 1;
            match e {
                b'n' => buf.push(b'\n'),
                b't' => buf.push(b'\t'),
                b'r' => buf.push(b'\r'),
                b'b' | b'f' => {}
                b'u' => {
                    let hex = self.s.get(self.pos..self.pos + 4);
                    let ch = hex
                        .and_then(|h| std::str::from_utf8(h).ok())
                        .and_then(|h| u32::from_str_radix(h, 16).ok())
                        .map(|cp| char::from_u32(cp).unwrap_or('\u{fffd}'));
                    if let Some(ch) = ch {
                        self.pos += 4;
                        let mut tmp = [0u8; 4];
                        buf.extend_from_slice(ch.encode_utf8(&mut tmp).as_bytes());
                    }
                }
                other => buf.push(other),
            }
        }
        (String::from_utf8_lossy(&buf).into_owned(), false)
    }

    fn bare(&mut self) -> Option<Value> {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() || matches!(b, b',' | b':' | b'{' | b'}' | b'[' | b']' | b'"' | b'\'') {
                break;
            }
            self.pos += 1;
        }
        if self.pos == start {
            self.pos += 1;
            return None;
        }
        let word = String::from_utf8_lossy(&self.s[start..self.pos]);
        Some(match word.as_ref() {
            "null" => Value::Null,
            "true" => Value::Bool(true),
            "false" => Value::Bool(false),
            w => match w.parse::<f64>() {
                Ok(v) if v.is_finite() => Value::Num(v),
                _ => Value::Str(w.to_string()),
            },
        })
    }

    fn key(&mut self) -> Option<(String, bool)> {
        match self.peek()? {
            q @ (b'"' | b'\'') => {
                self.pos += 1;
                Some(self.string(q))
            }
            _ => match self.bare()? {
                Value::Str(s) => Some((s, true)),
                Value::Num(v) => Some((v.to_string(), true)),
                Value::Bool(b) => Some((b.to_string(), true)),
                _ => Some(("null".into(), true)),
            },
        }
    }

    fn object(&mut self, depth: usize) -> Value {
        let mut fields = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None => return Value::Obj(fields, false),
                Some(b'}') => {
                    self.pos += 1;
                    return Value::Obj(fields, true);
                }
                Some(b',') => {
                    self.pos += 1;
                    continue;
                }
                Some(b']' | b':') => {
                    self.pos += 1;
                    continue;
                }
                _ => {}
            }
            let start = self.pos;
            let Some((key, key_closed)) = self.key() else {
                if self.pos == start {
                    return Value::Obj(fields, false);
                }
                continue;
            };
            if !key_closed {
                return Value::Obj(fields, false);
            }
            self.skip_ws();
            if self.peek() == Some(b':') {
                self.pos += 1;
            }
            match self.value(depth) {
                Some((v, true)) => fields.push((key, v)),
                Some((v, false)) => {
                    fields.push((key, v));
                    return Value::Obj(fields, false);
                }
                None => {
                    self.skip_ws();
                    match self.peek() {
                        None | Some(b'{' | b'[') => return Value::Obj(fields, false),
                        _ => fields.push((key, Value::Null)),
                    }
                }
            }
        }
    }

    fn array(&mut self, depth: usize) -> Value {
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None => return Value::Arr(items, false),
                Some(b']') => {
                    self.pos += 1;
                    return Value::Arr(items, true);
                }
                Some(b',' | b'}' | b':') => {
                    self.pos += 1;
                    continue;
                }
                _ => {}
            }
            match self.value(depth) {
                Some((v, true)) => items.push(v),
                Some((v, false)) => {
                    items.push(v);
                    return Value::Arr(items, false);
                }
                None => return Value::Arr(items, false),
            }
        }
    }
}

const CLASS_KEYS: &[&str] = &["class", "label", "category", "type", "name"];
const AZIMUTH_KEYS: &[&str] = &["azimuth_deg", "az_deg", "azimuth", "az", "bearing_deg", "angle"];
const RANGE_KEYS: &[&str] = &["range_m", "rng", "range", "distance_m", "distance", "dist"];

fn field<'v>(fields: &'v [(String, Value)], names: &[&str]) -> Option<&'v Value> {
    names.iter().find_map(|n| {
        fields
            .iter()
            .find(|(k, _)| k.trim().eq_ignore_ascii_case(n))
            .map(|(_, v)| v)
    })
}

/// Number from a numeric value or the leading number of a string.
fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Num(x) => Some(*x),
        Value::Str(s) => {
            let t = s.trim();
            let end = t
                .char_indices()
                .find(|&(i, c)| !(c.is_ascii_digit() || c == '.' || ((c == '-' || c == '+') && i == 0)))
                .map_or(t.len(), |(i, _)| i);
            t[..end].parse::<f64>().ok().filter(|x| x.is_finite())
        }
        _ => None,
    }
}

/// Parses the first `{...}` region of a structured caption. Complete array
/// elements are kept; objects without a class are dropped and objects with
/// missing spatial fields are kept, both making the result `Partial`.
pub fn parse_structured(frame_key: &str, text: &str, vocab: &ClassVocabulary) -> ParsedPrediction {
    let mut out = ParsedPrediction::unparsed(frame_key, text.len());
    let Some(region) = first_brace_region(text.as_bytes()) else {
        return out;
    };
    let mut reader = Lenient { s: region, pos: 0 };
    let Some((Value::Obj(top, _), _)) = reader.value(0) else {
        return out;
    };
    let Some(Value::Arr(items, items_complete)) = field(&top, &["objects"]) else {
        return out;
    };

    let mut partial = !items_complete;
    for item in items {
        let Value::Obj(fields, true) = item else {
            partial = true;
            continue;
        };
        let class = match field(fields, CLASS_KEYS) {
            Some(Value::Str(s)) if !s.trim().is_empty() => s,
            _ => {
                partial = true;
                continue;
            }
        };
        let Some(canon) = vocab.normalize(class) else {
            out.oov.push(class.trim().to_lowercase());
            continue;
        };
        let obj = PredObject {
            class_name: canon.to_string(),
            range_m: field(fields, RANGE_KEYS).and_then(number),
            azimuth_deg: field(fields, AZIMUTH_KEYS).and_then(number),
            sector: None,
        };
        if obj.range_m.is_none() || obj.azimuth_deg.is_none() {
            partial = true;
        }
        out.objects.push(obj);
    }
    out.status = if partial { ParseStatus::Partial } else { ParseStatus::Ok };
    out
}

/// Reusable parser for both caption formats.
#[derive(Debug)]
pub struct CaptionParser {
    vocab: ClassVocabulary,
    prose: ProseParser,
}

impl CaptionParser {
    pub fn new(vocab: ClassVocabulary) -> Self {
        let prose = ProseParser::new(&vocab);
        Self { vocab, prose }
    }

    pub fn vocab(&self) -> &ClassVocabulary {
        &self.vocab
    }

    pub fn parse(&self, frame_key: &str, format: CaptionFormat, text: &str) -> ParsedPrediction {
        match format {
            CaptionFormat::Prose => self.prose.parse(frame_key, text),
            CaptionFormat::Structured => parse_structured(frame_key, text, &self.vocab),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> ClassVocabulary {
        ClassVocabulary::default()
    }

    fn obj(class: &str, range: Option<f64>, az: Option<f64>, sector: Option<BearingSector>) -> PredObject {
        PredObject {
            class_name: class.into(),
            range_m: range,
            azimuth_deg: az,
            sector,
        }
    }

    #[test]
    fn prose_template_parse() {
        let p = parse_prose(
            "k",
            "There are 3 objects. Closest: a sedan slightly to the right at 13 m, a sedan to the left at 22 m.",
            &vocab(),
        );
        assert_eq!(p.status, ParseStatus::Ok);
        assert_eq!(p.stated_count, Some(3));
        assert_eq!(
            p.objects,
            vec![
                obj("sedan", Some(13.0), None, Some(BearingSector::SlightlyRight)),
                obj("sedan", Some(22.0), None, Some(BearingSector::Left)),
            ]
        );
    }

    #[test]
    fn prose_empty_and_noise() {
        let p = parse_prose("k", "", &vocab());
        assert_eq!((p.status, p.objects.len()), (ParseStatus::Unparsed, 0));
        let p = parse_prose("k", "The weather is lovely today.", &vocab());
        assert_eq!(p.status, ParseStatus::Unparsed);
        let p = parse_prose("k", "There are no objects.", &vocab());
        assert_eq!((p.status, p.stated_count), (ParseStatus::Ok, Some(0)));
    }

    #[test]
    fn prose_adversarial_fixture() {
        let p = parse_prose(
            "k",
            "I see a pedestrian straight ahead at 7 m and maybe a truck far to the left at 60 m, plus fog everywhere.",
            &vocab(),
        );
        assert_eq!(
            p.objects,
            vec![
                obj("pedestrian", Some(7.0), None, Some(BearingSector::Ahead)),
                obj("bus or truck", Some(60.0), None, Some(BearingSector::FarLeft)),
            ]
        );
        assert_eq!(p.status, ParseStatus::Ok);
    }

    #[test]
    fn prose_variants() {
        let p = parse_prose("k", "Two cars far to the right at 12.5 meters and to the left a bicycle group.", &vocab());
        assert_eq!(
            p.objects,
            vec![
                obj("sedan", Some(12.5), None, Some(BearingSector::FarRight)),
                obj("bicycle group", None, None, Some(BearingSector::Left)),
            ]
        );
        assert_eq!(p.status, ParseStatus::Ok);
        let p = parse_prose("k", "At 30 m to the right there is a truck; a sedan.", &vocab());
        assert_eq!(
            p.objects,
            vec![
                obj("bus or truck", Some(30.0), None, Some(BearingSector::Right)),
                obj("sedan", None, None, None),
            ]
        );
        let p = parse_prose("k", "a pedestrian group slightly to the left at 9m", &vocab());
        assert_eq!(p.objects, vec![obj("pedestrian group", Some(9.0), None, Some(BearingSector::SlightlyLeft))]);
        let p = parse_prose("k", "A bus/truck.", &vocab());
        assert_eq!(p.objects[0].class_name, "bus or truck");
        assert_eq!(p.status, ParseStatus::Partial);
    }

    #[test]
    fn prose_oov_is_tallied() {
        let p = parse_prose("k", "There is 1 object. Closest: a spaceship to the left at 5 m.", &vocab());
        assert!(p.objects.is_empty());
        assert_eq!(p.oov, vec!["spaceship".to_string()]);
        assert_eq!(p.status, ParseStatus::Ok);
    }

    #[test]
    fn structured_with_prefix() {
        let p = parse_structured(
            "k",
            r#"Sure! {"objects":[{"class":"sedan","azimuth_deg":-9,"range_m":13}]}"#,
            &vocab(),
        );
        assert_eq!(p.status, ParseStatus::Ok);
        assert_eq!(p.objects, vec![obj("sedan", Some(13.0), Some(-9.0), None)]);
        let p = parse_structured("k", r#"{"objects":[]}"#, &vocab());
        assert_eq!((p.status, p.objects.len()), (ParseStatus::Ok, 0));
    }

    #[test]
    fn structured_truncated() {
        let full = r#"{"objects":[{"class":"sedan","azimuth_deg":-9,"range_m":13},{"class":"bus or truck","azimuth_deg":4,"range_m":30}]}"#;
        let cut = r#"{"objects":[{"class":"sedan","azimuth_deg":-9,"range_m":13},{"class":"bus"#;
        let p = parse_structured("k", cut, &vocab());
        assert_eq!(p.status, ParseStatus::Partial);
        assert_eq!(p.objects.len(), 1);
        let whole = parse_structured("k", full, &vocab());
        assert_eq!(p.objects[..], whole.objects[..1]);
    }

    #[test]
    fn structured_leniency() {
        let p = parse_structured(
            "k",
            "```json\n{'objects': [ {class: 'Truck', \"range_m\": \"41\", \"azimuth_deg\": 0.4,}, ], }\n```",
            &vocab(),
        );
        assert_eq!(p.status, ParseStatus::Ok);
        assert_eq!(p.objects, vec![obj("bus or truck", Some(41.0), Some(0.4), None)]);

        let p = parse_structured("k", r#"{"objects":[{"class":"sedan","range_m":13},{"azimuth_deg":3}]}"#, &vocab());
        assert_eq!(p.status, ParseStatus::Partial);
        assert_eq!(p.objects, vec![obj("sedan", Some(13.0), None, None)]);

        let p = parse_structured("k", r#"{"objects":[{"class":"spaceship","azimuth_deg":3,"range_m":2}]}"#, &vocab());
        assert_eq!((p.status, p.objects.len()), (ParseStatus::Ok, 0));
        assert_eq!(p.oov, vec!["spaceship".to_string()]);

        let p = parse_structured("k", r#"{"objects":[{"class":"sedan","az_deg":-9,"rng":"13 m"}]}"#, &vocab());
        assert_eq!(p.objects, vec![obj("sedan", Some(13.0), Some(-9.0), None)]);
    }

    #[test]
    fn structured_unparsed_cases() {
        for text in ["", "no braces here", "{}", r#"{"items":[]}"#, r#"{"objects":"none"}"#, "}{", "[1,2]"] {
            let p = parse_structured("k", text, &vocab());
            assert_eq!(p.status, ParseStatus::Unparsed, "{text}");
            assert!(p.objects.is_empty());
        }
    }

    #[test]
    fn structured_whitespace_and_key_order() {
        let a = parse_structured("k", r#"{"objects":[{"class":"sedan","azimuth_deg":-9,"range_m":13}]}"#, &vocab());
        let b = parse_structured(
            "k",
            "{ \"objects\" : [\n  { \"range_m\" : 13 ,\t\"class\" : \"sedan\" , \"azimuth_deg\" : -9 }\n ] }",
            &vocab(),
        );
        assert_eq!(a.objects, b.objects);
        assert_eq!(a.status, b.status);
    }

    #[test]
    fn deep_nesting_is_bounded() {
        let text = "{".repeat(100_000);
        let p = parse_structured("k", &text, &vocab());
        assert_eq!(p.status, ParseStatus::Unparsed);
        let text = format!("{{\"objects\":{}", "[".repeat(100_000));
        assert_eq!(parse_structured("k", &text, &vocab()).status, ParseStatus::Partial);
    }

    #[test]
    fn unicode_escapes_and_odd_bytes() {
        let p = parse_structured("k", "{\"objects\":[{\"class\":\"s\\u0065dan\",\"azimuth_deg\":1,\"range_m\":2}]}", &vocab());
        assert_eq!(p.objects[0].class_name, "sedan");
        let p = parse_structured("k", "{\"objects\":[{\"class\":\"\u{e9}\\uZZ\",\"azimuth_deg\":1}]}", &vocab());
        assert_eq!(p.status, ParseStatus::Ok);
        let _ = parse_prose("k", "\u{0130}\u{0301} 5\u{00b2} m \u{1F600}", &vocab());
    }
}
