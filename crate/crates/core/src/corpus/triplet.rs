use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Titles shorter than this many characters are not compressed.
pub const MIN_SOURCE_LEN: usize = 10;

/// Coarse term class used by the ILP baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Product,
    Brand,
    Modifier,
    Other,
}

impl TermKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TermKind::Product => "product",
            TermKind::Brand => "brand",
            TermKind::Modifier => "modifier",
            TermKind::Other => "other",
        }
    }
}

impl fmt::Display for TermKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TermKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "product" | "p" => Ok(TermKind::Product),
            "brand" | "b" => Ok(TermKind::Brand),
            "modifier" | "m" => Ok(TermKind::Modifier),
            "other" | "o" => Ok(TermKind::Other),
            _ => Err(format!("unknown term kind {s:?}")),
        }
    }
}

/// One segmented term of a source title: its kind and its length in
/// characters. Serialized as `kind:len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermTag {
    pub kind: TermKind,
    pub len: usize,
}

impl fmt::Display for TermTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.len)
    }
}

impl FromStr for TermTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, len) = s
            .split_once(':')
            .ok_or_else(|| format!("tag {s:?} is not kind:len"))?;
        let len: usize = len.parse().map_err(|_| format!("bad tag length in {s:?}"))?;
        if len == 0 {
            return Err(format!("zero-length term in tag {s:?}"));
        }
        Ok(TermTag {
            kind: kind.parse()?,
            len,
        })
    }
}

/// A training record: original title, compressed title and a
/// transaction-leading search query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub source: String,
    pub short_title: String,
    pub query: String,
    /// Term segmentation of `source`, when known.
    pub tags: Option<Vec<TermTag>>,
}

impl Triplet {
    pub fn source_len(&self) -> usize {
        self.source.chars().count()
    }

    /// First short-title character that does not occur in the source.
    pub fn extractive_violation(&self) -> Option<char> {
        self.short_title.chars().find(|&c| !self.source.contains(c))
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.source.is_empty() || self.short_title.is_empty() || self.query.is_empty() {
            return Err("empty field".into());
        }
        if self.source_len() < MIN_SOURCE_LEN {
            return Err(format!(
                "source has {} characters, fewer than {MIN_SOURCE_LEN}",
                self.source_len()
            ));
        }
        if let Some(ch) = self.extractive_violation() {
            return Err(format!("short title character {ch:?} does not occur in the source"));
        }
        if let Some(tags) = &self.tags {
            let total: usize = tags.iter().map(|t| t.len).sum();
            if total != self.source_len() {
                return Err(format!(
                    "tags cover {total} characters but the source has {}",
                    self.source_len()
                ));
            }
        }
        Ok(())
    }

    /// Source split into `(text, kind)` terms according to the tags.
    pub fn terms(&self) -> Option<Vec<(String, TermKind)>> {
        let tags = self.tags.as_ref()?;
        let chars: Vec<char> = self.source.chars().collect();
        let mut out = Vec::with_capacity(tags.len());
        let mut at = 0;
        for t in tags {
            let end = (at + t.len).min(chars.len());
            out.push((chars[at..end].iter().collect(), t.kind));
            at = end;
        }
        Some(out)
    }

    pub fn to_line(&self) -> String {
        let mut line = format!("{}\t{}\t{}", self.source, self.short_title, self.query);
        if let Some(tags) = &self.tags {
            line.push('\t');
            let joined: Vec<String> = tags.iter().map(ToString::to_string).collect();
            line.push_str(&joined.join(" "));
        }
        line
    }
}

fn parse_line(line: &str, lineno: usize) -> Result<Triplet> {
    let fields: Vec<&str> = line.split('\t').collect();
    if !(3..=4).contains(&fields.len()) {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("expected 3 or 4 tab-separated fields, found {}", fields.len()),
        });
    }
    let tags = match fields.get(3) {
        Some(raw) => Some(
            raw.split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<Vec<TermTag>, _>>()
                .map_err(|msg| Error::Parse { line: lineno, msg })?,
        ),
        None => None,
    };
    let t = Triplet {
        source: fields[0].to_string(),
        short_title: fields[1].to_string(),
        query: fields[2].to_string(),
        tags,
    };
    t.validate().map_err(|msg| Error::Data { line: lineno, msg })?;
    Ok(t)
}

/// Parses triplet lines (`source<TAB>short<TAB>query[<TAB>tags]`).
/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_triplets(text: &str) -> Result<Vec<Triplet>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_line(l, i + 1))
        .collect()
}

pub fn read_triplets(path: impl AsRef<Path>) -> Result<Vec<Triplet>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_triplets(&text)
}

pub fn format_triplets(triplets: &[Triplet]) -> String {
    let mut out = String::new();
    for t in triplets {
        out.push_str(&t.to_line());
        out.push('\n');
    }
    out
}

pub fn write_triplets(path: impl AsRef<Path>, triplets: &[Triplet]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_triplets(triplets)).map_err(|e| Error::file(path, e))
}
