//! Frequency vocabulary with digit splitting, character offsets and truncation.
//!
//! Pre-tokenization yields maximal runs of letters and `_`, every digit as its
//! own piece, and every other non-whitespace character as its own piece.
//! Offsets are character (Unicode scalar) positions.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const SPECIALS: [&str; 3] = ["<pad>", "<unk>", "<bos>"];

/// A piece of text with its `[start, end)` character offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

/// Splits text into pieces.
///
/// ```
/// use gaptext::tokenizer::pre_tokenize;
/// let p: Vec<&str> = pre_tokenize("density: 7.274").iter().map(|p| p.text).collect();
/// assert_eq!(p, ["density", ":", "7", ".", "2", "7", "4"]);
/// ```
pub fn pre_tokenize(text: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut iter = text.char_indices().enumerate().peekable();
    while let Some((ci, (bi, c))) = iter.next() {
        if c.is_whitespace() {
            continue;
        }
        let mut cend = ci + 1;
        let mut bend = bi + c.len_utf8();
        if is_word_char(c) {
            while let Some(&(_, (b2, c2))) = iter.peek() {
                if !is_word_char(c2) {
                    break;
                }
                iter.next();
                cend += 1;
                bend = b2 + c2.len_utf8();
            }
        }
        out.push(Piece {
            text: &text[bi..bend],
            start: ci,
            end: cend,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    pub max_size: usize,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>, max_size: usize) -> Result<Vocab> {
        for (i, s) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(Error::input(format!("vocab id {i} must be `{s}`")));
            }
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(Error::input(format!("duplicate vocab token `{t}`")));
            }
        }
        Ok(Vocab {
            tokens,
            ids,
            max_size,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.ids.get(piece).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One `token<TAB>id` line per entry, sorted by id.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            s.push_str(&format!("{t}\t{i}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Vocab> {
        let mut tokens = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line.rsplit_once('\t').ok_or_else(|| Error::Schema {
                line: n + 1,
                message: "expected `token<TAB>id`".into(),
            })?;
            let id: usize = id.parse().map_err(|_| Error::Schema {
                line: n + 1,
                message: format!("bad id `{id}`"),
            })?;
            if id != tokens.len() {
                return Err(Error::Schema {
                    line: n + 1,
                    message: format!("ids must be dense and sorted, found {id}"),
                });
            }
            tokens.push(tok.to_string());
        }
        let n = tokens.len();
        Vocab::from_tokens(tokens, n)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocab> {
        Vocab::from_text(&fs::read_to_string(path)?)
    }
}

/// Counts pieces over the corpus and keeps the `max_size - 3` most frequent,
/// ties broken lexicographically.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], max_size: usize) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(Error::input("cannot build a vocabulary from an empty corpus"));
    }
    if max_size < 4 {
        return Err(Error::input(format!("max_size must be at least 4, got {max_size}")));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in corpus {
        for p in pre_tokenize(doc.as_ref()) {
            *counts.entry(p.text).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, _)| !SPECIALS.contains(t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    tokens.extend(
        ranked
            .into_iter()
            .take(max_size - SPECIALS.len())
            .map(|(t, _)| t.to_string()),
    );
    Vocab::from_tokens(tokens, max_size)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
    pub offsets: Vec<(usize, usize)>,
    pub truncated: bool,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Encodes with a leading BOS, keeping at most `max_len` tokens.
pub fn encode(v: &Vocab, text: &str, max_len: usize) -> TokenSeq {
    assert!(max_len >= 2, "max_len must be at least 2");
    let pieces = pre_tokenize(text);
    let keep = pieces.len().min(max_len - 1);
    let mut ids = Vec::with_capacity(keep + 1);
    let mut offsets = Vec::with_capacity(keep + 1);
    ids.push(BOS);
    offsets.push((0, 0));
    for p in &pieces[..keep] {
        ids.push(v.id(p.text).unwrap_or(UNK));
        offsets.push((p.start, p.end));
    }
    TokenSeq {
        mask: vec![1; ids.len()],
        ids,
        offsets,
        truncated: pieces.len() > keep,
    }
}

/// Joins pieces with single spaces, dropping BOS and PAD.
pub fn decode(v: &Vocab, ts: &TokenSeq) -> Result<String> {
    let mut parts = Vec::with_capacity(ts.ids.len());
    for &id in &ts.ids {
        let tok = v
            .token(id)
            .ok_or_else(|| Error::input(format!("token id {id} out of range for vocab of {}", v.len())))?;
        if id != BOS && id != PAD {
            parts.push(tok);
        }
    }
    Ok(parts.join(" "))
}

/// Whitespace-joined pieces of `text`, the form `decode` reproduces for
/// UNK-free input.
pub fn normalize(text: &str) -> String {
    pre_tokenize(text)
        .iter()
        .map(|p| p.text)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Inclusive token range whose offsets intersect `[char_start, char_end)`.
/// BOS and masked positions never match.
pub fn char_span_to_token_span(
    ts: &TokenSeq,
    char_start: usize,
    char_end: usize,
) -> Option<(usize, usize)> {
    let mut found: Option<(usize, usize)> = None;
    for (t, &(s, e)) in ts.offsets.iter().enumerate() {
        if t == 0 || ts.mask[t] == 0 || e <= s {
            continue;
        }
        if s < char_end && char_start < e {
            found = Some(match found {
                None => (t, t),
                Some((a, _)) => (a, t),
            });
        }
    }
    found
}

/// Right-pads sequences with PAD (mask 0, offset (0, 0)) to a common length.
pub fn pad_batch(seqs: &[TokenSeq]) -> Vec<TokenSeq> {
    let n = seqs.iter().map(TokenSeq::len).max().unwrap_or(0);
    seqs.iter()
        .map(|s| {
            let mut s = s.clone();
            let extra = n - s.len();
            s.ids.extend(std::iter::repeat(PAD).take(extra));
            s.mask.extend(std::iter::repeat(0).take(extra));
            s.offsets.extend(std::iter::repeat((0, 0)).take(extra));
            s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unicode_offsets_are_chars() {
        let p = pre_tokenize("Å b");
        assert_eq!((p[0].start, p[0].end), (0, 1));
        assert_eq!((p[1].start, p[1].end), (2, 3));
    }

    #[test]
    fn underscore_joins_words() {
        let p: Vec<&str> = pre_tokenize("Cr_pv, 'x'").iter().map(|p| p.text).collect();
        assert_eq!(p, ["Cr_pv", ",", "'", "x", "'"]);
    }

    #[test]
    fn max_size_caps_vocab() {
        let v = build_vocab(&["a b c d e"], 5).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.tokens()[3..], ["a", "b"]);
    }

    #[test]
    fn rejects_bad_vocab_file() {
        assert!(Vocab::from_text("<pad>\t0\n<unk>\t1\n<bos>\t3\n").is_err());
        assert!(Vocab::from_text("x\t0\n").is_err());
    }
}
