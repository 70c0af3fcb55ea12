//! Sentence selection, tokenization and vocabulary.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAX_DEFINITION_TOKENS: usize = 64;
pub const MAX_TERMINOLOGY_TOKENS: usize = 16;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

const ABBREVIATIONS: &[&str] = &[
    "e.g.", "i.e.", "spp.", "sp.", "etc.", "vs.", "cf.", "al.", "approx.", "fig.", "no.", "st.",
    "dr.", "var.", "subsp.", "ca.", "resp.",
];

/// Prefix of `definition` up to and including the first sentence terminator.
///
/// A `.`, `?` or `!` terminates when followed by end of text, or by
/// whitespace and then an uppercase letter. Known abbreviations and single
/// capital initials (`E.`) never terminate.
pub fn first_sentence(definition: &str) -> &str {
    let chars: Vec<(usize, char)> = definition.char_indices().collect();
    for (pos, &(byte, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '?' | '!') {
            continue;
        }
        let end = byte + c.len_utf8();
        let rest = &definition[end..];
        let terminates = if rest.trim().is_empty() {
            true
        } else {
            let mut it = rest.chars();
            let ws = it.next().is_some_and(char::is_whitespace);
            let next = rest.trim_start().chars().next();
            ws && next.is_some_and(char::is_uppercase)
        };
        if !terminates {
            continue;
        }
        if c == '.' && is_abbreviation(definition, &chars, pos) {
            continue;
        }
        return &definition[..end];
    }
    definition
}

fn is_abbreviation(text: &str, chars: &[(usize, char)], dot_pos: usize) -> bool {
    let mut start = dot_pos;
    while start > 0 && !chars[start - 1].1.is_whitespace() && chars[start - 1].1 != '(' {
        start -= 1;
    }
    let word_start = chars[start].0;
    let word_end = chars[dot_pos].0 + 1;
    let word = text[word_start..word_end].to_lowercase();
    if ABBREVIATIONS.contains(&word.as_str()) {
        return true;
    }
    // a lone capital initial such as the "E." in "E. coli"
    let body: Vec<char> = text[word_start..chars[dot_pos].0].chars().collect();
    body.len() == 1 && body[0].is_uppercase()
}

/// Lowercases, splits on whitespace and peels punctuation into separate tokens.
/// Hyphens between word characters and `.`/`,` between digits stay inside tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.to_lowercase().chars().collect();
        let mut word = String::new();
        for (i, &c) in chars.iter().enumerate() {
            let prev = i.checked_sub(1).map(|j| chars[j]);
            let next = chars.get(i + 1).copied();
            let joins = match c {
                _ if c.is_alphanumeric() => true,
                '-' => {
                    prev.is_some_and(char::is_alphanumeric) && next.is_some_and(char::is_alphanumeric)
                }
                '.' | ',' => {
                    prev.is_some_and(|p| p.is_ascii_digit()) && next.is_some_and(|n| n.is_ascii_digit())
                }
                _ => false,
            };
            if joins {
                word.push(c);
            } else {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(c.to_string());
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    tokens
}

/// Ordered token table with reserved PAD/UNK/BOS/EOS at indices 0..4.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<usize>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps tokens seen at least `min_count` times, ordered by descending
    /// frequency then token text.
    pub fn build<'a, I, S>(corpus: I, min_count: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        if min_count == 0 {
            return Err(Error::Invalid("min_count must be at least 1".into()));
        }
        let mut freq: HashMap<String, usize> = HashMap::new();
        for seq in corpus {
            for tok in seq {
                *freq.entry(tok.as_ref().to_string()).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = freq
            .into_iter()
            .filter(|(t, c)| *c >= min_count && !RESERVED.contains(&t.as_str()))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut counts = vec![0; RESERVED.len()];
        for (t, c) in kept {
            tokens.push(t);
            counts.push(c);
        }
        Ok(Self::from_parts(tokens, counts))
    }

    fn from_parts(tokens: Vec<String>, counts: Vec<usize>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            tokens,
            counts,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == RESERVED.len()
    }

    pub fn token(&self, idx: usize) -> &str {
        self.tokens.get(idx).map(String::as_str).unwrap_or(RESERVED[UNK])
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, idx: usize) -> usize {
        self.counts.get(idx).copied().unwrap_or(0)
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn numericalize<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.lookup(t.as_ref())).collect()
    }

    /// Maps indices back to tokens, stopping at the first EOS and skipping PAD/BOS.
    pub fn denumericalize(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .take_while(|&&i| i != EOS)
            .filter(|&&i| i != PAD && i != BOS)
            .map(|&i| self.token(i).to_string())
            .collect()
    }

    /// One `token<TAB>count` line per entry in index order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (t, c) in self.tokens.iter().zip(&self.counts) {
            s.push_str(t);
            s.push('\t');
            s.push_str(&c.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let (t, c) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::format("vocabulary", format!("line {} lacks a count", n + 1)))?;
            let c = c
                .parse()
                .map_err(|_| Error::format("vocabulary", format!("line {}: bad count", n + 1)))?;
            tokens.push(t.to_string());
            counts.push(c);
        }
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::format("vocabulary", "reserved tokens missing"));
        }
        Ok(Self::from_parts(tokens, counts))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

pub fn truncate(mut ids: Vec<usize>, max: usize) -> Vec<usize> {
    ids.truncate(max);
    ids
}
