//! Tokenization with intact tickers, company masking, vocabulary and padding.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{SectorMap, Ticker};

pub const PAD: &str = "[pad]";
pub const MASK: &str = "[mask]";
pub const UNK: &str = "[unk]";
pub const URL: &str = "[url]";

pub const PAD_ID: u32 = 0;
pub const MASK_ID: u32 = 1;
pub const UNK_ID: u32 = 2;

fn is_url(chunk: &str) -> bool {
    let lower = chunk.to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

/// Splits `text` into tokens.
///
/// Cashtags (`$AAPL`) and bare upper-case known tickers (`AAPL`) become a
/// single `$AAPL` token; URLs collapse to `[url]`; punctuation and other
/// symbols are split off one character at a time; everything else is
/// lower-cased.
pub fn tokenize(text: &str, known_tickers: &BTreeSet<Ticker>) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        if is_url(chunk) {
            out.push(URL.to_string());
            continue;
        }
        let chars: Vec<char> = chunk.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c == '$' && chars.get(i + 1).is_some_and(|n| n.is_ascii_alphabetic()) {
                let mut j = i + 1;
                while j < chars.len()
                    && (chars[j].is_ascii_alphabetic()
                        || (chars[j] == '.'
                            && chars.get(j + 1).is_some_and(|n| n.is_ascii_alphabetic())
                            && j > i + 1))
                {
                    j += 1;
                }
                let symbol: String = chars[i + 1..j].iter().collect();
                out.push(format!("${}", symbol.to_ascii_uppercase()));
                i = j;
            } else if c.is_alphanumeric() || c == '_' {
                let mut j = i;
                while j < chars.len()
                    && (chars[j].is_alphanumeric()
                        || chars[j] == '_'
                        || (chars[j] == '\''
                            && j > i
                            && chars.get(j + 1).is_some_and(|n| n.is_alphanumeric())))
                {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                let is_ticker = word.chars().all(|ch| ch.is_ascii_uppercase())
                    && known_tickers.contains(&Ticker::new(&word));
                if is_ticker {
                    out.push(format!("${word}"));
                } else {
                    out.push(word.to_lowercase());
                }
                i = j;
            } else {
                out.push(c.to_string());
                i += 1;
            }
        }
    }
    out
}

/// A tweet with its target company replaced by `[mask]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedTweet {
    pub tokens: Vec<String>,
    pub mask_position: usize,
    pub sector: usize,
}

/// Replaces every occurrence of `target` with `[mask]`. The recorded mask
/// position is the first occurrence. Masking an already-masked sequence is a
/// no-op.
pub fn mask_company(tokens: &[String], target: &Ticker, sectors: &SectorMap) -> Result<MaskedTweet> {
    let tag = target.cashtag();
    let sector = sectors.sector_of(target)?;
    let mut masked: Vec<String> = tokens.to_vec();
    let mut first = None;
    for (i, tok) in masked.iter_mut().enumerate() {
        if *tok == tag {
            *tok = MASK.to_string();
        }
        if *tok == MASK && first.is_none() {
            first = Some(i);
        }
    }
    let mask_position = first.ok_or_else(|| Error::Masking(format!("{tag} not found in tweet")))?;
    Ok(MaskedTweet {
        tokens: masked,
        mask_position,
        sector,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, u32>,
}

impl Vocabulary {
    fn with_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { tokens, index }
    }

    /// Builds a vocabulary from training sequences. Tokens seen fewer than
    /// `min_freq` times map to `[unk]`; ids follow (frequency desc, token asc)
    /// after the reserved `[pad]`, `[mask]`, `[unk]`.
    pub fn build<'a, I>(sequences: I, min_freq: usize) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for seq in sequences {
            for tok in seq {
                if tok != PAD && tok != MASK && tok != UNK {
                    *counts.entry(tok.as_str()).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(&str, usize)> =
            counts.into_iter().filter(|(_, c)| *c >= min_freq.max(1)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut tokens: Vec<String> = [PAD, MASK, UNK].iter().map(|s| s.to_string()).collect();
        tokens.extend(ranked.into_iter().map(|(t, _)| t.to_string()));
        Vocabulary::with_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map_or(UNK, String::as_str)
    }

    /// `token<TAB>id` lines in id order.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            s.push_str(t);
            s.push('\t');
            s.push_str(&i.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::Validation(format!("vocab line {}: missing tab", n + 1)))?;
            let id: usize = id
                .parse()
                .map_err(|_| Error::Validation(format!("vocab line {}: bad id", n + 1)))?;
            if id != tokens.len() {
                return Err(Error::Validation(format!("vocab line {}: ids not contiguous", n + 1)));
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() < 3 || tokens[0] != PAD || tokens[1] != MASK || tokens[2] != UNK {
            return Err(Error::Validation("vocab must start with [pad], [mask], [unk]".into()));
        }
        let vocab = Vocabulary::with_tokens(tokens);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(Error::Validation("vocab has duplicate tokens".into()));
        }
        Ok(vocab)
    }

    /// Rebuilds the lookup index after deserializing.
    pub fn reindex(self) -> Self {
        Vocabulary::with_tokens(self.tokens)
    }
}

/// Encoded, right-padded token ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub mask_position: Option<usize>,
    /// Token count before padding (after any truncation).
    pub original_length: usize,
    pub sector_label: Option<usize>,
}

/// Encodes one sequence into exactly `max_len` ids.
///
/// Overlong sequences lose tokens from the right; if that would drop the mask
/// they lose tokens from the left instead.
pub fn encode(
    tokens: &[String],
    mask_position: Option<usize>,
    sector_label: Option<usize>,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<TokenSequence> {
    if max_len == 0 {
        return Err(Error::Encoding("max_len must be positive".into()));
    }
    let (start, end) = if tokens.len() <= max_len {
        (0, tokens.len())
    } else {
        match mask_position {
            Some(m) if m >= max_len => {
                let start = tokens.len() - max_len;
                if m < start {
                    return Err(Error::Encoding(format!(
                        "mask at {m} cannot fit a window of {max_len} over {} tokens",
                        tokens.len()
                    )));
                }
                (start, tokens.len())
            }
            _ => (0, max_len),
        }
    };
    let mut ids: Vec<u32> = tokens[start..end].iter().map(|t| vocab.id(t)).collect();
    let original_length = ids.len();
    ids.resize(max_len, PAD_ID);
    Ok(TokenSequence {
        ids,
        mask_position: mask_position.map(|m| m - start),
        original_length,
        sector_label,
    })
}

pub fn encode_and_pad(batch: &[MaskedTweet], vocab: &Vocabulary, max_len: usize) -> Result<Vec<TokenSequence>> {
    batch
        .iter()
        .map(|m| encode(&m.tokens, Some(m.mask_position), Some(m.sector), vocab, max_len))
        .collect()
}

pub fn decode(seq: &TokenSequence, vocab: &Vocabulary) -> Vec<String> {
    seq.ids[..seq.original_length]
        .iter()
        .map(|&id| vocab.token(id).to_string())
        .collect()
}
