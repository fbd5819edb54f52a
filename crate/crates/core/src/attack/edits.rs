//! Candidate edits for a single word.
//!
//! Character substitutions draw from this table (visually similar ASCII
//! characters first, then QWERTY neighbours):
//!
//! | char | visual | adjacent keys |
//! |------|--------|---------------|
//! | a | `4 @` | `q w s z` |
//! | b | `8 6` | `v g h n` |
//! | c | `(` | `x d f v` |
//! | d | | `s e r f c x` |
//! | e | `3` | `w s d r` |
//! | f | | `d r t g v c` |
//! | g | `9 q` | `f t y h b v` |
//! | h | | `g y u j n b` |
//! | i | `1 !` | `u j k o` |
//! | j | | `h u i k m n` |
//! | k | | `j i o l m` |
//! | l | `1 \|` | `k o p` |
//! | m | `rn` (not used) | `n j k` |
//! | n | | `b h j m` |
//! | o | `0` | `i k l p` |
//! | p | | `o l` |
//! | q | `9` | `w a` |
//! | r | | `e d f t` |
//! | s | `5 $` | `a w e d x z` |
//! | t | `7 +` | `r f g y` |
//! | u | `v` | `y h j i` |
//! | v | `u` | `c f g b` |
//! | w | `vv` (not used) | `q a s e` |
//! | x | | `z s d c` |
//! | y | | `t g h u` |
//! | z | `2` | `a s x` |

use rand::seq::IndexedRandom;
use rand::Rng as _;

use crate::paraphrase::SynonymLexicon;
use crate::rng::Rng;

fn substitutes(c: char) -> &'static [char] {
    match c {
        'a' => &['4', '@', 'q', 'w', 's', 'z'],
        'b' => &['8', '6', 'v', 'g', 'h', 'n'],
        'c' => &['(', 'x', 'd', 'f', 'v'],
        'd' => &['s', 'e', 'r', 'f', 'c', 'x'],
        'e' => &['3', 'w', 's', 'd', 'r'],
        'f' => &['d', 'r', 't', 'g', 'v', 'c'],
        'g' => &['9', 'q', 'f', 't', 'y', 'h', 'b', 'v'],
        'h' => &['g', 'y', 'u', 'j', 'n', 'b'],
        'i' => &['1', '!', 'u', 'j', 'k', 'o'],
        'j' => &['h', 'u', 'i', 'k', 'm', 'n'],
        'k' => &['j', 'i', 'o', 'l', 'm'],
        'l' => &['1', '|', 'k', 'o', 'p'],
        'm' => &['n', 'j', 'k'],
        'n' => &['b', 'h', 'j', 'm'],
        'o' => &['0', 'i', 'k', 'l', 'p'],
        'p' => &['o', 'l'],
        'q' => &['9', 'w', 'a'],
        'r' => &['e', 'd', 'f', 't'],
        's' => &['5', '$', 'a', 'w', 'e', 'd', 'x', 'z'],
        't' => &['7', '+', 'r', 'f', 'g', 'y'],
        'u' => &['v', 'y', 'h', 'j', 'i'],
        'v' => &['u', 'c', 'f', 'g', 'b'],
        'w' => &['q', 'a', 's', 'e'],
        'x' => &['z', 's', 'd', 'c'],
        'y' => &['t', 'g', 'h', 'u'],
        'z' => &['2', 'a', 's', 'x'],
        _ => &[],
    }
}

/// A whitespace token split into leading punctuation, word and trailing
/// punctuation.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct WordParts<'a> {
    pub prefix: &'a str,
    pub core: &'a str,
    pub suffix: &'a str,
}

impl<'a> WordParts<'a> {
    pub fn split(raw: &'a str) -> Self {
        let start = raw.find(char::is_alphanumeric).unwrap_or(raw.len());
        let end = raw[start..]
            .rfind(char::is_alphanumeric)
            .map_or(start, |i| start + i + raw[start + i..].chars().next().unwrap().len_utf8());
        Self { prefix: &raw[..start], core: &raw[start..end], suffix: &raw[end..] }
    }

    pub fn with_core(&self, core: &str) -> String {
        format!("{}{core}{}", self.prefix, self.suffix)
    }
}

/// One candidate per character operation (substitution, duplicate insertion,
/// deletion, adjacent swap) at a random position. Operations that would leave
/// the word unchanged or empty are omitted.
pub(crate) fn char_candidates(raw: &str, rng: &mut Rng) -> Vec<String> {
    let parts = WordParts::split(raw);
    let chars: Vec<char> = parts.core.chars().collect();
    let mut out = Vec::with_capacity(4);
    if chars.is_empty() {
        return out;
    }
    let subst_positions: Vec<usize> =
        (0..chars.len()).filter(|&i| !substitutes(chars[i].to_ascii_lowercase()).is_empty()).collect();
    if let Some(&i) = subst_positions.choose(rng) {
        let mut c = chars.clone();
        c[i] = *substitutes(chars[i].to_ascii_lowercase()).choose(rng).expect("non-empty");
        out.push(parts.with_core(&c.iter().collect::<String>()));
    }
    let i = rng.random_range(0..chars.len());
    let mut c = chars.clone();
    c.insert(i, chars[i]);
    out.push(parts.with_core(&c.iter().collect::<String>()));
    if chars.len() > 1 {
        let i = rng.random_range(0..chars.len());
        let mut c = chars.clone();
        c.remove(i);
        out.push(parts.with_core(&c.iter().collect::<String>()));
        let swaps: Vec<usize> = (0..chars.len() - 1).filter(|&i| chars[i] != chars[i + 1]).collect();
        if let Some(&i) = swaps.choose(rng) {
            let mut c = chars.clone();
            c.swap(i, i + 1);
            out.push(parts.with_core(&c.iter().collect::<String>()));
        }
    }
    out
}

/// Every lexicon synonym of the word, keeping punctuation and capitalization.
pub(crate) fn synonym_candidates(raw: &str, lexicon: &SynonymLexicon) -> Vec<String> {
    let parts = WordParts::split(raw);
    let lower = parts.core.to_lowercase();
    let cap = parts.core.chars().next().is_some_and(char::is_uppercase);
    lexicon
        .synonyms(&lower)
        .iter()
        .map(|s| {
            let core = if cap {
                let mut ch = s.chars();
                ch.next().map_or(String::new(), |f| f.to_uppercase().chain(ch).collect())
            } else {
                s.clone()
            };
            parts.with_core(&core)
        })
        .collect()
}

/// Number of single-character edits (Damerau: insert, delete, substitute,
/// adjacent swap) between two strings.
pub fn char_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                d[i][j] = d[i][j].min(d[i - 2][j - 2] + 1);
            }
        }
    }
    d[n][m]
}

/// Word-level Levenshtein distance over whitespace tokens.
pub fn token_distance(a: &str, b: &str) -> usize {
    let a: Vec<&str> = a.split_whitespace().collect();
    let b: Vec<&str> = b.split_whitespace().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            cur[j] = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
