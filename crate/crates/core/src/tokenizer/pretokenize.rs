//! Byte-level pre-tokenization.
//!
//! Text is split with the GPT-2 pattern (contractions, letter runs, digit
//! runs, punctuation runs, whitespace) and every piece is then viewed as raw
//! bytes. The printable byte alphabet below is the usual reversible
//! byte-to-char table, used only to make token strings readable on disk.

use std::sync::OnceLock;

use fancy_regex::Regex;

const GPT2_PATTERN: &str =
    r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+";

fn pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(GPT2_PATTERN).expect("static pattern compiles"))
}

/// Split `text` into pre-tokens. The pieces concatenate back to `text`.
pub fn pretokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut last = 0;
    for m in pattern().find_iter(text) {
        // The pattern only fails on pathological backtracking; fall back to
        // emitting the rest of the text as one piece so coverage stays total.
        let Ok(m) = m else { break };
        if m.start() > last {
            out.push(&text[last..m.start()]);
        }
        out.push(m.as_str());
        last = m.end();
    }
    if last < text.len() {
        out.push(&text[last..]);
    }
    out
}

fn byte_table() -> &'static ([char; 256], std::collections::HashMap<char, u8>) {
    static TABLE: OnceLock<([char; 256], std::collections::HashMap<char, u8>)> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut printable: Vec<u32> = (b'!' as u32..=b'~' as u32).collect();
        printable.extend(0xA1..=0xAC);
        printable.extend(0xAE..=0xFF);
        let mut chars = ['\0'; 256];
        let mut extra = 0u32;
        for b in 0..256u32 {
            let c = if printable.contains(&b) {
                b
            } else {
                extra += 1;
                255 + extra
            };
            chars[b as usize] = char::from_u32(c).expect("valid scalar");
        }
        let inverse = chars
            .iter()
            .enumerate()
            .map(|(b, &c)| (c, b as u8))
            .collect();
        (chars, inverse)
    })
}

/// Render bytes with the reversible printable alphabet (space becomes `Ġ`).
pub fn bytes_to_printable(bytes: &[u8]) -> String {
    let (table, _) = byte_table();
    bytes.iter().map(|&b| table[b as usize]).collect()
}

/// Inverse of [`bytes_to_printable`]; `None` if a char is outside the alphabet.
pub fn printable_to_bytes(s: &str) -> Option<Vec<u8>> {
    let (_, inverse) = byte_table();
    s.chars().map(|c| inverse.get(&c).copied()).collect()
}
