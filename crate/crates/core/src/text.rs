//! Character-offset helpers. Spans throughout the crate are `[start, end)`
//! offsets in Unicode scalar values, not bytes.

use unicode_normalization::UnicodeNormalization;

pub fn nfc(text: &str) -> String {
    text.nfc().collect()
}

/// Byte offset of every char boundary, plus a final entry for `text.len()`.
pub(crate) fn char_boundaries(text: &str) -> Vec<usize> {
    let mut out: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    out.push(text.len());
    out
}

/// Maps byte offsets (on char boundaries) to char offsets.
pub(crate) struct ByteToChar {
    boundaries: Vec<usize>,
}

impl ByteToChar {
    pub fn new(text: &str) -> Self {
        Self {
            boundaries: char_boundaries(text),
        }
    }

    pub fn char_offset(&self, byte: usize) -> usize {
        match self.boundaries.binary_search(&byte) {
            Ok(i) => i,
            Err(i) => i,
        }
    }
}

/// Slice `text` by a char span.
pub fn char_slice(text: &str, span: (usize, usize)) -> &str {
    let b = char_boundaries(text);
    let end = span.1.min(b.len() - 1);
    let start = span.0.min(end);
    &text[b[start]..b[end]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_slice_handles_multibyte() {
        let s = "café één";
        assert_eq!(char_slice(s, (0, 4)), "café");
        assert_eq!(char_slice(s, (5, 8)), "één");
        let map = ByteToChar::new(s);
        assert_eq!(map.char_offset(s.find("één").unwrap()), 5);
    }
}
