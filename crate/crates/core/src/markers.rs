//! Reserved marker strings shared by the formatter and the tokenizer.
//!
//! The glyphs are outside ASCII, so they can never collide with code that
//! went through the ASCII-only vocabulary.

use crate::TokenId;

pub const UNK: &str = "\u{27e6}UNK\u{27e7}";
pub const SCOPE_IN: &str = "\u{27e6}IN\u{27e7}";
pub const SCOPE_OUT: &str = "\u{27e6}OUT\u{27e7}";
pub const LANG_SEP: &str = "\u{27e6}LANG\u{27e7}";
pub const META_SEP: &str = "\u{27e6}META\u{27e7}";
pub const NEWLINE: &str = "\n";

/// Rendering of the unknown token in decoded text.
pub const UNK_GLYPH: char = '\u{fffd}';

pub const UNK_ID: TokenId = 0;
pub const SCOPE_IN_ID: TokenId = 1;
pub const SCOPE_OUT_ID: TokenId = 2;
pub const LANG_SEP_ID: TokenId = 3;
pub const META_SEP_ID: TokenId = 4;
pub const NEWLINE_ID: TokenId = 5;

/// Special token strings in id order. They always occupy ids `0..6`.
pub const SPECIALS: [&str; 6] = [UNK, SCOPE_IN, SCOPE_OUT, LANG_SEP, META_SEP, NEWLINE];

/// Markers that may appear literally inside formatted text, with their ids.
pub(crate) const TEXT_MARKERS: [(&str, TokenId); 4] = [
    (SCOPE_IN, SCOPE_IN_ID),
    (SCOPE_OUT, SCOPE_OUT_ID),
    (LANG_SEP, LANG_SEP_ID),
    (META_SEP, META_SEP_ID),
];

pub fn is_special(id: TokenId) -> bool {
    (id as usize) < SPECIALS.len()
}

/// Returns the marker at the start of `s`, if any.
pub(crate) fn marker_at(s: &str) -> Option<(&'static str, TokenId)> {
    if !s.starts_with('\u{27e6}') {
        return None;
    }
    TEXT_MARKERS.iter().copied().find(|(m, _)| s.starts_with(m))
}

/// Byte offset just past the last text marker in `s` (0 when there is none).
pub fn end_of_last_marker(s: &str) -> usize {
    let mut end = 0;
    for (m, _) in TEXT_MARKERS {
        if let Some(pos) = s.rfind(m) {
            end = end.max(pos + m.len());
        }
    }
    end
}
