use linecomp_core::formatter::{compose_context, decode_scopes, encode_scopes, encode_scopes_lenient, header_ids, normalize};
use linecomp_core::postprocess::{close_pairs, filter_safety, FilterConfig};
use linecomp_core::{LanguageModel, NgramModel, PrefixCache, Tokenizer, TokenizerConfig};
use proptest::prelude::*;

fn small_tokenizer() -> Tokenizer {
    let corpus = "def f(x):\n    return x + 1\nfor i in range(10):\n    print(i)\n".repeat(20);
    let config = TokenizerConfig { vocab_size: 200, ..TokenizerConfig::default() };
    Tokenizer::train([corpus.as_str()], &config).unwrap().0
}

fn code_line() -> impl Strategy<Value = String> {
    ("( {0,3}|\t{0,2})", "[a-z_()\\[\\]{}=+:,.'\" #0-9]{0,24}").prop_map(|(i, b)| format!("{i}{b}"))
}

proptest! {
    #[test]
    fn ascii_round_trip(text in "[ -~\t\n]{0,200}") {
        let tok = small_tokenizer();
        prop_assert_eq!(tok.decode(&tok.encode(&text)).unwrap(), text);
    }

    #[test]
    fn healing_suffix_is_a_suffix(line in "[ -~]{0,40}") {
        let tok = small_tokenizer();
        let (pending, n) = tok.healing_backtrack(&line);
        prop_assert!(line.ends_with(pending));
        prop_assert_eq!(pending.chars().count(), n);
    }

    #[test]
    fn normalize_is_idempotent(lines in prop::collection::vec(code_line(), 0..20)) {
        let once = normalize(&lines.join("\n"));
        prop_assert_eq!(normalize(&once), once);
    }

    #[test]
    fn scopes_round_trip(depths in prop::collection::vec(0usize..4, 1..20), body in "[a-z]{1,8}") {
        // Each line may open at most one scope beyond the previous.
        let mut depth = 0;
        let mut text = String::new();
        for d in depths {
            depth = d.min(depth + 1);
            text.push_str(&"    ".repeat(depth));
            text.push_str(&body);
            text.push('\n');
        }
        let scoped = encode_scopes(&text).unwrap();
        prop_assert_eq!(decode_scopes(&scoped.text, scoped.indent_unit).unwrap(), text);
    }

    #[test]
    fn composed_context_fits(lines in prop::collection::vec(code_line(), 0..30), max in 12usize..120) {
        let tok = small_tokenizer();
        let code = normalize(&lines.join("\n"));
        let scoped = encode_scopes_lenient(&code);
        let header = header_ids("py", "a.py", &tok);
        match compose_context("py", "a.py", &scoped.text, &tok, max) {
            Ok(c) => {
                prop_assert!(c.ids.len() <= max);
                prop_assert_eq!(&c.ids[..c.header_len], &header[..]);
            }
            Err(_) => prop_assert!(header.len() + 1 > max),
        }
    }

    #[test]
    fn close_pairs_only_appends(sugg in "[a-z(\\[{)\\]}, ]{0,12}", ctx in "[a-z(\\[{ =]{0,12}") {
        let out = close_pairs(&sugg, &ctx);
        prop_assert!(out.starts_with(&sugg));
        let closers = ")]}";
        prop_assert!(out[sugg.len()..].chars().all(|c| closers.contains(c)));
    }

    #[test]
    fn safety_never_panics(s in "\\PC{0,60}") {
        let _ = filter_safety(&s, &FilterConfig::default());
    }

    #[test]
    fn cache_process_matches_fresh_state(
        a in prop::collection::vec(0u32..6, 0..40),
        b in prop::collection::vec(0u32..6, 0..40),
    ) {
        let model = NgramModel::fit(&[a.clone(), b.clone()], 3, 0.4, 6).unwrap();
        let mut cache = PrefixCache::new(24, 0.5);
        for ids in [&a, &b, &a] {
            let (state, _) = cache.process(&model, ids);
            let fresh = model.process_context(ids);
            let x = model.next_distribution(&state);
            let y = model.next_distribution(&fresh);
            prop_assert_eq!(x.log_probs(), y.log_probs());
        }
    }
}
