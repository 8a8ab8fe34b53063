//! TeX-aware normalization, lexing, dependency scanning and n-gram shingling.
//!
//! The lexer is deliberately shallow: no macro expansion, no catcodes. It
//! only has to produce a stable token sequence that dedup, EED and
//! CrystalBLEU can agree on.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::hash::fingerprint;

/// Macros treated as external file references.
pub const DEFAULT_DEPENDENCY_MACROS: [&str; 6] = [
    "includegraphics",
    "input",
    "include",
    "bibliography",
    "import",
    "lstinputlisting",
];

const BEGIN_DOCUMENT: &str = "\\begin{document}";
const END_DOCUMENT: &str = "\\end{document}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenKind {
    Command,
    GroupDelimiter,
    MathDelimiter,
    TextWord,
    Number,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TexToken {
    pub kind: TokenKind,
    pub lexeme: String,
    /// Byte range into the source that was lexed.
    pub span: Range<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<TexToken>,
    pub source_id: String,
}

impl TokenStream {
    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn lexemes(&self) -> impl Iterator<Item = &str> + '_ {
        self.tokens.iter().map(|t| t.lexeme.as_str())
    }
}

/// A macro from the exclusion list found in the (normalized) source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyFinding {
    /// Macro name without the leading backslash.
    pub command: String,
    pub argument: String,
    pub span: Range<usize>,
}

/// Returns the text between `\begin{document}` and `\end{document}`, or the
/// input untouched when either marker is missing.
pub fn extract_document_body(source: &str) -> &str {
    let Some(begin) = source.find(BEGIN_DOCUMENT) else {
        return source;
    };
    let body_start = begin + BEGIN_DOCUMENT.len();
    match source[body_start..].rfind(END_DOCUMENT) {
        Some(end) => source[body_start..body_start + end].trim(),
        None => source,
    }
}

/// Byte offset of the first unescaped `%` in `line`, if any.
fn comment_start(line: &str) -> Option<usize> {
    let bytes = line.as_bytes();
    let mut backslashes = 0usize;
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'\\' => backslashes += 1,
            b'%' if backslashes % 2 == 0 => return Some(i),
            _ => backslashes = 0,
        }
    }
    None
}

/// Strips unescaped line comments, collapses horizontal whitespace and
/// limits blank-line runs to one empty line.
pub fn normalize(source: &str) -> String {
    let mut out = String::with_capacity(source.len());
    let mut pending_newlines = 0usize;
    let mut started = false;
    for raw_line in source.split('\n') {
        let line = raw_line.strip_suffix('\r').unwrap_or(raw_line);
        let line = match comment_start(line) {
            Some(cut) => &line[..cut],
            None => line,
        };
        let mut collapsed = String::with_capacity(line.len());
        for word in line.split([' ', '\t']).filter(|w| !w.is_empty()) {
            if !collapsed.is_empty() {
                collapsed.push(' ');
            }
            collapsed.push_str(word);
        }
        if collapsed.is_empty() {
            if started {
                pending_newlines += 1;
            }
            continue;
        }
        if started {
            for _ in 0..(pending_newlines + 1).min(2) {
                out.push('\n');
            }
        }
        pending_newlines = 0;
        started = true;
        out.push_str(&collapsed);
    }
    out
}

fn is_operator_char(c: char) -> bool {
    c.is_ascii_punctuation() && !matches!(c, '\\' | '{' | '}' | '[' | ']' | '$' | '(' | ')' | ',' | ';' | '%')
}

/// Tokenizes normalized TeX source. Never fails: bytes that fit no other
/// class become punctuation tokens.
pub fn lex(source: &str) -> TokenStream {
    let mut tokens = Vec::new();
    let mut chars = source.char_indices().peekable();
    let push = |tokens: &mut Vec<TexToken>, kind, start: usize, end: usize| {
        tokens.push(TexToken {
            kind,
            lexeme: source[start..end].to_string(),
            span: start..end,
        });
    };

    while let Some((start, c)) = chars.next() {
        if c.is_whitespace() {
            continue;
        }
        match c {
            '%' => {
                while let Some(&(_, next)) = chars.peek() {
                    if next == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '\\' => {
                let mut end = start + 1;
                match chars.peek().copied() {
                    Some((_, next)) if next.is_ascii_alphabetic() || next == '@' => {
                        while let Some(&(i, next)) = chars.peek() {
                            if next.is_ascii_alphabetic() || next == '@' {
                                end = i + next.len_utf8();
                                chars.next();
                            } else {
                                break;
                            }
                        }
                        push(&mut tokens, TokenKind::Command, start, end);
                    }
                    Some((i, next)) if !next.is_whitespace() => {
                        chars.next();
                        push(&mut tokens, TokenKind::Command, start, i + next.len_utf8());
                    }
                    _ => push(&mut tokens, TokenKind::Punctuation, start, end),
                }
            }
            '{' | '}' | '[' | ']' => push(&mut tokens, TokenKind::GroupDelimiter, start, start + 1),
            '$' => push(&mut tokens, TokenKind::MathDelimiter, start, start + 1),
            '(' | ')' | ',' | ';' => push(&mut tokens, TokenKind::Punctuation, start, start + 1),
            c if c.is_ascii_digit()
                || (c == '.' && matches!(chars.peek(), Some(&(_, d)) if d.is_ascii_digit())) =>
            {
                let mut end = start + 1;
                let mut seen_dot = c == '.';
                while let Some(&(i, next)) = chars.peek() {
                    if next.is_ascii_digit() {
                        end = i + 1;
                        chars.next();
                    } else if next == '.' && !seen_dot {
                        // Only a dot followed by a digit continues the number.
                        let mut lookahead = source[i + 1..].chars();
                        if matches!(lookahead.next(), Some(d) if d.is_ascii_digit()) {
                            seen_dot = true;
                            end = i + 1;
                            chars.next();
                        } else {
                            break;
                        }
                    } else {
                        break;
                    }
                }
                push(&mut tokens, TokenKind::Number, start, end);
            }
            c if c.is_alphabetic() => {
                let mut end = start + c.len_utf8();
                while let Some(&(i, next)) = chars.peek() {
                    if next.is_alphanumeric() {
                        end = i + next.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                push(&mut tokens, TokenKind::TextWord, start, end);
            }
            c if is_operator_char(c) => {
                let mut end = start + 1;
                while let Some(&(i, next)) = chars.peek() {
                    if is_operator_char(next) {
                        end = i + 1;
                        chars.next();
                    } else {
                        break;
                    }
                }
                push(&mut tokens, TokenKind::Punctuation, start, end);
            }
            other => push(&mut tokens, TokenKind::Punctuation, start, start + other.len_utf8()),
        }
    }

    TokenStream {
        tokens,
        source_id: String::new(),
    }
}

/// Finds every occurrence of an excluded macro. `exclusion_list` entries may
/// be given with or without the leading backslash. Commented-out uses are
/// ignored because the scan runs on normalized source.
pub fn scan_dependencies<S: AsRef<str>>(source: &str, exclusion_list: &[S]) -> Vec<DependencyFinding> {
    let normalized = normalize(source);
    let stream = lex(&normalized);
    let wanted: Vec<&str> = exclusion_list
        .iter()
        .map(|s| s.as_ref().trim_start_matches('\\'))
        .collect();

    let mut findings = Vec::new();
    let tokens = &stream.tokens;
    for (idx, tok) in tokens.iter().enumerate() {
        if tok.kind != TokenKind::Command {
            continue;
        }
        let name = &tok.lexeme[1..];
        if !wanted.iter().any(|w| *w == name) {
            continue;
        }
        let (argument, end) = macro_argument(&normalized, tokens, idx + 1);
        findings.push(DependencyFinding {
            command: name.to_string(),
            argument,
            span: tok.span.start..end.max(tok.span.end),
        });
    }
    findings
}

/// Reads the first mandatory argument after a command: skips a star and an
/// optional `[...]` group, then takes a balanced `{...}` group or, failing
/// that, the next whitespace-delimited word.
fn macro_argument(source: &str, tokens: &[TexToken], mut i: usize) -> (String, usize) {
    if matches!(tokens.get(i), Some(t) if t.lexeme == "*") {
        i += 1;
    }
    if matches!(tokens.get(i), Some(t) if t.lexeme == "[") {
        if let Some(close) = matching_close(tokens, i, "[", "]") {
            i = close + 1;
        }
    }
    match tokens.get(i) {
        Some(open) if open.lexeme == "{" => match matching_close(tokens, i, "{", "}") {
            Some(close) => {
                let inner = &source[open.span.end..tokens[close].span.start];
                (inner.trim().to_string(), tokens[close].span.end)
            }
            None => (source[open.span.end..].trim().to_string(), source.len()),
        },
        Some(word) if word.kind != TokenKind::Command => {
            let rest = &source[word.span.start..];
            let len = rest
                .find(|c: char| c.is_whitespace() || c == ';' || c == '}')
                .unwrap_or(rest.len());
            (rest[..len].to_string(), word.span.start + len)
        }
        _ => (String::new(), 0),
    }
}

fn matching_close(tokens: &[TexToken], open_idx: usize, open: &str, close: &str) -> Option<usize> {
    let mut depth = 0usize;
    for (j, t) in tokens.iter().enumerate().skip(open_idx) {
        if t.lexeme == open {
            depth += 1;
        } else if t.lexeme == close {
            depth -= 1;
            if depth == 0 {
                return Some(j);
            }
        }
    }
    None
}

/// Fingerprints of every contiguous `n`-token window.
pub fn shingles(stream: &TokenStream, n: usize) -> BTreeSet<u64> {
    if n == 0 || stream.len() < n {
        return BTreeSet::new();
    }
    stream
        .tokens
        .windows(n)
        .map(|w| fingerprint(w.iter().map(|t| t.lexeme.as_str())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shape(stream: &TokenStream) -> Vec<(TokenKind, &str)> {
        stream.tokens.iter().map(|t| (t.kind, t.lexeme.as_str())).collect()
    }

    #[test]
    fn body_extraction() {
        let doc = "\\documentclass{standalone}\n\\usepackage{tikz}\n\\begin{document}\n\\begin{tikzpicture}\\draw (0,0)--(1,1);\\end{tikzpicture}\n\\end{document}\n";
        assert_eq!(
            extract_document_body(doc),
            "\\begin{tikzpicture}\\draw (0,0)--(1,1);\\end{tikzpicture}"
        );
        let fragment = "\\begin{tikzpicture}\\end{tikzpicture}";
        assert_eq!(extract_document_body(fragment), fragment);
        let unterminated = "\\begin{document}\n\\draw (0,0);";
        assert_eq!(extract_document_body(unterminated), unterminated);
    }

    #[test]
    fn normalize_golden() {
        assert_eq!(normalize("a % note\nb"), "a\nb");
        assert_eq!(normalize("50\\% off"), "50\\% off");
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("a\\\\% comment"), "a\\\\");
        assert_eq!(normalize("  x \t  y  "), "x y");
        assert_eq!(normalize("a\n\n\n\n\nb"), "a\n\nb");
        assert_eq!(normalize("a\r\nb"), "a\nb");
        assert_eq!(normalize("% only\n\n x"), "x");
    }

    #[test]
    fn lex_draw_statement() {
        let s = lex("\\draw (0,0) -- (1,1);");
        use TokenKind::*;
        assert_eq!(
            shape(&s),
            vec![
                (Command, "\\draw"),
                (Punctuation, "("),
                (Number, "0"),
                (Punctuation, ","),
                (Number, "0"),
                (Punctuation, ")"),
                (Punctuation, "--"),
                (Punctuation, "("),
                (Number, "1"),
                (Punctuation, ","),
                (Number, "1"),
                (Punctuation, ")"),
                (Punctuation, ";"),
            ]
        );
    }

    #[test]
    fn lex_mixed_constructs() {
        use TokenKind::*;
        let s = lex("\\node[draw=red!50] at (0.5cm,-1.25) {$x_1$ node2}; \\% \\\\ .5 3.");
        assert_eq!(
            shape(&s),
            vec![
                (Command, "\\node"),
                (GroupDelimiter, "["),
                (TextWord, "draw"),
                (Punctuation, "="),
                (TextWord, "red"),
                (Punctuation, "!"),
                (Number, "50"),
                (GroupDelimiter, "]"),
                (TextWord, "at"),
                (Punctuation, "("),
                (Number, "0.5"),
                (TextWord, "cm"),
                (Punctuation, ","),
                (Punctuation, "-"),
                (Number, "1.25"),
                (Punctuation, ")"),
                (GroupDelimiter, "{"),
                (MathDelimiter, "$"),
                (TextWord, "x"),
                (Punctuation, "_"),
                (Number, "1"),
                (MathDelimiter, "$"),
                (TextWord, "node2"),
                (GroupDelimiter, "}"),
                (Punctuation, ";"),
                (Command, "\\%"),
                (Command, "\\\\"),
                (Number, ".5"),
                (Number, "3"),
                (Punctuation, "."),
            ]
        );
    }

    #[test]
    fn lex_empty_and_deterministic() {
        assert!(lex("").is_empty());
        assert_eq!(lex("\\node{x}"), lex("\\node{x}"));
    }

    #[test]
    fn lex_skips_stray_comments_and_keeps_unknown_bytes() {
        let s = lex("a % hidden\nb ° \\pgf@x");
        let lexemes: Vec<&str> = s.lexemes().collect();
        assert_eq!(lexemes, vec!["a", "b", "°", "\\pgf@x"]);
        assert_eq!(s.tokens[2].kind, TokenKind::Punctuation);
    }

    #[test]
    fn dependency_scan() {
        let found = scan_dependencies(
            "\\begin{tikzpicture}\\node {\\includegraphics[width=2cm]{x.png}};\\end{tikzpicture}",
            &DEFAULT_DEPENDENCY_MACROS,
        );
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].command, "includegraphics");
        assert_eq!(found[0].argument, "x.png");

        assert!(scan_dependencies("\\begin{tikzpicture}\\draw (0,0)--(1,1);\\end{tikzpicture}", &DEFAULT_DEPENDENCY_MACROS).is_empty());
        assert!(scan_dependencies("% \\input{old}", &DEFAULT_DEPENDENCY_MACROS).is_empty());

        let found = scan_dependencies("\\input preamble \\include{ch1} \\includeonly{x}", &["\\input", "include"]);
        let cmds: Vec<(&str, &str)> = found.iter().map(|f| (f.command.as_str(), f.argument.as_str())).collect();
        assert_eq!(cmds, vec![("input", "preamble"), ("include", "ch1")]);
    }

    fn stream_of(n: usize) -> TokenStream {
        let src: Vec<String> = (0..n).map(|i| alloc::format!("w{i}")).collect();
        lex(&src.join(" "))
    }

    #[test]
    fn shingle_counts() {
        assert!(shingles(&stream_of(49), 50).is_empty());
        assert_eq!(shingles(&stream_of(55), 50).len(), 6);
        assert_eq!(shingles(&stream_of(55), 50), shingles(&stream_of(55), 50));
        assert_eq!(shingles(&stream_of(3), 1).len(), 3);
    }

    fn tex_like() -> impl Strategy<Value = String> {
        let atoms = prop::sample::select(vec![
            "\\draw", "\\node", "{", "}", "[", "]", "$", "(", ")", ",", ";", "--", "0", "1.5",
            "abc", "x2", " ", "  ", "\t", "\n", "\n\n\n", "% c", "\\%", "\\\\", "é", "->", ".",
        ]);
        prop::collection::vec(atoms, 0..40).prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn lex_normalize_idempotent(src in tex_like()) {
            let once = normalize(&src);
            prop_assert_eq!(normalize(&once), once.clone());
            prop_assert_eq!(lex(&once), lex(&normalize(&once)));
        }

        #[test]
        fn lexemes_round_trip_modulo_whitespace(src in tex_like()) {
            let norm = normalize(&src);
            let s = lex(&norm);
            let joined: String = s.lexemes().collect::<Vec<_>>().join(" ");
            let strip = |x: &str| x.chars().filter(|c| !c.is_whitespace()).collect::<String>();
            prop_assert_eq!(strip(&joined), strip(&norm));
        }

        #[test]
        fn spans_strictly_increasing(src in tex_like()) {
            let norm = normalize(&src);
            let s = lex(&norm);
            for t in &s.tokens {
                prop_assert!(t.span.start < t.span.end);
                prop_assert_eq!(&norm[t.span.clone()], t.lexeme.as_str());
                prop_assert!(!t.lexeme.trim().is_empty());
                prop_assert!(!t.lexeme.starts_with('%'));
            }
            for w in s.tokens.windows(2) {
                prop_assert!(w[0].span.end <= w[1].span.start);
            }
        }

        #[test]
        fn shingle_cardinality_bound(n in 1usize..8, src in tex_like()) {
            let s = lex(&normalize(&src));
            let bound = if s.len() >= n { s.len() - n + 1 } else { 0 };
            prop_assert!(shingles(&s, n).len() <= bound);
        }

        #[test]
        fn commented_dependencies_invisible(name in prop::sample::select(DEFAULT_DEPENDENCY_MACROS.to_vec())) {
            let src = alloc::format!("\\draw (0,0);\n% \\{name}{{a.tex}}\n  %\\{name} b\n");
            prop_assert!(scan_dependencies(&src, &DEFAULT_DEPENDENCY_MACROS).is_empty());
        }
    }
}
