//! Turning fragments into compilable documents and cutting compiler logs
//! down to the part a repair agent needs.

use alloc::string::String;
use alloc::vec::Vec;

use crate::texlex::normalize;

pub const STANDALONE_CLASS: &str = "\\documentclass[border=10pt]{standalone}";
pub const DEFAULT_EXCERPT_BYTES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DocumentError {
    #[error("no tikzpicture or document environment found")]
    NoDrawableContent,
}

/// True when the (comment-stripped) source declares a document environment.
pub fn is_full_document(source: &str) -> bool {
    let n = normalize(source);
    n.contains("\\begin{document}") || n.contains("\\documentclass")
}

fn is_preamble_line(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("\\usetikzlibrary") || t.starts_with("\\usepackage")
}

/// Wraps a bare tikzpicture fragment in a standalone document. Library and
/// package loads found in the fragment move to the preamble; full documents
/// are returned unchanged.
pub fn wrap_standalone(fragment: &str) -> Result<String, DocumentError> {
    if is_full_document(fragment) {
        return Ok(String::from(fragment));
    }
    if !normalize(fragment).contains("\\begin{tikzpicture}") {
        return Err(DocumentError::NoDrawableContent);
    }
    let (hoisted, body): (Vec<&str>, Vec<&str>) = fragment.lines().partition(|l| is_preamble_line(l));

    let mut out = String::with_capacity(fragment.len() + 128);
    out.push_str(STANDALONE_CLASS);
    out.push('\n');
    if !hoisted.iter().any(|l| l.trim() == "\\usepackage{tikz}") {
        out.push_str("\\usepackage{tikz}\n");
    }
    for line in hoisted {
        out.push_str(line.trim());
        out.push('\n');
    }
    out.push_str("\\begin{document}\n");
    out.push_str(body.join("\n").trim());
    out.push_str("\n\\end{document}\n");
    Ok(out)
}

fn floor_boundary(s: &str, mut i: usize) -> usize {
    i = i.min(s.len());
    while !s.is_char_boundary(i) {
        i -= 1;
    }
    i
}

fn ceil_boundary(s: &str, mut i: usize) -> usize {
    i = i.min(s.len());
    while !s.is_char_boundary(i) {
        i += 1;
    }
    i
}

/// A window of at most `max_bytes` around the first line that starts with
/// `!`, or the log tail when there is no such line. A quarter of the budget
/// goes to context before the error line.
pub fn extract_error_excerpt(full_log: &str, max_bytes: usize) -> String {
    if full_log.len() <= max_bytes {
        return String::from(full_log);
    }
    let mut offset = 0;
    let mut error_at = None;
    for line in full_log.split_inclusive('\n') {
        if line.starts_with('!') {
            error_at = Some(offset);
            break;
        }
        offset += line.len();
    }
    let (start, end) = match error_at {
        Some(at) => {
            let start = ceil_boundary(full_log, at.saturating_sub(max_bytes / 4));
            (start, floor_boundary(full_log, start + max_bytes))
        }
        None => {
            let start = ceil_boundary(full_log, full_log.len() - max_bytes);
            (start, full_log.len())
        }
    };
    String::from(&full_log[start..end])
}
