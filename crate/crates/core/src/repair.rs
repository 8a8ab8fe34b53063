//! Rule-based repair of common TikZ compile failures, driven by the
//! compiler log. The first matching rule is applied once; a rule whose edit
//! is already present does not match, so repairs are idempotent.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Packages whose absence only changes typography, so dropping the load is
/// harmless for a standalone figure.
pub const SAFE_TO_DROP_PACKAGES: &[&str] = &[
    "lmodern", "microtype", "fullpage", "geometry", "hyperref", "mathptmx", "times", "helvet",
    "palatino", "fourier", "libertine", "charter", "inconsolata", "sfmath", "fontenc", "inputenc",
    "babel", "csquotes", "cleveref",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provider {
    Library(&'static str),
    Package(&'static str),
}

/// Environments that come from a TikZ library or a TikZ-based package.
pub const ENVIRONMENT_PROVIDERS: &[(&str, Provider)] = &[
    ("tikzfadingfrompicture", Provider::Library("fadings")),
    ("tikzcd", Provider::Package("tikz-cd")),
    ("circuitikz", Provider::Package("circuitikz")),
    ("axis", Provider::Package("pgfplots")),
    ("semilogxaxis", Provider::Package("pgfplots")),
    ("semilogyaxis", Provider::Package("pgfplots")),
    ("loglogaxis", Provider::Package("pgfplots")),
    ("groupplot", Provider::Package("pgfplots")),
    ("forest", Provider::Package("forest")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepairRule {
    MissingLayer,
    DropUnavailablePackage,
    UndefinedEnvironment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repair {
    pub rule: RepairRule,
    pub code: String,
}

/// Text between the first pair of quote characters following `marker`.
/// Accepts `'x'`, `` `x' `` and `"x"` styles.
fn quoted_after<'a>(log: &'a str, marker: &str) -> Option<&'a str> {
    let start = log.find(marker)? + marker.len();
    let rest = &log[start..];
    let open = rest.find(['\'', '`', '"'])?;
    let inner = &rest[open + 1..];
    let close = inner.find(['\'', '"'])?;
    let name = &inner[..close];
    (!name.is_empty() && !name.contains('\n')).then_some(name)
}

fn layer_not_found(log: &str) -> Option<&str> {
    let mut search = log;
    while let Some(pos) = search.find("layer") {
        let tail = &search[pos..];
        let line_end = tail.find('\n').unwrap_or(tail.len());
        if tail[..line_end].contains("could not be found") {
            return quoted_after(tail, "layer");
        }
        search = &search[pos + 5..];
    }
    None
}

fn insert_before_document(code: &str, lines: &str) -> String {
    match code.find("\\begin{document}") {
        Some(at) => format!("{}{}\n{}", &code[..at], lines, &code[at..]),
        None => format!("{lines}\n{code}"),
    }
}

fn loaded_lists<'a>(code: &'a str, command: &str) -> Vec<&'a str> {
    let mut out = Vec::new();
    let mut rest = code;
    while let Some(pos) = rest.find(command) {
        let after = &rest[pos + command.len()..];
        let after = match after.strip_prefix('[') {
            Some(opts) => opts.find(']').map_or("", |e| &opts[e + 1..]),
            None => after,
        };
        if let Some(body) = after.strip_prefix('{') {
            if let Some(end) = body.find('}') {
                out.push(&body[..end]);
            }
        }
        rest = &rest[pos + command.len()..];
    }
    out
}

fn is_loaded(code: &str, command: &str, name: &str) -> bool {
    loaded_lists(code, command)
        .iter()
        .any(|list| list.split(',').any(|item| item.trim() == name))
}

fn repair_missing_layer(code: &str, log: &str) -> Option<String> {
    let layer = layer_not_found(log)?;
    let declare = format!("\\pgfdeclarelayer{{{layer}}}");
    let mut insert = Vec::new();
    if !is_loaded(code, "\\usetikzlibrary", "backgrounds") {
        insert.push(String::from("\\usetikzlibrary{backgrounds}"));
    }
    let mut code = String::from(code);
    if !code.contains(&declare) {
        insert.push(declare);
        match code.find("\\pgfsetlayers{") {
            Some(at) => code.insert_str(at + "\\pgfsetlayers{".len(), &format!("{layer},")),
            None => insert.push(format!("\\pgfsetlayers{{{layer},main}}")),
        }
    }
    if insert.is_empty() {
        return None;
    }
    Some(insert_before_document(&code, &insert.join("\n")))
}

fn missing_package(log: &str) -> Option<&str> {
    let start = log.find("File `")? + "File `".len();
    let rest = &log[start..];
    let end = rest.find('\'')?;
    let file = &rest[..end];
    rest[end..].starts_with("' not found").then_some(())?;
    file.strip_suffix(".sty")
}

fn repair_missing_package(code: &str, log: &str) -> Option<String> {
    let pkg = missing_package(log)?;
    if !SAFE_TO_DROP_PACKAGES.contains(&pkg) || !is_loaded(code, "\\usepackage", pkg) {
        return None;
    }
    let mut out = String::with_capacity(code.len());
    for line in code.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if trimmed.starts_with("\\usepackage") {
            let lists = loaded_lists(trimmed, "\\usepackage");
            if let Some(list) = lists.first() {
                let items: Vec<&str> = list.split(',').map(str::trim).collect();
                if items.contains(&pkg) {
                    let kept: Vec<&str> = items.into_iter().filter(|i| *i != pkg).collect();
                    if !kept.is_empty() {
                        out.push_str(&line.replacen(list, &kept.join(","), 1));
                    }
                    continue;
                }
            }
        }
        out.push_str(line);
    }
    Some(out)
}

fn undefined_environment(log: &str) -> Option<&str> {
    let start = log.find("Environment ")? + "Environment ".len();
    let rest = &log[start..];
    let end = rest.find(' ')?;
    rest[end..].starts_with(" undefined").then_some(&rest[..end])
}

fn repair_undefined_environment(code: &str, log: &str) -> Option<String> {
    let env = undefined_environment(log)?;
    let (_, provider) = ENVIRONMENT_PROVIDERS.iter().find(|(e, _)| *e == env)?;
    let line = match *provider {
        Provider::Library(lib) if !is_loaded(code, "\\usetikzlibrary", lib) => {
            format!("\\usetikzlibrary{{{lib}}}")
        }
        Provider::Package(pkg) if !is_loaded(code, "\\usepackage", pkg) => {
            format!("\\usepackage{{{pkg}}}")
        }
        _ => return None,
    };
    Some(insert_before_document(code, &line))
}

/// Applies the first rule that matches the log and would change the code.
pub fn builtin_repair(code: &str, log_excerpt: &str) -> Option<Repair> {
    let rules: [(RepairRule, fn(&str, &str) -> Option<String>); 3] = [
        (RepairRule::MissingLayer, repair_missing_layer),
        (RepairRule::DropUnavailablePackage, repair_missing_package),
        (RepairRule::UndefinedEnvironment, repair_undefined_environment),
    ];
    rules
        .iter()
        .find_map(|(rule, f)| f(code, log_excerpt).map(|code| Repair { rule: *rule, code }))
}
