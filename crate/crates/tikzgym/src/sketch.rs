//! A deterministic interpreter for a subset of LaTeX/TikZ that draws
//! straight into a grayscale raster.
//!
//! It exists so the pipeline, the rollout simulator and the evaluation
//! harness can run without a TeX installation. It understands the document
//! skeleton, package and library loads, layers, scopes, `\foreach`, and the
//! common path operations (`--`, `-|`, `|-`, `rectangle`, `circle`,
//! `ellipse`, `arc`, `grid`, `.. controls ..`, `to`, inline nodes).
//! Failures are reported with TeX-style `!` log lines, including the real
//! pgf message for undeclared layers, so log-driven repair rules behave as
//! they would against pdflatex.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use tikzgym_core::hash::fingerprint_bytes;
use tikzgym_core::raster::{Channels, RasterImage};

const PT_PER_CM: f64 = 28.452_755_905_511_81;
const DEFAULT_LINE_WIDTH: f64 = 0.4 / PT_PER_CM;
const DEFAULT_INNER_SEP: f64 = 3.333_3 / PT_PER_CM;
const CHAR_WIDTH: f64 = 0.176;
const TEXT_HEIGHT: f64 = 0.3;

pub const SKETCH_PACKAGES: &[&str] = &[
    "tikz", "pgf", "xcolor", "color", "graphicx", "amsmath", "amssymb", "amsfonts", "amsthm",
    "mathtools", "bm", "calc", "ifthen", "etoolbox", "xparse", "lmodern", "microtype", "helvet",
    "times", "mathptmx", "fontenc", "inputenc", "babel", "geometry", "hyperref", "varwidth",
];

pub const SKETCH_LIBRARIES: &[&str] = &[
    "arrows", "arrows.meta", "positioning", "calc", "shapes", "shapes.geometric", "shapes.misc",
    "shapes.arrows", "shapes.symbols", "backgrounds", "fit", "patterns", "decorations",
    "decorations.pathmorphing", "decorations.pathreplacing", "decorations.markings", "matrix",
    "automata", "trees", "shadows", "fadings", "intersections", "through", "chains", "quotes",
    "angles", "3d", "babel", "topaths", "plotmarks", "petri", "mindmap", "spy",
];

/// Commands that are accepted and ignored, with the number of mandatory
/// brace groups they consume.
const PASSIVE_COMMANDS: &[(&str, usize)] = &[
    ("centering", 0), ("small", 0), ("footnotesize", 0), ("scriptsize", 0), ("tiny", 0),
    ("large", 0), ("Large", 0), ("LARGE", 0), ("huge", 0), ("normalsize", 0), ("bfseries", 0),
    ("itshape", 0), ("sffamily", 0), ("ttfamily", 0), ("rmfamily", 0), ("par", 0), ("noindent", 0),
    ("relax", 0), ("pagestyle", 1), ("thispagestyle", 1), ("hspace", 1), ("vspace", 1),
    ("textbf", 1), ("textit", 1), ("emph", 1), ("texttt", 1), ("text", 1), ("mbox", 1),
    ("selectfont", 0), ("\\", 0), (",", 0), (" ", 0), ("quad", 0), ("qquad", 0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct TexError {
    pub message: String,
    pub help: String,
    pub at: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SketchOutcome {
    Rendered { image: RasterImage, log: String },
    Failed { log: String },
    /// The source would not terminate under a real engine.
    Diverges { log: String },
}

type P = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Rectangle,
    Circle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct NodeBox {
    center: P,
    w: f64,
    h: f64,
    shape: Shape,
}

impl NodeBox {
    fn anchor(&self, name: &str) -> Option<P> {
        let (cx, cy) = self.center;
        let (hw, hh) = match self.shape {
            Shape::Rectangle => (self.w / 2.0, self.h / 2.0),
            Shape::Circle => (self.w / 2.0, self.w / 2.0),
        };
        let d = std::f64::consts::FRAC_1_SQRT_2;
        let diag = |sx: f64, sy: f64| match self.shape {
            Shape::Rectangle => (cx + sx * hw, cy + sy * hh),
            Shape::Circle => (cx + sx * hw * d, cy + sy * hh * d),
        };
        Some(match name {
            "center" => (cx, cy),
            "north" => (cx, cy + hh),
            "south" => (cx, cy - hh),
            "east" => (cx + hw, cy),
            "west" => (cx - hw, cy),
            "north east" => diag(1.0, 1.0),
            "north west" => diag(-1.0, 1.0),
            "south east" => diag(1.0, -1.0),
            "south west" => diag(-1.0, -1.0),
            _ => return None,
        })
    }

    /// Point where the ray from the centre towards `to` leaves the border.
    fn border_towards(&self, to: P) -> P {
        let (cx, cy) = self.center;
        let (dx, dy) = (to.0 - cx, to.1 - cy);
        let len = (dx * dx + dy * dy).sqrt();
        if len < 1e-12 {
            return self.center;
        }
        let t = match self.shape {
            Shape::Circle => self.w / 2.0 / len,
            Shape::Rectangle => {
                let tx = if dx.abs() > 1e-12 { self.w / 2.0 / dx.abs() } else { f64::INFINITY };
                let ty = if dy.abs() > 1e-12 { self.h / 2.0 / dy.abs() } else { f64::INFINITY };
                tx.min(ty)
            }
        };
        let t = t.min(1.0);
        (cx + dx * t, cy + dy * t)
    }
}

#[derive(Debug, Clone)]
enum Prim {
    Stroke { pts: Vec<P>, closed: bool, width: f64, ink: f32, alpha: f32 },
    Fill { poly: Vec<P>, ink: f32, alpha: f32 },
    Text { center: P, text: String, ink: f32 },
}

#[derive(Debug, Clone)]
struct Placed {
    layer: String,
    prim: Prim,
}

#[derive(Debug, Clone)]
struct Ctx {
    shift: P,
    scale: f64,
    layer: String,
    node_distance: f64,
    style: Style,
}

#[derive(Debug, Clone, Default)]
struct Style {
    draw: Option<f32>,
    fill: Option<f32>,
    text: Option<f32>,
    width: Option<f64>,
    opacity: Option<f32>,
}

impl Style {
    fn merged(&self, over: &Style) -> Style {
        Style {
            draw: over.draw.or(self.draw),
            fill: over.fill.or(self.fill),
            text: over.text.or(self.text),
            width: over.width.or(self.width),
            opacity: over.opacity.or(self.opacity),
        }
    }
}

#[derive(Debug, Default)]
struct Opts {
    style: Style,
    draw_flag: bool,
    fill_flag: bool,
    color: Option<f32>,
    shape: Option<Shape>,
    min_w: f64,
    min_h: f64,
    inner_sep: Option<f64>,
    radius: Option<f64>,
    x_radius: Option<f64>,
    y_radius: Option<f64>,
    start_angle: Option<f64>,
    end_angle: Option<f64>,
    step: Option<f64>,
    shift: P,
    scale: Option<f64>,
    anchor: Option<String>,
    place: Option<(String, Option<f64>, String)>,
    arrow_start: bool,
    arrow_end: bool,
    on_background: bool,
    node_distance: Option<f64>,
}

struct State {
    packages: BTreeSet<String>,
    libraries: BTreeSet<String>,
    declared_layers: BTreeSet<String>,
    layer_list: Vec<String>,
    colors: BTreeMap<String, f32>,
    macros: BTreeSet<String>,
    nodes: BTreeMap<String, NodeBox>,
    prims: Vec<Placed>,
    ctx: Vec<Ctx>,
    bbox: Option<(P, P)>,
    pictures: usize,
}

fn base_colors() -> BTreeMap<String, f32> {
    let rgb = [
        ("black", (0.0, 0.0, 0.0)),
        ("white", (1.0, 1.0, 1.0)),
        ("gray", (0.5, 0.5, 0.5)),
        ("lightgray", (0.75, 0.75, 0.75)),
        ("darkgray", (0.25, 0.25, 0.25)),
        ("red", (1.0, 0.0, 0.0)),
        ("green", (0.0, 1.0, 0.0)),
        ("blue", (0.0, 0.0, 1.0)),
        ("cyan", (0.0, 1.0, 1.0)),
        ("magenta", (1.0, 0.0, 1.0)),
        ("yellow", (1.0, 1.0, 0.0)),
        ("orange", (1.0, 0.5, 0.0)),
        ("purple", (0.75, 0.0, 0.25)),
        ("brown", (0.75, 0.5, 0.25)),
        ("teal", (0.0, 0.5, 0.5)),
        ("violet", (0.5, 0.0, 0.5)),
        ("olive", (0.5, 0.5, 0.0)),
        ("lime", (0.75, 1.0, 0.0)),
        ("pink", (1.0, 0.75, 0.75)),
    ];
    rgb.iter()
        .map(|(n, c)| (n.to_string(), luma(c.0, c.1, c.2)))
        .collect()
}

fn luma(r: f64, g: f64, b: f64) -> f32 {
    (0.299 * r + 0.587 * g + 0.114 * b) as f32
}

/// Blanks `%` comments with spaces so byte offsets keep pointing at the
/// original source.
fn blank_comments(src: &str) -> String {
    let mut out = String::with_capacity(src.len());
    let mut in_comment = false;
    let mut escaped = false;
    for ch in src.chars() {
        if ch == '\n' {
            in_comment = false;
            escaped = false;
            out.push('\n');
            continue;
        }
        if in_comment {
            for _ in 0..ch.len_utf8() {
                out.push(' ');
            }
            continue;
        }
        if ch == '%' && !escaped {
            in_comment = true;
            out.push(' ');
            continue;
        }
        escaped = ch == '\\' && !escaped;
        out.push(ch);
    }
    out
}

fn err(at: usize, message: impl Into<String>) -> TexError {
    TexError {
        message: message.into(),
        help: String::new(),
        at,
    }
}

fn undefined_cs(at: usize) -> TexError {
    TexError {
        message: "Undefined control sequence.".into(),
        help: String::new(),
        at,
    }
}

fn giving_up(at: usize) -> TexError {
    TexError {
        message: "Package tikz Error: Giving up on this path. Did you forget a semicolon?.".into(),
        help: "See the tikz package documentation for explanation.".into(),
        at,
    }
}

/// Cursor over a piece of text. Offsets reported in errors are absolute
/// document offsets, or a fixed origin for synthesized text.
struct Cur<'t> {
    s: &'t str,
    pos: usize,
    base: usize,
    fixed: bool,
}

impl<'t> Cur<'t> {
    fn new(s: &'t str, base: usize, fixed: bool) -> Self {
        Self { s, pos: 0, base, fixed }
    }

    fn abs(&self) -> usize {
        if self.fixed {
            self.base
        } else {
            self.base + self.pos
        }
    }

    fn abs_at(&self, local: usize) -> usize {
        if self.fixed {
            self.base
        } else {
            self.base + local
        }
    }

    fn rest(&self) -> &'t str {
        &self.s[self.pos..]
    }

    fn eof(&self) -> bool {
        self.pos >= self.s.len()
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.rest().starts_with(lit) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn eat_ws(&mut self, lit: &str) -> bool {
        let save = self.pos;
        self.skip_ws();
        if self.eat(lit) {
            true
        } else {
            self.pos = save;
            false
        }
    }

    /// Reads `\name` and returns `name` (letters, or one other character).
    fn command(&mut self) -> Option<&'t str> {
        let rest = self.rest();
        let tail = rest.strip_prefix('\\')?;
        let letters = tail
            .char_indices()
            .find(|(_, c)| !(c.is_ascii_alphabetic() || *c == '@'))
            .map_or(tail.len(), |(i, _)| i);
        let len = if letters > 0 {
            letters
        } else {
            tail.chars().next().map_or(0, char::len_utf8)
        };
        let name = &tail[..len];
        self.pos += 1 + len;
        Some(name)
    }

    /// Balanced group starting at the cursor; returns (inner, inner offset).
    fn group(&mut self, open: char, close: char) -> Option<(&'t str, usize)> {
        self.skip_ws();
        if self.peek() != Some(open) {
            return None;
        }
        let start = self.pos + open.len_utf8();
        let mut depth = 0usize;
        let mut escaped = false;
        for (i, c) in self.rest().char_indices() {
            if escaped {
                escaped = false;
                continue;
            }
            if c == '\\' {
                escaped = true;
            } else if c == open {
                depth += 1;
            } else if c == close {
                depth -= 1;
                if depth == 0 {
                    let end = self.pos + i;
                    let inner = &self.s[start..end];
                    self.pos = end + close.len_utf8();
                    return Some((inner, start));
                }
            }
        }
        None
    }

    fn required(&mut self) -> Result<(&'t str, usize), TexError> {
        let at = self.abs();
        self.group('{', '}').ok_or_else(|| TexError {
            message: "Missing { inserted.".into(),
            help: String::new(),
            at,
        })
    }

    fn optional(&mut self) -> Option<&'t str> {
        let save = self.pos;
        self.skip_ws();
        if self.peek() == Some('[') {
            if let Some((inner, _)) = self.group('[', ']') {
                return Some(inner);
            }
        }
        self.pos = save;
        None
    }
}

/// Splits on `sep` at nesting depth zero.
fn split_top(s: &str, sep: char) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '{' | '(' | '[' => depth += 1,
            '}' | ')' | ']' => depth -= 1,
            c if c == sep && depth == 0 => {
                out.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn strip_braces(s: &str) -> &str {
    let t = s.trim();
    t.strip_prefix('{')
        .and_then(|x| x.strip_suffix('}'))
        .unwrap_or(t)
        .trim()
}

// ---------------------------------------------------------------- numbers

struct Expr<'a> {
    s: &'a [u8],
    i: usize,
    src: &'a str,
}

fn math_error(src: &str, what: &str, at: usize) -> TexError {
    err(
        at,
        format!("Package PGF Math Error: Unknown function `{what}' (in '{src}')."),
    )
}

impl<'a> Expr<'a> {
    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn expr(&mut self, at: usize) -> Result<f64, TexError> {
        let mut v = self.term(at)?;
        loop {
            self.ws();
            match self.s.get(self.i) {
                Some(b'+') => {
                    self.i += 1;
                    v += self.term(at)?;
                }
                Some(b'-') => {
                    self.i += 1;
                    v -= self.term(at)?;
                }
                _ => return Ok(v),
            }
        }
    }

    fn term(&mut self, at: usize) -> Result<f64, TexError> {
        let mut v = self.factor(at)?;
        loop {
            self.ws();
            match self.s.get(self.i) {
                Some(b'*') => {
                    self.i += 1;
                    v *= self.factor(at)?;
                }
                Some(b'/') => {
                    self.i += 1;
                    v /= self.factor(at)?;
                }
                _ => return Ok(v),
            }
        }
    }

    fn factor(&mut self, at: usize) -> Result<f64, TexError> {
        self.ws();
        match self.s.get(self.i) {
            Some(b'-') => {
                self.i += 1;
                Ok(-self.factor(at)?)
            }
            Some(b'+') => {
                self.i += 1;
                self.factor(at)
            }
            Some(b'(') => {
                self.i += 1;
                let v = self.expr(at)?;
                self.ws();
                if self.s.get(self.i) != Some(&b')') {
                    return Err(math_error(self.src, ")", at));
                }
                self.i += 1;
                Ok(v * self.unit())
            }
            Some(c) if c.is_ascii_digit() || *c == b'.' => {
                let start = self.i;
                while self.i < self.s.len() && (self.s[self.i].is_ascii_digit() || self.s[self.i] == b'.') {
                    self.i += 1;
                }
                let text = std::str::from_utf8(&self.s[start..self.i]).unwrap_or("");
                let v: f64 = text.parse().map_err(|_| math_error(self.src, text, at))?;
                Ok(v * self.unit())
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.i;
                while self.i < self.s.len() && self.s[self.i].is_ascii_alphabetic() {
                    self.i += 1;
                }
                let name = std::str::from_utf8(&self.s[start..self.i]).unwrap_or("");
                self.ws();
                let arg = |me: &mut Self| -> Result<f64, TexError> {
                    if me.s.get(me.i) != Some(&b'(') {
                        return Err(math_error(me.src, name, at));
                    }
                    me.i += 1;
                    let v = me.expr(at)?;
                    me.ws();
                    if me.s.get(me.i) != Some(&b')') {
                        return Err(math_error(me.src, name, at));
                    }
                    me.i += 1;
                    Ok(v)
                };
                match name {
                    "pi" => Ok(PI),
                    "sqrt" => Ok(arg(self)?.sqrt()),
                    "sin" => Ok(arg(self)?.to_radians().sin()),
                    "cos" => Ok(arg(self)?.to_radians().cos()),
                    "abs" => Ok(arg(self)?.abs()),
                    _ => Err(math_error(self.src, name, at)),
                }
            }
            _ => Err(math_error(self.src, self.src.trim(), at)),
        }
    }

    /// Optional unit suffix, converted to centimetres.
    fn unit(&mut self) -> f64 {
        self.ws();
        let rest = &self.s[self.i..];
        for (u, f) in [("cm", 1.0), ("mm", 0.1), ("pt", 1.0 / PT_PER_CM), ("in", 2.54), ("em", 10.0 / PT_PER_CM), ("ex", 4.3 / PT_PER_CM)] {
            if rest.starts_with(u.as_bytes()) && !rest.get(2).is_some_and(|c| c.is_ascii_alphabetic()) {
                self.i += 2;
                return f;
            }
        }
        1.0
    }
}

fn eval_num(src: &str, at: usize) -> Result<f64, TexError> {
    let mut e = Expr { s: src.as_bytes(), i: 0, src };
    let v = e.expr(at)?;
    e.ws();
    if e.i != e.s.len() {
        let tail = &src[e.i..];
        return Err(math_error(src, tail.split_whitespace().next().unwrap_or(tail), at));
    }
    Ok(v)
}

// ---------------------------------------------------------------- state

impl State {
    fn new() -> Self {
        Self {
            packages: BTreeSet::new(),
            libraries: BTreeSet::new(),
            declared_layers: BTreeSet::from(["main".to_string()]),
            layer_list: vec!["main".into()],
            colors: base_colors(),
            macros: BTreeSet::new(),
            nodes: BTreeMap::new(),
            prims: Vec::new(),
            ctx: Vec::new(),
            bbox: None,
            pictures: 0,
        }
    }

    fn ctx(&self) -> &Ctx {
        self.ctx.last().expect("inside a picture")
    }

    fn grow(&mut self, p: P, pad: f64) {
        let (lo, hi) = self.bbox.get_or_insert((p, p));
        lo.0 = lo.0.min(p.0 - pad);
        lo.1 = lo.1.min(p.1 - pad);
        hi.0 = hi.0.max(p.0 + pad);
        hi.1 = hi.1.max(p.1 + pad);
    }

    fn place(&mut self, prim: Prim) {
        match &prim {
            Prim::Stroke { pts, width, .. } => {
                for p in pts.clone() {
                    self.grow(p, width / 2.0);
                }
            }
            Prim::Fill { poly, .. } => {
                for p in poly.clone() {
                    self.grow(p, 0.0);
                }
            }
            Prim::Text { .. } => {}
        }
        let layer = self.ctx().layer.clone();
        self.prims.push(Placed { layer, prim });
    }

    fn transform(&self, p: P) -> P {
        let c = self.ctx();
        (c.shift.0 + c.scale * p.0, c.shift.1 + c.scale * p.1)
    }

    fn color(&self, spec: &str, at: usize) -> Result<f32, TexError> {
        let parts: Vec<&str> = spec.trim().split('!').map(str::trim).collect();
        let lookup = |name: &str| {
            self.colors.get(name).copied().ok_or_else(|| TexError {
                message: format!("Package xcolor Error: Undefined color `{name}'."),
                help: String::new(),
                at,
            })
        };
        let mut value = lookup(parts[0])?;
        let mut i = 1;
        while i < parts.len() {
            let pct: f32 = parts[i]
                .parse()
                .map_err(|_| math_error(spec, parts[i], at))?;
            let other = match parts.get(i + 1) {
                Some(name) => lookup(name)?,
                None => 1.0,
            };
            value = (pct / 100.0) * value + (1.0 - pct / 100.0) * other;
            i += 2;
        }
        Ok(value)
    }

    fn is_color(&self, spec: &str) -> bool {
        let head = spec.split('!').next().unwrap_or("").trim();
        self.colors.contains_key(head)
    }

    fn parse_opts(&self, text: &str, at: usize) -> Result<Opts, TexError> {
        let mut o = Opts::default();
        for raw in split_top(text, ',') {
            let item = raw.trim();
            if item.is_empty() {
                continue;
            }
            let (key, val) = match item.split_once('=') {
                Some((k, v)) => (k.trim(), Some(v.trim()).filter(|v| !v.is_empty())),
                None => (item, None),
            };
            match (key, val) {
                ("draw", None) => o.draw_flag = true,
                ("draw", Some(c)) if c == "none" => o.style.draw = None,
                ("draw", Some(c)) => {
                    o.draw_flag = true;
                    o.style.draw = Some(self.color(c, at)?);
                }
                ("fill", None) => o.fill_flag = true,
                ("fill", Some(c)) if c == "none" => {}
                ("fill", Some(c)) => {
                    o.fill_flag = true;
                    o.style.fill = Some(self.color(c, at)?);
                }
                ("color", Some(c)) => o.color = Some(self.color(c, at)?),
                ("text", Some(c)) => o.style.text = Some(self.color(c, at)?),
                ("line width", Some(v)) => o.style.width = Some(eval_num(v, at)?),
                ("ultra thin", None) => o.style.width = Some(0.1 / PT_PER_CM),
                ("very thin", None) => o.style.width = Some(0.2 / PT_PER_CM),
                ("thin", None) => o.style.width = Some(0.4 / PT_PER_CM),
                ("semithick", None) => o.style.width = Some(0.6 / PT_PER_CM),
                ("thick", None) => o.style.width = Some(0.8 / PT_PER_CM),
                ("very thick", None) => o.style.width = Some(1.2 / PT_PER_CM),
                ("ultra thick", None) => o.style.width = Some(1.6 / PT_PER_CM),
                ("opacity" | "fill opacity" | "draw opacity", Some(v)) => {
                    o.style.opacity = Some(eval_num(v, at)?.clamp(0.0, 1.0) as f32)
                }
                ("circle", None) => o.shape = Some(Shape::Circle),
                ("rectangle", None) => o.shape = Some(Shape::Rectangle),
                ("shape", Some("circle")) => o.shape = Some(Shape::Circle),
                ("shape", Some(_)) => o.shape = Some(Shape::Rectangle),
                ("minimum size", Some(v)) => {
                    let s = eval_num(v, at)?;
                    o.min_w = s;
                    o.min_h = s;
                }
                ("minimum width", Some(v)) => o.min_w = eval_num(v, at)?,
                ("minimum height", Some(v)) => o.min_h = eval_num(v, at)?,
                ("inner sep", Some(v)) => o.inner_sep = Some(eval_num(v, at)?),
                ("radius", Some(v)) => o.radius = Some(eval_num(v, at)?),
                ("x radius", Some(v)) => o.x_radius = Some(eval_num(v, at)?),
                ("y radius", Some(v)) => o.y_radius = Some(eval_num(v, at)?),
                ("start angle", Some(v)) => o.start_angle = Some(eval_num(v, at)?),
                ("end angle", Some(v)) => o.end_angle = Some(eval_num(v, at)?),
                ("step", Some(v)) => o.step = Some(eval_num(v, at)?),
                ("xshift", Some(v)) => o.shift.0 += eval_num(v, at)?,
                ("yshift", Some(v)) => o.shift.1 += eval_num(v, at)?,
                ("shift", Some(v)) => {
                    let inner = strip_braces(v);
                    let inner = inner.strip_prefix('(').and_then(|x| x.strip_suffix(')')).unwrap_or(inner);
                    let parts = split_top(inner, ',');
                    if parts.len() != 2 {
                        return Err(math_error(v, v, at));
                    }
                    o.shift.0 += eval_num(parts[0], at)?;
                    o.shift.1 += eval_num(parts[1], at)?;
                }
                ("scale", Some(v)) => o.scale = Some(eval_num(v, at)?),
                ("anchor", Some(v)) => o.anchor = Some(v.to_string()),
                ("node distance", Some(v)) => o.node_distance = Some(eval_num(v, at)?),
                ("on background layer", None) => {
                    if !self.libraries.contains("backgrounds") {
                        return Err(unknown_key(item, at));
                    }
                    o.on_background = true;
                }
                (
                    dir @ ("above" | "below" | "left" | "right" | "above left" | "above right"
                    | "below left" | "below right"),
                    rel,
                ) => match rel {
                    None => o.anchor = Some(opposite_anchor(dir).to_string()),
                    Some(v) => {
                        let Some(of_at) = v.find("of ").filter(|i| *i == 0 || v[..*i].ends_with(' ')) else {
                            eval_num(v, at)?;
                            o.anchor = Some(opposite_anchor(dir).to_string());
                            continue;
                        };
                        if !self.libraries.contains("positioning") {
                            return Err(math_error(v, "of", at));
                        }
                        let dist = v[..of_at].trim();
                        let dist = if dist.is_empty() { None } else { Some(eval_num(dist, at)?) };
                        o.place = Some((dir.to_string(), dist, v[of_at + 3..].trim().to_string()));
                    }
                },
                (k, None) if is_arrow_spec(k) => {
                    let (s, e) = k.split_once('-').unwrap_or(("", ""));
                    o.arrow_start |= !s.is_empty();
                    o.arrow_end |= !e.is_empty();
                }
                (k, None) if self.is_color(k) => o.color = Some(self.color(k, at)?),
                _ => {}
            }
        }
        Ok(o)
    }
}

fn unknown_key(key: &str, at: usize) -> TexError {
    TexError {
        message: format!(
            "Package pgfkeys Error: I do not know the key '/tikz/{key}' and I am going to ignore it. Perhaps you misspelled it."
        ),
        help: "See the pgfkeys package documentation for explanation.".into(),
        at,
    }
}

fn is_arrow_spec(k: &str) -> bool {
    let Some((s, e)) = k.split_once('-') else { return false };
    let ok = |t: &str| {
        t.is_empty()
            || t.chars().all(|c| matches!(c, '<' | '>' | '|'))
            || ["latex", "stealth", "Latex", "Stealth", "{Latex}", "{Stealth}", "{Latex[]}", "{Stealth[]}", "Triangle", "{Triangle}"]
                .contains(&t)
    };
    !(s.is_empty() && e.is_empty()) && ok(s) && ok(e) && !k.contains(' ')
}

fn opposite_anchor(dir: &str) -> &'static str {
    match dir {
        "above" => "south",
        "below" => "north",
        "left" => "east",
        "right" => "west",
        "above left" => "south east",
        "above right" => "south west",
        "below left" => "north east",
        _ => "north west",
    }
}

// ---------------------------------------------------------------- document

fn read_names(list: &str) -> Vec<String> {
    list.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

struct Interp<'d> {
    doc: &'d str,
    st: State,
}

impl<'d> Interp<'d> {
    fn preamble(&mut self, cur: &mut Cur<'_>) -> Result<(), TexError> {
        let mut saw_class = false;
        loop {
            cur.skip_ws();
            if cur.eof() {
                return Err(err(cur.abs(), "LaTeX Error: Missing \\begin{document}."));
            }
            let at = cur.abs();
            if cur.peek() != Some('\\') {
                return Err(err(at, "LaTeX Error: Missing \\begin{document}."));
            }
            let name = cur.command().unwrap_or("");
            match name {
                "documentclass" => {
                    cur.optional();
                    cur.required()?;
                    saw_class = true;
                }
                _ if !saw_class => {
                    return Err(err(at, "LaTeX Error: Missing \\begin{document}."));
                }
                "usepackage" | "RequirePackage" => {
                    cur.optional();
                    let (list, _) = cur.required()?;
                    for pkg in read_names(list) {
                        if !SKETCH_PACKAGES.contains(&pkg.as_str()) {
                            return Err(TexError {
                                message: format!("LaTeX Error: File `{pkg}.sty' not found."),
                                help: "Type X to quit or <RETURN> to proceed,".into(),
                                at,
                            });
                        }
                        self.st.packages.insert(pkg);
                    }
                }
                "begin" => {
                    let (env, _) = cur.required()?;
                    if env.trim() == "document" {
                        return Ok(());
                    }
                    return Err(err(at, "LaTeX Error: Missing \\begin{document}."));
                }
                _ => self.shared_command(name, cur, at, true)?,
            }
        }
    }

    fn tikz_loaded(&self) -> bool {
        self.st.packages.contains("tikz")
    }

    /// Commands valid in both preamble and body.
    fn shared_command(&mut self, name: &str, cur: &mut Cur<'_>, at: usize, preamble: bool) -> Result<(), TexError> {
        match name {
            "usetikzlibrary" if self.tikz_loaded() => {
                let (list, _) = cur.required()?;
                for lib in read_names(list) {
                    if !SKETCH_LIBRARIES.contains(&lib.as_str()) {
                        return Err(TexError {
                            message: format!(
                                "Package tikz Error: I did not find the tikz library '{lib}'. I looked for files named tikzlibrary{lib}.code.tex and pgflibrary{lib}.code.tex, but neither could be found in the current texmf trees.."
                            ),
                            help: "See the tikz package documentation for explanation.".into(),
                            at,
                        });
                    }
                    if lib == "backgrounds" && !self.st.libraries.contains("backgrounds") {
                        self.st.declared_layers.insert("background".into());
                        self.st.declared_layers.insert("foreground".into());
                        if self.st.layer_list == ["main"] {
                            self.st.layer_list =
                                vec!["background".into(), "main".into(), "foreground".into()];
                        }
                    }
                    self.st.libraries.insert(lib);
                }
            }
            "pgfdeclarelayer" if self.tikz_loaded() => {
                let (layer, _) = cur.required()?;
                self.st.declared_layers.insert(layer.trim().to_string());
            }
            "pgfsetlayers" if self.tikz_loaded() => {
                let (list, _) = cur.required()?;
                let layers = read_names(list);
                for l in &layers {
                    if !self.st.declared_layers.contains(l) {
                        return Err(layer_error(l, at));
                    }
                }
                self.st.layer_list = layers;
            }
            "definecolor" => {
                let (cname, _) = cur.required()?;
                let (model, _) = cur.required()?;
                let (spec, _) = cur.required()?;
                let v = parse_color_model(model.trim(), spec, at)?;
                self.st.colors.insert(cname.trim().to_string(), v);
            }
            "colorlet" => {
                let (cname, _) = cur.required()?;
                let (spec, _) = cur.required()?;
                let v = self.st.color(spec, at)?;
                self.st.colors.insert(cname.trim().to_string(), v);
            }
            "tikzset" | "pgfplotsset" if self.tikz_loaded() => {
                cur.required()?;
            }
            "tikzstyle" if self.tikz_loaded() => {
                cur.required()?;
                cur.skip_ws();
                cur.eat("=");
                cur.optional();
            }
            "newcommand" | "renewcommand" | "providecommand" => {
                cur.skip_ws();
                let macro_name = if cur.peek() == Some('{') {
                    let (inner, _) = cur.required()?;
                    inner.trim().trim_start_matches('\\').to_string()
                } else {
                    cur.command().unwrap_or("").to_string()
                };
                cur.optional();
                cur.optional();
                cur.required()?;
                self.st.macros.insert(macro_name);
            }
            "def" => {
                let macro_name = cur.command().unwrap_or("").to_string();
                while !cur.eof() && cur.peek() != Some('{') {
                    cur.pos += cur.peek().map_or(1, char::len_utf8);
                }
                cur.required()?;
                self.st.macros.insert(macro_name);
            }
            "IfFileExists" => {
                cur.required()?;
                cur.required()?;
                let (no, off) = cur.required()?;
                let mut sub = Cur::new(no, cur.abs_at(off), cur.fixed);
                if preamble {
                    while !sub.eof() {
                        sub.skip_ws();
                        if sub.eof() {
                            break;
                        }
                        let a = sub.abs();
                        match sub.command() {
                            Some(n) => self.shared_command(n, &mut sub, a, true)?,
                            None => sub.pos += sub.peek().map_or(1, char::len_utf8),
                        }
                    }
                } else if self.st.ctx.is_empty() {
                    self.body(&mut sub, None)?;
                } else {
                    self.statements(&mut sub, "")?;
                }
            }
            "includegraphics" => {
                cur.optional();
                let (file, _) = cur.required()?;
                return Err(TexError {
                    message: format!("LaTeX Error: File `{}' not found.", file.trim()),
                    help: "Type X to quit or <RETURN> to proceed,".into(),
                    at,
                });
            }
            "input" | "include" | "lstinputlisting" | "import" | "bibliography" => {
                cur.optional();
                let (file, _) = cur.required()?;
                return Err(TexError {
                    message: format!("LaTeX Error: File `{}.tex' not found.", file.trim()),
                    help: "Type X to quit or <RETURN> to proceed,".into(),
                    at,
                });
            }
            "loop" => return Err(err(at, "__diverges__")),
            n if self.st.macros.contains(n) => {}
            n => match PASSIVE_COMMANDS.iter().find(|(p, _)| *p == n) {
                Some((_, groups)) => {
                    for _ in 0..*groups {
                        cur.required()?;
                    }
                }
                None => return Err(undefined_cs(at)),
            },
        }
        Ok(())
    }

    /// Body-level material up to `\end{stop}` (or the end of the cursor).
    fn body(&mut self, cur: &mut Cur<'_>, stop: Option<&str>) -> Result<bool, TexError> {
        loop {
            while let Some(c) = cur.peek() {
                if c == '\\' {
                    break;
                }
                if c == '{' || c == '}' || c == '$' || !c.is_whitespace() {
                    // Plain text and grouping are typeset no-ops here.
                }
                cur.pos += c.len_utf8();
            }
            if cur.eof() {
                return Ok(false);
            }
            let at = cur.abs();
            let name = cur.command().unwrap_or("");
            match name {
                "begin" => {
                    let (env, _) = cur.required()?;
                    match env.trim() {
                        "tikzpicture" if self.tikz_loaded() => self.picture(cur, at)?,
                        "center" | "flushleft" | "flushright" | "minipage" | "figure" | "varwidth" => {
                            cur.optional();
                            if env.trim() == "minipage" || env.trim() == "varwidth" {
                                cur.required()?;
                            }
                        }
                        other => {
                            return Err(TexError {
                                message: format!("LaTeX Error: Environment {other} undefined."),
                                help: "See the LaTeX manual or LaTeX Companion for explanation.".into(),
                                at,
                            })
                        }
                    }
                }
                "end" => {
                    let (env, _) = cur.required()?;
                    if Some(env.trim()) == stop {
                        return Ok(true);
                    }
                }
                _ => self.shared_command(name, cur, at, false)?,
            }
        }
    }

    // ------------------------------------------------------------ picture

    fn picture(&mut self, cur: &mut Cur<'_>, at: usize) -> Result<(), TexError> {
        let opts_text = cur.optional().unwrap_or("");
        let o = self.st.parse_opts(opts_text, at)?;
        let mut style = Style::default();
        style = style.merged(&o.style);
        if let Some(c) = o.color {
            style.draw = Some(c);
            style.text = Some(c);
        }
        self.st.ctx.push(Ctx {
            shift: o.shift,
            scale: o.scale.unwrap_or(1.0),
            layer: "main".into(),
            node_distance: o.node_distance.unwrap_or(1.0),
            style,
        });
        self.st.pictures += 1;
        let closed = self.statements(cur, "tikzpicture")?;
        self.st.ctx.pop();
        if !closed {
            return Err(TexError {
                message: "Emergency stop.".into(),
                help: "*** (job aborted, no legal \\end found)".into(),
                at,
            });
        }
        Ok(())
    }

    /// Picture statements until `\end{stop}`; returns whether it was found.
    fn statements(&mut self, cur: &mut Cur<'_>, stop: &str) -> Result<bool, TexError> {
        loop {
            cur.skip_ws();
            if cur.eof() {
                return Ok(false);
            }
            let at = cur.abs();
            if cur.peek() == Some(';') {
                cur.pos += 1;
                continue;
            }
            if cur.peek() != Some('\\') {
                return Err(giving_up(at));
            }
            let name = cur.command().unwrap_or("");
            match name {
                "end" => {
                    let (env, _) = cur.required()?;
                    let env = env.trim();
                    if env == stop {
                        return Ok(true);
                    }
                    return Err(TexError {
                        message: format!("LaTeX Error: \\begin{{{stop}}} ended by \\end{{{env}}}."),
                        help: "See the LaTeX manual or LaTeX Companion for explanation.".into(),
                        at,
                    });
                }
                "begin" => {
                    let (env, _) = cur.required()?;
                    match env.trim() {
                        "scope" => {
                            let opts = cur.optional().unwrap_or("");
                            self.push_scope(opts, at)?;
                            let closed = self.statements(cur, "scope")?;
                            self.st.ctx.pop();
                            if !closed {
                                return Ok(false);
                            }
                        }
                        "pgfonlayer" => {
                            let (layer, _) = cur.required()?;
                            let layer = layer.trim().to_string();
                            if !self.st.declared_layers.contains(&layer) {
                                return Err(layer_error(&layer, at));
                            }
                            let mut ctx = self.st.ctx().clone();
                            ctx.layer = layer;
                            self.st.ctx.push(ctx);
                            let closed = self.statements(cur, "pgfonlayer")?;
                            self.st.ctx.pop();
                            if !closed {
                                return Ok(false);
                            }
                        }
                        other => {
                            return Err(TexError {
                                message: format!("LaTeX Error: Environment {other} undefined."),
                                help: "See the LaTeX manual or LaTeX Companion for explanation.".into(),
                                at,
                            })
                        }
                    }
                }
                "draw" => self.path(cur, at, "draw=")?,
                "fill" => self.path(cur, at, "fill=")?,
                "filldraw" => self.path(cur, at, "draw=,fill=")?,
                "path" | "clip" | "useasboundingbox" => self.path(cur, at, "")?,
                "shade" | "shadedraw" => self.path(cur, at, "fill=gray!50")?,
                "node" => self.path_from(cur, at, "", "node")?,
                "coordinate" => self.path_from(cur, at, "", "coordinate")?,
                "foreach" => self.foreach(cur, at)?,
                _ => self.shared_command(name, cur, at, false)?,
            }
        }
    }

    fn push_scope(&mut self, opts: &str, at: usize) -> Result<(), TexError> {
        let o = self.st.parse_opts(opts, at)?;
        let parent = self.st.ctx().clone();
        let scale = o.scale.unwrap_or(1.0);
        let mut style = parent.style.merged(&o.style);
        if let Some(c) = o.color {
            style.draw = Some(c);
            style.text = Some(c);
        }
        self.st.ctx.push(Ctx {
            shift: (
                parent.shift.0 + parent.scale * o.shift.0,
                parent.shift.1 + parent.scale * o.shift.1,
            ),
            scale: parent.scale * scale,
            layer: if o.on_background { "background".into() } else { parent.layer.clone() },
            node_distance: o.node_distance.unwrap_or(parent.node_distance),
            style,
        });
        Ok(())
    }

    fn foreach(&mut self, cur: &mut Cur<'_>, at: usize) -> Result<(), TexError> {
        let mut vars = Vec::new();
        loop {
            cur.skip_ws();
            match cur.command() {
                Some(v) => vars.push(v.to_string()),
                None => return Err(undefined_cs(at)),
            }
            cur.skip_ws();
            if !cur.eat("/") {
                break;
            }
        }
        cur.optional();
        if !cur.eat_ws("in") {
            return Err(err(at, "Package pgffor Error: Invalid \\foreach syntax."));
        }
        let (list, _) = cur.required()?;
        let items = expand_list(list, at)?;
        cur.skip_ws();
        let body: String = if cur.peek() == Some('{') {
            cur.required()?.0.to_string()
        } else {
            let start = cur.pos;
            let mut depth = 0i32;
            while let Some(c) = cur.peek() {
                cur.pos += c.len_utf8();
                match c {
                    '{' | '[' | '(' => depth += 1,
                    '}' | ']' | ')' => depth -= 1,
                    ';' if depth == 0 => break,
                    _ => {}
                }
            }
            cur.s[start..cur.pos].to_string()
        };
        let origin = if cur.fixed { cur.base } else { at };
        for item in items {
            let values = split_top(&item, '/');
            let mut text = body.clone();
            for (k, var) in vars.iter().enumerate() {
                let value = values.get(k).or(values.last()).map_or("", |v| v.trim());
                text = substitute_macro(&text, var, value);
            }
            let mut sub = Cur::new(&text, origin, true);
            let ended = self.statements(&mut sub, "\u{0}")?;
            if ended {
                return Err(giving_up(origin));
            }
        }
        Ok(())
    }

    // ------------------------------------------------------------ paths

    fn path(&mut self, cur: &mut Cur<'_>, at: usize, implied: &str) -> Result<(), TexError> {
        self.path_from(cur, at, implied, "")
    }

    fn path_from(&mut self, cur: &mut Cur<'_>, at: usize, implied: &str, lead: &str) -> Result<(), TexError> {
        let mut opts_text = String::from(implied);
        let mut path = PathBuilder::default();
        let mut first_opts = true;
        let mut pending_lead = if lead.is_empty() { None } else { Some(lead) };
        let mut o = Opts::default();
        loop {
            cur.skip_ws();
            if first_opts {
                if let Some(t) = cur.optional() {
                    opts_text.push(',');
                    opts_text.push_str(t);
                }
                o = self.st.parse_opts(&opts_text, at)?;
                first_opts = false;
                continue;
            }
            if let Some(kind) = pending_lead.take() {
                self.inline_node(cur, at, kind, &mut path, &o)?;
                continue;
            }
            if cur.eof() {
                return Err(giving_up(at));
            }
            let here = cur.abs();
            let rest = cur.rest();
            if cur.eat(";") {
                break;
            }
            if rest.starts_with("\\end") || rest.starts_with("\\draw") || rest.starts_with("\\node") {
                return Err(giving_up(here));
            }
            if rest.starts_with('(') || rest.starts_with("+(") || rest.starts_with("++(") {
                let p = self.coordinate(cur, &path, here)?;
                path.move_to(p);
            } else if cur.eat("--") {
                cur.skip_ws();
                if cur.eat("cycle") {
                    path.close();
                } else {
                    let p = self.coordinate(cur, &path, here)?;
                    path.line_to(p);
                }
            } else if cur.eat("-|") || cur.eat("|-") {
                let horizontal_first = cur.s[cur.pos - 2..].starts_with("-|");
                let p = self.coordinate(cur, &path, here)?;
                let c = path.current.clone().ok_or_else(|| giving_up(here))?;
                let corner = if horizontal_first { (p.pos.0, c.pos.1) } else { (c.pos.0, p.pos.1) };
                path.line_to(PathPt { pos: corner, node: None });
                path.line_to(p);
            } else if cur.eat("to") {
                cur.optional();
                cur.skip_ws();
                if cur.eat("cycle") {
                    path.close();
                } else {
                    let p = self.coordinate(cur, &path, here)?;
                    path.line_to(p);
                }
            } else if cur.eat("..") {
                cur.skip_ws();
                if !cur.eat("controls") {
                    return Err(giving_up(here));
                }
                let c1 = self.coordinate(cur, &path, here)?;
                let c2 = if cur.eat_ws("and") { self.coordinate(cur, &path, here)? } else { c1.clone() };
                cur.skip_ws();
                if !cur.eat("..") {
                    return Err(giving_up(here));
                }
                let end = self.coordinate(cur, &path, here)?;
                let start = path.current.clone().ok_or_else(|| giving_up(here))?;
                for k in 1..=24 {
                    let t = k as f64 / 24.0;
                    let u = 1.0 - t;
                    let b = |a: f64, b: f64, c: f64, d: f64| {
                        u * u * u * a + 3.0 * u * u * t * b + 3.0 * u * t * t * c + t * t * t * d
                    };
                    let p = (
                        b(start.pos.0, c1.pos.0, c2.pos.0, end.pos.0),
                        b(start.pos.1, c1.pos.1, c2.pos.1, end.pos.1),
                    );
                    path.line_to(PathPt { pos: p, node: None });
                }
            } else if cur.eat("rectangle") {
                let p = self.coordinate(cur, &path, here)?;
                let c = path.current.clone().ok_or_else(|| giving_up(here))?;
                let (a, b) = (c.pos, p.pos);
                path.polygon(vec![a, (b.0, a.1), b, (a.0, b.1)]);
                path.current = Some(p);
            } else if cur.eat("circle") || cur.eat("ellipse") {
                let c = path.current.clone().ok_or_else(|| giving_up(here))?;
                let local = cur.optional().map(|t| self.st.parse_opts(t, here)).transpose()?;
                let scale = self.st.ctx().scale;
                let (rx, ry) = if let Some((inner, _)) = { cur.skip_ws(); if cur.peek() == Some('(') { cur.group('(', ')') } else { None } } {
                    match inner.split_once(" and ") {
                        Some((a, b)) => (eval_num(a, here)?, eval_num(b, here)?),
                        None => {
                            let r = eval_num(inner, here)?;
                            (r, r)
                        }
                    }
                } else {
                    let l = local.as_ref();
                    let r = l.and_then(|l| l.radius).or(o.radius).unwrap_or(0.0);
                    (
                        l.and_then(|l| l.x_radius).or(o.x_radius).unwrap_or(r),
                        l.and_then(|l| l.y_radius).or(o.y_radius).unwrap_or(r),
                    )
                };
                path.polygon(ellipse(c.pos, rx * scale, ry * scale, 0.0, 360.0));
            } else if cur.eat("arc") {
                let c = path.current.clone().ok_or_else(|| giving_up(here))?;
                let (start, end, r) = if let Some(t) = cur.optional() {
                    let l = self.st.parse_opts(t, here)?;
                    match (l.start_angle, l.end_angle, l.radius) {
                        (Some(s), Some(e), Some(r)) => (s, e, r),
                        _ => return Err(giving_up(here)),
                    }
                } else {
                    let (inner, _) = cur.group('(', ')').ok_or_else(|| giving_up(here))?;
                    let parts: Vec<&str> = inner.split(':').collect();
                    if parts.len() != 3 {
                        return Err(giving_up(here));
                    }
                    (eval_num(parts[0], here)?, eval_num(parts[1], here)?, eval_num(parts[2], here)?)
                };
                let r = r * self.st.ctx().scale;
                let center = (c.pos.0 - r * start.to_radians().cos(), c.pos.1 - r * start.to_radians().sin());
                let pts = ellipse(center, r, r, start, end);
                for p in pts.into_iter().skip(1) {
                    path.line_to(PathPt { pos: p, node: None });
                }
            } else if cur.eat("grid") {
                let local = cur.optional().map(|t| self.st.parse_opts(t, here)).transpose()?;
                let p = self.coordinate(cur, &path, here)?;
                let c = path.current.clone().ok_or_else(|| giving_up(here))?;
                let step = local.and_then(|l| l.step).or(o.step).unwrap_or(1.0) * self.st.ctx().scale;
                path.grid(c.pos, p.pos, step);
                path.current = Some(p);
            } else if cur.eat("node") {
                self.inline_node(cur, at, "node", &mut path, &o)?;
            } else if cur.eat("coordinate") {
                self.inline_node(cur, at, "coordinate", &mut path, &o)?;
            } else if cur.eat("cycle") {
                path.close();
            } else {
                return Err(giving_up(here));
            }
        }
        self.emit_path(path, &o);
        Ok(())
    }

    fn coordinate(&self, cur: &mut Cur<'_>, path: &PathBuilder, at: usize) -> Result<PathPt, TexError> {
        cur.skip_ws();
        let rel = if cur.eat("++") {
            2
        } else if cur.eat("+") {
            1
        } else {
            0
        };
        let (inner, _) = cur.group('(', ')').ok_or_else(|| giving_up(at))?;
        let inner = inner.trim();
        let cannot = || TexError {
            message: "Package tikz Error: Cannot parse this coordinate.".into(),
            help: "See the tikz package documentation for explanation.".into(),
            at,
        };
        if inner.starts_with('$') {
            return Err(cannot());
        }
        let parts = split_top(inner, ',');
        let local = if parts.len() == 2 {
            Some((eval_num(parts[0], at)?, eval_num(parts[1], at)?))
        } else if let Some((a, r)) = inner.split_once(':') {
            let (a, r) = (eval_num(a, at)?, eval_num(r, at)?);
            Some((r * a.to_radians().cos(), r * a.to_radians().sin()))
        } else {
            None
        };
        if let Some(v) = local {
            let scale = self.st.ctx().scale;
            if rel > 0 {
                let base = path.current.clone().ok_or_else(cannot)?;
                return Ok(PathPt {
                    pos: (base.pos.0 + scale * v.0, base.pos.1 + scale * v.1),
                    node: None,
                });
            }
            return Ok(PathPt { pos: self.st.transform(v), node: None });
        }
        let (name, anchor) = match inner.split_once('.') {
            Some((n, a)) if !a.is_empty() && a.chars().all(|c| c.is_ascii_alphabetic() || c == ' ') => (n.trim(), Some(a.trim())),
            _ => (inner, None),
        };
        let node = self.st.nodes.get(name).ok_or_else(|| TexError {
            message: format!("Package pgf Error: No shape named `{name}' is known."),
            help: "See the pgf package documentation for explanation.".into(),
            at,
        })?;
        match anchor {
            Some(a) => Ok(PathPt { pos: node.anchor(a).ok_or_else(cannot)?, node: None }),
            None => Ok(PathPt { pos: node.center, node: Some(*node) }),
        }
    }

    fn inline_node(&mut self, cur: &mut Cur<'_>, at: usize, kind: &str, path: &mut PathBuilder, path_opts: &Opts) -> Result<(), TexError> {
        let mut opts_text = String::new();
        let mut name = None;
        let mut pos = None;
        loop {
            cur.skip_ws();
            if let Some(t) = cur.optional() {
                opts_text.push(',');
                opts_text.push_str(t);
            } else if cur.peek() == Some('(') {
                let (n, _) = cur.group('(', ')').ok_or_else(|| giving_up(at))?;
                name = Some(n.trim().to_string());
            } else if cur.rest().starts_with("at") && !cur.rest()[2..].starts_with(|c: char| c.is_ascii_alphabetic()) {
                cur.pos += 2;
                pos = Some(self.coordinate(cur, path, at)?.pos);
            } else {
                break;
            }
        }
        let o = self.st.parse_opts(&opts_text, at)?;
        let text = if kind == "node" {
            cur.skip_ws();
            let (t, _) = cur.required()?;
            Some(t.to_string())
        } else {
            None
        };
        let mut center = pos
            .or_else(|| path.current.as_ref().map(|c| c.pos))
            .unwrap_or_else(|| self.st.transform((0.0, 0.0)));
        let ctx = self.st.ctx().clone();
        let text_len = text.as_deref().map_or(0, visible_len);
        let inner = o.inner_sep.unwrap_or(if kind == "node" { DEFAULT_INNER_SEP } else { 0.0 });
        let tw = text_len as f64 * CHAR_WIDTH;
        let th = if text_len > 0 { TEXT_HEIGHT } else { 0.0 };
        let shape = o.shape.unwrap_or(Shape::Rectangle);
        let (w, h) = match shape {
            Shape::Rectangle => ((tw + 2.0 * inner).max(o.min_w), (th + 2.0 * inner).max(o.min_h)),
            Shape::Circle => {
                let d = (2.0 * ((tw / 2.0 + inner).powi(2) + (th / 2.0 + inner).powi(2)).sqrt()).max(o.min_w.max(o.min_h));
                (d, d)
            }
        };
        if let Some((dir, dist, target)) = &o.place {
            let (tname, tanchor) = target.split_once('.').map_or((target.as_str(), None), |(a, b)| (a, Some(b)));
            let t = *self.st.nodes.get(tname.trim()).ok_or_else(|| TexError {
                message: format!("Package pgf Error: No shape named `{tname}' is known."),
                help: "See the pgf package documentation for explanation.".into(),
                at,
            })?;
            let dist = dist.unwrap_or(ctx.node_distance) * ctx.scale;
            let (dx, dy) = dir_vector(dir);
            let from = match tanchor {
                Some(a) => t.anchor(a.trim()).unwrap_or(t.center),
                None => t.anchor(opposite_anchor_of(dir)).unwrap_or(t.center),
            };
            center = (
                from.0 + dx * (dist + w / 2.0),
                from.1 + dy * (dist + h / 2.0),
            );
        } else if let Some(a) = &o.anchor {
            let probe = NodeBox { center: (0.0, 0.0), w, h, shape };
            if let Some(off) = probe.anchor(a) {
                center = (center.0 - off.0, center.1 - off.1);
            }
        }
        let nb = NodeBox { center, w, h, shape };
        if let Some(n) = name {
            self.st.nodes.insert(n, nb);
        }
        if kind == "coordinate" {
            return Ok(());
        }
        let style = ctx.style.merged(&path_opts.style).merged(&o.style);
        let alpha = style.opacity.unwrap_or(1.0);
        let outline = if shape == Shape::Circle {
            ellipse(center, w / 2.0, w / 2.0, 0.0, 360.0)
        } else {
            let (hw, hh) = (w / 2.0, h / 2.0);
            vec![
                (center.0 - hw, center.1 - hh),
                (center.0 + hw, center.1 - hh),
                (center.0 + hw, center.1 + hh),
                (center.0 - hw, center.1 + hh),
            ]
        };
        if o.fill_flag {
            let ink = style.fill.or(o.color).unwrap_or(0.0);
            self.st.place(Prim::Fill { poly: outline.clone(), ink, alpha });
        }
        if o.draw_flag {
            let ink = style.draw.or(o.color).unwrap_or(0.0);
            let width = style.width.unwrap_or(DEFAULT_LINE_WIDTH) * ctx.scale.max(0.0).sqrt().max(1.0);
            self.st.place(Prim::Stroke { pts: outline, closed: true, width, ink, alpha });
        }
        self.st.grow(center, 0.0);
        self.st.grow((center.0 - w / 2.0, center.1 - h / 2.0), 0.0);
        self.st.grow((center.0 + w / 2.0, center.1 + h / 2.0), 0.0);
        if let Some(t) = text {
            if text_len > 0 {
                let ink = o.style.text.or(o.color).or(style.text).unwrap_or(0.0);
                self.st.place(Prim::Text { center, text: visible_text(&t), ink });
            }
        }
        Ok(())
    }

    fn emit_path(&mut self, path: PathBuilder, o: &Opts) {
        let ctx = self.st.ctx().clone();
        let style = ctx.style.merged(&o.style);
        let alpha = style.opacity.unwrap_or(1.0);
        let width = style.width.unwrap_or(DEFAULT_LINE_WIDTH);
        let subpaths = path.finish();
        if o.fill_flag {
            let ink = style.fill.or(o.color).unwrap_or(0.0);
            for sp in &subpaths {
                if sp.pts.len() >= 3 {
                    self.st.place(Prim::Fill { poly: sp.pts.clone(), ink, alpha });
                }
            }
        }
        if o.draw_flag {
            let ink = o.color.or(style.draw).unwrap_or(0.0);
            for sp in &subpaths {
                if sp.pts.len() >= 2 {
                    self.st.place(Prim::Stroke { pts: sp.pts.clone(), closed: sp.closed, width, ink, alpha });
                }
            }
            let head = 0.2 + 4.0 * width;
            if let Some(last) = subpaths.last().filter(|s| s.pts.len() >= 2 && !s.closed) {
                let n = last.pts.len();
                if o.arrow_end {
                    let tri = arrow_head(last.pts[n - 2], last.pts[n - 1], head);
                    self.st.place(Prim::Fill { poly: tri, ink, alpha });
                }
                if o.arrow_start {
                    let tri = arrow_head(last.pts[1], last.pts[0], head);
                    self.st.place(Prim::Fill { poly: tri, ink, alpha });
                }
            }
        }
        for sp in subpaths {
            for p in sp.pts {
                self.st.grow(p, 0.0);
            }
        }
    }
}

fn dir_vector(dir: &str) -> P {
    let mut v = (0.0, 0.0);
    if dir.contains("above") {
        v.1 = 1.0;
    }
    if dir.contains("below") {
        v.1 = -1.0;
    }
    if dir.contains("left") {
        v.0 = -1.0;
    }
    if dir.contains("right") {
        v.0 = 1.0;
    }
    v
}

fn opposite_anchor_of(dir: &str) -> &'static str {
    match dir {
        "above" => "north",
        "below" => "south",
        "left" => "west",
        "right" => "east",
        "above left" => "north west",
        "above right" => "north east",
        "below left" => "south west",
        _ => "south east",
    }
}

fn layer_error(layer: &str, at: usize) -> TexError {
    TexError {
        message: format!(
            "Package pgf Error: Sorry, the requested layer '{layer}' could not be found. Maybe you forgot to add it to the layer list?."
        ),
        help: "See the pgf package documentation for explanation.".into(),
        at,
    }
}

fn parse_color_model(model: &str, spec: &str, at: usize) -> Result<f32, TexError> {
    let nums = |scale: f64| -> Result<Vec<f64>, TexError> {
        spec.split(',').map(|x| eval_num(x, at).map(|v| v / scale)).collect()
    };
    match model {
        "rgb" => match nums(1.0)?.as_slice() {
            [r, g, b] => Ok(luma(*r, *g, *b)),
            _ => Err(math_error(spec, spec, at)),
        },
        "RGB" => match nums(255.0)?.as_slice() {
            [r, g, b] => Ok(luma(*r, *g, *b)),
            _ => Err(math_error(spec, spec, at)),
        },
        "gray" => Ok(eval_num(spec, at)? as f32),
        "HTML" => {
            let v = u32::from_str_radix(spec.trim(), 16).map_err(|_| math_error(spec, spec, at))?;
            let c = |s: u32| f64::from((v >> s) & 0xff) / 255.0;
            Ok(luma(c(16), c(8), c(0)))
        }
        other => Err(err(at, format!("Package xcolor Error: Undefined color model `{other}'."))),
    }
}

fn expand_list(list: &str, at: usize) -> Result<Vec<String>, TexError> {
    let items: Vec<String> = split_top(list, ',').iter().map(|s| s.trim().to_string()).collect();
    let Some(dots) = items.iter().position(|s| s == "...") else {
        return Ok(items.into_iter().filter(|s| !s.is_empty()).collect());
    };
    if dots == 0 || dots + 1 >= items.len() {
        return Err(err(at, "Package pgffor Error: Invalid \\foreach syntax."));
    }
    let a = eval_num(&items[dots - 1], at)?;
    let b = eval_num(&items[dots + 1], at)?;
    let step = if dots >= 2 { a - eval_num(&items[dots - 2], at)? } else if b >= a { 1.0 } else { -1.0 };
    if step == 0.0 || (b - a) / step > 10_000.0 {
        return Err(err(at, "Package pgffor Error: Invalid \\foreach syntax."));
    }
    let mut out: Vec<String> = items[..dots - 1].to_vec();
    let mut v = a;
    while (step > 0.0 && v <= b + 1e-9) || (step < 0.0 && v >= b - 1e-9) {
        out.push(fmt_num(v));
        v += step;
    }
    out.extend(items[dots + 2..].iter().cloned());
    Ok(out)
}

fn fmt_num(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v}")
    }
}

/// Replaces `\var` where it is not followed by another letter.
fn substitute_macro(text: &str, var: &str, value: &str) -> String {
    let needle = format!("\\{var}");
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find(&needle) {
        let after = &rest[i + needle.len()..];
        out.push_str(&rest[..i]);
        if after.starts_with(|c: char| c.is_ascii_alphabetic()) {
            out.push_str(&needle);
        } else {
            out.push_str(value);
        }
        rest = after;
    }
    out.push_str(rest);
    out
}

fn visible_text(t: &str) -> String {
    let mut out = String::new();
    let mut chars = t.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                while chars.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
                    chars.next();
                }
            }
            '$' | '{' | '}' | '^' | '_' => {}
            c if c.is_whitespace() => {
                if !out.ends_with(' ') && !out.is_empty() {
                    out.push(' ');
                }
            }
            c => out.push(c),
        }
    }
    out.trim().to_string()
}

fn visible_len(t: &str) -> usize {
    visible_text(t).chars().count()
}

#[derive(Debug, Clone)]
struct PathPt {
    pos: P,
    node: Option<NodeBox>,
}

#[derive(Debug, Clone, Default)]
struct Sub {
    pts: Vec<P>,
    closed: bool,
}

#[derive(Debug, Default)]
struct PathBuilder {
    subs: Vec<Sub>,
    open: Vec<PathPt>,
    current: Option<PathPt>,
}

impl PathBuilder {
    fn flush(&mut self) {
        if self.open.len() >= 2 {
            let pts = clip_to_nodes(&self.open);
            self.subs.push(Sub { pts, closed: false });
        }
        self.open.clear();
    }

    fn move_to(&mut self, p: PathPt) {
        self.flush();
        self.open.push(p.clone());
        self.current = Some(p);
    }

    fn line_to(&mut self, p: PathPt) {
        if self.open.is_empty() {
            if let Some(c) = self.current.clone() {
                self.open.push(c);
            }
        }
        self.open.push(p.clone());
        self.current = Some(p);
    }

    fn close(&mut self) {
        if self.open.len() >= 2 {
            let pts: Vec<P> = self.open.iter().map(|p| p.pos).collect();
            self.subs.push(Sub { pts, closed: true });
            let start = self.open[0].clone();
            self.open.clear();
            self.open.push(start.clone());
            self.current = Some(start);
        }
    }

    fn polygon(&mut self, pts: Vec<P>) {
        let cur = self.current.clone();
        self.flush();
        self.subs.push(Sub { pts, closed: true });
        if let Some(c) = cur {
            self.open.push(c);
        }
    }

    fn grid(&mut self, a: P, b: P, step: f64) {
        if step <= 0.0 {
            return;
        }
        self.flush();
        let (x0, x1) = (a.0.min(b.0), a.0.max(b.0));
        let (y0, y1) = (a.1.min(b.1), a.1.max(b.1));
        let mut x = (x0 / step).ceil() * step;
        while x <= x1 + 1e-9 {
            self.subs.push(Sub { pts: vec![(x, y0), (x, y1)], closed: false });
            x += step;
        }
        let mut y = (y0 / step).ceil() * step;
        while y <= y1 + 1e-9 {
            self.subs.push(Sub { pts: vec![(x0, y), (x1, y)], closed: false });
            y += step;
        }
    }

    fn finish(mut self) -> Vec<Sub> {
        self.flush();
        self.subs
    }
}

/// Shortens segment ends that refer to a node centre to the node border.
fn clip_to_nodes(pts: &[PathPt]) -> Vec<P> {
    let mut out: Vec<P> = pts.iter().map(|p| p.pos).collect();
    let n = pts.len();
    if let Some(node) = pts[0].node {
        out[0] = node.border_towards(pts[1].pos);
    }
    if let Some(node) = pts[n - 1].node {
        out[n - 1] = node.border_towards(pts[n - 2].pos);
    }
    out
}

fn ellipse(c: P, rx: f64, ry: f64, from_deg: f64, to_deg: f64) -> Vec<P> {
    let span = to_deg - from_deg;
    let segs = ((span.abs() / 360.0) * 96.0).ceil().max(4.0) as usize;
    let full = (span.abs() - 360.0).abs() < 1e-9;
    let count = if full { segs } else { segs + 1 };
    (0..count)
        .map(|k| {
            let a = (from_deg + span * k as f64 / segs as f64).to_radians();
            (c.0 + rx * a.cos(), c.1 + ry * a.sin())
        })
        .collect()
}

fn arrow_head(from: P, tip: P, len: f64) -> Vec<P> {
    let (dx, dy) = (tip.0 - from.0, tip.1 - from.1);
    let l = (dx * dx + dy * dy).sqrt().max(1e-12);
    let (ux, uy) = (dx / l, dy / l);
    let base = (tip.0 - ux * len, tip.1 - uy * len);
    let half = len * 0.45;
    vec![tip, (base.0 - uy * half, base.1 + ux * half), (base.0 + uy * half, base.1 - ux * half)]
}

// ---------------------------------------------------------------- raster

fn glyph_bits(c: char) -> u16 {
    let h = fingerprint_bytes(c.to_string().as_bytes());
    // 3x5 cells; keep the pattern dense enough to read as ink.
    ((h as u16) & 0x7fff) | 0x2492
}

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<f32>,
    ppcm: f64,
    origin: P,
}

impl Canvas {
    fn to_px(&self, p: P) -> P {
        ((p.0 - self.origin.0) * self.ppcm, (self.origin.1 - p.1) * self.ppcm)
    }

    fn blend(&mut self, x: usize, y: usize, ink: f32, cov: f32) {
        let i = y * self.w + x;
        self.px[i] = self.px[i] * (1.0 - cov) + ink * cov;
    }

    fn stroke_segment(&mut self, a: P, b: P, width_px: f64, ink: f32, alpha: f32) {
        let r = (width_px / 2.0).max(0.5);
        let x0 = (a.0.min(b.0) - r - 1.0).floor().max(0.0) as usize;
        let y0 = (a.1.min(b.1) - r - 1.0).floor().max(0.0) as usize;
        let x1 = ((a.0.max(b.0) + r + 1.0).ceil() as usize).min(self.w);
        let y1 = ((a.1.max(b.1) + r + 1.0).ceil() as usize).min(self.h);
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        for y in y0..y1 {
            for x in x0..x1 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let t = if len2 > 0.0 { (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let (qx, qy) = (a.0 + t * dx - px, a.1 + t * dy - py);
                let d = (qx * qx + qy * qy).sqrt();
                let cov = (r + 0.5 - d).clamp(0.0, 1.0) as f32;
                if cov > 0.0 {
                    self.blend(x, y, ink, cov * alpha);
                }
            }
        }
    }

    fn fill_polygon(&mut self, poly: &[P], ink: f32, alpha: f32) {
        if poly.len() < 3 {
            return;
        }
        let min_y = poly.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let max_y = (poly.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil() as usize).min(self.h);
        let mut xs = Vec::new();
        for y in min_y..max_y {
            let sy = y as f64 + 0.5;
            xs.clear();
            for k in 0..poly.len() {
                let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
                if (a.1 <= sy && b.1 > sy) || (b.1 <= sy && a.1 > sy) {
                    xs.push(a.0 + (sy - a.1) / (b.1 - a.1) * (b.0 - a.0));
                }
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks(2) {
                if let [l, r] = pair {
                    let xa = (l - 0.5).ceil().max(0.0) as usize;
                    let xb = ((r - 0.5).floor() + 1.0).clamp(0.0, self.w as f64) as usize;
                    for x in xa..xb {
                        self.blend(x, y, ink, alpha);
                    }
                }
            }
        }
    }

    fn text(&mut self, center: P, text: &str, ink: f32) {
        let n = text.chars().count();
        let cw = CHAR_WIDTH * self.ppcm;
        let chh = TEXT_HEIGHT * self.ppcm;
        let (cx, cy) = center;
        let left = cx - cw * n as f64 / 2.0;
        let top = cy - chh / 2.0;
        for (k, ch) in text.chars().enumerate() {
            if ch == ' ' {
                continue;
            }
            let bits = glyph_bits(ch);
            let gx = left + k as f64 * cw + cw * 0.15;
            let (cell_w, cell_h) = (cw * 0.7 / 3.0, chh * 0.8 / 5.0);
            for row in 0..5 {
                for col in 0..3 {
                    if bits >> (row * 3 + col) & 1 == 1 {
                        let x0 = gx + col as f64 * cell_w;
                        let y0 = top + chh * 0.1 + row as f64 * cell_h;
                        self.fill_polygon(&[(x0, y0), (x0 + cell_w, y0), (x0 + cell_w, y0 + cell_h), (x0, y0 + cell_h)], ink, 1.0);
                    }
                }
            }
        }
    }
}

fn rasterize(st: &State, dpi: f64, border_pt: f64) -> RasterImage {
    let ppcm = dpi / 2.54;
    let border = border_pt / PT_PER_CM;
    let ((x0, y0), (x1, y1)) = st.bbox.unwrap_or(((0.0, 0.0), (0.0, 0.0)));
    let origin = (x0 - border, y1 + border);
    let w = (((x1 - x0) + 2.0 * border) * ppcm).ceil().max(1.0) as usize;
    let h = (((y1 - y0) + 2.0 * border) * ppcm).ceil().max(1.0) as usize;
    let mut canvas = Canvas { w, h, px: vec![1.0; w * h], ppcm, origin };
    for layer in &st.layer_list {
        for placed in st.prims.iter().filter(|p| &p.layer == layer) {
            match &placed.prim {
                Prim::Stroke { pts, closed, width, ink, alpha } => {
                    let px: Vec<P> = pts.iter().map(|p| canvas.to_px(*p)).collect();
                    let wpx = width * ppcm;
                    for seg in px.windows(2) {
                        canvas.stroke_segment(seg[0], seg[1], wpx, *ink, *alpha);
                    }
                    if *closed && px.len() > 2 {
                        canvas.stroke_segment(px[px.len() - 1], px[0], wpx, *ink, *alpha);
                    }
                }
                Prim::Fill { poly, ink, alpha } => {
                    let px: Vec<P> = poly.iter().map(|p| canvas.to_px(*p)).collect();
                    canvas.fill_polygon(&px, *ink, *alpha);
                }
                Prim::Text { center, text, ink } => {
                    let c = canvas.to_px(*center);
                    canvas.text(c, text, *ink);
                }
            }
        }
    }
    RasterImage::new(w, h, Channels::Gray, dpi, canvas.px).expect("canvas dimensions are consistent")
}

fn line_of(doc: &str, at: usize) -> (usize, &str) {
    let at = at.min(doc.len());
    let line_no = doc[..at].matches('\n').count() + 1;
    let start = doc[..at].rfind('\n').map_or(0, |i| i + 1);
    let end = doc[at..].find('\n').map_or(doc.len(), |i| at + i);
    (line_no, doc[start..end].trim_end())
}

const BANNER: &str = "This is sketchTeX, a TikZ subset interpreter\n(./doc.tex\n";

/// Interprets `document` and draws it at `dpi` with a `border_pt` margin.
pub fn render(document: &str, dpi: f64, border_pt: f64) -> SketchOutcome {
    let blanked = blank_comments(document);
    let mut it = Interp { doc: document, st: State::new() };
    let mut cur = Cur::new(&blanked, 0, false);
    let result = it.preamble(&mut cur).and_then(|()| {
        let ended = it.body(&mut cur, Some("document"))?;
        if !ended {
            return Err(TexError {
                message: "Emergency stop.".into(),
                help: "*** (job aborted, no legal \\end found)".into(),
                at: blanked.len(),
            });
        }
        Ok(())
    });
    match result {
        Ok(()) => {
            let image = rasterize(&it.st, dpi, border_pt);
            let log = format!("{BANNER})\nOutput written on doc.pdf (1 page).\n");
            SketchOutcome::Rendered { image, log }
        }
        Err(e) if e.message == "__diverges__" => SketchOutcome::Diverges {
            log: format!("{BANNER}! TeX capacity exceeded, sorry [main memory size=5000000].\n"),
        },
        Err(e) => {
            let (line, text) = line_of(it.doc, e.at);
            let mut log = format!("{BANNER}! {}\n", e.message);
            if !e.help.is_empty() {
                log.push_str(&e.help);
                log.push('\n');
            }
            log.push_str(&format!("\nl.{line} {text}\n\nNo pages of output.\n"));
            SketchOutcome::Failed { log }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(body: &str) -> String {
        format!("\\documentclass[border=10pt]{{standalone}}\n\\usepackage{{tikz}}\n\\begin{{document}}\n\\begin{{tikzpicture}}\n{body}\n\\end{{tikzpicture}}\n\\end{{document}}\n")
    }

    fn rendered(src: &str) -> RasterImage {
        match render(src, 100.0, 10.0) {
            SketchOutcome::Rendered { image, .. } => image,
            other => panic!("expected a render, got {other:?}"),
        }
    }

    fn failed_log(src: &str) -> String {
        match render(src, 100.0, 10.0) {
            SketchOutcome::Failed { log } => log,
            other => panic!("expected a failure, got {other:?}"),
        }
    }

    #[test]
    fn draws_a_square_with_expected_size() {
        let img = rendered(&doc("\\draw (0,0) rectangle (2,2);"));
        // 2 cm + 2 * 10 pt border at 100 dpi.
        let expect = ((2.0 + 20.0 / PT_PER_CM) * 100.0 / 2.54f64).ceil() as usize;
        assert!((img.width() as i64 - expect as i64).abs() <= 1, "{} vs {expect}", img.width());
        assert!(!img.is_constant());
        assert!(img.pixels().iter().any(|p| *p < 0.2));
    }

    #[test]
    fn deterministic() {
        let src = doc("\\node[draw,circle] (a) at (0,0) {A};\n\\node[draw] (b) at (3,1) {Box};\n\\draw[->,thick] (a) -- (b);");
        assert_eq!(rendered(&src).pixels(), rendered(&src).pixels());
    }

    #[test]
    fn undeclared_layer_reports_pgf_message() {
        let src = doc("\\node (a) {A};\n\\begin{pgfonlayer}{background}\n\\fill[gray] (0,0) circle (1);\n\\end{pgfonlayer}");
        let log = failed_log(&src);
        assert!(log.contains("! Package pgf Error: Sorry, the requested layer 'background' could not be found."), "{log}");
        assert!(log.contains("l.6 \\begin{pgfonlayer}{background}"), "{log}");

        let fixed = src.replace(
            "\\begin{document}",
            "\\usetikzlibrary{backgrounds}\n\\pgfdeclarelayer{background}\n\\pgfsetlayers{background,main}\n\\begin{document}",
        );
        rendered(&fixed);
    }

    #[test]
    fn background_layer_draws_underneath() {
        let src = "\\documentclass{standalone}\n\\usepackage{tikz}\n\\usetikzlibrary{backgrounds}\n\\begin{document}\n\\begin{tikzpicture}\n\\fill[white] (0,0) rectangle (1,1);\n\\begin{pgfonlayer}{background}\n\\fill[black] (0,0) rectangle (1,1);\n\\end{pgfonlayer}\n\\end{tikzpicture}\n\\end{document}";
        let img = rendered(src);
        let c = img.gray_at(img.width() / 2, img.height() / 2);
        assert!(c > 0.99, "background layer painted over main: {c}");
    }

    #[test]
    fn undefined_control_sequence() {
        let log = failed_log(&doc("\\draw (0,0) -- (1,1);\n\\Vhrulefill"));
        assert!(log.contains("! Undefined control sequence."));
        assert!(log.contains("l.6 \\Vhrulefill"));
    }

    #[test]
    fn missing_semicolon_gives_up() {
        let log = failed_log(&doc("\\draw (0,0) -- (1,1)\n"));
        assert!(log.contains("Giving up on this path"));
    }

    #[test]
    fn missing_package_and_library() {
        let src = doc("\\draw (0,0) -- (1,1);").replace("\\usepackage{tikz}", "\\usepackage{tikz}\n\\usepackage{nosuchpkg}");
        assert!(failed_log(&src).contains("! LaTeX Error: File `nosuchpkg.sty' not found."));
        let src = doc("\\draw (0,0) -- (1,1);").replace("\\usepackage{tikz}", "\\usepackage{tikz}\n\\usetikzlibrary{nosuchlib}");
        assert!(failed_log(&src).contains("I did not find the tikz library 'nosuchlib'"));
    }

    #[test]
    fn fragment_without_document_fails() {
        let log = failed_log("\\begin{tikzpicture}\\draw (0,0) -- (1,1);\\end{tikzpicture}");
        assert!(log.contains("Missing \\begin{document}"));
    }

    #[test]
    fn includegraphics_only_in_dead_branch_compiles() {
        let src = doc("\\node at (0,0) {\\IfFileExists{logo.png}{\\includegraphics{logo.png}}{}};\n\\draw (0,0) circle (1);");
        rendered(&src);
        let body = "\\begin{document}\n\\IfFileExists{logo.png}{\\includegraphics{logo.png}}{}\n\\begin{tikzpicture}\\draw (0,0) circle (1);\\end{tikzpicture}\n\\end{document}";
        rendered(&format!("\\documentclass{{standalone}}\n\\usepackage{{tikz}}\n\\usepackage{{graphicx}}\n{body}"));
        let bad = "\\documentclass{standalone}\n\\usepackage{tikz}\n\\usepackage{graphicx}\n\\begin{document}\n\\includegraphics{logo.png}\n\\end{document}";
        assert!(failed_log(bad).contains("File `logo.png' not found."));
    }

    #[test]
    fn foreach_and_positioning() {
        let src = doc("\\foreach \\i in {0,...,3} { \\node[draw] (n\\i) at (\\i*1.5,0) {\\i}; }\n\\draw (n0) -- (n3);")
            .replace("\\usepackage{tikz}", "\\usepackage{tikz}\n\\usetikzlibrary{positioning}");
        rendered(&src);
        let src2 = doc("\\node[draw] (a) {A};\n\\node[draw, right=of a] (b) {B};\n\\draw[->] (a) -- (b);")
            .replace("\\usepackage{tikz}", "\\usepackage{tikz}\n\\usetikzlibrary{positioning}");
        rendered(&src2);
        let without = doc("\\node[draw] (a) {A};\n\\node[draw, right=of a] (b) {B};");
        assert!(failed_log(&without).contains("PGF Math Error"));
    }

    #[test]
    fn infinite_loop_diverges() {
        let src = "\\documentclass{standalone}\n\\begin{document}\n\\loop\\iftrue\\repeat\n\\end{document}";
        assert!(matches!(render(src, 100.0, 10.0), SketchOutcome::Diverges { .. }));
    }

    #[test]
    fn empty_picture_is_blank() {
        let img = rendered(&doc(""));
        assert!(img.is_constant());
    }

    #[test]
    fn comments_are_ignored() {
        let a = rendered(&doc("\\draw (0,0) -- (1,1); % \\undefined"));
        let b = rendered(&doc("\\draw (0,0) -- (1,1);"));
        assert_eq!(a.pixels(), b.pixels());
    }
}
