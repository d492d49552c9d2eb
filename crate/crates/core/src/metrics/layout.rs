use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::format::{read_bytes, write_bytes};

/// One ground-truth text block: polygon in GT pixel coordinates `(x, y)` and its text.
#[derive(Clone, Debug, PartialEq)]
pub struct TextBlock {
    pub polygon: Vec<(f64, f64)>,
    pub text: String,
}

impl TextBlock {
    /// Axis-aligned bounds `(x0, y0, x1, y1)` of the polygon.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.polygon.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(x0, y0, x1, y1), &(x, y)| (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        )
    }
}

/// Text blocks in ground-truth reading order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BlockLayout {
    pub blocks: Vec<TextBlock>,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut it = s.chars();
    while let Some(c) = it.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match it.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(Error::BadFormat(format!("bad escape \\{}", other.map(String::from).unwrap_or_default()))),
        }
    }
    Ok(out)
}

impl BlockLayout {
    pub fn new(blocks: Vec<TextBlock>) -> Self {
        Self { blocks }
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// One block per line: `x,y x,y ...<TAB>escaped text`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for b in &self.blocks {
            let pts: Vec<String> = b.polygon.iter().map(|(x, y)| format!("{x},{y}")).collect();
            let _ = writeln!(s, "{}\t{}", pts.join(" "), escape(&b.text));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut blocks = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (poly, txt) = line
                .split_once('\t')
                .ok_or_else(|| Error::BadFormat(format!("layout line {}: missing tab", n + 1)))?;
            let mut polygon = Vec::new();
            for pair in poly.split_whitespace() {
                let (x, y) = pair
                    .split_once(',')
                    .ok_or_else(|| Error::BadFormat(format!("layout line {}: bad vertex {pair:?}", n + 1)))?;
                let parse = |v: &str| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::BadFormat(format!("layout line {}: bad number {v:?}", n + 1)))
                };
                polygon.push((parse(x)?, parse(y)?));
            }
            if polygon.len() < 3 {
                return Err(Error::BadFormat(format!("layout line {}: polygon needs 3 vertices", n + 1)));
            }
            blocks.push(TextBlock {
                polygon,
                text: unescape(txt)?,
            });
        }
        Ok(Self { blocks })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = read_bytes(path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::BadFormat(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes(path.as_ref(), self.to_text().as_bytes())
    }
}
