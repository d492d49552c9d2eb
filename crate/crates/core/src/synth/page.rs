use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::RasterImage;
use crate::metrics::{BlockLayout, TextBlock};
use crate::synth::font::{glyph, ALPHABET, GLYPH_H, GLYPH_W};

/// Intensity of ruled lines and block borders.
pub const RULE_GRAY: f32 = 0.55;

/// Geometry of a rendered page.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PageStyle {
    pub height: usize,
    pub width: usize,
    /// Pixels per font cell.
    pub glyph_scale: usize,
    pub margin: usize,
    pub block_padding: usize,
    pub max_rows_per_block: usize,
}

impl Default for PageStyle {
    fn default() -> Self {
        Self {
            height: 712,
            width: 488,
            glyph_scale: 3,
            margin: 40,
            block_padding: 12,
            max_rows_per_block: 3,
        }
    }
}

impl PageStyle {
    pub fn advance(&self) -> usize {
        (GLYPH_W + 1) * self.glyph_scale
    }

    /// Vertical distance between text rows (glyph height, rule gap, spacing).
    pub fn row_pitch(&self) -> usize {
        (GLYPH_H + 4) * self.glyph_scale
    }
}

/// Row-major single-channel canvas.
struct Canvas {
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl Canvas {
    fn fill_rect(&mut self, top: usize, left: usize, bottom: usize, right: usize, v: f32) {
        for i in top..bottom.min(self.h) {
            for j in left..right.min(self.w) {
                self.data[i * self.w + j] = v;
            }
        }
    }

    fn draw_text(&mut self, top: usize, left: usize, scale: usize, text: &str) {
        for (k, c) in text.chars().enumerate() {
            let Some(g) = glyph(c) else { continue };
            let x0 = left + k * (GLYPH_W + 1) * scale;
            for (r, row) in g.iter().enumerate() {
                for (col, &ink) in row.iter().enumerate() {
                    if ink {
                        let (t, l) = (top + r * scale, x0 + col * scale);
                        self.fill_rect(t, l, t + scale, l + scale, 0.0);
                    }
                }
            }
        }
    }
}

fn random_row(rng: &mut ChaCha8Rng, max_chars: usize) -> String {
    let alphabet: Vec<char> = ALPHABET.chars().collect();
    let mut row = String::new();
    loop {
        let len = rng.random_range(2..=6);
        let sep = usize::from(!row.is_empty());
        if row.len() + sep + len > max_chars {
            break;
        }
        if sep == 1 {
            row.push(' ');
        }
        row.extend((0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]));
    }
    if row.is_empty() {
        row.extend((0..max_chars.max(1)).map(|_| alphabet[rng.random_range(0..alphabet.len())]));
    }
    row
}

/// Renders a flat page with the default style.
pub fn render_page(seed: u64, blocks: usize) -> Result<(RasterImage, BlockLayout)> {
    render_page_with(seed, blocks, &PageStyle::default())
}

/// White page with `blocks` bordered text blocks stacked top to bottom. Each
/// text row sits above a ruled line; a block's reference text is its rows
/// joined by single spaces and its polygon is the border rectangle.
pub fn render_page_with(seed: u64, blocks: usize, style: &PageStyle) -> Result<(RasterImage, BlockLayout)> {
    if blocks == 0 {
        return Err(Error::InvalidParameter("a page needs at least one block".into()));
    }
    let s = style.glyph_scale.max(1);
    let (h, w) = (style.height, style.width);
    let inner_w = w.saturating_sub(2 * style.margin + 2 * style.block_padding);
    let max_chars = inner_w / style.advance();
    let slot = h.saturating_sub(2 * style.margin) / blocks;
    let block_gap = 2 * s * 4;
    let rows = (slot.saturating_sub(block_gap + 2 * style.block_padding) / style.row_pitch()).min(style.max_rows_per_block);
    if max_chars < 2 || rows == 0 {
        return Err(Error::InvalidParameter(format!(
            "{blocks} blocks do not fit on a {h}x{w} page"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut canvas = Canvas {
        h,
        w,
        data: vec![1.0; h * w],
    };
    let mut layout = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let top = style.margin + b * slot;
        let left = style.margin;
        let right = w - style.margin;
        let n_rows = rng.random_range(1..=rows);
        let bottom = top + 2 * style.block_padding + n_rows * style.row_pitch();
        let t = 2usize;
        canvas.fill_rect(top, left, top + t, right, RULE_GRAY);
        canvas.fill_rect(bottom - t, left, bottom, right, RULE_GRAY);
        canvas.fill_rect(top, left, bottom, left + t, RULE_GRAY);
        canvas.fill_rect(top, right - t, bottom, right, RULE_GRAY);
        let mut texts = Vec::with_capacity(n_rows);
        for r in 0..n_rows {
            let row_top = top + style.block_padding + r * style.row_pitch();
            let text = random_row(&mut rng, max_chars);
            canvas.draw_text(row_top, left + style.block_padding, s, &text);
            let rule = row_top + (GLYPH_H + 2) * s;
            canvas.fill_rect(rule, left + style.block_padding, rule + 1, right - style.block_padding, RULE_GRAY);
            texts.push(text);
        }
        let (x0, y0, x1, y1) = (left as f64, top as f64, (right - 1) as f64, (bottom - 1) as f64);
        layout.push(TextBlock {
            polygon: vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)],
            text: texts.join(" "),
        });
    }
    let img = RasterImage::new(h, w, 1, canvas.data)?;
    Ok((img, BlockLayout::new(layout)))
}
