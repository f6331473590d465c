//! Image grids with short text captions drawn in a 3×5 bitmap font.

use dlgan_core::{Real, Tensor};
use image::{Rgb, RgbImage};

use crate::error::{AppError, Result};
use crate::imageio::{encode_rgb, to_rgb};

/// Gap between tiles and around the border, in pixels.
pub const MARGIN: u32 = 2;
const GLYPH_W: u32 = 3;
const GLYPH_H: u32 = 5;
/// Height of a caption band: glyphs plus one pixel above and below.
pub const CAPTION_H: u32 = GLYPH_H + 2;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const INK: Rgb<u8> = Rgb([0, 0, 0]);

/// Rows of `[3, H, W]` tiles with an optional caption above each tile.
#[derive(Clone, Debug, Default)]
pub struct Grid<T> {
    pub rows: Vec<Vec<Tensor<T>>>,
    /// Indexed like `rows`; missing or empty entries leave no text.
    pub captions: Vec<Vec<String>>,
}

fn glyph(c: char) -> [u8; 5] {
    match c.to_ascii_uppercase() {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 2, 2],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        'A' => [2, 5, 7, 5, 5],
        'B' => [6, 5, 6, 5, 6],
        'C' => [3, 4, 4, 4, 3],
        'D' => [6, 5, 5, 5, 6],
        'E' => [7, 4, 6, 4, 7],
        'F' => [7, 4, 6, 4, 4],
        'G' => [3, 4, 5, 5, 3],
        'H' => [5, 5, 7, 5, 5],
        'I' => [7, 2, 2, 2, 7],
        'J' => [1, 1, 1, 5, 2],
        'K' => [5, 5, 6, 5, 5],
        'L' => [4, 4, 4, 4, 7],
        'M' => [5, 7, 7, 5, 5],
        'N' => [6, 5, 5, 5, 5],
        'O' => [2, 5, 5, 5, 2],
        'P' => [6, 5, 6, 4, 4],
        'Q' => [2, 5, 5, 6, 3],
        'R' => [6, 5, 6, 5, 5],
        'S' => [3, 4, 2, 1, 6],
        'T' => [7, 2, 2, 2, 2],
        'U' => [5, 5, 5, 5, 7],
        'V' => [5, 5, 5, 5, 2],
        'W' => [5, 5, 7, 7, 5],
        'X' => [5, 5, 2, 5, 5],
        'Y' => [5, 5, 2, 2, 2],
        'Z' => [7, 1, 2, 4, 7],
        '.' => [0, 0, 0, 0, 2],
        '=' => [0, 7, 0, 7, 0],
        '-' => [0, 0, 7, 0, 0],
        ':' => [0, 2, 0, 2, 0],
        '_' => [0, 0, 0, 0, 7],
        ' ' => [0; 5],
        _ => [7, 7, 7, 7, 7],
    }
}

fn draw_text(img: &mut RgbImage, x0: u32, y0: u32, max_w: u32, text: &str) {
    let mut x = x0;
    for c in text.chars() {
        if x + GLYPH_W > x0 + max_w {
            break;
        }
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..GLYPH_W {
                if bits >> (GLYPH_W - 1 - col) & 1 == 1 {
                    img.put_pixel(x + col, y0 + row as u32, INK);
                }
            }
        }
        x += GLYPH_W + 1;
    }
}

impl<T: Real> Grid<T> {
    pub fn new(rows: Vec<Vec<Tensor<T>>>) -> Self {
        Self { rows, captions: Vec::new() }
    }

    pub fn with_captions(mut self, captions: Vec<Vec<String>>) -> Self {
        self.captions = captions;
        self
    }

    fn has_captions(&self) -> bool {
        self.captions.iter().flatten().any(|c| !c.is_empty())
    }

    /// Tile size and grid shape; every tile must share one size.
    fn layout(&self) -> Result<(u32, u32, u32, u32)> {
        let first = self.rows.iter().flatten().next().ok_or_else(|| AppError::Usage("grid has no images".into()))?;
        let s = first.shape().to_vec();
        if s.len() != 3 || s[0] != 3 {
            return Err(AppError::Usage(format!("grid tiles must be [3,H,W], got {s:?}")));
        }
        for t in self.rows.iter().flatten() {
            if t.shape() != s.as_slice() {
                return Err(AppError::Usage(format!("grid tiles differ in size: {:?} vs {s:?}", t.shape())));
            }
        }
        let cols = self.rows.iter().map(Vec::len).max().unwrap_or(0) as u32;
        Ok((s[1] as u32, s[2] as u32, self.rows.len() as u32, cols))
    }

    /// Pixel size `(width, height)` of the rendered grid.
    pub fn dimensions(&self) -> Result<(u32, u32)> {
        let (h, w, rows, cols) = self.layout()?;
        let row_h = h + if self.has_captions() { CAPTION_H } else { 0 };
        Ok((cols * w + (cols + 1) * MARGIN, rows * row_h + (rows + 1) * MARGIN))
    }

    pub fn render(&self) -> Result<RgbImage> {
        let (h, w, _, _) = self.layout()?;
        let (width, height) = self.dimensions()?;
        let cap = if self.has_captions() { CAPTION_H } else { 0 };
        let mut img = RgbImage::from_pixel(width, height, BACKGROUND);
        for (r, row) in self.rows.iter().enumerate() {
            let y = MARGIN + r as u32 * (h + cap + MARGIN);
            for (c, tile) in row.iter().enumerate() {
                let x = MARGIN + c as u32 * (w + MARGIN);
                if let Some(text) = self.captions.get(r).and_then(|row| row.get(c)) {
                    draw_text(&mut img, x, y + 1, w, text);
                }
                image::imageops::replace(&mut img, &to_rgb(tile)?, x as i64, (y + cap) as i64);
            }
        }
        Ok(img)
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        encode_rgb(&self.render()?)
    }
}
