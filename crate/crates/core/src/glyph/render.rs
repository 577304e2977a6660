use rand::Rng;

use super::font::{Bitmap, BitmapFont};
use crate::error::{Error, Result};

/// Height and width of a glyph canvas in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Canvas {
    pub height: usize,
    pub width: usize,
}

impl Canvas {
    /// 30 rows by 60 columns.
    pub const DEFAULT: Canvas = Canvas { height: 30, width: 60 };

    pub fn pixels(self) -> usize {
        self.height * self.width
    }
}

impl Default for Canvas {
    fn default() -> Self {
        Canvas::DEFAULT
    }
}

/// Grayscale image in `[0, 1]`, row-major, 1.0 = ink.
#[derive(Clone, Debug, PartialEq)]
pub struct GlyphImage {
    canvas: Canvas,
    pixels: Vec<f32>,
    source_text: String,
}

impl GlyphImage {
    pub fn new(canvas: Canvas, pixels: Vec<f32>, source_text: impl Into<String>) -> Result<Self> {
        if pixels.len() != canvas.pixels() {
            return Err(Error::dim(
                "glyph image",
                format!(
                    "{}x{} canvas needs {} pixels, got {}",
                    canvas.height,
                    canvas.width,
                    canvas.pixels(),
                    pixels.len()
                ),
            ));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Invalid("pixel values must lie in [0, 1]".into()));
        }
        Ok(GlyphImage {
            canvas,
            pixels,
            source_text: source_text.into(),
        })
    }

    pub fn canvas(&self) -> Canvas {
        self.canvas
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.canvas.width + x]
    }

    pub fn ink_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p > 0.0).count()
    }

    /// Inclusive ink bounding box `(x0, y0, x1, y1)`, `None` for a blank image.
    pub fn ink_bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let w = self.canvas.width;
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for (i, &p) in self.pixels.iter().enumerate() {
            if p > 0.0 {
                let (x, y) = (i % w, i / w);
                bbox = Some(match bbox {
                    None => (x, y, x, y),
                    Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                });
            }
        }
        bbox
    }

    /// Binary PGM (P5, maxval 255, ink = 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5 {} {} 255\n", self.canvas.width, self.canvas.height).into_bytes();
        out.extend(self.pixels.iter().map(|&p| (p * 255.0).round() as u8));
        out
    }

    /// Reserved separator between premise and hypothesis tokens: an ink
    /// border around a blank interior.
    pub fn separator(canvas: Canvas) -> Self {
        let mut pixels = vec![0.0; canvas.pixels()];
        for y in 0..canvas.height {
            for x in 0..canvas.width {
                if y == 0 || x == 0 || y + 1 == canvas.height || x + 1 == canvas.width {
                    pixels[y * canvas.width + x] = 1.0;
                }
            }
        }
        GlyphImage {
            canvas,
            pixels,
            source_text: "[SEP]".into(),
        }
    }

    /// Each pixel independently ink with probability 1/2.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, canvas: Canvas) -> Self {
        let pixels = (0..canvas.pixels())
            .map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 })
            .collect();
        GlyphImage {
            canvas,
            pixels,
            source_text: "[RANDOM]".into(),
        }
    }
}

/// Anything that can turn a text segment into a glyph image.
pub trait GlyphSource {
    fn render(&self, segment: &str, canvas: Canvas) -> Result<GlyphImage>;
}

impl GlyphSource for BitmapFont {
    fn render(&self, segment: &str, canvas: Canvas) -> Result<GlyphImage> {
        render_on(segment, self, canvas)
    }
}

/// Renders `segment` onto the default 30x60 canvas.
pub fn render(segment: &str, font: &BitmapFont) -> Result<GlyphImage> {
    render_on(segment, font, Canvas::DEFAULT)
}

/// Lays glyphs out left to right with a one pixel gap, shrinks the strip by
/// nearest-neighbour sampling (aspect preserved) if it overflows the canvas,
/// and centers it. Odd margins put the extra pixel on the right/bottom.
pub fn render_on(segment: &str, font: &BitmapFont, canvas: Canvas) -> Result<GlyphImage> {
    if segment.is_empty() {
        return Err(Error::Invalid("cannot render an empty segment".into()));
    }
    let strip = compose(segment, font);
    let (sw, sh) = (strip.width(), strip.height());
    let (cw, ch) = (canvas.width, canvas.height);

    let (tw, th) = if sw <= cw && sh <= ch {
        (sw, sh)
    } else if sw * ch >= sh * cw {
        (cw, ((2 * sh * cw + sw) / (2 * sw)).clamp(1, ch))
    } else {
        (((2 * sw * ch + sh) / (2 * sh)).clamp(1, cw), ch)
    };

    let left = (cw - tw) / 2;
    let top = (ch - th) / 2;
    let mut pixels = vec![0.0f32; canvas.pixels()];
    for y in 0..th {
        let sy = ((2 * y + 1) * sh) / (2 * th);
        for x in 0..tw {
            let sx = ((2 * x + 1) * sw) / (2 * tw);
            if strip.get(sx, sy) {
                pixels[(top + y) * cw + left + x] = 1.0;
            }
        }
    }
    Ok(GlyphImage {
        canvas,
        pixels,
        source_text: segment.to_string(),
    })
}

fn compose(segment: &str, font: &BitmapFont) -> Bitmap {
    let glyphs: Vec<&Bitmap> = segment.chars().map(|c| font.glyph(c)).collect();
    let height = font.height();
    let width = glyphs.iter().map(|g| g.width()).sum::<usize>() + glyphs.len().saturating_sub(1);
    let mut strip = Bitmap::blank(width.max(1), height);
    let mut x0 = 0;
    for g in glyphs {
        for y in 0..height {
            for x in 0..g.width() {
                if g.get(x, y) {
                    strip.set(x0 + x, y, true);
                }
            }
        }
        x0 += g.width() + 1;
    }
    strip
}
