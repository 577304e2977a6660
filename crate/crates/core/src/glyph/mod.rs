//! Text to glyph-image conversion.

mod font;
mod render;
mod segment;

pub use font::{Bitmap, BitmapFont};
pub use render::{render, render_on, Canvas, GlyphImage, GlyphSource};
pub use segment::{Granularity, Segmenter};
