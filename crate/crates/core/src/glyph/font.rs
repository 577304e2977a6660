//! Bitmap fonts and the BDF subset used to store them.
//!
//! Recognized records: `STARTFONT`, `FONTBOUNDINGBOX`, `DEFAULT_CHAR`,
//! `STARTCHAR`, `ENCODING`, `BBX`, `BITMAP`, `ENDCHAR`. Everything else is
//! skipped. Glyph rows are placed vertically using the BBX offsets relative
//! to the font bounding box, so every stored bitmap has the font height.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Binary bitmap, row-major, `true` = ink.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitmap {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Bitmap {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::dim(
                "bitmap",
                format!(
                    "{width}x{height} bitmap needs {} bits, got {}",
                    width * height,
                    bits.len()
                ),
            ));
        }
        Ok(Bitmap { width, height, bits })
    }

    pub fn blank(width: usize, height: usize) -> Self {
        Bitmap {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    /// Parses rows of `#` (ink) and `.` (blank).
    pub fn from_ascii(rows: &[&str]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut bits = Vec::with_capacity(width * height);
        for r in rows {
            if r.chars().count() != width {
                return Err(Error::Invalid("ragged ascii bitmap".into()));
            }
            bits.extend(r.chars().map(|c| c == '#'));
        }
        Bitmap::new(width, height, bits)
    }

    /// Hollow rectangle used for codepoints the font does not cover.
    pub fn hollow_box(width: usize, height: usize) -> Self {
        let mut b = Bitmap::blank(width, height);
        for y in 0..height {
            for x in 0..width {
                if y == 0 || x == 0 || y + 1 == height || x + 1 == width {
                    b.set(x, y, true);
                }
            }
        }
        b
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, ink: bool) {
        self.bits[y * self.width + x] = ink;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn ink_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitmapFont {
    height: usize,
    glyphs: BTreeMap<char, Bitmap>,
    default_glyph: Bitmap,
    default_char: Option<char>,
}

impl BitmapFont {
    /// Builds a font whose default glyph is a hollow box `default_width` wide.
    pub fn new(height: usize, glyphs: BTreeMap<char, Bitmap>, default_width: usize) -> Result<Self> {
        if height == 0 || default_width == 0 {
            return Err(Error::Invalid("font height and default width must be positive".into()));
        }
        if let Some((c, g)) = glyphs.iter().find(|(_, g)| g.height() != height) {
            return Err(Error::dim(
                "font",
                format!("glyph {c:?} has height {} but font height is {height}", g.height()),
            ));
        }
        Ok(BitmapFont {
            height,
            glyphs,
            default_glyph: Bitmap::hollow_box(default_width, height),
            default_char: None,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn glyphs(&self) -> &BTreeMap<char, Bitmap> {
        &self.glyphs
    }

    pub fn default_glyph(&self) -> &Bitmap {
        &self.default_glyph
    }

    pub fn contains(&self, c: char) -> bool {
        self.glyphs.contains_key(&c)
    }

    /// The glyph for `c`, or the default glyph when unmapped.
    pub fn glyph(&self, c: char) -> &Bitmap {
        self.glyphs.get(&c).unwrap_or(&self.default_glyph)
    }

    pub fn load_bdf(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = crate::error::read_text(path)?;
        Self::parse_bdf(&text, path)
    }

    /// Parses BDF text; `origin` is only used in error messages.
    pub fn parse_bdf(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::parse(origin, line, msg);
        let mut started = false;
        let mut bbox: Option<(usize, usize, i64, i64)> = None;
        let mut default_encoding: Option<i64> = None;
        let mut glyphs = BTreeMap::new();

        struct Pending {
            encoding: Option<i64>,
            bbx: Option<(usize, usize, i64, i64)>,
            rows: Option<Vec<String>>,
        }
        let mut pending: Option<Pending> = None;

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            let keyword = words.next().unwrap_or("");
            let args: Vec<&str> = words.collect();

            if !started {
                if keyword != "STARTFONT" {
                    return Err(err(lineno, "expected STARTFONT"));
                }
                started = true;
                continue;
            }

            if let Some(p) = pending.as_mut() {
                if let Some(rows) = p.rows.as_mut() {
                    if keyword == "ENDCHAR" {
                        let p = pending.take().expect("pending glyph");
                        let (_, fh, _, fyoff) = bbox.ok_or_else(|| err(lineno, "STARTCHAR before FONTBOUNDINGBOX"))?;
                        let (w, h, _xo, yo) = p.bbx.ok_or_else(|| err(lineno, "glyph without BBX"))?;
                        let rows = p.rows.expect("bitmap rows");
                        if rows.len() != h {
                            return Err(err(
                                lineno,
                                &format!("BBX declares {h} rows but BITMAP has {}", rows.len()),
                            ));
                        }
                        let top = (fh as i64 + fyoff) - (h as i64 + yo);
                        if top < 0 || top + h as i64 > fh as i64 {
                            return Err(err(lineno, "glyph box lies outside FONTBOUNDINGBOX"));
                        }
                        let mut bmp = Bitmap::blank(w, fh);
                        for (r, hex) in rows.iter().enumerate() {
                            let bytes = decode_hex_row(hex, w).map_err(|m| err(lineno - h + r, &m))?;
                            for x in 0..w {
                                if bytes[x / 8] & (0x80 >> (x % 8)) != 0 {
                                    bmp.set(x, top as usize + r, true);
                                }
                            }
                        }
                        match p.encoding {
                            Some(e) if e >= 0 => {
                                let c = u32::try_from(e)
                                    .ok()
                                    .and_then(char::from_u32)
                                    .ok_or_else(|| err(lineno, "ENCODING is not a Unicode scalar value"))?;
                                glyphs.insert(c, bmp);
                            }
                            Some(_) => {}
                            None => return Err(err(lineno, "glyph without ENCODING")),
                        }
                    } else {
                        rows.push(line.to_string());
                    }
                    continue;
                }
                match keyword {
                    "ENCODING" => {
                        let e = args
                            .first()
                            .and_then(|a| a.parse::<i64>().ok())
                            .ok_or_else(|| err(lineno, "malformed ENCODING"))?;
                        p.encoding = Some(e);
                    }
                    "BBX" => p.bbx = Some(parse_box(&args).ok_or_else(|| err(lineno, "malformed BBX"))?),
                    "BITMAP" => {
                        if p.bbx.is_none() {
                            return Err(err(lineno, "BITMAP before BBX"));
                        }
                        p.rows = Some(Vec::new());
                    }
                    "ENDCHAR" => return Err(err(lineno, "ENDCHAR without BITMAP")),
                    "STARTCHAR" => return Err(err(lineno, "STARTCHAR inside glyph")),
                    _ => {}
                }
                continue;
            }

            match keyword {
                "FONTBOUNDINGBOX" => {
                    let b = parse_box(&args).ok_or_else(|| err(lineno, "malformed FONTBOUNDINGBOX"))?;
                    if b.0 == 0 || b.1 == 0 {
                        return Err(err(lineno, "FONTBOUNDINGBOX must be non-empty"));
                    }
                    bbox = Some(b);
                }
                "DEFAULT_CHAR" => {
                    default_encoding = Some(
                        args.first()
                            .and_then(|a| a.parse().ok())
                            .ok_or_else(|| err(lineno, "malformed DEFAULT_CHAR"))?,
                    );
                }
                "STARTCHAR" => {
                    if bbox.is_none() {
                        return Err(err(lineno, "STARTCHAR before FONTBOUNDINGBOX"));
                    }
                    pending = Some(Pending {
                        encoding: None,
                        bbx: None,
                        rows: None,
                    });
                }
                "ENDCHAR" | "BITMAP" | "BBX" | "ENCODING" => {
                    return Err(err(lineno, &format!("{keyword} outside STARTCHAR")));
                }
                _ => {}
            }
        }
        if !started {
            return Err(err(1, "empty file"));
        }
        if pending.is_some() {
            return Err(err(text.lines().count(), "unterminated glyph"));
        }
        let (fw, fh, _, _) = bbox.ok_or_else(|| err(text.lines().count(), "missing FONTBOUNDINGBOX"))?;
        let mut font = BitmapFont::new(fh, glyphs, fw)?;
        if let Some(c) = default_encoding
            .and_then(|e| u32::try_from(e).ok())
            .and_then(char::from_u32)
        {
            if let Some(g) = font.glyphs.get(&c) {
                font.default_glyph = g.clone();
                font.default_char = Some(c);
            }
        }
        Ok(font)
    }

    /// Serializes to the BDF subset understood by [`parse_bdf`](Self::parse_bdf).
    pub fn to_bdf(&self, name: &str) -> String {
        let mut s = String::new();
        let h = self.height;
        let _ = writeln!(s, "STARTFONT 2.1");
        let _ = writeln!(s, "FONT {name}");
        let _ = writeln!(s, "SIZE {h} 75 75");
        let _ = writeln!(s, "FONTBOUNDINGBOX {} {h} 0 0", self.default_glyph.width());
        if let Some(c) = self.default_char {
            let _ = writeln!(s, "STARTPROPERTIES 1");
            let _ = writeln!(s, "DEFAULT_CHAR {}", c as u32);
            let _ = writeln!(s, "ENDPROPERTIES");
        }
        let _ = writeln!(s, "CHARS {}", self.glyphs.len());
        for (c, g) in &self.glyphs {
            let cp = *c as u32;
            let _ = writeln!(s, "STARTCHAR U+{cp:04X}");
            let _ = writeln!(s, "ENCODING {cp}");
            let _ = writeln!(s, "SWIDTH 500 0");
            let _ = writeln!(s, "DWIDTH {} 0", g.width());
            let _ = writeln!(s, "BBX {} {h} 0 0", g.width());
            let _ = writeln!(s, "BITMAP");
            let nbytes = g.width().div_ceil(8).max(1);
            for y in 0..h {
                let mut bytes = vec![0u8; nbytes];
                for x in 0..g.width() {
                    if g.get(x, y) {
                        bytes[x / 8] |= 0x80 >> (x % 8);
                    }
                }
                for b in bytes {
                    let _ = write!(s, "{b:02X}");
                }
                s.push('\n');
            }
            let _ = writeln!(s, "ENDCHAR");
        }
        let _ = writeln!(s, "ENDFONT");
        s
    }
}

fn parse_box(args: &[&str]) -> Option<(usize, usize, i64, i64)> {
    if args.len() != 4 {
        return None;
    }
    Some((
        args[0].parse().ok()?,
        args[1].parse().ok()?,
        args[2].parse().ok()?,
        args[3].parse().ok()?,
    ))
}

fn decode_hex_row(hex: &str, width: usize) -> std::result::Result<Vec<u8>, String> {
    let need = width.div_ceil(8);
    if !hex.len().is_multiple_of(2) || hex.len() / 2 < need {
        return Err(format!("bitmap row {hex:?} too short for width {width}"));
    }
    (0..hex.len() / 2)
        .map(|i| {
            u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|_| format!("invalid hex in bitmap row {hex:?}"))
        })
        .collect()
}
