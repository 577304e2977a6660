//! C ABI over the glyphfuse core.
//!
//! Objects are opaque handles created by `*_load` and released by `*_free`.
//! Every fallible call returns a [`GfStatus`]; on failure the message is
//! available from [`gf_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use glyphfuse::autodiff::argmax;
use glyphfuse::data::{load_checkpoint_for, read_gemb, EmbeddingTable};
use glyphfuse::encoder::CnnConfig;
use glyphfuse::fusion::{pair_sequence, predict_logits, ModelConfig, VisualInput};
use glyphfuse::glyph::{render_on, BitmapFont, Canvas, GlyphImage, Granularity, Segmenter};
use glyphfuse::params::ModelParams;
use glyphfuse::Error;

pub const GF_CANVAS_HEIGHT: usize = 30;
pub const GF_CANVAS_WIDTH: usize = 60;
pub const GF_N_CLASSES: usize = 3;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    Dimension = 5,
    Config = 6,
    Numerical = 7,
    BufferTooSmall = 8,
    NotFound = 9,
    Panic = 10,
    Other = 11,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GfGranularity {
    Word = 0,
    Char = 1,
}

/// Bitmap font.
pub struct GfFont(BitmapFont);

/// Contextual embedding table.
pub struct GfEmbeddings(EmbeddingTable);

/// Trained NLI model with its geometry.
pub struct GfModel {
    params: ModelParams<f32>,
    config: ModelConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(GfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) => GfStatus::Io,
            Error::Parse { .. } | Error::Format(_) | Error::Checkpoint(_) => GfStatus::Format,
            Error::Dimension { .. } => GfStatus::Dimension,
            Error::Config(_) => GfStatus::Config,
            Error::NonFinite(_) => GfStatus::Numerical,
            Error::MissingEmbedding(_) => GfStatus::NotFound,
            _ => GfStatus::Other,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: GfStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GfStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(GfStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(GfStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(GfStatus::NullArgument, format!("{what} is null")))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(fail(GfStatus::NullArgument, format!("{what} is null")));
    }
    if len < need {
        return Err(fail(
            GfStatus::BufferTooSmall,
            format!("{what} holds {len}, need {need}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(GfStatus::NullArgument, "output handle pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn gf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a BDF font.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_font_load(path: *const c_char, out: *mut *mut GfFont) -> GfStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        put(out, GfFont(BitmapFont::load_bdf(path)?))
    })
}

/// # Safety
/// `font` must come from [`gf_font_load`] and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gf_font_free(font: *mut GfFont) {
    if !font.is_null() {
        drop(Box::from_raw(font));
    }
}

/// Renders one segment onto the default 30x60 canvas, row-major, values in [0,1].
///
/// # Safety
/// `pixels` must point to at least `len` floats.
#[no_mangle]
pub unsafe extern "C" fn gf_render(
    font: *const GfFont,
    segment: *const c_char,
    pixels: *mut f32,
    len: usize,
) -> GfStatus {
    guard(|| {
        let font = ref_arg(font, "font")?;
        let text = str_arg(segment, "segment")?;
        let out = out_slice(pixels, len, GF_CANVAS_HEIGHT * GF_CANVAS_WIDTH, "pixels")?;
        let img = render_on(text, &font.0, Canvas::DEFAULT)?;
        out.copy_from_slice(img.pixels());
        Ok(())
    })
}

/// Reads a GEMB embedding table.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_embeddings_load(path: *const c_char, out: *mut *mut GfEmbeddings) -> GfStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        put(out, GfEmbeddings(read_gemb(path)?))
    })
}

/// Vector width, or 0 for a null handle.
///
/// # Safety
/// `emb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gf_embeddings_dim(emb: *const GfEmbeddings) -> usize {
    emb.as_ref().map_or(0, |e| e.0.dim())
}

/// Number of vectors, or 0 for a null handle.
///
/// # Safety
/// `emb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gf_embeddings_count(emb: *const GfEmbeddings) -> usize {
    emb.as_ref().map_or(0, |e| e.0.len())
}

/// Copies the vector for `id` into `out`.
///
/// # Safety
/// `out` must point to at least `len` floats.
#[no_mangle]
pub unsafe extern "C" fn gf_embeddings_get(emb: *const GfEmbeddings, id: u64, out: *mut f32, len: usize) -> GfStatus {
    guard(|| {
        let emb = ref_arg(emb, "embeddings")?;
        let v = emb
            .0
            .get(id)
            .ok_or_else(|| Failure::from(Error::MissingEmbedding(id)))?;
        out_slice(out, len, v.len(), "out")?.copy_from_slice(v);
        Ok(())
    })
}

/// # Safety
/// `emb` must come from [`gf_embeddings_load`] and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gf_embeddings_free(emb: *mut GfEmbeddings) {
    if !emb.is_null() {
        drop(Box::from_raw(emb));
    }
}

/// Loads a GFCK checkpoint. `preset` is null, `"default"` or `"paper-800"`;
/// `context_dim` is the width of the embeddings the model was trained on.
///
/// # Safety
/// `path` must be a NUL-terminated string, `preset` null or NUL-terminated,
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_model_load(
    path: *const c_char,
    context_dim: usize,
    preset: *const c_char,
    out: *mut *mut GfModel,
) -> GfStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let cnn = if preset.is_null() {
            CnnConfig::default()
        } else {
            CnnConfig::preset(str_arg(preset, "preset")?)?
        };
        let config = ModelConfig {
            cnn,
            context_dim,
            ..Default::default()
        };
        config.validate()?;
        let params = load_checkpoint_for(path, &config)?;
        put(out, GfModel { params, config })
    })
}

/// Classifies one premise/hypothesis pair. Writes 3 logits (entailment,
/// neutral, contradiction) to `logits` and their argmax to `label`; either
/// may be null.
///
/// # Safety
/// Handles must be live, strings NUL-terminated, `context` must point to
/// `context_len` floats and `logits` (if non-null) to `logits_len` floats.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn gf_model_predict(
    model: *const GfModel,
    font: *const GfFont,
    premise: *const c_char,
    hypothesis: *const c_char,
    granularity: GfGranularity,
    context: *const f32,
    context_len: usize,
    logits: *mut f32,
    logits_len: usize,
    label: *mut u32,
) -> GfStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let font = ref_arg(font, "font")?;
        let premise = str_arg(premise, "premise")?;
        let hypothesis = str_arg(hypothesis, "hypothesis")?;
        if context.is_null() {
            return Err(fail(GfStatus::NullArgument, "context is null"));
        }
        let context = std::slice::from_raw_parts(context, context_len);
        let seg = Segmenter::new(match granularity {
            GfGranularity::Word => Granularity::Word,
            GfGranularity::Char => Granularity::Char,
        });
        let canvas = model.config.cnn.canvas;
        let render = |text: &str| -> Result<Vec<GlyphImage>, Failure> {
            seg.segment(text)
                .iter()
                .map(|s| render_on(s, &font.0, canvas).map_err(Failure::from))
                .collect()
        };
        let seq = pair_sequence(&render(premise)?, &render(hypothesis)?);
        let z = predict_logits(&model.params, &model.config, VisualInput::Images(&seq), context)?;
        if !logits.is_null() {
            out_slice(logits, logits_len, z.len(), "logits")?.copy_from_slice(&z);
        }
        if !label.is_null() {
            *label = argmax(&z) as u32;
        }
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`gf_model_load`] and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gf_model_free(model: *mut GfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
