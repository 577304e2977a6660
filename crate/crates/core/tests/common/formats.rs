//! Property-test strategies and round-trip properties for the on-disk formats.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use glyphfuse::data::checkpoint::{checkpoint_bytes, params_from_bytes};
use glyphfuse::data::EmbeddingTable;
use glyphfuse::glyph::{Bitmap, BitmapFont};
use glyphfuse::params::ModelParams;
use glyphfuse::tensor::Tensor;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

/// Any finite f32, drawn by bit pattern so signed zeros and subnormals occur.
pub fn finite_f32() -> impl Strategy<Value = f32> {
    prop_oneof![
        any::<u32>()
            .prop_map(f32::from_bits)
            .prop_filter("finite", |v| v.is_finite()),
        Just(-0.0f32),
        Just(f32::MIN_POSITIVE / 4.0),
        -1.0f32..1.0,
    ]
}

pub fn gemb_table() -> impl Strategy<Value = EmbeddingTable> {
    (1usize..12, prop::collection::btree_set(any::<u64>(), 0..12)).prop_flat_map(|(dim, ids)| {
        let n = ids.len();
        prop::collection::vec(prop::collection::vec(finite_f32(), dim), n).prop_map(move |vecs| {
            let mut t = EmbeddingTable::new(dim).unwrap();
            for (id, v) in ids.iter().zip(vecs) {
                t.insert(*id, v).unwrap();
            }
            t
        })
    })
}

pub fn model_params() -> impl Strategy<Value = ModelParams<f32>> {
    let tensor = prop::collection::vec(1usize..5, 1..4).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        prop::collection::vec(finite_f32(), n).prop_map(move |d| Tensor::new(shape.clone(), d).unwrap())
    });
    prop::collection::btree_map("[a-z][a-z0-9_.]{0,24}", tensor, 1..6).prop_map(|m| {
        let mut p = ModelParams::new();
        for (k, t) in m {
            p.insert(k, t);
        }
        p
    })
}

fn bitmap(w: usize, h: usize) -> impl Strategy<Value = Bitmap> {
    prop::collection::vec(any::<bool>(), w * h).prop_map(move |bits| Bitmap::new(w, h, bits).unwrap())
}

pub fn font() -> impl Strategy<Value = BitmapFont> {
    (1usize..20, 1usize..12).prop_flat_map(|(h, dw)| {
        let glyph = (1usize..20).prop_flat_map(move |w| bitmap(w, h));
        let chars = prop::collection::btree_set(
            prop_oneof![0x21u32..0x7f, 0x900u32..0x980, 0x4e00u32..0x4f00].prop_map(|c| char::from_u32(c).unwrap()),
            1..10,
        );
        (chars, prop::collection::vec(glyph, 10)).prop_map(move |(cs, gs): (BTreeSet<char>, Vec<Bitmap>)| {
            let glyphs: BTreeMap<char, Bitmap> = cs.into_iter().zip(gs).collect();
            BitmapFont::new(h, glyphs, dw).unwrap()
        })
    })
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

pub fn gemb_round_trip(t: &EmbeddingTable) -> Result<(), TestCaseError> {
    let bytes = t.to_bytes();
    prop_assert_eq!(bytes.len(), 20 + t.len() * (8 + 4 * t.dim()));
    let back = EmbeddingTable::from_bytes(&bytes).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(back.dim(), t.dim());
    prop_assert_eq!(back.len(), t.len());
    for ((ia, va), (ib, vb)) in t.iter().zip(back.iter()) {
        prop_assert_eq!(ia, ib);
        prop_assert_eq!(bits(va), bits(vb));
    }
    prop_assert_eq!(back.to_bytes(), bytes);
    Ok(())
}

pub fn gfck_round_trip(p: &ModelParams<f32>) -> Result<(), TestCaseError> {
    let bytes = checkpoint_bytes(p).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let back = params_from_bytes(&bytes).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(back.names().collect::<Vec<_>>(), p.names().collect::<Vec<_>>());
    for ((_, a), (_, b)) in p.iter().zip(back.iter()) {
        prop_assert_eq!(a.shape(), b.shape());
        prop_assert_eq!(bits(a.data()), bits(b.data()));
    }
    prop_assert_eq!(checkpoint_bytes(&back).unwrap(), bytes);
    Ok(())
}

pub fn bdf_round_trip(f: &BitmapFont) -> Result<(), TestCaseError> {
    let text = f.to_bdf("prop");
    let back = BitmapFont::parse_bdf(&text, Path::new("prop.bdf")).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(back.height(), f.height());
    prop_assert_eq!(back.glyphs(), f.glyphs());
    prop_assert_eq!(back.to_bdf("prop"), text);
    Ok(())
}
