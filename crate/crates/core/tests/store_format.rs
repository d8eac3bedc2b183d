use std::collections::BTreeSet;

use conceptprobe_core::store::{read_dictionary, read_embeddings, write_embeddings, write_terms, EMBD_HEADER_LEN};
use conceptprobe_core::{ConceptTerm, EmbeddingMatrix};
use proptest::prelude::*;

fn finite_f32() -> impl Strategy<Value = f32> {
    any::<u32>()
        .prop_map(f32::from_bits)
        .prop_filter("finite", |v| v.is_finite())
}

fn matrix(max_rows: usize, max_dim: usize) -> impl Strategy<Value = EmbeddingMatrix> {
    (0..=max_rows, 1..=max_dim)
        .prop_flat_map(|(rows, dim)| {
            (
                prop::collection::btree_set("[a-zA-Z0-9_é\"\\\\ -]{1,12}", rows),
                prop::collection::vec(finite_f32(), rows * dim),
                Just(dim),
            )
        })
        .prop_map(|(ids, data, dim): (BTreeSet<String>, Vec<f32>, usize)| {
            EmbeddingMatrix::new(ids.into_iter().collect(), dim, data).unwrap()
        })
}

fn bits(m: &EmbeddingMatrix) -> Vec<u32> {
    m.data().iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn files_round_trip_bit_exactly(m in matrix(12, 10)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.embd");
        write_embeddings(&m, &path).unwrap();
        let back = read_embeddings(&path).unwrap();
        prop_assert_eq!(back.ids(), m.ids());
        prop_assert_eq!(back.dim(), m.dim());
        prop_assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn any_truncation_is_rejected(m in matrix(6, 6), cut in any::<prop::sample::Index>()) {
        let bytes = m.to_bytes();
        let len = cut.index(bytes.len());
        prop_assert!(EmbeddingMatrix::from_bytes(&bytes[..len]).is_err());
    }
}

#[test]
fn every_single_byte_header_corruption_is_rejected() {
    let m = EmbeddingMatrix::new(
        vec!["a".into(), "b".into(), "c".into()],
        4,
        (0..12).map(|v| v as f32 * 0.25).collect(),
    )
    .unwrap();
    let bytes = m.to_bytes();
    let trailer_len_at = EMBD_HEADER_LEN + 4 * 12;
    let positions = (0..EMBD_HEADER_LEN).chain(trailer_len_at..trailer_len_at + 8);
    for pos in positions {
        for x in 1..=255u8 {
            let mut bad = bytes.clone();
            bad[pos] ^= x;
            assert!(
                EmbeddingMatrix::from_bytes(&bad).is_err(),
                "corruption at byte {pos} with xor {x:#04x} accepted"
            );
        }
    }
}

#[test]
fn one_by_four_file_has_expected_size() {
    let m = EmbeddingMatrix::new(vec!["a".into()], 4, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let bytes = m.to_bytes();
    assert_eq!(bytes.len(), EMBD_HEADER_LEN + 16 + 8 + br#"["a"]"#.len());
    assert_eq!(&bytes[..4], b"EMBD");
}

#[test]
fn loaded_dictionary_rows_follow_term_order() {
    let dir = tempfile::tempdir().unwrap();
    let terms: Vec<ConceptTerm> = ["x", "y", "z"]
        .iter()
        .map(|id| ConceptTerm::new(*id, format!("term {id}")))
        .collect();
    write_terms(&terms, dir.path().join("t.jsonl")).unwrap();
    let emb = EmbeddingMatrix::new(
        vec!["x".into(), "y".into(), "z".into()],
        2,
        vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0],
    )
    .unwrap();
    write_embeddings(&emb, dir.path().join("t.embd")).unwrap();
    let dict = read_dictionary(dir.path().join("t.jsonl"), dir.path().join("t.embd")).unwrap();
    for (term, id) in dict.terms().iter().zip(dict.embedding().ids()) {
        assert_eq!(&term.id, id);
    }

    let shuffled = EmbeddingMatrix::new(vec!["y".into(), "x".into(), "z".into()], 2, vec![1.0; 6]).unwrap();
    write_embeddings(&shuffled, dir.path().join("s.embd")).unwrap();
    assert!(read_dictionary(dir.path().join("t.jsonl"), dir.path().join("s.embd")).is_err());
}
