use pdm_core::{decode_fmap, encode_fmap, load_fmap, save_fmap, FeatureBundle};
use pdm_testkit::synthetic;
use proptest::prelude::*;

fn strategy() -> impl Strategy<Value = FeatureBundle> {
    (
        any::<u64>(),
        (1usize..=6, 1usize..=6, 1usize..=16),
        "[a-z0-9_/]{0,12}",
        "\\PC{0,8}",
        any::<u32>(),
    )
        .prop_map(|(seed, (h, w, d), id, class, t)| {
            let mut rng = synthetic::seeded(seed);
            let mut b = synthetic::random_bundle(&mut rng, &id, h, w, d);
            b.class_name = class;
            b.timestep = t;
            b
        })
}

fn bits(b: &FeatureBundle) -> Vec<u32> {
    b.appearance
        .as_slice()
        .iter()
        .chain(b.semantic.as_slice())
        .chain(&b.class_token)
        .map(|v| v.to_bits())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn write_then_read_is_identity(b in strategy()) {
        let bytes = encode_fmap(&b).unwrap();
        prop_assert_eq!(&bytes, &encode_fmap(&b).unwrap());
        let back = decode_fmap(&bytes).unwrap();
        prop_assert_eq!(bits(&back), bits(&b));
        prop_assert_eq!(&back, &b);
    }

    #[test]
    fn negative_zero_and_subnormals_survive(seed in any::<u64>()) {
        let mut rng = synthetic::seeded(seed);
        let mut b = synthetic::random_bundle(&mut rng, "z", 2, 2, 3);
        b.class_token = vec![-0.0, f32::MIN_POSITIVE / 4.0, f32::MAX];
        let back = decode_fmap(&encode_fmap(&b).unwrap()).unwrap();
        prop_assert_eq!(bits(&back), bits(&b));
    }
}

#[test]
fn every_malformed_stream_has_its_code() {
    let good = encode_fmap(&synthetic::layout_bundle()).unwrap();
    assert!(decode_fmap(&good).is_ok());
    for (name, bytes, code) in synthetic::malformed_streams(&good) {
        let err = decode_fmap(&bytes).expect_err(name);
        assert_eq!(err.code(), code, "{name}: {err}");
    }
}

#[test]
fn file_round_trip_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.fmap");
    let b = synthetic::layout_bundle();
    save_fmap(&b, &path).unwrap();
    assert_eq!(load_fmap(&path).unwrap(), b);
    assert_eq!(
        load_fmap(dir.path().join("nope.fmap")).unwrap_err().code(),
        "io"
    );
}
