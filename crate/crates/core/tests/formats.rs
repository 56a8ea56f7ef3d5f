mod common;

use attrib_core::corpus::{
    self, load_binary, load_jsonl, write_binary, write_jsonl, EmbeddingCorpus,
};
use attrib_core::synth::{generate, SynthSpec};
use attrib_core::Error;
use proptest::prelude::*;
use std::io::Write;

fn bits(c: &EmbeddingCorpus) -> Vec<Vec<u32>> {
    c.records()
        .iter()
        .map(|r| r.embedding.as_slice().iter().map(|x| x.to_bits()).collect())
        .collect()
}

fn both_round_trips(c: &EmbeddingCorpus) {
    let dir = tempfile::tempdir().unwrap();
    let j = dir.path().join("c.jsonl");
    let b = dir.path().join("c.atk");
    write_jsonl(c, &j).unwrap();
    write_binary(c, &b).unwrap();
    let from_j = load_jsonl(&j).unwrap();
    let from_b = load_binary(&b).unwrap();
    assert_eq!(&from_j, c);
    assert_eq!(&from_b, c);
    assert_eq!(bits(&from_j), bits(c));
    assert_eq!(bits(&from_b), bits(c));
    assert_eq!(from_j, from_b);
}

#[test]
fn ten_record_round_trip() {
    let spec = SynthSpec {
        n_models: 2,
        n_prompts: 1,
        k_per_cell: 5,
        dim: 16,
        seed: 3,
        ..SynthSpec::default()
    };
    let c = generate(&spec).unwrap();
    assert_eq!(c.len(), 10);
    both_round_trips(&c);
}

#[test]
fn ten_thousand_record_round_trip() {
    let spec = SynthSpec {
        n_models: 10,
        n_prompts: 50,
        k_per_cell: 20,
        dim: 32,
        seed: 5,
        ..SynthSpec::default()
    };
    let c = generate(&spec).unwrap();
    assert_eq!(c.len(), 10_000);
    both_round_trips(&c);
}

#[test]
fn unnormalized_round_trip_keeps_flag() {
    let spec = SynthSpec {
        n_models: 3,
        n_prompts: 2,
        k_per_cell: 4,
        dim: 8,
        normalize: false,
        ..SynthSpec::default()
    };
    let c = generate(&spec).unwrap();
    assert!(!c.is_normalized());
    both_round_trips(&c);
}

#[test]
fn extension_dispatch() {
    let spec = SynthSpec {
        n_models: 2,
        n_prompts: 2,
        k_per_cell: 2,
        dim: 4,
        ..SynthSpec::default()
    };
    let c = generate(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.jsonl", "a.ndjson", "a.bin", "a"] {
        let p = dir.path().join(name);
        corpus::save(&c, &p).unwrap();
        assert_eq!(corpus::load(&p).unwrap(), c, "{name}");
    }
    let text = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(text[0], b'{');
    let bin = std::fs::read(dir.path().join("a.bin")).unwrap();
    assert_eq!(&bin[..4], b"ATK1");
}

#[test]
fn jsonl_without_sidecar_infers_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("plain.jsonl");
    let mut f = std::fs::File::create(&p).unwrap();
    writeln!(
        f,
        r#"{{"prompt_id":"b","model_id":"y","seed":1,"embedding":[1.0,0.0]}}"#
    )
    .unwrap();
    writeln!(f).unwrap();
    writeln!(
        f,
        r#"{{"prompt_id":"a","model_id":"x","seed":-4,"embedding":[0.5,0.25]}}"#
    )
    .unwrap();
    drop(f);
    let c = load_jsonl(&p).unwrap();
    assert_eq!(c.len(), 2);
    assert_eq!(c.model_ids(), ["y", "x"]);
    assert_eq!(c.prompt_ids(), ["b", "a"]);
    assert_eq!(c.manifest().encoder_name, "unknown");
    assert!(!c.is_normalized());
    assert_eq!(c.records()[1].seed, -4);
}

#[test]
fn jsonl_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            "{\"prompt_id\":\"a\",\"model_id\":\"x\",\"seed\":1,\"embedding\":[1.0,0.0]}\n{\"prompt_id\":\"a\",\"model_id\":\"x\",\"seed\":2,\"embedding\":[1.0]}\n",
            "line 2",
        ),
        ("{\"prompt_id\":\"a\",\"model_id\":\"x\",\"seed\":1,\"embedding\":[1.0]}\nnot json\n", "line 2"),
        (
            "{\"prompt_id\":\"a\",\"model_id\":\"x\",\"seed\":1,\"embedding\":[1.0]}\n{\"prompt_id\":\"a\",\"model_id\":\"x\",\"seed\":1,\"embedding\":[2.0]}\n",
            "duplicate",
        ),
        ("", "empty"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let p = dir.path().join(format!("bad{i}.jsonl"));
        std::fs::write(&p, text).unwrap();
        let err = load_jsonl(&p).unwrap_err().to_string();
        assert!(err.contains(needle), "{err}");
    }
}

#[test]
fn binary_truncation_and_corruption() {
    let spec = SynthSpec {
        n_models: 2,
        n_prompts: 1,
        k_per_cell: 3,
        dim: 4,
        ..SynthSpec::default()
    };
    let c = generate(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.bin");
    write_binary(&c, &p).unwrap();
    let full = std::fs::read(&p).unwrap();
    for cut in [0, 3, 10, full.len() / 2, full.len() - 1] {
        std::fs::write(&p, &full[..cut]).unwrap();
        let err = load_binary(&p).unwrap_err();
        assert!(matches!(err, Error::Truncated { .. }), "cut {cut}: {err}");
    }
    let mut bad = full.clone();
    bad[0] = b'X';
    std::fs::write(&p, &bad).unwrap();
    assert!(matches!(load_binary(&p).unwrap_err(), Error::BadMagic(_)));
    let mut bad = full.clone();
    bad[4] = 9;
    std::fs::write(&p, &bad).unwrap();
    assert!(matches!(
        load_binary(&p).unwrap_err(),
        Error::VersionMismatch { .. }
    ));
}

#[test]
fn missing_file_is_io_error() {
    let err = corpus::load("/nonexistent/dir/x.jsonl").unwrap_err();
    assert!(err.is_io());
    let err = corpus::load("/nonexistent/dir/x.bin").unwrap_err();
    assert!(err.is_io());
}

fn arbitrary_f32() -> impl Strategy<Value = f32> {
    prop_oneof![
        any::<f32>().prop_filter("finite", |x| x.is_finite()),
        Just(f32::MIN_POSITIVE / 8.0),
        Just(-0.0f32),
        Just(f32::MAX),
        Just(f32::MIN),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn arbitrary_values_round_trip(values in prop::collection::vec(prop::collection::vec(arbitrary_f32(), 3), 1..12)) {
        let records = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| common::record(&format!("p{}", i % 3), &format!("m {}", i % 2), i as i64 - 5, v))
            .collect();
        let c = common::corpus_of(records);
        both_round_trips(&c);
    }
}
