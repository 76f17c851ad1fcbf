//! Files written by the Python exporter under `tests/fixtures/bridge` must
//! read back bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use syllabion_core::io::{read_manifest, read_tensor, StnsTensor};
use syllabion_core::pipeline::extract_features;
use syllabion_core::Config;

#[derive(Deserialize)]
struct Expected {
    shape: Vec<usize>,
    bits: Vec<String>,
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bridge")
}

fn expected() -> BTreeMap<String, Expected> {
    serde_json::from_str(&fs::read_to_string(fixture().join("expected_bits.json")).unwrap()).unwrap()
}

#[test]
fn tensors_are_bit_exact() {
    let exp = expected();
    assert_eq!(exp.len(), 4);
    for (rel, e) in &exp {
        let t = StnsTensor::read(fixture().join(rel)).unwrap();
        assert_eq!(t.shape, e.shape, "{rel}");
        let got: Vec<String> = t.data.iter().map(|v| format!("{:08x}", v.to_bits())).collect();
        assert_eq!(&got, &e.bits, "{rel}");
        // Re-encoding reproduces the exporter's bytes exactly.
        assert_eq!(t.encode().unwrap(), fs::read(fixture().join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn special_values_survive() {
    let t = StnsTensor::read(fixture().join("features/spk0_utt0.layer8.stns")).unwrap();
    let d = &t.data;
    assert!(d[0] == 0.0 && d[0].is_sign_negative());
    assert!(d[7].is_subnormal());
    assert_eq!(d[14], f32::MAX);
    assert_eq!(d[21], -f32::MIN_POSITIVE);
    assert_eq!(d[28], 1.0f32 / 3.0);
}

#[test]
fn manifest_resolves_layer_templates_and_alignments() {
    let records = read_manifest(fixture().join("manifest.jsonl")).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0].utterance_id, "spk0/utt0");
    assert!(records.iter().all(|r| r.audio.is_none()));
    let al = records[0].alignments.as_ref().unwrap();
    assert_eq!(al.iter().map(|a| a.label.as_str()).collect::<Vec<_>>(), ["ka", "ba"]);
    assert!(al.windows(2).all(|w| w[0].start <= w[1].start));

    for layer in [8, 9] {
        let f = read_tensor(records[1].feature_path(Some(layer)).unwrap()).unwrap();
        assert_eq!((f.num_frames(), f.dim()), (7, 6));
    }
    assert!(!records[0].feature_path(Some(7)).unwrap().exists());

    let info: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixture().join("export.json")).unwrap()).unwrap();
    assert_eq!(info["frame_rate"], 50.0);
    assert_eq!(info["hidden_size"], 6);

    let feats = extract_features(&records, &Config::default(), None, 9).unwrap();
    assert_eq!(feats.features[0].dim(), (10, 6));
    assert_eq!(feats.frame_rate, 50.0);
    // Layer 9 differs from layer 8 by exactly one in every ordinary entry.
    let l8 = extract_features(&records, &Config::default(), None, 8).unwrap();
    assert_eq!(feats.features[1][[6, 5]] - l8.features[1][[6, 5]], 1.0);
}
