//! Frozen bitstreams. Regenerate with `SCODEC_BLESS=1 cargo test --test golden`
//! after an intentional format or model change.

mod common;

use std::path::PathBuf;

use common::{fuzz_image, tiny_store};
use scodec::kv::KeyValues;
use scodec::nets::WeightStore;
use scodec::pipeline::image_io::{load_image, save_image, to_rgb8};
use scodec::pipeline::{Codec, DecodeOptions, EncodeOptions};
use sha2::{Digest, Sha256};

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn bless() -> bool {
    std::env::var("SCODEC_BLESS").is_ok_and(|v| v == "1")
}

#[test]
fn golden_container_is_stable() {
    let d = dir();
    let store = tiny_store(7);
    if bless() {
        std::fs::create_dir_all(&d).unwrap();
        save_image(d.join("input.png"), &fuzz_image(72, 100, 11)).unwrap();
        store.save(d.join("tiny.scwt")).unwrap();
    }
    let image = load_image(d.join("input.png")).expect("missing fixture; run with SCODEC_BLESS=1");
    let stored = WeightStore::load(d.join("tiny.scwt")).unwrap();
    assert_eq!(stored.model_id(), store.model_id(), "weight generator drifted");

    let codec = Codec::new(&store).unwrap();
    let enc = codec.encode(&image, &EncodeOptions::default()).unwrap();
    let dec = codec.decode(&enc.bytes, &DecodeOptions::default()).unwrap();
    let decoded = to_rgb8(&dec.image).unwrap();

    let mut kv = KeyValues::default();
    kv.set("width", image.width());
    kv.set("height", image.height());
    kv.set("model_id", store.model_id());
    kv.set("container_bytes", enc.bytes.len());
    kv.set("container_sha256", hex(&enc.bytes));
    kv.set("decoded_sha256", hex(decoded.as_raw()));
    if bless() {
        std::fs::write(d.join("tiny.scbs"), &enc.bytes).unwrap();
        std::fs::write(d.join("expected.txt"), kv.to_text()).unwrap();
    }
    let expected = KeyValues::parse(&std::fs::read_to_string(d.join("expected.txt")).unwrap()).unwrap();
    assert_eq!(kv, expected);
    assert_eq!(std::fs::read(d.join("tiny.scbs")).unwrap(), enc.bytes);
}
