use std::path::Path;

use jeap_core::io::config::{parse_config, serialize_config};
use jeap_core::io::container::{Container, Payload};

fn fixture() -> Vec<u8> {
    std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/small.jeap")).unwrap()
}

#[test]
fn fixture_decodes_little_endian() {
    let c = Container::decode(&fixture()).unwrap();
    let names: Vec<&str> = c.records().iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["weights", "center", "note"]);
    let w = c.get("weights").unwrap();
    assert_eq!(w.dims, [2, 3]);
    match &w.payload {
        Payload::F32(v) => {
            let bits: Vec<u32> = v.iter().map(|x| x.to_bits()).collect();
            let want: Vec<u32> = [1.0f32, -2.5, 0.125, 3.0e-8, 65504.0, -0.0].iter().map(|x| x.to_bits()).collect();
            assert_eq!(bits, want);
        }
        other => panic!("unexpected payload {other:?}"),
    }
    match &c.get("center").unwrap().payload {
        Payload::F64(v) => {
            let want = [0.1, -1e300, f64::from_bits(1), 1.0 / 3.0];
            assert_eq!(v.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), want.map(f64::to_bits));
        }
        other => panic!("unexpected payload {other:?}"),
    }
    assert_eq!(c.bytes("note").unwrap(), b"hello");
}

#[test]
fn fixture_reencodes_byte_identically() {
    let bytes = fixture();
    assert_eq!(Container::decode(&bytes).unwrap().encode(), bytes);
}

#[test]
fn corrupted_fixture_is_rejected() {
    let mut bytes = fixture();
    bytes[30] ^= 1;
    assert!(Container::decode(&bytes).is_err());
    let bytes = fixture();
    assert!(Container::decode(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn committed_desk_config_round_trips() {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.cfg")).unwrap();
    let cfg = parse_config(&text).unwrap();
    let again = parse_config(&serialize_config(&cfg)).unwrap();
    assert_eq!(cfg, again);
}
