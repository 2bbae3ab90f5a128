use handover::io::{load, read_dataset, save, write_dataset, IoError};
use handover_core::dataset::{generate_synthetic, GeneratorConfig};
use handover_core::HandoverDataset;

fn to_bytes(d: &HandoverDataset) -> Vec<u8> {
    let mut buf = Vec::new();
    write_dataset(d, &mut buf).unwrap();
    buf
}

#[test]
fn empty_dataset_is_header_only() {
    let bytes = to_bytes(&HandoverDataset::default());
    let text = String::from_utf8(bytes.clone()).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert_eq!(read_dataset(&bytes[..]).unwrap().len(), 0);
}

#[test]
fn thousand_pairs_round_trip_exactly() {
    let data = generate_synthetic(&GeneratorConfig::default(), 7).unwrap();
    assert_eq!(data.len(), 1000);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.jsonl");
    save(&data, &path).unwrap();
    let back = load(&path).unwrap();
    assert_eq!(back, data);
    assert_eq!(to_bytes(&back), std::fs::read(&path).unwrap());
}

#[test]
fn same_seed_serializes_identically() {
    let cfg = GeneratorConfig::with_counts(20, 5);
    assert_eq!(to_bytes(&generate_synthetic(&cfg, 3).unwrap()), to_bytes(&generate_synthetic(&cfg, 3).unwrap()));
}

fn edit_line(bytes: &[u8], line: usize, f: impl Fn(&mut serde_json::Value)) -> Vec<u8> {
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut v: serde_json::Value = serde_json::from_str(&lines[line]).unwrap();
    f(&mut v);
    lines[line] = v.to_string();
    (lines.join("\n") + "\n").into_bytes()
}

#[test]
fn non_monotonic_timestamps_name_the_pair() {
    let data = generate_synthetic(&GeneratorConfig::with_counts(4, 1), 1).unwrap();
    let bytes = edit_line(&to_bytes(&data), 3, |v| {
        v["receiver"][5][0] = v["receiver"][4][0].clone();
    });
    let err = read_dataset(&bytes[..]).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, IoError::InvalidPair { line: 4, .. }), "{msg}");
    assert!(msg.contains(&data.pairs()[2].id), "{msg}");
    assert!(msg.contains("not strictly increasing"), "{msg}");
}

#[test]
fn malformed_records_report_line_numbers() {
    let data = generate_synthetic(&GeneratorConfig::with_counts(3, 1), 1).unwrap();
    let mut text = String::from_utf8(to_bytes(&data)).unwrap();
    text = text.replacen("\"label\":\"OOD\"", "\"label\":\"maybe\"", 1);
    match read_dataset(text.as_bytes()) {
        Err(IoError::Malformed { line, .. }) => assert_eq!(line, 5),
        other => panic!("{other:?}"),
    }
    assert!(matches!(read_dataset(&b""[..]), Err(IoError::Malformed { line: 1, .. })));
    let full = String::from_utf8(to_bytes(&data)).unwrap();
    let truncated: Vec<&str> = full.lines().take(3).collect();
    assert!(matches!(
        read_dataset(truncated.join("\n").as_bytes()),
        Err(IoError::CountMismatch { declared: 4, found: 2 })
    ));
    let dup = edit_line(&to_bytes(&data), 2, |v| v["id"] = data.pairs()[0].id.clone().into());
    assert!(read_dataset(&dup[..]).is_err());
}

#[test]
fn missing_file_is_an_error() {
    let err = load(std::path::Path::new("/nonexistent/data.jsonl")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/data.jsonl"));
}
