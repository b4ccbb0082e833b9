mod common;

use common::formats;

#[test]
fn mels_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    formats::mels(dir.path()).unwrap();
}

#[test]
fn weight_files_round_trip_and_detect_corruption() {
    let dir = tempfile::tempdir().unwrap();
    formats::sgw1(dir.path()).unwrap();
}

#[test]
fn protocol_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    formats::protocol(dir.path()).unwrap();
}

#[test]
fn score_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    formats::scores(dir.path()).unwrap();
}
