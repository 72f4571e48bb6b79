use std::ffi::{CStr, CString};
use std::ptr;

use evhin_ffi::*;

fn last_error() -> String {
    let p = evhin_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn write_corpus(dir: &std::path::Path) -> CString {
    let path = dir.join("corpus.jsonl");
    let lines = [
        r#"{"id":"a1","time":100,"user":"u1","keywords":["fire","roof"],"entities":["cathedral"]}"#,
        r#"{"id":"a2","time":200,"user":"u2","keywords":["fire","roof"],"entities":["cathedral"]}"#,
        r#"{"id":"b1","time":300,"user":"u3","keywords":["match","goal"],"entities":["stadium"]}"#,
        r#"{"id":"b2","time":400,"user":"u4","keywords":["match","goal"],"entities":["stadium"]}"#,
    ];
    std::fs::write(&path, lines.join("\n")).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

#[test]
fn corpus_to_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path());
    unsafe {
        let mut hin = ptr::null_mut();
        assert_eq!(evhin_hin_from_corpus(corpus.as_ptr(), ptr::null(), 1800, &mut hin), EvhinStatus::Ok);
        let mut n = 0;
        assert_eq!(evhin_hin_instance_count(hin, &mut n), EvhinStatus::Ok);
        assert_eq!(n, 4);

        let mut paths = ptr::null_mut();
        assert_eq!(evhin_pathset_detection(0, &mut paths), EvhinStatus::Ok);
        let mut m = 0;
        assert_eq!(evhin_pathset_len(paths, &mut m), EvhinStatus::Ok);
        assert!(m > 0);

        let mut k = vec![0.0; 16];
        assert_eq!(evhin_kies_matrix(hin, paths, ptr::null(), 0, k.as_mut_ptr(), 1), EvhinStatus::BufferTooSmall);
        assert_eq!(evhin_kies_matrix(hin, paths, ptr::null(), 0, k.as_mut_ptr(), 16), EvhinStatus::Ok);
        assert_eq!(k[1], k[4]);
        assert!(k[1] > k[2]);

        let mut dist = ptr::null_mut();
        assert_eq!(evhin_distance_from_kies(hin, paths, ptr::null(), 0, &mut dist), EvhinStatus::Ok);
        let mut labels = [9i64; 4];
        assert_eq!(evhin_cluster(dist, 0.8, 1, 2, labels.as_mut_ptr(), 4), EvhinStatus::Ok);
        assert_eq!(labels, [0, 0, 1, 1]);

        let mut score = 0.0;
        let truth = [5i64, 5, 7, 7];
        assert_eq!(evhin_nmi(labels.as_ptr(), truth.as_ptr(), 4, &mut score), EvhinStatus::Ok);
        assert_eq!(score, 1.0);

        evhin_distance_free(dist);
        evhin_pathset_free(paths);
        evhin_hin_free(hin);
    }
}

#[test]
fn dense_distances_and_popularity() {
    unsafe {
        let d = [0.0, 0.2, 0.9, 0.2, 0.0, 0.9, 0.9, 0.9, 0.0];
        let mut dist = ptr::null_mut();
        assert_eq!(evhin_distance_from_dense(d.as_ptr(), 3, &mut dist), EvhinStatus::Ok);
        let mut n = 0;
        assert_eq!(evhin_distance_len(dist, &mut n), EvhinStatus::Ok);
        assert_eq!(n, 3);
        let mut labels = [0i64; 3];
        assert_eq!(evhin_cluster(dist, 0.3, 2, 1, labels.as_mut_ptr(), 3), EvhinStatus::Ok);
        assert_eq!(labels, [0, 0, -1]);
        evhin_distance_free(dist);

        let (a, b) = ([3.0, 4.0], [6.0, 8.0]);
        let mut s = 0.0;
        assert_eq!(evhin_popularity_score(a.as_ptr(), a.as_ptr(), 2, 0.01, &mut s), EvhinStatus::Ok);
        assert_eq!(s, 2.0);
        assert_eq!(evhin_popularity_score(a.as_ptr(), b.as_ptr(), 2, 0.01, &mut s), EvhinStatus::Ok);
        assert!(s < 0.0);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut hin = ptr::null_mut();
        let missing = CString::new("/nonexistent/corpus.jsonl").unwrap();
        assert_eq!(evhin_hin_from_corpus(missing.as_ptr(), ptr::null(), 1800, &mut hin), EvhinStatus::Io);
        assert!(last_error().contains("/nonexistent/corpus.jsonl"));
        assert!(hin.is_null());

        assert_eq!(evhin_hin_from_corpus(ptr::null(), ptr::null(), 1800, &mut hin), EvhinStatus::NullPointer);
        assert!(last_error().contains("corpus_path"));

        let mut n = 0;
        assert_eq!(evhin_hin_instance_count(ptr::null(), &mut n), EvhinStatus::NullPointer);

        let bad = [0.0, 1.5, 1.5, 0.0];
        let mut dist = ptr::null_mut();
        assert_eq!(evhin_distance_from_dense(bad.as_ptr(), 2, &mut dist), EvhinStatus::InvalidArgument);

        let zero = [0.0, 0.0];
        let mut s = 0.0;
        assert_eq!(
            evhin_popularity_score(zero.as_ptr(), zero.as_ptr(), 2, 0.01, &mut s),
            EvhinStatus::InvalidArgument
        );

        let (p, t) = ([0i64], [0i64]);
        assert_eq!(evhin_nmi(p.as_ptr(), t.as_ptr(), 0, &mut s), EvhinStatus::InvalidArgument);

        // freeing null is a no-op
        evhin_hin_free(ptr::null_mut());
        evhin_pathset_free(ptr::null_mut());
        evhin_distance_free(ptr::null_mut());
    }
}

#[test]
fn snapshot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path());
    let snap = dir.path().join("hin.json");
    let parsed = evhin::ingest::read_corpus_file(std::path::Path::new(corpus.to_str().unwrap())).unwrap();
    let hin = evhin::ingest::build_hin(&parsed.records, &Default::default(), 1800).unwrap();
    std::fs::write(&snap, serde_json::to_string(&hin.to_snapshot()).unwrap()).unwrap();
    let path = CString::new(snap.to_str().unwrap()).unwrap();
    unsafe {
        let mut hin = ptr::null_mut();
        assert_eq!(evhin_hin_load(path.as_ptr(), &mut hin), EvhinStatus::Ok);
        let mut n = 0;
        assert_eq!(evhin_hin_instance_count(hin, &mut n), EvhinStatus::Ok);
        assert_eq!(n, 4);
        evhin_hin_free(hin);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/evhin.h")).unwrap();
    for name in [
        "evhin_last_error",
        "evhin_hin_from_corpus",
        "evhin_hin_load",
        "evhin_hin_free",
        "evhin_pathset_detection",
        "evhin_pathset_evolution",
        "evhin_kies_matrix",
        "evhin_distance_from_kies",
        "evhin_distance_from_dense",
        "evhin_cluster",
        "evhin_nmi",
        "evhin_popularity_score",
        "EVHIN_STATUS_PANIC",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
