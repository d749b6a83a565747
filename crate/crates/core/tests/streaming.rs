mod common;

use std::path::Path;

use rtlsh::streaming::MainComponent;
use rtlsh::{
    Algo, C2lshIndex, Dataset, Error, MergePolicy, Neighbor, QalshIndex, QalshMode, SharedStreamingIndex, StreamConfig,
    StreamingIndex, VectorRecord,
};

const ALGOS: [Algo; 2] = [Algo::C2lsh, Algo::Qalsh];

fn batch_results(algo: Algo, data: &Dataset<f32>, queries: &Dataset<f32>, k: usize, seed: u64, final_n: usize) -> Vec<Vec<Neighbor>> {
    let (params, projections) = common::standard(final_n, data.dim(), k, seed);
    match algo {
        Algo::C2lsh => {
            let index = C2lshIndex::build_in_memory(data, params, projections, 4096).unwrap();
            queries.iter().map(|(_, q)| index.query(data, q, k).unwrap()).collect()
        }
        Algo::Qalsh => {
            let index = QalshIndex::build_in_memory(data, params, projections, 4096, QalshMode::Corrected).unwrap();
            queries.iter().map(|(_, q)| index.query(data, q, k).unwrap()).collect()
        }
    }
}

fn stream(dir: &Path, algo: Algo, preload: Dataset<f32>, final_n: usize, k: usize, seed: u64, policy: MergePolicy) -> StreamingIndex<f32> {
    let (params, projections) = common::standard(final_n, preload.dim(), k, seed);
    let mut config = StreamConfig::new(algo);
    config.policy = policy;
    StreamingIndex::with_preload(dir, preload, params, projections, config).unwrap()
}

fn stream_results(index: &StreamingIndex<f32>, queries: &Dataset<f32>, k: usize) -> Vec<Vec<Neighbor>> {
    queries.iter().map(|(_, q)| index.query_combined(q, k).unwrap()).collect()
}

#[test]
fn stream_then_merge_equals_batch() {
    let data = common::uniform(3000, 12, 40);
    let queries = common::uniform(50, 12, 41);
    for algo in ALGOS {
        let dir = tempfile::tempdir().unwrap();
        let want = batch_results(algo, &data, &queries, 10, 7, data.len());
        let mut s = stream(dir.path(), algo, data.prefix(2000), data.len(), 10, 7, MergePolicy::points(usize::MAX));
        for (_, p) in data.iter().skip(2000) {
            s.insert(p).unwrap();
        }
        assert_eq!(s.delta_len(), 1000);
        // combined query before the merge already sees the full point set
        assert_eq!(stream_results(&s, &queries, 10), want, "{algo} before merge");
        s.merge().unwrap();
        assert_eq!(s.delta_len(), 0);
        assert_eq!(stream_results(&s, &queries, 10), want, "{algo} after merge");
    }
}

#[test]
fn results_invariant_under_merge_points() {
    let data = common::uniform(600, 8, 50);
    let queries = common::uniform(50, 8, 51);
    for algo in ALGOS {
        let want = batch_results(algo, &data, &queries, 5, 3, data.len());
        for every in [1usize, 7, 60, 600] {
            let dir = tempfile::tempdir().unwrap();
            let mut s = stream(dir.path(), algo, data.prefix(500), data.len(), 5, 3, MergePolicy::points(every));
            for (_, p) in data.iter().skip(500) {
                s.insert(p).unwrap();
            }
            assert_eq!(stream_results(&s, &queries, 5), want, "{algo}, merge every {every}");
            if every == 1 {
                assert_eq!(s.merges(), 100);
            }
        }
    }
}

#[test]
fn empty_main_matches_batch() {
    let data = common::uniform(800, 6, 60);
    let queries = common::uniform(20, 6, 61);
    for algo in ALGOS {
        let dir = tempfile::tempdir().unwrap();
        let want = batch_results(algo, &data, &queries, 3, 9, data.len());
        let mut s = stream(dir.path(), algo, Dataset::new(6), data.len(), 3, 9, MergePolicy::points(usize::MAX));
        assert!(s.main().is_none());
        for (_, p) in data.iter() {
            s.insert(p).unwrap();
        }
        assert_eq!(s.main_len(), 0);
        assert_eq!(stream_results(&s, &queries, 3), want, "{algo}");

        // a merge into the empty main is the batch build itself
        s.merge().unwrap();
        let (params, projections) = common::standard(data.len(), 6, 3, 9);
        match (s.main().unwrap(), algo) {
            (MainComponent::C2lsh(m), Algo::C2lsh) => {
                let b = C2lshIndex::build_in_memory(&data, params, projections, 4096).unwrap();
                assert_eq!(m.files(), b.files());
            }
            (MainComponent::Qalsh(m), Algo::Qalsh) => {
                let b = QalshIndex::build_in_memory(&data, params, projections, 4096, QalshMode::Corrected).unwrap();
                assert_eq!(m.trees(), b.trees());
            }
            _ => unreachable!(),
        }
    }
}

#[test]
fn delta_only_query_matches_main_only_query() {
    let data = common::uniform(600, 5, 70);
    for algo in ALGOS {
        let dir = tempfile::tempdir().unwrap();
        let s = stream(dir.path(), algo, data.clone(), 1000, 4, 2, MergePolicy::default());
        let want = batch_results(algo, &data, &data.prefix(10), 4, 2, 1000);
        assert_eq!(stream_results(&s, &data.prefix(10), 4), want);
    }
}

#[test]
fn policy_of_two_merges_once_in_three_inserts() {
    let data = common::uniform(10, 4, 1);
    for algo in ALGOS {
        let dir = tempfile::tempdir().unwrap();
        let mut s = stream(dir.path(), algo, Dataset::new(4), 100, 1, 1, MergePolicy::points(2));
        for (_, p) in data.iter().take(3) {
            s.insert(p).unwrap();
        }
        assert_eq!(s.merges(), 1);
        assert_eq!((s.main_len(), s.delta_len()), (2, 1));
    }
}

#[test]
fn fraction_trigger() {
    let data = common::uniform(300, 4, 2);
    let dir = tempfile::tempdir().unwrap();
    let policy = MergePolicy {
        max_delta_points: None,
        max_delta_fraction: Some(0.1),
    };
    let mut s = stream(dir.path(), Algo::C2lsh, data.prefix(200), 300, 1, 1, policy);
    for (_, p) in data.iter().skip(200).take(19) {
        s.insert(p).unwrap();
    }
    assert_eq!(s.merges(), 0);
    s.insert(data.point(219)).unwrap();
    assert_eq!((s.merges(), s.main_len()), (1, 220));
}

#[test]
fn inserted_points_find_themselves() {
    let data = common::uniform(1000, 10, 80);
    for algo in ALGOS {
        let dir = tempfile::tempdir().unwrap();
        let mut s = stream(dir.path(), algo, Dataset::new(10), 1000, 1, 5, MergePolicy::default());
        for (_, p) in data.iter() {
            s.insert(p).unwrap();
        }
        s.merge().unwrap();
        for qi in (0..1000).step_by(50) {
            let got = s.query_combined(data.point(qi), 1).unwrap();
            assert_eq!((got[0].id, got[0].distance), (qi, 0.0), "{algo}");
        }
    }
}

#[test]
fn inserts_do_no_main_io_and_delta_partitions_ids() {
    let data = common::uniform(700, 6, 90);
    for algo in ALGOS {
        let dir = tempfile::tempdir().unwrap();
        let mut s = stream(dir.path(), algo, data.prefix(500), 700, 1, 5, MergePolicy::points(1000));
        s.query_combined(data.point(0), 1).unwrap();
        let before = s.io_stats();
        let main_dir = s.main_dir().unwrap();
        let snapshot: Vec<_> = std::fs::read_dir(&main_dir)
            .unwrap()
            .map(|e| std::fs::read(e.unwrap().path()).unwrap())
            .collect();
        for (_, p) in data.iter().skip(500) {
            s.insert(p).unwrap();
        }
        assert_eq!(s.io_stats(), before);
        let after: Vec<_> = std::fs::read_dir(&main_dir)
            .unwrap()
            .map(|e| std::fs::read(e.unwrap().path()).unwrap())
            .collect();
        assert_eq!(after, snapshot);

        for proj in [0, s.params().m - 1] {
            let mut ids = s.delta().ids(proj);
            match s.main().unwrap() {
                MainComponent::C2lsh(m) => ids.extend(m.files()[proj].payload()),
                MainComponent::Qalsh(m) => ids.extend(m.trees()[proj].pairs().map(|p| p.1)),
            }
            ids.sort_unstable();
            assert_eq!(ids, (0..700).collect::<Vec<_>>());
        }
    }
}

#[test]
fn merge_of_empty_delta_leaves_main_untouched() {
    let data = common::uniform(400, 4, 3);
    let dir = tempfile::tempdir().unwrap();
    let mut s = stream(dir.path(), Algo::Qalsh, data, 1000, 1, 1, MergePolicy::default());
    let main_dir = s.main_dir().unwrap();
    let read = |d: &Path| {
        let mut files: Vec<_> = std::fs::read_dir(d).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        files.iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>()
    };
    let before = read(&main_dir);
    s.merge().unwrap();
    assert_eq!(s.main_dir().unwrap(), main_dir);
    assert_eq!(read(&main_dir), before);
    assert_eq!(s.merges(), 0);
}

#[test]
fn closing_leaves_a_loadable_batch_index() {
    let data = common::uniform(500, 4, 4);
    let dir = tempfile::tempdir().unwrap();
    let mut s = stream(dir.path(), Algo::C2lsh, data.prefix(300), 500, 3, 8, MergePolicy::default());
    for (_, p) in data.iter().skip(300) {
        s.insert(p).unwrap();
    }
    let main_dir = s.close().unwrap().unwrap();
    let reopened = C2lshIndex::open(&main_dir).unwrap();
    assert_eq!(reopened.len(), 500);
    let want = batch_results(Algo::C2lsh, &data, &data.prefix(5), 3, 8, 500);
    let got: Vec<_> = data.prefix(5).iter().map(|(_, q)| reopened.query(&data, q, 3).unwrap()).collect();
    assert_eq!(got, want);
}

#[test]
fn naive_rebuild_agrees_with_delta_path() {
    let data = common::uniform(400, 6, 5);
    let queries = common::uniform(10, 6, 6);
    for algo in ALGOS {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let mut naive = stream(d1.path(), algo, data.prefix(350), 400, 2, 4, MergePolicy::default());
        let mut delta = stream(d2.path(), algo, data.prefix(350), 400, 2, 4, MergePolicy::default());
        for (_, p) in data.iter().skip(350) {
            naive.naive_rebuild_insert(p).unwrap();
            delta.insert(p).unwrap();
        }
        assert_eq!(naive.delta_len(), 0);
        assert_eq!(naive.main_len(), 400);
        delta.merge().unwrap();
        assert_eq!(stream_results(&naive, &queries, 2), stream_results(&delta, &queries, 2));
    }
}

#[test]
fn capacity_and_id_errors() {
    let data = common::uniform(5, 3, 7);
    let dir = tempfile::tempdir().unwrap();
    let mut s = stream(dir.path(), Algo::Qalsh, data.prefix(3), 4, 1, 1, MergePolicy::default());
    let dup = VectorRecord { id: 1, coords: data.point(3).to_vec() };
    assert!(matches!(s.insert_record(&dup), Err(Error::DuplicateId(1))));
    let gap = VectorRecord { id: 9, coords: data.point(3).to_vec() };
    assert!(s.insert_record(&gap).is_err());
    let ok = VectorRecord { id: 3, coords: data.point(3).to_vec() };
    assert_eq!(s.insert_record(&ok).unwrap(), 3);
    assert!(matches!(s.insert(data.point(4)), Err(Error::Capacity { capacity: 4 })));
    assert!(s.insert(&[1.0, 2.0]).is_err());
    assert!(s.query_combined(data.point(0), 5).is_err());
    assert_eq!(s.len(), 4);
}

#[test]
fn readers_see_whole_snapshots() {
    let data = common::uniform(2000, 6, 8);
    let dir = tempfile::tempdir().unwrap();
    let s = stream(dir.path(), Algo::C2lsh, data.prefix(1000), 2000, 1, 2, MergePolicy::points(100));
    let shared = SharedStreamingIndex::new(s);
    let probe = data.point(1999).to_vec();
    std::thread::scope(|scope| {
        let writer = scope.spawn(|| {
            for (_, p) in data.iter().skip(1000) {
                shared.insert(p).unwrap();
            }
        });
        for _ in 0..4 {
            scope.spawn(|| {
                for _ in 0..50 {
                    let guard = shared.read();
                    assert_eq!(guard.main_len() + guard.delta_len(), guard.len());
                    let got = guard.query_combined(&probe, 1).unwrap();
                    // the probe point is either present with distance 0 or absent
                    assert!(guard.len() < 2000 || got[0].distance == 0.0);
                }
            });
        }
        writer.join().unwrap();
    });
    assert_eq!(shared.read().len(), 2000);
    assert_eq!(shared.query_combined(&probe, 1).unwrap()[0].id, 1999);
}
