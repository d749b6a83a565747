mod common;

use common::W;
use proptest::prelude::*;
use rtlsh::io_stats::IoStats;
use rtlsh::{brute_force_knn, C2lshIndex, C2lshProjectionFile, Error, StopRule};

#[test]
fn files_reconstruct_independent_bucketing() {
    let data = common::uniform(3000, 10, 5);
    let (params, projections) = common::standard(data.len(), 10, 10, 77);
    let index = C2lshIndex::build_in_memory(&data, params, projections.clone(), 4096).unwrap();
    for i in [0, 13, params.m - 1] {
        let a = projections.vector(i);
        let b = projections.offset(i);
        let mut want: Vec<(i32, u32)> = data
            .iter()
            .map(|(id, p)| {
                let dot: f64 = a.iter().zip(p).map(|(x, &y)| x * y as f64).sum();
                (((dot + b) / W).floor() as i32, id)
            })
            .collect();
        want.sort();
        let got: Vec<(i32, u32)> = index.files()[i].pairs().collect();
        assert_eq!(got, want, "projection {i}");
    }
}

#[test]
fn bucket_range_reads_match_linear_scan() {
    let pairs: Vec<(i32, u32)> = {
        let mut v: Vec<(i32, u32)> = (0..2000u32).map(|i| (((i * 7919) % 301) as i32 - 150, i)).collect();
        v.sort();
        v
    };
    let file = C2lshProjectionFile::from_sorted_pairs(&pairs).unwrap();
    for (lo, hi) in [(-150, 150), (-3, 3), (0, 0), (-500, -151), (149, 400), (10, 9)] {
        let mut io = IoStats::default();
        let got = match file.read_bucket_range(lo, hi, &mut io) {
            Ok(ids) => ids.to_vec(),
            Err(_) => {
                assert!(lo > hi);
                continue;
            }
        };
        let want: Vec<u32> = pairs
            .iter()
            .filter(|(b, _)| (lo..=hi).contains(&(*b as i64)))
            .map(|p| p.1)
            .collect();
        assert_eq!(got, want, "[{lo}, {hi}]");
        assert_eq!(io.bytes_read, 4 * want.len() as u64);
        assert_eq!(io.seeks, u64::from(!want.is_empty()));
    }
}

#[test]
fn persisted_index_reopens_equal() {
    let dir = tempfile::tempdir().unwrap();
    let data = common::gaussian(1500, 6, 2);
    let (params, projections) = common::standard(data.len(), 6, 5, 3);
    let built = C2lshIndex::build(&data, params, projections, dir.path(), 4096).unwrap();
    let opened = C2lshIndex::open(dir.path()).unwrap();
    assert_eq!(opened.files(), built.files());
    assert_eq!(opened.projections(), built.projections());
    assert_eq!(opened.params(), built.params());
    assert_eq!(opened.manifest(), built.manifest());
    for qi in [0u32, 700] {
        let q = data.point(qi);
        assert_eq!(opened.query(&data, q, 5).unwrap(), built.query(&data, q, 5).unwrap());
    }
}

#[test]
fn build_is_deterministic() {
    let data = common::uniform(2000, 8, 4);
    let (params, projections) = common::standard(data.len(), 8, 1, 9);
    let a = C2lshIndex::build_in_memory(&data, params, projections.clone(), 4096).unwrap();
    let b = C2lshIndex::build_in_memory(&data, params, projections, 4096).unwrap();
    for (x, y) in a.files().iter().zip(b.files()) {
        assert_eq!(x.to_bytes(), y.to_bytes());
    }
}

#[test]
fn truncated_projection_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = common::uniform(500, 4, 4);
    let (params, projections) = common::standard(data.len(), 4, 1, 9);
    C2lshIndex::build(&data, params, projections, dir.path(), 4096).unwrap();
    let path = dir.path().join("proj_3.c2i");
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
    assert!(C2lshIndex::open(dir.path()).is_err());
}

#[test]
fn self_queries_return_distance_zero() {
    let data = common::uniform(2000, 16, 8);
    let (params, projections) = common::standard(data.len(), 16, 1, 8);
    let index = C2lshIndex::build_in_memory(&data, params, projections, 4096).unwrap();
    for qi in (0..2000).step_by(97) {
        let got = index.query(&data, data.point(qi), 1).unwrap();
        assert_eq!(got[0].distance, 0.0);
        assert_eq!(got[0].id, qi);
    }
}

#[test]
fn k_beyond_dataset_is_an_error() {
    let data = common::uniform(20, 3, 1);
    let (params, projections) = common::standard(data.len(), 3, 1, 1);
    let index = C2lshIndex::build_in_memory(&data, params, projections, 4096).unwrap();
    assert!(matches!(index.query(&data, data.point(0), 21), Err(Error::KTooLarge { k: 21, n: 20 })));
    assert!(index.query(&data, data.point(0), 0).is_err());
    assert!(index.query(&data, &[1.0, 2.0], 1).is_err());
}

#[test]
fn results_within_ratio_on_random_points() {
    let data = common::uniform(200, 8, 21);
    let rows = common::rows(&data);
    let (params, projections) = common::standard(data.len(), 8, 5, 21);
    let index = C2lshIndex::build_in_memory(&data, params, projections, 4096).unwrap();
    let queries = common::uniform(50, 8, 22);
    let good = queries
        .iter()
        .filter(|(_, q)| {
            let got = index.query(&data, q, 5).unwrap();
            common::within_c(&got, &common::full_sort_knn(&rows, q, 5), 2.0)
        })
        .count();
    assert!(good >= 45, "{good}/50 queries within ratio");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exhaustive_search_is_exact(seed in 0u64..1000, n in 1usize..300, k in 1usize..8) {
        let k = k.min(n);
        let data = common::gaussian(n, 4, seed);
        let (params, projections) = common::exhaustive(n, 4, k, seed);
        let index = C2lshIndex::build_in_memory(&data, params, projections, 4096).unwrap();
        let q = common::gaussian(1, 4, seed + 1);
        let q = q.point(0);
        let got = index.query_with(&data, q, k, StopRule::BudgetOnly).unwrap();
        let want = brute_force_knn(&data, q, k).unwrap();
        prop_assert_eq!(common::distances(&got.neighbors), common::distances(&want));
    }

    #[test]
    fn repeated_queries_are_identical(seed in 0u64..1000) {
        let data = common::uniform(400, 5, seed);
        let (params, projections) = common::standard(400, 5, 3, seed);
        let index = C2lshIndex::build_in_memory(&data, params, projections, 4096).unwrap();
        let q = data.point((seed % 400) as u32);
        let a = index.query_with(&data, q, 3, StopRule::Standard).unwrap();
        let b = index.query_with(&data, q, 3, StopRule::Standard).unwrap();
        prop_assert_eq!(a, b);
    }
}
