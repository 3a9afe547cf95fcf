use std::collections::HashMap;

use kmerstream_sim::pipeline::resource_of;
use kmerstream_sim::time::Ps;
use kmerstream_sim::*;
use proptest::prelude::*;

fn rates_strategy() -> impl Strategy<Value = StageRates> {
    (1e8f64..1e10, 1e8f64..1e10, 1e8f64..1e10, 0u64..1_000_000_000, 1u64..4 << 20).prop_map(
        |(sort, interface, isp, retrieve, batch)| StageRates {
            retrieve,
            batch_bytes: batch,
            ..StageRates::new(sort, interface, isp)
        },
    )
}

fn buckets_strategy() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0u64..16 << 20, 0..40)
}

fn no_double_booking(tl: &PipelineTimeline) -> bool {
    let mut by: HashMap<u8, Vec<(Ps, Ps)>> = HashMap::new();
    for e in &tl.events {
        by.entry(resource_of(e.stage)).or_default().push((e.start, e.end));
    }
    by.values_mut().all(|v| {
        v.sort();
        v.windows(2).all(|w| w[0].1 <= w[1].0)
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn overlapped_never_slower(buckets in buckets_strategy(), rates in rates_strategy()) {
        let over = sim_pipeline(&buckets, &rates, true);
        let ser = sim_pipeline(&buckets, &rates, false);
        prop_assert!(over.total() <= ser.total());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn pipeline_resources_are_exclusive_and_causal(
        buckets in buckets_strategy(),
        rates in rates_strategy(),
        overlap: bool,
    ) {
        let tl = sim_pipeline(&buckets, &rates, overlap);
        prop_assert!(no_double_booking(&tl));
        for b in 0..buckets.len() as u32 {
            let s = tl.bucket_event(Stage::Sort, b).unwrap();
            let t = tl.bucket_event(Stage::Transfer, b).unwrap();
            let x = tl.bucket_event(Stage::Intersect, b).unwrap();
            prop_assert!(s.end <= t.start && t.end <= x.end && t.start <= x.start);
        }
        prop_assert_eq!(tl.clone(), sim_pipeline(&buckets, &rates, overlap));
    }

    #[test]
    fn reads_respect_both_ceilings(
        channels in 1u32..20,
        dies in 1u32..9,
        planes in 1u32..5,
        t_r in 5.0f64..120.0,
        pages in 1u64..20_000,
    ) {
        let cfg = SsdConfig {
            channels,
            dies_per_channel: dies,
            planes_per_die: planes,
            t_r_us: t_r,
            ..SsdConfig::ssd_c()
        };
        let (stats, spans) = trace_sequential_read(pages * cfg.page_size, &cfg).unwrap();
        prop_assert!(stats.throughput() <= channels as f64 * cfg.channel_rate as f64 * 1.000001);
        prop_assert!(stats.throughput() <= channels as f64 * cfg.die_supply_rate() * 1.000001);
        let mut by: HashMap<Resource, Vec<(Ps, Ps)>> = HashMap::new();
        for s in spans {
            by.entry(s.resource).or_default().push((s.start, s.end));
        }
        for v in by.values_mut() {
            v.sort();
            prop_assert!(v.windows(2).all(|w| w[0].1 <= w[1].0));
        }
    }

    #[test]
    fn block_count_is_the_ceiling(size in 0u64..(1u64 << 42)) {
        let cfg = SsdConfig::ssd_c();
        let m = place_database(size, &cfg).unwrap();
        prop_assert_eq!(m.block_count() as u64, size.div_ceil(cfg.block_bytes()));
        prop_assert_eq!(metadata_size(&m).total, 8 * m.block_count() as u64 + 16);
    }
}

#[test]
fn default_workload_trends_hold_on_both_presets() {
    let w = Workload::default();
    for cfg in [SsdConfig::ssd_c(), SsdConfig::ssd_p()] {
        for sc in [Scenario::DbSize, Scenario::Channels, Scenario::HostDram, Scenario::MultiSample] {
            let ex = run_experiment(sc, &cfg, &w).unwrap();
            let s: Vec<f64> = ex.summary.iter().map(|r| r.speedup_vs_baseline).collect();
            assert!(s.windows(2).all(|p| p[1] >= p[0]), "{:?} {s:?}", sc);
        }
        let ex = run_experiment(Scenario::Overlap, &cfg, &w).unwrap();
        assert!(ex.summary[0].total_us < ex.summary[1].total_us);
    }
}

#[test]
fn experiments_are_byte_identical_across_runs() {
    let cfg = SsdConfig::ssd_p();
    let w = Workload::default();
    for sc in Scenario::ALL {
        let dump = || {
            let ex = run_experiment(sc, &cfg, &w).unwrap();
            let mut out = Vec::new();
            ex.write_timeline_csv(&mut out).unwrap();
            ex.write_summary_csv(&mut out).unwrap();
            out
        };
        assert_eq!(dump(), dump());
    }
}
