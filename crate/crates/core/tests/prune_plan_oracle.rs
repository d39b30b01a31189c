mod common;

use std::collections::HashMap;

use common::plan::{build_network, net_spec, plan_oracle};
use proptest::prelude::*;
use simprune::prune_plan::{build_plan, emit_plan, keep_all, read_plan};
use simprune::tensor_io::{LayerEntry, LayerKind, NetworkManifest};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn plan_matches_accumulation_oracle(spec in net_spec()) {
        let (manifest, keeps) = build_network(&spec);
        prop_assert!(manifest.layers.len() <= 6);
        let plan = build_plan(&manifest, &keeps).unwrap();
        let want = plan_oracle(&spec);
        prop_assert_eq!(plan.totals.macs_before, want.macs_before);
        prop_assert_eq!(plan.totals.macs_after, want.macs_after);
        prop_assert_eq!(plan.totals.params_before, want.params_before);
        prop_assert_eq!(plan.totals.params_after, want.params_after);
        prop_assert_eq!(plan.totals.macs_complete, want.complete);
        let conv_in: Vec<usize> = plan
            .layers
            .iter()
            .filter(|l| l.kind == LayerKind::Conv2d)
            .map(|l| l.in_channels_after)
            .collect();
        prop_assert_eq!(conv_in, want.conv_in_after);
        prop_assert!(plan.totals.macs_after <= plan.totals.macs_before);
        prop_assert!(plan.totals.params_after <= plan.totals.params_before);
    }

    #[test]
    fn keeping_everything_changes_nothing(spec in net_spec()) {
        let (manifest, _) = build_network(&spec);
        let plan = build_plan(&manifest, &keep_all(&manifest)).unwrap();
        prop_assert_eq!(plan.totals.macs_before, plan.totals.macs_after);
        prop_assert_eq!(plan.totals.params_before, plan.totals.params_after);
    }
}

#[test]
fn two_chained_convs_report_9216() {
    let manifest = NetworkManifest::new(vec![
        LayerEntry::conv2d("C1", [3, 3], 1, 4, Some([8, 8])),
        LayerEntry::conv2d("C2", [3, 3], 4, 8, Some([8, 8])),
    ])
    .unwrap();
    let keeps = HashMap::from([
        ("C1".to_string(), vec![0, 2]),
        ("C2".to_string(), (0..8).collect()),
    ]);
    let plan = build_plan(&manifest, &keeps).unwrap();
    assert_eq!(plan.layers[1].macs_after, Some(9216));
}

#[test]
fn plan_json_roundtrip() {
    let manifest = NetworkManifest::new(vec![
        LayerEntry::conv2d("C1", [3, 3], 1, 4, None),
        LayerEntry::dense("D1", 8, 2),
    ])
    .unwrap();
    let plan = build_plan(&manifest, &HashMap::from([("C1".to_string(), vec![1, 3])])).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.json");
    emit_plan(&plan, &path).unwrap();
    assert_eq!(read_plan(&path).unwrap(), plan);
    assert_eq!(plan.layers[1].in_channels_after, 4);
}
