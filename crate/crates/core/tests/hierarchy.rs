use cohirf::datagen::{SyntheticKind, SyntheticSpec};
use cohirf::engine::{cohirf_fit, reconstruct_final_clusters, CohirfConfig};
use cohirf::io::{export_hierarchy, import_hierarchy_json, HierarchyFormat};
use proptest::prelude::*;

fn fit(
    n: usize,
    p: usize,
    k: usize,
    seed: u64,
    batch: Option<usize>,
) -> cohirf::engine::CohirfResult {
    let spec = SyntheticSpec::new(SyntheticKind::SeparatedGaussians, n, p, k, 20.0, seed);
    let (x, _) = spec.generate().unwrap();
    let mut config = CohirfConfig::new(CohirfConfig::default_q(p), 3, 4).with_seed(seed);
    config.batch_size = batch;
    cohirf_fit(x.view(), &config).unwrap()
}

#[test]
fn json_round_trip_is_lossless() {
    let result = fit(150, 30, 4, 9, None);
    let bytes = export_hierarchy(&result.hierarchy, HierarchyFormat::Json);
    let back = import_hierarchy_json(&bytes).unwrap();
    assert_eq!(back, result.hierarchy);
    assert_eq!(export_hierarchy(&back, HierarchyFormat::Json), bytes);
}

#[test]
fn dot_has_one_edge_per_child() {
    let result = fit(80, 12, 3, 2, None);
    let dot = String::from_utf8(export_hierarchy(&result.hierarchy, HierarchyFormat::Dot)).unwrap();
    assert_eq!(dot.matches("->").count(), result.hierarchy.n_edges());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tree_reproduces_labels(n in 2usize..120, p in 2usize..20, k in 1usize..4, seed in 0u64..1000, sampled in any::<bool>()) {
        let k = k.min(n);
        let result = fit(n, p, k, seed, sampled.then_some(16));
        result.hierarchy.validate().unwrap();
        prop_assert_eq!(result.hierarchy.roots().len(), result.n_clusters);
        let from_tree = reconstruct_final_clusters(&result.hierarchy).unwrap();
        prop_assert_eq!(from_tree, result.labels.clone());
        let back = import_hierarchy_json(&export_hierarchy(&result.hierarchy, HierarchyFormat::Json)).unwrap();
        prop_assert_eq!(reconstruct_final_clusters(&back).unwrap(), result.labels);
    }
}
