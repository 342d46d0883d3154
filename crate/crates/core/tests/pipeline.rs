//! End-to-end use of the library: simulate, count, penalize, prune.

use ctxboot::counting::{build_empirical_tree, default_h_star};
use ctxboot::manymeans::{bands, MdsDesign};
use ctxboot::penalties::{cf_bootstrap, selfnorm_table, BootCfg, PenaltySource};
use ctxboot::pruning::{good_event_check, prune, DEFAULT_C};
use ctxboot::reference::{order1_binary, order3_binary};
use ctxboot::sequences::{sample_vlmc, VlmcModel};

#[test]
fn order3_fit_recovers_a_subtree_of_the_truth() {
    let model = order3_binary();
    let path = sample_vlmc(&model, 5000, None, 21).unwrap();
    let tree = build_empirical_tree(&path.symbols, model.alphabet(), default_h_star(5000, 2)).unwrap();
    let boot = cf_bootstrap(&tree, &BootCfg::new(400, 0.05, 3)).unwrap();
    let est = prune(&tree, &boot, DEFAULT_C).unwrap();
    assert!(est.is_contained_in(&model));
    assert!(est.depth() >= 1);
    let fitted = est.to_model().unwrap();
    let back = VlmcModel::from_json(&fitted.to_json()).unwrap();
    assert_eq!(back.leaves().len(), fitted.leaves().len());
    assert!(good_event_check(&tree, &model, &path.prefix, &boot).unwrap().holds);
}

#[test]
fn bootstrap_radii_are_tighter_than_selfnormalized_ones() {
    let model = order3_binary();
    let path = sample_vlmc(&model, 5000, None, 5).unwrap();
    let tree = build_empirical_tree(&path.symbols, model.alphabet(), default_h_star(5000, 2)).unwrap();
    let sn = selfnorm_table(&tree, 0.05).unwrap();
    let boot = cf_bootstrap(&tree, &BootCfg::new(400, 0.05, 5)).unwrap();
    for id in tree.node_ids() {
        if boot.entries[id.index()].source == PenaltySource::Bootstrap {
            assert!(boot.cf(id) < sn.cf(id), "{}", tree.path_text(id));
        }
    }
}

#[test]
fn memoryless_chain_prunes_to_the_root() {
    let model = order1_binary([0.3, 0.7], [0.3, 0.7]);
    let path = sample_vlmc(&model, 4000, None, 9).unwrap();
    let tree = build_empirical_tree(&path.symbols, model.alphabet(), 4).unwrap();
    let boot = cf_bootstrap(&tree, &BootCfg::new(300, 0.05, 9)).unwrap();
    let est = prune(&tree, &boot, DEFAULT_C).unwrap();
    assert_eq!(est.len(), 1);
    assert_eq!(est.depth(), 0);
}

#[test]
fn bands_cover_the_design_means() {
    let design = MdsDesign::standard(10);
    let panel = design.simulate(400, 2).unwrap();
    let res = bands(&panel, &BootCfg::new(300, 0.05, 2)).unwrap();
    assert!(res.covers(&design.mu));
    assert!(res.lower.iter().zip(&res.upper).all(|(l, u)| l < u));
}
