use polagree::conditioning::ConditioningMode;
use polagree_nmt::gradcheck::{analytic, check_all_modes, tiny_config, tiny_model};
use polagree_nmt::bpe::EOS;
use polagree_nmt::model::{Sample, TYPE_BIAS};
use polagree::conditioning::{condition, Phase};
use polagree::AttributeSet;

#[test]
fn all_modes_within_tolerance() {
    for r in check_all_modes(1e-4, 11) {
        println!("{:<10} max rel {:.3e} in {} over {} elements", r.mode, r.max_rel_error, r.worst, r.elements);
        assert!(r.max_rel_error < 1e-3, "{r:?}");
        assert!(r.dead_types.is_empty(), "{r:?}");
    }
}

#[test]
fn forced_output_has_vanishing_gradient() {
    let config = tiny_config();
    let mut model = tiny_model(&config);
    let attrs = AttributeSet::parse_list("sp:feminine").unwrap();
    let bias = model.params.id(TYPE_BIAS).unwrap();
    let v = config.vocab_size;
    let t = attrs.types()[0].index();
    model.params.values[bias][t * v + EOS as usize] = 60.0;
    let table = model.type_table();
    let tags = polagree_nmt::bpe::reserved_tag_vocab();
    let batch = vec![Sample {
        input: condition(ConditioningMode::OutBias, &attrs, &[20, 21], &table, &tags, Phase::Infer, 0),
        target: Vec::new(),
    }];
    let grads = analytic(&model, &batch, 0.0);
    let max = grads.iter().flatten().fold(0f64, |m, g| m.max(g.abs()));
    assert!(max < 1e-12, "{max}");
}
