use hybridcnn::arch::{
    full_custom_config, Activation, BranchConfig, ForwardOptions, GraphFile, HybridConfig, LayerKind, LayerSpec,
    ModelConfig, ModelGraph, SequentialConfig, CUSTOM_PREFIX,
};
use hybridcnn::labels::BranchTask;
use hybridcnn::{Error, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REFERENCE_PARAMS: [usize; 28] = [
    24_704, 512, 819_456, 1_024, 0, 590_080, 1_024, 65_792, 1_024, 65_792, 1_024, 1_180_160, 2_048, 0,
    2_359_808, 2_048, 2_359_808, 2_048, 0, 2_359_808, 2_048, 0, 0, 4_719_616, 0, 1_049_600, 0, 4_100,
];

fn random_images(n: usize, shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = n * shape.iter().product::<usize>();
    let mut dims = vec![n];
    dims.extend_from_slice(shape);
    Tensor::new(dims, (0..len).map(|_| rng.random::<f32>()).collect()).unwrap()
}

#[test]
fn reference_parameter_vector_and_totals() {
    let s = ModelConfig::Sequential(full_custom_config()).summary().unwrap();
    let per_layer: Vec<usize> = s
        .layers
        .iter()
        .filter(|r| r.layer_type != "IntersectFeatures")
        .map(|r| r.params())
        .collect();
    assert_eq!(per_layer, REFERENCE_PARAMS);
    assert_eq!((s.trainable, s.non_trainable), (15_605_124, 6_400));
}

#[test]
fn reference_shape_trajectory() {
    let s = ModelConfig::Sequential(full_custom_config()).summary().unwrap();
    let shapes: Vec<Vec<usize>> = s
        .layers
        .iter()
        .filter(|r| r.layer_type != "IntersectFeatures")
        .map(|r| r.output_shape.clone())
        .collect();
    let expected: Vec<Vec<usize>> = [
        &[73, 73, 128][..], &[73, 73, 128], &[73, 73, 256], &[73, 73, 256], &[24, 24, 256],
        &[24, 24, 256], &[24, 24, 256], &[24, 24, 256], &[24, 24, 256], &[24, 24, 256], &[24, 24, 256],
        &[24, 24, 512], &[24, 24, 512], &[12, 12, 512], &[12, 12, 512], &[12, 12, 512], &[12, 12, 512],
        &[12, 12, 512], &[6, 6, 512], &[6, 6, 512], &[6, 6, 512], &[3, 3, 512], &[4608], &[1024],
        &[1024], &[1024], &[1024], &[4],
    ]
    .iter()
    .map(|s| s.to_vec())
    .collect();
    assert_eq!(shapes, expected);
    assert_eq!(s.fusion_point, Some(vec![24, 24, 256]));
}

#[test]
fn stride_one_stem_fails_at_first_pool() {
    let mut c = full_custom_config();
    if let LayerKind::Conv { stride, .. } = &mut c.layers[0].kind {
        *stride = 1;
    }
    match ModelConfig::Sequential(c).summary() {
        Err(Error::Layer { layer, .. }) => assert_eq!(layer, "max_pooling2d"),
        other => panic!("expected a layer error, got {other:?}"),
    }
}

#[test]
fn tiny_input_names_the_failing_layer() {
    let err = hybridcnn::arch::custom_cnn_config(&[20, 20, 3], hybridcnn::arch::CustomCnnShape::FULL).unwrap_err();
    assert!(matches!(err, Error::Layer { .. }), "{err:?}");
    assert!(hybridcnn::arch::custom_cnn_config(&[4, 4, 3], hybridcnn::arch::CustomCnnShape::FULL).is_err());
}

#[test]
fn standard_branch_reaches_56_after_stem() {
    let cfg = BranchConfig::standard(BranchTask::NormalVsStone);
    let s = ModelConfig::Branch(cfg.clone()).summary().unwrap();
    assert_eq!(s.layers[3].output_shape, [56, 56, 64]);
    assert_eq!(s.layers[cfg.stage_end(0)].output_shape, [56, 56, 64]);
    assert_eq!(s.layers[cfg.stage_end(2)].output_shape, [14, 14, 512]);
    assert_eq!(s.output_shape, [2]);

    let deep = BranchConfig::resnet101(BranchTask::CystVsTumor);
    let s = ModelConfig::Branch(deep.clone()).summary().unwrap();
    assert_eq!(s.layers[deep.stage_end(3)].output_shape, [7, 7, 2048]);
}

#[test]
fn branch_rejects_bad_tap_and_decreasing_widths() {
    let mut c = BranchConfig::desk(BranchTask::NormalVsStone);
    c.tap_stage = 3;
    assert!(matches!(ModelConfig::Branch(c).summary(), Err(Error::Config(_))));
    let mut c = BranchConfig::desk(BranchTask::NormalVsStone);
    c.stage_widths = vec![16, 8, 32];
    assert!(ModelConfig::Branch(c).summary().is_err());
}

fn block_probe(with_block: bool) -> SequentialConfig {
    let mut layers: Vec<LayerSpec> = vec![LayerKind::Relu.into()];
    if with_block {
        layers.push(
            LayerKind::ResidualBlock {
                mid: 2,
                out: 4,
                stride: 1,
                momentum: 0.99,
            }
            .into(),
        );
    }
    layers.push(LayerKind::GlobalAvgPool.into());
    layers.push(
        LayerKind::Dense {
            units: 2,
            activation: Activation::None,
        }
        .into(),
    );
    SequentialConfig {
        name: "probe".into(),
        input_shape: vec![5, 5, 4],
        classes: vec!["a".into(), "b".into()],
        layers,
    }
}

#[test]
fn zeroed_residual_path_is_identity() {
    let mut with = ModelGraph::new(ModelConfig::Sequential(block_probe(true)), 3).unwrap();
    let plain = ModelGraph::new(ModelConfig::Sequential(block_probe(false)), 3).unwrap();
    for (name, p) in with.params_mut().iter_mut() {
        if name.starts_with("residual_block") && (name.ends_with(".kernel") || name.ends_with(".bias")) {
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    for suffix in ["kernel", "bias"] {
        let name = format!("dense.{suffix}");
        with.params_mut().get_mut(&name).unwrap().value = plain.params().get(&name).unwrap().value.clone();
    }
    let x = random_images(3, &[5, 5, 4], 11).map(|v| v - 0.5);
    let a = with.predict(&x).unwrap();
    let b = plain.predict(&x).unwrap();
    assert_eq!(a.data(), b.data());
}

fn component_total(cfg: ModelConfig) -> usize {
    let s = cfg.summary().unwrap();
    s.trainable + s.non_trainable
}

#[test]
fn hybrid_parameters_are_additive() {
    let h = HybridConfig::desk();
    let s = ModelConfig::Hybrid(h.clone()).summary().unwrap();
    let fusion = s.fusion_point.clone().unwrap();
    let tap = h.branch_ns.stage_widths[h.branch_ns.tap_stage];
    let projection = tap * fusion[2] + fusion[2];
    let expected = component_total(ModelConfig::Sequential(h.custom.clone()))
        + component_total(ModelConfig::Branch(h.branch_ns.clone()))
        + component_total(ModelConfig::Branch(h.branch_ct.clone()))
        + projection;
    assert_eq!(s.trainable + s.non_trainable, expected);
    let graph = ModelGraph::new(ModelConfig::Hybrid(h), 1).unwrap();
    let (t, n) = graph.params().totals();
    assert_eq!((t, n), (s.trainable, s.non_trainable));
}

#[test]
fn projection_target_mismatch_is_a_config_error() {
    let mut h = HybridConfig::desk();
    h.fusion.target_shape = Some(vec![12, 12, 16]);
    match ModelConfig::Hybrid(h).summary() {
        Err(Error::Layer { layer, msg }) => {
            assert!(layer.starts_with("projection/"));
            assert!(msg.contains("fusion-point"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn hybrid_inputs_must_agree() {
    let mut h = HybridConfig::desk();
    h.branch_ct.input_shape = vec![32, 32, 3];
    assert!(matches!(ModelConfig::Hybrid(h).summary(), Err(Error::Config(_))));
}

#[test]
fn fusion_identity_with_accept_all_threshold() {
    let mut h = HybridConfig::desk();
    h.fusion.tau = -1.0;
    let hybrid = ModelGraph::new(ModelConfig::Hybrid(h.clone()), 5).unwrap();
    let custom = ModelGraph::from_parts(
        ModelConfig::Sequential(h.custom.clone()),
        hybrid.params().extract_prefixed(CUSTOM_PREFIX),
    )
    .unwrap();
    let x = random_images(4, &[64, 64, 3], 9);

    let mut tape = Tape::new();
    let input = tape.constant(x.clone());
    let only = ForwardOptions {
        custom_only: true,
        ..ForwardOptions::infer()
    };
    let out = hybrid.forward(&mut tape, input, &only).unwrap();
    let features = tape.value(out.fusion.unwrap()).clone();
    let custom_only_logits = tape.value(out.logits).clone();

    let mut tape = Tape::new();
    let input = tape.constant(x.clone());
    let fed = ForwardOptions {
        branch_features: Some(features),
        ..ForwardOptions::infer()
    };
    let out = hybrid.forward(&mut tape, input, &fed).unwrap();
    assert!(out.intersect.unwrap().accepted.iter().all(|&a| a));
    assert_eq!(tape.value(out.logits).data(), custom_only_logits.data());

    let mut tape = Tape::new();
    let input = tape.constant(x);
    let standalone = custom.forward(&mut tape, input, &ForwardOptions::infer()).unwrap();
    assert_eq!(tape.value(standalone.logits).data(), custom_only_logits.data());
}

#[test]
fn hybrid_probabilities_and_runtime_shapes() {
    let graph = ModelGraph::new(ModelConfig::Hybrid(HybridConfig::desk()), 2).unwrap();
    let x = random_images(3, &[64, 64, 3], 4);
    let probs = graph.predict(&x).unwrap();
    assert_eq!(probs.shape(), [3, 4]);
    for row in probs.data().chunks(4) {
        let s: f64 = row.iter().map(|&v| v as f64).sum();
        assert!((s - 1.0).abs() < 1e-6);
    }

    let mut tape = Tape::new();
    let input = tape.constant(x);
    let out = graph.forward(&mut tape, input, &ForwardOptions::infer()).unwrap();
    let summary = graph.summary();
    for (name, shape) in &out.shapes {
        let report = summary.layers.iter().find(|r| &r.name == name).unwrap_or_else(|| panic!("{name}"));
        assert_eq!(&report.output_shape, shape, "{name}");
    }
    assert_eq!(tape.value(out.penultimate.unwrap()).shape(), [3, 64]);
}

#[test]
fn graph_json_round_trip_and_version_check() {
    let file = GraphFile::new(ModelConfig::Hybrid(HybridConfig::desk()));
    let text = file.to_json();
    assert_eq!(GraphFile::parse(&text).unwrap(), file);
    let bumped = text.replacen("\"version\": 1", "\"version\": 7", 1);
    match GraphFile::parse(&bumped) {
        Err(Error::Version { found, expected, .. }) => assert_eq!((found, expected), (7, 1)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn configs_in_repo_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let reference = GraphFile::read(&dir.join("custom_224.json")).unwrap();
    assert_eq!(reference.model, ModelConfig::Sequential(full_custom_config()));
    let desk = GraphFile::read(&dir.join("desk_hybrid.json")).unwrap();
    assert_eq!(desk.model, ModelConfig::Hybrid(HybridConfig::desk()));
}

#[test]
fn same_seed_same_initialization() {
    let a = ModelGraph::new(ModelConfig::Hybrid(HybridConfig::desk()), 42).unwrap();
    let b = ModelGraph::new(ModelConfig::Hybrid(HybridConfig::desk()), 42).unwrap();
    let c = ModelGraph::new(ModelConfig::Hybrid(HybridConfig::desk()), 43).unwrap();
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), c.params());
}
