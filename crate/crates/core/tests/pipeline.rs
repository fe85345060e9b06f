use smokesr::fields::{frame_path, list_frames, read_vector};
use smokesr::metrics::{divergence_norm, normalized_mse_curve};
use smokesr::network::{fit, split_indices, Batch, Model, ModelMeta, TrainConfig};
use smokesr::patching::{
    augment, read_archive, sample_training_set, write_archive, EncodingMode, PairSequence,
    SamplingConfig, TrainingSet,
};
use smokesr::solver::{run_pair, SimConfig};
use smokesr::synthesis::{synthesize_sequence, SynthesisOptions};

// velocity-only end to end on a tiny plume, through the on-disk formats
#[test]
fn velocity_only_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let pair = run_pair(&SimConfig::plume_2d(12), 2, 5, dir.join("sim")).unwrap();
    let seq = PairSequence::load(&pair.coarse_dir, &pair.fine_dir, Vec::new()).unwrap();
    let mode = EncodingMode::velocity_only();
    let mut sampling = SamplingConfig::new(40, 3);
    sampling.radius = Some(1.0);
    let set = sample_training_set(&[seq], &mode, &sampling).unwrap();
    assert_eq!(set.pairs.len(), 40);

    let set = TrainingSet {
        pairs: augment(&set).unwrap(),
        manifest: set.manifest,
    };
    assert_eq!(set.pairs.len(), 160);
    write_archive(&set, dir.join("p.sp")).unwrap();
    let back = read_archive(dir.join("p.sp")).unwrap();
    assert_eq!(back.pairs.len(), set.pairs.len());
    assert_eq!(back.manifest, set.manifest);

    let cfg = TrainConfig {
        layers: 2,
        atoms: 8,
        batch_size: 32,
        max_epochs: 6,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let (tr, va) = split_indices(&back.pairs, mode.kind, &cfg).unwrap();
    let all = Batch::from_pairs(&back.pairs).unwrap();
    let out = fit(
        &all.select(&tr),
        &all.select(&va),
        &back.manifest.geometry,
        &cfg,
        true,
    )
    .unwrap();
    assert_eq!(out.net.layers(), 2);
    let first = out.history.first().unwrap().train_loss;
    let last = out.history.last().unwrap().train_loss;
    assert!(last.is_finite() && last < first, "{first} -> {last}");

    let meta = ModelMeta {
        mode,
        geometry: back.manifest.geometry,
        normalization: back.manifest.normalization.clone(),
    };
    let model = Model::new(out.net, cfg.weights, meta).unwrap();
    model.save(dir.join("m.sm")).unwrap();
    let model = Model::load(dir.join("m.sm")).unwrap();

    let opts = SynthesisOptions {
        project: true,
        ..SynthesisOptions::default()
    };
    let synth = dir.join("synth");
    let report = synthesize_sequence(&pair.coarse_dir, &model, &synth, &opts).unwrap();
    assert_eq!(report.frames, list_frames(&pair.coarse_dir, "vel"));

    let v = read_vector(frame_path(&synth, "vel", 4)).unwrap();
    assert_eq!(v.shape().dims(), &[24, 24]);
    assert!(divergence_norm(&v) < 1e-3);
    let curve = normalized_mse_curve(&synth, &pair.fine_dir).unwrap();
    assert_eq!(curve.len(), 5);
    assert!(curve.iter().all(|(_, e)| e.is_finite() && *e < 1.0));
}
