use std::fs;
use std::path::Path;

use ldfnet_core::clm::{contrastive_loss, ClmVariant, LabelGrid, SkipReason};
use ldfnet_core::data::{gen_scene, generate_dataset, load_checkpoint, Dataset, SceneConfig, Split};
use ldfnet_core::model::ModelConfig;
use ldfnet_core::mpm::EncoderConfig;
use ldfnet_core::train::{
    ablate, evaluate, evaluate_model, prepare, read_csv_header, train, train_on, write_sweep_csv, EvalSplit, SweepAxis,
    Trainer, LOG_FILE, SUMMARY_FILE,
};
use ldfnet_core::{DenseArray, Error, Graph, Ldfnet, RunConfig, Sample};

fn tiny() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.model = ModelConfig {
        stage_channels: vec![4, 4, 8, 8, 8],
        decoder_channels: vec![8],
        encoder: EncoderConfig { layers: 1, hidden: 8, heads: 2, ffn: 16, positional: true },
        clm_dim: 4,
    };
    cfg.scene.count_range = [0, 12];
    cfg.optim.epochs = 1;
    cfg.optim.batch_size = 2;
    cfg
}

fn dataset(dir: &Path, cfg: &RunConfig, n_train: usize, n_val: usize) -> Dataset {
    generate_dataset(dir, &cfg.scene, n_train, n_val, cfg.seed).unwrap()
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

#[test]
fn csv_headers_are_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny();
    dataset(&tmp.path().join("data"), &cfg, 4, 2);
    let out = tmp.path().join("run");
    train(&cfg, &tmp.path().join("data"), &out).unwrap();
    assert_eq!(read_csv_header(&out.join(LOG_FILE)).unwrap(), ["epoch", "L_d", "L_mp", "L_cl", "total", "val_mae", "val_rmse"]);
    assert_eq!(
        read_csv_header(&out.join(SUMMARY_FILE)).unwrap(),
        ["initial_val_mae", "initial_val_rmse", "best_epoch", "best_val_mae", "final_val_mae"]
    );
    let report = evaluate(&cfg, &out, &tmp.path().join("data"), EvalSplit::Val).unwrap();
    report.write_csv(&tmp.path().join("m.csv")).unwrap();
    assert_eq!(
        read_csv_header(&tmp.path().join("m.csv")).unwrap(),
        ["image", "gt_count", "pred_count", "mae", "rmse", "tp", "fp", "fn", "precision", "recall", "f1"]
    );
    let text = fs::read_to_string(tmp.path().join("m.csv")).unwrap();
    assert!(text.lines().last().unwrap().starts_with("summary,"));
    assert_eq!(text.lines().count(), 1 + 2 + 1);
}

#[test]
fn one_epoch_on_eight_images_logs_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny();
    dataset(&tmp.path().join("data"), &cfg, 8, 2);
    let out = tmp.path().join("run");
    let outcome = train(&cfg, &tmp.path().join("data"), &out).unwrap();
    assert_eq!(outcome.rows.len(), 1);
    assert_eq!(csv_column(&out.join(LOG_FILE), "epoch"), [1.0]);
    assert!(out.join("model.bin").exists() && out.join("model.manifest").exists());
    assert_eq!(RunConfig::load(&out.join("config.toml")).unwrap(), cfg);
}

#[test]
fn train_and_eval_are_bit_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny();
    cfg.optim.epochs = 2;
    let data = tmp.path().join("data");
    dataset(&data, &cfg, 6, 3);
    let mut copies = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        train(&cfg, &data, &out).unwrap();
        evaluate(&cfg, &out, &data, EvalSplit::All).unwrap().write_csv(&out.join("metrics.csv")).unwrap();
        copies.push(out);
    }
    for f in [LOG_FILE, SUMMARY_FILE, "metrics.csv", "model.bin", "model.manifest"] {
        assert_eq!(fs::read(copies[0].join(f)).unwrap(), fs::read(copies[1].join(f)).unwrap(), "{f}");
    }
    let other = RunConfig { seed: 1, ..cfg.clone() };
    train(&other, &data, &tmp.path().join("c")).unwrap();
    assert_ne!(fs::read(copies[0].join("model.bin")).unwrap(), fs::read(tmp.path().join("c/model.bin")).unwrap());
}

#[test]
fn disabled_auxiliary_terms_log_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny();
    cfg.optim.epochs = 2;
    dataset(&tmp.path().join("data"), &cfg, 4, 2);
    cfg.loss.alpha = 0.0;
    cfg.loss.beta = 0.0;
    let out = tmp.path().join("zero");
    train(&cfg, &tmp.path().join("data"), &out).unwrap();
    assert!(csv_column(&out.join(LOG_FILE), "L_mp").iter().all(|&v| v == 0.0));
    assert!(csv_column(&out.join(LOG_FILE), "L_cl").iter().all(|&v| v == 0.0));

    let mut cfg = tiny();
    cfg.mask.ratio = 0.0;
    cfg.loss.alpha = 1.0;
    let out = tmp.path().join("ratio0");
    train(&cfg, &tmp.path().join("data"), &out).unwrap();
    assert!(csv_column(&out.join(LOG_FILE), "L_mp").iter().all(|&v| v == 0.0));
    assert!(csv_column(&out.join(LOG_FILE), "L_cl").iter().all(|&v| v > 0.0));
}

#[test]
fn empty_split_and_mismatched_checkpoint_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let data = tmp.path().join("data");
    dataset(&data, &cfg, 4, 0);
    let out = tmp.path().join("run");
    train(&cfg, &data, &out).unwrap();
    assert!(matches!(evaluate(&cfg, &out, &data, EvalSplit::Val), Err(Error::EmptyInput)));
    let mut wider = cfg.clone();
    wider.model.decoder_channels = vec![12];
    let err = evaluate(&wider, &out, &data, EvalSplit::Train).unwrap_err();
    assert!(matches!(err, Error::ManifestMismatch(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
    let err = evaluate(&cfg, &out, &tmp.path().join("missing"), EvalSplit::Train).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn loaded_checkpoint_reproduces_density_maps() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let data = tmp.path().join("data");
    let ds = dataset(&data, &cfg, 4, 2);
    let out = tmp.path().join("run");
    let (model, _) = train_on(&cfg, &ds.load(Split::Train).unwrap(), &ds.load(Split::Val).unwrap(), Some(&out)).unwrap();
    let mut fresh = Ldfnet::new(&cfg.model, 123).unwrap();
    load_checkpoint(&mut fresh.params, &out).unwrap();
    let probe = gen_scene(&SceneConfig { seed: 77, ..cfg.scene.clone() }).unwrap();
    let x = ldfnet_core::data::stack_images(&[&probe]).unwrap();
    assert_eq!(model.predict(&x).unwrap(), fresh.predict(&x).unwrap());
}

#[test]
fn recall_is_monotone_in_sigma() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny();
    cfg.optim.epochs = 3;
    let data = tmp.path().join("data");
    let ds = dataset(&data, &cfg, 8, 4);
    let (model, _) = train_on(&cfg, &ds.load(Split::Train).unwrap(), &ds.load(Split::Val).unwrap(), None).unwrap();
    let val: Vec<(String, Sample)> = ds.load_all().unwrap();
    let refs: Vec<(String, &Sample)> = val.iter().map(|(id, s)| (id.clone(), s)).collect();
    let mut last = -1.0;
    for sigma in [4.0, 8.0, 16.0] {
        let mut eval = cfg.eval.clone();
        eval.sigma = sigma;
        let r = evaluate_model(&model, &refs, &eval, 4).unwrap();
        assert!(r.recall >= last, "sigma {sigma}: {} < {last}", r.recall);
        last = r.recall;
    }
}

#[test]
fn sweeps_emit_one_row_per_setting_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let ds = dataset(&tmp.path().join("data"), &cfg, 4, 2);
    let train_set = ds.load(Split::Train).unwrap();
    let val: Vec<(String, Sample)> =
        ds.ids(Split::Val).into_iter().map(|id| (id.to_string(), ldfnet_core::data::read_sample(&ds.root, id).unwrap())).collect();
    let strings = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();

    let rows = ablate(&cfg, SweepAxis::MaskRatio, &strings(&["0", "0.15", "0.75"]), &[0], &train_set, &val, None).unwrap();
    assert_eq!(rows.len(), 3);
    let rows =
        ablate(&cfg, SweepAxis::MaskStrategy, &strings(&["random", "block", "grid"]), &[3, 4], &train_set, &val, None).unwrap();
    assert_eq!(rows.len(), 6);
    for chunk in rows.chunks(2) {
        assert_eq!(chunk.iter().map(|r| r.seed).collect::<Vec<_>>(), [3, 4]);
    }
    let rows = ablate(&cfg, SweepAxis::Alpha, &strings(&["0.01", "0.1", "1"]), &[0], &train_set, &val, None).unwrap();
    assert_eq!(rows.iter().map(|r| r.value.as_str()).collect::<Vec<_>>(), ["0.01", "0.1", "1"]);
    let path = tmp.path().join("sweep.csv");
    write_sweep_csv(&path, &rows).unwrap();
    assert_eq!(
        read_csv_header(&path).unwrap(),
        ["axis", "value", "seed", "initial_val_mae", "val_mae", "val_rmse", "precision", "recall", "f1"]
    );
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 4);

    let again = ablate(&cfg, SweepAxis::Alpha, &strings(&["0.01", "0.1", "1"]), &[0], &train_set, &val, None).unwrap();
    let path2 = tmp.path().join("sweep2.csv");
    write_sweep_csv(&path2, &again).unwrap();
    assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());

    let err = "depth".parse::<SweepAxis>().unwrap_err();
    assert!(matches!(err, Error::UnknownAxis(_)));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn empty_scenes_train_and_evaluate() {
    let mut cfg = tiny();
    cfg.optim.epochs = 2;
    cfg.scene.count_range = [0, 0];
    let scenes: Vec<Sample> = (0..4).map(|i| gen_scene(&SceneConfig { seed: i, ..cfg.scene.clone() }).unwrap()).collect();
    let (model, outcome) = train_on(&cfg, &scenes, &scenes[..2], None).unwrap();
    assert!(outcome.rows.iter().all(|r| r.stats.total.is_finite() && r.stats.l_cl == 0.0));
    let refs: Vec<(String, &Sample)> = scenes.iter().enumerate().map(|(i, s)| (i.to_string(), s)).collect();
    let r = evaluate_model(&model, &refs, &cfg.eval, 2).unwrap();
    assert!(r.mae.is_finite());
    assert!(r.rows.iter().all(|m| m.tp == 0 && m.fn_ == 0));
}

#[test]
fn single_sided_label_grids_are_skipped() {
    let all = |v: u8| LabelGrid { h: 2, w: 2, labels: vec![v; 4], target_count: 4 * v as usize, background_count: 4 * (1 - v) as usize };
    for variant in ClmVariant::ALL {
        for (side, reason) in [(1, SkipReason::NoNegatives), (0, SkipReason::NoPositives)] {
            let mut g = Graph::new();
            let proj = g.param(DenseArray::from_fn(&[2, 3, 2, 2], |i| (i as f64 * 0.37).sin()));
            let l = contrastive_loss(&mut g, proj, &[all(side), all(side)], variant).unwrap();
            assert_eq!(g.value(l.loss).item(), 0.0, "{variant}");
            assert_eq!(l.skipped, [(0, reason), (1, reason)], "{variant}");
        }
    }
}

#[test]
fn contrastive_training_lowers_the_contrastive_term() {
    let mut cfg = tiny();
    cfg.optim.warmup_steps = 0;
    cfg.loss.beta = 1.0;
    cfg.loss.alpha = 0.0;
    cfg.scene.count_range = [4, 12];
    let scenes: Vec<Sample> = (0..4).map(|i| gen_scene(&SceneConfig { seed: 50 + i, ..cfg.scene.clone() }).unwrap()).collect();
    let data = prepare(&scenes, &cfg).unwrap();
    let batch: Vec<_> = data.iter().collect();
    let mut t = Trainer::new(&cfg).unwrap();
    let first = t.step(&batch, 0).unwrap().l_cl;
    let mut last = first;
    for s in 1..40 {
        last = t.step(&batch, s).unwrap().l_cl;
    }
    assert!(last < 0.8 * first, "{first} -> {last}");
}
