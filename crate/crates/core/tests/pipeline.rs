mod common;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use common::*;
use spinecomp::config::{CompleterKind, ExperimentConfig, MetricsConfig};
use spinecomp::geometry::{render_depth_and_mask, unproject, CameraIntrinsics, PointCloud, RigidTransform};
use spinecomp::pipeline::synth::{specimen_meshes, write_fixture, FixtureSpec};
use spinecomp::pipeline::{
    build_dataset, evaluate_prediction, evaluate_samples, extract_vertebra, generate_gt_labels, levels_present,
    make_folds, run_crossval, Completer, SampleRecord,
};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic")
}

fn fixture_config(overrides: &[&str]) -> ExperimentConfig {
    let text = std::fs::read_to_string(fixture().join("fixture.toml")).unwrap();
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ExperimentConfig::from_toml_str(&text, &o).unwrap()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in walk(dir) {
        out.push(e.strip_prefix(dir).unwrap().to_path_buf());
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn bundled_fixture_regenerates_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    write_fixture(tmp.path(), &FixtureSpec::default()).unwrap();
    let expected = files(&fixture());
    assert_eq!(files(tmp.path()), expected);
    for f in expected {
        assert_eq!(
            std::fs::read(tmp.path().join(&f)).unwrap(),
            std::fs::read(fixture().join(&f)).unwrap(),
            "{}",
            f.display()
        );
    }
}

#[test]
fn fixture_dataset_has_every_vertebra() {
    let cfg = fixture_config(&[]);
    let ds = build_dataset(&fixture().join("manifest.json"), &cfg).unwrap();
    assert_eq!(ds.specimens, ["S2", "S3"]);
    // Two specimens, two frames each, two levels per frame.
    assert_eq!(ds.samples.len() + ds.skipped.len(), 8);
    for s in &ds.samples {
        assert_eq!(s.complete.len(), cfg.metrics.gt_points);
        assert!(!s.partial.is_empty());
        assert!(s.seg_iou.unwrap() > 0.9, "{:?}", s.seg_iou);
    }
}

#[test]
fn oracle_completer_scores_near_perfect() {
    let cfg = fixture_config(&[]);
    let ds = build_dataset(&fixture().join("manifest.json"), &cfg).unwrap();
    let n = cfg.metrics.gt_points;
    let report = evaluate_samples(&ds.samples, Completer::Oracle, n, &cfg.metrics, 0).unwrap();
    assert_eq!(report.rows.len(), ds.samples.len());
    for r in &report.rows {
        assert_eq!(r.cd, 0.0);
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.emd, 0.0);
        assert_eq!(r.snr_db, f64::INFINITY);
    }
}

#[test]
fn crossval_rows_cover_every_sample_once() {
    let cfg = fixture_config(&["crossval.completer=\"copy_input\""]);
    assert_eq!(cfg.crossval.completer, CompleterKind::CopyInput);
    let ds = build_dataset(&fixture().join("manifest.json"), &cfg).unwrap();
    let outcomes = run_crossval(&ds, &cfg).unwrap();
    assert_eq!(outcomes.len(), 2);
    let mut keys = BTreeSet::new();
    for o in &outcomes {
        assert!(o.model.is_none() && o.curve.is_none());
        for r in &o.report.rows {
            assert_eq!(r.specimen, o.fold.held_out);
            assert!(keys.insert((r.specimen.clone(), r.frame.clone(), r.level)));
        }
    }
    assert_eq!(keys.len(), ds.samples.len());
}

fn two_clusters() -> SampleRecord {
    let mut r = rng(21);
    let near: Vec<_> = random_points(&mut r, 200, 5.0);
    let far: Vec<_> = random_points(&mut r, 200, 5.0).into_iter().map(|p| [p[0] + 60.0, p[1], p[2]]).collect();
    SampleRecord {
        specimen: "S".into(),
        frame: "f".into(),
        level: 1,
        partial: cloud(&near[..150]),
        complete: cloud(&[near.clone(), far].concat()),
        seg_iou: None,
        seg_accuracy: None,
    }
}

#[test]
fn copy_input_fails_on_the_hidden_side() {
    let s = two_clusters();
    let cfg = MetricsConfig {
        emd_points: 64,
        ..MetricsConfig::default()
    };
    let pred = Completer::CopyInput.complete(&s, 300, 1).unwrap();
    let row = evaluate_prediction(&s, &pred, &cfg, 1).unwrap();
    let (top, bottom) = (row.cd_top.unwrap(), row.cd_bottom.unwrap());
    assert!(bottom > 100.0 * top, "top {top} bottom {bottom}");
    assert!(row.iou_input < 1.0);

    let oracle = Completer::Oracle.complete(&s, 400, 1).unwrap();
    let row = evaluate_prediction(&s, &oracle, &cfg, 1).unwrap();
    assert_eq!(row.cd, 0.0);
    assert_eq!(row.cd_bottom, Some(0.0));
}

#[test]
fn labels_partition_the_spine_cloud() {
    let meshes = specimen_meshes(1, 3).unwrap();
    let intr = CameraIntrinsics::new(200.0, 200.0, 39.5, 31.5, 80, 64).unwrap();
    let pose = RigidTransform::translation([0.0, 0.0, 300.0]);
    let (levels, depth) = render_depth_and_mask(&meshes, &pose, &intr).unwrap();
    let mut spine = unproject(&depth, &intr, Some(&levels.to_binary()), None).unwrap();
    // Stray points far from any mesh must end up as background.
    spine.points.extend([[500.0, 0.0, 300.0], [0.0, 500.0, 300.0]]);
    let labeled = generate_gt_labels(&spine, &meshes, &pose, 2.0).unwrap();
    let present = levels_present(&labeled).unwrap();
    assert_eq!(present, BTreeSet::from([1, 2, 3]));
    let mut total = 0;
    for l in &present {
        let v = extract_vertebra(&labeled, *l).unwrap().unwrap();
        assert!(v.labels.as_ref().unwrap().iter().all(|x| x == l));
        total += v.len();
    }
    let background = labeled.labels.as_ref().unwrap().iter().filter(|&&l| l == 0).count();
    assert_eq!(background, 2);
    assert_eq!(total + background, labeled.len());
    assert!(extract_vertebra(&labeled, 4).unwrap().is_none());
}

#[test]
fn folds_partition_the_specimens() {
    let ids: Vec<String> = (2..=10).map(|i| format!("S{i}")).collect();
    let folds = make_folds(&ids, 3).unwrap();
    assert_eq!(folds.len(), ids.len());
    let held: Vec<&String> = folds.iter().map(|f| &f.held_out).collect();
    assert_eq!(held, ids.iter().collect::<Vec<_>>());
    for f in &folds {
        assert!(!f.train.contains(&f.held_out));
        assert_eq!(f.train.len() + 1, ids.len());
    }
    let seeds: BTreeSet<u64> = folds.iter().map(|f| f.seed).collect();
    assert_eq!(seeds.len(), folds.len());
    assert_eq!(make_folds(&ids, 3).unwrap(), folds);
    assert!(make_folds(&ids[..1], 3).is_err());
}

#[test]
fn empty_cloud_is_rejected_by_the_metrics() {
    let s = two_clusters();
    let err = evaluate_prediction(&s, &PointCloud::default(), &MetricsConfig::default(), 0).unwrap_err();
    assert_eq!(err.category(), "empty-input");
}
