use std::path::Path;

use perspcam::body_model::make_default_model;
use perspcam::metrics::{evaluate_dataset, Prediction};
use perspcam::scenegen::{generate_dataset, generate_record, read_manifest, GenConfig, MANIFEST_FILE};

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = vec![(MANIFEST_FILE.to_string(), std::fs::read(dir.join(MANIFEST_FILE)).unwrap())];
    let mut masks: Vec<_> = std::fs::read_dir(dir.join("masks")).unwrap().map(|e| e.unwrap().path()).collect();
    masks.sort();
    for m in masks {
        files.push((m.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&m).unwrap()));
    }
    files
}

#[test]
fn hundred_records_evaluate_perfectly_against_themselves() {
    let model = make_default_model(12, 6).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = GenConfig { n_records: 100, global_seed: 2024, ..Default::default() };
    let manifest = generate_dataset(&cfg, &model, "builtin", dir.path()).unwrap();
    assert_eq!(manifest.records.len() + manifest.header.gaps.len(), 100);
    assert!(manifest.records.len() >= 90, "{} gaps", manifest.header.gaps.len());

    let back = read_manifest(&dir.path().join(MANIFEST_FILE)).unwrap();
    let predictions: Vec<Prediction> = back.records.iter().map(Prediction::from_record).collect();
    let report = evaluate_dataset(&model, &back.records, &predictions, Some(dir.path())).unwrap();
    assert_eq!(report.rows.len(), back.records.len());
    assert_eq!(report.warnings, 0);
    for row in &report.rows {
        assert_eq!([row.e_f, row.e_tz, row.e_inv_tz, row.e_txy, row.pve_mm, row.mpjpe_mm], [0.0; 6], "{}", row.id);
        assert!(row.pa_mpjpe_mm < 1e-6);
        assert_eq!(row.miou_pct, 100.0, "{}", row.id);
    }

    // Framing: the dolly zoom keeps the body at a reasonable size.
    let framed = back
        .records
        .iter()
        .filter(|r| {
            let c = perspcam::rasterizer::read_pgm(&dir.path().join(&r.mask_path)).unwrap().coverage();
            (0.02..=0.9).contains(&c)
        })
        .count();
    assert!(framed as f64 >= 0.95 * back.records.len() as f64, "{framed} framed");
    assert!(back.records.iter().all(|r| (0.3..=10.0).contains(&r.t.tz)));
}

#[test]
fn generation_is_byte_reproducible_and_index_addressable() {
    let model = make_default_model(8, 4).unwrap();
    let cfg = GenConfig { n_records: 12, global_seed: 77, width: 96, height: 96, ..Default::default() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let manifest = generate_dataset(&cfg, &model, "builtin", a.path()).unwrap();
    generate_dataset(&cfg, &model, "builtin", b.path()).unwrap();
    assert_eq!(read_tree(a.path()), read_tree(b.path()));

    let back = read_manifest(&a.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(back.records, manifest.records);
    let record = &back.records[5];
    let (alone, mask) = generate_record(&cfg, &model, record.seed_provenance.record_index).unwrap();
    assert_eq!(&alone, record);
    assert_eq!(perspcam::rasterizer::encode_pgm(&mask), std::fs::read(a.path().join(&record.mask_path)).unwrap());

    // A larger run shares its first records with the smaller one.
    let bigger = GenConfig { n_records: 20, ..cfg };
    let c = tempfile::tempdir().unwrap();
    let more = generate_dataset(&bigger, &model, "builtin", c.path()).unwrap();
    assert_eq!(&more.records[..manifest.records.len()], &manifest.records[..]);
}

#[test]
fn missing_predictions_are_listed() {
    let model = make_default_model(8, 4).unwrap();
    let cfg = GenConfig { n_records: 5, global_seed: 3, width: 64, height: 64, ..Default::default() };
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(&cfg, &model, "builtin", dir.path()).unwrap();
    let n = manifest.records.len();

    let report = evaluate_dataset(&model, &manifest.records, &[], None).unwrap();
    assert!(report.rows.is_empty());
    assert_eq!(report.warnings, n);
    assert_eq!(report.missing.len(), n);
    assert!(report.mean.e_f.is_nan());

    let mut one = Prediction::from_record(&manifest.records[0]);
    one.f_px *= 1.1;
    one.t[2] += 0.5;
    one.shape = None;
    one.pose = None;
    let report = evaluate_dataset(&model, &manifest.records, &[one], Some(dir.path())).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.warnings, n - 1);
    let row = &report.rows[0];
    assert!((row.e_f - 0.1).abs() < 1e-9);
    assert!((row.e_tz - 0.5).abs() < 1e-9);
    assert_eq!(report.mean.e_f, row.e_f);
    assert_eq!(report.median.e_tz, row.e_tz);
    assert!(row.miou_pct < 100.0);
}
