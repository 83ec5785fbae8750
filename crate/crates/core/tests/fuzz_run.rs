mod support;

use std::collections::HashSet;

use neurofuzz_core::corpus::{load_dir, load_images};
use neurofuzz_core::coverage::profile_dataset;
use neurofuzz_core::fuzz::{fuzz_loop, read_failed_dir, read_run, write_run, Fixed6, FAILED_DIR, POOL_DIR};
use neurofuzz_core::{load_model, CriterionConfig, CriterionKind, FuzzConfig, Image, MutationConfig};

use support::fixtures;

/// Pixel constraint recomputed from raw bytes.
fn pixel_constraint_holds(reference: &Image, image: &Image, cfg: &MutationConfig) -> bool {
    let changed: Vec<u8> = reference
        .data()
        .iter()
        .zip(image.data())
        .filter(|(a, b)| a != b)
        .map(|(&a, &b)| a.abs_diff(b))
        .collect();
    let linf = changed.iter().copied().max().unwrap_or(0) as f64;
    if (changed.len() as f64) < cfg.alpha * reference.data().len() as f64 {
        linf <= 255.0
    } else {
        linf < cfg.beta * 255.0
    }
}

#[test]
fn persisted_run_satisfies_invariants() {
    let model = load_model(&fixtures().join("lenet_toy")).unwrap();
    let profile = profile_dataset(&model, &load_images(&fixtures().join("profile_data")).unwrap()).unwrap();
    let seeds = load_dir(&fixtures().join("corpus")).unwrap();
    let mut cfg = FuzzConfig {
        criterion: CriterionConfig::new(CriterionKind::Nbc),
        rng_seed: 21,
        ..FuzzConfig::default()
    };
    cfg.budget.iterations = Some(300);
    let outcome = fuzz_loop(&model, Some(&profile), &seeds, &cfg, true).unwrap();
    let report = &outcome.report;
    assert_eq!(report.iterations.len(), 300);

    let dir = tempfile::tempdir().unwrap();
    write_run(dir.path(), &outcome, true).unwrap();
    let run = read_run(dir.path()).unwrap();
    assert_eq!(run.config, cfg);
    assert_eq!(run.records, report.iterations);
    assert_eq!(run.summary.totals, report.totals);
    assert_eq!(run.summary.initial, report.initial);

    // failed tests: misclassified, constraint-valid, replayable
    let failed = read_failed_dir(&dir.path().join(FAILED_DIR)).unwrap();
    assert_eq!(failed.len(), outcome.failed.len());
    assert!(!failed.is_empty());
    let images: Vec<Image> = failed.iter().map(|f| f.image.clone()).collect();
    for (f, pred) in failed.iter().zip(model.predict_images(&images).unwrap()) {
        assert_ne!(pred, f.record.label);
        assert_eq!(Some(pred), f.record.predicted);
        assert!(pixel_constraint_holds(&f.reference, &f.image, &cfg.mutation), "{}", f.record.file);
        let affine: Vec<_> = f.record.transform_log.iter().filter(|t| t.is_affine()).collect();
        assert!(affine.len() <= 1);
        let replay = affine.first().map_or(f.original.clone(), |t| t.apply(&f.original));
        assert_eq!(replay, f.reference);
    }

    // pool: grows on gain only, never holds a failed test
    let gains = report.iterations.iter().filter(|r| r.gain).count();
    assert_eq!(outcome.pool.len(), report.initial.batches + gains);
    let failed_bytes: HashSet<&[u8]> = outcome.failed.iter().map(|f| f.image.data()).collect();
    for entry in &outcome.pool {
        let on_disk = read_failed_dir(&dir.path().join(POOL_DIR).join(format!("batch_{:06}", entry.batch.id))).unwrap();
        assert_eq!(on_disk.len(), entry.batch.seeds.len());
        for (seed, disk) in entry.batch.seeds.iter().zip(&on_disk) {
            assert!(!failed_bytes.contains(seed.image.data()));
            assert_eq!(seed.image, disk.image);
            assert!(pixel_constraint_holds(&seed.reference, &seed.image, &cfg.mutation));
        }
    }

    // coverage column recomputed from the evaluated-input log
    let log = outcome.evaluated.as_ref().unwrap();
    assert_eq!(log.len(), 301);
    let layers: Vec<_> = model.neuron_layers().iter().map(|l| l.range()).collect();
    let ratio_upto = |iteration: usize| {
        let upto: Vec<Image> = log[..=iteration].iter().flatten().cloned().collect();
        let covered = support::brute_items(&cfg.criterion, &layers, Some(&profile), &support::neuron_log(&model, &upto));
        Fixed6::new(support::brute_ratio(&cfg.criterion, model.neuron_count(), &covered))
    };
    assert_eq!(ratio_upto(0), report.initial.coverage);
    for rec in report.iterations.iter().filter(|r| r.iteration % 50 == 0) {
        assert_eq!(ratio_upto(rec.iteration as usize), rec.coverage, "iteration {}", rec.iteration);
    }
}

#[test]
fn truncated_report_names_line() {
    let model = load_model(&fixtures().join("lenet_toy")).unwrap();
    let seeds = load_dir(&fixtures().join("corpus")).unwrap();
    let mut cfg = FuzzConfig {
        criterion: CriterionConfig::new(CriterionKind::Nc),
        ..FuzzConfig::default()
    };
    cfg.budget.iterations = Some(5);
    let outcome = fuzz_loop(&model, None, &seeds, &cfg, false).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run(dir.path(), &outcome, false).unwrap();
    let path = dir.path().join("report.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[2] = "{\"iteration\": 3,";
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let err = read_run(dir.path()).unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");
}
