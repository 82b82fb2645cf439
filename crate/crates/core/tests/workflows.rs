use std::fs::File;
use std::io::{BufReader, BufWriter, Write};

use calmeasure::*;

#[test]
fn csv_round_trip_preserves_measure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.csv");
    let dist = DiscreteDistribution::new(vec![Atom::new(0.2, 0.5, 0.3), Atom::new(0.8, 0.5, 0.6)])
        .unwrap();
    let d = sample_dataset(&dist, 300, 11).unwrap();
    write_scored_csv(&d, BufWriter::new(File::create(&path).unwrap())).unwrap();
    let back = read_scored_csv(File::open(&path).unwrap()).unwrap();
    assert_eq!(back, d);
    assert_eq!(
        empirical_calibration(&back).unwrap(),
        empirical_calibration(&d).unwrap()
    );
}

#[test]
fn calibrate_then_apply_through_link_json() {
    let d = ScoredDataset::from_parts(&[0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.9], &[0, 1, 0, 0, 1, 1, 1])
        .unwrap();
    let link = calibrate(&d).unwrap();
    let json = serde_json::to_string(&link).unwrap();
    let restored: LinkFunction = serde_json::from_str(&json).unwrap();
    assert_eq!(restored, link);
    let calibrated = d
        .with_scores(&apply_link(&restored, &d.scores()).unwrap())
        .unwrap();
    assert!(empirical_calibration(&calibrated).unwrap().c_emp <= 1e-12);
    assert!(empirical_calibration(&d).unwrap().c_emp > 0.0);
}

#[test]
fn corpus_export_import_train() {
    let config = LdaConfig {
        num_docs: 400,
        num_topics: 4,
        vocab_size: 50,
        avg_doc_len: 30.0,
        labels_per_doc: 2,
        ..Default::default()
    };
    let corpus = generate_corpus(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.txt");
    {
        let mut w = BufWriter::new(File::create(&path).unwrap());
        export_corpus(&corpus, &mut w).unwrap();
        w.flush().unwrap();
    }
    let imported = import_corpus(BufReader::new(File::open(&path).unwrap())).unwrap();
    assert_eq!(imported.config.as_ref(), Some(&config));
    assert_eq!(imported.records, corpus.records());

    let examples: Vec<SparseExample> = imported
        .records
        .iter()
        .map(SparseExample::from_record)
        .collect();
    let model = train_logistic(&examples, config.vocab_size, &TrainConfig::default()).unwrap();
    let nb = train_naive_bayes(&examples, config.vocab_size, 1.0).unwrap();
    for e in &examples {
        let p = predict_logistic(&model, &e.features).unwrap();
        let q = predict_naive_bayes(&nb, &e.features).unwrap();
        assert!(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0);
    }
}

#[test]
fn rescaled_margins_feed_the_loss_ratio() {
    // margins of an over-confident scorer, rescaled into [0, 1]
    let margins: Vec<f64> = (0..200).map(|i| f64::from(i) / 10.0 - 10.0).collect();
    let labels: Vec<u8> = (0..200).map(|i| u8::from(i % 3 != 0 && i > 60)).collect();
    let scores = rescale_scores(&margins).unwrap();
    assert_eq!(scores[0], 0.0);
    assert_eq!(scores[199], 1.0);
    let d = ScoredDataset::from_parts(&scores, &labels).unwrap();
    let grid: Vec<f64> = (1..10).map(|k| f64::from(k) / 10.0).collect();
    for r in loss_ratio_experiment(&d, &d, &grid).unwrap() {
        assert!(r.ratio <= 1.0, "{r:?}");
    }
}

#[test]
fn rademacher_estimates_are_reproducible() {
    let dist =
        DiscreteDistribution::new(vec![Atom::new(0.25, 0.5, 0.2), Atom::new(0.75, 0.5, 0.7)])
            .unwrap();
    let d = sample_dataset(&dist, 1000, 3).unwrap();
    let a = estimate_interval_rademacher(&d, ClassVariant::H, 5000, 9).unwrap();
    let b = estimate_interval_rademacher(&d, ClassVariant::H, 5000, 9).unwrap();
    assert_eq!(a, b);
    assert!(!a.exact);
    // two distinct outputs: the singleton-style class is small
    assert!(a.mean < 0.1);
    let eps = theorem2_epsilon(a.mean, d.len(), 0.05).unwrap();
    assert!(eps > 2.0 * a.mean);
}
