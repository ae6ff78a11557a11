use chanlearn::dataset::{self, ClassificationConfig, RegressionConfig};
use chanlearn::eta_process::Generation;
use chanlearn::forest::{self, TreeNode};
use chanlearn::{seed, Error};
use rand::Rng;

/// Feature 0 alone decides the class; the other features are noise.
fn feature_zero_rows(n: usize, n_classes: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = seed::stream(1);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let c = i % n_classes;
        let mut row: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
        row[0] = c as f64 + rng.random_range(0.0..0.9);
        x.push(row);
        y.push(c);
    }
    (x, y)
}

#[test]
fn separable_feature_gives_perfect_training_accuracy() {
    let (x, y) = feature_zero_rows(300, 5);
    let f = forest::fit_rows(&x, &y, 5, 100, 7).unwrap();
    for (row, &c) in x.iter().zip(&y) {
        assert_eq!(f.predict(row).unwrap(), c);
    }
}

#[test]
fn fully_grown_forest_fits_channel_data() {
    let ds = dataset::build_classification(&ClassificationConfig {
        per_class: 40,
        seq_len: 10,
        r: 1.0,
        generation: Generation::D1,
        seed: 2,
    })
    .unwrap();
    let f = forest::fit(&ds, 100, 3).unwrap();
    assert_eq!(f.trees.len(), 100);
    // unlimited depth memorises the bootstrap, majority vote recovers nearly all
    assert!(f.evaluate(&ds).unwrap().accuracy > 0.95);
}

#[test]
fn single_class_trees_are_leaves() {
    let (x, _) = feature_zero_rows(50, 5);
    let y = vec![3; 50];
    let f = forest::fit_rows(&x, &y, 5, 10, 0).unwrap();
    for t in &f.trees {
        assert_eq!(t.nodes.len(), 1);
        assert!(matches!(&t.nodes[0], TreeNode::Leaf { class_counts } if class_counts[3] == 50));
    }
    assert_eq!(f.predict(&x[0]).unwrap(), 3);
}

#[test]
fn same_seed_gives_same_forest() {
    let (x, y) = feature_zero_rows(200, 5);
    let a = forest::fit_rows(&x, &y, 5, 20, 11).unwrap();
    let b = forest::fit_rows(&x, &y, 5, 20, 11).unwrap();
    assert_eq!(a, b);
    let c = forest::fit_rows(&x, &y, 5, 20, 12).unwrap();
    assert_ne!(a.trees, c.trees);
}

#[test]
fn splits_respect_the_feature_count() {
    let (x, y) = feature_zero_rows(200, 5);
    let f = forest::fit_rows(&x, &y, 5, 10, 4).unwrap();
    for t in &f.trees {
        for node in &t.nodes {
            match node {
                TreeNode::Split { feature, left, right, .. } => {
                    assert!(*feature < 6);
                    assert!(*left < t.nodes.len() && *right < t.nodes.len());
                }
                TreeNode::Leaf { class_counts } => assert!(class_counts.iter().sum::<usize>() >= 1),
            }
        }
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let reg = dataset::build_regression(&RegressionConfig { count: 10, r: 1.0, seed: 0 }).unwrap();
    assert!(matches!(forest::fit(&reg, 10, 0), Err(Error::TaskMismatch(_))));
    let (x, y) = feature_zero_rows(20, 2);
    let f = forest::fit_rows(&x, &y, 2, 3, 0).unwrap();
    assert!(f.predict(&[0.0; 3]).is_err());
    assert!(forest::fit_rows(&x, &y, 2, 0, 0).is_err());
}
