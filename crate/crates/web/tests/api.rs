use chanlearn::dataset::{build_classification, ClassificationConfig};
use chanlearn::eta_process::Generation;
use chanlearn::seed;
use chanlearn_web::{beta_curve, choi_entries, sample, shapes_from_moments};

#[test]
fn choi_entries_match_the_closed_form() {
    let v = choi_entries(0.5, 1.0).unwrap();
    assert_eq!(v.len(), 17);
    let c = 2f64.cosh();
    assert!((v[0] - (0.5 * c + 0.5)).abs() < 1e-12);
    assert!((v[2] - 0.5f64.sqrt() * 2f64.sinh()).abs() < 1e-12);
    assert!((v[10] - c).abs() < 1e-12);
    assert!(v[16] >= -1e-9);
    assert!(choi_entries(1.5, 1.0).is_err());
    assert!(choi_entries(0.5, -1.0).is_err());
}

#[test]
fn samples_match_the_dataset_builder() {
    let ds = build_classification(&ClassificationConfig {
        per_class: 4,
        seq_len: 12,
        r: 0.7,
        generation: Generation::D2,
        seed: 9,
    })
    .unwrap();
    for (i, s) in ds.samples.iter().enumerate() {
        let got = sample(i % 5, "d2", 12, 0.7, seed::derive(9, i as u64)).unwrap();
        assert_eq!(got.features(), s.features);
        assert_eq!(got.etas().len(), 12);
    }
}

#[test]
fn compound_samples_are_flat() {
    let s = sample(3, "d1", 20, 1.0, 4).unwrap();
    assert!(s.etas().iter().all(|&e| e == s.etas()[0]));
    assert_eq!(s.description(), "compound");
    assert!(sample(5, "d1", 20, 1.0, 4).is_err());
    assert!(sample(0, "d3", 20, 1.0, 4).is_err());
}

#[test]
fn beta_curve_integrates_to_one() {
    let n = 20_000;
    let v = beta_curve(2.0, 5.0, n).unwrap();
    let area: f64 = v[..n].iter().sum::<f64>() / (n + 1) as f64;
    assert!((area - 1.0).abs() < 1e-3, "{area}");
    assert!((v[n] - 2.0 / 7.0).abs() < 1e-12);
    assert!((v[n + 1] - 10.0 / (49.0 * 8.0)).abs() < 1e-12);
    let shapes = shapes_from_moments(v[n], v[n + 1]).unwrap();
    assert!((shapes[0] - 2.0).abs() < 1e-10 && (shapes[1] - 5.0).abs() < 1e-10);
}
