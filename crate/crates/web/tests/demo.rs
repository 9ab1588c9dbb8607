use precog_web::{learn_report, lms_report, matrix_spec, MAX_N};

#[test]
fn learned_transform_beats_normalization_on_ar1() {
    let rep = learn_report("ar1", 8, 0.9, 0, 0.1, 300).unwrap();
    assert_eq!(rep.n, 8);
    assert_eq!(rep.matrix.len(), 64);
    assert_eq!(rep.transformed.len(), 64);
    assert!(rep.best_cond < rep.cond_normalized);
    assert!(rep.history.iter().all(|c| *c >= rep.best_cond));
    for i in 0..8 {
        assert!((rep.transformed[i * 8 + i] - 1.0).abs() < 1e-12);
    }
    let dct = rep.methods.iter().find(|m| m.method == "dct").unwrap();
    assert!(dct.cond.unwrap() < rep.cond_normalized);
}

#[test]
fn report_serializes() {
    let rep = learn_report("hilbert", 5, 1e-3, 0, 0.1, 20).unwrap();
    let v: serde_json::Value = serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
    assert_eq!(v["matrix_id"], "hilbert-n5-alpha=0.001");
    assert_eq!(v["methods"].as_array().unwrap().len(), 5);
}

#[test]
fn rejects_bad_inputs() {
    assert!(matrix_spec("toeplitz", 4, 0.5, 0).is_err());
    assert!(matrix_spec("ar1", MAX_N + 1, 0.5, 0).is_err());
    assert!(learn_report("ar1", 6, 0.5, 0, 3.0, 10).is_err());
    assert!(lms_report(8, 0.9, 30.0, 0.01, 0, 0).is_err());
}

#[test]
fn transform_domain_curves_converge_faster() {
    let rep = lms_report(8, 0.9, 30.0, 0.01, 4000, 1).unwrap();
    assert_eq!(rep.curves.len(), 3);
    let hit = |i: usize| rep.curves[i].to_minus_20db.unwrap_or(usize::MAX);
    assert!(hit(1) < hit(0));
    assert!(hit(2) < hit(0));
    for c in &rep.curves {
        assert!(c.k.len() <= 400);
        assert_eq!(*c.k.last().unwrap(), 4000);
    }
}
