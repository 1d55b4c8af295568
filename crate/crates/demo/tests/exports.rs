use anova_rff_demo::{copula_scatter_json, find_interactions_json};

#[test]
fn copula_scatter_reports_both_taus() {
    let v: serde_json::Value = serde_json::from_str(&copula_scatter_json("clayton", 2.0, 400, 1).unwrap()).unwrap();
    assert_eq!(v["points"].as_array().unwrap().len(), 400);
    let (s, e) = (v["tau_sample"].as_f64().unwrap(), v["tau_exact"].as_f64().unwrap());
    assert!((e - 0.5).abs() < 1e-12);
    assert!((s - e).abs() < 0.1, "{s}");
    assert!(copula_scatter_json("gumbel", 0.5, 10, 1).is_err());
}

#[test]
fn find_interactions_recovers_ft1_structure() {
    let v: serde_json::Value =
        serde_json::from_str(&find_interactions_json("fT1", "default", 6, 400, 2, 0.01, 300, 3).unwrap()).unwrap();
    assert_eq!(v["mode"], "independent");
    assert!(v["terms"].as_array().unwrap().contains(&serde_json::json!([1, 2])));
    assert!(!v["rounds"].as_array().unwrap().is_empty());
    assert!(find_interactions_json("nope", "default", 6, 400, 2, 0.01, 300, 3).is_err());
}
