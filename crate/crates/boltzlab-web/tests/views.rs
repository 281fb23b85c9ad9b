use boltzlab_web::{coercivity, decay, schedule};

fn parse(s: String) -> serde_json::Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn schedule_reports_exponents() {
    let v = parse(schedule(0.0, 0.1));
    assert!((v["sigma"].as_f64().unwrap() - 2.8).abs() < 1e-12);
    assert!(v["p"].is_null());
    let v = parse(schedule(1.2, 0.1));
    assert!(v["error"].as_str().unwrap().contains("3/2"));
}

#[test]
fn coercivity_is_positive_on_small_grid() {
    let v = parse(coercivity(1.0, 0.5, 6));
    assert!(v["delta0"].as_f64().unwrap() > 0.0, "{v}");
    assert!(parse(coercivity(1.0, 0.5, 20))["error"].is_string());
}

#[test]
fn decay_series_decreases() {
    let v = parse(decay(1.0, 0.5, 6, 0.0, 40.0));
    let s = v["series"].as_array().unwrap();
    assert_eq!(s.len(), 101);
    assert!(s[100][1].as_f64().unwrap() < s[0][1].as_f64().unwrap());
    assert!(v["slope"].as_f64().unwrap() < 0.0, "{v}");
}
