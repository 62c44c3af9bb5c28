use ptfm::model::{fit_ptfm, InputTerm, NoiseOrders, PtfmSpec};
use ptfm::risk::{default_delta_x, relative_risk, rr_confidence_interval, rr_from_fit};
use ptfm::synth::{generate, Scenario};
use ptfm::{Error, RationalLag};

#[test]
fn published_filters_give_published_risks() {
    let no2 = RationalLag::new(vec![3.011e-3], vec![-0.7138], 1).unwrap();
    let pm10 = RationalLag::new(vec![0.2257e-3, 0.4513e-3, -0.3605e-3], vec![0.8992], 1).unwrap();
    let avtemp = RationalLag::new(vec![-0.0006], vec![0.1398, 0.2337], 0).unwrap();
    let rr = |f: &RationalLag, dx: f64| relative_risk(f.steady_state_gain().unwrap(), dx);
    assert!((rr(&no2, 50.0) - 1.0918).abs() < 1e-3);
    assert!(rr(&pm10, 50.0) > 1.0);
    assert!(rr(&avtemp, 10.0) < 1.0);
}

#[test]
fn risk_is_invariant_to_the_unit_of_the_input() {
    let g = 0.0017;
    let in_ug = relative_risk(g, 50.0);
    let in_mg = relative_risk(g * 1000.0, 0.05);
    assert!((in_ug - in_mg).abs() < 1e-12);
    let a = rr_confidence_interval(g, 0.0005, 50.0, 0.95).unwrap();
    let b = rr_confidence_interval(g * 1000.0, 0.5, 0.05, 0.95).unwrap();
    assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
}

#[test]
fn sign_of_the_gain_sets_the_side_of_one() {
    assert!(relative_risk(0.002, 50.0) > 1.0);
    assert!(relative_risk(-0.002, 50.0) < 1.0);
    assert_eq!(relative_risk(0.0, 50.0), 1.0);
    let (lo, hi) = rr_confidence_interval(-0.002, 0.0001, 50.0, 0.95).unwrap();
    assert!(lo < hi && hi < 1.0);
    assert!(rr_confidence_interval(0.1, -1.0, 50.0, 0.95).is_err());
    assert!(rr_confidence_interval(0.1, 0.01, 50.0, 1.0).is_err());
}

#[test]
fn fitted_risks_follow_from_the_fitted_gain() {
    let (data, _) = generate(&Scenario::default()).unwrap();
    let spec = PtfmSpec::new(
        vec![InputTerm::new("so2", 0, 0, 2), InputTerm::new("no2", 0, 0, 1), InputTerm::new("pm10", 1, 0, 1)],
        NoiseOrders::NONE,
    );
    let fit = fit_ptfm(&data, &spec).unwrap();
    for name in ["so2", "no2", "pm10"] {
        let term = fit.term(name).unwrap();
        let rr = rr_from_fit(&fit, name, default_delta_x(name), 0.95).unwrap();
        assert!((rr.rr - (term.gain * 50.0).exp()).abs() < 1e-12);
        let (lo, hi) = rr.ci.unwrap();
        assert!(lo < rr.rr && rr.rr < hi);
        let expected = rr_confidence_interval(term.gain, term.gain_se.unwrap(), 50.0, 0.95).unwrap();
        assert_eq!((lo, hi), expected);
    }
    assert!(matches!(rr_from_fit(&fit, "co", 50.0, 0.95), Err(Error::UnknownSeries(_))));
    assert_eq!(default_delta_x("AvTemp"), 10.0);
    assert_eq!(default_delta_x("humidity"), 10.0);
}
