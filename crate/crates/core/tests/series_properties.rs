use proptest::prelude::*;

use ptfm::csv_io::{read_csv, ColumnSpec, MissingPolicy, Schema};
use ptfm::identification::cross_correlation;
use ptfm::{apply_rational_lag, backshift, difference, RationalLag, TimeSeries};

fn stable_lag() -> impl Strategy<Value = RationalLag> {
    (
        prop::collection::vec(-2.0f64..2.0, 1..=4),
        prop::collection::vec(-0.9f64..0.9, 0..=3),
        0usize..=3,
    )
        .prop_filter_map("stable denominator", |(omega, delta, b)| {
            let lag = RationalLag::new(omega, delta, b).ok()?;
            lag.denominator().root_moduli().iter().all(|m| 1.0 / m <= 0.95).then_some(lag)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn backshift_plus_difference_is_identity(x in prop::collection::vec(-1e4f64..1e4, 2..100)) {
        let ts = TimeSeries::new("x", x.clone()).unwrap();
        let b = backshift(&ts, 1).unwrap();
        let d = difference(&ts, 1).unwrap();
        for t in 1..x.len() {
            prop_assert!((b.values()[t] + d.values()[t - 1] - x[t]).abs() <= 1e-9 * x[t].abs().max(1.0));
        }
    }

    #[test]
    fn rational_lag_is_linear(
        lag in stable_lag(),
        x in prop::collection::vec(-10.0f64..10.0, 40),
        y in prop::collection::vec(-10.0f64..10.0, 40),
        a in -3.0f64..3.0,
        c in -3.0f64..3.0,
    ) {
        let f = |v: Vec<f64>| apply_rational_lag(&lag, &TimeSeries::new("v", v).unwrap()).unwrap();
        let combo: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + c * v).collect();
        let (fx, fy, fc) = (f(x), f(y), f(combo));
        for t in fc.warmup()..40 {
            let expect = a * fx.values()[t] + c * fy.values()[t];
            let scale = (a * fx.values()[t]).abs() + (c * fy.values()[t]).abs();
            prop_assert!((fc.values()[t] - expect).abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn constant_input_converges_to_gain(lag in stable_lag(), c in -100.0f64..100.0) {
        let z = apply_rational_lag(&lag, &TimeSeries::new("c", vec![c; 600]).unwrap()).unwrap();
        let g = lag.steady_state_gain().unwrap();
        prop_assert!((z.values()[599] - g * c).abs() < 1e-8 * c.abs().max(1.0) * g.abs().max(1.0));
        let sum: f64 = lag.impulse_response(1000 + lag.delay()).iter().sum();
        prop_assert!((sum - g).abs() < 1e-8 * g.abs().max(1.0));
    }

    #[test]
    fn ccf_is_scale_free(
        x in prop::collection::vec(-5.0f64..5.0, 60),
        y in prop::collection::vec(-5.0f64..5.0, 60),
        s in 0.01f64..100.0,
    ) {
        let xs = TimeSeries::new("x", x.clone()).unwrap();
        let ys = TimeSeries::new("y", y.clone()).unwrap();
        let scaled = TimeSeries::new("y", y.iter().map(|v| v * s).collect()).unwrap();
        let a = cross_correlation(&xs, &ys, 5).unwrap();
        let b = cross_correlation(&xs, &scaled, 5).unwrap();
        for ((_, u), (_, v)) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() < 1e-12);
        }
        let own = cross_correlation(&xs, &xs, 5).unwrap();
        prop_assert!((own[0].1 - 1.0).abs() < 1e-12);
    }
}

#[test]
fn published_sulphur_dioxide_filter_gain() {
    let so2 = RationalLag::new(vec![-0.3696e-3, -0.4723e-3], vec![0.0772, 0.8806], 2).unwrap();
    assert!((so2.steady_state_gain().unwrap() * 50.0 - 0.1217).abs() < 5e-4);
    let no2 = RationalLag::new(vec![3.011e-3], vec![-0.7138], 1).unwrap();
    assert!((no2.steady_state_gain().unwrap() * 50.0 - 0.0878).abs() < 5e-4);
}

#[test]
fn interpolated_cell_matches_hand_value() {
    let text = "date,y,so2\n2004-01-01,3,10\n2004-01-02,4,\n2004-01-03,5,16\n2004-01-04,2,20\n";
    let schema = Schema {
        index_column: Some("date".into()),
        output: ColumnSpec { name: "y".into(), unit: "count".into() },
        inputs: vec![ColumnSpec { name: "so2".into(), unit: "ug/m3".into() }],
        missing: MissingPolicy::Interpolate,
    };
    let data = read_csv(text.as_bytes(), &schema).unwrap();
    assert_eq!(data.len(), 4);
    assert_eq!(data.input("so2").unwrap().values(), &[10.0, 13.0, 16.0, 20.0]);
    let strict = Schema { missing: MissingPolicy::Error, ..schema };
    let err = read_csv(text.as_bytes(), &strict).unwrap_err().to_string();
    assert!(err.contains('3'), "{err}");
}
