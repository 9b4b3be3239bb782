use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn ms(o: &[f64], p: &[f64]) -> MetricSeries {
    MetricSeries::new(o.to_vec(), p.to_vec()).unwrap()
}

#[test]
fn series_validation() {
    assert!(MetricSeries::new(vec![1.0], vec![1.0]).is_err());
    assert!(MetricSeries::new(vec![1.0, 2.0], vec![1.0]).is_err());
    assert!(MetricSeries::new(vec![1.0, f64::NAN], vec![1.0, 2.0]).is_err());
}

#[test]
fn nse_examples() {
    let o = [1.0, 2.0, 3.0];
    assert_eq!(nse(&ms(&o, &o)).unwrap(), 1.0);
    assert_eq!(nse(&ms(&o, &[2.0, 2.0, 2.0])).unwrap(), 0.0);
    assert!((nse(&ms(&o, &[1.0, 2.0, 4.0])).unwrap() - 0.5).abs() < 1e-15);
    assert!(matches!(nse(&ms(&[2.0, 2.0], &[1.0, 3.0])), Err(Error::UndefinedVariance)));
}

#[test]
fn pbias_examples() {
    let o = [1.0, 2.0, 3.0];
    assert_eq!(pbias(&ms(&o, &o)).unwrap(), 0.0);
    assert!((pbias(&ms(&[1.0, 1.0], &[1.1, 1.1])).unwrap() - 10.0).abs() < 1e-12);
    assert_eq!(pbias(&ms(&[2.0, 2.0], &[1.0, 1.0])).unwrap(), -50.0);
    assert_eq!(
        pbias_with(&ms(&[2.0, 2.0], &[1.0, 1.0]), PbiasConvention::ObservedMinusPredicted).unwrap(),
        50.0
    );
    assert!(matches!(pbias(&ms(&[1.0, -1.0], &[1.0, 1.0])), Err(Error::UndefinedBias)));
}

#[test]
fn rsr_examples() {
    let o = [1.0, 2.0, 3.0];
    assert_eq!(rsr(&ms(&o, &o)).unwrap(), 0.0);
    assert!((rsr(&ms(&o, &[2.0, 3.0, 4.0])).unwrap() - 1.0).abs() < 1e-15);
    let p = [1.3, 1.7, 3.4];
    let k = 7.5;
    let scaled = rsr(&ms(&o.map(|v| v * k), &p.map(|v| v * k))).unwrap();
    assert!((scaled - rsr(&ms(&o, &p)).unwrap()).abs() < 1e-12);
    assert!(matches!(rsr(&ms(&[1.0, 1.0], &[1.0, 2.0])), Err(Error::UndefinedVariance)));
}

#[test]
fn r_squared_examples() {
    let o = [1.0, 2.0, 3.0, 5.0];
    assert!((r_squared(&ms(&o, &o.map(|v| 2.0 * v + 1.0))).unwrap() - 1.0).abs() < 1e-15);
    assert!((r_squared(&ms(&o, &o.map(|v| -v))).unwrap() - 1.0).abs() < 1e-15);
    assert!((r_squared(&ms(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0])).unwrap() - 0.25).abs() < 1e-15);
    assert!(matches!(r_squared(&ms(&o, &[1.0; 4])), Err(Error::UndefinedCorrelation)));
}

#[test]
fn classification_reproduces_reported_ratings() {
    let cases = [
        ("NSE", 0.98, Category::VeryGood),
        ("NSE", 0.73, Category::Good),
        ("NSE", 0.68, Category::Satisfactory),
        ("RSR", 0.14, Category::VeryGood),
        ("RSR", 0.56, Category::Good),
        ("RSR", 0.52, Category::Good),
        ("PBIAS", 2.6, Category::VeryGood),
        ("PBIAS", -1.0, Category::VeryGood),
        ("PBIAS", -15.5, Category::Satisfactory),
        ("R2", 0.99, Category::VeryGood),
        ("R2", 0.98, Category::VeryGood),
        ("R2", 0.77, Category::Good),
        ("R2", 0.76, Category::Good),
    ];
    for (m, v, want) in cases {
        assert_eq!(classify(m, v).unwrap(), want, "{m} {v}");
    }
}

#[test]
fn band_edges() {
    assert_eq!(classify("nse", 0.8).unwrap(), Category::Good);
    assert_eq!(classify("nse", 0.5).unwrap(), Category::Unsatisfactory);
    assert_eq!(classify("nse", -3.0).unwrap(), Category::Unsatisfactory);
    assert_eq!(classify("rsr", 0.5).unwrap(), Category::VeryGood);
    assert_eq!(classify("rsr", 0.7).unwrap(), Category::Satisfactory);
    assert_eq!(classify("rsr", 0.71).unwrap(), Category::Unsatisfactory);
    assert_eq!(classify("pbias", 5.0).unwrap(), Category::Good);
    assert_eq!(classify("pbias", -10.0).unwrap(), Category::Satisfactory);
    assert_eq!(classify("pbias", 15.6).unwrap(), Category::Unsatisfactory);
    assert_eq!(classify("r2", 0.6).unwrap(), Category::Unsatisfactory);
    assert!(matches!(classify("kge", 0.5), Err(Error::UnknownMetric(_))));
    assert!(classify("nse", f64::NAN).is_err());
}

#[test]
fn band_table_round_trips_through_json() {
    let t = BandTable::default();
    let s = serde_json::to_string(&t).unwrap();
    assert_eq!(serde_json::from_str::<BandTable>(&s).unwrap(), t);
    assert_eq!(t.version, BAND_TABLE_VERSION);
}

#[test]
fn report_json_and_table() {
    let r = MetricReport::compute(&ms(&[1.0, 2.0, 3.0, 4.0], &[1.1, 1.9, 3.2, 3.9])).unwrap();
    let j = r.to_json();
    assert_eq!(j["NSE"]["category"], "VeryGood");
    assert_eq!(MetricReport::from_json(&j).unwrap(), r);
    let table = r.to_table();
    assert_eq!(table.lines().count(), 5);
    assert!(table.lines().nth(1).unwrap().starts_with("NSE"));
    assert!(table.contains('%'));
}

/// Straight-from-formula reimplementation with different summation forms.
fn oracle(o: &[f64], p: &[f64]) -> [f64; 4] {
    let n = o.len() as f64;
    let mut so = 0.0;
    let mut sp = 0.0;
    for i in 0..o.len() {
        so += o[i];
        sp += p[i];
    }
    let obar = so / n;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut diff = 0.0;
    for i in 0..o.len() {
        num += (o[i] - p[i]).powi(2);
        den += (o[i] - obar).powi(2);
        diff += p[i] - o[i];
    }
    let nse = 1.0 - num / den;
    let pbias = diff * 100.0 / so;
    let rmse = (num / n).sqrt();
    let s_obs = (den / (n - 1.0)).sqrt();
    let rsr = rmse / s_obs;
    // textbook computational form of Pearson r
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..o.len() {
        sxy += o[i] * p[i];
        sxx += o[i] * o[i];
        syy += p[i] * p[i];
    }
    let r = (n * sxy - so * sp) / ((n * sxx - so * so).sqrt() * (n * syy - sp * sp).sqrt());
    [nse, pbias, rsr, r * r]
}

#[test]
fn matches_independent_oracle_on_random_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(356);
    for _ in 0..100 {
        let o: Vec<f64> = (0..356).map(|_| rng.gen_range(0.0..1.0)).collect();
        let p: Vec<f64> = o.iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect();
        let s = ms(&o, &p);
        let want = oracle(&o, &p);
        let got = [nse(&s).unwrap(), pbias(&s).unwrap(), rsr(&s).unwrap(), r_squared(&s).unwrap()];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= 1e-9, "{g} vs {w}");
        }
    }
}

fn series() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(0.1..10.0f64, n),
            prop::collection::vec(0.1..10.0f64, n),
        )
    })
}

proptest! {
    #[test]
    fn nse_at_most_one((o, p) in series()) {
        let s = ms(&o, &p);
        if let Ok(v) = nse(&s) {
            prop_assert!(v <= 1.0);
        }
        if let Ok(v) = r_squared(&s) {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn affine_invariance((o, p) in series(), a in prop_oneof![0.2..5.0f64, -5.0..-0.2f64], b in -3.0..3.0f64) {
        let s = ms(&o, &p);
        let t = ms(&o.iter().map(|v| a * v + b).collect::<Vec<_>>(), &p.iter().map(|v| a * v + b).collect::<Vec<_>>());
        for f in [nse, rsr, r_squared] {
            if let (Ok(x), Ok(y)) = (f(&s), f(&t)) {
                prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0), "{} vs {}", x, y);
            }
        }
        let k = a.abs();
        let u = ms(&o.iter().map(|v| k * v).collect::<Vec<_>>(), &p.iter().map(|v| k * v).collect::<Vec<_>>());
        prop_assert!((pbias(&s).unwrap() - pbias(&u).unwrap()).abs() <= 1e-10 * pbias(&s).unwrap().abs().max(1.0));
    }

    #[test]
    fn perfect_prediction_identities(o in prop::collection::vec(0.1..10.0f64, 2..50)) {
        prop_assume!(o.iter().any(|v| *v != o[0]));
        let s = ms(&o, &o);
        prop_assert_eq!(nse(&s).unwrap(), 1.0);
        prop_assert_eq!(pbias(&s).unwrap(), 0.0);
        prop_assert_eq!(rsr(&s).unwrap(), 0.0);
        prop_assert!((r_squared(&s).unwrap() - 1.0).abs() <= 1e-12);
    }
}
