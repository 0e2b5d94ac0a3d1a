use mkdpinn_core::eval::{mae, nasa_score, r2, rmse};
use mkdpinn_core::eval::{parse_report, render_report, ReportFormat};
use mkdpinn_core::MetricsReport;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

struct Naive {
    rmse: f64,
    mae: f64,
    r2: f64,
    score: f64,
}

fn naive(truth: &[f64], pred: &[f64]) -> Naive {
    let n = truth.len();
    let mut sse = 0.0;
    let mut sae = 0.0;
    let mut score = 0.0;
    let mut total = 0.0;
    for i in 0..n {
        let d = pred[i] - truth[i];
        sse += d * d;
        sae += if d < 0.0 { -d } else { d };
        score += if d < 0.0 { (-d / 13.0).exp() - 1.0 } else { (d / 10.0).exp() - 1.0 };
        total += truth[i];
    }
    let mean = total / n as f64;
    let mut sst = 0.0;
    for t in truth {
        sst += (t - mean) * (t - mean);
    }
    Naive {
        rmse: (sse / n as f64).sqrt(),
        mae: sae / n as f64,
        r2: 1.0 - sse / sst,
        score,
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn metrics_match_a_naive_reference() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    for _ in 0..1000 {
        let n = rng.gen_range(2..60);
        let truth: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..125.0)).collect();
        let pred: Vec<f64> = truth.iter().map(|t| t + rng.gen_range(-40.0..40.0)).collect();
        let o = naive(&truth, &pred);
        assert!(close(rmse(&truth, &pred).unwrap(), o.rmse));
        assert!(close(mae(&truth, &pred).unwrap(), o.mae));
        assert!(close(r2(&truth, &pred).unwrap(), o.r2));
        assert!(close(nasa_score(&truth, &pred).unwrap(), o.score));
    }
}

#[test]
fn late_and_early_penalties_meet_at_e_minus_one() {
    let e1 = std::f64::consts::E - 1.0;
    assert!((nasa_score(&[50.0], &[60.0]).unwrap() - e1).abs() < 1e-9);
    assert!((nasa_score(&[50.0], &[37.0]).unwrap() - e1).abs() < 1e-9);
    assert_eq!(nasa_score(&[50.0], &[50.0]).unwrap(), 0.0);
}

#[test]
fn degenerate_inputs_are_errors() {
    assert!(rmse(&[], &[]).is_err());
    assert!(rmse(&[1.0, 2.0], &[1.0]).is_err());
    assert!(r2(&[3.0, 3.0], &[1.0, 2.0]).is_err());
}

proptest! {
    #[test]
    fn late_costs_more_than_early(e in 1e-6f64..50.0, t in 0.0f64..125.0) {
        prop_assert!(nasa_score(&[t], &[t + e]).unwrap() > nasa_score(&[t], &[t - e]).unwrap());
    }

    #[test]
    fn r2_is_one_minus_sse_over_sst(pairs in prop::collection::vec((0.0f64..125.0, -30.0f64..30.0), 2..40), shift in -50.0f64..50.0) {
        let truth: Vec<f64> = pairs.iter().map(|p| p.0 + shift).collect();
        let pred: Vec<f64> = pairs.iter().map(|p| p.0 + p.1 + shift).collect();
        let mean = truth.iter().sum::<f64>() / truth.len() as f64;
        let sst: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
        prop_assume!(sst > 1e-6);
        let sse: f64 = truth.iter().zip(&pred).map(|(t, p)| (p - t).powi(2)).sum();
        prop_assert!((r2(&truth, &pred).unwrap() - (1.0 - sse / sst)).abs() < 1e-9);
    }

    #[test]
    fn rmse_bounds_mae(pairs in prop::collection::vec((0.0f64..125.0, 0.0f64..125.0), 1..40)) {
        let (t, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assert!(rmse(&t, &p).unwrap() + 1e-12 >= mae(&t, &p).unwrap());
    }

    #[test]
    fn reports_round_trip(pairs in prop::collection::vec((0.0f64..125.0, -10.0f64..140.0), 2..20)) {
        prop_assume!(pairs.iter().any(|p| p.0 != pairs[0].0));
        let report = MetricsReport::from_pairs(&pairs).unwrap();
        for format in [ReportFormat::Csv, ReportFormat::Json] {
            let text = render_report(&report, format).unwrap();
            let back = parse_report(&text, format).unwrap();
            prop_assert_eq!(&back.pairs, &report.pairs);
        }
    }
}
