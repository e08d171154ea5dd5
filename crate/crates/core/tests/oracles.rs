//! Monte Carlo checks against independently derived reference values.

use genhold_core::analysts::{ols_fit, run_session, FreedmanAdversary, ProbeFamily, SessionLimits};
use genhold_core::data::{partition, pairwise_sum};
use genhold_core::loss::{empirical_mean_loss, LossFunction};
use genhold_core::mechanisms::{NaiveDisclosure, OracleMode};
use genhold_core::model::{planted_truncated_mean, DistributionModel};
use genhold_core::rng::RngStream;
use genhold_core::testkit::{calibrate_correlation_null, evaluate_gapped_test, GappedLossTest};

fn unit(d: usize, i: usize) -> Vec<f64> {
    let mut w = vec![0.0; d];
    w[i] = 1.0;
    w
}

#[test]
fn null_samples_are_standard_normal() {
    let data = DistributionModel::global_null(4).unwrap().sample_dataset(50_000, &RngStream::new(1));
    let n = data.len() as f64;
    for j in 0..4 {
        let mean = pairwise_sum(data.iter().map(|s| s.x[j])) / n;
        let var = pairwise_sum(data.iter().map(|s| (s.x[j] - mean).powi(2))) / (n - 1.0);
        // 5 sigma: sd(mean) = 0.0045, sd(var) = 0.0063
        assert!(mean.abs() < 0.023, "mean {mean}");
        assert!((var - 1.0).abs() < 0.032, "var {var}");
    }
    let ymean = pairwise_sum(data.iter().map(|s| s.y)) / n;
    assert!(ymean.abs() < 0.023);
}

#[test]
fn planted_mean_matches_simulation() {
    for &(mu, sigma) in &[(0.55, 0.0), (0.8, 0.5), (0.99, 0.0)] {
        let mut w = vec![0.0; 5];
        w[2] = 1.0;
        let model = DistributionModel::planted_linear(w.clone(), mu, sigma).unwrap();
        let data = model.sample_dataset(200_000, &RngStream::new(7));
        let got = empirical_mean_loss(&LossFunction::linear(w).unwrap(), &data).unwrap();
        assert!((got - mu).abs() < 0.01, "mu {mu}: simulated {got}");
    }
}

#[test]
fn planted_scales_match_reference() {
    // scipy.integrate.quad of the clamped-normal mean, then brentq
    assert!((planted_truncated_mean(1.190_359_217_463_524, 0.0) - 0.55).abs() < 1e-6);
    assert!((planted_truncated_mean(6.872_315_215_026_133, 0.0) - 0.8).abs() < 1e-6);
    assert!((planted_truncated_mean(7.051_996_521_750_039, 0.5) - 0.8).abs() < 1e-6);
    assert!((planted_truncated_mean(1.337_782_011_697_919, 0.5) - 0.55).abs() < 1e-6);
}

#[test]
fn freedman_statistic_against_naive() {
    // E = sqrt(d) sqrt(2/pi) E[chi_n] / n for d = 1000, n = 100
    const EXPECTED: f64 = 2.516_832_673_793_211;
    let (d, n, trials) = (1000, 100, 40);
    let model = DistributionModel::global_null(d).unwrap();
    let mut total = 0.0;
    for t in 0..trials {
        let holdout = model.sample_dataset(n, &RngStream::new(t));
        let mut adversary = FreedmanAdversary::new(d, ProbeFamily::Correlation).unwrap();
        let mut mech = NaiveDisclosure::new(holdout).unwrap();
        let limits = SessionLimits {
            s_max: d as u64 + 1,
            k_max: u32::MAX,
            mode: OracleMode::StopOnConfirms,
        };
        let session = run_session(
            &mut adversary,
            &mut mech,
            &genhold_core::data::Dataset::new(d).unwrap(),
            &model,
            limits,
            &RngStream::new(t).child(2),
        );
        assert_eq!(session.queries_used(), d as u64 + 1);
        total += session.responses.last().unwrap().value().unwrap();
    }
    // sd of one statistic is about 0.06
    let mean = total / trials as f64;
    assert!((mean - EXPECTED).abs() < 0.05, "mean statistic {mean}");
}

#[test]
fn ols_recovers_planted_direction() {
    let d = 20;
    let w_true: Vec<f64> = (0..d).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } / (d as f64).sqrt()).collect();
    let model = DistributionModel::planted_linear(w_true.clone(), 0.8, 0.5).unwrap();
    for seed in 0..5 {
        let data = model.sample_dataset(2200, &RngStream::new(seed));
        let split = partition(&data, 200, &RngStream::new(seed).child(1)).unwrap();
        let w = ols_fit(&split.exploration).unwrap();
        let cos: f64 = w.iter().zip(&w_true).map(|(a, b)| a * b).sum();
        assert!(cos >= 0.95, "cosine {cos}");
    }
}

#[test]
fn gapped_null_acceptance_obeys_hoeffding() {
    let h = 50;
    let reps = 20_000u64;
    let model = DistributionModel::global_null(3).unwrap();
    let test = GappedLossTest::standard(LossFunction::linear(unit(3, 0)).unwrap(), "e1").unwrap();
    let stream = RngStream::new(5);
    let accepts = (0..reps)
        .filter(|&r| evaluate_gapped_test(&test, &model.sample_dataset(h, &stream.child(r))).unwrap())
        .count() as f64;
    let bound = (-(h as f64) / 8.0).exp();
    let sigma = (bound * (1.0 - bound) / reps as f64).sqrt();
    assert!(accepts / reps as f64 <= bound + 3.0 * sigma);
}

#[test]
fn single_sample_correlation_tail() {
    // Pr[N N' > 1] = 0.10449683150230929 (numerical integration)
    let table = calibrate_correlation_null(&[1], 2, 20_000, &RngStream::new(3)).unwrap();
    let p = table.entry(1).unwrap().p_hat;
    let sigma = (0.1045f64 * 0.8955 / 20_000.0).sqrt();
    assert!((p - 0.104_496_831_502_309_29).abs() < 4.0 * sigma, "p_hat {p}");
}
