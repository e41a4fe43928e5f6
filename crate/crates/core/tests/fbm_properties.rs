use fracvol::fbm::{fbm_cov, fgn_autocov, p_variation_of, CholeskySampler, FbmSampler, WoodChanSampler};
use fracvol::pricing::mean_and_stderr;
use fracvol::{Hurst, RandomSource, TimeGrid};
use proptest::prelude::*;

fn sample(sampler: &dyn FbmSampler, paths: u64) -> Vec<Vec<f64>> {
    (0..paths)
        .map(|p| sampler.sample_component(&mut RandomSource::for_stream(11, p, 0)))
        .collect()
}

#[test]
fn increments_are_stationary_with_fgn_covariance() {
    let h = Hurst::new(0.3).unwrap();
    let n = 32;
    let grid = TimeGrid::new(n as f64, n).unwrap();
    let draws = sample(&WoodChanSampler::new(grid, h).unwrap(), 20_000);
    for (start, lag) in [(0, 0), (10, 0), (25, 0), (3, 1), (17, 1), (5, 4)] {
        let prod: Vec<f64> = draws
            .iter()
            .map(|x| (x[start + 1] - x[start]) * (x[start + lag + 1] - x[start + lag]))
            .collect();
        let (m, se) = mean_and_stderr(&prod);
        let exact = fgn_autocov(lag, 0.3);
        assert!((m - exact).abs() < 4.0 * se, "start {start} lag {lag}: {m} vs {exact}");
    }
}

#[test]
fn samplers_agree_on_variance_scaling() {
    // Var B(t) = t^{2H} on a horizon other than 1.
    let h = Hurst::new(0.7).unwrap();
    let grid = TimeGrid::new(3.0, 12).unwrap();
    for sampler in [
        Box::new(WoodChanSampler::new(grid, h).unwrap()) as Box<dyn FbmSampler>,
        Box::new(CholeskySampler::new(grid, h).unwrap()),
    ] {
        let draws = sample(sampler.as_ref(), 10_000);
        let sq: Vec<f64> = draws.iter().map(|x| x[12] * x[12]).collect();
        let (m, se) = mean_and_stderr(&sq);
        let exact = fbm_cov(3.0, 3.0, 0.7).unwrap();
        assert!((m - exact).abs() < 4.0 * se, "{m} vs {exact}");
    }
}

#[test]
fn paths_start_at_zero_and_are_reproducible() {
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let s = WoodChanSampler::new(grid, Hurst::new(0.6).unwrap()).unwrap();
    let a = s.sample_path(3, 5, 9);
    let b = s.sample_path(3, 5, 9);
    assert_eq!(a, b);
    assert!(a.row(0).iter().all(|&v| v == 0.0));
    assert_ne!(s.sample_path(3, 5, 10), a);
}

fn brute(x: &[f64], p: f64) -> f64 {
    let k = x.len() - 2;
    (0u32..1 << k)
        .map(|mask| {
            let mut prev = x[0];
            let mut sum = 0.0;
            for (i, &v) in x.iter().enumerate().skip(1) {
                if i == x.len() - 1 || mask & (1 << (i - 1)) != 0 {
                    sum += (v - prev).abs().powf(p);
                    prev = v;
                }
            }
            sum
        })
        .fold(0.0, f64::max)
        .powf(1.0 / p)
}

proptest! {
    #[test]
    fn p_variation_matches_exhaustive_search(x in prop::collection::vec(-5.0f64..5.0, 2..11), p in 1.0f64..4.0) {
        prop_assert_eq!(p_variation_of(&x, p).unwrap(), brute(&x, p));
    }

    #[test]
    fn one_variation_is_total_variation(x in prop::collection::vec(-5.0f64..5.0, 2..40)) {
        let tv: f64 = x.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        let pv = p_variation_of(&x, 1.0).unwrap();
        prop_assert!((pv - tv).abs() <= 1e-9 * (1.0 + tv));
    }
}
