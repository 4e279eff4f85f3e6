//! Chain diagnostics used by tests and reports.

/// Integrated autocorrelation time `1 + 2 sum rho_k`, summing Geyer's initial
/// positive sequence of paired autocorrelations.
pub fn integrated_autocorr(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return 1.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return 1.0;
    }
    let rho = |k: usize| -> f64 {
        (0..n - k).map(|i| (x[i] - mean) * (x[i + k] - mean)).sum::<f64>() / (n as f64 * var)
    };
    let mut tau = -1.0;
    let mut k = 0;
    while k + 1 < n / 2 {
        let pair = rho(k) + rho(k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    tau.max(1.0)
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `x` and `cdf`.
pub fn ks_statistic(x: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn autocorrelation_of_ar1() {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = crate::rng::from_seed(3);
        let phi: f64 = 0.8;
        let mut x = vec![0.0; 100_000];
        for i in 1..x.len() {
            let z: f64 = rng.sample(StandardNormal);
            x[i] = phi * x[i - 1] + (1.0 - phi * phi).sqrt() * z;
        }
        let tau = integrated_autocorr(&x);
        let exact = (1.0 + phi) / (1.0 - phi);
        assert!((tau - exact).abs() < 0.1 * exact, "tau {tau}");
    }

    #[test]
    fn ks_of_uniform_grid() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_statistic(&x, |v| v.clamp(0.0, 1.0)) - 0.005).abs() < 1e-12);
    }
}
