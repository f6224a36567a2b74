//! Small statistical toolkit: goodness-of-fit tests, summaries and chain
//! diagnostics used by the samplers' self-checks and the CLI reports.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Linear-interpolation quantile (type 7), `p` in [0, 1].
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = 2.0 * (-1f64).powi(j - 1) * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Outcome of a Kolmogorov–Smirnov test.
#[derive(Clone, Copy, Debug)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test of `xs` against the continuous CDF `cdf`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> KsResult {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let en = n.sqrt();
    KsResult { statistic: d, p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d) }
}

/// Two-sample KS test.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> KsResult {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|p, q| p.total_cmp(q));
    b.sort_by(|p, q| p.total_cmp(q));
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    KsResult { statistic: d, p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d) }
}

/// Pearson chi-square goodness-of-fit p-value.
pub fn chi_square_gof(counts: &[usize], probs: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    let mut stat = 0.0;
    let mut k = 0usize;
    for (&c, &p) in counts.iter().zip(probs) {
        if p <= 0.0 {
            continue;
        }
        let e = p * n as f64;
        stat += (c as f64 - e).powi(2) / e;
        k += 1;
    }
    if k < 2 {
        return 1.0;
    }
    let chi = ChiSquared::new((k - 1) as f64).expect("positive dof");
    1.0 - chi.cdf(stat)
}

/// Exact multinomial test: total probability of all outcomes no more likely
/// than the observed one. Exact enumeration for up to three categories and
/// `n ≤ 10⁵` (the three-category sum is quadratic in `n`), with a chi-square
/// fallback otherwise.
pub fn multinomial_exact(counts: &[usize], probs: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    let k = counts.len();
    if k > 3 || (k == 3 && n > 100_000) {
        return chi_square_gof(counts, probs);
    }
    let mut lf = vec![0.0; n + 1];
    for i in 1..=n {
        lf[i] = lf[i - 1] + (i as f64).ln();
    }
    let logp: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
    let log_pmf = |x: &[usize]| -> f64 {
        let mut s = lf[n];
        for (i, &xi) in x.iter().enumerate() {
            if xi > 0 {
                if probs[i] <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                s += xi as f64 * logp[i];
            }
            s -= lf[xi];
        }
        s
    };
    let observed = log_pmf(counts);
    let threshold = observed + 1e-7 * observed.abs().max(1.0);
    let mut total = 0.0;
    match k {
        1 => return 1.0,
        2 => {
            for x0 in 0..=n {
                let l = log_pmf(&[x0, n - x0]);
                if l <= threshold {
                    total += l.exp();
                }
            }
        }
        _ => {
            for x0 in 0..=n {
                for x1 in 0..=(n - x0) {
                    let l = log_pmf(&[x0, x1, n - x0 - x1]);
                    if l <= threshold {
                        total += l.exp();
                    }
                }
            }
        }
    }
    total.min(1.0)
}

/// Log of the binomial coefficient.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Split-R̂ over equal-length chains (Gelman et al., split halves).
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let len = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let half = len / 2;
    if half < 2 || chains.is_empty() {
        return f64::NAN;
    }
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[half..2 * half]])
        .collect();
    let m = halves.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = halves.iter().map(|h| variance(h)).sum::<f64>() / m;
    let b = n * variance(&means);
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let xs = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(median(&xs), 2.5);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
    }

    #[test]
    fn ks_uniform_grid_is_accepted() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!(r.statistic < 1e-3 && r.p_value > 0.99);
        let shifted: Vec<f64> = xs.iter().map(|x| x * 0.8).collect();
        assert!(ks_one_sample(&shifted, |x| x.clamp(0.0, 1.0)).p_value < 1e-6);
    }

    #[test]
    fn ks_two_sample_detects_shift() {
        let xs: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x + 0.2).collect();
        assert!(ks_two_sample(&xs, &ys).p_value < 1e-6);
        assert!(ks_two_sample(&xs, &xs).p_value > 0.99);
    }

    #[test]
    fn exact_binomial_matches_hand_value() {
        // n=4, p=1/2, observed (0,4): outcomes with pmf <= 1/16 are (0,4),(4,0).
        let p = multinomial_exact(&[0, 4], &[0.5, 0.5]);
        assert!((p - 0.125).abs() < 1e-12);
        let p3 = multinomial_exact(&[3, 3, 4], &[0.3, 0.3, 0.4]);
        assert!(p3 > 0.9);
    }

    #[test]
    fn rhat_of_identical_chains() {
        let c: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64).collect();
        let r = split_rhat(&[c.clone(), c]);
        assert!(r < 1.1);
    }
}
