//! Special functions and the moment approximations used by the collapsed
//! updates.
//!
//! Everything here is a pure function. The checked entry points
//! ([`digamma`], [`geo_expect_gamma`], ...) validate their arguments and return
//! [`NgfaError::Domain`]; the engine calls the unchecked `*_unchecked` forms in
//! its inner loops after establishing the preconditions itself.

use crate::error::{NgfaError, Result};

/// Below this probability of a positive count the conditional moments are
/// treated as zero.
pub const P_PLUS_FLOOR: f64 = 1e-12;

/// B_{2k}/(2k) for k = 1..7, the digamma asymptotic coefficients.
const DIGAMMA_ASYMP: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

/// B_{2k} for k = 1..7, the trigamma asymptotic coefficients.
const TRIGAMMA_ASYMP: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

/// B_{2k}(2k+1) for k = 1..7, the tetragamma asymptotic coefficients.
const TETRAGAMMA_ASYMP: [f64; 7] = [
    0.5,
    -1.0 / 6.0,
    1.0 / 6.0,
    -0.3,
    5.0 / 6.0,
    -691.0 / 210.0,
    17.5,
];

/// B_{2k}/(2k(2k-1)) for k = 1..7, the Stirling series for ln Γ.
const LN_GAMMA_ASYMP: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
];

const ASYMPTOTIC_START: f64 = 6.0;

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(NgfaError::domain(format!("{name} requires a positive finite argument, got {x}")))
    }
}

pub(crate) fn digamma_unchecked(x: f64) -> f64 {
    let mut acc = 0.0;
    let mut x = x;
    while x < ASYMPTOTIC_START {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let mut term = inv2;
    let mut series = 0.0;
    for c in DIGAMMA_ASYMP {
        series += c * term;
        term *= inv2;
    }
    acc + x.ln() - 0.5 / x - series
}

pub(crate) fn trigamma_unchecked(x: f64) -> f64 {
    let mut acc = 0.0;
    let mut x = x;
    while x < ASYMPTOTIC_START {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut term = inv2 * inv;
    let mut series = 0.0;
    for c in TRIGAMMA_ASYMP {
        series += c * term;
        term *= inv2;
    }
    acc + inv + 0.5 * inv2 + series
}

pub(crate) fn tetragamma_unchecked(x: f64) -> f64 {
    let mut acc = 0.0;
    let mut x = x;
    while x < ASYMPTOTIC_START {
        acc -= 2.0 / (x * x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut term = inv2 * inv2;
    let mut series = 0.0;
    for c in TETRAGAMMA_ASYMP {
        series += c * term;
        term *= inv2;
    }
    acc - inv2 - inv2 * inv - series
}

pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    // ln Γ(x) = ln Γ(x + n) - ln(x (x+1) ... (x+n-1))
    let mut shift = 0.0;
    let mut x = x;
    while x < ASYMPTOTIC_START + 1.0 {
        shift += x.ln();
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut term = inv;
    let mut series = 0.0;
    for c in LN_GAMMA_ASYMP {
        series += c * term;
        term *= inv2;
    }
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + series - shift
}

/// The digamma function Ψ(x) = d/dx ln Γ(x), for x > 0.
///
/// Shifts the argument to x ≥ 6 with Ψ(x) = Ψ(x+1) − 1/x and then evaluates
/// the asymptotic series.
///
/// ```
/// let psi1 = ngfa::approx::digamma(1.0).unwrap();
/// assert!((psi1 + 0.5772156649015329).abs() < 1e-12);
/// ```
pub fn digamma(x: f64) -> Result<f64> {
    check_positive("digamma", x)?;
    Ok(digamma_unchecked(x))
}

/// The trigamma function Ψ′(x), for x > 0.
pub fn trigamma(x: f64) -> Result<f64> {
    check_positive("trigamma", x)?;
    Ok(trigamma_unchecked(x))
}

/// The tetragamma function Ψ″(x), for x > 0.
pub fn tetragamma(x: f64) -> Result<f64> {
    check_positive("tetragamma", x)?;
    Ok(tetragamma_unchecked(x))
}

/// Natural log of the gamma function, for x > 0.
pub fn ln_gamma(x: f64) -> Result<f64> {
    check_positive("ln_gamma", x)?;
    Ok(ln_gamma_unchecked(x))
}

/// Geometric expectation exp(E[ln y]) of y ~ Gamma(shape, rate).
pub fn geo_expect_gamma(shape: f64, rate: f64) -> Result<f64> {
    check_positive("geo_expect_gamma shape", shape)?;
    check_positive("geo_expect_gamma rate", rate)?;
    Ok(digamma_unchecked(shape).exp() / rate)
}

/// Geometric expectation exp(E[ln y]) of y ~ Beta(a, b).
pub fn geo_expect_beta(a: f64, b: f64) -> Result<f64> {
    check_positive("geo_expect_beta a", a)?;
    check_positive("geo_expect_beta b", b)?;
    Ok((digamma_unchecked(a) - digamma_unchecked(a + b)).exp())
}

/// Mean, variance and positive-part moments of a sum of independent
/// Bernoulli variables.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BernoulliSumMoments {
    pub mean: f64,
    pub variance: f64,
    /// Probability that the sum is strictly positive.
    pub p_plus: f64,
    /// E[l | l > 0], i.e. `mean / p_plus`.
    pub mean_plus: f64,
    /// `variance / p_plus`.
    pub var_plus: f64,
}

impl BernoulliSumMoments {
    /// Assembles the moments from the running sums Σξ, Σξ(1−ξ) and Σ ln(1−ξ).
    ///
    /// `log_p_zero` is `-inf` when any ξ equals one.
    pub fn from_sums(mean: f64, variance: f64, log_p_zero: f64) -> Self {
        let p_plus = if log_p_zero == f64::NEG_INFINITY {
            1.0
        } else {
            -log_p_zero.exp_m1()
        };
        let (mean_plus, var_plus) = if p_plus < P_PLUS_FLOOR {
            (0.0, 0.0)
        } else {
            (mean / p_plus, variance / p_plus)
        };
        BernoulliSumMoments {
            mean,
            variance,
            p_plus,
            mean_plus,
            var_plus,
        }
    }

    /// Moments of a count that equals `l` with probability one.
    pub fn deterministic(l: u64) -> Self {
        if l == 0 {
            Self::default()
        } else {
            Self::from_sums(l as f64, 0.0, f64::NEG_INFINITY)
        }
    }
}

/// Moments of Σᵢ uᵢ with uᵢ ~ Bern(probs[i]) independent.
pub fn bernoulli_sum_moments(probs: &[f64]) -> Result<BernoulliSumMoments> {
    if let Some(&bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(NgfaError::domain(format!(
            "Bernoulli probability {bad} is outside [0, 1]"
        )));
    }
    Ok(bernoulli_sum_moments_unchecked(probs.iter().copied()))
}

pub(crate) fn bernoulli_sum_moments_unchecked(probs: impl Iterator<Item = f64>) -> BernoulliSumMoments {
    let mut mean = 0.0;
    let mut variance = 0.0;
    let mut log_p_zero = 0.0;
    for p in probs {
        mean += p;
        variance += p * (1.0 - p);
        if p >= 1.0 {
            log_p_zero = f64::NEG_INFINITY;
        } else if log_p_zero > f64::NEG_INFINITY {
            log_p_zero += (-p).ln_1p();
        }
    }
    BernoulliSumMoments::from_sums(mean, variance, log_p_zero)
}

/// Second-order approximation of E[ln(c + n)] for a random count n with the
/// given mean and variance, where `shift_geo` is the geometric expectation of
/// the random shift c.
pub fn expect_log_shifted_count(shift_geo: f64, count_mean: f64, count_var: f64) -> Result<f64> {
    check_positive("expect_log_shifted_count shift", shift_geo)?;
    Ok(expect_log_shifted_count_unchecked(shift_geo, count_mean, count_var))
}

#[inline]
pub(crate) fn expect_log_shifted_count_unchecked(shift_geo: f64, count_mean: f64, count_var: f64) -> f64 {
    let center = shift_geo + count_mean;
    center.ln() - count_var / (2.0 * center * center)
}

/// Exact mean of a Chinese-restaurant table count with concentration `a`
/// and `l` customers: Σ_{i<l} a/(a+i).
pub fn crt_mean_exact(a: f64, l: u64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    (0..l).map(|i| a / (a + i as f64)).sum()
}

/// Approximate mean of a table count whose customer count is a random sum
/// of Bernoullis, with concentration of geometric expectation `a_geo`.
///
/// The exact mean is `a · E[Ψ(a + l) − Ψ(a)]`. Conditioning on `l > 0` and
/// expanding Ψ(a + l) to second order around `a + E₊[l]` gives
///
/// ```text
/// E[y] ≈ a · p₊ · ( Ψ(a + E₊) − Ψ(a) + V₊ · Ψ″(a + E₊) / 2 )
/// ```
///
/// The curvature term is the second derivative of Ψ, which is negative;
/// using Ψ′ there overshoots the exact mean by up to a third on short counts.
/// For a deterministic count this reproduces [`crt_mean_exact`] through
/// Ψ(a + l) − Ψ(a) = Σ_{i<l} 1/(a+i).
pub fn crt_mean_approx(a_geo: f64, count: &BernoulliSumMoments) -> Result<f64> {
    check_positive("crt_mean_approx concentration", a_geo)?;
    Ok(crt_mean_approx_unchecked(a_geo, count))
}

pub(crate) fn crt_mean_approx_unchecked(a_geo: f64, count: &BernoulliSumMoments) -> f64 {
    if count.p_plus < P_PLUS_FLOOR {
        return 0.0;
    }
    let upper = a_geo + count.mean_plus;
    let bracket = digamma_unchecked(upper) - digamma_unchecked(a_geo)
        + 0.5 * count.var_plus * tetragamma_unchecked(upper);
    a_geo * count.p_plus * bracket
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    /// Ψ(x) = −γ + Σ_{n≥0} [1/(n+1) − 1/(n+x)], truncated with an
    /// integral estimate of the tail.
    fn digamma_series(x: f64) -> f64 {
        let terms = 2_000_000usize;
        let mut s = 0.0;
        for n in (0..terms).rev() {
            let n = n as f64;
            s += 1.0 / (n + 1.0) - 1.0 / (n + x);
        }
        let n = terms as f64;
        let tail = ((n + x - 0.5) / (n + 0.5)).ln();
        -EULER_GAMMA + s + tail
    }

    /// Ψ′(x) = Σ_{n≥0} 1/(n+x)², with the same tail treatment.
    fn trigamma_series(x: f64) -> f64 {
        let terms = 2_000_000usize;
        let mut s = 0.0;
        for n in (0..terms).rev() {
            let t = n as f64 + x;
            s += 1.0 / (t * t);
        }
        s + 1.0 / (terms as f64 + x - 0.5)
    }

    #[test]
    fn digamma_known_values() {
        assert_abs_diff_eq!(digamma(1.0).unwrap(), -0.5772156649, epsilon = 1e-10);
        assert_abs_diff_eq!(digamma(2.0).unwrap(), 0.4227843351, epsilon = 1e-10);
        assert_abs_diff_eq!(digamma(0.5).unwrap(), -1.9635100260, epsilon = 1e-10);
        let identity = -EULER_GAMMA - 2.0 * std::f64::consts::LN_2;
        assert_abs_diff_eq!(digamma(0.5).unwrap(), identity, epsilon = 1e-12);
    }

    #[test]
    fn digamma_matches_series_oracle() {
        for x in [1e-3, 0.01, 0.5, 1.7, 3.3, 6.0, 11.5, 250.0] {
            assert_abs_diff_eq!(digamma(x).unwrap(), digamma_series(x), epsilon = 1e-10);
        }
    }

    #[test]
    fn trigamma_known_values() {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        assert_abs_diff_eq!(trigamma(1.0).unwrap(), 1.6449340668, epsilon = 1e-10);
        assert_abs_diff_eq!(trigamma(2.0).unwrap(), 0.6449340668, epsilon = 1e-10);
        assert_abs_diff_eq!(trigamma(0.5).unwrap(), pi2 / 2.0, epsilon = 1e-10);
        for x in [1e-3, 0.2, 1.3, 7.5, 40.0] {
            assert_abs_diff_eq!(trigamma(x).unwrap(), trigamma_series(x), epsilon = 1e-8);
        }
    }

    #[test]
    fn tetragamma_values() {
        // 30-digit reference values.
        let cases = [
            (1e-3, -2_000_000_002.397_632_2),
            (0.5, -16.828_796_644_234_32),
            (1.0, -2.404_113_806_319_188_6),
            (3.3, -0.123_751_185_264_942_73),
            (10.0, -0.011_049_834_970_802_067),
            (1000.0, -1.001_000_499_999_833_3e-6),
        ];
        for (x, want) in cases {
            let got = tetragamma(x).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "x = {x}: {got} vs {want}");
        }
        assert!(tetragamma(0.0).is_err());
    }

    #[test]
    fn large_arguments_stay_accurate() {
        // Ψ(x) ~ ln x − 1/(2x) and Ψ′(x) ~ 1/x + 1/(2x²) at x = 1e6.
        let x = 1e6;
        assert_abs_diff_eq!(digamma(x).unwrap(), x.ln() - 0.5 / x, epsilon = 1e-10);
        assert_abs_diff_eq!(trigamma(x).unwrap(), 1.0 / x + 0.5 / (x * x), epsilon = 1e-8);
    }

    #[test]
    fn ln_gamma_values() {
        assert_abs_diff_eq!(ln_gamma(1.0).unwrap(), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(ln_gamma(5.0).unwrap(), 24f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            ln_gamma(0.5).unwrap(),
            0.5 * std::f64::consts::PI.ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(ln_gamma(1e-3).unwrap(), 6.907178885383853, epsilon = 1e-10);
    }

    #[test]
    fn non_positive_arguments_are_rejected() {
        for f in [digamma, trigamma, ln_gamma] {
            assert!(matches!(f(0.0), Err(NgfaError::Domain(_))));
            assert!(matches!(f(-1.5), Err(NgfaError::Domain(_))));
        }
        assert!(geo_expect_gamma(0.0, 1.0).is_err());
        assert!(geo_expect_gamma(1.0, -1.0).is_err());
        assert!(geo_expect_beta(1.0, 0.0).is_err());
        assert!(expect_log_shifted_count(0.0, 1.0, 0.0).is_err());
        assert!(crt_mean_approx(0.0, &BernoulliSumMoments::deterministic(2)).is_err());
    }

    #[test]
    fn geometric_expectations() {
        assert_abs_diff_eq!(geo_expect_gamma(1.0, 1.0).unwrap(), 0.5614594836, epsilon = 1e-9);
        assert_abs_diff_eq!(geo_expect_gamma(2.0, 3.0).unwrap(), 0.5087350, epsilon = 1e-7);
        // exp(Ψ(100))/100, evaluated independently at 30 digits.
        assert_abs_diff_eq!(
            geo_expect_gamma(100.0, 100.0).unwrap(),
            0.995_004_187_539_484_4,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(geo_expect_beta(1.0, 1.0).unwrap(), (-1f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            geo_expect_beta(2.0, 2.0).unwrap(),
            (-5.0f64 / 6.0).exp(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(geo_expect_beta(0.5, 0.5).unwrap(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn bernoulli_sum_examples() {
        let empty = bernoulli_sum_moments(&[]).unwrap();
        assert_eq!(empty, BernoulliSumMoments::default());

        let one = bernoulli_sum_moments(&[1.0]).unwrap();
        assert_eq!((one.mean, one.variance, one.p_plus, one.mean_plus, one.var_plus), (1.0, 0.0, 1.0, 1.0, 0.0));

        let half = bernoulli_sum_moments(&[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(half.mean, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(half.variance, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(half.p_plus, 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(half.mean_plus, 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(half.var_plus, 2.0 / 3.0, epsilon = 1e-15);

        assert!(bernoulli_sum_moments(&[0.2, 1.1]).is_err());
        assert!(bernoulli_sum_moments(&[-0.1]).is_err());
    }

    #[test]
    fn certain_entry_forces_p_plus_one() {
        let m = bernoulli_sum_moments(&[1e-300, 1.0, 0.3]).unwrap();
        assert_eq!(m.p_plus, 1.0);
    }

    #[test]
    fn tiny_probabilities_keep_precision() {
        let m = bernoulli_sum_moments(&[1e-10; 4]).unwrap();
        assert_abs_diff_eq!(m.p_plus, 4e-10 - 6e-20, epsilon = 1e-24);
        assert_abs_diff_eq!(m.mean_plus, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn shifted_log_examples() {
        assert_abs_diff_eq!(expect_log_shifted_count(1.0, 3.0, 0.0).unwrap(), 4f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            expect_log_shifted_count(0.5, 1.5, 0.75).unwrap(),
            std::f64::consts::LN_2 - 0.75 / 8.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(expect_log_shifted_count(2.0, 0.0, 0.0).unwrap(), 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn crt_examples() {
        assert_eq!(crt_mean_exact(1.0, 1), 1.0);
        assert_abs_diff_eq!(crt_mean_exact(1.0, 3), 11.0 / 6.0, epsilon = 1e-15);
        assert_eq!(crt_mean_exact(0.0, 5), 0.0);
        assert_eq!(crt_mean_exact(2.0, 0), 0.0);

        let det3 = BernoulliSumMoments::deterministic(3);
        assert_abs_diff_eq!(crt_mean_approx(1.0, &det3).unwrap(), 11.0 / 6.0, epsilon = 1e-12);

        let none = bernoulli_sum_moments(&[0.0, 0.0]).unwrap();
        assert_eq!(crt_mean_approx(0.7, &none).unwrap(), 0.0);

        // G = 0.5, p+ = 0.75, E+ = 4/3, V+ = 2/3, evaluated with 30-digit
        // polygamma functions. The exact mean is 0.5 + 0.25 * (1 + 1/3) = 5/6.
        let half = bernoulli_sum_moments(&[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(
            crt_mean_approx(0.5, &half).unwrap(),
            0.789_721_465_033_841_5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn crt_approx_is_exact_for_deterministic_counts() {
        for a in [0.25, 0.5, 1.0, 2.0, 5.0] {
            for l in 1..=50u64 {
                let approx = crt_mean_approx(a, &BernoulliSumMoments::deterministic(l)).unwrap();
                assert_abs_diff_eq!(approx, crt_mean_exact(a, l), epsilon = 1e-10);
            }
        }
    }

    /// Enumerates all 2^n outcomes and returns the exact distribution of the count.
    fn count_distribution(probs: &[f64]) -> Vec<f64> {
        let mut dist = vec![1.0];
        for &p in probs {
            let mut next = vec![0.0; dist.len() + 1];
            for (l, &w) in dist.iter().enumerate() {
                next[l] += w * (1.0 - p);
                next[l + 1] += w * p;
            }
            dist = next;
        }
        dist
    }

    fn enumerated_moments(probs: &[f64]) -> (f64, f64, f64, f64, f64) {
        let n = probs.len();
        let (mut mean, mut second, mut p_pos) = (0.0, 0.0, 0.0);
        for mask in 0u32..(1 << n) {
            let mut w = 1.0;
            let mut l = 0.0;
            for (i, &p) in probs.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    w *= p;
                    l += 1.0;
                } else {
                    w *= 1.0 - p;
                }
            }
            mean += w * l;
            second += w * l * l;
            if l > 0.0 {
                p_pos += w;
            }
        }
        let var = second - mean * mean;
        if p_pos < P_PLUS_FLOOR {
            (mean, var, p_pos, 0.0, 0.0)
        } else {
            (mean, var, p_pos, mean / p_pos, var / p_pos)
        }
    }

    proptest! {
        #[test]
        fn digamma_recurrence(x in 1e-3f64..1e5) {
            let lhs = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
            prop_assert!((lhs - 1.0 / x).abs() < 1e-10);
            let rhs = trigamma(x + 1.0).unwrap() - trigamma(x).unwrap();
            prop_assert!((rhs + 1.0 / (x * x)).abs() < 1e-8);
        }

        #[test]
        fn moments_match_enumeration(probs in prop::collection::vec(0.0f64..=1.0, 0..=12)) {
            let m = bernoulli_sum_moments(&probs).unwrap();
            let (mean, var, p_pos, mean_plus, var_plus) = enumerated_moments(&probs);
            prop_assert!((m.mean - mean).abs() < 1e-10);
            prop_assert!((m.variance - var).abs() < 1e-10);
            prop_assert!((m.p_plus - p_pos).abs() < 1e-10);
            if p_pos > 1e-6 {
                prop_assert!((m.mean_plus - mean_plus).abs() < 1e-10 * (1.0 + mean_plus));
                prop_assert!((m.var_plus - var_plus).abs() < 1e-10 * (1.0 + var_plus));
            }
        }

        #[test]
        fn moment_invariants(probs in prop::collection::vec(0.0f64..=1.0, 0..40)) {
            let m = bernoulli_sum_moments(&probs).unwrap();
            prop_assert!(m.variance <= m.mean + 1e-15);
            if m.p_plus > P_PLUS_FLOOR {
                prop_assert!((m.mean_plus * m.p_plus - m.mean).abs() < 1e-12 * (1.0 + m.mean));
                prop_assert!((m.var_plus * m.p_plus - m.variance).abs() < 1e-12 * (1.0 + m.variance));
            }
            if m.p_plus == 0.0 {
                prop_assert_eq!(m.mean, 0.0);
                prop_assert_eq!(m.variance, 0.0);
            }
        }

        #[test]
        fn shifted_log_close_to_enumeration(
            probs in prop::collection::vec(0.0f64..=1.0, 1..=12),
            shift in 1.0f64..10.0,
        ) {
            let m = bernoulli_sum_moments(&probs).unwrap();
            let exact: f64 = count_distribution(&probs)
                .iter()
                .enumerate()
                .map(|(l, w)| w * (shift + l as f64).ln())
                .sum();
            let approx = expect_log_shifted_count(shift, m.mean, m.variance).unwrap();
            prop_assert!(((approx - exact) / exact).abs() < 0.02);
        }

        #[test]
        fn geometric_below_arithmetic(a in 1e-2f64..50.0, b in 1e-2f64..50.0) {
            prop_assert!(geo_expect_gamma(a, b).unwrap() < a / b);
            prop_assert!(geo_expect_beta(a, b).unwrap() < a / (a + b));
        }
    }
}
