//! Small numeric helpers shared across the pipeline.
//!
//! Transcendentals go through `libm` so the crate stays `no_std` and every
//! platform produces identical bits. Seed derivation and digests are plain
//! integer mixing, kept here so folds, cells, and reports can all derive
//! disjoint deterministic RNG streams from one run seed.

use alloc::vec::Vec;

pub use libm::{exp, fabs, floor, log as ln, pow, sqrt, tanh};

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`]; `p` must lie strictly inside (0, 1).
pub fn logit(p: f64) -> f64 {
    ln(p / (1.0 - p))
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than 2 points.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    sqrt(ss / (xs.len() - 1) as f64)
}

/// Pearson correlation coefficient; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() < 2 {
        return 0.0;
    }
    let ma = mean(a);
    let mb = mean(b);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / sqrt(va * vb)
}

/// FNV-1a over a byte slice.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

/// Running FNV-1a digest for hashing heterogeneous values.
#[derive(Clone, Copy)]
pub struct Digest(u64);

impl Digest {
    pub fn new() -> Self {
        Digest(0xcbf2_9ce4_8422_2325)
    }

    pub fn bytes(mut self, bytes: &[u8]) -> Self {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100_0000_01b3);
        }
        self
    }

    pub fn u64(self, v: u64) -> Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64(self, v: f64) -> Self {
        self.bytes(&v.to_bits().to_le_bytes())
    }

    pub fn f64s(mut self, vs: &[f64]) -> Self {
        for &v in vs {
            self = self.f64(v);
        }
        self
    }

    pub fn str(self, s: &str) -> Self {
        self.bytes(s.as_bytes())
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

impl Default for Digest {
    fn default() -> Self {
        Self::new()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed for a named sub-stream of a run.
///
/// Distinct `(tag, index)` pairs map one run seed onto disjoint streams, so
/// folds, ablation cells, and background sampling never share RNG state.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ fnv1a64(tag.as_bytes())) ^ index)
}

fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Continued-fraction evaluation for the regularized incomplete beta
/// (modified Lentz).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-16;
    const FPMIN: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if fabs(d) < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if fabs(d) < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if fabs(c) < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if fabs(d) < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if fabs(c) < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if fabs(del - 1.0) < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_bt = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * ln(x) + b * ln(1.0 - x);
    let bt = exp(ln_bt);
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * betacf(a, b, x) / a
    } else {
        1.0 - bt * betacf(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn student_t_cdf(x: f64, df: f64) -> f64 {
    let tail = 0.5 * inc_beta(df / 2.0, 0.5, df / (df + x * x));
    if x >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Quantile of Student's t via bisection on the CDF.
///
/// Covers any `df ≥ 1`; accurate to ~1e-10, which is far below the metric
/// resolution the confidence intervals are reported at.
pub fn student_t_quantile(p: f64, df: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile probability must be in (0,1)");
    assert!(df >= 1.0, "degrees of freedom must be >= 1");
    if p == 0.5 {
        return 0.0;
    }
    // CDF is monotone; expand the bracket until it covers p.
    let mut lo = -1.0;
    let mut hi = 1.0;
    while student_t_cdf(lo, df) > p {
        lo *= 2.0;
        if lo < -1e12 {
            break;
        }
    }
    while student_t_cdf(hi, df) < p {
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * (1.0 + fabs(hi)) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Euclidean distance between equal-length vectors.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        s += d * d;
    }
    sqrt(s)
}

/// Sorts and returns indices ordered by the given keys (ties by index).
pub fn argsort_by_key(keys: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&i, &j| keys[i].total_cmp(&keys[j]).then(i.cmp(&j)));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_endpoints_and_symmetry() {
        assert!(fabs(sigmoid(0.0) - 0.5) < 1e-15);
        assert!(fabs(sigmoid(3.0) + sigmoid(-3.0) - 1.0) < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
        assert!(fabs(sigmoid(logit(0.11)) - 0.11) < 1e-12);
    }

    #[test]
    fn t_quantile_matches_reference_table() {
        // Two-sided 95% critical values from standard t tables.
        let cases = [
            (1.0, 12.706_204_736_2),
            (4.0, 2.776_445_105_2),
            (9.0, 2.262_157_162_8),
            (30.0, 2.042_272_456_3),
            (100.0, 1.983_971_518_5),
        ];
        for (df, expected) in cases {
            let got = student_t_quantile(0.975, df);
            assert!(
                fabs(got - expected) < 1e-6,
                "df={df}: got {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn t_cdf_is_symmetric() {
        for df in [1.0, 4.0, 17.0] {
            for x in [0.1, 0.9, 2.5] {
                let s = student_t_cdf(x, df) + student_t_cdf(-x, df);
                assert!(fabs(s - 1.0) < 1e-12);
            }
        }
    }

    #[test]
    fn pearson_signs() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!(fabs(pearson(&a, &a) - 1.0) < 1e-12);
        assert!(fabs(pearson(&a, &b) + 1.0) < 1e-12);
        let c = vec![2.0; 4];
        assert_eq!(pearson(&a, &c), 0.0);
    }

    #[test]
    fn derive_seed_separates_streams() {
        let s = 42;
        assert_ne!(derive_seed(s, "fold", 0), derive_seed(s, "fold", 1));
        assert_ne!(derive_seed(s, "fold", 0), derive_seed(s, "smote", 0));
        assert_eq!(derive_seed(s, "fold", 3), derive_seed(s, "fold", 3));
    }

    #[test]
    fn sample_std_hand_value() {
        // {2,4,4,4,5,5,7,9}: variance 32/7.
        let xs = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        assert!(fabs(sample_std(&xs) - sqrt(32.0 / 7.0)) < 1e-12);
    }
}
