//! Shared numeric helpers: log-space accumulation, guarded Cholesky
//! factorization, Gauss-Laguerre rules, and small order statistics.

use nalgebra::{Cholesky, DMatrix, Dyn};
use std::sync::LazyLock;

/// `ln sum_i exp(x_i)` with the usual max shift. Empty input and all `-inf`
/// both yield `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

/// `ln(exp(a) + exp(b))` without forming either exponential.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Cholesky factorization with an escalating diagonal jitter.
///
/// Tries the bare matrix first, then adds `jitter * I` starting at
/// `initial_jitter` and multiplying by 10 until `max_jitter` is passed.
/// Returns the factorization together with the jitter that was required
/// (0.0 when none was).
pub fn cholesky_with_jitter(
    m: &DMatrix<f64>,
    initial_jitter: f64,
    max_jitter: f64,
) -> Option<(Cholesky<f64, Dyn>, f64)> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Some((chol, 0.0));
    }
    let mut jitter = initial_jitter;
    while jitter <= max_jitter {
        let mut jm = m.clone();
        for i in 0..jm.nrows() {
            jm[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(jm) {
            return Some((chol, jitter));
        }
        jitter *= 10.0;
    }
    None
}

/// One point/weight pair of a quadrature rule.
#[derive(Debug, Clone, Copy)]
pub struct QuadNode {
    pub node: f64,
    /// Natural log of the weight; weights of high-order Laguerre rules
    /// underflow long before their log does anything interesting.
    pub ln_weight: f64,
}

/// `(L_n(x), L_{n-1}(x))` by the three-term recurrence. Values stay within
/// f64 range for the orders and arguments the rules below need.
fn laguerre_pair(n: usize, x: f64) -> (f64, f64) {
    assert!(n >= 1);
    let mut prev = 1.0; // L_0
    let mut cur = 1.0 - x; // L_1
    for k in 1..n {
        let next = (((2 * k + 1) as f64 - x) * cur - k as f64 * prev) / (k + 1) as f64;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// Gauss-Laguerre rule (weight `e^{-x}` on `[0, inf)`). Eigenvalues of the
/// Jacobi matrix seed the nodes, Newton steps on `L_n` polish them, and the
/// weights come from `w_i = x_i / ((n+1) L_{n+1}(x_i))^2`; the eigenvector
/// route loses relative accuracy exactly where the weights are tiny.
pub fn gauss_laguerre(n: usize) -> Vec<QuadNode> {
    assert!(n >= 1);
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        j[(k, k)] = (2 * k + 1) as f64;
        if k + 1 < n {
            j[(k, k + 1)] = (k + 1) as f64;
            j[(k + 1, k)] = (k + 1) as f64;
        }
    }
    let mut nodes: Vec<f64> = j.symmetric_eigenvalues().iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    nodes
        .into_iter()
        .map(|seed| {
            let mut x = seed;
            for _ in 0..8 {
                let (ln_n, ln_nm1) = laguerre_pair(n, x);
                // x L'_n(x) = n (L_n(x) - L_{n-1}(x))
                let deriv = n as f64 * (ln_n - ln_nm1) / x;
                let step = ln_n / deriv;
                x -= step;
                if step.abs() <= 1e-15 * x {
                    break;
                }
            }
            let (ln_n, ln_nm1) = laguerre_pair(n, x);
            let ln_np1 =
                (((2 * n + 1) as f64 - x) * ln_n - n as f64 * ln_nm1) / (n + 1) as f64;
            QuadNode {
                node: x,
                ln_weight: x.ln() - 2.0 * ((n + 1) as f64 * ln_np1.abs()).ln(),
            }
        })
        .collect()
}

/// The 64-node rule used for marginal-likelihood integration.
pub static LAGUERRE_64: LazyLock<Vec<QuadNode>> = LazyLock::new(|| gauss_laguerre(64));
/// The 96-node rule used to estimate the 64-node rule's error.
pub static LAGUERRE_96: LazyLock<Vec<QuadNode>> = LazyLock::new(|| gauss_laguerre(96));

/// Median of a slice; averages the two central order statistics for even
/// lengths. Panics on empty input.
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Linear-interpolation quantile (type 7), `q` in `[0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty() && (0.0..=1.0).contains(&q));
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = q * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the n-1 denominator; 0 for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}
