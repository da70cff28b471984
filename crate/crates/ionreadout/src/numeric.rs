//! Shared numerical routines: Poisson pmf/sampling, adaptive quadrature,
//! small dense linear algebra and exact fractions.
//!
//! Sampling is deterministic: every sampler draws from a caller-supplied
//! [`rand::Rng`], normally a `ChaCha8Rng` seeded through [`rng_from_seed`],
//! so a fixed seed gives a bit-identical stream on every run and platform.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

/// Poisson mean below which sampling uses sequential inversion; at or above
/// it the transformed-rejection sampler takes over.
pub const POISSON_INVERSION_CUTOFF: f64 = 30.0;

/// Build the crate's deterministic RNG from a seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Natural log of the Poisson pmf, valid for any `lambda > 0` and `k >= 0`.
pub fn poisson_ln_pmf(k: f64, lambda: f64) -> f64 {
    k * lambda.ln() - lambda - ln_gamma(k + 1.0)
}

/// Poisson pmf values for counts `0..len`.
///
/// Uses the multiplicative recurrence from `exp(-lambda)` while that start
/// value is representable, and per-term log-space evaluation otherwise.
pub fn poisson_pmf_vec(lambda: f64, len: usize) -> Vec<f64> {
    assert!(lambda >= 0.0 && lambda.is_finite());
    let mut out = vec![0.0; len];
    if len == 0 {
        return out;
    }
    if lambda == 0.0 {
        out[0] = 1.0;
        return out;
    }
    if lambda < 700.0 {
        let mut p = (-lambda).exp();
        out[0] = p;
        for k in 1..len {
            p *= lambda / k as f64;
            out[k] = p;
        }
    } else {
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = poisson_ln_pmf(k as f64, lambda).exp();
        }
    }
    out
}

/// Draw one Poisson variate.
///
/// Inversion by sequential search below [`POISSON_INVERSION_CUTOFF`];
/// Hörmann's PTRS transformed rejection above. Both paths consume a
/// deterministic number-stream from `rng` only.
pub fn sample_poisson(rng: &mut impl Rng, lambda: f64) -> u64 {
    assert!(lambda >= 0.0 && lambda.is_finite());
    if lambda == 0.0 {
        0
    } else if lambda < POISSON_INVERSION_CUTOFF {
        poisson_inversion(rng, lambda)
    } else {
        poisson_ptrs(rng, lambda)
    }
}

fn poisson_inversion(rng: &mut impl Rng, lambda: f64) -> u64 {
    let u: f64 = rng.random();
    let mut p = (-lambda).exp();
    let mut cum = p;
    let mut k = 0u64;
    // The tail beyond lambda + 40*sqrt(lambda) carries ~0 mass; the cap only
    // guards against u landing in accumulated rounding error.
    let cap = (lambda + 40.0 * lambda.sqrt() + 50.0) as u64;
    while u > cum && k < cap {
        k += 1;
        p *= lambda / k as f64;
        cum += p;
    }
    k
}

/// PTRS (transformed rejection with squeeze), valid for lambda >= 10.
fn poisson_ptrs(rng: &mut impl Rng, lambda: f64) -> u64 {
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if (v * inv_alpha / (a / (us * us) + b)).ln() <= k * loglam - lambda - ln_gamma(k + 1.0) {
            return k as u64;
        }
    }
}

/// Adaptive Simpson quadrature of a vector-valued integrand on `[a, b]`.
///
/// `f(t, out)` writes the integrand into `out`. The result is accumulated
/// into `acc` (which must start zeroed by the caller if a fresh integral is
/// wanted). Subdivision stops when the Richardson error estimate of a panel
/// is below its share of `tol` (an absolute l1 tolerance for the whole
/// interval), or at depth 40.
pub fn adaptive_simpson_vec<F: FnMut(f64, &mut [f64])>(
    f: &mut F,
    a: f64,
    b: f64,
    tol: f64,
    dim: usize,
    acc: &mut [f64],
) {
    assert_eq!(acc.len(), dim);
    let mut fa = vec![0.0; dim];
    let mut fm = vec![0.0; dim];
    let mut fb = vec![0.0; dim];
    f(a, &mut fa);
    f(0.5 * (a + b), &mut fm);
    f(b, &mut fb);
    let whole = simpson_panel(&fa, &fm, &fb, b - a);
    simpson_recurse(f, a, b, &fa, &fm, &fb, &whole, tol, 40, acc);
}

fn simpson_panel(fa: &[f64], fm: &[f64], fb: &[f64], h: f64) -> Vec<f64> {
    fa.iter()
        .zip(fm)
        .zip(fb)
        .map(|((&a, &m), &b)| (a + 4.0 * m + b) * h / 6.0)
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse<F: FnMut(f64, &mut [f64])>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: &[f64],
    fm: &[f64],
    fb: &[f64],
    whole: &[f64],
    tol: f64,
    depth: u32,
    acc: &mut [f64],
) {
    let dim = fa.len();
    let m = 0.5 * (a + b);
    let mut flm = vec![0.0; dim];
    let mut frm = vec![0.0; dim];
    f(0.5 * (a + m), &mut flm);
    f(0.5 * (m + b), &mut frm);
    let left = simpson_panel(fa, &flm, fm, m - a);
    let right = simpson_panel(fm, &frm, fb, b - m);
    let err: f64 = left
        .iter()
        .zip(&right)
        .zip(whole)
        .map(|((&l, &r), &w)| (l + r - w).abs())
        .sum();
    if depth == 0 || err <= 15.0 * tol {
        // Richardson extrapolation of the two half-panels.
        for i in 0..dim {
            acc[i] += left[i] + right[i] + (left[i] + right[i] - whole[i]) / 15.0;
        }
    } else {
        simpson_recurse(f, a, m, fa, &flm, fm, &left, tol * 0.5, depth - 1, acc);
        simpson_recurse(f, m, b, fm, &frm, fb, &right, tol * 0.5, depth - 1, acc);
    }
}

/// Solve `A x = b` for a small dense system by Gauss elimination with
/// partial pivoting. Returns `None` when the matrix is singular to working
/// precision. `a` is row-major `n x n` and is consumed as scratch.
pub fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[piv * n + col].abs() {
                piv = row;
            }
        }
        if a[piv * n + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut sum = b[col];
        for k in col + 1..n {
            sum -= a[col * n + k] * b[k];
        }
        b[col] = sum / a[col * n + col];
    }
    Some(b)
}

/// Invert a small dense matrix (row-major) via column solves.
pub fn invert_dense(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let x = solve_dense(a.to_vec(), e)?;
        for row in 0..n {
            inv[row * n + col] = x[row];
        }
    }
    Some(inv)
}

/// Exact non-negative fraction used where published values must reproduce
/// to the printed digit (integer numerators, no float rounding).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    num: u128,
    den: u128,
}

impl Fraction {
    pub fn new(num: u128, den: u128) -> Self {
        assert!(den != 0, "fraction denominator must be nonzero");
        let g = gcd(num.max(1), den);
        Fraction {
            num: num / g,
            den: den / g,
        }
    }

    pub fn numerator(&self) -> u128 {
        self.num
    }

    pub fn denominator(&self) -> u128 {
        self.den
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Percent value rounded half-up to `decimals` places, as a string.
    /// Exact decimal arithmetic; no float formatting is involved.
    pub fn percent_string(&self, decimals: u32) -> String {
        let scale = 10u128.pow(decimals);
        // percent * 10^decimals, rounded half-up
        let scaled = self.num * 100 * scale;
        let q = scaled / self.den;
        let r = scaled % self.den;
        let rounded = if 2 * r >= self.den { q + 1 } else { q };
        let int = rounded / scale;
        let frac = rounded % scale;
        if decimals == 0 {
            format!("{int}")
        } else {
            format!("{int}.{frac:0width$}", width = decimals as usize)
        }
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}
