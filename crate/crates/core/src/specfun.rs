//! Special functions behind the error-probability integral.
//!
//! Everything here works with integer orders only. The generalized Marcum Q
//! function of order `K` is evaluated as a Poisson mixture of Erlang survival
//! functions,
//!
//! ```text
//! Q_K(a, b) = sum_i  Pois(i; a^2/2) * Pr{ Erlang(K + i) > b^2/2 }
//! ```
//!
//! and the Erlang survival function itself is a Poisson lower tail,
//! `Pr{Erlang(n) > y} = Pr{Pois(y) < n}`. Both sides of every probability are
//! accumulated from positive terms, so tiny complements keep their relative
//! accuracy.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Poisson mass discarded when truncating the Marcum mixture.
pub const POISSON_TAIL_MASS: f64 = 1e-15;

/// Panel budget of [`integrate_interval`].
pub const MAX_PANELS: usize = 2000;

/// `(a - b)^2` beyond which `1 - Q_K(a, b) <= exp(-(a-b)^2/2)` underflows.
const MARCUM_SATURATION: f64 = 1490.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

/// `ln(n!)`: exact product up to 20, Stirling series above.
pub fn ln_factorial(n: u64) -> f64 {
    if n <= 20 {
        let mut f: u64 = 1;
        for k in 2..=n {
            f *= k;
        }
        return (f as f64).ln();
    }
    let x = n as f64;
    x * x.ln() - x + 0.5 * (std::f64::consts::TAU * x).ln() + stirling_correction(x)
}

/// `ln(x!) - (x ln x - x + ln(2 pi x)/2)` for `x > 20`.
fn stirling_correction(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// `ln Pois(j; mean)`, with `mean > 0`.
fn ln_poisson_pmf(j: u64, mean: f64) -> f64 {
    if j <= 20 {
        return -mean + j as f64 * mean.ln() - ln_factorial(j);
    }
    // Stirling written relative to j keeps the large terms from cancelling
    let x = j as f64;
    let d = mean - x;
    x * (d / x).ln_1p() - d - 0.5 * (std::f64::consts::TAU * x).ln() - stirling_correction(x)
}

/// Truncated Poisson pmf around its mode, built by ratio recursion from a
/// log-domain anchor so that neither end underflows prematurely.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonWeights {
    start: usize,
    pmf: Vec<f64>,
}

impl PoissonWeights {
    /// Keeps indices until the discarded mass on both sides is below `tail_mass`.
    pub fn new(mean: f64, tail_mass: f64) -> Self {
        if mean <= 0.0 {
            return Self {
                start: 0,
                pmf: vec![1.0],
            };
        }
        let mode = mean.floor() as usize;
        let anchor = ln_poisson_pmf(mode as u64, mean).exp();
        let half = 0.5 * tail_mass;

        let mut below = Vec::new();
        let mut p = anchor;
        let mut i = mode;
        while i > 0 {
            // p holds pmf(i); next lower term
            let lower = p * i as f64 / mean;
            // remaining mass below and including i-1 is bounded geometrically
            let ratio = (i - 1) as f64 / mean;
            let bound = if ratio < 1.0 {
                lower / (1.0 - ratio)
            } else {
                f64::INFINITY
            };
            if bound < half {
                break;
            }
            below.push(lower);
            p = lower;
            i -= 1;
        }
        let start = i;

        let mut pmf: Vec<f64> = below.into_iter().rev().collect();
        pmf.push(anchor);
        let mut p = anchor;
        let mut j = mode;
        loop {
            let upper = p * mean / (j + 1) as f64;
            let ratio = mean / (j + 2) as f64;
            let bound = if ratio < 1.0 {
                upper / (1.0 - ratio)
            } else {
                f64::INFINITY
            };
            if bound < half {
                break;
            }
            pmf.push(upper);
            p = upper;
            j += 1;
        }
        Self { start, pmf }
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.start + self.pmf.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.pmf
    }

    pub fn get(&self, i: usize) -> f64 {
        if i < self.start {
            0.0
        } else {
            self.pmf.get(i - self.start).copied().unwrap_or(0.0)
        }
    }
}

/// Poisson(y) terms `t_j` for `j = 0..=top` with running lower and upper sums,
/// i.e. Erlang survival `Pr{Erlang(n) > y} = sum_{j<n} t_j` and Erlang CDF
/// `Pr{Erlang(n) <= y} = sum_{j>=n} t_j` for every order `n <= top` at once.
#[derive(Debug, Clone)]
pub struct ErlangLadder {
    terms: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ErlangLadder {
    /// `max_order` is the largest Erlang order that will be queried.
    pub fn new(y: f64, max_order: usize) -> Self {
        let spread = y.sqrt();
        let top = max_order.max((y + 12.0 * spread + 40.0).ceil() as usize);
        let mut t = vec![0.0; top + 1];
        if y <= 0.0 {
            t[0] = 1.0;
        } else {
            let mode = (y.floor() as usize).min(top);
            t[mode] = ln_poisson_pmf(mode as u64, y).exp();
            for j in (0..mode).rev() {
                t[j] = t[j + 1] * (j + 1) as f64 / y;
            }
            for j in mode + 1..=top {
                t[j] = t[j - 1] * y / j as f64;
            }
        }
        // geometric bound on the mass beyond `top`
        let ratio = y / (top + 2) as f64;
        let tail = if y > 0.0 {
            t[top] * y / (top + 1) as f64 / (1.0 - ratio)
        } else {
            0.0
        };

        let mut lower = vec![0.0; top + 2];
        for j in 0..=top {
            lower[j + 1] = lower[j] + t[j];
        }
        let mut upper = vec![0.0; top + 2];
        upper[top + 1] = tail;
        for j in (0..=top).rev() {
            upper[j] = upper[j + 1] + t[j];
        }
        Self { terms: t, lower, upper }
    }

    /// `Pr{Erlang(n) > y}`.
    #[inline]
    pub fn survival(&self, n: usize) -> f64 {
        self.lower[n.min(self.lower.len() - 1)]
    }

    /// `Pr{Erlang(n) <= y}`.
    #[inline]
    pub fn cdf(&self, n: usize) -> f64 {
        self.upper.get(n).copied().unwrap_or(0.0)
    }

    /// `Pois(n - 1; y)`, the Erlang(n) density at `y`.
    #[inline]
    pub fn density(&self, n: usize) -> f64 {
        self.terms.get(n - 1).copied().unwrap_or(0.0)
    }

    pub fn max_order(&self) -> usize {
        self.lower.len() - 1
    }
}

/// Both tails of the Marcum Q function, each summed independently.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarcumPair {
    /// `Q_K(a, b)`
    pub q: f64,
    /// `1 - Q_K(a, b)`
    pub p: f64,
}

/// Marcum Q of fixed order and noncentrality, reusable across many `b`.
#[derive(Debug, Clone)]
pub struct MarcumKernel {
    order: usize,
    a: f64,
    weights: PoissonWeights,
}

impl MarcumKernel {
    pub fn new(order: u32, a: f64) -> Result<Self> {
        if order == 0 {
            return invalid("Marcum order must be >= 1");
        }
        if !a.is_finite() || a < 0.0 {
            return invalid(format!("Marcum noncentrality must be finite and >= 0, got {a}"));
        }
        Ok(Self {
            order: order as usize,
            a,
            weights: PoissonWeights::new(0.5 * a * a, POISSON_TAIL_MASS),
        })
    }

    /// Largest Erlang order a ladder must cover for [`Self::eval_with`].
    pub fn max_order(&self) -> usize {
        self.order + self.weights.end()
    }

    /// True when `Q_K(a, b)` is 1 to double precision for every `b <= b_max`.
    pub fn saturated_below(&self, b_max: f64) -> bool {
        marcum_saturated(self.a, b_max)
    }

    /// Evaluates at the `b = sqrt(2 y)` encoded by `ladder`.
    pub fn eval_with(&self, ladder: &ErlangLadder) -> MarcumPair {
        let mut q = 0.0;
        let mut p = 0.0;
        let base = self.order + self.weights.start();
        for (i, &w) in self.weights.weights().iter().enumerate() {
            q += w * ladder.survival(base + i);
            p += w * ladder.cdf(base + i);
        }
        MarcumPair {
            q: q.clamp(0.0, 1.0),
            p: p.clamp(0.0, 1.0),
        }
    }

    pub fn eval(&self, b: f64) -> Result<MarcumPair> {
        if !b.is_finite() || b < 0.0 {
            return invalid(format!("Marcum threshold must be finite and >= 0, got {b}"));
        }
        if b == 0.0 || self.saturated_below(b) {
            return Ok(MarcumPair { q: 1.0, p: 0.0 });
        }
        let ladder = ErlangLadder::new(0.5 * b * b, self.max_order());
        Ok(self.eval_with(&ladder))
    }
}

/// True when `Q_K(a, b') = 1` to double precision for every `b' <= b`,
/// whatever the order.
pub fn marcum_saturated(a: f64, b: f64) -> bool {
    a > b && (a - b).powi(2) > MARCUM_SATURATION
}

/// Generalized Marcum Q function of integer order:
/// `Pr{ X > b^2 }` for `X` noncentral chi-square with `2K` degrees of freedom
/// and noncentrality `a^2`.
pub fn marcum_q(order: u32, a: f64, b: f64) -> Result<f64> {
    Ok(marcum_pair(order, a, b)?.q)
}

/// `Q_K(a, b)` together with its complement, the noncentral chi-square CDF.
pub fn marcum_pair(order: u32, a: f64, b: f64) -> Result<MarcumPair> {
    if order >= 1 && b.is_finite() && b >= 0.0 && marcum_saturated(a, b) {
        return Ok(MarcumPair { q: 1.0, p: 0.0 });
    }
    MarcumKernel::new(order, a)?.eval(b)
}

fn check_erlang(shape: u32, x: f64) -> Result<()> {
    if shape == 0 {
        return invalid("Erlang shape must be >= 1");
    }
    if !(x >= 0.0) || x.is_infinite() {
        return invalid(format!("Erlang argument must be finite and >= 0, got {x}"));
    }
    Ok(())
}

/// Density of the unit-scale Erlang distribution, `x^(K-1) e^-x / (K-1)!`.
pub fn erlang_pdf(shape: u32, x: f64) -> Result<f64> {
    check_erlang(shape, x)?;
    let k = shape - 1;
    if x == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if shape <= 20 {
        let fact: u64 = (2..=k as u64).product();
        Ok(x.powi(k as i32) * (-x).exp() / fact as f64)
    } else {
        Ok((k as f64 * x.ln() - x - ln_factorial(k as u64)).exp())
    }
}

/// Sums `sum_{j<n} Pois(j; y)` (`lower = true`) or `sum_{j>=n}` directly,
/// walking away from the boundary term so the summands shrink.
fn poisson_partial_sum(n: u32, y: f64, lower: bool) -> f64 {
    let n = n as u64;
    if lower {
        if n == 0 {
            return 0.0;
        }
        let mut j = n - 1;
        let mut t = ln_poisson_pmf(j, y).exp();
        let mut sum = 0.0;
        loop {
            sum += t;
            if j == 0 || t < sum * 1e-17 {
                return sum;
            }
            t *= j as f64 / y;
            j -= 1;
        }
    } else {
        let mut j = n;
        let mut t = ln_poisson_pmf(j, y).exp();
        let mut sum = 0.0;
        loop {
            sum += t;
            j += 1;
            let next = t * y / j as f64;
            if next < sum * 1e-17 && (j as f64) > y {
                return sum;
            }
            t = next;
        }
    }
}

/// `Pr{ Erlang(K) <= x }`, the regularized lower incomplete gamma `P(K, x)`.
pub fn erlang_cdf(shape: u32, x: f64) -> Result<f64> {
    check_erlang(shape, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    // whichever tail is small is summed; the other is its complement
    if x > shape as f64 {
        Ok(1.0 - poisson_partial_sum(shape, x, true))
    } else {
        Ok(poisson_partial_sum(shape, x, false).min(1.0))
    }
}

/// `Pr{ Erlang(K) > x }`, the regularized upper incomplete gamma `Q(K, x)`.
pub fn erlang_sf(shape: u32, x: f64) -> Result<f64> {
    check_erlang(shape, x)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x > shape as f64 {
        Ok(poisson_partial_sum(shape, x, true).min(1.0))
    } else {
        Ok(1.0 - poisson_partial_sum(shape, x, false))
    }
}

// Gauss-Kronrod 7/15 abscissae and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod_panel<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> Panel {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Panel {
        lo,
        hi,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Globally adaptive Gauss-Kronrod (7/15) integration of `f` over `[lo, hi]`.
///
/// Stops once the summed panel error is below `max(rel_tol * |I|, abs_tol)`;
/// after [`MAX_PANELS`] panels it returns [`Error::Convergence`] carrying the
/// best estimate.
pub fn integrate_interval<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<QuadratureResult> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return invalid(format!("bad integration interval [{lo}, {hi}]"));
    }
    let first = kronrod_panel(&mut f, lo, hi);
    let mut evaluations = 15;
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::from([first]);
    loop {
        if error <= (rel_tol * value.abs()).max(abs_tol) || !error.is_finite() {
            break;
        }
        if heap.len() >= MAX_PANELS {
            return Err(Error::Convergence {
                best: QuadratureResult {
                    value,
                    abs_error_estimate: error,
                    evaluations,
                },
                panels: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        let left = kronrod_panel(&mut f, worst.lo, mid);
        let right = kronrod_panel(&mut f, mid, worst.hi);
        evaluations += 30;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // re-sum occasionally so incremental drift cannot fake convergence
        if heap.len() % 64 == 0 {
            value = heap.iter().map(|p| p.value).sum();
            error = heap.iter().map(|p| p.error).sum();
        }
    }
    let value_sum: f64 = heap.iter().map(|p| p.value).sum();
    let error_sum: f64 = heap.iter().map(|p| p.error).sum();
    if !value_sum.is_finite() {
        return invalid("integrand produced a non-finite value");
    }
    Ok(QuadratureResult {
        value: value_sum,
        abs_error_estimate: error_sum.max(0.0),
        evaluations,
    })
}

/// How the upper integration limit on `[0, inf)` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailCutoff {
    /// Integrate up to a fixed limit.
    Fixed(f64),
    /// Choose `X` with `erlang_cdf(shape, X)^competitors >= 1 - tail_mass`:
    /// the support of the largest of `competitors` iid Erlang(shape) variates.
    ErlangMax {
        shape: u32,
        competitors: u32,
        tail_mass: f64,
    },
}

impl TailCutoff {
    pub fn upper_limit(&self) -> Result<f64> {
        match *self {
            TailCutoff::Fixed(x) => Ok(x),
            TailCutoff::ErlangMax {
                shape,
                competitors,
                tail_mass,
            } => erlang_max_upper_limit(shape, competitors, tail_mass),
        }
    }
}

/// Smallest (to bisection precision) `X` such that the maximum of
/// `competitors` iid Erlang(shape) variates exceeds `X` with probability at
/// most `tail_mass`. Uses the union bound `1 - F^m <= m (1 - F)`.
pub fn erlang_max_upper_limit(shape: u32, competitors: u32, tail_mass: f64) -> Result<f64> {
    if shape == 0 || competitors == 0 {
        return invalid("Erlang-max cutoff needs shape >= 1 and competitors >= 1");
    }
    if !(tail_mass > 0.0 && tail_mass < 1.0) {
        return invalid(format!("tail mass must lie in (0, 1), got {tail_mass}"));
    }
    let target = tail_mass / competitors as f64;
    let mut lo = 0.0;
    let mut hi = shape as f64 + 1.0;
    while erlang_sf(shape, hi)? > target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if erlang_sf(shape, mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-9 * hi {
            break;
        }
    }
    Ok(hi)
}

/// Integral of a nonnegative `f` over `[0, X]`, `X` fixed by `cutoff`.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(f: F, cutoff: TailCutoff, rel_tol: f64) -> Result<QuadratureResult> {
    if !(rel_tol > 0.0 && rel_tol < 0.1) {
        return invalid(format!("rel_tol must lie in (0, 0.1), got {rel_tol}"));
    }
    let upper = cutoff.upper_limit()?;
    integrate_interval(f, 0.0, upper, rel_tol, 1e-15)
}
