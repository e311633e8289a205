//! One-dimensional lifting steps on interleaved signals with whole-sample
//! symmetric extension (`x[-1] = x[1]`, `x[n] = x[n-2]`).

use crate::error::{Error, Result};

pub const ALPHA: f64 = -1.586_134_342;
pub const BETA: f64 = -0.052_980_118;
pub const GAMMA: f64 = 0.882_911_076;
pub const DELTA: f64 = 0.443_506_852;
pub const K: f64 = 1.230_174_105;

#[inline]
fn left(i: usize) -> usize {
    if i == 0 {
        1
    } else {
        i - 1
    }
}

#[inline]
fn right(i: usize, n: usize) -> usize {
    if i + 1 >= n {
        i - 1
    } else {
        i + 1
    }
}

/// Applies `y[i] += f(y[i-1], y[i+1])` to every index of the given parity.
#[inline]
fn lift<T: Copy>(y: &mut [T], parity: usize, f: impl Fn(T, T, T) -> T) {
    let n = y.len();
    let mut i = parity;
    while i < n {
        y[i] = f(y[i], y[left(i)], y[right(i, n)]);
        i += 2;
    }
}

/// Reversible 5/3 analysis in place on an interleaved signal (n >= 2).
pub(crate) fn forward53(y: &mut [i64]) {
    lift(y, 1, |x, a, b| x - (a + b).div_euclid(2));
    lift(y, 0, |x, a, b| x + (a + b + 2).div_euclid(4));
}

pub(crate) fn inverse53(y: &mut [i64]) {
    lift(y, 0, |x, a, b| x - (a + b + 2).div_euclid(4));
    lift(y, 1, |x, a, b| x + (a + b).div_euclid(2));
}

/// Linear (rounding-free) 5/3 synthesis; only used to measure basis energy.
pub(crate) fn inverse53_linear(y: &mut [f64]) {
    lift(y, 0, |x, a, b| x - (a + b) / 4.0);
    lift(y, 1, |x, a, b| x + (a + b) / 2.0);
}

/// Irreversible 9/7 analysis in place; low-pass samples end up scaled by
/// `1/K`, high-pass by `K`.
pub(crate) fn forward97(y: &mut [f64]) {
    lift(y, 1, |x, a, b| x + ALPHA * (a + b));
    lift(y, 0, |x, a, b| x + BETA * (a + b));
    lift(y, 1, |x, a, b| x + GAMMA * (a + b));
    lift(y, 0, |x, a, b| x + DELTA * (a + b));
    for (i, v) in y.iter_mut().enumerate() {
        *v = if i % 2 == 0 { *v / K } else { *v * K };
    }
}

pub(crate) fn inverse97(y: &mut [f64]) {
    for (i, v) in y.iter_mut().enumerate() {
        *v = if i % 2 == 0 { *v * K } else { *v / K };
    }
    lift(y, 0, |x, a, b| x - DELTA * (a + b));
    lift(y, 1, |x, a, b| x - GAMMA * (a + b));
    lift(y, 0, |x, a, b| x - BETA * (a + b));
    lift(y, 1, |x, a, b| x - ALPHA * (a + b));
}

pub(crate) fn split<T: Copy>(y: &[T]) -> (Vec<T>, Vec<T>) {
    (
        y.iter().step_by(2).copied().collect(),
        y.iter().skip(1).step_by(2).copied().collect(),
    )
}

pub(crate) fn interleave<T: Copy + Default>(approx: &[T], detail: &[T]) -> Result<Vec<T>> {
    let n = approx.len() + detail.len();
    if n < 2 || approx.len() != n.div_ceil(2) {
        return Err(Error::Size(format!(
            "{} approximation / {} detail samples do not form a signal",
            approx.len(),
            detail.len()
        )));
    }
    let mut y = vec![T::default(); n];
    for (i, v) in y.iter_mut().enumerate() {
        *v = if i % 2 == 0 {
            approx[i / 2]
        } else {
            detail[i / 2]
        };
    }
    Ok(y)
}

fn check_len(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::Size(format!(
            "wavelet transform needs >= 2 samples, got {n}"
        )))
    } else {
        Ok(())
    }
}

/// Reversible 5/3 transform; returns (approximation, detail).
pub fn dwt53_1d(signal: &[i64]) -> Result<(Vec<i64>, Vec<i64>)> {
    check_len(signal.len())?;
    let mut y = signal.to_vec();
    forward53(&mut y);
    Ok(split(&y))
}

pub fn idwt53_1d(approx: &[i64], detail: &[i64]) -> Result<Vec<i64>> {
    let mut y = interleave(approx, detail)?;
    inverse53(&mut y);
    Ok(y)
}

/// CDF 9/7 transform; returns (approximation, detail).
pub fn dwt97_1d(signal: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(signal.len())?;
    let mut y = signal.to_vec();
    forward97(&mut y);
    Ok(split(&y))
}

pub fn idwt97_1d(approx: &[f64], detail: &[f64]) -> Result<Vec<f64>> {
    let mut y = interleave(approx, detail)?;
    inverse97(&mut y);
    Ok(y)
}
