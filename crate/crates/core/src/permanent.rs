//! Matrix permanents. Bosonic overlaps of factored multi-photon terms reduce
//! to permanents of the matrix of single-photon overlaps.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_PERMANENT: usize = 12;

/// Upper bound on contingency tables visited by [`permanent_grouped`].
const MAX_TABLES: u64 = 20_000_000;

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Permanent of the row-major `n×n` matrix `a`: enumeration up to size 5,
/// Ryser's formula up to 12.
pub fn permanent(a: &[Complex64], n: usize) -> Result<Complex64> {
    assert_eq!(a.len(), n * n);
    match n {
        0 => Ok(Complex64::new(1.0, 0.0)),
        1 => Ok(a[0]),
        2 => Ok(a[0] * a[3] + a[1] * a[2]),
        3..=5 => Ok(permanent_enumerate(a, n)),
        6..=MAX_PERMANENT => Ok(permanent_balanced(a, n)),
        _ => Err(Error::PermanentTooLarge(n)),
    }
}

/// Ryser on the matrix with rows and columns rescaled to unit max modulus.
/// The permanent is multilinear in rows and columns, and without the
/// rescaling a column many orders of magnitude smaller than the rest is lost
/// to cancellation between the inclusion-exclusion terms.
fn permanent_balanced(a: &[Complex64], n: usize) -> Complex64 {
    let mut m = a.to_vec();
    let mut log_scale = 0.0f64;
    for i in 0..n {
        let big = (0..n).map(|j| m[i * n + j].norm()).fold(0.0, f64::max);
        if big == 0.0 {
            return zero();
        }
        (0..n).for_each(|j| m[i * n + j] /= big);
        log_scale += big.ln();
    }
    for j in 0..n {
        let big = (0..n).map(|i| m[i * n + j].norm()).fold(0.0, f64::max);
        if big == 0.0 {
            return zero();
        }
        (0..n).for_each(|i| m[i * n + j] /= big);
        log_scale += big.ln();
    }
    permanent_ryser(&m, n) * log_scale.exp()
}

/// Sum over all permutations, expanding along rows.
pub fn permanent_enumerate(a: &[Complex64], n: usize) -> Complex64 {
    fn rec(a: &[Complex64], n: usize, row: usize, used: &mut [bool]) -> Complex64 {
        if row == n {
            return Complex64::new(1.0, 0.0);
        }
        let mut acc = zero();
        for j in 0..n {
            let x = a[row * n + j];
            if used[j] || x == zero() {
                continue;
            }
            used[j] = true;
            acc += x * rec(a, n, row + 1, used);
            used[j] = false;
        }
        acc
    }
    rec(a, n, 0, &mut vec![false; n])
}

/// Ryser's inclusion-exclusion formula with Gray-code column updates.
pub fn permanent_ryser(a: &[Complex64], n: usize) -> Complex64 {
    if n == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let mut row_sums = vec![zero(); n];
    let mut total = zero();
    let mut gray = 0u64;
    for k in 1u64..(1u64 << n) {
        let next = k ^ (k >> 1);
        let col = (next ^ gray).trailing_zeros() as usize;
        let sign = if next & (1 << col) != 0 { 1.0 } else { -1.0 };
        gray = next;
        for i in 0..n {
            row_sums[i] += a[i * n + col] * sign;
        }
        let prod: Complex64 = row_sums.iter().product();
        if next.count_ones() % 2 == n as u32 % 2 {
            total += prod;
        } else {
            total -= prod;
        }
    }
    total
}

/// Permanent of the matrix obtained by repeating row `i` of the `r×c`
/// matrix `a` `row_mult[i]` times and column `j` `col_mult[j]` times:
///
/// `Π r_i! Π s_j! Σ_X Π_ij a_ij^{X_ij} / X_ij!`
///
/// over nonnegative integer tables `X` with row sums `r` and column sums `s`.
pub fn permanent_grouped(a: &[Complex64], row_mult: &[usize], col_mult: &[usize]) -> Result<Complex64> {
    let (r, c) = (row_mult.len(), col_mult.len());
    assert_eq!(a.len(), r * c);
    let n: usize = row_mult.iter().sum();
    if n != col_mult.iter().sum::<usize>() {
        return Ok(zero());
    }
    if n <= 5 {
        return permanent(&expand(a, row_mult, col_mult), n);
    }
    let max_m = row_mult.iter().chain(col_mult).copied().max().unwrap_or(0);
    let inv_fact: Vec<f64> = (0..=max_m).scan(1.0f64, |f, k| {
        if k > 0 {
            *f /= k as f64;
        }
        Some(*f)
    }).collect();
    // powers[i][j][x] = a_ij^x / x!
    let powers: Vec<Vec<Complex64>> = (0..r * c)
        .map(|idx| {
            let m = row_mult[idx / c].min(col_mult[idx % c]);
            let mut p = Vec::with_capacity(m + 1);
            let mut z = Complex64::new(1.0, 0.0);
            for x in 0..=m {
                p.push(z * inv_fact[x]);
                z *= a[idx];
            }
            p
        })
        .collect();

    struct Walk<'a> {
        r: usize,
        c: usize,
        powers: &'a [Vec<Complex64>],
        row_mult: &'a [usize],
        col_left: Vec<usize>,
        visited: u64,
    }
    fn rec(w: &mut Walk, i: usize, j: usize, row_left: usize, acc: Complex64) -> Result<Complex64> {
        if acc == zero() {
            return Ok(zero());
        }
        if i == w.r {
            w.visited += 1;
            if w.visited > MAX_TABLES {
                return Err(Error::TooManyBijections(w.visited as u128));
            }
            return Ok(acc);
        }
        if j == w.c - 1 {
            let x = row_left;
            if x > w.col_left[j] {
                return Ok(zero());
            }
            w.col_left[j] -= x;
            let next_row = if i + 1 < w.r { w.row_mult[i + 1] } else { 0 };
            let v = rec(w, i + 1, 0, next_row, acc * w.powers[i * w.c + j][x]);
            w.col_left[j] += x;
            return v;
        }
        let mut total = zero();
        for x in 0..=row_left.min(w.col_left[j]) {
            w.col_left[j] -= x;
            let v = rec(w, i, j + 1, row_left - x, acc * w.powers[i * w.c + j][x]);
            w.col_left[j] += x;
            total += v?;
        }
        Ok(total)
    }
    if r == 0 || c == 0 {
        return Ok(if n == 0 { Complex64::new(1.0, 0.0) } else { zero() });
    }
    let mut walk = Walk { r, c, powers: &powers, row_mult, col_left: col_mult.to_vec(), visited: 0 };
    let sum = rec(&mut walk, 0, 0, row_mult[0], Complex64::new(1.0, 0.0))?;
    let fact = |m: usize| (1..=m).map(|k| k as f64).product::<f64>();
    let scale: f64 = row_mult.iter().chain(col_mult).map(|&m| fact(m)).product();
    Ok(sum * scale)
}

fn expand(a: &[Complex64], row_mult: &[usize], col_mult: &[usize]) -> Vec<Complex64> {
    let c = col_mult.len();
    let rows: Vec<usize> = row_mult.iter().enumerate().flat_map(|(i, &m)| std::iter::repeat_n(i, m)).collect();
    let cols: Vec<usize> = col_mult.iter().enumerate().flat_map(|(j, &m)| std::iter::repeat_n(j, m)).collect();
    rows.iter().flat_map(|&i| cols.iter().map(move |&j| a[i * c + j])).collect()
}
