//! Exact integer polynomial arithmetic for certifying eigenvalues of
//! symmetric integer matrices.
//!
//! Polynomials are coefficient vectors in ascending degree. All root
//! counting relies on Descartes' rule of signs, which is exact for
//! polynomials whose roots are all real, as is the case for the
//! characteristic polynomial of a symmetric matrix.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Poly = Vec<BigInt>;

fn trim(mut p: Poly) -> Poly {
    while p.len() > 1 && p.last().is_some_and(Zero::is_zero) {
        p.pop();
    }
    p
}

/// Characteristic polynomial `det(xI - A)` by the Faddeev-LeVerrier
/// recursion. Every division in the recursion is exact over the integers.
pub fn char_poly(a: &[Vec<BigInt>]) -> Poly {
    let n = a.len();
    let mut coeffs = vec![BigInt::zero(); n + 1];
    coeffs[n] = BigInt::one();
    let mut m = vec![vec![BigInt::zero(); n]; n];
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{n-k+1} I
        let mut next = mat_mul(a, &m);
        for (i, row) in next.iter_mut().enumerate() {
            row[i] += &coeffs[n - k + 1];
        }
        m = next;
        let am = mat_mul(a, &m);
        let trace: BigInt = (0..n).map(|i| am[i][i].clone()).sum();
        let (q, r) = trace.div_rem(&BigInt::from(k));
        debug_assert!(r.is_zero());
        coeffs[n - k] = -q;
    }
    coeffs
}

/// Characteristic polynomial of a matrix of unsigned integers.
pub fn char_poly_u128(a: &[Vec<u128>]) -> Poly {
    let big: Vec<Vec<BigInt>> = a.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect();
    char_poly(&big)
}

fn mat_mul(a: &[Vec<BigInt>], b: &[Vec<BigInt>]) -> Vec<Vec<BigInt>> {
    let n = a.len();
    let mut c = vec![vec![BigInt::zero(); n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k].is_zero() {
                continue;
            }
            for j in 0..n {
                if !b[k][j].is_zero() {
                    c[i][j] += &a[i][k] * &b[k][j];
                }
            }
        }
    }
    c
}

pub fn eval(p: &[BigInt], x: &BigRational) -> BigRational {
    p.iter().rev().fold(BigRational::zero(), |acc, c| acc * x + BigRational::from_integer(c.clone()))
}

pub fn eval_int(p: &[BigInt], x: &BigInt) -> BigInt {
    p.iter().rev().fold(BigInt::zero(), |acc, c| acc * x + c)
}

/// Number of sign changes in the coefficient sequence, zeros skipped.
pub fn sign_changes(p: &[BigInt]) -> usize {
    let mut last = 0i8;
    let mut changes = 0;
    for c in p {
        let s = if c.is_positive() {
            1
        } else if c.is_negative() {
            -1
        } else {
            0
        };
        if s != 0 {
            if last != 0 && s != last {
                changes += 1;
            }
            last = s;
        }
    }
    changes
}

/// `b^n p(y + a/b)` as a polynomial in `y`, where `n = deg p`.
pub fn shift(p: &[BigInt], c: &BigRational) -> Poly {
    let n = p.len() - 1;
    let (a, b) = (c.numer().clone(), c.denom().clone());
    let mut q: Poly = vec![p[n].clone()];
    let mut bpow = BigInt::one();
    for k in (0..n).rev() {
        bpow *= &b;
        // q <- q * (b y + a) + p_k b^{n-k}
        let mut next = vec![BigInt::zero(); q.len() + 1];
        for (i, qi) in q.iter().enumerate() {
            next[i] += qi * &a;
            next[i + 1] += qi * &b;
        }
        next[0] += &p[k] * &bpow;
        q = next;
    }
    trim(q)
}

/// Number of roots strictly greater than `c`, counted with multiplicity,
/// for a real-rooted polynomial.
pub fn roots_above(p: &[BigInt], c: &BigRational) -> usize {
    let q = shift(p, c);
    let first = q.iter().position(|x| !x.is_zero()).unwrap_or(q.len());
    sign_changes(&q[first..])
}

/// Multiplicity of `c` as a root.
pub fn root_multiplicity(p: &[BigInt], c: &BigRational) -> usize {
    let q = shift(p, c);
    q.iter().position(|x| !x.is_zero()).unwrap_or(0)
}

/// A bound exceeding every root's absolute value.
pub fn cauchy_bound(p: &[BigInt]) -> BigRational {
    let lead = p.last().expect("nonempty polynomial").abs();
    let max = p[..p.len() - 1].iter().map(|c| c.abs()).max().unwrap_or_else(BigInt::zero);
    BigRational::one() + BigRational::new(max, lead)
}

/// Rational bracket `[lo, hi]` of width at most `width` containing the
/// largest root of a real-rooted polynomial of positive degree.
pub fn largest_root_bracket(p: &[BigInt], width: &BigRational) -> (BigRational, BigRational) {
    let mut hi = cauchy_bound(p);
    let mut lo = -hi.clone();
    let two = BigRational::from_integer(2.into());
    while &(&hi - &lo) > width {
        let mid = (&lo + &hi) / &two;
        if roots_above(p, &mid) > 0 {
            lo = mid;
        } else {
            hi = mid;
        }
        // keep denominators small: snap to a dyadic grid
        lo = dyadic_floor(&lo, 80);
        hi = dyadic_ceil(&hi, 80);
    }
    (lo, hi)
}

fn dyadic_floor(x: &BigRational, bits: u32) -> BigRational {
    let scale = BigInt::one() << bits;
    let scaled = (x * BigRational::from_integer(scale.clone())).floor();
    scaled / BigRational::from_integer(scale)
}

fn dyadic_ceil(x: &BigRational, bits: u32) -> BigRational {
    let scale = BigInt::one() << bits;
    let scaled = (x * BigRational::from_integer(scale.clone())).ceil();
    scaled / BigRational::from_integer(scale)
}

/// Exact rational value of a finite float.
pub fn rational_from_f64(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

/// Where the largest root of a real-rooted polynomial whose roots are all
/// nonnegative sits relative to 4 and to 2 + sqrt 5.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum NormRegion {
    BelowFour,
    Four,
    /// In `(4, 2 + sqrt 5]`.
    Window,
    /// Above `2 + sqrt 5`.
    Beyond,
}

pub fn norm_region(p: &[BigInt]) -> NormRegion {
    let four = BigRational::from_integer(4.into());
    if roots_above(p, &four) == 0 {
        return if eval(p, &four).is_zero() { NormRegion::Four } else { NormRegion::BelowFour };
    }
    if roots_above_two_plus_sqrt5(p) == 0 {
        NormRegion::Window
    } else {
        NormRegion::Beyond
    }
}

/// Number of roots above `2 + sqrt 5` of a real-rooted polynomial whose roots
/// are all at least `2 - sqrt 5`.
///
/// With `p2(s) = p(s + 2)`, the polynomial `h(s^2) = p2(s) p2(-s)` has the
/// squares of the roots of `p2` as its roots, so the count equals the number
/// of roots of `h` above 5.
pub fn roots_above_two_plus_sqrt5(p: &[BigInt]) -> usize {
    let p2 = shift(p, &BigRational::from_integer(2.into()));
    let neg: Poly = p2.iter().enumerate().map(|(k, c)| if k % 2 == 1 { -c } else { c.clone() }).collect();
    let prod = poly_mul(&p2, &neg);
    // prod is even in s; collapse to a polynomial in u = s^2
    let h: Poly = prod.iter().step_by(2).cloned().collect();
    roots_above(&trim(h), &BigRational::from_integer(5.into()))
}

pub fn poly_mul(a: &[BigInt], b: &[BigInt]) -> Poly {
    let mut c = vec![BigInt::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            c[i + j] += x * y;
        }
    }
    trim(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i64]) -> Poly {
        c.iter().map(|&x| BigInt::from(x)).collect()
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn char_poly_of_small_matrices() {
        // [[1,1],[1,2]] -> x^2 - 3x + 1
        assert_eq!(char_poly_u128(&[vec![1, 1], vec![1, 2]]), p(&[1, -3, 1]));
        assert_eq!(char_poly_u128(&[vec![2]]), p(&[-2, 1]));
        // [[0,1,0],[1,0,1],[0,1,0]] -> x^3 - 2x
        assert_eq!(char_poly_u128(&[vec![0, 1, 0], vec![1, 0, 1], vec![0, 1, 0]]), p(&[0, -2, 0, 1]));
    }

    #[test]
    fn counts_roots_above_rationals() {
        // (x-1)(x-2)(x-3)
        let f = p(&[-6, 11, -6, 1]);
        assert_eq!(roots_above(&f, &q(0, 1)), 3);
        assert_eq!(roots_above(&f, &q(3, 2)), 2);
        assert_eq!(roots_above(&f, &q(2, 1)), 1);
        assert_eq!(roots_above(&f, &q(3, 1)), 0);
        assert_eq!(root_multiplicity(&f, &q(2, 1)), 1);
    }

    #[test]
    fn brackets_golden_square() {
        let f = p(&[1, -3, 1]);
        let (lo, hi) = largest_root_bracket(&f, &q(1, 1 << 40));
        let target = (3.0 + 5f64.sqrt()) / 2.0;
        let (l, h) = (crate::scalar::ratio_to_f64(&lo), crate::scalar::ratio_to_f64(&hi));
        assert!(l <= target + 1e-15 && target - 1e-15 <= h && h - l < 1e-11);
    }

    #[test]
    fn regions() {
        assert_eq!(norm_region(&p(&[-3, 1])), NormRegion::BelowFour);
        assert_eq!(norm_region(&p(&[-4, 1])), NormRegion::Four);
        assert_eq!(norm_region(&p(&[-21, 5])), NormRegion::Window);
        // x^2 - 4x - 1 has largest root exactly 2 + sqrt 5
        assert_eq!(norm_region(&p(&[-1, -4, 1])), NormRegion::Window);
        assert_eq!(norm_region(&p(&[-5, 1])), NormRegion::Beyond);
        // 4.2361 > 2 + sqrt 5 = 4.23607 (approx)
        assert_eq!(norm_region(&p(&[-42361, 10000])), NormRegion::Beyond);
        assert_eq!(norm_region(&p(&[-42360, 10000])), NormRegion::Window);
    }
}
