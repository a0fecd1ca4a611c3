//! Temperley-Lieb-Jones polynomials, their positivity horizon, and explicit
//! coupling sequences on the half line and the two-sided line.

use std::ops::RangeInclusive;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{LazyWeightedGraph, WeightedEvenGraph};
use crate::scalar::Scalar;
use crate::tower::{coupling_check_truncated, CouplingReport};

/// `P_n` with `P_{-1} = P_0 = 1` and `P_{n+1} = P_n − t P_{n−1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JonesPolynomial {
    pub n: i64,
    /// Ascending coefficients in `t`.
    pub coeffs: Vec<BigInt>,
}

pub fn jones_poly(n: i64) -> Result<JonesPolynomial> {
    if n < -1 {
        return Err(Error::InvalidParameter(format!("P_n is defined for n >= -1, got {n}")));
    }
    let mut prev = vec![BigInt::one()];
    let mut cur = vec![BigInt::one()];
    if n == -1 {
        return Ok(JonesPolynomial { n, coeffs: prev });
    }
    for _ in 0..n {
        let mut next = cur.clone();
        next.resize(cur.len().max(prev.len() + 1), BigInt::zero());
        for (k, c) in prev.iter().enumerate() {
            next[k + 1] -= c;
        }
        prev = std::mem::replace(&mut cur, next);
    }
    Ok(JonesPolynomial { n, coeffs: cur })
}

impl JonesPolynomial {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval_exact(&self, t: &BigRational) -> BigRational {
        crate::exact::eval(&self.coeffs, t)
    }

    pub fn eval(&self, t: &Scalar) -> Scalar {
        match t {
            Scalar::Exact(r) => Scalar::Exact(self.eval_exact(r)),
            Scalar::Float(x) => Scalar::Float(
                self.coeffs
                    .iter()
                    .rev()
                    .fold(0.0, |acc, c| acc * x + num_traits::ToPrimitive::to_f64(c).unwrap_or(f64::NAN)),
            ),
        }
    }
}

/// `P_{-1}(λ), P_0(λ), …, P_n(λ)` by the recursion on values.
pub fn values(lambda: &Scalar, n: usize) -> Vec<Scalar> {
    let mut out = vec![Scalar::one(), Scalar::one()];
    let minus_lambda = Scalar::zero().add(&lambda.mul(&Scalar::int(-1)));
    for k in 1..=n {
        let next = out[k].add(&minus_lambda.mul(&out[k - 1]));
        out.push(next);
    }
    out
}

/// Relative size below which a floating `P_n(λ)` counts as zero.
pub const FLOAT_ZERO_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "n")]
pub enum Horizon {
    Finite(usize),
    Unbounded(usize),
}

/// Largest `n ≤ n_max` with `P_k(λ) > 0` for every `k ≤ n`.
pub fn positivity_horizon(lambda: &Scalar, n_max: usize) -> Result<Horizon> {
    if !lambda.is_positive() {
        return Err(Error::InvalidParameter("lambda must be positive".into()));
    }
    if n_max == 0 {
        return Ok(Horizon::Unbounded(0));
    }
    let v = values(lambda, n_max + 1);
    let lam = lambda.to_f64();
    for n in 1..=n_max + 1 {
        // v[n + 1] holds P_n
        let p = &v[n + 1];
        let positive = match p {
            Scalar::Exact(r) => r.is_positive(),
            Scalar::Float(x) => {
                let scale = v[n].to_f64().abs().max(lam * v[n - 1].to_f64().abs());
                *x > FLOAT_ZERO_TOL * scale
            }
        };
        if !positive {
            return Ok(Horizon::Finite(n - 1));
        }
        if n == n_max {
            return Ok(Horizon::Unbounded(n_max));
        }
    }
    Ok(Horizon::Unbounded(n_max))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingSequence {
    pub lambda: Scalar,
    /// `d_n² = P_n(λ) / (λ P_{n−1}(λ))`, exact when `λ` is rational.
    pub squares: Vec<Scalar>,
    pub values: Vec<f64>,
}

impl CouplingSequence {
    /// Largest relative defect of `d_n² λ P_{n−1} = P_n` over the sequence.
    pub fn identity_residual(&self) -> f64 {
        let p = values(&self.lambda, self.squares.len());
        let mut worst = 0.0f64;
        for (n, d2) in self.squares.iter().enumerate() {
            let lhs = d2.mul(&self.lambda).mul(&p[n]);
            let rhs = &p[n + 1];
            let diff = lhs.add(&rhs.mul(&Scalar::int(-1)));
            let rel = match (&diff, rhs) {
                (Scalar::Exact(d), _) if d.is_zero() => 0.0,
                _ => diff.to_f64().abs() / rhs.to_f64().abs(),
            };
            worst = worst.max(rel);
        }
        worst
    }
}

/// `d_n = √(P_n(λ) / (λ P_{n−1}(λ)))` for `n = 0..=n_max`.
pub fn a_inf_couplings(lambda: &Scalar, n_max: usize) -> Result<CouplingSequence> {
    if !lambda.is_positive() {
        return Err(Error::InvalidParameter("lambda must be positive".into()));
    }
    let p = values(lambda, n_max);
    let mut squares = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let (pn, pm) = (&p[n + 1], &p[n]);
        if !pn.is_positive() || (pn.to_f64() <= 0.0) {
            return Err(Error::NonPositivePolynomial { n: n as i64 });
        }
        squares.push(pn.mul(&lambda.mul(pm).recip()));
    }
    let values = squares.iter().map(|s| s.to_f64().sqrt()).collect();
    Ok(CouplingSequence { lambda: lambda.clone(), squares, values })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocallyTrivial {
    /// Smaller root of `t(1 − t) = λ`.
    pub t: Scalar,
    /// `(1 − t) / t`.
    pub ratio: Scalar,
    /// `(n, d_{2n})`.
    pub values: Vec<(i64, Scalar)>,
}

fn exact_sqrt(r: &BigRational) -> Option<BigRational> {
    if r.is_negative() {
        return None;
    }
    let n = r.numer().sqrt();
    let d = r.denom().sqrt();
    (&n * &n == *r.numer() && &d * &d == *r.denom()).then(|| BigRational::new(n, d))
}

/// `d_{2n} = ((1 − t)/t)^n` where `t(1 − t) = λ`, `t < 1/2`.
pub fn locally_trivial_couplings(lambda: &Scalar, n_range: RangeInclusive<i64>) -> Result<LocallyTrivial> {
    let lam = lambda.to_f64();
    let quarter = Scalar::ratio(1, 4);
    let below_quarter = match lambda {
        Scalar::Exact(r) => r < quarter.as_exact().unwrap(),
        Scalar::Float(x) => *x < 0.25,
    };
    if !lambda.is_positive() || !below_quarter {
        return Err(Error::InvalidParameter(format!("need 0 < lambda < 1/4, got {lam}")));
    }
    let exact_t = lambda.as_exact().and_then(|r| {
        let disc = BigRational::one() - BigRational::from_integer(4.into()) * r;
        exact_sqrt(&disc).map(|s| (BigRational::one() - s) / BigRational::from_integer(2.into()))
    });
    let t = match exact_t {
        Some(t) => Scalar::Exact(t),
        None => Scalar::Float((1.0 - (1.0 - 4.0 * lam).sqrt()) / 2.0),
    };
    let ratio = Scalar::one().add(&t.mul(&Scalar::int(-1))).mul(&t.recip());
    let values = n_range.map(|n| (n, ratio.pow(n as i32))).collect();
    Ok(LocallyTrivial { t, ratio, values })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HalfLineDiagnostic {
    pub radius: usize,
    /// Couplings of the closed formula placed as `d_M = (d_0, d_2, …)` on
    /// even vertices and `d_N = (d_1, d_3, …)` on odd vertices.
    pub formula: CouplingReport,
    /// Markov weights of the half line checked the same way.
    pub eigen_weights: CouplingReport,
    pub note: &'static str,
}

pub const HALF_LINE_NOTE: &str = "the closed-form couplings are bounded in n while positive solutions of the \
eigen relation on the half line grow; residuals are reported, not asserted";

/// Runs the coupling relations on the half-line truncation against both the
/// closed-form couplings and the Markov weights.
pub fn a_inf_diagnostic(lambda: &Scalar, radius: usize) -> Result<HalfLineDiagnostic> {
    let lazy = LazyWeightedGraph::a_infinity(lambda.recip())?;
    let tr = lazy.truncate(radius)?;
    let n_odd = tr.graph.n_odd();
    let n_even = tr.graph.n_even();
    let seq = a_inf_couplings(lambda, 2 * n_odd.max(n_even) + 1)?;
    let d_m: Vec<f64> = (0..n_even).map(|k| seq.values[2 * k]).collect();
    let d_n: Vec<f64> = (0..n_odd).map(|k| seq.values[2 * k + 1]).collect();
    let index = lambda.recip().to_f64();
    let formula = coupling_check_truncated(&tr, &d_m, &d_n, index, 1e-8)?;
    let t: Vec<f64> = tr
        .graph
        .even_labels()
        .iter()
        .map(|l| lazy.weight(l))
        .collect::<Result<_>>()?;
    let s = tr.graph.apply(&t);
    let eigen_weights = coupling_check_truncated(&tr, &t, &s, index, 1e-8)?;
    Ok(HalfLineDiagnostic { radius, formula, eigen_weights, note: HALF_LINE_NOTE })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn poly(c: &[i64]) -> Vec<BigInt> {
        c.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn small_polynomials() {
        assert_eq!(jones_poly(-1).unwrap().coeffs, poly(&[1]));
        assert_eq!(jones_poly(0).unwrap().coeffs, poly(&[1]));
        assert_eq!(jones_poly(1).unwrap().coeffs, poly(&[1, -1]));
        assert_eq!(jones_poly(2).unwrap().coeffs, poly(&[1, -2]));
        assert_eq!(jones_poly(3).unwrap().coeffs, poly(&[1, -3, 1]));
        assert!(jones_poly(-2).is_err());
    }

    #[test]
    fn quarter_closed_form() {
        let q = BigRational::new(1.into(), 4.into());
        for n in 0..=30i64 {
            let expected = BigRational::new((n + 2).into(), BigInt::from(2).pow((n + 1) as u32));
            assert_eq!(jones_poly(n).unwrap().eval_exact(&q), expected);
        }
    }

    #[test]
    fn horizons() {
        assert_eq!(positivity_horizon(&Scalar::ratio(1, 3), 100).unwrap(), Horizon::Finite(3));
        assert_eq!(positivity_horizon(&Scalar::ratio(1, 2), 100).unwrap(), Horizon::Finite(1));
        assert_eq!(positivity_horizon(&Scalar::ratio(1, 4), 500).unwrap(), Horizon::Unbounded(500));
        assert_eq!(positivity_horizon(&Scalar::Float(0.25), 500).unwrap(), Horizon::Unbounded(500));
        assert_eq!(positivity_horizon(&Scalar::Float(1.0 / 3.0), 100).unwrap(), Horizon::Finite(3));
    }

    #[test]
    fn horizon_is_finite_at_coxeter_values() {
        for n in 4..40u64 {
            let lam = 1.0 / crate::spectral::coxeter_value(n);
            let h = positivity_horizon(&Scalar::Float(lam), 200).unwrap();
            assert_eq!(h, Horizon::Finite((n - 3) as usize), "n = {n}");
            assert!(crate::spectral::jones_spectrum_member(1.0 / lam, 1e-9).in_spectrum());
        }
    }

    #[test]
    fn half_line_couplings() {
        let s = a_inf_couplings(&Scalar::ratio(1, 4), 10).unwrap();
        assert_eq!(s.squares[0], Scalar::int(4));
        assert_eq!(s.squares[1], Scalar::int(3));
        assert_eq!(s.squares[2], Scalar::ratio(8, 3));
        assert!((s.values[1] - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.identity_residual(), 0.0);
        for lam in [Scalar::ratio(1, 5), Scalar::Float(0.1)] {
            let s = a_inf_couplings(&lam, 40).unwrap();
            assert!((s.values[0] - lam.to_f64().recip().sqrt()).abs() < 1e-12);
            assert!(s.identity_residual() < 1e-12);
        }
        assert!(matches!(a_inf_couplings(&Scalar::ratio(1, 3), 10), Err(Error::NonPositivePolynomial { n: 4 })));
    }

    #[test]
    fn locally_trivial_examples() {
        let lt = locally_trivial_couplings(&Scalar::ratio(21, 100), -1..=2).unwrap();
        assert_eq!(lt.t, Scalar::ratio(3, 10));
        assert_eq!(lt.values[0], (-1, Scalar::ratio(3, 7)));
        assert_eq!(lt.values[1], (0, Scalar::one()));
        assert_eq!(lt.values[2], (1, Scalar::ratio(7, 3)));
        let f = locally_trivial_couplings(&Scalar::Float(0.21), 1..=1).unwrap();
        assert!((f.values[0].1.to_f64() - 7.0 / 3.0).abs() < 1e-12);
        assert!(locally_trivial_couplings(&Scalar::ratio(1, 4), 0..=0).is_err());
        assert!(locally_trivial_couplings(&Scalar::Float(0.3), 0..=0).is_err());
    }

    #[test]
    fn diagnostic_runs() {
        let d = a_inf_diagnostic(&Scalar::ratio(1, 4), 16).unwrap();
        assert!(d.eigen_weights.pass);
        assert!(d.formula.residual_eigen.is_finite());
    }

    proptest! {
        #[test]
        fn coefficient_pattern(n in 1i64..=64) {
            let p = jones_poly(n).unwrap();
            prop_assert_eq!(p.coeffs[0].clone(), BigInt::one());
            prop_assert_eq!(p.coeffs[1].clone(), BigInt::from(-n));
            prop_assert_eq!(p.degree() as i64, (n + 1) / 2);
            for (k, c) in p.coeffs.iter().enumerate() {
                prop_assert!(!c.is_zero());
                prop_assert_eq!(c.is_positive(), k % 2 == 0);
            }
        }

        #[test]
        fn decreasing_below_quarter(num in 1i64..=25) {
            let lam = Scalar::ratio(num, 100);
            let v = values(&lam, 500);
            for k in 1..v.len() - 1 {
                prop_assert!(v[k + 1].is_positive());
                prop_assert!(v[k + 1].as_exact().unwrap() < v[k].as_exact().unwrap());
            }
        }

        #[test]
        fn geometric_couplings_solve_two_sided_relation(num in 1i64..=24) {
            let lam = Scalar::ratio(num, 100);
            let lt = locally_trivial_couplings(&lam, 0..=0).unwrap();
            let r = lt.ratio.to_f64();
            let li = lam.recip().to_f64();
            prop_assert!((r + 1.0 / r + 2.0 - li).abs() < 1e-9 * li);
            if let (Some(t), Some(l)) = (lt.t.as_exact(), lam.as_exact()) {
                prop_assert_eq!(t * (BigRational::one() - t), l.clone());
            }
        }
    }
}
