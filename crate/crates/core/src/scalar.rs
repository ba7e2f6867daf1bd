//! Exact scalar coefficients: rationals, or Laurent polynomials in declared parameters.
//!
//! A [`Ring`] fixes the parameter list once (`Q` or `Q[t, tau, ...]`); every [`Scalar`]
//! carries a handle to its ring. Arithmetic across distinct rings panics: user input is
//! validated at parse time, so a mismatch is always a programming error.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num::bigint::BigInt;
use num::integer::gcd;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

use crate::error::VqgError;

#[derive(Debug)]
struct RingCtx {
    params: Vec<String>,
}

/// Shared handle to a coefficient ring.
#[derive(Clone, Debug)]
pub struct Ring(Arc<RingCtx>);

impl Ring {
    /// Plain rationals, no parameters.
    pub fn rationals() -> Ring {
        Ring(Arc::new(RingCtx { params: Vec::new() }))
    }

    /// Rationals extended by Laurent parameters, e.g. `Q[t]`.
    pub fn with_params(names: &[&str]) -> Result<Ring, VqgError> {
        let mut params: Vec<String> = Vec::new();
        for n in names {
            if params.iter().any(|p| p == n) {
                return Err(VqgError::Invalid(format!("duplicate parameter `{n}`")));
            }
            params.push((*n).to_string());
        }
        Ok(Ring(Arc::new(RingCtx { params })))
    }

    pub fn params(&self) -> &[String] {
        &self.0.params
    }

    pub fn same(&self, other: &Ring) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.params == other.0.params
    }

    pub(crate) fn assert_same(&self, other: &Ring) {
        assert!(
            self.same(other),
            "ring mismatch: Q[{}] vs Q[{}]",
            self.0.params.join(","),
            other.0.params.join(",")
        );
    }

    pub fn zero(&self) -> Scalar {
        Scalar {
            ring: self.clone(),
            repr: Repr::Small(0, 1),
        }
    }

    pub fn one(&self) -> Scalar {
        self.int(1)
    }

    pub fn int(&self, n: i64) -> Scalar {
        Scalar {
            ring: self.clone(),
            repr: Repr::Small(n, 1),
        }
    }

    pub fn rat(&self, num: i64, den: i64) -> Scalar {
        assert!(den != 0, "zero denominator");
        Scalar {
            ring: self.clone(),
            repr: small_norm(num as i128, den as i128),
        }
    }

    pub fn big(&self, q: BigRational) -> Scalar {
        Scalar {
            ring: self.clone(),
            repr: big_norm(q),
        }
    }

    /// A declared parameter as a scalar.
    pub fn param(&self, name: &str) -> Result<Scalar, VqgError> {
        let i = self
            .0
            .params
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| VqgError::UnknownParameter(name.to_string()))?;
        let mut e = vec![0i64; self.0.params.len()];
        e[i] = 1;
        let mut terms = BTreeMap::new();
        terms.insert(e, BigRational::one());
        Ok(Scalar {
            ring: self.clone(),
            repr: Repr::Poly(terms),
        })
    }

    /// Monomial `q * params^exps`.
    pub fn monomial(&self, q: BigRational, exps: Vec<i64>) -> Scalar {
        assert_eq!(exps.len(), self.0.params.len(), "parameter exponent arity");
        let repr = if q.is_zero() || exps.iter().all(|&k| k == 0) {
            big_norm(q)
        } else {
            let mut terms = BTreeMap::new();
            terms.insert(exps, q);
            Repr::Poly(terms)
        };
        Scalar {
            ring: self.clone(),
            repr,
        }
    }
}

impl PartialEq for Ring {
    fn eq(&self, other: &Self) -> bool {
        self.same(other)
    }
}
impl Eq for Ring {}

/// Canonical storage. `Small` is reduced with positive denominator (zero is `(0, 1)`);
/// `Big` holds values that do not fit `Small`; `Poly` has no zero coefficients and at
/// least one key with a nonzero exponent. One representation per value, so equality is
/// structural.
#[derive(Clone, Debug)]
enum Repr {
    Small(i64, i64),
    Big(BigRational),
    Poly(BTreeMap<Vec<i64>, BigRational>),
}

fn small_norm(n: i128, d: i128) -> Repr {
    let (mut n, mut d) = if d < 0 { (-n, -d) } else { (n, d) };
    if n == 0 {
        return Repr::Small(0, 1);
    }
    let g = gcd(n.unsigned_abs(), d as u128) as i128;
    n /= g;
    d /= g;
    match (i64::try_from(n), i64::try_from(d)) {
        (Ok(n), Ok(d)) => Repr::Small(n, d),
        _ => Repr::Big(BigRational::new(BigInt::from(n), BigInt::from(d))),
    }
}

fn big_norm(q: BigRational) -> Repr {
    match (q.numer().to_i64(), q.denom().to_i64()) {
        (Some(n), Some(d)) => Repr::Small(n, d),
        _ => Repr::Big(q),
    }
}

fn small_rat(n: i64, d: i64) -> BigRational {
    BigRational::new_raw(BigInt::from(n), BigInt::from(d))
}

fn rat_of(r: &Repr) -> Option<BigRational> {
    match r {
        Repr::Small(n, d) => Some(small_rat(*n, *d)),
        Repr::Big(q) => Some(q.clone()),
        Repr::Poly(_) => None,
    }
}

fn map_norm(mut m: BTreeMap<Vec<i64>, BigRational>) -> Repr {
    m.retain(|_, q| !q.is_zero());
    if m.len() == 1 {
        let pure = m.keys().next().unwrap().iter().all(|&k| k == 0);
        if pure {
            let (_, q) = m.into_iter().next().unwrap();
            return big_norm(q);
        }
    }
    if m.is_empty() {
        return Repr::Small(0, 1);
    }
    Repr::Poly(m)
}

/// Exact element of a [`Ring`]: a finite sum of rational multiples of parameter monomials.
///
/// Plain rationals stay in machine words whenever they fit; the exponent-keyed map only
/// appears once a parameter actually occurs, and its stored coefficients are never zero.
#[derive(Clone, Debug)]
pub struct Scalar {
    ring: Ring,
    repr: Repr,
}

impl Scalar {
    fn np(&self) -> usize {
        self.ring.params().len()
    }

    fn to_map(&self) -> BTreeMap<Vec<i64>, BigRational> {
        match &self.repr {
            Repr::Poly(m) => m.clone(),
            r => {
                let mut m = BTreeMap::new();
                let q = rat_of(r).unwrap();
                if !q.is_zero() {
                    m.insert(vec![0; self.np()], q);
                }
                m
            }
        }
    }

    pub fn ring(&self) -> &Ring {
        &self.ring
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.repr, Repr::Small(0, _))
    }

    pub fn is_one(&self) -> bool {
        matches!(self.repr, Repr::Small(1, 1))
    }

    /// (exponents, coefficient) pairs in exponent order.
    pub fn terms(&self) -> Vec<(Vec<i64>, BigRational)> {
        match &self.repr {
            Repr::Poly(m) => m.iter().map(|(e, q)| (e.clone(), q.clone())).collect(),
            _ if self.is_zero() => Vec::new(),
            r => vec![(vec![0; self.np()], rat_of(r).unwrap())],
        }
    }

    pub fn num_terms(&self) -> usize {
        match &self.repr {
            Repr::Small(0, _) => 0,
            Repr::Small(..) | Repr::Big(_) => 1,
            Repr::Poly(m) => m.len(),
        }
    }

    /// The rational content if the scalar is constant in all parameters.
    pub fn as_rational(&self) -> Option<BigRational> {
        rat_of(&self.repr)
    }

    pub fn add_inplace(&mut self, other: &Scalar) {
        self.ring.assert_same(&other.ring);
        self.repr = match (&self.repr, &other.repr) {
            (Repr::Small(a, b), Repr::Small(c, d)) => {
                let (a, b, c, d) = (*a as i128, *b as i128, *c as i128, *d as i128);
                match (a * d).checked_add(c * b) {
                    Some(n) => small_norm(n, b * d),
                    None => big_norm(
                        BigRational::new(BigInt::from(a), BigInt::from(b))
                            + BigRational::new(BigInt::from(c), BigInt::from(d)),
                    ),
                }
            }
            (Repr::Poly(_), _) | (_, Repr::Poly(_)) => {
                let mut m = self.to_map();
                for (e, q) in other.to_map() {
                    let entry = m.entry(e).or_insert_with(BigRational::zero);
                    *entry += q;
                }
                map_norm(m)
            }
            (x, y) => big_norm(rat_of(x).unwrap() + rat_of(y).unwrap()),
        };
    }

    pub fn add(&self, other: &Scalar) -> Scalar {
        let mut out = self.clone();
        out.add_inplace(other);
        out
    }

    pub fn neg_inplace(&mut self) {
        self.repr = match &self.repr {
            Repr::Small(n, d) => small_norm(-(*n as i128), *d as i128),
            Repr::Big(q) => big_norm(-q.clone()),
            Repr::Poly(m) => Repr::Poly(m.iter().map(|(e, q)| (e.clone(), -q.clone())).collect()),
        };
    }

    pub fn neg(&self) -> Scalar {
        let mut out = self.clone();
        out.neg_inplace();
        out
    }

    pub fn sub(&self, other: &Scalar) -> Scalar {
        let mut out = self.clone();
        out.add_inplace(&other.neg());
        out
    }

    pub fn mul(&self, other: &Scalar) -> Scalar {
        self.ring.assert_same(&other.ring);
        let repr = match (&self.repr, &other.repr) {
            (Repr::Small(a, b), Repr::Small(c, d)) => {
                small_norm(*a as i128 * *c as i128, *b as i128 * *d as i128)
            }
            (Repr::Poly(_), _) | (_, Repr::Poly(_)) => {
                let ma = self.to_map();
                let mb = other.to_map();
                let mut m: BTreeMap<Vec<i64>, BigRational> = BTreeMap::new();
                for (ea, qa) in &ma {
                    for (eb, qb) in &mb {
                        let e: Vec<i64> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                        let entry = m.entry(e).or_insert_with(BigRational::zero);
                        *entry += qa * qb;
                    }
                }
                map_norm(m)
            }
            (x, y) => big_norm(rat_of(x).unwrap() * rat_of(y).unwrap()),
        };
        Scalar {
            ring: self.ring.clone(),
            repr,
        }
    }

    pub fn pow(&self, n: u32) -> Scalar {
        let mut out = self.ring.one();
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    pub fn scale_big(&mut self, q: &BigRational) {
        if q.is_zero() {
            self.repr = Repr::Small(0, 1);
            return;
        }
        self.repr = match &self.repr {
            Repr::Small(n, d) => match (q.numer().to_i64(), q.denom().to_i64()) {
                (Some(qn), Some(qd)) => {
                    small_norm(*n as i128 * qn as i128, *d as i128 * qd as i128)
                }
                _ => big_norm(small_rat(*n, *d) * q),
            },
            Repr::Big(b) => big_norm(b * q),
            Repr::Poly(m) => Repr::Poly(m.iter().map(|(e, c)| (e.clone(), c * q)).collect()),
        };
    }

    pub fn scaled(&self, q: &BigRational) -> Scalar {
        let mut out = self.clone();
        out.scale_big(q);
        out
    }

    /// Inverse of a single-monomial scalar; anything else is not a unit here.
    pub fn invert(&self) -> Result<Scalar, VqgError> {
        let repr = match &self.repr {
            Repr::Small(0, _) => {
                return Err(VqgError::NonInvertibleScalar(self.to_string()));
            }
            Repr::Small(n, d) => small_norm(*d as i128, *n as i128),
            Repr::Big(q) => big_norm(q.clone().recip()),
            Repr::Poly(m) if m.len() == 1 => {
                let (e, q) = m.iter().next().unwrap();
                let mut out = BTreeMap::new();
                out.insert(e.iter().map(|k| -k).collect::<Vec<i64>>(), q.clone().recip());
                Repr::Poly(out)
            }
            Repr::Poly(_) => {
                return Err(VqgError::NonInvertibleScalar(self.to_string()));
            }
        };
        Ok(Scalar {
            ring: self.ring.clone(),
            repr,
        })
    }

    /// Renders one parameter monomial without its rational coefficient: `t`, `t^2*tau^-1`, "" for 1.
    fn param_part(&self, exps: &[i64]) -> String {
        let mut parts = Vec::new();
        for (name, &k) in self.ring.params().iter().zip(exps) {
            if k == 0 {
                continue;
            }
            if k == 1 {
                parts.push(name.clone());
            } else {
                parts.push(format!("{name}^{k}"));
            }
        }
        parts.join("*")
    }

    /// (is_negative, rendered magnitude) for a standalone scalar display:
    /// rational part elided when it is +/-1 in front of a parameter monomial.
    fn display_terms(&self) -> Vec<(bool, String)> {
        self.terms()
            .into_iter()
            .map(|(e, q)| {
                let neg = q.is_negative();
                let mag = q.abs();
                let pp = self.param_part(&e);
                let body = if pp.is_empty() {
                    format!("{mag}")
                } else if mag.is_one() {
                    pp
                } else {
                    format!("{mag}*{pp}")
                };
                (neg, body)
            })
            .collect()
    }

    /// (is_negative, body) when used as the coefficient of a series term.
    ///
    /// Single-term scalars keep the rational explicit (`1`, `2*t`, `1/2*t^2`);
    /// multi-term scalars are parenthesized and absorb their own signs.
    pub(crate) fn series_coeff_body(&self) -> (bool, String) {
        let ts = self.terms();
        if ts.len() == 1 {
            let (e, q) = &ts[0];
            let neg = q.is_negative();
            let mag = q.abs();
            let pp = self.param_part(e);
            let body = if pp.is_empty() {
                format!("{mag}")
            } else {
                format!("{mag}*{pp}")
            };
            (neg, body)
        } else {
            (false, format!("({self})"))
        }
    }
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        if !self.ring.same(&other.ring) {
            return false;
        }
        match (&self.repr, &other.repr) {
            (Repr::Small(a, b), Repr::Small(c, d)) => a == c && b == d,
            (Repr::Big(x), Repr::Big(y)) => x == y,
            (Repr::Poly(x), Repr::Poly(y)) => x == y,
            // distinct canonical variants never hold the same value
            _ => false,
        }
    }
}
impl Eq for Scalar {}

pub(crate) fn join_signed_terms(terms: &[(bool, String)]) -> String {
    if terms.is_empty() {
        return "0".to_string();
    }
    let mut out = String::new();
    for (i, (neg, body)) in terms.iter().enumerate() {
        if i == 0 {
            if *neg {
                out.push('-');
            }
        } else if *neg {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        out.push_str(body);
    }
    out
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", join_signed_terms(&self.display_terms()))
    }
}

/// Generalized binomial coefficient C(k, i) for integer k (possibly negative).
pub fn gen_binomial(k: i64, i: u64) -> BigRational {
    let mut num = BigInt::one();
    for j in 0..i {
        num *= BigInt::from(k) - BigInt::from(j);
    }
    let mut den = BigInt::one();
    for j in 1..=i {
        den *= BigInt::from(j);
    }
    BigRational::new(num, den)
}

/// n! as a rational.
pub fn factorial(n: u64) -> BigRational {
    let mut out = BigInt::one();
    for j in 2..=n {
        out *= BigInt::from(j);
    }
    BigRational::from_integer(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_arithmetic_reduces() {
        let r = Ring::rationals();
        let a = r.rat(1, 2);
        let b = r.rat(1, 3);
        let s = a.add(&b);
        assert_eq!(s, r.rat(5, 6));
        assert_eq!(a.mul(&b), r.rat(1, 6));
        assert_eq!(a.sub(&a), r.zero());
    }

    #[test]
    fn param_ring_collects_terms() {
        let r = Ring::with_params(&["t"]).unwrap();
        let t = r.param("t").unwrap();
        let p = r.one().add(&t.scaled(&BigRational::from_integer(2.into())));
        assert_eq!(p.to_string(), "1 + 2*t");
        let q = r.int(3).sub(&t.scaled(&BigRational::new(1.into(), 2.into())));
        assert_eq!(q.to_string(), "3 - 1/2*t");
        assert_eq!(t.mul(&t).to_string(), "t^2");
        assert_eq!(t.neg().to_string(), "-t");
    }

    #[test]
    fn unknown_param_rejected() {
        let r = Ring::with_params(&["t"]).unwrap();
        assert!(matches!(r.param("s"), Err(VqgError::UnknownParameter(_))));
    }

    #[test]
    fn invert_monomials_only() {
        let r = Ring::with_params(&["t"]).unwrap();
        let t = r.param("t").unwrap();
        let inv = t.scaled(&BigRational::from_integer(2.into())).invert().unwrap();
        assert_eq!(inv.mul(&t.scaled(&BigRational::from_integer(2.into()))), r.one());
        let p = r.one().add(&t);
        assert!(p.invert().is_err());
    }

    #[test]
    fn representation_collapses_to_plain_rationals() {
        let r = Ring::with_params(&["t"]).unwrap();
        let t = r.param("t").unwrap();
        // (1 + t) - t must compare equal to a directly built 1
        let p = r.one().add(&t).sub(&t);
        assert_eq!(p, r.one());
        assert!(p.as_rational().is_some());
        // parameter-free products of huge and tiny values round-trip through the wide repr
        let huge = r.big(BigRational::from_integer(BigInt::from(i64::MAX)));
        let double = huge.add(&huge);
        assert_eq!(double.sub(&huge), huge);
        assert_eq!(
            double.scaled(&BigRational::new(1.into(), 2.into())),
            huge
        );
        // i64::MIN negation leaves the machine range and must still compare by value
        let edge = r.int(i64::MIN);
        assert_eq!(edge.neg().neg(), edge);
        assert_eq!(
            edge.neg().as_rational().unwrap(),
            -BigRational::from_integer(BigInt::from(i64::MIN))
        );
    }

    #[test]
    fn generalized_binomial_values() {
        assert_eq!(gen_binomial(4, 2), BigRational::from_integer(6.into()));
        assert_eq!(gen_binomial(-1, 3), BigRational::from_integer((-1).into()));
        assert_eq!(gen_binomial(-2, 2), BigRational::from_integer(3.into()));
        assert_eq!(gen_binomial(3, 5), BigRational::zero());
        // C(1/..) not needed: k integral only.
        assert_eq!(factorial(4), BigRational::from_integer(24.into()));
    }
}
