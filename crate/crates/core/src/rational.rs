//! Exact rational scalars and the `"p/q"` text encoding used in scenario files.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

/// Arbitrary-precision rational number; every probability and process value uses it.
pub type Q = BigRational;

/// A column vector of rationals.
pub type Vector = Vec<Q>;

pub fn int(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn ratio(p: i64, q: i64) -> Q {
    Q::new(BigInt::from(p), BigInt::from(q))
}

pub fn zero() -> Q {
    Q::zero()
}

pub fn one() -> Q {
    Q::one()
}

/// `2^n` as a rational.
pub fn pow2(n: usize) -> Q {
    Q::from_integer(BigInt::one() << n)
}

/// Parses `"p/q"`, `"p"` or `"-p/q"`.
pub fn parse_q(text: &str) -> Result<Q> {
    let bad = || Error::Parse(format!("not a rational: {text:?}"));
    let text = text.trim();
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text, "1"),
    };
    let num: BigInt = num.parse().map_err(|_| bad())?;
    let den: BigInt = den.parse().map_err(|_| bad())?;
    if den.is_zero() {
        return Err(bad());
    }
    Ok(Q::new(num, den))
}

/// Formats as `"p/q"`; integers are written `"p/1"` so the encoding is uniform.
pub fn format_q(x: &Q) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

pub fn is_zero_vec(v: &[Q]) -> bool {
    v.iter().all(Zero::is_zero)
}

pub fn dot(a: &[Q], b: &[Q]) -> Q {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l1_norm(v: &[Q]) -> Q {
    v.iter().map(|x| x.abs()).sum()
}

/// Bounded truncation `min(|x|_1, 1)`; nonzero exactly when `x` is.
pub fn truncation(v: &[Q]) -> Q {
    let n = l1_norm(v);
    if n > Q::one() {
        Q::one()
    } else {
        n
    }
}

pub fn add_assign(acc: &mut [Q], v: &[Q]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += x;
    }
}

pub fn sub(a: &[Q], b: &[Q]) -> Vector {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(v: &[Q], c: &Q) -> Vector {
    v.iter().map(|x| x * c).collect()
}

/// Rescales a nonzero vector to the primitive integer vector on the same ray whose
/// first nonzero entry is positive.
pub fn primitive_integer(v: &[Q]) -> Vector {
    let lcm = v
        .iter()
        .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    let ints: Vec<BigInt> = v.iter().map(|x| (x * Q::from_integer(lcm.clone())).to_integer()).collect();
    let gcd = ints.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
    if gcd.is_zero() {
        return v.to_vec();
    }
    let sign = match ints.iter().find(|x| !x.is_zero()) {
        Some(x) if x.is_negative() => -BigInt::one(),
        _ => BigInt::one(),
    };
    ints.into_iter()
        .map(|x| Q::from_integer(x / &gcd * &sign))
        .collect()
}
