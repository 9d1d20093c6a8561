//! Exact rational functions in the coupling `λ = 1/γ`.
//!
//! A [`Coeff`] is `num(λ) / den(λ)` with rational coefficients, kept reduced:
//! numerator and denominator are coprime and the denominator is monic.
//! Zero is the empty numerator over the constant denominator `1`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

type Q = BigRational;

/// Dense univariate polynomial over Q, ascending powers, no trailing zeros.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct UPoly(Vec<Q>);

impl UPoly {
    fn zero() -> Self {
        UPoly(Vec::new())
    }

    fn one() -> Self {
        UPoly(vec![Q::one()])
    }

    fn trim(mut self) -> Self {
        while self.0.last().is_some_and(|c| c.is_zero()) {
            self.0.pop();
        }
        self
    }

    fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    fn is_one(&self) -> bool {
        self.0.len() == 1 && self.0[0].is_one()
    }

    fn degree(&self) -> Option<usize> {
        self.0.len().checked_sub(1)
    }

    fn lead(&self) -> &Q {
        self.0.last().expect("leading coefficient of zero polynomial")
    }

    fn add(&self, o: &UPoly) -> UPoly {
        let n = self.0.len().max(o.0.len());
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let a = self.0.get(k).cloned().unwrap_or_else(Q::zero);
            let b = o.0.get(k).cloned().unwrap_or_else(Q::zero);
            out.push(a + b);
        }
        UPoly(out).trim()
    }

    fn neg(&self) -> UPoly {
        UPoly(self.0.iter().map(|c| -c).collect())
    }

    fn mul(&self, o: &UPoly) -> UPoly {
        if self.is_zero() || o.is_zero() {
            return UPoly::zero();
        }
        let mut out = vec![Q::zero(); self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        UPoly(out).trim()
    }

    fn scale(&self, c: &Q) -> UPoly {
        UPoly(self.0.iter().map(|x| x * c).collect()).trim()
    }

    fn divrem(&self, d: &UPoly) -> (UPoly, UPoly) {
        let dd = d.degree().expect("division by zero polynomial");
        let mut rem = self.0.clone();
        if self.0.len() <= dd {
            return (UPoly::zero(), self.clone());
        }
        let mut quot = vec![Q::zero(); self.0.len() - dd];
        let lead = d.lead().clone();
        for k in (0..quot.len()).rev() {
            let c = &rem[k + dd] / &lead;
            if c.is_zero() {
                continue;
            }
            for (j, dj) in d.0.iter().enumerate() {
                rem[k + j] -= &c * dj;
            }
            quot[k] = c;
        }
        rem.truncate(dd);
        (UPoly(quot).trim(), UPoly(rem).trim())
    }

    fn monic_gcd(a: &UPoly, b: &UPoly) -> UPoly {
        let (mut x, mut y) = (a.clone(), b.clone());
        while !y.is_zero() {
            let (_, r) = x.divrem(&y);
            x = y;
            y = r;
        }
        if x.is_zero() {
            return UPoly::one();
        }
        let l = x.lead().clone();
        x.scale(&(Q::one() / l))
    }

    fn eval(&self, at: &Q) -> Q {
        let mut acc = Q::zero();
        for c in self.0.iter().rev() {
            acc = acc * at + c;
        }
        acc
    }
}

/// Exact coefficient: a reduced rational function of `λ`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Coeff {
    num: UPoly,
    den: UPoly,
}

impl Coeff {
    pub fn zero() -> Self {
        Coeff { num: UPoly::zero(), den: UPoly::one() }
    }

    pub fn one() -> Self {
        Coeff::int(1)
    }

    pub fn int(n: i64) -> Self {
        Coeff::rational(n, 1)
    }

    pub fn rational(n: i64, d: i64) -> Self {
        assert!(d != 0, "zero denominator");
        let c = Q::new(BigInt::from(n), BigInt::from(d));
        Coeff { num: UPoly(vec![c]).trim(), den: UPoly::one() }
    }

    fn from_q(c: Q) -> Self {
        Coeff { num: UPoly(vec![c]).trim(), den: UPoly::one() }
    }

    /// The formal coupling `λ`.
    pub fn lambda() -> Self {
        Coeff { num: UPoly(vec![Q::zero(), Q::one()]), den: UPoly::one() }
    }

    /// `c · λ^k` for a rational `c`.
    pub fn lambda_pow(c: Coeff, k: i32) -> Self {
        let mut out = c;
        let l = Coeff::lambda();
        for _ in 0..k.unsigned_abs() {
            out = if k > 0 { &out * &l } else { &out / &l };
        }
        out
    }

    fn from_parts(num: UPoly, den: UPoly) -> Self {
        if num.is_zero() {
            return Coeff::zero();
        }
        if den.is_one() {
            return Coeff { num, den };
        }
        let g = UPoly::monic_gcd(&num, &den);
        let (mut n, mut d) = if g.is_one() {
            (num, den)
        } else {
            (num.divrem(&g).0, den.divrem(&g).0)
        };
        let l = d.lead().clone();
        if !l.is_one() {
            let inv = Q::one() / l;
            n = n.scale(&inv);
            d = d.scale(&inv);
        }
        Coeff { num: n, den: d }
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.num.is_one() && self.den.is_one()
    }

    /// True when the coefficient does not depend on `λ`.
    pub fn is_constant(&self) -> bool {
        self.den.is_one() && self.num.0.len() <= 1
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.is_one()
    }

    pub fn inverse(&self) -> Option<Coeff> {
        if self.is_zero() {
            None
        } else {
            Some(Coeff::from_parts(self.den.clone(), self.num.clone()))
        }
    }

    /// Exact substitution `λ = 0`. `None` when the function has a pole there.
    pub fn at_lambda_zero(&self) -> Option<Coeff> {
        let d = self.den.eval(&Q::zero());
        if d.is_zero() {
            return None;
        }
        Some(Coeff::from_q(self.num.eval(&Q::zero()) / d))
    }

    /// Evaluate at a rational point, `None` at a pole.
    pub fn eval(&self, n: i64, d: i64) -> Option<(BigInt, BigInt)> {
        let at = Q::new(BigInt::from(n), BigInt::from(d));
        let den = self.den.eval(&at);
        if den.is_zero() {
            return None;
        }
        let v = self.num.eval(&at) / den;
        Some((v.numer().clone(), v.denom().clone()))
    }

    /// Ascending numerator and denominator coefficients as `(p, q)` pairs.
    pub fn parts(&self) -> (Vec<(BigInt, BigInt)>, Vec<(BigInt, BigInt)>) {
        let f = |p: &UPoly| p.0.iter().map(|c| (c.numer().clone(), c.denom().clone())).collect();
        (f(&self.num), f(&self.den))
    }

    /// Sign of the leading numerator coefficient (used for pretty printing).
    pub fn is_negative(&self) -> bool {
        self.num.0.last().is_some_and(|c| c.is_negative())
    }

    /// Render with the coupling written as `1/param`, e.g. `-2/gamma`.
    pub fn render(&self, param: &str) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let poly = |p: &UPoly| -> String {
            let mut parts: Vec<String> = Vec::new();
            for (k, c) in p.0.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                let mag = c.abs();
                let sign = if c.is_negative() { "-" } else { "+" };
                let body = match k {
                    0 => fmt_q(&mag),
                    _ => {
                        let pw = if k == 1 { param.to_string() } else { format!("{param}^{k}") };
                        if mag.is_one() {
                            format!("1/{pw}")
                        } else if mag.denom().is_one() {
                            format!("{}/{pw}", mag.numer())
                        } else {
                            format!("{}/({}*{pw})", mag.numer(), mag.denom())
                        }
                    }
                };
                parts.push(format!("{sign}{body}"));
            }
            let mut s = parts.join("");
            if let Some(rest) = s.strip_prefix('+') {
                s = rest.to_string();
            }
            s
        };
        let n = poly(&self.num);
        if self.den.is_one() {
            return n;
        }
        format!("({n})/({})", poly(&self.den))
    }
}

fn fmt_q(c: &Q) -> String {
    if c.denom().is_one() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl Default for Coeff {
    fn default() -> Self {
        Coeff::zero()
    }
}

impl fmt::Display for Coeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render("gamma"))
    }
}

impl PartialOrd for Coeff {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Coeff {
    fn cmp(&self, other: &Self) -> Ordering {
        let key = |p: &UPoly| p.0.clone();
        key(&self.num).cmp(&key(&other.num)).then_with(|| key(&self.den).cmp(&key(&other.den)))
    }
}

impl<'a> Add<&'a Coeff> for &'a Coeff {
    type Output = Coeff;
    fn add(self, o: &Coeff) -> Coeff {
        if self.is_zero() {
            return o.clone();
        }
        if o.is_zero() {
            return self.clone();
        }
        if self.den == o.den {
            return Coeff::from_parts(self.num.add(&o.num), self.den.clone());
        }
        Coeff::from_parts(
            self.num.mul(&o.den).add(&o.num.mul(&self.den)),
            self.den.mul(&o.den),
        )
    }
}

impl<'a> Sub<&'a Coeff> for &'a Coeff {
    type Output = Coeff;
    fn sub(self, o: &Coeff) -> Coeff {
        self + &(-o)
    }
}

impl Neg for &Coeff {
    type Output = Coeff;
    fn neg(self) -> Coeff {
        Coeff { num: self.num.neg(), den: self.den.clone() }
    }
}

impl Neg for Coeff {
    type Output = Coeff;
    fn neg(self) -> Coeff {
        -&self
    }
}

impl<'a> Mul<&'a Coeff> for &'a Coeff {
    type Output = Coeff;
    fn mul(self, o: &Coeff) -> Coeff {
        if self.is_zero() || o.is_zero() {
            return Coeff::zero();
        }
        if self.den.is_one() && o.den.is_one() {
            return Coeff { num: self.num.mul(&o.num), den: UPoly::one() };
        }
        Coeff::from_parts(self.num.mul(&o.num), self.den.mul(&o.den))
    }
}

impl<'a> Div<&'a Coeff> for &'a Coeff {
    type Output = Coeff;
    fn div(self, o: &Coeff) -> Coeff {
        let inv = o.inverse().expect("division by zero coefficient");
        self * &inv
    }
}

macro_rules! owned_ops {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr<Coeff> for Coeff {
            type Output = Coeff;
            fn $m(self, o: Coeff) -> Coeff { (&self).$m(&o) }
        }
    )*};
}
owned_ops!(Add add, Sub sub, Mul mul, Div div);

impl From<i64> for Coeff {
    fn from(n: i64) -> Self {
        Coeff::int(n)
    }
}
