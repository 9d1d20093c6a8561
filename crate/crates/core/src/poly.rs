//! Component-level polynomials.
//!
//! Once every index is assigned a concrete value, a tensor expression becomes a
//! polynomial in jet atoms: a field component together with a multiset of
//! partial derivatives. Atoms flagged `odd` are field-space one-forms and
//! anticommute among themselves; everything else commutes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use smallvec::SmallVec;

use crate::coeff::Coeff;

/// Concrete index values of a field component (slot order).
pub type Idx = SmallVec<[u8; 4]>;

/// A field component, e.g. `A[1,0]` or the one-form `var(e[0,2])`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Comp {
    pub name: Arc<str>,
    pub idx: Idx,
    pub odd: bool,
}

impl Comp {
    pub fn new(name: &str, idx: &[u8]) -> Self {
        Comp { name: Arc::from(name), idx: idx.iter().copied().collect(), odd: false }
    }

    pub fn odd(name: &str, idx: &[u8]) -> Self {
        Comp { odd: true, ..Comp::new(name, idx) }
    }

    pub fn with_odd(&self, odd: bool) -> Self {
        Comp { odd, ..self.clone() }
    }
}

/// A jet atom: component plus derivative counts `[∂_0, ∂_1, ∂_2]`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub comp: Comp,
    pub d: [u8; 3],
}

impl Atom {
    pub fn new(comp: Comp) -> Self {
        Atom { comp, d: [0; 3] }
    }

    pub fn field(name: &str, idx: &[u8]) -> Self {
        Atom::new(Comp::new(name, idx))
    }

    pub fn deriv(mut self, dir: usize) -> Self {
        self.d[dir] += 1;
        self
    }

    pub fn with_d(mut self, d: [u8; 3]) -> Self {
        self.d = d;
        self
    }

    pub fn order(&self) -> u32 {
        self.d.iter().map(|&x| x as u32).sum()
    }

    pub fn is_odd(&self) -> bool {
        self.comp.odd
    }

    /// True if `self` is a (possibly trivial) derivative of `base`.
    pub fn derives_from(&self, base: &Atom) -> Option<[u8; 3]> {
        if self.comp != base.comp {
            return None;
        }
        let mut diff = [0u8; 3];
        for k in 0..3 {
            diff[k] = self.d[k].checked_sub(base.d[k])?;
        }
        Some(diff)
    }
}

pub type Mono = SmallVec<[Atom; 4]>;

/// Sort atoms written in the given order; returns the sign picked up by
/// reordering odd atoms, or `None` if an odd atom repeats.
pub fn normalize_mono(mut atoms: Mono) -> Option<(i8, Mono)> {
    let mut sign = 1i8;
    // insertion sort keeps the sign bookkeeping simple; monomials are short
    for i in 1..atoms.len() {
        let mut j = i;
        while j > 0 && atoms[j - 1] > atoms[j] {
            if atoms[j - 1].is_odd() && atoms[j].is_odd() {
                sign = -sign;
            }
            atoms.swap(j - 1, j);
            j -= 1;
        }
    }
    for w in atoms.windows(2) {
        if w[0].is_odd() && w[0] == w[1] {
            return None;
        }
    }
    Some((sign, atoms))
}

/// Exact polynomial over [`Coeff`] in jet atoms.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Poly {
    terms: BTreeMap<Mono, Coeff>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: Coeff) -> Self {
        let mut p = Poly::zero();
        p.add_term(Mono::new(), c);
        p
    }

    pub fn one() -> Self {
        Poly::constant(Coeff::one())
    }

    pub fn atom(a: Atom) -> Self {
        let mut p = Poly::zero();
        let mut m = Mono::new();
        m.push(a);
        p.add_term(m, Coeff::one());
        p
    }

    /// Product of atoms written in the given order.
    pub fn product(c: Coeff, atoms: impl IntoIterator<Item = Atom>) -> Self {
        let mut p = Poly::zero();
        if let Some((s, m)) = normalize_mono(atoms.into_iter().collect()) {
            let c = if s < 0 { -c } else { c };
            p.add_term(m, c);
        }
        p
    }

    pub fn add_term(&mut self, m: Mono, c: Coeff) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = &*o.get() + &c;
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &Coeff)> {
        self.terms.iter()
    }

    pub fn into_terms(self) -> impl Iterator<Item = (Mono, Coeff)> {
        self.terms.into_iter()
    }

    pub fn from_terms(it: impl IntoIterator<Item = (Mono, Coeff)>) -> Self {
        let mut p = Poly::zero();
        for (m, c) in it {
            p.add_term(m, c);
        }
        p
    }

    /// Constant term if the polynomial has no atoms at all.
    pub fn as_constant(&self) -> Option<Coeff> {
        match self.terms.len() {
            0 => Some(Coeff::zero()),
            1 => self.terms.get(&Mono::new()).cloned(),
            _ => None,
        }
    }

    pub fn coeff_of(&self, m: &Mono) -> Coeff {
        self.terms.get(m).cloned().unwrap_or_default()
    }

    pub fn atoms(&self) -> BTreeSet<Atom> {
        self.terms.keys().flat_map(|m| m.iter().cloned()).collect()
    }

    pub fn contains_atom(&self, pred: impl Fn(&Atom) -> bool) -> bool {
        self.terms.keys().any(|m| m.iter().any(&pred))
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let mut out = self.clone();
        out.add_assign(o);
        out
    }

    pub fn add_assign(&mut self, o: &Poly) {
        for (m, c) in &o.terms {
            self.add_term(m.clone(), c.clone());
        }
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Poly {
        Poly { terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect() }
    }

    pub fn scale(&self, c: &Coeff) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly { terms: self.terms.iter().map(|(m, x)| (m.clone(), x * c)).collect() }
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &o.terms {
                let mut atoms = m1.clone();
                atoms.extend(m2.iter().cloned());
                if let Some((s, m)) = normalize_mono(atoms) {
                    let c = c1 * c2;
                    out.add_term(m, if s < 0 { -c } else { c });
                }
            }
        }
        out
    }

    pub fn map_coeffs(&self, f: impl Fn(&Coeff) -> Coeff) -> Poly {
        Poly::from_terms(self.terms.iter().map(|(m, c)| (m.clone(), f(c))))
    }

    pub fn filter(&self, keep: impl Fn(&Mono) -> bool) -> Poly {
        Poly {
            terms: self.terms.iter().filter(|(m, _)| keep(m)).map(|(m, c)| (m.clone(), c.clone())).collect(),
        }
    }

    /// Replace atoms: `f` returns the replacement for an atom or `None` to keep it.
    pub fn map_atoms(&self, f: &dyn Fn(&Atom) -> Option<Poly>) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut acc = Poly::constant(c.clone());
            for a in m {
                let r = f(a).unwrap_or_else(|| Poly::atom(a.clone()));
                acc = acc.mul(&r);
                if acc.is_zero() {
                    break;
                }
            }
            out.add_assign(&acc);
        }
        out
    }

    /// Partial derivative with respect to an atom. Odd atoms are differentiated
    /// from the left.
    pub fn d_atom(&self, u: &Atom) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut odd_before = 0usize;
            for (k, a) in m.iter().enumerate() {
                if a == u {
                    let mut rest = m.clone();
                    rest.remove(k);
                    let sign_flip = u.is_odd() && odd_before % 2 == 1;
                    out.add_term(rest, if sign_flip { -c } else { c.clone() });
                }
                if a.is_odd() {
                    odd_before += 1;
                }
            }
        }
        out
    }

    /// Total derivative along direction `dir` (0 = time, 1, 2 = space).
    pub fn total_derivative(&self, dir: usize) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            for k in 0..m.len() {
                let mut atoms = m.clone();
                atoms[k] = atoms[k].clone().deriv(dir);
                if let Some((s, nm)) = normalize_mono(atoms) {
                    out.add_term(nm, if s < 0 { -c } else { c.clone() });
                }
            }
        }
        out
    }

    /// Apply `∂_0^{d0} ∂_1^{d1} ∂_2^{d2}`.
    pub fn derivatives(&self, d: [u8; 3]) -> Poly {
        let mut p = self.clone();
        for (dir, &n) in d.iter().enumerate() {
            for _ in 0..n {
                p = p.total_derivative(dir);
            }
        }
        p
    }

    /// Number of atoms in a monomial satisfying `pred`, as the set of counts present.
    pub fn degrees_in(&self, pred: impl Fn(&Atom) -> bool) -> BTreeSet<usize> {
        self.terms.keys().map(|m| m.iter().filter(|a| pred(a)).count()).collect()
    }

    /// Part of the polynomial of exact degree `k` in atoms satisfying `pred`.
    pub fn part_of_degree(&self, k: usize, pred: impl Fn(&Atom) -> bool) -> Poly {
        self.filter(|m| m.iter().filter(|a| pred(a)).count() == k)
    }

    /// Euler operator `Σ_m (−D)^m ∂P/∂(∂^m u)` for the component `u`. With
    /// `time = false` only spatial jets of `u` count as its derivatives.
    pub fn euler_operator(&self, u: &Comp, time: bool) -> Poly {
        let mut out = Poly::zero();
        for a in self.atoms() {
            if a.comp != *u || (!time && a.d[0] > 0) {
                continue;
            }
            let mut t = self.d_atom(&a).derivatives(a.d);
            if a.order() % 2 == 1 {
                t = t.neg();
            }
            out.add_assign(&t);
        }
        out
    }

    /// Field-space exterior derivative: `δP = Σ_u δu ∧ ∂P/∂u` over even atoms.
    pub fn variation(&self) -> Poly {
        let mut out = Poly::zero();
        for u in self.atoms() {
            if u.is_odd() {
                continue;
            }
            let du = Atom { comp: u.comp.with_odd(true), d: u.d };
            out.add_assign(&Poly::atom(du).mul(&self.d_atom(&u)));
        }
        out
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::expr::poly_to_expression(self).render("gamma"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(name: &str, i: u8) -> Atom {
        Atom::field(name, &[i])
    }

    fn da(name: &str, i: u8) -> Atom {
        Atom::new(Comp::odd(name, &[i]))
    }

    #[test]
    fn odd_atoms_anticommute() {
        let u = Poly::atom(da("A", 1));
        let v = Poly::atom(da("A", 2));
        assert_eq!(u.mul(&v), v.mul(&u).neg());
        assert!(u.mul(&u).is_zero());
    }

    #[test]
    fn total_derivative_product_rule() {
        let p = Poly::atom(a("A", 1)).mul(&Poly::atom(a("e", 2)));
        let d = p.total_derivative(1);
        let expect = Poly::atom(a("A", 1).deriv(1))
            .mul(&Poly::atom(a("e", 2)))
            .add(&Poly::atom(a("A", 1)).mul(&Poly::atom(a("e", 2).deriv(1))));
        assert_eq!(d, expect);
    }

    #[test]
    fn left_derivative_of_odd() {
        // ∂/∂v (u ∧ v) = −u
        let u = da("A", 1);
        let v = da("A", 2);
        let p = Poly::atom(u.clone()).mul(&Poly::atom(v.clone()));
        assert_eq!(p.d_atom(&v), Poly::atom(u).neg());
    }

    #[test]
    fn variation_is_nilpotent() {
        let p = Poly::atom(a("A", 1))
            .mul(&Poly::atom(a("A", 1)))
            .mul(&Poly::atom(a("e", 2).deriv(2)))
            .add(&Poly::atom(a("e", 0)));
        assert!(!p.variation().is_zero());
        assert!(p.variation().variation().is_zero());
    }
}
