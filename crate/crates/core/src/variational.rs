//! Functional derivatives, Poisson brackets as local kernels, and reduction
//! modulo a set of local equations.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::coeff::Coeff;
use crate::poly::{Atom, Comp, Mono, Poly};

/// Highest derivative order of δ²(x−y) a kernel may carry.
pub const MAX_ORDER: u8 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VariationalError {
    #[error("derivative order {0} of the delta function exceeds the supported maximum of {MAX_ORDER}")]
    OrderExceeded(u8),
}

/// Pairs of canonically conjugate components.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CanonicalStructure {
    to_momentum: BTreeMap<Comp, Comp>,
    to_config: BTreeMap<Comp, Comp>,
}

impl CanonicalStructure {
    pub fn new(pairs: impl IntoIterator<Item = (Comp, Comp)>) -> Self {
        let mut cs = CanonicalStructure::default();
        for (q, p) in pairs {
            cs.to_config.insert(p.clone(), q.clone());
            cs.to_momentum.insert(q, p);
        }
        cs
    }

    pub fn from_model(m: &crate::model::Model) -> Self {
        CanonicalStructure::new(
            m.configuration_fields().flat_map(|f| f.components().into_iter().map(move |q| (q.clone(), Comp::new(&f.momentum, &q.idx)))),
        )
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Comp, &Comp)> {
        self.to_momentum.iter()
    }

    pub fn momentum_of(&self, q: &Comp) -> Option<&Comp> {
        self.to_momentum.get(q)
    }

    pub fn config_of(&self, p: &Comp) -> Option<&Comp> {
        self.to_config.get(p)
    }

    pub fn is_config(&self, c: &Comp) -> bool {
        self.to_momentum.contains_key(c)
    }

    pub fn is_momentum(&self, c: &Comp) -> bool {
        self.to_config.contains_key(c)
    }
}

fn binom(n: u8, k: u8) -> i64 {
    let mut r = 1i64;
    for j in 0..k as i64 {
        r = r * (n as i64 - j) / (j + 1);
    }
    r
}

fn spatial(d: [u8; 2]) -> [u8; 3] {
    [0, d[0], d[1]]
}

/// `b(y)·∂_x^k δ(x−y)` rewritten with coefficients at `x`.
fn shift(b: &Poly, k: [u8; 2]) -> Vec<([u8; 2], Poly)> {
    let mut out = Vec::new();
    for j1 in 0..=k[0] {
        for j2 in 0..=k[1] {
            let c = binom(k[0], j1) * binom(k[1], j2);
            let p = b.derivatives(spatial([j1, j2])).scale(&Coeff::int(c));
            out.push(([k[0] - j1, k[1] - j2], p));
        }
    }
    out
}

/// Local two-point distribution `Σ_n c_n(x) ∂_x^n δ²(x−y)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Kernel {
    terms: BTreeMap<[u8; 2], Poly>,
}

impl Kernel {
    pub fn zero() -> Self {
        Kernel::default()
    }

    pub fn ultralocal(c: Poly) -> Self {
        let mut k = Kernel::zero();
        k.push([0, 0], c).expect("order zero");
        k
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u8; 2], &Poly)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, n: [u8; 2]) -> Poly {
        self.terms.get(&n).cloned().unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_ultralocal(&self) -> bool {
        self.terms.keys().all(|k| *k == [0, 0])
    }

    pub fn max_order(&self) -> u8 {
        self.terms.keys().map(|k| k[0] + k[1]).max().unwrap_or(0)
    }

    fn push(&mut self, n: [u8; 2], c: Poly) -> Result<(), VariationalError> {
        if c.is_zero() {
            return Ok(());
        }
        if n[0] + n[1] > MAX_ORDER {
            return Err(VariationalError::OrderExceeded(n[0] + n[1]));
        }
        let e = self.terms.entry(n).or_default();
        e.add_assign(&c);
        if e.is_zero() {
            self.terms.remove(&n);
        }
        Ok(())
    }

    pub fn add(&self, o: &Kernel) -> Kernel {
        let mut k = self.clone();
        for (n, c) in &o.terms {
            k.push(*n, c.clone()).expect("orders already bounded");
        }
        k
    }

    pub fn neg(&self) -> Kernel {
        self.map(|c| c.neg())
    }

    pub fn sub(&self, o: &Kernel) -> Kernel {
        self.add(&o.neg())
    }

    pub fn map(&self, f: impl Fn(&Poly) -> Poly) -> Kernel {
        let mut k = Kernel::zero();
        for (n, c) in &self.terms {
            k.push(*n, f(c)).expect("orders already bounded");
        }
        k
    }

    /// `K(y, x)` written as a kernel at `x`.
    pub fn transpose(&self) -> Kernel {
        let mut k = Kernel::zero();
        for (n, c) in &self.terms {
            let sign = if (n[0] + n[1]) % 2 == 1 { -1 } else { 1 };
            for (m, p) in shift(c, *n) {
                k.push(m, p.scale(&Coeff::int(sign))).expect("transposition keeps the order");
            }
        }
        k
    }

    /// `∫dz K(x,z)·s·L(z,y)` for a constant `s`.
    pub fn compose(&self, s: &Coeff, o: &Kernel) -> Result<Kernel, VariationalError> {
        let mut k = Kernel::zero();
        if s.is_zero() {
            return Ok(k);
        }
        for (m, a) in &self.terms {
            for (n, b) in &o.terms {
                let b = b.scale(s);
                for (j, db) in shift(&b, *m) {
                    // shift gives ∂^{m-j'} δ with coefficient ∂^{j'} b; add n
                    k.push([j[0] + n[0], j[1] + n[1]], a.mul(&db))?;
                }
            }
        }
        Ok(k)
    }

    /// `∫dy K(x,y)`.
    pub fn integrate(&self) -> Poly {
        self.coefficient([0, 0])
    }

    /// `∫dy K(x,y)·t(y)`.
    pub fn apply(&self, t: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (n, c) in &self.terms {
            out.add_assign(&c.mul(&t.derivatives(spatial(*n))));
        }
        out
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(n, c)| {
                let d = match n {
                    [0, 0] => "delta2".to_string(),
                    _ => format!("d1^{}d2^{} delta2", n[0], n[1]),
                };
                format!("({c})*{d}")
            })
            .collect();
        f.write_str(&parts.join(" + "))
    }
}

/// Poisson kernel `{f(x), g(y)}` for densities in canonical variables.
pub fn poisson_kernel(f: &Poly, g: &Poly, cs: &CanonicalStructure) -> Result<Kernel, VariationalError> {
    let mut k = Kernel::zero();
    let fa: Vec<Atom> = f.atoms().into_iter().filter(|a| a.d[0] == 0 && !a.is_odd()).collect();
    let ga: Vec<Atom> = g.atoms().into_iter().filter(|a| a.d[0] == 0 && !a.is_odd()).collect();
    for a in &fa {
        let (partner, sign) = if let Some(p) = cs.momentum_of(&a.comp) {
            (p, 1)
        } else if let Some(q) = cs.config_of(&a.comp) {
            (q, -1)
        } else {
            continue;
        };
        let df = f.d_atom(a);
        for b in ga.iter().filter(|b| &b.comp == partner) {
            let dg = g.d_atom(b);
            let m = [a.d[1] + b.d[1], a.d[2] + b.d[2]];
            if m[0] + m[1] > MAX_ORDER {
                return Err(VariationalError::OrderExceeded(m[0] + m[1]));
            }
            let s = sign * if (b.d[1] + b.d[2]) % 2 == 1 { -1 } else { 1 };
            for (n, p) in shift(&dg, m) {
                k.push(n, df.mul(&p).scale(&Coeff::int(s)))?;
            }
        }
    }
    Ok(k)
}

/// Functional derivative of `∫ density` with respect to the component `u`.
pub fn functional_derivative(density: &Poly, u: &Comp) -> Poly {
    density.euler_operator(u, false)
}

/// `∫ [δF/δq·δG/δp − δF/δp·δG/δq]` as a density.
pub fn poisson_smeared(f: &Poly, g: &Poly, cs: &CanonicalStructure) -> Poly {
    let mut out = Poly::zero();
    for (q, p) in cs.pairs() {
        let fq = functional_derivative(f, q);
        let gp = functional_derivative(g, p);
        out.add_assign(&fq.mul(&gp));
        let fp = functional_derivative(f, p);
        let gq = functional_derivative(g, q);
        out.add_assign(&fp.mul(&gq).neg());
    }
    out
}

/// Name of an equation in a reducer: a family key plus component indices.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EqLabel {
    pub family: String,
    pub index: Vec<u8>,
}

impl EqLabel {
    pub fn new(family: &str, index: &[u8]) -> Self {
        EqLabel { family: family.to_string(), index: index.to_vec() }
    }
}

impl fmt::Display for EqLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let idx: Vec<String> = self.index.iter().map(u8::to_string).collect();
        write!(f, "{}[{}]", self.family, idx.join(","))
    }
}

/// Orderly ranking of atoms: (class, order, derivative vector, component).
/// Classes from low to high: other fields, configuration, momenta, one-forms;
/// `lift` swaps configuration and momenta.
#[derive(Clone, Debug, Default)]
pub struct Ranking {
    configuration: BTreeSet<String>,
    momenta: BTreeSet<String>,
    lift: bool,
}

impl Ranking {
    pub fn new(configuration: impl IntoIterator<Item = String>, momenta: impl IntoIterator<Item = String>) -> Self {
        Ranking { configuration: configuration.into_iter().collect(), momenta: momenta.into_iter().collect(), lift: false }
    }

    pub fn from_structure(cs: &CanonicalStructure) -> Self {
        Ranking::new(cs.pairs().map(|(q, _)| q.name.to_string()), cs.pairs().map(|(_, p)| p.name.to_string()))
    }

    /// Configuration atoms rank above momenta, so equations are solved for fields.
    pub fn lifted(mut self) -> Self {
        self.lift = true;
        self
    }

    fn class(&self, a: &Atom) -> u8 {
        if a.is_odd() {
            3
        } else if self.configuration.contains(&*a.comp.name) {
            if self.lift {
                2
            } else {
                1
            }
        } else if self.momenta.contains(&*a.comp.name) {
            if self.lift {
                1
            } else {
                2
            }
        } else {
            0
        }
    }

    pub fn key(&self, a: &Atom) -> (u8, u32, [u8; 3], Comp) {
        (self.class(a), a.order(), a.d, a.comp.clone())
    }

    pub fn leading(&self, p: &Poly) -> Option<Atom> {
        p.atoms().into_iter().max_by_key(|a| self.key(a))
    }
}

#[derive(Clone, Debug)]
struct Rule {
    pivot: Atom,
    coeff: Coeff,
    solution: Poly,
    /// The solved equation as a combination `Σ D^m(E_j)·c` of original equations.
    origin: Vec<(EqLabel, [u8; 3], Poly)>,
}

/// What happened to an equation offered to a [`Reducer`].
#[derive(Clone, Debug, PartialEq)]
pub enum Added {
    Pivot(Atom),
    Redundant,
    Unsolvable(Poly),
}

/// Result of reducing a polynomial: `p = Σ D^m(E)·μ + residue`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Reduction {
    pub residue: Poly,
    pub multipliers: BTreeMap<(EqLabel, [u8; 3]), Poly>,
}

/// Eliminates leading atoms of equations and all their derivatives.
#[derive(Debug, Default)]
pub struct Reducer {
    ranking: Ranking,
    rules: Vec<Rule>,
    unsolved: Vec<(EqLabel, Poly)>,
    cache: RefCell<HashMap<(usize, [u8; 3]), Poly>>,
}

impl Clone for Reducer {
    fn clone(&self) -> Self {
        Reducer { ranking: self.ranking.clone(), rules: self.rules.clone(), unsolved: self.unsolved.clone(), cache: RefCell::default() }
    }
}

fn add_multiplier(map: &mut BTreeMap<(EqLabel, [u8; 3]), Poly>, key: (EqLabel, [u8; 3]), p: &Poly) {
    let e = map.entry(key.clone()).or_default();
    e.add_assign(p);
    if e.is_zero() {
        map.remove(&key);
    }
}

impl Reducer {
    pub fn new(ranking: Ranking) -> Self {
        Reducer { ranking, ..Reducer::default() }
    }

    pub fn ranking(&self) -> &Ranking {
        &self.ranking
    }

    pub fn pivots(&self) -> impl Iterator<Item = &Atom> {
        self.rules.iter().map(|r| &r.pivot)
    }

    pub fn unsolved(&self) -> &[(EqLabel, Poly)] {
        &self.unsolved
    }

    /// Offer one equation `eq = 0`.
    pub fn add(&mut self, label: EqLabel, eq: &Poly) -> Added {
        let red = self.reduce_raw(eq);
        let e = red.residue;
        if e.is_zero() {
            return Added::Redundant;
        }
        let v = self.ranking.leading(&e).expect("nonzero polynomial has atoms");
        let c = match e.d_atom(&v).as_constant() {
            Some(c) if !c.is_zero() => c,
            _ => {
                self.unsolved.push((label, e.clone()));
                return Added::Unsolvable(e);
            }
        };
        let rest = e.sub(&Poly::atom(v.clone()).scale(&c));
        let inv = c.inverse().expect("nonzero");
        let solution = rest.scale(&inv).neg();
        // e = eq − Σ D^m(R_k)·μ, with R_k the already-solved equations
        let mut origin = vec![(label, [0u8; 3], Poly::one())];
        for ((rl, m), mu) in self.expand(&red.multipliers) {
            origin.push((rl, m, mu.neg()));
        }
        self.rules.push(Rule { pivot: v.clone(), coeff: c, solution, origin });
        self.cache.borrow_mut().clear();
        Added::Pivot(v)
    }

    /// Offer several equations, leading atoms of highest rank first.
    pub fn add_all(&mut self, eqs: Vec<(EqLabel, Poly)>) -> Vec<(EqLabel, Added)> {
        let mut eqs: Vec<(EqLabel, Poly)> = eqs.into_iter().filter(|(_, p)| !p.is_zero()).collect();
        eqs.sort_by(|a, b| {
            let ka = self.ranking.leading(&a.1).map(|x| self.ranking.key(&x));
            let kb = self.ranking.leading(&b.1).map(|x| self.ranking.key(&x));
            kb.cmp(&ka).then_with(|| a.0.cmp(&b.0))
        });
        eqs.into_iter().map(|(l, p)| (l.clone(), self.add(l, &p))).collect()
    }

    fn find(&self, m: &Mono) -> Option<(usize, usize, [u8; 3])> {
        for (pos, a) in m.iter().enumerate() {
            for (k, r) in self.rules.iter().enumerate() {
                if let Some(d) = a.derives_from(&r.pivot) {
                    return Some((pos, k, d));
                }
            }
        }
        None
    }

    fn prolonged(&self, k: usize, d: [u8; 3]) -> Poly {
        if let Some(p) = self.cache.borrow().get(&(k, d)) {
            return p.clone();
        }
        let p = self.rules[k].solution.derivatives(d);
        self.cache.borrow_mut().insert((k, d), p.clone());
        p
    }

    /// Reduction with multipliers attached to internal rules (keyed by rule number).
    fn reduce_raw(&self, p: &Poly) -> RawReduction {
        let mut residue = Poly::zero();
        let mut mult: BTreeMap<(usize, [u8; 3]), Poly> = BTreeMap::new();
        let mut queue = p.clone();
        while !queue.is_zero() {
            let mut next = Poly::zero();
            for (m, c) in queue.into_terms() {
                match self.find(&m) {
                    None => residue.add_term(m, c),
                    Some((pos, k, d)) => {
                        let a = &m[pos];
                        let before_odd = m[..pos].iter().filter(|x| x.is_odd()).count();
                        let sign = if a.is_odd() && before_odd % 2 == 1 { -&c } else { c.clone() };
                        let mut rest = m.clone();
                        rest.remove(pos);
                        let r = Poly::product(sign, rest.into_iter());
                        let inv = self.rules[k].coeff.inverse().expect("pivot coefficient is nonzero");
                        let e = mult.entry((k, d)).or_default();
                        e.add_assign(&r.scale(&inv));
                        next.add_assign(&self.prolonged(k, d).mul(&r));
                    }
                }
            }
            queue = next;
        }
        RawReduction { residue, multipliers: mult }
    }

    fn expand(&self, raw: &BTreeMap<(usize, [u8; 3]), Poly>) -> BTreeMap<(EqLabel, [u8; 3]), Poly> {
        let mut out = BTreeMap::new();
        for ((k, d), nu) in raw {
            if nu.is_zero() {
                continue;
            }
            for (label, m, coef) in &self.rules[*k].origin {
                // D^d(D^m(E)·coef)·ν = Σ C(d,j) D^{m+j}(E)·D^{d−j}(coef)·ν
                for j0 in 0..=d[0] {
                    for j1 in 0..=d[1] {
                        for j2 in 0..=d[2] {
                            let b = binom(d[0], j0) * binom(d[1], j1) * binom(d[2], j2);
                            let dc = coef.derivatives([d[0] - j0, d[1] - j1, d[2] - j2]);
                            if dc.is_zero() {
                                continue;
                            }
                            let key = (label.clone(), [m[0] + j0, m[1] + j1, m[2] + j2]);
                            add_multiplier(&mut out, key, &dc.mul(nu).scale(&Coeff::int(b)));
                        }
                    }
                }
            }
        }
        out
    }

    /// Reduce `p` modulo all solved equations.
    pub fn reduce(&self, p: &Poly) -> Reduction {
        let raw = self.reduce_raw(p);
        Reduction { residue: raw.residue, multipliers: self.expand(&raw.multipliers) }
    }

    pub fn is_weakly_zero(&self, p: &Poly) -> bool {
        self.reduce_raw(p).residue.is_zero()
    }
}

struct RawReduction {
    residue: Poly,
    multipliers: BTreeMap<(usize, [u8; 3]), Poly>,
}

/// Rebuild `Σ D^m(E)·μ` from a multiplier table and the original equations.
pub fn recombine(multipliers: &BTreeMap<(EqLabel, [u8; 3]), Poly>, equations: &BTreeMap<EqLabel, Poly>) -> Poly {
    let mut out = Poly::zero();
    for ((l, m), mu) in multipliers {
        if let Some(e) = equations.get(l) {
            out.add_assign(&e.derivatives(*m).mul(mu));
        }
    }
    out
}
