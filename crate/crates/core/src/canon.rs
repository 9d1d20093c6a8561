//! Canonical forms, the zero test, and component enumeration.
//!
//! `canonicalize` rewrites to a fixpoint with δ-contraction and the ε·ε
//! determinant identities, then picks the lexicographically smallest
//! representative over all relabellings of dummy indices (which also detects
//! terms that vanish by symmetry). Dimension-dependent multi-term identities
//! (Schouten-type) are not rewrite rules here; `is_zero` settles those by
//! enumerating components.

use std::collections::{BTreeMap, BTreeSet};

use crate::coeff::Coeff;
use crate::expr::{fresh_name, Conventions, Expression, Factor, Index, InternalMetric, Kind, Label, Term};
use crate::poly::{Atom, Comp, Poly};

/// Canonical expression plus a stable fingerprint of its rendering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalForm {
    pub expression: Expression,
    pub fingerprint: u64,
}

/// Merge terms whose factor lists are literally equal.
pub fn merge_like(x: Expression) -> Expression {
    let mut acc: BTreeMap<Vec<Factor>, Coeff> = BTreeMap::new();
    let mut order: Vec<Vec<Factor>> = Vec::new();
    for t in x.terms() {
        match acc.get_mut(&t.factors) {
            Some(c) => *c = &*c + &t.coeff,
            None => {
                order.push(t.factors.clone());
                acc.insert(t.factors.clone(), t.coeff.clone());
            }
        }
    }
    Expression::from_terms(order.into_iter().map(|f| Term::new(acc[&f].clone(), f)).collect())
}

pub fn canonicalize(x: &Expression) -> CanonicalForm {
    canonicalize_with(x, InternalMetric::Euclidean)
}

pub fn canonicalize_with(x: &Expression, metric: InternalMetric) -> CanonicalForm {
    let mut work: Vec<Term> = x.terms().to_vec();
    let mut done: Vec<Term> = Vec::new();
    while let Some(t) = work.pop() {
        match rewrite_step(&t, metric) {
            Step::Keep(t) => done.push(t),
            Step::Zero => {}
            Step::Split(ts) => work.extend(ts),
        }
    }
    let mut acc: BTreeMap<Vec<Factor>, Coeff> = BTreeMap::new();
    for t in done {
        if let Some((sign, factors)) = normal_representative(&t, metric) {
            let c = if sign < 0 { -&t.coeff } else { t.coeff.clone() };
            let e = acc.entry(factors).or_default();
            *e = &*e + &c;
        }
    }
    let expression = Expression::from_terms(acc.into_iter().map(|(f, c)| Term::new(c, f)).collect());
    let fingerprint = fnv1a(expression.render("gamma").as_bytes());
    CanonicalForm { expression, fingerprint }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

enum Step {
    Keep(Term),
    Zero,
    Split(Vec<Term>),
}

fn positions_nominal(kind: Kind, metric: InternalMetric) -> bool {
    kind != Kind::Internal || metric == InternalMetric::Euclidean
}

fn rewrite_step(t: &Term, metric: InternalMetric) -> Step {
    let counts = t.name_counts();
    // ε with a repeated label vanishes; fully numeric ε/δ evaluate
    for (k, f) in t.factors.iter().enumerate() {
        match f {
            Factor::Eps { kind, idx } => {
                let labels: BTreeSet<&Label> = idx.iter().map(|i| &i.label).collect();
                if labels.len() < idx.len() {
                    return Step::Zero;
                }
                if idx.iter().all(|i| matches!(i.label, Label::Value(_))) {
                    let vals: Vec<u8> = idx.iter().map(|i| if let Label::Value(v) = i.label { v } else { 0 }).collect();
                    let mut s = perm_sign(*kind, &vals);
                    if *kind == Kind::Internal {
                        for (ix, v) in idx.iter().zip(&vals) {
                            if ix.up {
                                s *= metric.diag(*v);
                            }
                        }
                    }
                    if s == 0 {
                        return Step::Zero;
                    }
                    let mut nt = t.clone();
                    nt.factors.remove(k);
                    nt.coeff = &nt.coeff * &Coeff::int(s);
                    return Step::Split(vec![nt]);
                }
            }
            Factor::Delta(a, b) => {
                if let (Label::Value(x), Label::Value(y)) = (&a.label, &b.label) {
                    if x != y {
                        return Step::Zero;
                    }
                    let mut nt = t.clone();
                    nt.factors.remove(k);
                    return Step::Split(vec![nt]);
                }
                if a.label == b.label {
                    // trace δ^i_i
                    let mut nt = t.clone();
                    nt.factors.remove(k);
                    nt.coeff = &nt.coeff * &Coeff::int(a.kind.values().len() as i64);
                    return Step::Split(vec![nt]);
                }
                // contract through a dummy
                for (p, q) in [(a, b), (b, a)] {
                    let Some(pn) = p.name() else { continue };
                    if counts.get(pn).map(Vec::len) != Some(2) {
                        continue;
                    }
                    let other = counts[pn].iter().find(|ix| *ix != p).unwrap_or(&counts[pn][0]);
                    if !positions_nominal(p.kind, metric) && other.up == p.up {
                        continue;
                    }
                    let mut nt = t.clone();
                    nt.factors.remove(k);
                    for f in &mut nt.factors {
                        for ix in factor_indices_mut(f) {
                            if ix.name() == Some(pn) {
                                ix.label = q.label.clone();
                                if !positions_nominal(p.kind, metric) {
                                    ix.up = q.up;
                                }
                            }
                        }
                    }
                    return Step::Split(vec![nt]);
                }
            }
            Factor::Field(_) => {}
        }
    }
    // ε·ε → determinant of δ's
    let eps: Vec<usize> = t.factors.iter().enumerate().filter(|(_, f)| matches!(f, Factor::Eps { .. })).map(|(k, _)| k).collect();
    for (x, &i) in eps.iter().enumerate() {
        for &j in &eps[x + 1..] {
            let (Factor::Eps { kind: k1, idx: a }, Factor::Eps { kind: k2, idx: b }) = (&t.factors[i], &t.factors[j]) else {
                continue;
            };
            if k1 != k2 || !positions_nominal(*k1, metric) {
                continue;
            }
            let mut rest = t.factors.clone();
            rest.remove(j);
            rest.remove(i);
            let n = a.len();
            let mut out = Vec::new();
            for perm in permutations(n) {
                let s = parity(&perm);
                let mut factors = rest.clone();
                for (r, &c) in perm.iter().enumerate() {
                    factors.push(Factor::Delta(a[r].clone(), b[c].clone()));
                }
                out.push(Term::new(&t.coeff * &Coeff::int(s), factors));
            }
            return Step::Split(out);
        }
    }
    Step::Keep(t.clone())
}

fn factor_indices_mut(f: &mut Factor) -> Vec<&mut Index> {
    match f {
        Factor::Field(fa) => fa.indices.iter_mut().chain(fa.derivs.iter_mut()).collect(),
        Factor::Eps { idx, .. } => idx.iter_mut().collect(),
        Factor::Delta(a, b) => vec![a, b],
    }
}

pub(crate) fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

pub(crate) fn parity(p: &[usize]) -> i64 {
    let mut s = 1;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            if p[i] > p[j] {
                s = -s;
            }
        }
    }
    s
}

/// Levi-Civita value for concrete index values of the given kind.
pub fn perm_sign(kind: Kind, vals: &[u8]) -> i64 {
    let base: &[u8] = kind.values();
    if vals.len() != base.len() {
        return 0;
    }
    let mut pos = Vec::with_capacity(vals.len());
    for v in vals {
        match base.iter().position(|b| b == v) {
            Some(p) => pos.push(p),
            None => return 0,
        }
    }
    let set: BTreeSet<usize> = pos.iter().copied().collect();
    if set.len() != pos.len() {
        return 0;
    }
    parity(&pos)
}

/// Sort factors and indices for one fixed dummy naming; returns the sign.
fn sorted_factors(t: &Term, metric: InternalMetric) -> Option<(i64, Vec<Factor>)> {
    let mut sign = 1i64;
    let mut factors: Vec<Factor> = Vec::with_capacity(t.factors.len());
    for f in &t.factors {
        let mut f = f.clone();
        for ix in factor_indices_mut(&mut f) {
            if positions_nominal(ix.kind, metric) {
                ix.up = false;
            }
        }
        match &mut f {
            Factor::Eps { idx, .. } => {
                let mut keyed: Vec<(usize, Index)> = idx.iter().cloned().enumerate().collect();
                keyed.sort_by(|a, b| a.1.cmp(&b.1));
                let perm: Vec<usize> = keyed.iter().map(|(k, _)| *k).collect();
                sign *= parity(&perm);
                *idx = keyed.into_iter().map(|(_, i)| i).collect();
            }
            Factor::Delta(a, b) => {
                if b < a {
                    std::mem::swap(a, b);
                }
            }
            Factor::Field(fa) => fa.derivs.sort(),
        }
        factors.push(f);
    }
    // stable insertion sort tracking odd-factor swaps
    for i in 1..factors.len() {
        let mut j = i;
        while j > 0 && factors[j - 1] > factors[j] {
            if factors[j - 1].is_odd() && factors[j].is_odd() {
                sign = -sign;
            }
            factors.swap(j - 1, j);
            j -= 1;
        }
    }
    for w in factors.windows(2) {
        if w[0].is_odd() && w[0] == w[1] {
            return None;
        }
    }
    Some((sign, factors))
}

const MAX_RELABELLINGS: usize = 40320;

fn normal_representative(t: &Term, metric: InternalMetric) -> Option<(i64, Vec<Factor>)> {
    let counts = t.name_counts();
    let free: BTreeSet<String> = counts.iter().filter(|(_, v)| v.len() == 1).map(|(n, _)| n.clone()).collect();
    let mut by_kind: BTreeMap<Kind, Vec<String>> = BTreeMap::new();
    for (n, v) in &counts {
        if v.len() == 2 {
            by_kind.entry(v[0].kind).or_default().push(n.clone());
        }
    }
    // canonical target names per kind, avoiding free names
    let mut targets: BTreeMap<Kind, Vec<String>> = BTreeMap::new();
    let mut used = free.clone();
    for (k, ds) in &by_kind {
        let mut names = Vec::new();
        for _ in ds {
            let n = fresh_name(*k, &used);
            used.insert(n.clone());
            names.push(n);
        }
        targets.insert(*k, names);
    }
    let total: usize = by_kind.values().map(|v| (1..=v.len()).product::<usize>()).product();
    let kinds: Vec<Kind> = by_kind.keys().copied().collect();
    let perms: Vec<Vec<Vec<usize>>> = kinds.iter().map(|k| permutations(by_kind[k].len())).collect();

    let mut best: Option<(Vec<Factor>, i64)> = None;
    let mut vanishes = false;
    let mut choice = vec![0usize; kinds.len()];
    let limit = if total > MAX_RELABELLINGS { 1 } else { total };
    for _ in 0..limit {
        let mut map = BTreeMap::new();
        for (ki, k) in kinds.iter().enumerate() {
            let p = &perms[ki][choice[ki]];
            for (r, d) in by_kind[k].iter().enumerate() {
                map.insert(d.clone(), targets[k][p[r]].clone());
            }
        }
        let (sign, factors) = sorted_factors(&t.rename(&map), metric)?;
        match &best {
            None => best = Some((factors, sign)),
            Some((bf, bs)) => {
                if factors < *bf {
                    best = Some((factors, sign));
                } else if factors == *bf && sign != *bs {
                    vanishes = true;
                }
            }
        }
        // odometer over per-kind permutations
        for ki in 0..kinds.len() {
            choice[ki] += 1;
            if choice[ki] < perms[ki].len() {
                break;
            }
            choice[ki] = 0;
        }
    }
    if vanishes {
        return None;
    }
    best.map(|(f, s)| (s, f))
}

/// Decide whether `x` is zero as a tensor expression.
pub fn is_zero(x: &Expression, conv: &Conventions) -> bool {
    if canonicalize_with(x, conv.metric).expression.is_empty() {
        return true;
    }
    enumerate_components(x, conv).values().all(Poly::is_zero)
}

/// Free-index assignment, sorted by index name.
pub type Assignment = Vec<(String, u8)>;

/// Expand every dummy sum and every ε/δ value, leaving field components symbolic.
pub fn enumerate_components(x: &Expression, conv: &Conventions) -> BTreeMap<Assignment, Poly> {
    let mut out: BTreeMap<Assignment, Poly> = BTreeMap::new();
    let free = x.free_indices();
    let free_names: Vec<(String, Kind)> = free.loose();
    for asg in assignments(&free_names) {
        out.insert(asg, Poly::zero());
    }
    for t in x.terms() {
        let counts = t.name_counts();
        let dummies: Vec<(String, Kind)> =
            counts.iter().filter(|(_, v)| v.len() == 2).map(|(n, v)| (n.clone(), v[0].kind)).collect();
        for fasg in assignments(&free_names) {
            let mut acc = Poly::zero();
            for dasg in assignments(&dummies) {
                let mut vals: BTreeMap<&str, u8> = BTreeMap::new();
                for (n, v) in fasg.iter().chain(dasg.iter()) {
                    vals.insert(n.as_str(), *v);
                }
                if let Some(p) = eval_term(t, &vals, conv) {
                    acc.add_assign(&p);
                }
            }
            if let Some(slot) = out.get_mut(&fasg) {
                slot.add_assign(&acc);
            }
        }
    }
    out
}

fn assignments(names: &[(String, Kind)]) -> Vec<Assignment> {
    let mut out: Vec<Assignment> = vec![Vec::new()];
    for (n, k) in names {
        let mut next = Vec::new();
        for partial in &out {
            for &v in k.values() {
                let mut p = partial.clone();
                p.push((n.clone(), v));
                next.push(p);
            }
        }
        out = next;
    }
    out
}

fn value_of(ix: &Index, vals: &BTreeMap<&str, u8>) -> u8 {
    match &ix.label {
        Label::Value(v) => *v,
        Label::Name(n) => vals[n.as_str()],
    }
}

fn eval_term(t: &Term, vals: &BTreeMap<&str, u8>, conv: &Conventions) -> Option<Poly> {
    let mut scalar: i64 = 1;
    let mut atoms: Vec<Atom> = Vec::new();
    for f in &t.factors {
        match f {
            Factor::Eps { kind, idx } => {
                let v: Vec<u8> = idx.iter().map(|i| value_of(i, vals)).collect();
                let mut s = perm_sign(*kind, &v);
                if *kind == Kind::Internal {
                    for (ix, x) in idx.iter().zip(&v) {
                        if ix.up {
                            s *= conv.metric.diag(*x);
                        }
                    }
                }
                scalar *= s;
            }
            Factor::Delta(a, b) => {
                if value_of(a, vals) != value_of(b, vals) {
                    scalar = 0;
                }
            }
            Factor::Field(fa) => {
                let idx: Vec<u8> = fa.indices.iter().map(|i| value_of(i, vals)).collect();
                if let Some(decl) = conv.declared_up.get(&fa.name) {
                    for (slot, ix) in fa.indices.iter().enumerate() {
                        if ix.kind == Kind::Internal {
                            if let Some(Some(up)) = decl.get(slot) {
                                if *up != ix.up {
                                    scalar *= conv.metric.diag(idx[slot]);
                                }
                            }
                        }
                    }
                }
                let mut d = [0u8; 3];
                for di in &fa.derivs {
                    d[value_of(di, vals) as usize] += 1;
                }
                let comp = if fa.odd { Comp::odd(&fa.name, &idx) } else { Comp::new(&fa.name, &idx) };
                atoms.push(Atom { comp, d });
            }
        }
        if scalar == 0 {
            return None;
        }
    }
    let p = Poly::product(&t.coeff * &Coeff::int(scalar), atoms);
    if p.is_zero() {
        None
    } else {
        Some(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::FieldAtom;

    fn ix(n: &str, up: bool) -> Index {
        Index::named(n, up)
    }

    fn eps2(a: Index, b: Index) -> Expression {
        Expression::factor(Factor::Eps { kind: Kind::Spatial, idx: vec![a, b] })
    }

    fn field(name: &str, idx: Vec<Index>) -> Expression {
        Expression::field(FieldAtom::new(name, idx))
    }

    #[test]
    fn eps_eps_contracts_to_delta() {
        // ε^{ab} ε_{cb} = δ^a_c
        let x = eps2(ix("a", true), ix("b", true)).mul(&eps2(ix("c", false), ix("b", false)));
        let d = Expression::factor(Factor::Delta(ix("a", true), ix("c", false)));
        assert_eq!(canonicalize(&x).expression, canonicalize(&d).expression);
    }

    #[test]
    fn internal_eps_full_contraction_is_six() {
        let e = |a, b, c, up| {
            Expression::factor(Factor::Eps { kind: Kind::Internal, idx: vec![ix(a, up), ix(b, up), ix(c, up)] })
        };
        let x = e("i", "j", "k", false).mul(&e("i", "j", "k", true));
        assert_eq!(canonicalize(&x).expression, Expression::constant(Coeff::int(6)));
    }

    #[test]
    fn delta_chain() {
        let x = Expression::factor(Factor::Delta(ix("i", true), ix("j", false)))
            .mul(&Expression::factor(Factor::Delta(ix("j", true), ix("k", false))));
        let y = Expression::factor(Factor::Delta(ix("i", true), ix("k", false)));
        assert_eq!(canonicalize(&x).expression, canonicalize(&y).expression);
    }

    #[test]
    fn antisymmetric_times_symmetric_vanishes() {
        let x = eps2(ix("a", true), ix("b", true))
            .mul(&field("A", vec![ix("a", false), ix("i", false)]))
            .mul(&field("A", vec![ix("b", false), ix("i", true)]));
        assert!(canonicalize(&x).expression.is_empty());
        assert!(is_zero(&x, &Conventions::default()));
    }

    #[test]
    fn enumerate_delta() {
        let d = Expression::factor(Factor::Delta(ix("a", true), ix("b", false)));
        let comps = enumerate_components(&d, &Conventions::default());
        assert_eq!(comps.len(), 4);
        assert_eq!(comps[&vec![("a".into(), 1), ("b".into(), 1)]], Poly::one());
        assert!(comps[&vec![("a".into(), 1), ("b".into(), 2)]].is_zero());
    }

    #[test]
    fn idempotent_on_sample() {
        let x = eps2(ix("a", true), ix("b", true))
            .mul(&field("A", vec![ix("a", false), ix("i", false)]))
            .mul(&field("e", vec![ix("b", false), ix("i", true)]));
        let c1 = canonicalize(&x);
        let c2 = canonicalize(&c1.expression);
        assert_eq!(c1, c2);
    }
}
