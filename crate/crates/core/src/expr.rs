//! Exact symbolic tensor expressions.
//!
//! An [`Expression`] is a finite sum of terms; each term is a [`Coeff`] times a
//! product of [`Factor`]s: indexed field atoms (with partial-derivative
//! prefixes), Levi-Civita symbols and Kronecker deltas. Values are immutable;
//! every operation returns a new expression.
//!
//! Conventions: `ε^{012} = ε_{012} = +1` for spacetime and internal symbols,
//! `ε^{0ab} ≡ ε^{ab}`, `ε^{12} = ε_{12} = +1`. Spatial and spacetime index
//! positions carry no metric; internal indices are raised and lowered with the
//! model's internal metric (identity by default).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::coeff::Coeff;
use crate::poly::{Atom, Poly};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Spacetime,
    Spatial,
    Internal,
}

impl Kind {
    pub fn values(self) -> &'static [u8] {
        match self {
            Kind::Spacetime | Kind::Internal => &[0, 1, 2],
            Kind::Spatial => &[1, 2],
        }
    }

    /// Kind implied by an index name: Greek words are spacetime, `i`–`n`
    /// internal, anything else spatial.
    pub fn of_name(name: &str) -> Kind {
        const GREEK: &[&str] = &[
            "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota", "kappa",
            "lambda", "mu", "nu", "xi", "omicron", "pi", "rho", "sigma", "tau", "upsilon", "phi",
            "chi", "psi", "omega",
        ];
        let stem = name.trim_end_matches(|c: char| c.is_ascii_digit() || c == '\'');
        if GREEK.contains(&stem) {
            Kind::Spacetime
        } else if stem.len() == 1 && ('i'..='n').contains(&stem.chars().next().unwrap_or('a')) {
            Kind::Internal
        } else {
            Kind::Spatial
        }
    }

    /// Does an index of kind `self` fit into a slot of kind `slot`?
    pub fn fits(self, slot: Kind) -> bool {
        self == slot || (self == Kind::Spatial && slot == Kind::Spacetime)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Name(String),
    Value(u8),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Index {
    pub label: Label,
    pub kind: Kind,
    pub up: bool,
}

impl Index {
    pub fn named(name: &str, up: bool) -> Self {
        Index { label: Label::Name(name.to_string()), kind: Kind::of_name(name), up }
    }

    pub fn value(v: u8, kind: Kind, up: bool) -> Self {
        Index { label: Label::Value(v), kind, up }
    }

    pub fn name(&self) -> Option<&str> {
        match &self.label {
            Label::Name(n) => Some(n),
            Label::Value(_) => None,
        }
    }

    fn render(&self) -> String {
        let body = match &self.label {
            Label::Name(n) => n.clone(),
            Label::Value(v) => v.to_string(),
        };
        if self.up {
            format!("^{body}")
        } else {
            body
        }
    }
}

/// Field occurrence `∂…∂ f[indices]`, optionally a field-space one-form.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldAtom {
    pub name: String,
    pub indices: Vec<Index>,
    pub derivs: Vec<Index>,
    pub odd: bool,
}

impl FieldAtom {
    pub fn new(name: &str, indices: Vec<Index>) -> Self {
        FieldAtom { name: name.to_string(), indices, derivs: Vec::new(), odd: false }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Factor {
    Field(FieldAtom),
    Eps { kind: Kind, idx: Vec<Index> },
    Delta(Index, Index),
}

impl Factor {
    pub fn indices(&self) -> Vec<&Index> {
        match self {
            Factor::Field(f) => f.indices.iter().chain(f.derivs.iter()).collect(),
            Factor::Eps { idx, .. } => idx.iter().collect(),
            Factor::Delta(a, b) => vec![a, b],
        }
    }

    fn indices_mut(&mut self) -> Vec<&mut Index> {
        match self {
            Factor::Field(f) => f.indices.iter_mut().chain(f.derivs.iter_mut()).collect(),
            Factor::Eps { idx, .. } => idx.iter_mut().collect(),
            Factor::Delta(a, b) => vec![a, b],
        }
    }

    pub fn is_odd(&self) -> bool {
        matches!(self, Factor::Field(f) if f.odd)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term {
    pub coeff: Coeff,
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn new(coeff: Coeff, factors: Vec<Factor>) -> Self {
        Term { coeff, factors }
    }

    /// Occurrence count of every index name in the term.
    pub fn name_counts(&self) -> BTreeMap<String, Vec<Index>> {
        let mut m: BTreeMap<String, Vec<Index>> = BTreeMap::new();
        for f in &self.factors {
            for ix in f.indices() {
                if let Some(n) = ix.name() {
                    m.entry(n.to_string()).or_default().push(ix.clone());
                }
            }
        }
        m
    }

    pub fn free(&self) -> Signature {
        let mut sig: Vec<SigEntry> = self
            .name_counts()
            .into_iter()
            .filter(|(_, v)| v.len() == 1)
            .map(|(n, v)| SigEntry { name: n, kind: v[0].kind, up: v[0].up })
            .collect();
        sig.sort();
        Signature(sig)
    }

    pub fn dummies(&self) -> Vec<String> {
        self.name_counts().into_iter().filter(|(_, v)| v.len() == 2).map(|(n, _)| n).collect()
    }

    pub fn degree(&self) -> usize {
        self.factors.iter().filter(|f| f.is_odd()).count()
    }

    pub fn rename(&self, map: &BTreeMap<String, String>) -> Term {
        let mut t = self.clone();
        for f in &mut t.factors {
            for ix in f.indices_mut() {
                if let Label::Name(n) = &ix.label {
                    if let Some(new) = map.get(n) {
                        ix.label = Label::Name(new.clone());
                    }
                }
            }
        }
        t
    }

    fn check(&self) -> Result<(), ExprError> {
        for (n, v) in self.name_counts() {
            if v.len() > 2 {
                return Err(ExprError::Malformed(format!("index `{n}` appears {} times in one term", v.len())));
            }
            if v.len() == 2 && v[0].kind != v[1].kind {
                return Err(ExprError::Malformed(format!("dummy index `{n}` pairs different kinds")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SigEntry {
    pub name: String,
    pub kind: Kind,
    pub up: bool,
}

/// Sorted multiset of free indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Signature(pub Vec<SigEntry>);

impl Signature {
    /// Names and kinds only; positions are nominal under identity metrics.
    pub fn loose(&self) -> Vec<(String, Kind)> {
        self.0.iter().map(|e| (e.name.clone(), e.kind)).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|e| format!("{}{}:{:?}", if e.up { "^" } else { "" }, e.name, e.kind).to_lowercase())
            .collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("free index mismatch: {left} vs {right}")]
    FreeIndexMismatch { left: String, right: String },
    #[error("malformed expression: {0}")]
    Malformed(String),
    #[error("substitution signature mismatch for `{field}`: pattern {pattern}, replacement {replacement}")]
    SignatureMismatch { field: String, pattern: String, replacement: String },
}

/// Immutable sum of terms.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Expression {
    terms: Vec<Term>,
}

impl Expression {
    pub fn zero() -> Self {
        Expression::default()
    }

    pub fn constant(c: Coeff) -> Self {
        Expression::from_terms(vec![Term::new(c, Vec::new())])
    }

    pub fn one() -> Self {
        Expression::constant(Coeff::one())
    }

    pub fn factor(f: Factor) -> Self {
        Expression::from_terms(vec![Term::new(Coeff::one(), vec![f])])
    }

    pub fn field(atom: FieldAtom) -> Self {
        Expression::factor(Factor::Field(atom))
    }

    /// Build from raw terms without checks; zero-coefficient terms are dropped.
    pub fn from_terms(terms: Vec<Term>) -> Self {
        Expression { terms: terms.into_iter().filter(|t| !t.coeff.is_zero()).collect() }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Check well-formedness: index occurrence counts and uniform free indices.
    pub fn validate(&self) -> Result<(), ExprError> {
        let mut first: Option<Signature> = None;
        for t in &self.terms {
            t.check()?;
            let s = t.free();
            match &first {
                None => first = Some(s),
                Some(f) if f.loose() != s.loose() => {
                    return Err(ExprError::FreeIndexMismatch { left: f.to_string(), right: s.to_string() })
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn free_indices(&self) -> Signature {
        self.terms.first().map(Term::free).unwrap_or_default()
    }

    pub fn degree(&self) -> usize {
        self.terms.first().map(Term::degree).unwrap_or(0)
    }

    pub fn add(&self, o: &Expression) -> Result<Expression, ExprError> {
        if !self.is_empty() && !o.is_empty() {
            let (a, b) = (self.free_indices(), o.free_indices());
            if a.loose() != b.loose() {
                return Err(ExprError::FreeIndexMismatch { left: a.to_string(), right: b.to_string() });
            }
        }
        let mut terms = self.terms.clone();
        terms.extend(o.terms.iter().cloned());
        Ok(crate::canon::merge_like(Expression::from_terms(terms)))
    }

    pub fn sub(&self, o: &Expression) -> Result<Expression, ExprError> {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Expression {
        self.scale(&Coeff::int(-1))
    }

    pub fn scale(&self, c: &Coeff) -> Expression {
        Expression::from_terms(self.terms.iter().map(|t| Term::new(&t.coeff * c, t.factors.clone())).collect())
    }

    /// Distributed product. Dummy indices of `o` that collide with names in
    /// `self` are renamed first.
    pub fn mul(&self, o: &Expression) -> Expression {
        let mut out = Vec::new();
        for a in &self.terms {
            let taken: BTreeSet<String> = a.name_counts().into_keys().collect();
            for b in &o.terms {
                let b = rename_dummies_away(b, &taken);
                let mut factors = a.factors.clone();
                factors.extend(b.factors.iter().cloned());
                out.push(Term::new(&a.coeff * &b.coeff, factors));
            }
        }
        crate::canon::merge_like(Expression::from_terms(out))
    }

    /// Partial derivative `∂_ix` applied with the product rule.
    pub fn derivative(&self, ix: &Index) -> Expression {
        let mut out = Vec::new();
        for t in &self.terms {
            let taken: BTreeSet<String> = BTreeSet::new();
            let t = if let Some(n) = ix.name() {
                let mut taken = taken;
                taken.insert(n.to_string());
                rename_dummies_away(t, &taken)
            } else {
                t.clone()
            };
            for (k, f) in t.factors.iter().enumerate() {
                if let Factor::Field(fa) = f {
                    let mut nf = fa.clone();
                    nf.derivs.push(Index { up: false, ..ix.clone() });
                    let mut factors = t.factors.clone();
                    factors[k] = Factor::Field(nf);
                    out.push(Term::new(t.coeff.clone(), factors));
                }
            }
        }
        Expression::from_terms(out)
    }

    pub fn map_coeffs(&self, f: impl Fn(&Coeff) -> Coeff) -> Expression {
        Expression::from_terms(self.terms.iter().map(|t| Term::new(f(&t.coeff), t.factors.clone())).collect())
    }

    /// Simultaneous substitution of field patterns and of the coupling.
    pub fn substitute(&self, binding: &Binding) -> Result<Expression, ExprError> {
        for rule in &binding.fields {
            let pat: Vec<(String, Kind)> = rule
                .pattern
                .indices
                .iter()
                .filter_map(|ix| ix.name().map(|n| (n.to_string(), ix.kind)))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if !rule.replacement.is_empty() && rule.replacement.free_indices().loose() != pat {
                return Err(ExprError::SignatureMismatch {
                    field: rule.pattern.name.clone(),
                    pattern: format!("{pat:?}"),
                    replacement: rule.replacement.free_indices().to_string(),
                });
            }
        }
        let mut out = Vec::new();
        for t in &self.terms {
            let coeff = match &binding.lambda {
                Some(f) => f(&t.coeff),
                None => t.coeff.clone(),
            };
            let mut acc = Expression::constant(coeff);
            for f in &t.factors {
                let piece = match f {
                    Factor::Field(fa) => match binding.fields.iter().find_map(|r| r.apply(fa)) {
                        Some(rep) => rep,
                        None => Expression::factor(f.clone()),
                    },
                    _ => Expression::factor(f.clone()),
                };
                acc = acc.mul_raw(&piece);
            }
            out.extend(acc.terms);
        }
        Ok(crate::canon::canonicalize(&Expression::from_terms(out)).expression)
    }

    fn mul_raw(&self, o: &Expression) -> Expression {
        let mut out = Vec::new();
        for a in &self.terms {
            let taken: BTreeSet<String> = a.name_counts().into_keys().collect();
            for b in &o.terms {
                let b = rename_dummies_away(b, &taken);
                let mut factors = a.factors.clone();
                factors.extend(b.factors.iter().cloned());
                out.push(Term::new(&a.coeff * &b.coeff, factors));
            }
        }
        Expression::from_terms(out)
    }

    /// DSL rendering; the coupling `λ` is written as `1/param`.
    pub fn render(&self, param: &str) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut s = String::new();
        for (k, t) in self.terms.iter().enumerate() {
            let body = render_term(t, param);
            if k == 0 {
                s.push_str(&body);
            } else if let Some(rest) = body.strip_prefix('-') {
                s.push_str(" - ");
                s.push_str(rest);
            } else {
                s.push_str(" + ");
                s.push_str(&body);
            }
        }
        s
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render("gamma"))
    }
}

fn render_term(t: &Term, param: &str) -> String {
    let mut parts: Vec<String> = Vec::new();
    let c = t.coeff.render(param);
    let simple = !c.contains(['+', '(']) && !c[1..].contains('-');
    let mut neg = false;
    if t.factors.is_empty() {
        return if simple { c } else { format!("({c})") };
    }
    if t.coeff.is_one() {
    } else if (-&t.coeff).is_one() {
        neg = true;
    } else if simple {
        parts.push(c);
    } else {
        parts.push(format!("({c})"));
    }
    for f in &t.factors {
        parts.push(render_factor(f));
    }
    let body = parts.join("*");
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

fn render_list(idx: &[Index]) -> String {
    idx.iter().map(Index::render).collect::<Vec<_>>().join(",")
}

pub(crate) fn render_factor(f: &Factor) -> String {
    match f {
        Factor::Field(fa) => {
            let mut s = if fa.indices.is_empty() {
                fa.name.clone()
            } else {
                format!("{}[{}]", fa.name, render_list(&fa.indices))
            };
            if fa.odd {
                s = format!("var({s})");
            }
            let mut ds = fa.derivs.clone();
            ds.sort();
            for d in ds.iter().rev() {
                s = match (&d.label, d.kind) {
                    (Label::Value(0), Kind::Spacetime) => format!("dot({s})"),
                    (Label::Value(v), _) => format!("d_{v}({s})"),
                    (Label::Name(n), _) => format!("d_{n}({s})"),
                };
            }
            s
        }
        Factor::Eps { kind, idx } => {
            let all_up = idx.iter().all(|i| i.up);
            let all_dn = idx.iter().all(|i| !i.up);
            let bare = || idx.iter().map(|i| Index { up: false, ..i.clone() }.render()).collect::<Vec<_>>().join(",");
            match kind {
                Kind::Spatial if all_up => format!("eps2up[{}]", bare()),
                Kind::Spatial if all_dn => format!("eps2dn[{}]", bare()),
                Kind::Spatial => format!("eps2[{}]", render_list(idx)),
                Kind::Internal => format!("eps3[{}]", render_list(idx)),
                Kind::Spacetime => format!("epsst[{}]", render_list(idx)),
            }
        }
        Factor::Delta(a, b) => format!("delta[{},{}]", a.render(), b.render()),
    }
}

/// Rename the dummies of `t` so none collides with `taken`.
pub(crate) fn rename_dummies_away(t: &Term, taken: &BTreeSet<String>) -> Term {
    let names: BTreeSet<String> = t.name_counts().into_keys().collect();
    let mut map = BTreeMap::new();
    let mut used: BTreeSet<String> = taken.union(&names).cloned().collect();
    for d in t.dummies() {
        if taken.contains(&d) {
            let fresh = fresh_name(Kind::of_name(&d), &used);
            used.insert(fresh.clone());
            map.insert(d, fresh);
        }
    }
    if map.is_empty() {
        t.clone()
    } else {
        t.rename(&map)
    }
}

/// Index names used for canonical dummies, per kind.
pub fn name_pool(kind: Kind) -> &'static [&'static str] {
    match kind {
        Kind::Spatial => &["a", "b", "c", "d", "f", "g", "h"],
        Kind::Internal => &["i", "j", "k", "l", "m", "n"],
        Kind::Spacetime => &["mu", "nu", "rho", "sigma", "alpha", "beta", "kappa"],
    }
}

pub fn fresh_name(kind: Kind, used: &BTreeSet<String>) -> String {
    for suffix in 0.. {
        for base in name_pool(kind) {
            let n = if suffix == 0 { base.to_string() } else { format!("{base}{suffix}") };
            if !used.contains(&n) {
                return n;
            }
        }
    }
    unreachable!()
}

/// A substitution rule `f[formal indices] → replacement`.
#[derive(Clone, Debug)]
pub struct FieldRule {
    pub pattern: FieldAtom,
    pub replacement: Expression,
}

impl FieldRule {
    pub fn apply(&self, occ: &FieldAtom) -> Option<Expression> {
        if occ.name != self.pattern.name || occ.odd != self.pattern.odd || occ.indices.len() != self.pattern.indices.len() {
            return None;
        }
        let mut map: BTreeMap<String, Index> = BTreeMap::new();
        for (p, a) in self.pattern.indices.iter().zip(&occ.indices) {
            match &p.label {
                Label::Value(v) => {
                    if a.label != Label::Value(*v) {
                        return None;
                    }
                }
                Label::Name(n) => {
                    map.insert(n.clone(), a.clone());
                }
            }
        }
        // rename replacement dummies away from occurrence names, then plug in
        let mut taken: BTreeSet<String> = occ.indices.iter().chain(&occ.derivs).filter_map(|i| i.name().map(str::to_string)).collect();
        taken.extend(map.keys().cloned());
        let mut terms = Vec::new();
        for t in self.replacement.terms() {
            let mut t = rename_dummies_away(t, &taken);
            for f in &mut t.factors {
                for ix in f.indices_mut() {
                    if let Label::Name(n) = &ix.label {
                        if let Some(actual) = map.get(n) {
                            ix.label = actual.label.clone();
                            ix.kind = actual.kind;
                            ix.up = actual.up;
                        }
                    }
                }
            }
            terms.push(t);
        }
        let mut rep = Expression::from_terms(terms);
        for d in &occ.derivs {
            rep = rep.derivative(d);
        }
        Some(rep)
    }
}

/// Simultaneous substitution: field patterns plus an optional map on coefficients.
#[derive(Clone, Default)]
pub struct Binding {
    pub fields: Vec<FieldRule>,
    pub lambda: Option<std::sync::Arc<dyn Fn(&Coeff) -> Coeff + Send + Sync>>,
}

impl Binding {
    pub fn empty() -> Self {
        Binding::default()
    }

    /// The Palatini limit `λ → 0`.
    pub fn lambda_zero() -> Self {
        Binding {
            fields: Vec::new(),
            lambda: Some(std::sync::Arc::new(|c: &Coeff| c.at_lambda_zero().expect("pole at λ = 0"))),
        }
    }

    pub fn field(mut self, pattern: FieldAtom, replacement: Expression) -> Self {
        self.fields.push(FieldRule { pattern, replacement });
        self
    }
}

/// Index conventions needed to evaluate components.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Conventions {
    pub metric: InternalMetric,
    /// Declared internal-slot positions (`true` = upper) per field name.
    pub declared_up: BTreeMap<String, Vec<Option<bool>>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InternalMetric {
    #[default]
    Euclidean,
    Lorentzian,
}

impl InternalMetric {
    /// Diagonal entry of the internal metric.
    pub fn diag(self, v: u8) -> i64 {
        match self {
            InternalMetric::Euclidean => 1,
            InternalMetric::Lorentzian => {
                if v == 0 {
                    -1
                } else {
                    1
                }
            }
        }
    }
}

/// Express a component polynomial as an expression with concrete indices.
pub fn poly_to_expression(p: &Poly) -> Expression {
    let mut terms = Vec::new();
    for (m, c) in p.terms() {
        let factors = m.iter().map(|a| Factor::Field(atom_to_field(a))).collect();
        terms.push(Term::new(c.clone(), factors));
    }
    Expression::from_terms(terms)
}

pub fn atom_to_field(a: &Atom) -> FieldAtom {
    let mut derivs = Vec::new();
    for (dir, &n) in a.d.iter().enumerate() {
        for _ in 0..n {
            derivs.push(Index::value(dir as u8, Kind::Spacetime, false));
        }
    }
    FieldAtom {
        name: a.comp.name.to_string(),
        indices: a.comp.idx.iter().map(|&v| Index::value(v, Kind::Spacetime, false)).collect(),
        derivs,
        odd: a.comp.odd,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fld(name: &str, idx: &[(&str, bool)]) -> Expression {
        Expression::field(FieldAtom::new(name, idx.iter().map(|(n, u)| Index::named(n, *u)).collect()))
    }

    #[test]
    fn kinds_from_names() {
        assert_eq!(Kind::of_name("mu"), Kind::Spacetime);
        assert_eq!(Kind::of_name("a"), Kind::Spatial);
        assert_eq!(Kind::of_name("j2"), Kind::Internal);
    }

    #[test]
    fn add_rejects_mismatched_free_indices() {
        let x = fld("A", &[("a", false), ("i", true)]);
        let y = fld("A", &[("b", false), ("i", true)]);
        assert!(matches!(x.add(&y), Err(ExprError::FreeIndexMismatch { .. })));
    }

    #[test]
    fn mul_renames_colliding_dummies() {
        let x = fld("A", &[("a", false), ("i", true)]).mul(&fld("A", &[("a", false), ("i", false)]));
        let sq = x.mul(&x);
        assert!(sq.validate().is_ok());
        assert!(sq.free_indices().is_empty());
    }
}
