//! The Hamilton-Jacobi constraint analysis on component polynomials.
//!
//! Constraints are grouped into families (one per momentum and time/space
//! slot, later one per integrability pass), each holding one density per
//! component. Brackets are computed as local kernels and reduced weakly with a
//! [`Reducer`] built from every known constraint.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::coeff::Coeff;
use crate::canon::perm_sign;
use crate::expr::{name_pool, Expression, Factor, Index, Kind, Term};
use crate::model::{FieldDecl, Model};
use crate::poly::{Atom, Comp, Poly};
use crate::variational::{poisson_kernel, CanonicalStructure, EqLabel, Kernel, Ranking, Reducer, VariationalError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HjError {
    #[error(transparent)]
    Variational(#[from] VariationalError),
    #[error("bracket matrix of the non-involutive constraints is singular ({} null vectors)", null_vectors.len())]
    Singular { null_vectors: Vec<Vec<Coeff>> },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("integrability loop did not converge after {passes} passes; open residues: {}", open.join("; "))]
    NonConvergence { passes: usize, open: Vec<String> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Origin {
    Primary,
    Integrability(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Classification {
    Unknown,
    Involutive,
    NonInvolutive,
}

/// A family of constraint densities sharing a label and an evolution parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Family {
    pub key: String,
    pub name: String,
    pub parameter: String,
    pub origin: Origin,
    pub class: Classification,
    pub members: Vec<(Vec<u8>, Poly)>,
}

impl Family {
    pub fn labels(&self) -> impl Iterator<Item = (EqLabel, &Poly)> {
        self.members.iter().map(|(i, p)| (EqLabel::new(&self.key, i), p))
    }
}

/// Single constraint view: `(label, density, origin, classification, parameter)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hamiltonian {
    pub label: EqLabel,
    pub name: String,
    pub density: Poly,
    pub origin: Origin,
    pub class: Classification,
    pub parameter: String,
}

pub fn hamiltonians(families: &[Family]) -> Vec<Hamiltonian> {
    families
        .iter()
        .flat_map(|f| {
            f.members.iter().map(move |(i, p)| Hamiltonian {
                label: EqLabel::new(&f.key, i),
                name: f.name.clone(),
                density: p.clone(),
                origin: f.origin,
                class: f.class,
                parameter: f.parameter.clone(),
            })
        })
        .collect()
}

/// Primary constraints, velocity coefficients and the canonical Hamiltonian.
#[derive(Clone, Debug, PartialEq)]
pub struct Momenta {
    pub families: Vec<Family>,
    pub velocity_coefficients: Vec<(Comp, Poly)>,
    pub h0: Poly,
}

fn family_key(f: &FieldDecl, idx: &[u8]) -> String {
    match f.slots.first() {
        Some((Kind::Spacetime, _)) => format!("{}:{}", f.momentum, if idx[0] == 0 { "0" } else { "a" }),
        _ => f.momentum.clone(),
    }
}

fn labelled(m: &Model, key: &str, origin: Origin) -> Family {
    let (name, parameter) = match m.label(key) {
        Some(l) => (l.name.clone(), l.parameter.clone()),
        None => (key.to_string(), format!("s_{key}")),
    };
    Family { key: key.to_string(), name, parameter, origin, class: Classification::Unknown, members: Vec::new() }
}

pub fn extract_momenta(m: &Model) -> Momenta {
    let l = m.split_lagrangian();
    let mut families: Vec<Family> = Vec::new();
    let mut velocity_coefficients = Vec::new();
    let mut kinetic = Poly::zero();
    for f in m.configuration_fields() {
        for q in f.components() {
            let qdot = Atom::new(q.clone()).with_d([1, 0, 0]);
            let a = l.d_atom(&qdot);
            kinetic.add_assign(&a.mul(&Poly::atom(qdot)));
            let p = Poly::atom(Atom::new(Comp::new(&f.momentum, &q.idx)));
            let key = family_key(f, &q.idx);
            if !families.iter().any(|x| x.key == key) {
                families.push(labelled(m, &key, Origin::Primary));
            }
            let fam = families.iter_mut().find(|x| x.key == key).expect("just inserted");
            fam.members.push((q.idx.to_vec(), p.sub(&a)));
            velocity_coefficients.push((q, a));
        }
    }
    let h0 = kinetic.sub(&l);
    Momenta { families, velocity_coefficients, h0 }
}

/// Reducer for weak equality modulo the given families.
pub fn weak_reducer(cs: &CanonicalStructure, families: &[Family]) -> Reducer {
    let mut r = Reducer::new(Ranking::from_structure(cs));
    r.add_all(families.iter().flat_map(|f| f.labels().map(|(l, p)| (l, p.clone()))).collect());
    r
}

/// Reducer that trades fields for momenta using the non-involutive constraints.
pub fn lifting_reducer(cs: &CanonicalStructure, families: &[Family]) -> Reducer {
    let mut r = Reducer::new(Ranking::from_structure(cs).lifted());
    r.add_all(
        families
            .iter()
            .filter(|f| f.class == Classification::NonInvolutive)
            .flat_map(|f| f.labels().map(|(l, p)| (l, p.clone())))
            .collect(),
    );
    r
}

fn kernel_weakly_zero(k: &Kernel, r: &Reducer) -> bool {
    k.terms().all(|(_, c)| r.is_weakly_zero(c))
}

/// Mark each family involutive or not by the weak vanishing of its brackets.
pub fn classify(families: &mut [Family], engine: &BracketEngine) -> Result<(), HjError> {
    let r = weak_reducer(&engine.cs, families);
    let all: Vec<(usize, Poly)> = families.iter().enumerate().flat_map(|(k, f)| f.members.iter().map(move |(_, p)| (k, p.clone()))).collect();
    let mut non = BTreeSet::new();
    for (i, (fi, p)) in all.iter().enumerate() {
        for (fj, q) in &all[i..] {
            if non.contains(fi) && non.contains(fj) {
                continue;
            }
            let k = engine.bracket(p, q)?;
            if !kernel_weakly_zero(&k, &r) {
                non.insert(*fi);
                non.insert(*fj);
            }
        }
    }
    for (k, f) in families.iter_mut().enumerate() {
        f.class = if non.contains(&k) { Classification::NonInvolutive } else { Classification::Involutive };
    }
    Ok(())
}

/// Bracket matrix of the non-involutive constraints and its exact inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct BracketMatrix {
    pub basis: Vec<EqLabel>,
    pub densities: Vec<Poly>,
    pub entries: Vec<Vec<Coeff>>,
    pub inverse: Vec<Vec<Coeff>>,
}

impl BracketMatrix {
    pub fn product(&self) -> Vec<Vec<Coeff>> {
        mat_mul(&self.entries, &self.inverse)
    }

    pub fn is_antisymmetric(&self) -> bool {
        let n = self.entries.len();
        (0..n).all(|i| (0..n).all(|j| self.entries[i][j] == -&self.entries[j][i]))
    }
}

pub fn mat_mul(a: &[Vec<Coeff>], b: &[Vec<Coeff>]) -> Vec<Vec<Coeff>> {
    let n = a.len();
    let m = b.first().map(Vec::len).unwrap_or(0);
    let mut out = vec![vec![Coeff::zero(); m]; n];
    for i in 0..n {
        for (k, aik) in a[i].iter().enumerate() {
            if aik.is_zero() {
                continue;
            }
            for j in 0..m {
                if !b[k][j].is_zero() {
                    out[i][j] = &out[i][j] + &(aik * &b[k][j]);
                }
            }
        }
    }
    out
}

/// Exact inverse by Gauss-Jordan elimination; on failure returns a null-space basis.
pub fn invert(a: &[Vec<Coeff>]) -> Result<Vec<Vec<Coeff>>, Vec<Vec<Coeff>>> {
    let n = a.len();
    let mut m: Vec<Vec<Coeff>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { Coeff::one() } else { Coeff::zero() }));
            r
        })
        .collect();
    let mut pivots: Vec<usize> = Vec::new();
    let mut row = 0;
    for col in 0..n {
        let Some(p) = (row..n).find(|&r| !m[r][col].is_zero()) else { continue };
        m.swap(row, p);
        let inv = m[row][col].inverse().expect("nonzero pivot");
        for x in m[row].iter_mut() {
            *x = &*x * &inv;
        }
        for r in 0..n {
            if r != row && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                let pr = m[row].clone();
                for (x, y) in m[r].iter_mut().zip(&pr) {
                    if !y.is_zero() {
                        *x = &*x - &(&f * y);
                    }
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    if pivots.len() == n {
        return Ok(m.into_iter().map(|r| r[n..].to_vec()).collect());
    }
    let mut nulls = Vec::new();
    for free in (0..n).filter(|c| !pivots.contains(c)) {
        let mut v = vec![Coeff::zero(); n];
        v[free] = Coeff::one();
        for (r, &pc) in pivots.iter().enumerate() {
            v[pc] = -&m[r][free];
        }
        nulls.push(v);
    }
    Err(nulls)
}

pub fn assemble_and_invert(families: &[Family], cs: &CanonicalStructure) -> Result<Option<BracketMatrix>, HjError> {
    let mut basis = Vec::new();
    let mut densities = Vec::new();
    for f in families.iter().filter(|f| f.class == Classification::NonInvolutive) {
        for (l, p) in f.labels() {
            basis.push(l);
            densities.push(p.clone());
        }
    }
    if basis.is_empty() {
        return Ok(None);
    }
    let n = basis.len();
    let mut entries = vec![vec![Coeff::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let k = poisson_kernel(&densities[i], &densities[j], cs)?;
            if !k.is_ultralocal() {
                return Err(HjError::Unsupported(format!("bracket of {} and {} carries derivatives of delta", basis[i], basis[j])));
            }
            entries[i][j] = k.integrate().as_constant().ok_or_else(|| {
                HjError::Unsupported(format!("bracket of {} and {} depends on the fields", basis[i], basis[j]))
            })?;
        }
    }
    let inverse = invert(&entries).map_err(|null_vectors| HjError::Singular { null_vectors })?;
    Ok(Some(BracketMatrix { basis, densities, entries, inverse }))
}

/// Poisson brackets corrected by the inverse bracket matrix.
#[derive(Clone, Debug)]
pub struct BracketEngine {
    pub cs: CanonicalStructure,
    pub matrix: Option<BracketMatrix>,
}

impl BracketEngine {
    pub fn new(cs: CanonicalStructure, matrix: Option<BracketMatrix>) -> Self {
        BracketEngine { cs, matrix }
    }

    pub fn poisson(&self, f: &Poly, g: &Poly) -> Result<Kernel, HjError> {
        Ok(poisson_kernel(f, g, &self.cs)?)
    }

    /// `{f(x), g(y)}* = {f, g} − {f, χ_α} C⁻¹_{αβ} {χ_β, g}`.
    pub fn bracket(&self, f: &Poly, g: &Poly) -> Result<Kernel, HjError> {
        let mut k = poisson_kernel(f, g, &self.cs)?;
        let Some(m) = &self.matrix else { return Ok(k) };
        let left: Vec<Kernel> = m.densities.iter().map(|c| poisson_kernel(f, c, &self.cs)).collect::<Result<_, _>>()?;
        if left.iter().all(Kernel::is_zero) {
            return Ok(k);
        }
        let right: Vec<Kernel> = m.densities.iter().map(|c| poisson_kernel(c, g, &self.cs)).collect::<Result<_, _>>()?;
        for (a, l) in left.iter().enumerate() {
            if l.is_zero() {
                continue;
            }
            for (b, r) in right.iter().enumerate() {
                if r.is_zero() || m.inverse[a][b].is_zero() {
                    continue;
                }
                k = k.sub(&l.compose(&m.inverse[a][b], r)?);
            }
        }
        Ok(k)
    }

    /// `∫dy {f(x), g(y)}*`.
    pub fn bracket_integrated(&self, f: &Poly, g: &Poly) -> Result<Poly, HjError> {
        Ok(self.bracket(f, g)?.integrate())
    }

    /// `∫dy Σ_k {f(x), h_k(y)}* t_k(y)`.
    pub fn bracket_smeared(&self, f: &Poly, family: &Family, test: &str) -> Result<Poly, HjError> {
        let mut out = Poly::zero();
        for (idx, h) in &family.members {
            let t = Poly::atom(Atom::field(test, idx));
            out.add_assign(&self.bracket(f, h)?.apply(&t));
        }
        Ok(out)
    }
}

/// Record of one integrability pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Pass {
    pub number: usize,
    pub examined: Vec<String>,
    pub new_families: Vec<String>,
}

/// Run the integrability loop. New families are appended to `families` and
/// classified; the bracket matrix is rebuilt if one turns out non-involutive.
pub fn integrability_loop(
    m: &Model,
    families: &mut Vec<Family>,
    h0: &Poly,
    engine: &mut BracketEngine,
    max_iter: usize,
) -> Result<Vec<Pass>, HjError> {
    let mut examined: BTreeSet<String> = BTreeSet::new();
    let mut passes = Vec::new();
    for number in 1..=max_iter {
        let reducer = weak_reducer(&engine.cs, families);
        let mut new: Vec<Family> = Vec::new();
        let mut looked = Vec::new();
        for f in families.iter().filter(|f| f.class == Classification::Involutive && !examined.contains(&f.key)) {
            looked.push(f.key.clone());
            let mut fam = labelled(m, &format!("d({})", f.key), Origin::Integrability(number));
            for (idx, h) in &f.members {
                let r = engine.bracket_integrated(h, h0)?;
                let res = reducer.reduce(&r).residue;
                if !res.is_zero() {
                    fam.members.push((idx.clone(), res));
                }
            }
            if !fam.members.is_empty() {
                new.push(fam);
            }
        }
        examined.extend(looked.iter().cloned());
        let names: Vec<String> = new.iter().map(|f| f.key.clone()).collect();
        passes.push(Pass { number, examined: looked, new_families: names.clone() });
        if new.is_empty() {
            return Ok(passes);
        }
        families.extend(new);
        classify_new(families, engine, &names)?;
        if families.iter().any(|f| names.contains(&f.key) && f.class == Classification::NonInvolutive) {
            engine.matrix = assemble_and_invert(families, &engine.cs)?;
        }
    }
    let open = families
        .iter()
        .filter(|f| matches!(f.origin, Origin::Integrability(n) if n == max_iter))
        .flat_map(|f| f.labels().map(|(l, p)| format!("{l}: {p}")).collect::<Vec<_>>())
        .collect();
    Err(HjError::NonConvergence { passes: max_iter, open })
}

fn classify_new(families: &mut [Family], engine: &BracketEngine, names: &[String]) -> Result<(), HjError> {
    let r = weak_reducer(&engine.cs, families);
    let mut non = BTreeSet::new();
    for (k, f) in families.iter().enumerate().filter(|(_, f)| names.contains(&f.key)) {
        'outer: for (_, p) in &f.members {
            for (j, g) in families.iter().enumerate() {
                for (_, q) in &g.members {
                    if !kernel_weakly_zero(&engine.bracket(p, q)?, &r) {
                        non.insert(k);
                        if g.class == Classification::Involutive || names.contains(&g.key) {
                            non.insert(j);
                        }
                        break 'outer;
                    }
                }
            }
        }
    }
    for (k, f) in families.iter_mut().enumerate() {
        if names.contains(&f.key) || non.contains(&k) {
            f.class = if non.contains(&k) { Classification::NonInvolutive } else { Classification::Involutive };
        }
    }
    Ok(())
}

/// Test-field names that do not clash with the model.
pub fn test_names(m: &Model) -> (String, String) {
    let taken: BTreeSet<String> = m.fields.iter().flat_map(|f| [f.name.clone(), f.momentum.clone()]).collect();
    let pick = |base: &str| {
        let mut n = base.to_string();
        while taken.contains(&n) {
            n.push('_');
        }
        n
    };
    (pick("N"), pick("M"))
}

/// One structure-function term: `coefficient · ∂^derivative(constraint)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureTerm {
    pub constraint: EqLabel,
    pub derivative: [u8; 3],
    pub coefficient: Poly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraEntry {
    pub left: String,
    pub right: String,
    pub density: Poly,
    pub structure: Vec<StructureTerm>,
    pub residue: Poly,
}

/// Smeared brackets `{F[N], G[M]}*` of every pair of involutive families.
pub fn constraint_algebra(m: &Model, families: &[Family], engine: &BracketEngine) -> Result<Vec<AlgebraEntry>, HjError> {
    let (n, mm) = test_names(m);
    let reducer = weak_reducer(&engine.cs, families);
    let inv: Vec<&Family> = families.iter().filter(|f| f.class == Classification::Involutive).collect();
    let mut out = Vec::new();
    for (i, f) in inv.iter().enumerate() {
        for g in &inv[i..] {
            let mut density = Poly::zero();
            for (idx, h) in &f.members {
                let t = Poly::atom(Atom::field(&n, idx));
                density.add_assign(&t.mul(&engine.bracket_smeared(h, g, &mm)?));
            }
            let red = reducer.reduce(&density);
            let structure = red
                .multipliers
                .into_iter()
                .map(|((constraint, derivative), coefficient)| StructureTerm { constraint, derivative, coefficient })
                .collect();
            out.push(AlgebraEntry { left: f.key.clone(), right: g.key.clone(), density, structure, residue: red.residue });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DofCount {
    pub phase_space: usize,
    pub non_involutive: usize,
    pub involutive: usize,
    /// `(phase − non-involutive − 2·involutive)/2`, when a non-negative integer.
    pub standard: Option<usize>,
    pub standard_numerator: i64,
    pub dynamical: usize,
    /// Dynamical fields minus involutive constraints.
    pub field_count: i64,
}

pub fn dof_count(m: &Model, families: &[Family], ce: &[CharacteristicEquation]) -> DofCount {
    let count = |c: Classification| families.iter().filter(|f| f.class == c).map(|f| f.members.len()).sum::<usize>();
    let phase_space = 2 * m.configuration_components().len();
    let non_involutive = count(Classification::NonInvolutive);
    let involutive = count(Classification::Involutive);
    let num = phase_space as i64 - non_involutive as i64 - 2 * involutive as i64;
    let standard = (num >= 0 && num % 2 == 0).then(|| (num / 2) as usize);
    let dynamical = ce.iter().filter(|c| !c.multiplier).count();
    DofCount { phase_space, non_involutive, involutive, standard, standard_numerator: num, dynamical, field_count: dynamical as i64 - involutive as i64 }
}

/// `df = {f, H'}* dt + Σ_k {f, h_k}* d(param_k)` for one field component.
#[derive(Clone, Debug, PartialEq)]
pub struct CharacteristicEquation {
    pub field: Comp,
    pub dt: Poly,
    /// Parameter parts: (family key, parameter name, contribution).
    pub parts: Vec<(String, String, Poly)>,
    pub multiplier: bool,
}

/// Name of the differential of a family parameter, used as a field name.
pub fn differential_name(parameter: &str) -> String {
    format!("d{parameter}")
}

pub fn characteristic_equations(m: &Model, families: &[Family], h0: &Poly, engine: &BracketEngine) -> Result<Vec<CharacteristicEquation>, HjError> {
    let mut out = Vec::new();
    for q in m.configuration_components() {
        let f = Poly::atom(Atom::new(q.clone()));
        let dt = engine.bracket_integrated(&f, h0)?;
        let mut parts = Vec::new();
        for fam in families.iter().filter(|f| f.class == Classification::Involutive) {
            let p = engine.bracket_smeared(&f, fam, &differential_name(&fam.parameter))?;
            if !p.is_zero() {
                parts.push((fam.key.clone(), fam.parameter.clone(), p));
            }
        }
        let primary_only = parts.iter().all(|(k, _, _)| families.iter().any(|f| &f.key == k && f.origin == Origin::Primary));
        let multiplier = dt.is_zero() && primary_only;
        out.push(CharacteristicEquation { field: q, dt, parts, multiplier });
    }
    Ok(out)
}

/// A gauge direction: `δ(field) = expression` for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeTransformation {
    pub field: Comp,
    pub family: String,
    pub parameter: String,
    pub expression: Poly,
}

/// Parameter parts of the characteristic equations of secondary families, unscaled.
pub fn gauge_transformations(families: &[Family], ce: &[CharacteristicEquation]) -> Vec<GaugeTransformation> {
    let secondary: BTreeSet<&str> = families.iter().filter(|f| f.origin != Origin::Primary).map(|f| f.key.as_str()).collect();
    let mut out = Vec::new();
    for c in ce.iter().filter(|c| !c.multiplier) {
        for (k, p, e) in &c.parts {
            if secondary.contains(k.as_str()) {
                out.push(GaugeTransformation { field: c.field.clone(), family: k.clone(), parameter: p.clone(), expression: e.clone() });
            }
        }
    }
    out
}

/// Everything the Hamilton-Jacobi analysis produces.
#[derive(Clone, Debug)]
pub struct HjAnalysis {
    pub momenta: Momenta,
    pub primary_classes: Vec<(String, Classification)>,
    pub families: Vec<Family>,
    pub engine: BracketEngine,
    /// Bracket matrix of the primary non-involutive constraints.
    pub matrix: Option<BracketMatrix>,
    pub passes: Vec<Pass>,
    pub algebra: Vec<AlgebraEntry>,
    pub characteristic: Vec<CharacteristicEquation>,
    pub gauge: Vec<GaugeTransformation>,
    pub dof: DofCount,
}

impl HjAnalysis {
    pub fn family(&self, key: &str) -> Option<&Family> {
        self.families.iter().find(|f| f.key == key)
    }

    pub fn weak_reducer(&self) -> Reducer {
        weak_reducer(&self.engine.cs, &self.families)
    }

    /// Rewrite with momenta in place of the fields fixed by non-involutive constraints.
    pub fn lift(&self, p: &Poly) -> Poly {
        lifting_reducer(&self.engine.cs, &self.families).reduce(p).residue
    }
}

pub fn analyze(m: &Model, max_iter: usize) -> Result<HjAnalysis, HjError> {
    let momenta = extract_momenta(m);
    let cs = CanonicalStructure::from_model(m);
    let mut families = momenta.families.clone();
    let mut engine = BracketEngine::new(cs.clone(), None);
    classify(&mut families, &engine)?;
    let primary_classes = families.iter().map(|f| (f.key.clone(), f.class)).collect();
    let matrix = assemble_and_invert(&families, &cs)?;
    engine.matrix = matrix.clone();
    let passes = integrability_loop(m, &mut families, &momenta.h0, &mut engine, max_iter)?;
    let algebra = constraint_algebra(m, &families, &engine)?;
    let characteristic = characteristic_equations(m, &families, &momenta.h0, &engine)?;
    let gauge = gauge_transformations(&families, &characteristic);
    let dof = dof_count(m, &families, &characteristic);
    Ok(HjAnalysis { momenta, primary_classes, families, engine, matrix, passes, algebra, characteristic, gauge, dof })
}

/// Field components grouped like constraint families, for block displays.
pub fn atom_groups(m: &Model) -> Vec<(String, Vec<Comp>)> {
    let mut groups: Vec<(String, Vec<Comp>)> = Vec::new();
    for f in m.configuration_fields() {
        for decl in [f.clone(), f.momentum_decl()] {
            for q in f.components() {
                let key = match f.slots.first() {
                    Some((Kind::Spacetime, _)) => format!("{}:{}", decl.name, if q.idx[0] == 0 { "0" } else { "a" }),
                    _ => decl.name.clone(),
                };
                let c = Comp::new(&decl.name, &q.idx);
                match groups.iter_mut().find(|g| g.0 == key) {
                    Some(g) => g.1.push(c),
                    None => groups.push((key, vec![c])),
                }
            }
        }
    }
    groups
}

/// Slot kinds of a family's component tuples, with a fixed time slot dropped.
pub fn family_shape(m: &Model, key: &str) -> Option<(Vec<Kind>, bool)> {
    let base = key.trim_start_matches("d(").trim_end_matches(')');
    let (name, part) = match base.split_once(':') {
        Some((n, p)) => (n, Some(p)),
        None => (base, None),
    };
    let f = m.configuration_fields().find(|f| f.momentum == name || f.name == name)?;
    let mut kinds: Vec<Kind> = f.slots.iter().map(|s| s.0).collect();
    match part {
        Some("0") => {
            kinds.remove(0);
            Some((kinds, true))
        }
        Some(_) => {
            kinds[0] = Kind::Spatial;
            Some((kinds, false))
        }
        None => Some((kinds, false)),
    }
}

/// One block of a matrix or bracket table between two groups.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub row: String,
    pub col: String,
    /// Compact ε/δ form in free indices, when the block fits one.
    pub compact: Option<Expression>,
    /// Nonzero per-component kernels.
    pub components: Vec<(Comp, Comp, Kernel)>,
}

fn slot_names(kinds: &[Kind], offset: usize) -> Vec<String> {
    let mut seen: BTreeMap<Kind, usize> = BTreeMap::new();
    kinds
        .iter()
        .map(|k| {
            let n = seen.entry(*k).or_insert(0);
            let name = name_pool(*k)[2 * *n + offset].to_string();
            *n += 1;
            name
        })
        .collect()
}

/// Fit `grid[(row, col)]` against products of per-slot δ and spatial ε.
/// `up` puts spatial indices up and internal ones down, and the reverse otherwise.
pub fn fit_block(grid: &BTreeMap<(Vec<u8>, Vec<u8>), Coeff>, rows: &[Kind], cols: &[Kind], up: bool) -> Option<Expression> {
    if grid.values().all(Coeff::is_zero) {
        return Some(Expression::zero());
    }
    if rows != cols {
        return None;
    }
    let mut basis: Vec<Vec<bool>> = vec![Vec::new()];
    for k in rows {
        let opts: &[bool] = if *k == Kind::Spatial { &[false, true] } else { &[false] };
        basis = basis.into_iter().flat_map(|b| opts.iter().map(move |&e| [b.clone(), vec![e]].concat())).collect();
    }
    let value = |b: &[bool], r: &[u8], c: &[u8]| -> i64 {
        b.iter()
            .enumerate()
            .map(|(k, &eps)| if eps { perm_sign(Kind::Spatial, &[r[k], c[k]]) } else { (r[k] == c[k]) as i64 })
            .product()
    };
    let mut fitted = Vec::new();
    for b in &basis {
        let mut num = Coeff::zero();
        let mut norm = 0i64;
        for ((r, c), v) in grid {
            let x = value(b, r, c);
            norm += x * x;
            if x != 0 {
                num = &num + &(v * &Coeff::int(x));
            }
        }
        if norm != 0 && !num.is_zero() {
            fitted.push((b.clone(), &num * &Coeff::rational(1, norm)));
        }
    }
    for ((r, c), v) in grid {
        let mut total = Coeff::zero();
        for (b, k) in &fitted {
            total = &total + &(k * &Coeff::int(value(b, r, c)));
        }
        if &total != v {
            return None;
        }
    }
    let rn = slot_names(rows, 0);
    let cn = slot_names(cols, 1);
    let terms = fitted
        .into_iter()
        .map(|(b, k)| {
            let factors = b
                .iter()
                .enumerate()
                .map(|(s, &eps)| {
                    let pos = if rows[s] == Kind::Internal { !up } else { up };
                    let (x, y) = (Index::named(&rn[s], pos), Index::named(&cn[s], pos));
                    if eps {
                        Factor::Eps { kind: Kind::Spatial, idx: vec![x, y] }
                    } else {
                        Factor::Delta(x, y)
                    }
                })
                .collect();
            Term::new(k, factors)
        })
        .collect();
    Some(Expression::from_terms(terms))
}

fn reduced_index(idx: &[u8], dropped: bool) -> Vec<u8> {
    if dropped {
        idx[1..].to_vec()
    } else {
        idx.to_vec()
    }
}

fn block_of(m: &Model, row: &str, col: &str, cells: Vec<(Comp, Comp, Kernel)>, up: bool) -> Block {
    let shapes = family_shape(m, row).zip(family_shape(m, col));
    let mut grid = BTreeMap::new();
    let mut fits = shapes.is_some();
    for (a, b, k) in &cells {
        match (&shapes, k.is_ultralocal(), k.integrate().as_constant()) {
            (Some(((_, dr), (_, dc))), true, Some(c)) => {
                grid.insert((reduced_index(&a.idx, *dr), reduced_index(&b.idx, *dc)), c);
            }
            _ => fits = false,
        }
    }
    let compact = if fits {
        let ((rk, _), (ck, _)) = shapes.expect("checked");
        fit_block(&grid, &rk, &ck, up)
    } else {
        None
    };
    let components = cells.into_iter().filter(|c| !c.2.is_zero()).collect();
    Block { row: row.to_string(), col: col.to_string(), compact, components }
}

impl BracketMatrix {
    fn family_spans(&self) -> Vec<(String, Vec<usize>)> {
        let mut spans: Vec<(String, Vec<usize>)> = Vec::new();
        for (k, l) in self.basis.iter().enumerate() {
            match spans.iter_mut().find(|s| s.0 == l.family) {
                Some(s) => s.1.push(k),
                None => spans.push((l.family.clone(), vec![k])),
            }
        }
        spans
    }

    fn blocks_of(&self, m: &Model, which: &[Vec<Coeff>], up: bool) -> Vec<Block> {
        let spans = self.family_spans();
        let comp = |k: usize| Comp::new(&self.basis[k].family, &self.basis[k].index);
        let mut out = Vec::new();
        for (rf, rs) in &spans {
            for (cf, cs) in &spans {
                let cells = rs
                    .iter()
                    .flat_map(|&r| cs.iter().map(move |&c| (r, c)))
                    .map(|(r, c)| (comp(r), comp(c), Kernel::ultralocal(Poly::constant(which[r][c].clone()))))
                    .collect();
                out.push(block_of(m, rf, cf, cells, up));
            }
        }
        out
    }

    /// Blocks of the matrix, spatial indices up.
    pub fn blocks(&self, m: &Model) -> Vec<Block> {
        self.blocks_of(m, &self.entries, true)
    }

    /// Blocks of the inverse, spatial indices down.
    pub fn inverse_blocks(&self, m: &Model) -> Vec<Block> {
        self.blocks_of(m, &self.inverse, false)
    }
}

/// Generalized brackets of every pair of canonical atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct BracketTable {
    pub groups: Vec<(String, Vec<Comp>)>,
    pub kernels: BTreeMap<(Comp, Comp), Kernel>,
}

impl BracketTable {
    pub fn get(&self, a: &Comp, b: &Comp) -> Option<&Kernel> {
        self.kernels.get(&(a.clone(), b.clone()))
    }

    /// Blocks between atom groups, spatial indices down.
    pub fn blocks(&self, m: &Model) -> Vec<Block> {
        let mut out = Vec::new();
        for (rg, ra) in &self.groups {
            for (cg, ca) in &self.groups {
                let cells = ra
                    .iter()
                    .flat_map(|a| ca.iter().map(move |b| (a, b)))
                    .map(|(a, b)| (a.clone(), b.clone(), self.kernels[&(a.clone(), b.clone())].clone()))
                    .collect();
                out.push(block_of(m, rg, cg, cells, false));
            }
        }
        out
    }
}

pub fn bracket_table(m: &Model, engine: &BracketEngine) -> Result<BracketTable, HjError> {
    let groups = atom_groups(m);
    let atoms: Vec<&Comp> = groups.iter().flat_map(|g| g.1.iter()).collect();
    let mut kernels = BTreeMap::new();
    for a in &atoms {
        let pa = Poly::atom(Atom::new((*a).clone()));
        for b in &atoms {
            let pb = Poly::atom(Atom::new((*b).clone()));
            kernels.insert(((*a).clone(), (*b).clone()), engine.bracket(&pa, &pb)?);
        }
    }
    Ok(BracketTable { groups, kernels })
}
