//! Covariant phase space on component polynomials: symplectic potential and
//! current, linearized equations and the checks built on them.
//!
//! Field variations are odd atoms; `Poly::variation` is the field-space
//! exterior derivative.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::canon::perm_sign;
use crate::coeff::Coeff;
use crate::expr::Kind;
use crate::hj::HjAnalysis;
use crate::model::{euler_lagrange, FieldEquation, Model, ModelError};
use crate::poly::{Atom, Comp, Poly};
use crate::variational::{poisson_kernel, poisson_smeared, CanonicalStructure, EqLabel, Kernel, Ranking, Reducer, VariationalError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CovariantError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Variational(#[from] VariationalError),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// Name of the diffeomorphism vector field.
pub const VECTOR: &str = "zeta";
/// Name of the internal rotation parameter.
pub const ROTATION: &str = "theta";

fn delta_atom(c: &Comp, d: [u8; 3]) -> Atom {
    Atom { comp: c.with_odd(true), d }
}

/// First variation split as `δL = Σ E_q δq + ∂_μ Ψ^μ`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryVariation {
    pub equations: Vec<FieldEquation>,
    pub psi: [Poly; 3],
    /// `δL − Σ δq E_q − ∂_μ Ψ^μ`, zero by construction.
    pub remainder: Poly,
}

pub fn boundary_variation(m: &Model) -> Result<BoundaryVariation, CovariantError> {
    let l = m.covariant_lagrangian()?;
    if l.atoms().iter().any(|a| a.order() > 1) {
        return Err(CovariantError::Unsupported("covariant action with second derivatives".into()));
    }
    let equations = euler_lagrange(m)?;
    let mut psi = [Poly::zero(), Poly::zero(), Poly::zero()];
    for q in m.configuration_components() {
        for (mu, p) in psi.iter_mut().enumerate() {
            let mut d = [0u8; 3];
            d[mu] = 1;
            let conj = l.d_atom(&Atom::new(q.clone()).with_d(d));
            p.add_assign(&Poly::atom(delta_atom(&q, [0; 3])).mul(&conj));
        }
    }
    let mut remainder = l.variation();
    for e in &equations {
        remainder = remainder.sub(&Poly::atom(delta_atom(&e.component, [0; 3])).mul(&e.equation));
    }
    for (mu, p) in psi.iter().enumerate() {
        remainder = remainder.sub(&p.total_derivative(mu));
    }
    Ok(BoundaryVariation { equations, psi, remainder })
}

/// `J^μ = δΨ^μ`.
pub fn symplectic_form(psi: &[Poly; 3]) -> [Poly; 3] {
    [psi[0].variation(), psi[1].variation(), psi[2].variation()]
}

/// `∂_μ X^μ`.
pub fn divergence(x: &[Poly; 3]) -> Poly {
    let mut out = Poly::zero();
    for (mu, p) in x.iter().enumerate() {
        out.add_assign(&p.total_derivative(mu));
    }
    out
}

/// First-order part of the field equations under `q → q + δq`.
pub fn linearize(equations: &[FieldEquation]) -> Vec<FieldEquation> {
    equations.iter().map(|e| FieldEquation { component: e.component.clone(), equation: e.equation.variation() }).collect()
}

fn equation_reducer(m: &Model, equations: &[FieldEquation], family: &str) -> Reducer {
    let names: Vec<String> = m.configuration_fields().map(|f| f.name.clone()).collect();
    let mut r = Reducer::new(Ranking::new(names, Vec::new()));
    r.add_all(equations.iter().map(|e| (EqLabel::new(&format!("{family}:{}", e.component.name), &e.component.idx), e.equation.clone())).collect());
    r
}

/// Residue of `∂_μ J^μ` modulo the linearized equations.
pub fn verify_current_conservation(m: &Model, j: &[Poly; 3], linearized: &[FieldEquation]) -> Poly {
    equation_reducer(m, linearized, "lin").reduce(&divergence(j)).residue
}

fn internal_slot(m: &Model, name: &str) -> Option<usize> {
    m.fields.iter().find(|f| f.name == name)?.slots.iter().position(|s| s.0 == Kind::Internal)
}

/// First-order part of `J' − J` when the variations of the fields selected by
/// `rotated` are rotated, `δq^i → δq^i + ε^i_{jl} θ^j δq^l`.
pub fn verify_internal_invariance(m: &Model, j: &[Poly; 3], rotated: &dyn Fn(&str) -> bool) -> [Poly; 3] {
    let metric = m.metric;
    let rotate = |a: &Atom| -> Option<Poly> {
        if !a.is_odd() || !rotated(&a.comp.name) {
            return None;
        }
        let slot = internal_slot(m, &a.comp.name)?;
        let i = a.comp.idx[slot];
        let mut out = Poly::atom(a.clone());
        for jj in 0..3u8 {
            for l in 0..3u8 {
                let s = perm_sign(Kind::Internal, &[i, jj, l]) * metric.diag(i);
                if s == 0 {
                    continue;
                }
                let mut c = a.comp.clone();
                c.idx[slot] = l;
                let theta = Atom::field(ROTATION, &[jj]);
                out.add_assign(&Poly::product(Coeff::int(s), [theta, Atom { comp: c, d: a.d }]));
            }
        }
        Some(out)
    };
    let is_theta = |a: &Atom| &*a.comp.name == ROTATION;
    let part = |p: &Poly| p.map_atoms(&rotate).part_of_degree(1, is_theta);
    [part(&j[0]), part(&j[1]), part(&j[2])]
}

/// Coefficient `c` in `δq_a ⊃ c·∂_a(dP)` for the gauge parameter `P` of `family` acting on `field`.
fn gauge_leading_coefficient(hj: &HjAnalysis, family: &str, field: &str) -> Option<Coeff> {
    hj.gauge.iter().filter(|g| g.family == family && &*g.field.name == field && g.field.idx[0] != 0).find_map(|g| {
        let mut at = g.field.idx.to_vec();
        at[0] = 0;
        let lead = Atom::field(&crate::hj::differential_name(&g.parameter), &at).deriv(g.field.idx[0] as usize);
        g.expression.d_atom(&lead).as_constant().filter(|c| !c.is_zero())
    })
}

/// Gauge parameters expressed through the vector field: each secondary family
/// `d(K:0)` of the momentum `K` of `q` gets `ζ^ρ q_ρ / c`, with `c` its leading gauge coefficient.
fn diffeo_parameter(m: &Model, hj: &HjAnalysis, family: &str, idx: &[u8]) -> Option<Poly> {
    let inner = family.strip_prefix("d(")?.strip_suffix(":0)")?;
    let f = m.configuration_fields().find(|f| f.momentum == inner)?;
    let scale = gauge_leading_coefficient(hj, family, &f.name)?.inverse()?;
    let mut out = Poly::zero();
    for rho in 0..3u8 {
        let mut qi = idx.to_vec();
        qi[0] = rho;
        let q = Atom::new(Comp::new(&f.name, &qi));
        out.add_assign(&Poly::product(scale.clone(), [Atom::field(VECTOR, &[rho]), q]));
    }
    Some(out)
}

/// Lie derivative `ζ^ρ ∂_ρ q_α + q_ρ ∂_α ζ^ρ` of a one-form component.
pub fn lie_derivative(q: &Comp) -> Poly {
    let alpha = q.idx[0] as usize;
    let mut out = Poly::zero();
    for rho in 0..3u8 {
        let z = Atom::field(VECTOR, &[rho]);
        out.add_assign(&Poly::atom(z.clone()).mul(&Poly::atom(Atom::new(q.clone()).deriv(rho as usize))));
        let mut qi = q.idx.to_vec();
        qi[0] = rho;
        out.add_assign(&Poly::atom(Atom::new(Comp::new(&q.name, &qi))).mul(&Poly::atom(z.deriv(alpha))));
    }
    out
}

/// Per gauge-transformed component: residue of `δq − L_ζ q` modulo the field equations.
pub fn diffeo_decomposition(m: &Model, hj: &HjAnalysis, equations: &[FieldEquation]) -> Result<Vec<(Comp, Poly)>, CovariantError> {
    let reducer = equation_reducer(m, equations, "eom");
    let mut fields: Vec<Comp> = hj.gauge.iter().map(|g| g.field.clone()).collect();
    fields.dedup();
    let mut out = Vec::new();
    for q in fields {
        let mut delta = Poly::zero();
        for g in hj.gauge.iter().filter(|g| g.field == q) {
            let dname = crate::hj::differential_name(&g.parameter);
            let subst = |a: &Atom| -> Option<Poly> {
                if &*a.comp.name != dname.as_str() {
                    return None;
                }
                diffeo_parameter(m, hj, &g.family, &a.comp.idx).map(|p| p.derivatives(a.d))
            };
            if g.expression.atoms().iter().any(|a| &*a.comp.name == dname.as_str() && subst(a).is_none()) {
                return Err(CovariantError::Unsupported(format!("no diffeomorphism parameter for family {}", g.family)));
            }
            delta.add_assign(&g.expression.map_atoms(&subst));
        }
        let diff = delta.sub(&lie_derivative(&q));
        out.push((q, reducer.reduce(&diff).residue));
    }
    Ok(out)
}

/// `μ = 0` restriction of the symplectic current.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceRestriction {
    /// `(v, Π_v)` with `Ψ^0 = Σ Π_v δv`.
    pub momenta: Vec<(Comp, Poly)>,
    /// `Σ δΠ_v ∧ δv`.
    pub omega: Poly,
    /// `J^0 − omega`.
    pub residue: Poly,
}

pub fn slice_restriction(psi: &[Poly; 3], j: &[Poly; 3]) -> Result<SliceRestriction, CovariantError> {
    let vs: BTreeSet<Atom> = psi[0].atoms().into_iter().filter(Atom::is_odd).collect();
    if vs.iter().any(|a| a.d != [0; 3]) {
        return Err(CovariantError::Unsupported("derivatives of variations on the slice".into()));
    }
    let mut momenta = Vec::new();
    let mut omega = Poly::zero();
    for v in vs {
        let p = psi[0].d_atom(&v);
        omega.add_assign(&p.variation().mul(&Poly::atom(v.clone())));
        momenta.push((v.comp.with_odd(false), p));
    }
    let residue = j[0].sub(&omega);
    Ok(SliceRestriction { momenta, omega, residue })
}

/// Canonical pairs of the slice: each `v` with the component of its field's momentum.
pub fn slice_structure(m: &Model, slice: &SliceRestriction) -> CanonicalStructure {
    CanonicalStructure::new(slice.momenta.iter().map(|(v, _)| {
        let mom = m.fields.iter().find(|f| *f.name == *v.name).map(|f| f.momentum.clone()).unwrap_or_else(|| format!("pi_{}", v.name));
        (v.clone(), Comp::new(&mom, &v.idx))
    }))
}

/// `∫[δf/δA·δg/δΠ − δf/δΠ·δg/δA]` on the slice variables.
pub fn fieldspace_bracket(f: &Poly, g: &Poly, cs: &CanonicalStructure) -> Poly {
    poisson_smeared(f, g, cs)
}

/// Bracket of two local densities as a kernel.
pub fn fieldspace_kernel(f: &Poly, g: &Poly, cs: &CanonicalStructure) -> Result<Kernel, CovariantError> {
    Ok(poisson_kernel(f, g, cs)?)
}

/// `f → f + ε{G, f}` for each slice variable and momentum.
pub fn constraint_motion(cs: &CanonicalStructure, generator: &Poly, eps: &Poly) -> Vec<(Comp, Poly)> {
    let mut out = Vec::new();
    for (q, p) in cs.pairs() {
        for c in [q, p] {
            let f = Poly::atom(Atom::new(c.clone()));
            let moved = f.sub(&eps.mul(&fieldspace_bracket(&f, generator, cs)));
            out.push((c.clone(), moved));
        }
    }
    out
}

/// Outcome of one covariant check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub residue: Vec<Poly>,
}

impl Check {
    fn new(name: &str, residue: Vec<Poly>) -> Self {
        Check { name: name.to_string(), residue: residue.into_iter().filter(|p| !p.is_zero()).collect() }
    }

    pub fn passed(&self) -> bool {
        self.residue.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovariantAnalysis {
    pub variation: BoundaryVariation,
    pub current: [Poly; 3],
    pub linearized: Vec<FieldEquation>,
    pub slice: SliceRestriction,
    pub checks: Vec<Check>,
}

pub fn analyze(m: &Model, hj: Option<&HjAnalysis>) -> Result<CovariantAnalysis, CovariantError> {
    let variation = boundary_variation(m)?;
    let current = symplectic_form(&variation.psi);
    let linearized = linearize(&variation.equations);
    let slice = slice_restriction(&variation.psi, &current)?;
    let mut checks = vec![
        Check::new("first variation splits into equations and divergence", vec![variation.remainder.clone()]),
        Check::new("symplectic current is closed", current.iter().map(Poly::variation).collect()),
        Check::new("symplectic current is conserved", vec![verify_current_conservation(m, &current, &linearized)]),
        Check::new("internal rotation invariance at first order", verify_internal_invariance(m, &current, &|_| true).to_vec()),
        Check::new("slice restriction is canonical", vec![slice.residue.clone()]),
    ];
    if let Some(hj) = hj {
        let res = diffeo_decomposition(m, hj, &variation.equations)?;
        checks.push(Check::new("gauge transformations reproduce diffeomorphisms on shell", res.into_iter().map(|r| r.1).collect()));
    }
    Ok(CovariantAnalysis { variation, current, linearized, slice, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::enumerate_components;
    use crate::model::builtin;

    fn components(m: &Model, src: &str) -> Vec<Poly> {
        let x = m.parse_expression(src, &[]).unwrap();
        enumerate_components(&x, &m.conventions()).into_values().collect()
    }

    #[test]
    fn pcs_potential_and_checks() {
        let m = builtin("pcs").unwrap();
        let hj = crate::hj::analyze(&m, 10).unwrap();
        let c = analyze(&m, Some(&hj)).unwrap();
        let psi = components(&m, "epsst[mu,alpha,nu]*(e[alpha,^i] + 1/gamma*A[alpha,^i])*var(A[nu,i])");
        assert_eq!(psi, c.variation.psi.to_vec());
        for ch in &c.checks {
            assert!(ch.passed(), "{}: {:?}", ch.name, ch.residue.iter().map(|p| p.to_string()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn palatini_and_abelian_conserve() {
        for name in ["palatini", "abelian-cs"] {
            let m = builtin(name).unwrap();
            let hj = crate::hj::analyze(&m, 10).unwrap();
            let c = analyze(&m, Some(&hj)).unwrap();
            assert!(c.checks.iter().all(Check::passed), "{name}");
        }
    }

    #[test]
    fn coupling_piece_of_current_is_separately_conserved() {
        let m = builtin("pcs").unwrap();
        let v = boundary_variation(&m).unwrap();
        let j = symplectic_form(&v.psi);
        let cut = j.clone().map(|p| p.map_coeffs(|c| c.at_lambda_zero().unwrap_or_default()));
        let lin = linearize(&v.equations);
        assert!(verify_current_conservation(&m, &j, &lin).is_zero());
        assert!(verify_current_conservation(&m, &cut, &lin).is_zero());
        let mut skew = j.clone();
        skew[0] = skew[0].scale(&Coeff::int(2));
        assert!(!verify_current_conservation(&m, &skew, &lin).is_zero());
    }

    #[test]
    fn partial_rotation_leaves_first_order_terms() {
        let m = builtin("pcs").unwrap();
        let v = boundary_variation(&m).unwrap();
        let j = symplectic_form(&v.psi);
        let r = verify_internal_invariance(&m, &j, &|n| n == "e");
        assert!(r.iter().any(|p| !p.is_zero()));
    }

    #[test]
    fn current_is_antisymmetric_and_closed() {
        let m = builtin("pcs").unwrap();
        let v = boundary_variation(&m).unwrap();
        let j = symplectic_form(&v.psi);
        for p in &j {
            assert!(p.variation().is_zero());
            assert!(p.degrees_in(Atom::is_odd).iter().all(|&d| d == 2));
        }
        assert!(v.remainder.is_zero());
    }

    #[test]
    fn zero_parameter_motion_is_identity() {
        let m = builtin("pcs").unwrap();
        let v = boundary_variation(&m).unwrap();
        let s = slice_restriction(&v.psi, &symplectic_form(&v.psi)).unwrap();
        let cs = slice_structure(&m, &s);
        let g = Poly::atom(Atom::field("Pi", &[1, 0])).mul(&Poly::atom(Atom::field("A", &[2, 1])));
        for (c, moved) in constraint_motion(&cs, &g, &Poly::zero()) {
            assert_eq!(moved, Poly::atom(Atom::new(c)));
        }
    }
}
