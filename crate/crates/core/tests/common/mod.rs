#![allow(dead_code)]

use std::collections::BTreeSet;

use hjcov::canon::{canonicalize_with, enumerate_components};
use hjcov::coeff::Coeff;
use hjcov::expr::Expression;
use hjcov::hj::{self, bracket_table, Classification, HjAnalysis};
use hjcov::model::{builtin, Model};
use hjcov::poly::{Atom, Comp, Poly};
use hjcov::variational::{functional_derivative, poisson_kernel, poisson_smeared, CanonicalStructure};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SEED: u64 = 0x5eed_2019;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn pcs() -> (Model, HjAnalysis) {
    let m = builtin("pcs").unwrap();
    let a = hj::analyze(&m, 10).unwrap();
    (m, a)
}

fn small_coeff(r: &mut ChaCha8Rng) -> Coeff {
    let n = r.gen_range(1..=3) * if r.gen_bool(0.5) { 1 } else { -1 };
    let c = Coeff::rational(n, r.gen_range(1..=2));
    if r.gen_bool(0.25) {
        &c * &Coeff::lambda()
    } else {
        c
    }
}

/// Random density of degree ≤ 2 in canonical atoms, with at most one spatial derivative per term,
/// optionally smeared by a test field.
pub fn random_density(r: &mut ChaCha8Rng, cs: &CanonicalStructure, ultralocal: bool) -> Poly {
    let atoms: Vec<Comp> = cs.pairs().flat_map(|(q, p)| [q.clone(), p.clone()]).collect();
    let mut out = Poly::zero();
    for _ in 0..r.gen_range(1..=3) {
        let degree = r.gen_range(1..=2);
        let mut factors = Vec::new();
        for k in 0..degree {
            let mut a = Atom::new(atoms.choose(r).unwrap().clone());
            if !ultralocal && k == 0 && r.gen_bool(0.4) {
                a = a.deriv(r.gen_range(1..=2));
            }
            factors.push(a);
        }
        if !ultralocal && r.gen_bool(0.3) {
            factors.push(Atom::field("N", &[0, r.gen_range(0..3)]));
        }
        out.add_assign(&Poly::product(small_coeff(r), factors));
    }
    out
}

/// True when `∫ density` vanishes for all field configurations.
pub fn integrates_to_zero(density: &Poly) -> bool {
    let bases: BTreeSet<Comp> = density.atoms().into_iter().map(|a| a.comp).collect();
    density.as_constant().is_none_or(|c| c.is_zero()) && bases.iter().all(|u| functional_derivative(density, u).is_zero())
}

pub fn antisymmetry_case(r: &mut ChaCha8Rng, cs: &CanonicalStructure) -> bool {
    let f = random_density(r, cs, false);
    let g = random_density(r, cs, false);
    let integrated = integrates_to_zero(&poisson_smeared(&f, &g, cs).add(&poisson_smeared(&g, &f, cs)));
    let k = poisson_kernel(&f, &g, cs).unwrap();
    let kt = poisson_kernel(&g, &f, cs).unwrap();
    integrated && k.add(&kt.transpose()).is_zero()
}

pub fn leibniz_case(r: &mut ChaCha8Rng, cs: &CanonicalStructure) -> bool {
    let f = random_density(r, cs, true);
    let g = random_density(r, cs, true);
    let h = random_density(r, cs, true);
    let lhs = poisson_kernel(&f, &g.mul(&h), cs).unwrap().integrate();
    let rhs = poisson_kernel(&f, &g, cs).unwrap().integrate().mul(&h).add(&g.mul(&poisson_kernel(&f, &h, cs).unwrap().integrate()));
    lhs == rhs
}

pub fn jacobi_case(r: &mut ChaCha8Rng, cs: &CanonicalStructure) -> bool {
    let f = random_density(r, cs, false);
    let g = random_density(r, cs, false);
    let h = random_density(r, cs, false);
    let b = |x: &Poly, y: &Poly| poisson_smeared(x, y, cs);
    let cyclic = b(&f, &b(&g, &h)).add(&b(&g, &b(&h, &f))).add(&b(&h, &b(&f, &g)));
    integrates_to_zero(&cyclic)
}

/// Runs `cases` seed-fixed instances of a bracket property; returns the number of failures.
pub type Case = fn(&mut ChaCha8Rng, &CanonicalStructure) -> bool;

pub fn run_bracket_suite(cases: usize, seed: u64, case: Case) -> usize {
    let m = builtin("pcs").unwrap();
    let cs = CanonicalStructure::from_model(&m);
    let mut r = rng(seed);
    (0..cases).filter(|_| !case(&mut r, &cs)).count()
}

/// Generalized bracket of each canonical atom with each non-involutive constraint.
pub fn annihilation_failures(a: &HjAnalysis) -> usize {
    let atoms: Vec<Comp> = a.engine.cs.pairs().flat_map(|(q, p)| [q.clone(), p.clone()]).collect();
    let mut bad = 0;
    for f in a.families.iter().filter(|f| f.class == Classification::NonInvolutive) {
        for (_, h) in &f.members {
            for u in &atoms {
                if !a.engine.bracket(&Poly::atom(Atom::new(u.clone())), h).unwrap().is_zero() {
                    bad += 1;
                }
            }
        }
    }
    bad
}

/// Components of the λ=0 PCS bracket table that differ from the Palatini table.
pub fn lambda_zero_mismatches() -> usize {
    let (m, a) = pcs();
    let p = builtin("palatini").unwrap();
    let pa = hj::analyze(&p, 10).unwrap();
    let t = bracket_table(&m, &a.engine).unwrap();
    let tp = bracket_table(&p, &pa.engine).unwrap();
    if t.groups != tp.groups {
        return usize::MAX;
    }
    t.kernels
        .iter()
        .filter(|((x, y), k)| {
            let cut = k.map(|c| c.map_coeffs(|q| q.at_lambda_zero().expect("no pole at zero")));
            tp.get(x, y).is_none_or(|kp| !cut.sub(kp).is_zero())
        })
        .count()
}

const TEMPLATES: [&str; 9] = [
    "e[a,^i]",
    "A[a,^i]",
    "d_a(e[0,^i])",
    "eps3[^i,j,k]*A[a,^j]*e[0,^k]",
    "eps3[^i,j,k]*e[a,^j]*A[0,^k]",
    "delta[^i,j]*A[a,^j]",
    "eps2up[b,c]*delta[a,b]*A[c,^i]",
    "eps2up[b,c]*d_b(A[c,^j])*e[a,^i]*A[0,j]",
    "eps3[^i,j,k]*eps3[^j,l,m]*A[a,^k]*e[0,^l]*A[0,^m]",
];

const INTERNAL_DUMMIES: [&str; 5] = ["j", "k", "l", "m", "n"];
const SPATIAL_DUMMIES: [&str; 3] = ["b", "c", "d"];

/// Rewrites one term with its dummies renamed at random and its factors shuffled.
fn scramble(r: &mut ChaCha8Rng, template: &str) -> String {
    let mut internal = INTERNAL_DUMMIES.to_vec();
    internal.shuffle(r);
    let mut spatial = SPATIAL_DUMMIES.to_vec();
    spatial.shuffle(r);
    let rename = |c: char| -> String {
        if let Some(p) = INTERNAL_DUMMIES.iter().position(|d| d.starts_with(c)) {
            internal[p].to_string()
        } else if let Some(p) = SPATIAL_DUMMIES.iter().position(|d| d.starts_with(c)) {
            spatial[p].to_string()
        } else {
            c.to_string()
        }
    };
    let mut factors: Vec<String> = template
        .split('*')
        .map(|f| {
            let chars: Vec<char> = f.chars().collect();
            let mut out = String::new();
            for (k, &c) in chars.iter().enumerate() {
                let before = k > 0 && matches!(chars[k - 1], '[' | ',' | '^' | '_');
                let after = matches!(chars.get(k + 1), Some(',' | ']' | '('));
                if c.is_ascii_lowercase() && before && after {
                    out.push_str(&rename(c));
                } else {
                    out.push(c);
                }
            }
            out
        })
        .collect();
    factors.shuffle(r);
    factors.join("*")
}

fn render_coeff(r: &mut ChaCha8Rng) -> String {
    let n = r.gen_range(1..=4);
    let d = r.gen_range(1..=3);
    let g = if r.gen_bool(0.3) { "/gamma" } else { "" };
    format!("{n}/{d}{g}")
}

/// A random sum of index-consistent terms, rendered twice with independent dummy names and factor orders.
pub fn random_expression_pair(r: &mut ChaCha8Rng) -> (String, String) {
    let count = r.gen_range(1..=4);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for _ in 0..count {
        let t = TEMPLATES.choose(r).unwrap();
        let c = render_coeff(r);
        let sign = if r.gen_bool(0.5) { "-" } else { "" };
        a.push(format!("{sign}{c}*{}", scramble(r, t)));
        b.push(format!("{sign}{c}*{}", scramble(r, t)));
    }
    b.shuffle(r);
    (a.join(" + ").replace("+ -", "- "), b.join(" + ").replace("+ -", "- "))
}

/// Idempotence, enumeration soundness and dummy-renaming invariance of the canonicalizer.
pub fn canon_case(m: &Model, r: &mut ChaCha8Rng) -> Result<(), String> {
    let (sa, sb) = random_expression_pair(r);
    let conv = m.conventions();
    let xa = m.parse_expression(&sa, &[]).map_err(|e| format!("{sa}: {e}"))?;
    let xb = m.parse_expression(&sb, &[]).map_err(|e| format!("{sb}: {e}"))?;
    let ca = canonicalize_with(&xa, conv.metric);
    let again = canonicalize_with(&ca.expression, conv.metric);
    if again != ca {
        return Err(format!("not idempotent: {sa}"));
    }
    if enumerate_components(&xa, &conv) != enumerate_components(&ca.expression, &conv) {
        return Err(format!("enumeration changed: {sa}"));
    }
    if canonicalize_with(&xb, conv.metric) != ca {
        return Err(format!("renaming changed the canonical form: {sa} vs {sb}"));
    }
    Ok(())
}

pub fn run_canon_suite(cases: usize, seed: u64) -> Vec<String> {
    let m = builtin("pcs").unwrap();
    let mut r = rng(seed);
    (0..cases).filter_map(|_| canon_case(&m, &mut r).err()).collect()
}

pub fn expression(m: &Model, src: &str, extra: &[hjcov::model::FieldDecl]) -> Expression {
    m.parse_expression(src, extra).unwrap_or_else(|e| panic!("{src}: {e}"))
}
