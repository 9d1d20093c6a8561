//! Analysis report: a serde document with every expression as a DSL string.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::covariant::{self, CovariantAnalysis, ROTATION, VECTOR};
use crate::dsl::{print_model, render};
use crate::expr::{poly_to_expression, Expression, InternalMetric, Kind};
use crate::hj::{differential_name, family_shape, test_names, Block, Classification, HjAnalysis, Origin};
use crate::model::{FieldDecl, FieldRole, Model};
use crate::poly::{Atom, Comp, Poly};
use crate::variational::Kernel;

/// Name of the infinitesimal parameter in constraint motions.
pub const MOTION_PARAMETER: &str = "epsilon";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub parameter: Option<String>,
    pub fields: Vec<String>,
    pub configuration_components: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConventionInfo {
    pub epsilon: String,
    pub internal_metric: String,
    pub coupling: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HamiltonianEntry {
    pub family: String,
    pub label: String,
    pub density: String,
    pub origin: String,
    pub classification: String,
    pub parameter: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalHamiltonian {
    pub label: String,
    pub parameter: String,
    /// H_0 as produced from the Lagrangian.
    pub h0: String,
    /// H_0 with fields traded for momenta through the non-involutive constraints.
    pub h0_momentum_form: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelTerm {
    /// Derivative orders of δ(x−y) in the two spatial directions.
    pub derivative: [u8; 2],
    pub coefficient: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentEntry {
    pub left: String,
    pub right: String,
    pub kernel: Vec<KernelTerm>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub row: String,
    pub col: String,
    pub compact: Option<String>,
    pub components: Vec<ComponentEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub basis: Vec<String>,
    pub entries: Vec<Vec<String>>,
    pub inverse: Vec<Vec<String>>,
    pub blocks: Vec<BlockEntry>,
    pub inverse_blocks: Vec<BlockEntry>,
    pub antisymmetric: bool,
    pub product_is_identity: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassEntry {
    pub pass: usize,
    pub examined: Vec<String>,
    pub new_families: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureEntry {
    pub constraint: String,
    pub derivative: [u8; 3],
    pub coefficient: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgebraReport {
    pub left: String,
    pub right: String,
    pub structure: Vec<StructureEntry>,
    pub residue: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DofReport {
    pub phase_space: usize,
    pub non_involutive: usize,
    pub involutive: usize,
    pub standard: Option<usize>,
    pub dynamical: usize,
    pub field_count: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacteristicEntry {
    pub field: String,
    pub dt: String,
    pub parameters: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaugeEntry {
    pub field: String,
    pub parameter: String,
    pub expression: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub passed: bool,
    pub residue: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariantReport {
    pub potential: Vec<String>,
    pub current: Vec<String>,
    pub slice_momenta: Vec<(String, String)>,
    pub motions: Vec<(String, String)>,
    pub checks: Vec<CheckEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub model: ModelInfo,
    pub conventions: ConventionInfo,
    pub hamiltonians: Vec<HamiltonianEntry>,
    pub canonical_hamiltonian: CanonicalHamiltonian,
    pub classification: BTreeMap<String, String>,
    pub bracket_matrix: Option<MatrixEntry>,
    pub generalized_brackets: Vec<BlockEntry>,
    pub integrability: Vec<PassEntry>,
    pub algebra: Vec<AlgebraReport>,
    pub dof: DofReport,
    pub parameters: Vec<(String, String)>,
    pub characteristic_equations: Vec<CharacteristicEntry>,
    pub multipliers: Vec<String>,
    pub gauge_transformations: Vec<GaugeEntry>,
    pub covariant: Option<CovariantReport>,
    pub warnings: Vec<String>,
}

impl AnalysisReport {
    /// False when an algebra residue, a DOF count or a covariant check fails.
    pub fn all_checks_pass(&self) -> bool {
        self.algebra.iter().all(|a| a.residue == "0")
            && self.dof.standard.is_some()
            && self.covariant.as_ref().is_none_or(|c| c.checks.iter().all(|k| k.passed))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

struct Show<'a>(&'a Model);

impl Show<'_> {
    fn poly(&self, p: &Poly) -> String {
        render(&poly_to_expression(p), self.0)
    }
    fn expr(&self, x: &Expression) -> String {
        render(x, self.0)
    }
    fn comp(&self, c: &Comp) -> String {
        self.poly(&Poly::atom(Atom::new(c.clone())))
    }
    fn kernel(&self, k: &Kernel) -> Vec<KernelTerm> {
        k.terms().map(|(d, c)| KernelTerm { derivative: *d, coefficient: self.poly(c) }).collect()
    }
    fn block(&self, b: &Block) -> BlockEntry {
        BlockEntry {
            row: b.row.clone(),
            col: b.col.clone(),
            compact: b.compact.as_ref().map(|x| self.expr(x)),
            components: b
                .components
                .iter()
                .map(|(l, r, k)| ComponentEntry { left: self.comp(l), right: self.comp(r), kernel: self.kernel(k) })
                .collect(),
        }
    }
}

fn class_name(c: Classification) -> &'static str {
    match c {
        Classification::Unknown => "unknown",
        Classification::Involutive => "involutive",
        Classification::NonInvolutive => "non-involutive",
    }
}

fn origin_name(o: Origin) -> String {
    match o {
        Origin::Primary => "primary".into(),
        Origin::Integrability(n) => format!("integrability pass {n}"),
    }
}

fn member_label(m: &Model, key: &str, name: &str, idx: &[u8]) -> String {
    let dropped = family_shape(m, key).is_some_and(|s| s.1);
    let shown = if dropped { &idx[1..] } else { idx };
    if shown.is_empty() {
        name.to_string()
    } else {
        format!("{name}[{}]", shown.iter().map(u8::to_string).collect::<Vec<_>>().join(","))
    }
}

fn config_slots(m: &Model, key: &str) -> Vec<(Kind, bool)> {
    let base = key.trim_start_matches("d(").trim_end_matches(')');
    let name = base.split(':').next().unwrap_or(base);
    m.configuration_fields().find(|f| f.momentum == name).map(|f| f.slots.clone()).unwrap_or_default()
}

/// Declarations of the auxiliary fields that report expressions mention:
/// smearing fields, parameter differentials, ζ, θ and ε.
pub fn report_scope(m: &Model, hj: &HjAnalysis) -> Vec<FieldDecl> {
    let mut out: Vec<FieldDecl> = Vec::new();
    let mut push = |name: &str, slots: Vec<(Kind, bool)>| {
        if !out.iter().any(|f| f.name == name) {
            out.push(FieldDecl::new(name, &slots, FieldRole::Test));
        }
    };
    let (n, mm) = test_names(m);
    let involutive = hj.families.iter().filter(|f| f.class == Classification::Involutive);
    for (k, f) in involutive.clone().filter(|f| matches!(f.origin, Origin::Integrability(_))).enumerate() {
        push(&motion_smearing(m, k), config_slots(m, &f.key));
    }
    for f in involutive {
        let slots = config_slots(m, &f.key);
        push(&n, slots.clone());
        push(&mm, slots.clone());
        push(&differential_name(&f.parameter), slots);
    }
    push(VECTOR, vec![(Kind::Spacetime, true)]);
    push(ROTATION, vec![(Kind::Internal, true)]);
    push(MOTION_PARAMETER, vec![]);
    out
}

fn warnings(m: &Model, hj: &HjAnalysis) -> Vec<String> {
    let mut w = Vec::new();
    let unnormalized = hj.gauge.iter().any(|g| {
        let top = g.expression.atoms().into_iter().filter(|a| a.comp.name.starts_with('d') && a.order() > 0).max_by_key(Atom::order);
        top.is_some_and(|a| !g.expression.d_atom(&a).as_constant().is_some_and(|c| c.is_one()))
    });
    if unnormalized {
        w.push("gauge transformations carry the raw coefficients of the characteristic equations; parameters are not rescaled".to_string());
    }
    if hj.dof.standard.is_none() {
        w.push(format!("inconsistent degree-of-freedom count: numerator {} is negative or odd", hj.dof.standard_numerator));
    } else if hj.dof.standard.map(|s| s as i64) != Some(hj.dof.field_count) {
        w.push(format!(
            "field-count count ({}) differs from the standard count ({}); the standard count is authoritative",
            hj.dof.field_count,
            hj.dof.standard.unwrap_or_default()
        ));
    }
    for f in hj.families.iter().filter(|f| matches!(f.origin, Origin::Integrability(_))) {
        if m.label(&f.key).is_none() {
            w.push(format!("family {} has no label; using its key as name", f.key));
        }
    }
    w
}

/// Smearing field of the k-th secondary family in constraint motions.
fn motion_smearing(m: &Model, k: usize) -> String {
    let (n, mm) = test_names(m);
    match k {
        0 => n,
        1 => mm,
        _ => format!("{mm}{k}"),
    }
}

fn motions(m: &Model, hj: &HjAnalysis, cov: &CovariantAnalysis) -> Vec<(String, String)> {
    let show = Show(m);
    let cs = covariant::slice_structure(m, &cov.slice);
    let mut generator = Poly::zero();
    let secondary = hj.families.iter().filter(|f| f.class == Classification::Involutive && matches!(f.origin, Origin::Integrability(_)));
    for (k, f) in secondary.enumerate() {
        let t = motion_smearing(m, k);
        for (idx, h) in &f.members {
            generator.add_assign(&Poly::atom(Atom::field(&t, idx)).mul(&hj.lift(h)));
        }
    }
    let eps = Poly::atom(Atom::field(MOTION_PARAMETER, &[]));
    covariant::constraint_motion(&cs, &generator, &eps).iter().map(|(c, p)| (show.comp(c), show.poly(p))).collect()
}

pub fn build(m: &Model, hj: &HjAnalysis, cov: Option<&CovariantAnalysis>) -> AnalysisReport {
    let show = Show(m);
    let fields = print_model(m).lines().filter(|l| l.starts_with("field ")).map(str::to_string).collect();
    let model = ModelInfo {
        name: m.name.clone(),
        parameter: m.param.clone(),
        fields,
        configuration_components: m.configuration_components().len(),
    };
    let conventions = ConventionInfo {
        epsilon: "eps3[0,1,2] = epsst[0,1,2] = eps2up[1,2] = eps2dn[1,2] = 1".into(),
        internal_metric: match m.metric {
            InternalMetric::Euclidean => "euclidean".into(),
            InternalMetric::Lorentzian => "lorentzian, diag(-1,1,1)".into(),
        },
        coupling: format!("lambda = 1/{}", m.param_name()),
    };
    let hamiltonians = hj
        .families
        .iter()
        .flat_map(|f| {
            let show = &show;
            f.members.iter().map(move |(idx, p)| HamiltonianEntry {
                family: f.key.clone(),
                label: member_label(m, &f.key, &f.name, idx),
                density: show.poly(p),
                origin: origin_name(f.origin),
                classification: class_name(f.class).into(),
                parameter: f.parameter.clone(),
            })
        })
        .collect();
    let canonical_hamiltonian = CanonicalHamiltonian {
        label: "H'".into(),
        parameter: "t".into(),
        h0: show.poly(&hj.momenta.h0),
        h0_momentum_form: show.poly(&hj.lift(&hj.momenta.h0)),
    };
    let classification = hj.primary_classes.iter().map(|(k, c)| (k.clone(), class_name(*c).to_string())).collect();
    let bracket_matrix = hj.matrix.as_ref().map(|c| {
        let row = |r: &Vec<crate::coeff::Coeff>| r.iter().map(|x| x.render(m.param_name())).collect();
        let product = c.product();
        MatrixEntry {
            basis: c.basis.iter().map(|l| l.to_string()).collect(),
            entries: c.entries.iter().map(row).collect(),
            inverse: c.inverse.iter().map(row).collect(),
            blocks: c.blocks(m).iter().map(|b| show.block(b)).collect(),
            inverse_blocks: c.inverse_blocks(m).iter().map(|b| show.block(b)).collect(),
            antisymmetric: c.is_antisymmetric(),
            product_is_identity: product.iter().enumerate().all(|(i, r)| r.iter().enumerate().all(|(j, x)| if i == j { x.is_one() } else { x.is_zero() })),
        }
    });
    let generalized_brackets = crate::hj::bracket_table(m, &hj.engine)
        .map(|t| t.blocks(m).iter().map(|b| show.block(b)).collect())
        .unwrap_or_default();
    let integrability = hj.passes.iter().map(|p| PassEntry { pass: p.number, examined: p.examined.clone(), new_families: p.new_families.clone() }).collect();
    let algebra = hj
        .algebra
        .iter()
        .map(|a| AlgebraReport {
            left: a.left.clone(),
            right: a.right.clone(),
            structure: a
                .structure
                .iter()
                .map(|s| StructureEntry { constraint: s.constraint.to_string(), derivative: s.derivative, coefficient: show.poly(&s.coefficient) })
                .collect(),
            residue: show.poly(&a.residue),
        })
        .collect();
    let d = &hj.dof;
    let dof = DofReport {
        phase_space: d.phase_space,
        non_involutive: d.non_involutive,
        involutive: d.involutive,
        standard: d.standard,
        dynamical: d.dynamical,
        field_count: d.field_count,
    };
    let mut parameters = vec![("t".to_string(), "H'".to_string())];
    parameters.extend(hj.families.iter().filter(|f| f.class == Classification::Involutive).map(|f| (f.parameter.clone(), f.name.clone())));
    let characteristic_equations = hj
        .characteristic
        .iter()
        .map(|c| CharacteristicEntry {
            field: show.comp(&c.field),
            dt: show.poly(&c.dt),
            parameters: c.parts.iter().map(|(_, p, e)| (p.clone(), show.poly(e))).collect(),
        })
        .collect();
    let multipliers = hj.characteristic.iter().filter(|c| c.multiplier).map(|c| show.comp(&c.field)).collect();
    let gauge_transformations = hj
        .gauge
        .iter()
        .map(|g| GaugeEntry { field: show.comp(&g.field), parameter: g.parameter.clone(), expression: show.poly(&g.expression) })
        .collect();
    let covariant = cov.map(|c| CovariantReport {
        potential: c.variation.psi.iter().map(|p| show.poly(p)).collect(),
        current: c.current.iter().map(|p| show.poly(p)).collect(),
        slice_momenta: c.slice.momenta.iter().map(|(v, p)| (show.comp(v), show.poly(p))).collect(),
        motions: motions(m, hj, c),
        checks: c
            .checks
            .iter()
            .map(|k| CheckEntry { name: k.name.clone(), passed: k.passed(), residue: k.residue.iter().map(|p| show.poly(p)).collect() })
            .collect(),
    });
    AnalysisReport {
        model,
        conventions,
        hamiltonians,
        canonical_hamiltonian,
        classification,
        bracket_matrix,
        generalized_brackets,
        integrability,
        algebra,
        dof,
        parameters,
        characteristic_equations,
        multipliers,
        gauge_transformations,
        covariant,
        warnings: warnings(m, hj),
    }
}

fn block_text(out: &mut String, b: &BlockEntry) {
    match &b.compact {
        Some(c) => {
            let _ = writeln!(out, "  {{{}, {}}} = {c}", b.row, b.col);
        }
        None => {
            let _ = writeln!(out, "  {{{}, {}}}:", b.row, b.col);
            for c in &b.components {
                let k: Vec<String> = c.kernel.iter().map(|t| format!("({})*d{:?}", t.coefficient, t.derivative)).collect();
                let _ = writeln!(out, "    {{{}, {}}} = {}", c.left, c.right, k.join(" + "));
            }
        }
    }
}

/// Human-readable rendering, one section per stage.
pub fn to_text(r: &AnalysisReport) -> String {
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "model {}", r.model.name);
    for f in &r.model.fields {
        let _ = writeln!(w, "  {f}");
    }
    let _ = writeln!(w, "  configuration components: {}", r.model.configuration_components);
    let _ = writeln!(w, "\nconventions");
    let _ = writeln!(w, "  {}\n  internal metric: {}\n  {}", r.conventions.epsilon, r.conventions.internal_metric, r.conventions.coupling);
    let _ = writeln!(w, "\nhamiltonians");
    for h in &r.hamiltonians {
        let _ = writeln!(w, "  {} = {}    [{}; {}; {}]", h.label, h.density, h.origin, h.classification, h.parameter);
    }
    let h = &r.canonical_hamiltonian;
    let _ = writeln!(w, "\ncanonical hamiltonian ({} = Pi_t + H0, parameter {})", h.label, h.parameter);
    let _ = writeln!(w, "  H0 = {}\n  H0 (momentum form) = {}", h.h0, h.h0_momentum_form);
    let _ = writeln!(w, "\nclassification");
    for (k, c) in &r.classification {
        let _ = writeln!(w, "  {k}: {c}");
    }
    if let Some(c) = &r.bracket_matrix {
        let _ = writeln!(w, "\nbracket matrix ({}x{}, antisymmetric: {}, C*Cinv = 1: {})", c.basis.len(), c.basis.len(), c.antisymmetric, c.product_is_identity);
        let _ = writeln!(w, " C");
        c.blocks.iter().for_each(|b| block_text(w, b));
        let _ = writeln!(w, " Cinv");
        c.inverse_blocks.iter().for_each(|b| block_text(w, b));
    }
    let _ = writeln!(w, "\ngeneralized brackets");
    for b in r.generalized_brackets.iter().filter(|b| b.compact.as_deref() != Some("0")) {
        block_text(w, b);
    }
    let _ = writeln!(w, "\nintegrability");
    for p in &r.integrability {
        let new = if p.new_families.is_empty() { "nothing new".to_string() } else { p.new_families.join(", ") };
        let _ = writeln!(w, "  pass {}: {} -> {}", p.pass, p.examined.join(", "), new);
    }
    let _ = writeln!(w, "\nconstraint algebra");
    for a in &r.algebra {
        let terms: Vec<String> = a.structure.iter().map(|t| format!("({})*{}", t.coefficient, t.constraint)).collect();
        let rhs = if terms.is_empty() { "0".to_string() } else { terms.join(" + ") };
        let _ = writeln!(w, "  {{{}, {}}}* = {}    residue {}", a.left, a.right, rhs, a.residue);
    }
    let d = &r.dof;
    let std = d.standard.map(|x| x.to_string()).unwrap_or_else(|| "inconsistent".into());
    let _ = writeln!(w, "\ndegrees of freedom");
    let _ = writeln!(w, "  ({} - {} - 2*{})/2 = {}", d.phase_space, d.non_involutive, d.involutive, std);
    let _ = writeln!(w, "  field-count: {} - {} = {}", d.dynamical, d.involutive, d.field_count);
    let _ = writeln!(w, "\nparameters");
    for (p, h) in &r.parameters {
        let _ = writeln!(w, "  {p}: {h}");
    }
    let _ = writeln!(w, "\ncharacteristic equations");
    for c in &r.characteristic_equations {
        let mut parts = vec![format!("({})*dt", c.dt)];
        parts.extend(c.parameters.iter().map(|(p, e)| format!("[{p}] {e}")));
        let _ = writeln!(w, "  d{} = {}", c.field, parts.join(" + "));
    }
    let _ = writeln!(w, "\nmultipliers\n  {}", r.multipliers.join(", "));
    let _ = writeln!(w, "\ngauge transformations");
    for g in &r.gauge_transformations {
        let _ = writeln!(w, "  delta {} [{}] = {}", g.field, g.parameter, g.expression);
    }
    if let Some(c) = &r.covariant {
        let _ = writeln!(w, "\ncovariant phase space");
        for (mu, p) in c.potential.iter().enumerate() {
            let _ = writeln!(w, "  Psi^{mu} = {p}");
        }
        for (mu, p) in c.current.iter().enumerate() {
            let _ = writeln!(w, "  J^{mu} = {p}");
        }
        for (v, p) in &c.slice_momenta {
            let _ = writeln!(w, "  momentum of {v} on the slice: {p}");
        }
        for (v, p) in &c.motions {
            let _ = writeln!(w, "  {v} -> {p}");
        }
        for k in &c.checks {
            let verdict = if k.passed { "pass".to_string() } else { format!("FAIL residue {}", k.residue.join("; ")) };
            let _ = writeln!(w, "  {}: {verdict}", k.name);
        }
    }
    let _ = writeln!(w, "\nwarnings");
    if r.warnings.is_empty() {
        let _ = writeln!(w, "  none");
    }
    for x in &r.warnings {
        let _ = writeln!(w, "  {x}");
    }
    s
}
