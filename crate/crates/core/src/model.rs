//! Models: field content, a velocity-affine split Lagrangian and an optional
//! covariant Lagrangian, plus the built-in library.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::canon::{canonicalize_with, enumerate_components};
use crate::expr::{poly_to_expression, Binding, Conventions, Expression, Index, InternalMetric, Kind};
use crate::poly::{Atom, Comp, Poly};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: unknown field or parameter `{name}`")]
    Unknown { line: usize, col: usize, name: String },
    #[error("lagrangian is not affine in velocities: offending term {term}")]
    NonAffine { term: String },
    #[error("unbalanced free index {index} in {what}")]
    Unbalanced { what: String, index: String },
    #[error("unknown builtin model `{0}`; available: pcs, palatini, abelian-cs, maxwell-first-order")]
    UnknownBuiltin(String),
    #[error("model `{0}` has no covariant action")]
    NoCovariant(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum FieldRole {
    Configuration,
    Momentum,
    Test,
}

/// A declared field: index slots as (kind, declared upper?).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: String,
    pub slots: Vec<(Kind, bool)>,
    pub momentum: String,
    pub role: FieldRole,
}

impl FieldDecl {
    pub fn new(name: &str, slots: &[(Kind, bool)], role: FieldRole) -> Self {
        FieldDecl { name: name.to_string(), slots: slots.to_vec(), momentum: format!("pi_{name}"), role }
    }

    /// All concrete index tuples, in lexicographic order.
    pub fn index_tuples(&self) -> Vec<Vec<u8>> {
        let mut out: Vec<Vec<u8>> = vec![Vec::new()];
        for (k, _) in &self.slots {
            let mut next = Vec::new();
            for t in &out {
                for &v in k.values() {
                    let mut t = t.clone();
                    t.push(v);
                    next.push(t);
                }
            }
            out = next;
        }
        out
    }

    pub fn components(&self) -> Vec<Comp> {
        self.index_tuples().iter().map(|t| Comp::new(&self.name, t)).collect()
    }

    /// Declaration of the conjugate momentum (internal positions flipped).
    pub fn momentum_decl(&self) -> FieldDecl {
        FieldDecl {
            name: self.momentum.clone(),
            slots: self.slots.iter().map(|(k, up)| (*k, if *k == Kind::Internal { !up } else { *up })).collect(),
            momentum: String::new(),
            role: FieldRole::Momentum,
        }
    }
}

/// A `let` definition: `name[formal] = body`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Macro {
    pub name: String,
    pub formal: Vec<Index>,
    pub body: Expression,
}

/// Display names for a constraint family and its evolution parameter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FamilyLabel {
    pub key: String,
    pub name: String,
    pub parameter: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Model {
    pub name: String,
    pub param: Option<String>,
    pub metric: InternalMetric,
    pub fields: Vec<FieldDecl>,
    pub macros: Vec<Macro>,
    pub labels: Vec<FamilyLabel>,
    pub lagrangian: Expression,
    pub covariant: Option<Expression>,
    pub space_dim: usize,
    pub internal_dim: usize,
}

impl Model {
    pub fn new(
        name: String,
        scope: crate::dsl::Scope,
        metric: InternalMetric,
        labels: Vec<FamilyLabel>,
        lagrangian: Expression,
        covariant: Option<Expression>,
    ) -> Result<Model, ModelError> {
        let canon = |x: &Expression| canonicalize_with(x, metric).expression;
        let macros = scope.macros.iter().map(|m| Macro { body: canon(&m.body), ..m.clone() }).collect();
        let m = Model {
            name,
            param: scope.param,
            metric,
            fields: scope.fields,
            macros,
            labels,
            lagrangian: canon(&lagrangian),
            covariant: covariant.as_ref().map(canon),
            space_dim: 2,
            internal_dim: 3,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), ModelError> {
        for (what, x) in [("lagrangian", Some(&self.lagrangian)), ("covariant action", self.covariant.as_ref())] {
            let Some(x) = x else { continue };
            x.validate().map_err(|e| ModelError::Unbalanced { what: what.to_string(), index: e.to_string() })?;
            if !x.free_indices().is_empty() {
                return Err(ModelError::Unbalanced { what: what.to_string(), index: x.free_indices().to_string() });
            }
        }
        let l = self.split_lagrangian();
        for (m, c) in l.terms() {
            let velocities: Vec<&Atom> = m.iter().filter(|a| a.d[0] > 0).collect();
            let bad = velocities.len() > 1 || velocities.iter().any(|a| a.d != [1, 0, 0]);
            if bad {
                let p = Poly::product(c.clone(), m.iter().cloned());
                return Err(ModelError::NonAffine { term: poly_to_expression(&p).render(self.param_name()) });
            }
        }
        Ok(())
    }

    pub fn param_name(&self) -> &str {
        self.param.as_deref().unwrap_or("gamma")
    }

    pub fn conventions(&self) -> Conventions {
        let mut declared_up = BTreeMap::new();
        for f in self.fields.iter().flat_map(|f| [f.clone(), f.momentum_decl()]) {
            declared_up.insert(f.name.clone(), f.slots.iter().map(|(k, up)| if *k == Kind::Internal { Some(*up) } else { None }).collect());
        }
        Conventions { metric: self.metric, declared_up }
    }

    /// Parsing scope: configuration fields, their momenta and `extra` (e.g. test fields).
    pub fn scope_with(&self, extra: &[FieldDecl]) -> crate::dsl::Scope {
        let mut fields = Vec::new();
        for f in &self.fields {
            fields.push(f.clone());
            if f.role == FieldRole::Configuration {
                fields.push(f.momentum_decl());
            }
        }
        fields.extend(extra.iter().cloned());
        crate::dsl::Scope { param: self.param.clone(), fields, macros: self.macros.clone() }
    }

    pub fn configuration_fields(&self) -> impl Iterator<Item = &FieldDecl> {
        self.fields.iter().filter(|f| f.role == FieldRole::Configuration)
    }

    pub fn configuration_components(&self) -> Vec<Comp> {
        self.configuration_fields().flat_map(|f| f.components()).collect()
    }

    /// Component expansion of a scalar expression.
    pub fn scalar_poly(&self, x: &Expression) -> Poly {
        enumerate_components(x, &self.conventions()).remove(&Vec::new()).unwrap_or_default()
    }

    pub fn split_lagrangian(&self) -> Poly {
        self.scalar_poly(&self.lagrangian)
    }

    pub fn covariant_lagrangian(&self) -> Result<Poly, ModelError> {
        self.covariant.as_ref().map(|c| self.scalar_poly(c)).ok_or_else(|| ModelError::NoCovariant(self.name.clone()))
    }

    pub fn label(&self, key: &str) -> Option<&FamilyLabel> {
        self.labels.iter().find(|l| l.key == key)
    }

    pub fn parse_expression(&self, src: &str, extra: &[FieldDecl]) -> Result<Expression, ModelError> {
        crate::dsl::parse_expression(src, &self.scope_with(extra))
    }
}

/// One field equation per configuration component.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldEquation {
    pub component: Comp,
    pub equation: Poly,
}

impl FieldEquation {
    pub fn expression(&self) -> Expression {
        poly_to_expression(&self.equation)
    }
}

/// Euler-Lagrange equations of the covariant action, one per component.
pub fn euler_lagrange(m: &Model) -> Result<Vec<FieldEquation>, ModelError> {
    let l = m.covariant_lagrangian()?;
    Ok(m.configuration_components().into_iter().map(|c| FieldEquation { equation: l.euler_operator(&c, true), component: c }).collect())
}

const PCS: &str = "\
model pcs
param gamma
metric euclidean
field e[mu,^i] kinds=spacetime,internal momentum=p
field A[mu,^i] kinds=spacetime,internal momentum=Pi
label p:0 phi lambda
label Pi:0 phitilde lambdatilde
label p:a varphi xi
label Pi:a varphitilde xitilde
label d(p:0) tau Upsilon
label d(Pi:0) tautilde Upsilontilde
let F[mu,nu,i] = d_mu(A[nu,i]) - d_nu(A[mu,i]) + eps3[i,^j,^k]*A[mu,j]*A[nu,k]
let De[mu,nu,i] = d_mu(e[nu,i]) + eps3[i,^j,^k]*A[mu,j]*e[nu,k]
lagrangian eps2up[a,b]*(e[b,^i] + 1/gamma*A[b,^i])*dot(A[a,i])
  + 1/2*eps2up[a,b]*e[0,^i]*F[a,b,i]
  + eps2up[a,b]*A[0,i]*(De[a,b,^i] + 1/gamma*F[a,b,^i])
covariant -1/2*epsst[mu,nu,rho]*(e[mu,^i]*F[nu,rho,i]
  + 1/gamma*(2*A[mu,^i]*d_nu(A[rho,i]) + 2/3*eps3[i,j,k]*A[mu,^i]*A[nu,^j]*A[rho,^k]))
";

const ABELIAN_CS: &str = "\
model abelian-cs
field A[mu] kinds=spacetime momentum=Pi
label Pi:0 phi lambda
label Pi:a varphi xi
label d(Pi:0) tau Upsilon
lagrangian eps2up[a,b]*A[b]*dot(A[a]) + 2*A[0]*eps2up[a,b]*d_a(A[b])
covariant epsst[mu,nu,rho]*A[mu]*d_nu(A[rho])
";

const MAXWELL: &str = "\
model maxwell-first-order
field A[mu] kinds=spacetime momentum=Pi
field E[^a] kinds=spatial momentum=P
label Pi:0 phi lambda
label Pi:a varphi xi
label P varphitilde xitilde
label d(Pi:0) tau Upsilon
let F[mu,nu] = d_mu(A[nu]) - d_nu(A[mu])
lagrangian E[^a]*dot(A[a]) - 1/2*E[a]*E[^a] - 1/4*F[a,b]*F[^a,^b] + A[0]*d_a(E[^a])
";

pub const BUILTINS: [&str; 4] = ["pcs", "palatini", "abelian-cs", "maxwell-first-order"];

pub fn builtin(name: &str) -> Result<Model, ModelError> {
    builtin_with(name, None)
}

/// A builtin model, optionally under another internal metric.
pub fn builtin_with(name: &str, metric: Option<InternalMetric>) -> Result<Model, ModelError> {
    let parse = |src: &str| crate::dsl::parse_model_with(src, metric);
    match name {
        "pcs" => parse(PCS),
        "palatini" => {
            let mut m = parse(PCS)?;
            let zero = Binding::lambda_zero();
            let sub = |x: &Expression| x.substitute(&zero).expect("coefficient-only binding");
            m.name = "palatini".to_string();
            m.param = None;
            m.lagrangian = sub(&m.lagrangian);
            m.covariant = m.covariant.as_ref().map(sub);
            Ok(m)
        }
        "abelian-cs" => parse(ABELIAN_CS),
        "maxwell-first-order" => parse(MAXWELL),
        other => Err(ModelError::UnknownBuiltin(other.to_string())),
    }
}

/// Source text of a builtin (palatini is derived from pcs and has none).
pub fn builtin_source(name: &str) -> Option<&'static str> {
    match name {
        "pcs" => Some(PCS),
        "abelian-cs" => Some(ABELIAN_CS),
        "maxwell-first-order" => Some(MAXWELL),
        _ => None,
    }
}
