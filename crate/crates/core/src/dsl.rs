//! Reader and printer for `.hjm` model files.
//!
//! ```text
//! model pcs
//! param gamma
//! metric euclidean
//! field e[mu,^i] momentum=p
//! let F[mu,nu,i] = d_mu(A[nu,i]) - d_nu(A[mu,i]) + eps3[i,^j,^k]*A[mu,j]*A[nu,k]
//! lagrangian eps2up[a,b]*(e[b,^i] + 1/gamma*A[b,^i])*dot(A[a,i])
//!   + ...
//! ```
//!
//! Indented lines continue the previous statement and `#` starts a comment.

use std::collections::BTreeMap;

use crate::coeff::Coeff;
use crate::expr::{Expression, Factor, FieldAtom, FieldRule, Index, InternalMetric, Kind, Term};
use crate::model::{FamilyLabel, FieldDecl, FieldRole, Macro, Model, ModelError};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(u64),
    Sym(char),
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> ModelError {
    ModelError::Syntax { line, col, msg: msg.into() }
}

fn lex(segments: &[(usize, usize, &str)]) -> Result<Vec<Spanned>, ModelError> {
    let mut out = Vec::new();
    for &(line, col0, text) in segments {
        let chars: Vec<char> = text.chars().collect();
        let mut k = 0;
        while k < chars.len() {
            let c = chars[k];
            let col = col0 + k;
            if c.is_whitespace() {
                k += 1;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = k;
                while k < chars.len() && (chars[k].is_ascii_alphanumeric() || chars[k] == '_') {
                    k += 1;
                }
                out.push(Spanned { tok: Tok::Ident(chars[start..k].iter().collect()), line, col });
            } else if c.is_ascii_digit() {
                let start = k;
                while k < chars.len() && chars[k].is_ascii_digit() {
                    k += 1;
                }
                let s: String = chars[start..k].iter().collect();
                let n = s.parse().map_err(|_| syntax(line, col, "number too large"))?;
                out.push(Spanned { tok: Tok::Num(n), line, col });
            } else if "()[],+-*/^=:".contains(c) {
                out.push(Spanned { tok: Tok::Sym(c), line, col });
                k += 1;
            } else {
                return Err(syntax(line, col, format!("unexpected character `{c}`")));
            }
        }
    }
    Ok(out)
}

/// Declarations an expression is parsed against.
#[derive(Clone, Debug, Default)]
pub struct Scope {
    pub param: Option<String>,
    pub fields: Vec<FieldDecl>,
    pub macros: Vec<Macro>,
}

impl Scope {
    pub fn field(&self, name: &str) -> Option<&FieldDecl> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn from_model(m: &Model) -> Self {
        Scope { param: m.param.clone(), fields: m.fields.clone(), macros: m.macros.clone() }
    }
}

struct Parser<'a> {
    toks: &'a [Spanned],
    pos: usize,
    scope: &'a Scope,
    end: (usize, usize),
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map(|s| (s.line, s.col)).unwrap_or(self.end)
    }

    fn err(&self, msg: impl Into<String>) -> ModelError {
        let (l, c) = self.here();
        syntax(l, c, msg)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ModelError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{c}`")))
        }
    }

    fn lift(&self, at: (usize, usize), r: Result<Expression, crate::expr::ExprError>) -> Result<Expression, ModelError> {
        r.map_err(|e| syntax(at.0, at.1, e.to_string()))
    }

    fn expr(&mut self) -> Result<Expression, ModelError> {
        let mut acc = if self.eat('-') { self.term()?.neg() } else { self.term()? };
        loop {
            let at = self.here();
            if self.eat('+') {
                let t = self.term()?;
                acc = self.lift(at, acc.add(&t))?;
            } else if self.eat('-') {
                let t = self.term()?;
                acc = self.lift(at, acc.sub(&t))?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expression, ModelError> {
        let mut acc = self.unary()?;
        loop {
            let at = self.here();
            if self.eat('*') {
                acc = acc.mul(&self.unary()?);
            } else if self.eat('/') {
                let d = self.unary()?;
                let c = as_constant(&d).and_then(|c| c.inverse()).ok_or_else(|| syntax(at.0, at.1, "division by a non-constant or zero"))?;
                acc = acc.scale(&c);
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expression, ModelError> {
        if self.eat('-') {
            return Ok(self.unary()?.neg());
        }
        let base = self.primary()?;
        let at = self.here();
        if self.eat('^') {
            let n = match self.peek() {
                Some(Tok::Num(n)) => *n,
                _ => return Err(self.err("expected integer exponent")),
            };
            self.pos += 1;
            let c = as_constant(&base).ok_or_else(|| syntax(at.0, at.1, "only coefficients can be raised to a power"))?;
            let mut r = Coeff::one();
            for _ in 0..n {
                r = &r * &c;
            }
            return Ok(Expression::constant(r));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expression, ModelError> {
        let at = self.here();
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(Expression::constant(Coeff::int(n as i64)))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                self.named(&name, at)
            }
            _ => Err(self.err("expected expression")),
        }
    }

    fn index_list(&mut self, kinds: &[Kind]) -> Result<Vec<Index>, ModelError> {
        self.expect('[')?;
        let mut out = Vec::new();
        loop {
            let at = self.here();
            let up = self.eat('^');
            let slot = kinds.get(out.len()).copied();
            let ix = match self.peek().cloned() {
                Some(Tok::Num(v)) => {
                    self.pos += 1;
                    let kind = slot.unwrap_or(Kind::Spacetime);
                    if v > 2 || !kind.values().contains(&(v as u8)) {
                        return Err(syntax(at.0, at.1, format!("index value {v} out of range")));
                    }
                    Index::value(v as u8, kind, up)
                }
                Some(Tok::Ident(n)) => {
                    self.pos += 1;
                    let ix = Index::named(&n, up);
                    if let Some(slot) = slot {
                        if !ix.kind.fits(slot) {
                            return Err(syntax(at.0, at.1, format!("index `{n}` does not fit a {slot:?} slot").to_lowercase()));
                        }
                    }
                    ix
                }
                _ => return Err(self.err("expected index")),
            };
            out.push(ix);
            if self.eat(']') {
                break;
            }
            self.expect(',')?;
        }
        if !kinds.is_empty() && out.len() != kinds.len() {
            return Err(syntax(self.here().0, self.here().1, format!("expected {} indices, found {}", kinds.len(), out.len())));
        }
        Ok(out)
    }

    fn call_arg(&mut self) -> Result<Expression, ModelError> {
        self.expect('(')?;
        let e = self.expr()?;
        self.expect(')')?;
        Ok(e)
    }

    fn named(&mut self, name: &str, at: (usize, usize)) -> Result<Expression, ModelError> {
        if Some(name) == self.scope.param.as_deref() {
            return Ok(Expression::constant(Coeff::lambda().inverse().expect("λ is invertible")));
        }
        match name {
            "dot" => return Ok(self.call_arg()?.derivative(&Index::value(0, Kind::Spacetime, false))),
            "var" => return Ok(variation(&self.call_arg()?)),
            "eps2up" | "eps2dn" | "eps2" | "eps3" | "epsst" => {
                let (kind, n) = match name {
                    "eps3" => (Kind::Internal, 3),
                    "epsst" => (Kind::Spacetime, 3),
                    _ => (Kind::Spatial, 2),
                };
                let mut idx = self.index_list(&vec![kind; n])?;
                if name == "eps2up" || name == "eps2dn" {
                    for ix in &mut idx {
                        ix.up = name == "eps2up";
                    }
                }
                if kind == Kind::Spacetime {
                    for ix in &idx {
                        if ix.kind == Kind::Spatial {
                            return Err(syntax(at.0, at.1, "spatial index in a spacetime epsilon"));
                        }
                    }
                }
                return Ok(Expression::factor(Factor::Eps { kind, idx }));
            }
            "delta" => {
                let mut idx = self.index_list(&[])?;
                if idx.len() != 2 {
                    return Err(syntax(at.0, at.1, "delta takes two indices"));
                }
                let kind = idx.iter().find(|i| i.name().is_some()).map(|i| i.kind).unwrap_or(Kind::Spacetime);
                for ix in &mut idx {
                    if ix.name().is_none() {
                        ix.kind = kind;
                    } else if ix.kind != kind {
                        return Err(syntax(at.0, at.1, "delta pairs indices of different kinds"));
                    }
                }
                let b = idx.pop().expect("two indices");
                let a = idx.pop().expect("two indices");
                return Ok(Expression::factor(Factor::Delta(a, b)));
            }
            _ => {}
        }
        if let Some(dir) = name.strip_prefix("d_") {
            let ix = match dir.parse::<u8>() {
                Ok(v) if v <= 2 => Index::value(v, Kind::Spacetime, false),
                Ok(_) => return Err(syntax(at.0, at.1, "derivative direction out of range")),
                Err(_) => Index::named(dir, false),
            };
            return Ok(self.call_arg()?.derivative(&ix));
        }
        if let Some(m) = self.scope.macros.iter().find(|m| m.name == name) {
            let kinds: Vec<Kind> = m.formal.iter().map(|i| i.kind).collect();
            let idx = self.index_list(&kinds)?;
            let rule = FieldRule { pattern: FieldAtom::new(name, m.formal.clone()), replacement: m.body.clone() };
            let occ = FieldAtom::new(name, idx);
            return Ok(rule.apply(&occ).expect("macro pattern matches its own name"));
        }
        if let Some(f) = self.scope.field(name) {
            let kinds: Vec<Kind> = f.slots.iter().map(|s| s.0).collect();
            let idx = if kinds.is_empty() { Vec::new() } else { self.index_list(&kinds)? };
            return Ok(Expression::field(FieldAtom::new(name, idx)));
        }
        Err(ModelError::Unknown { line: at.0, col: at.1, name: name.to_string() })
    }
}

fn as_constant(e: &Expression) -> Option<Coeff> {
    match e.terms() {
        [] => Some(Coeff::zero()),
        [t] if t.factors.is_empty() => Some(t.coeff.clone()),
        _ => None,
    }
}

/// Field-space variation: an antiderivation turning one even field factor
/// per term into its one-form.
pub fn variation(x: &Expression) -> Expression {
    let mut out = Vec::new();
    for t in x.terms() {
        let mut odd_before = 0;
        for (k, f) in t.factors.iter().enumerate() {
            if let Factor::Field(fa) = f {
                if fa.odd {
                    odd_before += 1;
                    continue;
                }
                let mut factors = t.factors.clone();
                factors[k] = Factor::Field(FieldAtom { odd: true, ..fa.clone() });
                let c = if odd_before % 2 == 1 { -&t.coeff } else { t.coeff.clone() };
                out.push(Term::new(c, factors));
            }
        }
    }
    crate::canon::merge_like(Expression::from_terms(out))
}

fn parse_tokens(toks: &[Spanned], scope: &Scope, end: (usize, usize)) -> Result<Expression, ModelError> {
    let mut p = Parser { toks, pos: 0, scope, end };
    let e = p.expr()?;
    if p.pos != toks.len() {
        return Err(p.err("unexpected trailing input"));
    }
    e.validate().map_err(|e| syntax(end.0, 1, e.to_string()))?;
    Ok(e)
}

/// Parse a standalone expression against `scope`.
pub fn parse_expression(src: &str, scope: &Scope) -> Result<Expression, ModelError> {
    let toks = lex(&[(1, 1, src)])?;
    parse_tokens(&toks, scope, (1, src.chars().count() + 1))
}

struct Statement<'s> {
    line: usize,
    segments: Vec<(usize, usize, &'s str)>,
}

fn statements(src: &str) -> Vec<Statement<'_>> {
    let mut out: Vec<Statement> = Vec::new();
    for (n, raw) in src.lines().enumerate() {
        let line = n + 1;
        let text = match raw.find('#') {
            Some(k) => &raw[..k],
            None => raw,
        };
        if text.trim().is_empty() {
            continue;
        }
        let indented = text.starts_with([' ', '\t']);
        match out.last_mut() {
            Some(st) if indented => st.segments.push((line, 1, text)),
            _ => out.push(Statement { line, segments: vec![(line, 1, text)] }),
        }
    }
    out
}

fn parse_field(toks: &[Spanned], line: usize) -> Result<FieldDecl, ModelError> {
    let at = |k: usize| toks.get(k).map(|t| (t.line, t.col)).unwrap_or((line, 1));
    let name = match toks.first() {
        Some(Spanned { tok: Tok::Ident(n), .. }) => n.clone(),
        _ => return Err(syntax(line, 1, "expected field name")),
    };
    let mut k = 1;
    let mut slots: Vec<(Kind, bool)> = Vec::new();
    if toks.get(k).map(|t| &t.tok) == Some(&Tok::Sym('[')) {
        k += 1;
        loop {
            let up = toks.get(k).map(|t| &t.tok) == Some(&Tok::Sym('^'));
            if up {
                k += 1;
            }
            match toks.get(k).map(|t| &t.tok) {
                Some(Tok::Ident(n)) => slots.push((Kind::of_name(n), up)),
                _ => return Err(syntax(at(k).0, at(k).1, "expected index name")),
            }
            k += 1;
            match toks.get(k).map(|t| &t.tok) {
                Some(Tok::Sym(',')) => k += 1,
                Some(Tok::Sym(']')) => {
                    k += 1;
                    break;
                }
                _ => return Err(syntax(at(k).0, at(k).1, "expected `,` or `]`")),
            }
        }
    }
    let mut decl = FieldDecl { name: name.clone(), slots, momentum: format!("pi_{name}"), role: FieldRole::Configuration };
    while k < toks.len() {
        let key = match &toks[k].tok {
            Tok::Ident(s) => s.clone(),
            _ => return Err(syntax(at(k).0, at(k).1, "expected option")),
        };
        if toks.get(k + 1).map(|t| &t.tok) != Some(&Tok::Sym('=')) {
            return Err(syntax(at(k + 1).0, at(k + 1).1, "expected `=`"));
        }
        k += 2;
        let mut values = Vec::new();
        loop {
            match toks.get(k).map(|t| &t.tok) {
                Some(Tok::Ident(v)) => values.push(v.clone()),
                _ => return Err(syntax(at(k).0, at(k).1, "expected option value")),
            }
            k += 1;
            if toks.get(k).map(|t| &t.tok) == Some(&Tok::Sym(',')) {
                k += 1;
            } else {
                break;
            }
        }
        match key.as_str() {
            "kinds" => {
                if values.len() != decl.slots.len() {
                    return Err(syntax(line, 1, "kinds= must list one kind per index slot"));
                }
                for (slot, v) in decl.slots.iter_mut().zip(&values) {
                    slot.0 = match v.as_str() {
                        "spacetime" => Kind::Spacetime,
                        "spatial" => Kind::Spatial,
                        "internal" => Kind::Internal,
                        other => return Err(syntax(line, 1, format!("unknown index kind `{other}`"))),
                    };
                }
            }
            "momentum" => decl.momentum = values.join(","),
            "role" => {
                decl.role = match values[0].as_str() {
                    "configuration" => FieldRole::Configuration,
                    "test" => FieldRole::Test,
                    other => return Err(syntax(line, 1, format!("unknown role `{other}`"))),
                }
            }
            other => return Err(syntax(line, 1, format!("unknown field option `{other}`"))),
        }
    }
    Ok(decl)
}

/// Parse a model document. The result is validated.
pub fn parse_model(src: &str) -> Result<Model, ModelError> {
    parse_model_with(src, None)
}

/// Parse a model; a given `metric` overrides the file's `metric` directive.
pub fn parse_model_with(src: &str, metric_override: Option<InternalMetric>) -> Result<Model, ModelError> {
    let mut name: Option<String> = None;
    let mut scope = Scope::default();
    let mut metric = InternalMetric::Euclidean;
    let mut labels: Vec<FamilyLabel> = Vec::new();
    let mut lagrangian: Option<Expression> = None;
    let mut covariant: Option<Expression> = None;
    for st in statements(src) {
        let toks = lex(&st.segments)?;
        let last = st.segments.last().expect("nonempty statement");
        let end = (last.0, last.2.chars().count() + 1);
        let Some(Spanned { tok: Tok::Ident(kw), .. }) = toks.first() else {
            return Err(syntax(st.line, 1, "expected a directive"));
        };
        let rest = &toks[1..];
        let word = |k: usize| -> Result<String, ModelError> {
            match rest.get(k) {
                Some(Spanned { tok: Tok::Ident(s), .. }) => Ok(s.clone()),
                Some(t) => Err(syntax(t.line, t.col, "expected a name")),
                None => Err(syntax(end.0, end.1, "expected a name")),
            }
        };
        match kw.as_str() {
            "model" => {
                let text: String = st.segments.iter().map(|s| s.2).collect::<Vec<_>>().join(" ");
                let n = text.trim().strip_prefix("model").unwrap_or("").trim().to_string();
                if n.is_empty() || n.contains(char::is_whitespace) {
                    return Err(syntax(st.line, 7, "expected one model name"));
                }
                name = Some(n);
            }
            "param" => {
                if scope.param.is_some() {
                    return Err(syntax(st.line, 1, "only one parameter is supported"));
                }
                scope.param = Some(word(0)?);
            }
            "metric" => {
                metric = match word(0)?.as_str() {
                    "euclidean" => InternalMetric::Euclidean,
                    "lorentzian" => InternalMetric::Lorentzian,
                    other => return Err(syntax(st.line, 8, format!("unknown metric `{other}`"))),
                }
            }
            "field" => {
                let f = parse_field(rest, st.line)?;
                if scope.field(&f.name).is_some() {
                    return Err(syntax(st.line, 1, format!("field `{}` declared twice", f.name)));
                }
                scope.fields.push(f);
            }
            "let" => {
                let mname = word(0)?;
                let close = rest.iter().position(|t| t.tok == Tok::Sym('=')).ok_or_else(|| syntax(st.line, 1, "expected `=`"))?;
                let mut formal = Vec::new();
                for t in &rest[1..close] {
                    match &t.tok {
                        Tok::Ident(n) => formal.push(Index::named(n, false)),
                        Tok::Sym('[' | ']' | ',') => {}
                        _ => return Err(syntax(t.line, t.col, "macro indices must be names")),
                    }
                }
                let body = parse_tokens(&rest[close + 1..], &scope, end)?;
                let want: Vec<(String, Kind)> = {
                    let mut v: Vec<(String, Kind)> = formal.iter().map(|i| (i.name().unwrap_or("").to_string(), i.kind)).collect();
                    v.sort();
                    v
                };
                if body.free_indices().loose() != want && !body.is_empty() {
                    return Err(ModelError::Unbalanced { what: format!("macro {mname}"), index: body.free_indices().to_string() });
                }
                scope.macros.push(Macro { name: mname, formal, body });
            }
            "label" => {
                let idents: Vec<String> = rest
                    .iter()
                    .map(|t| match &t.tok {
                        Tok::Ident(s) => s.clone(),
                        Tok::Num(n) => n.to_string(),
                        Tok::Sym(c) => c.to_string(),
                    })
                    .collect();
                // the key is everything before the last two names
                if idents.len() < 3 {
                    return Err(syntax(st.line, 1, "label needs a key, a name and a parameter"));
                }
                let n = idents.len();
                labels.push(FamilyLabel { key: idents[..n - 2].concat(), name: idents[n - 2].clone(), parameter: idents[n - 1].clone() });
            }
            "lagrangian" => lagrangian = Some(parse_tokens(rest, &scope, end)?),
            "covariant" => covariant = Some(parse_tokens(rest, &scope, end)?),
            other => return Err(syntax(st.line, 1, format!("unknown directive `{other}`"))),
        }
    }
    let name = name.ok_or_else(|| syntax(1, 1, "missing `model` directive"))?;
    let lagrangian = lagrangian.ok_or_else(|| syntax(1, 1, "missing `lagrangian` directive"))?;
    Model::new(name, scope, metric_override.unwrap_or(metric), labels, lagrangian, covariant)
}

/// Print a model in the file format; `parse_model` reads it back unchanged.
pub fn print_model(m: &Model) -> String {
    let mut s = format!("model {}\n", m.name);
    let param = m.param.clone().unwrap_or_else(|| "gamma".to_string());
    if let Some(p) = &m.param {
        s += &format!("param {p}\n");
    }
    s += &format!(
        "metric {}\n",
        match m.metric {
            InternalMetric::Euclidean => "euclidean",
            InternalMetric::Lorentzian => "lorentzian",
        }
    );
    for f in &m.fields {
        s += &format!("field {}", f.name);
        if !f.slots.is_empty() {
            let names = slot_names(&f.slots);
            s += &format!("[{}]", names.join(","));
            let kinds: Vec<&str> = f
                .slots
                .iter()
                .map(|(k, _)| match k {
                    Kind::Spacetime => "spacetime",
                    Kind::Spatial => "spatial",
                    Kind::Internal => "internal",
                })
                .collect();
            s += &format!(" kinds={}", kinds.join(","));
        }
        s += &format!(" momentum={}", f.momentum);
        if f.role == FieldRole::Test {
            s += " role=test";
        }
        s += "\n";
    }
    for l in &m.labels {
        s += &format!("label {} {} {}\n", l.key, l.name, l.parameter);
    }
    for mac in &m.macros {
        let formal: Vec<String> = mac.formal.iter().map(|i| i.name().unwrap_or("").to_string()).collect();
        s += &format!("let {}[{}] = {}\n", mac.name, formal.join(","), mac.body.render(&param));
    }
    s += &format!("lagrangian {}\n", m.lagrangian.render(&param));
    if let Some(c) = &m.covariant {
        s += &format!("covariant {}\n", c.render(&param));
    }
    s
}

fn slot_names(slots: &[(Kind, bool)]) -> Vec<String> {
    let mut used: BTreeMap<Kind, usize> = BTreeMap::new();
    slots
        .iter()
        .map(|(k, up)| {
            let n = used.entry(*k).or_default();
            let base = crate::expr::name_pool(*k)[*n % crate::expr::name_pool(*k).len()];
            *n += 1;
            if *up {
                format!("^{base}")
            } else {
                base.to_string()
            }
        })
        .collect()
}

/// Render an expression so that it re-parses in the model's scope.
pub fn render(x: &Expression, m: &Model) -> String {
    x.render(m.param.as_deref().unwrap_or("gamma"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;

    #[test]
    fn positioned_syntax_error() {
        let err = parse_model("model x\nfield A[mu]\nlagrangian A[0]*)\n").unwrap_err();
        match err {
            ModelError::Syntax { line, col, .. } => assert_eq!((line, col), (3, 17)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier_is_reported() {
        let err = parse_model("model x\nfield A[mu]\nlagrangian B[0]\n").unwrap_err();
        assert!(matches!(err, ModelError::Unknown { ref name, .. } if name == "B"));
    }

    #[test]
    fn continuation_lines_join() {
        let m = parse_model("model x\nfield A[mu] momentum=P\nlagrangian eps2up[a,b]*A[b]*dot(A[a])\n  + A[0]*eps2up[a,b]*d_a(A[b])\n").unwrap();
        assert_eq!(m.lagrangian.terms().len(), 2);
    }

    #[test]
    fn builtins_round_trip() {
        for name in ["pcs", "palatini", "abelian-cs", "maxwell-first-order"] {
            let m = builtin(name).unwrap();
            let again = parse_model(&print_model(&m)).unwrap();
            assert_eq!(again, m, "{name}");
        }
    }
}
