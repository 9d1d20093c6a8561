use std::path::PathBuf;
use std::process::{Command, Output};

use hjcov::canon::canonicalize_with;
use hjcov::dsl::render;
use hjcov::hj;
use hjcov::model::{builtin, Model};
use hjcov::report::{report_scope, AnalysisReport, BlockEntry};

fn hjcov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hjcov")).args(args).output().expect("binary runs")
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name).display().to_string()
}

fn json(args: &[&str]) -> (i32, AnalysisReport, String) {
    let out = hjcov(args);
    let text = String::from_utf8(out.stdout).unwrap();
    let r = AnalysisReport::from_json(&text).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)));
    (out.status.code().unwrap(), r, text)
}

#[test]
fn missing_model_file_is_an_input_error() {
    assert_eq!(hjcov(&["analyze", "nosuchfile.hjm"]).status.code(), Some(1));
}

#[test]
fn unknown_builtin_and_missing_arguments_are_usage_errors() {
    assert_eq!(hjcov(&["analyze", "--builtin", "nope"]).status.code(), Some(1));
    assert_eq!(hjcov(&["analyze"]).status.code(), Some(1));
    assert_eq!(hjcov(&["analyze", "--builtin", "pcs", "--format", "yaml"]).status.code(), Some(1));
}

#[test]
fn syntax_error_is_an_input_error() {
    let out = hjcov(&["analyze", &fixture("bad_syntax.hjm")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn iteration_cap_is_an_internal_limit() {
    let out = hjcov(&["analyze", "--builtin", "pcs", "--max-int-iterations", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("d(p:0)"));
}

#[test]
fn covariant_check_without_covariant_action_is_an_input_error() {
    assert_eq!(hjcov(&["analyze", "--builtin", "maxwell-first-order", "--check", "covariant"]).status.code(), Some(1));
}

fn compact(r: &AnalysisReport, row: &str, col: &str) -> String {
    let b: &BlockEntry = r.generalized_brackets.iter().find(|b| b.row == row && b.col == col).unwrap();
    b.compact.clone().unwrap()
}

#[test]
fn pcs_json_report() {
    let (code, r, _) = json(&["analyze", "--builtin", "pcs", "--format", "json"]);
    assert_eq!(code, 0);
    assert_eq!(r.dof.standard, Some(0));
    assert_eq!(r.multipliers.len(), 6);
    let m = builtin("pcs").unwrap();
    let metric = m.conventions().metric;
    let got = m.parse_expression(&compact(&r, "e:a", "e:a"), &[]).unwrap();
    let want = m.parse_expression("-2/gamma*eps2dn[a,b]*delta[i,j]", &[]).unwrap();
    assert_eq!(canonicalize_with(&got, metric), canonicalize_with(&want, metric));
    assert!(r.covariant.is_none());
}

#[test]
fn pcs_covariant_checks_pass() {
    let (code, r, _) = json(&["analyze", "--builtin", "pcs", "--format", "json", "--check", "covariant"]);
    assert_eq!(code, 0);
    let cov = r.covariant.unwrap();
    assert_eq!(cov.checks.len(), 6);
    assert!(cov.checks.iter().all(|c| c.passed && c.residue.is_empty()));
}

#[test]
fn report_is_byte_deterministic() {
    let args = ["analyze", "--builtin", "pcs", "--format", "json", "--check", "covariant"];
    assert_eq!(hjcov(&args).stdout, hjcov(&args).stdout);
    let text = ["analyze", "--builtin", "pcs", "--check", "covariant"];
    assert_eq!(hjcov(&text).stdout, hjcov(&text).stdout);
}

#[test]
fn out_flag_writes_the_report() {
    let dir = std::env::temp_dir().join(format!("hjcov-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("pcs.json");
    let out = hjcov(&["analyze", "--builtin", "abelian-cs", "--format", "json", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let written = std::fs::read_to_string(&path).unwrap();
    assert_eq!(written, String::from_utf8(hjcov(&["analyze", "--builtin", "abelian-cs", "--format", "json"]).stdout).unwrap());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn clean_model_has_empty_warnings() {
    let (code, r, text) = json(&["analyze", &fixture("abelian_flipped.hjm"), "--format", "json", "--check", "covariant"]);
    assert_eq!(code, 0);
    assert!(r.warnings.is_empty());
    assert!(text.contains("\"warnings\": []"));
    assert_eq!(r.dof.standard, Some(0));
}

#[test]
fn text_report_lists_parameters() {
    let out = hjcov(&["analyze", "--builtin", "pcs"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let section: Vec<&str> = text.lines().skip_while(|l| *l != "parameters").skip(1).take_while(|l| !l.is_empty()).map(str::trim).collect();
    assert_eq!(section, ["t: H'", "lambda: phi", "lambdatilde: phitilde", "Upsilon: tau", "Upsilontilde: tautilde"]);
}

#[test]
fn internal_metric_flag_is_reported() {
    let (code, r, _) = json(&["analyze", "--builtin", "pcs", "--format", "json", "--internal-metric", "lorentzian"]);
    assert_eq!(code, 0);
    assert!(r.conventions.internal_metric.starts_with("lorentzian"));
}

fn expressions(r: &AnalysisReport) -> Vec<String> {
    let mut out = Vec::new();
    // matrix blocks name constraints in their components; bracket tables name fields
    let blocks = |bs: &[BlockEntry], fields: bool, out: &mut Vec<String>| {
        for b in bs {
            out.extend(b.compact.clone());
            for c in &b.components {
                if fields {
                    out.push(c.left.clone());
                    out.push(c.right.clone());
                }
                out.extend(c.kernel.iter().map(|k| k.coefficient.clone()));
            }
        }
    };
    out.extend(r.hamiltonians.iter().map(|h| h.density.clone()));
    out.push(r.canonical_hamiltonian.h0.clone());
    out.push(r.canonical_hamiltonian.h0_momentum_form.clone());
    if let Some(c) = &r.bracket_matrix {
        out.extend(c.entries.iter().chain(&c.inverse).flatten().cloned());
        blocks(&c.blocks, false, &mut out);
        blocks(&c.inverse_blocks, false, &mut out);
    }
    blocks(&r.generalized_brackets, true, &mut out);
    for a in &r.algebra {
        out.push(a.residue.clone());
        out.extend(a.structure.iter().map(|s| s.coefficient.clone()));
    }
    for c in &r.characteristic_equations {
        out.push(c.field.clone());
        out.push(c.dt.clone());
        out.extend(c.parameters.values().cloned());
    }
    out.extend(r.multipliers.iter().cloned());
    out.extend(r.gauge_transformations.iter().map(|g| g.expression.clone()));
    if let Some(cov) = &r.covariant {
        out.extend(cov.potential.iter().chain(&cov.current).cloned());
        out.extend(cov.slice_momenta.iter().chain(&cov.motions).flat_map(|(a, b)| [a.clone(), b.clone()]));
        out.extend(cov.checks.iter().flat_map(|c| c.residue.clone()));
    }
    out
}

fn round_trip(m: &Model, args: &[&str]) {
    let (_, r, text) = json(args);
    assert_eq!(AnalysisReport::from_json(&r.to_json()).unwrap(), r);
    assert_eq!(r.to_json(), text);
    let scope = report_scope(m, &hj::analyze(m, 10).unwrap());
    let metric = m.conventions().metric;
    let all = expressions(&r);
    assert!(all.len() > 100);
    for s in all {
        let x = m.parse_expression(&s, &scope).unwrap_or_else(|e| panic!("{s}: {e}"));
        let again = m.parse_expression(&render(&x, m), &scope).unwrap();
        assert_eq!(canonicalize_with(&x, metric), canonicalize_with(&again, metric), "{s}");
    }
}

#[test]
fn json_expressions_round_trip() {
    round_trip(&builtin("pcs").unwrap(), &["analyze", "--builtin", "pcs", "--format", "json", "--check", "covariant"]);
    round_trip(&builtin("maxwell-first-order").unwrap(), &["analyze", "--builtin", "maxwell-first-order", "--format", "json"]);
}
