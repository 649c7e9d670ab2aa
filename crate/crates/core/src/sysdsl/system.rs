use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use super::ast::{Expr, Var};
use super::parser::parse_expression;
use super::ParseDiagnostic;

/// Whether `[params]` values are inlined into the expressions at load time
/// or kept as named references resolved at evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamMode {
    #[default]
    Inline,
    Symbolic,
}

/// A parsed system document: plant `f`, optional continuous-time law `u_c`
/// and any number of named sampled laws `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemDef {
    pub name: Option<String>,
    pub n: usize,
    pub m: usize,
    pub f: Vec<Expr>,
    pub u_c: Option<Vec<Expr>>,
    pub laws: BTreeMap<String, Vec<Expr>>,
    pub params: BTreeMap<String, f64>,
    pub param_mode: ParamMode,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    system: Option<Header>,
    f: Option<BTreeMap<String, Spanned<String>>>,
    u_c: Option<BTreeMap<String, Spanned<String>>>,
    #[serde(rename = "U", default)]
    laws: BTreeMap<String, BTreeMap<String, Spanned<String>>>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    n: i64,
    m: i64,
    #[serde(default)]
    params: ParamMode,
    name: Option<String>,
}

#[derive(Clone, Copy)]
struct Scope {
    n: usize,
    m: usize,
    input: bool,
    period: bool,
}

/// Parses a system-definition document.
///
/// The document is TOML with sections `[system]` (`n`, `m`, optional
/// `name` and `params = "inline" | "symbolic"`), `[f]` (`f1..fn`),
/// `[u_c]` (`uc1..ucm`), `[U.<name>]` (`U1..Um`) and `[params]`.
/// Expressions are TOML strings.
pub fn parse_system(src: &str) -> Result<SystemDef, ParseDiagnostic> {
    let doc: Document = toml::from_str(src).map_err(|e| {
        let offset = e.span().map_or(0, |s| s.start);
        ParseDiagnostic::at(src, offset, e.message().trim().to_string(), &[])
    })?;
    let header = doc
        .system
        .ok_or_else(|| ParseDiagnostic::at(src, 0, "missing mandatory section [system]".into(), &["[system]"]))?;
    if header.n < 1 {
        return Err(ParseDiagnostic::at(src, 0, format!("state dimension n must be positive, got {}", header.n), &[]));
    }
    if header.m < 0 {
        return Err(ParseDiagnostic::at(src, 0, format!("input dimension m must be nonnegative, got {}", header.m), &[]));
    }
    let (n, m) = (header.n as usize, header.m as usize);
    let params = doc.params;
    for (k, v) in &params {
        if !v.is_finite() {
            return Err(ParseDiagnostic::at(src, 0, format!("parameter `{k}` is not finite"), &[]));
        }
        if Var::Param(k.clone()).to_string() != *k || is_reserved(k) {
            return Err(ParseDiagnostic::at(src, 0, format!("`{k}` cannot be used as a parameter name"), &[]));
        }
    }

    let f_section = doc
        .f
        .ok_or_else(|| ParseDiagnostic::at(src, src.len(), "missing mandatory section [f]".into(), &["[f]"]))?;
    let plant_scope = Scope { n, m, input: true, period: false };
    let f = section(src, "f", "f", &f_section, n, plant_scope, &params, header.params)?;

    let u_c = match doc.u_c {
        Some(sec) => {
            let scope = Scope { n, m, input: false, period: false };
            Some(section(src, "u_c", "uc", &sec, m, scope, &params, header.params)?)
        }
        None => None,
    };

    let mut laws = BTreeMap::new();
    for (name, sec) in &doc.laws {
        let scope = Scope { n, m, input: false, period: true };
        let exprs = section(src, &format!("U.{name}"), "U", sec, m, scope, &params, header.params)?;
        laws.insert(name.clone(), exprs);
    }

    Ok(SystemDef { name: header.name, n, m, f, u_c, laws, params, param_mode: header.params })
}

fn is_reserved(name: &str) -> bool {
    super::ast::Func::from_name(name).is_some()
}

#[allow(clippy::too_many_arguments)]
fn section(
    src: &str,
    section: &str,
    prefix: &str,
    entries: &BTreeMap<String, Spanned<String>>,
    count: usize,
    scope: Scope,
    params: &BTreeMap<String, f64>,
    mode: ParamMode,
) -> Result<Vec<Expr>, ParseDiagnostic> {
    for (key, value) in entries {
        let index = key.strip_prefix(prefix).and_then(|r| r.parse::<usize>().ok());
        if !matches!(index, Some(k) if k >= 1 && k <= count && *key == format!("{prefix}{k}")) {
            return Err(ParseDiagnostic::at(
                src,
                value.span().start,
                format!("dimension mismatch: [{section}] key `{key}` is outside {prefix}1..{prefix}{count}"),
                &[],
            ));
        }
    }
    let mut out = Vec::with_capacity(count);
    for k in 1..=count {
        let key = format!("{prefix}{k}");
        let value = entries.get(&key).ok_or_else(|| {
            ParseDiagnostic::at(src, src.len(), format!("missing mandatory key `{key}` in [{section}]"), &[&key])
        })?;
        let base = value_offset(src, value.span().start);
        let expr = parse_expression(value.get_ref()).map_err(|d| d.shifted(src, base))?;
        check_scope(&expr, scope, params).map_err(|msg| ParseDiagnostic::at(src, base, format!("{key}: {msg}"), &[]))?;
        out.push(match mode {
            ParamMode::Inline => expr.substitute(params),
            ParamMode::Symbolic => expr,
        });
    }
    Ok(out)
}

fn value_offset(src: &str, start: usize) -> usize {
    let rest = &src[start.min(src.len())..];
    if rest.starts_with("\"\"\"") || rest.starts_with("'''") {
        start + 3
    } else {
        start + 1
    }
}

fn check_scope(expr: &Expr, scope: Scope, params: &BTreeMap<String, f64>) -> Result<(), String> {
    let mut err = None;
    expr.for_each_var(&mut |v| {
        if err.is_some() {
            return;
        }
        err = match v {
            Var::State(i) if *i >= scope.n => Some(format!("dimension error: {v} is out of range (n = {})", scope.n)),
            Var::Input(_) if !scope.input => Some(format!("{v} is not allowed here")),
            Var::Input(i) if *i >= scope.m => Some(format!("dimension error: {v} is out of range (m = {})", scope.m)),
            Var::Period if !scope.period => Some("T is not allowed here".to_string()),
            Var::Param(name) if !params.contains_key(name) => Some(format!("unknown identifier `{name}`")),
            _ => None,
        };
    });
    err.map_or(Ok(()), Err)
}

impl SystemDef {
    pub fn law_names(&self) -> impl Iterator<Item = &str> {
        self.laws.keys().map(String::as_str)
    }

    pub fn params_for_eval(&self) -> Option<&BTreeMap<String, f64>> {
        match self.param_mode {
            ParamMode::Inline => None,
            ParamMode::Symbolic => Some(&self.params),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysdsl::ast::SlotEnv;

    #[test]
    fn integrator_plant() {
        let def = parse_system("[system]\nn = 1\nm = 1\n[f]\nf1 = \"u1\"\n").unwrap();
        assert_eq!((def.n, def.m), (1, 1));
        let env = SlotEnv { x: &[3.0], u: &[2.0], period: 0.0, params: None };
        assert_eq!(def.f[0].eval(&env).unwrap(), 2.0);
        assert!(def.u_c.is_none());
    }

    #[test]
    fn out_of_range_state_is_dimension_error() {
        let src = "[system]\nn = 1\nm = 0\n[f]\nf1 = \"x2\"\n";
        let d = parse_system(src).unwrap_err();
        assert!(d.message.contains("dimension"), "{}", d.message);
        assert_eq!(d.line, 5);
        assert_eq!(&src[d.offset..d.offset + 2], "x2");
    }

    #[test]
    fn parameters_are_substituted() {
        let src = "[system]\nn = 1\nm = 0\n[params]\na = -1\n[f]\nf1 = \"a*x1\"\n";
        let def = parse_system(src).unwrap();
        let env = SlotEnv { x: &[2.0], u: &[], period: 0.0, params: None };
        assert_eq!(def.f[0].eval(&env).unwrap(), -2.0);
    }

    #[test]
    fn symbolic_parameters_stay_named() {
        let src = "[system]\nn = 1\nm = 0\nparams = \"symbolic\"\n[params]\na = -1\n[f]\nf1 = \"a*x1\"\n";
        let def = parse_system(src).unwrap();
        assert!(def.f[0].to_string().contains('a'));
        let env = SlotEnv { x: &[2.0], u: &[], period: 0.0, params: def.params_for_eval() };
        assert_eq!(def.f[0].eval(&env).unwrap(), -2.0);
    }

    #[test]
    fn structural_errors() {
        let missing_f = "[system]\nn = 1\nm = 0\n";
        assert!(parse_system(missing_f).unwrap_err().message.contains("[f]"));
        let missing_sys = "[f]\nf1 = \"x1\"\n";
        assert!(parse_system(missing_sys).unwrap_err().message.contains("[system]"));
        let missing_key = "[system]\nn = 2\nm = 0\n[f]\nf1 = \"x1\"\n";
        assert!(parse_system(missing_key).unwrap_err().message.contains("f2"));
        let extra = "[system]\nn = 1\nm = 0\n[f]\nf1 = \"x1\"\nf2 = \"x1\"\n";
        assert!(parse_system(extra).unwrap_err().message.contains("dimension mismatch"));
        let unknown = "[system]\nn = 1\nm = 0\n[f]\nf1 = \"k*x1\"\n";
        assert!(parse_system(unknown).unwrap_err().message.contains("unknown identifier"));
        let t_in_f = "[system]\nn = 1\nm = 0\n[f]\nf1 = \"T*x1\"\n";
        assert!(parse_system(t_in_f).is_err());
        let u_in_uc = "[system]\nn = 1\nm = 1\n[f]\nf1 = \"u1\"\n[u_c]\nuc1 = \"u1\"\n";
        assert!(parse_system(u_in_uc).is_err());
        let bad_toml = "[system\nn = 1\n";
        assert!(parse_system(bad_toml).is_err());
    }

    #[test]
    fn expression_errors_point_into_the_document() {
        let src = "[system]\nn = 1\nm = 0\n[f]\nf1 = \"x1 + * 2\"\n";
        let d = parse_system(src).unwrap_err();
        assert_eq!(d.line, 5);
        assert_eq!(&src[d.offset..d.offset + 1], "*");
    }

    #[test]
    fn named_laws_and_autonomous_plants() {
        let src = r#"
[system]
n = 1
m = 1
[f]
f1 = "u1"
[u_c]
uc1 = "-x1"
[U.emulated]
U1 = "-x1"
[U.redesigned]
U1 = "-x1 + 0.5*T*x1"
"#;
        let def = parse_system(src).unwrap();
        assert_eq!(def.law_names().collect::<Vec<_>>(), vec!["emulated", "redesigned"]);
        let auto = parse_system("[system]\nn = 1\nm = 0\n[f]\nf1 = \"-x1\"\n[U.zero]\n").unwrap();
        assert_eq!(auto.laws["zero"].len(), 0);
    }
}
