//! Prefix-notation syntax for residual expressions.
//!
//! ```text
//! (- (dt u) (* alpha (+ (dxx u) (dyy u))))
//! (+ (dt u) (* u (dx u)) (neg (* nu (dxx u))))
//! (- u (neg (sin (* pi x))))
//! ```
//!
//! Atoms are numbers, `u` (the surrogate), dimension names (coordinates),
//! parameter names, `pi` and `e`. Derivatives are written `(d u x x t)` or,
//! when every dimension name is a single character, `(dxxt u)`. Operators:
//! `+ - * / ^ neg sin cos exp log sqrt tanh abs src`. Division and the
//! transcendental functions only accept operands that do not depend on `u`.

use std::collections::HashMap;

use super::expr::{Expr, SourceTerm};
use crate::error::{Error, Result};

/// Names visible to the parser.
#[derive(Debug, Clone, Default)]
pub struct ParseContext {
    pub dim_names: Vec<String>,
    pub params: HashMap<String, f64>,
    pub sources: HashMap<String, SourceTerm>,
}

impl ParseContext {
    pub fn new(dim_names: Vec<String>) -> Self {
        Self { dim_names, ..Self::default() }
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn with_source(mut self, source: SourceTerm) -> Self {
        self.sources.insert(source.name.clone(), source);
        self
    }

    fn dim(&self, name: &str) -> Option<usize> {
        self.dim_names.iter().position(|d| d == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn tokenize(src: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in src.chars() {
        match ch {
            '(' | ')' => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn read(tokens: &[String], pos: &mut usize) -> Result<Sexp> {
    let tok = tokens
        .get(*pos)
        .ok_or_else(|| Error::Expression("unexpected end of expression".into()))?;
    *pos += 1;
    match tok.as_str() {
        "(" => {
            let mut items = Vec::new();
            loop {
                match tokens.get(*pos).map(String::as_str) {
                    Some(")") => {
                        *pos += 1;
                        return Ok(Sexp::List(items));
                    }
                    Some(_) => items.push(read(tokens, pos)?),
                    None => return Err(Error::Expression("unbalanced '('".into())),
                }
            }
        }
        ")" => Err(Error::Expression("unexpected ')'".into())),
        atom => Ok(Sexp::Atom(atom.to_string())),
    }
}

/// Parses one expression.
pub fn parse_expr(src: &str, ctx: &ParseContext) -> Result<Expr> {
    let tokens = tokenize(src);
    let mut pos = 0;
    let sexp = read(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(Error::Expression(format!("trailing input in {src:?}")));
    }
    build(&sexp, ctx)
}

fn build(s: &Sexp, ctx: &ParseContext) -> Result<Expr> {
    match s {
        Sexp::Atom(a) => atom(a, ctx),
        Sexp::List(items) => {
            let (head, args) = match items.split_first() {
                Some((Sexp::Atom(h), rest)) => (h.as_str(), rest),
                Some(_) => return Err(Error::Expression("operator must be a symbol".into())),
                None => return Err(Error::Expression("empty list".into())),
            };
            list(head, args, ctx)
        }
    }
}

fn atom(a: &str, ctx: &ParseContext) -> Result<Expr> {
    if a == "u" {
        return Ok(Expr::value());
    }
    if let Some(i) = ctx.dim(a) {
        return Ok(Expr::Coordinate(i));
    }
    if let Some(&v) = ctx.params.get(a) {
        return Ok(Expr::Constant(v));
    }
    match a {
        "pi" => return Ok(Expr::Constant(std::f64::consts::PI)),
        "e" => return Ok(Expr::Constant(std::f64::consts::E)),
        _ => {}
    }
    a.parse::<f64>()
        .map(Expr::Constant)
        .map_err(|_| Error::Expression(format!("unknown symbol {a:?}")))
}

fn args_of(args: &[Sexp], ctx: &ParseContext) -> Result<Vec<Expr>> {
    args.iter().map(|a| build(a, ctx)).collect()
}

fn arity(head: &str, args: &[Sexp], n: usize) -> Result<()> {
    if args.len() != n {
        return Err(Error::Expression(format!(
            "{head} takes {n} argument(s), got {}",
            args.len()
        )));
    }
    Ok(())
}

fn free(head: &str, e: Expr) -> Result<Expr> {
    if e.is_coefficient_free() {
        Ok(e)
    } else {
        Err(Error::Expression(format!(
            "{head} is only supported on expressions that do not involve u"
        )))
    }
}

fn list(head: &str, args: &[Sexp], ctx: &ParseContext) -> Result<Expr> {
    match head {
        "+" => {
            if args.is_empty() {
                return Err(Error::Expression("+ needs arguments".into()));
            }
            Ok(Expr::Sum(args_of(args, ctx)?))
        }
        "*" => {
            if args.is_empty() {
                return Err(Error::Expression("* needs arguments".into()));
            }
            Ok(Expr::Product(args_of(args, ctx)?))
        }
        "-" => {
            let mut parts = args_of(args, ctx)?;
            match parts.len() {
                0 => Err(Error::Expression("- needs arguments".into())),
                1 => Ok(Expr::Negate(Box::new(parts.remove(0)))),
                _ => {
                    let first = parts.remove(0);
                    let mut terms = vec![first];
                    terms.extend(parts.into_iter().map(|p| Expr::Negate(Box::new(p))));
                    Ok(Expr::Sum(terms))
                }
            }
        }
        "neg" => {
            arity(head, args, 1)?;
            Ok(Expr::Negate(Box::new(build(&args[0], ctx)?)))
        }
        "^" | "pow" => {
            arity(head, args, 2)?;
            let base = build(&args[0], ctx)?;
            let n = match &args[1] {
                Sexp::Atom(a) => a.parse::<u32>().ok().filter(|&n| n >= 1),
                _ => None,
            }
            .ok_or_else(|| Error::Expression("exponent must be an integer literal >= 1".into()))?;
            Ok(Expr::Power(Box::new(base), n))
        }
        "/" => {
            arity(head, args, 2)?;
            let num = build(&args[0], ctx)?;
            let den = free("division", build(&args[1], ctx)?)?;
            let name = format!("(/ 1 {den})");
            let recip = SourceTerm::new(name, move |x| 1.0 / den.eval_free(x).unwrap_or(f64::NAN));
            Ok(Expr::Product(vec![num, Expr::Source(recip)]))
        }
        "sin" | "cos" | "exp" | "log" | "sqrt" | "tanh" | "abs" => {
            arity(head, args, 1)?;
            let inner = free(head, build(&args[0], ctx)?)?;
            let f: fn(f64) -> f64 = match head {
                "sin" => f64::sin,
                "cos" => f64::cos,
                "exp" => f64::exp,
                "log" => f64::ln,
                "sqrt" => f64::sqrt,
                "tanh" => f64::tanh,
                _ => f64::abs,
            };
            let name = format!("({head} {inner})");
            Ok(Expr::Source(SourceTerm::new(name, move |x| {
                f(inner.eval_free(x).unwrap_or(f64::NAN))
            })))
        }
        "src" => {
            arity(head, args, 1)?;
            match &args[0] {
                Sexp::Atom(name) => ctx
                    .sources
                    .get(name)
                    .cloned()
                    .map(Expr::Source)
                    .ok_or_else(|| Error::Expression(format!("unknown source {name:?}"))),
                _ => Err(Error::Expression("src takes a name".into())),
            }
        }
        "d" => {
            if args.is_empty() || args[0] != Sexp::Atom("u".into()) {
                return Err(Error::Expression("derivatives are written (d u <dims...>)".into()));
            }
            let mut orders = vec![0u8; ctx.dim_names.len()];
            for a in &args[1..] {
                let Sexp::Atom(name) = a else {
                    return Err(Error::Expression("derivative dims must be names".into()));
                };
                let i = ctx
                    .dim(name)
                    .ok_or_else(|| Error::Expression(format!("unknown dimension {name:?}")))?;
                orders[i] += 1;
            }
            Ok(Expr::Surrogate(orders))
        }
        shorthand if shorthand.starts_with('d') && shorthand.len() > 1 => {
            let mut orders = vec![0u8; ctx.dim_names.len()];
            for ch in shorthand[1..].chars() {
                let i = ctx.dim(&ch.to_string()).ok_or_else(|| {
                    Error::Expression(format!("unknown operator or derivative {shorthand:?}"))
                })?;
                orders[i] += 1;
            }
            if args != [Sexp::Atom("u".into())] {
                return Err(Error::Expression(format!("{shorthand} applies to u only")));
            }
            Ok(Expr::Surrogate(orders))
        }
        other => Err(Error::Expression(format!("unknown operator {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> ParseContext {
        ParseContext::new(vec!["x".into(), "y".into(), "t".into()]).with_param("alpha", 0.01)
    }

    #[test]
    fn heat_residual() {
        let e = parse_expr("(- (dt u) (* alpha (+ (dxx u) (dyy u))))", &ctx()).unwrap();
        assert_eq!(
            e.surrogate_terms(3),
            vec![vec![0, 0, 1], vec![2, 0, 0], vec![0, 2, 0]]
        );
        assert!(e.is_linear());
    }

    #[test]
    fn long_and_short_derivatives_agree() {
        let a = parse_expr("(dxt u)", &ctx()).unwrap();
        let b = parse_expr("(d u t x)", &ctx()).unwrap();
        assert_eq!(a.surrogate_terms(3), b.surrogate_terms(3));
    }

    #[test]
    fn transcendental_needs_free_operand() {
        let ok = parse_expr("(- u (sin (* pi x)))", &ctx()).unwrap();
        assert!(ok.is_linear());
        let src = ok.eval_free(&[0.5, 0.0, 0.0]);
        assert!(src.is_err());
        assert!(parse_expr("(sin u)", &ctx()).is_err());
        assert!(parse_expr("(/ 1 u)", &ctx()).is_err());
        let div = parse_expr("(/ x 4)", &ctx()).unwrap();
        assert_eq!(div.eval_free(&[2.0, 0.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn nonlinear_detection() {
        let burgers = parse_expr("(+ (dt u) (* u (dx u)))", &ctx()).unwrap();
        assert!(!burgers.is_linear());
        assert!(!parse_expr("(^ u 2)", &ctx()).unwrap().is_linear());
        assert!(parse_expr("(* x y (dx u))", &ctx()).unwrap().is_linear());
    }

    #[test]
    fn syntax_errors() {
        for bad in ["(+ u", ")", "(foo u)", "(dz u)", "(d x)", "(^ u 0)", "(^ u 1.5)", "u u", "zz"] {
            assert!(parse_expr(bad, &ctx()).is_err(), "{bad}");
        }
    }

    #[test]
    fn sources_resolve_by_name() {
        let c = ctx().with_source(SourceTerm::new("f", |x| x[0] * 10.0));
        let e = parse_expr("(src f)", &c).unwrap();
        assert_eq!(e.eval_free(&[0.3, 0.0, 0.0]).unwrap(), 3.0);
        assert!(parse_expr("(src g)", &c).is_err());
    }
}
