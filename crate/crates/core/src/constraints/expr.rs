//! Residual expression trees and their exact coefficient gradients.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{check_dims, Error, Result};
use crate::surrogate::{dot, SurrogateModel};

/// Largest number of distinct surrogate derivatives one expression may use.
pub const MAX_TERMS: usize = 16;

type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Named scalar function of the collocation point.
#[derive(Clone)]
pub struct SourceTerm {
    pub name: String,
    f: PointFn,
}

impl SourceTerm {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f) }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

impl fmt::Debug for SourceTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SourceTerm({})", self.name)
    }
}

/// A residual built from surrogate derivatives, coordinates and constants.
/// Equalities drive it to zero; inequalities require it to be `>= 0`.
#[derive(Debug, Clone)]
pub enum Expr {
    /// `d^orders Y / dx^orders`; all zeros is the surrogate value itself.
    Surrogate(Vec<u8>),
    Coordinate(usize),
    Constant(f64),
    Source(SourceTerm),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Power(Box<Expr>, u32),
    Negate(Box<Expr>),
}

/// Size guards for configured expressions.
#[derive(Debug, Clone, Copy)]
pub struct ExprLimits {
    pub max_depth: usize,
    pub max_nodes: usize,
}

impl Default for ExprLimits {
    fn default() -> Self {
        Self { max_depth: 64, max_nodes: 10_000 }
    }
}

impl Expr {
    pub fn value() -> Expr {
        Expr::Surrogate(Vec::new())
    }

    pub fn difference(a: Expr, b: Expr) -> Expr {
        Expr::Sum(vec![a, Expr::Negate(Box::new(b))])
    }

    pub fn scale(c: f64, e: Expr) -> Expr {
        Expr::Product(vec![Expr::Constant(c), e])
    }

    /// True if no surrogate term appears below this node.
    pub fn is_coefficient_free(&self) -> bool {
        match self {
            Expr::Surrogate(_) => false,
            Expr::Coordinate(_) | Expr::Constant(_) | Expr::Source(_) => true,
            Expr::Sum(c) | Expr::Product(c) => c.iter().all(Expr::is_coefficient_free),
            Expr::Power(c, _) | Expr::Negate(c) => c.is_coefficient_free(),
        }
    }

    /// Affine in the coefficients: no product of two surrogate-dependent
    /// factors and no power above one of a surrogate-dependent base.
    pub fn is_linear(&self) -> bool {
        match self {
            Expr::Surrogate(_) | Expr::Coordinate(_) | Expr::Constant(_) | Expr::Source(_) => true,
            Expr::Sum(c) => c.iter().all(Expr::is_linear),
            Expr::Product(c) => {
                c.iter().filter(|e| !e.is_coefficient_free()).count() <= 1
                    && c.iter().all(Expr::is_linear)
            }
            Expr::Power(c, n) => c.is_coefficient_free() || (*n == 1 && c.is_linear()),
            Expr::Negate(c) => c.is_linear(),
        }
    }

    fn depth(&self) -> usize {
        1 + match self {
            Expr::Sum(c) | Expr::Product(c) => c.iter().map(Expr::depth).max().unwrap_or(0),
            Expr::Power(c, _) | Expr::Negate(c) => c.depth(),
            _ => 0,
        }
    }

    fn node_count(&self) -> usize {
        1 + match self {
            Expr::Sum(c) | Expr::Product(c) => c.iter().map(Expr::node_count).sum(),
            Expr::Power(c, _) | Expr::Negate(c) => c.node_count(),
            _ => 0,
        }
    }

    /// Checks the tree against a model dimensionality and size limits. An
    /// empty orders tuple is accepted as shorthand for all zeros.
    pub fn validate(&self, dims: usize, limits: ExprLimits) -> Result<()> {
        let depth = self.depth();
        if depth > limits.max_depth {
            return Err(Error::Expression(format!(
                "expression depth {depth} exceeds limit {}",
                limits.max_depth
            )));
        }
        let nodes = self.node_count();
        if nodes > limits.max_nodes {
            return Err(Error::Expression(format!(
                "expression has {nodes} nodes, limit is {}",
                limits.max_nodes
            )));
        }
        self.validate_nodes(dims)?;
        let terms = self.surrogate_terms(dims).len();
        if terms > MAX_TERMS {
            return Err(Error::Expression(format!(
                "{terms} distinct surrogate derivatives (at most {MAX_TERMS} supported)"
            )));
        }
        Ok(())
    }

    fn validate_nodes(&self, dims: usize) -> Result<()> {
        match self {
            Expr::Surrogate(o) => {
                if !o.is_empty() && o.len() != dims {
                    return Err(Error::DimensionMismatch { expected: dims, got: o.len() });
                }
            }
            Expr::Coordinate(i) => {
                if *i >= dims {
                    return Err(Error::Expression(format!("coordinate {i} out of range")));
                }
            }
            Expr::Constant(_) | Expr::Source(_) => {}
            Expr::Sum(c) | Expr::Product(c) => {
                if c.is_empty() {
                    return Err(Error::Expression("empty sum or product".into()));
                }
                for e in c {
                    e.validate_nodes(dims)?;
                }
            }
            Expr::Power(c, n) => {
                if *n == 0 {
                    return Err(Error::Expression("power exponent must be >= 1".into()));
                }
                c.validate_nodes(dims)?;
            }
            Expr::Negate(c) => c.validate_nodes(dims)?,
        }
        Ok(())
    }

    /// Distinct derivative orders in first-appearance order.
    pub fn surrogate_terms(&self, dims: usize) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        self.collect_terms(dims, &mut out);
        out
    }

    fn collect_terms(&self, dims: usize, out: &mut Vec<Vec<u8>>) {
        match self {
            Expr::Surrogate(o) => {
                let o = full_orders(o, dims);
                if !out.contains(&o) {
                    out.push(o);
                }
            }
            Expr::Sum(c) | Expr::Product(c) => c.iter().for_each(|e| e.collect_terms(dims, out)),
            Expr::Power(c, _) | Expr::Negate(c) => c.collect_terms(dims, out),
            _ => {}
        }
    }

    /// Value of a coefficient-free tree at `x`.
    pub fn eval_free(&self, x: &[f64]) -> Result<f64> {
        Ok(match self {
            Expr::Surrogate(_) => {
                return Err(Error::Expression("surrogate term in a coefficient-free context".into()))
            }
            Expr::Coordinate(i) => x[*i],
            Expr::Constant(c) => *c,
            Expr::Source(s) => s.eval(x),
            Expr::Sum(c) => {
                let mut acc = 0.0;
                for e in c {
                    acc += e.eval_free(x)?;
                }
                acc
            }
            Expr::Product(c) => {
                let mut acc = 1.0;
                for e in c {
                    acc *= e.eval_free(x)?;
                }
                acc
            }
            Expr::Power(c, n) => c.eval_free(x)?.powi(*n as i32),
            Expr::Negate(c) => -c.eval_free(x)?,
        })
    }

    /// Resolves surrogate terms to indices into [`Expr::surrogate_terms`].
    pub fn compile(&self, dims: usize) -> Result<CompiledExpr> {
        self.validate(dims, ExprLimits::default())?;
        let terms = self.surrogate_terms(dims);
        let root = self.compile_node(dims, &terms);
        Ok(CompiledExpr { root, terms })
    }

    fn compile_node(&self, dims: usize, terms: &[Vec<u8>]) -> Node {
        match self {
            Expr::Surrogate(o) => {
                let o = full_orders(o, dims);
                Node::Term(terms.iter().position(|t| *t == o).expect("term collected"))
            }
            Expr::Coordinate(i) => Node::Coordinate(*i),
            Expr::Constant(c) => Node::Constant(*c),
            Expr::Source(s) => Node::Source(s.clone()),
            Expr::Sum(c) => Node::Sum(c.iter().map(|e| e.compile_node(dims, terms)).collect()),
            Expr::Product(c) => {
                Node::Product(c.iter().map(|e| e.compile_node(dims, terms)).collect())
            }
            Expr::Power(c, n) => Node::Power(Box::new(c.compile_node(dims, terms)), *n),
            Expr::Negate(c) => Node::Negate(Box::new(c.compile_node(dims, terms))),
        }
    }
}

fn full_orders(o: &[u8], dims: usize) -> Vec<u8> {
    if o.is_empty() {
        vec![0; dims]
    } else {
        o.to_vec()
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Surrogate(o) if o.iter().all(|&v| v == 0) => write!(f, "u"),
            Expr::Surrogate(o) => {
                write!(f, "(d u")?;
                for (i, &n) in o.iter().enumerate() {
                    for _ in 0..n {
                        write!(f, " #{i}")?;
                    }
                }
                write!(f, ")")
            }
            Expr::Coordinate(i) => write!(f, "#{i}"),
            Expr::Constant(c) => write!(f, "{c:?}"),
            Expr::Source(s) => write!(f, "(src {})", s.name),
            Expr::Sum(c) => write_list(f, "+", c),
            Expr::Product(c) => write_list(f, "*", c),
            Expr::Power(c, n) => write!(f, "(^ {c} {n})"),
            Expr::Negate(c) => write!(f, "(neg {c})"),
        }
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, op: &str, items: &[Expr]) -> fmt::Result {
    write!(f, "({op}")?;
    for e in items {
        write!(f, " {e}")?;
    }
    write!(f, ")")
}

/// Value and coefficient gradient of a residual at one point, by forward
/// propagation of `(value, gradient)` pairs through the tree.
pub fn residual_eval(expr: &Expr, model: &SurrogateModel, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let dims = model.dims();
    check_dims(dims, x.len())?;
    expr.validate(dims, ExprLimits::default())?;
    let mut rows = HashMap::new();
    forward_full(expr, model, x, &mut rows)
}

fn forward_full(
    expr: &Expr,
    model: &SurrogateModel,
    x: &[f64],
    rows: &mut HashMap<Vec<u8>, Vec<f64>>,
) -> Result<(f64, Vec<f64>)> {
    let p = model.len();
    Ok(match expr {
        Expr::Surrogate(o) => {
            let o = full_orders(o, model.dims());
            let row = match rows.get(&o) {
                Some(r) => r.clone(),
                None => {
                    let r = model.basis().row(x, Some(&o))?;
                    rows.insert(o, r.clone());
                    r
                }
            };
            (dot(&row, model.coefficients()), row)
        }
        Expr::Coordinate(i) => (x[*i], vec![0.0; p]),
        Expr::Constant(c) => (*c, vec![0.0; p]),
        Expr::Source(s) => (s.eval(x), vec![0.0; p]),
        Expr::Sum(children) => {
            let mut v = 0.0;
            let mut g = vec![0.0; p];
            for c in children {
                let (cv, cg) = forward_full(c, model, x, rows)?;
                v += cv;
                g.iter_mut().zip(&cg).for_each(|(a, b)| *a += b);
            }
            (v, g)
        }
        Expr::Product(children) => {
            let mut v = 1.0;
            let mut g = vec![0.0; p];
            for c in children {
                let (cv, cg) = forward_full(c, model, x, rows)?;
                g.iter_mut().zip(&cg).for_each(|(a, b)| *a = *a * cv + v * b);
                v *= cv;
            }
            (v, g)
        }
        Expr::Power(c, n) => {
            let (cv, cg) = forward_full(c, model, x, rows)?;
            let d = *n as f64 * cv.powi(*n as i32 - 1);
            (cv.powi(*n as i32), cg.iter().map(|b| d * b).collect())
        }
        Expr::Negate(c) => {
            let (cv, cg) = forward_full(c, model, x, rows)?;
            (-cv, cg.iter().map(|b| -b).collect())
        }
    })
}

#[derive(Debug, Clone)]
enum Node {
    Term(usize),
    Coordinate(usize),
    Constant(f64),
    Source(SourceTerm),
    Sum(Vec<Node>),
    Product(Vec<Node>),
    Power(Box<Node>, u32),
    Negate(Box<Node>),
}

/// Dual number over the distinct surrogate terms of one expression.
#[derive(Clone, Copy)]
struct Dual {
    v: f64,
    d: [f64; MAX_TERMS],
}

impl Dual {
    fn constant(v: f64) -> Self {
        Self { v, d: [0.0; MAX_TERMS] }
    }
}

/// An expression whose surrogate terms are referenced by position, so it can
/// be evaluated from cached per-point term values.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    root: Node,
    terms: Vec<Vec<u8>>,
}

impl CompiledExpr {
    /// Derivative orders of each term, in the order `term_values` expects.
    pub fn terms(&self) -> &[Vec<u8>] {
        &self.terms
    }

    /// Residual value and its sensitivities to each term value.
    pub fn forward(&self, x: &[f64], term_values: &[f64], sens: &mut [f64]) -> f64 {
        let r = eval_node(&self.root, x, term_values);
        let k = self.terms.len();
        sens[..k].copy_from_slice(&r.d[..k]);
        r.v
    }
}

fn eval_node(node: &Node, x: &[f64], tv: &[f64]) -> Dual {
    match node {
        Node::Term(k) => {
            let mut d = Dual::constant(tv[*k]);
            d.d[*k] = 1.0;
            d
        }
        Node::Coordinate(i) => Dual::constant(x[*i]),
        Node::Constant(c) => Dual::constant(*c),
        Node::Source(s) => Dual::constant(s.eval(x)),
        Node::Sum(children) => {
            let mut acc = Dual::constant(0.0);
            for c in children {
                let r = eval_node(c, x, tv);
                acc.v += r.v;
                acc.d.iter_mut().zip(&r.d).for_each(|(a, b)| *a += b);
            }
            acc
        }
        Node::Product(children) => {
            let mut acc = Dual::constant(1.0);
            for c in children {
                let r = eval_node(c, x, tv);
                acc.d.iter_mut().zip(&r.d).for_each(|(a, b)| *a = *a * r.v + acc.v * b);
                acc.v *= r.v;
            }
            acc
        }
        Node::Power(c, n) => {
            let mut r = eval_node(c, x, tv);
            let f = *n as f64 * r.v.powi(*n as i32 - 1);
            r.d.iter_mut().for_each(|a| *a *= f);
            r.v = r.v.powi(*n as i32);
            r
        }
        Node::Negate(c) => {
            let mut r = eval_node(c, x, tv);
            r.v = -r.v;
            r.d.iter_mut().for_each(|a| *a = -*a);
            r
        }
    }
}

/// Hinge for `H >= 0`: zero when satisfied, the (negative) value otherwise.
pub fn hinge(v: f64) -> f64 {
    v.min(0.0)
}
