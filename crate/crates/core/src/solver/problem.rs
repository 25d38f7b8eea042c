//! Dirichlet problem descriptions and their compilation to nodal data.

use std::path::{Path, PathBuf};

use evalexpr::{ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use serde::{Deserialize, Serialize};

use crate::error::{check_quotient, Error, Result};
use crate::grid::{Domain, GridFunction};

/// A scalar field given as a constant, an expression, or a grid file.
///
/// Expressions see `x`, `y`, `z` (the first three coordinates), `x0`, `x1`, ...
/// and `r = |x|`; use float literals (`1.0 / 2.0`) since integer division truncates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    Constant(f64),
    Expr(String),
    Grid { grid: PathBuf },
}

/// A compiled [`DataSource`] that can be evaluated at points.
pub enum CompiledData {
    Constant(f64),
    Expr(Box<Node<DefaultNumericTypes>>),
    Grid(Box<GridFunction>),
}

impl DataSource {
    /// Compiles the source; grid paths are resolved against `base`.
    pub fn compile(&self, base: Option<&Path>) -> Result<CompiledData> {
        match self {
            DataSource::Constant(c) => {
                if !c.is_finite() {
                    return Err(Error::Config(format!("constant {c} is not finite")));
                }
                Ok(CompiledData::Constant(*c))
            }
            DataSource::Expr(s) => evalexpr::build_operator_tree::<DefaultNumericTypes>(s)
                .map(|n| CompiledData::Expr(Box::new(n)))
                .map_err(|e| Error::Config(format!("cannot parse expression '{s}': {e}"))),
            DataSource::Grid { grid } => {
                let path = match base {
                    Some(b) if grid.is_relative() => b.join(grid),
                    _ => grid.clone(),
                };
                Ok(CompiledData::Grid(Box::new(GridFunction::read(&path)?)))
            }
        }
    }
}

impl CompiledData {
    /// Evaluates at every in-domain node of `lattice`; NaN elsewhere.
    pub fn sample(&self, lattice: &GridFunction) -> Result<Vec<f64>> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        let mut out = vec![f64::NAN; lattice.len()];
        for (i, slot) in out.iter_mut().enumerate() {
            if lattice.inside(i) {
                *slot = self.eval_with(&mut ctx, &lattice.point(i))?;
            }
        }
        Ok(out)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.eval_with(&mut HashMapContext::new(), x)
    }

    fn eval_with(&self, ctx: &mut HashMapContext<DefaultNumericTypes>, x: &[f64]) -> Result<f64> {
        match self {
            CompiledData::Constant(c) => Ok(*c),
            CompiledData::Grid(g) => g
                .interpolate(x)
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("grid data does not cover the point {x:?}"))),
            CompiledData::Expr(node) => {
                let set = |ctx: &mut HashMapContext<DefaultNumericTypes>, name: &str, v: f64| {
                    ctx.set_value(name.into(), Value::Float(v))
                        .map_err(|e| Error::Config(format!("expression context: {e}")))
                };
                for (a, name) in ["x", "y", "z"].iter().enumerate().take(x.len()) {
                    set(ctx, name, x[a])?;
                }
                for (a, v) in x.iter().enumerate() {
                    set(ctx, &format!("x{a}"), *v)?;
                }
                set(ctx, "r", x.iter().map(|v| v * v).sum::<f64>().sqrt())?;
                node.eval_number_with_context(ctx)
                    .map_err(|e| Error::Config(format!("cannot evaluate expression at {x:?}: {e}")))
            }
        }
    }
}

fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    50
}
fn default_floor() -> f64 {
    1e-6
}

/// `sigma_n / sigma_k (D^2 u) = f` in the domain, `u = g` on its discrete boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirichletProblem {
    pub n: usize,
    pub k: usize,
    pub domain: Domain,
    /// Lattice spacing.
    pub spacing: f64,
    pub f: DataSource,
    pub g: DataSource,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_floor")]
    pub delta_floor: f64,
}

/// Nodal form of a problem: the lattice plus `f` and `g` at every in-domain node.
#[derive(Clone, Debug)]
pub struct NodalProblem {
    pub k: usize,
    pub lattice: GridFunction,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

impl DirichletProblem {
    pub fn new(domain: Domain, k: usize, spacing: f64, f: DataSource, g: DataSource) -> Self {
        Self {
            n: domain.dim(),
            k,
            domain,
            spacing,
            f,
            g,
            tol: default_tol(),
            max_iter: default_max_iter(),
            delta_floor: default_floor(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid problem JSON: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        check_quotient(self.n, self.k)?;
        self.domain.validate()?;
        if self.domain.dim() != self.n {
            return Err(Error::Config(format!("domain has dimension {}, problem has n = {}", self.domain.dim(), self.n)));
        }
        if !(self.spacing > 0.0) || !(self.tol > 0.0) || !(self.delta_floor > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("spacing, tol, delta_floor and max_iter must be positive".into()));
        }
        Ok(())
    }

    /// Samples `f` and `g` on the lattice; grid paths resolve against `base`.
    pub fn nodal(&self, base: Option<&Path>) -> Result<NodalProblem> {
        self.validate()?;
        let lattice = GridFunction::lattice(self.domain.clone(), self.spacing)?;
        let f = self.f.compile(base)?.sample(&lattice)?;
        let g = self.g.compile(base)?.sample(&lattice)?;
        NodalProblem::new(self.k, lattice, f, g)
    }
}

impl NodalProblem {
    pub fn new(k: usize, lattice: GridFunction, f: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        check_quotient(lattice.n(), k)?;
        if f.len() != lattice.len() || g.len() != lattice.len() {
            return Err(Error::Argument("nodal data does not match the lattice".into()));
        }
        for i in (0..lattice.len()).filter(|&i| lattice.inside(i)) {
            if !(f[i] > 0.0) || !f[i].is_finite() {
                return Err(Error::Domain(format!("f must be positive, found {} at {:?}", f[i], lattice.point(i))));
            }
            if !g[i].is_finite() {
                return Err(Error::Argument(format!("boundary data is not finite at {:?}", lattice.point(i))));
            }
        }
        Ok(Self { k, lattice, f, g })
    }

    /// Builds nodal data from closures.
    pub fn from_fns(
        domain: Domain,
        h: f64,
        k: usize,
        f: impl Fn(&[f64]) -> f64,
        g: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let lattice = GridFunction::lattice(domain, h)?;
        let fv = lattice.map_nodes(|_, x| f(x)).values().to_vec();
        let gv = lattice.map_nodes(|_, x| g(x)).values().to_vec();
        Self::new(k, lattice, fv, gv)
    }

    pub fn n(&self) -> usize {
        self.lattice.n()
    }

    pub fn f_min(&self) -> f64 {
        self.f.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min)
    }

    /// In-domain nodes with a full 3^n stencil carry unknowns; the rest are Dirichlet nodes.
    pub fn is_unknown(&self, i: usize) -> bool {
        self.lattice.has_stencil(i, 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_untagged_sources() {
        let text = r#"{"n":2,"k":1,"domain":{"kind":"box","lo":[-1,-1],"hi":[1,1]},"spacing":0.25,
            "f":1.0,"g":"x*x + y*y"}"#;
        let p = DirichletProblem::from_json(text).unwrap();
        assert_eq!(p.f, DataSource::Constant(1.0));
        assert_eq!(p.g, DataSource::Expr("x*x + y*y".into()));
        assert_eq!(p.tol, 1e-10);
        let back = DirichletProblem::from_json(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
        let nodal = p.nodal(None).unwrap();
        let i = nodal.lattice.nearest(&[0.5, -0.25]).unwrap();
        assert!((nodal.g[i] - 0.3125).abs() < 1e-15);
    }

    #[test]
    fn expressions_see_coordinates_and_radius() {
        let c = DataSource::Expr("x1 + 2.0 * r + math::exp(x0 - x0)".into()).compile(None).unwrap();
        assert!((c.eval(&[3.0, 4.0]).unwrap() - 15.0).abs() < 1e-14);
        assert!(DataSource::Expr("(1 + ".into()).compile(None).is_err());
    }

    #[test]
    fn nonpositive_f_is_a_domain_error() {
        let r = NodalProblem::from_fns(Domain::cube(2, 1.0), 0.5, 1, |x| x[0], |_| 0.0);
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}
