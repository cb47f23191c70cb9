//! System dynamics `x(k+1) = f(x(k), w(k))` and posterior over-approximation.
//!
//! A model carries one expression per state component and a declared noise
//! structure. The structure is checked syntactically when the model is
//! built:
//!
//! * `additive`: component `i` reads `g_i(x) + w_i`,
//! * `multiplicative`: component `i` reads `g_i(x) * w_i`,
//! * `general`: any expression, but `w_j` may only appear in component `j`.
//!
//! For the two structured forms an expression without any noise variable is
//! taken to be `g_i` itself, and the noise term is applied implicitly.

mod expr;
pub mod interval;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Interval, Region};

pub use expr::{parse_expr, Expr, Func};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseStructure {
    Additive,
    Multiplicative,
    General,
}

impl NoiseStructure {
    pub fn is_structured(self) -> bool {
        !matches!(self, NoiseStructure::General)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseStructure::Additive => "additive",
            NoiseStructure::Multiplicative => "multiplicative",
            NoiseStructure::General => "general",
        }
    }
}

impl fmt::Display for NoiseStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" | "affine" => Ok(NoiseStructure::Additive),
            "multiplicative" => Ok(NoiseStructure::Multiplicative),
            "general" => Ok(NoiseStructure::General),
            other => Err(Error::invalid(format!("unknown noise structure `{other}`"))),
        }
    }
}

/// Declared direction of a component's dependence on its own noise variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq)]
struct Component {
    /// Full `f_i(x, w)`.
    full: Expr,
    /// Noise-free part `g_i(x)` for structured models.
    nominal: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsModel {
    dim: usize,
    structure: NoiseStructure,
    components: Vec<Component>,
    monotone: Vec<Option<Monotonicity>>,
}

/// Parses newline-separated component expressions (blank lines and lines
/// starting with `#` are skipped).
pub fn parse_dynamics(text: &str, dim: usize, structure: NoiseStructure) -> Result<DynamicsModel> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .collect();
    if lines.len() != dim {
        return Err(Error::invalid(format!(
            "expected {dim} component expressions, found {}",
            lines.len()
        )));
    }
    let exprs = lines
        .into_iter()
        .map(|(line, l)| parse_expr(l, line))
        .collect::<Result<Vec<_>>>()?;
    DynamicsModel::new(exprs, structure)
}

impl DynamicsModel {
    pub fn from_strings<S: AsRef<str>>(exprs: &[S], structure: NoiseStructure) -> Result<Self> {
        let parsed = exprs
            .iter()
            .enumerate()
            .map(|(i, s)| parse_expr(s.as_ref(), i + 1))
            .collect::<Result<Vec<_>>>()?;
        DynamicsModel::new(parsed, structure)
    }

    pub fn new(exprs: Vec<Expr>, structure: NoiseStructure) -> Result<Self> {
        let dim = exprs.len();
        if dim == 0 {
            return Err(Error::invalid("dynamics need at least one component"));
        }
        let mut components = Vec::with_capacity(dim);
        for (i, e) in exprs.into_iter().enumerate() {
            if let Some(m) = e.max_state_var() {
                if m >= dim {
                    return Err(Error::Structure {
                        component: i + 1,
                        message: format!("x{} exceeds the state dimension {dim}", m + 1),
                    });
                }
            }
            let noise = e.noise_vars();
            if let Some(&j) = noise.iter().find(|&&j| j != i) {
                return Err(Error::Structure {
                    component: i + 1,
                    message: format!("w{} may only appear in component {}", j + 1, j + 1),
                });
            }
            components.push(match structure {
                NoiseStructure::General => Component {
                    full: e,
                    nominal: None,
                },
                NoiseStructure::Additive => split_additive(e, i)?,
                NoiseStructure::Multiplicative => split_multiplicative(e, i)?,
            });
        }
        Ok(DynamicsModel {
            dim,
            structure,
            components,
            monotone: vec![None; dim],
        })
    }

    /// Attaches declared noise monotonicity (general structures only).
    pub fn with_monotonicity(mut self, flags: Vec<Option<Monotonicity>>) -> Result<Self> {
        if flags.len() != self.dim {
            return Err(Error::invalid(format!(
                "{} monotonicity flags for {} components",
                flags.len(),
                self.dim
            )));
        }
        self.monotone = flags;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn structure(&self) -> NoiseStructure {
        self.structure
    }

    pub fn monotonicity(&self) -> &[Option<Monotonicity>] {
        &self.monotone
    }

    pub fn expression(&self, i: usize) -> &Expr {
        &self.components[i].full
    }

    pub fn nominal(&self, i: usize) -> Option<&Expr> {
        self.components[i].nominal.as_ref()
    }

    pub fn eval_point(&self, x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len(), "state")?;
        self.check_len(w.len(), "noise")?;
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| {
                c.full.eval(x, w).map_err(|message| Error::Eval {
                    component: i + 1,
                    message,
                })
            })
            .collect()
    }

    /// `Post_f(q)`: component-wise interval extension of the noise-free map.
    pub fn posterior_f(&self, q: &Region) -> Result<Region> {
        if !self.structure.is_structured() {
            return Err(Error::Unsupported(
                "the noise-free posterior needs an additive or multiplicative structure".into(),
            ));
        }
        self.check_len(q.dim(), "region")?;
        let dims = self
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let g = c.nominal.as_ref().expect("structured component");
                g.eval_interval(q.intervals(), &[])
                    .map_err(|message| Error::Eval {
                        component: i + 1,
                        message,
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Region::new(dims)
    }

    /// Over-approximation of `Post(q, c) = { f(x, w) : x in q, w in c }`.
    pub fn posterior(&self, q: &Region, cell: &[Interval]) -> Result<Region> {
        self.check_len(cell.len(), "noise cell")?;
        match self.structure {
            NoiseStructure::General => {
                self.check_len(q.dim(), "region")?;
                let dims = (0..self.dim)
                    .map(|i| interval_extension(self, i, q, cell))
                    .collect::<Result<Vec<_>>>()?;
                Region::new(dims)
            }
            s => structured_posterior(s, &self.posterior_f(q)?, cell),
        }
    }

    fn check_len(&self, got: usize, what: &str) -> Result<()> {
        if got != self.dim {
            return Err(Error::invalid(format!(
                "{what} has dimension {got}, model has {}",
                self.dim
            )));
        }
        Ok(())
    }
}

/// Interval extension of component `i` of the full dynamics over `q x c`.
pub fn interval_extension(
    model: &DynamicsModel,
    i: usize,
    q: &Region,
    cell: &[Interval],
) -> Result<Interval> {
    model.components[i]
        .full
        .eval_interval(q.intervals(), cell)
        .map_err(|message| Error::Eval {
            component: i + 1,
            message,
        })
}

/// Posterior of a structured system given its noise-free posterior box.
pub fn structured_posterior(
    structure: NoiseStructure,
    postf: &Region,
    cell: &[Interval],
) -> Result<Region> {
    if postf.dim() != cell.len() {
        return Err(Error::invalid("posterior and noise cell dimensions differ"));
    }
    let dims = postf
        .intervals()
        .iter()
        .zip(cell)
        .map(|(&p, &c)| match structure {
            NoiseStructure::Additive => Ok(interval::add(p, c)),
            NoiseStructure::Multiplicative => Ok(interval::mul(p, c)),
            NoiseStructure::General => Err(Error::invalid(
                "general structures have no noise-free posterior form",
            )),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Region::from_intervals_unchecked(dims))
}

enum Signed {
    Plus(Expr),
    Minus(Expr),
}

fn flatten_sum(e: Expr, positive: bool, out: &mut Vec<Signed>) {
    match e {
        Expr::Add(a, b) => {
            flatten_sum(*a, positive, out);
            flatten_sum(*b, positive, out);
        }
        Expr::Sub(a, b) => {
            flatten_sum(*a, positive, out);
            flatten_sum(*b, !positive, out);
        }
        other if positive => out.push(Signed::Plus(other)),
        other => out.push(Signed::Minus(other)),
    }
}

fn split_additive(e: Expr, i: usize) -> Result<Component> {
    if !e.has_noise() {
        let full = Expr::Add(Box::new(e.clone()), Box::new(Expr::Noise(i)));
        return Ok(Component {
            full,
            nominal: Some(e),
        });
    }
    let full = e.clone();
    let mut terms = Vec::new();
    flatten_sum(e, true, &mut terms);
    let mut noise_terms = 0;
    let mut nominal: Option<Expr> = None;
    for t in terms {
        let (term, positive) = match t {
            Signed::Plus(t) => (t, true),
            Signed::Minus(t) => (t, false),
        };
        if term == Expr::Noise(i) && positive {
            noise_terms += 1;
            continue;
        }
        if term.has_noise() {
            return Err(Error::Structure {
                component: i + 1,
                message: format!("additive structure needs `g(x) + w{}` with unit coefficient", i + 1),
            });
        }
        nominal = Some(match (nominal, positive) {
            (None, true) => term,
            (None, false) => Expr::Neg(Box::new(term)),
            (Some(acc), true) => Expr::Add(Box::new(acc), Box::new(term)),
            (Some(acc), false) => Expr::Sub(Box::new(acc), Box::new(term)),
        });
    }
    if noise_terms != 1 {
        return Err(Error::Structure {
            component: i + 1,
            message: format!("w{} must appear exactly once as an added term", i + 1),
        });
    }
    Ok(Component {
        full,
        nominal: Some(nominal.unwrap_or(Expr::Const(0.0))),
    })
}

fn flatten_product(e: Expr, out: &mut Vec<Expr>) {
    match e {
        Expr::Mul(a, b) => {
            flatten_product(*a, out);
            flatten_product(*b, out);
        }
        other => out.push(other),
    }
}

fn split_multiplicative(e: Expr, i: usize) -> Result<Component> {
    if !e.has_noise() {
        let full = Expr::Mul(Box::new(e.clone()), Box::new(Expr::Noise(i)));
        return Ok(Component {
            full,
            nominal: Some(e),
        });
    }
    let full = e.clone();
    let mut factors = Vec::new();
    flatten_product(e, &mut factors);
    let mut noise_factors = 0;
    let mut nominal: Option<Expr> = None;
    for f in factors {
        if f == Expr::Noise(i) {
            noise_factors += 1;
            continue;
        }
        if f.has_noise() {
            return Err(Error::Structure {
                component: i + 1,
                message: format!("multiplicative structure needs `g(x) * w{}`", i + 1),
            });
        }
        nominal = Some(match nominal {
            None => f,
            Some(acc) => Expr::Mul(Box::new(acc), Box::new(f)),
        });
    }
    if noise_factors != 1 {
        return Err(Error::Structure {
            component: i + 1,
            message: format!("w{} must appear exactly once as a factor", i + 1),
        });
    }
    Ok(Component {
        full,
        nominal: Some(nominal.unwrap_or(Expr::Const(1.0))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    fn region(b: &[(f64, f64)]) -> Region {
        Region::new(b.iter().map(|&(l, h)| iv(l, h)).collect()).unwrap()
    }

    fn case_study_multiplicative() -> DynamicsModel {
        parse_dynamics(
            "0.7*x1 + 0.1*x2\n0.1*x1 + 0.8*x2",
            2,
            NoiseStructure::Multiplicative,
        )
        .unwrap()
    }

    #[test]
    fn parses_structured_models() {
        let m = case_study_multiplicative();
        assert_eq!(m.dim(), 2);
        let y = m.eval_point(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!((y[0] - 0.8).abs() < 1e-15 && (y[1] - 0.9).abs() < 1e-15);
        let a = parse_dynamics("x1 + w1", 1, NoiseStructure::Additive).unwrap();
        assert_eq!(a.eval_point(&[0.5], &[0.1]).unwrap(), vec![0.6]);
        assert_eq!(a.nominal(0), Some(&Expr::State(0)));
        let m = parse_dynamics("2*w1*x1", 1, NoiseStructure::Multiplicative).unwrap();
        assert_eq!(m.eval_point(&[3.0], &[0.5]).unwrap(), vec![3.0]);
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        match parse_dynamics("x1 + w1\n\nx2 + ", 2, NoiseStructure::Additive) {
            Err(Error::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn structure_claims_are_checked() {
        let cross = DynamicsModel::from_strings(&["x1 + w1", "x2 + w1"], NoiseStructure::Additive);
        assert!(matches!(cross, Err(Error::Structure { component: 2, .. })));
        let scaled = DynamicsModel::from_strings(&["x1 + 2*w1"], NoiseStructure::Additive);
        assert!(matches!(scaled, Err(Error::Structure { .. })));
        let twice = DynamicsModel::from_strings(&["x1 + w1 + w1"], NoiseStructure::Additive);
        assert!(matches!(twice, Err(Error::Structure { .. })));
        let minus = DynamicsModel::from_strings(&["x1 - w1"], NoiseStructure::Additive);
        assert!(matches!(minus, Err(Error::Structure { .. })));
        let inside = DynamicsModel::from_strings(&["sin(x1 * w1)"], NoiseStructure::Multiplicative);
        assert!(matches!(inside, Err(Error::Structure { .. })));
        let general = DynamicsModel::from_strings(&["sin(x1 * w1)", "x2"], NoiseStructure::General);
        assert!(general.is_ok());
        let general = DynamicsModel::from_strings(&["x1 + w2", "x2"], NoiseStructure::General);
        assert!(matches!(general, Err(Error::Structure { component: 1, .. })));
        let oob = DynamicsModel::from_strings(&["x3"], NoiseStructure::General);
        assert!(matches!(oob, Err(Error::Structure { .. })));
    }

    #[test]
    fn eval_errors_name_the_component() {
        let m = DynamicsModel::from_strings(&["x1", "1/x1"], NoiseStructure::Additive).unwrap();
        match m.eval_point(&[0.0, 1.0], &[0.0, 0.0]) {
            Err(Error::Eval { component, .. }) => assert_eq!(component, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(m.eval_point(&[0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn posterior_examples() {
        let id = parse_dynamics("x1 + w1", 1, NoiseStructure::Additive).unwrap();
        let q = region(&[(0.0, 0.2)]);
        assert_eq!(id.posterior_f(&q).unwrap(), q);
        assert_eq!(id.posterior(&q, &[iv(1.0, 1.8)]).unwrap(), region(&[(1.0, 2.0)]));

        let m = case_study_multiplicative();
        let q = region(&[(1.0, 1.1), (1.0, 1.1)]);
        let pf = m.posterior_f(&q).unwrap();
        assert!((pf.interval(0).lo - 0.8).abs() < 1e-12);
        assert!((pf.interval(0).hi - 0.88).abs() < 1e-12);

        let post = structured_posterior(
            NoiseStructure::Multiplicative,
            &region(&[(0.8, 0.88)]),
            &[iv(0.9, 1.0)],
        )
        .unwrap();
        assert!((post.interval(0).lo - 0.72).abs() < 1e-12);
        assert!((post.interval(0).hi - 0.88).abs() < 1e-12);

        let sq = parse_dynamics("x1*x1", 1, NoiseStructure::Additive).unwrap();
        assert_eq!(sq.posterior_f(&region(&[(-1.0, 1.0)])).unwrap(), region(&[(-1.0, 1.0)]));

        let g = parse_dynamics("x1 + w1", 1, NoiseStructure::General).unwrap();
        assert_eq!(
            g.posterior(&region(&[(0.0, 1.0)]), &[iv(0.0, 0.0)]).unwrap(),
            region(&[(0.0, 1.0)])
        );
        assert!(g.posterior_f(&region(&[(0.0, 1.0)])).is_err());
    }

    fn sample_in(iv: Interval, u: f64) -> f64 {
        iv.lo + u * iv.width()
    }

    proptest! {
        #[test]
        fn extension_encloses_samples(
            x0 in -2.0f64..2.0, xw in 0.0f64..1.5,
            w0 in -1.0f64..1.0, ww in 0.0f64..1.0,
            us in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 50),
        ) {
            let m = DynamicsModel::from_strings(
                &["sin(x1) * exp(w1) + abs(x1 - w1)^2 - cos(x1 * w1)"],
                NoiseStructure::General,
            ).unwrap();
            let q = region(&[(x0, x0 + xw)]);
            let c = [iv(w0, w0 + ww)];
            let post = m.posterior(&q, &c).unwrap();
            for (ux, uw) in us {
                let x = sample_in(q.interval(0), ux);
                let w = sample_in(c[0], uw);
                let y = m.eval_point(&[x], &[w]).unwrap()[0];
                prop_assert!(post.interval(0).lo - 1e-12 <= y && y <= post.interval(0).hi + 1e-12);
            }
        }

        #[test]
        fn structured_posterior_inside_general_for_affine(
            a in -1.0f64..1.0, b in -1.0f64..1.0,
            x0 in -2.0f64..2.0, xw in 0.0f64..1.0,
            w0 in 0.1f64..1.0, ww in 0.0f64..1.0,
        ) {
            let g = format!("{a}*x1 + {b}");
            let q = region(&[(x0, x0 + xw)]);
            let c = [iv(w0, w0 + ww)];
            for (s, f) in [
                (NoiseStructure::Additive, format!("{g} + w1")),
                (NoiseStructure::Multiplicative, format!("({g}) * w1")),
            ] {
                let structured = DynamicsModel::from_strings(&[g.as_str()], s).unwrap();
                let general = DynamicsModel::from_strings(&[f.as_str()], NoiseStructure::General).unwrap();
                let ps = structured.posterior(&q, &c).unwrap();
                let pg = general.posterior(&q, &c).unwrap();
                prop_assert!(pg.interval(0).lo <= ps.interval(0).lo + 1e-12);
                prop_assert!(ps.interval(0).hi <= pg.interval(0).hi + 1e-12);
            }
        }

        #[test]
        fn structured_posterior_is_monotone_in_the_cell(
            x0 in 0.1f64..2.0, xw in 0.0f64..1.0,
            c0 in 0.1f64..1.0, cw in 0.0f64..1.0, shift in 0.0f64..1.0,
        ) {
            let q = region(&[(x0, x0 + xw)]);
            for s in [NoiseStructure::Additive, NoiseStructure::Multiplicative] {
                let m = DynamicsModel::from_strings(&["0.5*x1 + 0.2"], s).unwrap();
                let lo = m.posterior(&q, &[iv(c0, c0 + cw)]).unwrap();
                let hi = m.posterior(&q, &[iv(c0 + shift, c0 + cw + shift)]).unwrap();
                prop_assert!(lo.interval(0).lo <= hi.interval(0).lo);
                prop_assert!(lo.interval(0).hi <= hi.interval(0).hi);
            }
        }
    }
}
