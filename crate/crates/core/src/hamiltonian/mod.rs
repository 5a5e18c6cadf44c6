//! Hamiltonian models `H(x, p, u)` with exact first derivatives, Legendre
//! transforms to `L(x, v, u)`, and sampled diagnostics for the standing
//! assumptions (convexity and superlinearity in `p`, bounded `u`-derivative,
//! and the completeness envelope bound).
//!
//! Two model kinds are supported:
//!
//! - `QuadraticContact`: `H = (1/2) <A(x) p, p> + V0(x) + g(u)` with `A(x)`
//!   symmetric positive definite (constant or grid-sampled), `V0` a parsed
//!   expression over `x`, and `g` linear or sinusoidal in `u`. Derivatives
//!   and the Legendre transform are analytic.
//! - `Expression`: any parsed expression over `(x, p, u)`; derivatives come
//!   from forward-mode jets and the Legendre transform falls back to a
//!   multi-start damped-Newton ascent.

mod expr;
mod jet;

pub use expr::{EvalError, Expr, ExprError};
pub use jet::JetValue;

use thiserror::Error;

use crate::geometry::{GridFunction, TorusSpec, MAX_DIM};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Parse(#[from] ExprError),
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone)]
pub enum LegendreError {
    #[error(
        "legendre ascent did not converge: best value {best_value} at p={best_p:?}, residual |v - dH/dp| = {residual:.3e}"
    )]
    NoConvergence {
        best_value: f64,
        best_p: [f64; MAX_DIM],
        residual: f64,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Value of the Lagrangian `L(x, v, u) = sup_p { p.v - H(x, p, u) }`
/// together with the maximizing momentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangianValue {
    pub value: f64,
    pub argmax_p: [f64; MAX_DIM],
}

/// Symmetric matrix in at most two dimensions, stored as
/// `(a11, a12, a22)`; in one dimension only `a11` is used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMatrix {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl SymMatrix {
    pub fn scalar(a: f64) -> Self {
        Self {
            a11: a,
            a12: 0.0,
            a22: 1.0,
        }
    }

    pub fn new2(a11: f64, a12: f64, a22: f64) -> Self {
        Self { a11, a12, a22 }
    }

    pub fn identity() -> Self {
        Self {
            a11: 1.0,
            a12: 0.0,
            a22: 1.0,
        }
    }

    pub fn min_eigenvalue(&self, dim: usize) -> f64 {
        if dim == 1 {
            self.a11
        } else {
            let tr = self.a11 + self.a22;
            let det = self.a11 * self.a22 - self.a12 * self.a12;
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            tr / 2.0 - disc
        }
    }

    pub fn mul_vec(&self, v: &[f64; MAX_DIM], dim: usize) -> [f64; MAX_DIM] {
        if dim == 1 {
            [self.a11 * v[0], 0.0]
        } else {
            [
                self.a11 * v[0] + self.a12 * v[1],
                self.a12 * v[0] + self.a22 * v[1],
            ]
        }
    }

    pub fn quadratic_form(&self, v: &[f64; MAX_DIM], dim: usize) -> f64 {
        if dim == 1 {
            self.a11 * v[0] * v[0]
        } else {
            self.a11 * v[0] * v[0] + 2.0 * self.a12 * v[0] * v[1] + self.a22 * v[1] * v[1]
        }
    }

    pub fn inverse(&self, dim: usize) -> SymMatrix {
        if dim == 1 {
            SymMatrix::scalar(1.0 / self.a11)
        } else {
            let det = self.a11 * self.a22 - self.a12 * self.a12;
            SymMatrix {
                a11: self.a22 / det,
                a12: -self.a12 / det,
                a22: self.a11 / det,
            }
        }
    }
}

/// The inverse-mass field `A(x)`: constant or sampled per entry on a grid.
#[derive(Debug, Clone)]
pub enum InverseMass {
    Constant(SymMatrix),
    Sampled {
        a11: GridFunction,
        a12: Option<GridFunction>,
        a22: Option<GridFunction>,
    },
}

impl InverseMass {
    /// Matrix value and its derivative along each axis at `x`.
    fn at_with_gradient(
        &self,
        x: &[f64; MAX_DIM],
        dim: usize,
    ) -> (SymMatrix, [SymMatrix; MAX_DIM]) {
        match self {
            InverseMass::Constant(m) => {
                let zero = SymMatrix::new2(0.0, 0.0, 0.0);
                (*m, [zero, zero])
            }
            InverseMass::Sampled { a11, a12, a22 } => {
                let (v11, g11) = a11.interpolate_with_gradient(x);
                let (v12, g12) = match a12 {
                    Some(f) => f.interpolate_with_gradient(x),
                    None => (0.0, [0.0; MAX_DIM]),
                };
                let (v22, g22) = match a22 {
                    Some(f) => f.interpolate_with_gradient(x),
                    None => (1.0, [0.0; MAX_DIM]),
                };
                let m = SymMatrix::new2(v11, v12, v22);
                let mut grads = [SymMatrix::new2(0.0, 0.0, 0.0); MAX_DIM];
                for a in 0..dim {
                    grads[a] = SymMatrix::new2(g11[a], g12[a], g22[a]);
                }
                (m, grads)
            }
        }
    }

    fn at(&self, x: &[f64; MAX_DIM], dim: usize) -> SymMatrix {
        self.at_with_gradient(x, dim).0
    }
}

/// The `u`-coupling `g(u)` of a quadratic-contact potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialCoupling {
    /// `g(u) = rate * u`
    Linear { rate: f64 },
    /// `g(u) = eps * sin(u)`
    Sinusoidal { eps: f64 },
}

impl PotentialCoupling {
    pub fn value(&self, u: f64) -> f64 {
        match self {
            PotentialCoupling::Linear { rate } => rate * u,
            PotentialCoupling::Sinusoidal { eps } => eps * u.sin(),
        }
    }

    pub fn slope(&self, u: f64) -> f64 {
        match self {
            PotentialCoupling::Linear { rate } => *rate,
            PotentialCoupling::Sinusoidal { eps } => eps * u.cos(),
        }
    }

    /// Exact bound on `|g'|`.
    pub fn lambda(&self) -> f64 {
        match self {
            PotentialCoupling::Linear { rate } => rate.abs(),
            PotentialCoupling::Sinusoidal { eps } => eps.abs(),
        }
    }
}

/// `H = (1/2) <A(x) p, p> + V0(x) + g(u)`.
#[derive(Debug, Clone)]
pub struct QuadraticContact {
    pub inverse_mass: InverseMass,
    pub potential: Expr,
    pub coupling: PotentialCoupling,
}

#[derive(Debug, Clone)]
enum ModelKind {
    Quadratic(QuadraticContact),
    Expression(Expr),
}

/// An evaluatable contact Hamiltonian with metadata.
///
/// `lambda_bound` is the declared bound on `|dH/du|`; it may be zero for
/// classical Hamiltonians that do not depend on `u`. Consistency with the
/// sampled derivative is checked by [`HamiltonianModel::check_assumptions`],
/// not assumed.
#[derive(Debug, Clone)]
pub struct HamiltonianModel {
    kind: ModelKind,
    dim: usize,
    lambda_bound: f64,
    p_search_max: f64,
}

/// Default half-width of the momentum search box for the numeric Legendre
/// transform.
pub const DEFAULT_P_SEARCH: f64 = 10.0;

impl HamiltonianModel {
    /// Parse an expression Hamiltonian. `text` uses the variables
    /// `x1..x2`, `p1..p2`, `u`; `lambda_bound` is the declared bound on
    /// `|dH/du|`.
    pub fn parse(text: &str, lambda_bound: f64) -> Result<Self, ModelError> {
        let expr = Expr::parse(text)?;
        Self::from_expression(expr, lambda_bound)
    }

    pub fn from_expression(expr: Expr, lambda_bound: f64) -> Result<Self, ModelError> {
        if !(lambda_bound.is_finite() && lambda_bound >= 0.0) {
            return Err(ModelError::Invalid(format!(
                "lambda bound must be finite and nonnegative, got {lambda_bound}"
            )));
        }
        let dim = expr.dim();
        Ok(Self {
            kind: ModelKind::Expression(expr),
            dim,
            lambda_bound,
            p_search_max: DEFAULT_P_SEARCH,
        })
    }

    /// Build a quadratic-contact model. `potential` is an expression over
    /// the `x` variables only; the `u`-derivative bound comes from the
    /// coupling.
    pub fn quadratic(
        dim: usize,
        inverse_mass: InverseMass,
        potential: Expr,
        coupling: PotentialCoupling,
    ) -> Result<Self, ModelError> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(ModelError::Invalid(format!("dim must be 1 or 2, got {dim}")));
        }
        if potential.uses_p() || potential.uses_u() {
            return Err(ModelError::Invalid(
                "the potential V0 may reference x variables only".into(),
            ));
        }
        if potential.dim() > dim {
            return Err(ModelError::Invalid(format!(
                "potential references x{} but dim = {dim}",
                potential.dim()
            )));
        }
        match &inverse_mass {
            InverseMass::Constant(m) => {
                if m.min_eigenvalue(dim) <= 0.0 {
                    return Err(ModelError::Invalid(
                        "inverse mass matrix must be positive definite".into(),
                    ));
                }
            }
            InverseMass::Sampled { a11, a12, a22 } => {
                let n = a11.spec().node_count();
                for i in 0..n {
                    let m = SymMatrix::new2(
                        a11.values()[i],
                        a12.as_ref().map_or(0.0, |f| f.values()[i]),
                        a22.as_ref().map_or(1.0, |f| f.values()[i]),
                    );
                    if m.min_eigenvalue(dim) <= 0.0 {
                        return Err(ModelError::Invalid(format!(
                            "sampled inverse mass not positive definite at node {i}"
                        )));
                    }
                }
            }
        }
        let lambda_bound = coupling.lambda();
        Ok(Self {
            kind: ModelKind::Quadratic(QuadraticContact {
                inverse_mass,
                potential,
                coupling,
            }),
            dim,
            lambda_bound,
            p_search_max: DEFAULT_P_SEARCH,
        })
    }

    /// `H = u + (1/2) p^2` in one dimension; the closed-form model used
    /// throughout the test oracles.
    pub fn dissipative_free_particle() -> Self {
        Self::quadratic(
            1,
            InverseMass::Constant(SymMatrix::identity()),
            Expr::parse("0").expect("constant expression"),
            PotentialCoupling::Linear { rate: 1.0 },
        )
        .expect("valid by construction")
    }

    /// `H = (1/2) p^2 + rate*u + amp*cos(2 pi x)` in one dimension.
    pub fn cosine_potential(rate: f64, amp: f64) -> Self {
        let text = format!("{amp} * cos(2*3.141592653589793*x1)");
        Self::quadratic(
            1,
            InverseMass::Constant(SymMatrix::identity()),
            Expr::parse(&text).expect("cosine expression"),
            PotentialCoupling::Linear { rate },
        )
        .expect("valid by construction")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda_bound(&self) -> f64 {
        self.lambda_bound
    }

    pub fn p_search_max(&self) -> f64 {
        self.p_search_max
    }

    pub fn set_p_search_max(&mut self, p_max: f64) {
        self.p_search_max = p_max;
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, ModelKind::Quadratic(_))
    }

    /// A short human-readable description for reports.
    pub fn describe(&self) -> String {
        match &self.kind {
            ModelKind::Expression(e) => format!("expression: {}", e.source()),
            ModelKind::Quadratic(q) => {
                let coupling = match q.coupling {
                    PotentialCoupling::Linear { rate } => format!("{rate}*u"),
                    PotentialCoupling::Sinusoidal { eps } => format!("{eps}*sin(u)"),
                };
                format!(
                    "quadratic: (1/2)<A(x)p,p> + {} + {coupling}",
                    q.potential.source()
                )
            }
        }
    }

    /// `H` and its exact first derivatives at `(x, p, u)`.
    pub fn eval_jet(
        &self,
        x: &[f64; MAX_DIM],
        p: &[f64; MAX_DIM],
        u: f64,
    ) -> Result<JetValue, EvalError> {
        match &self.kind {
            ModelKind::Expression(e) => e.eval(x, p, u),
            ModelKind::Quadratic(q) => {
                let dim = self.dim;
                let (a, da) = q.inverse_mass.at_with_gradient(x, dim);
                let v0 = q.potential.eval(x, &[0.0; MAX_DIM], 0.0)?;
                let ap = a.mul_vec(p, dim);
                let quad = 0.5 * a.quadratic_form(p, dim);
                let mut d_x = [0.0; MAX_DIM];
                for axis in 0..dim {
                    d_x[axis] = 0.5 * da[axis].quadratic_form(p, dim) + v0.d_x[axis];
                }
                Ok(JetValue {
                    value: quad + v0.value + q.coupling.value(u),
                    d_x,
                    d_p: ap,
                    d_u: q.coupling.slope(u),
                })
            }
        }
    }

    /// Plain value of `H`.
    pub fn eval_value(
        &self,
        x: &[f64; MAX_DIM],
        p: &[f64; MAX_DIM],
        u: f64,
    ) -> Result<f64, EvalError> {
        self.eval_jet(x, p, u).map(|j| j.value)
    }

    /// Legendre transform `L(x, v, u) = sup_p { p.v - H(x, p, u) }`.
    ///
    /// Quadratic models use the closed form; expression models run a
    /// multi-start ascent refined by damped Newton on `v - dH/dp`.
    pub fn legendre(
        &self,
        x: &[f64; MAX_DIM],
        v: &[f64; MAX_DIM],
        u: f64,
    ) -> Result<LagrangianValue, LegendreError> {
        match &self.kind {
            ModelKind::Quadratic(q) => {
                let dim = self.dim;
                let a = q.inverse_mass.at(x, dim);
                let inv = a.inverse(dim);
                let argmax_p = inv.mul_vec(v, dim);
                let v0 = q.potential.eval(x, &[0.0; MAX_DIM], 0.0)?;
                let value = 0.5 * inv.quadratic_form(v, dim) - v0.value - q.coupling.value(u);
                Ok(LagrangianValue { value, argmax_p })
            }
            ModelKind::Expression(e) => self.legendre_numeric(e, x, v, u),
        }
    }

    fn legendre_numeric(
        &self,
        expr: &Expr,
        x: &[f64; MAX_DIM],
        v: &[f64; MAX_DIM],
        u: f64,
    ) -> Result<LagrangianValue, LegendreError> {
        const STARTS_PER_AXIS: usize = 9;
        const MAX_NEWTON: usize = 60;
        let dim = self.dim;
        let p_max = self.p_search_max;
        let res_tol = 1e-10 * (1.0 + v[0].abs() + v[1].abs());

        let merit = |p: &[f64; MAX_DIM]| -> Result<f64, EvalError> {
            let h = expr.eval_value(x, p, u)?;
            Ok(p[0] * v[0] + p[1] * v[1] - h)
        };

        let mut best: Option<(f64, [f64; MAX_DIM], f64)> = None; // (merit, p, residual)
        let mut converged: Option<(f64, [f64; MAX_DIM])> = None;

        let starts_1d: Vec<f64> = (0..STARTS_PER_AXIS)
            .map(|i| -p_max + 2.0 * p_max * i as f64 / (STARTS_PER_AXIS - 1) as f64)
            .collect();
        let starts: Vec<[f64; MAX_DIM]> = if dim == 1 {
            starts_1d.iter().map(|&p| [p, 0.0]).collect()
        } else {
            starts_1d
                .iter()
                .flat_map(|&p1| starts_1d.iter().map(move |&p2| [p1, p2]))
                .collect()
        };

        for start in starts {
            let mut p = start;
            for _ in 0..MAX_NEWTON {
                let jet = match expr.eval(x, &p, u) {
                    Ok(j) => j,
                    Err(_) => break, // left the finite region; abandon this start
                };
                let r = [v[0] - jet.d_p[0], v[1] - jet.d_p[1]];
                let rnorm = r[0].hypot(r[1]);
                let m = p[0] * v[0] + p[1] * v[1] - jet.value;
                if best.map_or(true, |(bm, _, _)| m > bm) {
                    best = Some((m, p, rnorm));
                }
                if rnorm <= res_tol {
                    if converged.map_or(true, |(cm, _)| m > cm) {
                        converged = Some((m, p));
                    }
                    break;
                }
                // Hessian of H in p by central differences of exact jets.
                let hess = match self.p_hessian_at(expr, x, &p, u) {
                    Ok(h) => h,
                    Err(_) => break,
                };
                let step = solve_sym(&hess, &r, dim);
                let mut alpha = 1.0;
                let mut advanced = false;
                for _ in 0..30 {
                    let cand = [p[0] + alpha * step[0], p[1] + alpha * step[1]];
                    if let Ok(mc) = merit(&cand) {
                        if mc > m {
                            p = cand;
                            advanced = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                if !advanced {
                    // Damped gradient-of-merit fallback.
                    let gscale = 1e-2 / (1.0 + rnorm);
                    let cand = [p[0] + gscale * r[0], p[1] + gscale * r[1]];
                    match merit(&cand) {
                        Ok(mc) if mc > m => p = cand,
                        _ => break,
                    }
                }
            }
        }

        if let Some((value, argmax_p)) = converged {
            Ok(LagrangianValue { value, argmax_p })
        } else {
            let (best_value, best_p, residual) =
                best.unwrap_or((f64::NEG_INFINITY, [0.0; MAX_DIM], f64::INFINITY));
            Err(LegendreError::NoConvergence {
                best_value,
                best_p,
                residual,
            })
        }
    }

    /// Hessian of `H` in `p` by central differences of exact jet
    /// derivatives.
    fn p_hessian_at(
        &self,
        expr: &Expr,
        x: &[f64; MAX_DIM],
        p: &[f64; MAX_DIM],
        u: f64,
    ) -> Result<SymMatrix, EvalError> {
        let dim = self.dim;
        let step = 1e-6 * (1.0 + p[0].abs().max(p[1].abs()));
        let dp_at = |q: &[f64; MAX_DIM]| -> Result<[f64; MAX_DIM], EvalError> {
            Ok(expr.eval(x, q, u)?.d_p)
        };
        let mut cols = [[0.0; MAX_DIM]; MAX_DIM];
        for a in 0..dim {
            let mut hi = *p;
            hi[a] += step;
            let mut lo = *p;
            lo[a] -= step;
            let ghi = dp_at(&hi)?;
            let glo = dp_at(&lo)?;
            for b in 0..dim {
                cols[a][b] = (ghi[b] - glo[b]) / (2.0 * step);
            }
        }
        Ok(if dim == 1 {
            SymMatrix::scalar(cols[0][0])
        } else {
            SymMatrix::new2(
                cols[0][0],
                0.5 * (cols[0][1] + cols[1][0]),
                cols[1][1],
            )
        })
    }

    /// Freeze the x-dependent parts of a quadratic model at one point.
    /// Returns `None` for expression models. The kernel gives
    /// `L(x, v, u) = lagrangian_base(v) - g(u)` with no further expression
    /// evaluation, which the semigroup inner loops lean on.
    pub fn quadratic_kernel(
        &self,
        x: &[f64; MAX_DIM],
    ) -> Option<Result<QuadraticKernel, EvalError>> {
        match &self.kind {
            ModelKind::Expression(_) => None,
            ModelKind::Quadratic(q) => Some((|| {
                let a = q.inverse_mass.at(x, self.dim);
                let v0 = q.potential.eval(x, &[0.0; MAX_DIM], 0.0)?.value;
                Ok(QuadraticKernel {
                    inverse: a.inverse(self.dim),
                    v0,
                    coupling: q.coupling,
                    dim: self.dim,
                })
            })()),
        }
    }

    /// Hessian of `H` in `p` for any model kind (diagnostics path).
    pub fn p_hessian(
        &self,
        x: &[f64; MAX_DIM],
        p: &[f64; MAX_DIM],
        u: f64,
    ) -> Result<SymMatrix, EvalError> {
        match &self.kind {
            ModelKind::Quadratic(q) => Ok(q.inverse_mass.at(x, self.dim)),
            ModelKind::Expression(e) => self.p_hessian_at(e, x, p, u),
        }
    }
}

/// Quadratic model with its x-dependence frozen at one point; see
/// [`HamiltonianModel::quadratic_kernel`].
#[derive(Debug, Clone, Copy)]
pub struct QuadraticKernel {
    inverse: SymMatrix,
    v0: f64,
    coupling: PotentialCoupling,
    dim: usize,
}

impl QuadraticKernel {
    /// `L(x, v, 0) = (1/2) <A(x)^-1 v, v> - V0(x)` (the couplings used here
    /// all have `g(0) = 0`).
    pub fn lagrangian_base(&self, v: &[f64; MAX_DIM]) -> f64 {
        0.5 * self.inverse.quadratic_form(v, self.dim) - self.v0
    }

    /// The value shift: `L(x, v, u) = lagrangian_base(v) - coupling(u)`.
    pub fn coupling(&self) -> &PotentialCoupling {
        &self.coupling
    }
}

fn solve_sym(m: &SymMatrix, rhs: &[f64; MAX_DIM], dim: usize) -> [f64; MAX_DIM] {
    if dim == 1 {
        [rhs[0] / m.a11, 0.0]
    } else {
        let det = m.a11 * m.a22 - m.a12 * m.a12;
        [
            (m.a22 * rhs[0] - m.a12 * rhs[1]) / det,
            (m.a11 * rhs[1] - m.a12 * rhs[0]) / det,
        ]
    }
}

// ---------------------------------------------------------------------------
// Assumption diagnostics
// ---------------------------------------------------------------------------

/// Sampling plan for [`HamiltonianModel::check_assumptions`].
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    /// Node set on the torus for the `x` samples.
    pub x_nodes: TorusSpec,
    /// Momentum box half-width `|p| <= p_max` per axis.
    pub p_max: f64,
    /// Value box half-width `|u| <= u_max`.
    pub u_max: f64,
    /// Momentum samples per axis.
    pub p_steps: usize,
    /// Value samples.
    pub u_steps: usize,
    /// Optional completeness envelope `A(h) = alpha |h| + beta` for the
    /// bound `|p . dH/dp| <= A(H) (1 + |u|)`.
    pub envelope: Option<(f64, f64)>,
}

impl SamplingPlan {
    pub fn coarse(dim: usize, p_max: f64, u_max: f64) -> Self {
        let x_nodes = match dim {
            1 => TorusSpec::line(16),
            _ => TorusSpec::square(8),
        }
        .expect("small torus spec");
        Self {
            x_nodes,
            p_max,
            u_max,
            p_steps: 17,
            u_steps: 9,
            envelope: None,
        }
    }

    pub fn with_envelope(mut self, alpha: f64, beta: f64) -> Self {
        self.envelope = Some((alpha, beta));
        self
    }
}

/// Outcome of one sampled assumption check. `margin` is oriented so that
/// negative-or-zero means "no violation found"; `witness` is the sample
/// achieving the margin.
#[derive(Debug, Clone)]
pub struct AssumptionCheck {
    pub passed: bool,
    pub margin: f64,
    pub witness: ([f64; MAX_DIM], [f64; MAX_DIM], f64),
    pub detail: String,
}

/// Sampled diagnostics report. The checks are evidence over the sampling
/// plan, never proofs; `summary` states the sample count explicitly.
#[derive(Debug, Clone)]
pub struct AssumptionsReport {
    pub convexity: AssumptionCheck,
    pub superlinearity: AssumptionCheck,
    pub lipschitz_u: AssumptionCheck,
    pub completeness: Option<AssumptionCheck>,
    pub samples: usize,
    pub summary: String,
}

impl AssumptionsReport {
    pub fn all_passed(&self) -> bool {
        self.convexity.passed
            && self.superlinearity.passed
            && self.lipschitz_u.passed
            && self.completeness.as_ref().map_or(true, |c| c.passed)
    }
}

impl HamiltonianModel {
    /// Sampled diagnostics for the standing assumptions. Reports, never
    /// proves: the summary language is "no violation found on N samples".
    pub fn check_assumptions(
        &self,
        plan: &SamplingPlan,
    ) -> Result<AssumptionsReport, EvalError> {
        let dim = self.dim;
        let spec = &plan.x_nodes;
        let p_vals: Vec<f64> = grid_1d(plan.p_max, plan.p_steps);
        let u_vals: Vec<f64> = grid_1d(plan.u_max, plan.u_steps);

        let mut samples = 0usize;
        // (H1): minimum eigenvalue of d2H/dp2, with tolerance scaled by |H|.
        let mut h1_margin = f64::INFINITY; // min of (eig_min - tol_pd)
        let mut h1_witness = ([0.0; MAX_DIM], [0.0; MAX_DIM], 0.0);
        // (H3): max |dH/du| - lambda.
        let mut h3_margin = f64::NEG_INFINITY;
        let mut h3_witness = ([0.0; MAX_DIM], [0.0; MAX_DIM], 0.0);
        // Envelope: max |p . dH/dp| - A(H)(1+|u|).
        let mut env_margin = f64::NEG_INFINITY;
        let mut env_witness = ([0.0; MAX_DIM], [0.0; MAX_DIM], 0.0);

        let node_count = spec.node_count();
        for i in 0..node_count {
            let x = spec.node_position(spec.multi_index(i));
            for &p1 in &p_vals {
                let p_list: Vec<[f64; MAX_DIM]> = if dim == 1 {
                    vec![[p1, 0.0]]
                } else {
                    p_vals.iter().map(|&p2| [p1, p2]).collect()
                };
                for p in p_list {
                    for &u in &u_vals {
                        samples += 1;
                        let jet = self.eval_jet(&x, &p, u)?;
                        let hess = self.p_hessian(&x, &p, u)?;
                        let tol_pd = 1e-8 * (1.0 + jet.value.abs());
                        let eig = hess.min_eigenvalue(dim);
                        if eig - tol_pd < h1_margin {
                            h1_margin = eig - tol_pd;
                            h1_witness = (x, p, u);
                        }
                        let h3 = jet.d_u.abs() - self.lambda_bound;
                        if h3 > h3_margin {
                            h3_margin = h3;
                            h3_witness = (x, p, u);
                        }
                        if let Some((alpha, beta)) = plan.envelope {
                            let pdp = p[0] * jet.d_p[0] + p[1] * jet.d_p[1];
                            let bound = (alpha * jet.value.abs() + beta) * (1.0 + u.abs());
                            let viol = pdp.abs() - bound;
                            if viol > env_margin {
                                env_margin = viol;
                                env_witness = (x, p, u);
                            }
                        }
                    }
                }
            }
        }

        // (H2) proxy: H/|p| must grow along rays. Only the tail of the
        // search box is probed; closer in, H/|p| can legitimately dip
        // before the superlinear growth takes over.
        let radii = [plan.p_max / 2.0, 0.75 * plan.p_max, plan.p_max];
        let dirs: Vec<[f64; MAX_DIM]> = if dim == 1 {
            vec![[1.0, 0.0], [-1.0, 0.0]]
        } else {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            vec![
                [1.0, 0.0],
                [-1.0, 0.0],
                [0.0, 1.0],
                [0.0, -1.0],
                [s, s],
                [-s, -s],
            ]
        };
        let mut h2_margin = f64::INFINITY; // min growth increment
        let mut h2_witness = ([0.0; MAX_DIM], [0.0; MAX_DIM], 0.0);
        for i in 0..node_count {
            let x = spec.node_position(spec.multi_index(i));
            for &u in &[0.0, plan.u_max, -plan.u_max] {
                for dir in &dirs {
                    let mut prev: Option<f64> = None;
                    for &r in &radii {
                        let p = [r * dir[0], r * dir[1]];
                        samples += 1;
                        let h = self.eval_value(&x, &p, u)?;
                        let ratio = h / r;
                        if let Some(last) = prev {
                            let growth = ratio - last;
                            if growth < h2_margin {
                                h2_margin = growth;
                                h2_witness = (x, p, u);
                            }
                        }
                        prev = Some(ratio);
                    }
                }
            }
        }

        let convexity = AssumptionCheck {
            passed: h1_margin >= 0.0,
            margin: h1_margin,
            witness: h1_witness,
            detail: format!(
                "min eig(d2H/dp2) minus scaled tolerance = {h1_margin:.6e}"
            ),
        };
        let superlinearity = AssumptionCheck {
            passed: h2_margin > 0.0,
            margin: h2_margin,
            witness: h2_witness,
            detail: format!(
                "min increment of H/|p| along rays (radii {:?}) = {h2_margin:.6e}",
                radii
            ),
        };
        let lipschitz_u = AssumptionCheck {
            passed: h3_margin <= 1e-12,
            margin: h3_margin,
            witness: h3_witness,
            detail: format!(
                "max |dH/du| - lambda = {h3_margin:.6e} (lambda = {})",
                self.lambda_bound
            ),
        };
        let completeness = plan.envelope.map(|(alpha, beta)| AssumptionCheck {
            passed: env_margin <= 1e-9,
            margin: env_margin,
            witness: env_witness,
            detail: format!(
                "max |p.dH/dp| - ({alpha}|H| + {beta})(1 + |u|) = {env_margin:.6e}"
            ),
        });

        let summary = format!(
            "no violation language: checks are sampled evidence on {samples} samples, not proofs"
        );
        Ok(AssumptionsReport {
            convexity,
            superlinearity,
            lipschitz_u,
            completeness,
            samples,
            summary,
        })
    }
}

fn grid_1d(half_width: f64, steps: usize) -> Vec<f64> {
    let n = steps.max(2);
    (0..n)
        .map(|i| -half_width + 2.0 * half_width * i as f64 / (n - 1) as f64)
        .collect()
}
