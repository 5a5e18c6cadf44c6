//! Implicit Lax-Oleinik evolution of grid functions: the discrete backward
//! and forward solution semigroups.
//!
//! One backward step updates each node `x` to the solution `w` of the
//! scalar fixed point
//!
//! ```text
//! w = min over v { f(x - v dt) + dt L(x, v, w) }
//! ```
//!
//! (sup and a sign flip for the forward step). The value argument is placed
//! implicitly - `w` appears inside `L` - which makes each step a
//! `lambda*dt` contraction, so the per-node Picard iteration converges
//! whenever `dt * lambda < 1`. The minimization runs over a uniform
//! velocity grid plus one golden-section refinement around the discrete
//! argmin; ties break toward the lexicographically smallest velocity.

use rayon::prelude::*;
use thiserror::Error;

use crate::action::{self, ActionConfig, ActionError, Direction};
use crate::geometry::{GridFunction, TorusSpec, MAX_DIM};
use crate::hamiltonian::{HamiltonianModel, LegendreError};

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("evolution config invalid: {0}")]
    ConfigInvalid(String),
    #[error(
        "picard iteration diverged at step {step}, node {node}: {iters} iterations \
         without reaching tolerance (is dt*lambda < 1?)"
    )]
    PicardDivergence {
        step: usize,
        node: usize,
        iters: usize,
    },
    #[error(transparent)]
    Legendre(#[from] LegendreError),
    #[error(transparent)]
    Action(#[from] ActionError),
}

/// Discretization parameters for the semigroup evolution.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EvolutionConfig {
    /// Time step; must satisfy `dt * lambda < 1`.
    pub dt: f64,
    /// Velocity search radius per axis; must satisfy `v_max * dt < period/2`.
    pub v_max: f64,
    /// Velocities per axis (odd values include v = 0).
    pub v_res: usize,
    /// Fixed-point tolerance of the per-node Picard iteration.
    pub picard_tol: f64,
    /// Iteration cap for the Picard iteration.
    pub picard_max: usize,
    /// Record a snapshot every this many steps (0 = none).
    pub snapshot_every: usize,
    /// Golden-section refinement around the discrete argmin.
    pub refine_argmin: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            v_max: 8.0,
            v_res: 129,
            picard_tol: 1e-12,
            picard_max: 50,
            snapshot_every: 0,
            refine_argmin: true,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(
        &self,
        model: &HamiltonianModel,
        spec: &TorusSpec,
    ) -> Result<(), EvolveError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(EvolveError::ConfigInvalid(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        let lam = model.lambda_bound();
        if self.dt * lam >= 1.0 {
            return Err(EvolveError::ConfigInvalid(format!(
                "contraction requires dt*lambda < 1, got {}",
                self.dt * lam
            )));
        }
        for a in 0..spec.dim() {
            if self.v_max * self.dt >= spec.period(a) / 2.0 {
                return Err(EvolveError::ConfigInvalid(format!(
                    "single-step displacement v_max*dt = {} must stay below period/2 = {}",
                    self.v_max * self.dt,
                    spec.period(a) / 2.0
                )));
            }
        }
        if self.v_res < 3 {
            return Err(EvolveError::ConfigInvalid(format!(
                "v_res must be at least 3, got {}",
                self.v_res
            )));
        }
        if self.picard_max == 0 {
            return Err(EvolveError::ConfigInvalid("picard_max must be positive".into()));
        }
        Ok(())
    }
}

/// Result of an evolution run.
#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub final_grid: GridFunction,
    pub snapshots: Vec<(f64, GridFunction)>,
    /// Largest Picard iteration count used by any node update.
    pub picard_iters_max: usize,
    /// Whether `min(final - initial) >= -1e-9` over the grid.
    pub monotone_flag: bool,
}

const MONOTONE_TOL: f64 = 1e-9;

struct VelocityGrid {
    dim: usize,
    axis: Vec<f64>,
}

impl VelocityGrid {
    fn new(cfg: &EvolutionConfig, dim: usize) -> Self {
        let n = cfg.v_res;
        let axis = (0..n)
            .map(|i| -cfg.v_max + 2.0 * cfg.v_max * i as f64 / (n - 1) as f64)
            .collect();
        Self { dim, axis }
    }

    fn len(&self) -> usize {
        match self.dim {
            1 => self.axis.len(),
            _ => self.axis.len() * self.axis.len(),
        }
    }

    /// Velocity of flat index `i`, iterating axis 1 outermost so the flat
    /// order is lexicographic in `(v1, v2)`.
    fn at(&self, i: usize) -> [f64; MAX_DIM] {
        match self.dim {
            1 => [self.axis[i], 0.0],
            _ => {
                let n = self.axis.len();
                [self.axis[i / n], self.axis[i % n]]
            }
        }
    }

    fn neighbors_1d(&self, i: usize) -> (f64, f64) {
        let n = self.axis.len();
        let lo = if i == 0 { self.axis[0] } else { self.axis[i - 1] };
        let hi = if i + 1 >= n {
            self.axis[n - 1]
        } else {
            self.axis[i + 1]
        };
        (lo, hi)
    }
}

fn direction_sign(direction: Direction) -> f64 {
    match direction {
        Direction::Backward => -1.0, // departure point x - v dt
        Direction::Forward => 1.0,   // arrival point x + v dt
    }
}

/// Objective at fixed `w`: `interp +/- dt L`; backward minimizes, forward
/// maximizes. `orient` folds both into a minimization.
fn orient(direction: Direction) -> f64 {
    match direction {
        Direction::Backward => 1.0,
        Direction::Forward => -1.0,
    }
}

fn node_update(
    model: &HamiltonianModel,
    f: &GridFunction,
    node: usize,
    dt: f64,
    cfg: &EvolutionConfig,
    vgrid: &VelocityGrid,
    direction: Direction,
) -> Result<(f64, usize), EvolveError> {
    let spec = f.spec();
    let x = spec.node_position(spec.multi_index(node));

    // The oriented objective is `orn * samples_i + dt * L_parts`; both
    // paths minimize it and return `w = orn * best`.
    let scored = match model.quadratic_kernel(&x) {
        Some(kernel) => {
            let kernel = kernel.map_err(LegendreError::from)?;
            node_solve_quadratic(f, &x, node, dt, cfg, vgrid, direction, &kernel)
        }
        None => node_solve_general(model, f, &x, node, dt, cfg, vgrid, direction),
    }?;
    match scored {
        Some(result) => Ok(result),
        None => Err(EvolveError::PicardDivergence {
            step: 0,
            node,
            iters: cfg.picard_max,
        }),
    }
}

fn cache_samples(
    f: &GridFunction,
    x: &[f64; MAX_DIM],
    dt: f64,
    vgrid: &VelocityGrid,
    direction: Direction,
) -> Vec<f64> {
    let sgn = direction_sign(direction);
    (0..vgrid.len())
        .map(|i| {
            let v = vgrid.at(i);
            f.interpolate(&[x[0] + sgn * v[0] * dt, x[1] + sgn * v[1] * dt])
        })
        .collect()
}

/// Fast path for quadratic models: `L(x, v, w) = base(v) - g(w)`, so the
/// velocity argmin is independent of `w` and only a scalar fixed point
/// remains.
#[allow(clippy::too_many_arguments)]
fn node_solve_quadratic(
    f: &GridFunction,
    x: &[f64; MAX_DIM],
    node: usize,
    dt: f64,
    cfg: &EvolutionConfig,
    vgrid: &VelocityGrid,
    direction: Direction,
    kernel: &crate::hamiltonian::QuadraticKernel,
) -> Result<Option<(f64, usize)>, EvolveError> {
    let sgn = direction_sign(direction);
    let orn = orient(direction);
    let samples = cache_samples(f, x, dt, vgrid, direction);

    let mut best_score = f64::INFINITY;
    let mut best_index = 0usize;
    for (i, s) in samples.iter().enumerate() {
        let score = orn * s + dt * kernel.lagrangian_base(&vgrid.at(i));
        if score < best_score {
            best_score = score;
            best_index = i;
        }
    }

    if cfg.refine_argmin {
        let score_at = |v: &[f64; MAX_DIM]| -> f64 {
            let q = [x[0] + sgn * v[0] * dt, x[1] + sgn * v[1] * dt];
            orn * f.interpolate(&q) + dt * kernel.lagrangian_base(v)
        };
        let mut v_best = vgrid.at(best_index);
        let dim = f.spec().dim();
        for axis in 0..dim {
            let idx = axis_index(vgrid, best_index, dim, axis);
            let (lo, hi) = vgrid.neighbors_1d(idx);
            if hi <= lo {
                continue;
            }
            let refined = golden_min(lo, hi, 48, |t| {
                let mut v = v_best;
                v[axis] = t;
                Ok(score_at(&v))
            })?;
            v_best[axis] = refined;
        }
        best_score = best_score.min(score_at(&v_best));
    }

    // scalar fixed point: w = orn * (best_score - dt * g(w))
    let mut w = f.values()[node];
    for iters in 1..=cfg.picard_max {
        let next = orn * (best_score - dt * kernel.coupling().value(w));
        let delta = (next - w).abs();
        w = next;
        if delta <= cfg.picard_tol * (1.0 + w.abs()) {
            return Ok(Some((w, iters)));
        }
    }
    Ok(None)
}

/// General path for expression models: full Picard sweeps over the cached
/// samples with `w` inside the Lagrangian, plus golden-section refinement
/// around the discrete argmin.
#[allow(clippy::too_many_arguments)]
fn node_solve_general(
    model: &HamiltonianModel,
    f: &GridFunction,
    x: &[f64; MAX_DIM],
    node: usize,
    dt: f64,
    cfg: &EvolutionConfig,
    vgrid: &VelocityGrid,
    direction: Direction,
) -> Result<Option<(f64, usize)>, EvolveError> {
    let sgn = direction_sign(direction);
    let orn = orient(direction);
    let samples = cache_samples(f, x, dt, vgrid, direction);
    let nv = vgrid.len();

    let objective = |i: usize, w: f64| -> Result<f64, EvolveError> {
        let lag = model.legendre(x, &vgrid.at(i), w)?;
        Ok(orn * samples[i] + dt * lag.value)
    };

    let mut w = f.values()[node];
    let mut iters_used = None;
    let mut best_index = 0usize;
    for iters in 1..=cfg.picard_max {
        let mut best = f64::INFINITY;
        best_index = 0;
        for i in 0..nv {
            let val = objective(i, w)?;
            if val < best {
                best = val;
                best_index = i;
            }
        }
        let next = orn * best;
        let delta = (next - w).abs();
        w = next;
        if delta <= cfg.picard_tol * (1.0 + w.abs()) {
            iters_used = Some(iters);
            break;
        }
    }
    let Some(iters) = iters_used else {
        return Ok(None);
    };

    if cfg.refine_argmin {
        let phi = |v: &[f64; MAX_DIM], w: f64| -> Result<f64, EvolveError> {
            let q = [x[0] + sgn * v[0] * dt, x[1] + sgn * v[1] * dt];
            let lag = model.legendre(x, v, w)?;
            Ok(orn * f.interpolate(&q) + dt * lag.value)
        };
        let w_grid = w;
        let mut v_best = vgrid.at(best_index);
        let dim = f.spec().dim();
        for axis in 0..dim {
            let idx = axis_index(vgrid, best_index, dim, axis);
            let (lo, hi) = vgrid.neighbors_1d(idx);
            if hi <= lo {
                continue;
            }
            let refined = golden_min(lo, hi, 48, |t| {
                let mut v = v_best;
                v[axis] = t;
                phi(&v, w_grid)
            })?;
            v_best[axis] = refined;
        }
        // re-solve the fixed point at the refined velocity
        let mut wr = w_grid;
        for _ in 0..cfg.picard_max {
            let next = orn * phi(&v_best, wr)?;
            let delta = (next - wr).abs();
            wr = next;
            if delta <= cfg.picard_tol * (1.0 + wr.abs()) {
                break;
            }
        }
        // monotone improvement only; the refined branch can lose to the
        // grid argmin when the bracket is not unimodal
        w = match direction {
            Direction::Backward => wr.min(w_grid),
            Direction::Forward => wr.max(w_grid),
        };
    }
    Ok(Some((w, iters)))
}

fn axis_index(vgrid: &VelocityGrid, flat: usize, dim: usize, axis: usize) -> usize {
    match (dim, axis) {
        (1, _) => flat,
        (_, 0) => flat / vgrid.axis.len(),
        _ => flat % vgrid.axis.len(),
    }
}

fn golden_min(
    mut a: f64,
    mut b: f64,
    iters: usize,
    mut eval: impl FnMut(f64) -> Result<f64, EvolveError>,
) -> Result<f64, EvolveError> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?;
        }
    }
    Ok(if fc <= fd { c } else { d })
}

fn step_directed(
    model: &HamiltonianModel,
    f: &GridFunction,
    dt: f64,
    cfg: &EvolutionConfig,
    direction: Direction,
) -> Result<(GridFunction, usize), EvolveError> {
    let spec = f.spec();
    let vgrid = VelocityGrid::new(cfg, spec.dim());
    let updates: Result<Vec<(f64, usize)>, EvolveError> = (0..spec.node_count())
        .into_par_iter()
        .map(|node| node_update(model, f, node, dt, cfg, &vgrid, direction))
        .collect();
    let updates = updates?;
    let iters = updates.iter().map(|(_, i)| *i).max().unwrap_or(0);
    let values = updates.into_iter().map(|(w, _)| w).collect();
    let grid = GridFunction::from_values(spec.clone(), values).map_err(|e| {
        EvolveError::ConfigInvalid(format!("step produced invalid grid: {e}"))
    })?;
    Ok((grid, iters))
}

/// One backward step of size `cfg.dt`.
pub fn step_backward(
    model: &HamiltonianModel,
    f: &GridFunction,
    cfg: &EvolutionConfig,
) -> Result<GridFunction, EvolveError> {
    cfg.validate(model, f.spec())?;
    Ok(step_directed(model, f, cfg.dt, cfg, Direction::Backward)?.0)
}

/// One forward step of size `cfg.dt`.
pub fn step_forward(
    model: &HamiltonianModel,
    f: &GridFunction,
    cfg: &EvolutionConfig,
) -> Result<GridFunction, EvolveError> {
    cfg.validate(model, f.spec())?;
    Ok(step_directed(model, f, cfg.dt, cfg, Direction::Forward)?.0)
}

fn evolve_directed(
    model: &HamiltonianModel,
    f: &GridFunction,
    t: f64,
    cfg: &EvolutionConfig,
    direction: Direction,
) -> Result<EvolutionResult, EvolveError> {
    cfg.validate(model, f.spec())?;
    if t < 0.0 {
        return Err(EvolveError::ConfigInvalid(format!(
            "horizon must be nonnegative, got {t}"
        )));
    }
    let mut current = f.clone();
    let mut snapshots = Vec::new();
    let mut picard_iters_max = 0;
    if t > 0.0 {
        let n = crate::flow::uniform_step_count(t, cfg.dt);
        let mut time = 0.0;
        for k in 0..n {
            let time_next = t * (k + 1) as f64 / n as f64;
            let dt_eff = time_next - time;
            let (next, iters) =
                step_directed(model, &current, dt_eff, cfg, direction).map_err(|e| {
                    match e {
                        EvolveError::PicardDivergence { node, iters, .. } => {
                            EvolveError::PicardDivergence {
                                step: k,
                                node,
                                iters,
                            }
                        }
                        other => other,
                    }
                })?;
            current = next;
            time = time_next;
            picard_iters_max = picard_iters_max.max(iters);
            if cfg.snapshot_every > 0 && (k + 1) % cfg.snapshot_every == 0 && k + 1 < n {
                snapshots.push((time, current.clone()));
            }
        }
    }
    let monotone_flag = current
        .values()
        .iter()
        .zip(f.values())
        .map(|(a, b)| a - b)
        .fold(f64::INFINITY, f64::min)
        >= -MONOTONE_TOL;
    Ok(EvolutionResult {
        final_grid: current,
        snapshots,
        picard_iters_max,
        monotone_flag,
    })
}

/// Backward semigroup: evolve `f` for time `t` (the last step is shortened
/// to land exactly on `t`).
pub fn evolve_backward(
    model: &HamiltonianModel,
    f: &GridFunction,
    t: f64,
    cfg: &EvolutionConfig,
) -> Result<EvolutionResult, EvolveError> {
    evolve_directed(model, f, t, cfg, Direction::Backward)
}

/// Forward semigroup.
pub fn evolve_forward(
    model: &HamiltonianModel,
    f: &GridFunction,
    t: f64,
    cfg: &EvolutionConfig,
) -> Result<EvolutionResult, EvolveError> {
    evolve_directed(model, f, t, cfg, Direction::Forward)
}

/// Evolve through a sorted list of times, landing on each exactly; returns
/// the grid at every requested time.
pub fn evolve_with_checkpoints(
    model: &HamiltonianModel,
    f: &GridFunction,
    times: &[f64],
    cfg: &EvolutionConfig,
    direction: Direction,
) -> Result<Vec<GridFunction>, EvolveError> {
    let mut out = Vec::with_capacity(times.len());
    let mut current = f.clone();
    let mut now = 0.0;
    for &target in times {
        if target < now {
            return Err(EvolveError::ConfigInvalid(
                "checkpoint times must be nondecreasing".into(),
            ));
        }
        let result = evolve_directed(model, &current, target - now, cfg, direction)?;
        current = result.final_grid;
        now = target;
        out.push(current.clone());
    }
    Ok(out)
}

/// Report of the representation cross-check between the evolved grid and
/// the action-function formula.
#[derive(Debug, Clone)]
pub struct RepresentationReport {
    pub max_residual: f64,
    /// `(x, semigroup value, representation value)` per probe.
    pub rows: Vec<(f64, f64, f64)>,
}

/// Compare `evolve_backward` against `min over grid y of h_backward(y,
/// f(y); x, t)` at the probe nodes (one dimension).
///
/// The momentum sweeps from each grid node are shared across probes;
/// per-probe brackets are ranked by a linear endpoint estimate and only
/// candidates within `prune_margin` of the running best are refined by
/// bisection. The margin is two orders above the interpolation error of
/// the sweep, so pruning does not move the reported minimum.
pub fn compare_representation(
    model: &HamiltonianModel,
    f: &GridFunction,
    t: f64,
    probe_nodes: &[usize],
    cfg: &EvolutionConfig,
    action_cfg: &ActionConfig,
    prune_margin: f64,
) -> Result<RepresentationReport, EvolveError> {
    let spec = f.spec();
    if spec.dim() != 1 {
        return Err(EvolveError::Action(ActionError::UnsupportedDim(spec.dim())));
    }
    let evolved = evolve_backward(model, f, t, cfg)?.final_grid;

    // one sweep per grid node y, shared by all probes
    let n = spec.node_count();
    let sweeps: Result<Vec<action::CharacteristicSweep>, ActionError> = (0..n)
        .into_par_iter()
        .map(|j| {
            let y = spec.node_position([j, 0])[0];
            action::characteristic_sweep(
                model,
                spec,
                y,
                f.values()[j],
                t,
                Direction::Backward,
                action_cfg,
            )
        })
        .collect();
    let sweeps = sweeps?;

    let period = spec.period(0);
    let rows: Vec<(f64, f64, f64)> = probe_nodes
        .par_iter()
        .map(|&probe| {
            let x = spec.node_position([probe, 0])[0];
            // gather candidate brackets across all anchors and windings
            struct Candidate<'a> {
                sweep: &'a action::CharacteristicSweep,
                estimate: f64,
            }
            let mut candidates: Vec<Candidate> = Vec::new();
            for sweep in &sweeps {
                let base = crate::geometry::wrap_displacement_1d(
                    crate::geometry::wrap_coordinate(sweep.x0, period),
                    x,
                    period,
                );
                for k in -action_cfg.max_winding..=action_cfg.max_winding {
                    let target = base + k as f64 * period;
                    for pair in sweep.points.windows(2) {
                        let (a, b) = (&pair[0], &pair[1]);
                        if !a.ok || !b.ok {
                            continue;
                        }
                        let fa = a.displacement - target;
                        let fb = b.displacement - target;
                        if fa == 0.0 {
                            candidates.push(Candidate {
                                sweep,
                                estimate: a.value,
                            });
                        } else if fa * fb < 0.0 {
                            let s = fa / (fa - fb);
                            candidates.push(Candidate {
                                sweep,
                                estimate: a.value + s * (b.value - a.value),
                            });
                        }
                    }
                }
            }
            candidates.sort_by(|a, b| a.estimate.total_cmp(&b.estimate));
            let mut best = f64::INFINITY;
            for cand in &candidates {
                if cand.estimate > best + prune_margin {
                    break;
                }
                let hits = action::refine_hits(model, spec, cand.sweep, x, action_cfg);
                for hit in hits {
                    best = best.min(hit.value);
                }
            }
            let semigroup_value = evolved.values()[probe];
            (x, semigroup_value, best)
        })
        .collect();

    let max_residual = rows
        .iter()
        .map(|(_, s, r)| (s - r).abs())
        .fold(0.0, f64::max);
    Ok(RepresentationReport { max_residual, rows })
}
