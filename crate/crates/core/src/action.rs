//! Implicit action functions by characteristic shooting (one space
//! dimension).
//!
//! The backward action `h_backward(x0, u0; x, t)` is the least final value
//! `u(t)` over characteristics that start at `(x0, u0)` and reach `x` at
//! time `t`; the forward action `h_forward(x0, u0; x, t)` is the greatest
//! initial value `u(0)` over characteristics that start at `x` and arrive
//! at `(x0, u0)` at time `t`. Both are found by sweeping the free momentum
//! over a uniform grid, bracketing the endpoint condition across windings
//! of the circle, and refining each bracket by bisection.

use rayon::prelude::*;
use thiserror::Error;

use crate::flow::{self, ContactState, FlowError};
use crate::geometry::{wrap_coordinate, wrap_displacement_1d, TorusSpec};
use crate::hamiltonian::HamiltonianModel;

#[derive(Debug, Error)]
pub enum ActionError {
    #[error(
        "no characteristic found: no bracket for x = {target} within the scan box \
         (sweep of {points} endpoints available for inspection)"
    )]
    NoCharacteristicFound {
        target: f64,
        points: usize,
        sweep: Box<CharacteristicSweep>,
    },
    #[error("action functions are defined for t > 0, got t = {0}")]
    NonPositiveTime(f64),
    #[error("shooting is implemented for one-dimensional tori, got dim = {0}")]
    UnsupportedDim(usize),
    #[error("implicit small-t step needs t*lambda < 1, got {0}")]
    SmallTimeContraction(f64),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Legendre(#[from] crate::hamiltonian::LegendreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Backward,
    Forward,
}

/// An action-function query. `x0, u0` anchor the function; `x, t` is the
/// evaluation point.
#[derive(Debug, Clone, Copy)]
pub struct ActionQuery {
    pub x0: f64,
    pub u0: f64,
    pub x: f64,
    pub t: f64,
    pub direction: Direction,
}

/// Shooting parameters.
#[derive(Debug, Clone, Copy)]
pub struct ActionConfig {
    /// Momentum scan box half-width.
    pub p_shoot: f64,
    /// Uniform scan points across the box.
    pub scan_points: usize,
    /// Windings searched: targets `wrap(x - x0) + k*period`, `|k| <= max_winding`.
    pub max_winding: i64,
    /// Endpoint hit tolerance in position.
    pub hit_tol: f64,
    /// Integrator step.
    pub step_h: f64,
    /// Queries with `t < t_min` route through one implicit Lax-Oleinik step
    /// instead of shooting (characteristics stiffen as t -> 0+).
    pub t_min: f64,
    /// Blow-up ceiling passed to the integrator.
    pub blowup_ceiling: f64,
}

impl Default for ActionConfig {
    fn default() -> Self {
        Self {
            p_shoot: 20.0,
            scan_points: 512,
            max_winding: 3,
            hit_tol: 1e-10,
            step_h: 1e-3,
            t_min: 1e-2,
            blowup_ceiling: 1e8,
        }
    }
}

/// One endpoint of a momentum sweep. `displacement` is the unwrapped
/// position change over the shot; `value` is `u(t)` for backward sweeps and
/// `u(0)` for forward ones. `ok` is false when the shot blew up.
#[derive(Debug, Clone, Copy)]
pub struct SweepPoint {
    pub p0: f64,
    pub displacement: f64,
    pub value: f64,
    pub end_momentum: f64,
    pub ok: bool,
}

/// The endpoint map of a full momentum scan from one anchor.
#[derive(Debug, Clone)]
pub struct CharacteristicSweep {
    pub x0: f64,
    pub u0: f64,
    pub t: f64,
    pub direction: Direction,
    pub points: Vec<SweepPoint>,
}

/// A refined characteristic hitting the target position.
#[derive(Debug, Clone, Copy)]
pub struct Hit {
    /// Scan momentum of the shot (initial momentum for backward shots,
    /// arrival momentum for forward ones).
    pub p0: f64,
    /// Initial momentum of the characteristic in forward time.
    pub initial_momentum: f64,
    pub winding: i64,
    pub value: f64,
}

/// Result of an action-function evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ActionResult {
    pub value: f64,
    /// Initial momentum (forward time) of the optimal characteristic.
    pub attaining_p0: f64,
    pub winding: i64,
    /// Number of refined characteristics inspected.
    pub candidates_scanned: usize,
}

fn field_sign(direction: Direction) -> f64 {
    match direction {
        // backward action: shoot the true field from (x0, p0, u0)
        Direction::Backward => 1.0,
        // forward action: shoot the negated field from the arrival point
        Direction::Forward => -1.0,
    }
}

fn shoot(
    model: &HamiltonianModel,
    spec: &TorusSpec,
    x0: f64,
    u0: f64,
    p0: f64,
    t: f64,
    direction: Direction,
    cfg: &ActionConfig,
) -> Result<SweepPoint, FlowError> {
    let steps = flow::uniform_step_count(t, cfg.step_h);
    let s0 = ContactState::new_1d(x0, p0, u0);
    let (x_end, p_end, u_end) = flow::flow_endpoint(
        model,
        spec,
        &s0,
        t,
        steps,
        field_sign(direction),
        cfg.blowup_ceiling,
    )?;
    Ok(SweepPoint {
        p0,
        displacement: x_end[0] - wrap_coordinate(x0, spec.period(0)),
        value: u_end,
        end_momentum: p_end[0],
        ok: true,
    })
}

/// Sweep the scan box, integrating one characteristic per grid momentum
/// (parallel; output ordered by the scan grid).
pub fn characteristic_sweep(
    model: &HamiltonianModel,
    spec: &TorusSpec,
    x0: f64,
    u0: f64,
    t: f64,
    direction: Direction,
    cfg: &ActionConfig,
) -> Result<CharacteristicSweep, ActionError> {
    if model.dim() != 1 || spec.dim() != 1 {
        return Err(ActionError::UnsupportedDim(model.dim().max(spec.dim())));
    }
    if t <= 0.0 {
        return Err(ActionError::NonPositiveTime(t));
    }
    let n = cfg.scan_points.max(2);
    let points: Vec<SweepPoint> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p0 = -cfg.p_shoot + 2.0 * cfg.p_shoot * i as f64 / (n - 1) as f64;
            shoot(model, spec, x0, u0, p0, t, direction, cfg).unwrap_or(SweepPoint {
                p0,
                displacement: f64::NAN,
                value: f64::NAN,
                end_momentum: f64::NAN,
                ok: false,
            })
        })
        .collect();
    Ok(CharacteristicSweep {
        x0,
        u0,
        t,
        direction,
        points,
    })
}

/// Bracket and bisect the sweep against a target position. Returns every
/// refined hit, ordered by scan momentum.
pub fn refine_hits(
    model: &HamiltonianModel,
    spec: &TorusSpec,
    sweep: &CharacteristicSweep,
    target_x: f64,
    cfg: &ActionConfig,
) -> Vec<Hit> {
    let period = spec.period(0);
    let base = wrap_displacement_1d(
        wrap_coordinate(sweep.x0, period),
        wrap_coordinate(target_x, period),
        period,
    );
    let mut hits: Vec<Hit> = Vec::new();
    for k in -cfg.max_winding..=cfg.max_winding {
        let target = base + k as f64 * period;
        for pair in sweep.points.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if !a.ok || !b.ok {
                continue;
            }
            let fa = a.displacement - target;
            let fb = b.displacement - target;
            if fa == 0.0 {
                hits.push(Hit {
                    p0: a.p0,
                    initial_momentum: initial_momentum(sweep.direction, a),
                    winding: k,
                    value: a.value,
                });
                continue;
            }
            if fa * fb < 0.0 {
                if let Some(hit) =
                    refine_bracket(model, spec, sweep, target, k, a.p0, fa, b.p0, fb, cfg)
                {
                    hits.push(hit);
                }
            }
        }
        // trailing endpoint exact hit
        if let Some(last) = sweep.points.last() {
            if last.ok && last.displacement - target == 0.0 {
                hits.push(Hit {
                    p0: last.p0,
                    initial_momentum: initial_momentum(sweep.direction, last),
                    winding: k,
                    value: last.value,
                });
            }
        }
    }
    hits.sort_by(|a, b| a.p0.total_cmp(&b.p0));
    hits
}

fn initial_momentum(direction: Direction, point: &SweepPoint) -> f64 {
    match direction {
        Direction::Backward => point.p0,
        // the forward sweep runs in reversed time, so the characteristic's
        // forward-time initial momentum is the endpoint momentum
        Direction::Forward => point.end_momentum,
    }
}

/// Illinois-damped regula falsi: keeps the bracket like bisection but
/// converges superlinearly, so far fewer re-integrations per hit.
#[allow(clippy::too_many_arguments)]
fn refine_bracket(
    model: &HamiltonianModel,
    spec: &TorusSpec,
    sweep: &CharacteristicSweep,
    target: f64,
    winding: i64,
    mut lo: f64,
    mut flo: f64,
    mut hi: f64,
    mut fhi: f64,
    cfg: &ActionConfig,
) -> Option<Hit> {
    debug_assert!(flo * fhi < 0.0);
    let mut best: Option<SweepPoint> = None;
    for _ in 0..80 {
        let mut cand = hi - fhi * (hi - lo) / (fhi - flo);
        if !cand.is_finite() || cand <= lo.min(hi) || cand >= lo.max(hi) {
            cand = 0.5 * (lo + hi);
        }
        if cand == lo || cand == hi {
            break;
        }
        let point = shoot(
            model,
            spec,
            sweep.x0,
            sweep.u0,
            cand,
            sweep.t,
            sweep.direction,
            cfg,
        )
        .ok()?;
        let fc = point.displacement - target;
        best = Some(point);
        if fc.abs() <= cfg.hit_tol {
            break;
        }
        if fc * fhi < 0.0 {
            lo = hi;
            flo = fhi;
        } else {
            flo *= 0.5;
        }
        hi = cand;
        fhi = fc;
    }
    let point = best?;
    // A bracket can also close on a discontinuity (e.g. the edge of a
    // blow-up region); only genuine roots count as hits.
    if (point.displacement - target).abs() > cfg.hit_tol.max(1e-7) {
        return None;
    }
    Some(Hit {
        p0: point.p0,
        initial_momentum: initial_momentum(sweep.direction, &point),
        winding,
        value: point.value,
    })
}

fn select(direction: Direction, hits: &[Hit]) -> Option<(f64, &Hit)> {
    // hits are sorted by scan momentum; keep the earliest on ties so the
    // lowest momentum wins deterministically
    let tie = |best: f64| 1e-12 * (1.0 + best.abs());
    let mut chosen: Option<&Hit> = None;
    for hit in hits {
        match chosen {
            None => chosen = Some(hit),
            Some(cur) => {
                let improves = match direction {
                    Direction::Backward => hit.value < cur.value - tie(cur.value),
                    Direction::Forward => hit.value > cur.value + tie(cur.value),
                };
                if improves {
                    chosen = Some(hit);
                }
            }
        }
    }
    chosen.map(|h| (h.value, h))
}

/// Evaluate an action query by shooting (or by one implicit Lax-Oleinik
/// step for `t < t_min`).
pub fn solve(
    model: &HamiltonianModel,
    spec: &TorusSpec,
    q: &ActionQuery,
    cfg: &ActionConfig,
) -> Result<ActionResult, ActionError> {
    if q.t <= 0.0 {
        return Err(ActionError::NonPositiveTime(q.t));
    }
    if q.t < cfg.t_min {
        return small_time_step(model, spec, q, cfg);
    }
    let sweep = characteristic_sweep(model, spec, q.x0, q.u0, q.t, q.direction, cfg)?;
    solve_from_sweep(model, spec, sweep, q.x, cfg)
}

/// Refine an existing sweep against a target and select the optimum.
pub fn solve_from_sweep(
    model: &HamiltonianModel,
    spec: &TorusSpec,
    sweep: CharacteristicSweep,
    target_x: f64,
    cfg: &ActionConfig,
) -> Result<ActionResult, ActionError> {
    let hits = refine_hits(model, spec, &sweep, target_x, cfg);
    match select(sweep.direction, &hits) {
        Some((value, hit)) => Ok(ActionResult {
            value,
            attaining_p0: hit.initial_momentum,
            winding: hit.winding,
            candidates_scanned: hits.len(),
        }),
        None => Err(ActionError::NoCharacteristicFound {
            target: target_x,
            points: sweep.points.len(),
            sweep: Box::new(sweep),
        }),
    }
}

/// Backward implicit action: least `u(t)` over characteristics from
/// `(x0, u0)` reaching `x` at time `t`.
pub fn h_backward(
    model: &HamiltonianModel,
    spec: &TorusSpec,
    q: &ActionQuery,
    cfg: &ActionConfig,
) -> Result<ActionResult, ActionError> {
    solve(
        model,
        spec,
        &ActionQuery {
            direction: Direction::Backward,
            ..*q
        },
        cfg,
    )
}

/// Forward implicit action: greatest `u(0)` over characteristics from `x`
/// arriving at `(x0, u0)` at time `t`.
pub fn h_forward(
    model: &HamiltonianModel,
    spec: &TorusSpec,
    q: &ActionQuery,
    cfg: &ActionConfig,
) -> Result<ActionResult, ActionError> {
    solve(
        model,
        spec,
        &ActionQuery {
            direction: Direction::Forward,
            ..*q
        },
        cfg,
    )
}

/// One implicit Lax-Oleinik step for very small horizons: the straight
/// characteristic from `x0` to `x` (per winding) with the value argument
/// placed implicitly, `w = u0 +/- t L(x, d/t, w)`.
fn small_time_step(
    model: &HamiltonianModel,
    spec: &TorusSpec,
    q: &ActionQuery,
    cfg: &ActionConfig,
) -> Result<ActionResult, ActionError> {
    let lam = model.lambda_bound();
    if q.t * lam >= 1.0 {
        return Err(ActionError::SmallTimeContraction(q.t * lam));
    }
    let period = spec.period(0);
    let base = wrap_displacement_1d(
        wrap_coordinate(q.x0, period),
        wrap_coordinate(q.x, period),
        period,
    );
    let mut best: Option<(f64, f64, i64)> = None; // (value, momentum, winding)
    for k in -cfg.max_winding..=cfg.max_winding {
        let d = base + k as f64 * period;
        let v = [d / q.t, 0.0];
        let x_eval = [wrap_coordinate(q.x, period), 0.0];
        let mut w = q.u0;
        let mut lag = model.legendre(&x_eval, &v, w)?;
        for _ in 0..200 {
            let next = match q.direction {
                Direction::Backward => q.u0 + q.t * lag.value,
                Direction::Forward => q.u0 - q.t * lag.value,
            };
            if (next - w).abs() <= 1e-13 * (1.0 + w.abs()) {
                w = next;
                break;
            }
            w = next;
            lag = model.legendre(&x_eval, &v, w)?;
        }
        let better = match (q.direction, best) {
            (_, None) => true,
            (Direction::Backward, Some((b, _, _))) => w < b,
            (Direction::Forward, Some((b, _, _))) => w > b,
        };
        if better {
            best = Some((w, lag.argmax_p[0], k));
        }
    }
    let (value, momentum, winding) = best.expect("winding loop is nonempty");
    Ok(ActionResult {
        value,
        attaining_p0: momentum,
        winding,
        candidates_scanned: (2 * cfg.max_winding + 1) as usize,
    })
}

/// Round-trip residual of the equivalence between the two action functions:
/// with `u = h_backward(x0, u0; x, t)`, returns
/// `|h_forward(x, u; x0, t) - u0|`.
pub fn check_equivalence(
    model: &HamiltonianModel,
    spec: &TorusSpec,
    x0: f64,
    u0: f64,
    x: f64,
    t: f64,
    cfg: &ActionConfig,
) -> Result<f64, ActionError> {
    let u = h_backward(
        model,
        spec,
        &ActionQuery {
            x0,
            u0,
            x,
            t,
            direction: Direction::Backward,
        },
        cfg,
    )?
    .value;
    let back = h_forward(
        model,
        spec,
        &ActionQuery {
            x0: x,
            u0: u,
            x: x0,
            t,
            direction: Direction::Forward,
        },
        cfg,
    )?
    .value;
    Ok((back - u0).abs())
}

/// Largest finite-difference slope of the backward action over a compact
/// query box, reported (not asserted against any constant).
pub struct LipschitzScan {
    pub max_slope_x: f64,
    pub max_slope_t: f64,
    pub queries: usize,
}

pub fn lipschitz_scan(
    model: &HamiltonianModel,
    spec: &TorusSpec,
    x0: f64,
    u0: f64,
    xs: &[f64],
    ts: &[f64],
    cfg: &ActionConfig,
) -> Result<LipschitzScan, ActionError> {
    let mut values = vec![vec![0.0; ts.len()]; xs.len()];
    for (i, &x) in xs.iter().enumerate() {
        for (j, &t) in ts.iter().enumerate() {
            values[i][j] = h_backward(
                model,
                spec,
                &ActionQuery {
                    x0,
                    u0,
                    x,
                    t,
                    direction: Direction::Backward,
                },
                cfg,
            )?
            .value;
        }
    }
    let mut max_slope_x: f64 = 0.0;
    let mut max_slope_t: f64 = 0.0;
    for i in 0..xs.len() {
        for j in 0..ts.len() {
            if i + 1 < xs.len() {
                max_slope_x = max_slope_x
                    .max(((values[i + 1][j] - values[i][j]) / (xs[i + 1] - xs[i])).abs());
            }
            if j + 1 < ts.len() {
                max_slope_t = max_slope_t
                    .max(((values[i][j + 1] - values[i][j]) / (ts[j + 1] - ts[j])).abs());
            }
        }
    }
    Ok(LipschitzScan {
        max_slope_x,
        max_slope_t,
        queries: xs.len() * ts.len(),
    })
}

/// CSV of a sweep: `p0, displacement, x_end, value` rows.
pub fn write_sweep_csv(
    sweep: &CharacteristicSweep,
    spec: &TorusSpec,
    w: &mut impl std::io::Write,
) -> std::io::Result<()> {
    writeln!(w, "p0,displacement,x_end,value")?;
    let period = spec.period(0);
    let origin = wrap_coordinate(sweep.x0, period);
    for p in &sweep.points {
        if p.ok {
            writeln!(
                w,
                "{},{},{},{}",
                p.p0,
                p.displacement,
                wrap_coordinate(origin + p.displacement, period),
                p.value
            )?;
        } else {
            writeln!(w, "{},blowup,blowup,blowup", p.p0)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn setup() -> (HamiltonianModel, TorusSpec, ActionConfig) {
        (
            HamiltonianModel::dissipative_free_particle(),
            TorusSpec::line(256).unwrap(),
            ActionConfig::default(),
        )
    }

    /// Closed-form backward action for H = u + p^2/2 on the unit circle.
    fn oracle_backward(x0: f64, u0: f64, x: f64, t: f64) -> f64 {
        let e = (-t).exp();
        let base = wrap_displacement_1d(x0, x, 1.0);
        (-5..=5)
            .map(|k| {
                let d = base + k as f64;
                u0 * e + 0.5 * d * d * e / (1.0 - e)
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn oracle_forward(x0: f64, u0: f64, x: f64, t: f64) -> f64 {
        let e = (-t).exp();
        let base = wrap_displacement_1d(x0, x, 1.0);
        (-5..=5)
            .map(|k| {
                let d = base + k as f64;
                u0 * t.exp() - 0.5 * d * d / (1.0 - e)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn backward_action_half_turn() {
        let (model, spec, cfg) = setup();
        let q = ActionQuery {
            x0: 0.0,
            u0: 0.0,
            x: 0.5,
            t: 1.0,
            direction: Direction::Backward,
        };
        let r = h_backward(&model, &spec, &q, &cfg).unwrap();
        assert_abs_diff_eq!(r.value, 0.07274708835866581, epsilon = 1e-6);
        // two symmetric optima; the lowest momentum is reported
        assert_abs_diff_eq!(r.attaining_p0, -0.7909883534, epsilon = 1e-6);
        assert!(r.candidates_scanned >= 2);
    }

    #[test]
    fn backward_action_same_point_decays_initial_value() {
        let (model, spec, cfg) = setup();
        for (u0, t) in [(0.0, 1.0), (0.3, 0.7), (-1.0, 2.0)] {
            let q = ActionQuery {
                x0: 0.25,
                u0,
                x: 0.25,
                t,
                direction: Direction::Backward,
            };
            let r = h_backward(&model, &spec, &q, &cfg).unwrap();
            assert_abs_diff_eq!(r.value, u0 * (-t).exp(), epsilon = 1e-7);
            assert_eq!(r.winding, 0);
        }
    }

    #[test]
    fn backward_action_monotone_in_u0() {
        let (model, spec, cfg) = setup();
        let at = |u0: f64| {
            h_backward(
                &model,
                &spec,
                &ActionQuery {
                    x0: 0.0,
                    u0,
                    x: 0.5,
                    t: 1.0,
                    direction: Direction::Backward,
                },
                &cfg,
            )
            .unwrap()
            .value
        };
        let low = at(0.0);
        let high = at(1.0);
        assert_abs_diff_eq!(high, 0.440626, epsilon = 1e-5);
        assert!(high > low);
        assert!(at(0.1) > low);
    }

    #[test]
    fn forward_action_half_turn() {
        let (model, spec, cfg) = setup();
        let q = ActionQuery {
            x0: 0.5,
            u0: 0.0,
            x: 0.0,
            t: 1.0,
            direction: Direction::Forward,
        };
        let r = h_forward(&model, &spec, &q, &cfg).unwrap();
        assert_abs_diff_eq!(r.value, -0.19774708835866583, epsilon = 1e-6);
    }

    #[test]
    fn forward_action_same_point_amplifies() {
        let (model, spec, cfg) = setup();
        let q = ActionQuery {
            x0: 0.7,
            u0: -0.4,
            x: 0.7,
            t: 1.3,
            direction: Direction::Forward,
        };
        let r = h_forward(&model, &spec, &q, &cfg).unwrap();
        assert_abs_diff_eq!(r.value, -0.4 * (1.3f64).exp(), epsilon = 1e-7);
    }

    #[test]
    fn forward_action_monotone_in_u0() {
        let (model, spec, cfg) = setup();
        let at = |u0: f64| {
            h_forward(
                &model,
                &spec,
                &ActionQuery {
                    x0: 0.5,
                    u0,
                    x: 0.0,
                    t: 1.0,
                    direction: Direction::Forward,
                },
                &cfg,
            )
            .unwrap()
            .value
        };
        assert!(at(0.1) > at(0.0));
        assert!(at(1.0) > at(0.1));
    }

    #[test]
    fn hits_are_consistent_with_reported_minimum() {
        let (model, spec, cfg) = setup();
        let sweep =
            characteristic_sweep(&model, &spec, 0.1, 0.2, 0.8, Direction::Backward, &cfg)
                .unwrap();
        let hits = refine_hits(&model, &spec, &sweep, 0.6, &cfg);
        assert!(!hits.is_empty());
        let value = select(Direction::Backward, &hits).unwrap().0;
        for hit in &hits {
            assert!(hit.value >= value - 1e-9);
        }
        // every hit value matches the closed-form branch for its winding
        let e = (-0.8f64).exp();
        for hit in &hits {
            let d = wrap_displacement_1d(0.1, 0.6, 1.0) + hit.winding as f64;
            let expect = 0.2 * e + 0.5 * d * d * e / (1.0 - e);
            assert_abs_diff_eq!(hit.value, expect, epsilon = 1e-6);
        }
    }

    #[test]
    fn reintegrating_the_optimum_reproduces_the_query() {
        let (model, spec, cfg) = setup();
        let q = ActionQuery {
            x0: 0.0,
            u0: 0.0,
            x: 0.5,
            t: 1.0,
            direction: Direction::Backward,
        };
        let r = h_backward(&model, &spec, &q, &cfg).unwrap();
        let steps = flow::uniform_step_count(q.t, cfg.step_h);
        let (x_end, _, u_end) = flow::flow_endpoint(
            &model,
            &spec,
            &ContactState::new_1d(q.x0, r.attaining_p0, q.u0),
            q.t,
            steps,
            1.0,
            cfg.blowup_ceiling,
        )
        .unwrap();
        let miss = wrap_displacement_1d(wrap_coordinate(x_end[0], 1.0), q.x, 1.0);
        assert!(miss.abs() <= 1e-9, "endpoint miss {miss}");
        assert_abs_diff_eq!(u_end, r.value, epsilon = 1e-9);
    }

    #[test]
    fn oracle_agreement_on_random_queries() {
        let (model, spec, cfg) = setup();
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..12 {
            let (x0, x) = (next(), next());
            let u0 = 2.0 * next() - 1.0;
            let t = 0.4 + 1.2 * next();
            let b = h_backward(
                &model,
                &spec,
                &ActionQuery {
                    x0,
                    u0,
                    x,
                    t,
                    direction: Direction::Backward,
                },
                &cfg,
            )
            .unwrap();
            assert_abs_diff_eq!(b.value, oracle_backward(x0, u0, x, t), epsilon = 1e-6);
            let f = h_forward(
                &model,
                &spec,
                &ActionQuery {
                    x0,
                    u0,
                    x,
                    t,
                    direction: Direction::Forward,
                },
                &cfg,
            )
            .unwrap();
            assert_abs_diff_eq!(f.value, oracle_forward(x0, u0, x, t), epsilon = 1e-6);
        }
    }

    #[test]
    fn equivalence_round_trip() {
        let (model, spec, cfg) = setup();
        let r = check_equivalence(&model, &spec, 0.0, 0.0, 0.5, 1.0, &cfg).unwrap();
        assert!(r <= 1e-6, "round-trip residual {r}");
        let r = check_equivalence(&model, &spec, 0.3, -0.7, 0.3, 0.5, &cfg).unwrap();
        assert!(r <= 1e-6, "same-point residual {r}");
    }

    #[test]
    fn no_characteristic_in_tiny_scan_box() {
        let (model, spec, _) = setup();
        let cfg = ActionConfig {
            p_shoot: 0.01,
            scan_points: 16,
            max_winding: 0,
            ..ActionConfig::default()
        };
        let q = ActionQuery {
            x0: 0.0,
            u0: 0.0,
            x: 0.4,
            t: 0.5,
            direction: Direction::Backward,
        };
        match h_backward(&model, &spec, &q, &cfg) {
            Err(ActionError::NoCharacteristicFound { sweep, .. }) => {
                assert_eq!(sweep.points.len(), 16);
            }
            other => panic!("expected no characteristic, got {other:?}"),
        }
    }

    #[test]
    fn small_time_routes_through_implicit_step() {
        let (model, spec, cfg) = setup();
        let q = ActionQuery {
            x0: 0.0,
            u0: 0.0,
            x: 0.01,
            t: 0.005,
            direction: Direction::Backward,
        };
        let r = h_backward(&model, &spec, &q, &cfg).unwrap();
        let oracle = oracle_backward(0.0, 0.0, 0.01, 0.005);
        assert_abs_diff_eq!(r.value, oracle, epsilon = 2e-4);
    }

    #[test]
    fn lipschitz_scan_reports_finite_bounds() {
        let (model, spec, cfg) = setup();
        let xs: Vec<f64> = (0..9).map(|i| 0.1 * i as f64).collect();
        let ts = [0.5, 0.75, 1.0];
        let scan = lipschitz_scan(&model, &spec, 0.0, 0.0, &xs, &ts, &cfg).unwrap();
        assert!(scan.max_slope_x.is_finite());
        assert!(scan.max_slope_t.is_finite());
        assert_eq!(scan.queries, 27);
    }
}
