//! Integration of the contact characteristic system
//!
//! ```text
//! x' =  dH/dp
//! p' = -dH/dx - (dH/du) p
//! u' =  p . dH/dp - H
//! ```
//!
//! with energy monitoring against the identity `dH/dt = -(dH/du) H` and
//! blow-up detection. Classic fixed-step RK4 is the default; an adaptive
//! mode halves the step until the energy-identity residual is under
//! tolerance, since that identity gives a natural per-step error proxy.

use std::io::Write;

use thiserror::Error;

use crate::geometry::{wrap_coordinate, TorusSpec, MAX_DIM};
use crate::hamiltonian::{EvalError, HamiltonianModel};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("trajectory blow-up detected at t = {t_detect}: |p| or |u| exceeded {ceiling:.1e}")]
    BlowUp { t_detect: f64, ceiling: f64 },
    #[error("step limit {max_steps} reached before t = {target}")]
    StepLimit { max_steps: usize, target: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("trajectory needs at least {needed} samples, has {got}")]
    TooShort { needed: usize, got: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A point of the extended phase space: position on the torus, momentum,
/// and the value coordinate. `x` is stored wrapped to `[0, period)` per
/// axis; winding counts live on the trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactState {
    pub x: [f64; MAX_DIM],
    pub p: [f64; MAX_DIM],
    pub u: f64,
}

impl ContactState {
    pub fn new_1d(x: f64, p: f64, u: f64) -> Self {
        Self {
            x: [x, 0.0],
            p: [p, 0.0],
            u,
        }
    }
}

/// Step-size policy for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    /// Base (and maximum) step size.
    pub h0: f64,
    pub mode: StepMode,
    /// Blow-up ceiling on |p| and |u|.
    pub blowup_ceiling: f64,
    /// Hard cap on accepted steps.
    pub max_steps: usize,
}

#[derive(Debug, Clone, Copy)]
pub enum StepMode {
    Fixed,
    /// Halve the step until the per-step energy-identity residual is below
    /// `residual_tol`; grow it again (up to `h0`) when comfortably below.
    Adaptive { residual_tol: f64, h_min: f64 },
}

impl StepControl {
    pub fn fixed(h: f64) -> Self {
        Self {
            h0: h,
            mode: StepMode::Fixed,
            blowup_ceiling: 1e8,
            max_steps: 50_000_000,
        }
    }

    pub fn adaptive(h0: f64, residual_tol: f64) -> Self {
        Self {
            h0,
            mode: StepMode::Adaptive {
                residual_tol,
                h_min: h0 * 1e-6,
            },
            blowup_ceiling: 1e8,
            max_steps: 50_000_000,
        }
    }
}

/// Time-stamped integral curve with winding bookkeeping and recomputed
/// energies.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    period: [f64; MAX_DIM],
    times: Vec<f64>,
    states: Vec<ContactState>,
    windings: Vec<[i64; MAX_DIM]>,
    energies: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[ContactState] {
        &self.states
    }

    pub fn windings(&self) -> &[[i64; MAX_DIM]] {
        &self.windings
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn final_state(&self) -> ContactState {
        *self.states.last().expect("trajectory has at least one state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one state")
    }

    /// Unwrapped coordinate at sample `k`: wrapped position plus
    /// `period * winding`, exactly.
    pub fn unwrapped_x(&self, k: usize) -> [f64; MAX_DIM] {
        let mut out = [0.0; MAX_DIM];
        for a in 0..self.dim {
            out[a] = self.states[k].x[a] + self.period[a] * self.windings[k][a] as f64;
        }
        out
    }

    /// Trajectory CSV: `t, x1..xd, p1..pd, u, H, winding1..windingd`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<(), FlowError> {
        let d = self.dim;
        let mut header = String::from("t");
        for a in 0..d {
            header.push_str(&format!(",x{}", a + 1));
        }
        for a in 0..d {
            header.push_str(&format!(",p{}", a + 1));
        }
        header.push_str(",u,H");
        for a in 0..d {
            header.push_str(&format!(",winding{}", a + 1));
        }
        writeln!(w, "{header}")?;
        for k in 0..self.len() {
            let s = &self.states[k];
            let mut row = format!("{}", self.times[k]);
            for a in 0..d {
                row.push_str(&format!(",{}", s.x[a]));
            }
            for a in 0..d {
                row.push_str(&format!(",{}", s.p[a]));
            }
            row.push_str(&format!(",{},{}", s.u, self.energies[k]));
            for a in 0..d {
                row.push_str(&format!(",{}", self.windings[k][a]));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// Right-hand side of the characteristic system at a state.
pub fn vector_field(
    model: &HamiltonianModel,
    s: &ContactState,
) -> Result<([f64; MAX_DIM], [f64; MAX_DIM], f64), EvalError> {
    let jet = model.eval_jet(&s.x, &s.p, s.u)?;
    let mut dp = [0.0; MAX_DIM];
    let mut pdothp = 0.0;
    for a in 0..model.dim() {
        dp[a] = -jet.d_x[a] - jet.d_u * s.p[a];
        pdothp += s.p[a] * jet.d_p[a];
    }
    Ok((jet.d_p, dp, pdothp - jet.value))
}

/// Raw phase-space point used internally: unwrapped x, p, u.
#[derive(Clone, Copy)]
struct RawState {
    x: [f64; MAX_DIM],
    p: [f64; MAX_DIM],
    u: f64,
}

impl RawState {
    fn axpy(&self, c: f64, d: &Deriv, dim: usize) -> RawState {
        let mut out = *self;
        for a in 0..dim {
            out.x[a] += c * d.dx[a];
            out.p[a] += c * d.dp[a];
        }
        out.u += c * d.du;
        out
    }
}

#[derive(Clone, Copy)]
struct Deriv {
    dx: [f64; MAX_DIM],
    dp: [f64; MAX_DIM],
    du: f64,
}

fn eval_field(
    model: &HamiltonianModel,
    raw: &RawState,
    spec: &TorusSpec,
    sign: f64,
) -> Result<Deriv, EvalError> {
    // Evaluate at the wrapped position; momentum and value are global.
    let wrapped = spec.wrap_point(&raw.x);
    let s = ContactState {
        x: wrapped,
        p: raw.p,
        u: raw.u,
    };
    let (dx, dp, du) = vector_field(model, &s)?;
    Ok(Deriv {
        dx: [sign * dx[0], sign * dx[1]],
        dp: [sign * dp[0], sign * dp[1]],
        du: sign * du,
    })
}

fn rk4_step(
    model: &HamiltonianModel,
    raw: &RawState,
    h: f64,
    spec: &TorusSpec,
    sign: f64,
) -> Result<RawState, EvalError> {
    let dim = model.dim();
    let k1 = eval_field(model, raw, spec, sign)?;
    let k2 = eval_field(model, &raw.axpy(0.5 * h, &k1, dim), spec, sign)?;
    let k3 = eval_field(model, &raw.axpy(0.5 * h, &k2, dim), spec, sign)?;
    let k4 = eval_field(model, &raw.axpy(h, &k3, dim), spec, sign)?;
    let mut out = *raw;
    for a in 0..dim {
        out.x[a] += h / 6.0 * (k1.dx[a] + 2.0 * k2.dx[a] + 2.0 * k3.dx[a] + k4.dx[a]);
        out.p[a] += h / 6.0 * (k1.dp[a] + 2.0 * k2.dp[a] + 2.0 * k3.dp[a] + k4.dp[a]);
    }
    out.u += h / 6.0 * (k1.du + 2.0 * k2.du + 2.0 * k3.du + k4.du);
    Ok(out)
}

/// Integrate forward for time `t >= 0`, recording every accepted step.
pub fn integrate(
    model: &HamiltonianModel,
    spec: &TorusSpec,
    s0: &ContactState,
    t: f64,
    ctl: &StepControl,
) -> Result<Trajectory, FlowError> {
    integrate_directed(model, spec, s0, t, ctl, 1.0)
}

/// Integrate the negated field (time reversal) for time `t >= 0`.
pub fn integrate_backward(
    model: &HamiltonianModel,
    spec: &TorusSpec,
    s0: &ContactState,
    t: f64,
    ctl: &StepControl,
) -> Result<Trajectory, FlowError> {
    integrate_directed(model, spec, s0, t, ctl, -1.0)
}

fn integrate_directed(
    model: &HamiltonianModel,
    spec: &TorusSpec,
    s0: &ContactState,
    t: f64,
    ctl: &StepControl,
    sign: f64,
) -> Result<Trajectory, FlowError> {
    let dim = model.dim();
    let mut period = [1.0; MAX_DIM];
    for a in 0..dim {
        period[a] = spec.period(a);
    }
    let mut traj = Trajectory {
        dim,
        period,
        times: Vec::new(),
        states: Vec::new(),
        windings: Vec::new(),
        energies: Vec::new(),
    };

    let mut raw = RawState {
        x: spec.wrap_point(&s0.x),
        p: s0.p,
        u: s0.u,
    };
    let mut time = 0.0;
    record(model, spec, &raw, time, &mut traj)?;
    if t == 0.0 {
        return Ok(traj);
    }

    match ctl.mode {
        StepMode::Fixed => {
            // Uniform steps landing exactly on t: boundaries at t*k/n, so a
            // centered difference of the recorded energies stays second
            // order (no short trailing step).
            let n = uniform_step_count(t, ctl.h0);
            if n > ctl.max_steps {
                return Err(FlowError::StepLimit {
                    max_steps: ctl.max_steps,
                    target: t,
                });
            }
            for k in 0..n {
                let time_next = t * (k + 1) as f64 / n as f64;
                let h_eff = time_next - time;
                raw = rk4_step(model, &raw, h_eff, spec, sign)?;
                time = time_next;
                check_ceiling(&raw, time, ctl)?;
                record(model, spec, &raw, time, &mut traj)?;
            }
        }
        StepMode::Adaptive {
            residual_tol,
            h_min,
        } => {
            let mut h = ctl.h0.min(t);
            let mut steps = 0usize;
            while time < t {
                if steps >= ctl.max_steps {
                    return Err(FlowError::StepLimit {
                        max_steps: ctl.max_steps,
                        target: t,
                    });
                }
                let h_eff = h.min(t - time);
                let next = rk4_step(model, &raw, h_eff, spec, sign)?;
                let r = step_energy_residual(model, spec, &raw, &next, h_eff, sign)?;
                if r > residual_tol && h_eff > h_min {
                    h = (h_eff / 2.0).max(h_min);
                    continue;
                }
                raw = next;
                time += h_eff;
                if r < residual_tol / 8.0 {
                    h = (h * 1.5).min(ctl.h0);
                }
                steps += 1;
                check_ceiling(&raw, time, ctl)?;
                record(model, spec, &raw, time, &mut traj)?;
            }
        }
    }
    Ok(traj)
}

/// Number of uniform steps of size at most `h` covering `[0, t]`, robust to
/// `t/h` sitting a few ulps above an integer.
pub(crate) fn uniform_step_count(t: f64, h: f64) -> usize {
    let ratio = t / h;
    let rounded = ratio.round();
    if rounded >= 1.0 && (ratio - rounded).abs() < 1e-9 * rounded.max(1.0) {
        rounded as usize
    } else {
        ratio.ceil().max(1.0) as usize
    }
}

fn check_ceiling(raw: &RawState, time: f64, ctl: &StepControl) -> Result<(), FlowError> {
    let pmax = raw.p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if pmax > ctl.blowup_ceiling || raw.u.abs() > ctl.blowup_ceiling {
        return Err(FlowError::BlowUp {
            t_detect: time,
            ceiling: ctl.blowup_ceiling,
        });
    }
    Ok(())
}

/// Endpoint-only integration (fixed step, no recording); returns the
/// unwrapped final position with momentum and value. Used by the shooting
/// scans where full trajectories would be wasteful.
pub fn flow_endpoint(
    model: &HamiltonianModel,
    spec: &TorusSpec,
    s0: &ContactState,
    t: f64,
    steps: usize,
    sign: f64,
    blowup_ceiling: f64,
) -> Result<([f64; MAX_DIM], [f64; MAX_DIM], f64), FlowError> {
    let mut raw = RawState {
        x: spec.wrap_point(&s0.x),
        p: s0.p,
        u: s0.u,
    };
    let h = t / steps as f64;
    for _ in 0..steps {
        raw = rk4_step(model, &raw, h, spec, sign)?;
        let pmax = raw.p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if pmax > blowup_ceiling || raw.u.abs() > blowup_ceiling {
            return Err(FlowError::BlowUp {
                t_detect: t,
                ceiling: blowup_ceiling,
            });
        }
    }
    Ok((raw.x, raw.p, raw.u))
}

fn record(
    model: &HamiltonianModel,
    spec: &TorusSpec,
    raw: &RawState,
    time: f64,
    traj: &mut Trajectory,
) -> Result<(), FlowError> {
    let dim = model.dim();
    let mut wrapped = [0.0; MAX_DIM];
    let mut winding = [0i64; MAX_DIM];
    for a in 0..dim {
        let period = spec.period(a);
        let k = (raw.x[a] / period).floor();
        winding[a] = k as i64;
        wrapped[a] = wrap_coordinate(raw.x[a] - k * period, period);
    }
    let state = ContactState {
        x: wrapped,
        p: raw.p,
        u: raw.u,
    };
    // energies are recomputed from the model, never cached
    let energy = model.eval_value(&state.x, &state.p, state.u)?;
    traj.times.push(time);
    traj.states.push(state);
    traj.windings.push(winding);
    traj.energies.push(energy);
    Ok(())
}

fn step_energy_residual(
    model: &HamiltonianModel,
    spec: &TorusSpec,
    before: &RawState,
    after: &RawState,
    h: f64,
    sign: f64,
) -> Result<f64, FlowError> {
    let wrap = |r: &RawState| -> ContactState {
        ContactState {
            x: spec.wrap_point(&r.x),
            p: r.p,
            u: r.u,
        }
    };
    let s0 = wrap(before);
    let s1 = wrap(after);
    let j0 = model.eval_jet(&s0.x, &s0.p, s0.u)?;
    let j1 = model.eval_jet(&s1.x, &s1.p, s1.u)?;
    let dh_dt = (j1.value - j0.value) / (sign * h);
    let source = -0.5 * (j0.d_u * j0.value + j1.d_u * j1.value);
    Ok((dh_dt - source).abs())
}

/// Maximum over interior samples of `|dH/dt + (dH/du) H|`, with `dH/dt`
/// estimated by centered differences of the recorded energies. Scales as
/// `O(h^2)` under step refinement.
pub fn energy_residual(
    model: &HamiltonianModel,
    traj: &Trajectory,
) -> Result<f64, FlowError> {
    if traj.len() < 3 {
        return Err(FlowError::TooShort {
            needed: 3,
            got: traj.len(),
        });
    }
    let mut worst: f64 = 0.0;
    for k in 1..traj.len() - 1 {
        let dt = traj.times[k + 1] - traj.times[k - 1];
        let dh = (traj.energies[k + 1] - traj.energies[k - 1]) / dt;
        let s = &traj.states[k];
        let jet = model.eval_jet(&s.x, &s.p, s.u)?;
        worst = worst.max((dh + jet.d_u * traj.energies[k]).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::HamiltonianModel;
    use approx::assert_abs_diff_eq;

    fn e1() -> (HamiltonianModel, TorusSpec) {
        (
            HamiltonianModel::dissipative_free_particle(),
            TorusSpec::line(256).unwrap(),
        )
    }

    #[test]
    fn vector_field_free_particle() {
        let (model, _) = e1();
        let (dx, dp, du) =
            vector_field(&model, &ContactState::new_1d(0.0, 1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(dx[0], 1.0);
        assert_abs_diff_eq!(dp[0], -1.0);
        assert_abs_diff_eq!(du, 0.5);
    }

    #[test]
    fn vector_field_zero_momentum_reduces_to_minus_h() {
        let (model, _) = e1();
        // p = 0 and dH/dx = 0: dp = 0, du = -H
        let s = ContactState::new_1d(0.3, 0.0, -0.7);
        let (dx, dp, du) = vector_field(&model, &s).unwrap();
        assert_abs_diff_eq!(dx[0], 0.0);
        assert_abs_diff_eq!(dp[0], 0.0);
        assert_abs_diff_eq!(du, 0.7);
    }

    #[test]
    fn vector_field_cosine_potential() {
        let model = HamiltonianModel::cosine_potential(0.2, 1.0);
        let s = ContactState::new_1d(0.25, 0.0, 0.0);
        let (dx, dp, du) = vector_field(&model, &s).unwrap();
        assert_abs_diff_eq!(dx[0], 0.0);
        assert_abs_diff_eq!(dp[0], std::f64::consts::TAU, epsilon = 1e-10);
        assert_abs_diff_eq!(du, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn free_particle_flow_matches_closed_form() {
        // p(t) = p0 e^-t, H(t) = H0 e^-t, u = H - p^2/2, x = x0 + p0(1 - e^-t)
        let (model, spec) = e1();
        let traj = integrate(
            &model,
            &spec,
            &ContactState::new_1d(0.0, 1.0, 0.0),
            1.0,
            &StepControl::fixed(1e-3),
        )
        .unwrap();
        let end = traj.final_state();
        let e = (-1.0f64).exp();
        assert_abs_diff_eq!(end.x[0], 1.0 - e, epsilon = 1e-9);
        assert_abs_diff_eq!(end.p[0], e, epsilon = 1e-9);
        assert_abs_diff_eq!(end.u, 0.5 * e - 0.5 * e * e, epsilon = 1e-9);
    }

    #[test]
    fn zero_horizon_returns_initial_state() {
        let (model, spec) = e1();
        let s0 = ContactState::new_1d(0.4, -0.3, 0.2);
        let traj = integrate(&model, &spec, &s0, 0.0, &StepControl::fixed(1e-3)).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.final_state(), s0);
    }

    #[test]
    fn classical_limit_conserves_energy() {
        // H = p^2/2: p constant, u grows linearly at rate p^2/2, x drifts.
        let model = HamiltonianModel::quadratic(
            1,
            crate::hamiltonian::InverseMass::Constant(
                crate::hamiltonian::SymMatrix::identity(),
            ),
            crate::hamiltonian::Expr::parse("0").unwrap(),
            crate::hamiltonian::PotentialCoupling::Linear { rate: 0.0 },
        )
        .unwrap();
        let spec = TorusSpec::line(64).unwrap();
        let traj = integrate(
            &model,
            &spec,
            &ContactState::new_1d(0.0, 0.6, 0.1),
            2.0,
            &StepControl::fixed(1e-3),
        )
        .unwrap();
        let end = traj.final_state();
        assert_abs_diff_eq!(end.p[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(end.u, 0.1 + 2.0 * 0.18, epsilon = 1e-10);
        let r = energy_residual(&model, &traj).unwrap();
        assert!(r < 1e-10, "conservative limit residual {r}");
    }

    #[test]
    fn energy_identity_residual_and_refinement() {
        let (model, spec) = e1();
        let s0 = ContactState::new_1d(0.0, 1.0, 0.0);
        let run = |h: f64| {
            let traj = integrate(&model, &spec, &s0, 2.0, &StepControl::fixed(h)).unwrap();
            energy_residual(&model, &traj).unwrap()
        };
        let r1 = run(1e-3);
        assert!(r1 <= 1e-6, "residual {r1}");
        let r2 = run(5e-4);
        let ratio = r1 / r2;
        assert!(
            (3.5..4.5).contains(&ratio),
            "expected ~4x drop on halving, got {ratio}"
        );
    }

    #[test]
    fn energy_envelope_holds() {
        let model = HamiltonianModel::cosine_potential(0.2, 1.0);
        let spec = TorusSpec::line(64).unwrap();
        for (p0, u0) in [(2.0, 0.5), (-1.0, -1.0), (0.3, 2.0)] {
            let s0 = ContactState::new_1d(0.1, p0, u0);
            let traj =
                integrate(&model, &spec, &s0, 2.0, &StepControl::fixed(1e-3)).unwrap();
            let h0 = traj.energies()[0].abs();
            let lambda = model.lambda_bound();
            for (k, e) in traj.energies().iter().enumerate() {
                let bound = (lambda * traj.times()[k]).exp() * h0 + 1e-8;
                assert!(e.abs() <= bound, "envelope violated: |H|={} > {}", e.abs(), bound);
            }
        }
    }

    #[test]
    fn forward_then_backward_returns_to_start() {
        let model = HamiltonianModel::cosine_potential(0.2, 1.0);
        let spec = TorusSpec::line(64).unwrap();
        let s0 = ContactState::new_1d(0.3, 1.2, -0.4);
        let ctl = StepControl::fixed(1e-3);
        let fwd = integrate(&model, &spec, &s0, 2.0, &ctl).unwrap();
        let back = integrate_backward(&model, &spec, &fwd.final_state(), 2.0, &ctl).unwrap();
        let s1 = back.final_state();
        assert_abs_diff_eq!(s1.x[0], s0.x[0], epsilon = 1e-6);
        assert_abs_diff_eq!(s1.p[0], s0.p[0], epsilon = 1e-6);
        assert_abs_diff_eq!(s1.u, s0.u, epsilon = 1e-6);
    }

    #[test]
    fn winding_bookkeeping_is_exact() {
        let (model, spec) = e1();
        // p0 = 3 travels distance 3(1 - e^-2) ~ 2.59: winds twice.
        let traj = integrate(
            &model,
            &spec,
            &ContactState::new_1d(0.0, 3.0, 0.0),
            2.0,
            &StepControl::fixed(1e-3),
        )
        .unwrap();
        let k = traj.len() - 1;
        let expect = 3.0 * (1.0 - (-2.0f64).exp());
        assert_abs_diff_eq!(traj.unwrapped_x(k)[0], expect, epsilon = 1e-8);
        assert_eq!(traj.windings()[k][0], 2);
        // identity: unwrapped == wrapped + period * winding, exactly
        let s = traj.states()[k];
        assert_eq!(
            traj.unwrapped_x(k)[0].to_bits(),
            (s.x[0] + 1.0 * traj.windings()[k][0] as f64).to_bits()
        );
    }

    #[test]
    fn blow_up_is_detected() {
        // H = -u p: dp/dt = p^2 blows up in finite time for p0 > 0.
        let model = HamiltonianModel::parse("0 - u*p1", 1.0).unwrap();
        let spec = TorusSpec::line(64).unwrap();
        let mut ctl = StepControl::fixed(1e-3);
        ctl.blowup_ceiling = 1e6;
        let r = integrate(&model, &spec, &ContactState::new_1d(0.0, 2.0, 1.0), 1.0, &ctl);
        match r {
            Err(FlowError::BlowUp { t_detect, .. }) => {
                assert!(t_detect <= 0.55, "blow-up after expected time: {t_detect}");
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn adaptive_mode_matches_fixed_on_smooth_flow() {
        let (model, spec) = e1();
        let s0 = ContactState::new_1d(0.0, 1.0, 0.0);
        let fixed = integrate(&model, &spec, &s0, 1.0, &StepControl::fixed(1e-3)).unwrap();
        let adapt =
            integrate(&model, &spec, &s0, 1.0, &StepControl::adaptive(1e-2, 1e-7)).unwrap();
        let a = adapt.final_state();
        let f = fixed.final_state();
        assert_abs_diff_eq!(a.x[0], f.x[0], epsilon = 1e-5);
        assert_abs_diff_eq!(a.u, f.u, epsilon = 1e-5);
    }

    #[test]
    fn csv_has_mandatory_header_and_rows() {
        let (model, spec) = e1();
        let traj = integrate(
            &model,
            &spec,
            &ContactState::new_1d(0.0, 1.0, 0.0),
            0.01,
            &StepControl::fixed(1e-3),
        )
        .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,p1,u,H,winding1");
        assert_eq!(lines.count(), traj.len());
    }
}
