//! Verification batteries for the subsolution characterizations.
//!
//! A continuous `phi` is a viscosity subsolution of `H(x, du, u) = 0`
//! exactly when any of the following hold: `H(x, p, phi(x)) <= 0` on the
//! superdifferential, monotonicity up along the backward semigroup,
//! monotonicity down along the forward semigroup, or positive invariance of
//! the epigraph `{u >= phi(x)}` under the characteristic flow. The
//! `theorem-a` battery runs all four and checks that the verdicts agree.
//! The `theorem-b` battery adds the quantitative strict-subsolution rate
//! `T_t phi >= phi + c (1 - e^{-lambda t}) / lambda`, `corollary-c` checks
//! strict interiority of the flowed epigraph with that floor, and
//! `lemma-inclusion` checks the unconditional inclusion of the flowed
//! epigraph in the epigraph of the evolved function.
//!
//! Every battery is sampled and tolerance-scaled: reports state margins,
//! witnesses, the tolerance used, and the full parameter echo; they never
//! claim more than "no violation found at this resolution".

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::flow::{self, ContactState, FlowError, StepControl};
use crate::geometry::{GridFunction, MAX_DIM};
use crate::hamiltonian::{EvalError, HamiltonianModel};
use crate::semigroup::{self, EvolutionConfig, EvolveError};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(
        "superdifferential mode needs H convex in p; sampled min eigenvalue {min_eig:.3e} <= 0 \
         (use almost-everywhere mode)"
    )]
    NonConvexSuperdifferential { min_eig: f64 },
    #[error("verification setup error: {0}")]
    Setup(String),
}

// ---------------------------------------------------------------------------
// Subsolution certification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsolutionMode {
    /// Test `H(x, central difference gradient, phi(x)) <= tol` at every node.
    AlmostEverywhere,
    /// Test `H` at the endpoints (corners in 2D) of the one-sided quotient
    /// interval where it is nonempty; convexity of `H` in `p` puts the
    /// maximum over the interval at an endpoint.
    Superdifferential,
}

impl SubsolutionMode {
    pub fn name(&self) -> &'static str {
        match self {
            SubsolutionMode::AlmostEverywhere => "ae",
            SubsolutionMode::Superdifferential => "superdifferential",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SubsolutionWitness {
    pub node: [usize; MAX_DIM],
    pub x: [f64; MAX_DIM],
    pub p: [f64; MAX_DIM],
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct SubsolutionReport {
    pub mode: SubsolutionMode,
    /// Max over tested nodes of `H(x, p, phi(x))`; negative means pass.
    pub worst_margin: f64,
    pub witness: Option<SubsolutionWitness>,
    pub tolerance_used: f64,
    /// Max one-sided difference quotient magnitude over the grid.
    pub lipschitz_bound: f64,
    /// Nodes that imposed at least one constraint.
    pub constrained_nodes: usize,
    pub passed: bool,
}

/// Certify `phi` as a discrete subsolution. `tol` defaults to `C_H * h`
/// with `C_H` estimated from the momentum derivative along the data and
/// the sampled curvature of `phi`.
pub fn check_subsolution(
    model: &HamiltonianModel,
    phi: &GridFunction,
    mode: SubsolutionMode,
    tol: Option<f64>,
) -> Result<SubsolutionReport, VerifyError> {
    let spec = phi.spec();
    let dim = spec.dim();
    if mode == SubsolutionMode::Superdifferential && !model.is_quadratic() {
        // expression models must demonstrate convexity in p first
        let mut min_eig = f64::INFINITY;
        for i in (0..spec.node_count()).step_by((spec.node_count() / 16).max(1)) {
            let x = spec.node_position(spec.multi_index(i));
            for p1 in [-2.0, 0.0, 2.0] {
                let eig = model
                    .p_hessian(&x, &[p1, 0.0], phi.values()[i])?
                    .min_eigenvalue(dim);
                min_eig = min_eig.min(eig);
            }
        }
        if min_eig <= 0.0 {
            return Err(VerifyError::NonConvexSuperdifferential { min_eig });
        }
    }

    let mut lipschitz_bound: f64 = 0.0;
    let mut curvatures: Vec<f64> = Vec::with_capacity(spec.node_count());
    let mut momentum_scale: f64 = 0.0;
    let h = spec.max_spacing();

    let mut worst: Option<SubsolutionWitness> = None;
    let mut constrained_nodes = 0usize;
    for i in 0..spec.node_count() {
        let node = spec.multi_index(i);
        let x = spec.node_position(node);
        let value = phi.values()[i];
        let quotients = phi.difference_quotients(node);
        for a in 0..dim {
            lipschitz_bound = lipschitz_bound
                .max(quotients.lower[a].abs())
                .max(quotients.upper[a].abs());
            curvatures.push((quotients.upper[a] - quotients.lower[a]).abs() / h);
        }

        let mut candidates: Vec<[f64; MAX_DIM]> = Vec::new();
        match mode {
            SubsolutionMode::AlmostEverywhere => candidates.push(quotients.central()),
            SubsolutionMode::Superdifferential => {
                // per-axis interval [upper, lower]; empty on any axis means
                // the node imposes no constraint
                let nonempty =
                    (0..dim).all(|a| quotients.upper[a] <= quotients.lower[a] + 1e-14);
                if nonempty {
                    if dim == 1 {
                        candidates.push([quotients.upper[0], 0.0]);
                        candidates.push([quotients.lower[0], 0.0]);
                    } else {
                        for &p1 in &[quotients.upper[0], quotients.lower[0]] {
                            for &p2 in &[quotients.upper[1], quotients.lower[1]] {
                                candidates.push([p1, p2]);
                            }
                        }
                    }
                }
            }
        }
        if candidates.is_empty() {
            continue;
        }
        constrained_nodes += 1;
        for p in candidates {
            let jet = model.eval_jet(&x, &p, value)?;
            momentum_scale = momentum_scale
                .max(jet.d_p[0].abs())
                .max(if dim > 1 { jet.d_p[1].abs() } else { 0.0 });
            let margin = jet.value;
            if worst.map_or(true, |w| margin > w.margin) {
                worst = Some(SubsolutionWitness {
                    node,
                    x,
                    p,
                    margin,
                });
            }
        }
    }

    let worst_margin = worst.map_or(f64::NEG_INFINITY, |w| w.margin);
    // Curvature scale for the default tolerance: a high quantile rather
    // than the max, so isolated kinks (where the quotient jump is the
    // superdifferential itself, not discretization error) do not inflate it.
    curvatures.sort_by(f64::total_cmp);
    let curvature = if curvatures.is_empty() {
        0.0
    } else {
        curvatures[(curvatures.len() - 1) * 9 / 10]
    };
    let tolerance_used =
        tol.unwrap_or_else(|| (1.0 + momentum_scale) * (1.0 + curvature) * h);
    Ok(SubsolutionReport {
        mode,
        worst_margin,
        witness: worst,
        tolerance_used,
        lipschitz_bound,
        constrained_nodes,
        passed: worst_margin <= tolerance_used,
    })
}

// ---------------------------------------------------------------------------
// Shared battery plumbing
// ---------------------------------------------------------------------------

/// Configuration shared by the theorem batteries.
#[derive(Debug, Clone)]
pub struct BatteryConfig {
    /// Horizons at which semigroup and flow checks are evaluated.
    pub horizons: Vec<f64>,
    /// Epigraph sample count.
    pub samples: usize,
    /// RNG seed, echoed into the report.
    pub seed: u64,
    /// Momentum cap for epigraph sampling.
    pub p_cap: f64,
    /// Gap cap for epigraph sampling.
    pub u_cap: f64,
    /// Semigroup discretization.
    pub evolution: EvolutionConfig,
    /// Integrator step for epigraph flows.
    pub flow_h: f64,
    /// Overrides the mesh-scaled tolerance when set.
    pub tol_override: Option<f64>,
    /// Threshold for "strictly positive" small-time rates.
    pub strictness_tol: f64,
    /// Slack allowed below the strict-rate floor.
    pub rate_tol: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            horizons: vec![0.25, 0.5, 1.0],
            samples: 500,
            seed: 42,
            p_cap: 3.0,
            u_cap: 2.0,
            evolution: EvolutionConfig::default(),
            flow_h: 1e-3,
            tol_override: None,
            strictness_tol: 1e-3,
            rate_tol: 2e-3,
        }
    }
}

impl BatteryConfig {
    /// Mesh-scaled battery tolerance `C (h + dt)` with
    /// `C = 2 (1 + lambda) (1 + max|phi|)`.
    pub fn tolerance(&self, model: &HamiltonianModel, phi: &GridFunction) -> f64 {
        self.tol_override.unwrap_or_else(|| {
            let c = 2.0 * (1.0 + model.lambda_bound()) * (1.0 + phi.max_abs());
            c * (phi.spec().max_spacing() + self.evolution.dt)
        })
    }

    fn max_horizon(&self) -> f64 {
        self.horizons.iter().copied().fold(0.0, f64::max)
    }

    fn sorted_horizons(&self) -> Result<Vec<f64>, VerifyError> {
        if self.horizons.is_empty() {
            return Err(VerifyError::Setup("battery needs at least one horizon".into()));
        }
        let mut h = self.horizons.clone();
        h.sort_by(f64::total_cmp);
        if h[0] <= 0.0 {
            return Err(VerifyError::Setup("horizons must be positive".into()));
        }
        Ok(h)
    }
}

/// One flowed epigraph sample. `horizon_gaps` holds `u(t) - phi(x(t))` at
/// each horizon; `min_traj_gap` is the minimum of that gap over every
/// recorded time along the trajectory (the invariance claim quantifies
/// over all `t >= 0`, so the whole trajectory is monitored, not just the
/// horizon times).
#[derive(Debug, Clone)]
pub struct EpigraphSample {
    pub base: ContactState,
    pub gap: f64,
    pub horizon_gaps: Vec<(f64, f64)>,
    /// Flowed state at each horizon.
    pub horizon_states: Vec<(f64, ContactState)>,
    pub min_traj_gap: f64,
    pub blew_up: bool,
}

fn draw_epigraph_samples(
    phi: &GridFunction,
    cfg: &BatteryConfig,
    boundary_every: Option<usize>,
) -> Vec<ContactState> {
    let spec = phi.spec();
    let dim = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.samples);
    for i in 0..cfg.samples {
        let node = rng.gen_range(0..spec.node_count());
        let x = spec.node_position(spec.multi_index(node));
        let mut p = [0.0; MAX_DIM];
        for pa in p.iter_mut().take(dim) {
            *pa = rng.gen_range(-cfg.p_cap..cfg.p_cap);
        }
        let mut gap = rng.gen_range(0.0..cfg.u_cap);
        if let Some(every) = boundary_every {
            if i % every == 0 {
                gap = 0.0;
                if i % (2 * every) == 0 {
                    p = [0.0; MAX_DIM];
                }
            }
        }
        out.push(ContactState {
            x,
            p,
            u: phi.values()[node] + gap,
        });
    }
    out
}

fn flow_epigraph_samples(
    model: &HamiltonianModel,
    phi: &GridFunction,
    bases: &[ContactState],
    horizons: &[f64],
    cfg: &BatteryConfig,
) -> Vec<EpigraphSample> {
    let spec = phi.spec();
    let t_max = horizons.iter().copied().fold(0.0, f64::max);
    let ctl = StepControl::fixed(cfg.flow_h);
    bases
        .par_iter()
        .map(|base| {
            let gap = base.u - phi.interpolate(&base.x);
            match flow::integrate(model, spec, base, t_max, &ctl) {
                Ok(traj) => {
                    let mut min_traj_gap = f64::INFINITY;
                    for k in 0..traj.len() {
                        let s = &traj.states()[k];
                        min_traj_gap = min_traj_gap.min(s.u - phi.interpolate(&s.x));
                    }
                    let mut horizon_gaps = Vec::with_capacity(horizons.len());
                    let mut horizon_states = Vec::with_capacity(horizons.len());
                    for &t in horizons {
                        let k = nearest_time_index(traj.times(), t);
                        let s = traj.states()[k];
                        horizon_gaps.push((t, s.u - phi.interpolate(&s.x)));
                        horizon_states.push((t, s));
                    }
                    EpigraphSample {
                        base: *base,
                        gap,
                        horizon_gaps,
                        horizon_states,
                        min_traj_gap,
                        blew_up: false,
                    }
                }
                Err(_) => EpigraphSample {
                    base: *base,
                    gap,
                    horizon_gaps: Vec::new(),
                    horizon_states: Vec::new(),
                    min_traj_gap: f64::INFINITY,
                    blew_up: true,
                },
            }
        })
        .collect()
}

fn nearest_time_index(times: &[f64], t: f64) -> usize {
    match times.binary_search_by(|a| a.total_cmp(&t)) {
        Ok(k) => k,
        Err(k) => {
            if k == 0 {
                0
            } else if k >= times.len() {
                times.len() - 1
            } else if (times[k] - t).abs() < (t - times[k - 1]).abs() {
                k
            } else {
                k - 1
            }
        }
    }
}

/// `(1 - e^{-lambda t}) / lambda`, continuous through `lambda = 0`.
pub fn rate_factor(lambda: f64, t: f64) -> f64 {
    if lambda.abs() < 1e-12 {
        t
    } else {
        (1.0 - (-lambda * t).exp()) / lambda
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Per-sample margin record backing the battery CSV output.
#[derive(Debug, Clone)]
pub struct SampleRow {
    pub index: usize,
    pub kind: String,
    pub t: f64,
    pub x: [f64; MAX_DIM],
    pub p: [f64; MAX_DIM],
    pub u0: f64,
    pub margin: f64,
}

/// Outcome of one battery: named verdicts and margins, witnesses, the full
/// parameter echo, and per-sample rows. Deterministic given the seed in
/// the parameters.
#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub battery: String,
    pub passed: bool,
    pub verdicts: Vec<(String, bool)>,
    pub margins: Vec<(String, f64)>,
    pub witnesses: Vec<String>,
    pub parameters: Vec<(String, String)>,
    pub sample_rows: Vec<SampleRow>,
}

impl VerificationReport {
    pub fn verdict(&self, name: &str) -> Option<bool> {
        self.verdicts
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    pub fn margin(&self, name: &str) -> Option<f64> {
        self.margins
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    /// Structured-text rendering (greppable `key = value` blocks).
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("battery = {}\n", self.battery));
        s.push_str(&format!("passed = {}\n", self.passed));
        s.push_str("\n[verdicts]\n");
        for (name, v) in &self.verdicts {
            s.push_str(&format!("{name} = {v}\n"));
        }
        s.push_str("\n[margins]\n");
        for (name, m) in &self.margins {
            s.push_str(&format!("{name} = {m}\n"));
        }
        if !self.witnesses.is_empty() {
            s.push_str("\n[witnesses]\n");
            for w in &self.witnesses {
                s.push_str(&format!("- {w}\n"));
            }
        }
        s.push_str("\n[parameters]\n");
        for (name, v) in &self.parameters {
            s.push_str(&format!("{name} = {v}\n"));
        }
        s
    }

    /// Per-sample margins CSV.
    pub fn write_margins_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "index,kind,t,x1,x2,p1,p2,u0,margin")?;
        for row in &self.sample_rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                row.index,
                row.kind,
                row.t,
                row.x[0],
                row.x[1],
                row.p[0],
                row.p[1],
                row.u0,
                row.margin
            )?;
        }
        Ok(())
    }
}

fn common_parameters(
    model: &HamiltonianModel,
    phi: &GridFunction,
    cfg: &BatteryConfig,
    tol: f64,
) -> Vec<(String, String)> {
    vec![
        ("model".into(), model.describe()),
        ("lambda".into(), format!("{}", model.lambda_bound())),
        ("grid_dim".into(), format!("{}", phi.spec().dim())),
        (
            "grid_resolution".into(),
            format!("{}", phi.spec().resolution(0)),
        ),
        ("horizons".into(), format!("{:?}", cfg.horizons)),
        ("samples".into(), format!("{}", cfg.samples)),
        ("seed".into(), format!("{}", cfg.seed)),
        ("p_cap".into(), format!("{}", cfg.p_cap)),
        ("u_cap".into(), format!("{}", cfg.u_cap)),
        ("dt".into(), format!("{}", cfg.evolution.dt)),
        ("v_max".into(), format!("{}", cfg.evolution.v_max)),
        ("v_res".into(), format!("{}", cfg.evolution.v_res)),
        ("flow_h".into(), format!("{}", cfg.flow_h)),
        ("tolerance".into(), format!("{tol}")),
        (
            "completeness_note".into(),
            format!(
                "flow checks certify no blow-up before t = {} only",
                cfg.max_horizon()
            ),
        ),
    ]
}

fn grid_extreme(
    grid: &GridFunction,
    phi: &GridFunction,
    minimize: bool,
) -> (f64, usize) {
    let mut best = if minimize {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    let mut arg = 0usize;
    for (i, (a, b)) in grid.values().iter().zip(phi.values()).enumerate() {
        let gap = a - b;
        if (minimize && gap < best) || (!minimize && gap > best) {
            best = gap;
            arg = i;
        }
    }
    (best, arg)
}

// ---------------------------------------------------------------------------
// Theorem A battery
// ---------------------------------------------------------------------------

/// Four-way equivalence battery: (1) discrete subsolution margin, (2)
/// backward-semigroup monotonicity, (3) forward-semigroup monotonicity,
/// (4) epigraph invariance under the flow. The theorem predicts a
/// unanimous verdict; `passed` records exactly that agreement.
pub fn battery_theorem_a(
    model: &HamiltonianModel,
    phi: &GridFunction,
    cfg: &BatteryConfig,
) -> Result<VerificationReport, VerifyError> {
    let horizons = cfg.sorted_horizons()?;
    let tol = cfg.tolerance(model, phi);
    let spec = phi.spec();

    // (1) subsolution margin at the nodes
    let sub = check_subsolution(model, phi, SubsolutionMode::AlmostEverywhere, Some(tol))?;

    // (2) backward monotonicity: min over horizons and nodes of T_t phi - phi
    let backward = semigroup::evolve_with_checkpoints(
        model,
        phi,
        &horizons,
        &cfg.evolution,
        crate::action::Direction::Backward,
    )?;
    let mut backward_min = f64::INFINITY;
    let mut backward_witness = (0usize, 0.0f64);
    for (grid, &t) in backward.iter().zip(&horizons) {
        let (gap, node) = grid_extreme(grid, phi, true);
        if gap < backward_min {
            backward_min = gap;
            backward_witness = (node, t);
        }
    }

    // (3) forward monotonicity: max over horizons and nodes of T+_t phi - phi
    let forward = semigroup::evolve_with_checkpoints(
        model,
        phi,
        &horizons,
        &cfg.evolution,
        crate::action::Direction::Forward,
    )?;
    let mut forward_max = f64::NEG_INFINITY;
    let mut forward_witness = (0usize, 0.0f64);
    for (grid, &t) in forward.iter().zip(&horizons) {
        let (gap, node) = grid_extreme(grid, phi, false);
        if gap > forward_max {
            forward_max = gap;
            forward_witness = (node, t);
        }
    }

    // (4) epigraph invariance along flowed samples
    let bases = draw_epigraph_samples(phi, cfg, None);
    let flowed = flow_epigraph_samples(model, phi, &bases, &horizons, cfg);
    let mut epigraph_min = f64::INFINITY;
    let mut epigraph_witness = 0usize;
    let mut blowups = 0usize;
    for (i, s) in flowed.iter().enumerate() {
        if s.blew_up {
            blowups += 1;
            continue;
        }
        if s.min_traj_gap < epigraph_min {
            epigraph_min = s.min_traj_gap;
            epigraph_witness = i;
        }
    }

    let verdicts = vec![
        ("subsolution".to_string(), sub.passed),
        ("backward_monotone".to_string(), backward_min >= -tol),
        ("forward_monotone".to_string(), forward_max <= tol),
        ("epigraph_invariant".to_string(), epigraph_min >= -tol),
    ];
    let unanimous = verdicts.iter().all(|(_, v)| *v) || verdicts.iter().all(|(_, v)| !*v);

    let mut witnesses = Vec::new();
    if let Some(w) = &sub.witness {
        witnesses.push(format!(
            "subsolution margin {:.6} at x = {:?}, p = {:?}",
            w.margin, w.x, w.p
        ));
    }
    witnesses.push(format!(
        "backward min gap {:.6} at node {} (t = {})",
        backward_min, backward_witness.0, backward_witness.1
    ));
    witnesses.push(format!(
        "forward max gap {:.6} at node {} (t = {})",
        forward_max, forward_witness.0, forward_witness.1
    ));
    if epigraph_min.is_finite() {
        let w = &flowed[epigraph_witness];
        witnesses.push(format!(
            "epigraph min gap {:.6} from sample {} at x = {:?}, p = {:?}, u0 = {:.6}",
            epigraph_min, epigraph_witness, w.base.x, w.base.p, w.base.u
        ));
    }
    if blowups > 0 {
        witnesses.push(format!(
            "{blowups} samples blew up before t = {} (treated as incompleteness, excluded from margins)",
            cfg.max_horizon()
        ));
    }

    let mut sample_rows: Vec<SampleRow> = flowed
        .iter()
        .enumerate()
        .map(|(i, s)| SampleRow {
            index: i,
            kind: if s.blew_up {
                "epigraph-blowup".into()
            } else {
                "epigraph".into()
            },
            t: cfg.max_horizon(),
            x: s.base.x,
            p: s.base.p,
            u0: s.base.u,
            margin: s.min_traj_gap,
        })
        .collect();
    for (grid, &t) in backward.iter().zip(&horizons) {
        let (gap, node) = grid_extreme(grid, phi, true);
        sample_rows.push(SampleRow {
            index: node,
            kind: "backward-min".into(),
            t,
            x: spec.node_position(spec.multi_index(node)),
            p: [0.0; MAX_DIM],
            u0: phi.values()[node],
            margin: gap,
        });
    }
    for (grid, &t) in forward.iter().zip(&horizons) {
        let (gap, node) = grid_extreme(grid, phi, false);
        sample_rows.push(SampleRow {
            index: node,
            kind: "forward-max".into(),
            t,
            x: spec.node_position(spec.multi_index(node)),
            p: [0.0; MAX_DIM],
            u0: phi.values()[node],
            margin: gap,
        });
    }

    let margins = vec![
        ("subsolution_margin".to_string(), sub.worst_margin),
        ("backward_min_gap".to_string(), backward_min),
        ("forward_max_gap".to_string(), forward_max),
        ("epigraph_min_gap".to_string(), epigraph_min),
        ("subsolution_lipschitz".to_string(), sub.lipschitz_bound),
    ];
    let mut parameters = common_parameters(model, phi, cfg, tol);
    parameters.push(("blowups".into(), format!("{blowups}")));

    Ok(VerificationReport {
        battery: "theorem-a".into(),
        passed: unanimous,
        verdicts,
        margins,
        witnesses,
        parameters,
        sample_rows,
    })
}

// ---------------------------------------------------------------------------
// Theorem B battery
// ---------------------------------------------------------------------------

/// Small-time rate constants: per-node quotients `(T_t phi - phi)/t` at
/// `t in {1e-2, 5e-3}`, Richardson-extrapolated node-wise, then reduced.
/// Returns `(c_backward, c_forward)`: the backward minimum and the forward
/// maximum (the forward one is negative for strict subsolutions).
pub fn estimate_strict_rates(
    model: &HamiltonianModel,
    phi: &GridFunction,
    cfg: &BatteryConfig,
) -> Result<(f64, f64), VerifyError> {
    const T_COARSE: f64 = 1e-2;
    const T_FINE: f64 = 5e-3;
    let quotients = |direction: crate::action::Direction| -> Result<(f64, bool), VerifyError> {
        let grid_at = |t1: f64| -> Result<GridFunction, VerifyError> {
            let mut evo = cfg.evolution;
            evo.dt = evo.dt.min(t1 / 20.0);
            evo.snapshot_every = 0;
            Ok(
                semigroup::evolve_with_checkpoints(model, phi, &[t1], &evo, direction)?
                    .remove(0),
            )
        };
        let coarse = grid_at(T_COARSE)?;
        let fine = grid_at(T_FINE)?;
        let minimize = matches!(direction, crate::action::Direction::Backward);
        let mut best = if minimize {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        for i in 0..phi.spec().node_count() {
            let base = phi.values()[i];
            let qc = (coarse.values()[i] - base) / T_COARSE;
            let qf = (fine.values()[i] - base) / T_FINE;
            let extrapolated = 2.0 * qf - qc;
            if minimize {
                best = best.min(extrapolated);
            } else {
                best = best.max(extrapolated);
            }
        }
        Ok((best, minimize))
    };
    let (c_backward, _) = quotients(crate::action::Direction::Backward)?;
    let (c_forward, _) = quotients(crate::action::Direction::Forward)?;
    Ok((c_backward, c_forward))
}

/// Strict-subsolution battery: strictly positive small-time backward rate,
/// the Gronwall rate floor `T_t phi >= phi + c (1 - e^{-lambda t})/lambda`
/// at every horizon, and the mirrored forward statements.
pub fn battery_theorem_b(
    model: &HamiltonianModel,
    phi: &GridFunction,
    cfg: &BatteryConfig,
) -> Result<VerificationReport, VerifyError> {
    let horizons = cfg.sorted_horizons()?;
    let tol = cfg.tolerance(model, phi);
    let lambda = model.lambda_bound();
    let spec = phi.spec();

    let (c_hat, c_fwd) = estimate_strict_rates(model, phi, cfg)?;
    let strict_backward = c_hat > cfg.strictness_tol;
    let strict_forward = c_fwd < -cfg.strictness_tol;

    // rate floor at each horizon, using the estimated c
    let backward = semigroup::evolve_with_checkpoints(
        model,
        phi,
        &horizons,
        &cfg.evolution,
        crate::action::Direction::Backward,
    )?;
    let c_floor = c_hat.max(0.0);
    let mut rate_margin_min = f64::INFINITY;
    let mut rate_margin_max = f64::NEG_INFINITY;
    let mut margins = Vec::new();
    let mut sample_rows = Vec::new();
    let mut positivity_min = f64::INFINITY;
    for (grid, &t) in backward.iter().zip(&horizons) {
        let floor = c_floor * rate_factor(lambda, t);
        let mut horizon_min = f64::INFINITY;
        let mut horizon_max = f64::NEG_INFINITY;
        let mut arg = 0usize;
        for (i, (a, b)) in grid.values().iter().zip(phi.values()).enumerate() {
            let gap = a - b;
            positivity_min = positivity_min.min(gap);
            let margin = gap - floor;
            if margin < horizon_min {
                horizon_min = margin;
                arg = i;
            }
            horizon_max = horizon_max.max(margin);
        }
        rate_margin_min = rate_margin_min.min(horizon_min);
        rate_margin_max = rate_margin_max.max(horizon_max);
        margins.push((format!("rate_margin_t_{t}"), horizon_min));
        sample_rows.push(SampleRow {
            index: arg,
            kind: "rate-floor-min".into(),
            t,
            x: spec.node_position(spec.multi_index(arg)),
            p: [0.0; MAX_DIM],
            u0: phi.values()[arg],
            margin: horizon_min,
        });
    }

    // forward mirror: T+_t phi must sit strictly below phi
    let forward = semigroup::evolve_with_checkpoints(
        model,
        phi,
        &horizons,
        &cfg.evolution,
        crate::action::Direction::Forward,
    )?;
    let mut forward_max = f64::NEG_INFINITY;
    for (grid, &t) in forward.iter().zip(&horizons) {
        let (gap, node) = grid_extreme(grid, phi, false);
        forward_max = forward_max.max(gap);
        sample_rows.push(SampleRow {
            index: node,
            kind: "forward-max".into(),
            t,
            x: spec.node_position(spec.multi_index(node)),
            p: [0.0; MAX_DIM],
            u0: phi.values()[node],
            margin: gap,
        });
    }

    let verdicts = vec![
        ("backward_positive".to_string(), positivity_min > tol.min(cfg.strictness_tol)),
        ("small_time_rate".to_string(), strict_backward),
        (
            "rate_floor".to_string(),
            rate_margin_min >= -cfg.rate_tol.max(tol),
        ),
        (
            "forward_mirror".to_string(),
            strict_forward && forward_max < tol,
        ),
    ];
    let passed = verdicts.iter().all(|(_, v)| *v);

    margins.extend([
        ("c_hat".to_string(), c_hat),
        ("c_hat_forward".to_string(), c_fwd),
        ("rate_margin_min".to_string(), rate_margin_min),
        ("rate_margin_max".to_string(), rate_margin_max),
        ("backward_positivity_min".to_string(), positivity_min),
        ("forward_max_gap".to_string(), forward_max),
    ]);

    let witnesses = vec![format!(
        "small-time quotients Richardson-extrapolated from t = 1e-2, 5e-3; c_hat = {c_hat:.6}, forward {c_fwd:.6}"
    )];
    let mut parameters = common_parameters(model, phi, cfg, tol);
    parameters.push(("strictness_tol".into(), format!("{}", cfg.strictness_tol)));
    parameters.push(("rate_tol".into(), format!("{}", cfg.rate_tol)));

    Ok(VerificationReport {
        battery: "theorem-b".into(),
        passed,
        verdicts,
        margins,
        witnesses,
        parameters,
        sample_rows,
    })
}

// ---------------------------------------------------------------------------
// Corollary C battery
// ---------------------------------------------------------------------------

/// Strict interiority of the flowed epigraph: every sample (boundary
/// starts included deliberately) must satisfy
/// `gap(t) >= c_hat (1 - e^{-lambda t}) / lambda - tol` at every horizon.
pub fn battery_corollary_c(
    model: &HamiltonianModel,
    phi: &GridFunction,
    cfg: &BatteryConfig,
    c_hat: Option<f64>,
) -> Result<VerificationReport, VerifyError> {
    let horizons = cfg.sorted_horizons()?;
    let tol = cfg.tolerance(model, phi);
    let lambda = model.lambda_bound();

    let c_hat = match c_hat {
        Some(c) => c,
        None => estimate_strict_rates(model, phi, cfg)?.0,
    };
    let strict = c_hat > cfg.strictness_tol;
    let c_floor = c_hat.max(0.0);

    // every fourth sample starts on the boundary, every eighth with p = 0
    let bases = draw_epigraph_samples(phi, cfg, Some(4));
    let flowed = flow_epigraph_samples(model, phi, &bases, &horizons, cfg);

    let mut floor_margin = f64::INFINITY;
    let mut witness = 0usize;
    let mut blowups = 0usize;
    let mut sample_rows = Vec::new();
    for (i, s) in flowed.iter().enumerate() {
        if s.blew_up {
            blowups += 1;
            continue;
        }
        for &(t, gap) in &s.horizon_gaps {
            let margin = gap - c_floor * rate_factor(lambda, t);
            if margin < floor_margin {
                floor_margin = margin;
                witness = i;
            }
            sample_rows.push(SampleRow {
                index: i,
                kind: if s.gap == 0.0 {
                    "boundary".into()
                } else {
                    "interior".into()
                },
                t,
                x: s.base.x,
                p: s.base.p,
                u0: s.base.u,
                margin,
            });
        }
    }

    let verdicts = vec![
        ("strictness_precondition".to_string(), strict),
        ("interior_floor".to_string(), floor_margin >= -tol.max(cfg.rate_tol)),
    ];
    let passed = verdicts.iter().all(|(_, v)| *v);

    let w = &flowed[witness];
    let witnesses = vec![format!(
        "floor margin {:.6} from sample {} at x = {:?}, p = {:?}, gap0 = {:.6}",
        floor_margin, witness, w.base.x, w.base.p, w.gap
    )];
    let mut margins = vec![
        ("c_hat".to_string(), c_hat),
        ("floor_margin_min".to_string(), floor_margin),
    ];
    if blowups > 0 {
        margins.push(("blowups".to_string(), blowups as f64));
    }
    let parameters = common_parameters(model, phi, cfg, tol);

    Ok(VerificationReport {
        battery: "corollary-c".into(),
        passed,
        verdicts,
        margins,
        witnesses,
        parameters,
        sample_rows,
    })
}

// ---------------------------------------------------------------------------
// Flow-inclusion lemma
// ---------------------------------------------------------------------------

/// Unconditional inclusion of the flowed epigraph of `phi` in the epigraph
/// of the evolved function: `u(t) >= T_t phi (x(t)) - tol` for every
/// sample. Holds for any continuous `phi`, subsolution or not.
pub fn check_lemma_flow_inclusion(
    model: &HamiltonianModel,
    phi: &GridFunction,
    t: f64,
    cfg: &BatteryConfig,
) -> Result<VerificationReport, VerifyError> {
    if t <= 0.0 {
        return Err(VerifyError::Setup("lemma check needs t > 0".into()));
    }
    // the lemma default is deliberately tighter than the mesh-scaled
    // battery tolerance; both sides of the inequality are discretized
    let tol = cfg.tol_override.unwrap_or(5e-3);
    let evolved = semigroup::evolve_backward(model, phi, t, &cfg.evolution)?.final_grid;

    let bases = draw_epigraph_samples(phi, cfg, Some(4));
    let horizons = [t];
    let flowed = flow_epigraph_samples(model, phi, &bases, &horizons, cfg);

    let mut margin_min = f64::INFINITY;
    let mut witness = 0usize;
    let mut violations = 0usize;
    let mut blowups = 0usize;
    let mut sample_rows = Vec::new();
    for (i, s) in flowed.iter().enumerate() {
        if s.blew_up {
            blowups += 1;
            continue;
        }
        let end = s.horizon_states[0].1;
        let margin = end.u - evolved.interpolate(&end.x);
        if margin < margin_min {
            margin_min = margin;
            witness = i;
        }
        if margin < -tol {
            violations += 1;
        }
        sample_rows.push(SampleRow {
            index: i,
            kind: "inclusion".into(),
            t,
            x: s.base.x,
            p: s.base.p,
            u0: s.base.u,
            margin,
        });
    }

    let passed = violations == 0;
    let w = &flowed[witness];
    let witnesses = vec![format!(
        "inclusion margin {:.6} from sample {} at x = {:?}, p = {:?}, u0 = {:.6}",
        margin_min, witness, w.base.x, w.base.p, w.base.u
    )];
    let mut margins = vec![
        ("inclusion_margin_min".to_string(), margin_min),
        ("violations".to_string(), violations as f64),
    ];
    if blowups > 0 {
        margins.push(("blowups".to_string(), blowups as f64));
    }
    let mut parameters = common_parameters(model, phi, cfg, tol);
    parameters.push(("t".into(), format!("{t}")));

    Ok(VerificationReport {
        battery: "lemma-inclusion".into(),
        passed,
        verdicts: vec![("inclusion".to_string(), passed)],
        margins,
        witnesses,
        parameters,
        sample_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TorusSpec;
    use approx::assert_abs_diff_eq;

    const TAU: f64 = std::f64::consts::TAU;

    fn e1() -> HamiltonianModel {
        HamiltonianModel::dissipative_free_particle()
    }

    fn grid_const(n: usize, c: f64) -> GridFunction {
        GridFunction::constant(TorusSpec::line(n).unwrap(), c)
    }

    fn grid_sine(n: usize) -> GridFunction {
        GridFunction::from_fn(TorusSpec::line(n).unwrap(), |x| {
            -0.3 + 0.05 * (TAU * x[0]).sin()
        })
    }

    fn quick_cfg() -> BatteryConfig {
        BatteryConfig {
            horizons: vec![0.25, 1.0],
            samples: 120,
            evolution: EvolutionConfig {
                dt: 2e-3,
                ..Default::default()
            },
            flow_h: 2e-3,
            ..Default::default()
        }
    }

    #[test]
    fn subsolution_constants() {
        let model = e1();
        let r = check_subsolution(
            &model,
            &grid_const(64, -1.0),
            SubsolutionMode::AlmostEverywhere,
            None,
        )
        .unwrap();
        assert!(r.passed);
        assert_abs_diff_eq!(r.worst_margin, -1.0, epsilon = 1e-12);

        let r = check_subsolution(
            &model,
            &grid_const(64, 0.5),
            SubsolutionMode::AlmostEverywhere,
            None,
        )
        .unwrap();
        assert!(!r.passed);
        assert_abs_diff_eq!(r.worst_margin, 0.5, epsilon = 1e-12);
        assert_eq!(r.constrained_nodes, 64);
    }

    #[test]
    fn subsolution_sine_matches_analytic_margin() {
        // worst margin of -0.3 + 0.05 sin against H = u + p^2/2:
        // maximize 0.05 s + ((0.1 pi)^2 / 2)(1 - s^2) - 0.3 over s in [-1,1]
        let model = e1();
        let r = check_subsolution(
            &model,
            &grid_sine(256),
            SubsolutionMode::AlmostEverywhere,
            None,
        )
        .unwrap();
        assert!(r.passed);
        assert_abs_diff_eq!(r.worst_margin, -0.23798759717553994, epsilon = 2e-3);
    }

    #[test]
    fn subsolution_modes_agree_on_smooth_data() {
        let model = e1();
        let phi = grid_sine(256);
        let ae =
            check_subsolution(&model, &phi, SubsolutionMode::AlmostEverywhere, None).unwrap();
        let sd =
            check_subsolution(&model, &phi, SubsolutionMode::Superdifferential, None).unwrap();
        assert_eq!(ae.passed, sd.passed);
        assert!((ae.worst_margin - sd.worst_margin).abs() < 5e-3);
        // smooth data constrains roughly the concave half of the nodes
        assert!(sd.constrained_nodes > 64);
    }

    #[test]
    fn superdifferential_activates_at_concave_kink() {
        // phi = -|wrap(x - 0.5)| has a concave corner at 0.5 with
        // D+ = [-1, 1]; H = u + p^2/2 at the kink: max at |p| = 1 gives 0.5.
        let model = e1();
        let spec = TorusSpec::line(64).unwrap();
        let phi = GridFunction::from_fn(spec, |x| {
            -crate::geometry::wrap_displacement_1d(0.5, x[0], 1.0).abs()
        });
        let r =
            check_subsolution(&model, &phi, SubsolutionMode::Superdifferential, None).unwrap();
        let w = r.witness.unwrap();
        assert_eq!(w.node[0], 32);
        assert_abs_diff_eq!(r.worst_margin, 0.5, epsilon = 1e-12);
        assert!(!r.passed);
    }

    #[test]
    fn superdifferential_mode_refuses_nonconvex_models() {
        let model = HamiltonianModel::parse("u - 0.5*p1^2", 1.0).unwrap();
        let r = check_subsolution(
            &model,
            &grid_const(64, -1.0),
            SubsolutionMode::Superdifferential,
            None,
        );
        assert!(matches!(
            r,
            Err(VerifyError::NonConvexSuperdifferential { .. })
        ));
        // ae mode still runs
        let r = check_subsolution(
            &model,
            &grid_const(64, -1.0),
            SubsolutionMode::AlmostEverywhere,
            None,
        )
        .unwrap();
        assert!(r.passed);
    }

    #[test]
    fn theorem_a_unanimous_pass_on_subsolution() {
        let model = e1();
        let phi = grid_const(128, -1.0);
        let r = battery_theorem_a(&model, &phi, &quick_cfg()).unwrap();
        assert!(r.passed, "{}", r.render_text());
        assert!(r.verdicts.iter().all(|(_, v)| *v), "{}", r.render_text());
        // backward min gap is 1 - e^{-t} at the smallest horizon
        let expect = 1.0 - (-0.25f64).exp();
        assert_abs_diff_eq!(r.margin("backward_min_gap").unwrap(), expect, epsilon = 2e-3);
    }

    #[test]
    fn theorem_a_unanimous_fail_on_positive_constant() {
        let model = e1();
        let phi = grid_const(128, 0.5);
        let r = battery_theorem_a(&model, &phi, &quick_cfg()).unwrap();
        assert!(r.passed, "unanimity should hold: {}", r.render_text());
        assert!(r.verdicts.iter().all(|(_, v)| !*v), "{}", r.render_text());
        // near-boundary samples (x, p ~ 0, 0.5 + g) flow to
        // u(t) ~ (0.5 + g) e^{-t} < 0.5; the random-sample minimum sits
        // just above the exact boundary value 0.5 e^{-1} - 0.5
        let boundary = 0.5 * (-1.0f64).exp() - 0.5;
        let observed = r.margin("epigraph_min_gap").unwrap();
        assert!(observed < -0.15, "expected a clear escape, got {observed}");
        assert!(observed >= boundary - 5e-3, "deeper than the oracle: {observed}");
    }

    #[test]
    fn theorem_b_rate_equality_on_constants() {
        // phi = -1: c = 1 and T_t phi - phi = 1 - e^{-t} meets the floor
        // with equality; margins hug zero.
        let model = e1();
        let phi = grid_const(128, -1.0);
        let mut cfg = quick_cfg();
        cfg.horizons = vec![0.5, 1.0, 2.0];
        let r = battery_theorem_b(&model, &phi, &cfg).unwrap();
        assert!(r.passed, "{}", r.render_text());
        let c_hat = r.margin("c_hat").unwrap();
        assert_abs_diff_eq!(c_hat, 1.0, epsilon = 5e-3);
        assert!(r.margin("rate_margin_min").unwrap() >= -1e-3);
        assert!(r.margin("rate_margin_max").unwrap() <= 1e-2);
        // strict-rate equality on constants, asserted directly:
        // T_t phi - phi - |a| (1 - e^{-t}) = 0 within scheme error
        assert!(r.margin("rate_margin_min").unwrap().abs() <= 1e-3);
        let c_fwd = r.margin("c_hat_forward").unwrap();
        assert_abs_diff_eq!(c_fwd, -1.0, epsilon = 5e-3);
    }

    #[test]
    fn theorem_b_flags_non_strict_data() {
        // phi = 0 is a subsolution (H(x, 0, 0) = 0) but not strict.
        let model = e1();
        let phi = grid_const(128, 0.0);
        let r = battery_theorem_b(&model, &phi, &quick_cfg()).unwrap();
        assert!(!r.passed);
        assert!(r.margin("c_hat").unwrap().abs() <= 1e-3);
        assert!(!r.verdict("small_time_rate").unwrap());
    }

    #[test]
    fn corollary_c_floor_on_boundary_samples() {
        let model = e1();
        let phi = grid_const(128, -1.0);
        let r = battery_corollary_c(&model, &phi, &quick_cfg(), None).unwrap();
        assert!(r.passed, "{}", r.render_text());
        // boundary p = 0 samples meet the floor with equality
        assert!(r.margin("floor_margin_min").unwrap() >= -2e-3);
        assert!(r.margin("floor_margin_min").unwrap() <= 2e-2);
    }

    #[test]
    fn corollary_c_rejects_non_strict_data() {
        let model = e1();
        let phi = grid_const(128, 0.0);
        let r = battery_corollary_c(&model, &phi, &quick_cfg(), None).unwrap();
        assert!(!r.verdict("strictness_precondition").unwrap());
        assert!(!r.passed);
    }

    #[test]
    fn lemma_inclusion_holds_for_non_subsolution() {
        // phi = 0.5 fails theorem A but the inclusion is unconditional:
        // u(t) = 0.5 e^{-t} equals T_t phi exactly.
        let model = e1();
        let phi = grid_const(128, 0.5);
        let r = check_lemma_flow_inclusion(&model, &phi, 1.0, &quick_cfg()).unwrap();
        assert!(r.passed, "{}", r.render_text());
        assert_eq!(r.margin("violations").unwrap(), 0.0);
    }

    #[test]
    fn reports_are_deterministic_given_seed() {
        let model = e1();
        let phi = grid_sine(128);
        let mut cfg = quick_cfg();
        cfg.samples = 60;
        let a = battery_theorem_a(&model, &phi, &cfg).unwrap();
        let b = battery_theorem_a(&model, &phi, &cfg).unwrap();
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        a.write_margins_csv(&mut csv_a).unwrap();
        b.write_margins_csv(&mut csv_b).unwrap();
        assert_eq!(csv_a, csv_b);
        assert_eq!(a.render_text(), b.render_text());
    }

    #[test]
    fn rate_factor_is_continuous_at_zero() {
        assert_abs_diff_eq!(rate_factor(0.0, 2.0), 2.0);
        assert_abs_diff_eq!(rate_factor(1e-13, 2.0), 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(
            rate_factor(1.0, 2.0),
            1.0 - (-2.0f64).exp(),
            epsilon = 1e-15
        );
    }
}
