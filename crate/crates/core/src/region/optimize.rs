//! Multi-start search over auxiliary channels `P(V,Y|K,X)` for one extreme
//! coordinate of the region with the others held fixed.
//!
//! Each restart runs an augmented-Lagrangian loop whose inner solver is
//! projected gradient ascent on the product of `(k, x)` simplexes with
//! Armijo backtracking. Constraints are pushed to a small positive margin so
//! that iterates end up exactly feasible; the best exactly-feasible iterate
//! seen is what a restart returns.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{self, project_simplex, Affine, Engine};
use super::{
    infeasible, theorem4_report, AuxChannel, ConditionReport, JointQuantities, RegionPoint, SystemSpec,
};
use crate::error::{invalid, Result};
use crate::info::entropy;

/// Coordinates held fixed during a search; `None` leaves a coordinate free.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FixedCoordinates {
    pub d: Option<f64>,
    pub d_prime: Option<f64>,
    pub r_c: Option<f64>,
    pub r_c_prime: Option<f64>,
    pub h: Option<f64>,
    pub h_prime: Option<f64>,
}

/// The coordinate to extremize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    MaximizeH,
    MaximizeHPrime,
    MinimizeRc,
    MinimizeRcPrime,
    MinimizeD,
    /// Smallest message distortion, i.e. the largest embeddable `lambda R`.
    MinimizeDPrime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub restarts: usize,
    /// Auxiliary alphabet size; `None` uses `|K||X||Y| + 1`.
    pub v_card: Option<usize>,
    pub seed: u64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Objective change under which a restart stops.
    pub tol: f64,
    /// Constraints are driven to `g >= margin`.
    pub margin: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            restarts: 32,
            v_card: None,
            seed: 0,
            max_outer: 40,
            max_inner: 400,
            tol: 1e-7,
            margin: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionOptimum {
    pub aux: AuxChannel,
    pub point: RegionPoint,
    pub report: ConditionReport,
    /// Optimized coordinate.
    pub value: f64,
    /// Largest `lambda R` the chosen channel embeds under every fixed
    /// coordinate (only for [`Objective::MinimizeDPrime`]).
    pub embedding_rate: Option<f64>,
    /// Optimized coordinate found by each restart, `None` if it found no
    /// feasible channel.
    pub restart_values: Vec<Option<f64>>,
    /// Best value over restarts `0..=i`; monotone.
    pub trace: Vec<Option<f64>>,
}

enum Goal {
    Single(Affine),
    MinOf(Vec<Affine>),
}

impl Goal {
    fn value(&self, e: &Engine, s: &engine::Stats) -> (f64, usize) {
        match self {
            Goal::Single(a) => (e.value(s, a), 0),
            Goal::MinOf(v) => v
                .iter()
                .enumerate()
                .map(|(i, a)| (e.value(s, a), i))
                .fold((f64::INFINITY, 0), |acc, x| if x.0 < acc.0 { x } else { acc }),
        }
    }

    fn affine(&self, i: usize) -> &Affine {
        match self {
            Goal::Single(a) => a,
            Goal::MinOf(v) => &v[i],
        }
    }

    fn all(&self) -> Vec<&Affine> {
        match self {
            Goal::Single(a) => vec![a],
            Goal::MinOf(v) => v.iter().collect(),
        }
    }
}

struct Problem {
    engine: Engine,
    goal: Goal,
    constraints: Vec<Affine>,
    block: usize,
}

struct Restart {
    best: Option<(f64, Vec<f64>)>,
}

/// Searches for the auxiliary channel extremizing `objective` with the
/// coordinates in `fixed` held. Free coordinates other than the objective
/// are reported at their tight values, and the returned point always passes
/// [`super::eval_theorem4`].
pub fn optimize_region(
    spec: &SystemSpec,
    fixed: &FixedCoordinates,
    objective: Objective,
    cfg: &OptimizerConfig,
) -> Result<RegionOptimum> {
    validate(spec, fixed, objective, cfg)?;
    let lam = spec.lambda();
    let h_u = entropy(spec.p_u())?;
    let v_card = cfg.v_card.unwrap_or_else(|| spec.max_v_card());
    let rate = match fixed.d_prime {
        Some(dp) => Some(spec.message_rate(dp)?),
        None => None,
    };

    let hky = engine::h_k_given_y();
    let ixyv = engine::i_x_yv_given_k();
    let iky = engine::i_ky();
    let ed = Affine::expected_distortion();

    let mut constraints = Vec::new();
    let mut rate_bounds = Vec::new();
    let mut bound_rate = |b: RateBound, constraints: &mut Vec<Affine>| match rate {
        Some(r) => constraints.push(b.affine().plus(&Affine::constant(-lam * r), 1.0)),
        None => rate_bounds.push(b),
    };
    bound_rate(RateBound::Embedding, &mut constraints);
    if let (Some(d), false) = (fixed.d, objective == Objective::MinimizeD) {
        constraints.push(Affine::constant(d).plus(&ed, -1.0));
    }
    if let (Some(rc), false) = (fixed.r_c, objective == Objective::MinimizeRc) {
        bound_rate(RateBound::Public(rc), &mut constraints);
    }
    if let (Some(rcp), false) = (fixed.r_c_prime, objective == Objective::MinimizeRcPrime) {
        bound_rate(RateBound::Private(rcp), &mut constraints);
    }
    if let (Some(h), false) = (fixed.h, objective == Objective::MaximizeH) {
        bound_rate(RateBound::Secrecy { lam, h_u, h }, &mut constraints);
    }
    if let (Some(hp), false) = (fixed.h_prime, objective == Objective::MaximizeHPrime) {
        constraints.push(hky.clone().scaled(1.0 / lam).plus(&Affine::constant(-hp), 1.0));
    }

    let r = rate.unwrap_or(0.0);
    let goal = match objective {
        Objective::MaximizeH => Goal::Single(hky.clone().scaled(1.0 / lam).plus(&Affine::constant(h_u - r), 1.0)),
        Objective::MaximizeHPrime => Goal::Single(hky.clone().scaled(1.0 / lam)),
        Objective::MinimizeRc => Goal::Single(
            Affine::constant(-lam * r).plus(&ixyv, -1.0).plus(&iky, -1.0),
        ),
        Objective::MinimizeRcPrime => Goal::Single(Affine::constant(-lam * r).plus(&ixyv, -1.0)),
        Objective::MinimizeD => Goal::Single(ed.clone().scaled(-1.0)),
        Objective::MinimizeDPrime => Goal::MinOf(rate_bounds.iter().map(RateBound::affine).collect()),
    };

    let mut eng = build_engine(spec, v_card);
    for a in goal.all() {
        eng.register(a);
    }
    for c in &constraints {
        eng.register(c);
    }
    let problem = Problem {
        block: eng.block_len(),
        engine: eng,
        goal,
        constraints,
    };

    let runs: Vec<Restart> = (0..cfg.restarts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let w0 = random_w(&problem, &mut rng);
            run_restart(&problem, w0, cfg)
        })
        .collect();

    // goal values are in "maximize" orientation
    let restart_values: Vec<Option<f64>> = runs
        .iter()
        .map(|r| r.best.as_ref().map(|(v, _)| natural(objective, *v)))
        .collect();
    let mut trace = Vec::with_capacity(runs.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in runs.iter().enumerate() {
        if let Some((v, _)) = &r.best {
            if best.is_none_or(|(_, b)| *v > b) {
                best = Some((i, *v));
            }
        }
        trace.push(best.map(|(_, v)| natural(objective, v)));
    }
    let Some((idx, _)) = best else {
        return Err(infeasible(format!(
            "no restart found an auxiliary channel meeting the fixed coordinates {fixed:?}"
        )));
    };
    let w = runs[idx].best.as_ref().expect("chosen restart is feasible").1.clone();
    let aux = AuxChannel::from_flat(spec, v_card, w)?;
    let joint = super::compose_joint(spec, &aux)?;
    let q = JointQuantities::of(spec, &joint)?;

    let (d_prime, rate, embedding_rate) = match fixed.d_prime {
        Some(dp) => (dp, r, None),
        None => {
            let t = rate_bounds.iter().map(|b| b.exact(&q)).fold(f64::INFINITY, f64::min);
            let (dp, rr) = invert_rate(spec, t / lam)?;
            (dp, rr, Some(t))
        }
    };
    let mut point = RegionPoint {
        d: fixed.d.unwrap_or(q.ed),
        d_prime,
        r_c: fixed.r_c.unwrap_or(lam * rate + q.i_x_yv_k + q.i_ky),
        r_c_prime: fixed.r_c_prime.unwrap_or(lam * rate + q.i_x_yv_k),
        h: fixed.h.unwrap_or(q.h_k_given_y / lam + h_u - rate),
        h_prime: fixed.h_prime.unwrap_or(q.h_k_given_y / lam),
    };
    match objective {
        Objective::MaximizeH => point.h = q.h_k_given_y / lam + h_u - rate,
        Objective::MaximizeHPrime => point.h_prime = q.h_k_given_y / lam,
        Objective::MinimizeRc => point.r_c = lam * rate + q.i_x_yv_k + q.i_ky,
        Objective::MinimizeRcPrime => point.r_c_prime = lam * rate + q.i_x_yv_k,
        Objective::MinimizeD => point.d = q.ed,
        Objective::MinimizeDPrime => {}
    }
    let report = theorem4_report(spec, &q, &point, rate);
    if !report.all_satisfied() {
        return Err(infeasible(format!(
            "best channel fails certification with minimum slack {:e}",
            report.min_slack()
        )));
    }
    let value = match objective {
        Objective::MaximizeH => point.h,
        Objective::MaximizeHPrime => point.h_prime,
        Objective::MinimizeRc => point.r_c,
        Objective::MinimizeRcPrime => point.r_c_prime,
        Objective::MinimizeD => point.d,
        Objective::MinimizeDPrime => point.d_prime,
    };
    log::info!("region search: {objective:?} = {value:.9} (restart {idx} of {})", cfg.restarts);
    Ok(RegionOptimum {
        aux,
        point,
        report,
        value,
        embedding_rate,
        restart_values,
        trace,
    })
}

fn natural(objective: Objective, v: f64) -> f64 {
    match objective {
        Objective::MaximizeH | Objective::MaximizeHPrime | Objective::MinimizeDPrime => v,
        _ => -v,
    }
}

/// An upper bound on `lambda R` implied by one condition.
#[derive(Debug, Clone, Copy)]
enum RateBound {
    /// `I(V;Z|K) - I(V;X|K)`
    Embedding,
    /// `R_c - I(X;Y,V|K) - I(K;Y)`
    Public(f64),
    /// `R_c' - I(X;Y,V|K)`
    Private(f64),
    /// `H(K|Y) + lambda (H(U) - h)`
    Secrecy { lam: f64, h_u: f64, h: f64 },
}

impl RateBound {
    fn affine(&self) -> Affine {
        match *self {
            RateBound::Embedding => engine::i_vz_given_k().plus(&engine::i_vx_given_k(), -1.0),
            RateBound::Public(rc) => Affine::constant(rc)
                .plus(&engine::i_x_yv_given_k(), -1.0)
                .plus(&engine::i_ky(), -1.0),
            RateBound::Private(rcp) => Affine::constant(rcp).plus(&engine::i_x_yv_given_k(), -1.0),
            RateBound::Secrecy { lam, h_u, h } => engine::h_k_given_y().plus(&Affine::constant(lam * (h_u - h)), 1.0),
        }
    }

    fn exact(&self, q: &JointQuantities) -> f64 {
        match *self {
            RateBound::Embedding => q.i_vz_k - q.i_vx_k,
            RateBound::Public(rc) => rc - q.i_x_yv_k - q.i_ky,
            RateBound::Private(rcp) => rcp - q.i_x_yv_k,
            RateBound::Secrecy { lam, h_u, h } => q.h_k_given_y + lam * (h_u - h),
        }
    }
}

/// Smallest `D'` with `R_U(D') <= target`, and that rate.
fn invert_rate(spec: &SystemSpec, target: f64) -> Result<(f64, f64)> {
    if target < 0.0 {
        return Err(infeasible("no message rate is embeddable under the fixed coordinates"));
    }
    let r0 = spec.message_rate(0.0)?;
    if r0 <= target {
        return Ok((0.0, r0));
    }
    let d = spec.d_prime();
    let pu = spec.p_u().values();
    let mut hi = (0..d.cols().card)
        .map(|v| (0..d.rows().card).map(|u| pu[u] * d.cost(u, v)).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let mut r_hi = spec.message_rate(hi)?;
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let r = spec.message_rate(mid)?;
        if r <= target {
            hi = mid;
            r_hi = r;
        } else {
            lo = mid;
        }
    }
    Ok((hi, r_hi))
}

fn validate(spec: &SystemSpec, fixed: &FixedCoordinates, objective: Objective, cfg: &OptimizerConfig) -> Result<()> {
    let coords = [fixed.d, fixed.d_prime, fixed.r_c, fixed.r_c_prime, fixed.h, fixed.h_prime];
    if coords.iter().flatten().any(|c| !c.is_finite() || *c < 0.0) {
        return invalid("fixed coordinates must be finite and nonnegative");
    }
    let objective_fixed = match objective {
        Objective::MaximizeH => fixed.h.is_some(),
        Objective::MaximizeHPrime => fixed.h_prime.is_some(),
        Objective::MinimizeRc => fixed.r_c.is_some(),
        Objective::MinimizeRcPrime => fixed.r_c_prime.is_some(),
        Objective::MinimizeD => fixed.d.is_some(),
        Objective::MinimizeDPrime => fixed.d_prime.is_some(),
    };
    if objective_fixed {
        return invalid(format!("the objective coordinate of {objective:?} is also fixed"));
    }
    if objective != Objective::MinimizeDPrime && fixed.d_prime.is_none() {
        return invalid("D' must be fixed unless it is the objective");
    }
    if cfg.restarts == 0 {
        return invalid("at least one restart is required");
    }
    if let Some(v) = cfg.v_card {
        if v == 0 || v > spec.max_v_card() {
            return invalid(format!("auxiliary alphabet size must lie in 1..={}", spec.max_v_card()));
        }
    }
    if let Some(d) = fixed.d {
        let px = spec.p_kx().marginal(&["X"])?;
        let dm = spec.d();
        let d_min: f64 = (0..spec.card_x())
            .map(|x| px.values()[x] * (0..spec.card_y()).map(|y| dm.cost(x, y)).fold(f64::INFINITY, f64::min))
            .sum();
        if d < d_min - 1e-12 {
            return Err(infeasible(format!(
                "covertext distortion {d} is below the smallest achievable value {d_min}"
            )));
        }
    }
    Ok(())
}

fn build_engine(spec: &SystemSpec, v_card: usize) -> Engine {
    let (xc, yc) = (spec.card_x(), spec.card_y());
    let mut dist = Vec::with_capacity(xc * yc);
    for x in 0..xc {
        for y in 0..yc {
            dist.push(spec.d().cost(x, y));
        }
    }
    Engine::new(
        [spec.card_k(), xc, v_card, yc, spec.card_z()],
        spec.p_kx().values().to_vec(),
        spec.attack().values().to_vec(),
        dist,
    )
}

fn random_w(p: &Problem, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = p.engine.w_len();
    let mut w = Vec::with_capacity(n);
    for _ in 0..n / p.block {
        let draws: Vec<f64> = (0..p.block).map(|_| Exp1.sample(rng)).collect();
        let s: f64 = draws.iter().sum();
        w.extend(draws.iter().map(|d: &f64| d / s));
    }
    w
}

struct Lagrangian<'a> {
    p: &'a Problem,
    nu: Vec<f64>,
    rho: f64,
    margin: f64,
}

struct Eval {
    l: f64,
    goal: f64,
    goal_arg: usize,
    g: Vec<f64>,
}

impl Lagrangian<'_> {
    fn eval(&self, s: &engine::Stats) -> Eval {
        let e = &self.p.engine;
        let (goal, goal_arg) = self.p.goal.value(e, s);
        let g: Vec<f64> = self.p.constraints.iter().map(|c| e.value(s, c)).collect();
        let mut l = goal;
        for (j, &gj) in g.iter().enumerate() {
            let t = gj - self.margin;
            let m = self.nu[j] - self.rho * t;
            l -= if m > 0.0 {
                -self.nu[j] * t + 0.5 * self.rho * t * t
            } else {
                -self.nu[j] * self.nu[j] / (2.0 * self.rho)
            };
        }
        Eval { l, goal, goal_arg, g }
    }

    fn gradient(&self, s: &engine::Stats, ev: &Eval) -> Vec<f64> {
        let e = &self.p.engine;
        let mut grad = vec![0.0; e.w_len()];
        e.add_gradient(s, self.p.goal.affine(ev.goal_arg), 1.0, &mut grad);
        for (j, c) in self.p.constraints.iter().enumerate() {
            let m = self.nu[j] - self.rho * (ev.g[j] - self.margin);
            if m > 0.0 {
                e.add_gradient(s, c, m, &mut grad);
            }
        }
        grad
    }
}

fn project(w: &mut [f64], block: usize) {
    for chunk in w.chunks_mut(block) {
        project_simplex(chunk);
    }
}

fn run_restart(p: &Problem, mut w: Vec<f64>, cfg: &OptimizerConfig) -> Restart {
    let mut lag = Lagrangian {
        p,
        nu: vec![0.0; p.constraints.len()],
        rho: 10.0,
        margin: cfg.margin,
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let consider = |ev: &Eval, w: &[f64], best: &mut Option<(f64, Vec<f64>)>| {
        if ev.g.iter().all(|&g| g >= 0.0) && best.as_ref().is_none_or(|(b, _)| ev.goal > *b) {
            *best = Some((ev.goal, w.to_vec()));
        }
    };
    let mut prev_goal = f64::NEG_INFINITY;
    let mut step = 1.0;
    for _outer in 0..cfg.max_outer {
        let mut s = p.engine.stats(&w);
        let mut ev = lag.eval(&s);
        consider(&ev, &w, &mut best);
        for _inner in 0..cfg.max_inner {
            let grad = lag.gradient(&s, &ev);
            let mut accepted = false;
            while step > 1e-14 {
                let mut cand: Vec<f64> = w.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
                project(&mut cand, p.block);
                let dir: f64 = cand.iter().zip(&w).zip(&grad).map(|((c, a), g)| (c - a) * g).sum();
                let cs = p.engine.stats(&cand);
                let cev = lag.eval(&cs);
                if cev.l >= ev.l + 1e-4 * dir {
                    let gain = cev.l - ev.l;
                    w = cand;
                    s = cs;
                    ev = cev;
                    consider(&ev, &w, &mut best);
                    accepted = gain > 1e-12;
                    step = (step * 2.0).min(1e4);
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                step = step.max(1e-3);
                break;
            }
        }
        let mut worst = 0.0f64;
        for (j, &g) in ev.g.iter().enumerate() {
            let t = g - lag.margin;
            lag.nu[j] = (lag.nu[j] - lag.rho * t).max(0.0);
            worst = worst.max(-t);
        }
        if worst < 1e-9 && (ev.goal - prev_goal).abs() < cfg.tol {
            break;
        }
        prev_goal = ev.goal;
        if worst > 1e-6 {
            lag.rho = (lag.rho * 2.0).min(1e5);
        }
    }
    Restart { best }
}
