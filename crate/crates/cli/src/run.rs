//! Command dispatch. Every command returns its artifacts in memory; writing
//! them out is a separate, serialized step.

use std::fmt::Write as _;
use std::path::Path;

use jwec::rd::{blahut_arimoto, rd_curve};
use jwec::region::{
    attack_free_reduction, check_attack_free_reduction, eval_extended, eval_theorem4, inherent_constraint_check,
    optimize_region, ConditionReport, OptimizerConfig, RegionPoint, REDUCTION_PAIRS,
};
use jwec::sim::{
    atypical_input_probability, bin_multiplicity_audit, build_codebooks, compression_audits, default_delta,
    ensemble_equivocation, estimate_equivocation, run_trials_with, CodebookSet, EquivocationEstimate,
    EquivocationMode, KeyBits, RatePolicy, SimConfig, TrialEvent,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::config::{Command, ConfigError, RunConfig};

/// Added to the seed for the trial streams, so that code and trials never
/// share a stream.
pub const TRIAL_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Library(#[from] jwec::Error),
    #[error("{0}")]
    Io(String),
}

impl RunError {
    /// Stable, machine-readable class printed with every failure.
    pub fn class(&self) -> &'static str {
        match self {
            RunError::Config(_) => "validation",
            RunError::Library(e) => match e {
                jwec::Error::Validation(_) => "validation",
                jwec::Error::Infeasible(_) | jwec::Error::EmptyTypicalSet(_) => "infeasible",
                jwec::Error::CapExceeded(_) => "cap-exceeded",
                jwec::Error::Numerical(_) => "numerical",
                jwec::Error::NonConvergence(_) => "non-convergence",
            },
            RunError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            "validation" => 2,
            "infeasible" => 3,
            "cap-exceeded" => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    /// SHA-256 of the canonical config, hex.
    pub manifest_hash: String,
    /// `manifest.toml` first, then the command's artifacts.
    pub artifacts: Vec<Artifact>,
}

impl RunOutput {
    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), RunError> {
        std::fs::create_dir_all(dir).map_err(|e| RunError::Io(format!("cannot create {}: {e}", dir.display())))?;
        for a in &self.artifacts {
            let p = dir.join(&a.name);
            std::fs::write(&p, &a.bytes).map_err(|e| RunError::Io(format!("cannot write {}: {e}", p.display())))?;
        }
        Ok(())
    }
}

pub fn manifest_hash(cfg: &RunConfig) -> String {
    hex::encode(Sha256::digest(cfg.canonical_toml().as_bytes()))
}

/// Comment line that opens every artifact.
pub fn manifest_line(hash: &str) -> String {
    format!("# manifest: {hash}\n")
}

/// A CSV table with a fixed header.
struct Table {
    header: &'static [&'static str],
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &'static [&'static str]) -> Self {
        Table { header, rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn metric(&mut self, name: &str, value: impl Cell) {
        self.push(vec![name.cell(), value.cell()]);
    }

    fn into_artifact(self, name: &str, hash: &str) -> Artifact {
        let mut w = csv::Writer::from_writer(manifest_line(hash).into_bytes());
        w.write_record(self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        Artifact {
            name: name.cell(),
            bytes: w.into_inner().expect("in-memory flush"),
        }
    }
}

/// CSV cell text. Floats use the shortest round-trip form, switching to
/// exponent notation for very small or large magnitudes.
trait Cell {
    fn cell(&self) -> String;
}

impl Cell for f64 {
    fn cell(&self) -> String {
        format!("{self:?}")
    }
}

macro_rules! display_cell {
    ($($t:ty),*) => {$(
        impl Cell for $t {
            fn cell(&self) -> String {
                format!("{self}")
            }
        }
    )*};
}

display_cell!(usize, u64, bool, str, String);

impl<T: Cell> Cell for Option<T> {
    fn cell(&self) -> String {
        self.as_ref().map_or(String::new(), Cell::cell)
    }
}

impl<T: Cell + ?Sized> Cell for &T {
    fn cell(&self) -> String {
        (**self).cell()
    }
}

fn cell_of<T: Cell>(v: T) -> String {
    v.cell()
}

/// Validates again, runs the command, and returns the artifacts.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let hash = manifest_hash(cfg);
    log::info!("{} run, manifest {hash}", cfg.command);
    let mut artifacts = vec![Artifact {
        name: "manifest.toml".into(),
        bytes: format!("{}{}", manifest_line(&hash), cfg.canonical_toml()).into_bytes(),
    }];
    let tables = match cfg.command {
        Command::Rd => rd(cfg)?,
        Command::Sweep => sweep(cfg)?,
        Command::RegionEval => region_eval(cfg)?,
        Command::RegionOpt => region_opt(cfg)?,
        Command::Simulate => simulate(cfg)?,
        Command::Audit => audit(cfg)?,
    };
    for (name, t) in tables {
        artifacts.push(match t {
            Output::Csv(t) => t.into_artifact(name, &hash),
            Output::Text(s) => Artifact {
                name: name.cell(),
                bytes: format!("{}{s}", manifest_line(&hash)).into_bytes(),
            },
        });
    }
    Ok(RunOutput {
        manifest_hash: hash,
        artifacts,
    })
}

enum Output {
    Csv(Table),
    Text(String),
}

type Outputs = Vec<(&'static str, Output)>;

fn rd(cfg: &RunConfig) -> Result<Outputs, RunError> {
    let curve = rd_curve(&cfg.spec.p_u()?, &cfg.spec.d_prime()?, cfg.grid()?)?;
    let mut t = Table::new(&["d_prime", "rate_bits", "iterations"]);
    for p in curve {
        t.push(vec![p.d_prime.cell(), p.rate_bits.cell(), p.iterations.cell()]);
    }
    Ok(vec![("rd.csv", Output::Csv(t))])
}

fn sweep(cfg: &RunConfig) -> Result<Outputs, RunError> {
    let grid = cfg.grid()?;
    let curve = rd_curve(&cfg.spec.p_u()?, &cfg.spec.d_prime()?, grid)?;
    let system = match &cfg.aux {
        Some(a) => {
            let s = cfg.spec.system()?;
            let aux = a.channel(&cfg.spec, &s)?;
            Some((s, aux))
        }
        None => None,
    };
    let mut t = Table::new(&[
        "d_prime",
        "rate_bits",
        "iterations",
        "lambda_rate_bits",
        "embedding_capacity_bits",
        "slack",
        "feasible",
    ]);
    for p in curve {
        let lam_r = cfg.spec.lambda.map(|l| l * p.rate_bits);
        let c = match &system {
            Some((s, aux)) => {
                let point = RegionPoint {
                    d_prime: p.d_prime,
                    ..RegionPoint::default()
                };
                let r = eval_theorem4(s, aux, &point)?;
                r.condition("c").cloned()
            }
            None => None,
        };
        t.push(vec![
            p.d_prime.cell(),
            p.rate_bits.cell(),
            p.iterations.cell(),
            cell_of(lam_r),
            cell_of(c.as_ref().map(|c| c.bound)),
            cell_of(c.as_ref().map(|c| c.slack)),
            cell_of(c.as_ref().map(|c| c.satisfied)),
        ]);
    }
    Ok(vec![("sweep.csv", Output::Csv(t))])
}

const CONDITION_HEADER: &[&str] = &["report", "label", "statement", "attained", "bound", "slack", "satisfied"];

fn push_conditions(t: &mut Table, which: &str, r: &ConditionReport) {
    for c in &r.conditions {
        t.push(vec![
            which.cell(),
            c.label.clone(),
            c.statement.clone(),
            c.attained.cell(),
            c.bound.cell(),
            c.slack.cell(),
            c.satisfied.cell(),
        ]);
    }
}

fn push_quantities(t: &mut Table, which: &str, r: &ConditionReport) {
    for (k, v) in &r.quantities {
        t.push(vec![which.cell(), k.clone(), v.cell()]);
    }
}

fn region_eval(cfg: &RunConfig) -> Result<Outputs, RunError> {
    let spec = cfg.spec.system()?;
    let aux = cfg.aux()?.channel(&cfg.spec, &spec)?;
    let point = cfg.point()?;
    let keyed = eval_theorem4(&spec, &aux, &point)?;
    let mut conditions = Table::new(CONDITION_HEADER);
    let mut quantities = Table::new(&["report", "name", "value"]);
    push_conditions(&mut conditions, "keyed", &keyed);
    push_quantities(&mut quantities, "keyed", &keyed);

    let mut report = String::new();
    let verdict = if keyed.all_satisfied() { "inside" } else { "outside" };
    let _ = writeln!(report, "point: {point:?}");
    let _ = writeln!(report, "keyed conditions: point is {verdict} the region (min slack {:?})", keyed.min_slack());
    for w in &keyed.warnings {
        let _ = writeln!(report, "warning: {w}");
    }

    let mut reduction = Table::new(&[
        "keyed_label",
        "attack_free_label",
        "keyed_attained",
        "attack_free_attained",
        "keyed_bound",
        "attack_free_bound",
        "deviation",
    ]);
    match attack_free_reduction(&spec, &aux, &point)? {
        Some(id) => {
            push_conditions(&mut conditions, "attack_free", &id.attack_free);
            push_quantities(&mut quantities, "attack_free", &id.attack_free);
            for (a, b) in REDUCTION_PAIRS {
                let (x, y) = (id.keyed.condition(a), id.attack_free.condition(b));
                if let (Some(x), Some(y)) = (x, y) {
                    let dev = (x.attained - y.attained).abs().max((x.bound - y.bound).abs());
                    reduction.push(vec![
                        a.into(),
                        b.into(),
                        x.attained.cell(),
                        y.attained.cell(),
                        x.bound.cell(),
                        y.bound.cell(),
                        dev.cell(),
                    ]);
                }
            }
            let mark = if id.identical { "EQUIVALENT" } else { "DIFFERENT" };
            let _ = writeln!(
                report,
                "attack-free reduction: {mark} (keyed conditions match the attack-free lossy conditions, max deviation {:?})",
                id.max_deviation
            );
        }
        None => {
            let _ = writeln!(
                report,
                "attack-free reduction: not applicable (needs the identity attack, an independent key and V = Y ignoring the key)"
            );
        }
    }
    if spec.is_attack_free() {
        let chain = check_attack_free_reduction(&spec, &aux)?;
        let _ = writeln!(
            report,
            "attack-free chain: {} (slacks {:?})",
            if chain.holds { "holds" } else { "VIOLATED" },
            chain.slacks
        );
    }
    if cfg.extended {
        let test = blahut_arimoto(spec.p_u(), spec.d_prime(), point.d_prime)?;
        let ext = eval_extended(&spec, &aux, &test.test_channel, &point)?;
        push_conditions(&mut conditions, "extended", &ext);
        push_quantities(&mut quantities, "extended", &ext);
        let _ = writeln!(
            report,
            "extended conditions (rate-distortion test channel): {}",
            if ext.all_satisfied() { "satisfied" } else { "violated" }
        );
    }
    Ok(vec![
        ("conditions.csv", Output::Csv(conditions)),
        ("quantities.csv", Output::Csv(quantities)),
        ("reduction.csv", Output::Csv(reduction)),
        ("report.txt", Output::Text(report)),
    ])
}

fn region_opt(cfg: &RunConfig) -> Result<Outputs, RunError> {
    let spec = cfg.spec.system()?;
    let o = cfg.optimize()?;
    let oc = OptimizerConfig {
        restarts: o.restarts.unwrap_or(OptimizerConfig::default().restarts),
        v_card: o.v_card,
        seed: cfg.seed()?,
        ..OptimizerConfig::default()
    };
    let best = optimize_region(&spec, &o.fixed, o.objective.into(), &oc)?;
    let inherent = inherent_constraint_check(&spec, &best.aux, best.point.d_prime)?;
    let p = best.point;
    let mut summary = Table::new(&["metric", "value"]);
    for (k, v) in [
        ("d", p.d),
        ("d_prime", p.d_prime),
        ("r_c", p.r_c),
        ("r_c_prime", p.r_c_prime),
        ("h", p.h),
        ("h_prime", p.h_prime),
        ("objective_value", best.value),
    ] {
        summary.metric(k, v);
    }
    summary.metric("embedding_rate", cell_of(best.embedding_rate));
    summary.metric("v_card", best.aux.v_card());
    summary.metric("inherent_slack", inherent.slack);
    summary.metric("inherent_holds", inherent.holds);
    let mut conditions = Table::new(CONDITION_HEADER);
    push_conditions(&mut conditions, "keyed", &best.report);
    let mut restarts = Table::new(&["restart", "value", "best_so_far"]);
    for (i, (v, b)) in best.restart_values.iter().zip(&best.trace).enumerate() {
        restarts.push(vec![i.cell(), cell_of(*v), cell_of(*b)]);
    }
    let mut channel = Table::new(&["k", "x", "v", "y", "probability"]);
    let cards = best.aux.table().cards();
    for (i, w) in best.aux.table().values().iter().enumerate() {
        let y = i % cards[3];
        let v = (i / cards[3]) % cards[2];
        let x = (i / (cards[3] * cards[2])) % cards[1];
        let k = i / (cards[3] * cards[2] * cards[1]);
        channel.push(vec![k.cell(), x.cell(), v.cell(), y.cell(), w.cell()]);
    }
    Ok(vec![
        ("optimum.csv", Output::Csv(summary)),
        ("conditions.csv", Output::Csv(conditions)),
        ("restarts.csv", Output::Csv(restarts)),
        ("aux_channel.csv", Output::Csv(channel)),
    ])
}

fn sim_config(cfg: &RunConfig) -> Result<SimConfig, RunError> {
    let n = cfg.n()?;
    Ok(SimConfig::new(n, cfg.target_d_prime()?)
        .with_delta(cfg.delta.unwrap_or_else(|| default_delta(n)))
        .with_rates(cfg.rates.unwrap_or(RatePolicy::Schedule))
        .with_key_bits(cfg.key_bits.unwrap_or(KeyBits::Formula)))
}

fn code_metrics(t: &mut Table, cb: &CodebookSet) {
    let r = cb.rates();
    t.metric("n", cb.n());
    t.metric("message_len", cb.message_len());
    t.metric("delta", cb.delta());
    t.metric("index_bits", r.index_bits);
    t.metric("aux_bits", r.aux_bits);
    t.metric("stego_bits", r.stego_bits);
    t.metric("key_bits", r.key_bits);
    t.metric("representatives", cb.representatives().len());
}

fn simulate(cfg: &RunConfig) -> Result<Outputs, RunError> {
    let spec = cfg.spec.system()?;
    let aux = cfg.aux()?.channel(&cfg.spec, &spec)?;
    let sc = sim_config(cfg)?;
    let seed = cfg.seed()?;
    let cb = build_codebooks(&spec, &aux, &sc, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let trials = cfg.trials()?;
    let run = run_trials_with(&cb, trials, seed.wrapping_add(TRIAL_SEED_OFFSET))?;

    let mut per_trial = Table::new(&[
        "trial",
        "event",
        "message_correct",
        "distortion_xy",
        "distortion_uuhat",
        "certificate_ok",
        "sent_message",
        "decoded_message",
    ]);
    for (i, r) in run.results.iter().enumerate() {
        per_trial.push(vec![
            i.cell(),
            r.event.label().into(),
            r.message_correct.cell(),
            r.distortion_xy.cell(),
            cell_of(r.distortion_uuhat),
            r.certificate_ok.cell(),
            r.sent_message.cell(),
            cell_of(r.decoded_message),
        ]);
    }
    let a = &run.aggregate;
    let mut summary = Table::new(&["metric", "value"]);
    code_metrics(&mut summary, &cb);
    summary.metric("trials", a.trials);
    for e in TrialEvent::ALL {
        summary.metric(&format!("event_{}", e.label()), a.count(e));
    }
    summary.metric("message_errors", a.message_errors);
    summary.metric("message_error_rate", cell_of(a.message_error_rate()));
    summary.metric("mean_distortion_xy", cell_of(a.mean_distortion_xy()));
    summary.metric("mean_distortion_uuhat", cell_of(a.mean_distortion_uuhat()));
    summary.metric("certificate_violations", a.certificate_violations);
    summary.metric("e1_frequency", cell_of(a.atypical_input_frequency()));
    summary.metric("e1_probability", atypical_input_probability(&spec, sc.n, sc.delta)?);
    let mut out = vec![("trials.csv", Output::Csv(per_trial)), ("summary.csv", Output::Csv(summary))];
    if cfg.exact_equivocation {
        let est = match cfg.ensemble {
            Some(m) => {
                let seeds: Vec<u64> = (0..m as u64).map(|i| seed.wrapping_add(i)).collect();
                ensemble_equivocation(&spec, &aux, &sc, &seeds)?
            }
            None => estimate_equivocation(&cb, EquivocationMode::Exact)?,
        };
        out.push(("equivocation.csv", Output::Csv(equivocation_table(&est))));
    }
    Ok(out)
}

fn equivocation_table(e: &EquivocationEstimate) -> Table {
    let mut t = Table::new(&["metric", "value"]);
    t.metric("codebooks_averaged", e.codebooks_averaged);
    t.metric("message_len", e.message_len);
    t.metric("h_u_given_yz_per_symbol", e.h_u_given_yz);
    t.metric("h_uhat_given_yz_per_symbol", e.h_uhat_given_yz);
    t.metric("h_u_given_yz_total", e.total_h_u_given_yz());
    t.metric("h_uhat_given_yz_total", e.total_h_uhat_given_yz());
    t.metric("h_message_given_yz", e.h_message_given_yz);
    t.metric("h_message_given_yz_typical", cell_of(e.h_message_given_yz_typical));
    for (i, w) in e.warnings.iter().enumerate() {
        t.metric(&format!("warning_{i}"), w);
    }
    t
}

fn audit(cfg: &RunConfig) -> Result<Outputs, RunError> {
    let spec = cfg.spec.system()?;
    let aux = cfg.aux()?.channel(&cfg.spec, &spec)?;
    let sc = sim_config(cfg)?;
    let cb = build_codebooks(&spec, &aux, &sc, &mut ChaCha8Rng::seed_from_u64(cfg.seed()?))?;
    let bins = bin_multiplicity_audit(&cb, cfg.gamma()?)?;
    let comp = compression_audits(&cb)?;
    let inherent = inherent_constraint_check(&spec, &aux, sc.d_prime)?;
    let mut t = Table::new(&["check", "value", "bound", "pass"]);
    let mut row = |name: &str, v: String, b: String, pass: bool| t.push(vec![name.into(), v, b, pass.cell()]);
    row(
        "bins_within_message",
        bins.max_bins_within.cell(),
        bins.bound.cell(),
        bins.max_bins_within as f64 <= bins.bound,
    );
    row(
        "bins_across_messages",
        bins.max_bins_across.cell(),
        bins.across_bound.cell(),
        bins.max_bins_across as f64 <= bins.across_bound,
    );
    row(
        "composite_rate_private",
        comp.composite_rate.cell(),
        (comp.private_bound + comp.rounding_slack).cell(),
        comp.private_within_bound,
    );
    row(
        "distinct_stego_rate_public",
        comp.distinct_stego_rate.cell(),
        comp.public_bound.cell(),
        comp.public_within_bound,
    );
    row(
        "log2_stego_occurrences",
        comp.stego_occurrences.log2().cell(),
        comp.log2_occurrence_lower_bound.cell(),
        comp.occurrence_bound_holds,
    );
    row("inherent_constraint_slack", inherent.slack.cell(), "0".into(), inherent.holds);
    let mut codes = Table::new(&["metric", "value"]);
    code_metrics(&mut codes, &cb);
    codes.metric("composite_bits", comp.composite_bits);
    codes.metric("distinct_stego", comp.distinct_stego);
    codes.metric("delta_prime", comp.delta_prime);
    Ok(vec![("audit.csv", Output::Csv(t)), ("code.csv", Output::Csv(codes))])
}
