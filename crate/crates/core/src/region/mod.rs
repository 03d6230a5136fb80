//! Single-letter achievable-region conditions for joint watermarking,
//! encryption and compression, and a search over auxiliary channels.
//!
//! Axis names are fixed across the crate: `U` (message), `Uhat`
//! (reproduction), `K` (key), `X` (covertext), `V` (auxiliary), `Y`
//! (stegotext) and `Z` (forgery).

pub(crate) mod engine;
mod optimize;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::info::{
    conditional_entropy, conditional_mutual_information, entropy, expected_distortion, mutual_information, Axis,
    DistTable, DistortionMeasure,
};
use crate::rd::blahut_arimoto;

pub use optimize::{optimize_region, FixedCoordinates, Objective, OptimizerConfig, RegionOptimum};

/// Tolerance on the sign of a condition's slack.
pub const SLACK_TOL: f64 = 1e-9;

/// Tolerance under which the key is treated as independent of the covertext.
const INDEPENDENCE_TOL: f64 = 1e-12;

/// The problem instance: sources, key, attack, embedding ratio and
/// distortion measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    p_u: DistTable,
    /// Joint of `(K, X)` in that axis order.
    p_kx: DistTable,
    /// `P(Z|Y)` in axis order `(Y, Z)`.
    attack: DistTable,
    lambda: f64,
    d: DistortionMeasure,
    d_prime: DistortionMeasure,
}

impl SystemSpec {
    pub fn new(
        p_u: DistTable,
        p_xk: DistTable,
        p_z_given_y: DistTable,
        lambda: f64,
        d: DistortionMeasure,
        d_prime: DistortionMeasure,
    ) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return invalid(format!("lambda must be positive and finite, got {lambda}"));
        }
        if p_u.is_conditional() || p_u.axis_names() != ["U"] {
            return invalid("message source must be a joint PMF over the single axis `U`");
        }
        if p_xk.is_conditional() || p_xk.axes().len() != 2 || !p_xk.has_axis("X") || !p_xk.has_axis("K") {
            return invalid("covertext/key source must be a joint PMF over axes `X` and `K`");
        }
        let p_kx = p_xk.reorder(&["K", "X"])?;
        if p_z_given_y.axes().len() != 2
            || p_z_given_y.given_axes() != ["Y"]
            || !p_z_given_y.has_axis("Z")
        {
            return invalid("attack channel must be a kernel over `Z` given `Y`");
        }
        let attack = p_z_given_y.reorder(&["Y", "Z"])?;
        if d.rows().name != "X" || d.cols().name != "Y" {
            return invalid("covertext distortion must have rows `X` and columns `Y`");
        }
        if d.rows().card != p_kx.card("X")? || d.cols().card != attack.card("Y")? {
            return invalid("covertext distortion alphabets disagree with the source and attack alphabets");
        }
        if d_prime.rows().name != "U" || d_prime.cols().name != "Uhat" {
            return invalid("message distortion must have rows `U` and columns `Uhat`");
        }
        if d_prime.rows().card != p_u.card("U")? {
            return invalid("message distortion rows disagree with the message alphabet");
        }
        Ok(SystemSpec {
            p_u,
            p_kx,
            attack,
            lambda,
            d,
            d_prime,
        })
    }

    pub fn p_u(&self) -> &DistTable {
        &self.p_u
    }

    /// Joint of `(K, X)`.
    pub fn p_kx(&self) -> &DistTable {
        &self.p_kx
    }

    pub fn attack(&self) -> &DistTable {
        &self.attack
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn d(&self) -> &DistortionMeasure {
        &self.d
    }

    pub fn d_prime(&self) -> &DistortionMeasure {
        &self.d_prime
    }

    pub fn card_k(&self) -> usize {
        self.p_kx.cards()[0]
    }

    pub fn card_x(&self) -> usize {
        self.p_kx.cards()[1]
    }

    pub fn card_y(&self) -> usize {
        self.attack.cards()[0]
    }

    pub fn card_z(&self) -> usize {
        self.attack.cards()[1]
    }

    /// Carathéodory bound `|K||X||Y| + 1` on the auxiliary alphabet.
    pub fn max_v_card(&self) -> usize {
        self.card_k() * self.card_x() * self.card_y() + 1
    }

    /// `R_U(D')` of the message source.
    pub fn message_rate(&self, d_prime: f64) -> Result<f64> {
        Ok(blahut_arimoto(&self.p_u, &self.d_prime, d_prime)?.rate_bits)
    }

    /// True when `Z = Y` letter by letter.
    pub fn is_attack_free(&self) -> bool {
        let (yc, zc) = (self.card_y(), self.card_z());
        yc == zc
            && (0..yc).all(|y| (0..zc).all(|z| self.attack.get(&[y, z]) == if y == z { 1.0 } else { 0.0 }))
    }

    /// `I(X;K)` of the covertext/key source.
    pub fn key_covertext_information(&self) -> Result<f64> {
        mutual_information(&self.p_kx, &["K"], &["X"])
    }

    /// The same instance with another attack channel.
    pub fn with_attack(&self, p_z_given_y: DistTable) -> Result<Self> {
        SystemSpec::new(
            self.p_u.clone(),
            self.p_kx.clone(),
            p_z_given_y,
            self.lambda,
            self.d.clone(),
            self.d_prime.clone(),
        )
    }
}

/// `P(Z|Y)` for `Z = Y`.
pub fn identity_attack(card_y: usize) -> Result<DistTable> {
    DistTable::from_fn(vec![Axis::new("Y", card_y), Axis::new("Z", card_y)], &["Y"], |i| {
        if i[0] == i[1] {
            1.0
        } else {
            0.0
        }
    })
}

/// `P(X, K) = P(X) P(K)`.
pub fn independent_key(p_x: &[f64], p_k: &[f64]) -> Result<DistTable> {
    DistTable::from_fn(
        vec![Axis::new("X", p_x.len()), Axis::new("K", p_k.len())],
        &[],
        |i| p_x[i[0]] * p_k[i[1]],
    )
}

/// A candidate `P(V, Y | K, X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxChannel {
    /// Axes `(K, X, V, Y)`, conditioned on `(K, X)`.
    table: DistTable,
}

impl AuxChannel {
    /// Validates the table against `spec`; axes may come in any order.
    pub fn new(spec: &SystemSpec, table: DistTable) -> Result<Self> {
        let mut given = table.given_axes();
        given.sort_unstable();
        if table.axes().len() != 4 || given != ["K", "X"] || !table.has_axis("V") || !table.has_axis("Y") {
            return invalid("auxiliary channel must be a kernel over `(V, Y)` given `(K, X)`");
        }
        let table = table.reorder(&["K", "X", "V", "Y"])?;
        let cards = table.cards();
        if cards[0] != spec.card_k() || cards[1] != spec.card_x() || cards[3] != spec.card_y() {
            return invalid("auxiliary channel alphabets disagree with the system");
        }
        if cards[2] > spec.max_v_card() {
            return invalid(format!(
                "auxiliary alphabet of size {} exceeds the bound {}",
                cards[2],
                spec.max_v_card()
            ));
        }
        Ok(AuxChannel { table })
    }

    /// Builds from a flat `W[((k*|X|+x)*|V|+v)*|Y|+y]`.
    pub fn from_flat(spec: &SystemSpec, v_card: usize, w: Vec<f64>) -> Result<Self> {
        let axes = vec![
            Axis::new("K", spec.card_k()),
            Axis::new("X", spec.card_x()),
            Axis::new("V", v_card),
            Axis::new("Y", spec.card_y()),
        ];
        Self::new(spec, DistTable::conditional_with_tolerance(axes, &["K", "X"], w, 1e-9)?)
    }

    /// `V = Y` with `Y ~ P(Y|X)` regardless of the key.
    pub fn v_equals_y(spec: &SystemSpec, p_y_given_x: &DistTable) -> Result<Self> {
        let ch = stego_channel(spec, p_y_given_x)?;
        let (kc, xc, yc) = (spec.card_k(), spec.card_x(), spec.card_y());
        let mut w = Vec::with_capacity(kc * xc * yc * yc);
        for _k in 0..kc {
            for x in 0..xc {
                for v in 0..yc {
                    for y in 0..yc {
                        w.push(if v == y { ch[x * yc + y] } else { 0.0 });
                    }
                }
            }
        }
        Self::from_flat(spec, yc, w)
    }

    /// `Y ~ P(Y|K,X)` and `V` a constant.
    pub fn constant_v(spec: &SystemSpec, p_y_given_kx: &dyn Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let (kc, xc, yc) = (spec.card_k(), spec.card_x(), spec.card_y());
        let mut w = Vec::with_capacity(kc * xc * yc);
        for k in 0..kc {
            for x in 0..xc {
                for y in 0..yc {
                    w.push(p_y_given_kx(k, x, y));
                }
            }
        }
        Self::from_flat(spec, 1, w)
    }

    /// Each `(k, x)` slice drawn from a flat Dirichlet.
    pub fn random<R: Rng + ?Sized>(spec: &SystemSpec, v_card: usize, rng: &mut R) -> Result<Self> {
        let block = v_card * spec.card_y();
        let mut w = Vec::with_capacity(spec.card_k() * spec.card_x() * block);
        for _ in 0..spec.card_k() * spec.card_x() {
            let draws: Vec<f64> = (0..block).map(|_| Exp1.sample(rng)).collect();
            let s: f64 = draws.iter().sum();
            w.extend(draws.iter().map(|d: &f64| d / s));
        }
        Self::from_flat(spec, v_card, w)
    }

    pub fn table(&self) -> &DistTable {
        &self.table
    }

    pub fn v_card(&self) -> usize {
        self.table.cards()[2]
    }

    pub(crate) fn flat(&self) -> &[f64] {
        self.table.values()
    }
}

fn stego_channel(spec: &SystemSpec, p_y_given_x: &DistTable) -> Result<Vec<f64>> {
    if p_y_given_x.given_axes() != ["X"] || p_y_given_x.axes().len() != 2 || !p_y_given_x.has_axis("Y") {
        return invalid("stegotext channel must be a kernel over `Y` given `X`");
    }
    let t = p_y_given_x.reorder(&["X", "Y"])?;
    if t.cards() != [spec.card_x(), spec.card_y()] {
        return invalid("stegotext channel alphabets disagree with the system");
    }
    Ok(t.values().to_vec())
}

/// `P(k, x, v, y, z) = P(k, x) W(v, y | k, x) A(z | y)` with axes `(K, X, V, Y, Z)`.
pub fn compose_joint(spec: &SystemSpec, aux: &AuxChannel) -> Result<DistTable> {
    let (kc, xc, vc, yc, zc) = (spec.card_k(), spec.card_x(), aux.v_card(), spec.card_y(), spec.card_z());
    let pkx = spec.p_kx.values();
    let w = aux.flat();
    let a = spec.attack.values();
    let mut values = Vec::with_capacity(kc * xc * vc * yc * zc);
    for k in 0..kc {
        for x in 0..xc {
            for v in 0..vc {
                for y in 0..yc {
                    let base = pkx[k * xc + x] * w[((k * xc + x) * vc + v) * yc + y];
                    for z in 0..zc {
                        values.push(base * a[y * zc + z]);
                    }
                }
            }
        }
    }
    DistTable::joint_with_tolerance(
        vec![
            Axis::new("K", kc),
            Axis::new("X", xc),
            Axis::new("V", vc),
            Axis::new("Y", yc),
            Axis::new("Z", zc),
        ],
        values,
        1e-9,
    )
}

/// `(D, D', R_c, R_c', h, h')`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegionPoint {
    pub d: f64,
    pub d_prime: f64,
    pub r_c: f64,
    pub r_c_prime: f64,
    pub h: f64,
    pub h_prime: f64,
}

impl RegionPoint {
    fn validate(&self) -> Result<()> {
        let coords = [self.d, self.d_prime, self.r_c, self.r_c_prime, self.h, self.h_prime];
        if coords.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return invalid(format!("region point coordinates must be finite and nonnegative: {self:?}"));
        }
        Ok(())
    }
}

/// One inequality, normalized to `attained <= bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub label: String,
    pub statement: String,
    pub attained: f64,
    pub bound: f64,
    /// `bound - attained`.
    pub slack: f64,
    pub satisfied: bool,
}

impl Condition {
    fn new(label: &str, statement: &str, attained: f64, bound: f64) -> Self {
        let slack = bound - attained;
        Condition {
            label: label.to_string(),
            statement: statement.to_string(),
            attained,
            bound,
            slack,
            satisfied: slack >= -SLACK_TOL,
        }
    }
}

/// Which family of conditions a report evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportKind {
    /// Lossless message, no attack, key independent of the covertext.
    Lossless,
    /// Lossy message, no attack, key independent of the covertext.
    Lossy,
    /// Key side information at both ends, general attack.
    KeyedAttack,
    /// Keyed attack with an arbitrary message test channel.
    Extended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub kind: ReportKind,
    pub conditions: Vec<Condition>,
    pub quantities: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl ConditionReport {
    pub fn condition(&self, label: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.label == label)
    }

    pub fn quantity(&self, name: &str) -> Option<f64> {
        self.quantities.get(name).copied()
    }

    pub fn all_satisfied(&self) -> bool {
        self.conditions.iter().all(|c| c.satisfied)
    }

    pub fn min_slack(&self) -> f64 {
        self.conditions.iter().map(|c| c.slack).fold(f64::INFINITY, f64::min)
    }
}

/// Information quantities of a composed `(K, X, V, Y, Z)` joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct JointQuantities {
    pub h_k: f64,
    pub h_k_given_y: f64,
    pub h_y_given_k: f64,
    pub i_vz_k: f64,
    pub i_vx_k: f64,
    pub i_x_yv_k: f64,
    pub i_ky: f64,
    pub ed: f64,
}

impl JointQuantities {
    pub fn of(spec: &SystemSpec, joint: &DistTable) -> Result<Self> {
        Ok(JointQuantities {
            h_k: entropy(&joint.marginal(&["K"])?)?,
            h_k_given_y: conditional_entropy(joint, &["K"], &["Y"])?,
            h_y_given_k: conditional_entropy(joint, &["Y"], &["K"])?,
            i_vz_k: conditional_mutual_information(joint, &["V"], &["Z"], &["K"])?,
            i_vx_k: conditional_mutual_information(joint, &["V"], &["X"], &["K"])?,
            i_x_yv_k: conditional_mutual_information(joint, &["X"], &["Y", "V"], &["K"])?,
            i_ky: mutual_information(joint, &["K"], &["Y"])?,
            ed: expected_distortion(joint, &spec.d)?,
        })
    }

    fn insert_into(&self, q: &mut BTreeMap<String, f64>) {
        q.insert("H(K)".into(), self.h_k);
        q.insert("H(K|Y)".into(), self.h_k_given_y);
        q.insert("H(Y|K)".into(), self.h_y_given_k);
        q.insert("I(V;Z|K)".into(), self.i_vz_k);
        q.insert("I(V;X|K)".into(), self.i_vx_k);
        q.insert("I(X;Y,V|K)".into(), self.i_x_yv_k);
        q.insert("I(K;Y)".into(), self.i_ky);
        q.insert("Ed(X,Y)".into(), self.ed);
    }
}

fn key_rate_warning(h_k: f64, lambda: f64, rate: f64) -> Vec<String> {
    if h_k > lambda * rate + SLACK_TOL {
        let w = format!(
            "H(K) = {h_k:.6} exceeds lambda*R = {:.6}; the extended evaluation covers this regime",
            lambda * rate
        );
        log::warn!("{w}");
        vec![w]
    } else {
        Vec::new()
    }
}

/// Conditions (a)-(f) for the keyed system with attack.
pub fn eval_theorem4(spec: &SystemSpec, aux: &AuxChannel, point: &RegionPoint) -> Result<ConditionReport> {
    point.validate()?;
    let rate = spec.message_rate(point.d_prime)?;
    let joint = compose_joint(spec, aux)?;
    Ok(theorem4_report(spec, &JointQuantities::of(spec, &joint)?, point, rate))
}

pub(crate) fn theorem4_report(
    spec: &SystemSpec,
    q: &JointQuantities,
    point: &RegionPoint,
    rate: f64,
) -> ConditionReport {
    let lam = spec.lambda;
    let h_u = entropy(&spec.p_u).unwrap_or(0.0);
    let conditions = vec![
        Condition::new("a", "h <= H(K|Y)/lambda + H(U) - R_U(D')", point.h, q.h_k_given_y / lam + h_u - rate),
        Condition::new("b", "h' <= H(K|Y)/lambda", point.h_prime, q.h_k_given_y / lam),
        Condition::new("c", "lambda R_U(D') <= I(V;Z|K) - I(V;X|K)", lam * rate, q.i_vz_k - q.i_vx_k),
        Condition::new(
            "d",
            "lambda R_U(D') + I(X;Y,V|K) + I(K;Y) <= R_c",
            lam * rate + q.i_x_yv_k + q.i_ky,
            point.r_c,
        ),
        Condition::new("e", "lambda R_U(D') + I(X;Y,V|K) <= R_c'", lam * rate + q.i_x_yv_k, point.r_c_prime),
        Condition::new("f", "Ed(X,Y) <= D", q.ed, point.d),
    ];
    let mut quantities = BTreeMap::new();
    q.insert_into(&mut quantities);
    quantities.insert("H(U)".into(), h_u);
    quantities.insert("R_U(D')".into(), rate);
    ConditionReport {
        kind: ReportKind::KeyedAttack,
        conditions,
        quantities,
        warnings: key_rate_warning(q.h_k, lam, rate),
    }
}

struct AttackFreeQuantities {
    h_k: f64,
    h_u: f64,
    h_y_given_x: f64,
    i_xy: f64,
    ed: f64,
}

fn attack_free_quantities(spec: &SystemSpec, p_y_given_x: &DistTable) -> Result<AttackFreeQuantities> {
    let ixk = spec.key_covertext_information()?;
    if ixk > INDEPENDENCE_TOL {
        return invalid(format!("the key must be independent of the covertext (I(X;K) = {ixk:e})"));
    }
    let ch = stego_channel(spec, p_y_given_x)?;
    let (xc, yc) = (spec.card_x(), spec.card_y());
    let p_x = spec.p_kx.marginal(&["X"])?;
    let pxy = DistTable::joint_with_tolerance(
        vec![Axis::new("X", xc), Axis::new("Y", yc)],
        (0..xc * yc).map(|i| p_x.values()[i / yc] * ch[i]).collect(),
        1e-9,
    )?;
    Ok(AttackFreeQuantities {
        h_k: entropy(&spec.p_kx.marginal(&["K"])?)?,
        h_u: entropy(&spec.p_u)?,
        h_y_given_x: conditional_entropy(&pxy, &["Y"], &["X"])?,
        i_xy: mutual_information(&pxy, &["X"], &["Y"])?,
        ed: expected_distortion(&pxy, &spec.d)?,
    })
}

/// Lossless-message conditions without attack; uses `d`, `r_c` and `h` of
/// the point.
pub fn eval_theorem1(spec: &SystemSpec, p_y_given_x: &DistTable, point: &RegionPoint) -> Result<ConditionReport> {
    point.validate()?;
    let q = attack_free_quantities(spec, p_y_given_x)?;
    let lam = spec.lambda;
    let conditions = vec![
        Condition::new("a", "h <= H(K)/lambda", point.h, q.h_k / lam),
        Condition::new("b_i", "lambda H(U) <= H(Y|X)", lam * q.h_u, q.h_y_given_x),
        Condition::new("b_ii", "lambda H(U) + I(X;Y) <= R_c", lam * q.h_u + q.i_xy, point.r_c),
        Condition::new("b_iii", "Ed(X,Y) <= D", q.ed, point.d),
    ];
    let quantities = BTreeMap::from([
        ("H(K)".to_string(), q.h_k),
        ("H(U)".to_string(), q.h_u),
        ("H(Y|X)".to_string(), q.h_y_given_x),
        ("I(X;Y)".to_string(), q.i_xy),
        ("Ed(X,Y)".to_string(), q.ed),
    ]);
    Ok(ConditionReport {
        kind: ReportKind::Lossless,
        conditions,
        quantities,
        warnings: key_rate_warning(q.h_k, lam, q.h_u),
    })
}

/// Lossy-message conditions without attack; uses `d`, `d_prime`, `r_c`, `h`
/// and `h_prime` of the point.
pub fn eval_theorem2(spec: &SystemSpec, p_y_given_x: &DistTable, point: &RegionPoint) -> Result<ConditionReport> {
    point.validate()?;
    let q = attack_free_quantities(spec, p_y_given_x)?;
    let rate = spec.message_rate(point.d_prime)?;
    let lam = spec.lambda;
    let conditions = vec![
        Condition::new("a", "h <= H(K)/lambda + H(U) - R_U(D')", point.h, q.h_k / lam + q.h_u - rate),
        Condition::new("b", "h' <= H(K)/lambda", point.h_prime, q.h_k / lam),
        Condition::new("c_i", "lambda R_U(D') <= H(Y|X)", lam * rate, q.h_y_given_x),
        Condition::new("c_ii", "lambda R_U(D') + I(X;Y) <= R_c", lam * rate + q.i_xy, point.r_c),
        Condition::new("c_iii", "Ed(X,Y) <= D", q.ed, point.d),
    ];
    let quantities = BTreeMap::from([
        ("H(K)".to_string(), q.h_k),
        ("H(U)".to_string(), q.h_u),
        ("R_U(D')".to_string(), rate),
        ("H(Y|X)".to_string(), q.h_y_given_x),
        ("I(X;Y)".to_string(), q.i_xy),
        ("Ed(X,Y)".to_string(), q.ed),
    ]);
    Ok(ConditionReport {
        kind: ReportKind::Lossy,
        conditions,
        quantities,
        warnings: key_rate_warning(q.h_k, lam, rate),
    })
}

/// Conditions (a)-(g) with an explicit message test channel `P(Uhat|U)`
/// in place of the rate-distortion minimizer.
pub fn eval_extended(
    spec: &SystemSpec,
    aux: &AuxChannel,
    p_uhat_given_u: &DistTable,
    point: &RegionPoint,
) -> Result<ConditionReport> {
    point.validate()?;
    if p_uhat_given_u.given_axes() != ["U"] || p_uhat_given_u.axes().len() != 2 || !p_uhat_given_u.has_axis("Uhat")
    {
        return invalid("test channel must be a kernel over `Uhat` given `U`");
    }
    let t = p_uhat_given_u.reorder(&["U", "Uhat"])?;
    if t.cards() != [spec.d_prime.rows().card, spec.d_prime.cols().card] {
        return invalid("test channel alphabets disagree with the message distortion");
    }
    let pu = spec.p_u.values();
    let uc = t.cards()[1];
    let p_uuh = DistTable::joint_with_tolerance(
        t.axes().to_vec(),
        t.values().iter().enumerate().map(|(i, w)| pu[i / uc] * w).collect(),
        1e-9,
    )?;
    let i_uuh = mutual_information(&p_uuh, &["U"], &["Uhat"])?;
    let h_uh = entropy(&p_uuh.marginal(&["Uhat"])?)?;
    let h_u = entropy(&spec.p_u)?;
    let ed_prime = expected_distortion(&p_uuh, &spec.d_prime)?;
    let joint = compose_joint(spec, aux)?;
    let q = JointQuantities::of(spec, &joint)?;
    let lam = spec.lambda;
    let key = q.h_k_given_y / lam;
    let conditions = vec![
        Condition::new("a", "h <= H(U) - [I(U;Uhat) - H(K|Y)/lambda]_+", point.h, h_u - (i_uuh - key).max(0.0)),
        Condition::new("b", "h' <= min{H(Uhat), H(K|Y)/lambda}", point.h_prime, h_uh.min(key)),
        Condition::new("c", "lambda I(U;Uhat) <= I(V;Z|K) - I(V;X|K)", lam * i_uuh, q.i_vz_k - q.i_vx_k),
        Condition::new(
            "d",
            "lambda I(U;Uhat) + I(X;Y,V|K) + I(K;Y) <= R_c",
            lam * i_uuh + q.i_x_yv_k + q.i_ky,
            point.r_c,
        ),
        Condition::new("e", "lambda I(U;Uhat) + I(X;Y,V|K) <= R_c'", lam * i_uuh + q.i_x_yv_k, point.r_c_prime),
        Condition::new("f", "Ed(X,Y) <= D", q.ed, point.d),
        Condition::new("g", "Ed'(U,Uhat) <= D'", ed_prime, point.d_prime),
    ];
    let mut quantities = BTreeMap::new();
    q.insert_into(&mut quantities);
    quantities.insert("H(U)".into(), h_u);
    quantities.insert("I(U;Uhat)".into(), i_uuh);
    quantities.insert("H(Uhat)".into(), h_uh);
    quantities.insert("Ed'(U,Uhat)".into(), ed_prime);
    Ok(ConditionReport {
        kind: ReportKind::Extended,
        conditions,
        quantities,
        warnings: Vec::new(),
    })
}

/// The attack-free chain
/// `I(V;Y|K) - I(V;X|K) <= I(V;X,Y|K) - I(V;X|K) = I(V;Y|X,K) <= H(Y|X,K) <= H(Y|X)`
/// evaluated on one auxiliary channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    /// The five chain terms, left to right.
    pub links: [f64; 5],
    /// `links[i+1] - links[i]`; all nonnegative when the chain holds.
    pub slacks: [f64; 4],
    pub holds: bool,
}

pub fn check_attack_free_reduction(spec: &SystemSpec, aux: &AuxChannel) -> Result<ReductionReport> {
    if !spec.is_attack_free() {
        return invalid("the attack-free chain needs the identity attack channel");
    }
    let j = compose_joint(spec, aux)?;
    let i_vy_k = conditional_mutual_information(&j, &["V"], &["Y"], &["K"])?;
    let i_vx_k = conditional_mutual_information(&j, &["V"], &["X"], &["K"])?;
    let i_vxy_k = conditional_mutual_information(&j, &["V"], &["X", "Y"], &["K"])?;
    let i_vy_xk = conditional_mutual_information(&j, &["V"], &["Y"], &["X", "K"])?;
    let h_y_xk = conditional_entropy(&j, &["Y"], &["X", "K"])?;
    let h_y_x = conditional_entropy(&j, &["Y"], &["X"])?;
    let links = [i_vy_k - i_vx_k, i_vxy_k - i_vx_k, i_vy_xk, h_y_xk, h_y_x];
    let slacks = [links[1] - links[0], links[2] - links[1], links[3] - links[2], links[4] - links[3]];
    Ok(ReductionReport {
        links,
        slacks,
        holds: slacks.iter().all(|&s| s >= -SLACK_TOL),
    })
}

/// `P(Y|X)` of an auxiliary channel with `V = Y` that ignores the key, or
/// `None` when the channel has a different shape.
pub fn key_blind_stego_channel(spec: &SystemSpec, aux: &AuxChannel) -> Result<Option<DistTable>> {
    let (kc, xc, yc) = (spec.card_k(), spec.card_x(), spec.card_y());
    if aux.v_card() != yc {
        return Ok(None);
    }
    let w = aux.flat();
    let at = |k: usize, x: usize, v: usize, y: usize| w[((k * xc + x) * yc + v) * yc + y];
    let mut ch = vec![0.0; xc * yc];
    for x in 0..xc {
        for y in 0..yc {
            ch[x * yc + y] = at(0, x, y, y);
            for k in 0..kc {
                for v in 0..yc {
                    let expect = if v == y { ch[x * yc + y] } else { 0.0 };
                    if (at(k, x, v, y) - expect).abs() > 1e-12 {
                        return Ok(None);
                    }
                }
            }
        }
    }
    let axes = vec![Axis::new("X", xc), Axis::new("Y", yc)];
    Ok(Some(DistTable::conditional_with_tolerance(axes, &["X"], ch, 1e-9)?))
}

/// Keyed conditions paired with their attack-free counterparts.
pub const REDUCTION_PAIRS: [(&str, &str); 5] = [("a", "a"), ("b", "b"), ("c", "c_i"), ("d", "c_ii"), ("f", "c_iii")];

/// Largest difference, over paired conditions, between the keyed report and
/// the attack-free lossy report at the same point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionIdentity {
    pub keyed: ConditionReport,
    pub attack_free: ConditionReport,
    pub max_deviation: f64,
    pub identical: bool,
}

/// Compares the two reports when the system is attack-free with an
/// independent key and the channel is key-blind with `V = Y`; `None`
/// otherwise.
pub fn attack_free_reduction(
    spec: &SystemSpec,
    aux: &AuxChannel,
    point: &RegionPoint,
) -> Result<Option<ReductionIdentity>> {
    if !spec.is_attack_free() || spec.key_covertext_information()? > INDEPENDENCE_TOL {
        return Ok(None);
    }
    let Some(ch) = key_blind_stego_channel(spec, aux)? else {
        return Ok(None);
    };
    let keyed = eval_theorem4(spec, aux, point)?;
    let attack_free = eval_theorem2(spec, &ch, point)?;
    let mut max_deviation = 0.0f64;
    for (a, b) in REDUCTION_PAIRS {
        let (x, y) = match (keyed.condition(a), attack_free.condition(b)) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(Error::Numerical(format!("missing condition {a} or {b}"))),
        };
        max_deviation = max_deviation.max((x.attained - y.attained).abs()).max((x.bound - y.bound).abs());
    }
    Ok(Some(ReductionIdentity {
        keyed,
        attack_free,
        max_deviation,
        identical: max_deviation <= SLACK_TOL,
    }))
}

/// `lambda R_U(D') + I(X;Y,V|K) <= H(Y|K)`, which every achievable point
/// satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InherentCheck {
    pub holds: bool,
    /// `H(Y|K) - lambda R_U(D') - I(X;Y,V|K)`.
    pub slack: f64,
}

pub fn inherent_constraint_check(spec: &SystemSpec, aux: &AuxChannel, d_prime: f64) -> Result<InherentCheck> {
    let rate = spec.message_rate(d_prime)?;
    let j = compose_joint(spec, aux)?;
    let q = JointQuantities::of(spec, &j)?;
    Ok(inherent_from(spec, &q, rate))
}

pub(crate) fn inherent_from(spec: &SystemSpec, q: &JointQuantities, rate: f64) -> InherentCheck {
    let slack = q.h_y_given_k - spec.lambda * rate - q.i_x_yv_k;
    InherentCheck {
        holds: slack >= -SLACK_TOL,
        slack,
    }
}

pub(crate) fn infeasible(msg: impl Into<String>) -> Error {
    Error::Infeasible(msg.into())
}
