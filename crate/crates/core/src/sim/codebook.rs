//! Random code construction: the message quantizer, auxiliary and stegotext
//! codebooks for one representative key per typical type, and the random
//! binning of typical keys that supplies the encryption pad.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::Model;
use crate::error::{invalid, Error, Result};
use crate::info::Axis;
use crate::rd::{build_rd_codebook, RdCodebook};
use crate::region::{AuxChannel, SystemSpec, SLACK_TOL};
use crate::types::{
    canonical_permutation, check_delta, is_conditionally_typical, is_delta_typical, letter_counts,
    typical_set_size, typical_types, zip_symbols, ConditionalSampler, EpsilonSchedule, Sequence,
    ENUMERATION_CAP,
};
use crate::info::DistTable;

/// Upper limit on stored codeword symbols across all representatives.
pub const CODEBOOK_SYMBOL_CAP: usize = 1 << 26;

/// Largest total index length `L + log2 M_2 + log2 M_3` per representative.
const MAX_CODE_BITS: usize = 24;

const ROUNDING_TOL: f64 = 1e-9;

/// `ceil(x)` that ignores floating noise just above an integer, floored at 0.
pub(crate) fn ceil_bits(x: f64) -> usize {
    (x - ROUNDING_TOL).ceil().max(0.0) as usize
}

/// `J = ceil(n [H(K|Y) + δ])`.
pub fn key_bits_formula(n: usize, h_k_given_y: f64, delta: f64) -> usize {
    ceil_bits(n as f64 * (h_k_given_y + delta))
}

/// Default typicality slack: `0.25` up to `n = 16`, `0.1` beyond.
pub fn default_delta(n: usize) -> f64 {
    if n <= 16 {
        0.25
    } else {
        0.1
    }
}

/// How the auxiliary and stegotext codebook sizes are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatePolicy {
    /// `R_2 = I(X;V|K) + ε₁ + δ`, `R_3 = I(X;Y|V,K) + ε₂ + δ`.
    Schedule,
    /// The mutual informations plus a fixed per-symbol margin.
    Margin(f64),
    /// Explicit `log2 M_2` and `log2 M_3`.
    Bits { aux: usize, stego: usize },
}

/// Length `J` of the key-derived pad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyBits {
    /// `J = ceil(n [H(K|Y) + δ])`.
    Formula,
    Fixed(usize),
    /// `J = L`: a one-time pad over the whole message index.
    IndexLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Covertext blocklength.
    pub n: usize,
    pub delta: f64,
    /// Target message distortion for the quantizer.
    pub d_prime: f64,
    /// Per-symbol slack added to the quantizer's covering radius.
    pub eps_cov: f64,
    pub rates: RatePolicy,
    pub key_bits: KeyBits,
}

impl SimConfig {
    pub fn new(n: usize, d_prime: f64) -> Self {
        SimConfig {
            n,
            delta: default_delta(n),
            d_prime,
            eps_cov: 0.0,
            rates: RatePolicy::Schedule,
            key_bits: KeyBits::Formula,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_rates(mut self, rates: RatePolicy) -> Self {
        self.rates = rates;
        self
    }

    pub fn with_key_bits(mut self, key_bits: KeyBits) -> Self {
        self.key_bits = key_bits;
        self
    }

    /// Message blocklength `N = λ n`; `λ n` must be an integer.
    pub fn message_len(&self, lambda: f64) -> Result<usize> {
        let exact = lambda * self.n as f64;
        let rounded = exact.round();
        if (exact - rounded).abs() > 1e-9 || rounded < 1.0 {
            return invalid(format!(
                "lambda * n = {exact} must be a positive integer (lambda = {lambda}, n = {})",
                self.n
            ));
        }
        Ok(rounded as usize)
    }
}

/// Nominal rates of the random code and the integer sizes actually used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeRates {
    /// `I(V;Z|K) - ε₃ - δ`
    pub r1: f64,
    /// `I(X;V|K) + ε₁ + δ`
    pub r2: f64,
    /// `I(X;Y|V,K) + ε₂ + δ`
    pub r3: f64,
    /// `R_U(D')` of the message source.
    pub message_rate: f64,
    /// `L`, so `M_U = 2^L`.
    pub index_bits: usize,
    /// `log2 M_2`
    pub aux_bits: usize,
    /// `log2 M_3`
    pub stego_bits: usize,
    /// `J`
    pub key_bits: usize,
    /// Message blocklength `N`.
    pub message_len: usize,
    pub schedule: EpsilonSchedule,
    /// `R_1 - λ R_U(D') - R_2`; negative values mean the nominal bin
    /// arithmetic does not close at this `(n, δ)`.
    pub bin_slack: f64,
}

impl CodeRates {
    pub fn bins(&self) -> usize {
        1 << self.index_bits
    }

    pub fn aux_per_bin(&self) -> usize {
        1 << self.aux_bits
    }

    pub fn stego_per_aux(&self) -> usize {
        1 << self.stego_bits
    }

    /// `log2 N_c = L + log2 M_2 + log2 M_3`.
    pub fn log2_composite(&self) -> usize {
        self.index_bits + self.aux_bits + self.stego_bits
    }
}

/// Codebooks attached to one representative key `k̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentativeCodebook {
    pub key: Vec<usize>,
    /// `aux[m * M_2 + j]`
    pub aux: Vec<Vec<usize>>,
    /// `stego[(m * M_2 + j) * M_3 + j']`
    pub stego: Vec<Vec<usize>>,
}

/// Everything the encoder and decoder share.
#[derive(Debug, Clone)]
pub struct CodebookSet {
    pub(crate) model: Model,
    pub(crate) rd: RdCodebook,
    pub(crate) rates: CodeRates,
    pub(crate) n: usize,
    pub(crate) delta: f64,
    pub(crate) reps: Vec<RepresentativeCodebook>,
    pub(crate) rep_of_type: HashMap<Vec<usize>, usize>,
    /// Pad bits of each typical key, MSB-first in the low `J` bits.
    pub(crate) sw: HashMap<u128, u64>,
}

pub(crate) fn key_index(k: &[usize], kc: usize) -> u128 {
    k.iter().fold(0u128, |acc, &s| acc * kc as u128 + s as u128)
}

fn representative(counts: &[usize]) -> Vec<usize> {
    counts
        .iter()
        .enumerate()
        .flat_map(|(s, &c)| std::iter::repeat_n(s, c))
        .collect()
}

fn infeasible_blocklength(e: Error, what: &str, n: usize, delta: f64) -> Error {
    match e {
        Error::EmptyTypicalSet(msg) => Error::EmptyTypicalSet(format!(
            "infeasible blocklength: {what} is empty at n = {n}, delta = {delta} ({msg}); increase n or delta"
        )),
        other => other,
    }
}

/// Draws the full random code for `spec` and `aux`.
pub fn build_codebooks<R: Rng + ?Sized>(
    spec: &SystemSpec,
    aux: &AuxChannel,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<CodebookSet> {
    check_delta(cfg.delta)?;
    if cfg.n == 0 {
        return invalid("blocklength must be positive");
    }
    let model = Model::new(spec, aux)?;
    let n = cfg.n;
    let delta = cfg.delta;
    let big_n = cfg.message_len(spec.lambda())?;
    let rd = build_rd_codebook(spec.p_u(), spec.d_prime(), cfg.d_prime, big_n, delta, cfg.eps_cov)
        .map_err(|e| infeasible_blocklength(e, "the message typical set", n, delta))?;
    let rates = code_rates(&model, &rd, cfg, big_n)?;
    check_preconditions(&model, &rates)?;

    let types = typical_types(&model.p_k, n, delta);
    if types.is_empty() {
        return Err(Error::EmptyTypicalSet(format!(
            "infeasible blocklength: no typical key sequence at n = {n}, delta = {delta}; increase n or delta"
        )));
    }
    let per_rep = rates.bins() * rates.aux_per_bin() * (1 + rates.stego_per_aux()) * n;
    if per_rep.saturating_mul(types.len()) > CODEBOOK_SYMBOL_CAP {
        return Err(Error::CapExceeded(format!(
            "{} representatives with {} stored symbols each exceed the codebook cap",
            types.len(),
            per_rep
        )));
    }

    let seed: u64 = rng.random();
    let reps: Vec<RepresentativeCodebook> = types
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(i as u64);
            draw_representative(&model, &rates, representative(t), delta, &mut r)
        })
        .collect::<Result<_>>()
        .map_err(|e| infeasible_blocklength(e, "a conditional typical set of the code", n, delta))?;
    let rep_of_type = types.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();

    let sw = if rates.key_bits == 0 {
        HashMap::new()
    } else {
        draw_key_bins(&model, n, delta, rates.key_bits, rng)?
    };
    log::info!(
        "codebooks: n={n} N={big_n} delta={delta} L={} log2M2={} log2M3={} J={} representatives={}",
        rates.index_bits,
        rates.aux_bits,
        rates.stego_bits,
        rates.key_bits,
        reps.len()
    );
    Ok(CodebookSet {
        model,
        rd,
        rates,
        n,
        delta,
        reps,
        rep_of_type,
        sw,
    })
}

fn code_rates(model: &Model, rd: &RdCodebook, cfg: &SimConfig, big_n: usize) -> Result<CodeRates> {
    let n = cfg.n as f64;
    let delta = cfg.delta;
    let schedule = EpsilonSchedule::new(delta, model.h_v_k, model.h_v_kx, model.h_y_kv, model.h_y_kxv, model.h_v_zk);
    let q = &model.q;
    let r1 = q.i_vz_k - schedule.eps3 - delta;
    let r2 = q.i_vx_k + schedule.eps1 + delta;
    let r3 = model.i_xy_vk + schedule.eps2 + delta;
    let (aux_bits, stego_bits) = match cfg.rates {
        RatePolicy::Schedule => (ceil_bits(n * r2), ceil_bits(n * r3)),
        RatePolicy::Margin(m) => {
            if !(m >= 0.0) {
                return invalid("rate margin must be nonnegative");
            }
            (ceil_bits(n * (q.i_vx_k + m)), ceil_bits(n * (model.i_xy_vk + m)))
        }
        RatePolicy::Bits { aux, stego } => (aux, stego),
    };
    let index_bits = rd.index_bits;
    let key_bits = match cfg.key_bits {
        KeyBits::Formula => key_bits_formula(cfg.n, q.h_k_given_y, delta),
        KeyBits::Fixed(j) => j,
        KeyBits::IndexLength => index_bits,
    };
    if key_bits > index_bits {
        return invalid(format!(
            "pad length J = {key_bits} exceeds the message index length L = {index_bits}; \
             the key is richer than the message, which only the extended evaluation covers"
        ));
    }
    if index_bits + aux_bits + stego_bits > MAX_CODE_BITS {
        return Err(Error::CapExceeded(format!(
            "L + log2 M_2 + log2 M_3 = {} exceeds {MAX_CODE_BITS} bits per representative",
            index_bits + aux_bits + stego_bits
        )));
    }
    let message_rate = rd.rd_rate;
    let bin_slack = r1 - model.lambda * message_rate - r2;
    log::info!(
        "rates: R1={r1:.4} R2={r2:.4} R3={r3:.4} -> log2M2=ceil({:.3})={aux_bits} log2M3=ceil({:.3})={stego_bits}, L={index_bits} (N R={:.3}), J={key_bits}",
        n * r2,
        n * r3,
        big_n as f64 * message_rate
    );
    if bin_slack < 0.0 {
        log::warn!("nominal bin arithmetic does not close: R1 - lambda R - R2 = {bin_slack:.4}");
    }
    Ok(CodeRates {
        r1,
        r2,
        r3,
        message_rate,
        index_bits,
        aux_bits,
        stego_bits,
        key_bits,
        message_len: big_n,
        schedule,
        bin_slack,
    })
}

fn check_preconditions(model: &Model, rates: &CodeRates) -> Result<()> {
    let q = &model.q;
    let lam_r = model.lambda * rates.message_rate;
    let c_slack = q.i_vz_k - q.i_vx_k - lam_r;
    // A single-bin code has no binning to close, so only the weak form
    // is needed there.
    let needed = if rates.index_bits == 0 { -SLACK_TOL } else { SLACK_TOL };
    if c_slack <= needed {
        return Err(Error::Infeasible(format!(
            "lambda R_U(D') = {lam_r:.6} is not strictly below I(V;Z|K) - I(V;X|K) = {:.6}",
            q.i_vz_k - q.i_vx_k
        )));
    }
    let inherent = q.h_y_given_k - lam_r - q.i_x_yv_k;
    if inherent < -SLACK_TOL {
        return Err(Error::Infeasible(format!(
            "lambda R + I(X;Y,V|K) exceeds H(Y|K) by {:.6}",
            -inherent
        )));
    }
    Ok(())
}

fn draw_representative(
    model: &Model,
    rates: &CodeRates,
    key: Vec<usize>,
    delta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<RepresentativeCodebook> {
    let v_sampler = ConditionalSampler::new(&key, &model.v_given_k, delta)?;
    let total_aux = rates.bins() * rates.aux_per_bin();
    let m3 = rates.stego_per_aux();
    let mut aux = Vec::with_capacity(total_aux);
    let mut stego = Vec::with_capacity(total_aux * m3);
    for _ in 0..total_aux {
        let v = v_sampler.sample(rng);
        let vk = zip_symbols(&[(&v, model.vc), (&key, model.kc)]);
        let y_sampler = ConditionalSampler::new(&vk, &model.y_given_vk, delta)?;
        for _ in 0..m3 {
            stego.push(y_sampler.sample(rng));
        }
        aux.push(v);
    }
    Ok(RepresentativeCodebook { key, aux, stego })
}

fn draw_key_bins<R: Rng + ?Sized>(
    model: &Model,
    n: usize,
    delta: f64,
    bits: usize,
    rng: &mut R,
) -> Result<HashMap<u128, u64>> {
    if bits > 64 {
        return invalid(format!("pad length {bits} exceeds 64 bits"));
    }
    if (n as f64) * (model.kc as f64).log2() > 127.0 {
        return Err(Error::CapExceeded(format!("key sequences of length {n} cannot be indexed")));
    }
    let size = typical_set_size(&model.p_k, n, delta).unwrap_or(u128::MAX);
    if size > ENUMERATION_CAP as u128 {
        return Err(Error::CapExceeded(format!("{size} typical keys exceed the binning cap")));
    }
    let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
    let mut keys: Vec<u128> = Vec::with_capacity(size as usize);
    for t in typical_types(&model.p_k, n, delta) {
        for k in crate::types::multiset_permutations(&t) {
            keys.push(key_index(&k, model.kc));
        }
    }
    keys.sort_unstable();
    Ok(keys.into_iter().map(|k| (k, rng.random::<u64>() & mask)).collect())
}

/// `σ` with `k[i] = k̂[σ[i]]` for the representative `k̂` of `k`'s type.
pub(crate) struct KeyView<'a> {
    pub rep: &'a RepresentativeCodebook,
    pub sigma: Vec<usize>,
}

impl CodebookSet {
    pub fn rd_codebook(&self) -> &RdCodebook {
        &self.rd
    }

    pub fn rates(&self) -> &CodeRates {
        &self.rates
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn message_len(&self) -> usize {
        self.rates.message_len
    }

    pub fn representatives(&self) -> &[RepresentativeCodebook] {
        &self.reps
    }

    pub fn card_k(&self) -> usize {
        self.model.kc
    }

    pub fn card_y(&self) -> usize {
        self.model.yc
    }

    /// `E d(X,Y)` under the auxiliary channel the code was drawn for.
    pub fn expected_distortion(&self) -> f64 {
        self.model.q.ed
    }

    pub fn is_typical_key(&self, k: &[usize]) -> bool {
        k.len() == self.n
            && k.iter().all(|&s| s < self.model.kc)
            && self.rep_of_type.contains_key(&letter_counts(k, self.model.kc))
    }

    pub(crate) fn view(&self, k: &[usize]) -> Option<KeyView<'_>> {
        if k.len() != self.n || k.iter().any(|&s| s >= self.model.kc) {
            return None;
        }
        let idx = *self.rep_of_type.get(&letter_counts(k, self.model.kc))?;
        let rep = &self.reps[idx];
        let sigma = canonical_permutation(&rep.key, k, self.model.kc)?;
        Some(KeyView { rep, sigma })
    }

    pub(crate) fn pad(&self, k: &[usize]) -> Option<u64> {
        if self.rates.key_bits == 0 {
            return self.is_typical_key(k).then_some(0);
        }
        self.sw.get(&key_index(k, self.model.kc)).copied()
    }

    /// Re-checks every stored codeword against the public typicality tests:
    /// `k̂ ∈ T_K`, `v ∈ T_{V|K}(k̂)` and `y ∈ T_{Y|VK}(v, k̂)`.
    pub fn verify_membership(&self) -> Result<bool> {
        let m = &self.model;
        let k_axis = Axis::new("K", m.kc);
        let v_axis = Axis::new("V", m.vc);
        let vk_axis = Axis::new("VK", m.vc * m.kc);
        let p_k = DistTable::joint_with_tolerance(vec![k_axis.clone()], m.p_k.clone(), 1e-9)?;
        let v_given_k = DistTable::conditional_with_tolerance(
            vec![k_axis.clone(), v_axis.clone()],
            &["K"],
            m.v_given_k.probs.clone(),
            1e-9,
        )?;
        let y_given_vk = DistTable::conditional_with_tolerance(
            vec![vk_axis.clone(), Axis::new("Y", m.yc)],
            &["VK"],
            m.y_given_vk.probs.clone(),
            1e-9,
        )?;
        let m3 = self.rates.stego_per_aux();
        for rep in &self.reps {
            let k = Sequence::new(k_axis.clone(), rep.key.clone())?;
            if !is_delta_typical(&k, &p_k, self.delta)? {
                return Ok(false);
            }
            for (a, v) in rep.aux.iter().enumerate() {
                let vs = Sequence::new(v_axis.clone(), v.clone())?;
                if !is_conditionally_typical(&k, &vs, &v_given_k, self.delta)? {
                    return Ok(false);
                }
                let vk = Sequence::new(vk_axis.clone(), zip_symbols(&[(v, m.vc), (&rep.key, m.kc)]))?;
                for y in &rep.stego[a * m3..(a + 1) * m3] {
                    let ys = Sequence::new(Axis::new("Y", m.yc), y.clone())?;
                    if !is_conditionally_typical(&vk, &ys, &y_given_vk, self.delta)? {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }
}
