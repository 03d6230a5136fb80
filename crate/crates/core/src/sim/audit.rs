//! Measurements on a drawn code: equivocation, bin multiplicity of stego
//! vectors, compression bookkeeping, and the divergence bound behind the
//! double-exponential multiplicity estimate.

use std::collections::HashMap;
use std::hash::Hash;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::codebook::{build_codebooks, CodebookSet, SimConfig};
use super::coding::{attack_rows, embed_encode};
use super::trials::{draw_inputs, trial_rng};
use crate::error::{invalid, Error, Result};
use crate::rd::rd_encode;
use crate::region::{AuxChannel, SystemSpec};
use crate::types::{apply_permutation, canonical_permutation, multiset_permutations, symbols_typical, zip_symbols};

/// Largest `|U|^N |K×X|^n |supp Z|` the exact equivocation walks.
pub const EQUIVOCATION_CAP: u128 = 1 << 26;

/// Smallest trial count accepted by the plug-in estimator.
pub const PLUG_IN_MIN_TRIALS: usize = 10_000;

/// Largest number of permuted stego vectors the audits materialize.
pub const AUDIT_CAP: u128 = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquivocationMethod {
    ExactEnumeration,
    PlugIn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquivocationMode {
    Exact,
    PlugIn { trials: usize, seed: u64 },
}

/// Eavesdropper uncertainty for one fixed code (or an average over
/// several codes when `codebooks_averaged > 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivocationEstimate {
    pub method: EquivocationMethod,
    pub n: usize,
    pub message_len: usize,
    /// 0 for exact enumeration.
    pub trials: usize,
    pub codebooks_averaged: usize,
    /// `H(U^N | Y^n, Z^n) / N`
    pub h_u_given_yz: f64,
    /// `H(Û^N | Y^n, Z^n) / N`, with `Û^N` the codeword of the embedded index.
    pub h_uhat_given_yz: f64,
    /// `H(W | Y^n, Z^n)` in bits for the embedded index `W`.
    pub h_message_given_yz: f64,
    /// `H(W | Y^n, Z^n)` in bits, conditioned on typical inputs (the blocks
    /// where the pad is actually applied to the source's index). Exact mode only.
    pub h_message_given_yz_typical: Option<f64>,
    pub warnings: Vec<String>,
}

impl EquivocationEstimate {
    pub fn total_h_u_given_yz(&self) -> f64 {
        self.h_u_given_yz * self.message_len as f64
    }

    pub fn total_h_uhat_given_yz(&self) -> f64 {
        self.h_uhat_given_yz * self.message_len as f64
    }
}

fn entropy_of_map<K>(m: &HashMap<K, f64>) -> f64 {
    let total: f64 = m.values().sum();
    if total <= 0.0 {
        return 0.0;
    }
    m.values()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let q = p / total;
            -q * q.log2()
        })
        .sum()
}

fn add<K: Eq + Hash>(m: &mut HashMap<K, f64>, k: K, p: f64) {
    *m.entry(k).or_insert(0.0) += p;
}

fn conditional<K>(joint: &HashMap<K, f64>, cond: &HashMap<u128, f64>) -> f64 {
    (entropy_of_map(joint) - entropy_of_map(cond)).max(0.0)
}

fn all_sequences(card: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::with_capacity(len)];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..card).map(move |a| {
                    let mut t = s.clone();
                    t.push(a);
                    t
                })
            })
            .collect();
    }
    out
}

fn seq_index(s: &[usize], card: usize) -> u128 {
    s.iter().fold(0u128, |acc, &a| acc * card as u128 + a as u128)
}

/// `(index of z, P(z|y))` over the support of the attack.
fn forgery_support(y: &[usize], rows: &[f64], zc: usize) -> Vec<(u128, f64)> {
    let mut out = vec![(0u128, 1.0f64)];
    for &s in y {
        let row = &rows[s * zc..(s + 1) * zc];
        out = out
            .into_iter()
            .flat_map(|(i, p)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &q)| q > 0.0)
                    .map(move |(z, &q)| (i * zc as u128 + z as u128, p * q))
            })
            .collect();
    }
    out
}

/// Equivocation of the message given stegotext and forgery.
pub fn estimate_equivocation(codebooks: &CodebookSet, mode: EquivocationMode) -> Result<EquivocationEstimate> {
    match mode {
        EquivocationMode::Exact => exact_equivocation(codebooks),
        EquivocationMode::PlugIn { trials, seed } => plug_in_equivocation(codebooks, trials, seed),
    }
}

fn exact_equivocation(cb: &CodebookSet) -> Result<EquivocationEstimate> {
    let m = &cb.model;
    let n = cb.n;
    let big_n = cb.rates.message_len;
    let kxc = m.kc * m.xc;
    let z_support = (0..m.yc)
        .map(|y| m.attack[y * m.zc..(y + 1) * m.zc].iter().filter(|&&p| p > 0.0).count())
        .max()
        .unwrap_or(1) as u128;
    let work = (m.uc as u128)
        .checked_pow(big_n as u32)
        .and_then(|a| a.checked_mul((kxc as u128).checked_pow(n as u32)?))
        .and_then(|a| a.checked_mul(z_support.checked_pow(n as u32)?));
    if work.is_none_or(|w| w > EQUIVOCATION_CAP) {
        return Err(Error::CapExceeded(format!(
            "exact equivocation needs |U|^N |K x X|^n |supp Z|^n <= 2^26 (N = {big_n}, n = {n})"
        )));
    }
    if (n as f64) * ((m.yc * m.zc) as f64).log2() > 127.0 {
        return Err(Error::CapExceeded("stego/forgery pairs cannot be indexed".into()));
    }
    let cover = cb.rd.cover_size;
    let zn = (m.zc as u128).pow(n as u32);
    let sources: Vec<(Vec<usize>, f64, usize, bool)> = all_sequences(m.uc, big_n)
        .into_iter()
        .filter_map(|u| {
            let p: f64 = u.iter().map(|&a| m.p_u[a]).product();
            (p > 0.0).then(|| {
                let w = rd_encode(&u, &cb.rd, &m.d_prime).expect("length checked");
                let typ = symbols_typical(&u, &m.p_u, cb.delta);
                (u, p, w, typ)
            })
        })
        .collect();
    let mut p_yz: HashMap<u128, f64> = HashMap::new();
    let mut p_uyz: HashMap<(u128, u128), f64> = HashMap::new();
    let mut p_hat_yz: HashMap<(usize, u128), f64> = HashMap::new();
    let mut p_w_yz: HashMap<(usize, u128), f64> = HashMap::new();
    let mut t_yz: HashMap<u128, f64> = HashMap::new();
    let mut t_w_yz: HashMap<(usize, u128), f64> = HashMap::new();
    for kx in all_sequences(kxc, n) {
        let p_kx: f64 = kx.iter().map(|&a| m.p_kx[a]).product();
        if p_kx <= 0.0 {
            continue;
        }
        let k: Vec<usize> = kx.iter().map(|&s| s / m.xc).collect();
        let x: Vec<usize> = kx.iter().map(|&s| s % m.xc).collect();
        let kx_typ = symbols_typical(&zip_symbols(&[(&k, m.kc), (&x, m.xc)]), &m.p_kx, cb.delta);
        let mut by_message: HashMap<usize, (u128, Vec<(u128, f64)>)> = HashMap::new();
        for (u, p_u, w, u_typ) in &sources {
            let typical = *u_typ && kx_typ;
            let sent = if typical { *w } else { 0 };
            let (y_idx, zs) = match by_message.get(&sent) {
                Some(e) => e,
                None => {
                    let enc = embed_encode(u, &x, &k, cb)?;
                    debug_assert_eq!(enc.sent_message, sent);
                    let e = (seq_index(&enc.y, m.yc), forgery_support(&enc.y, &m.attack, m.zc));
                    by_message.entry(sent).or_insert(e)
                }
            };
            let u_idx = seq_index(u, m.uc);
            for &(z_idx, p_z) in zs {
                let yz = y_idx * zn + z_idx;
                let p = p_u * p_kx * p_z;
                add(&mut p_yz, yz, p);
                add(&mut p_uyz, (u_idx, yz), p);
                add(&mut p_hat_yz, (sent % cover, yz), p);
                add(&mut p_w_yz, (sent, yz), p);
                if typical {
                    add(&mut t_yz, yz, p);
                    add(&mut t_w_yz, (sent, yz), p);
                }
            }
        }
    }
    let typical_mass: f64 = t_yz.values().sum();
    Ok(EquivocationEstimate {
        method: EquivocationMethod::ExactEnumeration,
        n,
        message_len: big_n,
        trials: 0,
        codebooks_averaged: 1,
        h_u_given_yz: conditional(&p_uyz, &p_yz) / big_n as f64,
        h_uhat_given_yz: conditional(&p_hat_yz, &p_yz) / big_n as f64,
        h_message_given_yz: conditional(&p_w_yz, &p_yz),
        h_message_given_yz_typical: (typical_mass > 0.0).then(|| conditional(&t_w_yz, &t_yz)),
        warnings: vec!["conditional on one sampled code, not averaged over the ensemble".into()],
    })
}

fn plug_in_equivocation(cb: &CodebookSet, trials: usize, seed: u64) -> Result<EquivocationEstimate> {
    if trials < PLUG_IN_MIN_TRIALS {
        return invalid(format!("plug-in equivocation needs at least {PLUG_IN_MIN_TRIALS} trials, got {trials}"));
    }
    let m = &cb.model;
    let cover = cb.rd.cover_size;
    type Sample = (Vec<usize>, Vec<usize>, Vec<usize>, usize);
    let samples: Vec<Sample> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let (u, x, k) = draw_inputs(cb, &mut rng);
            let enc = embed_encode(&u, &x, &k, cb)?;
            let z = attack_rows(&enc.y, &m.attack, m.zc, &mut rng);
            Ok((u, enc.y, z, enc.sent_message))
        })
        .collect::<Result<_>>()?;
    let mut yz: HashMap<(&[usize], &[usize]), f64> = HashMap::new();
    let mut uyz: HashMap<(&[usize], &[usize], &[usize]), f64> = HashMap::new();
    let mut hat: HashMap<(usize, &[usize], &[usize]), f64> = HashMap::new();
    let mut wyz: HashMap<(usize, &[usize], &[usize]), f64> = HashMap::new();
    for (u, y, z, w) in &samples {
        add(&mut yz, (y.as_slice(), z.as_slice()), 1.0);
        add(&mut uyz, (u.as_slice(), y.as_slice(), z.as_slice()), 1.0);
        add(&mut hat, (w % cover, y.as_slice(), z.as_slice()), 1.0);
        add(&mut wyz, (*w, y.as_slice(), z.as_slice()), 1.0);
    }
    let h_yz = entropy_of_map(&yz);
    let big_n = cb.rates.message_len as f64;
    let warning = format!(
        "plug-in estimate is biased low: {trials} samples over {} observed (u, y, z) tuples, N = {}",
        uyz.len(),
        cb.rates.message_len
    );
    log::warn!("{warning}");
    Ok(EquivocationEstimate {
        method: EquivocationMethod::PlugIn,
        n: cb.n,
        message_len: cb.rates.message_len,
        trials,
        codebooks_averaged: 1,
        h_u_given_yz: (entropy_of_map(&uyz) - h_yz).max(0.0) / big_n,
        h_uhat_given_yz: (entropy_of_map(&hat) - h_yz).max(0.0) / big_n,
        h_message_given_yz: (entropy_of_map(&wyz) - h_yz).max(0.0),
        h_message_given_yz_typical: None,
        warnings: vec![warning],
    })
}

/// Exact equivocation averaged over codes drawn from each seed.
pub fn ensemble_equivocation(
    spec: &SystemSpec,
    aux: &AuxChannel,
    cfg: &SimConfig,
    seeds: &[u64],
) -> Result<EquivocationEstimate> {
    if seeds.is_empty() {
        return invalid("ensemble averaging needs at least one seed");
    }
    let estimates: Vec<EquivocationEstimate> = seeds
        .iter()
        .map(|&s| {
            let cb = build_codebooks(spec, aux, cfg, &mut ChaCha8Rng::seed_from_u64(s))?;
            exact_equivocation(&cb)
        })
        .collect::<Result<_>>()?;
    let c = estimates.len() as f64;
    let mean = |f: &dyn Fn(&EquivocationEstimate) -> f64| estimates.iter().map(f).sum::<f64>() / c;
    let typical: Option<Vec<f64>> = estimates.iter().map(|e| e.h_message_given_yz_typical).collect();
    let first = &estimates[0];
    Ok(EquivocationEstimate {
        method: EquivocationMethod::ExactEnumeration,
        n: first.n,
        message_len: first.message_len,
        trials: 0,
        codebooks_averaged: estimates.len(),
        h_u_given_yz: mean(&|e| e.h_u_given_yz),
        h_uhat_given_yz: mean(&|e| e.h_uhat_given_yz),
        h_message_given_yz: mean(&|e| e.h_message_given_yz),
        h_message_given_yz_typical: typical.map(|v| v.iter().sum::<f64>() / c),
        warnings: vec![format!("averaged over {} independently drawn codes", estimates.len())],
    })
}

/// Stego vectors of every typical key's (permuted) codebook with the bins
/// that contain them.
struct Expansion {
    bins_of: HashMap<Vec<usize>, Vec<usize>>,
    occurrences: u128,
    max_within: usize,
}

fn expand(cb: &CodebookSet) -> Result<Expansion> {
    let r = &cb.rates;
    let per_bin = r.aux_per_bin() * r.stego_per_aux();
    let mut keys_total: u128 = 0;
    for rep in &cb.reps {
        let counts = crate::types::letter_counts(&rep.key, cb.model.kc);
        keys_total += crate::types::multinomial(&counts).unwrap_or(u128::MAX);
    }
    let slots = keys_total.saturating_mul(rep_slots(cb) as u128);
    if slots > AUDIT_CAP {
        return Err(Error::CapExceeded(format!("{slots} permuted stego vectors exceed the audit cap")));
    }
    let mut bins_of: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    let mut max_within = if cb.reps.is_empty() { 0 } else { 1 };
    for rep in &cb.reps {
        let mut local: HashMap<&[usize], Vec<usize>> = HashMap::new();
        for (i, y) in rep.stego.iter().enumerate() {
            local.entry(y.as_slice()).or_default().push(i / per_bin);
        }
        for b in local.values_mut() {
            b.dedup();
            max_within = max_within.max(b.len());
        }
        let counts = crate::types::letter_counts(&rep.key, cb.model.kc);
        for k in multiset_permutations(&counts) {
            let sigma = canonical_permutation(&rep.key, &k, cb.model.kc).expect("same type");
            for (y, bins) in &local {
                bins_of.entry(apply_permutation(y, &sigma)).or_default().extend(bins);
            }
        }
    }
    for b in bins_of.values_mut() {
        b.sort_unstable();
        b.dedup();
    }
    Ok(Expansion {
        bins_of,
        occurrences: slots,
        max_within,
    })
}

fn rep_slots(cb: &CodebookSet) -> usize {
    cb.rates.bins() * cb.rates.aux_per_bin() * cb.rates.stego_per_aux()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinAudit {
    /// Largest number of bins of one representative's code sharing a stego vector.
    pub max_bins_within: usize,
    /// `2^{nγ}`
    pub bound: f64,
    /// Largest number of distinct bins holding a stego vector across all
    /// typical keys' permuted codes.
    pub max_bins_across: usize,
    /// `(n+1)^{|K||Y|} 2^{nγ}`
    pub across_bound: f64,
    pub pass: bool,
}

/// Counts, per stego vector, the bins that contain it.
pub fn bin_multiplicity_audit(codebooks: &CodebookSet, gamma: f64) -> Result<BinAudit> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return invalid("gamma must be positive");
    }
    let e = expand(codebooks)?;
    let n = codebooks.n as f64;
    let bound = 2f64.powf(n * gamma);
    let across_bound = (n + 1.0).powi((codebooks.model.kc * codebooks.model.yc) as i32) * bound;
    let max_bins_across = e.bins_of.values().map(Vec::len).max().unwrap_or(0);
    Ok(BinAudit {
        max_bins_within: e.max_within,
        bound,
        max_bins_across,
        across_bound,
        pass: e.max_within as f64 <= bound && max_bins_across as f64 <= across_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionAudit {
    /// `log2 N_c = L + log2 M_2 + log2 M_3`.
    pub composite_bits: usize,
    /// `log2 N_c / n`.
    pub composite_rate: f64,
    /// `L/n`, `log2 M_2 / n`, `log2 M_3 / n`.
    pub message_rate_achieved: f64,
    pub aux_rate: f64,
    pub stego_rate: f64,
    /// `λ R_U(D') + I(X;Y,V|K)`: the private compression bound.
    pub private_bound: f64,
    /// Excess of the rounded sizes over the single-letter terms.
    pub rounding_slack: f64,
    pub private_within_bound: bool,
    pub distinct_stego: usize,
    /// `log2 |distinct stego vectors over typical keys| / n`.
    pub distinct_stego_rate: f64,
    /// `λ R_U(D') + I(X;Y,V|K) + I(K;Y) + δ'`.
    pub public_bound: f64,
    /// `ε₁ + ε₂ + δ(H(K) + H(K|Y) + 4) + |K||Y| log2(n+1)/n`.
    pub delta_prime: f64,
    pub public_within_bound: bool,
    /// Stego slots across all typical keys' codes, repetitions included.
    pub stego_occurrences: f64,
    /// `log2` of the occurrence lower bound
    /// `|C| (n+1)^{-|K||Y|} 2^{n[(1-δ)H(K|Y) - δ]}`.
    pub log2_occurrence_lower_bound: f64,
    pub occurrence_bound_holds: bool,
}

/// Rate bookkeeping of the composite code and the count of distinct stego
/// vectors against the public and private compression bounds.
pub fn compression_audits(codebooks: &CodebookSet) -> Result<CompressionAudit> {
    let cb = codebooks;
    let m = &cb.model;
    let r = &cb.rates;
    let n = cb.n as f64;
    let lam_r = m.lambda * r.message_rate;
    let composite_bits = r.log2_composite();
    let composite_rate = composite_bits as f64 / n;
    let (ma, aa, sa) = (r.index_bits as f64 / n, r.aux_bits as f64 / n, r.stego_bits as f64 / n);
    let private_bound = lam_r + m.q.i_x_yv_k;
    let rounding_slack = (ma - lam_r) + (aa - m.q.i_vx_k) + (sa - m.i_xy_vk);
    let e = expand(cb)?;
    let distinct = e.bins_of.len();
    let distinct_stego_rate = (distinct.max(1) as f64).log2() / n;
    let delta = cb.delta;
    let delta_prime = r.schedule.eps1
        + r.schedule.eps2
        + delta * (m.q.h_k + m.q.h_k_given_y + 4.0)
        + (m.kc * m.yc) as f64 * (n + 1.0).log2() / n;
    let public_bound = lam_r + m.q.i_x_yv_k + m.q.i_ky + delta_prime;
    let log2_lb = (distinct.max(1) as f64).log2() - (m.kc * m.yc) as f64 * (n + 1.0).log2()
        + n * ((1.0 - delta) * m.q.h_k_given_y - delta);
    let occurrences = e.occurrences as f64;
    Ok(CompressionAudit {
        composite_bits,
        composite_rate,
        message_rate_achieved: ma,
        aux_rate: aa,
        stego_rate: sa,
        private_bound,
        rounding_slack,
        private_within_bound: composite_rate <= private_bound + rounding_slack + 1e-12,
        distinct_stego: distinct,
        distinct_stego_rate,
        public_bound,
        delta_prime,
        public_within_bound: distinct_stego_rate <= public_bound + 1e-12,
        stego_occurrences: occurrences,
        log2_occurrence_lower_bound: log2_lb,
        occurrence_bound_holds: occurrences.log2() >= log2_lb - 1e-9,
    })
}

/// `D(α‖β)` in bits for binary distributions.
pub fn binary_divergence(alpha: f64, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) {
        return invalid("binary divergence needs arguments in [0, 1]");
    }
    let first = if alpha == 0.0 {
        0.0
    } else if beta == 0.0 {
        return Ok(f64::INFINITY);
    } else {
        alpha * (alpha / beta).log2()
    };
    let second = if alpha == 1.0 {
        0.0
    } else if beta == 1.0 {
        return Ok(f64::INFINITY);
    } else {
        (1.0 - alpha) * ((-alpha).ln_1p() - (-beta).ln_1p()) / std::f64::consts::LN_2
    };
    Ok(first + second)
}

/// `[n(b-a) - log2 e] 2^{-na}`, a lower bound on `D(2^{-na}‖2^{-nb})`.
pub fn divergence_lower_bound(a: f64, b: f64, n: usize) -> Result<f64> {
    if !(a > 0.0 && a < b) || !b.is_finite() {
        return invalid(format!("need 0 < a < b, got a = {a}, b = {b}"));
    }
    if n == 0 {
        return invalid("n must be positive");
    }
    let n = n as f64;
    Ok((n * (b - a) - std::f64::consts::LOG2_E) * 2f64.powf(-n * a))
}

/// The exact divergence the bound is compared against.
pub fn divergence_exact(a: f64, b: f64, n: usize) -> Result<f64> {
    divergence_lower_bound(a, b, n)?;
    let n = n as f64;
    binary_divergence(2f64.powf(-n * a), 2f64.powf(-n * b))
}
