//! Monte-Carlo trials of the full chain and the exact probability that the
//! encoder sees atypical inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::codebook::{build_codebooks, CodebookSet, SimConfig};
use super::coding::{attack_rows, decode, embed_encode, kvz_typical, matching_bins, DecodeOutcome, EncodeStatus};
use crate::error::{invalid, Result};
use crate::region::{AuxChannel, SystemSpec};
use crate::types::{check_delta, symbols_typical, typical_types, zip_symbols};

/// Exactly one per trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialEvent {
    None,
    /// Atypical `(k, x)` or `u`; the all-zero message was embedded.
    E1,
    E2,
    E3,
    /// The embedded auxiliary codeword is not typical with the forgery.
    E4,
    /// Another bin also holds a codeword typical with the forgery.
    E5,
    /// Atypical inputs and the all-zeros stego sequence was sent.
    EncodeFallback,
}

impl TrialEvent {
    pub const ALL: [TrialEvent; 7] = [
        TrialEvent::None,
        TrialEvent::E1,
        TrialEvent::E2,
        TrialEvent::E3,
        TrialEvent::E4,
        TrialEvent::E5,
        TrialEvent::EncodeFallback,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TrialEvent::None => "none",
            TrialEvent::E1 => "e1",
            TrialEvent::E2 => "e2",
            TrialEvent::E3 => "e3",
            TrialEvent::E4 => "e4",
            TrialEvent::E5 => "e5",
            TrialEvent::EncodeFallback => "encode_fallback",
        }
    }

    fn slot(self) -> usize {
        TrialEvent::ALL.iter().position(|&e| e == self).expect("listed")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub event: TrialEvent,
    pub message_correct: bool,
    /// `d(x, y) / n`.
    pub distortion_xy: f64,
    /// `d'(u, û) / N` when the decoder produced a message.
    pub distortion_uuhat: Option<f64>,
    /// `d(x,y)/n <= (1+δ)^2 E d(X,Y)` whenever a stego codeword was sent;
    /// vacuously true for the all-zeros fallback.
    pub certificate_ok: bool,
    pub u: Vec<usize>,
    pub x: Vec<usize>,
    pub k: Vec<usize>,
    pub y: Vec<usize>,
    pub z: Vec<usize>,
    pub uhat: Option<Vec<usize>>,
    pub sent_message: usize,
    pub decoded_message: Option<usize>,
}

/// Order-independent sums over trials.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialAggregate {
    pub trials: usize,
    pub event_counts: [usize; 7],
    pub message_errors: usize,
    pub embedded: usize,
    pub sum_distortion_xy: f64,
    pub decoded: usize,
    pub sum_distortion_uuhat: f64,
    pub certificate_violations: usize,
}

impl TrialAggregate {
    pub fn add(&mut self, r: &TrialResult) {
        self.trials += 1;
        self.event_counts[r.event.slot()] += 1;
        if !r.message_correct {
            self.message_errors += 1;
        }
        if matches!(r.event, TrialEvent::None | TrialEvent::E4 | TrialEvent::E5) {
            self.embedded += 1;
            self.sum_distortion_xy += r.distortion_xy;
        }
        if !r.certificate_ok {
            self.certificate_violations += 1;
        }
        if let Some(d) = r.distortion_uuhat {
            self.decoded += 1;
            self.sum_distortion_uuhat += d;
        }
    }

    pub fn merge(mut self, o: &TrialAggregate) -> Self {
        self.trials += o.trials;
        for (a, b) in self.event_counts.iter_mut().zip(&o.event_counts) {
            *a += b;
        }
        self.message_errors += o.message_errors;
        self.embedded += o.embedded;
        self.sum_distortion_xy += o.sum_distortion_xy;
        self.decoded += o.decoded;
        self.sum_distortion_uuhat += o.sum_distortion_uuhat;
        self.certificate_violations += o.certificate_violations;
        self
    }

    pub fn count(&self, e: TrialEvent) -> usize {
        self.event_counts[e.slot()]
    }

    fn ratio(a: usize, b: usize) -> Option<f64> {
        (b > 0).then(|| a as f64 / b as f64)
    }

    pub fn frequency(&self, e: TrialEvent) -> Option<f64> {
        Self::ratio(self.count(e), self.trials)
    }

    /// Frequency of atypical inputs, whichever path the encoder took.
    pub fn atypical_input_frequency(&self) -> Option<f64> {
        Self::ratio(self.count(TrialEvent::E1) + self.count(TrialEvent::EncodeFallback), self.trials)
    }

    pub fn message_error_rate(&self) -> Option<f64> {
        Self::ratio(self.message_errors, self.trials)
    }

    /// Mean `d(x,y)/n` over blocks where both searches succeeded.
    pub fn mean_distortion_xy(&self) -> Option<f64> {
        (self.embedded > 0).then(|| self.sum_distortion_xy / self.embedded as f64)
    }

    pub fn mean_distortion_uuhat(&self) -> Option<f64> {
        (self.decoded > 0).then(|| self.sum_distortion_uuhat / self.decoded as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRun {
    pub aggregate: TrialAggregate,
    pub results: Vec<TrialResult>,
}

fn sample_letters<R: Rng + ?Sized>(probs: &[f64], len: usize, rng: &mut R) -> Vec<usize> {
    (0..len)
        .map(|_| {
            let r = rng.random::<f64>();
            let mut acc = 0.0;
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if r < acc {
                    return i;
                }
            }
            probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
        })
        .collect()
}

/// Draws `u^N` and `(k^n, x^n)` from the sources.
pub(crate) fn draw_inputs<R: Rng + ?Sized>(
    cb: &CodebookSet,
    rng: &mut R,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let m = &cb.model;
    let u = sample_letters(&m.p_u, cb.rates.message_len, rng);
    let kx = sample_letters(&m.p_kx, cb.n, rng);
    let k = kx.iter().map(|&s| s / m.xc).collect();
    let x = kx.iter().map(|&s| s % m.xc).collect();
    (u, x, k)
}

/// One pass of source, encoder, attack and decoder.
pub fn run_trial<R: Rng + ?Sized>(codebooks: &CodebookSet, rng: &mut R) -> Result<TrialResult> {
    let (u, x, k) = draw_inputs(codebooks, rng);
    trial_from_inputs(codebooks, u, x, k, rng)
}

pub(crate) fn trial_from_inputs<R: Rng + ?Sized>(
    cb: &CodebookSet,
    u: Vec<usize>,
    x: Vec<usize>,
    k: Vec<usize>,
    rng: &mut R,
) -> Result<TrialResult> {
    let m = &cb.model;
    let enc = embed_encode(&u, &x, &k, cb)?;
    let z = attack_rows(&enc.y, &m.attack, m.zc, rng);
    let dec = decode(&z, &k, cb)?;
    let n = cb.n as f64;
    let distortion_xy = m.d.sequence_cost(&x, &enc.y) / n;
    let sent_codeword = matches!(enc.status, EncodeStatus::Embedded | EncodeStatus::AtypicalInput);
    let certificate_ok = !sent_codeword || distortion_xy <= (1.0 + cb.delta).powi(2) * m.q.ed + 1e-12;
    let event = match enc.status {
        EncodeStatus::AtypicalInput => TrialEvent::E1,
        EncodeStatus::Fallback => TrialEvent::EncodeFallback,
        EncodeStatus::NoAuxCodeword => TrialEvent::E2,
        EncodeStatus::NoStegoCodeword => TrialEvent::E3,
        EncodeStatus::Embedded => {
            let view = cb.view(&k).expect("embedded blocks have typical keys");
            let v = enc.v.as_ref().expect("embedded blocks carry their codeword");
            if !kvz_typical(cb, &k, v, &z) {
                TrialEvent::E4
            } else if matching_bins(cb, &view, &z).iter().any(|&b| b != enc.bin) {
                TrialEvent::E5
            } else {
                TrialEvent::None
            }
        }
    };
    let decoded_message = dec.message();
    let (uhat, distortion_uuhat) = match dec {
        DecodeOutcome::Message { uhat, .. } => {
            let d = m.d_prime.sequence_cost(&u, &uhat) / cb.rates.message_len as f64;
            (Some(uhat), Some(d))
        }
        _ => (None, None),
    };
    Ok(TrialResult {
        event,
        message_correct: decoded_message == Some(enc.message),
        distortion_xy,
        distortion_uuhat,
        certificate_ok,
        u,
        x,
        k,
        y: enc.y,
        z,
        uhat,
        sent_message: enc.sent_message,
        decoded_message,
    })
}

/// Seeded generator for trial `t`, independent of the codebook stream.
pub(crate) fn trial_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(t as u64 + 1);
    r
}

/// Runs `trials` independent blocks over a fixed code. Trial `t` uses its
/// own stream of `seed`, so results do not depend on thread scheduling.
pub fn run_trials_with(codebooks: &CodebookSet, trials: usize, seed: u64) -> Result<TrialRun> {
    let results: Vec<TrialResult> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(codebooks, &mut trial_rng(seed, t)))
        .collect::<Result<_>>()?;
    let mut aggregate = TrialAggregate::default();
    results.iter().for_each(|r| aggregate.add(r));
    Ok(TrialRun { aggregate, results })
}

/// Draws a code from `rng`, then runs `trials` blocks on it.
pub fn run_trials<R: Rng + ?Sized>(
    spec: &SystemSpec,
    aux: &AuxChannel,
    cfg: &SimConfig,
    trials: usize,
    rng: &mut R,
) -> Result<TrialRun> {
    let codebooks = build_codebooks(spec, aux, cfg, rng)?;
    let seed = rng.random::<u64>();
    run_trials_with(&codebooks, trials, seed)
}

/// `Pr{X^n ∈ T_P^δ}` for i.i.d. letters, summed exactly over typical types.
pub fn typical_set_probability(probs: &[f64], n: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let s: f64 = probs.iter().sum();
    if probs.iter().any(|&p| !(p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
        return invalid("probabilities must be nonnegative and sum to 1");
    }
    let mut ln_fact = vec![0.0f64; n + 1];
    for i in 1..=n {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let ln_p: Vec<f64> = probs.iter().map(|&p| if p > 0.0 { p.ln() } else { 0.0 }).collect();
    Ok(typical_types(probs, n, delta)
        .iter()
        .map(|t| {
            let mut l = ln_fact[n];
            for (i, &c) in t.iter().enumerate() {
                l += c as f64 * ln_p[i] - ln_fact[c];
            }
            l.exp()
        })
        .sum::<f64>()
        .min(1.0))
}

/// `1 - Pr{U^N ∈ T_U} Pr{(K^n, X^n) ∈ T_KX}` with `N = λ n`.
pub fn atypical_input_probability(spec: &SystemSpec, n: usize, delta: f64) -> Result<f64> {
    let big_n = SimConfig::new(n, 0.0).message_len(spec.lambda())?;
    let pu = typical_set_probability(spec.p_u().values(), big_n, delta)?;
    let pkx = typical_set_probability(spec.p_kx().values(), n, delta)?;
    Ok(1.0 - pu * pkx)
}

/// Monte-Carlo frequency of the encoder's atypical-input test, without
/// building a code (usable at blocklengths far beyond enumeration).
pub fn sample_atypical_inputs(spec: &SystemSpec, n: usize, delta: f64, trials: usize, seed: u64) -> Result<f64> {
    check_delta(delta)?;
    if trials == 0 {
        return invalid("need at least one trial");
    }
    let big_n = SimConfig::new(n, 0.0).message_len(spec.lambda())?;
    let pu = spec.p_u().values();
    let pkx = spec.p_kx().values();
    let (kc, xc) = (spec.card_k(), spec.card_x());
    let hits: usize = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let u = sample_letters(pu, big_n, &mut rng);
            let kx = sample_letters(pkx, n, &mut rng);
            let k: Vec<usize> = kx.iter().map(|&s| s / xc).collect();
            let x: Vec<usize> = kx.iter().map(|&s| s % xc).collect();
            let joint = zip_symbols(&[(&k, kc), (&x, xc)]);
            usize::from(!(symbols_typical(&u, pu, delta) && symbols_typical(&joint, pkx, delta)))
        })
        .sum();
    Ok(hits as f64 / trials as f64)
}
