//! Encoder, attack channel and decoder of the random code.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::codebook::{CodebookSet, KeyView};
use crate::error::{invalid, Error, Result};
use crate::rd::rd_encode;
use crate::region::SystemSpec;
use crate::types::{apply_inverse_permutation, apply_permutation, symbols_conditionally_typical, symbols_typical, zip_symbols};

/// `i` as `len` bits, most significant first.
pub fn index_to_bits(i: usize, len: usize) -> Vec<u8> {
    (0..len).rev().map(|b| ((i >> b) & 1) as u8).collect()
}

pub fn bits_to_index(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

/// XORs the first `J = s.len()` bits of `w` with `s`; the remaining bits
/// pass through. Its own inverse.
pub fn encrypt(w: &[u8], s: &[u8]) -> Result<Vec<u8>> {
    if s.len() > w.len() {
        return invalid(format!(
            "pad length J = {} exceeds the message index length L = {}; use the extended evaluation",
            s.len(),
            w.len()
        ));
    }
    if w.iter().chain(s).any(|&b| b > 1) {
        return invalid("bit strings may only contain 0 and 1");
    }
    let mut out = w.to_vec();
    out.iter_mut().zip(s).for_each(|(a, b)| *a ^= b);
    Ok(out)
}

pub fn decrypt(w_tilde: &[u8], s: &[u8]) -> Result<Vec<u8>> {
    encrypt(w_tilde, s)
}

/// Index-level form of [`encrypt`] with the pad in the low `J` bits of `pad`.
pub(crate) fn xor_index(w: usize, pad: u64, index_bits: usize, key_bits: usize) -> usize {
    w ^ ((pad as usize) << (index_bits - key_bits))
}

/// The pre-assigned `J`-bit bin of a typical key.
pub fn sw_encode(k: &[usize], codebooks: &CodebookSet) -> Result<Vec<u8>> {
    let pad = codebooks
        .pad(k)
        .ok_or_else(|| Error::Validation("key sequence is not typical; it has no pad".into()))?;
    Ok(index_to_bits(pad as usize, codebooks.rates.key_bits))
}

/// How the encoder left the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodeStatus {
    /// Typical inputs, both searches succeeded.
    Embedded,
    /// Atypical inputs; the all-zero message was embedded normally.
    AtypicalInput,
    /// Atypical inputs and no stego vector for the all-zero message; the
    /// all-zeros sequence was sent.
    Fallback,
    /// No jointly typical auxiliary codeword in the bin.
    NoAuxCodeword,
    /// No jointly typical stego codeword for the chosen auxiliary codeword.
    NoStegoCodeword,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub y: Vec<usize>,
    pub status: EncodeStatus,
    /// Quantizer index of the source block.
    pub message: usize,
    /// Index actually embedded: `message`, or 0 on atypical inputs.
    pub sent_message: usize,
    /// Encrypted bin index `m`.
    pub bin: usize,
    /// `(j, j')` found by the searches, in the key's own codebook.
    pub aux_index: Option<usize>,
    pub stego_index: Option<usize>,
    /// The selected auxiliary codeword (permuted to the key).
    pub v: Option<Vec<usize>>,
}

/// Quantizes `u`, encrypts the index and runs the two first-fit searches.
pub fn embed_encode(u: &[usize], x: &[usize], k: &[usize], codebooks: &CodebookSet) -> Result<Encoded> {
    let m = &codebooks.model;
    let n = codebooks.n;
    if x.len() != n || k.len() != n {
        return invalid(format!("covertext and key must have length {n}"));
    }
    if x.iter().any(|&s| s >= m.xc) || k.iter().any(|&s| s >= m.kc) || u.iter().any(|&s| s >= m.uc) {
        return invalid("symbol outside its alphabet");
    }
    let message = rd_encode(u, &codebooks.rd, &m.d_prime)?;
    let kx = zip_symbols(&[(k, m.kc), (x, m.xc)]);
    let typical = symbols_typical(u, &m.p_u, codebooks.delta) && symbols_typical(&kx, &m.p_kx, codebooks.delta);
    let sent_message = if typical { message } else { 0 };
    let failed = |status, bin, aux_index, v| Encoded {
        y: vec![0; n],
        status,
        message,
        sent_message,
        bin,
        aux_index,
        stego_index: None,
        v,
    };
    let (view, pad) = match (codebooks.view(k), codebooks.pad(k)) {
        (Some(v), Some(p)) => (v, p),
        _ => return Ok(failed(EncodeStatus::Fallback, 0, None, None)),
    };
    let r = &codebooks.rates;
    let bin = xor_index(sent_message, pad, r.index_bits, r.key_bits);
    let search = search_bin(codebooks, &view, x, bin);
    let (status_aux_fail, status_stego_fail, ok) = if typical {
        (EncodeStatus::NoAuxCodeword, EncodeStatus::NoStegoCodeword, EncodeStatus::Embedded)
    } else {
        (EncodeStatus::Fallback, EncodeStatus::Fallback, EncodeStatus::AtypicalInput)
    };
    Ok(match search {
        Search::NoAux => failed(status_aux_fail, bin, None, None),
        Search::NoStego(j) => {
            let v = apply_permutation(&view.rep.aux[bin * r.aux_per_bin() + j], &view.sigma);
            failed(status_stego_fail, bin, Some(j), Some(v))
        }
        Search::Found(j, j2) => {
            let a = bin * r.aux_per_bin() + j;
            Encoded {
                y: apply_permutation(&view.rep.stego[a * r.stego_per_aux() + j2], &view.sigma),
                status: ok,
                message,
                sent_message,
                bin,
                aux_index: Some(j),
                stego_index: Some(j2),
                v: Some(apply_permutation(&view.rep.aux[a], &view.sigma)),
            }
        }
    })
}

enum Search {
    NoAux,
    NoStego(usize),
    Found(usize, usize),
}

/// First `j` with `(k,x,v) ∈ T_KXV`, then first `j'` with `y ∈ T_{Y|KXV}`,
/// carried out in the representative's coordinates.
fn search_bin(codebooks: &CodebookSet, view: &KeyView<'_>, x: &[usize], bin: usize) -> Search {
    let m = &codebooks.model;
    let r = &codebooks.rates;
    let delta = codebooks.delta;
    let x_rep = apply_inverse_permutation(x, &view.sigma);
    let key = &view.rep.key;
    let m2 = r.aux_per_bin();
    let m3 = r.stego_per_aux();
    for j in 0..m2 {
        let v = &view.rep.aux[bin * m2 + j];
        let kxv = zip_symbols(&[(key, m.kc), (&x_rep, m.xc), (v, m.vc)]);
        if !symbols_typical(&kxv, &m.p_kxv, delta) {
            continue;
        }
        let base = (bin * m2 + j) * m3;
        for j2 in 0..m3 {
            if symbols_conditionally_typical(&kxv, &view.rep.stego[base + j2], &m.y_given_kxv, delta) {
                return Search::Found(j, j2);
            }
        }
        return Search::NoStego(j);
    }
    Search::NoAux
}

/// Memoryless attack: each `z_t` drawn from `P(Z | Y = y_t)`.
pub fn attack<R: Rng + ?Sized>(y: &[usize], spec: &SystemSpec, rng: &mut R) -> Result<Vec<usize>> {
    let yc = spec.card_y();
    if y.iter().any(|&s| s >= yc) {
        return invalid("stegotext symbol outside its alphabet");
    }
    Ok(attack_rows(y, spec.attack().values(), spec.card_z(), rng))
}

pub(crate) fn attack_rows<R: Rng + ?Sized>(y: &[usize], rows: &[f64], zc: usize, rng: &mut R) -> Vec<usize> {
    y.iter()
        .map(|&s| {
            let row = &rows[s * zc..(s + 1) * zc];
            let r = rng.random::<f64>();
            let mut acc = 0.0;
            for (z, &p) in row.iter().enumerate() {
                acc += p;
                if r < acc {
                    return z;
                }
            }
            row.iter().rposition(|&p| p > 0.0).unwrap_or(zc - 1)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeOutcome {
    /// A unique bin matched.
    Message {
        bin: usize,
        message: usize,
        uhat: Vec<usize>,
    },
    /// No auxiliary codeword of the key's codebook is typical with `z`.
    NoCandidate,
    /// Typical codewords in two or more bins.
    Ambiguous { bins: Vec<usize> },
    /// The key is atypical, so it has no codebook.
    UnknownKey,
}

impl DecodeOutcome {
    pub fn message(&self) -> Option<usize> {
        match self {
            DecodeOutcome::Message { message, .. } => Some(*message),
            _ => None,
        }
    }
}

/// Joint-typicality unique-bin decoding, then decryption and
/// dequantization.
pub fn decode(z: &[usize], k: &[usize], codebooks: &CodebookSet) -> Result<DecodeOutcome> {
    let m = &codebooks.model;
    if z.len() != codebooks.n {
        return invalid(format!("forgery must have length {}", codebooks.n));
    }
    if z.iter().any(|&s| s >= m.zc) {
        return invalid("forgery symbol outside its alphabet");
    }
    let (view, pad) = match (codebooks.view(k), codebooks.pad(k)) {
        (Some(v), Some(p)) => (v, p),
        _ => return Ok(DecodeOutcome::UnknownKey),
    };
    let bins = matching_bins(codebooks, &view, z);
    match bins.len() {
        0 => Ok(DecodeOutcome::NoCandidate),
        1 => {
            let r = &codebooks.rates;
            let bin = bins[0];
            let message = xor_index(bin, pad, r.index_bits, r.key_bits);
            Ok(DecodeOutcome::Message {
                bin,
                message,
                uhat: codebooks.rd.codewords[message].symbols().to_vec(),
            })
        }
        _ => Ok(DecodeOutcome::Ambiguous { bins }),
    }
}

/// Bins holding at least one `v` with `(k, v, z) ∈ T_KVZ`, ascending.
pub(crate) fn matching_bins(codebooks: &CodebookSet, view: &KeyView<'_>, z: &[usize]) -> Vec<usize> {
    let r = &codebooks.rates;
    let z_rep = apply_inverse_permutation(z, &view.sigma);
    let m2 = r.aux_per_bin();
    (0..r.bins())
        .filter(|&bin| {
            (0..m2).any(|j| {
                let v = &view.rep.aux[bin * m2 + j];
                kvz_typical(codebooks, &view.rep.key, v, &z_rep)
            })
        })
        .collect()
}

pub(crate) fn kvz_typical(codebooks: &CodebookSet, k: &[usize], v: &[usize], z: &[usize]) -> bool {
    let m = &codebooks.model;
    let kvz = zip_symbols(&[(k, m.kc), (v, m.vc), (z, m.zc)]);
    symbols_typical(&kvz, &m.p_kvz, codebooks.delta)
}
