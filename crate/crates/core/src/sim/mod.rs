//! Small-blocklength simulator of the random-coding scheme: quantize the
//! message, encrypt its index with a pad derived from the key by random
//! binning, embed the encrypted index with a binned auxiliary code, attack,
//! and decode by joint typicality.
//!
//! Codebooks are stored for one representative key per typical type; the
//! code of any other key is the image of its representative's code under
//! the canonical permutation between the two keys.

mod audit;
mod codebook;
mod coding;
mod model;
mod trials;

pub use audit::{
    bin_multiplicity_audit, binary_divergence, compression_audits, divergence_exact, divergence_lower_bound,
    ensemble_equivocation, estimate_equivocation, BinAudit, CompressionAudit, EquivocationEstimate,
    EquivocationMethod, EquivocationMode, AUDIT_CAP, EQUIVOCATION_CAP, PLUG_IN_MIN_TRIALS,
};
pub use codebook::{
    build_codebooks, default_delta, key_bits_formula, CodeRates, CodebookSet, KeyBits, RatePolicy, RepresentativeCodebook, SimConfig,
    CODEBOOK_SYMBOL_CAP,
};
pub use coding::{
    attack, bits_to_index, decode, decrypt, embed_encode, encrypt, index_to_bits, sw_encode, DecodeOutcome,
    EncodeStatus, Encoded,
};
pub use trials::{
    atypical_input_probability, run_trial, run_trials, run_trials_with, sample_atypical_inputs,
    typical_set_probability, TrialAggregate, TrialEvent, TrialResult, TrialRun,
};
