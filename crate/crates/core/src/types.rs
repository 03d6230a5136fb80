//! Method-of-types machinery: empirical PMFs, letter-wise δ-typicality,
//! conditional typical sets, exact uniform sampling from them, and the
//! closed-form size and distortion bounds that go with them.
//!
//! A sequence `a` is δ-typical for `P` when every letter frequency lies in
//! `[(1-δ)P(a'), (1+δ)P(a')]`; `b` is conditionally δ-typical given `a`
//! under a kernel `K` when every pair frequency lies in
//! `[(1-δ)P_a(a')K(b'|a'), (1+δ)P_a(a')K(b'|a')]`. Comparisons are done on
//! integer counts against `(1±δ)·n·P` with a tie-inclusive tolerance, so a
//! count sitting exactly on a bound is typical.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::info::{Axis, DistTable, DistortionMeasure};

/// Absolute slack applied when comparing an integer count with a real bound.
const COUNT_TOL: f64 = 1e-9;

/// Default cap on explicit set enumeration.
pub const ENUMERATION_CAP: usize = 1 << 24;

/// A finite sequence over a named alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sequence {
    axis: Axis,
    symbols: Vec<usize>,
}

impl Sequence {
    pub fn new(axis: Axis, symbols: Vec<usize>) -> Result<Self> {
        if let Some(s) = symbols.iter().find(|&&s| s >= axis.card) {
            return invalid(format!(
                "symbol {s} out of range for alphabet `{}` of size {}",
                axis.name, axis.card
            ));
        }
        Ok(Sequence { axis, symbols })
    }

    pub fn axis(&self) -> &Axis {
        &self.axis
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn into_symbols(self) -> Vec<usize> {
        self.symbols
    }
}

/// Blocklength and typicality slack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypicalityParams {
    pub delta: f64,
    pub n: usize,
}

impl TypicalityParams {
    pub fn new(delta: f64, n: usize) -> Result<Self> {
        check_delta(delta)?;
        if n == 0 {
            return invalid("blocklength must be positive");
        }
        Ok(TypicalityParams { delta, n })
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0, 1), got {delta}"));
    }
    Ok(())
}

/// A conditional kernel `K(b|a)` as a dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Kernel {
    pub ca: usize,
    pub cb: usize,
    pub probs: Vec<f64>,
}

impl Kernel {
    pub fn from_table(k: &DistTable) -> Result<Self> {
        let given = k.given_axes();
        if given.len() != 1 || k.axes().len() != 2 {
            return invalid("a typicality kernel must be a two-axis table conditioned on its first axis");
        }
        let names = k.axis_names();
        let ordered = if names[0] == given[0] {
            k.clone()
        } else {
            k.reorder(&[names[1], names[0]])?
        };
        let cards = ordered.cards();
        Ok(Kernel {
            ca: cards[0],
            cb: cards[1],
            probs: ordered.values().to_vec(),
        })
    }

    fn p(&self, a: usize, b: usize) -> f64 {
        self.probs[a * self.cb + b]
    }
}

pub(crate) fn letter_counts(symbols: &[usize], card: usize) -> Vec<usize> {
    let mut c = vec![0usize; card];
    for &s in symbols {
        c[s] += 1;
    }
    c
}

fn count_in_bounds(count: usize, center: f64, delta: f64) -> bool {
    let c = count as f64;
    c >= (1.0 - delta) * center - COUNT_TOL && c <= (1.0 + delta) * center + COUNT_TOL
}

/// Count-vector form of the letter-wise test: `counts` over a sequence of
/// length `n` against `probs`.
pub(crate) fn counts_typical(counts: &[usize], n: usize, probs: &[f64], delta: f64) -> bool {
    counts
        .iter()
        .zip(probs)
        .all(|(&c, &p)| count_in_bounds(c, n as f64 * p, delta))
}

/// Letter-wise δ-typicality of a raw symbol slice.
pub(crate) fn symbols_typical(symbols: &[usize], probs: &[f64], delta: f64) -> bool {
    let counts = letter_counts(symbols, probs.len());
    counts_typical(&counts, symbols.len(), probs, delta)
}

/// Pair-wise conditional test of `b` given `a` (raw slices).
pub(crate) fn symbols_conditionally_typical(a: &[usize], b: &[usize], k: &Kernel, delta: f64) -> bool {
    let mut pair = vec![0usize; k.ca * k.cb];
    let mut single = vec![0usize; k.ca];
    for (&x, &y) in a.iter().zip(b) {
        pair[x * k.cb + y] += 1;
        single[x] += 1;
    }
    (0..k.ca).all(|x| {
        (0..k.cb).all(|y| count_in_bounds(pair[x * k.cb + y], single[x] as f64 * k.p(x, y), delta))
    })
}

/// Combines parallel sequences into one sequence over the product alphabet
/// (first sequence most significant), matching the row-major layout of a
/// [`DistTable`] whose axes are listed in the same order.
pub(crate) fn zip_symbols(parts: &[(&[usize], usize)]) -> Vec<usize> {
    let n = parts.first().map_or(0, |p| p.0.len());
    (0..n)
        .map(|i| parts.iter().fold(0, |acc, (s, card)| acc * card + s[i]))
        .collect()
}

fn single_axis_probs(p: &DistTable) -> Result<&[f64]> {
    if p.is_conditional() || p.axes().len() != 1 {
        return invalid("expected a joint PMF over a single axis");
    }
    Ok(p.values())
}

/// Relative letter frequencies of `seq`.
pub fn empirical_pmf(seq: &Sequence) -> Result<DistTable> {
    if seq.is_empty() {
        return invalid("empirical PMF of an empty sequence");
    }
    let n = seq.len();
    let counts = letter_counts(seq.symbols(), seq.axis().card);
    // Counts sum to n exactly, so the emitted frequencies are normalized up to
    // a few ulps.
    DistTable::joint(
        vec![seq.axis().clone()],
        counts.iter().map(|&c| c as f64 / n as f64).collect(),
    )
}

/// `seq ∈ T_P^δ`.
pub fn is_delta_typical(seq: &Sequence, p: &DistTable, delta: f64) -> Result<bool> {
    let probs = single_axis_probs(p)?;
    if probs.len() != seq.axis().card {
        return invalid("alphabet size of sequence and PMF differ");
    }
    Ok(symbols_typical(seq.symbols(), probs, delta))
}

/// Pair-wise condition of `b ∈ T_{B|A}^δ(a)` without the requirement on `a`.
pub fn is_conditionally_typical(a: &Sequence, b: &Sequence, k_ba: &DistTable, delta: f64) -> Result<bool> {
    if a.len() != b.len() {
        return invalid(format!("sequence lengths differ ({} vs {})", a.len(), b.len()));
    }
    let k = Kernel::from_table(k_ba)?;
    if k.ca != a.axis().card || k.cb != b.axis().card {
        return invalid("kernel alphabets do not match the sequences");
    }
    Ok(symbols_conditionally_typical(a.symbols(), b.symbols(), &k, delta))
}

/// `a ∈ T_A^δ` and `b ∈ T_{B|A}^δ(a)`.
pub fn is_jointly_delta_typical(
    a: &Sequence,
    b: &Sequence,
    p_a: &DistTable,
    k_ba: &DistTable,
    delta: f64,
) -> Result<bool> {
    if a.len() != b.len() {
        return invalid(format!("sequence lengths differ ({} vs {})", a.len(), b.len()));
    }
    Ok(is_delta_typical(a, p_a, delta)? && is_conditionally_typical(a, b, k_ba, delta)?)
}

/// Count vectors of length-`n` sequences that are δ-typical for `probs`, in
/// lexicographic order.
pub(crate) fn typical_types(probs: &[f64], n: usize, delta: f64) -> Vec<Vec<usize>> {
    let ranges: Vec<(usize, usize)> = probs
        .iter()
        .map(|&p| count_range(n as f64 * p, delta, n))
        .collect();
    compositions(n, &ranges)
}

fn count_range(center: f64, delta: f64, max: usize) -> (usize, usize) {
    let lo = ((1.0 - delta) * center - COUNT_TOL).ceil().max(0.0) as usize;
    let hi = (((1.0 + delta) * center + COUNT_TOL).floor().max(0.0) as usize).min(max);
    (lo, hi)
}

/// All vectors `c` with `lo_i <= c_i <= hi_i` and `sum c = total`.
fn compositions(total: usize, ranges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    fn rec(
        i: usize,
        left: usize,
        ranges: &[(usize, usize)],
        min_rest: &[usize],
        max_rest: &[usize],
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if i == ranges.len() {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let (lo, hi) = ranges[i];
        for c in lo..=hi.min(left) {
            let rem = left - c;
            if rem < min_rest[i + 1] || rem > max_rest[i + 1] {
                continue;
            }
            cur.push(c);
            rec(i + 1, rem, ranges, min_rest, max_rest, cur, out);
            cur.pop();
        }
    }
    let k = ranges.len();
    let mut min_rest = vec![0usize; k + 1];
    let mut max_rest = vec![0usize; k + 1];
    for i in (0..k).rev() {
        min_rest[i] = min_rest[i + 1] + ranges[i].0;
        max_rest[i] = max_rest[i + 1].saturating_add(ranges[i].1);
    }
    let mut out = Vec::new();
    if ranges.iter().all(|(lo, hi)| lo <= hi) {
        rec(0, total, ranges, &min_rest, &max_rest, &mut Vec::new(), &mut out);
    }
    out
}

pub(crate) fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

pub(crate) fn ln_multinomial(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    ln_factorial(n) - counts.iter().map(|&c| ln_factorial(c)).sum::<f64>()
}

/// Multinomial coefficient as an exact integer, `None` on overflow.
pub(crate) fn multinomial(counts: &[usize]) -> Option<u128> {
    let mut acc: u128 = 1;
    let mut placed = 0u128;
    for &c in counts {
        for i in 1..=c as u128 {
            placed += 1;
            acc = acc.checked_mul(placed)? / i;
        }
    }
    Some(acc)
}

/// All arrangements of the multiset described by `counts`, lexicographic.
pub(crate) fn multiset_permutations(counts: &[usize]) -> Vec<Vec<usize>> {
    fn rec(counts: &mut [usize], left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for s in 0..counts.len() {
            if counts[s] > 0 {
                counts[s] -= 1;
                cur.push(s);
                rec(counts, left - 1, cur, out);
                cur.pop();
                counts[s] += 1;
            }
        }
    }
    let mut c = counts.to_vec();
    let n = c.iter().sum();
    let mut out = Vec::new();
    rec(&mut c, n, &mut Vec::with_capacity(n), &mut out);
    out
}

/// Number of δ-typical sequences of length `n` (exact).
pub(crate) fn typical_set_size(probs: &[f64], n: usize, delta: f64) -> Option<u128> {
    typical_types(probs, n, delta)
        .iter()
        .try_fold(0u128, |acc, t| acc.checked_add(multinomial(t)?))
}

/// Every member of `T_P^δ` at blocklength `n`, in lexicographic order.
pub fn enumerate_typical(p: &DistTable, n: usize, delta: f64) -> Result<Vec<Sequence>> {
    enumerate_typical_capped(p, n, delta, ENUMERATION_CAP)
}

pub fn enumerate_typical_capped(p: &DistTable, n: usize, delta: f64, cap: usize) -> Result<Vec<Sequence>> {
    let probs = single_axis_probs(p)?;
    let axis = p.axes()[0].clone();
    let size = typical_set_size(probs, n, delta);
    match size {
        Some(s) if s <= cap as u128 => {}
        _ => {
            return Err(Error::CapExceeded(format!(
                "typical set of `{}` at n={n} exceeds the cap of {cap} sequences",
                axis.name
            )))
        }
    }
    let mut all: Vec<Vec<usize>> = typical_types(probs, n, delta)
        .iter()
        .flat_map(|t| multiset_permutations(t))
        .collect();
    all.sort();
    Ok(all
        .into_iter()
        .map(|symbols| Sequence {
            axis: axis.clone(),
            symbols,
        })
        .collect())
}

/// Every `b` with `b ∈ T_{B|A}^δ(a)` by brute force over `|B|^n`. Meant as an
/// oracle for small cases.
pub fn enumerate_conditional_typical(a: &Sequence, k_ba: &DistTable, delta: f64) -> Result<Vec<Sequence>> {
    let k = Kernel::from_table(k_ba)?;
    let n = a.len();
    let total = (k.cb as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if total > ENUMERATION_CAP as u128 {
        return Err(Error::CapExceeded(format!("|B|^n = {}^{n} exceeds the cap", k.cb)));
    }
    let b_axis = b_axis_of(k_ba)?;
    let mut out = Vec::new();
    let mut cur = vec![0usize; n];
    for _ in 0..total {
        if symbols_conditionally_typical(a.symbols(), &cur, &k, delta) {
            out.push(Sequence {
                axis: b_axis.clone(),
                symbols: cur.clone(),
            });
        }
        for d in (0..n).rev() {
            cur[d] += 1;
            if cur[d] < k.cb {
                break;
            }
            cur[d] = 0;
        }
    }
    Ok(out)
}

fn b_axis_of(k_ba: &DistTable) -> Result<Axis> {
    let given = k_ba.given_axes();
    k_ba.axes()
        .iter()
        .find(|ax| !given.contains(&ax.name.as_str()))
        .cloned()
        .ok_or_else(|| Error::Validation("kernel has no output axis".into()))
}

/// Exact uniform sampler over `T_{B|A}^δ(a)` for a fixed `a`.
///
/// The set factorizes over the groups of positions sharing a letter of `a`:
/// within each group the allowed count vectors are enumerated, one is drawn
/// with probability proportional to its multinomial coefficient, and the
/// resulting multiset is placed on the group's positions by a uniform
/// shuffle.
#[derive(Debug, Clone)]
pub(crate) struct ConditionalSampler {
    n: usize,
    groups: Vec<Group>,
}

#[derive(Debug, Clone)]
struct Group {
    positions: Vec<usize>,
    types: Vec<Vec<usize>>,
    cumulative: Vec<f64>,
}

impl ConditionalSampler {
    pub fn new(a: &[usize], k: &Kernel, delta: f64) -> Result<Self> {
        let mut groups = Vec::new();
        for letter in 0..k.ca {
            let positions: Vec<usize> = (0..a.len()).filter(|&i| a[i] == letter).collect();
            if positions.is_empty() {
                continue;
            }
            let m = positions.len();
            let ranges: Vec<(usize, usize)> = (0..k.cb)
                .map(|b| count_range(m as f64 * k.p(letter, b), delta, m))
                .collect();
            let types = compositions(m, &ranges);
            if types.is_empty() {
                return Err(Error::EmptyTypicalSet(format!(
                    "no conditionally typical completion for the {m} positions carrying letter {letter}"
                )));
            }
            let lw: Vec<f64> = types.iter().map(|t| ln_multinomial(t)).collect();
            let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut acc = 0.0;
            let cumulative: Vec<f64> = lw
                .iter()
                .map(|w| {
                    acc += (w - max).exp();
                    acc
                })
                .collect();
            groups.push(Group {
                positions,
                types,
                cumulative,
            });
        }
        Ok(ConditionalSampler {
            n: a.len(),
            groups,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut out = vec![0usize; self.n];
        for g in &self.groups {
            let total = *g.cumulative.last().expect("nonempty group");
            let r = rng.random::<f64>() * total;
            let pick = g.cumulative.partition_point(|&c| c <= r).min(g.types.len() - 1);
            let mut letters: Vec<usize> = g.types[pick]
                .iter()
                .enumerate()
                .flat_map(|(b, &c)| std::iter::repeat_n(b, c))
                .collect();
            letters.shuffle(rng);
            for (&pos, b) in g.positions.iter().zip(letters) {
                out[pos] = b;
            }
        }
        out
    }
}

/// One uniform draw from `T_{B|A}^δ(a)`.
pub fn sample_uniform_conditional_typical<R: Rng + ?Sized>(
    a: &Sequence,
    k_ba: &DistTable,
    delta: f64,
    rng: &mut R,
) -> Result<Sequence> {
    check_delta(delta)?;
    let k = Kernel::from_table(k_ba)?;
    if k.ca != a.axis().card {
        return invalid("kernel input alphabet does not match the sequence");
    }
    let sampler = ConditionalSampler::new(a.symbols(), &k, delta)?;
    Ok(Sequence {
        axis: b_axis_of(k_ba)?,
        symbols: sampler.sample(rng),
    })
}

/// `(2^{n[(1-δ)H - δ]}, 2^{n(1+δ)H})`.
pub fn typicality_size_bounds(h_bits: f64, n: usize, delta: f64) -> Result<(f64, f64)> {
    if h_bits < 0.0 || !h_bits.is_finite() {
        return invalid(format!("entropy must be finite and nonnegative, got {h_bits}"));
    }
    let n = n as f64;
    Ok((
        2f64.powf(n * ((1.0 - delta) * h_bits - delta)),
        2f64.powf(n * (1.0 + delta) * h_bits),
    ))
}

/// Per-symbol distortion ceiling `(1+δ)^2 · E d` for jointly typical pairs.
pub fn typical_distortion_bound(delta: f64, expected_d: f64) -> Result<f64> {
    if expected_d < 0.0 {
        return invalid("expected distortion must be nonnegative");
    }
    Ok((1.0 + delta).powi(2) * expected_d)
}

/// Per-symbol additive distortion of a pair of sequences.
pub fn per_symbol_distortion(a: &Sequence, b: &Sequence, d: &DistortionMeasure) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return invalid("distortion needs two nonempty sequences of equal length");
    }
    Ok(d.sequence_cost(a.symbols(), b.symbols()) / a.len() as f64)
}

/// Slack terms tying δ to the rates of the random code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub delta: f64,
    /// `δ[1 + H(V|K) + H(V|K,X)]`
    pub eps1: f64,
    /// `δ[1 + H(Y|K,V) + H(Y|K,X,V)]`
    pub eps2: f64,
    /// `δ[1 + H(V|K) + H(V|Z,K)]`
    pub eps3: f64,
}

impl EpsilonSchedule {
    pub fn new(delta: f64, h_v_k: f64, h_v_kx: f64, h_y_kv: f64, h_y_kxv: f64, h_v_zk: f64) -> Self {
        EpsilonSchedule {
            delta,
            eps1: delta * (1.0 + h_v_k + h_v_kx),
            eps2: delta * (1.0 + h_y_kv + h_y_kxv),
            eps3: delta * (1.0 + h_v_k + h_v_zk),
        }
    }
}

/// Smallest ε compatible with δ at blocklength `n`:
/// `2δ + max{2 exp(-2^{nδ}) + 2^{-nδ}, δ^2}`.
pub fn schedule_epsilon(n: usize, delta: f64) -> f64 {
    let t = 2f64.powf(n as f64 * delta);
    2.0 * delta + (2.0 * (-t).exp() + 1.0 / t).max(delta * delta)
}

/// Permutation `σ` with `to[i] = from[σ[i]]`, matching the occurrences of
/// each letter in order of position. Both sequences must share a type.
pub(crate) fn canonical_permutation(from: &[usize], to: &[usize], card: usize) -> Option<Vec<usize>> {
    if from.len() != to.len() {
        return None;
    }
    let mut slots: Vec<Vec<usize>> = vec![Vec::new(); card];
    for (i, &s) in from.iter().enumerate().rev() {
        slots[s].push(i);
    }
    let mut sigma = Vec::with_capacity(to.len());
    for &s in to {
        sigma.push(slots[s].pop()?);
    }
    Some(sigma)
}

/// `out[i] = seq[σ[i]]`.
pub(crate) fn apply_permutation(seq: &[usize], sigma: &[usize]) -> Vec<usize> {
    sigma.iter().map(|&j| seq[j]).collect()
}

/// Inverse action: `out[σ[i]] = seq[i]`.
pub(crate) fn apply_inverse_permutation(seq: &[usize], sigma: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize; seq.len()];
    for (i, &j) in sigma.iter().enumerate() {
        out[j] = seq[i];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ax(name: &str, card: usize) -> Axis {
        Axis::new(name, card)
    }

    fn seq(name: &str, card: usize, s: &[usize]) -> Sequence {
        Sequence::new(ax(name, card), s.to_vec()).unwrap()
    }

    fn pmf(name: &str, p: &[f64]) -> DistTable {
        DistTable::joint(vec![ax(name, p.len())], p.to_vec()).unwrap()
    }

    fn kernel(rows: &[&[f64]]) -> DistTable {
        let ca = rows.len();
        let cb = rows[0].len();
        DistTable::conditional(
            vec![ax("A", ca), ax("B", cb)],
            &["A"],
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn empirical_pmf_examples() {
        let e = empirical_pmf(&seq("A", 2, &[0, 0, 1, 1])).unwrap();
        assert_eq!(e.values(), &[0.5, 0.5]);
        let e = empirical_pmf(&seq("A", 2, &[0; 5])).unwrap();
        assert_eq!(e.values(), &[1.0, 0.0]);
        let e = empirical_pmf(&seq("A", 3, &[0, 1, 2, 0])).unwrap();
        assert_eq!(e.values(), &[0.5, 0.25, 0.25]);
        assert!(empirical_pmf(&seq("A", 2, &[])).is_err());
        assert!(Sequence::new(ax("A", 2), vec![0, 2]).is_err());
    }

    #[test]
    fn delta_typical_examples() {
        let u = pmf("A", &[0.5, 0.5]);
        assert!(is_delta_typical(&seq("A", 2, &[0, 1, 0, 1]), &u, 0.1).unwrap());
        assert!(!is_delta_typical(&seq("A", 2, &[0, 0, 0, 0]), &u, 0.1).unwrap());
        let p = pmf("A", &[0.75, 0.25]);
        assert!(is_delta_typical(&seq("A", 2, &[0, 1, 0, 0]), &p, 0.01).unwrap());
        // ties at the bound are typical: n=4, p=1/2, delta=1/2 -> counts in [1, 3]
        assert!(is_delta_typical(&seq("A", 2, &[0, 1, 1, 1]), &u, 0.5).unwrap());
        // zero-probability letters must not occur
        let pm = pmf("A", &[1.0, 0.0]);
        assert!(!is_delta_typical(&seq("A", 2, &[0, 0, 0, 1]), &pm, 0.5).unwrap());
    }

    #[test]
    fn jointly_typical_examples() {
        let id = kernel(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let u = pmf("A", &[0.5, 0.5]);
        let a = seq("A", 2, &[0, 1, 1, 0]);
        let b = seq("B", 2, &[0, 1, 1, 0]);
        for d in [0.01, 0.3, 0.9] {
            assert!(is_jointly_delta_typical(&a, &b, &u, &id, d).unwrap());
        }
        // constant b under a uniform kernel: pair (0,1) count 0 < (1-δ)·2·0.5
        let unif = kernel(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let b0 = seq("B", 2, &[0, 0, 0, 0]);
        assert!(!is_jointly_delta_typical(&a, &b0, &u, &unif, 0.1).unwrap());
        assert!(is_jointly_delta_typical(&a, &seq("B", 2, &[0, 0]), &u, &unif, 0.1).is_err());
    }

    #[test]
    fn joint_typicality_holds_with_high_frequency_at_large_n() {
        let p_a = pmf("A", &[0.5, 0.5]);
        let k = kernel(&[&[0.6, 0.4], &[0.4, 0.6]]);
        let delta = 0.1;
        let n = 2000;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let trials = 200;
        let mut hits = 0;
        for _ in 0..trials {
            let a: Vec<usize> = (0..n).map(|_| usize::from(rng.random::<f64>() >= 0.5)).collect();
            let b: Vec<usize> = a
                .iter()
                .map(|&x| {
                    let p0 = if x == 0 { 0.6 } else { 0.4 };
                    usize::from(rng.random::<f64>() >= p0)
                })
                .collect();
            if is_jointly_delta_typical(&seq("A", 2, &a), &seq("B", 2, &b), &p_a, &k, delta).unwrap() {
                hits += 1;
            }
        }
        assert!(hits as f64 / trials as f64 >= 1.0 - delta);
    }

    #[test]
    fn enumerate_examples() {
        let u = pmf("A", &[0.5, 0.5]);
        let t = enumerate_typical(&u, 2, 0.1).unwrap();
        let got: Vec<&[usize]> = t.iter().map(|s| s.symbols()).collect();
        assert_eq!(got, vec![&[0, 1][..], &[1, 0][..]]);
        assert_eq!(enumerate_typical(&u, 3, 0.99).unwrap().len(), 6);
        let p = pmf("A", &[0.5, 0.5, 0.0]);
        assert_eq!(enumerate_typical(&p, 4, 0.999).unwrap().len(), 14);
        let pm = pmf("A", &[0.0, 1.0]);
        let t = enumerate_typical(&pm, 5, 0.1).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].symbols(), &[1, 1, 1, 1, 1]);
        assert!(matches!(
            enumerate_typical_capped(&u, 30, 0.5, 1000),
            Err(Error::CapExceeded(_))
        ));
    }

    #[test]
    fn enumeration_matches_brute_force_filter() {
        let p = pmf("A", &[0.3, 0.7]);
        for n in 1..=10 {
            for &delta in &[0.1, 0.25, 0.5] {
                let fast: Vec<Vec<usize>> = enumerate_typical(&p, n, delta)
                    .unwrap()
                    .into_iter()
                    .map(Sequence::into_symbols)
                    .collect();
                let mut brute = Vec::new();
                for x in 0..(1usize << n) {
                    let s: Vec<usize> = (0..n).map(|i| (x >> (n - 1 - i)) & 1).collect();
                    if is_delta_typical(&seq("A", 2, &s), &p, delta).unwrap() {
                        brute.push(s);
                    }
                }
                assert_eq!(fast, brute, "n={n} delta={delta}");
            }
        }
    }

    #[test]
    fn sampler_identity_channel_returns_input() {
        let id = kernel(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let a = seq("A", 2, &[0, 1, 1, 0, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = sample_uniform_conditional_typical(&a, &id, 0.25, &mut rng).unwrap();
        assert_eq!(b.symbols(), a.symbols());
    }

    #[test]
    fn sampler_uniform_over_vacuous_set() {
        // delta close to 1 with a uniform kernel admits every b with at least
        // one of each letter per group... use n=4 and compare with the oracle set
        let unif = kernel(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let a = seq("A", 2, &[0, 0, 0, 0]);
        let delta = 0.99;
        let members = enumerate_conditional_typical(&a, &unif, delta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 20_000;
        let mut freq = std::collections::HashMap::new();
        for _ in 0..draws {
            let b = sample_uniform_conditional_typical(&a, &unif, delta, &mut rng).unwrap();
            *freq.entry(b.into_symbols()).or_insert(0usize) += 1;
        }
        assert_eq!(freq.len(), members.len());
        let expected = draws as f64 / members.len() as f64;
        let chi2: f64 = members
            .iter()
            .map(|m| {
                let o = *freq.get(m.symbols()).unwrap_or(&0) as f64;
                (o - expected).powi(2) / expected
            })
            .sum();
        // 14 cells -> 13 dof; 99.9% quantile is about 34.5
        assert!(chi2 < 34.5, "chi2 = {chi2}");
    }

    #[test]
    fn sampler_draws_are_typical_members() {
        let k = kernel(&[&[0.9, 0.1], &[0.25, 0.75]]);
        let a = seq("A", 2, &[0, 1, 1, 1, 0, 1, 0, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &delta in &[0.01, 0.3, 0.6] {
            let members = enumerate_conditional_typical(&a, &k, delta).unwrap();
            let kern = Kernel::from_table(&k).unwrap();
            match ConditionalSampler::new(a.symbols(), &kern, delta) {
                Ok(s) => {
                    for _ in 0..50 {
                        let b = s.sample(&mut rng);
                        assert!(members.iter().any(|m| m.symbols() == b.as_slice()));
                    }
                }
                Err(Error::EmptyTypicalSet(_)) => assert!(members.is_empty()),
                Err(e) => panic!("{e}"),
            }
        }
        // near-deterministic channel at delta=0.01, n=4: a count of 0 for the
        // rare letter misses the lower bound 0.0198, so the set is empty and
        // the sampler must say so rather than return a non-member
        let k = kernel(&[&[0.99, 0.01], &[0.01, 0.99]]);
        let a = seq("A", 2, &[0, 0, 1, 1]);
        let members = enumerate_conditional_typical(&a, &k, 0.01).unwrap();
        assert!(members.is_empty());
        assert!(matches!(
            sample_uniform_conditional_typical(&a, &k, 0.01, &mut rng),
            Err(Error::EmptyTypicalSet(_))
        ));
    }

    #[test]
    fn size_and_distortion_bounds() {
        assert_eq!(typicality_size_bounds(1.0, 10, 0.0).unwrap(), (1024.0, 1024.0));
        let (lo, hi) = typicality_size_bounds(0.0, 10, 0.2).unwrap();
        assert_abs_diff_eq!(lo, 2f64.powi(-2), epsilon = 1e-15);
        assert_eq!(hi, 1.0);
        let (lo, hi) = typicality_size_bounds(0.5, 20, 0.1).unwrap();
        assert_abs_diff_eq!(lo, 128.0, epsilon = 1e-9);
        assert_abs_diff_eq!(hi, 2048.0, epsilon = 1e-9);
        assert_eq!(typical_distortion_bound(0.0, 0.3).unwrap(), 0.3);
        assert_eq!(typical_distortion_bound(0.4, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(typical_distortion_bound(0.1, 0.2).unwrap(), 0.242, epsilon = 1e-15);
    }

    #[test]
    fn permutations_map_between_same_type_sequences() {
        let from = [0, 0, 1, 2, 1];
        let to = [1, 2, 0, 1, 0];
        let s = canonical_permutation(&from, &to, 3).unwrap();
        assert_eq!(apply_permutation(&from, &s), to);
        let v = [5, 6, 7, 8, 9];
        assert_eq!(apply_inverse_permutation(&apply_permutation(&v, &s), &s), v);
        assert!(canonical_permutation(&from, &[0, 0, 0, 2, 1], 3).is_none());
    }

    #[test]
    fn schedule_matches_closed_forms() {
        let e = EpsilonSchedule::new(0.1, 1.0, 0.5, 0.25, 0.0, 0.75);
        assert_abs_diff_eq!(e.eps1, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(e.eps2, 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(e.eps3, 0.275, epsilon = 1e-15);
        // n*delta = 2: 2e^{-4} + 1/4 dominates delta^2
        assert_abs_diff_eq!(schedule_epsilon(8, 0.25), 0.5 + 2.0 * (-4f64).exp() + 0.25, epsilon = 1e-15);
    }
}
