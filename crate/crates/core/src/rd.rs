//! Rate-distortion function of a finite source and a constructive covering
//! codebook for its typical set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::info::{DistTable, DistortionMeasure, ZERO_PROB};
use crate::types::{check_delta, enumerate_typical, symbols_typical, Sequence, ENUMERATION_CAP};

/// Iteration cap for one Blahut-Arimoto run.
pub const BA_MAX_ITERATIONS: usize = 100_000;

/// Duality-gap threshold (nats) at which a run is declared converged.
pub const BA_GAP_TOL: f64 = 1e-9;

/// Bisection stops once the achieved distortion lies in `[target - tol, target]`.
const DISTORTION_TOL: f64 = 1e-7;

const SLOPE_CAP: f64 = 1e5;

/// A point on the rate-distortion curve with the test channel attaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdSolution {
    pub rate_bits: f64,
    /// `P(Uhat | U)`, conditioned on the row axis of the distortion measure.
    pub test_channel: DistTable,
    pub distortion: f64,
    pub iterations: usize,
}

/// One row of a rate-distortion sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub d_prime: f64,
    pub rate_bits: f64,
    pub iterations: usize,
}

struct Problem<'a> {
    p: &'a [f64],
    d: &'a DistortionMeasure,
    nu: usize,
    nv: usize,
}

struct Run {
    channel: Vec<f64>,
    q: Vec<f64>,
    iterations: usize,
}

impl Problem<'_> {
    fn rate(&self, ch: &[f64]) -> f64 {
        let mut q = vec![0.0; self.nv];
        for u in 0..self.nu {
            for v in 0..self.nv {
                q[v] += self.p[u] * ch[u * self.nv + v];
            }
        }
        let mut r = 0.0;
        for u in 0..self.nu {
            for v in 0..self.nv {
                let w = ch[u * self.nv + v];
                let j = self.p[u] * w;
                if j > ZERO_PROB {
                    r += j * (w / q[v]).log2();
                }
            }
        }
        r.max(0.0)
    }

    fn distortion(&self, ch: &[f64]) -> f64 {
        let mut t = 0.0;
        for u in 0..self.nu {
            for v in 0..self.nv {
                t += self.p[u] * ch[u * self.nv + v] * self.d.cost(u, v);
            }
        }
        t
    }

    /// `exp(-beta (d(u,v) - min_v d(u,v)))` on the allowed pairs; the shift
    /// keeps the weights in range.
    fn kernel(&self, beta: f64, allowed: &[bool]) -> Vec<f64> {
        let (nu, nv) = (self.nu, self.nv);
        let mut kern = vec![0.0; nu * nv];
        for u in 0..nu {
            let dmin = (0..nv)
                .filter(|&v| allowed[u * nv + v])
                .map(|v| self.d.cost(u, v))
                .fold(f64::INFINITY, f64::min);
            for v in 0..nv {
                if allowed[u * nv + v] {
                    kern[u * nv + v] = (-beta * (self.d.cost(u, v) - dmin)).exp();
                }
            }
        }
        kern
    }

    /// `-sum_u p(u) ln sum_v q(v) kern(u,v)`, which every step decreases.
    fn objective(&self, kern: &[f64], q: &[f64]) -> f64 {
        let nv = self.nv;
        (0..self.nu)
            .filter(|&u| self.p[u] > 0.0)
            .map(|u| {
                let z: f64 = (0..nv).map(|v| q[v] * kern[u * nv + v]).sum();
                -self.p[u] * z.ln()
            })
            .sum()
    }

    /// One alternating-minimization step from `q`: the channel induced by
    /// `q`, the next output marginal and the duality gap at `q`.
    fn step(&self, kern: &[f64], allowed: &[bool], q: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let (nu, nv) = (self.nu, self.nv);
        let mut ch = vec![0.0; nu * nv];
        for u in 0..nu {
            let row = &mut ch[u * nv..(u + 1) * nv];
            let mut z = 0.0;
            for v in 0..nv {
                row[v] = q[v] * kern[u * nv + v];
                z += row[v];
            }
            if z > 0.0 {
                row.iter_mut().for_each(|x| *x /= z);
            } else {
                // q vanished on the whole allowed set of u: restart there uniformly
                let cnt = (0..nv).filter(|&v| allowed[u * nv + v]).count() as f64;
                for v in 0..nv {
                    row[v] = if allowed[u * nv + v] { 1.0 / cnt } else { 0.0 };
                }
            }
        }
        let mut c = vec![0.0; nv];
        for u in 0..nu {
            if self.p[u] <= 0.0 {
                continue;
            }
            let z: f64 = (0..nv).map(|v| q[v] * kern[u * nv + v]).sum();
            if z <= 0.0 {
                continue;
            }
            for v in 0..nv {
                c[v] += self.p[u] * kern[u * nv + v] / z;
            }
        }
        let log_c: Vec<f64> = c.iter().map(|&x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY }).collect();
        let max = log_c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let avg: f64 = q
            .iter()
            .zip(&log_c)
            .filter(|(&qv, _)| qv > 0.0)
            .map(|(&qv, &l)| qv * l)
            .sum();
        let mut next: Vec<f64> = (0..nv).map(|v| q[v] * c[v]).collect();
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        (ch, next, max - avg)
    }

    /// Alternating minimization at slope `beta` over channels supported on
    /// `allowed`, accelerated by squared extrapolation (SQUAREM). Near the
    /// slope where the rate leaves zero the plain iteration contracts at a
    /// rate close to 1; extrapolating along two consecutive steps removes
    /// that slow direction. Convergence is certified by the duality gap
    /// `max_v log c(v) - sum_v q(v) log c(v)` at the returned marginal.
    fn run(&self, beta: f64, allowed: &[bool], q0: &[f64]) -> Result<Run> {
        let kern = self.kernel(beta, allowed);
        let mut q = q0.to_vec();
        let mut it = 0;
        while it < BA_MAX_ITERATIONS {
            let (ch, q1, gap) = self.step(&kern, allowed, &q);
            it += 1;
            if gap < BA_GAP_TOL {
                return Ok(Run { channel: ch, q: q1, iterations: it });
            }
            let (ch1, q2, gap1) = self.step(&kern, allowed, &q1);
            it += 1;
            if gap1 < BA_GAP_TOL {
                return Ok(Run { channel: ch1, q: q2, iterations: it });
            }
            let r: Vec<f64> = q1.iter().zip(&q).map(|(a, b)| a - b).collect();
            let w: Vec<f64> = q2.iter().zip(&q1).zip(&r).map(|((a, b), r)| a - b - r).collect();
            let (rn, wn) = (norm(&r), norm(&w));
            if !(wn > 0.0) || !(rn > 0.0) {
                q = q2;
                continue;
            }
            let target = self.objective(&kern, &q2);
            let mut alpha = (-rn / wn).min(-1.0);
            let base = std::mem::replace(&mut q, q2.clone());
            // alpha = -1 reproduces q2, so the backtracking always ends
            while alpha < -1.0 {
                let cand: Vec<f64> = (0..base.len())
                    .map(|v| base[v] - 2.0 * alpha * r[v] + alpha * alpha * w[v])
                    .collect();
                let ok = cand.iter().zip(&q2).all(|(&c, &b)| if b > 0.0 { c > 0.0 } else { c >= 0.0 });
                if ok {
                    let s: f64 = cand.iter().sum();
                    let cand: Vec<f64> = cand.iter().map(|x| x / s).collect();
                    if self.objective(&kern, &cand) <= target {
                        q = cand;
                        break;
                    }
                }
                alpha = 0.5 * (alpha - 1.0);
                if alpha > -1.0 - 1e-3 {
                    break;
                }
            }
        }
        Err(Error::NonConvergence(format!(
            "Blahut-Arimoto did not converge within {BA_MAX_ITERATIONS} iterations at slope {beta}"
        )))
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `R(D')` and a test channel attaining it, via Blahut-Arimoto with
/// bisection on the slope parameter.
///
/// Targets at or above `min_v E d(U, v)` give rate zero with a deterministic
/// channel; targets at or below the smallest achievable distortion give the
/// minimum rate over channels supported on per-letter distortion minimizers.
pub fn blahut_arimoto(p_u: &DistTable, d_prime: &DistortionMeasure, target_d: f64) -> Result<RdSolution> {
    if p_u.is_conditional() || p_u.axes().len() != 1 {
        return invalid("source must be a joint PMF over one axis");
    }
    if p_u.axes()[0] != *d_prime.rows() {
        return invalid(format!(
            "source axis `{}` does not match the distortion rows `{}`",
            p_u.axes()[0].name,
            d_prime.rows().name
        ));
    }
    if !(target_d >= 0.0) || !target_d.is_finite() {
        return invalid(format!("distortion target must be finite and nonnegative, got {target_d}"));
    }
    let pb = Problem {
        p: p_u.values(),
        d: d_prime,
        nu: d_prime.rows().card,
        nv: d_prime.cols().card,
    };
    let (nu, nv) = (pb.nu, pb.nv);
    let finish = |ch: Vec<f64>, iterations: usize| -> Result<RdSolution> {
        let rate_bits = pb.rate(&ch);
        let distortion = pb.distortion(&ch);
        let test_channel = DistTable::conditional_with_tolerance(
            vec![d_prime.rows().clone(), d_prime.cols().clone()],
            &[d_prime.rows().name.as_str()],
            ch,
            1e-9,
        )?;
        Ok(RdSolution {
            rate_bits,
            test_channel,
            distortion,
            iterations,
        })
    };

    // zero-rate corner: one output letter for every input
    let (best_v, d_max) = (0..nv)
        .map(|v| (v, (0..nu).map(|u| pb.p[u] * pb.d.cost(u, v)).sum::<f64>()))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    if target_d >= d_max {
        let mut ch = vec![0.0; nu * nv];
        for u in 0..nu {
            ch[u * nv + best_v] = 1.0;
        }
        return finish(ch, 0);
    }

    let d_min: f64 = (0..nu)
        .map(|u| pb.p[u] * (0..nv).map(|v| pb.d.cost(u, v)).fold(f64::INFINITY, f64::min))
        .sum();
    let all = vec![true; nu * nv];
    let uniform = vec![1.0 / nv as f64; nv];
    if target_d <= d_min + DISTORTION_TOL {
        return boundary(&pb, finish);
    }

    let mut iterations = 0;
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut q = uniform.clone();
    let mut hi_run = loop {
        let r = pb.run(hi, &all, &q)?;
        iterations += r.iterations;
        q = r.q.clone();
        if pb.distortion(&r.channel) <= target_d {
            break r;
        }
        lo = hi;
        hi *= 2.0;
        if hi > SLOPE_CAP {
            return boundary(&pb, finish);
        }
    };
    for _ in 0..200 {
        let dh = pb.distortion(&hi_run.channel);
        if dh >= target_d - DISTORTION_TOL || hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let r = pb.run(mid, &all, &hi_run.q)?;
        iterations += r.iterations;
        if pb.distortion(&r.channel) <= target_d {
            hi = mid;
            hi_run = r;
        } else {
            lo = mid;
        }
    }
    finish(hi_run.channel, iterations)
}

/// Minimum-rate channel among those attaining the smallest distortion.
fn boundary(
    pb: &Problem<'_>,
    finish: impl Fn(Vec<f64>, usize) -> Result<RdSolution>,
) -> Result<RdSolution> {
    let (nu, nv) = (pb.nu, pb.nv);
    let mut allowed = vec![false; nu * nv];
    for u in 0..nu {
        let m = (0..nv).map(|v| pb.d.cost(u, v)).fold(f64::INFINITY, f64::min);
        for v in 0..nv {
            allowed[u * nv + v] = pb.d.cost(u, v) <= m;
        }
    }
    let r = pb.run(0.0, &allowed, &vec![1.0 / nv as f64; nv])?;
    finish(r.channel, r.iterations)
}

/// `R(D')` over an ascending grid.
pub fn rd_curve(p_u: &DistTable, d_prime: &DistortionMeasure, grid: &[f64]) -> Result<Vec<RdPoint>> {
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return invalid("distortion grid must be sorted ascending");
    }
    grid.iter()
        .map(|&dp| {
            let s = blahut_arimoto(p_u, d_prime, dp)?;
            Ok(RdPoint {
                d_prime: dp,
                rate_bits: s.rate_bits,
                iterations: s.iterations,
            })
        })
        .collect()
}

/// A covering codebook for the δ-typical source sequences of length `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdCodebook {
    /// Exactly `2^index_bits` codewords; entries past the greedy cover repeat
    /// it cyclically.
    pub codewords: Vec<Sequence>,
    pub index_bits: usize,
    /// Number of distinct codewords chosen by the cover.
    pub cover_size: usize,
    pub coverage_delta: f64,
    pub target_d: f64,
    pub eps_cov: f64,
    /// `R(D')` of the source at `target_d`.
    pub rd_rate: f64,
    /// `index_bits / N`.
    pub achieved_rate: f64,
    /// `N (target_d + eps_cov)`, the per-block distortion every typical
    /// source sequence is guaranteed to meet.
    pub coverage_radius: f64,
}

impl RdCodebook {
    pub fn block_len(&self) -> usize {
        self.codewords[0].len()
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }
}

struct Bitset(Vec<u64>);

impl Bitset {
    fn new(n: usize) -> Self {
        Bitset(vec![0; n.div_ceil(64)])
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn count_and_not(&self, covered: &Bitset) -> usize {
        self.0
            .iter()
            .zip(&covered.0)
            .map(|(a, b)| (a & !b).count_ones() as usize)
            .sum()
    }
    fn or_assign(&mut self, other: &Bitset) {
        self.0.iter_mut().zip(&other.0).for_each(|(a, b)| *a |= b);
    }
}

fn all_sequences(card: usize, n: usize) -> Result<Vec<Vec<usize>>> {
    let total = (card as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if total > ENUMERATION_CAP as u128 {
        return Err(Error::CapExceeded(format!("{card}^{n} reproduction sequences exceed the cap")));
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut cur = vec![0usize; n];
    for _ in 0..total {
        out.push(cur.clone());
        for d in (0..n).rev() {
            cur[d] += 1;
            if cur[d] < card {
                break;
            }
            cur[d] = 0;
        }
    }
    Ok(out)
}

/// Greedy set cover of `T_U^δ` at per-block distortion `N (target_d + eps_cov)`.
///
/// Candidates are the reproduction sequences typical for the output marginal
/// of the optimal test channel, widened to all of `Uhat^N` when those cannot
/// cover. The index length is the smallest `L` with `2^L >= |cover|`.
pub fn build_rd_codebook(
    p_u: &DistTable,
    d_prime: &DistortionMeasure,
    target_d: f64,
    n: usize,
    delta: f64,
    eps_cov: f64,
) -> Result<RdCodebook> {
    check_delta(delta)?;
    if n == 0 {
        return invalid("codebook block length must be positive");
    }
    if !(eps_cov >= 0.0) {
        return invalid("coverage slack must be nonnegative");
    }
    let sol = blahut_arimoto(p_u, d_prime, target_d)?;
    let sources: Vec<Vec<usize>> = enumerate_typical(p_u, n, delta)?
        .into_iter()
        .map(Sequence::into_symbols)
        .collect();
    if sources.is_empty() {
        return Err(Error::EmptyTypicalSet(format!(
            "no typical source sequence at N={n}, delta={delta}"
        )));
    }
    let radius = n as f64 * (target_d + eps_cov);
    let nv = d_prime.cols().card;
    let mut q = vec![0.0; nv];
    let pu = p_u.values();
    for u in 0..d_prime.rows().card {
        for v in 0..nv {
            q[v] += pu[u] * sol.test_channel.get(&[u, v]);
        }
    }
    let everything = all_sequences(nv, n)?;
    let preferred: Vec<Vec<usize>> = everything
        .iter()
        .filter(|c| symbols_typical(c, &q, delta))
        .cloned()
        .collect();
    let cover = match greedy_cover(&sources, &preferred, d_prime, radius) {
        Some(c) => c,
        None => greedy_cover(&sources, &everything, d_prime, radius).ok_or_else(|| {
            Error::Infeasible(format!("no reproduction sequence is within {radius} of some typical source"))
        })?,
    };
    let cover_size = cover.len();
    let index_bits = usize::BITS as usize - (cover_size - 1).leading_zeros() as usize;
    let index_bits = if cover_size == 1 { 0 } else { index_bits };
    let axis = d_prime.cols().clone();
    let codewords = (0..1usize << index_bits)
        .map(|i| Sequence::new(axis.clone(), cover[i % cover_size].clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(RdCodebook {
        codewords,
        index_bits,
        cover_size,
        coverage_delta: delta,
        target_d,
        eps_cov,
        rd_rate: sol.rate_bits,
        achieved_rate: index_bits as f64 / n as f64,
        coverage_radius: radius,
    })
}

fn greedy_cover(
    sources: &[Vec<usize>],
    candidates: &[Vec<usize>],
    d: &DistortionMeasure,
    radius: f64,
) -> Option<Vec<Vec<usize>>> {
    let m = sources.len();
    let sets: Vec<Bitset> = candidates
        .par_iter()
        .map(|c| {
            let mut b = Bitset::new(m);
            for (i, s) in sources.iter().enumerate() {
                if d.sequence_cost(s, c) <= radius + 1e-9 {
                    b.set(i);
                }
            }
            b
        })
        .collect();
    let mut covered = Bitset::new(m);
    let mut left = m;
    let mut chosen = Vec::new();
    while left > 0 {
        let (gain, best) = sets
            .par_iter()
            .enumerate()
            .map(|(i, s)| (s.count_and_not(&covered), i))
            .reduce(|| (0, usize::MAX), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
        if gain == 0 {
            return None;
        }
        covered.or_assign(&sets[best]);
        left -= gain;
        chosen.push(candidates[best].clone());
    }
    Some(chosen)
}

/// Index of the minimum-distortion codeword (lowest index on ties).
pub fn rd_encode(u: &[usize], codebook: &RdCodebook, d: &DistortionMeasure) -> Result<usize> {
    if u.len() != codebook.block_len() {
        return invalid(format!(
            "source block has length {}, codebook expects {}",
            u.len(),
            codebook.block_len()
        ));
    }
    let mut best = (f64::INFINITY, 0);
    for (i, c) in codebook.codewords.iter().enumerate() {
        let cost = d.sequence_cost(u, c.symbols());
        if cost < best.0 {
            best = (cost, i);
        }
    }
    Ok(best.1)
}

pub fn rd_decode(index: usize, codebook: &RdCodebook) -> Result<&Sequence> {
    codebook.codewords.get(index).ok_or_else(|| {
        Error::Validation(format!("codeword index {index} out of range for {} codewords", codebook.len()))
    })
}
