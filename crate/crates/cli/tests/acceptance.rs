//! One line per acceptance criterion; exits nonzero if any fails.

use std::path::{Path, PathBuf};
use std::process::Command as Proc;
use std::time::Instant;

use jwec::info::{binary_entropy, Axis, DistTable, DistortionMeasure};
use jwec::rd::blahut_arimoto;
use jwec::region::{
    attack_free_reduction, check_attack_free_reduction, eval_theorem2, eval_theorem4, identity_attack, independent_key,
    inherent_constraint_check, optimize_region, AuxChannel, FixedCoordinates, Objective, OptimizerConfig,
    RegionOptimum, RegionPoint, SystemSpec, REDUCTION_PAIRS,
};
use jwec::sim::{
    atypical_input_probability, bin_multiplicity_audit, bits_to_index, build_codebooks, compression_audits, decrypt,
    divergence_exact, encrypt, estimate_equivocation, index_to_bits, run_trials_with, sample_atypical_inputs,
    sw_encode, CodebookSet, EquivocationMode, KeyBits, RatePolicy, SimConfig, TrialEvent,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bin(name: &str) -> Axis {
    Axis::new(name, 2)
}

fn bss() -> DistTable {
    DistTable::joint(vec![bin("U")], vec![0.5, 0.5]).unwrap()
}

fn hamming(a: &str, b: &str) -> DistortionMeasure {
    DistortionMeasure::hamming(bin(a), bin(b)).unwrap()
}

fn bsc(from: &str, to: &str, p: f64) -> DistTable {
    DistTable::conditional(vec![bin(from), bin(to)], &[from], vec![1.0 - p, p, p, 1.0 - p]).unwrap()
}

fn binary_spec(p_xk: DistTable, attack: DistTable, lambda: f64) -> SystemSpec {
    SystemSpec::new(bss(), p_xk, attack, lambda, hamming("X", "Y"), hamming("U", "Uhat")).unwrap()
}

/// Uniform binary cover, one key symbol, no attack, `lambda = 1/2`.
fn desk_spec() -> SystemSpec {
    binary_spec(independent_key(&[0.5, 0.5], &[1.0]).unwrap(), identity_attack(2).unwrap(), 0.5)
}

fn build(spec: &SystemSpec, aux: &AuxChannel, cfg: &SimConfig, seed: u64) -> CodebookSet {
    build_codebooks(spec, aux, cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Codes simulated by criteria 5 and 6, audited again by criterion 9.
#[derive(Default)]
struct Simulated(Vec<(String, CodebookSet)>);

/// Optimizer outputs of criterion 2, checked again by criterion 9.
#[derive(Default)]
struct Optimized(Vec<(SystemSpec, RegionOptimum)>);

fn criterion_1() -> Outcome {
    let d = hamming("U", "Uhat");
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for i in 1..=9 {
        let dp = 0.05 * i as f64;
        let t = Instant::now();
        let sol = blahut_arimoto(&bss(), &d, dp).map_err(|e| e.to_string())?;
        slowest = slowest.max(t.elapsed().as_secs_f64());
        worst = worst.max((sol.rate_bits - (1.0 - binary_entropy(dp))).abs());
    }
    check(
        worst <= 1e-4 && slowest < 1.0,
        format!("max |R - (1 - h2(D'))| = {worst:.2e} bits, slowest point {slowest:.4} s"),
    )
}

fn criterion_2(opt: &mut Optimized) -> Outcome {
    let spec = binary_spec(
        independent_key(&[0.5, 0.5], &[0.5, 0.5]).unwrap(),
        identity_attack(2).unwrap(),
        1.0,
    );
    // Coordinate-for-coordinate identity over channels and points.
    let mut worst = 0.0f64;
    let mut cases = 0;
    for q in [0.0, 0.1, 0.25, 0.4, 0.5] {
        let aux = AuxChannel::v_equals_y(&spec, &bsc("X", "Y", q)).unwrap();
        for (d, dp) in [(0.1, 0.05), (0.25, 0.3), (0.5, 0.45)] {
            let point = RegionPoint {
                d,
                d_prime: dp,
                r_c: 0.5,
                r_c_prime: 0.5,
                h: 1.0,
                h_prime: 0.5,
            };
            let id = attack_free_reduction(&spec, &aux, &point)
                .map_err(|e| e.to_string())?
                .ok_or("reduction not recognized")?;
            let t2 = eval_theorem2(&spec, &bsc("X", "Y", q), &point).map_err(|e| e.to_string())?;
            for (a, b) in REDUCTION_PAIRS {
                let (x, y) = (id.keyed.condition(a).unwrap(), t2.condition(b).unwrap());
                worst = worst.max((x.attained - y.attained).abs()).max((x.bound - y.bound).abs());
                if x.satisfied != y.satisfied {
                    return Err(format!("verdicts differ on ({a}, {b}) at q = {q}"));
                }
            }
            cases += 1;
        }
    }
    // Smallest R_c at D = 0.25, D' = 0.3 under the attack-free conditions,
    // by grid search over P(Y|X).
    let (d, dp) = (0.25, 0.3);
    let grid = 400;
    let mut oracle = f64::INFINITY;
    for i in 0..=grid {
        for j in 0..=grid {
            let (a, b) = (i as f64 / grid as f64, j as f64 / grid as f64);
            let ch = DistTable::conditional(vec![bin("X"), bin("Y")], &["X"], vec![1.0 - a, a, b, 1.0 - b]).unwrap();
            let point = RegionPoint {
                d,
                d_prime: dp,
                ..RegionPoint::default()
            };
            let r = eval_theorem2(&spec, &ch, &point).unwrap();
            let (ci, ciii) = (r.condition("c_i").unwrap(), r.condition("c_iii").unwrap());
            if ci.satisfied && ciii.satisfied {
                oracle = oracle.min(r.condition("c_ii").unwrap().attained);
            }
        }
    }
    let closed_form = 1.0 - binary_entropy(dp) + 1.0 - binary_entropy(d);
    let fixed = FixedCoordinates {
        d: Some(d),
        d_prime: Some(dp),
        ..FixedCoordinates::default()
    };
    let cfg = OptimizerConfig {
        restarts: 32,
        seed: 11,
        ..OptimizerConfig::default()
    };
    let best = optimize_region(&spec, &fixed, Objective::MinimizeRc, &cfg).map_err(|e| e.to_string())?;
    let gap = (best.value - oracle).abs();
    let value = best.value;
    opt.0.push((spec, best));
    check(
        worst <= 1e-9 && gap <= 1e-3 && (oracle - closed_form).abs() <= 1e-3,
        format!(
            "{cases} channel/point pairs, max deviation {worst:.1e}; optimizer min R_c = {value:.6} vs grid oracle {oracle:.6} (closed form {closed_form:.6})"
        ),
    )
}

fn criterion_3() -> Outcome {
    let p_xk = DistTable::joint(vec![bin("X"), bin("K")], vec![0.3, 0.2, 0.1, 0.4]).unwrap();
    let spec = binary_spec(p_xk, identity_attack(2).unwrap(), 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut min_slack = f64::INFINITY;
    for _ in 0..200 {
        let aux = AuxChannel::random(&spec, 3, &mut rng).unwrap();
        let r = check_attack_free_reduction(&spec, &aux).map_err(|e| e.to_string())?;
        min_slack = r.slacks.iter().copied().fold(min_slack, f64::min);
    }
    check(min_slack >= -1e-9, format!("200 channels on |K||X||Y||V| = 2x2x2x3, min link slack {min_slack:.2e}"))
}

fn criterion_4() -> Outcome {
    let p_xk = DistTable::joint(vec![bin("X"), bin("K")], vec![0.3, 0.0, 0.0, 0.7]).unwrap();
    let spec = binary_spec(p_xk, bsc("Y", "Z", 0.1), 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut nonzero = 0;
    for _ in 0..50 {
        let aux = AuxChannel::random(&spec, 3, &mut rng).unwrap();
        let r = eval_theorem4(&spec, &aux, &RegionPoint::default()).map_err(|e| e.to_string())?;
        if r.quantity("I(V;X|K)") != Some(0.0) || r.quantity("I(X;Y,V|K)") != Some(0.0) {
            nonzero += 1;
        }
    }
    check(nonzero == 0, format!("50 channels with K = X, {nonzero} with a nonzero term"))
}

fn criterion_5(sims: &mut Simulated) -> Outcome {
    let mut pairs = 0u64;
    for l in 0..=12usize {
        for j in 0..=l {
            for s in 0..1usize << j {
                let pad = index_to_bits(s, j);
                for w in 0..1usize << l {
                    let bits = index_to_bits(w, l);
                    let back = decrypt(&encrypt(&bits, &pad).unwrap(), &pad).unwrap();
                    if bits_to_index(&back) != w {
                        return Err(format!("involution fails at L = {l}, J = {j}, w = {w}, s = {s}"));
                    }
                    pairs += 1;
                }
            }
        }
    }
    let spec = desk_spec();
    let aux = AuxChannel::v_equals_y(&spec, &bsc("X", "Y", 0.25)).unwrap();
    let cfg = SimConfig::new(12, 0.25)
        .with_delta(0.75)
        .with_rates(RatePolicy::Bits { aux: 5, stego: 1 })
        .with_key_bits(KeyBits::IndexLength);
    let cb = build(&spec, &aux, &cfg, 1);
    let run = run_trials_with(&cb, 10_000, 2).map_err(|e| e.to_string())?;
    let mut clean = 0;
    let mut broken = 0;
    for r in &run.results {
        if r.event == TrialEvent::None {
            clean += 1;
            let expect = cb.rd_codebook().codewords[r.sent_message].symbols();
            if r.decoded_message != Some(r.sent_message) || r.uhat.as_deref() != Some(expect) || !r.message_correct {
                broken += 1;
            }
        }
    }
    let violations = run.aggregate.certificate_violations;
    sims.0.push(("criterion 5, n = 12".into(), cb));
    check(
        broken == 0 && violations == 0,
        format!(
            "{pairs} (L, J, w, s) involutions; {clean} clean blocks of 10000, {broken} not round-tripped; {violations} certificate violations"
        ),
    )
}

fn criterion_6(sims: &mut Simulated) -> Outcome {
    let spec = desk_spec();
    let aux = AuxChannel::v_equals_y(&spec, &bsc("X", "Y", 0.25)).unwrap();
    let trials = 1000;
    let mut rates = Vec::new();
    for n in [8, 16] {
        let cfg = SimConfig::new(n, 0.25)
            .with_delta(0.75)
            .with_rates(RatePolicy::Margin(0.15))
            .with_key_bits(KeyBits::IndexLength);
        let cb = build(&spec, &aux, &cfg, 5);
        let run = run_trials_with(&cb, trials, 6).map_err(|e| e.to_string())?;
        rates.push(run.aggregate.message_errors as f64 / trials as f64);
        sims.0.push((format!("criterion 6, n = {n}"), cb));
    }
    // One-sided two-proportion test of H0: p16 <= p8 at the 5% level.
    let (p8, p16) = (rates[0], rates[1]);
    let pooled = (p8 + p16) / 2.0;
    let se = (pooled * (1.0 - pooled) * 2.0 / trials as f64).sqrt();
    let z = if se > 0.0 { (p16 - p8) / se } else { 0.0 };
    let trend_ok = z < 1.6449;

    let big = binary_spec(independent_key(&[0.5, 0.5], &[1.0]).unwrap(), identity_attack(2).unwrap(), 0.5);
    let (n, delta) = (2000, 0.04);
    let exact = atypical_input_probability(&big, n, delta).map_err(|e| e.to_string())?;
    let sampled = sample_atypical_inputs(&big, n, delta, 4000, 7).map_err(|e| e.to_string())?;
    check(
        trend_ok && (exact - sampled).abs() <= 0.02,
        format!(
            "error rate n=8: {p8:.3}, n=16: {p16:.3} ({trials} trials each, z = {z:.2}); e1 at n=2000: sampled {sampled:.4} vs exact {exact:.4}"
        ),
    )
}

fn blank_cover_spec(kc: usize) -> SystemSpec {
    let p_xk = independent_key(&[1.0], &vec![1.0 / kc as f64; kc]).unwrap();
    let d = DistortionMeasure::new(Axis::new("X", 1), bin("Y"), vec![0.0, 1.0]).unwrap();
    SystemSpec::new(bss(), p_xk, identity_attack(2).unwrap(), 0.5, d, hamming("U", "Uhat")).unwrap()
}

fn uniform_stego(spec: &SystemSpec) -> AuxChannel {
    let p = DistTable::conditional(vec![Axis::new("X", 1), bin("Y")], &["X"], vec![0.5, 0.5]).unwrap();
    AuxChannel::v_equals_y(spec, &p).unwrap()
}

/// Whether the stego vectors sent for message 0 and message 1 are the same
/// multiset over the balanced keys, so the pad hides the bin completely.
fn pads_balance(cb: &CodebookSet) -> bool {
    use std::collections::HashMap;
    let rep = &cb.representatives()[0];
    if rep.aux[0] == rep.aux[1] {
        return false;
    }
    let mut weight: HashMap<Vec<usize>, i32> = HashMap::new();
    for bits in 0..16usize {
        let k: Vec<usize> = index_to_bits(bits, 4).into_iter().map(usize::from).collect();
        if k.iter().sum::<usize>() != 2 {
            continue;
        }
        // The codebook of `k` is the representative's, permuted onto `k`.
        let sigma = permutation_onto(&rep.key, &k);
        let s = bits_to_index(&sw_encode(&k, cb).unwrap());
        let (for0, for1) = if s == 0 { (&rep.aux[0], &rep.aux[1]) } else { (&rep.aux[1], &rep.aux[0]) };
        *weight.entry(apply(for0, &sigma)).or_default() += 1;
        *weight.entry(apply(for1, &sigma)).or_default() -= 1;
    }
    weight.values().all(|&w| w == 0)
}

/// The canonical (stable) permutation taking `from` to `to`: the i-th
/// occurrence of each symbol maps to its i-th occurrence.
fn permutation_onto(from: &[usize], to: &[usize]) -> Vec<usize> {
    let mut sigma = vec![0; from.len()];
    for a in 0..2 {
        let src = from.iter().enumerate().filter(|(_, &s)| s == a).map(|(i, _)| i);
        let dst = to.iter().enumerate().filter(|(_, &s)| s == a).map(|(i, _)| i);
        for (i, j) in src.zip(dst) {
            sigma[i] = j;
        }
    }
    sigma
}

fn apply(v: &[usize], sigma: &[usize]) -> Vec<usize> {
    let mut out = vec![0; v.len()];
    for (i, &j) in sigma.iter().enumerate() {
        out[j] = v[i];
    }
    out
}

fn criterion_7() -> Outcome {
    // (i) One bin: the eavesdropper learns nothing about U.
    let spec = blank_cover_spec(2);
    let cfg = SimConfig::new(4, 0.5)
        .with_delta(0.25)
        .with_rates(RatePolicy::Bits { aux: 0, stego: 0 })
        .with_key_bits(KeyBits::Fixed(0));
    let cb = build(&spec, &uniform_stego(&spec), &cfg, 1);
    let e = estimate_equivocation(&cb, EquivocationMode::Exact).map_err(|e| e.to_string())?;
    let i_ok = cb.rates().bins() == 1 && (e.total_h_u_given_yz() - 2.0).abs() <= 1e-12;
    let i_val = e.total_h_u_given_yz();

    // (ii) No pad, distinct codewords, identity attack.
    let spec = blank_cover_spec(1);
    let cfg = SimConfig::new(4, 0.0)
        .with_delta(0.25)
        .with_rates(RatePolicy::Bits { aux: 0, stego: 0 })
        .with_key_bits(KeyBits::Fixed(0));
    let aux = uniform_stego(&spec);
    let cb = (0..100)
        .map(|s| build(&spec, &aux, &cfg, s))
        .find(|cb| cb.representatives()[0].aux[0] != cb.representatives()[0].aux[1])
        .ok_or("no code with distinct codewords in 100 draws")?;
    let e = estimate_equivocation(&cb, EquivocationMode::Exact).map_err(|e| e.to_string())?;
    let ii_ok = cb.rates().key_bits == 0 && e.h_uhat_given_yz.abs() <= 1e-12;
    let ii_val = e.h_uhat_given_yz * e.message_len as f64;

    // (iii) One-bit pad over a one-bit bin index.
    let spec = blank_cover_spec(2);
    let cfg = SimConfig::new(4, 0.0)
        .with_delta(0.25)
        .with_rates(RatePolicy::Bits { aux: 0, stego: 0 })
        .with_key_bits(KeyBits::IndexLength);
    let aux = uniform_stego(&spec);
    let cb = (0..400)
        .map(|s| build(&spec, &aux, &cfg, s))
        .find(pads_balance)
        .ok_or("no balanced code in 400 draws")?;
    let e = estimate_equivocation(&cb, EquivocationMode::Exact).map_err(|e| e.to_string())?;
    let iii = e.h_message_given_yz_typical.unwrap_or(f64::NAN);
    check(
        i_ok && ii_ok && (iii - 1.0).abs() <= 1e-9,
        format!("(i) H(U^N|Y,Z) = {i_val} = N H(U) = 2; (ii) H(Uhat^N|Y,Z) = {ii_val}; (iii) bin equivocation {iii} bits"),
    )
}

fn criterion_8() -> Outcome {
    let mut violations = 0;
    let mut points = 0;
    for n in [5usize, 10, 20, 50] {
        for i in 0..5 {
            let a = 0.05 + 0.2 * i as f64;
            for j in 1..=5 {
                let b = a + (1.0 - a) * j as f64 / 5.0;
                let bound = (n as f64 * (b - a) - std::f64::consts::LOG2_E) * 2f64.powf(-(n as f64) * a);
                let exact = divergence_exact(a, b, n).map_err(|e| e.to_string())?;
                if exact < bound {
                    violations += 1;
                }
                points += 1;
            }
        }
    }
    let spec = desk_spec();
    let aux = AuxChannel::v_equals_y(&spec, &bsc("X", "Y", 0.25)).unwrap();
    let cfg = SimConfig::new(10, 0.25)
        .with_delta(0.75)
        .with_rates(RatePolicy::Bits { aux: 4, stego: 1 })
        .with_key_bits(KeyBits::IndexLength);
    let mut failed = 0;
    let mut worst = 0usize;
    let mut bound = 0.0;
    for seed in 0..100 {
        let cb = build(&spec, &aux, &cfg, seed);
        let a = bin_multiplicity_audit(&cb, 0.5).map_err(|e| e.to_string())?;
        worst = worst.max(a.max_bins_within);
        bound = a.bound;
        if !a.pass {
            failed += 1;
        }
    }
    check(
        violations == 0 && points == 100 && failed == 0,
        format!(
            "{points} grid points, {violations} violations; 100 rebuilds at n = 10: {failed} failed audits, max bins per vector {worst} <= 2^(n gamma) = {bound}"
        ),
    )
}

fn criterion_9(sims: &Simulated, opt: &Optimized) -> Outcome {
    let mut failures = Vec::new();
    for (name, cb) in &sims.0 {
        let a = compression_audits(cb).map_err(|e| e.to_string())?;
        if !a.public_within_bound {
            failures.push(format!("{name}: distinct stego rate {} > {}", a.distinct_stego_rate, a.public_bound));
        }
        if !a.private_within_bound {
            failures.push(format!(
                "{name}: composite rate {} > {} + {}",
                a.composite_rate, a.private_bound, a.rounding_slack
            ));
        }
    }
    // Further optimizer outputs on a noisy, correlated system.
    let p_xk = DistTable::joint(vec![bin("X"), bin("K")], vec![0.3, 0.2, 0.1, 0.4]).unwrap();
    let noisy = binary_spec(p_xk, bsc("Y", "Z", 0.05), 0.5);
    let mut outputs: Vec<(&SystemSpec, &RegionOptimum)> = opt.0.iter().map(|(s, o)| (s, o)).collect();
    let mut extra = Vec::new();
    for (i, obj) in [Objective::MaximizeH, Objective::MinimizeRcPrime, Objective::MinimizeDPrime].into_iter().enumerate() {
        let fixed = match obj {
            Objective::MinimizeDPrime => FixedCoordinates {
                d: Some(0.3),
                ..FixedCoordinates::default()
            },
            _ => FixedCoordinates {
                d: Some(0.3),
                d_prime: Some(0.3),
                ..FixedCoordinates::default()
            },
        };
        let cfg = OptimizerConfig {
            restarts: 8,
            seed: i as u64,
            ..OptimizerConfig::default()
        };
        extra.push(optimize_region(&noisy, &fixed, obj, &cfg).map_err(|e| e.to_string())?);
    }
    outputs.extend(extra.iter().map(|o| (&noisy, o)));
    for (spec, o) in &outputs {
        let c = inherent_constraint_check(spec, &o.aux, o.point.d_prime).map_err(|e| e.to_string())?;
        if !c.holds {
            failures.push(format!("optimizer output violates the inherent constraint by {}", -c.slack));
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} simulated codes audited, {} optimizer outputs checked", sims.0.len(), outputs.len())
        } else {
            failures.join("; ")
        },
    )
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for name in ["rd", "sweep", "region_eval", "region_opt", "simulate", "audit"] {
        let mut runs = Vec::new();
        for sub in ["first", "second"] {
            let out = dir.path().join(name).join(sub);
            let st = Proc::new(env!("CARGO_BIN_EXE_jwec"))
                .args(["run", "--config"])
                .arg(configs().join(format!("{name}.toml")))
                .arg("--out")
                .arg(&out)
                .output()
                .map_err(|e| e.to_string())?;
            if !st.status.success() {
                return Err(format!("{name}: {}", String::from_utf8_lossy(&st.stderr)));
            }
            let mut files: Vec<_> = std::fs::read_dir(&out)
                .map_err(|e| e.to_string())?
                .map(|e| e.unwrap().path())
                .collect();
            files.sort();
            let contents: Vec<_> = files
                .iter()
                .map(|p| (p.file_name().unwrap().to_owned(), std::fs::read(p).unwrap()))
                .collect();
            runs.push(contents);
        }
        if runs[0] != runs[1] {
            return Err(format!("{name}: artifacts differ between runs"));
        }
        compared += runs[0].len();
    }
    Ok(format!("6 commands run twice, {compared} artifacts byte-identical"))
}

fn main() {
    let mut sims = Simulated::default();
    let mut opt = Optimized::default();
    let results = vec![
        (1, "rate-distortion oracle", criterion_1()),
        (2, "region reduction identity", criterion_2(&mut opt)),
        (3, "attack-free chain", criterion_3()),
        (4, "private-watermarking degeneracy", criterion_4()),
        (5, "simulator correctness core", criterion_5(&mut sims)),
        (6, "error-event decay trend", criterion_6(&mut sims)),
        (7, "equivocation at exact scale", criterion_7()),
        (8, "divergence bound and bin audit", criterion_8()),
        (9, "compression audits", criterion_9(&sims, &opt)),
        (10, "CLI determinism", criterion_10()),
    ];
    let mut failed = 0;
    for (i, name, r) in &results {
        match r {
            Ok(d) => println!("criterion {i:>2} PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {i:>2} FAIL  {name}: {d}");
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
