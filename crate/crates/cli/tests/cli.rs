use std::path::{Path, PathBuf};
use std::process::Command as Proc;

use jwec::info::{Axis, DistTable, DistortionMeasure};
use jwec::rd::rd_curve;
use jwec_cli::{load_config_file, parse_config, parse_config_in, run, Command, ConfigError, Overrides, RunConfig};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> RunConfig {
    load_config_file(&configs().join(name), &Overrides::default()).unwrap()
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

/// Data rows of an artifact, comment line skipped.
fn rows(bytes: &[u8]) -> Vec<csv::StringRecord> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(bytes)
        .records()
        .map(Result::unwrap)
        .collect()
}

#[test]
fn missing_seed_is_named() {
    let mut cfg = load("simulate.toml");
    cfg.seed = None;
    let e = cfg.validate().unwrap_err().to_string();
    assert!(e.contains("`seed`"), "{e}");
}

#[test]
fn missing_fields_per_command_are_named() {
    let mut cfg = load("region_eval.toml");
    cfg.point = None;
    assert!(cfg.validate().unwrap_err().to_string().contains("`point`"));
    let mut cfg = load("simulate.toml");
    cfg.aux = None;
    assert!(cfg.validate().unwrap_err().to_string().contains("`aux`"));
    let mut cfg = load("rd.toml");
    cfg.d_prime_grid = Some(vec![]);
    assert!(cfg.validate().unwrap_err().to_string().contains("`d_prime_grid`"));
}

#[test]
fn full_keyed_spec_round_trips() {
    let cfg = load_config_file(
        &configs().join("sweep.toml"),
        &Overrides {
            spec: Some(configs().join("specs/ternary_attack.toml")),
            aux: Some(configs().join("aux/ternary_table.toml")),
            ..Overrides::default()
        },
    )
    .unwrap();
    let system = cfg.spec.system().unwrap();
    assert_eq!(
        [system.card_k(), system.card_x(), system.card_y(), system.card_z()],
        [2, 2, 3, 3]
    );
    assert_eq!(cfg.aux.as_ref().unwrap().channel(&cfg.spec, &system).unwrap().v_card(), 2);
    let written = cfg.to_toml();
    let again = parse_config(&written).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.to_toml(), written);
}

#[test]
fn conditional_slice_errors_name_table_and_slice() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("aux.toml"),
        "kind = \"v_equals_y\"\np_y_given_x = [[0.75, 0.25], [0.25, 0.7]]\n",
    )
    .unwrap();
    let spec = configs().join("specs/binary_bsc.toml");
    let cfg = format!(
        "command = \"region-eval\"\nspec = {:?}\naux = \"aux.toml\"\npoint = {{ d = 0.3, d_prime = 0.3, r_c = 1.0, r_c_prime = 1.0, h = 0.0, h_prime = 0.0 }}\n",
        spec.display().to_string()
    );
    let e = parse_config_in(&cfg, dir.path()).unwrap_err().to_string();
    assert!(e.contains("aux.p_y_given_x") && e.contains("X=1") && e.contains("sums to"), "{e}");
}

#[test]
fn syntax_errors_in_referenced_files_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.toml"), "lambda = 0.5\np_u = [0.5, 0.5\n").unwrap();
    let e = parse_config_in("command = \"rd\"\nspec = \"spec.toml\"\nd_prime_grid = [0.1]\n", dir.path()).unwrap_err();
    match e {
        ConfigError::Syntax { file, line, .. } => {
            assert!(file.unwrap().ends_with("spec.toml"));
            assert!(line >= 2);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn rd_csv_matches_rd_curve() {
    let cfg = load("rd.toml");
    let out = run(&cfg).unwrap();
    let grid = cfg.d_prime_grid.clone().unwrap();
    let p_u = DistTable::joint(vec![Axis::new("U", 2)], vec![0.5, 0.5]).unwrap();
    let d = DistortionMeasure::hamming(Axis::new("U", 2), Axis::new("Uhat", 2)).unwrap();
    let curve = rd_curve(&p_u, &d, &grid).unwrap();
    let csv = rows(&out.artifact("rd.csv").unwrap().bytes);
    assert_eq!(csv.len(), curve.len());
    for (r, p) in csv.iter().zip(&curve) {
        assert_eq!(r[0].parse::<f64>().unwrap(), p.d_prime);
        assert_eq!(r[1].parse::<f64>().unwrap(), p.rate_bits);
    }
}

#[test]
fn sweep_rates_match_rd_curve_and_feasibility_is_monotone() {
    let cfg = load("sweep.toml");
    let out = run(&cfg).unwrap();
    let rd = run(&load("rd.toml")).unwrap();
    let a = rows(&out.artifact("sweep.csv").unwrap().bytes);
    let b = rows(&rd.artifact("rd.csv").unwrap().bytes);
    assert_eq!(a.len(), b.len());
    let mut last = f64::NEG_INFINITY;
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(&x[0], &y[0]);
        assert_eq!(&x[1], &y[1]);
        let slack: f64 = x[5].parse().unwrap();
        assert!(slack >= last - 1e-12);
        last = slack;
    }
}

#[test]
fn region_eval_marks_the_attack_free_reduction() {
    let out = run(&load("region_eval.toml")).unwrap();
    let report = text(&out.artifact("report.txt").unwrap().bytes);
    assert!(report.contains("attack-free reduction: EQUIVALENT"), "{report}");
    let red = rows(&out.artifact("reduction.csv").unwrap().bytes);
    assert_eq!(red.len(), 5);
    assert!(red.iter().all(|r| r[6].parse::<f64>().unwrap() <= 1e-9));
    // A noisy attack has no reduction to mark.
    let cfg = load_config_file(
        &configs().join("region_eval.toml"),
        &Overrides {
            spec: Some(configs().join("specs/ternary_attack.toml")),
            aux: Some(configs().join("aux/ternary_table.toml")),
            ..Overrides::default()
        },
    )
    .unwrap();
    let out = run(&cfg).unwrap();
    assert!(text(&out.artifact("report.txt").unwrap().bytes).contains("not applicable"));
    assert!(rows(&out.artifact("reduction.csv").unwrap().bytes).is_empty());
}

#[test]
fn every_artifact_carries_the_manifest_hash() {
    for name in ["rd.toml", "sweep.toml", "region_eval.toml", "region_opt.toml", "simulate.toml", "audit.toml"] {
        let out = run(&load(name)).unwrap();
        let line = format!("# manifest: {}\n", out.manifest_hash);
        assert!(out.artifacts.len() >= 2);
        for a in &out.artifacts {
            assert!(a.bytes.starts_with(line.as_bytes()), "{name}/{}", a.name);
        }
    }
}

#[test]
fn simulate_twice_is_byte_identical() {
    let cfg = load("simulate.toml");
    assert_eq!((cfg.n, cfg.trials), (Some(12), Some(100)));
    assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
}

#[test]
fn seed_and_output_directory_enter_the_hash_differently() {
    let cfg = load("simulate.toml");
    let a = run(&cfg).unwrap();
    let mut moved = cfg.clone();
    moved.out = Some("elsewhere".into());
    assert_eq!(run(&moved).unwrap(), a);
    let mut reseeded = cfg.clone();
    reseeded.seed = Some(2);
    let b = run(&reseeded).unwrap();
    assert_ne!(a.manifest_hash, b.manifest_hash);
    assert_ne!(a.artifact("trials.csv"), b.artifact("trials.csv"));
}

#[test]
fn rerunning_from_a_manifest_reproduces_the_artifacts() {
    for name in ["sweep.toml", "simulate.toml", "audit.toml"] {
        let out = run(&load(name)).unwrap();
        let manifest = text(&out.artifact("manifest.toml").unwrap().bytes);
        let again = run(&parse_config(manifest).unwrap()).unwrap();
        assert_eq!(again, out, "{name}");
    }
}

#[test]
fn exact_equivocation_is_written_on_request() {
    let mut cfg = load("simulate.toml");
    cfg.n = Some(4);
    cfg.trials = Some(20);
    cfg.delta = Some(0.9);
    cfg.rates = Some(jwec::sim::RatePolicy::Bits { aux: 2, stego: 0 });
    cfg.exact_equivocation = true;
    let out = run(&cfg).unwrap();
    let eq = rows(&out.artifact("equivocation.csv").unwrap().bytes);
    let h: f64 = eq.iter().find(|r| &r[0] == "h_u_given_yz_per_symbol").unwrap()[1].parse().unwrap();
    assert!((0.0..=1.0 + 1e-12).contains(&h));
    cfg.ensemble = Some(2);
    let eq = rows(&run(&cfg).unwrap().artifact("equivocation.csv").unwrap().bytes);
    assert_eq!(&eq[0][1], "2");
}

#[test]
fn optimizer_output_passes_the_inherent_constraint() {
    let out = run(&load("region_opt.toml")).unwrap();
    let m = rows(&out.artifact("optimum.csv").unwrap().bytes);
    let get = |k: &str| m.iter().find(|r| &r[0] == k).unwrap()[1].to_string();
    assert_eq!(get("inherent_holds"), "true");
    let c = rows(&out.artifact("conditions.csv").unwrap().bytes);
    assert!(c.iter().all(|r| &r[6] == "true"));
}

fn jwec(args: &[&str], cwd: &Path) -> (i32, String) {
    let o = Proc::new(env!("CARGO_BIN_EXE_jwec")).args(args).current_dir(cwd).output().unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stderr).into_owned())
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let c = configs();
    let c = c.to_str().unwrap();
    let out = dir.path().to_str().unwrap();

    let (code, _) = jwec(&["rd", "--config", &format!("{c}/rd.toml"), "--out", out], dir.path());
    assert_eq!(code, 0);
    assert!(dir.path().join("rd.csv").exists());

    let (code, err) = jwec(&["simulate", "--spec", &format!("{c}/specs/binary_bsc.toml"), "--n", "12"], dir.path());
    assert_eq!(code, 2, "{err}");
    assert!(err.starts_with("error[validation]") && err.contains("`seed`"), "{err}");

    let (code, err) = jwec(&["simulate", "--config", &format!("{c}/rd.toml")], dir.path());
    assert_eq!(code, 2, "{err}");

    // The attack erases everything, so no message rate is embeddable.
    std::fs::write(
        dir.path().join("erasing.toml"),
        std::fs::read_to_string(format!("{c}/specs/binary_bsc.toml"))
            .unwrap()
            .replace("attack = \"identity\"", "attack = [[0.5, 0.5], [0.5, 0.5]]"),
    )
    .unwrap();
    let (code, err) = jwec(
        &["simulate", "--config", &format!("{c}/simulate.toml"), "--spec", "erasing.toml", "--out", out],
        dir.path(),
    );
    assert_eq!(code, 3, "{err}");
    assert!(err.starts_with("error[infeasible]"), "{err}");

    std::fs::write(
        dir.path().join("big.toml"),
        std::fs::read_to_string(format!("{c}/simulate.toml"))
            .unwrap()
            .replace("aux = 5", "aux = 40")
            .replace("specs/", &format!("{c}/specs/"))
            .replace("aux/", &format!("{c}/aux/")),
    )
    .unwrap();
    let (code, err) = jwec(&["run", "--config", "big.toml", "--out", out], dir.path());
    assert_eq!(code, 4, "{err}");
    assert!(err.starts_with("error[cap-exceeded]"), "{err}");
}

#[test]
fn cli_runs_are_byte_identical_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("simulate.toml");
    let mut seen = Vec::new();
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        let (code, err) = jwec(
            &["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
            dir.path(),
        );
        assert_eq!(code, 0, "{err}");
        let mut files: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        seen.push(
            files
                .iter()
                .map(|p| (p.file_name().unwrap().to_owned(), std::fs::read(p).unwrap()))
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(seen[0], seen[1]);
    assert_eq!(seen[0].len(), 3);
}

#[test]
fn command_mismatch_is_rejected() {
    let e = load_config_file(
        &configs().join("rd.toml"),
        &Overrides {
            command: Some(Command::Audit),
            ..Overrides::default()
        },
    )
    .unwrap_err();
    assert!(e.to_string().contains("`command`"), "{e}");
}
