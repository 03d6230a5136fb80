//! Run configuration: TOML parsing, file resolution and validation.
//!
//! A run config names a command and carries the system description either
//! inline (`[spec]`, `[aux]`) or as paths to separate TOML files. After
//! loading, every file reference has been replaced by its contents, so a
//! [`RunConfig`] serializes to a self-contained document.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use jwec::info::{Axis, DistTable, DistortionMeasure};
use jwec::region::{identity_attack, AuxChannel, FixedCoordinates, Objective, RegionPoint, SystemSpec};
use jwec::sim::{KeyBits, RatePolicy};
use serde::{Deserialize, Serialize};

/// Probability tables must sum to one within this after parsing.
pub const TABLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Rd,
    RegionEval,
    RegionOpt,
    Simulate,
    Audit,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Rd => "rd",
            Command::RegionEval => "region-eval",
            Command::RegionOpt => "region-opt",
            Command::Simulate => "simulate",
            Command::Audit => "audit",
            Command::Sweep => "sweep",
        }
    }

    /// Commands that draw random codes or restarts.
    pub fn is_randomized(self) -> bool {
        matches!(self, Command::RegionOpt | Command::Simulate | Command::Audit)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Symbol lists; only `U` is needed for rate-distortion work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Alphabets {
    #[serde(rename = "U")]
    pub u: Vec<String>,
    /// Reconstruction alphabet; defaults to `U`.
    #[serde(rename = "Uhat", default, skip_serializing_if = "Option::is_none")]
    pub uhat: Option<Vec<String>>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<String>>,
    #[serde(rename = "X", default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<String>>,
    #[serde(rename = "Y", default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<String>>,
    #[serde(rename = "Z", default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<String>>,
}

/// `"hamming"` or an explicit cost matrix (rows, then columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistortionDoc {
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

/// `"identity"` or a row-stochastic matrix `P(z|y)` with rows over `Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttackDoc {
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

/// A system description. The sections past `p_u` and `d_prime` are
/// optional so that a source alone can be written down for `rd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub alphabets: Alphabets,
    pub p_u: Vec<f64>,
    /// Joint `P(x, k)`: one row per covertext symbol, one column per key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_xk: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<DistortionDoc>,
    pub d_prime: DistortionDoc,
}

/// `P(V, Y | K, X)` in one of three shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuxDoc {
    /// `V = Y` drawn from `P(y|x)` whatever the key.
    VEqualsY { p_y_given_x: Vec<Vec<f64>> },
    /// Constant `V`, `Y ~ P(y|k,x)` indexed `[k][x][y]`.
    ConstantV { p_y_given_kx: Vec<Vec<Vec<f64>>> },
    /// Full table indexed `[k][x][v][y]`.
    Table {
        #[serde(rename = "V")]
        v: Vec<String>,
        p_vy_given_kx: Vec<Vec<Vec<Vec<f64>>>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveDoc {
    MaximizeH,
    MaximizeHPrime,
    MinimizeRc,
    MinimizeRcPrime,
    MinimizeD,
    MinimizeDPrime,
}

impl From<ObjectiveDoc> for Objective {
    fn from(o: ObjectiveDoc) -> Self {
        match o {
            ObjectiveDoc::MaximizeH => Objective::MaximizeH,
            ObjectiveDoc::MaximizeHPrime => Objective::MaximizeHPrime,
            ObjectiveDoc::MinimizeRc => Objective::MinimizeRc,
            ObjectiveDoc::MinimizeRcPrime => Objective::MinimizeRcPrime,
            ObjectiveDoc::MinimizeD => Objective::MinimizeD,
            ObjectiveDoc::MinimizeDPrime => Objective::MinimizeDPrime,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeDoc {
    pub objective: ObjectiveDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_card: Option<usize>,
    #[serde(default)]
    pub fixed: FixedCoordinates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Quantizer target for `simulate` and `audit`; falls back to
    /// `point.d_prime`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_prime_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub extended: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub exact_equivocation: bool,
    /// Average the exact equivocation over this many codes, drawn from
    /// seeds `seed, seed + 1, ...`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RatePolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_bits: Option<KeyBits>,
    /// Output directory. Not part of the manifest hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<RegionPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeDoc>,
    pub spec: SpecDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux: Option<AuxDoc>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    /// Malformed TOML or a value of the wrong shape.
    Syntax {
        file: Option<PathBuf>,
        line: usize,
        column: usize,
        message: String,
    },
    /// Well-formed but violates an invariant; the message names the field
    /// or table.
    Invalid(String),
    Io(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Syntax {
                file,
                line,
                column,
                message,
            } => {
                if let Some(p) = file {
                    write!(f, "{}:", p.display())?;
                }
                write!(f, "line {line}, column {column}: {message}")
            }
            ConfigError::Invalid(m) => f.write_str(m),
            ConfigError::Io(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, column)
}

fn syntax(text: &str, file: Option<&Path>, e: toml::de::Error) -> ConfigError {
    let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
    ConfigError::Syntax {
        file: file.map(Path::to_path_buf),
        line,
        column,
        message: e.message().to_string(),
    }
}

/// Parses a run config whose file references resolve against the working
/// directory.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_in(text, Path::new("."))
}

/// Parses a run config whose file references resolve against `base`.
pub fn parse_config_in(text: &str, base: &Path) -> Result<RunConfig, ConfigError> {
    load(text, None, base, &Overrides::default())
}

pub fn load_config_file(path: &Path, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let text = read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    load(&text, Some(path), base, overrides)
}

/// Builds a config from flags alone.
pub fn config_from_overrides(overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    load("", None, Path::new("."), overrides)
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("cannot read {}: {e}", path.display())))
}

/// Command-line values; each one replaces the config entry of the same name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub command: Option<Command>,
    pub spec: Option<PathBuf>,
    pub aux: Option<PathBuf>,
    pub n: Option<usize>,
    pub trials: Option<usize>,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub extended: bool,
    pub exact_equivocation: bool,
}

impl Overrides {
    fn is_empty(&self) -> bool {
        *self == Overrides::default()
    }

    fn apply(&self, t: &mut toml::Table) -> Result<(), ConfigError> {
        if let Some(c) = self.command {
            if let Some(declared) = t.get("command").and_then(|v| v.as_str()) {
                if declared != c.name() {
                    return invalid(format!(
                        "field `command`: the config declares `{declared}` but `{c}` was requested"
                    ));
                }
            }
            t.insert("command".into(), c.name().into());
        }
        // Paths given as flags are relative to the working directory, not
        // to the config file.
        let abs = |p: &Path| {
            std::path::absolute(p)
                .map(|a| a.display().to_string())
                .map_err(|e| ConfigError::Io(format!("cannot resolve {}: {e}", p.display())))
        };
        if let Some(p) = &self.spec {
            t.insert("spec".into(), abs(p)?.into());
        }
        if let Some(p) = &self.aux {
            t.insert("aux".into(), abs(p)?.into());
        }
        let int = |v: usize| toml::Value::Integer(v as i64);
        if let Some(v) = self.n {
            t.insert("n".into(), int(v));
        }
        if let Some(v) = self.trials {
            t.insert("trials".into(), int(v));
        }
        if let Some(v) = self.seed {
            let v = i64::try_from(v).map_err(|_| ConfigError::Invalid("field `seed` must be below 2^63".into()))?;
            t.insert("seed".into(), toml::Value::Integer(v));
        }
        if let Some(v) = self.delta {
            t.insert("delta".into(), v.into());
        }
        if let Some(v) = self.gamma {
            t.insert("gamma".into(), v.into());
        }
        if let Some(v) = &self.out {
            t.insert("out".into(), v.clone().into());
        }
        if self.extended {
            t.insert("extended".into(), true.into());
        }
        if self.exact_equivocation {
            t.insert("exact_equivocation".into(), true.into());
        }
        Ok(())
    }
}

/// Replaces a string-valued `key` by the parsed contents of that file.
fn inline_file(t: &mut toml::Table, key: &str, base: &Path) -> Result<bool, ConfigError> {
    let Some(toml::Value::String(p)) = t.get(key) else {
        return Ok(false);
    };
    let path = base.join(p);
    let text = read(&path)?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| syntax(&text, Some(&path), e))?;
    t.insert(key.into(), toml::Value::Table(table));
    Ok(true)
}

fn load(text: &str, file: Option<&Path>, base: &Path, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| syntax(text, file, e))?;
    overrides.apply(&mut table)?;
    let spec_file = inline_file(&mut table, "spec", base)?;
    let aux_file = inline_file(&mut table, "aux", base)?;
    let cfg: RunConfig = if overrides.is_empty() && !spec_file && !aux_file {
        // Straight from the text, so shape errors keep their position.
        toml::from_str(text).map_err(|e| syntax(text, file, e))?
    } else {
        RunConfig::deserialize(table).map_err(|e| ConfigError::Syntax {
            file: file.map(Path::to_path_buf),
            line: 0,
            column: 0,
            message: e.message().to_string(),
        })?
    };
    cfg.validate()?;
    Ok(cfg)
}

fn check_symbols(name: &str, syms: &[String]) -> Result<(), ConfigError> {
    if syms.is_empty() {
        return invalid(format!("alphabet `{name}` is empty"));
    }
    let mut seen = BTreeSet::new();
    for s in syms {
        if !seen.insert(s) {
            return invalid(format!("alphabet `{name}` lists symbol `{s}` twice"));
        }
    }
    Ok(())
}

fn check_entries(table: &str, values: &[f64]) -> Result<(), ConfigError> {
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return invalid(format!("table `{table}`: entry {v} is negative or not finite"));
    }
    Ok(())
}

fn check_sum(table: &str, slice: Option<String>, values: &[f64]) -> Result<(), ConfigError> {
    let s: f64 = values.iter().sum();
    if (s - 1.0).abs() > TABLE_TOL {
        let what = slice.map_or("entries".to_string(), |c| format!("conditional slice {c}"));
        return invalid(format!(
            "table `{table}`: {what} sums to {s}, not 1 (tolerance {TABLE_TOL:e}; tables are never renormalized)"
        ));
    }
    Ok(())
}

fn check_len(table: &str, what: &str, got: usize, want: usize) -> Result<(), ConfigError> {
    if got != want {
        return invalid(format!("table `{table}`: {what} has {got} entries, expected {want}"));
    }
    Ok(())
}

/// Row-stochastic matrix check; returns the flat values.
fn stochastic(
    table: &str,
    rows: &[Vec<f64>],
    row_axis: (&str, &[String]),
    cols: usize,
) -> Result<Vec<f64>, ConfigError> {
    check_len(table, "the outer list", rows.len(), row_axis.1.len())?;
    let mut flat = Vec::with_capacity(rows.len() * cols);
    for (r, row) in rows.iter().enumerate() {
        let label = format!("{}={}", row_axis.0, row_axis.1[r]);
        check_len(table, &format!("row {label}"), row.len(), cols)?;
        check_entries(table, row)?;
        check_sum(table, Some(label), row)?;
        flat.extend_from_slice(row);
    }
    Ok(flat)
}

fn to_lib<T>(table: &str, r: jwec::Result<T>) -> Result<T, ConfigError> {
    r.map_err(|e| ConfigError::Invalid(format!("table `{table}`: {e}")))
}

impl SpecDoc {
    fn uhat(&self) -> &[String] {
        self.alphabets.uhat.as_deref().unwrap_or(&self.alphabets.u)
    }

    fn required<'a, T>(&self, v: &'a Option<T>, field: &str) -> Result<&'a T, ConfigError> {
        v.as_ref()
            .ok_or_else(|| ConfigError::Invalid(format!("field `spec.{field}` is required for this command")))
    }

    /// Whether every section needed for a full system is present.
    pub fn is_complete(&self) -> bool {
        let a = &self.alphabets;
        self.lambda.is_some()
            && self.p_xk.is_some()
            && self.attack.is_some()
            && self.d.is_some()
            && a.k.is_some()
            && a.x.is_some()
            && a.y.is_some()
            && a.z.is_some()
    }

    pub fn p_u(&self) -> Result<DistTable, ConfigError> {
        let u = &self.alphabets.u;
        check_symbols("U", u)?;
        check_len("spec.p_u", "the list", self.p_u.len(), u.len())?;
        check_entries("spec.p_u", &self.p_u)?;
        check_sum("spec.p_u", None, &self.p_u)?;
        to_lib(
            "spec.p_u",
            DistTable::joint_with_tolerance(vec![Axis::new("U", u.len())], self.p_u.clone(), TABLE_TOL),
        )
    }

    pub fn d_prime(&self) -> Result<DistortionMeasure, ConfigError> {
        let (u, uh) = (&self.alphabets.u, self.uhat());
        check_symbols("Uhat", uh)?;
        distortion("spec.d_prime", &self.d_prime, ("U", u), ("Uhat", uh))
    }

    /// The full system; fails naming the first missing section.
    pub fn system(&self) -> Result<SystemSpec, ConfigError> {
        let a = &self.alphabets;
        let lambda = *self.required(&self.lambda, "lambda")?;
        let k = self.required(&a.k, "alphabets.K")?;
        let x = self.required(&a.x, "alphabets.X")?;
        let y = self.required(&a.y, "alphabets.Y")?;
        let z = self.required(&a.z, "alphabets.Z")?;
        for (n, s) in [("K", k), ("X", x), ("Y", y), ("Z", z)] {
            check_symbols(n, s)?;
        }
        let p_xk = self.required(&self.p_xk, "p_xk")?;
        check_len("spec.p_xk", "the outer list", p_xk.len(), x.len())?;
        let mut flat = Vec::with_capacity(x.len() * k.len());
        for (i, row) in p_xk.iter().enumerate() {
            check_len("spec.p_xk", &format!("row X={}", x[i]), row.len(), k.len())?;
            check_entries("spec.p_xk", row)?;
            flat.extend_from_slice(row);
        }
        check_sum("spec.p_xk", None, &flat)?;
        let p_xk = to_lib(
            "spec.p_xk",
            DistTable::joint_with_tolerance(vec![Axis::new("X", x.len()), Axis::new("K", k.len())], flat, TABLE_TOL),
        )?;
        let attack = match self.required(&self.attack, "attack")? {
            AttackDoc::Named(s) if s == "identity" => {
                if y.len() != z.len() {
                    return invalid("table `spec.attack`: the identity attack needs |Y| = |Z|");
                }
                to_lib("spec.attack", identity_attack(y.len()))?
            }
            AttackDoc::Named(s) => return invalid(format!("table `spec.attack`: unknown attack `{s}`")),
            AttackDoc::Matrix(m) => {
                let flat = stochastic("spec.attack", m, ("Y", y), z.len())?;
                to_lib(
                    "spec.attack",
                    DistTable::conditional_with_tolerance(
                        vec![Axis::new("Y", y.len()), Axis::new("Z", z.len())],
                        &["Y"],
                        flat,
                        TABLE_TOL,
                    ),
                )?
            }
        };
        let d = distortion("spec.d", self.required(&self.d, "d")?, ("X", x), ("Y", y))?;
        to_lib("spec", SystemSpec::new(self.p_u()?, p_xk, attack, lambda, d, self.d_prime()?))
    }
}

fn distortion(
    table: &str,
    doc: &DistortionDoc,
    rows: (&str, &[String]),
    cols: (&str, &[String]),
) -> Result<DistortionMeasure, ConfigError> {
    let (ra, ca) = (Axis::new(rows.0, rows.1.len()), Axis::new(cols.0, cols.1.len()));
    match doc {
        DistortionDoc::Named(s) if s == "hamming" => to_lib(table, DistortionMeasure::hamming(ra, ca)),
        DistortionDoc::Named(s) => invalid(format!("table `{table}`: unknown distortion `{s}`")),
        DistortionDoc::Matrix(m) => {
            check_len(table, "the outer list", m.len(), rows.1.len())?;
            let mut flat = Vec::new();
            for (i, row) in m.iter().enumerate() {
                check_len(table, &format!("row {}={}", rows.0, rows.1[i]), row.len(), cols.1.len())?;
                check_entries(table, row)?;
                flat.extend_from_slice(row);
            }
            to_lib(table, DistortionMeasure::new(ra, ca, flat))
        }
    }
}

impl AuxDoc {
    pub fn channel(&self, spec_doc: &SpecDoc, spec: &SystemSpec) -> Result<AuxChannel, ConfigError> {
        let a = &spec_doc.alphabets;
        let (k, x, y) = (
            a.k.as_deref().unwrap_or_default(),
            a.x.as_deref().unwrap_or_default(),
            a.y.as_deref().unwrap_or_default(),
        );
        const T: &str = "aux";
        match self {
            AuxDoc::VEqualsY { p_y_given_x } => {
                let flat = stochastic("aux.p_y_given_x", p_y_given_x, ("X", x), y.len())?;
                let ch = to_lib(
                    T,
                    DistTable::conditional_with_tolerance(
                        vec![Axis::new("X", x.len()), Axis::new("Y", y.len())],
                        &["X"],
                        flat,
                        TABLE_TOL,
                    ),
                )?;
                to_lib(T, AuxChannel::v_equals_y(spec, &ch))
            }
            AuxDoc::ConstantV { p_y_given_kx } => {
                let name = "aux.p_y_given_kx";
                check_len(name, "the outer list", p_y_given_kx.len(), k.len())?;
                let mut flat = Vec::new();
                for (ki, rows) in p_y_given_kx.iter().enumerate() {
                    check_len(name, &format!("block K={}", k[ki]), rows.len(), x.len())?;
                    for (xi, row) in rows.iter().enumerate() {
                        let label = format!("K={},X={}", k[ki], x[xi]);
                        check_len(name, &format!("row {label}"), row.len(), y.len())?;
                        check_entries(name, row)?;
                        check_sum(name, Some(label), row)?;
                        flat.extend_from_slice(row);
                    }
                }
                to_lib(T, AuxChannel::from_flat(spec, 1, flat))
            }
            AuxDoc::Table { v, p_vy_given_kx } => {
                let name = "aux.p_vy_given_kx";
                check_symbols("V", v)?;
                check_len(name, "the outer list", p_vy_given_kx.len(), k.len())?;
                let mut flat = Vec::new();
                for (ki, xs) in p_vy_given_kx.iter().enumerate() {
                    check_len(name, &format!("block K={}", k[ki]), xs.len(), x.len())?;
                    for (xi, vs) in xs.iter().enumerate() {
                        let label = format!("K={},X={}", k[ki], x[xi]);
                        check_len(name, &format!("block {label}"), vs.len(), v.len())?;
                        let mut slice = Vec::new();
                        for (vi, row) in vs.iter().enumerate() {
                            check_len(name, &format!("row {label},V={}", v[vi]), row.len(), y.len())?;
                            check_entries(name, row)?;
                            slice.extend_from_slice(row);
                        }
                        check_sum(name, Some(label), &slice)?;
                        flat.extend(slice);
                    }
                }
                to_lib(T, AuxChannel::from_flat(spec, v.len(), flat))
            }
        }
    }
}

impl RunConfig {
    fn need<T: Copy>(&self, v: Option<T>, field: &str) -> Result<T, ConfigError> {
        v.ok_or_else(|| ConfigError::Invalid(format!("field `{field}` is required for `{}`", self.command)))
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.need(self.seed, "seed")
    }

    pub fn n(&self) -> Result<usize, ConfigError> {
        self.need(self.n, "n")
    }

    pub fn trials(&self) -> Result<usize, ConfigError> {
        self.need(self.trials, "trials")
    }

    pub fn gamma(&self) -> Result<f64, ConfigError> {
        self.need(self.gamma, "gamma")
    }

    pub fn point(&self) -> Result<RegionPoint, ConfigError> {
        self.need(self.point, "point")
    }

    pub fn aux(&self) -> Result<&AuxDoc, ConfigError> {
        self.aux
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid(format!("field `aux` is required for `{}`", self.command)))
    }

    pub fn grid(&self) -> Result<&[f64], ConfigError> {
        match &self.d_prime_grid {
            Some(g) if !g.is_empty() => Ok(g),
            _ => invalid(format!("field `d_prime_grid` is required for `{}` and must be nonempty", self.command)),
        }
    }

    /// Quantizer target: `d_prime`, else `point.d_prime`.
    pub fn target_d_prime(&self) -> Result<f64, ConfigError> {
        self.d_prime.or(self.point.map(|p| p.d_prime)).ok_or_else(|| {
            ConfigError::Invalid(format!("field `d_prime` (or `point.d_prime`) is required for `{}`", self.command))
        })
    }

    pub fn optimize(&self) -> Result<&OptimizeDoc, ConfigError> {
        self.optimize
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid(format!("field `optimize` is required for `{}`", self.command)))
    }

    /// Per-command required fields and table invariants. Runs on load, so a
    /// [`RunConfig`] obtained from the loaders is always valid.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.command.is_randomized() {
            self.seed()?;
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return invalid(format!("field `delta` must lie in (0, 1), got {d}"));
            }
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return invalid(format!("field `gamma` must be positive, got {g}"));
            }
        }
        if let Some(g) = &self.d_prime_grid {
            if let Some(v) = g.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return invalid(format!("field `d_prime_grid`: entry {v} is negative or not finite"));
            }
        }
        if self.ensemble.is_some() && !self.exact_equivocation {
            return invalid("field `ensemble` needs `exact_equivocation = true`");
        }
        if self.ensemble == Some(0) {
            return invalid("field `ensemble` must be at least 1");
        }
        self.spec.p_u()?;
        self.spec.d_prime()?;
        let needs_system = match self.command {
            Command::Rd => false,
            Command::Sweep => self.aux.is_some(),
            _ => true,
        };
        if needs_system {
            let system = self.spec.system()?;
            if let Some(a) = &self.aux {
                a.channel(&self.spec, &system)?;
            }
        }
        match self.command {
            Command::Rd | Command::Sweep => {
                self.grid()?;
            }
            Command::RegionEval => {
                self.aux()?;
                self.point()?;
            }
            Command::RegionOpt => {
                self.optimize()?;
            }
            Command::Simulate => {
                self.aux()?;
                self.n()?;
                self.trials()?;
                self.target_d_prime()?;
            }
            Command::Audit => {
                self.aux()?;
                self.n()?;
                self.gamma()?;
                self.target_d_prime()?;
            }
        }
        Ok(())
    }

    /// Canonical TOML, used for the manifest and its hash. `out` is left
    /// out so that the same run written elsewhere hashes the same.
    pub fn canonical_toml(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        toml::to_string(&c).expect("run configs always serialize")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RD: &str = r#"
command = "rd"
d_prime_grid = [0.1, 0.2]

[spec]
alphabets = { U = ["0", "1"] }
p_u = [0.5, 0.5]
d_prime = "hamming"
"#;

    #[test]
    fn minimal_rd_config() {
        let c = parse_config(RD).unwrap();
        assert_eq!(c.command, Command::Rd);
        assert_eq!(c.d_prime_grid.as_deref(), Some(&[0.1, 0.2][..]));
        assert!(!c.spec.is_complete());
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let bad = "command = \"rd\"\nd_prime_grid = [0.1,\n\n[spec\n";
        match parse_config(bad) {
            Err(ConfigError::Syntax { line, column, .. }) => {
                assert_eq!(line, 4);
                assert!(column >= 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shape_errors_carry_position() {
        let bad = RD.replace("p_u = [0.5, 0.5]", "p_u = \"half\"");
        match parse_config(&bad) {
            Err(ConfigError::Syntax { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unnormalized_tables_are_rejected_not_rescaled() {
        let bad = RD.replace("[0.5, 0.5]", "[0.5, 0.4]");
        let e = parse_config(&bad).unwrap_err().to_string();
        assert!(e.contains("spec.p_u") && e.contains("sums to"), "{e}");
        // Within the tolerance passes untouched.
        let ok = RD.replace("[0.5, 0.5]", "[0.5, 0.5000000001]");
        assert_eq!(parse_config(&ok).unwrap().spec.p_u, vec![0.5, 0.5000000001]);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = RD.replace("command", "seeed = 1\ncommand");
        assert!(parse_config(&bad).unwrap_err().to_string().contains("seeed"));
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }
}
