//! Subcommand parameters: flags merged over an optional JSON config file.
//!
//! Every parameter struct has only optional fields so that "not given on the
//! command line" is visible. Merging fills unset flags from the file, then
//! `resolve` applies defaults and validates. The resolved struct is the
//! RunConfig embedded in every output.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use arw_core::engine::Snapshot;
use arw_core::estimators::InitialLaw;
use arw_core::rng::parse_seed;
use arw_core::verify::Suite;
use arw_core::walks::{DEFAULT_ESCAPE_RADIUS, DEFAULT_MAX_STEPS};
use arw_core::Params;
use clap::Args;
use serde::de::{self, DeserializeOwned};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::CliError;

/// 64-bit seed, written as decimal or `0x` hexadecimal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Seed(pub u64);

impl FromStr for Seed {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_seed(s)
            .map(Seed)
            .map_err(|e| format!("seed must be a decimal or 0x-prefixed hexadecimal 64-bit integer: {e}"))
    }
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Seed {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(self.0)
    }
}

impl<'de> Deserialize<'de> for Seed {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => Ok(Seed(n)),
            Raw::Text(t) => t.parse().map_err(de::Error::custom),
        }
    }
}

/// Reads `path` as a JSON object of parameters for `command`. A `command`
/// key, if present, must match.
pub fn read_config_file(path: &Path, command: &str) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Usage(format!("config file {} must hold a JSON object", path.display())))?;
    // Accept the `config` member of an output file as well.
    if let Some(Value::Object(inner)) = obj.get("config") {
        *obj = inner.clone();
    }
    if let Some(c) = obj.remove("command") {
        if c != command {
            return Err(CliError::Usage(format!(
                "config file {} is for '{}', not '{command}'",
                path.display(),
                c.as_str().unwrap_or("?")
            )));
        }
    }
    Ok(value)
}

/// Fills unset fields of `flags` from `file`. Unknown file keys are errors.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, file: Option<Value>) -> Result<T, CliError> {
    let mut merged = serde_json::to_value(flags).expect("parameter structs serialize");
    if let (Some(Value::Object(file)), Value::Object(target)) = (file, &mut merged) {
        for (key, v) in file {
            match target.get_mut(&key) {
                Some(slot) if slot.is_null() => *slot = v,
                Some(_) => {}
                None => return Err(CliError::Usage(format!("unknown config key '{key}'"))),
            }
        }
    }
    serde_json::from_value(merged).map_err(|e| CliError::Usage(format!("config: {e}")))
}

fn usage(field: &str, msg: impl fmt::Display) -> CliError {
    CliError::Usage(format!("--{field}: {msg}"))
}

pub fn params(d: usize, lambda: f64) -> Result<Params, CliError> {
    Params::new(d, lambda).map_err(|e| match e {
        arw_core::stacks::ParamsError::ZeroDimension => usage("d", e),
        arw_core::stacks::ParamsError::BadLambda(_) => usage("lambda", e),
    })
}

pub fn parse_law(text: &str, d: usize) -> Result<InitialLaw, CliError> {
    text.parse::<InitialLaw>()
        .map(|l| l.for_dim(d))
        .map_err(|e| usage("law", e))
}

fn positive(field: &str, v: u64) -> Result<u64, CliError> {
    if v == 0 {
        Err(usage(field, "must be at least 1"))
    } else {
        Ok(v)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilizeArgs {
    /// Dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// Box radius.
    #[arg(long)]
    pub n: Option<usize>,
    /// Sleep rate, > 0.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Initial law: delta, empty, poisson:RHO, bernoulli:RHO, filled[:LAW].
    #[arg(long)]
    pub law: Option<String>,
    /// Stack seed. The initial law is sampled from a seed derived from it.
    #[arg(long)]
    pub seed: Option<Seed>,
    /// true, weak or strong (the last two with respect to the origin).
    #[arg(long)]
    pub mode: Option<String>,
    /// Start from this snapshot instead of sampling the law.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl StabilizeArgs {
    /// With `--input`, missing `d`, `n` and `seed` come from the snapshot so
    /// that a recorded run replays as is.
    pub fn resolve(mut self, output_dir: &Path) -> Result<Self, CliError> {
        if let Some(path) = &self.input {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let snap = Snapshot::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            self.d.get_or_insert(snap.d);
            self.n.get_or_insert(snap.n);
            if let Some(seed) = snap.seed {
                self.seed.get_or_insert(Seed(seed));
            }
        }
        let d = *self.d.get_or_insert(1);
        let n = *self.n.get_or_insert(1);
        params(d, *self.lambda.get_or_insert(1.0))?;
        parse_law(self.law.get_or_insert_with(|| "delta".into()), d)?;
        let seed = self.seed.get_or_insert(Seed(0)).0;
        match self.mode.get_or_insert_with(|| "true".into()).as_str() {
            "true" | "weak" | "strong" => {}
            other => return Err(usage("mode", format!("expected true, weak or strong, got '{other}'"))),
        }
        self.out
            .get_or_insert_with(|| output_dir.join(format!("stabilize-d{d}-n{n}-seed{seed}.json")));
        Ok(self)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyArgs {
    /// abelian, least-action, coupling, identity, ach-bound, five-step,
    /// conservation or all.
    #[arg(value_parser = parse_suite)]
    pub suite: Option<Suite>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub law: Option<String>,
    /// Trials, instances or runs, depending on the suite.
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<Seed>,
    /// Escape radius of the walks behind ach-bound.
    #[arg(long)]
    pub escape_radius: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Density for the conservation suite.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Box radii for the conservation suite.
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    /// Fixed margin for the conservation suite (default n/2).
    #[arg(long)]
    pub margin: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse()
}

impl VerifyArgs {
    pub fn resolve(mut self, output_dir: &Path) -> Result<(Self, arw_core::verify::VerifyOptions), CliError> {
        let suite = self
            .suite
            .ok_or_else(|| CliError::Usage("verify needs a suite name".into()))?;
        if let Some(l) = self.lambda {
            params(1, l)?;
        }
        let d = self.d.unwrap_or(match suite {
            Suite::AchBound | Suite::Conservation => 3,
            _ => 1,
        });
        let law = self.law.as_deref().map(|l| parse_law(l, d)).transpose()?;
        if let Some(t) = self.trials {
            positive("trials", t)?;
        }
        let seed = self.seed.get_or_insert(Seed(0)).0;
        self.out
            .get_or_insert_with(|| output_dir.join(format!("verify-{}-seed{seed}.json", suite.name())));
        let opts = arw_core::verify::VerifyOptions {
            d: self.d,
            n: self.n,
            lambda: self.lambda,
            law,
            trials: self.trials,
            master_seed: seed,
            escape_radius: self.escape_radius,
            max_steps: self.max_steps,
            rho: self.rho,
            n_list: self.n_list.clone(),
            margin: self.margin,
        };
        Ok((self, opts))
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReturnsArgs {
    #[arg(long)]
    pub d: Option<usize>,
    /// Number of walks.
    #[arg(long)]
    pub trials: Option<u64>,
    /// L∞ radius at which a walk counts as escaped.
    #[arg(long)]
    pub escape_radius: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<Seed>,
    /// Report a mean even when more than 0.1% of walks are censored.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub allow_censoring: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ReturnsArgs {
    pub fn resolve(mut self, output_dir: &Path) -> Result<Self, CliError> {
        let d = *self.d.get_or_insert(3);
        if d == 0 {
            return Err(usage("d", "dimension must be at least 1"));
        }
        positive("trials", *self.trials.get_or_insert(10_000))?;
        positive("escape-radius", *self.escape_radius.get_or_insert(DEFAULT_ESCAPE_RADIUS))?;
        positive("max-steps", *self.max_steps.get_or_insert(DEFAULT_MAX_STEPS))?;
        let seed = self.seed.get_or_insert(Seed(0)).0;
        self.allow_censoring.get_or_insert(false);
        self.out
            .get_or_insert_with(|| output_dir.join(format!("returns-d{d}-seed{seed}.json")));
        Ok(self)
    }
}

/// Escape radius used when none is given: large enough that the walks lose
/// well under 0.01 expected returns to truncation, small enough to be quick.
pub fn auto_escape_radius(d: usize) -> u64 {
    match d {
        0..=3 => 200,
        4 => 50,
        _ => 25,
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsArgs {
    /// Dimensions.
    #[arg(long, value_delimiter = ',')]
    pub d: Option<Vec<usize>>,
    /// Sleep rates.
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    /// Walks per dimension for the returns estimate.
    #[arg(long)]
    pub walks: Option<u64>,
    /// Escape radius (default depends on d).
    #[arg(long)]
    pub escape_radius: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Use 1/(2d) instead of simulating walks.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub asymptotic: Option<bool>,
    #[arg(long)]
    pub seed: Option<Seed>,
    /// Output file; a CSV with the same stem is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl BoundsArgs {
    pub fn resolve(mut self, output_dir: &Path) -> Result<Self, CliError> {
        let ds = self.d.get_or_insert_with(|| (1..=10).collect());
        if ds.is_empty() || ds.contains(&0) {
            return Err(usage("d", "dimensions must be at least 1"));
        }
        for &l in self.lambda.get_or_insert_with(|| vec![1.0]).iter() {
            params(1, l)?;
        }
        positive("walks", *self.walks.get_or_insert(20_000))?;
        positive("max-steps", *self.max_steps.get_or_insert(DEFAULT_MAX_STEPS))?;
        if let Some(r) = self.escape_radius {
            positive("escape-radius", r)?;
        }
        self.asymptotic.get_or_insert(false);
        let seed = self.seed.get_or_insert(Seed(0)).0;
        self.out
            .get_or_insert_with(|| output_dir.join(format!("bounds-seed{seed}.json")));
        Ok(self)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RhocArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Trials per grid point.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Strictly increasing densities.
    #[arg(long, value_delimiter = ',')]
    pub rho_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<Seed>,
    /// Output file; a CSV with the same stem is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `0.30, 0.32, …, 0.70`.
pub fn default_rho_grid() -> Vec<f64> {
    (0..=20).map(|i| (30 + 2 * i) as f64 / 100.0).collect()
}

impl RhocArgs {
    pub fn resolve(mut self, output_dir: &Path) -> Result<Self, CliError> {
        let d = *self.d.get_or_insert(3);
        let n = *self.n.get_or_insert(6);
        params(d, *self.lambda.get_or_insert(1.0))?;
        positive("trials", *self.trials.get_or_insert(4_000))?;
        let grid = self.rho_grid.get_or_insert_with(default_rho_grid);
        if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) || grid[0] < 0.0 {
            return Err(usage("rho-grid", "densities must be >= 0 and strictly increasing"));
        }
        let seed = self.seed.get_or_insert(Seed(0)).0;
        self.out
            .get_or_insert_with(|| output_dir.join(format!("rhoc-d{d}-n{n}-seed{seed}.json")));
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Occupation,
    Chances,
    Identity,
    FiveStep,
    Bounds,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Occupation => "occupation",
            SweepKind::Chances => "chances",
            SweepKind::Identity => "identity",
            SweepKind::FiveStep => "five-step",
            SweepKind::Bounds => "bounds",
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepArgs {
    /// Estimator run in every cell.
    #[arg(long, value_enum)]
    pub kind: Option<SweepKind>,
    #[arg(long, value_delimiter = ',')]
    pub d: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Initial laws, separated by ';' or given repeatedly.
    #[arg(long, value_delimiter = ';')]
    pub law: Option<Vec<String>>,
    /// Trials per cell (walks per cell for bounds).
    #[arg(long)]
    pub trials: Option<u64>,
    /// Largest k of the chance tail.
    #[arg(long)]
    pub k_max: Option<u64>,
    #[arg(long)]
    pub escape_radius: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<Seed>,
    /// Directory holding cells.jsonl, runs.jsonl and summary CSVs.
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

impl SweepArgs {
    pub fn resolve(mut self, output_dir: &Path) -> Result<Self, CliError> {
        let kind = *self.kind.get_or_insert(SweepKind::Occupation);
        let ds = self.d.get_or_insert_with(|| vec![1]).clone();
        if ds.is_empty() || ds.contains(&0) {
            return Err(usage("d", "dimensions must be at least 1"));
        }
        let lambdas = self.lambda.get_or_insert_with(|| vec![1.0]).clone();
        if lambdas.is_empty() {
            return Err(usage("lambda", "grid is empty"));
        }
        for &l in &lambdas {
            params(1, l)?;
        }
        let ns = self.n.get_or_insert_with(|| vec![1]);
        if ns.is_empty() {
            return Err(usage("n", "grid is empty"));
        }
        let default_law = if kind == SweepKind::FiveStep { "filled:poisson:0.2" } else { "delta" };
        let laws = self.law.get_or_insert_with(|| vec![default_law.into()]).clone();
        if laws.is_empty() {
            return Err(usage("law", "grid is empty"));
        }
        for l in &laws {
            for &d in &ds {
                parse_law(l, d)?;
            }
        }
        positive("trials", *self.trials.get_or_insert(1_000))?;
        positive("k-max", *self.k_max.get_or_insert(4))?;
        positive("max-steps", *self.max_steps.get_or_insert(DEFAULT_MAX_STEPS))?;
        if let Some(r) = self.escape_radius {
            positive("escape-radius", r)?;
        }
        self.seed.get_or_insert(Seed(0));
        self.dir.get_or_insert_with(|| output_dir.join("sweep"));
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn seeds_parse_both_ways() {
        assert_eq!("0x10".parse::<Seed>().unwrap(), Seed(16));
        assert_eq!(serde_json::from_value::<Seed>(json!("0xff")).unwrap(), Seed(255));
        assert_eq!(serde_json::from_value::<Seed>(json!(7)).unwrap(), Seed(7));
        assert!("ten".parse::<Seed>().is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let flags = StabilizeArgs {
            d: Some(2),
            ..Default::default()
        };
        let merged = merge(&flags, Some(json!({"d": 3, "n": 4}))).unwrap();
        assert_eq!(merged.d, Some(2));
        assert_eq!(merged.n, Some(4));
        assert!(merge(&flags, Some(json!({"dimension": 3}))).is_err());
    }

    #[test]
    fn lambda_zero_names_the_field() {
        let args = StabilizeArgs {
            lambda: Some(0.0),
            ..Default::default()
        };
        let err = args.resolve(Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("--lambda") && err.contains("λ > 0"), "{err}");
    }

    #[test]
    fn resolved_config_roundtrips() {
        let args = SweepArgs::default().resolve(Path::new("out")).unwrap();
        let value = serde_json::to_value(&args).unwrap();
        let again: SweepArgs = serde_json::from_value(value.clone()).unwrap();
        assert_eq!(serde_json::to_value(again).unwrap(), value);
    }
}
