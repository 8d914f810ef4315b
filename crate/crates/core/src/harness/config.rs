use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde_json::{json, Value};

use super::HarnessError;
use crate::dynamics::ModelKind;
use crate::laws::{Law, RedistributionLaw};
use crate::observables::DEFAULT_STEP_BUDGET;
use crate::oracle::DEFAULT_ORACLE_SAMPLES;
use crate::piles::DEFAULT_FLOOR_LOG;

pub const DEFAULT_REPLICAS: u64 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Constants,
    Simulate,
    Piles,
    Identity,
    Contraction,
    Stationary,
    Profile,
    Monotonicity,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Constants,
        Command::Simulate,
        Command::Piles,
        Command::Identity,
        Command::Contraction,
        Command::Stationary,
        Command::Profile,
        Command::Monotonicity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Simulate => "simulate",
            Command::Piles => "piles",
            Command::Identity => "identity",
            Command::Contraction => "contraction",
            Command::Stationary => "stationary",
            Command::Profile => "profile",
            Command::Monotonicity => "monotonicity",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| HarnessError::config("command", format!("unknown command `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(HarnessError::config("format", format!("expected csv or json, got `{other}`"))),
        }
    }
}

/// Partially specified settings from one source (config file or CLI flags).
/// Values are kept as raw strings until [`ConfigOverrides::resolve`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigOverrides {
    pub command: Option<String>,
    pub model: Option<String>,
    pub law: Option<String>,
    pub n: Option<String>,
    pub t: Option<String>,
    pub beta: Option<String>,
    pub gamma: Option<String>,
    pub replicas: Option<String>,
    pub seed: Option<String>,
    pub out: Option<String>,
    pub format: Option<String>,
    pub oracle_samples: Option<String>,
    pub floor_log: Option<String>,
    pub budget: Option<String>,
    pub statistic: Option<String>,
    /// Line number of each key, for diagnostics.
    lines: Vec<(String, usize)>,
}

impl ConfigOverrides {
    fn slot(&mut self, key: &str) -> Option<&mut Option<String>> {
        Some(match key {
            "command" => &mut self.command,
            "model" => &mut self.model,
            "law" => &mut self.law,
            "n" => &mut self.n,
            "t" => &mut self.t,
            "beta" => &mut self.beta,
            "gamma" => &mut self.gamma,
            "replicas" => &mut self.replicas,
            "seed" => &mut self.seed,
            "out" => &mut self.out,
            "format" => &mut self.format,
            "oracle_samples" => &mut self.oracle_samples,
            "floor_log" => &mut self.floor_log,
            "budget" => &mut self.budget,
            "statistic" => &mut self.statistic,
            _ => return None,
        })
    }

    /// Parses `key = value` lines. `#` starts a comment; blank lines are
    /// ignored.
    pub fn parse_file(text: &str) -> Result<Self, HarnessError> {
        let mut out = ConfigOverrides::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(HarnessError::Config {
                    line: Some(line_no),
                    field: line.to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            let key = key.trim().replace('-', "_");
            let value = value.trim().to_string();
            match out.slot(&key) {
                Some(slot) => *slot = Some(value),
                None => {
                    return Err(HarnessError::Config {
                        line: Some(line_no),
                        field: key,
                        message: "unknown key".into(),
                    })
                }
            }
            out.lines.push((key, line_no));
        }
        Ok(out)
    }

    /// Fills every field of `self` that is unset from `lower`.
    pub fn over(mut self, lower: ConfigOverrides) -> ConfigOverrides {
        macro_rules! pick {
            ($($f:ident),*) => { $( if self.$f.is_none() { self.$f = lower.$f; } )* };
        }
        pick!(command, model, law, n, t, beta, gamma, replicas, seed, out, format, oracle_samples, floor_log, budget, statistic);
        self.lines.extend(lower.lines);
        self
    }

    fn err(&self, field: &str, message: impl Into<String>) -> HarnessError {
        let line = self.lines.iter().find(|(k, _)| k == field).map(|(_, l)| *l);
        HarnessError::Config { line, field: field.to_string(), message: message.into() }
    }

    fn parse<T: FromStr>(&self, field: &str, value: &Option<String>) -> Result<Option<T>, HarnessError>
    where
        T::Err: fmt::Display,
    {
        value
            .as_deref()
            .map(|v| v.trim().parse::<T>().map_err(|e| self.err(field, format!("`{v}`: {e}"))))
            .transpose()
    }

    fn parse_list<T: FromStr>(&self, field: &str, value: &Option<String>) -> Result<Vec<T>, HarnessError>
    where
        T::Err: fmt::Display,
    {
        match value.as_deref() {
            None => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<T>().map_err(|e| self.err(field, format!("`{s}`: {e}"))))
                .collect(),
        }
    }

    /// Validates and fills defaults.
    pub fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let command: Command = match &self.command {
            Some(c) => c.parse().map_err(|_| self.err("command", format!("unknown command `{c}`")))?,
            None => return Err(self.err("command", "missing")),
        };
        let model = self.parse::<ModelKind>("model", &self.model)?.unwrap_or(ModelKind::Srm);
        let law_spec = self.parse::<RedistributionLaw>("law", &self.law)?.unwrap_or(RedistributionLaw::BetaSymmetric { alpha: 1.0 });
        let law = Law::new(law_spec).map_err(|e| self.err("law", e.to_string()))?;
        let n = self.parse::<usize>("n", &self.n)?.unwrap_or(64);
        if n < 2 {
            return Err(self.err("n", "n must be at least 2"));
        }
        let times = self.parse_list::<u64>("t", &self.t)?;
        if times.windows(2).any(|w| w[0] > w[1]) {
            return Err(self.err("t", "times must be ascending"));
        }
        let betas = self.parse_list::<f64>("beta", &self.beta)?;
        if command == Command::Profile && betas.is_empty() {
            return Err(self.err("beta", "profile needs a non-empty beta grid"));
        }
        let gamma = self.parse::<f64>("gamma", &self.gamma)?.unwrap_or(0.3);
        let replicas = self.parse::<u64>("replicas", &self.replicas)?.unwrap_or(DEFAULT_REPLICAS);
        if replicas < 1 {
            return Err(self.err("replicas", "at least one replica is required"));
        }
        let statistic = self.statistic.clone().unwrap_or_else(|| "both".into());
        if !["both", "coupling", "piles"].contains(&statistic.as_str()) {
            return Err(self.err("statistic", "expected both, coupling or piles"));
        }
        Ok(ExperimentConfig {
            command,
            model,
            law,
            n,
            times,
            betas,
            gamma,
            replicas,
            seed: self.parse::<u64>("seed", &self.seed)?.unwrap_or(0),
            out: self.out.as_ref().map(PathBuf::from),
            format: match &self.format {
                Some(f) => f.parse().map_err(|_| self.err("format", format!("expected csv or json, got `{f}`")))?,
                None => Format::Csv,
            },
            oracle_samples: self.parse::<u64>("oracle_samples", &self.oracle_samples)?.unwrap_or(DEFAULT_ORACLE_SAMPLES),
            floor_log: self.parse::<f64>("floor_log", &self.floor_log)?.unwrap_or(DEFAULT_FLOOR_LOG),
            budget: self.parse::<u64>("budget", &self.budget)?.unwrap_or(DEFAULT_STEP_BUDGET),
            statistic,
        })
    }
}

/// A validated experiment.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub command: Command,
    pub model: ModelKind,
    pub law: Law,
    pub n: usize,
    /// Observation times; empty means a command-specific default.
    pub times: Vec<u64>,
    pub betas: Vec<f64>,
    pub gamma: f64,
    pub replicas: u64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub oracle_samples: u64,
    pub floor_log: f64,
    /// Cap on simulated steps across replicas.
    pub budget: u64,
    /// `profile` only: `both`, `coupling` or `piles`.
    pub statistic: String,
}

impl ExperimentConfig {
    /// Builds a config for `command` with every other setting at its default.
    pub fn new(command: Command) -> Self {
        ConfigOverrides { command: Some(command.name().into()), beta: Some("0".into()), ..Default::default() }
            .resolve()
            .expect("defaults are valid")
    }

    /// The effective configuration, echoed into JSON metadata.
    pub fn to_json(&self) -> Value {
        json!({
            "command": self.command.name(),
            "model": self.model.to_string(),
            "law": self.law.spec().to_string(),
            "n": self.n,
            "t": self.times,
            "beta": self.betas,
            "gamma": self.gamma,
            "replicas": self.replicas,
            "seed": self.seed,
            "out": self.out.as_ref().map(|p| p.display().to_string()),
            "format": match self.format { Format::Csv => "csv", Format::Json => "json" },
            "oracle_samples": self.oracle_samples,
            "floor_log": self.floor_log,
            "budget": self.budget,
            "statistic": self.statistic,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_parsing_and_precedence() {
        let file = ConfigOverrides::parse_file("# demo\ncommand = constants\nn = 128\nlaw = beta:2\n\nseed=7 # trailing\n").unwrap();
        let cli = ConfigOverrides { n: Some("256".into()), ..Default::default() };
        let cfg = cli.over(file).resolve().unwrap();
        assert_eq!(cfg.command, Command::Constants);
        assert_eq!(cfg.n, 256);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.law.spec(), &RedistributionLaw::BetaSymmetric { alpha: 2.0 });
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let err = ConfigOverrides::parse_file("command = simulate\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, HarnessError::Config { line: Some(2), .. }));
        let file = ConfigOverrides::parse_file("command = simulate\n\nn = ten\n").unwrap();
        match file.resolve().unwrap_err() {
            HarnessError::Config { line, field, .. } => {
                assert_eq!(line, Some(3));
                assert_eq!(field, "n");
            }
            other => panic!("{other}"),
        }
        assert_eq!(file.resolve().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn validation() {
        let base = |k: &str, v: &str| {
            let mut o = ConfigOverrides { command: Some("profile".into()), beta: Some("0".into()), ..Default::default() };
            *o.slot(k).unwrap() = Some(v.into());
            o.resolve()
        };
        assert!(base("n", "1").is_err());
        assert!(base("replicas", "0").is_err());
        assert!(base("beta", "").is_err());
        assert!(base("law", "beta:-1").is_err());
        assert!(base("model", "kmp").is_err());
        assert!(base("t", "5,2").is_err());
        assert!(base("format", "xml").is_err());
        assert!(base("command", "fly").is_err());
        assert!(base("law", "discrete:0.2,0.5;0.8,0.5").is_ok());
    }

    #[test]
    fn json_echo() {
        let cfg = ExperimentConfig::new(Command::Constants);
        let v = cfg.to_json();
        assert_eq!(v["command"], "constants");
        assert_eq!(v["replicas"], DEFAULT_REPLICAS);
    }
}
