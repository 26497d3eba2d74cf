//! Flat `key = value` configuration files and the schedule grammar.
//!
//! ```text
//! # coexistence run
//! pa = 0.9
//! pb = 0.45
//! schedule = power:2,2,1
//! horizon = 1000000
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use banditlab_core::analysis::{FitDomain, Thresholds};
use banditlab_core::dynamics::{ParamsError, RecordingPlan};
use banditlab_core::schedule::ScheduleError;
use banditlab_core::{BanditParams, StepSchedule};

use crate::montecarlo::{ExperimentConfig, FitSettings};

/// Where a value came from, for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Flag,
    Default,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Flag => f.write_str("command line"),
            Origin::Default => f.write_str("default"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("{origin}: invalid value for `{key}`: {message}")]
    InvalidValue {
        origin: Origin,
        key: &'static str,
        message: String,
    },
    #[error("missing required setting `{0}`")]
    Missing(&'static str),
    #[error("invalid bandit parameters: {0}")]
    Params(#[from] ParamsError),
    #[error("{origin}: invalid schedule: {source}")]
    Schedule {
        origin: Origin,
        #[source]
        source: ScheduleSpecError,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum ScheduleSpecError {
    #[error("expected constant:<gamma>, power:<C>,<C'>,<alpha> or custom:<path>, got `{0}`")]
    Grammar(String),
    #[error("`{0}` is not a number")]
    Number(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("{path}: line {line}: `{text}` is not a number")]
    CustomLine {
        path: PathBuf,
        line: usize,
        text: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn number(s: &str) -> Result<f64, ScheduleSpecError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| ScheduleSpecError::Number(s.trim().to_string()))
}

/// Parses `constant:<γ>`, `power:<C>,<C'>,<α>` or `custom:<path>`.
///
/// A custom file holds one step size per line; blank lines and `#`
/// comments are skipped. Custom schedules are finite: asking for a step
/// beyond the last line is an error.
pub fn parse_schedule(text: &str) -> Result<StepSchedule, ScheduleSpecError> {
    let text = text.trim();
    let grammar = || ScheduleSpecError::Grammar(text.to_string());
    let (kind, rest) = text.split_once(':').ok_or_else(grammar)?;
    match kind.trim() {
        "constant" => Ok(StepSchedule::constant(number(rest)?)?),
        "power" => {
            let parts: Vec<&str> = rest.split(',').collect();
            let [c, c_prime, alpha] = parts.as_slice() else {
                return Err(grammar());
            };
            Ok(StepSchedule::power(
                number(c)?,
                number(c_prime)?,
                number(alpha)?,
            )?)
        }
        "custom" => read_custom_schedule(Path::new(rest.trim())),
        _ => Err(grammar()),
    }
}

pub fn read_custom_schedule(path: &Path) -> Result<StepSchedule, ScheduleSpecError> {
    let text = fs::read_to_string(path).map_err(|source| ScheduleSpecError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = strip_comment(line);
        if line.is_empty() {
            continue;
        }
        let v = line
            .parse::<f64>()
            .map_err(|_| ScheduleSpecError::CustomLine {
                path: path.to_path_buf(),
                line: i + 1,
                text: line.to_string(),
            })?;
        values.push(v);
    }
    Ok(StepSchedule::custom_from_values(
        path.display().to_string(),
        values,
    )?)
}

fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(head, _)| head).trim()
}

/// Every recognised key.
pub const KEYS: &[&str] = &[
    "pa",
    "pb",
    "schedule",
    "x0",
    "horizon",
    "replicates",
    "seed",
    "workers",
    "delta_zero",
    "delta_one",
    "fit_domain",
    "fit_start",
    "fit_end",
    "checkpoints",
    "verify_tail",
    "out",
];

/// Raw settings before validation; each value remembers its origin.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    entries: Vec<(&'static str, String, Origin)>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut settings = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    text: raw.trim().to_string(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    text: raw.trim().to_string(),
                });
            }
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(ConfigError::UnknownKey {
                    line: line_no,
                    key: key.to_string(),
                });
            };
            if settings.get(known).is_some() {
                return Err(ConfigError::DuplicateKey {
                    line: line_no,
                    key: key.to_string(),
                });
            }
            settings
                .entries
                .push((known, value.to_string(), Origin::Line(line_no)));
        }
        Ok(settings)
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Sets `key` from the command line, replacing any file value.
    ///
    /// # Panics
    /// If `key` is not one of [`KEYS`].
    pub fn set_flag(&mut self, key: &str, value: impl Into<String>) {
        let known = *KEYS.iter().find(|k| **k == key).expect("known key");
        self.entries.retain(|(k, _, _)| *k != known);
        self.entries.push((known, value.into(), Origin::Flag));
    }

    pub fn get(&self, key: &str) -> Option<(&str, &Origin)> {
        self.entries
            .iter()
            .find(|(k, _, _)| *k == key)
            .map(|(_, v, o)| (v.as_str(), o))
    }

    fn typed<T: std::str::FromStr>(&self, key: &'static str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some((v, origin)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| ConfigError::InvalidValue {
                    origin: origin.clone(),
                    key,
                    message: format!("`{v}`: {e}"),
                }),
        }
    }

    fn invalid(&self, key: &'static str, message: impl Into<String>) -> ConfigError {
        ConfigError::InvalidValue {
            origin: self.get(key).map_or(Origin::Default, |(_, o)| o.clone()),
            key,
            message: message.into(),
        }
    }

    /// Validates everything and produces a run configuration.
    pub fn resolve(&self, env_seed: Option<&str>) -> Result<RunConfig, ConfigError> {
        let pa = self.typed::<f64>("pa")?.ok_or(ConfigError::Missing("pa"))?;
        let pb = self.typed::<f64>("pb")?.ok_or(ConfigError::Missing("pb"))?;
        let params = BanditParams::new(pa, pb)?;
        let (text, origin) = self
            .get("schedule")
            .ok_or(ConfigError::Missing("schedule"))?;
        let schedule = parse_schedule(text).map_err(|source| ConfigError::Schedule {
            origin: origin.clone(),
            source,
        })?;

        let x0 = self.typed::<f64>("x0")?.unwrap_or(0.5);
        if !(x0 > 0.0 && x0 < 1.0) {
            return Err(self.invalid("x0", format!("x0 must lie in (0,1), got {x0}")));
        }
        let horizon = self.typed::<u64>("horizon")?.unwrap_or(10_000);
        if horizon == 0 {
            return Err(self.invalid("horizon", "horizon must be at least 1"));
        }
        let replicates = self.typed::<u64>("replicates")?.unwrap_or(1000);
        if replicates == 0 {
            return Err(self.invalid("replicates", "replicates must be at least 1"));
        }
        let seed = match self.typed::<u64>("seed")? {
            Some(s) => s,
            None => match env_seed {
                Some(s) => s
                    .trim()
                    .parse::<u64>()
                    .map_err(|e| ConfigError::InvalidValue {
                        origin: Origin::Default,
                        key: "seed",
                        message: format!("BANDITLAB_SEED `{s}`: {e}"),
                    })?,
                None => 0,
            },
        };
        let workers = self.typed::<usize>("workers")?.unwrap_or(1);
        if workers == 0 {
            return Err(self.invalid("workers", "workers must be at least 1"));
        }
        let defaults = Thresholds::default();
        let thresholds = Thresholds {
            delta_zero: self.typed("delta_zero")?.unwrap_or(defaults.delta_zero),
            delta_one: self.typed("delta_one")?.unwrap_or(defaults.delta_one),
        };
        if thresholds.validate().is_err() {
            return Err(self.invalid("delta_zero", "thresholds must lie in (0, 0.1)"));
        }
        let domain = match self.get("fit_domain").map(|(v, _)| v) {
            None => None,
            Some("log_n") => Some(FitDomain::LogN),
            Some("gamma") => Some(FitDomain::GammaDomain),
            Some(other) => {
                return Err(self.invalid(
                    "fit_domain",
                    format!("expected log_n or gamma, got `{other}`"),
                ))
            }
        };
        let window = match (
            self.typed::<u64>("fit_start")?,
            self.typed::<u64>("fit_end")?,
        ) {
            (None, None) => None,
            (a, b) => {
                let (a, b) = (a.unwrap_or((horizon / 10).max(1)), b.unwrap_or(horizon));
                if a == 0 || a > b || b > horizon {
                    return Err(self.invalid(
                        "fit_start",
                        format!("fit window {a}..={b} must lie inside 1..={horizon}"),
                    ));
                }
                Some((a, b))
            }
        };
        let plan = match self.get("checkpoints").map(|(v, _)| v) {
            None => RecordingPlan::default(),
            Some("every") => RecordingPlan::Every,
            Some(_) => {
                let count = self.typed::<usize>("checkpoints")?.expect("present");
                if count == 0 {
                    return Err(self.invalid("checkpoints", "checkpoints must be at least 1"));
                }
                RecordingPlan::LogUniform { count }
            }
        };
        let verify_tail = self.typed::<bool>("verify_tail")?.unwrap_or(false);
        let out = self.get("out").map(|(v, _)| PathBuf::from(v));
        Ok(RunConfig {
            params,
            schedule,
            x0,
            horizon,
            replicates,
            seed,
            workers,
            thresholds,
            fit: FitSettings { domain, window },
            plan,
            verify_tail,
            out,
        })
    }
}

/// A validated configuration shared by all commands.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: BanditParams,
    pub schedule: StepSchedule,
    pub x0: f64,
    pub horizon: u64,
    pub replicates: u64,
    pub seed: u64,
    pub workers: usize,
    pub thresholds: Thresholds,
    pub fit: FitSettings,
    pub plan: RecordingPlan,
    pub verify_tail: bool,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn experiment(&self) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(
            self.params,
            self.schedule.clone(),
            self.horizon,
            self.replicates,
        );
        c.x0 = self.x0;
        c.master_seed = self.seed;
        c.thresholds = self.thresholds;
        c.fit = self.fit;
        c.workers = self.workers;
        c.verify_tail = self.verify_tail;
        if let RecordingPlan::LogUniform { count } = self.plan {
            c.checkpoints = count;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_valid_file() {
        let s =
            Settings::parse("# demo\npa = 0.6\npb = 0.2   # trailing\n\nschedule = power:1,1,1\n")
                .unwrap();
        let c = s.resolve(None).unwrap();
        assert!((c.params.pi() - 0.4).abs() < 1e-15);
        assert_eq!(c.schedule, StepSchedule::harmonic(1.0).unwrap());
        assert_eq!((c.x0, c.seed), (0.5, 0));
    }

    #[test]
    fn rejects_reversed_probabilities() {
        let s = Settings::parse("pa = 0.2\npb = 0.6\nschedule = constant:0.1").unwrap();
        let e = s.resolve(None).unwrap_err().to_string();
        assert!(e.contains("requires 0 < pb < pa < 1"), "{e}");
    }

    #[test]
    fn rejects_alpha_above_one() {
        let s = Settings::parse("pa = 0.6\npb = 0.2\nschedule = power:1,1,1.5").unwrap();
        let e = s.resolve(None).unwrap_err().to_string();
        assert!(e.contains("alpha must lie in (0,1]"), "{e}");
        assert!(e.contains("line 3"), "{e}");
    }

    #[test]
    fn errors_name_their_line() {
        let e = Settings::parse("pa = 0.6\nbogus = 1\n").unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey { line: 2, .. }));
        let e = Settings::parse("pa = 0.6\n\njust words\n").unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 3, .. }));
        let e = Settings::parse("pa = 0.6\npa = 0.7\n").unwrap_err();
        assert!(matches!(e, ConfigError::DuplicateKey { line: 2, .. }));
        let s = Settings::parse("pa = 0.6\npb = 0.2\nschedule = constant:0.1\nhorizon = ten\n")
            .unwrap();
        let e = s.resolve(None).unwrap_err().to_string();
        assert!(e.starts_with("line 4: invalid value for `horizon`"), "{e}");
    }

    #[test]
    fn flags_override_file_and_seed_falls_back_to_env() {
        let mut s =
            Settings::parse("pa = 0.6\npb = 0.2\nschedule = constant:0.1\nseed = 5\n").unwrap();
        assert_eq!(s.resolve(Some("9")).unwrap().seed, 5);
        s.set_flag("seed", "7");
        s.set_flag("pa", "0.7");
        let c = s.resolve(Some("9")).unwrap();
        assert_eq!((c.seed, c.params.pa()), (7, 0.7));
        let s = Settings::parse("pa = 0.6\npb = 0.2\nschedule = constant:0.1\n").unwrap();
        assert_eq!(s.resolve(Some("9")).unwrap().seed, 9);
    }

    #[test]
    fn schedule_grammar() {
        assert_eq!(
            parse_schedule("constant:0.1").unwrap(),
            StepSchedule::constant(0.1).unwrap()
        );
        assert_eq!(
            parse_schedule(" power: 2, 2, 1 ").unwrap(),
            StepSchedule::power(2.0, 2.0, 1.0).unwrap()
        );
        assert!(matches!(
            parse_schedule("power:1,1"),
            Err(ScheduleSpecError::Grammar(_))
        ));
        assert!(matches!(
            parse_schedule("linear:1"),
            Err(ScheduleSpecError::Grammar(_))
        ));
        assert!(matches!(
            parse_schedule("constant:x"),
            Err(ScheduleSpecError::Number(_))
        ));
        assert!(parse_schedule("constant:1.5").is_err());
    }

    #[test]
    fn custom_schedule_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("steps.txt");
        fs::write(&path, "# steps\n0.5\n0.25\n\n0.125 # last\n").unwrap();
        let s = parse_schedule(&format!("custom:{}", path.display())).unwrap();
        assert_eq!(s.len(), Some(3));
        assert_eq!(s.gamma_at(2).unwrap(), 0.25);
        assert!(matches!(
            s.gamma_at(4),
            Err(ScheduleError::BeyondEnd { n: 4, len: 3 })
        ));
        fs::write(&path, "0.5\nhalf\n").unwrap();
        assert!(matches!(
            parse_schedule(&format!("custom:{}", path.display())),
            Err(ScheduleSpecError::CustomLine { line: 2, .. })
        ));
    }
}
