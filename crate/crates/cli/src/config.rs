//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Keys match the long command-line flags with `-` replaced by `_`.
//! Lists are comma separated, grids are `start:stop:count` or a list, and
//! floats are written in shortest round-trip form so that rendering and
//! parsing a config gives back the same values.

use std::fmt;
use std::str::FromStr;

use aaa_core::sources::LeakDist;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("unknown preset `{0}` (expected wifi, lora or zigbee)")]
    Preset(String),
}

/// A value that can be stored in a config file.
pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

impl ConfigValue for u64 {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.parse().map_err(|e| format!("{e}"))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for usize {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.parse().map_err(|e| format!("{e}"))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for f64 {
    fn parse_value(s: &str) -> Result<Self, String> {
        let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{s} is not finite"))
        }
    }
    fn render(&self) -> String {
        format!("{self:?}")
    }
}

impl ConfigValue for String {
    fn parse_value(s: &str) -> Result<Self, String> {
        Ok(s.to_string())
    }
    fn render(&self) -> String {
        self.clone()
    }
}

impl<T: ConfigValue> ConfigValue for Vec<T> {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.split(',').map(|x| T::parse_value(x.trim())).collect()
    }
    fn render(&self) -> String {
        self.iter().map(T::render).collect::<Vec<_>>().join(",")
    }
}

impl ConfigValue for LeakDist {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.parse().map_err(|e| format!("{e}"))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

macro_rules! impl_via_fromstr {
    ($($ty:ty),*) => {$(
        impl ConfigValue for $ty {
            fn parse_value(s: &str) -> Result<Self, String> {
                s.parse()
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

impl_via_fromstr!(Format, Grid, Span);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("expected csv or json, got `{s}`")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

/// A grid axis: `start:stop:count` (inclusive, evenly spaced) or an explicit
/// comma-separated list.
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Linspace { start: f64, stop: f64, count: usize },
    List(Vec<f64>),
}

impl Grid {
    /// Grid values. Linspace points are rounded to 12 decimals so that
    /// e.g. `0.02:0.98:49` contains exactly `0.5`.
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Linspace { start, stop, count } => match count {
                0 => Vec::new(),
                1 => vec![*start],
                _ => (0..*count)
                    .map(|k| {
                        let t = k as f64 / (count - 1) as f64;
                        let v = start + (stop - start) * t;
                        (v * 1e12).round() / 1e12
                    })
                    .collect(),
            },
        }
    }
}

impl FromStr for Grid {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [start, stop, count] => Ok(Grid::Linspace {
                start: f64::parse_value(start.trim())?,
                stop: f64::parse_value(stop.trim())?,
                count: usize::parse_value(count.trim())?,
            }),
            [list] => Ok(Grid::List(Vec::<f64>::parse_value(list)?)),
            _ => Err(format!("expected start:stop:count or a list, got `{s}`")),
        }
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grid::Linspace { start, stop, count } => write!(f, "{start:?}:{stop:?}:{count}"),
            Grid::List(v) => f.write_str(&v.render()),
        }
    }
}

/// Inclusive integer range `a..b`, optionally written `M=a..b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub lo: usize,
    pub hi: usize,
}

impl Span {
    pub fn iter(&self) -> std::ops::RangeInclusive<usize> {
        self.lo..=self.hi
    }
}

impl FromStr for Span {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let body = s.strip_prefix("M=").unwrap_or(s);
        let (lo, hi) = body
            .split_once("..")
            .ok_or_else(|| format!("expected a..b, got `{s}`"))?;
        let lo = usize::parse_value(lo.trim())?;
        let hi = usize::parse_value(hi.trim())?;
        if lo == 0 || hi < lo {
            return Err(format!("range {lo}..{hi} must satisfy 1 <= a <= b"));
        }
        Ok(Span { lo, hi })
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.lo, self.hi)
    }
}

macro_rules! config_fields {
    ($($(#[doc = $doc:literal])* $field:ident: $ty:ty),* $(,)?) => {
        /// Every experiment parameter; unset fields fall back to the next
        /// layer (flags, then config file, then preset, then built-in default).
        #[derive(Debug, Clone, Default, PartialEq)]
        pub struct ExperimentConfig {
            $($(#[doc = $doc])* pub $field: Option<$ty>,)*
        }

        impl ExperimentConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                match key {
                    $(stringify!($field) => {
                        self.$field = Some(<$ty>::parse_value(value).map_err(|msg| ConfigError::Value {
                            key: key.to_string(),
                            msg,
                        })?);
                    })*
                    _ => return Err(ConfigError::UnknownKey(key.to_string())),
                }
                Ok(())
            }

            /// Renders the set fields as config-file text.
            pub fn to_text(&self) -> String {
                let mut out = String::new();
                $(if let Some(v) = &self.$field {
                    out.push_str(stringify!($field));
                    out.push_str(" = ");
                    out.push_str(&v.render());
                    out.push('\n');
                })*
                out
            }

            /// Field-wise `self` if set, else `fallback`.
            pub fn or(self, fallback: ExperimentConfig) -> ExperimentConfig {
                ExperimentConfig {
                    $($field: self.$field.or(fallback.$field),)*
                }
            }
        }
    };
}

config_fields! {
    seed: u64,
    trials: u64,
    format: Format,
    out: String,
    /// Markov persistence.
    alpha: f64,
    /// Erasure probability, one value or one per packet.
    mu: Vec<f64>,
    /// Packets per session.
    n: usize,
    key_len: usize,
    alpha_grid: Grid,
    mu_grid: Grid,
    ladder: Vec<usize>,
    l_dist: LeakDist,
    n_max: usize,
    /// Pilot symbols per half period.
    symbols: usize,
    power: f64,
    periods: usize,
    rate: f64,
    gamma: f64,
    gamma_m: Vec<f64>,
    /// Eve's per-period erasure rate, used when `gamma_m` is unset.
    mu_e: f64,
    sweep: Span,
    preset: String,
    sessions: u64,
    exact_points: usize,
    mc_n: usize,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Built-in link presets: payload size `S·R` and coherence figures for
    /// common radios.
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let (symbols, rate, power) = match name {
            "wifi" => (6000, 2.0, 10.0),
            "lora" => (968, 2.0, 3.0),
            "zigbee" => (400, 2.0, 10.0),
            _ => return Err(ConfigError::Preset(name.to_string())),
        };
        Ok(ExperimentConfig {
            symbols: Some(symbols),
            rate: Some(rate),
            power: Some(power),
            periods: Some(22),
            gamma: Some(1.0),
            mu_e: Some(0.1),
            ..Default::default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render() {
        let text = "# comment\nalpha = 0.9\nmu = 0.1, 0.2\nalpha_grid = 0.02:0.98:49\nsweep = M=1..100\nl_dist = fixed:1\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.alpha, Some(0.9));
        assert_eq!(cfg.mu, Some(vec![0.1, 0.2]));
        assert_eq!(cfg.sweep, Some(Span { lo: 1, hi: 100 }));
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn errors() {
        assert_eq!(
            ExperimentConfig::parse("bogus = 1"),
            Err(ConfigError::UnknownKey("bogus".into()))
        );
        assert_eq!(
            ExperimentConfig::parse("alpha"),
            Err(ConfigError::Syntax { line: 1 })
        );
        assert!(ExperimentConfig::parse("alpha = nan").is_err());
        assert!(ExperimentConfig::parse("sweep = 5..2").is_err());
        assert!(ExperimentConfig::preset("nbiot").is_err());
    }

    #[test]
    fn grid_values() {
        let g: Grid = "0.02:0.98:49".parse().unwrap();
        let v = g.values();
        assert_eq!(v.len(), 49);
        assert_eq!(v[24], 0.5);
        assert_eq!(v[0], 0.02);
        assert_eq!(v[48], 0.98);
        let g: Grid = "0.1,0.5".parse().unwrap();
        assert_eq!(g.values(), vec![0.1, 0.5]);
    }

    #[test]
    fn layering() {
        let flags = ExperimentConfig {
            alpha: Some(0.3),
            ..Default::default()
        };
        let file = ExperimentConfig {
            alpha: Some(0.7),
            n: Some(5),
            ..Default::default()
        };
        let cfg = flags.or(file);
        assert_eq!((cfg.alpha, cfg.n), (Some(0.3), Some(5)));
    }
}
