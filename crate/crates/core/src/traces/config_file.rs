//! Flat `key = value` configuration files.
//!
//! ```text
//! # comments start with '#'
//! alpha = 0.5
//! fair_share = 10            # or: A:2, B:4, C:6
//! init_credits = 900000
//! capacity_mode = fixed      # or scale-on-churn
//! slice_mb = 128
//! ```

use std::str::FromStr;

use num_traits::Zero;

use super::TraceError;
use crate::karma::{ChurnMode, Config, UserId};
use crate::scalar::{parse_rational, rational, Rational};

#[derive(Debug, Clone, PartialEq)]
pub enum FairShareSpec {
    Uniform(Rational),
    PerUser(Vec<(String, Rational)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileConfig {
    pub alpha: Rational,
    pub fair_share: FairShareSpec,
    pub init_credits: Rational,
    pub capacity_mode: ChurnMode,
    pub slice_mb: u64,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            alpha: rational(1, 2),
            fair_share: FairShareSpec::Uniform(Rational::from_integer(10)),
            init_credits: Rational::from_integer(1_000_000_000),
            capacity_mode: ChurnMode::Fixed,
            slice_mb: 128,
        }
    }
}

impl FileConfig {
    /// Builds a validated allocator config for the given trace users, which
    /// map to `UserId(0..)` in order.
    pub fn to_config(&self, users: &[String]) -> Result<Config<Rational>, TraceError> {
        let cfg_err = |e: crate::karma::KarmaError| TraceError::Config(e.to_string());
        let config = match &self.fair_share {
            FairShareSpec::Uniform(f) => {
                let shares = (0..users.len() as u32).map(|u| (UserId(u), *f));
                Config::weighted(shares, self.alpha, self.init_credits).map_err(cfg_err)?
            }
            FairShareSpec::PerUser(list) => {
                let mut shares = Vec::with_capacity(users.len());
                for (u, name) in users.iter().enumerate() {
                    let share = list
                        .iter()
                        .find(|(n, _)| n == name)
                        .map(|(_, s)| *s)
                        .ok_or_else(|| {
                            TraceError::Config(format!("no fair share for user {name}"))
                        })?;
                    shares.push((UserId(u as u32), share));
                }
                if let Some((extra, _)) = list.iter().find(|(n, _)| !users.contains(n)) {
                    return Err(TraceError::Config(format!(
                        "fair share for unknown user {extra}"
                    )));
                }
                Config::weighted(shares, self.alpha, self.init_credits).map_err(cfg_err)?
            }
        };
        let config = config.with_churn(self.capacity_mode);
        config.validate().map_err(cfg_err)?;
        Ok(config)
    }
}

impl FromStr for FileConfig {
    type Err = TraceError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        parse_config(text)
    }
}

/// Parses a config file. Keys not present keep their defaults.
pub fn parse_config(text: &str) -> Result<FileConfig, TraceError> {
    let mut out = FileConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| TraceError::Config(format!("line {}: {msg}", i + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let number = |v: &str| parse_rational(v).map_err(|e| err(e.to_string()));
        match key {
            "alpha" => out.alpha = number(value)?,
            "init_credits" => out.init_credits = number(value)?,
            "fair_share" => {
                out.fair_share = if value.contains(':') {
                    let mut list = Vec::new();
                    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                        let (user, share) = item
                            .split_once(':')
                            .ok_or_else(|| err(format!("bad entry {item:?}")))?;
                        list.push((user.trim().to_string(), number(share)?));
                    }
                    FairShareSpec::PerUser(list)
                } else {
                    FairShareSpec::Uniform(number(value)?)
                }
            }
            "capacity_mode" => {
                out.capacity_mode = match value {
                    "fixed" => ChurnMode::Fixed,
                    "scale-on-churn" => ChurnMode::ScaleOnChurn,
                    other => return Err(err(format!("unknown capacity_mode {other:?}"))),
                }
            }
            "slice_mb" => {
                out.slice_mb = value
                    .parse()
                    .map_err(|_| err(format!("bad slice_mb {value:?}")))?;
                if out.slice_mb == 0 {
                    return Err(err("slice_mb must be positive".into()));
                }
            }
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }
    if out.alpha < Rational::zero() || out.alpha > Rational::from_integer(1) {
        return Err(TraceError::Config(format!(
            "alpha {} outside [0, 1]",
            out.alpha
        )));
    }
    if out.init_credits < Rational::zero() {
        return Err(TraceError::Config(
            "init_credits must be non-negative".into(),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys() {
        let text = "# demo\nalpha = 1/2\nfair_share = A:2, B:4\ninit_credits = 6 # trailing\ncapacity_mode = scale-on-churn\nslice_mb = 64\n";
        let fc = parse_config(text).unwrap();
        assert_eq!(fc.alpha, rational(1, 2));
        assert_eq!(fc.init_credits, rational(6, 1));
        assert_eq!(fc.capacity_mode, ChurnMode::ScaleOnChurn);
        assert_eq!(fc.slice_mb, 64);
        let users = ["A".to_string(), "B".to_string()];
        let config = fc.to_config(&users).unwrap();
        assert_eq!(config.capacity(), 6);
        assert_eq!(config.share(UserId(1)), Some(&rational(4, 1)));
    }

    #[test]
    fn uniform_share_sets_capacity() {
        let fc = parse_config("fair_share = 2\nalpha=0.5\ninit_credits=6").unwrap();
        let users: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        let config = fc.to_config(&users).unwrap();
        assert_eq!(config.capacity(), 6);
        assert!(config.is_uniform());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_config("alpha = 2").is_err());
        assert!(parse_config("alpha 0.5").is_err());
        assert!(parse_config("colour = red").is_err());
        assert!(parse_config("capacity_mode = elastic").is_err());
        let fc = parse_config("fair_share = A:1").unwrap();
        assert!(fc.to_config(&["A".into(), "B".into()]).is_err());
        let fc = parse_config("fair_share = 1/2").unwrap();
        assert!(fc.to_config(&["A".into()]).is_err());
    }
}
