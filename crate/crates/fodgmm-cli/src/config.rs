//! Run configuration: a JSON document whose fields mirror the command-line
//! flags. Flags take precedence over the file; the output directory can
//! additionally come from the `FODGMM_OUT_DIR` environment variable (the
//! only environment override).

use std::path::PathBuf;

use fodgmm::{Error, InstrumentPlan, RegressorLayout, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Estimate,
    Simulate,
    Tables,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    /// Design ids from the 36-point catalog.
    pub designs: Option<Vec<u8>>,
    /// Post-burn-in horizons T (one experiment cell per design and T).
    pub t_values: Option<Vec<usize>>,
    pub n: Option<usize>,
    /// Estimators to run: "fod", "fd", "efficient".
    pub estimators: Option<Vec<String>>,
    /// Instrument plan for the capped estimators, e.g. "limited", "all",
    /// "power:0.5:2", "custom:1:2:0:2".
    pub plan: Option<String>,
    pub levels: Option<Vec<f64>>,
    pub alphas: Option<Vec<f64>>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    /// Dataset path (estimate mode).
    pub input: Option<PathBuf>,
    /// Estimator for estimate mode.
    pub estimator: Option<String>,
    pub layout: Option<String>,
    pub delimiter: Option<char>,
    /// Autoregressive coefficient for the sweep-mode base design.
    pub beta: Option<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config: {e}")))
    }

    pub fn emit(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Overlay `other` (the command-line flags) on top of this config.
    pub fn merged_with(mut self, other: RunConfig) -> Self {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if other.$field.is_some() { self.$field = other.$field; })*
            };
        }
        take!(
            mode, seed, reps, designs, t_values, n, estimators, plan, levels, alphas, threads,
            out_dir, input, estimator, layout, delimiter, beta
        );
        self
    }
}

pub fn parse_plan(text: &str) -> Result<InstrumentPlan> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts[0] {
        "limited" => Ok(InstrumentPlan::Limited),
        "all" | "all_available" => Ok(InstrumentPlan::AllAvailable),
        "power" | "power_law" => {
            let alpha: f64 = parts
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidConfig(format!("bad power plan '{text}'")))?;
            let base: usize = match parts.get(2) {
                Some(s) => s
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad power plan '{text}'")))?,
                None => 2,
            };
            Ok(InstrumentPlan::PowerLaw { alpha, base })
        }
        "custom" => {
            let nums: Vec<usize> = parts[1..]
                .iter()
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::InvalidConfig(format!("bad custom plan '{text}'")))?;
            if nums.len() != 4 {
                return Err(Error::InvalidConfig(format!(
                    "custom plan needs y_lag_min:y_lag_max:x_lag_min:x_lag_max, got '{text}'"
                )));
            }
            Ok(InstrumentPlan::Custom {
                y_lag_min: nums[0],
                y_lag_max: nums[1],
                x_lag_min: nums[2],
                x_lag_max: nums[3],
            })
        }
        other => Err(Error::InvalidConfig(format!("unknown plan '{other}'"))),
    }
}

pub fn parse_layout(text: &str) -> Result<RegressorLayout> {
    match text {
        "ar_with_regressors" | "ar" => Ok(RegressorLayout::ArWithRegressors),
        "pure_ar" | "pure-ar" => Ok(RegressorLayout::PureAr),
        other => Err(Error::InvalidConfig(format!("unknown layout '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_emit_round_trip() {
        let cfg = RunConfig {
            mode: Some(Mode::Tables),
            seed: Some(42),
            reps: Some(200),
            designs: Some(vec![5, 27]),
            t_values: Some(vec![20, 100]),
            n: Some(200),
            estimators: Some(vec!["fod".into(), "efficient".into()]),
            plan: Some("limited".into()),
            levels: Some(vec![0.95, 0.5]),
            alphas: None,
            threads: Some(2),
            out_dir: Some(PathBuf::from("out")),
            input: None,
            estimator: None,
            layout: None,
            delimiter: Some(','),
            beta: None,
        };
        let back = RunConfig::parse(&cfg.emit()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(RunConfig::parse(r#"{"modes": "tables"}"#).is_err());
    }

    #[test]
    fn flags_take_precedence() {
        let file = RunConfig {
            seed: Some(1),
            reps: Some(10),
            ..Default::default()
        };
        let flags = RunConfig {
            seed: Some(2),
            ..Default::default()
        };
        let merged = file.merged_with(flags);
        assert_eq!(merged.seed, Some(2));
        assert_eq!(merged.reps, Some(10));
    }

    #[test]
    fn plan_strings() {
        assert_eq!(parse_plan("limited").unwrap(), InstrumentPlan::Limited);
        assert_eq!(parse_plan("all").unwrap(), InstrumentPlan::AllAvailable);
        assert_eq!(
            parse_plan("power:0.5:3").unwrap(),
            InstrumentPlan::PowerLaw { alpha: 0.5, base: 3 }
        );
        assert_eq!(
            parse_plan("custom:1:2:0:2").unwrap(),
            InstrumentPlan::Custom {
                y_lag_min: 1,
                y_lag_max: 2,
                x_lag_min: 0,
                x_lag_max: 2
            }
        );
        assert!(parse_plan("bogus").is_err());
    }
}
