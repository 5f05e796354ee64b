//! Run configuration: one JSON document holding the model parameters plus
//! run options, with command-line flags taking precedence.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use serde_json::{Map, Value};

use ringstab::fluid::ScaledGrid;
use ringstab::sim_ring::RingState;
use ringstab::slotted::SlottedSpec;
use ringstab::{ParameterDocument, ParameterSetting};

const PARAMETER_KEYS: [&str; 4] = ["L", "p", "q", "zero_rate_types"];
const SLOTTED_KEYS: [&str; 4] = ["n", "c", "arrival_rates", "dest"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    #[default]
    Ring,
    RingLegacy,
    Mcn,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub step: f64,
    pub end: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { step: 0.01, end: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Scaled queue norm below which the fluid path counts as drained.
    pub epsilon: f64,
    pub circularity: f64,
    pub min_busy_length: f64,
    /// Allowed gap between busy-interval slopes and `-(1 - rho_i)`.
    pub slope: f64,
    /// Share of fluid replications that must drain before the bound.
    pub drain_share: f64,
    pub fixed_point: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            circularity: 0.05,
            min_busy_length: 0.5,
            slope: 0.05,
            drain_share: 0.95,
            fixed_point: 1e-12,
            max_iter: 1_000_000,
        }
    }
}

/// Everything in the config file other than the model description.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub model: Option<Model>,
    pub seed: Option<u64>,
    pub horizon: Option<u64>,
    pub replications: Option<u64>,
    pub burn_in: Option<u64>,
    pub record_every: Option<u64>,
    /// Ring state with cell labels in `0..=L`.
    pub initial: Option<RingState>,
    /// Initial entry-queue contents for fluid runs.
    pub entry_mass: Option<Vec<u64>>,
    pub grid: GridConfig,
    pub tolerances: Tolerances,
    /// Load threshold replacing 1 in the stability verdict.
    pub threshold: Option<f64>,
    /// Boundary samples for two-cell regions.
    pub resolution: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Flag values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub horizon: Option<u64>,
    pub replications: Option<u64>,
    pub out: Option<PathBuf>,
    pub model: Option<Model>,
}

#[derive(Debug, Clone)]
pub enum Description {
    Ring(ParameterSetting<f64>),
    Slotted(SlottedSpec<f64>),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub description: Description,
    pub options: RunOptions,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text, overrides).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn parse(text: &str, overrides: &Overrides) -> Result<Self> {
        let value: Value = serde_json::from_str(text).context("config is not valid JSON")?;
        let Value::Object(mut fields) = value else {
            bail!("config must be a JSON object");
        };
        let description = if SLOTTED_KEYS.iter().any(|k| fields.contains_key(*k)) {
            let spec: SlottedSpec<f64> = serde_json::from_value(Value::Object(take(&mut fields, &SLOTTED_KEYS)))
                .context("malformed slotted-ring specification")?;
            spec.validate()?;
            Description::Slotted(spec)
        } else {
            let doc: ParameterDocument = serde_json::from_value(Value::Object(take(&mut fields, &PARAMETER_KEYS)))
                .context("malformed parameter setting")?;
            Description::Ring(ParameterSetting::try_from(doc)?)
        };
        let mut options: RunOptions =
            serde_json::from_value(Value::Object(fields)).context("malformed run options")?;
        options.seed = overrides.seed.or(options.seed);
        options.horizon = overrides.horizon.or(options.horizon);
        options.replications = overrides.replications.or(options.replications);
        options.out = overrides.out.clone().or(options.out);
        options.model = overrides.model.or(options.model);
        let config = Self { description, options };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        let o = &self.options;
        let t = &o.tolerances;
        for (name, value) in [
            ("tolerances.epsilon", t.epsilon),
            ("tolerances.circularity", t.circularity),
            ("tolerances.slope", t.slope),
            ("tolerances.fixed_point", t.fixed_point),
        ] {
            if !(value.is_finite() && value > 0.0) {
                bail!("{name} must be positive, got {value}");
            }
        }
        if !(t.min_busy_length.is_finite() && t.min_busy_length >= 0.0) {
            bail!("tolerances.min_busy_length must be non-negative");
        }
        if !(0.0..=1.0).contains(&t.drain_share) {
            bail!("tolerances.drain_share must lie in [0, 1]");
        }
        if t.max_iter == 0 {
            bail!("tolerances.max_iter must be positive");
        }
        if o.replications == Some(0) {
            bail!("replications must be positive");
        }
        if o.record_every == Some(0) {
            bail!("record_every must be positive");
        }
        if let Some(threshold) = o.threshold {
            if !(threshold > 0.0 && threshold <= 1.0) {
                bail!("threshold must lie in (0, 1], got {threshold}");
            }
        }
        ScaledGrid::new(o.grid.step, o.grid.end)?;
        if let (Description::Ring(ps), Some(initial)) = (&self.description, &o.initial) {
            initial.validate(ps.ring_size())?;
        }
        if let (Description::Ring(ps), Some(mass)) = (&self.description, &o.entry_mass) {
            if mass.len() != ps.ring_size() {
                bail!("entry_mass has {} entries for a ring of {} cells", mass.len(), ps.ring_size());
            }
        }
        Ok(())
    }

    pub fn ring(&self) -> Result<&ParameterSetting<f64>> {
        match &self.description {
            Description::Ring(ps) => Ok(ps),
            Description::Slotted(_) => bail!("this command needs a ring parameter setting (L, p, q)"),
        }
    }

    pub fn slotted(&self) -> Result<&SlottedSpec<f64>> {
        match &self.description {
            Description::Slotted(spec) => Ok(spec),
            Description::Ring(_) => bail!("this command needs a slotted-ring specification (n, c, arrival_rates, dest)"),
        }
    }

    pub fn seed(&self) -> u64 {
        self.options.seed.unwrap_or(0)
    }

    /// `seed, seed + 1, ...` for each replication.
    pub fn seeds(&self) -> Vec<u64> {
        let base = self.seed();
        (0..self.options.replications.unwrap_or(1))
            .map(|r| base.wrapping_add(r))
            .collect()
    }
}

fn take(fields: &mut Map<String, Value>, keys: &[&str]) -> Map<String, Value> {
    keys.iter()
        .filter_map(|k| fields.remove(*k).map(|v| ((*k).to_string(), v)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_CELL: &str = r#"{"L": 2, "p": [0.3, 0.3], "q": [[0.75, 0.75], [0.5, 0.5]]}"#;

    #[test]
    fn flags_override_file() {
        let text = r#"{"L": 1, "p": [0.2], "q": [[0.5]], "seed": 4, "horizon": 10}"#;
        let overrides = Overrides {
            seed: Some(9),
            ..Overrides::default()
        };
        let config = RunConfig::parse(text, &overrides).unwrap();
        assert_eq!(config.seed(), 9);
        assert_eq!(config.options.horizon, Some(10));
    }

    #[test]
    fn unknown_options_are_rejected() {
        let text = r#"{"L": 1, "p": [0.2], "q": [[0.5]], "horizn": 10}"#;
        assert!(RunConfig::parse(text, &Overrides::default()).is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let text = r#"{"L": 2, "p": [0.2], "q": [[0.5, 0.5], [0.5, 0.5]]}"#;
        let err = RunConfig::parse(text, &Overrides::default()).unwrap_err();
        assert!(format!("{err:#}").contains("dimension"), "{err:#}");
    }

    #[test]
    fn replication_seeds_are_consecutive() {
        let overrides = Overrides {
            seed: Some(u64::MAX),
            replications: Some(3),
            ..Overrides::default()
        };
        let config = RunConfig::parse(TWO_CELL, &overrides).unwrap();
        assert_eq!(config.seeds(), vec![u64::MAX, 0, 1]);
    }

    #[test]
    fn slotted_specs_are_recognised() {
        let text = r#"{"n": 2, "c": 2, "arrival_rates": [0.3, 0.4], "dest": [[0, 1], [1, 0]]}"#;
        let config = RunConfig::parse(text, &Overrides::default()).unwrap();
        assert!(config.slotted().is_ok());
        assert!(config.ring().is_err());
    }
}
