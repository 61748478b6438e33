use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    NoisyPairs,
    Gridworld,
    Bandit,
    Decomposition,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::NoisyPairs => "noisy-pairs",
            Experiment::Gridworld => "gridworld",
            Experiment::Bandit => "bandit",
            Experiment::Decomposition => "decomposition",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ama,
    Mse,
    Ensemble,
    None,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ama => "ama",
            Method::Mse => "mse",
            Method::Ensemble => "ensemble",
            Method::None => "none",
        }
    }
}

/// Flat experiment configuration. Method-dependent settings left as `null`
/// take the documented default for the chosen experiment and method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub method: Method,
    pub seeds: Vec<u64>,
    /// Batches (noisy-pairs), frames (gridworld) or pulls (bandit).
    pub budget: u64,
    /// Metric logging period in budget units; 0 logs only the end of the run.
    pub log_every: u64,

    pub lambda: Option<f64>,
    pub eta: f64,
    pub beta: f64,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub clip: Option<bool>,
    pub normalize: Option<bool>,
    pub reward_scaling: f64,

    pub flip_rate: f64,
    pub idx_images: Option<String>,
    pub idx_labels: Option<String>,

    pub rooms: usize,
    pub noisy_tv: bool,
    pub max_steps: u32,
    pub view: usize,
    pub actors: usize,
    pub unroll: usize,
    pub policy_lr: f64,
    pub policy_hidden: Vec<usize>,
    /// Gridworld observations reach the predictor multiplied by this factor
    /// after scaling into `[0, 1]`.
    pub prediction_scale: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub rms_alpha: f64,
    pub rms_eps: f64,

    pub arms: usize,
    pub zone_a_arms: usize,
    pub frequency: f64,
    pub epsilon: f64,
    pub ensemble_size: usize,
    pub probes: usize,

    pub models: usize,
    pub samples: usize,
    pub test_points: usize,
    pub noise_sigma: f64,
    pub train_steps: usize,
    pub bootstrap: usize,

    pub output: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: Experiment::NoisyPairs,
            method: Method::Ama,
            seeds: vec![0],
            budget: 20_000,
            log_every: 100,
            lambda: None,
            eta: 1.0,
            beta: 1.0,
            lr: None,
            batch_size: None,
            hidden: None,
            clip: None,
            normalize: None,
            reward_scaling: 1.0,
            flip_rate: 0.0,
            idx_images: None,
            idx_labels: None,
            rooms: 6,
            noisy_tv: false,
            max_steps: 400,
            view: 7,
            actors: 16,
            unroll: 5,
            policy_lr: 0.001,
            policy_hidden: vec![128, 128],
            prediction_scale: 1.0,
            gamma: 0.99,
            gae_lambda: 0.95,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            rms_alpha: 0.99,
            rms_eps: 1e-8,
            arms: 10,
            zone_a_arms: 5,
            frequency: 3.0,
            epsilon: 0.1,
            ensemble_size: 5,
            probes: 64,
            models: 20,
            samples: 20,
            test_points: 200,
            noise_sigma: 0.5,
            train_steps: 500,
            bootstrap: 1000,
            output: None,
        }
    }
}

impl ExperimentConfig {
    /// Defaults for one experiment and method.
    pub fn new(experiment: Experiment, method: Method) -> Self {
        let budget = match experiment {
            Experiment::NoisyPairs => 20_000,
            Experiment::Gridworld => 200_000,
            Experiment::Bandit => 5_000,
            Experiment::Decomposition => 1,
        };
        let log_every = match experiment {
            Experiment::Gridworld => 2_000,
            Experiment::Bandit => 1,
            _ => 100,
        };
        Self {
            experiment,
            method,
            budget,
            log_every,
            ..Self::default()
        }
    }

    /// Defaults for `experiment`, then the keys of the JSON file at `path`,
    /// then `key=value` overrides.
    pub fn layered<S: AsRef<str>>(experiment: Experiment, path: Option<&Path>, overrides: &[S]) -> Result<Self> {
        let method = match experiment {
            Experiment::Decomposition => Method::Mse,
            _ => Method::Ama,
        };
        let base = Self::new(experiment, method);
        let Some(path) = path else {
            return base.with_overrides(overrides);
        };
        let located = |m: String| Error::Config(format!("{}: {m}", path.display()));
        let text = std::fs::read_to_string(path).map_err(|e| located(e.to_string()))?;
        let file: Value = serde_json::from_str(&text).map_err(|e| located(e.to_string()))?;
        let Value::Object(file) = file else {
            return Err(located("config must be a JSON object".into()));
        };
        let mut v = serde_json::to_value(&base).map_err(|e| Error::Config(e.to_string()))?;
        let obj = v.as_object_mut().expect("config is an object");
        for (k, val) in file {
            obj.insert(k, val);
        }
        let cfg: Self = serde_json::from_value(v).map_err(|e| located(e.to_string()))?;
        if cfg.experiment != experiment {
            return Err(located(format!(
                "config is for {}, not {}",
                cfg.experiment.name(),
                experiment.name()
            )));
        }
        cfg.with_overrides(overrides)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `key=value` overrides. Values are read as JSON when they parse
    /// and as strings otherwise.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut v = serde_json::to_value(self).map_err(|e| Error::Config(e.to_string()))?;
        let obj = v.as_object_mut().expect("config is an object");
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let key = key.trim();
            if !obj.contains_key(key) {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            obj.insert(key.to_string(), value);
        }
        let cfg: Self = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let allowed: &[Method] = match self.experiment {
            Experiment::NoisyPairs => &[Method::Ama, Method::Mse],
            Experiment::Gridworld => &[Method::Ama, Method::Mse, Method::None],
            Experiment::Bandit => &[Method::Ama, Method::Ensemble],
            Experiment::Decomposition => &[Method::Mse, Method::None],
        };
        if !allowed.contains(&self.method) {
            return bad(format!(
                "method {} is not valid for {}",
                self.method.name(),
                self.experiment.name()
            ));
        }
        if self.experiment == Experiment::Gridworld && self.rooms != 4 && self.rooms != 6 {
            return bad(format!("rooms must be 4 or 6, got {}", self.rooms));
        }
        if self.lambda.is_some_and(|l| !(l >= 0.0)) || !(self.eta >= 0.0) || !(self.beta >= 0.0) {
            return bad("lambda, eta and beta must be nonnegative".into());
        }
        if !(self.reward_scaling > 0.0) {
            return bad("reward_scaling must be positive".into());
        }
        if self.lr.is_some_and(|l| !(l >= 0.0)) || !(self.policy_lr >= 0.0) {
            return bad("learning rates must be nonnegative".into());
        }
        if self.batch_size == Some(0) || self.actors == 0 || self.unroll == 0 {
            return bad("batch_size, actors and unroll must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon) || !(0.0..=1.0).contains(&self.flip_rate) {
            return bad("epsilon and flip_rate must lie in [0, 1]".into());
        }
        if self.experiment == Experiment::Bandit && (self.arms == 0 || self.zone_a_arms > self.arms) {
            return bad("bandit needs arms > 0 and zone_a_arms <= arms".into());
        }
        if self.experiment == Experiment::Bandit && self.method == Method::Ensemble && self.ensemble_size < 2 {
            return bad("ensemble_size must be at least 2".into());
        }
        if self.experiment == Experiment::Decomposition && (self.models < 2 || self.samples == 0 || self.test_points < 2)
        {
            return bad("decomposition needs models >= 2, samples > 0 and test_points >= 2".into());
        }
        if self.idx_images.is_some() != self.idx_labels.is_some() {
            return bad("idx_images and idx_labels must be given together".into());
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(match self.experiment {
            Experiment::Gridworld => 0.1,
            _ => 1.0,
        })
    }

    pub fn predictor_lr(&self) -> f64 {
        self.lr.unwrap_or(match (self.experiment, self.method) {
            (Experiment::NoisyPairs, Method::Ama) => 0.0001,
            (Experiment::NoisyPairs, _) => 0.001,
            (Experiment::Gridworld, Method::Ama) => 0.001,
            (Experiment::Gridworld, _) => 0.0001,
            (Experiment::Bandit, Method::Ensemble) => 0.0001,
            (Experiment::Bandit, _) => 0.001,
            (Experiment::Decomposition, _) => 0.05,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size.unwrap_or(match (self.experiment, self.method) {
            (Experiment::Bandit, Method::Ama) => 1000,
            _ => 32,
        })
    }

    pub fn clip(&self) -> bool {
        self.clip
            .unwrap_or(self.experiment == Experiment::Gridworld && self.method == Method::Ama)
    }

    pub fn normalize(&self) -> bool {
        self.normalize
            .unwrap_or(self.experiment == Experiment::Gridworld && self.method == Method::Ama)
    }

    pub fn predictor_hidden(&self) -> Vec<usize> {
        self.hidden.clone().unwrap_or_else(|| match self.experiment {
            Experiment::NoisyPairs => vec![128],
            Experiment::Gridworld => vec![128],
            Experiment::Bandit => vec![64, 64],
            Experiment::Decomposition => vec![],
        })
    }

    pub fn run_id(&self, seed: u64) -> String {
        let tv = if self.experiment == Experiment::Gridworld && self.noisy_tv {
            "-tv"
        } else {
            ""
        };
        format!("{}-{}{tv}-s{seed}", self.experiment.name(), self.method.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut cfg = ExperimentConfig::new(Experiment::Gridworld, Method::Ama);
        cfg.lambda = Some(0.25);
        cfg.output = Some("out.csv".into());
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        let again = ExperimentConfig::from_json(&back.to_json()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_json(r#"{"experiment": "bandit", "method": "ama", "lamda": 1}"#);
        assert!(matches!(err, Err(Error::Config(m)) if m.contains("lamda")));
        let cfg = ExperimentConfig::default();
        assert!(cfg.with_overrides(&["nope=1"]).is_err());
        assert!(cfg.with_overrides(&["budget"]).is_err());
    }

    #[test]
    fn overrides_parse_json_values() {
        let cfg = ExperimentConfig::new(Experiment::Gridworld, Method::Mse)
            .with_overrides(&["noisy_tv=true", "seeds=[3,4]", "lambda=0.5", "output=runs/x.csv"])
            .unwrap();
        assert!(cfg.noisy_tv);
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert_eq!(cfg.lambda(), 0.5);
        assert_eq!(cfg.output.as_deref(), Some("runs/x.csv"));
        assert!(cfg.with_overrides(&["noisy_tv=maybe"]).is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::new(Experiment::Bandit, Method::Mse);
        assert!(cfg.validate().is_err());
        cfg.method = Method::Ensemble;
        cfg.validate().unwrap();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        let mut g = ExperimentConfig::new(Experiment::Gridworld, Method::None);
        g.rooms = 5;
        assert!(g.validate().is_err());
        let v = ExperimentConfig {
            schema_version: 9,
            ..ExperimentConfig::default()
        };
        assert!(v.validate().is_err());
    }

    #[test]
    fn layered_file_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"method": "mse", "rooms": 4}"#).unwrap();
        let cfg = ExperimentConfig::layered(Experiment::Gridworld, Some(&path), &["noisy_tv=true"]).unwrap();
        assert_eq!(cfg.method, Method::Mse);
        assert_eq!(cfg.rooms, 4);
        assert!(cfg.noisy_tv);
        assert_eq!(cfg.budget, 200_000);

        std::fs::write(&path, r#"{"experiment": "bandit"}"#).unwrap();
        assert!(ExperimentConfig::layered::<&str>(Experiment::Gridworld, Some(&path), &[]).is_err());
        std::fs::write(&path, r#"{"romos": 4}"#).unwrap();
        assert!(ExperimentConfig::layered::<&str>(Experiment::Gridworld, Some(&path), &[]).is_err());

        let missing = dir.path().join("nope.json");
        let err = ExperimentConfig::layered::<&str>(Experiment::Gridworld, Some(&missing), &[]).unwrap_err();
        assert!(err.to_string().contains("nope.json"));
    }

    #[test]
    fn method_defaults() {
        let ama = ExperimentConfig::new(Experiment::Gridworld, Method::Ama);
        assert_eq!((ama.predictor_lr(), ama.lambda(), ama.clip(), ama.normalize()), (0.001, 0.1, true, true));
        let mse = ExperimentConfig::new(Experiment::Gridworld, Method::Mse);
        assert_eq!((mse.predictor_lr(), mse.normalize()), (0.0001, false));
        let np = ExperimentConfig::new(Experiment::NoisyPairs, Method::Ama);
        assert_eq!((np.predictor_lr(), np.batch_size(), np.lambda()), (0.0001, 32, 1.0));
        let b = ExperimentConfig::new(Experiment::Bandit, Method::Ama);
        assert_eq!((b.predictor_lr(), b.batch_size(), b.epsilon), (0.001, 1000, 0.1));
        let e = ExperimentConfig::new(Experiment::Bandit, Method::Ensemble);
        assert_eq!((e.predictor_lr(), e.batch_size(), e.ensemble_size), (0.0001, 32, 5));
    }
}
