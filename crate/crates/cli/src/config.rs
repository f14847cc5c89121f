//! Experiment files: TOML with `[env]`, `[policy]`, `[trainer]`, `[eval]` and `[output]`
//! tables. Unknown keys are rejected everywhere.

use serde::{Deserialize, Serialize};

use qpolicy::pqc::Entangler;
use qpolicy::train::{LearningRates, TrainConfig, DEFAULT_RIDGE};
use qpolicy::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Independent agents; run `i` uses seed `--seed + i`.
    #[serde(default = "one")]
    pub runs: usize,
    pub env: EnvConfig,
    pub policy: PolicySection,
    #[serde(default)]
    pub trainer: TrainerSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvConfig {
    Cartpole {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_steps: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gravity: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mass_cart: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mass_pole: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        half_length: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        force_mag: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau: Option<f64>,
    },
    Mountaincar {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_steps: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        height_weight: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        goal_bonus: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        force: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gravity: Option<f64>,
    },
    Acrobot {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_steps: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dt: Option<f64>,
    },
    CognitiveRadio {
        channels: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        episode_len: Option<usize>,
    },
    SlPqc {
        #[serde(default)]
        generator_seed: u64,
    },
    CliffwalkPqc {
        #[serde(default)]
        generator_seed: u64,
    },
    SlDlp {
        #[serde(flatten)]
        instance: DlpSection,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        episode_len: Option<usize>,
    },
    CliffwalkDlp {
        #[serde(flatten)]
        instance: DlpSection,
        #[serde(default)]
        slip: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_steps: Option<usize>,
    },
    DeterministicDlp {
        #[serde(flatten)]
        instance: DlpSection,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        chain_len: Option<usize>,
    },
}

/// Prime modulus and optional generator/offset; missing values are the smallest generator
/// and a seeded random offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlpSection {
    pub p: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientChoice {
    #[default]
    Adjoint,
    ParameterShift,
    Shots,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionChoice {
    #[default]
    Parity,
    Contiguous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseChoice {
    #[default]
    Exact,
    Shots,
    Bounded,
}

fn default_entangler() -> String {
    "one-to-one".into()
}

fn default_beta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicySection {
    SoftmaxPqc {
        qubits: usize,
        depth: usize,
        #[serde(default = "default_entangler")]
        entangler: String,
        #[serde(default)]
        trainable_entangler: bool,
        /// One readout expression per action, e.g. `"w0*Z0Z1"`.
        observables: Vec<String>,
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        input_scale: Option<Vec<f64>>,
        #[serde(default)]
        gradient: GradientChoice,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shots: Option<u64>,
    },
    RawPqc {
        qubits: usize,
        depth: usize,
        #[serde(default = "default_entangler")]
        entangler: String,
        #[serde(default)]
        trainable_entangler: bool,
        #[serde(default)]
        partition: PartitionChoice,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        input_scale: Option<Vec<f64>>,
        #[serde(default)]
        gradient: GradientChoice,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shots: Option<u64>,
    },
    Mlp {
        depth: usize,
        width: usize,
    },
    /// Discrete-log classifier agent; only for the DLP environments and `eval`.
    DlpClassifier {
        k: u32,
        #[serde(default)]
        noise: NoiseChoice,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shots: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        noise_bound: Option<f64>,
        #[serde(default = "one")]
        votes: usize,
        /// Offset used by the classifier; the instance's true offset when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        s_prime: Option<u64>,
        /// Learn the offset from this many labelled samples instead.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_samples: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub episodes: usize,
    pub batch_size: usize,
    pub gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub lr_phi: f64,
    pub lr_w: f64,
    pub lr_lam: f64,
    pub lr_net: f64,
    /// Anneal β linearly from 1 to this value over the run; fixed β when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_final: Option<f64>,
    pub baseline: bool,
    pub ridge: f64,
    pub freeze_lam: bool,
    pub freeze_w: bool,
    pub parallelism: usize,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let lr = LearningRates::default();
        Self {
            episodes: 1000,
            batch_size: 10,
            gamma: 1.0,
            horizon: None,
            lr_phi: lr.phi,
            lr_w: lr.w,
            lr_lam: lr.lam,
            lr_net: lr.net,
            beta_final: None,
            baseline: true,
            ridge: DEFAULT_RIDGE,
            freeze_lam: false,
            freeze_w: false,
            parallelism: 1,
        }
    }
}

impl TrainerSection {
    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            episodes: self.episodes,
            batch_size: self.batch_size,
            gamma: self.gamma,
            horizon: self.horizon,
            learning_rates: LearningRates { phi: self.lr_phi, w: self.lr_w, lam: self.lr_lam, net: self.lr_net },
            beta_final: self.beta_final,
            use_baseline: self.baseline,
            ridge: self.ridge,
            freeze_lam: self.freeze_lam,
            freeze_w: self.freeze_w,
            parallelism: self.parallelism,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub episodes: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { episodes: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Relative to the output root.
    pub dir: String,
    /// Fill the `wall_ms` column; off by default so that reruns are byte-identical.
    #[serde(default)]
    pub record_wall_clock: bool,
    #[serde(default = "yes")]
    pub plot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "run".into(), record_wall_clock: false, plot: true }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Checks everything that does not need an environment instance.
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be ≥ 1".into()));
        }
        if self.eval.episodes == 0 {
            return Err(Error::Config("eval.episodes must be ≥ 1".into()));
        }
        if self.output.dir.is_empty() {
            return Err(Error::Config("output.dir must not be empty".into()));
        }
        self.trainer.to_train_config().validate()?;
        match &self.policy {
            PolicySection::SoftmaxPqc { entangler, gradient, shots, beta, .. } => {
                entangler.parse::<Entangler>()?;
                check_shots(*gradient, *shots)?;
                if !(*beta > 0.0 && beta.is_finite()) {
                    return Err(Error::Config(format!("β must be positive, got {beta}")));
                }
            }
            PolicySection::RawPqc { entangler, gradient, shots, .. } => {
                entangler.parse::<Entangler>()?;
                check_shots(*gradient, *shots)?;
            }
            PolicySection::Mlp { width, .. } => {
                if *width == 0 {
                    return Err(Error::Config("mlp width must be ≥ 1".into()));
                }
            }
            PolicySection::DlpClassifier { noise, shots, noise_bound, votes, .. } => {
                if votes % 2 == 0 {
                    return Err(Error::Config(format!("votes must be odd, got {votes}")));
                }
                match (noise, shots, noise_bound) {
                    (NoiseChoice::Shots, None, _) => return Err(Error::Config("noise = \"shots\" needs shots".into())),
                    (NoiseChoice::Bounded, _, None) => return Err(Error::Config("noise = \"bounded\" needs noise_bound".into())),
                    _ => {}
                }
            }
        }
        if let EnvConfig::CliffwalkDlp { slip, .. } = &self.env {
            if !(0.0..=1.0).contains(slip) {
                return Err(Error::Config(format!("slip {slip} ∉ [0, 1]")));
            }
        }
        Ok(())
    }
}

fn check_shots(gradient: GradientChoice, shots: Option<u64>) -> Result<()> {
    match (gradient, shots) {
        (GradientChoice::Shots, None | Some(0)) => Err(Error::Config("gradient = \"shots\" needs shots ≥ 1".into())),
        (GradientChoice::Shots, Some(_)) | (_, None) => Ok(()),
        (_, Some(_)) => Err(Error::Config("shots is only used with gradient = \"shots\"".into())),
    }
}
