//! Turns a parsed config into an environment and a policy.

use rand::Rng;

use qpolicy::dlp::{smallest_generator, train_classifier, ClassifierConfig, DlpAgent, DlpInstance, NoiseModel};
use qpolicy::envs::{
    generate_pqc_env, Acrobot, AcrobotParams, CartPole, CartPoleParams, CliffwalkDlp, CliffwalkPqc, CognitiveRadio,
    DeterministicDlp, Environment, MountainCar, MountainCarParams, SlDlp, SlPqc,
};
use qpolicy::pqc::{GradientMethod, PolicyConfig, PqcPolicy, PqcTopology, SoftmaxObservables};
use qpolicy::qsim::ActionPartition;
use qpolicy::train::{MlpPolicy, Policy, PqcAgent};
use qpolicy::{derive_seed, rng_from_seed, Error, Result};

use crate::config::{DlpSection, EnvConfig, GradientChoice, NoiseChoice, PartitionChoice, PolicySection};

// streams under the run seed for instance construction
const DLP_OFFSET_STREAM: u64 = 4;
const DLP_CHAIN_STREAM: u64 = 5;
const CLASSIFIER_STREAM: u64 = 6;

pub struct Built {
    pub env: Box<dyn Environment>,
    pub policy: Box<dyn Policy>,
    /// Set for the discrete-log environments.
    pub instance: Option<DlpInstance>,
}

fn dlp_instance(sec: &DlpSection, seed: u64) -> Result<DlpInstance> {
    let g = match sec.g {
        Some(g) => g,
        None => smallest_generator(sec.p)?,
    };
    let s = match sec.s {
        Some(s) => s,
        None if sec.p >= 3 => rng_from_seed(derive_seed(seed, &[DLP_OFFSET_STREAM])).random_range(0..sec.p - 1),
        None => 0,
    };
    DlpInstance::new(sec.p, g, s)
}

pub fn build_env(cfg: &EnvConfig, seed: u64) -> Result<(Box<dyn Environment>, Option<DlpInstance>)> {
    Ok(match cfg {
        EnvConfig::Cartpole { max_steps, gravity, mass_cart, mass_pole, half_length, force_mag, tau } => {
            let mut p = CartPoleParams::default();
            set(&mut p.max_steps, max_steps);
            set(&mut p.gravity, gravity);
            set(&mut p.mass_cart, mass_cart);
            set(&mut p.mass_pole, mass_pole);
            set(&mut p.half_length, half_length);
            set(&mut p.force_mag, force_mag);
            set(&mut p.tau, tau);
            (Box::new(CartPole::new(p)), None)
        }
        EnvConfig::Mountaincar { max_steps, height_weight, goal_bonus, force, gravity } => {
            let mut p = MountainCarParams::default();
            set(&mut p.max_steps, max_steps);
            set(&mut p.height_weight, height_weight);
            set(&mut p.goal_bonus, goal_bonus);
            set(&mut p.force, force);
            set(&mut p.gravity, gravity);
            (Box::new(MountainCar::new(p)), None)
        }
        EnvConfig::Acrobot { max_steps, dt } => {
            let mut p = AcrobotParams::default();
            set(&mut p.max_steps, max_steps);
            set(&mut p.dt, dt);
            (Box::new(Acrobot::new(p)), None)
        }
        EnvConfig::CognitiveRadio { channels, episode_len } => {
            (Box::new(CognitiveRadio::new(*channels, episode_len.unwrap_or(CognitiveRadio::DEFAULT_STEPS))?), None)
        }
        EnvConfig::SlPqc { generator_seed } => (Box::new(SlPqc::new(generate_pqc_env(*generator_seed)?)), None),
        EnvConfig::CliffwalkPqc { generator_seed } => (Box::new(CliffwalkPqc::new(generate_pqc_env(*generator_seed)?)), None),
        EnvConfig::SlDlp { instance, episode_len } => {
            let inst = dlp_instance(instance, seed)?;
            (Box::new(SlDlp::new(inst.clone(), episode_len.unwrap_or(1))?), Some(inst))
        }
        EnvConfig::CliffwalkDlp { instance, slip, max_steps } => {
            let inst = dlp_instance(instance, seed)?;
            let steps = max_steps.unwrap_or(CliffwalkDlp::DEFAULT_MAX_STEPS);
            (Box::new(CliffwalkDlp::new(inst.clone(), *slip, steps)?), Some(inst))
        }
        EnvConfig::DeterministicDlp { instance, chain_len } => {
            let inst = dlp_instance(instance, seed)?;
            let k = chain_len.unwrap_or_else(|| DeterministicDlp::default_chain_len(&inst));
            let mut rng = rng_from_seed(derive_seed(seed, &[DLP_CHAIN_STREAM]));
            (Box::new(DeterministicDlp::new(inst.clone(), k, &mut rng)?), Some(inst))
        }
    })
}

fn set<T: Copy>(field: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *field = *v;
    }
}

fn method(choice: GradientChoice, shots: Option<u64>) -> GradientMethod {
    match choice {
        GradientChoice::Adjoint => GradientMethod::Adjoint,
        GradientChoice::ParameterShift => GradientMethod::ParameterShift,
        GradientChoice::Shots => GradientMethod::Shots(shots.unwrap_or(1)),
    }
}

/// Policy initialisation draws from `rng_from_seed(seed)`; episode streams are derived
/// separately inside the trainer.
pub fn build_policy(
    cfg: &PolicySection,
    env: &dyn Environment,
    instance: Option<&DlpInstance>,
    seed: u64,
) -> Result<Box<dyn Policy>> {
    let mut rng = rng_from_seed(seed);
    let obs = env.obs_dim();
    let actions = env.n_actions();
    let policy: Box<dyn Policy> = match cfg {
        PolicySection::SoftmaxPqc {
            qubits,
            depth,
            entangler,
            trainable_entangler,
            observables,
            beta,
            input_scale,
            gradient,
            shots,
        } => {
            let topo = PqcTopology::new(*qubits, *depth, entangler.parse()?, *trainable_entangler, obs)?;
            let observables = SoftmaxObservables::parse(observables)?;
            if observables.n_actions() != actions {
                return Err(Error::Config(format!(
                    "{} observables for an environment with {actions} actions",
                    observables.n_actions()
                )));
            }
            let policy = PqcPolicy::new(topo, PolicyConfig::Softmax { observables, beta: *beta })?;
            let mut agent = PqcAgent::new(policy, &mut rng);
            agent.method = method(*gradient, *shots);
            agent.input_scale = input_scale.clone();
            Box::new(agent)
        }
        PolicySection::RawPqc { qubits, depth, entangler, trainable_entangler, partition, input_scale, gradient, shots } => {
            let topo = PqcTopology::new(*qubits, *depth, entangler.parse()?, *trainable_entangler, obs)?;
            let partition = match partition {
                PartitionChoice::Parity => ActionPartition::parity(*qubits, actions)?,
                PartitionChoice::Contiguous => ActionPartition::contiguous(*qubits, actions)?,
            };
            let policy = PqcPolicy::new(topo, PolicyConfig::Raw { partition })?;
            let mut agent = PqcAgent::new(policy, &mut rng);
            agent.method = method(*gradient, *shots);
            agent.input_scale = input_scale.clone();
            Box::new(agent)
        }
        PolicySection::Mlp { depth, width } => Box::new(MlpPolicy::with_shape(obs, *depth, *width, actions, &mut rng)?),
        PolicySection::DlpClassifier { k, noise, shots, noise_bound, votes, s_prime, train_samples } => {
            let inst = instance
                .ok_or_else(|| Error::Config("the dlp-classifier policy needs a discrete-log environment".into()))?
                .clone();
            let noise = match noise {
                NoiseChoice::Exact => NoiseModel::Exact,
                NoiseChoice::Shots => NoiseModel::Shots(shots.unwrap_or(0)),
                NoiseChoice::Bounded => NoiseModel::Bounded(noise_bound.unwrap_or(0.0)),
            };
            let config = ClassifierConfig::new(&inst, *k, noise)?;
            let offset = match (s_prime, train_samples) {
                (Some(_), Some(_)) => return Err(Error::Config("give either s_prime or train_samples".into())),
                (Some(s), None) => *s,
                (None, Some(n)) => {
                    let mut r = rng_from_seed(derive_seed(seed, &[CLASSIFIER_STREAM]));
                    let training: Vec<u64> = (0..*n).map(|_| r.random_range(1..inst.p())).collect();
                    train_classifier(&inst, &training, &config, &mut r)?
                }
                (None, None) => inst.s(),
            };
            Box::new(DlpAgent::new(inst, offset, config, *votes)?)
        }
    };
    if policy.n_actions() != actions {
        return Err(Error::Config(format!("policy has {} actions, environment {actions}", policy.n_actions())));
    }
    Ok(policy)
}

pub fn build(env: &EnvConfig, policy: &PolicySection, seed: u64) -> Result<Built> {
    let (env, instance) = build_env(env, seed)?;
    let policy = build_policy(policy, env.as_ref(), instance.as_ref(), seed)?;
    Ok(Built { env, policy, instance })
}
