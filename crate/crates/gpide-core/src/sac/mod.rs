//! Soft actor-critic over history encoders. The actor and the critics each
//! own a history encoder; the critics share theirs, and the targets keep a
//! polyak-averaged copy. Policies emit tanh-squashed Gaussians over
//! normalized per-step actuator deltas.

use std::collections::VecDeque;
use std::path::PathBuf;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::encoders::{
    ablation_config, default_tracking_heads, pide_encode, Gpide, GpideConfig, HeadSpec,
    HistoryBuffer, PideConfig,
};
use crate::envs::{sample_setting, Env, EnvKind, EpisodeSetting, Variation, EPISODE_LEN};
use crate::numcore::{
    Graph, Linear, Mlp, NodeId, NumError, OutputActivation, ParamId, ParamStore, Tensor,
};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// The output layer of the policy starts near zero.
const POLICY_FINAL_SCALE: f64 = 1e-2;
/// Keeps ln(1 - tanh^2) finite after squashing.
const LOG_PROB_EPS: f64 = 1e-6;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    None,
    Pide,
    Gpide,
    GpideEs,
    GpideEss,
    GpideAttn,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::None => "none",
            EncoderKind::Pide => "pide",
            EncoderKind::Gpide => "gpide",
            EncoderKind::GpideEs => "gpide-es",
            EncoderKind::GpideEss => "gpide-ess",
            EncoderKind::GpideAttn => "gpide-attn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(EncoderKind::None),
            "pide" => Some(EncoderKind::Pide),
            "gpide" => Some(EncoderKind::Gpide),
            "gpide-es" => Some(EncoderKind::GpideEs),
            "gpide-ess" => Some(EncoderKind::GpideEss),
            "gpide-attn" => Some(EncoderKind::GpideAttn),
            _ => None,
        }
    }

    fn heads(self) -> Option<Vec<HeadSpec>> {
        match self {
            EncoderKind::None | EncoderKind::Pide => None,
            EncoderKind::Gpide => Some(default_tracking_heads()),
            EncoderKind::GpideEs => ablation_config("es"),
            EncoderKind::GpideEss => ablation_config("ess"),
            EncoderKind::GpideAttn => ablation_config("attn"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AgentConfig {
    pub kind: EnvKind,
    pub encoder: EncoderKind,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub lookback: usize,
    pub policy_hidden: Vec<usize>,
    pub q_hidden: Vec<usize>,
    pub policy_shortcut_dim: usize,
    pub q_shortcut_dim: usize,
    pub warmup_steps: usize,
    pub replay_capacity: usize,
    pub entropy_target: f64,
}

impl AgentConfig {
    pub fn defaults(kind: EnvKind, encoder: EncoderKind) -> Self {
        AgentConfig {
            kind,
            encoder,
            lr: 3e-4,
            gamma: 0.95,
            tau: 0.005,
            batch_size: if encoder == EncoderKind::Pide { 256 } else { 32 },
            lookback: 100,
            policy_hidden: vec![24],
            q_hidden: vec![256, 256],
            policy_shortcut_dim: 8,
            q_shortcut_dim: 64,
            warmup_steps: 1000,
            replay_capacity: 1_000_000,
            entropy_target: -(kind.action_dim() as f64),
        }
    }
}

/// History encoder attached to one side of the agent.
enum Enc {
    None,
    Pide(PideConfig),
    Gpide(Gpide),
}

impl Enc {
    fn build(store: &mut ParamStore, prefix: &str, cfg: &AgentConfig, rng: &mut impl Rng) -> Enc {
        match cfg.encoder {
            EncoderKind::None => Enc::None,
            EncoderKind::Pide => Enc::Pide(PideConfig::for_env(cfg.kind)),
            _ => {
                let heads = cfg.encoder.heads().expect("gpide variant without heads");
                let mut gcfg =
                    GpideConfig::tracking(cfg.kind.obs_dim(), cfg.kind.action_dim(), heads);
                gcfg.lookback = cfg.lookback;
                Enc::Gpide(Gpide::new(store, prefix, gcfg, rng))
            }
        }
    }

    fn z_dim(&self) -> usize {
        match self {
            Enc::None => 0,
            Enc::Pide(cfg) => 3 * cfg.channels(),
            Enc::Gpide(enc) => enc.cfg.out_dim,
        }
    }

    /// Encode a batch of history windows as a [B, z_dim] node, or None for
    /// the no-history baseline.
    fn encode(
        &self,
        g: &mut Graph,
        store: &mut ParamStore,
        windows: &[HistoryBuffer],
        train: bool,
    ) -> Option<NodeId> {
        match self {
            Enc::None => None,
            Enc::Pide(cfg) => {
                let rows: Vec<Vec<f64>> = windows.iter().map(|h| pide_encode(h, cfg)).collect();
                Some(g.constant(Tensor::from_rows(&rows)))
            }
            Enc::Gpide(enc) => {
                let feats: Vec<Tensor> = windows
                    .iter()
                    .map(|h| h.featurize(enc.cfg.include_actions_rewards))
                    .collect();
                Some(enc.encode_batch(g, store, &feats, train))
            }
        }
    }
}

/// Current observations of a window batch as a [B, obs_dim] matrix.
fn last_obs_matrix(windows: &[HistoryBuffer]) -> Tensor {
    let rows: Vec<Vec<f64>> = windows
        .iter()
        .map(|h| h.observations.last().expect("empty history window").clone())
        .collect();
    Tensor::from_rows(&rows)
}

pub struct Agent {
    pub cfg: AgentConfig,
    pub store: ParamStore,
    actor_enc: Enc,
    critic_enc: Enc,
    target_enc: Enc,
    actor_obs: Linear,
    policy: Mlp,
    q1_obs: Linear,
    q1: Mlp,
    q2_obs: Linear,
    q2: Mlp,
    t_q1_obs: Linear,
    t_q1: Mlp,
    t_q2_obs: Linear,
    t_q2: Mlp,
    log_alpha: ParamId,
}

pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub temperature: f64,
    pub entropy: f64,
}

impl Agent {
    pub fn new(cfg: AgentConfig, rng: &mut impl Rng) -> Agent {
        let mut store = ParamStore::new();
        let obs_dim = cfg.kind.obs_dim();
        let action_dim = cfg.kind.action_dim();

        let actor_enc = Enc::build(&mut store, "actor.enc", &cfg, rng);
        let actor_obs =
            Linear::new(&mut store, "actor.obs", obs_dim, cfg.policy_shortcut_dim, rng);
        let policy_in = actor_enc.z_dim() + cfg.policy_shortcut_dim;
        let policy = Mlp::new_scaled(
            &mut store,
            "actor.pi",
            policy_in,
            &cfg.policy_hidden,
            2 * action_dim,
            OutputActivation::None,
            rng,
            POLICY_FINAL_SCALE,
        );

        let critic_enc = Enc::build(&mut store, "critic.enc", &cfg, rng);
        let q_in = critic_enc.z_dim() + cfg.q_shortcut_dim;
        let q1_obs = Linear::new(
            &mut store,
            "critic.q1.obs",
            obs_dim + action_dim,
            cfg.q_shortcut_dim,
            rng,
        );
        let q1 = Mlp::new(&mut store, "critic.q1.mlp", q_in, &cfg.q_hidden, 1, OutputActivation::None, rng);
        let q2_obs = Linear::new(
            &mut store,
            "critic.q2.obs",
            obs_dim + action_dim,
            cfg.q_shortcut_dim,
            rng,
        );
        let q2 = Mlp::new(&mut store, "critic.q2.mlp", q_in, &cfg.q_hidden, 1, OutputActivation::None, rng);

        let target_enc = Enc::build(&mut store, "target.enc", &cfg, rng);
        let t_q1_obs = Linear::new(
            &mut store,
            "target.q1.obs",
            obs_dim + action_dim,
            cfg.q_shortcut_dim,
            rng,
        );
        let t_q1 = Mlp::new(&mut store, "target.q1.mlp", q_in, &cfg.q_hidden, 1, OutputActivation::None, rng);
        let t_q2_obs = Linear::new(
            &mut store,
            "target.q2.obs",
            obs_dim + action_dim,
            cfg.q_shortcut_dim,
            rng,
        );
        let t_q2 = Mlp::new(&mut store, "target.q2.mlp", q_in, &cfg.q_hidden, 1, OutputActivation::None, rng);
        store.copy_prefix("critic.", "target.");

        let log_alpha = store.add_param("temp.log_alpha", Tensor::zeros(1, 1));

        Agent {
            cfg,
            store,
            actor_enc,
            critic_enc,
            target_enc,
            actor_obs,
            policy,
            q1_obs,
            q1,
            q2_obs,
            q2,
            t_q1_obs,
            t_q1,
            t_q2_obs,
            t_q2,
            log_alpha,
        }
    }

    /// The actor-side GPIDE encoder, when one is configured.
    pub fn actor_gpide(&self) -> Option<&Gpide> {
        match &self.actor_enc {
            Enc::Gpide(enc) => Some(enc),
            _ => None,
        }
    }

    pub fn temperature(&self) -> f64 {
        self.store.get(self.log_alpha).item().exp()
    }

    /// Squashed-Gaussian head: ([B, A] mean, [B, A] clamped log-std).
    fn policy_forward(
        &mut self,
        g: &mut Graph,
        windows: &[HistoryBuffer],
        train: bool,
    ) -> (NodeId, NodeId) {
        let z = self.actor_enc.encode(g, &mut self.store, windows, train);
        let o = g.constant(last_obs_matrix(windows));
        let s = self.actor_obs.forward(g, &self.store, o);
        let s = g.relu(s);
        let x = match z {
            Some(z) => g.concat_cols(&[z, s]),
            None => s,
        };
        let out = self.policy.forward(g, &self.store, x);
        let a = self.cfg.kind.action_dim();
        let mean = g.slice_cols(out, 0, a);
        let log_std = g.slice_cols(out, a, a);
        (mean, g.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX))
    }

    fn q_forward(
        g: &mut Graph,
        store: &ParamStore,
        obs_act: NodeId,
        z: Option<NodeId>,
        shortcut: &Linear,
        mlp: &Mlp,
    ) -> NodeId {
        let s = shortcut.forward(g, store, obs_act);
        let s = g.relu(s);
        let x = match z {
            Some(z) => g.concat_cols(&[s, z]),
            None => s,
        };
        mlp.forward(g, store, x)
    }

    /// Deterministic (mean) normalized action in [-1, 1]^A.
    pub fn act_mean(&mut self, history: &HistoryBuffer) -> Vec<f64> {
        let mut g = Graph::new();
        let (mean, _) = self.policy_forward(&mut g, std::slice::from_ref(history), false);
        g.value(mean).data().iter().map(|v| v.tanh()).collect()
    }

    /// Stochastic normalized action in [-1, 1]^A.
    pub fn act_sample(&mut self, history: &HistoryBuffer, rng: &mut impl Rng) -> Vec<f64> {
        let mut g = Graph::new();
        let (mean, log_std) = self.policy_forward(&mut g, std::slice::from_ref(history), false);
        let mean = g.value(mean).data().to_vec();
        let log_std = g.value(log_std).data().to_vec();
        mean.iter()
            .zip(&log_std)
            .map(|(m, ls)| {
                let eps: f64 = rng.sample(StandardNormal);
                (m + ls.exp() * eps).tanh()
            })
            .collect()
    }

    /// Bootstrap targets y = r + gamma (min Q' - alpha log pi'). Episodes
    /// end by timeout only, so every transition bootstraps.
    fn targets(&mut self, batch: &Batch, rng: &mut impl Rng) -> Tensor {
        let b = batch.len();
        let a_dim = self.cfg.kind.action_dim();
        let mut g = Graph::new();
        let (mean, log_std) = self.policy_forward(&mut g, &batch.next_windows, false);
        let mean = g.value(mean).clone();
        let log_std = g.value(log_std).clone();

        let mut next_act = Tensor::zeros(b, a_dim);
        let mut log_pi = vec![0.0; b];
        for i in 0..b {
            for j in 0..a_dim {
                let eps: f64 = rng.sample(StandardNormal);
                let ls = log_std.get(i, j);
                let u = mean.get(i, j) + ls.exp() * eps;
                let a = u.tanh();
                next_act.set(i, j, a);
                log_pi[i] +=
                    -0.5 * eps * eps - ls - HALF_LN_2PI - (1.0 - a * a + LOG_PROB_EPS).ln();
            }
        }

        let z = self.target_enc.encode(&mut g, &mut self.store, &batch.next_windows, false);
        let oa_mat = {
            let o = last_obs_matrix(&batch.next_windows);
            Tensor::concat_cols(&[&o, &next_act])
        };
        let oa = g.constant(oa_mat);
        let q1 = Self::q_forward(&mut g, &self.store, oa, z, &self.t_q1_obs, &self.t_q1);
        let q2 = Self::q_forward(&mut g, &self.store, oa, z, &self.t_q2_obs, &self.t_q2);
        let q1 = g.value(q1);
        let q2 = g.value(q2);
        let alpha = self.temperature();
        let mut y = Tensor::zeros(b, 1);
        for i in 0..b {
            let qmin = q1.get(i, 0).min(q2.get(i, 0));
            y.set(
                i,
                0,
                batch.rewards[i] + self.cfg.gamma * (qmin - alpha * log_pi[i]),
            );
        }
        y
    }

    /// One critic step, one actor + temperature step, one polyak step.
    pub fn update(&mut self, batch: &Batch, rng: &mut impl Rng) -> Result<UpdateStats, NumError> {
        let b = batch.len();
        let a_dim = self.cfg.kind.action_dim();
        let lr = self.cfg.lr;
        let y = self.targets(batch, rng);

        // Critic step: MSE of both Qs against the shared target.
        let critic_loss = {
            let mut g = Graph::new();
            let z = self.critic_enc.encode(&mut g, &mut self.store, &batch.state_windows, true);
            let oa_mat = {
                let o = last_obs_matrix(&batch.state_windows);
                Tensor::concat_cols(&[&o, &batch.actions])
            };
            let oa = g.constant(oa_mat);
            let q1 = Self::q_forward(&mut g, &self.store, oa, z, &self.q1_obs, &self.q1);
            let q2 = Self::q_forward(&mut g, &self.store, oa, z, &self.q2_obs, &self.q2);
            let yc = g.constant(y);
            let d1 = g.sub(q1, yc);
            let d2 = g.sub(q2, yc);
            let sq1 = g.mul(d1, d1);
            let sq2 = g.mul(d2, d2);
            let l1 = g.mean_all(sq1);
            let l2 = g.mean_all(sq2);
            let loss = g.add(l1, l2);
            g.backward(loss);
            g.apply_grads(&mut self.store);
            self.store.retain_grads_with_prefixes(&["critic."]);
            self.store.adam_step(lr)?;
            g.value(loss).item()
        };

        // Actor step with a reparameterized sample; the temperature rides
        // along in the same Adam step with a hand-computed gradient.
        let mut eps = Tensor::zeros(b, a_dim);
        for i in 0..b {
            for j in 0..a_dim {
                eps.set(i, j, rng.sample(StandardNormal));
            }
        }
        let (actor_loss, entropy) = {
            let mut g = Graph::new();
            let (mean, log_std) = self.policy_forward(&mut g, &batch.state_windows, true);
            let sigma = g.exp(log_std);
            let eps_n = g.constant(eps.clone());
            let noise = g.mul(sigma, eps_n);
            let u = g.add(mean, noise);
            let act = g.tanh(u);
            let neg_ls = g.neg(log_std);
            let gauss = g.constant(eps.map(|e| -0.5 * e * e - HALF_LN_2PI));
            let asq = g.mul(act, act);
            let neg_asq = g.neg(asq);
            let one_m = g.add_scalar(neg_asq, 1.0 + LOG_PROB_EPS);
            let ln_det = g.ln(one_m);
            let terms = g.add(neg_ls, gauss);
            let terms = g.sub(terms, ln_det);
            let log_pi = g.row_sum(terms);

            let z = self.critic_enc.encode(&mut g, &mut self.store, &batch.state_windows, false);
            let o = g.constant(last_obs_matrix(&batch.state_windows));
            let oa = g.concat_cols(&[o, act]);
            let q1 = Self::q_forward(&mut g, &self.store, oa, z, &self.q1_obs, &self.q1);
            let q2 = Self::q_forward(&mut g, &self.store, oa, z, &self.q2_obs, &self.q2);
            let gap = g.sub(q1, q2);
            let gap = g.relu(gap);
            let qmin = g.sub(q1, gap);
            let alpha = self.temperature();
            let pen = g.scale(log_pi, alpha);
            let obj = g.sub(pen, qmin);
            let loss = g.mean_all(obj);
            g.backward(loss);
            g.apply_grads(&mut self.store);

            let mean_log_pi = g.value(log_pi).sum() / b as f64;
            // d/d log_alpha of -log_alpha (E log pi + target entropy)
            let temp_grad = -(mean_log_pi + self.cfg.entropy_target);
            self.store
                .accumulate_grad(self.log_alpha, &Tensor::scalar(temp_grad));
            self.store.retain_grads_with_prefixes(&["actor.", "temp."]);
            self.store.adam_step(lr)?;
            (g.value(loss).item(), -mean_log_pi)
        };

        self.store.polyak_update("critic.", "target.", self.cfg.tau);
        Ok(UpdateStats {
            critic_loss,
            actor_loss,
            temperature: self.temperature(),
            entropy,
        })
    }
}

/// One finished episode as stored in the replay buffer.
pub struct Episode {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

impl Episode {
    pub fn transitions(&self) -> usize {
        self.actions.len()
    }
}

pub struct Batch {
    pub state_windows: Vec<HistoryBuffer>,
    pub next_windows: Vec<HistoryBuffer>,
    pub actions: Tensor,
    pub rewards: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

pub struct ReplayBuffer {
    episodes: VecDeque<Episode>,
    transitions: usize,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { episodes: VecDeque::new(), transitions: 0, capacity }
    }

    pub fn len(&self) -> usize {
        self.transitions
    }

    pub fn is_empty(&self) -> bool {
        self.transitions == 0
    }

    pub fn push(&mut self, episode: Episode) {
        assert_eq!(
            episode.observations.len(),
            episode.transitions() + 1,
            "episode needs one more observation than transitions"
        );
        self.transitions += episode.transitions();
        self.episodes.push_back(episode);
        while self.transitions > self.capacity && self.episodes.len() > 1 {
            let dropped = self.episodes.pop_front().unwrap();
            self.transitions -= dropped.transitions();
        }
    }

    /// Uniform over episodes, then uniform over that episode's
    /// transitions. Windows carry the full prefix so integral features see
    /// the whole episode; encoders truncate to their own lookback.
    pub fn sample(
        &self,
        batch_size: usize,
        dt: f64,
        lookback: usize,
        rng: &mut impl Rng,
    ) -> Batch {
        assert!(!self.is_empty(), "sampling from an empty replay buffer");
        let action_dim = self.episodes[0].actions[0].len();
        let mut state_windows = Vec::with_capacity(batch_size);
        let mut next_windows = Vec::with_capacity(batch_size);
        let mut actions = Tensor::zeros(batch_size, action_dim);
        let mut rewards = Vec::with_capacity(batch_size);
        for bi in 0..batch_size {
            let ep = &self.episodes[rng.gen_range(0..self.episodes.len())];
            let t = rng.gen_range(0..ep.transitions());
            state_windows.push(window(ep, t, dt, lookback));
            next_windows.push(window(ep, t + 1, dt, lookback));
            for j in 0..action_dim {
                actions.set(bi, j, ep.actions[t][j]);
            }
            rewards.push(ep.rewards[t]);
        }
        Batch { state_windows, next_windows, actions, rewards }
    }
}

/// History prefix ending at observation index `t`.
fn window(ep: &Episode, t: usize, dt: f64, lookback: usize) -> HistoryBuffer {
    HistoryBuffer {
        observations: ep.observations[..=t].to_vec(),
        actions: ep.actions[..t].to_vec(),
        rewards: ep.rewards[..t].to_vec(),
        dt,
        lookback,
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub variation: Variation,
    pub total_steps: usize,
    pub eval_period: usize,
    pub eval_episodes: usize,
    pub seed: u64,
    pub checkpoint_path: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(variation: Variation, total_steps: usize, seed: u64) -> Self {
        TrainConfig {
            variation,
            total_steps,
            eval_period: 5000,
            eval_episodes: 10,
            seed,
            checkpoint_path: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalPoint {
    pub step: usize,
    pub mean_return: f64,
    pub se_return: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub temperature: f64,
}

pub struct TrainOutcome {
    pub agent: Agent,
    pub evals: Vec<EvalPoint>,
}

impl TrainOutcome {
    /// Mean of the last ceil(10%) of evaluation returns.
    pub fn final_return(&self) -> f64 {
        final_return(&self.evals)
    }
}

pub fn final_return(evals: &[EvalPoint]) -> f64 {
    assert!(!evals.is_empty(), "no evaluation points recorded");
    let tail = evals.len().div_ceil(10);
    let slice = &evals[evals.len() - tail..];
    slice.iter().map(|e| e.mean_return).sum::<f64>() / tail as f64
}

/// Mean-action rollouts over fixed settings: (mean return, standard
/// error). A single setting reports zero error.
pub fn evaluate_agent(agent: &mut Agent, settings: &[EpisodeSetting]) -> (f64, f64) {
    assert!(!settings.is_empty(), "empty evaluation suite");
    let returns: Vec<f64> = settings
        .iter()
        .map(|s| rollout_return(agent, s.clone()))
        .collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let se = if returns.len() < 2 {
        0.0
    } else {
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    (mean, se)
}

fn rollout_return(agent: &mut Agent, setting: EpisodeSetting) -> f64 {
    rollout_history(agent, setting).1
}

/// One mean-action episode, returning the full history and its return.
pub fn rollout_history(agent: &mut Agent, setting: EpisodeSetting) -> (HistoryBuffer, f64) {
    let kind = setting.kind;
    let bounds = kind.action_delta_bound();
    let (mut env, first) = Env::reset(setting);
    let mut history = HistoryBuffer::new(kind.dt(), agent.cfg.lookback);
    history.start(first.observation);
    let mut total = 0.0;
    loop {
        let a = agent.act_mean(&history);
        let delta: Vec<f64> = a.iter().zip(&bounds).map(|(ai, b)| ai * b).collect();
        let sr = env.step(&delta);
        total += sr.reward;
        history.push(a, sr.reward, sr.observation);
        if sr.done {
            return (history, total);
        }
    }
}

/// Full training run: environment interaction, one gradient step per env
/// step after warmup, periodic mean-action evaluation on a frozen suite.
/// Deterministic given the seed.
pub fn train(cfg: AgentConfig, tc: &TrainConfig) -> Result<TrainOutcome, NumError> {
    assert!(
        tc.variation.valid_for(cfg.kind),
        "variation {} is not valid for environment {}",
        tc.variation.name(),
        cfg.kind.name()
    );
    let kind = cfg.kind;
    let bounds = kind.action_delta_bound();
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(tc.seed ^ 0x9e37_79b9_7f4a_7c15);
    let eval_settings: Vec<EpisodeSetting> = (0..tc.eval_episodes)
        .map(|_| sample_setting(kind, tc.variation, &mut eval_rng))
        .collect();

    let mut agent = Agent::new(cfg.clone(), &mut rng);
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let mut evals = Vec::new();
    let mut steps = 0usize;
    let mut last_stats = UpdateStats {
        critic_loss: 0.0,
        actor_loss: 0.0,
        temperature: agent.temperature(),
        entropy: 0.0,
    };

    while steps < tc.total_steps {
        let setting = sample_setting(kind, tc.variation, &mut rng);
        let (mut env, first) = Env::reset(setting);
        let mut history = HistoryBuffer::new(kind.dt(), cfg.lookback);
        history.start(first.observation.clone());
        let mut episode = Episode {
            observations: vec![first.observation],
            actions: Vec::new(),
            rewards: Vec::new(),
        };
        for _ in 0..EPISODE_LEN {
            if steps >= tc.total_steps {
                break;
            }
            let a = if steps < cfg.warmup_steps {
                (0..kind.action_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect()
            } else {
                agent.act_sample(&history, &mut rng)
            };
            let delta: Vec<f64> = a.iter().zip(&bounds).map(|(ai, b)| ai * b).collect();
            let sr = env.step(&delta);
            history.push(a.clone(), sr.reward, sr.observation.clone());
            episode.actions.push(a);
            episode.rewards.push(sr.reward);
            episode.observations.push(sr.observation);
            steps += 1;

            if steps > cfg.warmup_steps && !replay.is_empty() {
                let batch = replay.sample(cfg.batch_size, kind.dt(), cfg.lookback, &mut rng);
                last_stats = agent.update(&batch, &mut rng)?;
            }
            if steps % tc.eval_period == 0 {
                let (mean, se) = evaluate_agent(&mut agent, &eval_settings);
                evals.push(EvalPoint {
                    step: steps,
                    mean_return: mean,
                    se_return: se,
                    critic_loss: last_stats.critic_loss,
                    actor_loss: last_stats.actor_loss,
                    temperature: last_stats.temperature,
                });
                if let Some(path) = &tc.checkpoint_path {
                    agent.store.save(path)?;
                }
            }
        }
        replay.push(episode);
    }
    Ok(TrainOutcome { agent, evals })
}
