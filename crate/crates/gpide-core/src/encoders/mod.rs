//! History encoders. PIDE emits the exact per-channel PID features
//! (error, integral, derivative). GPIDE projects featurized steps and
//! accumulates them with summation, exponential-smoothing, or attention
//! heads before decoding.

mod gpide;

pub use gpide::{
    a1_construction, Gpide, GpideConfig, GpideStream, ATTENTION_LOOKBACK_DEFAULT,
};

/// Per-episode rolling history consumed by the encoders.
#[derive(Clone, Debug)]
pub struct HistoryBuffer {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub dt: f64,
    pub lookback: usize,
}

impl HistoryBuffer {
    pub fn new(dt: f64, lookback: usize) -> Self {
        HistoryBuffer {
            observations: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            dt,
            lookback,
        }
    }

    pub fn start(&mut self, obs: Vec<f64>) {
        assert!(self.observations.is_empty(), "history already started");
        self.observations.push(obs);
    }

    pub fn push(&mut self, action: Vec<f64>, reward: f64, obs: Vec<f64>) {
        assert!(!self.observations.is_empty(), "push before start");
        self.actions.push(action);
        self.rewards.push(reward);
        self.observations.push(obs);
    }

    /// Number of observations recorded so far (t).
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Featurized steps for the most recent `lookback` observations as a
    /// [t', F] matrix.
    pub fn featurize(&self, include_actions_rewards: bool) -> crate::numcore::Tensor {
        let t = self.len();
        let start = t.saturating_sub(self.lookback);
        let rows: Vec<Vec<f64>> = (start..t)
            .map(|i| {
                if i == 0 {
                    let zero_a = vec![0.0; self.actions.first().map_or(0, |a| a.len())];
                    featurize_step(
                        &self.observations[0],
                        &zero_a,
                        0.0,
                        &self.observations[0],
                        include_actions_rewards,
                    )
                } else {
                    featurize_step(
                        &self.observations[i - 1],
                        &self.actions[i - 1],
                        self.rewards[i - 1],
                        &self.observations[i],
                        include_actions_rewards,
                    )
                }
            })
            .collect();
        crate::numcore::Tensor::from_rows(&rows)
    }
}

/// Featurized step: (o_prev, [a_prev, r_prev], o_cur - o_prev). The first
/// step of an episode uses a synthetic predecessor o_0 = o_1 with zero
/// action and reward, making the difference term zero.
pub fn featurize_step(
    o_prev: &[f64],
    a_prev: &[f64],
    r_prev: f64,
    o_cur: &[f64],
    include_actions_rewards: bool,
) -> Vec<f64> {
    assert_eq!(o_prev.len(), o_cur.len(), "observation dimension mismatch");
    let mut out = Vec::with_capacity(2 * o_prev.len() + a_prev.len() + 1);
    out.extend_from_slice(o_prev);
    if include_actions_rewards {
        out.extend_from_slice(a_prev);
        out.push(r_prev);
    }
    for (p, c) in o_prev.iter().zip(o_cur) {
        out.push(c - p);
    }
    out
}

pub fn feature_dim(obs_dim: usize, action_dim: usize, include_actions_rewards: bool) -> usize {
    2 * obs_dim + if include_actions_rewards { action_dim + 1 } else { 0 }
}

/// Which observation entries are tracked signals and which are their
/// references, plus the step size for the I and D terms.
#[derive(Clone, Debug)]
pub struct PideConfig {
    pub signal_idx: Vec<usize>,
    pub ref_idx: Vec<usize>,
    pub dt: f64,
}

impl PideConfig {
    pub fn for_env(kind: crate::envs::EnvKind) -> Self {
        let (signal_idx, ref_idx) = kind.signal_indices();
        PideConfig { signal_idx, ref_idx, dt: kind.dt() }
    }

    pub fn channels(&self) -> usize {
        self.signal_idx.len()
    }
}

/// Exact PID features over the full episode: [e_1..e_M, i_1..i_M,
/// d_1..d_M]. Never windowed.
pub fn pide_encode(history: &HistoryBuffer, cfg: &PideConfig) -> Vec<f64> {
    let t = history.len();
    assert!(t >= 1, "pide_encode needs at least one observation");
    let m = cfg.channels();
    let err = |i: usize, ch: usize| {
        history.observations[i][cfg.signal_idx[ch]] - history.observations[i][cfg.ref_idx[ch]]
    };
    let mut out = vec![0.0; 3 * m];
    for ch in 0..m {
        let e_t = err(t - 1, ch);
        let integral: f64 = (0..t).map(|i| err(i, ch) * cfg.dt).sum();
        let deriv = if t >= 2 { (e_t - err(t - 2, ch)) / cfg.dt } else { 0.0 };
        out[ch] = e_t;
        out[m + ch] = integral;
        out[2 * m + ch] = deriv;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HeadSpec {
    Summation,
    ExpSmoothing(f64),
    Attention,
}

impl HeadSpec {
    pub fn is_attention(self) -> bool {
        matches!(self, HeadSpec::Attention)
    }
}

/// Default tracking head set: one summation, two attention, three
/// exponential-smoothing heads.
pub fn default_tracking_heads() -> Vec<HeadSpec> {
    vec![
        HeadSpec::Summation,
        HeadSpec::Attention,
        HeadSpec::Attention,
        HeadSpec::ExpSmoothing(0.25),
        HeadSpec::ExpSmoothing(0.5),
        HeadSpec::ExpSmoothing(1.0),
    ]
}

/// Head sets for the encoder ablations.
pub fn ablation_config(name: &str) -> Option<Vec<HeadSpec>> {
    match name {
        "es" => Some(
            [0.01, 0.1, 0.25, 0.5, 0.9, 1.0]
                .iter()
                .map(|&a| HeadSpec::ExpSmoothing(a))
                .collect(),
        ),
        "ess" => {
            let mut heads: Vec<HeadSpec> = [0.1, 0.25, 0.5, 0.9, 1.0]
                .iter()
                .map(|&a| HeadSpec::ExpSmoothing(a))
                .collect();
            heads.push(HeadSpec::Summation);
            Some(heads)
        }
        "attn" => Some(vec![HeadSpec::Attention; 6]),
        _ => None,
    }
}

/// Exponential-smoothing weights over steps 1..t: (1-a)^(t-1) on the
/// first step, a(1-a)^(t-i) on step i >= 2. Convex for a in [0,1].
pub fn es_weights(t: usize, alpha: f64) -> Vec<f64> {
    assert!(t >= 1);
    assert!((0.0..=1.0).contains(&alpha), "alpha out of [0,1]");
    let mut w = vec![0.0; t];
    w[0] = (1.0 - alpha).powi((t - 1) as i32);
    for (i, wi) in w.iter_mut().enumerate().skip(1) {
        *wi = alpha * (1.0 - alpha).powi((t - 1 - i) as i32);
    }
    w
}
