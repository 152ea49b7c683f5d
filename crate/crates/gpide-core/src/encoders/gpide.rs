use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::numcore::nn::OutputActivation;
use crate::numcore::{
    softmax_rows_value, BatchNorm, Graph, Linear, Mlp, NodeId, ParamStore, Tensor,
};

use super::{feature_dim, featurize_step, HeadSpec};

pub const ATTENTION_LOOKBACK_DEFAULT: usize = 100;

#[derive(Clone, Debug)]
pub struct GpideConfig {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub include_actions_rewards: bool,
    pub heads: Vec<HeadSpec>,
    /// Per-head projection dimension D.
    pub proj_dim: usize,
    pub obs_encode_dim: usize,
    pub trans_encode_dim: usize,
    pub decoder_hidden: Vec<usize>,
    pub out_dim: usize,
    pub use_batch_norm: bool,
    pub final_tanh: bool,
    /// Attention heads only look back this many steps; summation and
    /// smoothing heads accumulate over the whole episode.
    pub lookback: usize,
}

impl GpideConfig {
    /// Tracking defaults: D = 16, observation/transition encoders 8,
    /// decoder [64] -> 64 with final tanh.
    pub fn tracking(obs_dim: usize, action_dim: usize, heads: Vec<HeadSpec>) -> Self {
        GpideConfig {
            obs_dim,
            action_dim,
            include_actions_rewards: false,
            heads,
            proj_dim: 16,
            obs_encode_dim: 8,
            trans_encode_dim: 8,
            decoder_hidden: vec![64],
            out_dim: 64,
            use_batch_norm: true,
            final_tanh: true,
            lookback: ATTENTION_LOOKBACK_DEFAULT,
        }
    }

    pub fn feature_dim(&self) -> usize {
        feature_dim(self.obs_dim, self.action_dim, self.include_actions_rewards)
    }

    /// Width after the input encoders; actions and rewards pass through
    /// unencoded when enabled.
    pub fn encoded_dim(&self) -> usize {
        self.obs_encode_dim
            + self.trans_encode_dim
            + if self.include_actions_rewards { self.action_dim + 1 } else { 0 }
    }
}

#[derive(Clone, Debug)]
struct HeadParams {
    f: Linear,
    q: Option<Linear>,
    k: Option<Linear>,
    bn: Option<BatchNorm>,
}

/// GPIDE encoder parameters registered under a name prefix in a store.
#[derive(Clone, Debug)]
pub struct Gpide {
    pub cfg: GpideConfig,
    input_bn: Option<BatchNorm>,
    obs_enc: Linear,
    trans_enc: Linear,
    heads: Vec<HeadParams>,
    decoder: Mlp,
}

impl Gpide {
    pub fn new(store: &mut ParamStore, prefix: &str, cfg: GpideConfig, rng: &mut impl Rng) -> Self {
        assert!(!cfg.heads.is_empty(), "gpide needs at least one head");
        let fdim = cfg.feature_dim();
        let input_bn = cfg
            .use_batch_norm
            .then(|| BatchNorm::new(store, &format!("{prefix}.input_bn"), fdim));
        let obs_enc = Linear::new(store, &format!("{prefix}.obs_enc"), cfg.obs_dim, cfg.obs_encode_dim, rng);
        let trans_enc = Linear::new(
            store,
            &format!("{prefix}.trans_enc"),
            cfg.obs_dim,
            cfg.trans_encode_dim,
            rng,
        );
        let edim = cfg.encoded_dim();
        let heads = cfg
            .heads
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let base = format!("{prefix}.head{i}");
                HeadParams {
                    f: Linear::new(store, &format!("{base}.f"), edim, cfg.proj_dim, rng),
                    q: spec
                        .is_attention()
                        .then(|| Linear::new(store, &format!("{base}.q"), edim, cfg.proj_dim, rng)),
                    k: spec
                        .is_attention()
                        .then(|| Linear::new(store, &format!("{base}.k"), edim, cfg.proj_dim, rng)),
                    bn: cfg
                        .use_batch_norm
                        .then(|| BatchNorm::new(store, &format!("{base}.bn"), cfg.proj_dim)),
                }
            })
            .collect();
        let decoder = Mlp::new(
            store,
            &format!("{prefix}.decoder"),
            cfg.heads.len() * cfg.proj_dim,
            &cfg.decoder_hidden,
            cfg.out_dim,
            OutputActivation::None,
            rng,
        );
        Gpide { cfg, input_bn, obs_enc, trans_enc, heads, decoder }
    }

    pub fn has_attention(&self) -> bool {
        self.cfg.heads.iter().any(|h| h.is_attention())
    }

    pub fn attention_head_indices(&self) -> Vec<usize> {
        self.cfg
            .heads
            .iter()
            .enumerate()
            .filter(|(_, h)| h.is_attention())
            .map(|(i, _)| i)
            .collect()
    }

    fn set_linear(store: &mut ParamStore, lin: Linear, w: Tensor, b: Tensor) {
        store.set(lin.w, w);
        store.set(lin.b, b);
    }

    /// Input encoders applied to a [t, F] featurized block inside the graph.
    fn encode_inputs(
        &self,
        g: &mut Graph,
        store: &mut ParamStore,
        feats: NodeId,
        train: bool,
    ) -> NodeId {
        let x = match &self.input_bn {
            Some(bn) if train => bn.forward_train(g, store, feats),
            Some(bn) => bn.forward_eval(g, store, feats),
            None => feats,
        };
        let fdim = self.cfg.feature_dim();
        let obs_d = self.cfg.obs_dim;
        let obs_part = g.slice_cols(x, 0, obs_d);
        let obs_encoded = self.obs_enc.forward(g, store, obs_part);
        let trans_part = g.slice_cols(x, fdim - obs_d, obs_d);
        let trans_encoded = self.trans_enc.forward(g, store, trans_part);
        if self.cfg.include_actions_rewards {
            let mid = g.slice_cols(x, obs_d, fdim - 2 * obs_d);
            g.concat_cols(&[obs_encoded, mid, trans_encoded])
        } else {
            g.concat_cols(&[obs_encoded, trans_encoded])
        }
    }

    /// Batched encoding of featurized windows. Each entry of `windows` is
    /// a [t_b, F] block; the result is [B, out_dim]. Training mode uses
    /// batch statistics in every batch norm.
    pub fn encode_batch(
        &self,
        g: &mut Graph,
        store: &mut ParamStore,
        windows: &[Tensor],
        train: bool,
    ) -> NodeId {
        assert!(!windows.is_empty(), "empty window batch");
        let lens: Vec<usize> = windows.iter().map(|w| w.rows()).collect();
        let total: usize = lens.iter().sum();
        let parts: Vec<NodeId> = windows.iter().map(|w| g.constant(w.clone())).collect();
        let stacked = g.concat_rows(&parts);
        let enc = self.encode_inputs(g, store, stacked, train);

        let mut head_outputs = Vec::with_capacity(self.heads.len());
        for (spec, head) in self.cfg.heads.iter().zip(&self.heads) {
            let v = head.f.forward(g, store, enc);
            let w = match spec {
                HeadSpec::Summation | HeadSpec::ExpSmoothing(_) => {
                    // one block-diagonal weight row per window
                    let mut wmat = Tensor::zeros(lens.len(), total);
                    let mut off = 0;
                    for (b, &t) in lens.iter().enumerate() {
                        match spec {
                            HeadSpec::Summation => {
                                for i in 0..t {
                                    wmat.set(b, off + i, 1.0);
                                }
                            }
                            HeadSpec::ExpSmoothing(alpha) => {
                                for (i, wi) in super::es_weights(t, *alpha).iter().enumerate() {
                                    wmat.set(b, off + i, *wi);
                                }
                            }
                            HeadSpec::Attention => unreachable!(),
                        }
                        off += t;
                    }
                    let wnode = g.constant(wmat);
                    g.matmul(wnode, v)
                }
                HeadSpec::Attention => {
                    let q = head.q.as_ref().unwrap().forward(g, store, enc);
                    let k = head.k.as_ref().unwrap().forward(g, store, enc);
                    let scale = 1.0 / (self.cfg.proj_dim as f64).sqrt();
                    let mut rows = Vec::with_capacity(lens.len());
                    let mut off = 0;
                    for &t in &lens {
                        let span = t.min(self.cfg.lookback);
                        let start = off + t - span;
                        let q_last = g.slice_rows(q, off + t - 1, 1);
                        let k_b = g.slice_rows(k, start, span);
                        let v_b = g.slice_rows(v, start, span);
                        let k_t = g.transpose(k_b);
                        let scores = g.matmul(q_last, k_t);
                        let scores = g.scale(scores, scale);
                        let probs = g.softmax_rows(scores, false);
                        rows.push(g.matmul(probs, v_b));
                        off += t;
                    }
                    g.concat_rows(&rows)
                }
            };
            let w = match &head.bn {
                Some(bn) if train => bn.forward_train(g, store, w),
                Some(bn) => bn.forward_eval(g, store, w),
                None => w,
            };
            head_outputs.push(w);
        }
        let joined = g.concat_cols(&head_outputs);
        let out = self.decoder.forward(g, store, joined);
        if self.cfg.final_tanh {
            g.tanh(out)
        } else {
            out
        }
    }

    /// Convenience single-history evaluation-mode encoding.
    pub fn encode_history(&self, store: &mut ParamStore, history: &super::HistoryBuffer) -> Vec<f64> {
        let feats = history.featurize(self.cfg.include_actions_rewards);
        let mut g = Graph::new();
        let out = self.encode_batch(&mut g, store, &[feats], false);
        g.value(out).data().to_vec()
    }

    pub fn start_stream(&self) -> GpideStream {
        GpideStream {
            t: 0,
            prev_obs: None,
            states: self
                .cfg
                .heads
                .iter()
                .map(|spec| match spec {
                    HeadSpec::Summation => HeadState::Sum(vec![0.0; self.cfg.proj_dim]),
                    HeadSpec::ExpSmoothing(_) => HeadState::Es { w: Vec::new() },
                    HeadSpec::Attention => {
                        HeadState::Attn { keys: VecDeque::new(), values: VecDeque::new() }
                    }
                })
                .collect(),
        }
    }

    fn plain_encode_inputs(&self, store: &ParamStore, feat: &[f64]) -> Tensor {
        let row = Tensor::row(feat);
        let x = match &self.input_bn {
            Some(bn) => bn.apply_eval(store, &row),
            None => row,
        };
        let fdim = self.cfg.feature_dim();
        let obs_d = self.cfg.obs_dim;
        let obs_encoded = self.obs_enc.apply(store, &x.slice_cols(0, obs_d));
        let trans_encoded = self.trans_enc.apply(store, &x.slice_cols(fdim - obs_d, obs_d));
        if self.cfg.include_actions_rewards {
            let mid = x.slice_cols(obs_d, fdim - 2 * obs_d);
            Tensor::concat_cols(&[&obs_encoded, &mid, &trans_encoded])
        } else {
            Tensor::concat_cols(&[&obs_encoded, &trans_encoded])
        }
    }

    /// Incremental path: push one step (the first call passes the initial
    /// observation with `action`/`reward` ignored) and get z_t back.
    /// Always evaluation-mode batch norm.
    pub fn stream_push(
        &self,
        store: &ParamStore,
        stream: &mut GpideStream,
        action: &[f64],
        reward: f64,
        obs: &[f64],
    ) -> Vec<f64> {
        let feat = match &stream.prev_obs {
            None => featurize_step(
                obs,
                &vec![0.0; self.cfg.action_dim],
                0.0,
                obs,
                self.cfg.include_actions_rewards,
            ),
            Some(prev) => {
                featurize_step(prev, action, reward, obs, self.cfg.include_actions_rewards)
            }
        };
        stream.prev_obs = Some(obs.to_vec());
        stream.t += 1;

        let enc = self.plain_encode_inputs(store, &feat);
        let mut joined = Vec::with_capacity(self.heads.len() * self.cfg.proj_dim);
        for ((spec, head), state) in
            self.cfg.heads.iter().zip(&self.heads).zip(&mut stream.states)
        {
            let v = head.f.apply(store, &enc);
            let w: Vec<f64> = match (spec, state) {
                (HeadSpec::Summation, HeadState::Sum(acc)) => {
                    for (a, x) in acc.iter_mut().zip(v.data()) {
                        *a += x;
                    }
                    acc.clone()
                }
                (HeadSpec::ExpSmoothing(alpha), HeadState::Es { w }) => {
                    if w.is_empty() {
                        *w = v.data().to_vec();
                    } else {
                        for (wi, vi) in w.iter_mut().zip(v.data()) {
                            *wi = (1.0 - alpha) * *wi + alpha * vi;
                        }
                    }
                    w.clone()
                }
                (HeadSpec::Attention, HeadState::Attn { keys, values }) => {
                    let q = head.q.as_ref().unwrap().apply(store, &enc);
                    let k = head.k.as_ref().unwrap().apply(store, &enc);
                    keys.push_back(k.data().to_vec());
                    values.push_back(v.data().to_vec());
                    while keys.len() > self.cfg.lookback {
                        keys.pop_front();
                        values.pop_front();
                    }
                    let scale = 1.0 / (self.cfg.proj_dim as f64).sqrt();
                    let scores: Vec<f64> = keys
                        .iter()
                        .map(|ki| {
                            ki.iter().zip(q.data()).map(|(a, b)| a * b).sum::<f64>() * scale
                        })
                        .collect();
                    let probs = softmax_rows_value(&Tensor::row(&scores), false);
                    let mut out = vec![0.0; self.cfg.proj_dim];
                    for (p, vi) in probs.data().iter().zip(values.iter()) {
                        for (o, x) in out.iter_mut().zip(vi) {
                            *o += p * x;
                        }
                    }
                    out
                }
                _ => unreachable!("head state does not match spec"),
            };
            let w_row = Tensor::row(&w);
            let w_row = match &head.bn {
                Some(bn) => bn.apply_eval(store, &w_row),
                None => w_row,
            };
            joined.extend_from_slice(w_row.data());
        }
        let mut out = self.decoder.apply(store, &Tensor::row(&joined));
        if self.cfg.final_tanh {
            out = out.map(f64::tanh);
        }
        out.data().to_vec()
    }

    /// Full causal attention matrix for one head over a history, for the
    /// heatmap export. Row t holds the weights over steps 1..=t.
    pub fn attention_matrix(
        &self,
        store: &ParamStore,
        history: &super::HistoryBuffer,
        head_index: usize,
    ) -> Tensor {
        assert!(
            self.cfg.heads[head_index].is_attention(),
            "head {head_index} is not an attention head"
        );
        let head = &self.heads[head_index];
        let feats = history.featurize(self.cfg.include_actions_rewards);
        let t = feats.rows();
        let mut enc_rows = Vec::with_capacity(t);
        for r in 0..t {
            enc_rows.push(self.plain_encode_inputs(store, feats.row_slice(r)));
        }
        let enc_refs: Vec<&Tensor> = enc_rows.iter().collect();
        let enc = Tensor::concat_rows(&enc_refs);
        let q = head.q.as_ref().unwrap().apply(store, &enc);
        let k = head.k.as_ref().unwrap().apply(store, &enc);
        let scores = q.matmul(&k.transpose()).scale(1.0 / (self.cfg.proj_dim as f64).sqrt());
        softmax_rows_value(&scores, true)
    }
}

/// Incremental per-episode encoder state.
#[derive(Clone, Debug)]
pub struct GpideStream {
    t: usize,
    prev_obs: Option<Vec<f64>>,
    states: Vec<HeadState>,
}

impl GpideStream {
    pub fn steps(&self) -> usize {
        self.t
    }

    /// Number of cached attention keys, for window-bound checks.
    pub fn attention_cache_len(&self) -> usize {
        self.states
            .iter()
            .map(|s| match s {
                HeadState::Attn { keys, .. } => keys.len(),
                _ => 0,
            })
            .max()
            .unwrap_or(0)
    }
}

#[derive(Clone, Debug)]
enum HeadState {
    Sum(Vec<f64>),
    Es { w: Vec<f64> },
    Attn { keys: VecDeque<Vec<f64>>, values: VecDeque<Vec<f64>> },
}

/// GPIDE instance whose weights reproduce PIDE exactly: heads
/// [smoothing(1), summation, smoothing(1)], identity input encoders,
/// hand-set projections, identity decoder, no batch norm, no tanh.
pub fn a1_construction(
    store: &mut ParamStore,
    prefix: &str,
    obs_dim: usize,
    signal_idx: &[usize],
    ref_idx: &[usize],
    dt: f64,
) -> Gpide {
    let m = signal_idx.len();
    assert_eq!(m, ref_idx.len());
    let cfg = GpideConfig {
        obs_dim,
        action_dim: 0,
        include_actions_rewards: false,
        heads: vec![HeadSpec::ExpSmoothing(1.0), HeadSpec::Summation, HeadSpec::ExpSmoothing(1.0)],
        proj_dim: m,
        obs_encode_dim: obs_dim,
        trans_encode_dim: obs_dim,
        decoder_hidden: vec![],
        out_dim: 3 * m,
        use_batch_norm: false,
        final_tanh: false,
        lookback: usize::MAX / 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let enc = Gpide::new(store, prefix, cfg, &mut rng);

    let identity = |n: usize| {
        let mut w = Tensor::zeros(n, n);
        for i in 0..n {
            w.set(i, i, 1.0);
        }
        w
    };
    Gpide::set_linear(store, enc.obs_enc, identity(obs_dim), Tensor::zeros(1, obs_dim));
    Gpide::set_linear(store, enc.trans_enc, identity(obs_dim), Tensor::zeros(1, obs_dim));

    // error picker over (o_prev, o_cur - o_prev): x_prev - sigma_prev
    // plus dx - dsigma equals the current error
    let mut f_err = Tensor::zeros(2 * obs_dim, m);
    // change-in-error picker: dx - dsigma only
    let mut f_diff = Tensor::zeros(2 * obs_dim, m);
    for ch in 0..m {
        f_err.set(signal_idx[ch], ch, 1.0);
        f_err.set(ref_idx[ch], ch, -1.0);
        f_err.set(obs_dim + signal_idx[ch], ch, 1.0);
        f_err.set(obs_dim + ref_idx[ch], ch, -1.0);
        f_diff.set(obs_dim + signal_idx[ch], ch, 1.0 / dt);
        f_diff.set(obs_dim + ref_idx[ch], ch, -1.0 / dt);
    }
    let zero_b = Tensor::zeros(1, m);
    Gpide::set_linear(store, enc.heads[0].f, f_err.clone(), zero_b.clone());
    Gpide::set_linear(store, enc.heads[1].f, f_err.scale(dt), zero_b.clone());
    Gpide::set_linear(store, enc.heads[2].f, f_diff, zero_b);
    Gpide::set_linear(
        store,
        enc.decoder.layers[0],
        identity(3 * m),
        Tensor::zeros(1, 3 * m),
    );
    enc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{default_tracking_heads, pide_encode, HistoryBuffer, PideConfig};

    fn random_history(rng: &mut impl Rng, obs_dim: usize, act_dim: usize, t: usize) -> HistoryBuffer {
        let mut h = HistoryBuffer::new(0.1, ATTENTION_LOOKBACK_DEFAULT);
        let first: Vec<f64> = (0..obs_dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        h.start(first);
        for _ in 1..t {
            let a: Vec<f64> = (0..act_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = rng.gen_range(-1.0..0.0);
            let o: Vec<f64> = (0..obs_dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            h.push(a, r, o);
        }
        h
    }

    #[test]
    fn a1_matches_pide_on_random_histories() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(obs_dim, m) in &[(3usize, 1usize), (6, 2)] {
            let signal: Vec<usize> = (0..m).collect();
            let refs: Vec<usize> = (m..2 * m).collect();
            let dt = 0.1;
            let mut store = ParamStore::new();
            let enc = a1_construction(&mut store, "enc", obs_dim, &signal, &refs, dt);
            let cfg = PideConfig { signal_idx: signal, ref_idx: refs, dt };
            for _ in 0..25 {
                let t = rng.gen_range(1..=40);
                let h = random_history(&mut rng, obs_dim, 1, t);
                let want = pide_encode(&h, &cfg);
                let got = enc.encode_history(&mut store, &h);
                for (a, b) in want.iter().zip(&got) {
                    assert!((a - b).abs() < 1e-9, "pide {a} vs gpide {b}");
                }
            }
        }
    }

    #[test]
    fn incremental_matches_batched() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = GpideConfig::tracking(3, 1, default_tracking_heads());
        let mut store = ParamStore::new();
        let enc = Gpide::new(&mut store, "enc", cfg, &mut rng);
        for _ in 0..5 {
            let t = rng.gen_range(1..=60);
            let h = random_history(&mut rng, 3, 1, t);
            let mut stream = enc.start_stream();
            let mut z_inc = Vec::new();
            for i in 0..t {
                let (a, r) = if i == 0 {
                    (vec![0.0], 0.0)
                } else {
                    (h.actions[i - 1].clone(), h.rewards[i - 1])
                };
                z_inc = enc.stream_push(&store, &mut stream, &a, r, &h.observations[i]);
            }
            let z_batch = enc.encode_history(&mut store, &h);
            for (a, b) in z_inc.iter().zip(&z_batch) {
                assert!((a - b).abs() < 1e-9, "incremental {a} vs batched {b}");
            }
        }
    }

    #[test]
    fn attention_cache_respects_lookback() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut cfg = GpideConfig::tracking(3, 1, default_tracking_heads());
        cfg.lookback = 4;
        let mut store = ParamStore::new();
        let enc = Gpide::new(&mut store, "enc", cfg, &mut rng);
        let mut stream = enc.start_stream();
        let h = random_history(&mut rng, 3, 1, 10);
        for i in 0..10 {
            let (a, r) = if i == 0 {
                (vec![0.0], 0.0)
            } else {
                (h.actions[i - 1].clone(), h.rewards[i - 1])
            };
            enc.stream_push(&store, &mut stream, &a, r, &h.observations[i]);
        }
        assert_eq!(stream.attention_cache_len(), 4);
    }

    #[test]
    fn attention_matrix_rows_are_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cfg = GpideConfig::tracking(3, 1, default_tracking_heads());
        let mut store = ParamStore::new();
        let enc = Gpide::new(&mut store, "enc", cfg, &mut rng);
        let h = random_history(&mut rng, 3, 1, 20);
        let head = enc.attention_head_indices()[0];
        let m = enc.attention_matrix(&store, &h, head);
        for r in 0..m.rows() {
            let s: f64 = m.row_slice(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            for c in 0..m.cols() {
                let v = m.get(r, c);
                assert!(v >= 0.0);
                assert_eq!(c > r, v == 0.0, "causality violated at ({r},{c})");
            }
        }
    }

    #[test]
    fn zero_query_attention_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let cfg = GpideConfig::tracking(3, 1, vec![HeadSpec::Attention]);
        let mut store = ParamStore::new();
        let enc = Gpide::new(&mut store, "enc", cfg, &mut rng);
        let q = enc.heads[0].q.as_ref().unwrap();
        store.set(q.w, Tensor::zeros(enc.cfg.encoded_dim(), enc.cfg.proj_dim));
        store.set(q.b, Tensor::zeros(1, enc.cfg.proj_dim));
        let h = random_history(&mut rng, 3, 1, 12);
        let m = enc.attention_matrix(&store, &h, 0);
        for r in 0..m.rows() {
            for c in 0..=r {
                assert!((m.get(r, c) - 1.0 / (r + 1) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn summation_head_equals_cumulative_sum() {
        // bn off, identity decoder: z_t is exactly the running sum of v_i
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cfg = GpideConfig {
            obs_dim: 2,
            action_dim: 1,
            include_actions_rewards: false,
            heads: vec![HeadSpec::Summation],
            proj_dim: 3,
            obs_encode_dim: 4,
            trans_encode_dim: 4,
            decoder_hidden: vec![],
            out_dim: 3,
            use_batch_norm: false,
            final_tanh: false,
            lookback: 100,
        };
        let mut store = ParamStore::new();
        let enc = Gpide::new(&mut store, "enc", cfg, &mut rng);
        let mut ident = Tensor::zeros(3, 3);
        for i in 0..3 {
            ident.set(i, i, 1.0);
        }
        Gpide::set_linear(&mut store, enc.decoder.layers[0], ident, Tensor::zeros(1, 3));
        let h = random_history(&mut rng, 2, 1, 30);
        let feats = h.featurize(false);
        let mut brute = vec![0.0; 3];
        for r in 0..feats.rows() {
            let e = enc.plain_encode_inputs(&store, feats.row_slice(r));
            let v = enc.heads[0].f.apply(&store, &e);
            for (b, x) in brute.iter_mut().zip(v.data()) {
                *b += x;
            }
        }
        let z = enc.encode_history(&mut store, &h);
        for (a, b) in brute.iter().zip(&z) {
            assert_eq!(a, b, "summation must match cumulative sum exactly");
        }
    }

    #[test]
    fn gradients_reach_every_head_parameter() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut cfg = GpideConfig::tracking(3, 1, default_tracking_heads());
        cfg.proj_dim = 4;
        cfg.decoder_hidden = vec![8];
        cfg.out_dim = 6;
        let mut store = ParamStore::new();
        let enc = Gpide::new(&mut store, "enc", cfg, &mut rng);
        let h1 = random_history(&mut rng, 3, 1, 7);
        let h2 = random_history(&mut rng, 3, 1, 5);
        let windows = vec![h1.featurize(false), h2.featurize(false)];
        let mut g = Graph::new();
        let z = enc.encode_batch(&mut g, &mut store, &windows, true);
        let loss = g.mean_all(z);
        g.backward(loss);
        g.apply_grads(&mut store);
        for id in store.param_ids_with_prefix("enc.") {
            let name = store.name(id).to_string();
            let grad = store.grad(id);
            assert!(grad.is_some(), "no gradient for {name}");
            assert!(grad.unwrap().is_finite(), "non-finite gradient for {name}");
        }
    }
}
