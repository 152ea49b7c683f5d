//! Evaluation harness: frozen test suites, score normalization, CSV
//! outputs, and attention heatmap export. Test suites use a fixed seed
//! disjoint from any tuning or training seed so methods never see their
//! evaluation settings during optimization.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::envs::{sample_setting, EnvKind, EpisodeSetting, Variation};
use crate::numcore::Tensor;
use crate::sac::{rollout_history, Agent, EvalPoint};

/// Seed for held-out test suites. Tuning and training draw their settings
/// from run seeds; keep those away from this value.
pub const TEST_SUITE_SEED: u64 = 1000;
pub const TEST_SUITE_SIZE: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("degenerate score group: {0}")]
    Degenerate(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// The frozen held-out suite every method is scored on.
pub fn test_suite(kind: EnvKind, variation: Variation) -> Vec<EpisodeSetting> {
    suite(kind, variation, TEST_SUITE_SEED, TEST_SUITE_SIZE)
}

pub fn suite(
    kind: EnvKind,
    variation: Variation,
    seed: u64,
    n: usize,
) -> Vec<EpisodeSetting> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sample_setting(kind, variation, &mut rng)).collect()
}

/// Min-max normalization of one score column to [0, 100]: the worst raw
/// return maps to 0, the best to 100.
pub fn normalize_scores(raw: &[f64]) -> Result<Vec<f64>, EvalError> {
    if raw.len() < 2 {
        return Err(EvalError::Degenerate("need at least two scores".into()));
    }
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max - min).is_normal() {
        return Err(EvalError::Degenerate(format!(
            "score range [{min}, {max}] has no spread"
        )));
    }
    Ok(raw.iter().map(|j| (j - min) / (max - min) * 100.0).collect())
}

/// Mean causal attention pattern of one head over mean-action rollouts.
/// Row t holds the weights the query at step t puts on steps <= t.
pub fn attention_heatmap(
    agent: &mut Agent,
    settings: &[EpisodeSetting],
    head_index: usize,
) -> Result<Tensor, EvalError> {
    assert!(!settings.is_empty(), "attention heatmap needs settings");
    let histories: Vec<_> = settings
        .iter()
        .map(|s| rollout_history(agent, s.clone()).0)
        .collect();
    let enc = agent
        .actor_gpide()
        .expect("attention heatmap needs a gpide actor encoder");
    let mut mean: Option<Tensor> = None;
    for h in &histories {
        let m = enc.attention_matrix(&agent.store, h, head_index);
        mean = Some(match mean {
            None => m,
            Some(acc) => {
                assert_eq!(acc.rows(), m.rows(), "rollout lengths differ");
                acc.add(&m)
            }
        });
    }
    Ok(mean.unwrap().scale(1.0 / settings.len() as f64))
}

/// Training curve CSV: one row per evaluation point.
pub fn write_eval_csv(path: &Path, evals: &[EvalPoint]) -> Result<(), EvalError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "step,return_mean,return_se,critic_loss,actor_loss,temperature")?;
    for e in evals {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            e.step, e.mean_return, e.se_return, e.critic_loss, e.actor_loss, e.temperature
        )?;
    }
    Ok(())
}

/// Raw and normalized scores per method, one CSV row per method.
pub fn write_scores_csv(
    path: &Path,
    methods: &[String],
    raw: &[f64],
) -> Result<(), EvalError> {
    assert_eq!(methods.len(), raw.len(), "method/score count mismatch");
    let normalized = normalize_scores(raw)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "method,raw_return,normalized")?;
    for i in 0..methods.len() {
        writeln!(f, "{},{},{:.2}", methods[i], raw[i], normalized[i])?;
    }
    Ok(())
}

/// Lower-triangular attention CSV: row t has t+1 entries.
pub fn write_attention_csv(path: &Path, heatmap: &Tensor) -> Result<(), EvalError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in 0..heatmap.rows() {
        let row: Vec<String> = (0..=t.min(heatmap.cols() - 1))
            .map(|i| heatmap.get(t, i).to_string())
            .collect();
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_suite_is_frozen() {
        let a = test_suite(EnvKind::Msd, Variation::Fixed);
        let b = test_suite(EnvKind::Msd, Variation::Fixed);
        assert_eq!(a.len(), TEST_SUITE_SIZE);
        assert_eq!(a, b);
    }

    #[test]
    fn suites_with_different_seeds_differ() {
        let test = suite(EnvKind::Msd, Variation::Small, TEST_SUITE_SEED, 10);
        let tune = suite(EnvKind::Msd, Variation::Small, 7, 10);
        assert_ne!(test, tune);
    }

    #[test]
    fn normalization_endpoints() {
        let raw = vec![-6.14, -5.76, -5.75, -5.69, -5.76];
        let n = normalize_scores(&raw).unwrap();
        assert_eq!(n[0], 0.0);
        assert_eq!(n[3], 100.0);
        assert!(n[1] > 0.0 && n[1] < 100.0);
    }

    #[test]
    fn normalization_rejects_flat_scores() {
        assert!(normalize_scores(&[1.0, 1.0]).is_err());
        assert!(normalize_scores(&[1.0]).is_err());
    }

    #[test]
    fn csv_outputs_are_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let evals = vec![EvalPoint {
            step: 100,
            mean_return: -6.25,
            se_return: 0.125,
            critic_loss: 0.5,
            actor_loss: -1.5,
            temperature: 0.01,
        }];
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_eval_csv(&p1, &evals).unwrap();
        write_eval_csv(&p2, &evals).unwrap();
        let a = std::fs::read(&p1).unwrap();
        assert_eq!(a, std::fs::read(&p2).unwrap());
        let text = String::from_utf8(a).unwrap();
        assert!(text.contains("100,-6.25,0.125,0.5,-1.5,0.01"));
    }

    #[test]
    fn attention_csv_is_lower_triangular() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Tensor::zeros(3, 3);
        for t in 0..3 {
            for i in 0..=t {
                m.set(t, i, 1.0 / (t + 1) as f64);
            }
        }
        let p = dir.path().join("attn.csv");
        write_attention_csv(&p, &m).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].split(',').count(), 1);
        assert_eq!(lines[2].split(',').count(), 3);
    }
}
