//! Intrinsic rewards (inverse-model error, learning progress bonus), the
//! entropy-regularized policy objective, the temperature objective and the
//! reset score.

use ndarray::{Array2, ArrayView2};
use xsrl_autodiff::{Graph, NodeId};

use crate::error::{check_dim, Result, XsrlError};
use crate::nets::{inverse_forward, CloneHandle, DenseModel, GaussianPolicy, StateEstimator};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntrinsicWeights {
    pub w_inverse: f64,
    pub w_lpb: f64,
    /// The entropy temperature is stored as its logarithm.
    pub log_w_h: f64,
    pub target_entropy: f64,
}

impl IntrinsicWeights {
    pub fn new(w_inverse: f64, w_lpb: f64, w_h: f64, action_dim: usize) -> Self {
        Self {
            w_inverse,
            w_lpb,
            log_w_h: w_h.ln(),
            target_entropy: -(action_dim as f64),
        }
    }

    pub fn w_h(&self) -> f64 {
        self.log_w_h.exp()
    }
}

/// `‖â − a‖²`.
pub fn reward_inverse(a_hat: &[f64], a: &[f64]) -> Result<f64> {
    check_dim("predicted action", a.len(), a_hat.len())?;
    Ok(a_hat.iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// `‖φ(o, s, a) − φ′(o, s, a)‖²` per row.
pub fn reward_lpb(
    phi: &StateEstimator,
    clone: &CloneHandle,
    o: ArrayView2<f64>,
    s: ArrayView2<f64>,
    a: ArrayView2<f64>,
) -> Result<Vec<f64>> {
    let now = phi.predict(o, s, a)?;
    let before = clone.estimator().predict(o, s, a)?;
    Ok((&now - &before)
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|x| x * x).sum())
        .collect())
}

/// Per-row reward terms and log-density of one policy's samples, as graph
/// nodes (each `n×1`).
#[derive(Debug, Clone, Copy)]
pub struct RewardNodes {
    pub r_inverse: NodeId,
    pub r_lpb: NodeId,
    pub log_prob: NodeId,
}

/// Stored inputs of one policy's interval batch.
#[derive(Debug, Clone)]
pub struct PolicyBatch<'a> {
    pub policy_id: usize,
    pub sample_policies: &'a [usize],
    pub obs: &'a Array2<f64>,
    pub states: &'a Array2<f64>,
    pub noise: &'a Array2<f64>,
    /// Symmetric action box the environment clips to.
    pub action_box: (f64, f64),
}

/// Frozen models the policy loss differentiates through.
#[derive(Debug, Clone, Copy)]
pub struct FrozenModels<'a> {
    pub phi: &'a StateEstimator,
    pub clone: &'a CloneHandle,
    pub inverse: &'a DenseModel,
}

/// Builds the reward terms for a freshly reparametrized action from the
/// stored noise. Only the policy parameters bound in `policy_ids` are
/// trainable.
pub fn reward_nodes(
    g: &mut Graph,
    policy: &GaussianPolicy,
    policy_ids: &xsrl_autodiff::BoundParams,
    batch: &PolicyBatch,
    frozen: FrozenModels,
) -> Result<RewardNodes> {
    if let Some(&bad) = batch.sample_policies.iter().find(|&&p| p != batch.policy_id) {
        return Err(XsrlError::InvalidInput(format!(
            "policy batch for policy {} contains a sample from policy {bad}",
            batch.policy_id
        )));
    }
    let o = g.constant(batch.obs.clone());
    let s = g.constant(batch.states.clone());
    let eps = g.constant(batch.noise.clone());
    let sample = policy.sample(g, policy_ids, s, eps)?;
    // the models see the executed action; the density stays on the sample
    let executed = g.clamp(sample.action, batch.action_box.0, batch.action_box.1)?;

    let phi_b = frozen.phi.bind(g, false);
    let s_next = frozen.phi.forward(g, &phi_b, o, s, executed)?;
    let clone_b = frozen.clone.estimator().bind(g, false);
    let s_lag = frozen.clone.estimator().forward(g, &clone_b, o, s, executed)?;
    let drift = g.sub(s_next, s_lag)?;
    let r_lpb = g.squared_norm(drift)?;

    let inv_b = frozen.inverse.params.bind(g, false);
    let a_hat = inverse_forward(frozen.inverse, g, &inv_b, s_next, s)?;
    let miss = g.sub(a_hat, executed)?;
    let r_inverse = g.squared_norm(miss)?;
    Ok(RewardNodes {
        r_inverse,
        r_lpb,
        log_prob: sample.log_prob,
    })
}

/// `mean(−[w_I·r_I + w_LPB·r_LPB − w_H·log π])`.
pub fn policy_objective(g: &mut Graph, r: RewardNodes, weights: &IntrinsicWeights) -> Result<NodeId> {
    let wi = g.scale(r.r_inverse, weights.w_inverse)?;
    let wl = g.scale(r.r_lpb, weights.w_lpb)?;
    let ent = g.scale(r.log_prob, weights.w_h())?;
    let bonus = g.add(wi, wl)?;
    let gain = g.sub(bonus, ent)?;
    let per_sample = g.scale(gain, -1.0)?;
    Ok(g.mean_rows(per_sample)?)
}

/// `mean(w_H·(−log π − H̄))` with `w_H = exp(log_w_h)`; only `log_w_h`
/// receives a gradient.
pub fn temperature_objective(g: &mut Graph, log_w_h: NodeId, log_probs: &[f64], target_entropy: f64) -> Result<NodeId> {
    if log_probs.is_empty() {
        return Err(XsrlError::InvalidInput("temperature objective needs a nonempty batch".into()));
    }
    let gap = log_probs.iter().map(|lp| -lp - target_entropy).sum::<f64>() / log_probs.len() as f64;
    let w = g.exp(log_w_h)?;
    Ok(g.scale(w, gap)?)
}

/// Logged intrinsic reward of one acting step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSample {
    pub r_inverse: f64,
    pub r_lpb: f64,
    pub log_prob: f64,
    /// 0 for the first policy, 1 for the second.
    pub policy: usize,
}

/// Window-mean of `w_I·r_I + w_LPB·r_LPB` per policy.
pub fn reset_score(window: &[RewardSample], weights: &IntrinsicWeights) -> Result<[f64; 2]> {
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for s in window {
        sums[s.policy] += weights.w_inverse * s.r_inverse + weights.w_lpb * s.r_lpb;
        counts[s.policy] += 1;
    }
    if counts.contains(&0) {
        return Err(XsrlError::InvalidInput("reset score needs samples from both policies".into()));
    }
    Ok([sums[0] / counts[0] as f64, sums[1] / counts[1] as f64])
}

/// Index of the policy to reset: the lower score, first policy on ties.
pub fn policy_to_reset(scores: [f64; 2]) -> usize {
    if scores[1] < scores[0] {
        1
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn inverse_reward_examples() {
        assert_eq!(reward_inverse(&[0.3, -1.0], &[0.3, -1.0]).unwrap(), 0.0);
        assert_eq!(reward_inverse(&[2.0, 1.0], &[1.0, 0.0]).unwrap(), 2.0);
        assert!(reward_inverse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn objective_example_without_entropy() {
        let mut g = Graph::new();
        let ri = g.constant(Array2::from_elem((3, 1), 2.0));
        let rl = g.constant(Array2::from_elem((3, 1), 3.0));
        let lp = g.constant(Array2::from_elem((3, 1), -1.7));
        let w = IntrinsicWeights {
            w_inverse: 0.5,
            w_lpb: 1.0,
            log_w_h: f64::NEG_INFINITY,
            target_entropy: -2.0,
        };
        let loss = policy_objective(&mut g, RewardNodes { r_inverse: ri, r_lpb: rl, log_prob: lp }, &w).unwrap();
        assert!((g.scalar_value(loss) + 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rewards_zero_loss() {
        let mut g = Graph::new();
        let z = g.constant(Array2::zeros((2, 1)));
        let loss = policy_objective(
            &mut g,
            RewardNodes {
                r_inverse: z,
                r_lpb: z,
                log_prob: z,
            },
            &IntrinsicWeights::new(0.5, 1.0, 0.1, 2),
        )
        .unwrap();
        assert_eq!(g.scalar_value(loss), 0.0);
    }

    #[test]
    fn temperature_gradient_signs() {
        let w = IntrinsicWeights::new(0.5, 1.0, 0.1, 2);
        assert_eq!(w.target_entropy, -2.0);
        let grad = |lps: &[f64]| {
            let mut g = Graph::new();
            let lw = g.param("log_w_h", array![[w.log_w_h]]);
            let l = temperature_objective(&mut g, lw, lps, w.target_entropy).unwrap();
            g.backward(l).unwrap().get(lw).unwrap()[[0, 0]]
        };
        assert_eq!(grad(&[2.0, 2.0]), 0.0);
        // entropy above target: descent lowers w_H
        assert!(grad(&[-1.0, 0.5]) > 0.0);
        assert!(grad(&[3.0, 4.0]) < 0.0);
    }

    #[test]
    fn reset_scores_and_ties() {
        assert_eq!(policy_to_reset([3.2, 1.1]), 1);
        assert_eq!(policy_to_reset([0.9, 0.9]), 0);
        let w = IntrinsicWeights::new(0.5, 1.0, 0.1, 2);
        let window = [
            RewardSample { r_inverse: 2.0, r_lpb: 1.0, log_prob: 0.0, policy: 0 },
            RewardSample { r_inverse: 4.0, r_lpb: 0.0, log_prob: 9.0, policy: 0 },
            RewardSample { r_inverse: 0.0, r_lpb: 0.5, log_prob: 0.0, policy: 1 },
        ];
        assert_eq!(reset_score(&window, &w).unwrap(), [2.0, 0.5]);
        assert!(reset_score(&window[..2], &w).is_err());
    }
}
