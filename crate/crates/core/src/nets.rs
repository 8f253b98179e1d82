//! The differentiable models: the recursive state estimator φ = (α, β, γ),
//! the observation predictor ω, the inverse model and the Gaussian
//! discovery policies, plus the frozen delayed clone of φ.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;
use xsrl_autodiff::{mlp_layers, Activation, AdamConfig, AdamState, BoundParams, Graph, LayerSpec, NodeId, ParamSet};

use crate::config::NetConfig;
use crate::error::{check_dim, Result};
use crate::rngs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub obs: usize,
    pub action: usize,
    pub state: usize,
}

fn cols(g: &Graph, id: NodeId) -> usize {
    g.value(id).ncols()
}

/// φ: `s_{t+1} = γ([α(o_t), β([s_t, a_t])])`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEstimator {
    pub alpha: ParamSet,
    pub beta: ParamSet,
    pub gamma: ParamSet,
    dims: ModelDims,
}

#[derive(Debug, Clone)]
pub struct EstimatorBinding {
    alpha: BoundParams,
    beta: BoundParams,
    gamma: BoundParams,
}

impl EstimatorBinding {
    /// Wraps bindings made elsewhere, e.g. leaves of a gradient check.
    pub fn from_parts(alpha: BoundParams, beta: BoundParams, gamma: BoundParams) -> Self {
        Self { alpha, beta, gamma }
    }

    /// Bindings of α, β, γ in that order.
    pub fn parts(&self) -> [&BoundParams; 3] {
        [&self.alpha, &self.beta, &self.gamma]
    }
}

impl StateEstimator {
    pub fn new<R: Rng + ?Sized>(dims: ModelDims, nets: &NetConfig, rng: &mut R) -> Self {
        let mut e = Self::zeros(dims, nets);
        e.alpha.glorot(rng);
        e.beta.glorot(rng);
        e.gamma.glorot(rng);
        e
    }

    pub fn zeros(dims: ModelDims, nets: &NetConfig) -> Self {
        Self::zeros_named(dims, nets, "")
    }

    /// Same architecture with a name suffix on every parameter set, used
    /// for the frozen clone.
    fn zeros_named(dims: ModelDims, nets: &NetConfig, suffix: &str) -> Self {
        let sa = dims.state + dims.action;
        Self {
            alpha: ParamSet::zeros(format!("alpha{suffix}"), mlp_layers(dims.obs, &nets.alpha_hidden, nets.alpha_out)),
            beta: ParamSet::zeros(format!("beta{suffix}"), mlp_layers(sa, &nets.beta_hidden, sa)),
            gamma: ParamSet::zeros(
                format!("gamma{suffix}"),
                mlp_layers(nets.alpha_out + sa, &nets.gamma_hidden, dims.state),
            ),
            dims,
        }
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn param_sets(&self) -> [&ParamSet; 3] {
        [&self.alpha, &self.beta, &self.gamma]
    }

    pub fn param_sets_mut(&mut self) -> [&mut ParamSet; 3] {
        [&mut self.alpha, &mut self.beta, &mut self.gamma]
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> EstimatorBinding {
        EstimatorBinding {
            alpha: self.alpha.bind(g, trainable),
            beta: self.beta.bind(g, trainable),
            gamma: self.gamma.bind(g, trainable),
        }
    }

    /// Next latent state for a batch of `(o, s, a)` rows.
    pub fn forward(&self, g: &mut Graph, b: &EstimatorBinding, o: NodeId, s: NodeId, a: NodeId) -> Result<NodeId> {
        check_dim("observation", self.dims.obs, cols(g, o))?;
        check_dim("state", self.dims.state, cols(g, s))?;
        check_dim("action", self.dims.action, cols(g, a))?;
        let features = self.alpha.forward(g, &b.alpha, o)?;
        let sa = g.concat(&[s, a])?;
        let mixed = self.beta.forward(g, &b.beta, sa)?;
        let joint = g.concat(&[features, mixed])?;
        Ok(self.gamma.forward(g, &b.gamma, joint)?)
    }

    /// Forward value only.
    pub fn predict(&self, o: ArrayView2<f64>, s: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim("observation", self.dims.obs, o.ncols())?;
        check_dim("state", self.dims.state, s.ncols())?;
        check_dim("action", self.dims.action, a.ncols())?;
        let features = self.alpha.infer(o)?;
        let sa = concatenate(Axis(1), &[s, a]).expect("row counts checked by caller");
        let mixed = self.beta.infer(sa.view())?;
        let joint = concatenate(Axis(1), &[features.view(), mixed.view()]).expect("same rows");
        Ok(self.gamma.infer(joint.view())?)
    }

    pub fn copy_from(&mut self, other: &StateEstimator) -> Result<()> {
        for (dst, src) in self.param_sets_mut().into_iter().zip(other.param_sets()) {
            dst.copy_from(src)?;
        }
        Ok(())
    }

    pub fn num_scalars(&self) -> usize {
        self.param_sets().iter().map(|p| p.num_scalars()).sum()
    }
}

/// Plain dense model: ω, the inverse model, critics.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseModel {
    pub params: ParamSet,
}

impl DenseModel {
    pub fn new<R: Rng + ?Sized>(name: &str, input: usize, hidden: &[usize], output: usize, rng: &mut R) -> Self {
        Self {
            params: ParamSet::dense(name, mlp_layers(input, hidden, output), rng),
        }
    }

    pub fn zeros(name: &str, input: usize, hidden: &[usize], output: usize) -> Self {
        Self {
            params: ParamSet::zeros(name, mlp_layers(input, hidden, output)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.params.layers()[0].input
    }

    pub fn output_dim(&self) -> usize {
        self.params.layers().last().expect("at least one layer").output
    }

    pub fn forward(&self, g: &mut Graph, b: &BoundParams, x: NodeId) -> Result<NodeId> {
        check_dim(self.what(), self.input_dim(), cols(g, x))?;
        Ok(self.params.forward(g, b, x)?)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.what(), self.input_dim(), x.ncols())?;
        Ok(self.params.infer(x)?)
    }

    fn what(&self) -> &'static str {
        match self.params.name() {
            "omega" => "omega input (state)",
            "inverse" => "inverse-model input (two states)",
            _ => "dense model input",
        }
    }
}

/// ω: predicts the next observation from the next latent state.
pub fn observation_predictor<R: Rng + ?Sized>(dims: ModelDims, nets: &NetConfig, rng: &mut R) -> DenseModel {
    DenseModel::new("omega", dims.state, &nets.omega_hidden, dims.obs, rng)
}

/// Inverse model `â_t = I(s_{t+1}, s_t)`.
pub fn inverse_model<R: Rng + ?Sized>(dims: ModelDims, nets: &NetConfig, rng: &mut R) -> DenseModel {
    DenseModel::new("inverse", 2 * dims.state, &nets.inverse_hidden, dims.action, rng)
}

/// `I(s_next, s)` inside a graph.
pub fn inverse_forward(
    model: &DenseModel,
    g: &mut Graph,
    b: &BoundParams,
    s_next: NodeId,
    s: NodeId,
) -> Result<NodeId> {
    let x = g.concat(&[s_next, s])?;
    model.forward(g, b, x)
}

/// Log-σ bounds of the discovery policy: σ ∈ [1e-3, 2].
pub const DISCOVERY_LOG_SIGMA: (f64, f64) = (-6.907_755_278_982_137, std::f64::consts::LN_2);

/// Diagonal Gaussian policy with a shared trunk and separate mean and
/// log-σ heads. Layers `0..trunk` form the trunk, then the mean head, then
/// the log-σ head.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub params: ParamSet,
    trunk: usize,
    log_sigma_bounds: (f64, f64),
}

/// Output of a reparametrized draw inside a graph.
#[derive(Debug, Clone, Copy)]
pub struct PolicySample {
    pub action: NodeId,
    pub log_prob: NodeId,
    pub mean: NodeId,
    pub log_sigma: NodeId,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        input: usize,
        hidden: &[usize],
        action: usize,
        log_sigma_bounds: (f64, f64),
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(name, input, hidden, action, log_sigma_bounds);
        p.params.glorot(rng);
        p
    }

    pub fn zeros(name: &str, input: usize, hidden: &[usize], action: usize, log_sigma_bounds: (f64, f64)) -> Self {
        let mut layers: Vec<LayerSpec> = mlp_layers(input, &hidden[..hidden.len() - 1], hidden[hidden.len() - 1]);
        layers.last_mut().expect("non-empty trunk").activation = Activation::LeakyRelu;
        let trunk = layers.len();
        let width = hidden[hidden.len() - 1];
        layers.extend(mlp_layers(width, &[], action));
        layers.extend(mlp_layers(width, &[], action));
        Self {
            params: ParamSet::zeros(name, layers),
            trunk,
            log_sigma_bounds,
        }
    }

    pub fn discovery<R: Rng + ?Sized>(name: &str, dims: ModelDims, nets: &NetConfig, rng: &mut R) -> Self {
        Self::new(name, dims.state, &nets.policy_hidden, dims.action, DISCOVERY_LOG_SIGMA, rng)
    }

    pub fn input_dim(&self) -> usize {
        self.params.layers()[0].input
    }

    pub fn action_dim(&self) -> usize {
        self.params.layers()[self.trunk].output
    }

    /// Mean and clamped log-σ heads.
    pub fn heads(&self, g: &mut Graph, b: &BoundParams, s: NodeId) -> Result<(NodeId, NodeId)> {
        check_dim("policy input (state)", self.input_dim(), cols(g, s))?;
        let h = self.params.forward_layers(g, b, s, 0..self.trunk)?;
        let mean = self.params.forward_layers(g, b, h, self.trunk..self.trunk + 1)?;
        let raw = self.params.forward_layers(g, b, h, self.trunk + 1..self.trunk + 2)?;
        let (lo, hi) = self.log_sigma_bounds;
        let log_sigma = g.clamp(raw, lo, hi)?;
        Ok((mean, log_sigma))
    }

    /// `a = μ(s) + ε·σ(s)` with its diagonal Gaussian log-density; both stay
    /// differentiable through the policy parameters.
    pub fn sample(&self, g: &mut Graph, b: &BoundParams, s: NodeId, noise: NodeId) -> Result<PolicySample> {
        check_dim("policy noise", self.action_dim(), cols(g, noise))?;
        let (mean, log_sigma) = self.heads(g, b, s)?;
        let sigma = g.exp(log_sigma)?;
        let spread = g.mul(noise, sigma)?;
        let action = g.add(mean, spread)?;
        let log_prob = g.gaussian_log_density(action, mean, log_sigma)?;
        Ok(PolicySample {
            action,
            log_prob,
            mean,
            log_sigma,
        })
    }

    /// Mean and σ without a graph.
    pub fn distribution(&self, s: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        check_dim("policy input (state)", self.input_dim(), s.ncols())?;
        let h = self.params.infer_layers(s, 0..self.trunk)?;
        let mean = self.params.infer_layers(h.view(), self.trunk..self.trunk + 1)?;
        let (lo, hi) = self.log_sigma_bounds;
        let sigma = self
            .params
            .infer_layers(h.view(), self.trunk + 1..self.trunk + 2)?
            .mapv(|x| x.clamp(lo, hi).exp());
        Ok((mean, sigma))
    }

    /// Reparametrized actions and log-densities without a graph.
    pub fn act(&self, s: ArrayView2<f64>, noise: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        check_dim("policy noise", self.action_dim(), noise.ncols())?;
        let (mean, sigma) = self.distribution(s)?;
        let action = &mean + &(&noise * &sigma);
        let log_prob = Array2::from_shape_fn((action.nrows(), 1), |(r, _)| {
            xsrl_autodiff::gaussian_log_density(
                action.row(r).as_slice().expect("contiguous"),
                mean.row(r).as_slice().expect("contiguous"),
                sigma.row(r).as_slice().expect("contiguous"),
            )
        });
        Ok((action, log_prob))
    }

    /// Re-initializes every parameter from `seed`.
    pub fn reset_params(&mut self, seed: u64) {
        let mut rng = rngs::stream(seed, "policy-reset");
        self.params.glorot(&mut rng);
    }
}

/// Frozen copy of φ lagging behind the trained estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct CloneHandle {
    phi: StateEstimator,
    age: u64,
}

impl CloneHandle {
    pub fn new(phi: &StateEstimator, nets: &NetConfig) -> Self {
        let mut frozen = StateEstimator::zeros_named(phi.dims(), nets, "_clone");
        frozen.copy_from(phi).expect("identical architecture");
        Self { phi: frozen, age: 0 }
    }

    pub fn estimator(&self) -> &StateEstimator {
        &self.phi
    }

    /// Training steps since the last sync.
    pub fn age(&self) -> u64 {
        self.age
    }

    pub fn tick(&mut self) {
        self.age += 1;
    }

    pub fn sync(&mut self, phi: &StateEstimator) -> Result<()> {
        self.phi.copy_from(phi)?;
        self.age = 0;
        Ok(())
    }
}

/// The two discovery policies with their optimizers and reset scores.
#[derive(Debug, Clone)]
pub struct PolicyPair {
    pub policies: [GaussianPolicy; 2],
    pub optimizers: [AdamState; 2],
    /// Running sums of weighted intrinsic reward and sample counts over the
    /// current reset window.
    pub score_sums: [f64; 2],
    pub score_counts: [usize; 2],
}

impl PolicyPair {
    pub fn new(first: GaussianPolicy, second: GaussianPolicy, adam: AdamConfig) -> Self {
        let optimizers = [AdamState::new(adam, &first.params), AdamState::new(adam, &second.params)];
        Self {
            policies: [first, second],
            optimizers,
            score_sums: [0.0; 2],
            score_counts: [0; 2],
        }
    }

    /// Window-mean score per policy (0 for an empty window).
    pub fn scores(&self) -> [f64; 2] {
        [0, 1].map(|i| {
            if self.score_counts[i] == 0 {
                0.0
            } else {
                self.score_sums[i] / self.score_counts[i] as f64
            }
        })
    }

    pub fn clear_scores(&mut self) {
        self.score_sums = [0.0; 2];
        self.score_counts = [0; 2];
    }

    /// Re-initializes policy `index` (0-based) and its optimizer, and
    /// zeroes both score accumulators.
    pub fn reset(&mut self, index: usize, seed: u64) {
        self.policies[index].reset_params(seed);
        self.optimizers[index].reset();
        self.clear_scores();
    }
}

/// Concatenates row blocks; used to assemble batches.
pub fn stack_rows(rows: &[ArrayView2<f64>]) -> Array2<f64> {
    concatenate(Axis(0), rows).expect("rows share a width")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use xsrl_autodiff::{check_gradients, gaussian_log_density, Tolerance};

    fn dims() -> ModelDims {
        ModelDims {
            obs: 32,
            action: 2,
            state: 20,
        }
    }

    fn small_nets() -> NetConfig {
        NetConfig {
            alpha_hidden: vec![6, 5],
            alpha_out: 4,
            beta_hidden: vec![5, 4, 3],
            gamma_hidden: vec![5, 6, 4],
            omega_hidden: vec![3, 5, 6],
            inverse_hidden: vec![5, 6, 4],
            policy_hidden: vec![5, 6, 4],
        }
    }

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn table_sizes_give_expected_widths() {
        let nets = NetConfig::default();
        let phi = StateEstimator::zeros(dims(), &nets);
        assert_eq!(phi.alpha.layers().last().unwrap().output, 30);
        assert_eq!(phi.beta.layers().last().unwrap().output, 22);
        assert_eq!(phi.gamma.layers().last().unwrap().output, 20);
        let hidden: Vec<usize> = phi.gamma.layers()[1..].iter().map(|l| l.input).collect();
        assert_eq!(hidden, vec![128, 512, 128]);
        let inv = DenseModel::zeros("inverse", 40, &nets.inverse_hidden, 2);
        let inv_hidden: Vec<usize> = inv.params.layers()[1..].iter().map(|l| l.input).collect();
        assert_eq!(inv_hidden, vec![128, 512, 128]);
    }

    #[test]
    fn zero_estimator_outputs_zero() {
        let phi = StateEstimator::zeros(dims(), &NetConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = phi
            .predict(rand_mat(&mut rng, 3, 32).view(), rand_mat(&mut rng, 3, 20).view(), rand_mat(&mut rng, 3, 2).view())
            .unwrap();
        assert_eq!(out.dim(), (3, 20));
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn estimator_rejects_wrong_dims() {
        let phi = StateEstimator::zeros(dims(), &small_nets());
        let err = phi
            .predict(Array2::zeros((1, 31)).view(), Array2::zeros((1, 20)).view(), Array2::zeros((1, 2)).view())
            .unwrap_err();
        assert!(err.to_string().contains("observation"));
    }

    #[test]
    fn graph_and_inference_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = StateEstimator::new(dims(), &small_nets(), &mut rng);
        let (o, s, a) = (rand_mat(&mut rng, 4, 32), rand_mat(&mut rng, 4, 20), rand_mat(&mut rng, 4, 2));
        let mut g = Graph::new();
        let b = phi.bind(&mut g, false);
        let (oi, si, ai) = (g.constant(o.clone()), g.constant(s.clone()), g.constant(a.clone()));
        let y = phi.forward(&mut g, &b, oi, si, ai).unwrap();
        let direct = phi.predict(o.view(), s.view(), a.view()).unwrap();
        assert!(g.value(y).iter().zip(direct.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn zero_omega_predicts_zero() {
        let omega = DenseModel::zeros("omega", 20, &[32, 256, 1024], 32);
        let out = omega.predict(Array2::ones((2, 20)).view()).unwrap();
        assert_eq!(out.dim(), (2, 32));
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_inverse_predicts_zero_on_equal_states() {
        let inv = DenseModel::zeros("inverse", 40, &[128, 512, 128], 2);
        let s = Array2::from_elem((1, 20), 0.3);
        let mut g = Graph::new();
        let b = inv.params.bind(&mut g, false);
        let (sn, si) = (g.constant(s.clone()), g.constant(s));
        let y = inverse_forward(&inv, &mut g, &b, sn, si).unwrap();
        assert_eq!(g.value(y), &Array2::<f64>::zeros((1, 2)));
    }

    #[test]
    fn zero_noise_gives_mean_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pi = GaussianPolicy::discovery("pi1", dims(), &small_nets(), &mut rng);
        let s = rand_mat(&mut rng, 5, 20);
        let (a, _) = pi.act(s.view(), Array2::zeros((5, 2)).view()).unwrap();
        let (mean, _) = pi.distribution(s.view()).unwrap();
        assert_eq!(a, mean);
    }

    #[test]
    fn standard_normal_policy_log_density() {
        // zero weights: μ = 0, log σ = 0 → σ = 1
        let pi = GaussianPolicy::zeros("pi", 20, &[4, 4], 2, DISCOVERY_LOG_SIGMA);
        let s = Array2::zeros((1, 20));
        let (a, lp) = pi.act(s.view(), array![[1.0, -1.0]].view()).unwrap();
        assert_eq!(a, array![[1.0, -1.0]]);
        let expected = 2.0 * (-0.5 * (2.0 * std::f64::consts::PI).ln()) - 1.0;
        assert!((lp[[0, 0]] - expected).abs() < 1e-12);
    }

    #[test]
    fn graph_log_density_matches_independent_pdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pi = GaussianPolicy::discovery("pi1", dims(), &small_nets(), &mut rng);
        let s = rand_mat(&mut rng, 16, 20);
        let eps = rand_mat(&mut rng, 16, 2);
        let mut g = Graph::new();
        let b = pi.params.bind(&mut g, true);
        let (si, ei) = (g.constant(s.clone()), g.constant(eps));
        let sample = pi.sample(&mut g, &b, si, ei).unwrap();
        let (mean, sigma) = pi.distribution(s.view()).unwrap();
        for r in 0..16 {
            let a: Vec<f64> = g.value(sample.action).row(r).to_vec();
            let lp = gaussian_log_density(&a, mean.row(r).as_slice().unwrap(), sigma.row(r).as_slice().unwrap());
            assert!((lp - g.value(sample.log_prob)[[r, 0]]).abs() <= 1e-10);
        }
    }

    #[test]
    fn policy_mean_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pi = GaussianPolicy::discovery("pi1", dims(), &small_nets(), &mut rng);
        let s = rand_mat(&mut rng, 3, 20);
        let eps = rand_mat(&mut rng, 3, 2);
        let inputs: Vec<Array2<f64>> = pi.params.values().cloned().collect();
        let report = check_gradients(
            &inputs,
            |g, ids| {
                let b = BoundParams { ids: ids.to_vec() };
                let (si, ei) = (g.constant(s.clone()), g.constant(eps.clone()));
                let sample = pi.sample(g, &b, si, ei).expect("valid shapes");
                let total = g.concat(&[sample.action, sample.log_prob])?;
                let n = g.squared_norm(total)?;
                g.mean_rows(n)
            },
            Tolerance::default(),
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn sync_makes_clone_identical_and_training_makes_it_differ() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nets = small_nets();
        let mut phi = StateEstimator::new(dims(), &nets, &mut rng);
        let mut clone = CloneHandle::new(&phi, &nets);
        assert_eq!(clone.age(), 0);
        for (a, b) in phi.param_sets().iter().zip(clone.estimator().param_sets()) {
            assert_eq!(a.entries().iter().map(|e| &e.1).collect::<Vec<_>>(), b.entries().iter().map(|e| &e.1).collect::<Vec<_>>());
        }
        phi.gamma.values_mut().next().unwrap()[[0, 0]] += 0.1;
        clone.tick();
        assert_eq!(clone.age(), 1);
        assert_ne!(phi.gamma.get("l0.w"), clone.estimator().gamma.get("l0.w"));
        clone.sync(&phi).unwrap();
        assert_eq!(phi.gamma.get("l0.w"), clone.estimator().gamma.get("l0.w"));
        assert_eq!(clone.age(), 0);
    }

    #[test]
    fn policy_reset_is_seeded_and_clears_optimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = GaussianPolicy::discovery("pi1", dims(), &small_nets(), &mut rng);
        let b = GaussianPolicy::discovery("pi2", dims(), &small_nets(), &mut rng);
        let mut pair = PolicyPair::new(a, b, AdamConfig::default());
        let grads: Vec<_> = pair.policies[0].params.values().map(|v| Array2::ones(v.dim())).collect();
        pair.optimizers[0].update(&mut pair.policies[0].params, &grads).unwrap();
        pair.score_sums = [3.0, 1.0];
        pair.score_counts = [1, 1];
        let untouched = pair.policies[1].clone();
        pair.reset(0, 99);
        let mut again = pair.policies[0].clone();
        again.reset_params(99);
        assert_eq!(again, pair.policies[0]);
        assert_eq!(pair.optimizers[0].step_count(), 0);
        assert!(pair.optimizers[0].first_moments().iter().all(|m| m.iter().all(|&x| x == 0.0)));
        assert_eq!(pair.scores(), [0.0, 0.0]);
        assert_eq!(pair.policies[1], untouched);
    }
}
