//! Alternating discrete optimization of the binary semantic embedding.
//!
//! Each iteration updates, in order, the label projection `W`, the balanced
//! auxiliary codes `B`, the binary codes `H` and the feature projection `P`,
//! every update being the closed-form minimizer with the others held fixed.
//! Iteration stops once `H` stops changing or after `max_iters` rounds.

mod model;
mod steps;

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabelMatrix};
use crate::linalg::{gram_deviation, row_sum_inf, sign};
use crate::similarity::{SimilarityOracle, DEFAULT_BLOCK};
use crate::{LbseError, Result};

pub use model::{IterationRecord, LbseModel, StepTimings};
pub use steps::{
    b_step_spectrum, b_step_target, h_step_target, label_fit, objective_terms, ridge_fit, solve_b,
    solve_b_from_target, solve_h, solve_p, solve_w, ObjectiveTerms, EIGEN_CUTOFF,
};

/// Hyperparameters. Defaults follow the published settings
/// (α=0.5, β=5, γ=λ=1e-5).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbseConfig {
    pub code_length: usize,
    /// Weight of the label regression term.
    pub alpha: f64,
    /// Weight tying `H` to the balanced auxiliary codes `B`.
    pub beta: f64,
    /// Weight of the feature regression term.
    pub gamma: f64,
    /// Ridge penalty on `P`.
    pub lambda: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Column block width for products against the similarity matrix.
    pub block: usize,
    /// Constraint tolerance used by the per-iteration diagnostics.
    pub tol: f64,
}

impl Default for LbseConfig {
    fn default() -> Self {
        LbseConfig {
            code_length: 32,
            alpha: 0.5,
            beta: 5.0,
            gamma: 1e-5,
            lambda: 1e-5,
            max_iters: 15,
            seed: 0,
            block: DEFAULT_BLOCK,
            tol: 1e-8,
        }
    }
}

impl LbseConfig {
    /// Checks the configuration on its own.
    pub fn validate(&self) -> Result<()> {
        if self.code_length == 0 {
            return Err(LbseError::InvalidConfig("code length must be positive".into()));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("lambda", self.lambda),
            ("tol", self.tol),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LbseError::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.max_iters == 0 {
            return Err(LbseError::InvalidConfig("max_iters must be >= 1".into()));
        }
        if self.block == 0 {
            return Err(LbseError::InvalidConfig("block must be >= 1".into()));
        }
        Ok(())
    }

    /// Checks the configuration against a training set.
    pub fn validate_for(&self, data: &Dataset) -> Result<()> {
        self.validate()?;
        if self.code_length < data.num_classes() {
            return Err(LbseError::InvalidConfig(format!(
                "code length {} is smaller than class count {} (L >= C required)",
                self.code_length,
                data.num_classes()
            )));
        }
        if data.len() <= self.code_length {
            return Err(LbseError::InvalidConfig(format!(
                "need more training samples than bits (N={}, L={})",
                data.len(),
                self.code_length
            )));
        }
        Ok(())
    }
}

/// Current values of all optimization variables.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// `L x N`, entries in {-1, +1}.
    pub h: DMatrix<f64>,
    /// `L x N` auxiliary codes with `B 1 = 0`, `B Bᵀ = N I`.
    pub b: DMatrix<f64>,
    /// `C x L`, row-orthonormal.
    pub w: DMatrix<f64>,
    /// `D x L`.
    pub p: DMatrix<f64>,
}

impl TrainState {
    pub fn objective_terms(
        &self,
        data: &Dataset,
        y: &LabelMatrix,
        sim: &SimilarityOracle,
        cfg: &LbseConfig,
    ) -> Result<ObjectiveTerms> {
        objective_terms(&self.h, &self.b, &self.w, &self.p, data.features(), y, sim, cfg)
    }
}

/// Joint objective value for `state`.
pub fn objective(
    state: &TrainState,
    data: &Dataset,
    y: &LabelMatrix,
    sim: &SimilarityOracle,
    cfg: &LbseConfig,
) -> Result<f64> {
    state.objective_terms(data, y, sim, cfg).map(|t| t.total())
}

/// Constraint residuals observed right after one iteration's updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResiduals {
    /// `max |W Wᵀ - I|`.
    pub w_orthonormality: f64,
    /// `||B 1||_inf`.
    pub b_balance: f64,
    /// `max |B Bᵀ - N I|`.
    pub b_decorrelation: f64,
    /// Every entry of `H` is exactly ±1.
    pub h_binary: bool,
}

impl ConstraintResiduals {
    pub fn measure(state: &TrainState) -> Self {
        ConstraintResiduals {
            w_orthonormality: gram_deviation(&state.w, 1.0),
            b_balance: row_sum_inf(&state.b),
            b_decorrelation: gram_deviation(&state.b, state.b.ncols() as f64),
            h_binary: state.h.iter().all(|&v| v == 1.0 || v == -1.0),
        }
    }

    /// Whether the residuals are within `tol` on the scales used for each
    /// constraint: absolute for `W`, `tol √N` for balance, `tol N` for
    /// decorrelation.
    pub fn within(&self, tol: f64, n: usize) -> bool {
        let nf = n as f64;
        self.h_binary
            && self.w_orthonormality <= tol
            && self.b_balance <= tol * nf.sqrt()
            && self.b_decorrelation <= tol * nf
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub objective_per_iter: Vec<f64>,
    pub bits_flipped_per_iter: Vec<usize>,
    /// 1-based iteration at which `H` stopped changing.
    pub converged_at: Option<usize>,
    pub constraints_per_iter: Vec<ConstraintResiduals>,
}

impl TrainStats {
    pub fn iterations(&self) -> usize {
        self.objective_per_iter.len()
    }
}

/// Called after each full iteration with the 1-based index and the state.
pub trait IterationObserver {
    fn observe(&mut self, iteration: usize, state: &TrainState);
}

impl<F: FnMut(usize, &TrainState)> IterationObserver for F {
    fn observe(&mut self, iteration: usize, state: &TrainState) {
        self(iteration, state)
    }
}

/// Seeded standard-Gaussian signs, the default starting codes.
pub fn initial_codes(code_length: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(code_length, n, |_, _| sign(rng.sample::<f64, _>(StandardNormal)))
}

/// Seed for the random complement drawn in the B-step of `iteration`
/// (0 is the initialization).
fn b_step_seed(seed: u64, iteration: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64 + 1);
    rng.random()
}

/// Trains from the default seeded initialization.
pub fn train(data: &Dataset, cfg: &LbseConfig) -> Result<(LbseModel, TrainStats)> {
    let h0 = initial_codes(cfg.code_length, data.len(), cfg.seed);
    train_from(data, cfg, h0, &mut |_: usize, _: &TrainState| {})
}

/// Trains from explicit initial codes `h0`, reporting each iterate to
/// `observer`.
pub fn train_from(
    data: &Dataset,
    cfg: &LbseConfig,
    h0: DMatrix<f64>,
    observer: &mut dyn IterationObserver,
) -> Result<(LbseModel, TrainStats)> {
    cfg.validate_for(data)?;
    if h0.shape() != (cfg.code_length, data.len()) {
        return Err(LbseError::DimensionMismatch(format!(
            "initial codes are {:?}, expected {:?}",
            h0.shape(),
            (cfg.code_length, data.len())
        )));
    }
    let x = data.features();
    let y = data.label_matrix();
    let sim = SimilarityOracle::from_dataset(data);
    let n = data.len();

    let h = h0.map(sign);
    let b = solve_b(&h, &sim, cfg.beta, b_step_seed(cfg.seed, 0), cfg.block)?;
    let w = solve_w(&h, &y)?;
    let p = solve_p(x, &h, cfg.lambda)?;
    let mut state = TrainState { h, b, w, p };

    let mut stats = TrainStats::default();
    let mut history = Vec::new();

    for it in 1..=cfg.max_iters {
        let mut timings = StepTimings::default();

        let t = Instant::now();
        state.w = solve_w(&state.h, &y)?;
        timings.w = t.elapsed().as_secs_f64();

        let t = Instant::now();
        state.b = solve_b(&state.h, &sim, cfg.beta, b_step_seed(cfg.seed, it), cfg.block)?;
        timings.b = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let new_h = solve_h(&state.b, &state.w, &y, &state.p, x, &sim, cfg)?;
        let flipped = new_h.iter().zip(state.h.iter()).filter(|(a, b)| a != b).count();
        state.h = new_h;
        timings.h = t.elapsed().as_secs_f64();

        let t = Instant::now();
        state.p = solve_p(x, &state.h, cfg.lambda)?;
        timings.p = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let obj = objective(&state, data, &y, &sim, cfg)?;
        timings.objective = t.elapsed().as_secs_f64();

        let residuals = ConstraintResiduals::measure(&state);
        if !residuals.within(cfg.tol, n) {
            log::warn!("iteration {it}: constraint residuals exceed tolerance {}: {residuals:?}", cfg.tol);
        }
        log::debug!("iteration {it}: objective {obj:.6e}, {flipped} bits flipped");

        stats.objective_per_iter.push(obj);
        stats.bits_flipped_per_iter.push(flipped);
        stats.constraints_per_iter.push(residuals);
        history.push(IterationRecord {
            objective: obj,
            timings,
        });
        observer.observe(it, &state);

        if flipped == 0 {
            stats.converged_at = Some(it);
            break;
        }
    }

    let model = LbseModel::new(state.p, state.w, cfg.clone(), history)?;
    Ok((model, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_clusters;

    #[test]
    fn defaults_match_published_settings() {
        let c = LbseConfig::default();
        assert_eq!((c.alpha, c.beta, c.gamma, c.lambda), (0.5, 5.0, 1e-5, 1e-5));
        assert_eq!(c.max_iters, 15);
    }

    #[test]
    fn config_rejects_too_few_bits() {
        let d = synth_clusters(10, 5, 4, 0.1, 1).unwrap();
        let cfg = LbseConfig { code_length: 4, ..LbseConfig::default() };
        assert!(matches!(train(&d, &cfg), Err(LbseError::InvalidConfig(_))));
    }

    #[test]
    fn config_rejects_too_few_samples() {
        let d = synth_clusters(4, 2, 4, 0.1, 1).unwrap();
        let cfg = LbseConfig { code_length: 8, ..LbseConfig::default() };
        assert!(matches!(train(&d, &cfg), Err(LbseError::InvalidConfig(_))));
    }

    #[test]
    fn config_rejects_negative_weight() {
        let cfg = LbseConfig { gamma: -1.0, ..LbseConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = LbseConfig { max_iters: 0, ..LbseConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn converges_on_separated_clusters() {
        let d = synth_clusters(50, 4, 16, 0.1, 7).unwrap();
        let cfg = LbseConfig { code_length: 16, ..LbseConfig::default() };
        let (model, stats) = train(&d, &cfg).unwrap();
        let at = stats.converged_at.expect("fixed point reached");
        assert!(at <= 15);
        assert_eq!(*stats.bits_flipped_per_iter.last().unwrap(), 0);
        assert_eq!(stats.iterations(), at);
        assert_eq!(model.history().len(), at);
    }

    #[test]
    fn same_seed_same_model_bytes() {
        let d = synth_clusters(30, 3, 8, 0.2, 1).unwrap();
        let cfg = LbseConfig { code_length: 16, seed: 42, ..LbseConfig::default() };
        let (a, sa) = train(&d, &cfg).unwrap();
        let (b, sb) = train(&d, &cfg).unwrap();
        assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
        assert_eq!(sa, sb);
    }

    #[test]
    fn initial_codes_are_signs() {
        let h = initial_codes(5, 9, 3);
        assert!(h.iter().all(|&v| v == 1.0 || v == -1.0));
        assert_eq!(h, initial_codes(5, 9, 3));
    }
}
