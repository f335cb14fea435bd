//! The latent-strategy random-utility model.
//!
//! A consumer facing a choice set evaluates each outlet under one of `S`
//! decision strategies; which strategy is adopted depends on trip context
//! through a logit selection component. Outlet choice probabilities are the
//! strategy-probability-weighted mixture of the per-strategy logits.
//!
//! Everything here is a pure function; the estimation, analysis and
//! simulation modules all evaluate probabilities exclusively through this
//! module.

use thiserror::Error;

/// Number of outlet-utility predictors: detour, direct, comp, aggl, quality.
pub const N_FEATURES: usize = 5;
/// Number of strategy-utility terms: constant, aware, regular, morning, morning-commute.
pub const N_CONTEXT: usize = 5;

pub const FEATURE_NAMES: [&str; N_FEATURES] = ["detour", "direct", "comp", "aggl", "quality"];
pub const CONTEXT_NAMES: [&str; N_CONTEXT] =
    ["constant", "aware", "regular", "morning", "morning_commute"];

/// Predictors of one outlet's utility as seen by one consumer.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct OutletFeatures {
    /// Relative extra distance of deviating via the outlet.
    pub detour: f64,
    /// Distance from the consumer's position to the outlet, km.
    pub direct: f64,
    /// Local competitor count.
    pub comp: f64,
    /// Agglomeration accessibility index.
    pub aggl: f64,
    /// Composite quality score.
    pub quality: f64,
}

impl OutletFeatures {
    pub fn new(detour: f64, direct: f64, comp: f64, aggl: f64, quality: f64) -> Self {
        Self { detour, direct, comp, aggl, quality }
    }

    pub fn as_array(&self) -> [f64; N_FEATURES] {
        [self.detour, self.direct, self.comp, self.aggl, self.quality]
    }
}

/// Trip characteristics driving strategy selection.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct StrategyContext {
    /// Route travelled at least three times per week.
    pub regular: bool,
    /// Aware of the purchase need before departing.
    pub aware_before: bool,
    /// Trip commenced in the morning.
    pub morning: bool,
}

impl StrategyContext {
    pub fn new(regular: bool, aware_before: bool, morning: bool) -> Self {
        Self { regular, aware_before, morning }
    }

    /// Design vector (constant, aware, regular, morning, morning-commute interaction).
    pub fn design(&self) -> [f64; N_CONTEXT] {
        let a = self.aware_before as u8 as f64;
        let r = self.regular as u8 as f64;
        let m = self.morning as u8 as f64;
        [1.0, a, r, m, a * r * m]
    }
}

/// All estimable parameters of a latent `S`-strategy model.
///
/// `betas[s]` holds the outlet-utility coefficients for strategy `s`;
/// `alphas[s-1]` holds the strategy-utility coefficients of strategy `s`
/// relative to strategy 0, whose utility is normalized to zero. A
/// single-strategy set has no alphas.
///
/// Canonical ordering sorts strategies by detour coefficient, descending,
/// which pins down class labels that are otherwise interchangeable.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSet {
    betas: Vec<[f64; N_FEATURES]>,
    alphas: Vec<[f64; N_CONTEXT]>,
}

impl CoefficientSet {
    pub fn new(
        betas: Vec<[f64; N_FEATURES]>,
        alphas: Vec<[f64; N_CONTEXT]>,
    ) -> Result<Self, ChoiceError> {
        if betas.is_empty() {
            return Err(ChoiceError::NoStrategies);
        }
        if alphas.len() + 1 != betas.len() {
            return Err(ChoiceError::AlphaShape { strategies: betas.len(), alphas: alphas.len() });
        }
        let finite = betas.iter().flatten().chain(alphas.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(ChoiceError::NonFinite);
        }
        Ok(Self { betas, alphas })
    }

    pub fn single(beta: [f64; N_FEATURES]) -> Self {
        Self { betas: vec![beta], alphas: Vec::new() }
    }

    pub fn two_strategy(
        beta_first: [f64; N_FEATURES],
        beta_second: [f64; N_FEATURES],
        alpha: [f64; N_CONTEXT],
    ) -> Self {
        Self { betas: vec![beta_first, beta_second], alphas: vec![alpha] }
    }

    pub fn n_strategies(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, s: usize) -> &[f64; N_FEATURES] {
        &self.betas[s]
    }

    pub fn betas(&self) -> &[[f64; N_FEATURES]] {
        &self.betas
    }

    /// Strategy-utility coefficients of strategy `s >= 1` relative to strategy 0.
    pub fn alpha(&self, s: usize) -> &[f64; N_CONTEXT] {
        &self.alphas[s - 1]
    }

    pub fn alphas(&self) -> &[[f64; N_CONTEXT]] {
        &self.alphas
    }

    /// Reorders strategies into canonical order (detour coefficient
    /// descending) and re-expresses the alphas against the new baseline.
    pub fn canonicalize(&self) -> Self {
        let s = self.n_strategies();
        if s == 1 {
            return self.clone();
        }
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| {
            self.betas[b][0].partial_cmp(&self.betas[a][0]).unwrap_or(std::cmp::Ordering::Equal)
        });
        // implicit per-strategy utility rows with strategy 0 as the old baseline
        let zero = [0.0; N_CONTEXT];
        let row = |s: usize| if s == 0 { &zero } else { &self.alphas[s - 1] };
        let betas: Vec<_> = order.iter().map(|&s| self.betas[s]).collect();
        let base = *row(order[0]);
        let alphas: Vec<[f64; N_CONTEXT]> = order[1..]
            .iter()
            .map(|&s| {
                let mut a = *row(s);
                for (v, b) in a.iter_mut().zip(base.iter()) {
                    *v -= b;
                }
                a
            })
            .collect();
        Self { betas, alphas }
    }
}

/// Probability distribution over strategies; entries sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyDistribution(Vec<f64>);

impl StrategyDistribution {
    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn probability(&self, s: usize) -> f64 {
        self.0[s]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Deterministic outlet utility: the dot product of strategy coefficients
/// and outlet features.
pub fn systematic_utility(beta: &[f64; N_FEATURES], features: &OutletFeatures) -> f64 {
    let f = features.as_array();
    beta.iter().zip(f.iter()).map(|(b, x)| b * x).sum()
}

/// Utility of a non-baseline strategy for a trip context.
pub fn strategy_utility(alpha: &[f64; N_CONTEXT], context: &StrategyContext) -> f64 {
    let z = context.design();
    alpha.iter().zip(z.iter()).map(|(a, x)| a * x).sum()
}

/// Probability that each strategy is adopted, given the trip context.
/// Strategy 0 is the baseline with utility zero.
pub fn strategy_probabilities(
    coeffs: &CoefficientSet,
    context: &StrategyContext,
) -> StrategyDistribution {
    let utilities: Vec<f64> = std::iter::once(0.0)
        .chain(coeffs.alphas().iter().map(|a| strategy_utility(a, context)))
        .collect();
    StrategyDistribution(softmax(&utilities))
}

/// Logit probabilities of each outlet in the choice set under one strategy.
pub fn conditional_choice_probabilities(
    beta: &[f64; N_FEATURES],
    features: &[OutletFeatures],
) -> Result<Vec<f64>, ChoiceError> {
    if features.is_empty() {
        return Err(ChoiceError::EmptyChoiceSet);
    }
    let utilities: Vec<f64> = features.iter().map(|f| systematic_utility(beta, f)).collect();
    Ok(softmax(&utilities))
}

/// Mixture outlet choice probabilities: strategy-weighted conditionals.
pub fn choice_probabilities(
    coeffs: &CoefficientSet,
    context: &StrategyContext,
    features: &[OutletFeatures],
) -> Result<Vec<f64>, ChoiceError> {
    if features.is_empty() {
        return Err(ChoiceError::EmptyChoiceSet);
    }
    let q = strategy_probabilities(coeffs, context);
    let mut mixture = vec![0.0; features.len()];
    for (s, beta) in coeffs.betas().iter().enumerate() {
        let conditional = conditional_choice_probabilities(beta, features)?;
        let qs = q.probability(s);
        for (m, p) in mixture.iter_mut().zip(conditional.iter()) {
            *m += qs * p;
        }
    }
    Ok(mixture)
}

/// Posterior strategy membership after observing the chosen outlet:
/// `posterior(s) ∝ Q(s|z) * P(chosen|s)`.
pub fn posterior_strategy(
    coeffs: &CoefficientSet,
    context: &StrategyContext,
    features: &[OutletFeatures],
    chosen: usize,
) -> Result<StrategyDistribution, ChoiceError> {
    if features.is_empty() {
        return Err(ChoiceError::EmptyChoiceSet);
    }
    if chosen >= features.len() {
        return Err(ChoiceError::IndexOutOfRange { index: chosen, len: features.len() });
    }
    let q = strategy_probabilities(coeffs, context);
    let mut weights = Vec::with_capacity(coeffs.n_strategies());
    for (s, beta) in coeffs.betas().iter().enumerate() {
        let conditional = conditional_choice_probabilities(beta, features)?;
        weights.push(q.probability(s) * conditional[chosen]);
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(StrategyDistribution(weights))
}

/// Numerically stable softmax (max-subtraction).
pub fn softmax(utilities: &[f64]) -> Vec<f64> {
    let max = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = utilities.iter().map(|u| (u - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Log-softmax over `utilities`, plus the log of the normalizing sum.
/// Shared by the estimator so that likelihoods stay in the log domain.
pub fn log_softmax(utilities: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(utilities);
    utilities.iter().map(|u| u - lse).collect()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

#[derive(Debug, Error)]
pub enum ChoiceError {
    #[error("choice set is empty")]
    EmptyChoiceSet,
    #[error("chosen index {index} out of range for {len} outlets")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("a coefficient set needs at least one strategy")]
    NoStrategies,
    #[error("{strategies} strategies require {} alpha vectors, got {alphas}", strategies - 1)]
    AlphaShape { strategies: usize, alphas: usize },
    #[error("coefficients must be finite")]
    NonFinite,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn feats(rows: &[[f64; 5]]) -> Vec<OutletFeatures> {
        rows.iter().map(|r| OutletFeatures::new(r[0], r[1], r[2], r[3], r[4])).collect()
    }

    #[test]
    fn utility_zero_features() {
        let f = OutletFeatures::new(0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(systematic_utility(&[-0.34, -0.93, -0.03, -1.0, 0.13], &f), 0.0);
    }

    #[test]
    fn utility_sample_means() {
        let f = OutletFeatures::new(0.46, 3.23, 4.0, 1.10, 87.61);
        let beta = demo::two_strategy_coefficients().beta(0).to_owned();
        assert_relative_eq!(systematic_utility(&beta, &f), 7.0090, epsilon = 1e-4);
    }

    #[test]
    fn utility_projection() {
        let f = OutletFeatures::new(9.0, 9.0, 9.0, 9.0, 86.24);
        assert_relative_eq!(systematic_utility(&[0.0, 0.0, 0.0, 0.0, 1.0], &f), 86.24);
    }

    #[test]
    fn strategy_utility_constant_only() {
        let coeffs = demo::two_strategy_coefficients();
        let z = StrategyContext::new(false, false, false);
        assert_relative_eq!(strategy_utility(coeffs.alpha(1), &z), -1.40, epsilon = 1e-12);
    }

    #[test]
    fn strategy_utility_full_context() {
        let coeffs = demo::two_strategy_coefficients();
        let z = StrategyContext::new(true, true, true);
        assert_relative_eq!(strategy_utility(coeffs.alpha(1), &z), -0.17, epsilon = 1e-12);
    }

    #[test]
    fn strategy_utility_zero_alpha() {
        let z = StrategyContext::new(true, false, true);
        assert_eq!(strategy_utility(&[0.0; 5], &z), 0.0);
    }

    #[test]
    fn strategy_probabilities_balanced() {
        let coeffs = CoefficientSet::two_strategy([0.0; 5], [0.0; 5], [0.0; 5]);
        let q = strategy_probabilities(&coeffs, &StrategyContext::default());
        assert_relative_eq!(q.probability(0), 0.5, epsilon = 1e-12);
        assert_relative_eq!(q.probability(1), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn strategy_probabilities_logistic() {
        let coeffs = demo::two_strategy_coefficients();
        let q = strategy_probabilities(&coeffs, &StrategyContext::new(true, true, true));
        assert_relative_eq!(q.probability(1), 0.4576, epsilon = 1e-4);
        let q0 = strategy_probabilities(&coeffs, &StrategyContext::default());
        assert_relative_eq!(q0.probability(1), 0.1978, epsilon = 1e-4);
    }

    #[test]
    fn conditional_equal_utilities() {
        let p = conditional_choice_probabilities(
            &[0.0, -1.0, 0.0, 0.0, 0.0],
            &feats(&[[0.0, 2.0, 0.0, 0.0, 0.0], [0.0, 2.0, 0.0, 0.0, 0.0]]),
        )
        .unwrap();
        assert_relative_eq!(p[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn conditional_unit_gap() {
        let p = conditional_choice_probabilities(
            &[0.0, 0.0, 0.0, 0.0, 1.0],
            &feats(&[[0.0, 0.0, 0.0, 0.0, 1.0], [0.0; 5]]),
        )
        .unwrap();
        assert_relative_eq!(p[0], 0.7311, epsilon = 1e-4);
        assert_relative_eq!(p[1], 0.2689, epsilon = 1e-4);
    }

    #[test]
    fn conditional_single_outlet() {
        let p = conditional_choice_probabilities(&[1.0; 5], &feats(&[[1.0; 5]])).unwrap();
        assert_eq!(p, vec![1.0]);
    }

    #[test]
    fn conditional_empty_choice_set() {
        assert!(matches!(
            conditional_choice_probabilities(&[0.0; 5], &[]),
            Err(ChoiceError::EmptyChoiceSet)
        ));
    }

    #[test]
    fn mixture_arithmetic() {
        // Q = (0.5, 0.5) with conditionals (0.8, 0.2) and (0.2, 0.8)
        let gap = (0.8f64 / 0.2).ln();
        let coeffs = CoefficientSet::two_strategy(
            [0.0, 0.0, 0.0, 0.0, gap],
            [0.0, 0.0, 0.0, 0.0, -gap],
            [0.0; 5],
        );
        let p = choice_probabilities(
            &coeffs,
            &StrategyContext::default(),
            &feats(&[[0.0, 0.0, 0.0, 0.0, 1.0], [0.0; 5]]),
        )
        .unwrap();
        assert_relative_eq!(p[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(p[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_mixture_is_conditional() {
        let coeffs = CoefficientSet::two_strategy(
            [-1.0, 0.0, 0.0, 0.0, 0.5],
            [3.0, 0.0, 0.0, 0.0, -0.5],
            [-500.0, 0.0, 0.0, 0.0, 0.0], // strategy 1 never adopted
        );
        let features = feats(&[[1.0, 0.0, 0.0, 0.0, 2.0], [0.5, 0.0, 0.0, 0.0, 1.0]]);
        let p = choice_probabilities(&coeffs, &StrategyContext::default(), &features).unwrap();
        let c = conditional_choice_probabilities(coeffs.beta(0), &features).unwrap();
        assert_relative_eq!(p[0], c[0], epsilon = 1e-12);
    }

    #[test]
    fn posterior_bayes_by_hand() {
        // Q = (0.5, 0.5), P(chosen|0) = 0.8, P(chosen|1) = 0.2
        let gap = (0.8f64 / 0.2).ln();
        let coeffs = CoefficientSet::two_strategy(
            [0.0, 0.0, 0.0, 0.0, gap],
            [0.0, 0.0, 0.0, 0.0, -gap],
            [0.0; 5],
        );
        let features = feats(&[[0.0, 0.0, 0.0, 0.0, 1.0], [0.0; 5]]);
        let post =
            posterior_strategy(&coeffs, &StrategyContext::default(), &features, 0).unwrap();
        assert_relative_eq!(post.probability(0), 0.8, epsilon = 1e-12);
        assert_relative_eq!(post.probability(1), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn posterior_degenerate_prior() {
        let coeffs = CoefficientSet::two_strategy(
            [1.0; 5],
            [0.5; 5],
            [-700.0, 0.0, 0.0, 0.0, 0.0],
        );
        let features = feats(&[[0.1; 5], [0.2; 5]]);
        let post =
            posterior_strategy(&coeffs, &StrategyContext::default(), &features, 1).unwrap();
        assert_relative_eq!(post.probability(0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn posterior_equal_likelihood_is_prior() {
        let coeffs = CoefficientSet::two_strategy([0.3; 5], [0.3; 5], [0.8, 0.1, 0.0, 0.0, 0.0]);
        let features = feats(&[[0.1; 5], [0.2; 5]]);
        let z = StrategyContext::new(false, true, false);
        let post = posterior_strategy(&coeffs, &z, &features, 1).unwrap();
        let prior = strategy_probabilities(&coeffs, &z);
        assert_relative_eq!(post.probability(0), prior.probability(0), epsilon = 1e-12);
        assert_relative_eq!(post.probability(1), prior.probability(1), epsilon = 1e-12);
    }

    #[test]
    fn posterior_index_out_of_range() {
        let coeffs = CoefficientSet::single([0.0; 5]);
        let features = feats(&[[0.0; 5]]);
        assert!(matches!(
            posterior_strategy(&coeffs, &StrategyContext::default(), &features, 3),
            Err(ChoiceError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn posterior_marginalization_identity() {
        // Q(s) * P(j|s) = posterior(s|j) * P(j)
        let coeffs = demo::two_strategy_coefficients();
        let z = StrategyContext::new(true, false, true);
        let features = feats(&[
            [0.2, 3.0, 1.0, 1.1, 86.0],
            [0.0, 4.5, 0.0, 0.9, 90.0],
            [1.4, 1.0, 2.0, 1.2, 82.0],
        ]);
        let p = choice_probabilities(&coeffs, &z, &features).unwrap();
        let q = strategy_probabilities(&coeffs, &z);
        for j in 0..features.len() {
            let post = posterior_strategy(&coeffs, &z, &features, j).unwrap();
            for s in 0..2 {
                let cond = conditional_choice_probabilities(coeffs.beta(s), &features).unwrap();
                assert_relative_eq!(
                    q.probability(s) * cond[j],
                    post.probability(s) * p[j],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn awareness_raises_destination_share() {
        // the awareness main effect and interaction are both positive
        let coeffs = demo::two_strategy_coefficients();
        for regular in [false, true] {
            for morning in [false, true] {
                let aware = strategy_probabilities(
                    &coeffs,
                    &StrategyContext::new(regular, true, morning),
                );
                let unaware = strategy_probabilities(
                    &coeffs,
                    &StrategyContext::new(regular, false, morning),
                );
                assert!(aware.probability(1) > unaware.probability(1));
            }
        }
    }

    #[test]
    fn canonicalize_orders_by_detour_and_flips_alpha() {
        let coeffs = CoefficientSet::two_strategy(
            [-10.84, 0.77, -0.31, 6.38, 0.18],
            [-0.34, -0.93, -0.03, -1.00, 0.13],
            [1.40, -1.30, 0.67, 0.47, -1.07],
        );
        let canon = coeffs.canonicalize();
        assert_relative_eq!(canon.beta(0)[0], -0.34);
        assert_relative_eq!(canon.beta(1)[0], -10.84);
        assert_relative_eq!(canon.alpha(1)[0], -1.40, epsilon = 1e-12);
        // mixture probabilities are invariant under relabeling
        let z = StrategyContext::new(true, true, false);
        let features = feats(&[[0.3, 2.0, 1.0, 1.0, 85.0], [0.1, 3.0, 0.0, 1.2, 88.0]]);
        let p1 = choice_probabilities(&coeffs, &z, &features).unwrap();
        let p2 = choice_probabilities(&canon, &z, &features).unwrap();
        for (a, b) in p1.iter().zip(p2.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn extreme_utilities_stay_finite() {
        let features = feats(&[[700.0, 0.0, 0.0, 0.0, 0.0], [-700.0, 0.0, 0.0, 0.0, 0.0]]);
        let p = conditional_choice_probabilities(&[1.0, 0.0, 0.0, 0.0, 0.0], &features).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn softmax_translation_invariant(
            us in proptest::collection::vec(-50.0f64..50.0, 2..6),
            shift in -100.0f64..100.0,
        ) {
            let p1 = softmax(&us);
            let shifted: Vec<f64> = us.iter().map(|u| u + shift).collect();
            let p2 = softmax(&shifted);
            for (a, b) in p1.iter().zip(p2.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn equal_betas_collapse_to_single_strategy(
            beta in proptest::array::uniform5(-2.0f64..2.0),
            alpha in proptest::array::uniform5(-3.0f64..3.0),
            rows in proptest::collection::vec(proptest::array::uniform5(-1.0f64..1.0), 1..5),
        ) {
            let coeffs = CoefficientSet::two_strategy(beta, beta, alpha);
            let features = feats(&rows);
            let z = StrategyContext::new(true, false, true);
            let mixture = choice_probabilities(&coeffs, &z, &features).unwrap();
            let single = conditional_choice_probabilities(&beta, &features).unwrap();
            for (a, b) in mixture.iter().zip(single.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn probabilities_sum_to_one(
            rows in proptest::collection::vec(proptest::array::uniform5(-5.0f64..5.0), 1..8),
            aware in proptest::bool::ANY,
        ) {
            let coeffs = demo::two_strategy_coefficients();
            let z = StrategyContext::new(true, aware, false);
            let p = choice_probabilities(&coeffs, &z, &feats(&rows)).unwrap();
            let total: f64 = p.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
