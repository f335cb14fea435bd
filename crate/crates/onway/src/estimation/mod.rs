//! Maximum-likelihood estimation of the latent-strategy model and its
//! benchmark family.
//!
//! The mixture log-likelihood, its analytic gradient, a BFGS/multistart
//! driver, observed-information standard errors and information criteria.
//! Per-observation contributions are evaluated in parallel over fixed-size
//! chunks and combined in a fixed order, so results are identical across
//! thread counts.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::choice::{
    log_sum_exp, CoefficientSet, StrategyContext, N_CONTEXT, N_FEATURES,
};
use crate::spatial::{detour_fraction, point_of_awareness, Market, Point, Site, SpatialError};

mod bfgs;
pub mod mixed;

pub use bfgs::{minimize, BfgsOptions, BfgsOutcome};

/// One observed trip with its chosen outlet.
#[derive(Clone, Debug)]
pub struct Observation {
    pub id: String,
    /// Zone id of the trip origin.
    pub origin: String,
    /// Zone id of the main destination.
    pub destination: String,
    /// Outlet id the consumer refueled at.
    pub chosen: String,
    pub aware_before: bool,
    /// Minutes between becoming aware and entering the outlet; zero for
    /// aware-before trips.
    pub minutes_aware: f64,
    pub regular: bool,
    pub morning: bool,
    /// Exact awareness location when known (synthetic data records it);
    /// otherwise the position is back-projected from `minutes_aware`.
    pub awareness_point: Option<Point>,
    /// Extra columns carried through for segmentation (gender, tank level, ...).
    pub covariates: BTreeMap<String, String>,
}

impl Observation {
    pub fn strategy_context(&self) -> StrategyContext {
        StrategyContext::new(self.regular, self.aware_before, self.morning)
    }
}

/// The model family being estimated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelFamily {
    /// Latent mixture of `strategies >= 2` logit strategies.
    Latent { strategies: usize },
    /// One strategy, all five predictors.
    Single,
    /// Distance and quality only, chooser fixed at the origin.
    Gravity,
    /// Gravity plus local-competition and agglomeration terms.
    ExtendedGravity,
    /// Single strategy with independent normal random coefficients,
    /// estimated by simulated maximum likelihood.
    Mixed { draws: usize, seed: u64 },
}

impl ModelFamily {
    pub fn label(&self) -> String {
        match self {
            ModelFamily::Latent { strategies } => format!("latent{strategies}"),
            ModelFamily::Single => "single".into(),
            ModelFamily::Gravity => "gravity".into(),
            ModelFamily::ExtendedGravity => "xgravity".into(),
            ModelFamily::Mixed { .. } => "mixed".into(),
        }
    }

    /// Free-parameter count.
    pub fn k_params(&self) -> usize {
        match self {
            ModelFamily::Latent { strategies } => N_FEATURES * strategies + N_CONTEXT * (strategies - 1),
            ModelFamily::Single => N_FEATURES,
            ModelFamily::Gravity => 2,
            ModelFamily::ExtendedGravity => 4,
            ModelFamily::Mixed { .. } => 2 * N_FEATURES,
        }
    }

    fn beta_mask(&self) -> [bool; N_FEATURES] {
        match self {
            ModelFamily::Gravity => [false, true, false, false, true],
            ModelFamily::ExtendedGravity => [false, true, true, true, true],
            _ => [true; N_FEATURES],
        }
    }

    fn uses_awareness_position(&self) -> bool {
        !matches!(self, ModelFamily::Gravity | ModelFamily::ExtendedGravity)
    }
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    /// Gradient infinity-norm tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Multistart count for mixture and mixed families.
    pub n_starts: usize,
    pub seed: u64,
    /// Optional choice-set pruning: outlets farther than this many km from
    /// the consumer's position are dropped (the chosen outlet is always kept).
    pub distance_cap_km: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 500, n_starts: 8, seed: 0, distance_cap_km: None }
    }
}

/// Fitted model.
#[derive(Clone, Debug)]
pub struct EstimationResult {
    pub family: ModelFamily,
    /// Point estimates, canonical strategy order. Coefficients outside the
    /// family's specification are zero.
    pub coefficients: CoefficientSet,
    /// Random-coefficient standard deviations (mixed family only).
    pub random_sd: Option<[f64; N_FEATURES]>,
    pub loglik: f64,
    /// One entry per free parameter, in [`Self::parameter_names`] order;
    /// absent when the observed information is singular.
    pub std_errors: Option<Vec<f64>>,
    /// Diagnostic when standard errors are absent.
    pub se_diagnostic: Option<String>,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    pub grad_norm: f64,
    pub n_obs: usize,
    pub k_params: usize,
    pub starts_used: usize,
}

impl EstimationResult {
    /// Names of the free parameters, matching the packing order used
    /// throughout estimation.
    pub fn parameter_names(&self) -> Vec<String> {
        parameter_names(&self.family)
    }

    /// Point estimates in packing order.
    pub fn parameters(&self) -> Vec<f64> {
        let layout = FamilyLayout::for_family(&self.family);
        match &self.family {
            ModelFamily::Mixed { .. } => {
                let mut theta: Vec<f64> = self.coefficients.beta(0).to_vec();
                theta.extend(self.random_sd.expect("mixed result carries sds"));
                theta
            }
            _ => layout.pack(&self.coefficients),
        }
    }
}

pub fn parameter_names(family: &ModelFamily) -> Vec<String> {
    use crate::choice::{CONTEXT_NAMES, FEATURE_NAMES};
    let mut names = Vec::new();
    match family {
        ModelFamily::Latent { strategies } => {
            for s in 0..*strategies {
                for f in FEATURE_NAMES {
                    names.push(format!("beta{s}_{f}"));
                }
            }
            for s in 1..*strategies {
                for c in CONTEXT_NAMES {
                    names.push(format!("alpha{s}_{c}"));
                }
            }
        }
        ModelFamily::Single => {
            for f in FEATURE_NAMES {
                names.push(format!("beta0_{f}"));
            }
        }
        ModelFamily::Gravity | ModelFamily::ExtendedGravity => {
            let mask = family.beta_mask();
            for (f, used) in FEATURE_NAMES.iter().zip(mask.iter()) {
                if *used {
                    names.push(format!("beta0_{f}"));
                }
            }
        }
        ModelFamily::Mixed { .. } => {
            for f in FEATURE_NAMES {
                names.push(format!("mean_{f}"));
            }
            for f in FEATURE_NAMES {
                names.push(format!("sd_{f}"));
            }
        }
    }
    names
}

/// Pre-assembled per-observation design: feature rows for every outlet in
/// the (possibly capped) choice set, the chosen index, and the context
/// design vector.
#[derive(Clone, Debug)]
pub struct ChoiceData {
    /// Flattened features, `n_obs * n_outlets * N_FEATURES`, outlet-major.
    features: Vec<f64>,
    chosen: Vec<usize>,
    context: Vec<[f64; N_CONTEXT]>,
    n_outlets: usize,
    /// Per-observation choice sets when a distance cap is active.
    choice_sets: Option<Vec<Vec<u32>>>,
}

impl ChoiceData {
    /// Builds the design for the latent/single/mixed families: the consumer
    /// evaluates outlets from the awareness position and detour is defined.
    pub fn from_awareness_positions(
        dataset: &[Observation],
        market: &Market,
        distance_cap_km: Option<f64>,
    ) -> Result<Self, EstimationError> {
        Self::build(dataset, market, true, distance_cap_km)
    }

    /// Builds the design for gravity families: the consumer is fixed at the
    /// origin and the detour column is zero.
    pub fn from_origins(
        dataset: &[Observation],
        market: &Market,
        distance_cap_km: Option<f64>,
    ) -> Result<Self, EstimationError> {
        Self::build(dataset, market, false, distance_cap_km)
    }

    fn build(
        dataset: &[Observation],
        market: &Market,
        awareness_position: bool,
        distance_cap_km: Option<f64>,
    ) -> Result<Self, EstimationError> {
        if dataset.is_empty() {
            return Err(EstimationError::EmptyDataset);
        }
        let n_outlets = market.outlets.len();
        let mut features = Vec::with_capacity(dataset.len() * n_outlets * N_FEATURES);
        let mut chosen = Vec::with_capacity(dataset.len());
        let mut context = Vec::with_capacity(dataset.len());
        let mut choice_sets = distance_cap_km.map(|_| Vec::with_capacity(dataset.len()));

        for obs in dataset {
            let data_err = |reason: String| EstimationError::Data { id: obs.id.clone(), reason };
            let origin_idx = market
                .zone_index(&obs.origin)
                .ok_or_else(|| data_err(format!("unknown origin zone {:?}", obs.origin)))?;
            let dest_idx = market
                .zone_index(&obs.destination)
                .ok_or_else(|| data_err(format!("unknown destination zone {:?}", obs.destination)))?;
            let chosen_idx = market
                .chosen_index(&obs.chosen)
                .ok_or_else(|| data_err(format!("unknown chosen outlet {:?}", obs.chosen)))?;

            let origin_site = market.zone_site(origin_idx);
            let dest_site = market.zone_site(dest_idx);

            // Position: origin for gravity modes and aware-before trips, the
            // recorded or back-projected awareness point otherwise.
            let position: Site<'_> = if !awareness_position || obs.aware_before {
                origin_site
            } else if let Some(p) = obs.awareness_point {
                if market.distances.is_matrix() {
                    return Err(data_err(
                        "matrix-mode distances cannot measure from an en-route awareness point".into(),
                    ));
                }
                Site::free(p)
            } else {
                let chosen_pt = market.outlets[chosen_idx].location;
                let p = point_of_awareness(
                    origin_site.point,
                    chosen_pt,
                    false,
                    obs.minutes_aware,
                    &market.distances,
                    market.speed,
                )
                .map_err(|e| wrap_spatial(e, &obs.id))?;
                Site::free(p)
            };

            let mut kept: Vec<u32> = Vec::new();
            for (j, outlet) in market.outlets.iter().enumerate() {
                let outlet_site = Site::named(&outlet.id, outlet.location);
                let direct = market
                    .distances
                    .between(position, outlet_site)
                    .map_err(|e| wrap_spatial(e, &obs.id))?;
                let detour = if awareness_position {
                    detour_fraction(position, outlet_site, dest_site, &market.distances)
                        .map_err(|e| wrap_spatial(e, &obs.id))?
                } else {
                    0.0
                };
                features.extend_from_slice(&[
                    detour,
                    direct,
                    market.comp(j) as f64,
                    market.aggl(j),
                    outlet.quality,
                ]);
                if let Some(cap) = distance_cap_km {
                    if direct <= cap || j == chosen_idx {
                        kept.push(j as u32);
                    }
                }
            }
            if let Some(sets) = choice_sets.as_mut() {
                sets.push(kept);
            }
            chosen.push(chosen_idx);
            context.push(obs.strategy_context().design());
        }
        Ok(Self { features, chosen, context, n_outlets, choice_sets })
    }

    pub fn n_obs(&self) -> usize {
        self.chosen.len()
    }

    pub fn n_outlets(&self) -> usize {
        self.n_outlets
    }

    fn feature_row(&self, i: usize, j: usize) -> &[f64] {
        let base = (i * self.n_outlets + j) * N_FEATURES;
        &self.features[base..base + N_FEATURES]
    }

    /// Assembled features of outlet `j` as seen by observation `i`.
    pub fn outlet_features(&self, i: usize, j: usize) -> crate::choice::OutletFeatures {
        let r = self.feature_row(i, j);
        crate::choice::OutletFeatures::new(r[0], r[1], r[2], r[3], r[4])
    }

    fn alternatives(&self, i: usize) -> AlternativeIter<'_> {
        match &self.choice_sets {
            Some(sets) => AlternativeIter::Subset(sets[i].iter()),
            None => AlternativeIter::Full(0..self.n_outlets as u32),
        }
    }

    fn n_alternatives(&self, i: usize) -> usize {
        match &self.choice_sets {
            Some(sets) => sets[i].len(),
            None => self.n_outlets,
        }
    }
}

enum AlternativeIter<'a> {
    Full(std::ops::Range<u32>),
    Subset(std::slice::Iter<'a, u32>),
}

impl Iterator for AlternativeIter<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        match self {
            AlternativeIter::Full(r) => r.next().map(|j| j as usize),
            AlternativeIter::Subset(it) => it.next().map(|j| *j as usize),
        }
    }
}

impl Market {
    fn chosen_index(&self, id: &str) -> Option<usize> {
        self.outlet_index(id)
    }
}

fn wrap_spatial(e: SpatialError, id: &str) -> EstimationError {
    match e {
        SpatialError::DegenerateTrip => EstimationError::DegenerateTrip { id: id.to_string() },
        other => EstimationError::Data { id: id.to_string(), reason: other.to_string() },
    }
}

/// Packing between the free parameter vector and a [`CoefficientSet`].
#[derive(Clone, Debug)]
struct FamilyLayout {
    strategies: usize,
    beta_mask: [bool; N_FEATURES],
}

impl FamilyLayout {
    fn for_family(family: &ModelFamily) -> Self {
        let strategies = match family {
            ModelFamily::Latent { strategies } => *strategies,
            _ => 1,
        };
        Self { strategies, beta_mask: family.beta_mask() }
    }

    fn n_free_beta(&self) -> usize {
        self.beta_mask.iter().filter(|m| **m).count()
    }

    fn n_params(&self) -> usize {
        self.n_free_beta() * self.strategies + N_CONTEXT * (self.strategies - 1)
    }

    fn unpack(&self, theta: &[f64]) -> CoefficientSet {
        let nb = self.n_free_beta();
        let mut betas = Vec::with_capacity(self.strategies);
        for s in 0..self.strategies {
            let mut beta = [0.0; N_FEATURES];
            let mut t = s * nb;
            for (d, used) in self.beta_mask.iter().enumerate() {
                if *used {
                    beta[d] = theta[t];
                    t += 1;
                }
            }
            betas.push(beta);
        }
        let mut alphas = Vec::with_capacity(self.strategies - 1);
        let base = nb * self.strategies;
        for s in 0..self.strategies - 1 {
            let mut alpha = [0.0; N_CONTEXT];
            alpha.copy_from_slice(&theta[base + s * N_CONTEXT..base + (s + 1) * N_CONTEXT]);
            alphas.push(alpha);
        }
        CoefficientSet::new(betas, alphas).expect("layout produces a valid set")
    }

    fn pack(&self, coeffs: &CoefficientSet) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.n_params());
        for beta in coeffs.betas() {
            for (d, used) in self.beta_mask.iter().enumerate() {
                if *used {
                    theta.push(beta[d]);
                }
            }
        }
        for alpha in coeffs.alphas() {
            theta.extend_from_slice(alpha);
        }
        theta
    }
}

const CHUNK: usize = 256;

/// Mixture log-likelihood of `coeffs` on `dataset` (log-sum-exp throughout).
pub fn log_likelihood(
    coeffs: &CoefficientSet,
    dataset: &[Observation],
    market: &Market,
) -> Result<f64, EstimationError> {
    let data = ChoiceData::from_awareness_positions(dataset, market, None)?;
    Ok(loglik_only(coeffs, &data))
}

/// Analytic gradient of the mixture log-likelihood with respect to all free
/// parameters (strategy betas, then alphas).
pub fn log_likelihood_gradient(
    coeffs: &CoefficientSet,
    dataset: &[Observation],
    market: &Market,
) -> Result<Vec<f64>, EstimationError> {
    let data = ChoiceData::from_awareness_positions(dataset, market, None)?;
    let layout = FamilyLayout { strategies: coeffs.n_strategies(), beta_mask: [true; N_FEATURES] };
    let theta = layout.pack(coeffs);
    Ok(loglik_and_grad(&theta, &data, &layout).1)
}

/// Log-likelihood of a packed parameter vector on pre-assembled data.
pub(crate) fn loglik_only(coeffs: &CoefficientSet, data: &ChoiceData) -> f64 {
    let layout =
        FamilyLayout { strategies: coeffs.n_strategies(), beta_mask: [true; N_FEATURES] };
    let theta = layout.pack(coeffs);
    loglik_and_grad(&theta, data, &layout).0
}

/// Chunked, deterministic evaluation of the mixture log-likelihood and its
/// gradient. Chunks are processed in parallel and reduced in index order, so
/// the result does not depend on the thread count.
fn loglik_and_grad(theta: &[f64], data: &ChoiceData, layout: &FamilyLayout) -> (f64, Vec<f64>) {
    let n = data.n_obs();
    let n_chunks = n.div_ceil(CHUNK);
    let parts: Vec<(f64, Vec<f64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(n);
            chunk_loglik_grad(theta, data, layout, lo, hi)
        })
        .collect();
    let mut ll = 0.0;
    let mut grad = vec![0.0; layout.n_params()];
    for (l, g) in parts {
        ll += l;
        for (acc, v) in grad.iter_mut().zip(g.iter()) {
            *acc += v;
        }
    }
    (ll, grad)
}

fn chunk_loglik_grad(
    theta: &[f64],
    data: &ChoiceData,
    layout: &FamilyLayout,
    lo: usize,
    hi: usize,
) -> (f64, Vec<f64>) {
    let coeffs = layout.unpack(theta);
    let s_count = layout.strategies;
    let nb = layout.n_free_beta();
    let mut ll = 0.0;
    let mut grad = vec![0.0; layout.n_params()];

    let mut logp_chosen = vec![0.0; s_count];
    let mut log_q = vec![0.0; s_count];
    let mut utilities: Vec<f64> = Vec::new();
    // per-strategy expected features and chosen-row features
    let mut xbar = vec![[0.0; N_FEATURES]; s_count];
    let mut probs: Vec<f64> = Vec::new();

    for i in lo..hi {
        let chosen = data.chosen[i];
        let n_alt = data.n_alternatives(i);

        for (s, beta) in coeffs.betas().iter().enumerate() {
            utilities.clear();
            let mut chosen_pos = usize::MAX;
            for (pos, j) in data.alternatives(i).enumerate() {
                let row = data.feature_row(i, j);
                let u: f64 = beta.iter().zip(row.iter()).map(|(b, x)| b * x).sum();
                utilities.push(u);
                if j == chosen {
                    chosen_pos = pos;
                }
            }
            debug_assert!(chosen_pos != usize::MAX, "chosen outlet missing from choice set");
            let lse = log_sum_exp(&utilities);
            logp_chosen[s] = utilities[chosen_pos] - lse;

            probs.clear();
            probs.extend(utilities.iter().map(|u| (u - lse).exp()));
            let xb = &mut xbar[s];
            *xb = [0.0; N_FEATURES];
            for (pos, j) in data.alternatives(i).enumerate() {
                let row = data.feature_row(i, j);
                let p = probs[pos];
                for d in 0..N_FEATURES {
                    xb[d] += p * row[d];
                }
            }
        }
        debug_assert_eq!(probs.len(), n_alt);

        let z = &data.context[i];
        log_q[0] = 0.0;
        for s in 1..s_count {
            let a = coeffs.alpha(s);
            log_q[s] = a.iter().zip(z.iter()).map(|(a, x)| a * x).sum();
        }
        let lse_q = log_sum_exp(&log_q);
        for v in log_q.iter_mut() {
            *v -= lse_q;
        }

        let joint: Vec<f64> =
            (0..s_count).map(|s| logp_chosen[s] + log_q[s]).collect();
        let li = log_sum_exp(&joint);
        ll += li;

        let chosen_row = data.feature_row(i, chosen);
        for s in 0..s_count {
            let posterior = (joint[s] - li).exp();
            // beta score: posterior-weighted logit score
            let mut t = s * nb;
            for (d, used) in layout.beta_mask.iter().enumerate() {
                if *used {
                    grad[t] += posterior * (chosen_row[d] - xbar[s][d]);
                    t += 1;
                }
            }
            // alpha score: posterior minus prior
            if s >= 1 {
                let q = log_q[s].exp();
                let base = nb * s_count + (s - 1) * N_CONTEXT;
                for (c, zc) in z.iter().enumerate() {
                    grad[base + c] += (posterior - q) * zc;
                }
            }
        }
    }
    (ll, grad)
}

/// `aic = 2k - 2LL`, `bic = k ln(n) - 2LL`.
pub fn information_criteria(loglik: f64, k_params: usize, n_obs: usize) -> (f64, f64) {
    let k = k_params as f64;
    let aic = 2.0 * k - 2.0 * loglik;
    let bic = k * (n_obs as f64).ln() - 2.0 * loglik;
    (aic, bic)
}

/// Standard errors from the inverse observed information, obtained by
/// central-differencing the analytic gradient of the negative log-likelihood.
fn standard_errors_from<G>(theta: &[f64], mut neg_grad: G) -> Result<Vec<f64>, String>
where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let p = theta.len();
    let mut hessian = DMatrix::<f64>::zeros(p, p);
    let mut work = theta.to_vec();
    for j in 0..p {
        let h = 1e-5 * theta[j].abs().max(1.0);
        work[j] = theta[j] + h;
        let gp = neg_grad(&work);
        work[j] = theta[j] - h;
        let gm = neg_grad(&work);
        work[j] = theta[j];
        for i in 0..p {
            hessian[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    // symmetrize before inverting
    let hessian = (&hessian + hessian.transpose()) * 0.5;
    invert_information(hessian)
}

pub(crate) fn invert_information(information: DMatrix<f64>) -> Result<Vec<f64>, String> {
    let p = information.nrows();
    let svd = information.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-10) {
        return Err(format!(
            "observed information is singular (condition ~ {:.1e})",
            smax / smin.max(f64::MIN_POSITIVE)
        ));
    }
    let inverse = svd.pseudo_inverse(0.0).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(p);
    for i in 0..p {
        let v = inverse[(i, i)];
        if !v.is_finite() || v <= 0.0 {
            return Err(format!(
                "observed information is not positive definite (diagonal {i} of inverse = {v:.3e})"
            ));
        }
        out.push(v.sqrt());
    }
    Ok(out)
}

/// Standard errors of a latent-family coefficient set at `coeffs`.
pub fn standard_errors(
    coeffs: &CoefficientSet,
    dataset: &[Observation],
    market: &Market,
) -> Result<Vec<f64>, EstimationError> {
    let data = ChoiceData::from_awareness_positions(dataset, market, None)?;
    let layout = FamilyLayout { strategies: coeffs.n_strategies(), beta_mask: [true; N_FEATURES] };
    let theta = layout.pack(coeffs);
    standard_errors_from(&theta, |t| {
        loglik_and_grad(t, &data, &layout).1.iter().map(|g| -g).collect()
    })
    .map_err(|diagnostic| EstimationError::SingularHessian { diagnostic })
}

/// Fits `family` on `dataset` by (simulated) maximum likelihood.
///
/// Concave single-strategy shapes use one start from zero. Latent mixtures
/// run a multistart: the first start perturbs the fitted single-strategy
/// coefficients by alternating +/-20% per class, the remaining starts use
/// seeded random perturbations, and the best final log-likelihood wins.
/// Failure to reach tolerance is reported through `converged`, never as an
/// error.
pub fn fit(
    family: &ModelFamily,
    dataset: &[Observation],
    market: &Market,
    options: &FitOptions,
) -> Result<EstimationResult, EstimationError> {
    if dataset.is_empty() {
        return Err(EstimationError::EmptyDataset);
    }
    match family {
        ModelFamily::Latent { strategies } if *strategies < 2 => {
            Err(EstimationError::InvalidFamily {
                reason: "a latent family needs at least 2 strategies; use the single family for 1"
                    .into(),
            })
        }
        ModelFamily::Mixed { draws, .. } if *draws == 0 => Err(EstimationError::InvalidFamily {
            reason: "mixed family needs at least 1 draw".into(),
        }),
        ModelFamily::Mixed { draws, seed } => {
            mixed::fit_mixed(dataset, market, *draws, *seed, options)
        }
        _ => fit_fixed_coefficient(family, dataset, market, options),
    }
}

fn fit_fixed_coefficient(
    family: &ModelFamily,
    dataset: &[Observation],
    market: &Market,
    options: &FitOptions,
) -> Result<EstimationResult, EstimationError> {
    let data = if family.uses_awareness_position() {
        ChoiceData::from_awareness_positions(dataset, market, options.distance_cap_km)?
    } else {
        ChoiceData::from_origins(dataset, market, options.distance_cap_km)?
    };
    let layout = FamilyLayout::for_family(family);
    let bfgs_options = BfgsOptions { tol: options.tol, max_iter: options.max_iter };

    let objective = |theta: &[f64]| {
        let (ll, g) = loglik_and_grad(theta, &data, &layout);
        (-ll, g.into_iter().map(|v| -v).collect::<Vec<f64>>())
    };

    let single_layout = FamilyLayout { strategies: 1, beta_mask: layout.beta_mask };
    let single_start = vec![0.0; single_layout.n_params()];
    let (best, starts_used) = if layout.strategies == 1 {
        (minimize(objective, &single_start, &bfgs_options), 1)
    } else {
        // anchor the multistart on the fitted single-strategy model
        let single_obj = |theta: &[f64]| {
            let (ll, g) = loglik_and_grad(theta, &data, &single_layout);
            (-ll, g.into_iter().map(|v| -v).collect::<Vec<f64>>())
        };
        let anchor = minimize(single_obj, &single_start, &bfgs_options).x;
        let starts = latent_starts(&anchor, &layout, options);
        let n_starts = starts.len();
        let mut best: Option<BfgsOutcome> = None;
        for start in starts {
            let outcome = minimize(objective, &start, &bfgs_options);
            if best.as_ref().map_or(true, |b| outcome.f < b.f) {
                best = Some(outcome);
            }
        }
        (best.expect("at least one start"), n_starts)
    };

    let coefficients = layout.unpack(&best.x).canonicalize();
    let theta_canonical = layout.pack(&coefficients);
    let loglik = -best.f;
    let std_errors = standard_errors_from(&theta_canonical, |t| {
        loglik_and_grad(t, &data, &layout).1.iter().map(|g| -g).collect()
    });
    let (std_errors, se_diagnostic) = match std_errors {
        Ok(se) => (Some(se), None),
        Err(diag) => (None, Some(diag)),
    };
    let k_params = family.k_params();
    let (aic, bic) = information_criteria(loglik, k_params, data.n_obs());
    Ok(EstimationResult {
        family: family.clone(),
        coefficients,
        random_sd: None,
        loglik,
        std_errors,
        se_diagnostic,
        aic,
        bic,
        converged: best.converged,
        grad_norm: best.grad_norm_inf,
        n_obs: data.n_obs(),
        k_params,
        starts_used,
    })
}

fn latent_starts(anchor: &[f64], layout: &FamilyLayout, options: &FitOptions) -> Vec<Vec<f64>> {
    let nb = layout.n_free_beta();
    let s_count = layout.strategies;
    let n_alpha = N_CONTEXT * (s_count - 1);
    let mut starts = Vec::with_capacity(options.n_starts.max(1));

    let mut first = Vec::with_capacity(layout.n_params());
    for s in 0..s_count {
        let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
        first.extend(anchor.iter().map(|b| b * (1.0 + 0.2 * sign)));
    }
    first.extend(std::iter::repeat(0.0).take(n_alpha));
    starts.push(first);

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for _ in 1..options.n_starts.max(1) {
        let mut start = Vec::with_capacity(layout.n_params());
        for _ in 0..s_count {
            for b in anchor.iter().take(nb) {
                start.push(b * (1.0 + rng.gen_range(-0.5..0.5)));
            }
        }
        for _ in 0..n_alpha {
            start.push(rng.gen_range(-1.0..1.0));
        }
        starts.push(start);
    }
    starts
}

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("dataset is empty")]
    EmptyDataset,
    /// The consumer's position coincides with the destination for this trip.
    #[error("observation {id}: degenerate trip, detour undefined")]
    DegenerateTrip { id: String },
    #[error("observation {id}: {reason}")]
    Data { id: String, reason: String },
    #[error("invalid model family: {reason}")]
    InvalidFamily { reason: String },
    #[error("standard errors unavailable: {diagnostic}")]
    SingularHessian { diagnostic: String },
}
