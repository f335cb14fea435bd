//! Mixed logit by simulated maximum likelihood.
//!
//! Random coefficients are independent normals over the five predictors,
//! integrated with scrambled Halton draws mapped through the inverse normal
//! CDF. Each observation consumes its own block of the sequence, so the
//! simulated likelihood is a pure function of `(draws, seed)`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::choice::{log_sum_exp, CoefficientSet, N_FEATURES};
use crate::estimation::{
    information_criteria, minimize, BfgsOptions, ChoiceData, EstimationError, EstimationResult,
    FitOptions, ModelFamily,
};
use crate::spatial::Market;

const HALTON_PRIMES: [u64; N_FEATURES] = [2, 3, 5, 7, 11];
/// Leading Halton points are dropped; they are poorly spread.
const BURN: usize = 101;

/// Standard-normal draws for `n_obs` observations, `r` draws each.
#[derive(Clone, Debug)]
pub struct NormalDraws {
    values: Vec<f64>,
    pub draws_per_obs: usize,
}

impl NormalDraws {
    /// Scrambled-Halton normal draws. Observation `i` uses sequence indices
    /// `BURN + i*r .. BURN + (i+1)*r`, shifted per dimension by a seeded
    /// random offset (Cranley-Patterson rotation).
    pub fn scrambled_halton(n_obs: usize, r: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shifts: [f64; N_FEATURES] = std::array::from_fn(|_| rng.gen::<f64>());
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut values = vec![0.0; n_obs * r * N_FEATURES];
        values
            .par_chunks_mut(r * N_FEATURES)
            .enumerate()
            .for_each(|(i, block)| {
                for k in 0..r {
                    let index = (BURN + i * r + k) as u64;
                    for (d, prime) in HALTON_PRIMES.iter().enumerate() {
                        let u = (radical_inverse(index, *prime) + shifts[d]).fract();
                        let u = u.clamp(1e-12, 1.0 - 1e-12);
                        block[k * N_FEATURES + d] = normal.inverse_cdf(u);
                    }
                }
            });
        Self { values, draws_per_obs: r }
    }

    fn draw(&self, obs: usize, r: usize) -> &[f64] {
        let base = (obs * self.draws_per_obs + r) * N_FEATURES;
        &self.values[base..base + N_FEATURES]
    }
}

/// Van der Corput radical inverse of `index` in base `base`.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut result = 0.0;
    let mut f = 1.0 / base as f64;
    while index > 0 {
        result += f * (index % base) as f64;
        index /= base;
        f /= base as f64;
    }
    result
}

/// Simulated log-likelihood and gradient for theta = [means, sds].
pub(crate) fn simulated_loglik_grad(
    theta: &[f64],
    data: &ChoiceData,
    draws: &NormalDraws,
) -> (f64, Vec<f64>) {
    let n = data.n_obs();
    let n_chunks = n.div_ceil(super::CHUNK);
    let parts: Vec<(f64, Vec<f64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * super::CHUNK;
            let hi = ((c + 1) * super::CHUNK).min(n);
            chunk_simulated(theta, data, draws, lo, hi)
        })
        .collect();
    let mut ll = 0.0;
    let mut grad = vec![0.0; 2 * N_FEATURES];
    for (l, g) in parts {
        ll += l;
        for (acc, v) in grad.iter_mut().zip(g.iter()) {
            *acc += v;
        }
    }
    (ll, grad)
}

fn chunk_simulated(
    theta: &[f64],
    data: &ChoiceData,
    draws: &NormalDraws,
    lo: usize,
    hi: usize,
) -> (f64, Vec<f64>) {
    let r_count = draws.draws_per_obs;
    let means = &theta[..N_FEATURES];
    let sds = &theta[N_FEATURES..];
    let ln_r = (r_count as f64).ln();

    let mut ll = 0.0;
    let mut grad = vec![0.0; 2 * N_FEATURES];
    let mut utilities: Vec<f64> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    let mut logp_chosen = vec![0.0; r_count];
    let mut scores = vec![[0.0; N_FEATURES]; r_count];

    for i in lo..hi {
        let chosen = data.chosen[i];
        let chosen_row = data.feature_row(i, chosen);

        for r in 0..r_count {
            let xi = draws.draw(i, r);
            let mut beta = [0.0; N_FEATURES];
            for d in 0..N_FEATURES {
                beta[d] = means[d] + sds[d] * xi[d];
            }
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
            let lse = log_sum_exp(&utilities);
            logp_chosen[r] = utilities[chosen_pos] - lse;

            probs.clear();
            probs.extend(utilities.iter().map(|u| (u - lse).exp()));
            let mut xbar = [0.0; N_FEATURES];
            for (pos, j) in data.alternatives(i).enumerate() {
                let row = data.feature_row(i, j);
                for d in 0..N_FEATURES {
                    xbar[d] += probs[pos] * row[d];
                }
            }
            for d in 0..N_FEATURES {
                scores[r][d] = chosen_row[d] - xbar[d];
            }
        }

        let lse_r = log_sum_exp(&logp_chosen);
        ll += lse_r - ln_r;
        for r in 0..r_count {
            let w = (logp_chosen[r] - lse_r).exp();
            let xi = draws.draw(i, r);
            for d in 0..N_FEATURES {
                grad[d] += w * scores[r][d];
                grad[N_FEATURES + d] += w * scores[r][d] * xi[d];
            }
        }
    }
    (ll, grad)
}

pub(crate) fn fit_mixed(
    dataset: &[crate::estimation::Observation],
    market: &Market,
    draws: usize,
    draw_seed: u64,
    options: &FitOptions,
) -> Result<EstimationResult, EstimationError> {
    let data = ChoiceData::from_awareness_positions(dataset, market, options.distance_cap_km)?;
    let normal_draws = NormalDraws::scrambled_halton(data.n_obs(), draws, draw_seed);
    let bfgs_options = BfgsOptions { tol: options.tol, max_iter: options.max_iter };

    let objective = |theta: &[f64]| {
        let (ll, g) = simulated_loglik_grad(theta, &data, &normal_draws);
        (-ll, g.into_iter().map(|v| -v).collect::<Vec<f64>>())
    };

    // anchor on the fixed-coefficient single-strategy fit
    let single_layout = super::FamilyLayout { strategies: 1, beta_mask: [true; N_FEATURES] };
    let single_obj = |theta: &[f64]| {
        let (ll, g) = super::loglik_and_grad(theta, &data, &single_layout);
        (-ll, g.into_iter().map(|v| -v).collect::<Vec<f64>>())
    };
    let anchor = minimize(single_obj, &vec![0.0; N_FEATURES], &bfgs_options).x;

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let n_starts = options.n_starts.max(1);
    let mut best: Option<super::BfgsOutcome> = None;
    for s in 0..n_starts {
        let mut start = Vec::with_capacity(2 * N_FEATURES);
        if s == 0 {
            start.extend_from_slice(&anchor);
            start.extend(anchor.iter().map(|b| 0.5 * b.abs() + 0.1));
        } else {
            start.extend(anchor.iter().map(|b| b * (1.0 + rng.gen_range(-0.5..0.5))));
            start.extend(anchor.iter().map(|b| (0.5 * b.abs() + 0.1) * rng.gen_range(0.2..2.0)));
        }
        let outcome = minimize(objective, &start, &bfgs_options);
        if best.as_ref().map_or(true, |b| outcome.f < b.f) {
            best = Some(outcome);
        }
    }
    let best = best.expect("at least one start");

    // the likelihood depends on sds only through their magnitude
    let mut theta = best.x.clone();
    for d in N_FEATURES..2 * N_FEATURES {
        theta[d] = theta[d].abs();
    }
    let mut means = [0.0; N_FEATURES];
    means.copy_from_slice(&theta[..N_FEATURES]);
    let mut sds = [0.0; N_FEATURES];
    sds.copy_from_slice(&theta[N_FEATURES..]);

    let std_errors = super::standard_errors_from(&theta, |t| {
        simulated_loglik_grad(t, &data, &normal_draws).1.iter().map(|g| -g).collect()
    });
    let (std_errors, se_diagnostic) = match std_errors {
        Ok(se) => (Some(se), None),
        Err(diag) => (None, Some(diag)),
    };

    let family = ModelFamily::Mixed { draws, seed: draw_seed };
    let loglik = -best.f;
    let k_params = family.k_params();
    let (aic, bic) = information_criteria(loglik, k_params, data.n_obs());
    Ok(EstimationResult {
        family,
        coefficients: CoefficientSet::single(means),
        random_sd: Some(sds),
        loglik,
        std_errors,
        se_diagnostic,
        aic,
        bic,
        converged: best.converged,
        grad_norm: best.grad_norm_inf,
        n_obs: data.n_obs(),
        k_params,
        starts_used: n_starts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_2() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert_eq!(radical_inverse(4, 2), 0.125);
    }

    #[test]
    fn draws_deterministic_and_blockwise() {
        let a = NormalDraws::scrambled_halton(4, 8, 42);
        let b = NormalDraws::scrambled_halton(4, 8, 42);
        assert_eq!(a.values, b.values);
        let c = NormalDraws::scrambled_halton(4, 8, 43);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn draws_roughly_standard_normal() {
        let d = NormalDraws::scrambled_halton(1, 2000, 7);
        for dim in 0..N_FEATURES {
            let vals: Vec<f64> = (0..2000).map(|r| d.draw(0, r)[dim]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / vals.len() as f64;
            assert!(mean.abs() < 0.05, "dim {dim} mean {mean}");
            assert!((var - 1.0).abs() < 0.08, "dim {dim} var {var}");
        }
    }
}
