//! Conjugate Gibbs sampler for the same mixture model, used as the
//! estimation oracle when validating the variational approximation.
//!
//! Each sweep draws profile assignments from their categorical full
//! conditional (computed in the log domain), then the mixing proportions
//! from a Dirichlet, then every correct-response probability from a Beta
//! with hard counts. Chains run independently with seeds derived from the
//! master seed, so results do not depend on how chains are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribute::{build_gmatrices, Flavor, GMatrix, ProfileSpace, QMatrix};
use crate::error::{Error, Result};
use crate::priors::Priors;
use crate::rhat::split_rhat;
use crate::responses::Responses;
use crate::seeds::sub_seed;

/// Chain layout for the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_chains: usize,
    /// Total sweeps per chain, burn-in included.
    pub n_iter: usize,
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in draw.
    pub thin: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_chains: 3,
            n_iter: 5000,
            burn_in: 2000,
            thin: 1,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 1 {
            return Err(Error::invalid("need at least one chain"));
        }
        if self.n_iter <= self.burn_in {
            return Err(Error::invalid(format!(
                "n_iter ({}) must exceed burn_in ({})",
                self.n_iter, self.burn_in
            )));
        }
        if self.thin < 1 {
            return Err(Error::invalid("thin must be at least 1"));
        }
        Ok(())
    }

    pub fn kept_per_chain(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

/// Posterior summaries over post-burn-in draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McmcSummary {
    pub theta_eap: Vec<Vec<f64>>,
    pub theta_sd: Vec<Vec<f64>>,
    pub theta_rhat: Vec<Vec<f64>>,
    pub pi_eap: Vec<f64>,
    pub pi_sd: Vec<f64>,
    pub pi_rhat: Vec<f64>,
    /// Most frequent sampled profile per examinee, lowest index on ties.
    pub profile_modes: Vec<usize>,
    pub wall_time: f64,
}

/// Summary plus retained draws (for dumps and diagnostics).
#[derive(Debug, Clone)]
pub struct GibbsRun {
    pub summary: McmcSummary,
    /// Per chain: kept draws x flattened theta parameters, row-major.
    pub theta_draws: Vec<Vec<f64>>,
    /// Per chain: kept draws x mixing proportions, row-major.
    pub pi_draws: Vec<Vec<f64>>,
    pub kept_per_chain: usize,
    /// Flat parameter index -> (item, pattern).
    pub theta_index: Vec<(usize, usize)>,
}

struct ChainOutput {
    theta: Vec<f64>,
    pi: Vec<f64>,
    z_counts: Vec<u32>,
}

pub(crate) fn draw_dirichlet<R: Rng>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).unwrap().sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    for d in &mut draws {
        *d /= total;
    }
    draws
}

pub(crate) fn draw_beta<R: Rng>(rng: &mut R, a: f64, b: f64) -> f64 {
    BetaDist::new(a, b).unwrap().sample(rng)
}

#[allow(clippy::too_many_arguments)]
fn run_chain(
    x: &Responses,
    gms: &[GMatrix],
    priors: &Priors,
    l: usize,
    p_offsets: &[usize],
    p_total: usize,
    cfg: &ChainConfig,
    chain_seed: u64,
) -> ChainOutput {
    let n = x.n_examinees();
    let n_items = gms.len();
    let kept = cfg.kept_per_chain();
    let mut rng = ChaCha20Rng::seed_from_u64(chain_seed);

    // initialize from the prior
    let mut pi = draw_dirichlet(&mut rng, &priors.delta0);
    let mut theta: Vec<Vec<f64>> = priors
        .a0
        .iter()
        .zip(&priors.b0)
        .map(|(aj, bj)| {
            aj.iter()
                .zip(bj)
                .map(|(&a, &b)| draw_beta(&mut rng, a, b))
                .collect()
        })
        .collect();

    let mut z = vec![0usize; n];
    let mut z_counts = vec![0u32; n * l];
    let mut theta_out = Vec::with_capacity(kept * p_total);
    let mut pi_out = Vec::with_capacity(kept * l);

    let mut base = vec![0.0f64; l];
    let mut diff = vec![0.0f64; n_items * l];
    let mut buf = vec![0.0f64; l];
    let mut occupancy = vec![0u32; l];

    for sweep in 1..=cfg.n_iter {
        // profile assignments from their categorical full conditional
        for (t, b) in base.iter_mut().enumerate() {
            *b = pi[t].ln();
        }
        for (j, g) in gms.iter().enumerate() {
            let th = &theta[j];
            let d = &mut diff[j * l..(j + 1) * l];
            for (t, &p) in g.pattern_of.iter().enumerate() {
                base[t] += (1.0 - th[p]).ln();
                d[t] = th[p].ln() - (1.0 - th[p]).ln();
            }
        }
        occupancy.iter_mut().for_each(|c| *c = 0);
        for i in 0..n {
            buf.copy_from_slice(&base);
            for (j, &xij) in x.row(i).iter().enumerate() {
                if xij == 1 {
                    let d = &diff[j * l..(j + 1) * l];
                    for (v, &dv) in buf.iter_mut().zip(d) {
                        *v += dv;
                    }
                }
            }
            let m = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in buf.iter_mut() {
                *v = (*v - m).exp();
                total += *v;
            }
            let u: f64 = rng.gen::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = l - 1;
            for (t, &w) in buf.iter().enumerate() {
                cum += w;
                if u < cum {
                    pick = t;
                    break;
                }
            }
            z[i] = pick;
            occupancy[pick] += 1;
        }

        // mixing proportions
        let alpha: Vec<f64> = priors
            .delta0
            .iter()
            .zip(&occupancy)
            .map(|(&d0, &c)| d0 + c as f64)
            .collect();
        pi = draw_dirichlet(&mut rng, &alpha);

        // correct-response probabilities from hard counts
        for (j, g) in gms.iter().enumerate() {
            let np = g.n_patterns();
            let mut successes = vec![0u32; np];
            let mut totals = vec![0u32; np];
            for (t, &p) in g.pattern_of.iter().enumerate() {
                totals[p] += occupancy[t];
            }
            for i in 0..n {
                if x.get(i, j) == 1 {
                    successes[g.pattern_of[z[i]]] += 1;
                }
            }
            for p in 0..np {
                let a = priors.a0[j][p] + successes[p] as f64;
                let b = priors.b0[j][p] + (totals[p] - successes[p]) as f64;
                theta[j][p] = draw_beta(&mut rng, a, b);
            }
        }

        if sweep > cfg.burn_in && (sweep - cfg.burn_in) % cfg.thin == 0 {
            for th in &theta {
                theta_out.extend_from_slice(th);
            }
            pi_out.extend_from_slice(&pi);
            for (i, &zi) in z.iter().enumerate() {
                z_counts[i * l + zi] += 1;
            }
        }
    }
    let _ = p_offsets;
    ChainOutput {
        theta: theta_out,
        pi: pi_out,
        z_counts,
    }
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let count = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / count;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0);
    (mean, var.sqrt())
}

/// Runs the sampler and summarizes the posterior.
pub fn gibbs_fit(
    x: &Responses,
    q: &QMatrix,
    flavor: Flavor,
    priors: &Priors,
    cfg: &ChainConfig,
) -> Result<GibbsRun> {
    let started = std::time::Instant::now();
    cfg.validate()?;
    if x.n_items() != q.n_items() {
        return Err(Error::dims(format!(
            "responses have {} items, Q-matrix has {}",
            x.n_items(),
            q.n_items()
        )));
    }
    let space = ProfileSpace::enumerate(q.levels())?;
    let gms = build_gmatrices(q, &space, flavor);
    priors.validate(&space, &gms)?;

    let l = space.len();
    let n = x.n_examinees();
    let mut p_offsets = Vec::with_capacity(gms.len());
    let mut p_total = 0usize;
    let mut theta_index = Vec::new();
    for (j, g) in gms.iter().enumerate() {
        p_offsets.push(p_total);
        for p in 0..g.n_patterns() {
            theta_index.push((j, p));
        }
        p_total += g.n_patterns();
    }

    let chain_seeds: Vec<u64> = (0..cfg.n_chains)
        .map(|c| sub_seed(cfg.seed, "gibbs-chain", c as u64))
        .collect();
    let outputs: Vec<ChainOutput> = chain_seeds
        .par_iter()
        .map(|&seed| run_chain(x, &gms, priors, l, &p_offsets, p_total, cfg, seed))
        .collect();

    let kept = cfg.kept_per_chain();
    // EAP/SD over all chains pooled
    let theta_flat_eap_sd: Vec<(f64, f64)> = (0..p_total)
        .map(|pidx| {
            let values = outputs
                .iter()
                .flat_map(|o| o.theta.iter().skip(pidx).step_by(p_total).copied())
                .collect::<Vec<f64>>();
            mean_sd(values.iter().copied())
        })
        .collect();
    let pi_eap_sd: Vec<(f64, f64)> = (0..l)
        .map(|t| {
            let values = outputs
                .iter()
                .flat_map(|o| o.pi.iter().skip(t).step_by(l).copied())
                .collect::<Vec<f64>>();
            mean_sd(values.iter().copied())
        })
        .collect();

    // convergence diagnostic per parameter
    let theta_rhat_flat: Vec<f64> = (0..p_total)
        .map(|pidx| {
            let chains: Vec<Vec<f64>> = outputs
                .iter()
                .map(|o| o.theta.iter().skip(pidx).step_by(p_total).copied().collect())
                .collect();
            split_rhat(&chains)
        })
        .collect::<Result<_>>()?;
    let pi_rhat: Vec<f64> = (0..l)
        .map(|t| {
            let chains: Vec<Vec<f64>> = outputs
                .iter()
                .map(|o| o.pi.iter().skip(t).step_by(l).copied().collect())
                .collect();
            split_rhat(&chains)
        })
        .collect::<Result<_>>()?;

    // reshape flat parameters back to per-item blocks
    let mut theta_eap = Vec::with_capacity(gms.len());
    let mut theta_sd = Vec::with_capacity(gms.len());
    let mut theta_rhat = Vec::with_capacity(gms.len());
    for (j, g) in gms.iter().enumerate() {
        let lo = p_offsets[j];
        let hi = lo + g.n_patterns();
        theta_eap.push(theta_flat_eap_sd[lo..hi].iter().map(|&(m, _)| m).collect());
        theta_sd.push(theta_flat_eap_sd[lo..hi].iter().map(|&(_, s)| s).collect());
        theta_rhat.push(theta_rhat_flat[lo..hi].to_vec());
    }

    // profile mode per examinee over pooled kept draws
    let mut profile_modes = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = 0usize;
        let mut best_count = 0u64;
        for t in 0..l {
            let count: u64 = outputs
                .iter()
                .map(|o| u64::from(o.z_counts[i * l + t]))
                .sum();
            if count > best_count {
                best = t;
                best_count = count;
            }
        }
        profile_modes.push(best);
    }

    Ok(GibbsRun {
        summary: McmcSummary {
            theta_eap,
            theta_sd,
            theta_rhat,
            pi_eap: pi_eap_sd.iter().map(|&(m, _)| m).collect(),
            pi_sd: pi_eap_sd.iter().map(|&(_, s)| s).collect(),
            pi_rhat,
            profile_modes,
            wall_time: started.elapsed().as_secs_f64(),
        },
        theta_draws: outputs.iter().map(|o| o.theta.clone()).collect(),
        pi_draws: outputs.into_iter().map(|o| o.pi).collect(),
        kept_per_chain: kept,
        theta_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::{default_priors, PriorScheme};

    fn model() -> (QMatrix, Priors) {
        let q = QMatrix::new(vec![vec![1, 0], vec![0, 1], vec![1, 1]], vec![2, 2]).unwrap();
        let space = ProfileSpace::enumerate(q.levels()).unwrap();
        let gms = build_gmatrices(&q, &space, Flavor::Collapsed);
        let priors = default_priors(&space, &gms, PriorScheme::Noninformative);
        (q, priors)
    }

    #[test]
    fn config_validation() {
        let ok = ChainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(ChainConfig { n_chains: 0, ..ok }.validate().is_err());
        assert!(ChainConfig { n_iter: 10, burn_in: 10, ..ok }.validate().is_err());
        assert!(ChainConfig { thin: 0, ..ok }.validate().is_err());
    }

    #[test]
    fn no_data_recovers_prior() {
        let (q, priors) = model();
        let x = Responses::new(0, q.n_items(), vec![]).unwrap();
        let cfg = ChainConfig {
            n_chains: 2,
            n_iter: 3000,
            burn_in: 500,
            thin: 1,
            seed: 42,
        };
        let run = gibbs_fit(&x, &q, Flavor::Collapsed, &priors, &cfg).unwrap();
        // flat Dirichlet prior: mean 1/L with MC error ~ sd/sqrt(draws)
        let l = priors.delta0.len() as f64;
        let draws = (cfg.kept_per_chain() * cfg.n_chains) as f64;
        // draws are autocorrelation-free here (pure prior sampling)
        let se = ((1.0 / l) * (1.0 - 1.0 / l) / (l + 1.0)).sqrt() / draws.sqrt();
        for &m in &run.summary.pi_eap {
            assert!((m - 1.0 / l).abs() < 4.0 * se, "pi mean {m}");
        }
        // theta priors are flat Beta: mean one half
        for m in run.summary.theta_eap.iter().flatten() {
            let se_theta = (1.0f64 / 12.0).sqrt() / draws.sqrt();
            assert!((m - 0.5).abs() < 4.0 * se_theta, "theta mean {m}");
        }
        assert!(run.summary.profile_modes.is_empty());
    }

    #[test]
    fn reproducible_across_runs() {
        let (q, priors) = model();
        let x = Responses::new(4, 3, vec![1, 0, 1, 0, 1, 0, 1, 1, 1, 0, 0, 0]).unwrap();
        let cfg = ChainConfig {
            n_chains: 2,
            n_iter: 60,
            burn_in: 20,
            thin: 2,
            seed: 7,
        };
        let a = gibbs_fit(&x, &q, Flavor::Collapsed, &priors, &cfg).unwrap();
        let b = gibbs_fit(&x, &q, Flavor::Collapsed, &priors, &cfg).unwrap();
        assert_eq!(a.theta_draws, b.theta_draws);
        assert_eq!(a.pi_draws, b.pi_draws);
        assert_eq!(a.summary.profile_modes, b.summary.profile_modes);
    }

    #[test]
    fn conditional_draws_match_closed_form_moments() {
        // moment test for the conjugate conditionals against closed-form
        // posterior moments, three MC standard errors
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let reps = 50_000;
        let (a, b) = (7.5f64, 2.5f64);
        let mean = a / (a + b);
        let sd = ((a * b) / ((a + b) * (a + b) * (a + b + 1.0))).sqrt();
        let sample_mean =
            (0..reps).map(|_| draw_beta(&mut rng, a, b)).sum::<f64>() / reps as f64;
        let se = sd / (reps as f64).sqrt();
        assert!((sample_mean - mean).abs() < 3.0 * se);

        let alpha = [2.0, 5.0, 1.0];
        let total: f64 = alpha.iter().sum();
        let mut acc = [0.0f64; 3];
        for _ in 0..reps {
            let d = draw_dirichlet(&mut rng, &alpha);
            for (s, v) in acc.iter_mut().zip(&d) {
                *s += v;
            }
        }
        for k in 0..3 {
            let mean = alpha[k] / total;
            let sd = (alpha[k] * (total - alpha[k]) / (total * total * (total + 1.0))).sqrt();
            let se = sd / (reps as f64).sqrt();
            assert!((acc[k] / reps as f64 - mean).abs() < 3.0 * se, "component {k}");
        }
    }
}
