//! Coordinate-ascent mean-field variational estimation for the saturated
//! diagnostic classification model in its Bernoulli-mixture form.
//!
//! Each iteration updates the Beta posteriors over correct-response
//! probabilities (VM step, items dispatched across workers), the Dirichlet
//! posterior over mixing proportions, and the categorical responsibilities
//! (VE step, examinees dispatched across workers), then evaluates the
//! variational lower bound.
//!
//! Determinism contract: workers only ever write to disjoint output slots
//! (one examinee row, one item block); every floating-point reduction that
//! crosses those slots runs serially in fixed index order. Results are
//! therefore bit-identical for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::attribute::{build_gmatrices, Flavor, GMatrix, ProfileSpace, QMatrix};
use crate::error::{Error, Result};
use crate::priors::Priors;
use crate::responses::Responses;

/// Responsibility initialization.
///
/// Serializes as `"uniform"` or `{"dirichlet_seed": <u64>}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "InitWire", into = "InitWire")]
pub enum Init {
    /// Every profile equally likely for every examinee.
    Uniform,
    /// Rows drawn from a flat Dirichlet with the given seed.
    Dirichlet { seed: u64 },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum InitWire {
    Name(String),
    Seeded { dirichlet_seed: u64 },
}

impl From<Init> for InitWire {
    fn from(init: Init) -> InitWire {
        match init {
            Init::Uniform => InitWire::Name("uniform".into()),
            Init::Dirichlet { seed } => InitWire::Seeded {
                dirichlet_seed: seed,
            },
        }
    }
}

impl TryFrom<InitWire> for Init {
    type Error = String;

    fn try_from(wire: InitWire) -> std::result::Result<Init, String> {
        match wire {
            InitWire::Name(name) if name == "uniform" => Ok(Init::Uniform),
            InitWire::Name(name) => Err(format!("unknown init \"{name}\"")),
            InitWire::Seeded { dirichlet_seed } => Ok(Init::Dirichlet {
                seed: dirichlet_seed,
            }),
        }
    }
}

impl Default for Init {
    fn default() -> Self {
        Init::Uniform
    }
}

/// Stopping and parallelism settings for [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbConfig {
    /// Stop when the absolute change in the bound falls below this.
    pub tol: f64,
    /// Iteration cap; hitting it counts as non-convergence.
    pub max_iter: usize,
    /// Worker count for the VE and VM steps.
    pub cores: usize,
    pub init: Init,
}

impl Default for VbConfig {
    fn default() -> Self {
        VbConfig {
            tol: 1e-4,
            max_iter: 2000,
            cores: 8,
            init: Init::Uniform,
        }
    }
}

/// Mutable state of the variational approximation.
#[derive(Debug, Clone)]
pub struct VariationalState {
    /// Examinee count.
    pub n: usize,
    /// Profile count `L`.
    pub l: usize,
    /// Responsibilities, `N x L` row-major; rows sum to one.
    pub r: Vec<f64>,
    /// Dirichlet parameters over mixing proportions.
    pub delta_star: Vec<f64>,
    /// Beta `a` parameters per item and item-specific pattern.
    pub a_star: Vec<Vec<f64>>,
    /// Beta `b` parameters per item and item-specific pattern.
    pub b_star: Vec<Vec<f64>>,
    /// Bound value per iteration.
    pub vlb_trace: Vec<f64>,
    /// Per-row sum of `r * ln r`, maintained by the VE step.
    pub(crate) row_neg_entropy: Vec<f64>,
}

impl VariationalState {
    /// State with responsibilities initialized and all posterior
    /// parameters equal to their priors.
    pub fn initial(n: usize, priors: &Priors, init: Init) -> VariationalState {
        let l = priors.delta0.len();
        let (r, row_neg_entropy) = match init {
            Init::Uniform => {
                let w = 1.0 / l as f64;
                (vec![w; n * l], vec![-(l as f64).ln(); n])
            }
            Init::Dirichlet { seed } => {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                let mut r = Vec::with_capacity(n * l);
                let mut ent = Vec::with_capacity(n);
                for _ in 0..n {
                    let draws: Vec<f64> = (0..l).map(|_| Exp1.sample(&mut rng)).collect();
                    let total: f64 = draws.iter().sum();
                    let mut row_ent = 0.0;
                    for d in draws {
                        let w = d / total;
                        r.push(w);
                        if w > 0.0 {
                            row_ent += w * w.ln();
                        }
                    }
                    ent.push(row_ent);
                }
                (r, ent)
            }
        };
        VariationalState {
            n,
            l,
            r,
            delta_star: priors.delta0.clone(),
            a_star: priors.a0.clone(),
            b_star: priors.b0.clone(),
            vlb_trace: Vec::new(),
            row_neg_entropy,
        }
    }

    pub fn responsibilities(&self, i: usize) -> &[f64] {
        &self.r[i * self.l..(i + 1) * self.l]
    }
}

/// Fitted model with posterior summaries.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub state: VariationalState,
    pub converged: bool,
    pub iterations: usize,
    /// Posterior mean correct-response probability per item and pattern.
    pub eap_theta: Vec<Vec<f64>>,
    pub sd_theta: Vec<Vec<f64>>,
    /// Posterior mean mixing proportions.
    pub eap_pi: Vec<f64>,
    pub sd_pi: Vec<f64>,
    /// Most probable profile per examinee, lowest index on ties.
    pub map_profiles: Vec<usize>,
    pub wall_time: f64,
}

/// `(E[ln t], E[ln(1-t)])` for `t ~ Beta(a, b)`.
pub fn expected_log_beta(a: f64, b: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!(
            "Beta parameters must be positive, got ({a}, {b})"
        )));
    }
    let dab = digamma(a + b);
    Ok((digamma(a) - dab, digamma(b) - dab))
}

/// Standard deviation of a Beta posterior.
pub fn posterior_sd_beta(a: f64, b: f64) -> f64 {
    let s = a + b;
    (a * b / (s * s * (s + 1.0))).sqrt()
}

/// Marginal standard deviations of a Dirichlet posterior.
pub fn posterior_sd_dirichlet(delta: &[f64]) -> Vec<f64> {
    let s: f64 = delta.iter().sum();
    delta
        .iter()
        .map(|&d| (d * (s - d) / (s * s * (s + 1.0))).sqrt())
        .collect()
}

/// Digamma-based expectations shared by the VE step and the bound.
struct ExpectationTables {
    elog_pi: Vec<f64>,
    elog_theta: Vec<Vec<f64>>,
    elog_comp: Vec<Vec<f64>>,
}

fn expectation_tables(
    delta_star: &[f64],
    a_star: &[Vec<f64>],
    b_star: &[Vec<f64>],
) -> ExpectationTables {
    let total: f64 = delta_star.iter().sum();
    let d_total = digamma(total);
    let elog_pi = delta_star.iter().map(|&d| digamma(d) - d_total).collect();
    let mut elog_theta = Vec::with_capacity(a_star.len());
    let mut elog_comp = Vec::with_capacity(a_star.len());
    for (aj, bj) in a_star.iter().zip(b_star) {
        let mut t = Vec::with_capacity(aj.len());
        let mut c = Vec::with_capacity(aj.len());
        for (&a, &b) in aj.iter().zip(bj) {
            let dab = digamma(a + b);
            t.push(digamma(a) - dab);
            c.push(digamma(b) - dab);
        }
        elog_theta.push(t);
        elog_comp.push(c);
    }
    ExpectationTables {
        elog_pi,
        elog_theta,
        elog_comp,
    }
}

/// Inner VE update against precomputed expectation tables.
fn ve_core(
    x: &Responses,
    gms: &[GMatrix],
    tables: &ExpectationTables,
    r: &mut [f64],
    row_neg_entropy: &mut [f64],
    n: usize,
    l: usize,
    chunks: usize,
) {
    let n_items = gms.len();
    // base log-weight per profile: prior term plus the all-incorrect
    // contribution of every item
    let mut base = tables.elog_pi.clone();
    let mut diff = vec![0.0; n_items * l];
    for (j, g) in gms.iter().enumerate() {
        let comp = &tables.elog_comp[j];
        let theta = &tables.elog_theta[j];
        let d = &mut diff[j * l..(j + 1) * l];
        for (t, &p) in g.pattern_of.iter().enumerate() {
            base[t] += comp[p];
            d[t] = theta[p] - comp[p];
        }
    }

    let chunk_rows = n.div_ceil(chunks.max(1)).max(1);
    r.par_chunks_mut(chunk_rows * l)
        .zip(row_neg_entropy.par_chunks_mut(chunk_rows))
        .enumerate()
        .for_each(|(ci, (r_chunk, ent_chunk))| {
            let i0 = ci * chunk_rows;
            for (ii, (row, ent)) in r_chunk
                .chunks_exact_mut(l)
                .zip(ent_chunk.iter_mut())
                .enumerate()
            {
                let xr = x.row(i0 + ii);
                row.copy_from_slice(&base);
                for (j, &xij) in xr.iter().enumerate() {
                    if xij == 1 {
                        let d = &diff[j * l..(j + 1) * l];
                        for (v, &dv) in row.iter_mut().zip(d) {
                            *v += dv;
                        }
                    }
                }
                // normalize via log-sum-exp; also collect sum r ln r
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                let mut weighted_lp = 0.0;
                for v in row.iter_mut() {
                    let lp = *v;
                    let e = (lp - m).exp();
                    s += e;
                    weighted_lp += e * lp;
                    *v = e;
                }
                let inv = 1.0 / s;
                for v in row.iter_mut() {
                    *v *= inv;
                }
                *ent = weighted_lp * inv - m - s.ln();
            }
        });
}

/// VE step: recomputes every examinee's responsibilities from the current
/// posterior parameters, examinees dispatched in `chunks` contiguous
/// blocks.
pub fn ve_step(x: &Responses, gms: &[GMatrix], state: &mut VariationalState, chunks: usize) {
    let tables = expectation_tables(&state.delta_star, &state.a_star, &state.b_star);
    let (n, l) = (state.n, state.l);
    ve_core(
        x,
        gms,
        &tables,
        &mut state.r,
        &mut state.row_neg_entropy,
        n,
        l,
        chunks,
    );
}

/// Dirichlet update: prior concentration plus responsibility column sums,
/// accumulated in fixed examinee order.
pub fn update_pi(r: &[f64], priors: &Priors) -> Vec<f64> {
    let l = priors.delta0.len();
    let mut colsum = vec![0.0; l];
    for row in r.chunks_exact(l) {
        for (c, &v) in colsum.iter_mut().zip(row) {
            *c += v;
        }
    }
    colsum
        .iter()
        .zip(&priors.delta0)
        .map(|(&c, &d0)| c + d0)
        .collect()
}

/// Expected success/failure counts per item and pattern: responsibilities
/// routed through each item's membership map and split by the response.
fn expected_counts(
    x: &Responses,
    gms: &[GMatrix],
    r: &[f64],
    l: usize,
    chunks: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = x.n_examinees();
    let n_items = gms.len();
    // column sums over all examinees, fixed order; the failure side is the
    // complement of the success side against these totals
    let mut colsum_all = vec![0.0; l];
    for row in r.chunks_exact(l) {
        for (c, &v) in colsum_all.iter_mut().zip(row) {
            *c += v;
        }
    }
    // column-major copy of X so each item scans contiguously
    let mut x_col = vec![0u8; n * n_items];
    for i in 0..n {
        let row = x.row(i);
        for (j, &v) in row.iter().enumerate() {
            x_col[j * n + i] = v;
        }
    }

    let chunk_items = n_items.div_ceil(chunks.max(1)).max(1);
    let items: Vec<usize> = (0..n_items).collect();
    let per_chunk: Vec<Vec<(Vec<f64>, Vec<f64>)>> = items
        .par_chunks(chunk_items)
        .map(|chunk| {
            let mut out = Vec::with_capacity(chunk.len());
            let mut colsum_pos = vec![0.0; l];
            for &j in chunk {
                colsum_pos.iter_mut().for_each(|v| *v = 0.0);
                let xj = &x_col[j * n..(j + 1) * n];
                for (i, &xij) in xj.iter().enumerate() {
                    if xij == 1 {
                        let row = &r[i * l..(i + 1) * l];
                        for (c, &v) in colsum_pos.iter_mut().zip(row) {
                            *c += v;
                        }
                    }
                }
                let g = &gms[j];
                let np = g.n_patterns();
                let mut pos = vec![0.0; np];
                let mut tot = vec![0.0; np];
                for (t, &p) in g.pattern_of.iter().enumerate() {
                    pos[p] += colsum_pos[t];
                    tot[p] += colsum_all[t];
                }
                let neg: Vec<f64> = tot.iter().zip(&pos).map(|(&t, &s)| t - s).collect();
                out.push((pos, neg));
            }
            out
        })
        .collect();

    let mut acnt = Vec::with_capacity(n_items);
    let mut bcnt = Vec::with_capacity(n_items);
    for chunk in per_chunk {
        for (pos, neg) in chunk {
            acnt.push(pos);
            bcnt.push(neg);
        }
    }
    (acnt, bcnt)
}

/// VM step: Beta posterior parameters from expected counts plus priors,
/// items dispatched in `chunks` contiguous blocks.
pub fn vm_step(
    x: &Responses,
    gms: &[GMatrix],
    r: &[f64],
    priors: &Priors,
    chunks: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let l = priors.delta0.len();
    let (acnt, bcnt) = expected_counts(x, gms, r, l, chunks);
    let a_star = acnt
        .iter()
        .zip(&priors.a0)
        .map(|(c, a0)| c.iter().zip(a0).map(|(&c, &a)| c + a).collect())
        .collect();
    let b_star = bcnt
        .iter()
        .zip(&priors.b0)
        .map(|(c, b0)| c.iter().zip(b0).map(|(&c, &b)| c + b).collect())
        .collect();
    (a_star, b_star)
}

/// Log normalizer of a Dirichlet density.
fn dirichlet_log_norm(delta: &[f64]) -> f64 {
    let total: f64 = delta.iter().sum();
    ln_gamma(total) - delta.iter().map(|&d| ln_gamma(d)).sum::<f64>()
}

fn ln_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Sum of `r * ln r` over every responsibility, rows evaluated in
/// parallel, row values combined serially in examinee order.
fn sum_r_log_r(r: &[f64], l: usize) -> f64 {
    let per_row: Vec<f64> = r
        .par_chunks(l)
        .map(|row| {
            let mut acc = 0.0;
            for &v in row {
                if v > 0.0 {
                    acc += v * v.ln();
                }
            }
            acc
        })
        .collect();
    per_row.iter().sum()
}

/// Bound terms that depend only on posterior parameters and expected
/// counts; the caller supplies the entropy of the responsibilities.
fn vlb_from_parts(
    priors: &Priors,
    delta_star: &[f64],
    a_star: &[Vec<f64>],
    b_star: &[Vec<f64>],
    tables: &ExpectationTables,
    acnt: &[Vec<f64>],
    bcnt: &[Vec<f64>],
    sum_r_ln_r: f64,
) -> f64 {
    let n_items = a_star.len();
    // expected complete-data log likelihood of the responses
    let mut term_like = 0.0;
    for j in 0..n_items {
        for p in 0..a_star[j].len() {
            term_like += acnt[j][p] * tables.elog_theta[j][p]
                + bcnt[j][p] * tables.elog_comp[j][p];
        }
    }
    // expected log p(Z | pi): column sums equal delta* - delta0
    let mut term_z = 0.0;
    for ((&ds, &d0), &e) in delta_star.iter().zip(&priors.delta0).zip(&tables.elog_pi) {
        term_z += (ds - d0) * e;
    }
    // prior and variational-posterior terms for pi
    let mut term_pi_prior = dirichlet_log_norm(&priors.delta0);
    let mut term_pi_q = dirichlet_log_norm(delta_star);
    for ((&d0, &ds), &e) in priors.delta0.iter().zip(delta_star).zip(&tables.elog_pi) {
        term_pi_prior += (d0 - 1.0) * e;
        term_pi_q += (ds - 1.0) * e;
    }
    // prior and variational-posterior terms for theta
    let mut term_theta_prior = 0.0;
    let mut term_theta_q = 0.0;
    for j in 0..n_items {
        for p in 0..a_star[j].len() {
            let et = tables.elog_theta[j][p];
            let ec = tables.elog_comp[j][p];
            term_theta_prior += -ln_beta_fn(priors.a0[j][p], priors.b0[j][p])
                + (priors.a0[j][p] - 1.0) * et
                + (priors.b0[j][p] - 1.0) * ec;
            term_theta_q += -ln_beta_fn(a_star[j][p], b_star[j][p])
                + (a_star[j][p] - 1.0) * et
                + (b_star[j][p] - 1.0) * ec;
        }
    }
    term_like + term_z + term_pi_prior + term_theta_prior
        - sum_r_ln_r
        - term_theta_q
        - term_pi_q
}

/// Variational lower bound of the log marginal likelihood for the given
/// state.
pub fn compute_vlb(
    x: &Responses,
    gms: &[GMatrix],
    state: &VariationalState,
    priors: &Priors,
) -> f64 {
    let tables = expectation_tables(&state.delta_star, &state.a_star, &state.b_star);
    let workers = rayon::current_num_threads();
    let (acnt, bcnt) = expected_counts(x, gms, &state.r, state.l, workers);
    let ent = sum_r_log_r(&state.r, state.l);
    vlb_from_parts(
        priors,
        &state.delta_star,
        &state.a_star,
        &state.b_star,
        &tables,
        &acnt,
        &bcnt,
        ent,
    )
}

/// Runs coordinate ascent to convergence.
///
/// Per iteration: VM step, mixing-proportion update, bound evaluation,
/// VE step; stops once the bound change drops below `tol` or the
/// iteration cap is reached (reported as not converged).
pub fn fit(
    x: &Responses,
    q: &QMatrix,
    flavor: Flavor,
    priors: &Priors,
    config: &VbConfig,
) -> Result<FitReport> {
    let started = std::time::Instant::now();
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
    if config.cores == 0 {
        return Err(Error::invalid("cores must be at least 1"));
    }

    let n = x.n_examinees();
    let mut state = VariationalState::initial(n, priors, config.init);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.cores)
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;

    let mut converged = false;
    let mut iterations = 0;
    pool.install(|| -> Result<()> {
        let mut prev = f64::NEG_INFINITY;
        for iter in 1..=config.max_iter {
            let (a_star, b_star) = vm_step(x, &gms, &state.r, priors, config.cores);
            state.a_star = a_star;
            state.b_star = b_star;
            state.delta_star = update_pi(&state.r, priors);

            let tables = expectation_tables(&state.delta_star, &state.a_star, &state.b_star);
            // expected counts are recoverable from the just-updated
            // posterior parameters, so the bound costs no extra pass
            let acnt: Vec<Vec<f64>> = state
                .a_star
                .iter()
                .zip(&priors.a0)
                .map(|(s, p)| s.iter().zip(p).map(|(&s, &p)| s - p).collect())
                .collect();
            let bcnt: Vec<Vec<f64>> = state
                .b_star
                .iter()
                .zip(&priors.b0)
                .map(|(s, p)| s.iter().zip(p).map(|(&s, &p)| s - p).collect())
                .collect();
            let ent: f64 = state.row_neg_entropy.iter().sum();
            let vlb = vlb_from_parts(
                priors,
                &state.delta_star,
                &state.a_star,
                &state.b_star,
                &tables,
                &acnt,
                &bcnt,
                ent,
            );
            if vlb.is_nan() {
                return Err(Error::NanDetected {
                    iteration: iter,
                    context: "variational lower bound".into(),
                });
            }
            state.vlb_trace.push(vlb);
            iterations = iter;
            let change = (vlb - prev).abs();
            prev = vlb;

            let (sn, sl) = (state.n, state.l);
            ve_core(
                x,
                &gms,
                &tables,
                &mut state.r,
                &mut state.row_neg_entropy,
                sn,
                sl,
                config.cores,
            );
            if change < config.tol {
                converged = true;
                break;
            }
        }
        Ok(())
    })?;

    let eap_theta: Vec<Vec<f64>> = state
        .a_star
        .iter()
        .zip(&state.b_star)
        .map(|(aj, bj)| aj.iter().zip(bj).map(|(&a, &b)| a / (a + b)).collect())
        .collect();
    let sd_theta: Vec<Vec<f64>> = state
        .a_star
        .iter()
        .zip(&state.b_star)
        .map(|(aj, bj)| {
            aj.iter()
                .zip(bj)
                .map(|(&a, &b)| posterior_sd_beta(a, b))
                .collect()
        })
        .collect();
    let total: f64 = state.delta_star.iter().sum();
    let eap_pi: Vec<f64> = state.delta_star.iter().map(|&d| d / total).collect();
    let sd_pi = posterior_sd_dirichlet(&state.delta_star);
    let map_profiles = map_profiles(&state);

    Ok(FitReport {
        converged,
        iterations,
        eap_theta,
        sd_theta,
        eap_pi,
        sd_pi,
        map_profiles,
        wall_time: started.elapsed().as_secs_f64(),
        state,
    })
}

/// Most probable profile index per examinee, lowest index on ties.
pub fn map_profiles(state: &VariationalState) -> Vec<usize> {
    state
        .r
        .chunks_exact(state.l)
        .map(|row| {
            let mut best = 0;
            let mut best_v = row[0];
            for (idx, &v) in row.iter().enumerate().skip(1) {
                if v > best_v {
                    best = idx;
                    best_v = v;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribute::build_gmatrices;
    use crate::priors::{default_priors, PriorScheme};
    use rand::Rng;

    fn tiny_model() -> (QMatrix, ProfileSpace, Vec<GMatrix>, Priors) {
        let q = QMatrix::new(vec![vec![1, 0], vec![0, 2], vec![1, 1]], vec![2, 3]).unwrap();
        let space = ProfileSpace::enumerate(q.levels()).unwrap();
        let gms = build_gmatrices(&q, &space, Flavor::Collapsed);
        let priors = default_priors(&space, &gms, PriorScheme::WeaklyInformative);
        (q, space, gms, priors)
    }

    fn random_responses(n: usize, j: usize, seed: u64) -> Responses {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let data: Vec<u8> = (0..n * j).map(|_| rng.gen_range(0..2u8)).collect();
        Responses::new(n, j, data).unwrap()
    }

    #[test]
    fn expected_log_beta_flat_prior() {
        let (lt, lc) = expected_log_beta(1.0, 1.0).unwrap();
        assert!((lt - (-1.0)).abs() < 1e-12);
        assert!((lc - (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn expected_log_beta_symmetric() {
        let (lt, lc) = expected_log_beta(2.0, 2.0).unwrap();
        assert_eq!(lt, lc);
    }

    #[test]
    fn expected_log_beta_concentrated() {
        let (lt, lc) = expected_log_beta(1000.0, 1000.0).unwrap();
        assert!((lt - 0.5f64.ln()).abs() < 1e-3);
        assert!((lc - 0.5f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn expected_log_beta_rejects_nonpositive() {
        assert!(expected_log_beta(0.0, 1.0).is_err());
        assert!(expected_log_beta(1.0, -2.0).is_err());
    }

    #[test]
    fn ve_prior_only_is_uniform() {
        // no items: responsibilities driven by the prior term alone
        let space = ProfileSpace::enumerate(&[2, 2]).unwrap();
        let priors = Priors {
            delta0: vec![1.0; space.len()],
            a0: vec![],
            b0: vec![],
        };
        let x = Responses::new(1, 0, vec![]).unwrap();
        let mut state = VariationalState::initial(1, &priors, Init::Uniform);
        state.delta_star = vec![3.0; 4];
        ve_step(&x, &[], &mut state, 1);
        for &v in &state.r {
            assert!((v - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn ve_rows_sum_to_one() {
        let (q, _space, gms, priors) = tiny_model();
        let x = random_responses(50, q.n_items(), 9);
        let mut state = VariationalState::initial(50, &priors, Init::Uniform);
        let (a, b) = vm_step(&x, &gms, &state.r, &priors, 4);
        state.a_star = a;
        state.b_star = b;
        state.delta_star = update_pi(&state.r, &priors);
        ve_step(&x, &gms, &mut state, 4);
        for i in 0..50 {
            let s: f64 = state.responsibilities(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "row {i} sums to {s}");
            assert!(state.responsibilities(i).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn ve_bit_identical_across_chunk_counts() {
        let (q, _space, gms, priors) = tiny_model();
        let x = random_responses(37, q.n_items(), 5);
        let mut base = VariationalState::initial(37, &priors, Init::Dirichlet { seed: 3 });
        let (a, b) = vm_step(&x, &gms, &base.r, &priors, 1);
        base.a_star = a;
        base.b_star = b;
        base.delta_star = update_pi(&base.r, &priors);
        let mut one = base.clone();
        let mut eight = base.clone();
        ve_step(&x, &gms, &mut one, 1);
        ve_step(&x, &gms, &mut eight, 8);
        assert_eq!(one.r, eight.r);
        assert_eq!(one.row_neg_entropy, eight.row_neg_entropy);
    }

    #[test]
    fn vm_bit_identical_across_chunk_counts() {
        let (q, _space, gms, priors) = tiny_model();
        let x = random_responses(41, q.n_items(), 6);
        let state = VariationalState::initial(41, &priors, Init::Dirichlet { seed: 8 });
        let (a1, b1) = vm_step(&x, &gms, &state.r, &priors, 1);
        let (a8, b8) = vm_step(&x, &gms, &state.r, &priors, 8);
        assert_eq!(a1, a8);
        assert_eq!(b1, b8);
    }

    #[test]
    fn update_pi_uniform_rows() {
        let (_q, space, _gms, priors) = tiny_model();
        let l = space.len();
        let n = 12;
        let r = vec![1.0 / l as f64; n * l];
        let delta = update_pi(&r, &priors);
        for &d in &delta {
            assert!((d - (n as f64 / l as f64 + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn update_pi_no_data() {
        let (_q, _space, _gms, priors) = tiny_model();
        let delta = update_pi(&[], &priors);
        assert_eq!(delta, priors.delta0);
    }

    #[test]
    fn update_pi_point_mass() {
        let (_q, space, _gms, priors) = tiny_model();
        let l = space.len();
        let mut r = vec![0.0; l];
        r[3] = 1.0;
        let delta = update_pi(&r, &priors);
        for (idx, &d) in delta.iter().enumerate() {
            let expect = priors.delta0[idx] + if idx == 3 { 1.0 } else { 0.0 };
            assert_eq!(d, expect);
        }
    }

    #[test]
    fn vm_all_correct_leaves_b_at_prior() {
        let (q, _space, gms, priors) = tiny_model();
        let n = 19;
        let x = Responses::new(n, q.n_items(), vec![1; n * q.n_items()]).unwrap();
        let state = VariationalState::initial(n, &priors, Init::Dirichlet { seed: 2 });
        let (_a, b) = vm_step(&x, &gms, &state.r, &priors, 2);
        assert_eq!(b, priors.b0);
    }

    #[test]
    fn vm_point_mass_single_examinee() {
        let (q, space, gms, priors) = tiny_model();
        let l = space.len();
        let target = 4;
        let mut r = vec![0.0; l];
        r[target] = 1.0;
        let x = Responses::new(1, q.n_items(), vec![1; q.n_items()]).unwrap();
        let (a, _b) = vm_step(&x, &gms, &r, &priors, 1);
        for (j, g) in gms.iter().enumerate() {
            for p in 0..g.n_patterns() {
                let expect = priors.a0[j][p] + if g.pattern_of[target] == p { 1.0 } else { 0.0 };
                assert!((a[j][p] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn vlb_zero_data_is_zero() {
        let (q, _space, gms, priors) = tiny_model();
        let x = Responses::new(0, q.n_items(), vec![]).unwrap();
        let state = VariationalState::initial(0, &priors, Init::Uniform);
        let vlb = compute_vlb(&x, &gms, &state, &priors);
        assert!(vlb.abs() < 1e-12, "vlb = {vlb}");
    }

    #[test]
    fn vlb_trace_is_monotone() {
        let (q, _space, _gms, priors) = tiny_model();
        let x = random_responses(80, q.n_items(), 11);
        let report = fit(
            &x,
            &q,
            Flavor::Collapsed,
            &priors,
            &VbConfig {
                cores: 2,
                ..VbConfig::default()
            },
        )
        .unwrap();
        for w in report.state.vlb_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "bound decreased: {} -> {}", w[0], w[1]);
        }
        assert!(report.converged);
    }

    #[test]
    fn fit_deterministic_across_cores() {
        let (q, _space, _gms, priors) = tiny_model();
        let x = random_responses(64, q.n_items(), 21);
        let mut traces = Vec::new();
        for cores in [1usize, 2, 8] {
            let report = fit(
                &x,
                &q,
                Flavor::Collapsed,
                &priors,
                &VbConfig {
                    cores,
                    ..VbConfig::default()
                },
            )
            .unwrap();
            traces.push(report.state.vlb_trace.clone());
        }
        assert_eq!(traces[0], traces[1]);
        assert_eq!(traces[0], traces[2]);
    }

    #[test]
    fn fit_mass_conservation() {
        let (q, _space, _gms, priors) = tiny_model();
        let n = 73;
        let x = random_responses(n, q.n_items(), 31);
        let report = fit(&x, &q, Flavor::Collapsed, &priors, &VbConfig::default()).unwrap();
        let s = &report.state;
        let d_mass: f64 = s.delta_star.iter().sum::<f64>() - priors.delta0.iter().sum::<f64>();
        assert!((d_mass - n as f64).abs() < 1e-8);
        for j in 0..q.n_items() {
            let mass: f64 = s.a_star[j]
                .iter()
                .zip(&priors.a0[j])
                .map(|(&a, &a0)| a - a0)
                .sum::<f64>()
                + s.b_star[j]
                    .iter()
                    .zip(&priors.b0[j])
                    .map(|(&b, &b0)| b - b0)
                    .sum::<f64>();
            assert!((mass - n as f64).abs() < 1e-8, "item {j}: {mass}");
        }
        // posterior Dirichlet dominates the prior everywhere
        for (d, d0) in s.delta_star.iter().zip(&priors.delta0) {
            assert!(d >= d0);
        }
        // EAP mixing proportions form a distribution
        assert!((report.eap_pi.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fit_row_permutation_invariance() {
        let (q, _space, _gms, priors) = tiny_model();
        let n = 40;
        let x = random_responses(n, q.n_items(), 17);
        let perm: Vec<usize> = (0..n).rev().collect();
        let xp = x.permuted_rows(&perm).unwrap();
        let cfg = VbConfig::default();
        let a = fit(&x, &q, Flavor::Collapsed, &priors, &cfg).unwrap();
        let b = fit(&xp, &q, Flavor::Collapsed, &priors, &cfg).unwrap();
        for (ta, tb) in a.eap_theta.iter().flatten().zip(b.eap_theta.iter().flatten()) {
            assert!((ta - tb).abs() < 1e-10);
        }
        for (pa, pb) in a.eap_pi.iter().zip(&b.eap_pi) {
            assert!((pa - pb).abs() < 1e-10);
        }
        // responsibilities permute with the rows
        for i in 0..n {
            let ra = a.state.responsibilities(perm[i]);
            let rb = b.state.responsibilities(i);
            for (va, vb) in ra.iter().zip(rb) {
                assert!((va - vb).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fit_binary_levels_flavors_agree() {
        // with two levels everywhere the collapsed and reduced pattern
        // spaces coincide, so the fits must be identical
        let q = QMatrix::new(
            vec![vec![1, 0, 0], vec![0, 1, 1], vec![1, 1, 0]],
            vec![2, 2, 2],
        )
        .unwrap();
        let space = ProfileSpace::enumerate(q.levels()).unwrap();
        let gms = build_gmatrices(&q, &space, Flavor::Collapsed);
        let priors = default_priors(&space, &gms, PriorScheme::WeaklyInformative);
        let x = random_responses(60, q.n_items(), 77);
        let cfg = VbConfig::default();
        let c = fit(&x, &q, Flavor::Collapsed, &priors, &cfg).unwrap();
        let r = fit(&x, &q, Flavor::Reduced, &priors, &cfg).unwrap();
        assert_eq!(c.state.vlb_trace, r.state.vlb_trace);
        assert_eq!(c.eap_theta, r.eap_theta);
        assert_eq!(c.map_profiles, r.map_profiles);
    }

    #[test]
    fn fit_rejects_dimension_mismatch() {
        let (q, _space, _gms, priors) = tiny_model();
        let x = Responses::new(2, 2, vec![0, 1, 1, 0]).unwrap();
        assert!(fit(&x, &q, Flavor::Collapsed, &priors, &VbConfig::default()).is_err());
    }

    #[test]
    fn map_profiles_tie_breaks_low_index() {
        let (q, space, _gms, priors) = tiny_model();
        let _ = q;
        let mut state = VariationalState::initial(1, &priors, Init::Uniform);
        // uniform row: every profile ties, lowest index wins
        assert_eq!(map_profiles(&state), vec![0]);
        let l = space.len();
        state.r[2] = 0.9;
        state.r[5] = 0.9;
        let _ = l;
        assert_eq!(map_profiles(&state), vec![2]);
    }

    #[test]
    fn posterior_sd_values() {
        assert!((posterior_sd_beta(1.0, 1.0) - (1.0f64 / 12.0).sqrt()).abs() < 1e-15);
        // symmetric Beta has mean one half
        let a = 3.5f64;
        assert!((a / (a + a) - 0.5).abs() < 1e-15);
        let sds = posterior_sd_dirichlet(&vec![1.0; 12]);
        let expect = ((1.0 / 12.0) * (11.0 / 12.0) / 13.0f64).sqrt();
        for &sd in &sds {
            assert!((sd - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn dirichlet_init_rows_normalized() {
        let (_q, space, _gms, priors) = tiny_model();
        let state = VariationalState::initial(9, &priors, Init::Dirichlet { seed: 99 });
        for i in 0..9 {
            let s: f64 = state.responsibilities(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let again = VariationalState::initial(9, &priors, Init::Dirichlet { seed: 99 });
        assert_eq!(state.r, again.r);
        let _ = space;
    }
}
