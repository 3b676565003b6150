//! Pathwise simulation of the time-changed counting processes and
//! statistical comparison with the analytic laws.
//!
//! A sample of M(L(t)) is built exactly as the process is constructed:
//! draw L(t) as the first passage of a sampled subordinator path over t,
//! then Poisson(Λ·L(t)) jump epochs, then i.i.d. jump sizes with
//! P{X = j} = λ_j/Λ. Every path owns a counter-mode RNG stream keyed by
//! (seed, path index), so results are bitwise independent of how paths are
//! scheduled across threads.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::Poisson;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::processes::{GcpParams, PmfModel, PmfTable, TimeChange};
use crate::specialfn::regularized_gamma_q;
use crate::subordinators::{
    inverse_at, sample_path, CompositeClock, Path, DEFAULT_REJECTION_BUDGET,
};

/// Simulation settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: u64,
    pub seed: u64,
    /// Initial operational-time horizon for the clock path, as a multiple
    /// of t. Paths that fail to clear t are resampled with the horizon
    /// doubled, up to three times.
    pub horizon_factor: f64,
    /// Path grid spacing relative to the initial horizon.
    pub dt_rel: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_paths: 10_000,
            seed: 1,
            horizon_factor: 10.0,
            dt_rel: 1e-3,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 100 {
            return Err(Error::Domain(format!(
                "McConfig: need at least 100 paths, got {}",
                self.n_paths
            )));
        }
        if !(self.horizon_factor > 0.0) || !self.horizon_factor.is_finite() {
            return Err(Error::Domain("McConfig: horizon_factor must be positive".into()));
        }
        if !(self.dt_rel > 0.0 && self.dt_rel <= 1e-2) {
            return Err(Error::Domain(format!(
                "McConfig: need dt_rel ∈ (0, 1e-2], got {}",
                self.dt_rel
            )));
        }
        Ok(())
    }
}

/// Empirical distribution of the simulated count, with the discretization
/// it was produced under.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalPmf {
    /// counts[n] = number of paths that ended at value n.
    pub counts: Vec<u64>,
    pub n_paths: u64,
    pub seed: u64,
    /// Path grid spacing (0 for the identity clock).
    pub dt: f64,
    /// Initial horizon (0 for the identity clock).
    pub horizon: f64,
}

impl EmpiricalPmf {
    fn from_values(values: &[u32], seed: u64, dt: f64, horizon: f64) -> Self {
        let top = values.iter().copied().max().unwrap_or(0) as usize;
        let mut counts = vec![0u64; top + 1];
        for &v in values {
            counts[v as usize] += 1;
        }
        EmpiricalPmf {
            counts,
            n_paths: values.len() as u64,
            seed,
            dt,
            horizon,
        }
    }

    pub fn freq(&self, n: usize) -> f64 {
        self.counts.get(n).copied().unwrap_or(0) as f64 / self.n_paths as f64
    }
}

pub(crate) fn rng_for_path(seed: u64, path_id: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(path_id);
    rng
}

pub(crate) fn run_paths<T, F>(n_paths: u64, seed: u64, body: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha12Rng) -> Result<T> + Sync,
{
    (0..n_paths)
        .into_par_iter()
        .map(|pid| body(&mut rng_for_path(seed, pid)))
        .collect()
}

/// First passage of a freshly sampled clock path over level t, retrying
/// with a doubled horizon (fresh randomness) up to three times.
fn draw_inverse(
    clock: &CompositeClock,
    rng: &mut ChaCha12Rng,
    t: f64,
    base_horizon: f64,
    dt: f64,
) -> Result<f64> {
    let mut horizon = base_horizon;
    let mut last_miss = None;
    for _ in 0..4 {
        let path = sample_path(clock, rng, horizon, dt, DEFAULT_REJECTION_BUDGET)?;
        match inverse_at(&path, t) {
            Ok(l) => return Ok(l),
            Err(e @ Error::HorizonTooShort { .. }) => {
                last_miss = Some(e);
                horizon *= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_miss.expect("loop ran"))
}

/// Jump-size sampler: index j−1 drawn with weight λ_j.
struct JumpSizes {
    weights: Option<WeightedIndex<f64>>,
}

impl JumpSizes {
    fn new(params: &GcpParams) -> Result<Self> {
        if params.max_jump() == 1 {
            return Ok(JumpSizes { weights: None });
        }
        let weights = WeightedIndex::new(params.rates().iter().copied())
            .map_err(|e| Error::Domain(format!("jump-size weights: {e}")))?;
        Ok(JumpSizes { weights: Some(weights) })
    }

    fn sample(&self, rng: &mut ChaCha12Rng) -> u32 {
        match &self.weights {
            None => 1,
            Some(w) => w.sample(rng) as u32 + 1,
        }
    }
}

/// Poisson(mean) epochs, each contributing an independent jump size.
fn draw_count(rng: &mut ChaCha12Rng, mean: f64, sizes: &JumpSizes) -> Result<u32> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let poi = Poisson::new(mean)
        .map_err(|e| Error::Domain(format!("Poisson arrivals: {e}")))?;
    let epochs: f64 = poi.sample(rng);
    let mut total = 0u32;
    for _ in 0..epochs as u64 {
        total += sizes.sample(rng);
    }
    Ok(total)
}

/// Simulate M(L(t)) for the multi-jump process on the given clock.
pub fn simulate_tc_gcp(
    tc: &TimeChange,
    params: &GcpParams,
    t: f64,
    cfg: &McConfig,
) -> Result<EmpiricalPmf> {
    cfg.validate()?;
    tc.validate()?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("simulate_tc_gcp: need t > 0, got {t}")));
    }
    let clock = tc.sampler()?;
    let base_horizon = cfg.horizon_factor * t;
    let dt = cfg.dt_rel * base_horizon;
    let lam = params.total_rate();
    let sizes = JumpSizes::new(params)?;
    let values = run_paths(cfg.n_paths, cfg.seed, |rng| {
        let l = draw_inverse(&clock, rng, t, base_horizon, dt)?;
        draw_count(rng, lam * l, &sizes)
    })?;
    Ok(EmpiricalPmf::from_values(&values, cfg.seed, dt, base_horizon))
}

/// Simulate M(t) on the identity clock (no time change) — the degenerate
/// hook used to calibrate the sampler against the product-form pmf.
pub fn simulate_gcp(params: &GcpParams, t: f64, cfg: &McConfig) -> Result<EmpiricalPmf> {
    cfg.validate()?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("simulate_gcp: need t > 0, got {t}")));
    }
    let lam = params.total_rate();
    let sizes = JumpSizes::new(params)?;
    let values = run_paths(cfg.n_paths, cfg.seed, |rng| draw_count(rng, lam * t, &sizes))?;
    Ok(EmpiricalPmf::from_values(&values, cfg.seed, 0.0, 0.0))
}

/// Simulate whichever process the model describes.
pub fn simulate_model(model: &PmfModel, t: f64, cfg: &McConfig) -> Result<EmpiricalPmf> {
    match &model.clock {
        None => simulate_gcp(&model.params, t, cfg),
        Some(tc) => simulate_tc_gcp(tc, &model.params, t, cfg),
    }
}

/// Draw L(t) samples (first-passage route, discretized path).
pub fn sample_inverse_clock(tc: &TimeChange, t: f64, cfg: &McConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    tc.validate()?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("sample_inverse_clock: need t > 0, got {t}")));
    }
    let clock = tc.sampler()?;
    let base_horizon = cfg.horizon_factor * t;
    let dt = cfg.dt_rel * base_horizon;
    run_paths(cfg.n_paths, cfg.seed, |rng| {
        draw_inverse(&clock, rng, t, base_horizon, dt)
    })
}

/// Draw H(x) samples (single exact increment — stationary independent
/// increments make one draw of size x sufficient). Shares no discretization
/// with [`sample_inverse_clock`], which is what makes the two sides of
/// P{L(t) < x} = P{H(x) > t} a genuine cross-check.
pub fn sample_clock_level(tc: &TimeChange, x: f64, cfg: &McConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    tc.validate()?;
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("sample_clock_level: need x > 0, got {x}")));
    }
    let clock = tc.sampler()?;
    run_paths(cfg.n_paths, cfg.seed, |rng| {
        clock.sample_increment(rng, x, DEFAULT_REJECTION_BUDGET)
    })
}

/// Discretized clock paths on [0, horizon] with spacing dt_rel·horizon,
/// one reproducible RNG stream per path. For inspection and plotting; the
/// statistical entry points sample their own paths.
pub fn sample_clock_paths(
    tc: &TimeChange,
    horizon: f64,
    dt_rel: f64,
    n_paths: u64,
    seed: u64,
) -> Result<Vec<Path>> {
    tc.validate()?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Domain(format!(
            "sample_clock_paths: need horizon > 0, got {horizon}"
        )));
    }
    if !(dt_rel > 0.0 && dt_rel <= 1e-2) {
        return Err(Error::Domain(format!(
            "sample_clock_paths: need dt_rel ∈ (0, 1e-2], got {dt_rel}"
        )));
    }
    if n_paths == 0 {
        return Err(Error::Domain("sample_clock_paths: need at least one path".into()));
    }
    let clock = tc.sampler()?;
    let dt = dt_rel * horizon;
    run_paths(n_paths, seed, |rng| {
        sample_path(&clock, rng, horizon, dt, DEFAULT_REJECTION_BUDGET)
    })
}

/// Inverse-CDF draws from a tabulated pmf; values beyond the table land in
/// the first index past the truncation point. Used to calibrate the
/// goodness-of-fit machinery against a known-correct sampler.
pub fn sample_from_table(table: &PmfTable, n_paths: u64, seed: u64) -> EmpiricalPmf {
    let values: Vec<u32> = (0..n_paths)
        .map(|pid| {
            let mut rng = rng_for_path(seed, pid);
            let u: f64 = rng.random();
            let mut cum = 0.0;
            for (n, &p) in table.probs.iter().enumerate() {
                cum += p;
                if u < cum {
                    return n as u32;
                }
            }
            table.truncation_n as u32 + 1
        })
        .collect();
    EmpiricalPmf::from_values(&values, seed, 0.0, 0.0)
}

/// Goodness-of-fit summary of an empirical law against an analytic table.
#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    /// Total-variation distance, tail bucket included.
    pub tv: f64,
    pub chi2_stat: f64,
    pub chi2_df: usize,
    pub chi2_pvalue: f64,
    pub n_paths: u64,
    pub seed: u64,
}

/// TV distance and χ² goodness-of-fit p-value of `emp` against `table`.
///
/// Everything past the table's truncation point is one tail bucket with
/// expected mass 1 − mass_covered; χ² bins with expected count below 5 are
/// merged into that tail from the right.
pub fn compare_pmf(emp: &EmpiricalPmf, table: &PmfTable) -> Result<McReport> {
    let required = 1.0 - 1e-4;
    if table.mass_covered < required {
        return Err(Error::InsufficientCoverage {
            covered: table.mass_covered,
            required,
        });
    }
    let n = emp.n_paths as f64;
    let body = table.probs.len();

    let mut observed: Vec<f64> = (0..body).map(|i| emp.counts.get(i).copied().unwrap_or(0) as f64).collect();
    let tail_obs: u64 = emp.counts.iter().skip(body).sum();
    observed.push(tail_obs as f64);
    let mut expected: Vec<f64> = table.probs.iter().map(|&p| p * n).collect();
    expected.push((1.0 - table.mass_covered).max(0.0) * n);

    let tv = 0.5
        * observed
            .iter()
            .zip(&expected)
            .map(|(o, e)| (o / n - e / n).abs())
            .sum::<f64>();

    // collapse the right end until every remaining bin expects ≥ 5
    while expected.len() > 1 && *expected.last().unwrap() < 5.0 {
        let (e, o) = (expected.pop().unwrap(), observed.pop().unwrap());
        *expected.last_mut().unwrap() += e;
        *observed.last_mut().unwrap() += o;
    }
    let chi2_stat: f64 = observed
        .iter()
        .zip(&expected)
        .filter(|(_, &e)| e > 0.0)
        .map(|(&o, &e)| (o - e) * (o - e) / e)
        .sum();
    let chi2_df = expected.len().saturating_sub(1);
    let chi2_pvalue = if chi2_df == 0 {
        1.0
    } else {
        regularized_gamma_q(chi2_df as f64 / 2.0, chi2_stat / 2.0)?
    };
    Ok(McReport {
        tv,
        chi2_stat,
        chi2_df,
        chi2_pvalue,
        n_paths: emp.n_paths,
        seed: emp.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::{pmf_table, TableOpts};

    fn table_for(model: &PmfModel, t: f64) -> PmfTable {
        pmf_table(model, t, &TableOpts::default()).unwrap()
    }

    fn pair_model(nu: f64, lambda: f64, rates: Vec<f64>) -> PmfModel {
        PmfModel {
            params: GcpParams::new(rates).unwrap(),
            clock: Some(TimeChange::StablePair { nu, lambda }),
        }
    }

    #[test]
    fn identity_clock_matches_product_form() {
        let params = GcpParams::new(vec![1.0, 1.0]).unwrap();
        let model = PmfModel { params: params.clone(), clock: None };
        let cfg = McConfig { n_paths: 20_000, seed: 11, ..Default::default() };
        let emp = simulate_gcp(&params, 1.0, &cfg).unwrap();
        let report = compare_pmf(&emp, &table_for(&model, 1.0)).unwrap();
        assert!(report.chi2_pvalue > 0.01, "p = {}", report.chi2_pvalue);
        assert!(report.tv < 0.02, "tv = {}", report.tv);
    }

    #[test]
    fn pair_clock_simulation_matches_closed_form() {
        let model = pair_model(0.3, 1.0, vec![1.0]);
        let cfg = McConfig { n_paths: 20_000, seed: 5, ..Default::default() };
        let emp = simulate_model(&model, 1.0, &cfg).unwrap();
        let report = compare_pmf(&emp, &table_for(&model, 1.0)).unwrap();
        assert!(report.tv < 0.02, "tv = {}", report.tv);
        assert!(report.chi2_pvalue > 0.01, "p = {}", report.chi2_pvalue);
    }

    #[test]
    fn multi_jump_simulation_matches_mixture() {
        let model = pair_model(0.3, 1.0, vec![0.4, 0.6]);
        let cfg = McConfig { n_paths: 20_000, seed: 6, ..Default::default() };
        let emp = simulate_model(&model, 1.0, &cfg).unwrap();
        let report = compare_pmf(&emp, &table_for(&model, 1.0)).unwrap();
        assert!(report.tv < 0.02, "tv = {}", report.tv);
        assert!(report.chi2_pvalue > 0.01, "p = {}", report.chi2_pvalue);
    }

    #[test]
    fn goodness_of_fit_is_calibrated() {
        // sampling *from the table itself* must look consistent: the χ²
        // p-value should be roughly uniform, so p > 0.01 in ≥ 98 of 100 runs
        let model = pair_model(0.3, 1.0, vec![1.0]);
        let table = table_for(&model, 1.0);
        let mut accepted = 0;
        for seed in 0..100u64 {
            let emp = sample_from_table(&table, 10_000, 1000 + seed);
            if compare_pmf(&emp, &table).unwrap().chi2_pvalue > 0.01 {
                accepted += 1;
            }
        }
        assert!(accepted >= 98, "accepted {accepted}/100");
    }

    #[test]
    fn wrong_model_is_rejected() {
        // samples from ν = 0.5 against the ν = 0.3 table: the test must
        // have power at 10^5 draws
        let right = pair_model(0.5, 1.0, vec![1.0]);
        let wrong_table = table_for(&pair_model(0.3, 1.0, vec![1.0]), 1.0);
        let emp = sample_from_table(&table_for(&right, 1.0), 100_000, 42);
        let report = compare_pmf(&emp, &wrong_table).unwrap();
        assert!(report.chi2_pvalue < 1e-3, "p = {}", report.chi2_pvalue);
    }

    #[test]
    fn identical_inputs_give_zero_tv() {
        let table = PmfTable {
            t: 1.0,
            probs: vec![0.5, 0.25, 0.25],
            truncation_n: 2,
            mass_covered: 1.0,
        };
        let emp = EmpiricalPmf {
            counts: vec![500, 250, 250],
            n_paths: 1000,
            seed: 0,
            dt: 0.0,
            horizon: 0.0,
        };
        let report = compare_pmf(&emp, &table).unwrap();
        assert_eq!(report.tv, 0.0);
        assert!(report.chi2_pvalue > 0.999, "p = {}", report.chi2_pvalue);
    }

    #[test]
    fn starved_table_is_refused() {
        let table = PmfTable {
            t: 1.0,
            probs: vec![0.5, 0.25],
            truncation_n: 1,
            mass_covered: 0.75,
        };
        let emp = EmpiricalPmf {
            counts: vec![750, 250],
            n_paths: 1000,
            seed: 0,
            dt: 0.0,
            horizon: 0.0,
        };
        assert!(matches!(
            compare_pmf(&emp, &table),
            Err(Error::InsufficientCoverage { .. })
        ));
    }

    #[test]
    fn seeded_runs_are_bitwise_identical() {
        let model = pair_model(0.4, 1.0, vec![0.5, 0.5]);
        let cfg = McConfig { n_paths: 500, seed: 99, ..Default::default() };
        let a = simulate_model(&model, 0.8, &cfg).unwrap();
        let b = simulate_model(&model, 0.8, &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate_model(&model, 0.8, &McConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn hopeless_horizon_errors_after_doublings() {
        let tc = TimeChange::StablePair { nu: 0.3, lambda: 1.0 };
        let params = GcpParams::new(vec![1.0]).unwrap();
        let cfg = McConfig {
            n_paths: 100,
            seed: 3,
            horizon_factor: 1e-8,
            dt_rel: 1e-2,
        };
        assert!(matches!(
            simulate_tc_gcp(&tc, &params, 1.0, &cfg),
            Err(Error::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn modest_horizon_recovers_by_doubling() {
        // factor 1 is too short for a fair share of paths; the per-path
        // doubling has to absorb them without errors
        let model = pair_model(0.3, 1.0, vec![1.0]);
        let lean = McConfig { n_paths: 2000, seed: 17, horizon_factor: 1.0, dt_rel: 1e-3 };
        let emp = simulate_model(&model, 1.0, &lean).unwrap();
        assert_eq!(emp.counts.iter().sum::<u64>(), 2000);
    }

    #[test]
    fn halving_dt_changes_little() {
        let model = pair_model(0.3, 1.0, vec![1.0]);
        let table = table_for(&model, 1.0);
        let coarse = McConfig { n_paths: 50_000, seed: 21, ..Default::default() };
        let fine = McConfig { dt_rel: coarse.dt_rel / 2.0, ..coarse };
        let tv_coarse = compare_pmf(&simulate_model(&model, 1.0, &coarse).unwrap(), &table)
            .unwrap()
            .tv;
        let tv_fine = compare_pmf(&simulate_model(&model, 1.0, &fine).unwrap(), &table)
            .unwrap()
            .tv;
        assert!(
            (tv_coarse - tv_fine).abs() < 0.005,
            "tv {tv_coarse} vs {tv_fine}"
        );
    }

    #[test]
    fn first_passage_and_level_routes_agree() {
        // P{L(t) < x} = P{H(x) > t}: the discretized first-passage sampler
        // against exact single-increment draws of the subordinator
        let tc = TimeChange::StablePair { nu: 0.3, lambda: 1.0 };
        let cfg = McConfig { n_paths: 20_000, seed: 13, ..Default::default() };
        let t = 1.0;
        let l_samples = sample_inverse_clock(&tc, t, &cfg).unwrap();
        for &x in &[0.3f64, 0.8] {
            let h_samples = sample_clock_level(&tc, x, &cfg).unwrap();
            let n = cfg.n_paths as f64;
            let p1 = l_samples.iter().filter(|&&v| v < x).count() as f64 / n;
            let p2 = h_samples.iter().filter(|&&v| v > t).count() as f64 / n;
            let se = (p1 * (1.0 - p1) / n + p2 * (1.0 - p2) / n).sqrt();
            assert!(
                (p1 - p2).abs() <= 3.0 * se + 5e-3,
                "x = {x}: {p1} vs {p2} (se {se})"
            );
        }
    }

    #[test]
    fn config_validation() {
        let ok = McConfig::default();
        assert!(ok.validate().is_ok());
        assert!(McConfig { n_paths: 10, ..ok }.validate().is_err());
        assert!(McConfig { dt_rel: 0.5, ..ok }.validate().is_err());
        assert!(McConfig { horizon_factor: 0.0, ..ok }.validate().is_err());
    }
}
