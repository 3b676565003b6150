//! Probability laws of multi-jump counting processes on deterministic and
//! inverse-subordinator clocks.
//!
//! The base process performs jumps of sizes 1..k at rates λ_1..λ_k
//! ([`GcpParams`]); its pmf is a finite sum over jump profiles
//! ([`enumerate_omega`]). Conditioning on the number of jump epochs shows
//! that *any* random clock enters only through the law of a plain rate-Λ
//! Poisson count on that clock, so every time-changed pmf is a fixed
//! mixture ([`jump_sum_weights`]) of a one-parameter family of "base"
//! probabilities. The closed forms for those base probabilities are:
//!
//! * [`frac_poisson_pmf`] — single stable clock, Prabhakar function;
//! * [`tc_poisson_pmf`] — pair clock with exponent s^{2ν} + 2λs^ν, split by
//!   the sign of λ² − Λ (double vs distinct real roots of the shifted
//!   quadratic); Λ > λ² has no closed form and is a regime error;
//! * [`general_tc_pmf`] — exponent Σ μ_j s^{νj} with the shifted polynomial
//!   factored over the reals ([`factor_rate_polynomial`]);
//! * [`tempered_tc_pmf`] — tempered pair clock, an exponentially damped
//!   integral of bivariate Mittag-Leffler kernels.
//!
//! [`tc_pmf_via_inversion`] inverts the transform numerically. It shares no
//! series code with the closed forms, serves as the oracle for all of them,
//! and is the only evaluator in regimes where the closed forms do not apply
//! (Λ > λ², complex roots). [`pmf`] and [`pmf_table`] route between these
//! automatically.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplace;
use crate::specialfn::{self, ml_conjugate_pair, MlSpec, MlValue, SeriesControl};
use crate::subordinators::CompositeClock;

/// Jump-rate vector: `rates[j-1]` is the rate λ_j of jumps of size j.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GcpParams {
    rates: Vec<f64>,
}

impl GcpParams {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() || rates.len() > 16 {
            return Err(Error::Domain("GcpParams: need 1..=16 jump rates".into()));
        }
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Domain("GcpParams: rates must be finite and ≥ 0".into()));
        }
        if rates.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Domain("GcpParams: total rate must be positive".into()));
        }
        Ok(GcpParams { rates })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Λ = Σ λ_j.
    pub fn total_rate(&self) -> f64 {
        self.rates.iter().sum()
    }

    /// Largest jump size k.
    pub fn max_jump(&self) -> usize {
        self.rates.len()
    }
}

/// Parameters of the random clock (the inverse subordinator the base
/// process is run on).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeChange {
    /// Inverse of H₁^{2ν} + (2λ)^{1/ν}H₂^ν; exponent s^{2ν} + 2λs^ν.
    /// λ = 0 degenerates to a single 2ν-stable clock.
    StablePair { nu: f64, lambda: f64 },
    /// Inverse of the tempered pair; exponent
    /// (s+ρ)^{2α} − ρ^{2α} + (s+ρ)^α − ρ^α.
    TemperedPair { alpha: f64, rho: f64 },
    /// Inverse of a weighted sum of stable subordinators; exponent
    /// Σ μ_j s^{ν_j} from (μ_j, ν_j) pairs.
    General { terms: Vec<(f64, f64)> },
}

impl TimeChange {
    pub fn validate(&self) -> Result<()> {
        match self {
            TimeChange::StablePair { nu, lambda } => {
                if !(*nu > 0.0 && *nu <= 0.5) {
                    return Err(Error::Domain(format!(
                        "stable pair clock: need ν ∈ (0, 1/2], got {nu}"
                    )));
                }
                if !(*lambda >= 0.0) || !lambda.is_finite() {
                    return Err(Error::Domain(format!(
                        "stable pair clock: need λ ≥ 0, got {lambda}"
                    )));
                }
            }
            TimeChange::TemperedPair { alpha, rho } => {
                if !(*alpha > 0.0 && *alpha <= 0.5) {
                    return Err(Error::Domain(format!(
                        "tempered pair clock: need α ∈ (0, 1/2], got {alpha}"
                    )));
                }
                if !(*rho > 0.0) {
                    return Err(Error::Domain(format!(
                        "tempered pair clock: need ρ > 0, got {rho}"
                    )));
                }
            }
            TimeChange::General { terms } => {
                if terms.is_empty() {
                    return Err(Error::Domain("general clock: need at least one term".into()));
                }
                for &(mu, order) in terms {
                    if !(mu > 0.0) || !(order > 0.0 && order < 1.0) {
                        return Err(Error::Domain(format!(
                            "general clock: need μ > 0 and ν ∈ (0, 1), got ({mu}, {order})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Laplace exponent f(s) of the underlying subordinator.
    pub fn laplace_exponent(&self, s: Complex64) -> Complex64 {
        match self {
            TimeChange::StablePair { nu, lambda } => {
                s.powf(2.0 * nu) + 2.0 * lambda * s.powf(*nu)
            }
            TimeChange::TemperedPair { alpha, rho } => {
                (s + rho).powf(2.0 * alpha) - rho.powf(2.0 * alpha) + (s + rho).powf(*alpha)
                    - rho.powf(*alpha)
            }
            TimeChange::General { terms } => {
                terms.iter().map(|&(mu, order)| mu * s.powf(order)).sum()
            }
        }
    }

    /// Path sampler for the underlying subordinator (Monte Carlo side).
    pub fn sampler(&self) -> Result<CompositeClock> {
        self.validate()?;
        match self {
            TimeChange::StablePair { nu, lambda } => {
                if *lambda > 0.0 {
                    CompositeClock::stable_pair(*nu, *lambda)
                } else {
                    CompositeClock::from_exponent_terms(&[(1.0, 2.0 * nu)])
                }
            }
            TimeChange::TemperedPair { alpha, rho } => CompositeClock::tempered_pair(*alpha, *rho),
            TimeChange::General { terms } => CompositeClock::from_exponent_terms(terms),
        }
    }
}

/// All jump profiles (x_1, …, x_k) with Σ j·x_j = n, in the deterministic
/// order produced by recursing on the largest jump size (ascending count).
pub fn enumerate_omega(k: usize, n: usize) -> Vec<Vec<u32>> {
    fn rec(k: usize, n: usize, out: &mut Vec<Vec<u32>>, tail: &mut Vec<u32>) {
        if k == 1 {
            let mut profile = vec![n as u32];
            profile.extend(tail.iter().rev());
            out.push(profile);
            return;
        }
        for j in 0..=(n / k) {
            tail.push(j as u32);
            rec(k - 1, n - j * k, out, tail);
            tail.pop();
        }
    }
    let mut out = Vec::new();
    if k == 0 {
        return out;
    }
    rec(k, n, &mut out, &mut Vec::new());
    out
}

fn check_time(t: f64, who: &str) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("{who}: t must be ≥ 0, got {t}")));
    }
    Ok(())
}

/// Pmf of the multi-jump process on the deterministic clock:
/// P(M(t) = n) = e^{−Λt} Σ_profiles Π_j (λ_j t)^{x_j}/x_j!.
pub fn gcp_pmf(params: &GcpParams, t: f64, n: usize) -> Result<f64> {
    check_time(t, "gcp_pmf")?;
    if t == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let lam = params.total_rate();
    let mut total = 0.0;
    for profile in enumerate_omega(params.max_jump(), n) {
        let mut ln_term = -lam * t;
        let mut dead = false;
        for (j, &xj) in profile.iter().enumerate() {
            if xj == 0 {
                continue;
            }
            if params.rates[j] == 0.0 {
                dead = true;
                break;
            }
            ln_term +=
                xj as f64 * (params.rates[j] * t).ln() - specialfn::ln_gamma(xj as f64 + 1.0).0;
        }
        if !dead {
            total += ln_term.exp();
        }
    }
    Ok(total)
}

/// Mixture weights (r, w_{n,r}) such that for any clock
/// P(M∘clock = n) = Σ_r w_{n,r} · P(Poisson_Λ∘clock = r).
///
/// w_{n,r} is the probability that r jumps of the superposed stream realize
/// a given total of n — a multinomial sum over [`enumerate_omega`] profiles.
/// The identity holds because conditioning on the jump count makes the
/// sizes i.i.d. with P{size = j} = λ_j/Λ, independently of the clock.
pub fn jump_sum_weights(params: &GcpParams, n: usize) -> Vec<(usize, f64)> {
    let lam = params.total_rate();
    let mut acc: Vec<(usize, f64)> = Vec::new();
    for profile in enumerate_omega(params.max_jump(), n) {
        let r: u32 = profile.iter().sum();
        let mut ln_w = specialfn::ln_gamma(r as f64 + 1.0).0 - r as f64 * lam.ln();
        let mut dead = false;
        for (j, &xj) in profile.iter().enumerate() {
            if xj == 0 {
                continue;
            }
            if params.rates[j] == 0.0 {
                dead = true;
                break;
            }
            ln_w += xj as f64 * params.rates[j].ln() - specialfn::ln_gamma(xj as f64 + 1.0).0;
        }
        if dead {
            continue;
        }
        let w = ln_w.exp();
        match acc.iter_mut().find(|(key, _)| *key == r as usize) {
            Some((_, v)) => *v += w,
            None => acc.push((r as usize, w)),
        }
    }
    acc.sort_by_key(|&(r, _)| r);
    acc
}

fn unwrap_ml(v: MlValue) -> Result<f64> {
    if !v.converged || v.low_confidence {
        return Err(Error::NonConvergence {
            terms: SeriesControl::default().max_terms,
            rel_err: v.err_estimate / v.value.abs().max(1e-290),
        });
    }
    Ok(v.value)
}

/// ML evaluation for the pmf formulas: the power series while it is
/// well-conditioned, contour quadrature of the function's own transform
/// s^{νΣγ − β} Π_j (s^ν − z_j)^{−γ_j} once cancellation has eaten the
/// series' certified digits (which happens for the large upper parameters
/// γ = O(n) the closed forms produce at moderate |z|).
///
/// The contour route needs every argument in (−∞, 0]: then s^ν − z_j never
/// vanishes off the negative real axis and the transform is analytic where
/// the Talbot contour runs. Positive arguments outside the series envelope
/// are refused rather than approximated.
fn ml_series_or_contour(nu: f64, beta: f64, gammas: &[f64], args: &[f64]) -> Result<f64> {
    let v = specialfn::ml(
        &MlSpec {
            alpha: nu,
            beta,
            gammas: gammas.to_vec(),
            args: args.to_vec(),
        },
        SeriesControl::default(),
    )?;
    // keep the series only while its error estimate (truncation tail plus
    // the rounding floor cancellation leaves) certifies ~8 relative digits;
    // the pmf sums downstream need 1e-6 absolute out of O(1) prefactors
    if v.converged && !v.low_confidence && v.err_estimate <= v.value.abs().max(1e-290) * 1e-8 {
        return Ok(v.value);
    }
    if args.iter().any(|&z| z > 0.0) {
        return unwrap_ml(v);
    }
    let power = nu * gammas.iter().sum::<f64>() - beta;
    let (gammas, args) = (gammas.to_vec(), args.to_vec());
    laplace::invert_laplace(
        move |s: Complex64| {
            let sn = s.powf(nu);
            let mut denom = Complex64::new(1.0, 0.0);
            for (g, z) in gammas.iter().zip(&args) {
                denom *= (sn - z).powf(*g);
            }
            s.powf(power) / denom
        },
        1.0,
    )
}

fn ml_pair(nu: f64, beta: f64, gamma: f64, z1: f64, z2: f64) -> Result<f64> {
    ml_series_or_contour(nu, beta, &[gamma, gamma], &[z1, z2])
}

/// Pmf of the fractional Poisson process (single stable clock of order ν):
/// p_n(t) = (λt^ν)^n E^{n+1}_{ν,νn+1}(−λt^ν).
pub fn frac_poisson_pmf(nu: f64, lambda: f64, t: f64, n: usize) -> Result<f64> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::Domain(format!("frac_poisson_pmf: need ν ∈ (0, 1], got {nu}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("frac_poisson_pmf: need λ > 0, got {lambda}")));
    }
    check_time(t, "frac_poisson_pmf")?;
    if t == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let x = lambda * t.powf(nu);
    let e = ml_series_or_contour(nu, nu * n as f64 + 1.0, &[n as f64 + 1.0], &[-x])?;
    Ok(x.powi(n as i32) * e)
}

/// Pmf of the multi-jump process on a single stable clock: the jump-count
/// mixture of [`frac_poisson_pmf`] values.
pub fn frac_gcp_pmf(nu: f64, params: &GcpParams, t: f64, n: usize) -> Result<f64> {
    let lam = params.total_rate();
    let mut total = 0.0;
    for (r, w) in jump_sum_weights(params, n) {
        total += w * frac_poisson_pmf(nu, lam, t, r)?;
    }
    Ok(total)
}

/// Pmf of a rate-Λ Poisson count on the pair clock (exponent s^{2ν} + 2λs^ν).
///
/// The shifted quadratic x² + 2λx + Λ decides the branch: Λ = λ² gives a
/// double root at −λ and Prabhakar terms; Λ < λ² gives distinct real roots
/// p_{1,2} = −λ ± √(λ²−Λ) and a bivariate series. For Λ > λ² the roots are
/// complex and there is no closed form here — that regime is a typed error,
/// and callers fall back to [`tc_pmf_via_inversion`].
pub fn tc_poisson_pmf(nu: f64, lambda: f64, big_lambda: f64, t: f64, n: usize) -> Result<f64> {
    if !(nu > 0.0 && nu <= 0.5) {
        return Err(Error::Domain(format!("tc_poisson_pmf: need ν ∈ (0, 1/2], got {nu}")));
    }
    if !(lambda > 0.0) || !(big_lambda > 0.0) {
        return Err(Error::Domain("tc_poisson_pmf: λ and Λ must be positive".into()));
    }
    check_time(t, "tc_poisson_pmf")?;
    if t == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let disc = lambda * lambda - big_lambda;
    if disc < -1e-12 * lambda * lambda {
        return Err(Error::Regime(format!(
            "tc_poisson_pmf: Λ = {big_lambda} > λ² = {}; no closed form (use the inversion route)",
            lambda * lambda
        )));
    }
    let tn = t.powf(nu);
    let k = n as f64;
    let front = big_lambda.powi(n as i32);
    let beta1 = 2.0 * k * nu + 1.0;
    let beta2 = (2.0 * k + 1.0) * nu + 1.0;
    if disc <= 1e-12 * lambda * lambda {
        // double root: λ^{2n}t^{2nν}E^{2n+1}(−λt^ν) + λ^{2n+1}t^{(2n+1)ν}E^{2n+2}(−λt^ν)
        let e1 = ml_series_or_contour(nu, beta1, &[2.0 * k + 1.0], &[-lambda * tn])?;
        let e2 = ml_series_or_contour(nu, beta2, &[2.0 * k + 2.0], &[-lambda * tn])?;
        Ok(front * (t.powf(2.0 * k * nu) * e1 + lambda * t.powf((2.0 * k + 1.0) * nu) * e2))
    } else {
        let root = disc.sqrt();
        let (p1, p2) = (-lambda + root, -lambda - root);
        let e1 = ml_pair(nu, beta1, k + 1.0, p1 * tn, p2 * tn)?;
        let e2 = ml_pair(nu, beta2, k + 1.0, p1 * tn, p2 * tn)?;
        Ok(front * (t.powf(2.0 * k * nu) * e1 + 2.0 * lambda * t.powf((2.0 * k + 1.0) * nu) * e2))
    }
}

/// Same base pmf by numerical inversion of
/// p̂_n(s) = Λ^n (f(s)/s) / (f(s) + Λ)^{n+1}, f = clock exponent.
///
/// Independent of every series evaluator above; the second leg of all
/// dual-route checks and the only evaluator where closed forms don't apply.
pub fn tc_pmf_via_inversion(tc: &TimeChange, big_lambda: f64, t: f64, n: usize) -> Result<f64> {
    tc.validate()?;
    if !(big_lambda > 0.0) {
        return Err(Error::Domain("tc_pmf_via_inversion: Λ must be positive".into()));
    }
    check_time(t, "tc_pmf_via_inversion")?;
    if t == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let fhat = |s: Complex64| {
        let f = tc.laplace_exponent(s);
        big_lambda.powi(n as i32) * (f / s) / (f + big_lambda).powu(n as u32 + 1)
    };
    laplace::invert_laplace(fhat, t)
}

/// Pmf of the multi-jump process on the pair clock: the jump-count mixture
/// of pair-clock Poisson probabilities, using the closed form when λ ≥ √Λ
/// and the inversion route otherwise.
pub fn tc_gcp_pmf(nu: f64, lambda: f64, params: &GcpParams, t: f64, n: usize) -> Result<f64> {
    let big_lambda = params.total_rate();
    let mut total = 0.0;
    for (r, w) in jump_sum_weights(params, n) {
        let base = match tc_poisson_pmf(nu, lambda, big_lambda, t, r) {
            Err(Error::Regime(_)) => {
                tc_pmf_via_inversion(&TimeChange::StablePair { nu, lambda }, big_lambda, t, r)?
            }
            other => other?,
        };
        total += w * base;
    }
    Ok(total)
}

/// A clock exponent Σ μ_j s^{νj} together with the real factorization
/// leading·Π (x − η_i)^{m_i} of the shifted polynomial Σ μ_j x^j + Λ.
#[derive(Debug, Clone)]
pub struct FactoredRatePoly {
    pub mus: Vec<f64>,
    pub big_lambda: f64,
    pub leading: f64,
    pub roots: Vec<f64>,
    pub mults: Vec<u32>,
}

/// Factor Σ μ_j x^j + Λ over the reals.
///
/// Roots come from companion-matrix eigenvalues. An eigensolver resolves an
/// exactly m-fold root only to ~ε^{1/m}, so nearby eigenvalues are merged
/// on a tolerance ladder and a clustering is accepted only when re-expanding
/// Π(x−η_i)^{m_i} reproduces the coefficients to 1e-9 relative. A genuinely
/// complex pair is a typed error: the closed form downstream needs real
/// roots, and complex-root clocks go through the inversion route.
pub fn factor_rate_polynomial(mus: &[f64], big_lambda: f64) -> Result<FactoredRatePoly> {
    let n = mus.len();
    if n == 0 || n > 8 {
        return Err(Error::Domain("factor_rate_polynomial: need 1..=8 coefficients".into()));
    }
    if !(big_lambda > 0.0) || mus.iter().any(|m| !m.is_finite()) {
        return Err(Error::Domain("factor_rate_polynomial: bad inputs".into()));
    }
    let leading = mus[n - 1];
    if leading.abs() < 1e-12 {
        return Err(Error::Domain(
            "factor_rate_polynomial: leading coefficient must be nonzero".into(),
        ));
    }
    // monic form x^n + c_{n−1}x^{n−1} + … + c_1 x + c_0
    let mut c = vec![0.0; n];
    c[0] = big_lambda / leading;
    for j in 1..n {
        c[j] = mus[j - 1] / leading;
    }
    let eigen = companion_eigenvalues(&c);

    // Coarse to fine: an m-fold root scatters eigenvalues by ~ε^{1/m}, so a
    // fine tolerance would "verify" it as m spurious singletons (their
    // symmetric functions still match the coefficients). Start coarse so
    // equal roots merge; over-merged distinct roots fail re-expansion and
    // fall through to the finer rungs.
    for &tol in &[1e-3, 1e-5, 1e-7, 1e-9] {
        if let Some((roots, mults)) = cluster_real(&eigen, tol) {
            if verify_factorization(&c, &roots, &mults, 1e-9) {
                return Ok(FactoredRatePoly {
                    mus: mus.to_vec(),
                    big_lambda,
                    leading,
                    roots,
                    mults,
                });
            }
        }
    }
    let worst_im = eigen.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    Err(Error::ComplexRoots(worst_im))
}

fn companion_eigenvalues(c: &[f64]) -> Vec<Complex64> {
    let n = c.len();
    if n == 1 {
        return vec![Complex64::new(-c[0], 0.0)];
    }
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for j in 0..n {
        m[(j, n - 1)] = -c[j];
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect()
}

/// Merge eigenvalues closer than `tol` (relative to the largest modulus);
/// None if a cluster mean keeps a significant imaginary part.
fn cluster_real(eigen: &[Complex64], tol: f64) -> Option<(Vec<f64>, Vec<u32>)> {
    let scale = eigen.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let mut used = vec![false; eigen.len()];
    let mut roots = Vec::new();
    let mut mults = Vec::new();
    for i in 0..eigen.len() {
        if used[i] {
            continue;
        }
        let mut members = vec![eigen[i]];
        used[i] = true;
        for j in i + 1..eigen.len() {
            if !used[j] && (eigen[j] - eigen[i]).norm() <= tol * scale {
                members.push(eigen[j]);
                used[j] = true;
            }
        }
        let mean = members.iter().sum::<Complex64>() / members.len() as f64;
        if mean.im.abs() > tol * scale {
            return None;
        }
        roots.push(mean.re);
        mults.push(members.len() as u32);
    }
    let mut order: Vec<usize> = (0..roots.len()).collect();
    order.sort_by(|&a, &b| roots[a].total_cmp(&roots[b]));
    Some((
        order.iter().map(|&i| roots[i]).collect(),
        order.iter().map(|&i| mults[i]).collect(),
    ))
}

/// Re-expand Π (x − η_i)^{m_i} and compare with the monic coefficients.
fn verify_factorization(c: &[f64], roots: &[f64], mults: &[u32], rel_tol: f64) -> bool {
    let mut poly = vec![1.0f64];
    for (&r, &m) in roots.iter().zip(mults) {
        for _ in 0..m {
            let mut next = vec![0.0; poly.len() + 1];
            for (i, &p) in poly.iter().enumerate() {
                next[i + 1] += p;
                next[i] -= r * p;
            }
            poly = next;
        }
    }
    if poly.len() != c.len() + 1 {
        return false;
    }
    let scale = c.iter().fold(1.0f64, |a, &x| a.max(x.abs()));
    c.iter()
        .zip(&poly)
        .all(|(&want, &got)| (want - got).abs() <= rel_tol * scale)
}

/// Pmf of a rate-Λ Poisson count on the general clock, from the factored
/// shifted polynomial:
///
/// ```text
/// p_n(t) = Λ^n/leading^{n+1} · Σ_j μ_j t^{δ_j−1}
///          E^{(m_1(n+1), …, m_M(n+1))}_{ν, δ_j}(η_1 t^ν, …, η_M t^ν),
/// δ_j = ν(N(n+1) − j) + 1.
/// ```
///
/// Valid for ν·N ≤ 1 (all exponent orders νj stay in (0, 1]) and at most
/// four distinct roots (the multivariate series arity cap).
pub fn general_tc_pmf(nu: f64, fact: &FactoredRatePoly, t: f64, n: usize) -> Result<f64> {
    let nn = fact.mus.len() as f64;
    if !(nu > 0.0) || nu * nn > 1.0 + 1e-12 {
        return Err(Error::Domain(format!(
            "general_tc_pmf: need 0 < ν ≤ 1/N = {:.6}, got {nu}",
            1.0 / nn
        )));
    }
    if fact.roots.len() > 4 {
        return Err(Error::Domain(
            "general_tc_pmf: more than four distinct roots; use the inversion route".into(),
        ));
    }
    check_time(t, "general_tc_pmf")?;
    if t == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let tn = t.powf(nu);
    let gammas: Vec<f64> = fact.mults.iter().map(|&m| m as f64 * (n as f64 + 1.0)).collect();
    let args: Vec<f64> = fact.roots.iter().map(|&r| r * tn).collect();
    let mut total = 0.0;
    for (j, &mu) in fact.mus.iter().enumerate() {
        if mu == 0.0 {
            continue;
        }
        let delta = nu * (nn * (n as f64 + 1.0) - (j as f64 + 1.0)) + 1.0;
        let e = ml_series_or_contour(nu, delta, &gammas, &args)?;
        total += mu * t.powf(delta - 1.0) * e;
    }
    Ok(fact.big_lambda.powi(n as i32) / fact.leading.powi(n as i32 + 1) * total)
}

/// Pmf of a rate-λ Poisson count on the tempered pair clock.
///
/// With u = (s+ρ)^α the shifted transform denominator factors through
/// u² + u + (λ−C), C = ρ^{2α} + ρ^α, with roots
/// r_{1,2} = −1/2 ± √(1 + 4(C−λ))/2 (a conjugate pair once λ > C + 1/4,
/// handled by the complex-argument series). The transform inverts to
///
/// ```text
/// p_0(t) = 1 − λ ∫₀ᵗ g₁,   p_n(t) = λ^n (∫₀ᵗ g_n − λ ∫₀ᵗ g_{n+1}),
/// g_m(τ) = e^{−ρτ} τ^{2αm−1} E^{(m,m)}_{α,2αm}(r₁τ^α, r₂τ^α),
/// ```
///
/// and the weak τ^{2αm−1} endpoint singularity is removed exactly by the
/// substitution v = (τ/t)^{2αm} before adaptive quadrature.
pub fn tempered_tc_pmf(alpha: f64, rho: f64, lambda: f64, t: f64, n: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::Domain(format!(
            "tempered_tc_pmf: need α ∈ (0, 1/2], got {alpha}"
        )));
    }
    if !(rho > 0.0) || !(lambda > 0.0) {
        return Err(Error::Domain("tempered_tc_pmf: ρ and λ must be positive".into()));
    }
    check_time(t, "tempered_tc_pmf")?;
    if t == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let big_c = rho.powf(2.0 * alpha) + rho.powf(alpha);
    let disc = 1.0 + 4.0 * (big_c - lambda);

    let damped_integral = |m: usize| -> Result<f64> {
        let mf = m as f64;
        let power = 2.0 * alpha * mf;
        let kernel = |tau: f64| -> Result<f64> {
            let ta = tau.powf(alpha);
            if disc >= 0.0 {
                let half = 0.5 * disc.sqrt();
                ml_pair(alpha, power, mf, (-0.5 + half) * ta, (-0.5 - half) * ta)
            } else {
                let z = Complex64::new(-0.5, 0.5 * (-disc).sqrt()) * ta;
                unwrap_ml(ml_conjugate_pair(alpha, power, mf, z, SeriesControl::default())?)
            }
        };
        let integrand = |v: f64| {
            let tau = t * v.powf(1.0 / power);
            (-rho * tau).exp() * kernel(tau).unwrap_or(f64::NAN)
        };
        let val = laplace::integrate(integrand, 0.0, 1.0, 1e-10)?;
        if !val.is_finite() {
            return Err(Error::NonConvergence { terms: 0, rel_err: f64::NAN });
        }
        Ok(t.powf(power) / power * val)
    };

    if n == 0 {
        Ok(1.0 - lambda * damped_integral(1)?)
    } else {
        let a = damped_integral(n)?;
        let b = damped_integral(n + 1)?;
        Ok(lambda.powi(n as i32) * (a - lambda * b))
    }
}

/// Which representation of the inverse-clock Laplace functional to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LtForm {
    /// Bivariate series in the two quadratic roots; valid in every regime
    /// (complex roots go through the conjugate-pair series).
    Bivariate,
    /// Partial-fraction combination of one-index functions,
    /// ½[(1 + λ/√(λ²−γ))E_ν(r₁t^ν) + (1 − λ/√(λ²−γ))E_ν(r₂t^ν)];
    /// needs γ < λ² strictly.
    PartialFractions,
}

/// E[e^{−γ L(t)}] for the inverse pair clock, in the requested form, with
/// r_{1,2} = −λ ± √(λ²−γ).
pub fn inverse_clock_laplace(
    nu: f64,
    lambda: f64,
    gamma: f64,
    t: f64,
    form: LtForm,
) -> Result<f64> {
    if !(nu > 0.0 && nu <= 0.5) || !(lambda > 0.0) {
        return Err(Error::Domain(
            "inverse_clock_laplace: need ν ∈ (0, 1/2], λ > 0".into(),
        ));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!(
            "inverse_clock_laplace: need γ ≥ 0, got {gamma}"
        )));
    }
    check_time(t, "inverse_clock_laplace")?;
    if t == 0.0 || gamma == 0.0 {
        return Ok(1.0);
    }
    let tn = t.powf(nu);
    let disc = lambda * lambda - gamma;
    match form {
        LtForm::Bivariate => {
            if disc >= 0.0 {
                let root = disc.sqrt();
                let (r1, r2) = (-lambda + root, -lambda - root);
                let e1 = ml_pair(nu, 1.0, 1.0, r1 * tn, r2 * tn)?;
                let e2 = ml_pair(nu, nu + 1.0, 1.0, r1 * tn, r2 * tn)?;
                Ok(e1 + 2.0 * lambda * tn * e2)
            } else {
                let z = Complex64::new(-lambda, (-disc).sqrt()) * tn;
                let ctl = SeriesControl::default();
                let e1 = unwrap_ml(ml_conjugate_pair(nu, 1.0, 1.0, z, ctl)?)?;
                let e2 = unwrap_ml(ml_conjugate_pair(nu, nu + 1.0, 1.0, z, ctl)?)?;
                Ok(e1 + 2.0 * lambda * tn * e2)
            }
        }
        LtForm::PartialFractions => {
            if disc <= 1e-12 * lambda * lambda {
                return Err(Error::Regime(format!(
                    "partial-fraction form needs γ < λ² strictly (γ = {gamma}, λ² = {})",
                    lambda * lambda
                )));
            }
            let root = disc.sqrt();
            let w = lambda / root;
            let e1 = specialfn::ml_one(nu, (-lambda + root) * tn)?;
            let e2 = specialfn::ml_one(nu, (-lambda - root) * tn)?;
            Ok(0.5 * ((1.0 + w) * e1 + (1.0 - w) * e2))
        }
    }
}

/// γ(u) = Σ_j λ_j (1 − u^j), the rate symbol the pgf substitutes for Λ.
pub fn pgf_symbol(params: &GcpParams, u: f64) -> f64 {
    params
        .rates
        .iter()
        .enumerate()
        .map(|(j, &lam)| lam * (1.0 - u.powi(j as i32 + 1)))
        .sum()
}

/// Probability generating function E[u^{M(L(t))}] of the multi-jump process
/// on the pair clock: the Laplace functional at γ(u) = Σλ_j(1−u^j).
///
/// Both representations are computed whenever both apply and a mismatch
/// beyond 1e-8 is a typed error; the bivariate value is returned (it is the
/// one valid without the γ < λ² restriction).
pub fn pgf(params: &GcpParams, nu: f64, lambda: f64, u: f64, t: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("pgf: need |u| ≤ 1, got {u}")));
    }
    let gamma_u = pgf_symbol(params, u);
    if gamma_u == 0.0 {
        return Ok(1.0);
    }
    let primary = inverse_clock_laplace(nu, lambda, gamma_u, t, LtForm::Bivariate)?;
    if gamma_u < lambda * lambda * (1.0 - 1e-9) {
        let alt = inverse_clock_laplace(nu, lambda, gamma_u, t, LtForm::PartialFractions)?;
        let diff = (primary - alt).abs();
        if diff > 1e-8 * primary.abs().max(1.0) {
            return Err(Error::DualFormMismatch {
                a: primary,
                b: alt,
                diff,
            });
        }
    }
    Ok(primary)
}

/// A process model: jump rates plus an optional random clock.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmfModel {
    pub params: GcpParams,
    /// None = deterministic clock.
    pub clock: Option<TimeChange>,
}

impl PmfModel {
    /// Base pmf P(Poisson_Λ∘clock = r): closed form where one exists, the
    /// inversion route in closed-form-free regimes.
    fn base_pmf(&self, t: f64, r: usize) -> Result<f64> {
        let lam = self.params.total_rate();
        match &self.clock {
            None => {
                if t == 0.0 {
                    return Ok(if r == 0 { 1.0 } else { 0.0 });
                }
                let ln =
                    -lam * t + r as f64 * (lam * t).ln() - specialfn::ln_gamma(r as f64 + 1.0).0;
                Ok(ln.exp())
            }
            Some(TimeChange::StablePair { nu, lambda }) => {
                if *lambda == 0.0 {
                    return frac_poisson_pmf(2.0 * nu, lam, t, r);
                }
                match tc_poisson_pmf(*nu, *lambda, lam, t, r) {
                    Err(Error::Regime(_)) => tc_pmf_via_inversion(
                        &TimeChange::StablePair { nu: *nu, lambda: *lambda },
                        lam,
                        t,
                        r,
                    ),
                    other => other,
                }
            }
            Some(TimeChange::TemperedPair { alpha, rho }) => {
                tempered_tc_pmf(*alpha, *rho, lam, t, r)
            }
            Some(tc @ TimeChange::General { terms }) => {
                match general_clock_factored(terms, lam) {
                    Ok((nu, fact)) => general_tc_pmf(nu, &fact, t, r),
                    // complex roots or an incommensurate order grid: the
                    // transform still inverts fine
                    Err(Error::ComplexRoots(_)) | Err(Error::Domain(_)) => {
                        tc_pmf_via_inversion(tc, lam, t, r)
                    }
                    Err(e) => Err(e),
                }
            }
        }
    }
}

/// Express Σ μ_j s^{ν_j} as a polynomial in s^ν on the common grid
/// ν_j = ν·j (ν = smallest order) and factor the shifted polynomial.
fn general_clock_factored(terms: &[(f64, f64)], big_lambda: f64) -> Result<(f64, FactoredRatePoly)> {
    let base = terms.iter().map(|&(_, o)| o).fold(f64::INFINITY, f64::min);
    if !(base > 0.0) {
        return Err(Error::Domain("general clock: need positive orders".into()));
    }
    let mut mus: Vec<f64> = Vec::new();
    for &(mu, order) in terms {
        let ratio = order / base;
        let idx = ratio.round() as usize;
        if idx == 0 || (ratio - idx as f64).abs() > 1e-9 {
            return Err(Error::Domain(
                "general clock: orders not on a common ν-grid".into(),
            ));
        }
        if mus.len() < idx {
            mus.resize(idx, 0.0);
        }
        mus[idx - 1] += mu;
    }
    let fact = factor_rate_polynomial(&mus, big_lambda)?;
    Ok((base, fact))
}

/// P(process = n) at time t, routing to the right closed form (with
/// inversion fallback) and mixing over jump profiles.
pub fn pmf(model: &PmfModel, t: f64, n: usize) -> Result<f64> {
    if model.clock.is_none() {
        return gcp_pmf(&model.params, t, n);
    }
    let mut total = 0.0;
    for (r, w) in jump_sum_weights(&model.params, n) {
        total += w * model.base_pmf(t, r)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy)]
pub struct TableOpts {
    /// Stop once cumulative mass reaches this (unless `fixed_n` is set).
    pub target_mass: f64,
    /// Hard cap on the adaptive truncation index.
    pub n_cap: usize,
    /// Tabulate exactly n = 0..=fixed_n, overriding the mass target.
    pub fixed_n: Option<usize>,
}

impl Default for TableOpts {
    fn default() -> Self {
        TableOpts {
            target_mass: 1.0 - 1e-5,
            n_cap: 200,
            fixed_n: None,
        }
    }
}

/// Tabulated pmf with its achieved coverage.
#[derive(Debug, Clone, Serialize)]
pub struct PmfTable {
    pub t: f64,
    /// probs[n] = P(process = n) for n = 0..=truncation_n.
    pub probs: Vec<f64>,
    pub truncation_n: usize,
    pub mass_covered: f64,
}

/// Tabulate P(process = n) for n = 0, 1, … until the mass target or cap.
pub fn pmf_table(model: &PmfModel, t: f64, opts: &TableOpts) -> Result<PmfTable> {
    let mut probs = Vec::new();
    let mut mass = 0.0;
    match opts.fixed_n {
        Some(top) => {
            for n in 0..=top {
                let p = sanitize_prob(pmf(model, t, n)?, n)?;
                probs.push(p);
                mass += p;
            }
        }
        None => {
            let mut n = 0;
            while mass < opts.target_mass {
                if n > opts.n_cap {
                    return Err(Error::InsufficientCoverage {
                        covered: mass,
                        required: opts.target_mass,
                    });
                }
                let p = sanitize_prob(pmf(model, t, n)?, n)?;
                probs.push(p);
                mass += p;
                n += 1;
            }
        }
    }
    Ok(PmfTable {
        t,
        truncation_n: probs.len() - 1,
        probs,
        mass_covered: mass,
    })
}

/// Clamp roundoff-level negatives to zero; anything beyond roundoff is a
/// real defect and must surface.
fn sanitize_prob(p: f64, n: usize) -> Result<f64> {
    if !p.is_finite() || p < -1e-9 || p > 1.0 + 1e-9 {
        return Err(Error::Domain(format!(
            "pmf value out of [0,1] beyond roundoff at n = {n}: {p}"
        )));
    }
    Ok(p.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn omega_profiles_frozen_order() {
        assert_eq!(enumerate_omega(1, 3), vec![vec![3]]);
        assert_eq!(enumerate_omega(2, 2), vec![vec![2, 0], vec![0, 1]]);
        assert_eq!(
            enumerate_omega(3, 4),
            vec![vec![4, 0, 0], vec![2, 1, 0], vec![0, 2, 0], vec![1, 0, 1]]
        );
        assert_eq!(enumerate_omega(3, 0), vec![vec![0, 0, 0]]);
    }

    #[test]
    fn omega_profiles_satisfy_constraint() {
        for k in 1..=4usize {
            for n in 0..=9usize {
                let profiles = enumerate_omega(k, n);
                for profile in &profiles {
                    let total: usize =
                        profile.iter().enumerate().map(|(j, &c)| (j + 1) * c as usize).sum();
                    assert_eq!(total, n);
                }
                let mut sorted = profiles.clone();
                sorted.sort();
                sorted.dedup();
                assert_eq!(sorted.len(), profiles.len());
            }
        }
    }

    #[test]
    fn gcp_pmf_two_unit_rates() {
        // k = 2, λ = (1,1), t = 1: p_2 = e^{−2}(1/2! + 1) = 1.5e^{−2}
        let params = GcpParams::new(vec![1.0, 1.0]).unwrap();
        let p = gcp_pmf(&params, 1.0, 2).unwrap();
        assert!(rel(p, 1.5 * (-2.0f64).exp()) < 1e-13);
        assert!(rel(p, 0.203_002_924_854_919_05) < 1e-12);
        // n = 0 is the no-event probability
        assert!(rel(gcp_pmf(&params, 1.0, 0).unwrap(), (-2.0f64).exp()) < 1e-14);
    }

    #[test]
    fn gcp_pmf_single_stream_is_poisson() {
        let params = GcpParams::new(vec![0.7]).unwrap();
        let t = 2.3;
        let mut direct = (-0.7f64 * t).exp();
        for n in 0..12usize {
            if n > 0 {
                direct *= 0.7 * t / n as f64;
            }
            assert!(rel(gcp_pmf(&params, t, n).unwrap(), direct) < 1e-13);
        }
    }

    #[test]
    fn gcp_pmf_normalizes() {
        let params = GcpParams::new(vec![0.3, 0.7, 0.2]).unwrap();
        let total: f64 = (0..60).map(|n| gcp_pmf(&params, 1.4, n).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-10, "mass {total}");
    }

    #[test]
    fn jump_weights_reconstruct_gcp() {
        // mixing a plain Poisson base with the profile weights must equal
        // the product-form pmf: same law built along two different routes
        let params = GcpParams::new(vec![0.3, 0.7, 0.2]).unwrap();
        let lam = params.total_rate();
        let t = 1.7;
        for n in 0..9usize {
            let mut mixed = 0.0;
            for (r, w) in jump_sum_weights(&params, n) {
                let ln =
                    -lam * t + r as f64 * (lam * t).ln() - specialfn::ln_gamma(r as f64 + 1.0).0;
                mixed += w * ln.exp();
            }
            assert!(rel(mixed, gcp_pmf(&params, t, n).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn frac_poisson_reduces_and_normalizes() {
        // ν = 1 is the plain Poisson pmf
        let (lam, t): (f64, f64) = (0.9, 2.0);
        let mut direct = (-lam * t).exp();
        for n in 0..10usize {
            if n > 0 {
                direct *= lam * t / n as f64;
            }
            assert!(rel(frac_poisson_pmf(1.0, lam, t, n).unwrap(), direct) < 1e-10);
        }
        // n = 0 is the survival function E_ν(−λt^ν)
        let p0 = frac_poisson_pmf(0.6, 1.3, 0.8, 0).unwrap();
        let surv = specialfn::ml_one(0.6, -1.3 * 0.8f64.powf(0.6)).unwrap();
        assert!(rel(p0, surv) < 1e-13);
        // normalization at ν = 1/2
        let mass: f64 = (0..=30)
            .map(|n| frac_poisson_pmf(0.5, 1.0, 1.0, n).unwrap())
            .sum();
        assert!(mass >= 1.0 - 1e-8, "mass = {mass}");
    }

    #[test]
    fn frac_gcp_reduces_to_components() {
        // k = 1 collapses onto the fractional Poisson pmf
        let single = GcpParams::new(vec![1.1]).unwrap();
        for n in 0..6usize {
            let a = frac_gcp_pmf(0.7, &single, 1.3, n).unwrap();
            let b = frac_poisson_pmf(0.7, 1.1, 1.3, n).unwrap();
            assert!(rel(a, b) < 1e-12);
        }
        // ν = 1 collapses onto the deterministic-clock pmf
        let multi = GcpParams::new(vec![0.4, 0.6]).unwrap();
        for n in 0..8usize {
            let a = frac_gcp_pmf(1.0, &multi, 0.9, n).unwrap();
            let b = gcp_pmf(&multi, 0.9, n).unwrap();
            assert!(rel(a, b) < 1e-10, "n = {n}: {a} vs {b}");
        }
    }

    #[test]
    fn pair_clock_branches_agree_at_collapse() {
        // evaluate the distinct-root arrangement at a double root and
        // compare with the Prabhakar arrangement: different series, same law
        let (nu, lambda, t): (f64, f64, f64) = (0.45, 0.9, 1.3);
        let big_lambda = lambda * lambda;
        for n in 0..5usize {
            let routed = tc_poisson_pmf(nu, lambda, big_lambda, t, n).unwrap();
            let k = n as f64;
            let tn = t.powf(nu);
            let e1 =
                ml_pair(nu, 2.0 * k * nu + 1.0, k + 1.0, -lambda * tn, -lambda * tn).unwrap();
            let e2 = ml_pair(nu, (2.0 * k + 1.0) * nu + 1.0, k + 1.0, -lambda * tn, -lambda * tn)
                .unwrap();
            let bivariate = big_lambda.powi(n as i32)
                * (t.powf(2.0 * k * nu) * e1 + 2.0 * lambda * t.powf((2.0 * k + 1.0) * nu) * e2);
            assert!(rel(routed, bivariate) < 1e-11, "n = {n}");
        }
    }

    #[test]
    fn pair_clock_pmf_vs_inversion() {
        let (nu, lambda, t): (f64, f64, f64) = (0.4, 1.0, 1.2);
        for &big_lambda in &[0.8f64, 1.0] {
            let tc = TimeChange::StablePair { nu, lambda };
            for n in 0..4usize {
                let closed = tc_poisson_pmf(nu, lambda, big_lambda, t, n).unwrap();
                let inverted = tc_pmf_via_inversion(&tc, big_lambda, t, n).unwrap();
                assert!(
                    (closed - inverted).abs() < 1e-6,
                    "Λ = {big_lambda}, n = {n}: {closed} vs {inverted}"
                );
            }
        }
    }

    #[test]
    fn pair_clock_refuses_complex_regime() {
        let r = tc_poisson_pmf(0.4, 1.0, 1.5, 1.0, 0);
        assert!(matches!(r, Err(Error::Regime(_))));
    }

    #[test]
    fn inversion_covers_complex_regime_mass() {
        // Λ > λ²: only the inversion route applies; the law must still be
        // a probability distribution
        let tc = TimeChange::StablePair { nu: 0.3, lambda: 1.0 };
        let mut mass = 0.0;
        for n in 0..40usize {
            let p = tc_pmf_via_inversion(&tc, 2.0, 1.0, n).unwrap();
            assert!(p >= -1e-8, "p_{n} = {p}");
            mass += p;
            if mass >= 1.0 - 1e-5 {
                break;
            }
        }
        assert!(mass >= 1.0 - 1e-5, "mass = {mass}");
    }

    #[test]
    fn inversion_reduces_to_frac_poisson() {
        // λ = 0 degenerates the pair clock to a single 2ν-stable clock
        let tc = TimeChange::StablePair { nu: 0.35, lambda: 0.0 };
        for n in 0..4usize {
            let a = tc_pmf_via_inversion(&tc, 1.2, 0.9, n).unwrap();
            let b = frac_poisson_pmf(0.7, 1.2, 0.9, n).unwrap();
            assert!((a - b).abs() < 1e-6, "n = {n}: {a} vs {b}");
        }
    }

    #[test]
    fn pair_clock_pmf_nonnegative_and_normalized() {
        let (nu, lambda, big_lambda, t) = (0.5, 1.0, 1.0, 1.0);
        let mut mass = 0.0;
        for n in 0..60usize {
            let p = tc_poisson_pmf(nu, lambda, big_lambda, t, n).unwrap();
            assert!(p >= -1e-12, "p_{n} = {p}");
            mass += p;
        }
        assert!((mass - 1.0).abs() < 1e-8, "mass = {mass}");
    }

    #[test]
    fn tc_gcp_mixture_is_structural() {
        // tc_gcp_pmf must equal the weight mixture of tc_poisson_pmf terms
        // exactly — it *is* that construction
        let params = GcpParams::new(vec![0.4, 0.6]).unwrap();
        let (nu, lambda, t) = (0.3, 1.1, 1.0);
        for n in 0..7usize {
            let composed = tc_gcp_pmf(nu, lambda, &params, t, n).unwrap();
            let mut manual = 0.0;
            for (r, w) in jump_sum_weights(&params, n) {
                manual += w * tc_poisson_pmf(nu, lambda, 1.0, t, r).unwrap();
            }
            assert!(rel(composed, manual) < 1e-12);
        }
    }

    #[test]
    fn tc_gcp_normalizes() {
        let params = GcpParams::new(vec![0.4, 0.6]).unwrap();
        let mut mass = 0.0;
        for n in 0..70usize {
            mass += tc_gcp_pmf(0.3, 1.1, &params, 1.0, n).unwrap();
            if mass >= 1.0 - 1e-5 {
                break;
            }
        }
        assert!(mass >= 1.0 - 1e-5, "mass = {mass}");
    }

    #[test]
    fn factoring_recovers_multiple_roots() {
        // (x+1)²
        let f = factor_rate_polynomial(&[2.0, 1.0], 1.0).unwrap();
        assert_eq!(f.mults, vec![2]);
        assert!((f.roots[0] + 1.0).abs() < 1e-7);
        // (x+1)³
        let f = factor_rate_polynomial(&[3.0, 3.0, 1.0], 1.0).unwrap();
        assert_eq!(f.mults, vec![3]);
        assert!((f.roots[0] + 1.0).abs() < 1e-5);
        // x + 5
        let f = factor_rate_polynomial(&[1.0], 5.0).unwrap();
        assert_eq!((f.roots[0], f.mults[0]), (-5.0, 1));
        // (x+1)²(x+2)
        let f = factor_rate_polynomial(&[5.0, 4.0, 1.0], 2.0).unwrap();
        assert_eq!(f.mults, vec![1, 2]);
        assert!((f.roots[0] + 2.0).abs() < 1e-7 && (f.roots[1] + 1.0).abs() < 1e-7);
        // x² + x + 1: conjugate pair
        assert!(matches!(
            factor_rate_polynomial(&[1.0, 1.0], 1.0),
            Err(Error::ComplexRoots(_))
        ));
    }

    #[test]
    fn factoring_scattered_roots_roundtrip() {
        let root_sets: Vec<Vec<f64>> = vec![
            vec![-0.5, -1.25, -3.0],
            vec![-0.1, -0.2, -4.0, -7.5],
            vec![-2.0, -2.0, -0.75],
        ];
        for roots in root_sets {
            let mut poly = vec![1.0f64];
            for &r in &roots {
                let mut next = vec![0.0; poly.len() + 1];
                for (i, &p) in poly.iter().enumerate() {
                    next[i + 1] += p;
                    next[i] -= r * p;
                }
                poly = next;
            }
            let f = factor_rate_polynomial(&poly[1..], poly[0]).unwrap();
            let mut expanded: Vec<f64> = Vec::new();
            for (&r, &m) in f.roots.iter().zip(&f.mults) {
                expanded.extend(std::iter::repeat(r).take(m as usize));
            }
            let mut expect = roots.clone();
            expect.sort_by(f64::total_cmp);
            for (a, b) in expanded.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn general_form_covers_fractional_poisson() {
        // single-term exponent s^ν: both paths must produce
        // Λ^n t^{νn} E^{n+1}_{ν,νn+1}(−Λt^ν)
        let (nu, lam, t): (f64, f64, f64) = (0.7, 1.2, 1.5);
        let fact = factor_rate_polynomial(&[1.0], lam).unwrap();
        for n in 0..6usize {
            let got = general_tc_pmf(nu, &fact, t, n).unwrap();
            let want = frac_poisson_pmf(nu, lam, t, n).unwrap();
            assert!(rel(got, want) < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn general_form_matches_pair_routing() {
        // quadratic exponent via the generic pipeline vs the routed branches
        let (nu, lambda, t): (f64, f64, f64) = (0.35, 1.1, 0.9);
        for &big_lambda in &[0.9f64, 1.21] {
            let fact = factor_rate_polynomial(&[2.0 * lambda, 1.0], big_lambda).unwrap();
            for n in 0..4usize {
                let generic = general_tc_pmf(nu, &fact, t, n).unwrap();
                let routed = tc_poisson_pmf(nu, lambda, big_lambda, t, n).unwrap();
                assert!(
                    rel(generic, routed) < 1e-10,
                    "Λ = {big_lambda}, n = {n}: {generic} vs {routed}"
                );
            }
        }
    }

    fn binom(n: usize, k: usize) -> f64 {
        let mut v = 1.0;
        for i in 0..k {
            v = v * (n - i) as f64 / (i + 1) as f64;
        }
        v
    }

    #[test]
    fn general_form_binomial_single_root() {
        // μ_j = C(N,j)λ'^{N−j}, Λ = λ'^N makes the shifted polynomial
        // (x + λ')^N; the factored pipeline must agree with the explicit
        // single-root expression assembled from Prabhakar terms
        let (nu, lp, t): (f64, f64, f64) = (0.3, 0.8, 1.1);
        let nn = 3usize;
        let mus: Vec<f64> = (1..=nn)
            .map(|j| binom(nn, j) * lp.powi((nn - j) as i32))
            .collect();
        let big_lambda = lp.powi(nn as i32);
        let fact = factor_rate_polynomial(&mus, big_lambda).unwrap();
        assert_eq!(fact.mults, vec![nn as u32]);
        let tn = t.powf(nu);
        for n in 0..4usize {
            let got = general_tc_pmf(nu, &fact, t, n).unwrap();
            let mut want = 0.0;
            for j in 1..=nn {
                let delta = nu * ((nn * (n + 1) - j) as f64) + 1.0;
                let e =
                    specialfn::ml_prabhakar(nu, delta, (nn * (n + 1)) as f64, -lp * tn).unwrap();
                want += mus[j - 1] * t.powf(delta - 1.0) * e;
            }
            want *= big_lambda.powi(n as i32);
            assert!(rel(got, want) < 1e-8, "n = {n}: {got} vs {want}");
        }
    }

    #[test]
    fn cubic_clock_vs_inversion() {
        // exponent 5s^{0.3} + 4s^{0.6} + s^{0.9}; shifted polynomial
        // (x+1)²(x+2) at Λ = 2
        let nu = 0.3;
        let fact = factor_rate_polynomial(&[5.0, 4.0, 1.0], 2.0).unwrap();
        let tc = TimeChange::General {
            terms: vec![(5.0, 0.3), (4.0, 0.6), (1.0, 0.9)],
        };
        for n in 0..3usize {
            for &t in &[0.6f64, 1.1] {
                let closed = general_tc_pmf(nu, &fact, t, n).unwrap();
                let inverted = tc_pmf_via_inversion(&tc, 2.0, t, n).unwrap();
                assert!(
                    (closed - inverted).abs() < 1e-6,
                    "n = {n}, t = {t}: {closed} vs {inverted}"
                );
            }
        }
    }

    #[test]
    fn tempered_pmf_vs_inversion() {
        // spans real-root (λ ≤ C + 1/4) and conjugate-pair (λ > C + 1/4)
        // regimes, and a non-unit rate to pin the λ^n prefactor
        for &(alpha, rho, lambda) in &[(0.4f64, 1.0f64, 1.0f64), (0.45, 0.8, 0.7), (0.4, 0.1, 1.0)]
        {
            let tc = TimeChange::TemperedPair { alpha, rho };
            for n in 0..3usize {
                let t = 0.9;
                let closed = tempered_tc_pmf(alpha, rho, lambda, t, n).unwrap();
                let inverted = tc_pmf_via_inversion(&tc, lambda, t, n).unwrap();
                assert!(
                    (closed - inverted).abs() < 1e-5,
                    "α={alpha} ρ={rho} λ={lambda} n={n}: {closed} vs {inverted}"
                );
            }
        }
    }

    #[test]
    fn tempered_pmf_nonnegative_with_partial_mass() {
        let (alpha, rho, lambda, t) = (0.4, 0.5, 1.0, 1.0);
        let mut mass = 0.0;
        for n in 0..25usize {
            let p = tempered_tc_pmf(alpha, rho, lambda, t, n).unwrap();
            assert!(p >= -1e-9, "p_{n} = {p}");
            mass += p;
        }
        assert!((mass - 1.0).abs() < 1e-6, "mass = {mass}");
    }

    #[test]
    fn tempered_limit_matches_pair_clock() {
        // ρ → 0 turns the exponent into s^{2α} + s^α, the pair clock with
        // telegraph coefficient 1/2
        let (alpha, lambda_rate, t) = (0.4, 0.2, 1.0);
        for n in 0..3usize {
            let tempered = tempered_tc_pmf(alpha, 1e-4, lambda_rate, t, n).unwrap();
            let pair = tc_poisson_pmf(alpha, 0.5, lambda_rate, t, n).unwrap();
            assert!(
                (tempered - pair).abs() < 1e-2,
                "n = {n}: {tempered} vs {pair}"
            );
        }
    }

    #[test]
    fn laplace_functional_forms_agree() {
        let (nu, lambda, t) = (0.3, 1.0, 1.0);
        for &gamma in &[0.1f64, 0.5, 0.9] {
            let a = inverse_clock_laplace(nu, lambda, gamma, t, LtForm::Bivariate).unwrap();
            let b = inverse_clock_laplace(nu, lambda, gamma, t, LtForm::PartialFractions).unwrap();
            assert!(rel(a, b) < 1e-10, "γ = {gamma}: {a} vs {b}");
        }
        // conjugate regime still produces a value in (0, 1)
        let c = inverse_clock_laplace(nu, lambda, 3.0, t, LtForm::Bivariate).unwrap();
        assert!(c > 0.0 && c < 1.0, "{c}");
        // partial fractions refuse the double root
        assert!(matches!(
            inverse_clock_laplace(nu, lambda, 1.0, t, LtForm::PartialFractions),
            Err(Error::Regime(_))
        ));
    }

    #[test]
    fn pgf_normalizes_at_one() {
        let params = GcpParams::new(vec![0.4, 0.6]).unwrap();
        for &nu in &[0.3f64, 0.5] {
            let g = pgf(&params, nu, 1.1, 1.0, 1.7).unwrap();
            assert!((g - 1.0).abs() < 1e-12, "ν = {nu}: {g}");
        }
    }

    #[test]
    fn pgf_equal_rate_square_root_form() {
        // single stream with Λ = λ²: γ(u) = λ²(1−u), the roots become
        // −λ(1 ∓ √u), and the partial-fraction form is the √u formula
        let (nu, lambda, t, u): (f64, f64, f64, f64) = (0.4, 1.0, 1.0, 0.25);
        let params = GcpParams::new(vec![lambda * lambda]).unwrap();
        let general = pgf(&params, nu, lambda, u, t).unwrap();
        let su = u.sqrt();
        let tn = t.powf(nu);
        let explicit = 0.5
            * ((1.0 + 1.0 / su) * specialfn::ml_one(nu, -lambda * (1.0 - su) * tn).unwrap()
                + (1.0 - 1.0 / su) * specialfn::ml_one(nu, -lambda * (1.0 + su) * tn).unwrap());
        assert!(rel(general, explicit) < 1e-8, "{general} vs {explicit}");
    }

    #[test]
    fn pgf_matches_pmf_series() {
        let params = GcpParams::new(vec![0.5, 0.5]).unwrap();
        let (nu, lambda, t): (f64, f64, f64) = (0.4, 1.0, 0.8);
        for &u in &[0.25f64, 0.5, 0.9] {
            let mut series = 0.0;
            for n in 0..60usize {
                series += tc_gcp_pmf(nu, lambda, &params, t, n).unwrap() * u.powi(n as i32);
            }
            let g = pgf(&params, nu, lambda, u, t).unwrap();
            assert!((series - g).abs() < 1e-6, "u = {u}: {series} vs {g}");
        }
    }

    #[test]
    fn time_change_validation() {
        assert!(TimeChange::StablePair { nu: 0.3, lambda: 1.0 }.validate().is_ok());
        assert!(TimeChange::StablePair { nu: 0.3, lambda: 0.0 }.validate().is_ok());
        assert!(TimeChange::StablePair { nu: 0.6, lambda: 1.0 }.validate().is_err());
        assert!(TimeChange::TemperedPair { alpha: 0.5, rho: 1.0 }.validate().is_ok());
        assert!(TimeChange::TemperedPair { alpha: 0.0, rho: 1.0 }.validate().is_err());
        assert!(TimeChange::General { terms: vec![(1.0, 0.4)] }.validate().is_ok());
        assert!(TimeChange::General { terms: vec![(1.0, 1.0)] }.validate().is_err());
        assert!(TimeChange::General { terms: vec![] }.validate().is_err());
    }

    #[test]
    fn pmf_tables_cover_mass() {
        let model = PmfModel {
            params: GcpParams::new(vec![0.6, 0.4]).unwrap(),
            clock: Some(TimeChange::StablePair { nu: 0.5, lambda: 1.0 }),
        };
        let table = pmf_table(&model, 0.9, &TableOpts::default()).unwrap();
        assert!(table.mass_covered >= 1.0 - 1e-5);
        assert!(table.probs.iter().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(table.truncation_n + 1, table.probs.len());

        let fixed = pmf_table(
            &model,
            0.9,
            &TableOpts {
                fixed_n: Some(7),
                ..TableOpts::default()
            },
        )
        .unwrap();
        assert_eq!(fixed.probs.len(), 8);

        let starved = pmf_table(
            &model,
            0.9,
            &TableOpts {
                target_mass: 1.0 - 1e-9,
                n_cap: 3,
                fixed_n: None,
            },
        );
        assert!(matches!(starved, Err(Error::InsufficientCoverage { .. })));
    }

    #[test]
    fn pmf_routes_all_models() {
        let params = GcpParams::new(vec![0.5, 0.5]).unwrap();
        let t = 0.8;
        // deterministic clock
        let det = PmfModel { params: params.clone(), clock: None };
        assert!(rel(pmf(&det, t, 1).unwrap(), gcp_pmf(&params, t, 1).unwrap()) < 1e-14);
        // pair clock, closed-form regime (λ² = 1.21 > Λ = 1)
        let pair = PmfModel {
            params: params.clone(),
            clock: Some(TimeChange::StablePair { nu: 0.3, lambda: 1.1 }),
        };
        let a = pmf(&pair, t, 1).unwrap();
        let b = tc_gcp_pmf(0.3, 1.1, &params, t, 1).unwrap();
        assert!(rel(a, b) < 1e-14);
        // pair clock, inversion regime (λ² = 0.25 < Λ = 1)
        let inv = PmfModel {
            params: params.clone(),
            clock: Some(TimeChange::StablePair { nu: 0.3, lambda: 0.5 }),
        };
        let p = pmf(&inv, t, 0).unwrap();
        let direct =
            tc_pmf_via_inversion(&TimeChange::StablePair { nu: 0.3, lambda: 0.5 }, 1.0, t, 0)
                .unwrap();
        assert!(rel(p, direct) < 1e-12);
        // general clock on a common order grid
        let gen = PmfModel {
            params: params.clone(),
            clock: Some(TimeChange::General { terms: vec![(2.0, 0.3), (1.0, 0.6)] }),
        };
        let fact = factor_rate_polynomial(&[2.0, 1.0], 1.0).unwrap();
        let q = pmf(&gen, t, 1).unwrap();
        let mut manual = 0.0;
        for (r, w) in jump_sum_weights(&params, 1) {
            manual += w * general_tc_pmf(0.3, &fact, t, r).unwrap();
        }
        assert!(rel(q, manual) < 1e-12);
    }
}
