//! Ruin theory for the multi-jump risk model: premiums come in at rate c,
//! the counting process decides claim epochs and sizes, and a size-j jump
//! triggers a claim distributed as the j-fold convolution Gamma(j·r, a) of
//! the unit gamma claim.
//!
//! The non-ruin probability is computed from its exponentially tilted
//! convolution series. The printed form convolves powers of the bracket
//! e^{au} − (1/Λ)Σ_j λ_j (au)^{jr} E_{1,1+jr}(au), whose terms grow like
//! e^{au}; since E_{1,1+β}(z) = z^{−β}e^{z}P(β, z) (regularized lower
//! incomplete gamma), the bracket is exactly e^{au}·(1/Λ)Σ_j λ_j Q(jr, au),
//! and tilting by e^{−au} commutes with convolution. Everything is then
//! carried in the tilted scale where each factor lies in (0, 1]:
//!
//! ```text
//! φ(u) = φ(0)·(1 + ∫₀ᵘ Σ_{n≥1} (Λ/c)^n b̃^{∗n}(v) dv),
//! b̃(v) = (1/Λ) Σ_j λ_j Q(j·r, a·v).
//! ```
//!
//! [`simulate_ruin`] is the independent check: an event-driven surplus
//! simulation that never touches the series code.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::{Exp, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::run_paths;
use crate::processes::GcpParams;
use crate::specialfn;

/// Premium rate, jump-rate vector, and the gamma claim attached to a unit
/// jump (density a^r x^{r−1} e^{−ax}/Γ(r), mean μ = r/a).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskModel {
    pub c: f64,
    pub params: GcpParams,
    pub r: f64,
    pub a: f64,
}

impl RiskModel {
    pub fn new(c: f64, params: GcpParams, r: f64, a: f64) -> Result<Self> {
        let model = RiskModel { c, params, r, a };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) || !(self.a > 0.0) || !self.r.is_finite() || !self.a.is_finite() {
            return Err(Error::Domain(
                "RiskModel: claim shape r and scale a must be positive".into(),
            ));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::Domain("RiskModel: premium rate must be positive".into()));
        }
        let outflow = self.claim_outflow_rate();
        if self.c <= outflow {
            return Err(Error::Domain(format!(
                "RiskModel: premium rate {} must exceed expected claim outflow {outflow} \
                 (safety loading would be ≤ 0)",
                self.c
            )));
        }
        Ok(())
    }

    /// Mean claim per unit of jump amplitude.
    pub fn mean_claim(&self) -> f64 {
        self.r / self.a
    }

    /// μ·Σ j λ_j — the long-run claim payout rate.
    pub fn claim_outflow_rate(&self) -> f64 {
        let weighted: f64 = self
            .params
            .rates()
            .iter()
            .enumerate()
            .map(|(j, &lam)| (j + 1) as f64 * lam)
            .sum();
        self.mean_claim() * weighted
    }
}

/// Relative safety loading η = c/(μ Σ jλ_j) − 1.
pub fn safety_loading(model: &RiskModel) -> Result<f64> {
    model.validate()?;
    Ok(model.c / model.claim_outflow_rate() - 1.0)
}

/// Non-ruin probability with zero initial capital: φ(0) = 1 − (μ/c) Σ jλ_j.
pub fn phi0(model: &RiskModel) -> Result<f64> {
    model.validate()?;
    Ok(1.0 - model.claim_outflow_rate() / model.c)
}

/// How the tilted bracket b̃ is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BracketRoute {
    /// Polynomial route when every j·r is an integer, series route otherwise.
    Auto,
    /// Q(jr, z) = e^{−z} Σ_{k<jr} z^k/k! — integer jr only, no
    /// special-function calls.
    Polynomial,
    /// 1 − (1/Λ) Σ_j λ_j e^{−z} z^{jr} E_{1,1+jr}(z) — the printed bracket,
    /// evaluated literally.
    MittagLeffler,
}

fn all_shapes_integer(model: &RiskModel) -> bool {
    model.params.rates().iter().enumerate().all(|(j, &lam)| {
        let jr = (j + 1) as f64 * model.r;
        lam == 0.0 || (jr - jr.round()).abs() < 1e-9
    })
}

fn tilted_bracket(model: &RiskModel, u: f64, route: BracketRoute) -> Result<f64> {
    let route = match route {
        BracketRoute::Auto => {
            if all_shapes_integer(model) {
                BracketRoute::Polynomial
            } else {
                BracketRoute::MittagLeffler
            }
        }
        r => r,
    };
    let z = model.a * u;
    let lam = model.params.total_rate();
    match route {
        BracketRoute::Auto => unreachable!("resolved above"),
        BracketRoute::Polynomial => {
            let mut acc = 0.0;
            for (j, &rate) in model.params.rates().iter().enumerate() {
                if rate == 0.0 {
                    continue;
                }
                let jr = (j + 1) as f64 * model.r;
                let m = jr.round();
                if (jr - m).abs() > 1e-9 {
                    return Err(Error::Domain(format!(
                        "polynomial bracket needs integer claim shapes, got j·r = {jr}"
                    )));
                }
                // Q(m, z) = e^{−z} Σ_{k<m} z^k/k!
                let mut term = 1.0;
                let mut partial = 1.0;
                for k in 1..m as u64 {
                    term *= z / k as f64;
                    partial += term;
                }
                acc += rate * (-z).exp() * partial;
            }
            Ok(acc / lam)
        }
        BracketRoute::MittagLeffler => {
            let mut lower = 0.0;
            for (j, &rate) in model.params.rates().iter().enumerate() {
                if rate == 0.0 {
                    continue;
                }
                let jr = (j + 1) as f64 * model.r;
                if z == 0.0 {
                    continue; // z^{jr} E = 0
                }
                let e = specialfn::ml_two(1.0, 1.0 + jr, z)?;
                lower += rate * (-z).exp() * z.powf(jr) * e;
            }
            Ok(1.0 - lower / lam)
        }
    }
}

/// Tabulated non-ruin probabilities on a uniform grid.
#[derive(Debug, Clone, Serialize)]
pub struct PhiCurve {
    pub h: f64,
    pub u_max: f64,
    /// values[i] = φ(i·h).
    pub values: Vec<f64>,
    pub series_terms_used: usize,
}

impl PhiCurve {
    /// φ at the nearest grid point (grid is dense enough that this is
    /// within discretization error of any u in range).
    pub fn at(&self, u: f64) -> Result<f64> {
        if !(0.0..=self.u_max + 0.5 * self.h).contains(&u) {
            return Err(Error::Domain(format!(
                "phi lookup outside tabulated range [0, {}]: {u}",
                self.u_max
            )));
        }
        let i = ((u / self.h).round() as usize).min(self.values.len() - 1);
        Ok(self.values[i])
    }
}

/// Non-ruin curve on [0, u_max] with step h, stopping the convolution
/// series once a term's contribution drops below 1e-8·φ(0) (error if
/// `n_cap` terms do not get there).
pub fn phi_curve(model: &RiskModel, h: f64, u_max: f64, n_cap: usize) -> Result<PhiCurve> {
    phi_curve_with(model, h, u_max, n_cap, BracketRoute::Auto)
}

/// [`phi_curve`] with an explicit bracket route — the two non-auto routes
/// exist so they can be compared against each other.
pub fn phi_curve_with(
    model: &RiskModel,
    h: f64,
    u_max: f64,
    n_cap: usize,
    route: BracketRoute,
) -> Result<PhiCurve> {
    model.validate()?;
    let h_max = 0.01 * 1.0f64.min(1.0 / model.a);
    if !(h > 0.0) || h > h_max * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "phi_curve: need 0 < h ≤ {h_max:.3e} for a = {}, got {h}",
            model.a
        )));
    }
    if !(u_max > 0.0) || !u_max.is_finite() {
        return Err(Error::Domain(format!("phi_curve: need u_max > 0, got {u_max}")));
    }
    if n_cap == 0 {
        return Err(Error::Domain("phi_curve: need at least one series term".into()));
    }
    let m = (u_max / h).ceil() as usize;
    let btilde: Vec<f64> = (0..=m)
        .map(|i| tilted_bracket(model, i as f64 * h, route))
        .collect::<Result<_>>()?;

    let ratio = model.params.total_rate() / model.c;
    let mut density = vec![0.0; m + 1]; // Σ_n (Λ/c)^n b̃^{∗n} on the grid
    let mut conv = btilde.clone();
    let mut weight = 1.0;
    let mut terms_used = 0;
    loop {
        terms_used += 1;
        weight *= ratio;
        for (d, &g) in density.iter_mut().zip(&conv) {
            *d += weight * g;
        }
        // the term's contribution to φ/φ(0) peaks at u_max
        if weight * trapezoid_integral(&conv, h) < 1e-8 {
            break;
        }
        if terms_used == n_cap {
            return Err(Error::SeriesCap(n_cap));
        }
        conv = convolve_trapezoid(&conv, &btilde, h);
    }

    let base = phi0(model)?;
    let mut values = Vec::with_capacity(m + 1);
    let mut integral = 0.0;
    values.push(base);
    for i in 1..=m {
        integral += 0.5 * h * (density[i - 1] + density[i]);
        let phi = base * (1.0 + integral);
        if phi > 1.0 + 1e-6 {
            return Err(Error::Overflow(format!(
                "phi_curve: φ({}) = {phi} exceeds 1 beyond discretization error",
                i as f64 * h
            )));
        }
        values.push(phi.min(1.0));
    }
    Ok(PhiCurve {
        h,
        u_max: m as f64 * h,
        values,
        series_terms_used: terms_used,
    })
}

fn trapezoid_integral(f: &[f64], h: f64) -> f64 {
    if f.len() < 2 {
        return 0.0;
    }
    let inner: f64 = f[1..f.len() - 1].iter().sum();
    h * (0.5 * f[0] + inner + 0.5 * f[f.len() - 1])
}

/// (f ∗ g) on the shared uniform grid, trapezoid weights inside each cell.
fn convolve_trapezoid(f: &[f64], g: &[f64], h: f64) -> Vec<f64> {
    let m = f.len();
    let mut out = vec![0.0; m];
    for i in 1..m {
        let mut acc = 0.5 * (f[0] * g[i] + f[i] * g[0]);
        for j in 1..i {
            acc += f[j] * g[i - j];
        }
        out[i] = h * acc;
    }
    out
}

/// Empirical ruin probability ψ̂(u) from event-driven surplus paths
/// U(t) = u + ct − Σ claims, stopped at ruin or at `horizon`.
pub fn simulate_ruin(
    model: &RiskModel,
    u: f64,
    horizon: f64,
    n_paths: u64,
    seed: u64,
) -> Result<f64> {
    model.validate()?;
    if !(u >= 0.0) || !u.is_finite() {
        return Err(Error::Domain(format!("simulate_ruin: need u ≥ 0, got {u}")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Domain(format!(
            "simulate_ruin: need horizon > 0, got {horizon}"
        )));
    }
    if n_paths == 0 {
        return Err(Error::Domain("simulate_ruin: need at least one path".into()));
    }
    let lam = model.params.total_rate();
    let inter_event = Exp::new(lam).map_err(|e| Error::Domain(format!("event clock: {e}")))?;
    let sizes = if model.params.max_jump() > 1 {
        Some(
            WeightedIndex::new(model.params.rates().iter().copied())
                .map_err(|e| Error::Domain(format!("jump-size weights: {e}")))?,
        )
    } else {
        None
    };
    // claim for a size-j jump is the j-fold convolution Gamma(j·r, a)
    let claims: Vec<Gamma<f64>> = (1..=model.params.max_jump())
        .map(|j| {
            Gamma::new(j as f64 * model.r, 1.0 / model.a)
                .map_err(|e| Error::Domain(format!("claim law: {e}")))
        })
        .collect::<Result<_>>()?;

    let ruined = run_paths(n_paths, seed, |rng| {
        let mut surplus = u;
        let mut clock = 0.0;
        loop {
            let wait: f64 = inter_event.sample(rng);
            clock += wait;
            if clock > horizon {
                return Ok(false);
            }
            surplus += model.c * wait;
            let j = match &sizes {
                None => 0,
                Some(w) => w.sample(rng),
            };
            surplus -= claims[j].sample(rng);
            if surplus < 0.0 {
                return Ok(true);
            }
        }
    })?;
    Ok(ruined.iter().filter(|&&r| r).count() as f64 / n_paths as f64)
}
