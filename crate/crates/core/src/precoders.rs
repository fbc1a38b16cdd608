//! Robust MMSE precoders for rate-splitting transmission.
//!
//! The common precoder has a closed form,
//! `p_c = tau (G G^H + theta)^{-1} G u`, with `u` the all-ones vector. The
//! private precoder `P_p = f tau P_bar` is found by alternating between the
//! regularized inverse
//! `P_bar = (G G^H + (1 + f^2) theta + lambda f^2 tau^2 I)^{-1} G`,
//! the gain `f` that meets the power budget exactly, and the Lagrange
//! multiplier `lambda` of that budget.
//!
//! `alpha_c` is a power throughout: `|p_c|^2 = alpha_c` and
//! `tr(P_p P_p^H) = P_t - alpha_c`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::ErrorCovariance;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64};
use crate::rng::SimRng;

/// Relative ridge added when the Algorithm-1 system matrix is singular.
pub const RIDGE_EPS: f64 = 1e-10;

/// Default number of alternating iterations.
pub const DEFAULT_ITERATIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "CF-MMSE")]
    CfMmse,
    #[serde(rename = "CF-MMSE-RB")]
    CfMmseRb,
    #[serde(rename = "RSCF-MMSE")]
    RscfMmse,
    #[serde(rename = "RSCF-MMSE-RB+PpRB")]
    RscfMmseRbPpRb,
    #[serde(rename = "RSCF-MMSE-RB+PcRB")]
    RscfMmseRbPcRb,
}

impl Scheme {
    pub const ALL: [Scheme; 5] =
        [Scheme::CfMmse, Scheme::CfMmseRb, Scheme::RscfMmse, Scheme::RscfMmseRbPpRb, Scheme::RscfMmseRbPcRb];

    pub fn tag(self) -> &'static str {
        match self {
            Scheme::CfMmse => "CF-MMSE",
            Scheme::CfMmseRb => "CF-MMSE-RB",
            Scheme::RscfMmse => "RSCF-MMSE",
            Scheme::RscfMmseRbPpRb => "RSCF-MMSE-RB+PpRB",
            Scheme::RscfMmseRbPcRb => "RSCF-MMSE-RB+PcRB",
        }
    }

    /// Whether the scheme carries a common stream.
    pub fn is_rate_splitting(self) -> bool {
        matches!(self, Scheme::RscfMmse | Scheme::RscfMmseRbPpRb | Scheme::RscfMmseRbPcRb)
    }

    pub fn robust_private(self) -> bool {
        matches!(self, Scheme::CfMmseRb | Scheme::RscfMmseRbPpRb | Scheme::RscfMmseRbPcRb)
    }

    pub fn robust_common(self) -> bool {
        self == Scheme::RscfMmseRbPcRb
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownScheme(s.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct PrecoderSet {
    pub p_c: CVec,
    pub p_p: CMat,
    pub alpha_c: f64,
    pub f: f64,
    pub lambda: f64,
    pub scheme: Scheme,
}

impl PrecoderSet {
    pub fn total_power(&self) -> f64 {
        self.p_c.norm_squared() + linalg::frob2(&self.p_p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub f: f64,
    pub lambda: f64,
    pub objective: f64,
    pub power: f64,
    /// The system matrix was singular and a ridge was added.
    pub ridged: bool,
}

/// Per-iteration history of the alternating optimization, initialization
/// included as entry 0.
#[derive(Debug, Clone, Default)]
pub struct IterTrace {
    pub records: Vec<IterRecord>,
}

impl IterTrace {
    pub fn any_ridged(&self) -> bool {
        self.records.iter().any(|r| r.ridged)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,f,lambda,objective,power,ridged")?;
        for (i, r) in self.records.iter().enumerate() {
            writeln!(w, "{i},{:e},{:e},{:e},{:e},{}", r.f, r.lambda, r.objective, r.power, r.ridged)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CommonDirection {
    pub unit: CVec,
    pub raw: CVec,
}

/// Closed-form robust common precoder. A zero `theta` gives the
/// minimum-norm solution of `G^H p = tau u`.
pub fn robust_common_direction(g_hat: &CMat, theta: &ErrorCovariance, tau: f64) -> Result<CommonDirection> {
    if linalg::is_zero(g_hat) {
        return Err(Error::DegenerateChannel("estimated channel is all zeros".into()));
    }
    let k = g_hat.ncols();
    let u = CVec::from_element(k, C64::new(1.0, 0.0));
    let raw = if linalg::is_zero(&theta.theta) {
        linalg::min_norm_solve(&g_hat.adjoint(), &u).scale(tau)
    } else {
        match linalg::regularized_solve(g_hat, &theta.theta) {
            Some(psi) => (psi * &u).scale(tau),
            None => {
                let a = g_hat * g_hat.adjoint() + &theta.theta;
                linalg::min_norm_solve(&a, &(g_hat * &u)).scale(tau)
            }
        }
    };
    let norm = raw.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::DegenerateChannel("common precoder has zero norm".into()));
    }
    Ok(CommonDirection { unit: raw.unscale(norm), raw })
}

/// Common-precoder MMSE objective `J(p)` in closed form.
pub fn objective_common(p: &CVec, g_hat: &CMat, theta: &ErrorCovariance, tau: f64) -> f64 {
    let k = g_hat.ncols() as f64;
    let u = CVec::from_element(g_hat.ncols(), C64::new(1.0, 0.0));
    let gh_p = g_hat.adjoint() * p;
    let cross = u.dotc(&gh_p).re;
    let quad = gh_p.norm_squared() + p.dotc(&(&theta.theta * p)).re;
    k - 2.0 * cross / tau + quad / (tau * tau)
}

#[derive(Debug, Clone)]
pub struct PrivateDesign {
    pub p_bar: CMat,
    pub f: f64,
    pub p_p: CMat,
    pub lambda: f64,
}

fn check_budget(p_t: f64, alpha_c: f64) -> Result<f64> {
    if !(alpha_c >= 0.0 && alpha_c < p_t && p_t.is_finite()) {
        return Err(Error::PowerBudget { alpha_c, p_t });
    }
    Ok(p_t - alpha_c)
}

/// Gain, scaled precoder and multiplier for a given `P_bar`.
fn complete_step(p_bar: CMat, theta: &ErrorCovariance, tau: f64, budget: f64, sigma_n2: f64) -> Result<PrivateDesign> {
    let k = p_bar.ncols() as f64;
    let energy = linalg::frob2(&p_bar);
    if !(energy > 0.0 && energy.is_finite()) {
        return Err(Error::DegenerateChannel("private precoder direction vanished".into()));
    }
    let f = (budget / energy).sqrt() / tau;
    let p_p = p_bar.scale(f * tau);
    let leak = linalg::trace_re(&(p_p.adjoint() * &theta.theta * &p_p));
    let lambda = k * sigma_n2 / (f * f * budget) - leak / (tau * tau * budget);
    Ok(PrivateDesign { p_bar, f, p_p, lambda })
}

/// Conventional regularized MMSE start point (initialization of the
/// alternating scheme).
pub fn mmse_private_init(
    g_hat: &CMat,
    theta: &ErrorCovariance,
    p_t: f64,
    alpha_c: f64,
    sigma_n2: f64,
    tau: f64,
) -> Result<PrivateDesign> {
    let budget = check_budget(p_t, alpha_c)?;
    if !(sigma_n2 > 0.0) {
        return Err(Error::Domain(format!("noise variance must be positive, got {sigma_n2}")));
    }
    let n_t = g_hat.nrows();
    let k = g_hat.ncols() as f64;
    let shift = linalg::scaled_identity(n_t, k * sigma_n2 / budget);
    let p_bar = linalg::regularized_solve(g_hat, &shift)
        .ok_or_else(|| Error::DegenerateChannel("MMSE initialization is singular".into()))?;
    complete_step(p_bar, theta, tau, budget, sigma_n2)
}

/// Random start point with the same Frobenius norm as the MMSE one, so the
/// initial gain `f[0]` keeps its natural scale.
pub fn random_private_init<R: Rng + ?Sized>(
    g_hat: &CMat,
    theta: &ErrorCovariance,
    p_t: f64,
    alpha_c: f64,
    sigma_n2: f64,
    tau: f64,
    rng: &mut R,
) -> Result<PrivateDesign> {
    let mmse = mmse_private_init(g_hat, theta, p_t, alpha_c, sigma_n2, tau)?;
    let mut random = CMat::from_fn(g_hat.nrows(), g_hat.ncols(), |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im)
    });
    random *= C64::new((linalg::frob2(&mmse.p_bar) / linalg::frob2(&random)).sqrt(), 0.0);
    complete_step(random, theta, tau, p_t - alpha_c, sigma_n2)
}

/// Private MMSE objective `J_p` with `R_n = sigma_n^2 I`.
pub fn objective_jp(p_p: &CMat, f: f64, g_hat: &CMat, theta: &ErrorCovariance, tau: f64, sigma_n2: f64) -> Result<f64> {
    if !(f > 0.0) {
        return Err(Error::Domain(format!("receive gain must be positive, got {f}")));
    }
    let k = g_hat.ncols() as f64;
    let ppp = p_p * p_p.adjoint();
    let cross = 2.0 * (g_hat.adjoint() * p_p).trace().re;
    let theta_term = linalg::trace_re(&(&theta.theta * &ppp));
    let gram_term = linalg::trace_re(&(&ppp * g_hat * g_hat.adjoint()));
    let tau2 = tau * tau;
    let f2 = f * f;
    Ok(k - cross / (f * tau) + theta_term / tau2 + (gram_term + theta_term) / (f2 * tau2) + k * sigma_n2 / f2)
}

fn record(d: &PrivateDesign, g_hat: &CMat, theta: &ErrorCovariance, tau: f64, sigma_n2: f64, ridged: bool) -> IterRecord {
    IterRecord {
        f: d.f,
        lambda: d.lambda,
        objective: objective_jp(&d.p_p, d.f, g_hat, theta, tau, sigma_n2).unwrap_or(f64::NAN),
        power: linalg::frob2(&d.p_p),
        ridged,
    }
}

/// One alternating update from the previous `(f, lambda)`. The flag reports
/// whether the ridge fallback was needed.
pub fn private_iteration(
    g_hat: &CMat,
    theta: &ErrorCovariance,
    tau: f64,
    p_t: f64,
    alpha_c: f64,
    sigma_n2: f64,
    prev: &PrivateDesign,
) -> Result<(PrivateDesign, bool)> {
    let budget = check_budget(p_t, alpha_c)?;
    let n_t = g_hat.nrows();
    let f2 = prev.f * prev.f;
    let shift = theta.theta.scale(1.0 + f2) + linalg::scaled_identity(n_t, prev.lambda * f2 * tau * tau);
    let (p_bar, ridged) = match linalg::regularized_solve(g_hat, &shift) {
        Some(p) => (p, false),
        None => {
            let gram = linalg::frob2(g_hat);
            let ridge = linalg::scaled_identity(n_t, RIDGE_EPS * gram / n_t as f64);
            let p = linalg::regularized_solve(g_hat, &(shift + ridge))
                .ok_or_else(|| Error::DegenerateChannel("robust private system stays singular after ridge".into()))?;
            (p, true)
        }
    };
    Ok((complete_step(p_bar, theta, tau, budget, sigma_n2)?, ridged))
}

/// Alternating optimization from a given start point, `i_t` updates.
#[allow(clippy::too_many_arguments)]
pub fn robust_private_from(
    g_hat: &CMat,
    theta: &ErrorCovariance,
    tau: f64,
    p_t: f64,
    alpha_c: f64,
    sigma_n2: f64,
    i_t: usize,
    init: PrivateDesign,
) -> Result<(PrivateDesign, IterTrace)> {
    let mut trace = IterTrace { records: Vec::with_capacity(i_t + 1) };
    trace.records.push(record(&init, g_hat, theta, tau, sigma_n2, false));
    let mut cur = init;
    for _ in 0..i_t {
        let (next, ridged) = private_iteration(g_hat, theta, tau, p_t, alpha_c, sigma_n2, &cur)?;
        trace.records.push(record(&next, g_hat, theta, tau, sigma_n2, ridged));
        cur = next;
    }
    Ok((cur, trace))
}

/// Robust private precoder started from the conventional MMSE solution.
pub fn robust_private(
    g_hat: &CMat,
    theta: &ErrorCovariance,
    tau: f64,
    p_t: f64,
    alpha_c: f64,
    sigma_n2: f64,
    i_t: usize,
) -> Result<(PrivateDesign, IterTrace)> {
    let init = mmse_private_init(g_hat, theta, p_t, alpha_c, sigma_n2, tau)?;
    robust_private_from(g_hat, theta, tau, p_t, alpha_c, sigma_n2, i_t, init)
}

/// Start point of the alternating private design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrivateStart {
    /// Conventional regularized MMSE.
    #[default]
    Mmse,
    /// Seeded random direction (convergence studies).
    Random(u64),
}

#[allow(clippy::too_many_arguments)]
fn private_design(
    g: &CMat,
    theta: &ErrorCovariance,
    tau: f64,
    p_t: f64,
    alpha_c: f64,
    sigma_n2: f64,
    i_t: usize,
    start: PrivateStart,
) -> Result<(PrivateDesign, IterTrace)> {
    let init = match start {
        PrivateStart::Mmse => mmse_private_init(g, theta, p_t, alpha_c, sigma_n2, tau)?,
        PrivateStart::Random(seed) => {
            let mut rng = SimRng::seed_from_u64(seed);
            random_private_init(g, theta, p_t, alpha_c, sigma_n2, tau, &mut rng)?
        }
    };
    robust_private_from(g, theta, tau, p_t, alpha_c, sigma_n2, i_t, init)
}

/// Assembles the full precoder of a scheme. Non-robust parts run the same
/// design with `theta = 0` and `tau = 1`; private-only schemes ignore
/// `alpha_c` and put all power on the private streams.
#[allow(clippy::too_many_arguments)]
pub fn build_scheme(
    scheme: Scheme,
    g_eff: &CMat,
    theta: &ErrorCovariance,
    tau: f64,
    p_t: f64,
    alpha_c: f64,
    sigma_n2: f64,
    i_t: usize,
) -> Result<PrecoderSet> {
    build_scheme_from(scheme, g_eff, theta, tau, p_t, alpha_c, sigma_n2, i_t, PrivateStart::Mmse).map(|(set, _)| set)
}

#[allow(clippy::too_many_arguments)]
pub fn build_scheme_from(
    scheme: Scheme,
    g_eff: &CMat,
    theta: &ErrorCovariance,
    tau: f64,
    p_t: f64,
    alpha_c: f64,
    sigma_n2: f64,
    i_t: usize,
    start: PrivateStart,
) -> Result<(PrecoderSet, IterTrace)> {
    let alpha_c = if scheme.is_rate_splitting() { alpha_c } else { 0.0 };
    check_budget(p_t, alpha_c)?;
    let n_t = g_eff.nrows();
    let nominal = ErrorCovariance::zero(n_t);

    let (private, trace) = if scheme.robust_private() {
        private_design(g_eff, theta, tau, p_t, alpha_c, sigma_n2, i_t, start)?
    } else {
        private_design(g_eff, &nominal, 1.0, p_t, alpha_c, sigma_n2, i_t, start)?
    };

    let p_c = if alpha_c > 0.0 {
        let dir = if scheme.robust_common() {
            robust_common_direction(g_eff, theta, tau)?
        } else {
            robust_common_direction(g_eff, &nominal, 1.0)?
        };
        dir.unit.scale(alpha_c.sqrt())
    } else {
        CVec::zeros(n_t)
    };

    Ok((PrecoderSet { p_c, p_p: private.p_p, alpha_c, f: private.f, lambda: private.lambda, scheme }, trace))
}
