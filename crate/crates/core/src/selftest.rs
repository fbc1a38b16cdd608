//! Quick oracle and property checks runnable from the command line.

use nalgebra::DMatrix;

use crate::channel::{draw_channel, error_covariance, sample_error, ChannelSet};
use crate::cost;
use crate::linalg::{CVec, C64};
use crate::precoders::{build_scheme, robust_common_direction, robust_private, Scheme};
use crate::rates::{sinr_common, sinr_private};
use crate::rng::{substream, Purpose, SimRng};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn random_zeta(n_t: usize, k: usize, rng: &mut SimRng) -> DMatrix<f64> {
    use rand::Rng;
    DMatrix::from_fn(n_t, k, |_, _| 0.2 + rng.random::<f64>())
}

/// Received-power decomposition of the private and common SINRs.
fn decomposition(cs: &ChannelSet, p_c: &CVec, p_p: &crate::linalg::CMat, sigma_n2: f64) -> (Vec<f64>, Vec<f64>) {
    let k = cs.k();
    let tau2 = cs.tau * cs.tau;
    let mut private = Vec::with_capacity(k);
    let mut common = Vec::with_capacity(k);
    for u in 0..k {
        let g = cs.g.column(u);
        let gh = cs.g_hat.column(u);
        let total: f64 = (0..k).map(|j| g.dotc(&p_p.column(j)).norm_sqr()).sum();
        let wanted = gh.dotc(&p_p.column(u)).norm_sqr() / tau2;
        private.push(wanted / (total - wanted + sigma_n2));
        let c_wanted = gh.dotc(p_c).norm_sqr() / tau2;
        let c_total = g.dotc(p_c).norm_sqr();
        common.push(c_wanted / (c_total - c_wanted + total + sigma_n2));
    }
    (private, common)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn run() -> Vec<Check> {
    let mut out = Vec::new();
    let mut rng = substream(0x5e1f, Purpose::Test, 0, 0);

    // SINR closed forms against the received-signal decomposition
    let mut worst: f64 = 0.0;
    for trial in 0..50u64 {
        let zeta = random_zeta(6, 3, &mut rng);
        let cs = draw_channel(&zeta, 0.3, &mut rng).expect("valid channel");
        let theta = error_covariance(&zeta, 0.3);
        let ps = build_scheme(Scheme::RscfMmseRbPcRb, &cs.g_hat, &theta, cs.tau, 5.0, 1.0 + 0.01 * trial as f64, 0.1, 3)
            .expect("precoder");
        let (p_oracle, c_oracle) = decomposition(&cs, &ps.p_c, &ps.p_p, 0.1);
        for (a, b) in sinr_private(&cs, &ps, 0.1).iter().zip(&p_oracle) {
            worst = worst.max(rel(*a, *b));
        }
        for (a, b) in sinr_common(&cs, &ps, 0.1).iter().zip(&c_oracle) {
            worst = worst.max(rel(*a, *b));
        }
    }
    out.push(check("sinr-decomposition", worst < 1e-10, format!("max relative error {worst:.2e}")));

    // Common precoder stationarity: gradient of J vanishes at the closed form
    let zeta = random_zeta(5, 2, &mut rng);
    let cs = draw_channel(&zeta, 0.4, &mut rng).expect("valid channel");
    let theta = error_covariance(&zeta, 0.4);
    let raw = robust_common_direction(&cs.g_hat, &theta, cs.tau).expect("common").raw;
    let grad = (&cs.g_hat * cs.g_hat.adjoint() + &theta.theta) * &raw / C64::new(cs.tau * cs.tau, 0.0)
        - &cs.g_hat * CVec::from_element(2, C64::new(1.0, 0.0)) / C64::new(cs.tau, 0.0);
    let scale = (&cs.g_hat * CVec::from_element(2, C64::new(1.0, 0.0))).norm() / cs.tau;
    out.push(check("common-stationarity", grad.norm() < 1e-10 * (1.0 + scale), format!("|grad| = {:.2e}", grad.norm())));

    // Power budget at every iterate
    let (_, trace) = robust_private(&cs.g_hat, &theta, cs.tau, 4.0, 1.0, 0.05, 10).expect("private");
    let worst_power = trace.records.iter().map(|r| rel(r.power, 3.0)).fold(0.0, f64::max);
    out.push(check("power-budget", worst_power < 1e-10, format!("max relative deviation {worst_power:.2e}")));

    // Perfect CSI: robust and nominal private precoders coincide
    let perfect = error_covariance(&zeta, 0.0);
    let a = build_scheme(Scheme::CfMmseRb, &cs.g_hat, &perfect, 1.0, 4.0, 0.0, 0.05, 3).expect("robust");
    let b = build_scheme(Scheme::CfMmse, &cs.g_hat, &perfect, 1.0, 4.0, 0.0, 0.05, 3).expect("nominal");
    out.push(check("perfect-csi-degeneration", a.p_p == b.p_p, "robust == nominal at zero error".into()));

    // Error covariance by sampling
    let n = 20_000;
    let mut acc = [0.0; 5];
    for i in 0..n {
        let e = sample_error(&zeta, 0.4, &mut substream(0x5e1f, Purpose::Error, 1, i));
        for (r, slot) in acc.iter_mut().enumerate() {
            *slot += e.row(r).norm_squared();
        }
    }
    let cov_err = (0..5).map(|r| rel(acc[r] / n as f64, theta.theta[(r, r)].re)).fold(0.0, f64::max);
    out.push(check("error-covariance", cov_err < 0.05, format!("max relative error {cov_err:.3} at {n} draws")));

    let c_f = cost::total_cost(12, 3, 3);
    out.push(check("cost-model", c_f == cost::Flops::from_integer(59280), format!("C_f(12, 3, 3) = {c_f}")));

    out
}
