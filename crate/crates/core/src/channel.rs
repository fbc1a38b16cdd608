//! Network geometry, large-scale fading and the imperfect-CSI channel model.
//!
//! Channels are stored AP-major: every matrix is `N_t x K`, column `k` is the
//! channel vector of user `k`. The true channel obeys
//! `G = (G_hat + G_tilde) / tau` with `tau = sqrt(1 + sigma_e^2)`, where the
//! estimate has per-entry variance `zeta` and the error is independent of it
//! with variance `sigma_e^2 * zeta`.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};

pub const DEFAULT_AP_HEIGHT_M: f64 = 15.0;
pub const DEFAULT_UE_HEIGHT_M: f64 = 1.65;
/// Breakpoint distances of the three-slope model, meters.
pub const D0_M: f64 = 10.0;
pub const D1_M: f64 = 50.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkGeometry {
    pub ap_xy: Vec<[f64; 2]>,
    pub ue_xy: Vec<[f64; 2]>,
    pub h_ap: f64,
    pub h_ue: f64,
    pub region_side: f64,
}

impl NetworkGeometry {
    pub fn n_t(&self) -> usize {
        self.ap_xy.len()
    }

    pub fn k(&self) -> usize {
        self.ue_xy.len()
    }

    /// Planar AP-to-user distance in meters.
    pub fn distance(&self, n: usize, k: usize) -> f64 {
        let [ax, ay] = self.ap_xy[n];
        let [ux, uy] = self.ue_xy[k];
        (ax - ux).hypot(ay - uy)
    }

    /// Dumps positions as `kind,index,x,y` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "kind,index,x,y")?;
        for (i, [x, y]) in self.ap_xy.iter().enumerate() {
            writeln!(w, "ap,{i},{x},{y}")?;
        }
        for (i, [x, y]) in self.ue_xy.iter().enumerate() {
            writeln!(w, "ue,{i},{x},{y}")?;
        }
        Ok(())
    }
}

/// Drops `n_t` APs and `k` users uniformly over a square region.
pub fn place_network<R: Rng + ?Sized>(n_t: usize, k: usize, region_side: f64, rng: &mut R) -> Result<NetworkGeometry> {
    if k == 0 {
        return Err(Error::Config("at least one user is required".into()));
    }
    if n_t < k {
        return Err(Error::Config(format!("overloaded network: {n_t} APs cannot serve {k} users")));
    }
    if !(region_side > 0.0 && region_side.is_finite()) {
        return Err(Error::Config(format!("region side must be positive, got {region_side}")));
    }
    let point = |rng: &mut R| [rng.random::<f64>() * region_side, rng.random::<f64>() * region_side];
    let ap_xy = (0..n_t).map(|_| point(rng)).collect();
    let ue_xy = (0..k).map(|_| point(rng)).collect();
    Ok(NetworkGeometry { ap_xy, ue_xy, h_ap: DEFAULT_AP_HEIGHT_M, h_ue: DEFAULT_UE_HEIGHT_M, region_side })
}

/// Hata-style attenuation term `L` in dB, frequency in MHz.
pub fn attenuation_db(freq_mhz: f64, h_ap: f64, h_ue: f64) -> f64 {
    let lf = freq_mhz.log10();
    46.3 + 33.9 * lf - 13.82 * h_ap.log10() - (1.1 * lf - 0.7) * h_ue + (1.56 * lf - 0.8)
}

/// Three-slope path loss in dB (a negative number: gain, not loss).
pub fn path_loss_db(d: f64, freq_mhz: f64, h_ap: f64, h_ue: f64) -> f64 {
    let l = attenuation_db(freq_mhz, h_ap, h_ue);
    if d > D1_M {
        -l - 35.0 * d.log10()
    } else if d > D0_M {
        -l - 15.0 * D1_M.log10() - 20.0 * d.log10()
    } else {
        -l - 15.0 * D1_M.log10() - 20.0 * D0_M.log10()
    }
}

/// Large-scale gains `zeta` (linear, `N_t x K`) with log-normal shadowing.
pub fn large_scale<R: Rng + ?Sized>(geom: &NetworkGeometry, freq_mhz: f64, shadow_std_db: f64, rng: &mut R) -> DMatrix<f64> {
    let (n_t, k) = (geom.n_t(), geom.k());
    let mut zeta = DMatrix::zeros(n_t, k);
    for n in 0..n_t {
        for u in 0..k {
            let pl = path_loss_db(geom.distance(n, u), freq_mhz, geom.h_ap, geom.h_ue);
            let z: f64 = StandardNormal.sample(rng);
            zeta[(n, u)] = db_to_linear(pl) * db_to_linear(shadow_std_db * z);
        }
    }
    zeta
}

/// Circularly-symmetric complex Gaussian entries with per-entry variance
/// `scale * zeta[(n, k)]`.
fn complex_gaussian<R: Rng + ?Sized>(zeta: &DMatrix<f64>, scale: f64, rng: &mut R) -> CMat {
    let mut m = CMat::zeros(zeta.nrows(), zeta.ncols());
    for n in 0..zeta.nrows() {
        for k in 0..zeta.ncols() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let sd = (0.5 * scale * zeta[(n, k)]).sqrt();
            m[(n, k)] = C64::new(sd * re, sd * im);
        }
    }
    m
}

/// Channel estimate with per-entry variance `zeta`.
pub fn sample_estimate<R: Rng + ?Sized>(zeta: &DMatrix<f64>, rng: &mut R) -> CMat {
    complex_gaussian(zeta, 1.0, rng)
}

/// Estimation error with per-entry variance `sigma_e2 * zeta`. The underlying
/// normals do not depend on `sigma_e2`, so the same stream gives coupled draws
/// across CSIT-quality levels.
pub fn sample_error<R: Rng + ?Sized>(zeta: &DMatrix<f64>, sigma_e2: f64, rng: &mut R) -> CMat {
    complex_gaussian(zeta, sigma_e2, rng)
}

#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub zeta: DMatrix<f64>,
    pub g: CMat,
    pub g_hat: CMat,
    pub g_tilde: CMat,
    pub sigma_e2: f64,
    pub tau: f64,
}

impl ChannelSet {
    /// Assembles the true channel from an estimate and an error realization.
    pub fn from_parts(zeta: DMatrix<f64>, g_hat: CMat, g_tilde: CMat, sigma_e2: f64) -> Result<Self> {
        check_sigma_e2(sigma_e2)?;
        if g_hat.shape() != zeta.shape() || g_tilde.shape() != zeta.shape() {
            return Err(Error::Config("channel matrix dimensions disagree".into()));
        }
        let tau = (1.0 + sigma_e2).sqrt();
        let g = (&g_hat + &g_tilde).unscale(tau);
        Ok(Self { zeta, g, g_hat, g_tilde, sigma_e2, tau })
    }

    pub fn n_t(&self) -> usize {
        self.zeta.nrows()
    }

    pub fn k(&self) -> usize {
        self.zeta.ncols()
    }

    /// Replaces the error realization, keeping the estimate and `zeta`.
    pub fn with_error(&self, g_tilde: CMat) -> Self {
        let g = (&self.g_hat + &g_tilde).unscale(self.tau);
        Self { zeta: self.zeta.clone(), g, g_hat: self.g_hat.clone(), g_tilde, sigma_e2: self.sigma_e2, tau: self.tau }
    }
}

fn check_sigma_e2(sigma_e2: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&sigma_e2) {
        return Err(Error::Config(format!("CSI error variance must lie in [0, 1], got {sigma_e2}")));
    }
    Ok(())
}

/// Draws estimate and error for fixed large-scale gains.
pub fn draw_channel<R: Rng + ?Sized>(zeta: &DMatrix<f64>, sigma_e2: f64, rng: &mut R) -> Result<ChannelSet> {
    check_sigma_e2(sigma_e2)?;
    let g_hat = sample_estimate(zeta, rng);
    let g_tilde = sample_error(zeta, sigma_e2, rng);
    ChannelSet::from_parts(zeta.clone(), g_hat, g_tilde, sigma_e2)
}

/// Fresh error realization for the same estimate.
pub fn redraw_error<R: Rng + ?Sized>(cs: &ChannelSet, rng: &mut R) -> ChannelSet {
    cs.with_error(sample_error(&cs.zeta, cs.sigma_e2, rng))
}

/// `theta = E[G_tilde G_tilde^H]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCovariance {
    pub theta: CMat,
}

impl ErrorCovariance {
    pub fn zero(n_t: usize) -> Self {
        Self { theta: CMat::zeros(n_t, n_t) }
    }
}

/// Under independent entries the covariance is diagonal with
/// `theta[n][n] = sigma_e^2 * sum_k zeta[n][k]`.
pub fn error_covariance(zeta: &DMatrix<f64>, sigma_e2: f64) -> ErrorCovariance {
    let n_t = zeta.nrows();
    let mut theta = CMat::zeros(n_t, n_t);
    for n in 0..n_t {
        theta[(n, n)] = C64::new(sigma_e2 * zeta.row(n).sum(), 0.0);
    }
    ErrorCovariance { theta }
}

/// Thermal noise parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Noise temperature, K.
    pub t_o: f64,
    /// Boltzmann constant, J/K.
    pub k_b: f64,
    /// Bandwidth, Hz.
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { t_o: 290.0, k_b: 1.381e-23, bandwidth_hz: 50e6, noise_figure_db: 10.0 }
    }
}

/// `sigma_n^2 = T_o k_B B N_f` in watts.
pub fn noise_variance(nm: &NoiseModel) -> Result<f64> {
    for (name, v) in [("temperature", nm.t_o), ("Boltzmann constant", nm.k_b), ("bandwidth", nm.bandwidth_hz)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("noise {name} must be positive, got {v}")));
        }
    }
    if !nm.noise_figure_db.is_finite() {
        return Err(Error::Config("noise figure must be finite".into()));
    }
    Ok(nm.t_o * nm.k_b * nm.bandwidth_hz * db_to_linear(nm.noise_figure_db))
}

/// Transmit power reaching `snr_db` on average, using `E[tr(G^H G)] = sum(zeta)`.
pub fn pt_for_snr(snr_db: f64, zeta: &DMatrix<f64>, n_t: usize, k: usize, sigma_n2: f64) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("SNR must be finite, got {snr_db}")));
    }
    let total = zeta.sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateChannel("sum of large-scale gains is zero".into()));
    }
    Ok(db_to_linear(snr_db) * (n_t * k) as f64 * sigma_n2 / total)
}

/// Inverse of [`pt_for_snr`].
pub fn snr_db_for_pt(p_t: f64, zeta: &DMatrix<f64>, n_t: usize, k: usize, sigma_n2: f64) -> f64 {
    linear_to_db(p_t * zeta.sum() / ((n_t * k) as f64 * sigma_n2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};

    fn rng(seed: u64) -> crate::rng::SimRng {
        substream(seed, Purpose::Test, 0, 0)
    }

    #[test]
    fn placement_is_reproducible_and_in_region() {
        let a = place_network(12, 3, 100.0, &mut rng(7)).unwrap();
        let b = place_network(12, 3, 100.0, &mut rng(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.n_t(), a.k()), (12, 3));
        for p in a.ap_xy.iter().chain(&a.ue_xy) {
            assert!(p.iter().all(|c| (0.0..=100.0).contains(c)));
        }
        assert_eq!((a.h_ap, a.h_ue), (15.0, 1.65));
    }

    #[test]
    fn placement_rejects_bad_dimensions() {
        assert!(matches!(place_network(1, 1, 0.0, &mut rng(1)), Err(Error::Config(_))));
        assert!(matches!(place_network(3, 4, 100.0, &mut rng(1)), Err(Error::Config(_))));
        assert!(matches!(place_network(3, 0, 100.0, &mut rng(1)), Err(Error::Config(_))));
    }

    #[test]
    fn attenuation_at_1900_mhz() {
        // term by term with log10(1900) = 3.278753600952829
        let lf = 3.278753600952829_f64;
        let expected = 46.3 + 33.9 * lf - 13.82 * 15f64.log10() - (1.1 * lf - 0.7) * 1.65 + (1.56 * lf - 0.8);
        let l = attenuation_db(1900.0, 15.0, 1.65);
        assert!((l - expected).abs() < 1e-12);
        assert!((l - 140.72).abs() < 5e-3, "L = {l}");
    }

    #[test]
    fn path_loss_branches() {
        let l = attenuation_db(1900.0, 15.0, 1.65);
        let pl = |d| path_loss_db(d, 1900.0, 15.0, 1.65);
        let flat = -l - 15.0 * 50f64.log10() - 20.0;
        assert!((pl(5.0) - flat).abs() < 1e-12);
        assert!((pl(5.0) - (-l - 45.4846)).abs() < 1e-4);
        assert_eq!(pl(0.0), flat);
        // d = d0 is still the flat branch, d = d1 the middle branch
        assert_eq!(pl(10.0), flat);
        assert!((pl(30.0) - (-l - 15.0 * 50f64.log10() - 20.0 * 30f64.log10())).abs() < 1e-12);
        assert!((pl(50.0) - (-l - 15.0 * 50f64.log10() - 20.0 * 50f64.log10())).abs() < 1e-12);
        assert!((pl(60.0) - (-l - 35.0 * 60f64.log10())).abs() < 1e-12);
    }

    #[test]
    fn no_shadowing_gives_pure_path_loss() {
        let geom = place_network(4, 2, 100.0, &mut rng(3)).unwrap();
        let zeta = large_scale(&geom, 1900.0, 0.0, &mut rng(4));
        for n in 0..4 {
            for k in 0..2 {
                let pl = path_loss_db(geom.distance(n, k), 1900.0, 15.0, 1.65);
                assert!((zeta[(n, k)] / db_to_linear(pl) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shadowing_is_deterministic_and_positive() {
        let geom = place_network(12, 3, 100.0, &mut rng(3)).unwrap();
        let a = large_scale(&geom, 1900.0, 8.0, &mut rng(9));
        let b = large_scale(&geom, 1900.0, 8.0, &mut rng(9));
        assert_eq!(a, b);
        assert!(a.iter().all(|&z| z > 0.0));
    }

    #[test]
    fn lognormal_shadowing_mean() {
        // E[10^(8z/10)] = exp((8 ln10 / 10)^2 / 2)
        let expected = ((8.0 * std::f64::consts::LN_10 / 10.0).powi(2) / 2.0).exp();
        assert!((expected - 5.45).abs() < 0.01);
        let mut r = rng(11);
        let n = 1_000_000;
        let mean: f64 = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                db_to_linear(8.0 * z)
            })
            .sum::<f64>()
            / n as f64;
        // heavy right tail; 3% covers several standard errors at 1e6 draws
        assert!((mean / expected - 1.0).abs() < 0.03, "mean {mean} vs {expected}");
    }

    #[test]
    fn perfect_csi_channel() {
        let zeta = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let cs = draw_channel(&zeta, 0.0, &mut rng(5)).unwrap();
        assert_eq!(cs.tau, 1.0);
        assert!(cs.g_tilde.iter().all(|z| z.norm() == 0.0));
        assert_eq!(cs.g, cs.g_hat);
    }

    #[test]
    fn channel_identity_holds() {
        let zeta = DMatrix::from_fn(5, 3, |i, j| 1e-12 * (1.0 + i as f64 + 2.0 * j as f64));
        let cs = draw_channel(&zeta, 0.4, &mut rng(6)).unwrap();
        assert!((cs.tau * cs.tau - 1.4).abs() < 1e-15);
        let resid = (&cs.g * C64::new(cs.tau, 0.0) - &cs.g_hat - &cs.g_tilde).norm();
        assert!(resid < 1e-12 * cs.g.norm());
    }

    #[test]
    fn channel_rejects_bad_error_variance() {
        let zeta = DMatrix::from_element(2, 1, 1.0);
        assert!(draw_channel(&zeta, 1.5, &mut rng(1)).is_err());
        assert!(draw_channel(&zeta, -0.1, &mut rng(1)).is_err());
    }

    #[test]
    fn true_channel_variance_matches_zeta() {
        let zeta = DMatrix::from_row_slice(2, 1, &[1.0, 3.0]);
        let mut r = rng(12);
        let n = 100_000;
        let mut acc = [0.0; 2];
        for _ in 0..n {
            let cs = draw_channel(&zeta, 0.3, &mut r).unwrap();
            for (i, slot) in acc.iter_mut().enumerate() {
                *slot += cs.g[(i, 0)].norm_sqr();
            }
        }
        for i in 0..2 {
            let var = acc[i] / n as f64;
            assert!((var / zeta[(i, 0)] - 1.0).abs() < 0.02, "var {var}");
        }
    }

    #[test]
    fn redraw_keeps_estimate() {
        let zeta = DMatrix::from_element(3, 2, 1.0);
        let mut r = rng(13);
        let cs = draw_channel(&zeta, 0.5, &mut r).unwrap();
        let a = redraw_error(&cs, &mut r);
        let b = redraw_error(&cs, &mut r);
        assert_eq!(a.g_hat, cs.g_hat);
        assert_eq!(b.g_hat, cs.g_hat);
        assert_ne!(a.g_tilde, b.g_tilde);

        let perfect = draw_channel(&zeta, 0.0, &mut r).unwrap();
        let again = redraw_error(&perfect, &mut r);
        assert_eq!(again.g, perfect.g);
    }

    #[test]
    fn redraw_conditional_mean() {
        let zeta = DMatrix::from_element(2, 2, 1.0);
        let mut r = rng(14);
        let cs = draw_channel(&zeta, 0.5, &mut r).unwrap();
        let n = 10_000;
        let mut mean = CMat::zeros(2, 2);
        for _ in 0..n {
            mean += redraw_error(&cs, &mut r).g;
        }
        mean /= C64::new(n as f64, 0.0);
        let target = cs.g_hat.unscale(cs.tau);
        // standard error per entry is sqrt(0.5/1.5/n) ~ 0.006; compare on the matrix norm
        let rel = (&mean - &target).norm() / target.norm();
        assert!(rel < 0.02, "relative deviation {rel}");
    }

    #[test]
    fn error_covariance_hand_example() {
        let zeta = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let cov = error_covariance(&zeta, 0.5);
        assert_eq!(cov.theta[(0, 0)], C64::new(1.5, 0.0));
        assert_eq!(cov.theta[(1, 1)], C64::new(3.5, 0.0));
        assert_eq!(cov.theta[(0, 1)], C64::new(0.0, 0.0));
        assert_eq!(cov.theta, cov.theta.adjoint());
        assert!(error_covariance(&zeta, 0.0).theta.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn noise_variance_values() {
        let s = noise_variance(&NoiseModel::default()).unwrap();
        // 290 * 1.381e-23 * 5e7 * 10 = 2.00245e-12, quoted as 2.0025e-12
        assert!((s / (290.0 * 1.381e-23 * 5e7 * 10.0) - 1.0).abs() < 1e-14);
        assert!((s / 2.0025e-12 - 1.0).abs() < 5e-5);
        let s0 = noise_variance(&NoiseModel { noise_figure_db: 0.0, ..Default::default() }).unwrap();
        assert!((s0 / 2.00245e-13 - 1.0).abs() < 1e-12);
        let bad = NoiseModel { bandwidth_hz: 0.0, ..Default::default() };
        assert!(matches!(noise_variance(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn transmit_power_mapping() {
        let one = DMatrix::from_element(1, 1, 1.0);
        assert!((pt_for_snr(0.0, &one, 1, 1, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let two = DMatrix::from_element(1, 1, 2.0);
        assert!((pt_for_snr(0.0, &two, 1, 1, 1.0).unwrap() - 0.5).abs() < 1e-15);
        let zero = DMatrix::from_element(2, 2, 0.0);
        assert!(matches!(pt_for_snr(0.0, &zero, 2, 2, 1.0), Err(Error::DegenerateChannel(_))));
        assert!(pt_for_snr(f64::NAN, &one, 1, 1, 1.0).is_err());
    }

    #[test]
    fn transmit_power_round_trip() {
        let geom = place_network(12, 3, 100.0, &mut rng(21)).unwrap();
        let zeta = large_scale(&geom, 1900.0, 8.0, &mut rng(22));
        let s2 = noise_variance(&NoiseModel::default()).unwrap();
        let pt = pt_for_snr(22.0, &zeta, 12, 3, s2).unwrap();
        let back = snr_db_for_pt(pt, &zeta, 12, 3, s2);
        assert!(((back - 22.0) / 22.0).abs() < 1e-12);
    }

    #[test]
    fn geometry_csv() {
        let geom = place_network(2, 1, 10.0, &mut rng(1)).unwrap();
        let mut buf = Vec::new();
        geom.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("kind,index,x,y\nap,0,"));
    }
}
