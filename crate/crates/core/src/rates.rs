//! SINRs, achievable rates and their error-averaged estimates.
//!
//! SINRs follow the estimate/error decomposition of the received signal: the
//! part of a stream seen through the channel estimate is useful signal, while
//! everything carried by the estimation error is interference. The `delta`
//! cross terms can make an instantaneous SINR negative; such values are kept
//! as-is by the SINR functions and contribute zero rate.

use serde::Serialize;

use crate::channel::ChannelSet;
use crate::linalg::{CMat, CVec};
use crate::precoders::PrecoderSet;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

fn column(m: &CMat, j: usize) -> CVec {
    m.column(j).into_owned()
}

/// `delta = 2 Re{(p^H g_hat)(g_tilde^H p)} + |g_tilde^H p|^2`.
fn delta(g_hat_k: &CVec, g_tilde_k: &CVec, p: &CVec) -> f64 {
    let a = g_hat_k.dotc(p); // g_hat^H p
    let e = g_tilde_k.dotc(p); // g_tilde^H p
    2.0 * (a.conj() * e).re + e.norm_sqr()
}

/// Normalized private precoders `p_bar_i = P_p[:, i] / (f tau)`.
fn normalized_private(cs: &ChannelSet, ps: &PrecoderSet) -> CMat {
    ps.p_p.unscale(ps.f * cs.tau)
}

/// Private-stream SINR of every user after common-stream cancellation.
pub fn sinr_private(cs: &ChannelSet, ps: &PrecoderSet, sigma_n2: f64) -> Vec<f64> {
    let k = cs.k();
    let p_bar = normalized_private(cs, ps);
    let f2 = ps.f * ps.f;
    (0..k)
        .map(|u| {
            let gh = column(&cs.g_hat, u);
            let gt = column(&cs.g_tilde, u);
            let mut signal = 0.0;
            let mut mui = 0.0;
            let mut residual = 0.0;
            for i in 0..k {
                let p = column(&p_bar, i);
                let power = gh.dotc(&p).norm_sqr();
                if i == u {
                    signal = power;
                } else {
                    mui += power;
                }
                residual += delta(&gh, &gt, &p);
            }
            f2 * signal / (f2 * mui + f2 * residual + sigma_n2)
        })
        .collect()
}

/// Unit-norm common direction, or `None` without common power.
fn common_direction(ps: &PrecoderSet) -> Option<CVec> {
    let norm = ps.p_c.norm();
    (ps.alpha_c > 0.0 && norm > 0.0).then(|| ps.p_c.unscale(norm))
}

/// Common-stream SINR of every user, private streams treated as noise.
///
/// The private interference is evaluated on `g_hat + g_tilde = tau g`, which
/// keeps the expression identical to the received-signal model.
pub fn sinr_common(cs: &ChannelSet, ps: &PrecoderSet, sigma_n2: f64) -> Vec<f64> {
    sinr_common_with(cs, ps, sigma_n2, |cs, u| column(&cs.g_hat, u) + column(&cs.g_tilde, u))
}

/// Common-stream SINR with the private interference taken on the true
/// channel `g`, exactly as the closed form is usually printed. It
/// under-counts private interference by `tau^2` whenever the CSI is
/// imperfect; kept to document that discrepancy.
pub fn sinr_common_printed(cs: &ChannelSet, ps: &PrecoderSet, sigma_n2: f64) -> Vec<f64> {
    sinr_common_with(cs, ps, sigma_n2, |cs, u| column(&cs.g, u))
}

fn sinr_common_with(
    cs: &ChannelSet,
    ps: &PrecoderSet,
    sigma_n2: f64,
    interference_channel: impl Fn(&ChannelSet, usize) -> CVec,
) -> Vec<f64> {
    let k = cs.k();
    let Some(psi) = common_direction(ps) else {
        return vec![0.0; k];
    };
    let p_bar = normalized_private(cs, ps);
    let f2 = ps.f * ps.f;
    let tau2 = cs.tau * cs.tau;
    (0..k)
        .map(|u| {
            let gh = column(&cs.g_hat, u);
            let gt = column(&cs.g_tilde, u);
            let seen = interference_channel(cs, u);
            let private: f64 = (0..k).map(|i| seen.dotc(&column(&p_bar, i)).norm_sqr()).sum();
            let signal = ps.alpha_c * gh.dotc(&psi).norm_sqr();
            signal / (ps.alpha_c * delta(&gh, &gt, &psi) + tau2 * (f2 * private + sigma_n2))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSample {
    pub gamma_c: Vec<f64>,
    pub gamma_p: Vec<f64>,
    /// Common rate decodable by every user, bits/s/Hz.
    pub r_c: f64,
    pub r_k: Vec<f64>,
    pub sum: f64,
}

impl RateSample {
    /// Builds rates from raw SINRs; negative SINRs are clipped to zero.
    pub fn from_sinrs(gamma_c: &[f64], gamma_p: &[f64]) -> Self {
        let clip = |v: &[f64]| v.iter().map(|&g| g.max(0.0)).collect::<Vec<_>>();
        let gamma_c = clip(gamma_c);
        let gamma_p = clip(gamma_p);
        let r_c = gamma_c.iter().map(|&g| (1.0 + g).log2()).reduce(f64::min).unwrap_or(0.0);
        let r_k: Vec<f64> = gamma_p.iter().map(|&g| (1.0 + g).log2()).collect();
        let sum = r_c + r_k.iter().sum::<f64>();
        Self { gamma_c, gamma_p, r_c, r_k, sum }
    }

    fn zero(k: usize) -> Self {
        Self { gamma_c: vec![0.0; k], gamma_p: vec![0.0; k], r_c: 0.0, r_k: vec![0.0; k], sum: 0.0 }
    }

    fn accumulate(&mut self, other: &RateSample) {
        let add = |a: &mut Vec<f64>, b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.gamma_c, &other.gamma_c);
        add(&mut self.gamma_p, &other.gamma_p);
        add(&mut self.r_k, &other.r_k);
        self.r_c += other.r_c;
        self.sum += other.sum;
    }

    fn scale(&mut self, s: f64) {
        for v in [&mut self.gamma_c, &mut self.gamma_p, &mut self.r_k] {
            v.iter_mut().for_each(|x| *x *= s);
        }
        self.r_c *= s;
        self.sum *= s;
    }
}

pub fn instantaneous_rates(cs: &ChannelSet, ps: &PrecoderSet, sigma_n2: f64) -> RateSample {
    RateSample::from_sinrs(&sinr_common(cs, ps, sigma_n2), &sinr_private(cs, ps, sigma_n2))
}

/// Conditional average over error realizations for fixed precoders: each
/// element of `errors` replaces `G_tilde` in `cs`.
pub fn average_over_errors(cs: &ChannelSet, ps: &PrecoderSet, sigma_n2: f64, errors: &[CMat]) -> RateSample {
    let mut acc = RateSample::zero(cs.k());
    for e in errors {
        acc.accumulate(&instantaneous_rates(&cs.with_error(e.clone()), ps, sigma_n2));
    }
    if !errors.is_empty() {
        acc.scale(1.0 / errors.len() as f64);
    }
    acc
}

/// Same as [`average_over_errors`] but on pre-assembled channel sets, which
/// avoids rebuilding `G` for every candidate precoder.
pub fn average_rates(channels: &[ChannelSet], ps: &PrecoderSet, sigma_n2: f64) -> RateSample {
    let k = channels.first().map_or(0, ChannelSet::k);
    let mut acc = RateSample::zero(k);
    for cs in channels {
        acc.accumulate(&instantaneous_rates(cs, ps, sigma_n2));
    }
    if !channels.is_empty() {
        acc.scale(1.0 / channels.len() as f64);
    }
    acc
}

/// Sum rate of a common-power candidate, by error-averaged evaluation.
pub fn mean_sum_rate(channels: &[ChannelSet], ps: &PrecoderSet, sigma_n2: f64) -> f64 {
    average_rates(channels, ps, sigma_n2).sum
}

/// Candidate common powers `{0, s, 2s, ...} * P_t` up to `(1 - s) P_t`.
pub fn alpha_grid(p_t: f64, grid_step: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut j = 1usize;
    while (j as f64) * grid_step <= 1.0 - grid_step + 1e-9 {
        out.push(j as f64 * grid_step * p_t);
        j += 1;
    }
    out
}

/// Exhaustive search over the common-power grid. `evaluate` maps a candidate
/// `alpha_c` to its error-averaged sum rate; the first (smallest) maximizer
/// wins ties. Candidates whose precoder cannot be built are skipped.
pub fn allocate_alpha_c<E>(p_t: f64, grid_step: f64, mut evaluate: E) -> crate::Result<(f64, f64)>
where
    E: FnMut(f64) -> crate::Result<f64>,
{
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(crate::Error::Config(format!("power grid step must lie in (0, 1], got {grid_step}")));
    }
    let mut best: Option<(f64, f64)> = None;
    let mut first_err = None;
    for alpha in alpha_grid(p_t, grid_step) {
        match evaluate(alpha) {
            Ok(rate) if rate.is_finite() => {
                if best.is_none_or(|(_, r)| rate > r) {
                    best = Some((alpha, rate));
                }
            }
            Ok(_) => {}
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => Err(crate::Error::DegenerateChannel("no finite rate on the power grid".into())),
    }
}

/// Mean with a 95% normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
    pub count: usize,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self { mean: f64::NAN, half_width: f64::NAN, count: 0 };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let half_width = if n > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            Z95 * (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, half_width, count: n }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channel, error_covariance, redraw_error};
    use crate::precoders::{build_scheme, Scheme};
    use crate::rng::{substream, Purpose};
    use nalgebra::DMatrix;

    fn setup(sigma_e2: f64, seed: u64) -> (ChannelSet, crate::channel::ErrorCovariance) {
        let zeta = DMatrix::from_fn(5, 3, |n, k| 0.5 + 0.1 * (n + 2 * k) as f64);
        let cs = draw_channel(&zeta, sigma_e2, &mut substream(seed, Purpose::Test, 0, 0)).unwrap();
        let theta = error_covariance(&zeta, sigma_e2);
        (cs, theta)
    }

    #[test]
    fn no_common_power_means_zero_common_sinr() {
        let (cs, theta) = setup(0.3, 1);
        let ps = build_scheme(Scheme::RscfMmseRbPcRb, &cs.g_hat, &theta, cs.tau, 10.0, 0.0, 0.1, 3).unwrap();
        assert!(sinr_common(&cs, &ps, 0.1).iter().all(|&g| g == 0.0));
        let r = instantaneous_rates(&cs, &ps, 0.1);
        assert_eq!(r.r_c, 0.0);
        let private: f64 = r.gamma_p.iter().map(|g| (1.0 + g).log2()).sum();
        assert!((r.sum - private).abs() < 1e-14);
    }

    #[test]
    fn single_user_perfect_csi() {
        let zeta = DMatrix::from_element(3, 1, 1.0);
        let cs = draw_channel(&zeta, 0.0, &mut substream(2, Purpose::Test, 0, 0)).unwrap();
        let theta = error_covariance(&zeta, 0.0);
        let ps = build_scheme(Scheme::CfMmse, &cs.g_hat, &theta, 1.0, 4.0, 0.0, 0.2, 3).unwrap();
        let g = sinr_private(&cs, &ps, 0.2);
        let p_bar = ps.p_p.unscale(ps.f);
        let expected = ps.f * ps.f * cs.g_hat.column(0).dotc(&p_bar.column(0)).norm_sqr() / 0.2;
        assert!((g[0] - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn noise_drives_rates_to_zero() {
        let (cs, theta) = setup(0.0, 3);
        let ps = build_scheme(Scheme::RscfMmse, &cs.g_hat, &theta, cs.tau, 10.0, 4.0, 0.1, 3).unwrap();
        let mut last = f64::INFINITY;
        for s in [0.1, 1.0, 10.0, 1e3, 1e6, 1e12] {
            let r = instantaneous_rates(&cs, &ps, s).sum;
            assert!(r <= last);
            last = r;
        }
        assert!(last < 1e-9);
    }

    #[test]
    fn rate_sample_invariants() {
        let r = RateSample::from_sinrs(&[1.0, 3.0, -0.5], &[0.5, -2.0, 7.0]);
        assert_eq!(r.gamma_c, vec![1.0, 3.0, 0.0]);
        assert_eq!(r.r_c, 0.0);
        assert_eq!(r.r_k, vec![0.5f64.ln_1p() / std::f64::consts::LN_2, 0.0, 3.0]);
        let r = RateSample::from_sinrs(&[1.0, 3.0], &[0.0, 0.0]);
        assert_eq!(r.r_c, 1.0);
        assert!(r.r_c <= 2.0);
    }

    #[test]
    fn single_error_draw_is_instantaneous() {
        let (cs, theta) = setup(0.3, 4);
        let ps = build_scheme(Scheme::RscfMmseRbPpRb, &cs.g_hat, &theta, cs.tau, 10.0, 2.0, 0.1, 3).unwrap();
        let avg = average_over_errors(&cs, &ps, 0.1, std::slice::from_ref(&cs.g_tilde));
        assert_eq!(avg, instantaneous_rates(&cs, &ps, 0.1));
    }

    #[test]
    fn perfect_csi_average_is_deterministic() {
        let (cs, theta) = setup(0.0, 5);
        let ps = build_scheme(Scheme::RscfMmseRbPcRb, &cs.g_hat, &theta, cs.tau, 10.0, 2.0, 0.1, 3).unwrap();
        let mut rng = substream(5, Purpose::Error, 0, 0);
        let errs: Vec<CMat> = (0..7).map(|_| redraw_error(&cs, &mut rng).g_tilde).collect();
        let avg = average_over_errors(&cs, &ps, 0.1, &errs);
        let once = instantaneous_rates(&cs, &ps, 0.1);
        assert!((avg.sum - once.sum).abs() < 1e-12 * once.sum);
    }

    #[test]
    fn alpha_grid_shape() {
        assert_eq!(alpha_grid(2.0, 1.0), vec![0.0]);
        let g = alpha_grid(1.0, 0.005);
        assert_eq!(g.len(), 200);
        assert!((g[199] - 0.995).abs() < 1e-12);
        assert_eq!(alpha_grid(1.0, 0.25), vec![0.0, 0.25, 0.5, 0.75]);
    }

    #[test]
    fn allocation_prefers_smallest_maximizer() {
        let (a, r) = allocate_alpha_c(1.0, 0.25, |a| Ok(if a >= 0.25 { 2.0 } else { 1.0 })).unwrap();
        assert_eq!((a, r), (0.25, 2.0));
        let (a, _) = allocate_alpha_c(1.0, 1.0, |_| Ok(1.0)).unwrap();
        assert_eq!(a, 0.0);
        assert!(allocate_alpha_c(1.0, 0.0, |_| Ok(1.0)).is_err());
        assert!(allocate_alpha_c(1.0, 1.5, |_| Ok(1.0)).is_err());
    }

    #[test]
    fn estimate_statistics() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((e.half_width - Z95 * sd / 2.0).abs() < 1e-14);
        assert_eq!(Estimate::from_samples(&[3.0]).half_width, 0.0);
    }
}
