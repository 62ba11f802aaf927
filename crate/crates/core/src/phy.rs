//! Line-of-sight channel, ULA steering vectors, SNR and rate.
//!
//! Half-wavelength element spacing is assumed, so the per-element phase
//! progression is `π·cos θ`. The simulator evaluates SNR in the reduced form
//! `p_t |h w^H b(θ)|² / σ²`; the dense channel matrix exists for cross-checks.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{ComplexVec, RandomSource};
use crate::scenario::{relative_angle, Location, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Transmit,
    Receive,
}

/// Normalized ULA response toward `angle`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub vec: ComplexVec,
    pub angle: f64,
    pub side: Side,
}

impl SteeringVector {
    pub fn len(&self) -> usize {
        self.vec.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vec.is_empty()
    }
}

/// Element `n` is `exp(−jπ n cos θ)/√len`.
pub fn steering(theta: f64, len: usize, side: Side) -> Result<SteeringVector> {
    if len == 0 {
        return Err(Error::Domain("steering vector needs at least one element".into()));
    }
    let scale = 1.0 / (len as f64).sqrt();
    let phase_step = PI * theta.cos();
    let vec = (0..len)
        .map(|n| Complex64::from_polar(scale, -phase_step * n as f64))
        .collect::<Vec<_>>()
        .into();
    Ok(SteeringVector {
        vec,
        angle: theta,
        side,
    })
}

/// Free-space amplitude gain `c / (4π f_c d)`.
pub fn path_gain(u: Location, ue: Location, cfg: &ScenarioConfig) -> Result<f64> {
    let range = u.distance(ue);
    if !(range > 0.0) {
        return Err(Error::DegenerateGeometry("zero UAV-UE range".into()));
    }
    Ok(cfg.c_prop / (4.0 * PI * cfg.f_c * range))
}

/// Per-slot LOS channel parameters; the rank-1 matrix is built on demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    pub path_gain: f64,
    pub theta: f64,
    pub range: f64,
}

impl ChannelState {
    pub fn from_geometry(u: Location, ue: Location, cfg: &ScenarioConfig) -> Result<Self> {
        Ok(ChannelState {
            path_gain: path_gain(u, ue, cfg)?,
            theta: relative_angle(u, ue)?,
            range: u.distance(ue),
        })
    }
}

/// Dense `N×M` channel `h · b(θ) a(θ)^H`.
pub fn channel_matrix(state: &ChannelState, m_tx: usize, n_rx: usize) -> Result<Array2<Complex64>> {
    let a = steering(state.theta, m_tx, Side::Transmit)?;
    let b = steering(state.theta, n_rx, Side::Receive)?;
    Ok(Array2::from_shape_fn((n_rx, m_tx), |(n, m)| {
        state.path_gain * b.vec[n] * a.vec[m].conj()
    }))
}

/// Transmit beam `f_k` and receive beam `w_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPair {
    pub tx_beam: SteeringVector,
    pub rx_beam: SteeringVector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxSample {
    pub value: Complex64,
    pub tx_symbol: Complex64,
    pub noise_power: f64,
}

/// Noiseless combined response `w^H H f`.
pub fn effective_gain(state: &ChannelState, beams: &BeamPair) -> Result<Complex64> {
    let h = channel_matrix(state, beams.tx_beam.len(), beams.rx_beam.len())?;
    let f = beams.tx_beam.vec.as_slice();
    let w = beams.rx_beam.vec.as_slice();
    let mut acc = Complex64::new(0.0, 0.0);
    for (n, row) in h.outer_iter().enumerate() {
        let hf: Complex64 = row.iter().zip(f).map(|(x, y)| x * y).sum();
        acc += w[n].conj() * hf;
    }
    Ok(acc)
}

/// `r = w^H H f s + η` with circularly symmetric complex Gaussian `η`
/// of total variance `σ²`.
pub fn receive_sample(
    state: &ChannelState,
    beams: &BeamPair,
    s: Complex64,
    rng: &mut RandomSource,
    sigma2: f64,
) -> Result<RxSample> {
    if !(sigma2 >= 0.0) {
        return Err(Error::Domain(format!("negative noise power {sigma2}")));
    }
    let (re, im) = rng.gaussian2((sigma2 / 2.0).sqrt())?;
    let value = effective_gain(state, beams)? * s + Complex64::new(re, im);
    Ok(RxSample {
        value,
        tx_symbol: s,
        noise_power: sigma2,
    })
}

/// Receive SNR with a matched transmit beam: `p_t |h w^H b(θ)|² / σ²`.
pub fn snr(state: &ChannelState, rx_beam: &SteeringVector, p_t: f64, sigma2: f64) -> Result<f64> {
    let b = steering(state.theta, rx_beam.len(), Side::Receive)?;
    let wb = rx_beam.vec.inner(&b.vec)?;
    Ok(p_t * (state.path_gain * wb).norm_sqr() / sigma2)
}

/// SNR via the unreduced expression `p_t |h w^H b a^H f|² / σ²`.
pub fn snr_full(state: &ChannelState, beams: &BeamPair, p_t: f64, sigma2: f64) -> Result<f64> {
    Ok(p_t * effective_gain(state, beams)?.norm_sqr() / sigma2)
}

/// Achievable rate `log2(1 + snr)` in bits/s/Hz.
pub fn rate(snr_value: f64) -> Result<f64> {
    if !(snr_value >= 0.0) {
        return Err(Error::Domain(format!("negative SNR {snr_value}")));
    }
    Ok((1.0 + snr_value).log2())
}

/// Normalized receive-array gain `|b(θ̂)^H b(θ)|²`, a Dirichlet kernel in
/// `cos θ − cos θ̂`.
pub fn beam_gain(theta_hat: f64, theta: f64, n: usize) -> f64 {
    let delta = theta.cos() - theta_hat.cos();
    let sum: Complex64 = (0..n).map(|i| Complex64::from_polar(1.0, PI * i as f64 * delta)).sum();
    (sum / n as f64).norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn state_at_range(range: f64, theta: f64) -> ChannelState {
        let cfg = ScenarioConfig::default();
        let u = Location::new(range * theta.cos(), range * theta.sin());
        ChannelState::from_geometry(u, Location::default(), &cfg).unwrap()
    }

    #[test]
    fn steering_examples() {
        let v = steering(PI / 2.0, 4, Side::Receive).unwrap();
        for z in v.vec.iter() {
            assert!((z - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
        let v = steering(0.0, 2, Side::Transmit).unwrap();
        assert!((v.vec[0] - Complex64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((v.vec[1] - Complex64::new(-FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        let v = steering(PI / 3.0, 2, Side::Transmit).unwrap();
        assert!((v.vec[1] - Complex64::new(0.0, -FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!(matches!(steering(0.3, 0, Side::Transmit), Err(Error::Domain(_))));
    }

    #[test]
    fn path_gain_examples() {
        let cfg = ScenarioConfig::default();
        let o = Location::default();
        let g100 = path_gain(Location::new(100.0, 0.0), o, &cfg).unwrap();
        assert_relative_eq!(g100, 7.957_747e-6, max_relative = 1e-6);
        let g10 = path_gain(Location::new(0.0, 10.0), o, &cfg).unwrap();
        assert_relative_eq!(g10, 7.957_747e-5, max_relative = 1e-6);
        let g200 = path_gain(Location::new(200.0, 0.0), o, &cfg).unwrap();
        assert_eq!(g100 / 2.0, g200);
        assert!(matches!(path_gain(o, o, &cfg), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn channel_matrix_examples() {
        let flat = ChannelState {
            path_gain: 1.0,
            theta: PI / 2.0,
            range: 1.0,
        };
        let h = channel_matrix(&flat, 2, 2).unwrap();
        for z in h.iter() {
            assert!((z - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
        let endfire = ChannelState {
            path_gain: 1.0,
            theta: 0.0,
            range: 1.0,
        };
        let h = channel_matrix(&endfire, 2, 2).unwrap();
        assert!((h[[1, 0]] - Complex64::new(-0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn channel_matrix_is_rank_one_with_frobenius_gain() {
        let mut rng = RandomSource::new(8);
        for _ in 0..50 {
            let theta = rng.uniform(0.0, PI).unwrap();
            let state = ChannelState {
                path_gain: 3.7e-5,
                theta,
                range: 1.0,
            };
            let h = channel_matrix(&state, 16, 8).unwrap();
            let fro = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert_relative_eq!(fro, 3.7e-5, max_relative = 1e-12);
            // rank one: every 2x2 minor vanishes relative to the entry scale
            let scale = 3.7e-5 * 3.7e-5 / (16.0 * 8.0);
            for r in 1..8 {
                for c in 1..16 {
                    let minor = h[[0, 0]] * h[[r, c]] - h[[0, c]] * h[[r, 0]];
                    assert!(minor.norm() < 1e-10 * scale);
                }
            }
        }
    }

    #[test]
    fn snr_and_rate_examples() {
        let cfg = ScenarioConfig::default();
        let state = state_at_range(100.0, 0.7);
        let w = steering(state.theta, cfg.n_rx, Side::Receive).unwrap();
        let s = snr(&state, &w, cfg.p_t, cfg.sigma2).unwrap();
        assert!((s - 6.33257).abs() < 1e-5, "snr {s}");
        // log2(1 + 0.1·(7.957747e-6)²/1e-12), evaluated independently
        assert!((rate(s).unwrap() - 2.874_319_721).abs() < 1e-8);

        let s10 = snr(&state, &w, 10.0 * cfg.p_t, cfg.sigma2).unwrap();
        assert_relative_eq!(s10, 10.0 * s, max_relative = 1e-14);

        // one null away in the cosine domain: cos θ̂ = cos θ − 2/N
        let theta_null = (state.theta.cos() - 2.0 / cfg.n_rx as f64).acos();
        let w_null = steering(theta_null, cfg.n_rx, Side::Receive).unwrap();
        assert!(snr(&state, &w_null, cfg.p_t, cfg.sigma2).unwrap() < 1e-20);
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate(0.0).unwrap(), 0.0);
        assert_eq!(rate(1.0).unwrap(), 1.0);
        assert!((rate(6.33257).unwrap() - 2.874_318_939).abs() < 1e-8);
        assert!(matches!(rate(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn beam_gain_examples() {
        assert!((beam_gain(0.9, 0.9, 8) - 1.0).abs() < 1e-12);
        let theta = 1.2f64;
        let null = (theta.cos() - 0.25).acos();
        assert!(beam_gain(null, theta, 8) < 1e-12);
        let half = (theta.cos() - 0.125).acos();
        // |sin(nπδ/2) / (n sin(πδ/2))|² at n=8, δ=1/8
        let oracle = ((PI / 2.0).sin() / (8.0 * (PI / 16.0).sin())).powi(2);
        assert!((beam_gain(half, theta, 8) - oracle).abs() < 1e-12);
        assert!((oracle - 0.41054).abs() < 1e-5);
    }

    #[test]
    fn receive_sample_noiseless_cases() {
        let cfg = ScenarioConfig::default();
        let state = state_at_range(40.0, 1.1);
        let s = Complex64::from_polar(cfg.p_t.sqrt(), 0.3);
        let beams = BeamPair {
            tx_beam: steering(state.theta, cfg.m_tx, Side::Transmit).unwrap(),
            rx_beam: steering(state.theta, cfg.n_rx, Side::Receive).unwrap(),
        };
        let mut rng = RandomSource::new(2);
        let r = receive_sample(&state, &beams, s, &mut rng, 0.0).unwrap();
        assert!((r.value - state.path_gain * s).norm() < 1e-12 * state.path_gain);
        assert_relative_eq!(r.tx_symbol.norm_sqr(), cfg.p_t, max_relative = 1e-12);

        let theta_null = (state.theta.cos() - 2.0 / cfg.n_rx as f64).acos();
        let nulled = BeamPair {
            rx_beam: steering(theta_null, cfg.n_rx, Side::Receive).unwrap(),
            ..beams
        };
        let r = receive_sample(&state, &nulled, s, &mut rng, 0.0).unwrap();
        assert!(r.value.norm() < 1e-12 * state.path_gain);
    }

    #[test]
    fn receive_sample_noise_variance() {
        let cfg = ScenarioConfig::default();
        let state = state_at_range(30.0, 0.8);
        let s = Complex64::new(cfg.p_t.sqrt(), 0.0);
        let beams = BeamPair {
            tx_beam: steering(state.theta, cfg.m_tx, Side::Transmit).unwrap(),
            rx_beam: steering(state.theta + 0.05, cfg.n_rx, Side::Receive).unwrap(),
        };
        let clean = effective_gain(&state, &beams).unwrap() * s;
        let mut rng = RandomSource::new(21);
        let draws = 100_000;
        let power = (0..draws)
            .map(|_| {
                let r = receive_sample(&state, &beams, s, &mut rng, cfg.sigma2).unwrap();
                (r.value - clean).norm_sqr()
            })
            .sum::<f64>()
            / draws as f64;
        assert!((power / cfg.sigma2 - 1.0).abs() < 0.02, "ratio {}", power / cfg.sigma2);
    }

    #[test]
    fn steering_vectors_are_unit_norm() {
        let mut rng = RandomSource::new(4);
        for _ in 0..1000 {
            let theta = rng.uniform(0.0, PI).unwrap();
            let a = steering(theta, 16, Side::Transmit).unwrap();
            assert!((a.vec.norm() - 1.0).abs() < 1e-12);
            assert!((a.vec.inner(&a.vec).unwrap().norm() - 1.0).abs() < 1e-12);
            for z in a.vec.iter() {
                assert!((z.norm() - 0.25).abs() < 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn reduced_snr_matches_full_form(theta in 0.0f64..PI, theta_hat in 0.0f64..PI, range in 5.0f64..200.0) {
            let cfg = ScenarioConfig::default();
            let state = state_at_range(range, theta);
            let beams = BeamPair {
                tx_beam: steering(state.theta, cfg.m_tx, Side::Transmit).unwrap(),
                rx_beam: steering(theta_hat, cfg.n_rx, Side::Receive).unwrap(),
            };
            let reduced = snr(&state, &beams.rx_beam, cfg.p_t, cfg.sigma2).unwrap();
            let full = snr_full(&state, &beams, cfg.p_t, cfg.sigma2).unwrap();
            let peak = cfg.p_t * state.path_gain.powi(2) / cfg.sigma2;
            // measured against the aligned SNR so deep nulls do not inflate the ratio
            prop_assert!((reduced - full).abs() <= 1e-12 * peak);
            let gain = beam_gain(theta_hat, state.theta, cfg.n_rx);
            prop_assert!((reduced - peak * gain).abs() <= 1e-12 * peak);
        }

        #[test]
        fn beam_gain_is_symmetric_and_bounded(a in 0.0f64..PI, b in 0.0f64..PI, n in 1usize..32) {
            let g = beam_gain(a, b, n);
            prop_assert!((g - beam_gain(b, a, n)).abs() < 1e-12);
            prop_assert!((-1e-15..=1.0 + 1e-12).contains(&g));
        }

        #[test]
        fn rate_is_monotone(a in 0.0f64..1e6, b in 0.0f64..1e6) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(rate(lo).unwrap() <= rate(hi).unwrap());
        }
    }
}
