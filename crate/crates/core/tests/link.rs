//! Trajectory → geometry → channel → rate, through the public API.

use uavbeam::numerics::RandomSource;
use uavbeam::phy::{beam_gain, rate, receive_sample, snr, snr_full, steering, BeamPair, ChannelState, Side};
use uavbeam::scenario::{generate_trajectory, relative_angle, Location, ScenarioConfig};

#[test]
fn genie_alignment_along_a_trajectory() {
    let cfg = ScenarioConfig::default().with_seed(21);
    let traj = generate_trajectory(&cfg).unwrap();
    assert_eq!(traj.len(), cfg.k_slots);
    for &u in &traj.locations {
        let state = ChannelState::from_geometry(u, cfg.ue_pos, &cfg).unwrap();
        let tx = steering(state.theta, cfg.m_tx, Side::Transmit).unwrap();
        let rx = steering(state.theta, cfg.n_rx, Side::Receive).unwrap();
        let reduced = snr(&state, &rx, cfg.p_t, cfg.sigma2).unwrap();
        let full = snr_full(
            &state,
            &BeamPair {
                tx_beam: tx,
                rx_beam: rx,
            },
            cfg.p_t,
            cfg.sigma2,
        )
        .unwrap();
        assert!((reduced - full).abs() <= 1e-10 * full);
        // closed form: p_t (λ / 4πd)² / σ²
        let h = cfg.c_prop / cfg.f_c / (4.0 * std::f64::consts::PI * state.range);
        assert!((reduced - cfg.p_t * h * h / cfg.sigma2).abs() <= 1e-10 * reduced);
    }
}

#[test]
fn misaligned_rate_follows_the_beam_pattern() {
    let cfg = ScenarioConfig::default();
    let ue = cfg.ue_pos;
    let u = Location::new(12.0, 16.0);
    let state = ChannelState::from_geometry(u, ue, &cfg).unwrap();
    let peak = snr(
        &state,
        &steering(state.theta, cfg.n_rx, Side::Receive).unwrap(),
        cfg.p_t,
        cfg.sigma2,
    )
    .unwrap();
    for guess in [
        Location::new(12.5, 16.0),
        Location::new(11.0, 17.5),
        Location::new(20.0, 3.0),
    ] {
        let theta_hat = relative_angle(guess, ue).unwrap();
        let w = steering(theta_hat, cfg.n_rx, Side::Receive).unwrap();
        let s = snr(&state, &w, cfg.p_t, cfg.sigma2).unwrap();
        assert!((s - peak * beam_gain(theta_hat, state.theta, cfg.n_rx)).abs() <= 1e-12 * peak);
        assert!(rate(s).unwrap() <= rate(peak).unwrap());
    }
}

#[test]
fn sample_level_snr_matches_closed_form() {
    let cfg = ScenarioConfig::default();
    let u = Location::new(30.0, 40.0);
    let state = ChannelState::from_geometry(u, cfg.ue_pos, &cfg).unwrap();
    let beams = BeamPair {
        tx_beam: steering(state.theta, cfg.m_tx, Side::Transmit).unwrap(),
        rx_beam: steering(state.theta, cfg.n_rx, Side::Receive).unwrap(),
    };
    let mut rng = RandomSource::new(4);
    let s = num_complex::Complex64::new(cfg.p_t.sqrt(), 0.0);
    let n = 40_000;
    let (mut signal, mut noise) = (num_complex::Complex64::new(0.0, 0.0), 0.0);
    let clean = uavbeam::phy::effective_gain(&state, &beams).unwrap() * s;
    for _ in 0..n {
        let r = receive_sample(&state, &beams, s, &mut rng, cfg.sigma2).unwrap();
        signal += r.value;
        noise += (r.value - clean).norm_sqr();
    }
    let measured = (signal / n as f64).norm_sqr() / (noise / n as f64);
    let expected = snr_full(&state, &beams, cfg.p_t, cfg.sigma2).unwrap();
    assert!((measured / expected - 1.0).abs() < 0.03, "{measured} vs {expected}");
}
