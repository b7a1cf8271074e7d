use std::f64::consts::{FRAC_PI_2, TAU};

use msgate_motion::channel::{gate_channel, gate_truncation, ideal_gate_choi, mix_channels};
use msgate_motion::fock::MotionalSpec;
use msgate_motion::metrics::{error_report, process_infidelity};
use msgate_motion::msgate::{calibrate_gate, FrequencyOffset, GateParams};
use msgate_motion::noise::{averaged_channel, drift_sweep, NoiseModel};
use msgate_motion::sideband::{fit_mle, synthetic_dataset, time_grid, RabiModel, SearchBox, SidebandState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gate() -> GateParams {
    calibrate_gate(2, 60e-6, TAU * 3e6).unwrap()
}

fn spec_for(p: &GateParams, a2: f64, phi: f64, nbar: f64, offsets: &[FrequencyOffset]) -> MotionalSpec {
    let spec = MotionalSpec::from_alpha_sq(a2, phi, nbar, 1).unwrap();
    let n = gate_truncation(p, spec.alpha_mag, nbar, offsets).unwrap();
    spec.with_truncation(n).unwrap()
}

#[test]
fn resonant_gate_is_ideal_for_any_motion() {
    let p = gate();
    let off = FrequencyOffset::from_hz(0.0);
    let spec = spec_for(&p, 1.5, 0.7, 0.3, &[off]);
    let choi = gate_channel(&p, off, &spec).unwrap();
    assert!(process_infidelity(&choi, &ideal_gate_choi()).unwrap() < 1e-9);
}

#[test]
fn error_bounds_hold_across_offsets() {
    let p = gate();
    let offsets: Vec<_> = [-2000.0, -300.0, 450.0, 1800.0].map(FrequencyOffset::from_hz).to_vec();
    let spec = spec_for(&p, 0.8, FRAC_PI_2, 0.2, &offsets);
    for r in drift_sweep(&p, &spec, &offsets).unwrap() {
        assert!(r.infidelity > 0.0);
        assert!(r.diamond_distance >= 2.0 * r.infidelity - 1e-7, "{r:?}");
        assert!(r.diamond_distance <= 2.0 * r.infidelity.sqrt() + 1e-7, "{r:?}");
    }
}

#[test]
fn averaged_channel_is_the_weighted_mixture() {
    let p = gate();
    let model = NoiseModel::from_hz(400.0, 7).unwrap();
    let nodes = model.nodes().unwrap();
    let offsets: Vec<_> = nodes.iter().map(|(o, _)| *o).collect();
    let spec = spec_for(&p, 0.5, 0.0, 0.1, &offsets);
    let (avg, used) = averaged_channel(&p, &spec, &model).unwrap();

    let used = spec.with_truncation(used.truncation).unwrap();
    let channels: Vec<_> = offsets.iter().map(|o| gate_channel(&p, *o, &used).unwrap()).collect();
    let weighted: Vec<_> = nodes.iter().zip(&channels).map(|((_, w), c)| (*w, c)).collect();
    let mixed = mix_channels(&weighted).unwrap();
    let a = error_report(&avg, &ideal_gate_choi(), Default::default()).unwrap();
    let b = error_report(&mixed, &ideal_gate_choi(), Default::default()).unwrap();
    assert!((a.infidelity - b.infidelity).abs() < 1e-10 * a.infidelity.max(1e-12) + 1e-14);
}

#[test]
fn high_count_fit_recovers_truth() {
    let truth = RabiModel::new(TAU * 13e3, 1.0 / 1.34e-3).unwrap();
    let states = [SidebandState::new(0.47, 0.12).unwrap(), SidebandState::new(0.9, 0.05).unwrap()];
    let times = time_grid(5e-6, 300e-6, 80);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let data: Vec<_> = states
        .iter()
        .enumerate()
        .map(|(k, s)| synthetic_dataset(format!("set{k}"), &truth, s, &times, 5000, &mut rng).unwrap())
        .collect();
    let fit = fit_mle(&data, &SearchBox::default()).unwrap();

    assert!((fit.omega_sb / truth.omega_sb - 1.0).abs() < 0.01);
    for (est, s) in fit.datasets.iter().zip(&states) {
        assert!((est.alpha_sq - s.alpha_sq).abs() <= 2.0 * est.alpha_sq_uncertainty, "{est:?}");
        assert!((est.nbar - s.nbar).abs() <= 2.0 * est.nbar_uncertainty, "{est:?}");
    }
}
