mod common;

use kladapt::backstep::{synthesize, SynthesisOptions};
use kladapt::expr::Expr;
use kladapt::model::{DesignConstants, StrictFeedbackSystem, System, TrueParameters};
use kladapt::moore_greitzer::{closed_loop, presets, ExampleController};
use kladapt::sim::dopri::{self, DopriOptions};
use kladapt::sim::{integrate, ClosedLoop, SimError, SimOptions};
use kladapt::verify::{check_exponential_envelope, ENVELOPE_SLACK};

use common::norm;

#[test]
fn halving_tolerances_stays_within_error_estimate() {
    for p in presets().into_iter().take(4) {
        let cl = closed_loop(&p.cfg, ExampleController::B).unwrap();
        let coarse = integrate(&cl, &p.cfg.x0, &p.cfg.theta_hat0, 10.0, &SimOptions::with_tolerances(1e-6, 1e-8)).unwrap();
        let fine = integrate(&cl, &p.cfg.x0, &p.cfg.theta_hat0, 10.0, &SimOptions::with_tolerances(5e-7, 5e-9)).unwrap();
        let (a, b) = (coarse.last().unwrap(), fine.last().unwrap());
        let diff = a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(
            diff < 10.0 * coarse.stats.error_estimate,
            "{}: change {diff:e} vs estimate {:e}",
            p.name,
            coarse.stats.error_estimate
        );
    }
}

#[test]
fn harmonic_oscillator_energy_drift() {
    let opts = DopriOptions { rtol: 1e-9, atol: 1e-12, ..Default::default() };
    let mut last = vec![0.0; 2];
    let (stats, stop) = dopri::integrate::<(), _, _>(
        |y, dy| {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        },
        &[1.0, 0.0],
        100.0,
        &[100.0],
        &opts,
        |_, y| last = y.to_vec(),
    );
    assert!(stop.is_none());
    let energy = 0.5 * (last[0] * last[0] + last[1] * last[1]);
    assert!((energy - 0.5).abs() < 1e-6, "drift {:e} after {} steps", energy - 0.5, stats.accepted);
    assert!((last[0] - 100f64.cos()).abs() < 1e-6);
}

#[test]
fn synthesized_integrator_chain_regulates() {
    let x1 = Expr::state(0);
    let sys = StrictFeedbackSystem::new(
        vec![Expr::zero(), Expr::zero()],
        vec![Expr::one(), Expr::one()],
        vec![vec![x1.clone()], vec![Expr::zero()]],
    )
    .unwrap();
    let consts = DesignConstants::new(1.0, 1.0, 1.0, 1.0, vec![1.0]).unwrap();
    let (ctrl, _, _) = synthesize(&sys, &consts, &SynthesisOptions::default()).unwrap();
    let cl = ClosedLoop::new(&System::StrictFeedback(sys), &ctrl, &TrueParameters(vec![0.5])).unwrap();
    let tr = integrate(&cl, &[1.0, 0.0], &[0.0], 20.0, &SimOptions::default()).unwrap();
    assert!(norm(tr.x(tr.len() - 1)) < 1e-3);
    let env = check_exponential_envelope("envelope", &tr, &cl, ctrl.ios.as_ref().unwrap(), ENVELOPE_SLACK, 1e-6);
    assert!(env.pass, "worst margin {:e} at {}", env.worst_margin, env.worst_time);
}

#[test]
fn open_loop_blow_up_is_reported() {
    let cfg = presets().into_iter().find(|p| p.name == "destabilizing").unwrap().cfg;
    let sys = System::StrictFeedback(kladapt::moore_greitzer::system());
    let ctrl = kladapt::matched::AdaptiveController::open_loop(2, 2);
    let cl = ClosedLoop::new(&sys, &ctrl, &TrueParameters(vec![1.5, 0.5])).unwrap();
    let err = integrate(&cl, &cfg.x0, &[0.0, 0.0], 20.0, &SimOptions::default()).unwrap_err();
    assert!(matches!(err, SimError::Escape { .. } | SimError::StepSizeUnderflow { .. }), "{err}");
    let t = err.blow_up_time().unwrap();
    assert!(t > 0.0 && t < 20.0);
    assert!(!err.partial().unwrap().is_empty());
}

#[test]
fn runs_are_bit_reproducible() {
    let p = &presets()[0];
    let cl = closed_loop(&p.cfg, ExampleController::Synthesized).unwrap();
    let a = integrate(&cl, &p.cfg.x0, &p.cfg.theta_hat0, 5.0, &SimOptions::default()).unwrap();
    let b = integrate(&cl, &p.cfg.x0, &p.cfg.theta_hat0, 5.0, &SimOptions::default()).unwrap();
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_csv(&mut ca).unwrap();
    b.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
}
