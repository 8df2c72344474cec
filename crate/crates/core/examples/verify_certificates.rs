//! Check the Lyapunov, IOS and exponential-envelope certificates of
//! controller B and of the synthesized controller on every preset.

use kladapt::moore_greitzer::{closed_loop, presets, ExampleController};
use kladapt::sim::{integrate, SimOptions};
use kladapt::verify::{check_exponential_envelope, check_ios, check_lyapunov, VerificationReport, DEFAULT_TOL, ENVELOPE_SLACK};

fn main() {
    let mut report = VerificationReport::default();
    for which in [ExampleController::B, ExampleController::Synthesized] {
        for p in presets() {
            let cl = closed_loop(&p.cfg, which).unwrap();
            let tr = integrate(&cl, &p.cfg.x0, &p.cfg.theta_hat0, 20.0, &SimOptions::default()).unwrap();
            let ctrl = which.build(&p.cfg).unwrap();
            let name = |c: &str| format!("{}/{}/{c}", which.label(), p.name);
            let l = ctrl.lyapunov.as_ref().unwrap();
            let ios = ctrl.ios.as_ref().unwrap();
            report.push(check_lyapunov(&name("lyapunov"), &tr, &cl, &l.function, &l.bound, DEFAULT_TOL));
            report.push(check_ios(&name("ios"), &tr, &cl, ios, DEFAULT_TOL));
            report.push(check_exponential_envelope(&name("envelope"), &tr, &cl, ios, ENVELOPE_SLACK, DEFAULT_TOL));
        }
    }
    print!("{}", report.render());
}
