//! Certainty-equivalence versus damped adaptive control on a scalar plant
//! with matched uncertainty, and the comparison-function bound of the damped
//! scheme.

use kladapt::expr::Expr;
use kladapt::matched::{damped_controller, residual_radius, standard_controller, LinearComparison};
use kladapt::model::{DesignConstants, MatchedSystem, System, TrueParameters};
use kladapt::sim::{integrate, ClosedLoop, SimOptions};
use kladapt::verify::{check_theorem1_comparison, DEFAULT_TOL};

fn main() {
    let x = Expr::state(0);
    let sys = MatchedSystem::new(vec![-&x], vec![Expr::one()], vec![x.clone()], 0.5 * x.square(), x.square(), Expr::zero(), Expr::one())
        .expect("well formed");
    let consts = DesignConstants::unit(1, 0.0).with_matched(1.0, 0.5).unwrap();
    let theta = TrueParameters(vec![1.5]);
    let plant = System::Matched(sys.clone());

    for ctrl in [standard_controller(&sys, &consts.adaptation_matrix()).unwrap(), damped_controller(&sys, &consts).unwrap()] {
        let cl = ClosedLoop::new(&plant, &ctrl, &theta).unwrap();
        let tr = integrate(&cl, &[4.0], &[0.0], 10.0, &SimOptions::default()).unwrap();
        let x = tr.column("x1").unwrap();
        let t1 = tr.t.iter().position(|t| *t >= 1.0).unwrap();
        println!("{:>8}: u = {}\n          |x(1)| = {:.3e}, |x(10)| = {:.3e}", ctrl.name, ctrl.u, x[t1].abs(), x[x.len() - 1].abs());
        if ctrl.name == "damped" {
            let rho = LinearComparison(2.0);
            let alpha = residual_radius(&theta, &consts, &rho).unwrap().alpha;
            println!("          residual level alpha = {alpha}");
            for c in check_theorem1_comparison(&tr, &cl, &sys.p_clf, &rho, alpha, consts.lambda, DEFAULT_TOL) {
                println!("          {}: pass = {}, worst margin {:.3e}", c.name, c.pass, c.worst_margin);
            }
        }
    }
}
