//! Recursive backstepping synthesis for the two-state compressor model and a
//! three-state chain, with the per-stage trace.

use kladapt::backstep::{synthesize, SynthesisOptions};
use kladapt::expr::Expr;
use kladapt::model::{DesignConstants, StrictFeedbackSystem};
use kladapt::moore_greitzer;

fn main() {
    let consts = DesignConstants::new(2.0, 1.0, 1.0, 1.0, vec![1.0, 1.0]).unwrap();
    let (ctrl, trace, _) = synthesize(&moore_greitzer::system(), &consts, &SynthesisOptions::default()).unwrap();
    println!("compressor model: u has {} DAG nodes", ctrl.u.dag_size());
    print!("{}", trace.render());

    let x1 = Expr::state(0);
    let chain = StrictFeedbackSystem::new(
        vec![Expr::zero(); 3],
        vec![Expr::one(); 3],
        vec![vec![x1.square()], vec![Expr::zero()], vec![Expr::zero()]],
    )
    .unwrap();
    let (ctrl, trace, _) = synthesize(&chain, &DesignConstants::unit(1, 1.0), &SynthesisOptions::default()).unwrap();
    let ios = ctrl.ios.unwrap();
    println!("three-state chain: {} stages, certified rate {} residual {}", trace.stages.len(), ios.omega, ios.epsilon);
    for r in &trace.stages {
        println!("  stage {}: k {} -> {} DAG nodes", r.dim, r.k_dag_raw, r.k_dag);
    }
}
