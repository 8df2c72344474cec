//! Parallel sweep from the unit circle and empirical hitting times of
//! `|x| <= eps`, with the true parameters inside the budget ball.

use kladapt::moore_greitzer::{closed_loop, ExampleConfig, ExampleController};
use kladapt::sim::{thread_count, InitialSet, SimOptions};
use kladapt::verify::uniformity_probe;

fn main() {
    let cfg = ExampleConfig { theta: [-1.0, -0.5], ..ExampleConfig::default() };
    let set = InitialSet::Circle { radius: 1.0, count: 32 };
    println!("{} worker threads (set KLADAPT_THREADS to change)", thread_count());
    for which in [ExampleController::A, ExampleController::B, ExampleController::Synthesized] {
        let cl = closed_loop(&cfg, which).unwrap();
        let probes = uniformity_probe(&cl, &set, 1.0, &[0.0, 0.0], &[0.1, 0.01, 0.001], 30.0, &SimOptions::default()).unwrap();
        for p in probes {
            println!("{:>12}: T(eps = {}, R = 1) = {:?}, fastest {:?}", which.label(), p.eps, p.t_max, p.t_min());
        }
    }
}
