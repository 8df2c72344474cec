//! Integrate the compressor model under controller B and write the
//! trajectory as CSV.

use kladapt::moore_greitzer::{closed_loop, ExampleConfig, ExampleController};
use kladapt::sim::SimOptions;

fn main() {
    let cfg = ExampleConfig::default();
    let cl = closed_loop(&cfg, ExampleController::B).unwrap();
    let tr = kladapt::sim::integrate(&cl, &cfg.x0, &cfg.theta_hat0, 20.0, &SimOptions::default()).unwrap();
    println!("{tr}");
    println!("columns: {}", tr.header().join(", "));
    for k in (0..tr.len()).step_by(tr.len() / 10) {
        println!("t = {:5.2}  x = {:+.4e} {:+.4e}  th = {:+.4} {:+.4}", tr.t[k], tr.y[k][0], tr.y[k][1], tr.y[k][2], tr.y[k][3]);
    }
    let path = std::env::temp_dir().join("kladapt-controller-b.csv");
    tr.save_csv(&path).unwrap();
    println!("wrote {}", path.display());
}
