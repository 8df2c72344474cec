//! Regenerate the data behind the six example figures and summarize it.

use kladapt::moore_greitzer::{figure_dataset, ExampleConfig, FigureKind};
use kladapt::sim::SimOptions;

fn main() {
    let cfg = ExampleConfig::default();
    for number in 1..=6 {
        let fig = figure_dataset(number, &cfg, &SimOptions::default()).unwrap();
        println!("figure {number}: {} ({} series)", fig.title, fig.series.len());
        for s in fig.series.iter().take(3) {
            let c = s.curve(fig.kind);
            let (first, last) = (c[0], c[c.len() - 1]);
            match fig.kind {
                FigureKind::PhasePlane => println!("  {}: ends at ({:.2e}, {:.2e})", s.label, last.0, last.1),
                _ => println!("  {}: {:.4} at t = 0, {:.4e} at t = {}", s.label, first.1, last.1, last.0),
            }
        }
    }
}
