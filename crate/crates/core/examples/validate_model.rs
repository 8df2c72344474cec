//! Load a model file and run the sampled validation of its structure.

use std::path::Path;

use kladapt::model::{validate_matched, validate_strict_feedback, ModelFile, SampleGrid, System};

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("models");
    for name in ["moore_greitzer.model", "integrator.model", "scalar_matched.model"] {
        let m = ModelFile::load(&dir.join(name)).expect("shipped model parses");
        let report = match &m.system {
            System::StrictFeedback(s) => validate_strict_feedback(s, &SampleGrid::default()),
            System::Matched(s) => validate_matched(s, &SampleGrid::default()),
        };
        println!("== {name} (n = {}, p = {})\n{}", m.system.n(), m.system.p(), report.render());
    }
}
