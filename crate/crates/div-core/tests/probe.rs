use div_core::simlab::Scenario;
use std::io::Write;

// Dump the under-identified dataset (seed 61) for cross-checking.
#[test]
#[ignore]
fn probe_dump_under_identified() {
    let data = Scenario::UnderIdentified.generate(1000, 61).unwrap();
    let d = &data.dataset;
    let mut f = std::fs::File::create("/root/probe/ui61.csv").unwrap();
    writeln!(f, "z,x1,x2,y").unwrap();
    for i in 0..1000 {
        writeln!(
            f,
            "{},{},{},{}",
            d.z[[i, 0]],
            d.x[[i, 0]],
            d.x[[i, 1]],
            d.y[[i, 0]]
        )
        .unwrap();
    }
}
