use trackmpc::formulations::ControllerKind;
use trackmpc::suites;

fn main() {
    for kind in [ControllerKind::Mpct, ControllerKind::PeriodicMpct, ControllerKind::Hmpc] {
        let t0 = std::time::Instant::now();
        let report = suites::recursive_feasibility(kind, 11, 3);
        println!(
            "{}: passed={} in {:?} {:?} nfail={}",
            report.name, report.passed, t0.elapsed(), report.details, report.failures.len()
        );
        for f in report.failures.iter().take(3) { println!("  {f}"); }
    }
    let t0 = std::time::Instant::now();
    let r = suites::hmpc_mpct_equivalence_w2pi(3, 5);
    println!("{}: passed={} in {:?} {:?}", r.name, r.passed, t0.elapsed(), r.details);
}
