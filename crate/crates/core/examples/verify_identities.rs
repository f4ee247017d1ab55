//! Run the statistical check suite and print one line per check.

fn main() -> amoment::Result<()> {
    let only: Vec<String> = std::env::args().skip(1).collect();
    let results = amoment::verify::run_checks(&only, 0)?;
    for r in &results {
        let verdict = match (r.passed, r.negative_control) {
            (true, false) => "pass",
            (false, true) => "fail (expected)",
            _ => "UNEXPECTED",
        };
        println!("{verdict:<16} {:.3e} <= {:.3e}  {}", r.statistic, r.threshold, r.name);
    }
    Ok(())
}
