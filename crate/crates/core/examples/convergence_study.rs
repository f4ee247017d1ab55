//! Convergence study on the small preset: relative error against the
//! neighbor budget, with the fitted log-log slope.

use amoment::experiments::{default_target, fit_slope, median_error_by_budget, rows_to_csv, run_study, StudyConfig};

fn main() -> amoment::Result<()> {
    let cfg = StudyConfig::desk(0);
    let f = default_target(&cfg)?;
    let rows = run_study(&cfg, &f)?;
    for (budget, median) in median_error_by_budget(&rows) {
        println!("N_total = {budget:>6}: median relative error {median:.4}");
    }
    println!("fitted slope: {:.3}", fit_slope(&rows)?.slope);
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(path, rows_to_csv(&rows))?;
    }
    Ok(())
}
