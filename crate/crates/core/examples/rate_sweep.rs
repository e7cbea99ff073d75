//! Runs one problem at decreasing tolerances and compares the iteration
//! counts with the `(1/eps) ln(1/eps)` rate.

use proxbundle::analysis::run_sweep;
use proxbundle::problems::builtin;
use proxbundle::solver::SolverConfig;

fn main() -> proxbundle::Result<()> {
    let problem = builtin("l1quad", Some(5), 0)?;
    let eps_list = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let sweep = run_sweep(&problem, &problem.default_x1, &SolverConfig::default(), &eps_list)?;

    println!("{:>8} {:>8} {:>8} {:>12}", "eps", "series", "total", "total bound");
    for row in &sweep.rows {
        let bound = row.total_bound.map(|b| format!("{b:.3e}")).unwrap_or_else(|| "-".into());
        println!("{:>8.0e} {:>8} {:>8} {:>12}", row.eps, row.series, row.total, bound);
    }
    if let Some(fit) = &sweep.fit {
        println!("fitted constant {:.4}, largest ratio {:.4}", fit.fit_constant, fit.max_ratio);
    }
    Ok(())
}
