//! Minimizes a random maximum of quadratics and prints the outcome.

use proxbundle::model::Variant;
use proxbundle::problems::builtin;
use proxbundle::solver::{run, SolverConfig};

fn main() -> proxbundle::Result<()> {
    let problem = builtin("maxquad", Some(4), 7)?;
    let config = SolverConfig { variant: Variant::MultiCut, eps: 1e-8, ..SolverConfig::default() };
    let (x, trace) = run(&problem, &problem.default_x1, &config)?;

    println!("problem    {}", problem.name);
    println!("status     {}", trace.status);
    println!("iterations {} ({} descent, {} null)", trace.records.len(), trace.descent_count(), trace.null_count());
    println!("x          {x:.6?}");
    println!("F(x)       {:.10}", problem.value(&x)?);
    if let Some(gap) = problem.gap(&x)? {
        println!("gap        {gap:.3e}");
    }
    Ok(())
}
