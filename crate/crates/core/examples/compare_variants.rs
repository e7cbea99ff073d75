//! Iteration counts of the aggregate and multi-cut bundles on one problem.

use proxbundle::model::{PrunePolicy, Variant};
use proxbundle::problems::builtin;
use proxbundle::solver::{run, SolverConfig};

fn main() -> proxbundle::Result<()> {
    let problem = builtin("maxq", Some(10), 0)?;
    let setups = [
        (Variant::Aggregate, PrunePolicy::KeepAll),
        (Variant::MultiCut, PrunePolicy::KeepAll),
        (Variant::MultiCut, PrunePolicy::KeepActive),
        (Variant::MultiCut, PrunePolicy::MaxSize(16)),
    ];
    println!("{:<10} {:<12} {:>8} {:>8} {:>10}", "variant", "prune", "series", "total", "gap");
    for (variant, prune_policy) in setups {
        let config = SolverConfig { variant, prune_policy, eps: 1e-6, ..SolverConfig::default() };
        let (x, trace) = run(&problem, &problem.default_x1, &config)?;
        let gap = problem.gap(&x)?.unwrap_or(f64::NAN);
        println!(
            "{:<10} {:<12} {:>8} {:>8} {:>10.2e}",
            variant.to_string(),
            prune_policy.to_string(),
            trace.descent_count() + 1,
            trace.records.len(),
            gap
        );
    }
    Ok(())
}
