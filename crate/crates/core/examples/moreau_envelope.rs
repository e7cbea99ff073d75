//! Tracks the Moreau envelope of the objective along the proximal centers
//! of a run. The envelope gap shrinks as the centers approach a minimizer.

use proxbundle::analysis::{moreau_bracket, segment_trace};
use proxbundle::model::Variant;
use proxbundle::problems::builtin;
use proxbundle::solver::{run, SolverConfig};

fn main() -> proxbundle::Result<()> {
    let problem = builtin("maxq", Some(2), 0)?;
    let config = SolverConfig { variant: Variant::MultiCut, eps: 1e-8, ..SolverConfig::default() };
    let (_, trace) = run(&problem, &problem.default_x1, &config)?;
    let f_star = problem.reference.as_ref().map_or(0.0, |r| r.f_star);

    println!("{:>4} {:>6} {:>14} {:>14}", "ell", "nulls", "F(center)-F*", "env(center)-F*");
    for seg in segment_trace(&trace) {
        let b = moreau_bracket(&problem, &seg.center, config.rho, 1e-10)?;
        println!("{:>4} {:>6} {:>14.4e} {:>14.4e}", seg.ell, seg.n_null, seg.f_center - f_star, b.upper - f_star);
    }
    Ok(())
}
