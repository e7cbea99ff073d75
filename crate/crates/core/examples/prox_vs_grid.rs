//! Solves one prox subproblem with the active-set solver and cross-checks it
//! against an exhaustive grid search.

use proxbundle::model::{Cut, CuttingPlaneModel};
use proxbundle::problems::{builtin, eval_oracle};
use proxbundle::proxqp::{brute_force_prox, certified_box, solve_prox, QpSettings};

fn main() -> proxbundle::Result<()> {
    let problem = builtin("norm-plus-quad", Some(2), 0)?;
    let points = [[2.0, -1.0], [0.5, 0.5], [-1.0, 2.0], [0.0, 0.0]];
    let mut cuts = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let (f, g) = eval_oracle(&problem, p)?;
        cuts.push(Cut::new(i as u64 + 1, p.to_vec(), f, g)?);
    }
    let model = CuttingPlaneModel::from_cuts(cuts)?;
    let (center, rho) = ([1.0, 1.0], 2.0);

    let sol = solve_prox(&model, &center, rho, &QpSettings::default())?;
    let grid = brute_force_prox(&model, &center, rho, &certified_box(&model, &center, rho), 801)?;

    println!("active set  eta = {:.12}  z = {:.6?}  kkt = {:.1e}", sol.eta, sol.z_next, sol.kkt_residual);
    println!("grid        eta = {:.12}  z = {:.6?}", grid.eta, grid.z);
    println!("difference  {:.3e} (grid error bound {:.3e})", (sol.eta - grid.eta).abs(), grid.error_bound());
    println!("weights     {:.4?}", sol.multipliers);
    Ok(())
}
