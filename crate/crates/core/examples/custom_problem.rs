//! Two ways to bring your own objective: a JSON document of quadratic
//! pieces, and an arbitrary closure returning a value and a subgradient.

use proxbundle::linalg::BoxBounds;
use proxbundle::model::Variant;
use proxbundle::problems::{parse_problem_file, ProblemSpec};
use proxbundle::solver::{run, SolverConfig};

const DOCUMENT: &str = r#"{
  "name": "two-parabolas",
  "dim": 1,
  "pieces": [
    { "A": [[1.0]], "b": [-1.0], "c": 0.5 },
    { "A": [[1.0]], "b": [1.0], "c": 0.5 }
  ],
  "reference": { "x_star": [0.0], "f_star": 0.5, "alpha": 0.5 },
  "default_x1": [2.0]
}"#;

fn report(problem: &ProblemSpec) -> proxbundle::Result<()> {
    let (x, trace) =
        run(problem, &problem.default_x1, &SolverConfig { variant: Variant::MultiCut, ..SolverConfig::default() })?;
    println!("{:<14} {} after {} iterations, x = {x:.6?}", problem.name, trace.status, trace.records.len());
    Ok(())
}

fn main() -> proxbundle::Result<()> {
    report(&parse_problem_file(DOCUMENT.as_bytes())?)?;

    // F(x) = |x_1| + 2|x_2 - 1| + 0.1 |x|^2
    let oracle = |x: &[f64]| {
        let value = x[0].abs() + 2.0 * (x[1] - 1.0).abs() + 0.1 * (x[0] * x[0] + x[1] * x[1]);
        let g = vec![
            x[0].signum() * f64::from(x[0] != 0.0) + 0.2 * x[0],
            2.0 * (x[1] - 1.0).signum() * f64::from(x[1] != 1.0) + 0.2 * x[1],
        ];
        (value, g)
    };
    report(&ProblemSpec::new("kinked", 2, oracle, BoxBounds::cube(2, 5.0), vec![3.0, -2.0]))
}
