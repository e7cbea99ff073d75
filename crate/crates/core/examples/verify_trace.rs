//! Writes a run to CSV and JSON, reads it back and checks the recorded
//! iterations against the method's convergence inequalities.

use std::fs::File;
use std::io::BufReader;

use proxbundle::analysis::{check_trace, CheckStatus, DEFAULT_SLACK};
use proxbundle::model::Variant;
use proxbundle::problems::builtin;
use proxbundle::solver::{read_trace_csv, read_vectors_json, run, write_trace_csv, write_vectors_json, SolverConfig};

fn main() -> proxbundle::Result<()> {
    let problem = builtin("norm-plus-quad", None, 0)?;
    let config = SolverConfig { variant: Variant::MultiCut, eps: 1e-7, ..SolverConfig::default() };
    let (_, trace) = run(&problem, &problem.default_x1, &config)?;

    let dir = std::env::temp_dir();
    let csv_path = dir.join("proxbundle-example-trace.csv");
    let json_path = dir.join("proxbundle-example-vectors.json");
    write_trace_csv(&trace, File::create(&csv_path)?)?;
    write_vectors_json(&trace, File::create(&json_path)?)?;

    let mut loaded = read_trace_csv(BufReader::new(File::open(&csv_path)?))?;
    read_vectors_json(BufReader::new(File::open(&json_path)?), &mut loaded)?;
    println!("read {} records from {}", loaded.records.len(), csv_path.display());

    let report = check_trace(&loaded, &problem, &loaded.config, DEFAULT_SLACK);
    for e in &report.entries {
        let status = match e.status {
            CheckStatus::Passed => "pass",
            CheckStatus::Failed => "FAIL",
            CheckStatus::Skipped => "skip",
            CheckStatus::Annotated => "note",
        };
        println!("{status:4} {:32} {}/{}", e.name, e.count_passed, e.count_checked);
    }
    Ok(())
}
