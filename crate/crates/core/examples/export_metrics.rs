//! Runs a short chain experiment from a TOML config, then converts its
//! JSON-lines log to csv.

use rqiqn::eval::{export, read_json_lines, run_experiment, ExperimentConfig, ExportFormat};
use std::path::Path;

const CONFIG: &str = r#"
task = "chain"
agent = "rqiqn"
total_steps = 4000
eval_period = 1000
eval_episodes = 10
seeds = [0, 1]

[agent_config]
hidden_width = 32
embedding_dim = 16
batch_size = 32
train_start = 500
sync_period = 500

[agent_config.robust]
epsilon0 = 1.0
midpoint = 800.0
sharpness = 0.0045
"#;

fn main() -> rqiqn::Result<()> {
    let out = std::env::temp_dir().join("rqiqn-export-example");
    let mut cfg = ExperimentConfig::from_toml(CONFIG, Path::new("inline.toml"))?;
    cfg.output_dir = out.clone();
    for seed in &cfg.seeds {
        // Logs are append-only; start fresh.
        let _ = std::fs::remove_file(cfg.log_path(*seed));
    }
    let summary = run_experiment(&cfg)?;
    for s in &summary {
        let records = read_json_lines(&s.log)?;
        let csv = s.log.with_extension("csv");
        export(&records, ExportFormat::Csv, &csv)?;
        println!("seed {}: {} records -> {}", s.seed, records.len(), csv.display());
        print!("{}", std::fs::read_to_string(&csv).map_err(|e| rqiqn::Error::Io { path: csv.clone(), source: e })?);
    }
    Ok(())
}
