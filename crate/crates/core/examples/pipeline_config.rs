//! Print a pipeline config preset as JSON, ready to edit and pass to the CLI.
//!
//! cargo run --release --example pipeline_config -- compact > fast.json

use pitchflow::config::PipelineConfig;

fn main() -> pitchflow::Result<()> {
    let preset = std::env::args().nth(1).unwrap_or_else(|| "compact".into());
    let cfg = match preset.as_str() {
        "compact" => PipelineConfig::compact(),
        "standard" => PipelineConfig::standard(),
        other => {
            return Err(pitchflow::Error::InvalidParams(format!(
                "unknown preset {other:?}; expected compact or standard"
            )))
        }
    };
    let text = serde_json::to_string_pretty(&cfg)?;
    // What the CLI reads back must be the same config.
    assert_eq!(PipelineConfig::from_json(&text)?, cfg);
    println!("{text}");
    Ok(())
}
