//! Experiment orchestration: split, train, evaluate, tabulate.

pub mod experiment;
pub mod probes;
pub mod report;

pub use experiment::{
    evaluate_plan, injury_attribution, labels_for, run_experiment, run_protocol, score,
    train_on_plan, Experiment, ExperimentReport, ExperimentSpec, InputCache, NamedAccuracy,
    NamedTable, ProtocolOutcome, RunRecord,
};
pub use probes::{healthy_games, majority_share, run_bias_probe_game, run_bias_probe_order};
pub use report::{csv_tables, render_markdown};
