//! Cross-paradigm pipelines driven by XML configuration documents.

mod config;
mod pipeline;

pub use config::{
    parse_db_config, parse_ml_config, serialize_db_config, serialize_ml_config, ConfigError,
    DbConfig, DbSettings, Mode, ParseOptions, PipelineConfig,
};
pub use pipeline::{
    execute_pipeline, join_results, Branch, Connection, Connector, JoinError, LocalConnector,
    PipelineContext, PipelineError, PipelineResult, StageTiming,
};
