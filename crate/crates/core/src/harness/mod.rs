//! Replication engine: simulation grids, aggregation into result tables,
//! table I/O and the observed-data analysis.

mod analysis;
mod experiments;
mod spec;
mod table;

pub use analysis::{
    analyze, analyze_csv, generate_standin, knn_graph, read_observed_csv, standardize_columns,
    write_observed_csv, AnalysisOptions, AnalysisReport, AnalysisRow, EffectInterval, ObservedData,
    STANDIN_UNITS,
};
pub use experiments::{
    model_label, motivating_network_grid, motivating_pairs_grid, reproduce, reproduction_specs,
    run_main_simulation, run_motivating_network, run_motivating_pairs, run_spec, GridRow,
    PaperTable,
};
pub use spec::{ExperimentSpec, Method};
pub use table::{
    read_table, write_table, EffectStats, Estimate, ResultRow, ResultTable, TableFormat,
};
