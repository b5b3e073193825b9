//! End-to-end evaluation, leaderboard reports, case-study mining and
//! synthetic data.

mod case_study;
mod evaluate;
mod report;
mod synth;

pub use case_study::{
    export_case_maps, population_std, rank_case_studies, CaseStudy, CaseStudyMap, CaseStudyQuery, ExportModel,
    FixationKey,
};
pub use evaluate::{evaluate, EvaluateOptions, EvaluationRun, Provenance, RunConfig, ScoreTable};
pub use report::{format_auc, format_value, model_notes, render_report, report_rows, ReportFormat, ReportRow};
pub use synth::{generate_synthetic_dataset, GroundTruth, Generator, SynthConfig, SynthOutput};
