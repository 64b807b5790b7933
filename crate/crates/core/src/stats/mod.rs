//! Normality tests, rank correlation and correlation reports.

mod normality;
mod report;
mod spearman;

pub use normality::{anderson_darling_normal, AndersonDarling, AD_CRITICAL_5PCT, AD_MIN_N};
pub use report::{
    correlation_report, correlation_report_with_alpha, rank_configs, read_report_csv,
    split_by_mean, write_bar_csv, write_report_csv, CorrelationEntry, CorrelationReport,
    GroupSplit, ReportReadError, SkippedPair, SplitCriterion, DEFAULT_ALPHA,
};
pub use spearman::{
    average_ranks, spearman, spearman_exact_p, t_test_p, Correlation, EXACT_P_MAX_N,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("at most {max} values supported, got {got}")]
    TooMany { max: usize, got: usize },
    #[error("input is constant; the statistic is undefined")]
    Constant,
    #[error("input contains a non-finite value")]
    NotFinite,
}
