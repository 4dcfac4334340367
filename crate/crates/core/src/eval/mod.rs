//! Quality evaluation: judge scoring and reliability, solver diagnostics and
//! the retrieval audit.

pub mod audit;
pub mod judge;
pub mod qa;
pub mod reliability;

pub use audit::{audit_rankings, retrieval_audit, AuditMethod, RetrievalAudit};
pub use judge::{aggregate_quality, judge, judge_dataset, reliability_report, AvgPolicy, JudgeAssessment, QualityReport, ReliabilityReport};
pub use qa::{diagnostic_qa, em, token_f1, DiagnosticResult, SolverMode};
