//! Edge matching, precision/recall/F1 with macro averaging, and the
//! synthetic evaluation corpus.

mod corpus;
mod metrics;

pub use corpus::{
    corpus_files, corpus_stats, gen_corpus, perturb, random_document, write_corpus, CorpusCase,
    CorpusError, CorpusParams, CorpusStats, GoldAnnotation, PerturbParams,
};
pub use metrics::{
    aggregate_macro, compute_metrics, evaluate, evaluate_usecase, f1_score, macro_average,
    match_edges, CategoryScores, EdgeMatch, EvaluationReport, MacroScores, Metrics, Scope, Score,
};
