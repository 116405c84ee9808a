#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqdep::eval::{random_document, CorpusParams};
use seqdep::{parse_document, Document};

pub const DEMO: &str = include_str!("../../fixtures/demo.esd");

pub fn demo() -> Document {
    parse_document(DEMO).expect("demo parses")
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Shipped corpus documents, sorted by file name.
pub fn corpus_documents() -> Vec<(String, Document)> {
    let mut out = Vec::new();
    let dir = fixtures().join("corpus");
    let mut names: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "esd"))
        .collect();
    names.sort();
    for p in names {
        let text = std::fs::read_to_string(&p).unwrap();
        let doc = parse_document(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        out.push((p.file_stem().unwrap().to_string_lossy().into_owned(), doc));
    }
    out
}

/// Parameters of the small random diagrams used by the property suites.
pub fn small_params() -> CorpusParams {
    CorpusParams {
        max_nodes: 25,
        max_depth: 4,
        ..CorpusParams::default()
    }
}

pub fn random_doc(seed: u64) -> Document {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_document(&mut rng, &small_params(), &format!("R{seed}"))
}

pub fn bless() -> bool {
    std::env::var_os("SEQDEP_BLESS").is_some()
}

/// Published per-use-case rows of the reference results for the
/// stronger model, in percent: Overall, API, Condition, Action as
/// `[precision, recall, f1]`; `None` where the table shows `-`.
pub type Row = [Option<[f64; 3]>; 4];

pub const PUBLISHED_ROWS: [(&str, Row); 11] = [
    ("ClearFlag", [Some([100.0, 100.0, 100.0]), Some([100.0, 100.0, 100.0]), None, None]),
    ("SetFlag", [Some([100.0, 100.0, 100.0]), Some([100.0, 100.0, 100.0]), None, None]),
    ("QueryParentAccounts", [Some([100.0, 100.0, 100.0]), Some([100.0, 100.0, 100.0]), None, None]),
    ("BindCard", [Some([100.0, 100.0, 100.0]), Some([100.0, 100.0, 100.0]), None, None]),
    ("SetPassiveLimit", [Some([93.31, 78.57, 85.23]), Some([88.45, 66.67, 75.80]), Some([100.0, 100.0, 100.0]), None]),
    ("SetActiveLimit", [Some([96.08, 87.50, 91.37]), Some([94.18, 81.82, 87.07]), Some([100.0, 100.0, 100.0]), None]),
    ("VerifyUserFace", [Some([97.50, 86.96, 91.85]), Some([97.50, 86.93, 91.85]), None, None]),
    ("SetAccountDailyQuota", [Some([88.60, 82.86, 85.62]), Some([88.69, 81.74, 85.04]), Some([100.0, 100.0, 100.0]), Some([40.00, 40.00, 40.00])]),
    ("SetPayKey", [Some([84.56, 80.00, 82.18]), Some([96.46, 91.11, 93.65]), Some([46.67, 48.00, 47.27]), Some([83.33, 66.67, 73.33])]),
    ("QueryPMAccount", [Some([88.61, 80.69, 84.42]), Some([87.68, 79.26, 83.20]), Some([100.0, 100.0, 100.0]), None]),
    ("OpenPSAccount", [Some([96.95, 93.06, 94.97]), Some([98.79, 97.58, 98.17]), Some([95.07, 88.72, 91.78]), Some([100.0, 100.0, 100.0])]),
];

/// Published average row, same layout.
pub const PUBLISHED_AVERAGE: [[f64; 3]; 4] = [
    [95.06, 89.97, 92.33],
    [95.61, 89.56, 92.25],
    [90.29, 89.45, 89.84],
    [74.44, 68.89, 71.11],
];
