//! Execution oracles, the artifact store, and pipeline orchestration.

pub mod corpus;
pub mod judge;
pub mod literal;
pub mod pipeline;
pub mod pyexec;
pub mod report;
pub mod store;
pub mod synthetic;

pub use judge::{judge_execution, judge_fim, judge_translation, pass_at_1, ErrorKind, Verdict, VerdictStatus};
pub use pipeline::{run_pipeline, PipelineConfig, RunManifest};
pub use store::TraceRecord;

use serde::{Deserialize, Serialize};

/// Pearson correlation matrix over feature columns.
///
/// Zero-variance columns correlate 0 with everything off the diagonal and
/// 1 with themselves. Requires at least two rows.
pub fn correlation(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    assert!(rows.len() >= 2, "correlation needs at least two rows");
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut means = vec![0.0; d];
    for row in rows {
        for (j, v) in row.iter().enumerate() {
            means[j] += v;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut stds = vec![0.0; d];
    for row in rows {
        for (j, v) in row.iter().enumerate() {
            stds[j] += (v - means[j]).powi(2);
        }
    }
    for s in &mut stds {
        *s = (*s / n).sqrt();
    }
    let mut out = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            if a == b {
                out[a][b] = 1.0;
                continue;
            }
            if stds[a] == 0.0 || stds[b] == 0.0 {
                out[a][b] = 0.0;
                continue;
            }
            let mut cov = 0.0;
            for row in rows {
                cov += (row[a] - means[a]) * (row[b] - means[b]);
            }
            out[a][b] = cov / n / (stds[a] * stds[b]);
        }
    }
    out
}

/// Identifiers appearing in a problem source; used for the keyword label
/// fallback and the analysis-rate feature.
pub fn source_identifiers(source_text: &str) -> std::collections::BTreeSet<String> {
    let mut out = std::collections::BTreeSet::new();
    let mut current = String::new();
    for c in source_text.chars() {
        if c.is_alphanumeric() || c == '_' {
            current.push(c);
        } else if !current.is_empty() {
            if current.len() >= 2 && !current.chars().next().unwrap().is_ascii_digit() {
                out.insert(std::mem::take(&mut current));
            } else {
                current.clear();
            }
        }
    }
    if current.len() >= 2 && !current.chars().next().unwrap().is_ascii_digit() {
        out.insert(current);
    }
    for keyword in [
        "def", "return", "while", "for", "if", "else", "elif", "in", "and", "or", "not", "len",
        "import", "from", "print", "range", "str", "int", "float", "bool", "list", "dict",
        "tuple", "None", "True", "False",
    ] {
        out.remove(keyword);
    }
    out
}

/// Everything the feature extractor needs to know about the problem a
/// trace belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub family_id: u32,
    pub source_lang_id: u32,
    pub target_lang_id: u32,
    pub is_fortran: bool,
    pub composition_level: u32,
    pub source_identifiers: std::collections::BTreeSet<String>,
    pub final_answer_present: bool,
}

impl ProblemMeta {
    /// Neutral metadata: everything zero / absent.
    pub fn none() -> Self {
        Self {
            family_id: 0,
            source_lang_id: 0,
            target_lang_id: 0,
            is_fortran: false,
            composition_level: 0,
            source_identifiers: Default::default(),
            final_answer_present: false,
        }
    }
}

/// Stable enumeration for language identifiers in the schema sidecar.
pub fn language_id(name: &str) -> u32 {
    match name.to_ascii_lowercase().as_str() {
        "python" => 1,
        "java" => 2,
        "c" => 3,
        "cpp" | "c++" => 4,
        "csharp" | "c#" => 5,
        "fortran" => 6,
        "go" => 7,
        "rust" => 8,
        "javascript" => 9,
        _ => 0,
    }
}

/// Stable enumeration for task families in the schema sidecar.
pub fn family_id(family: crate::forge::Family) -> u32 {
    match family {
        crate::forge::Family::Execution => 1,
        crate::forge::Family::FillInMiddle => 2,
        crate::forge::Family::Translation => 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn correlation_diagonal_is_one() {
        let rows = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![3.0, 5.0]];
        let c = correlation(&rows);
        assert_eq!(c[0][0], 1.0);
        assert_eq!(c[1][1], 1.0);
    }

    #[test]
    fn feature_against_its_doubling_is_perfectly_correlated() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let c = correlation(&rows);
        assert!((c[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_column_is_uncorrelated() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![3.0, i as f64]).collect();
        let c = correlation(&rows);
        assert_eq!(c[0][1], 0.0);
        assert_eq!(c[0][0], 1.0);
    }

    #[test]
    fn independent_random_columns_are_nearly_uncorrelated() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let rows: Vec<Vec<f64>> = (0..10_000)
            .map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()])
            .collect();
        let c = correlation(&rows);
        assert!(c[0][1].abs() < 0.05, "r = {}", c[0][1]);
    }

    #[test]
    fn identifiers_come_from_the_source_only() {
        let ids = source_identifiers(corpus::FIG_SKIP_SPACES_SRC);
        assert!(ids.contains("f1"));
        assert!(ids.contains("text"));
        assert!(ids.contains("isspace"));
        assert!(!ids.contains("def"));
        assert!(!ids.contains("return"));
    }
}
