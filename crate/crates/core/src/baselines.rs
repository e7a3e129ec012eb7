//! Reference predictors the learned model is compared against.

use crate::corpus::{KillMatrix, VersionCorpus};
use crate::error::Result;

/// Predicts every covering pair as killed.
pub fn coverage_baseline(corpus: &VersionCorpus) -> KillMatrix {
    constant_baseline(corpus, true)
}

/// Sets every covering pair to `killed`; non-covering pairs stay live.
pub fn constant_baseline(corpus: &VersionCorpus, killed: bool) -> KillMatrix {
    let mut km = KillMatrix::empty_for(corpus);
    if killed {
        for (m, ts) in corpus.coverage().iter() {
            for t in ts {
                km.insert(m.clone(), t.clone());
            }
        }
    }
    km
}

/// A predictor that produces a kill matrix for a corpus without executing tests.
pub trait Baseline {
    /// Short label used in reports.
    fn tag(&self) -> &str;
    fn predict(&self, corpus: &VersionCorpus) -> Result<KillMatrix>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Coverage;

impl Baseline for Coverage {
    fn tag(&self) -> &str {
        "coverage"
    }

    fn predict(&self, corpus: &VersionCorpus) -> Result<KillMatrix> {
        Ok(coverage_baseline(corpus))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Constant(pub bool);

impl Baseline for Constant {
    fn tag(&self) -> &str {
        if self.0 {
            "constant-1"
        } else {
            "constant-0"
        }
    }

    fn predict(&self, corpus: &VersionCorpus) -> Result<KillMatrix> {
        Ok(constant_baseline(corpus, self.0))
    }
}

/// A baseline's prediction together with its label.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselinePrediction {
    pub tag: String,
    pub matrix: KillMatrix,
}

pub fn run_baseline(baseline: &dyn Baseline, corpus: &VersionCorpus) -> Result<BaselinePrediction> {
    let matrix = baseline.predict(corpus)?;
    matrix.validate_against(corpus)?;
    Ok(BaselinePrediction {
        tag: baseline.tag().to_string(),
        matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::{mutant, small_corpus};
    use crate::corpus::{CoverageMap, TestRecord, ToolMode};
    use proptest::prelude::*;

    fn corpus_with(coverage: CoverageMap, nm: usize, nt: usize) -> VersionCorpus {
        let tests = (0..nt).map(|i| TestRecord::new(format!("t{i}"), "T", &format!("test{i}"))).collect();
        let mutants = (0..nm).map(|i| mutant(&format!("m{i}"), "C", "run", "AOR")).collect();
        VersionCorpus::new("v", tests, mutants, coverage, None, vec!["AOR".into()], ToolMode::WithBeforeAfter).unwrap()
    }

    #[test]
    fn single_covering_pair() {
        let cov: CoverageMap = [("m0".into(), "t0".into())].into_iter().collect();
        let c = corpus_with(cov, 1, 2);
        let km = coverage_baseline(&c);
        assert!(km.is_killed(&"m0".into(), &"t0".into()));
        assert!(!km.is_killed(&"m0".into(), &"t1".into()));
        assert_eq!(km.len(), 1);
    }

    #[test]
    fn empty_coverage_gives_zero_matrix() {
        let c = corpus_with(CoverageMap::new(), 3, 3);
        assert!(coverage_baseline(&c).is_empty());
        assert_eq!(coverage_baseline(&c).shape(), (3, 3));
    }

    #[test]
    fn constants() {
        let c = small_corpus();
        assert!(constant_baseline(&c, false).is_empty());
        assert_eq!(constant_baseline(&c, true), coverage_baseline(&c));
        let p = run_baseline(&Constant(false), &c).unwrap();
        assert_eq!(p.tag, "constant-0");
        assert_eq!(run_baseline(&Coverage, &c).unwrap().tag, "coverage");
    }

    proptest! {
        #[test]
        fn copies_random_coverage(bits in proptest::collection::vec(any::<bool>(), 900)) {
            let cov: CoverageMap = bits
                .iter()
                .enumerate()
                .filter(|(_, b)| **b)
                .map(|(i, _)| (format!("m{}", i / 30).into(), format!("t{}", i % 30).into()))
                .collect();
            let c = corpus_with(cov, 30, 30);
            let km = coverage_baseline(&c);
            km.validate_against(&c).unwrap();
            for (i, &bit) in bits.iter().enumerate() {
                let (m, t) = (format!("m{}", i / 30).into(), format!("t{}", i % 30).into());
                prop_assert_eq!(km.is_killed(&m, &t), bit);
            }
        }
    }
}
