//! Canonical data model for one program version: tests, mutants, coverage
//! and (optionally) the ground-truth kill matrix.
//!
//! Every constructor validates; a [`VersionCorpus`] that exists is a corpus
//! whose invariants hold. Records are kept sorted by id so that equal corpora
//! serialise to identical bytes.

mod format;
mod import;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use format::{
    load_corpus, load_kill_matrix, parse_corpus, parse_kill_matrix, save_corpus, save_kill_matrix,
    write_corpus, write_kill_matrix,
};
pub use import::{import_major_killmap, import_pit_report, parse_major_killmap, parse_pit_report};

macro_rules! id_newtype {
    ($name:ident) => {
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }
    };
}

id_newtype!(TestId);
id_newtype!(MutantId);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestRecord {
    pub id: TestId,
    pub class_name: String,
    pub method_name: String,
}

impl TestRecord {
    pub fn new(id: impl Into<TestId>, class_name: &str, method_name: &str) -> Self {
        TestRecord {
            id: id.into(),
            class_name: class_name.to_string(),
            method_name: method_name.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutantRecord {
    pub id: MutantId,
    pub source_class_name: String,
    pub source_method_name: String,
    pub line_number: u32,
    pub statement: String,
    /// Code fragment before the mutation; `None` for tools that do not report it.
    pub before: Option<String>,
    pub after: Option<String>,
    pub operator: String,
}

impl MutantRecord {
    /// Key of the source method the mutant lives in.
    pub fn method_key(&self) -> MethodKey {
        MethodKey {
            class_name: self.source_class_name.clone(),
            method_name: self.source_method_name.clone(),
        }
    }
}

/// A source method, identified by its class and method names.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MethodKey {
    pub class_name: String,
    pub method_name: String,
}

impl MethodKey {
    pub fn new(class_name: &str, method_name: &str) -> Self {
        MethodKey {
            class_name: class_name.to_string(),
            method_name: method_name.to_string(),
        }
    }
}

impl fmt::Display for MethodKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.class_name, self.method_name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ToolMode {
    /// Mutants carry before/after fragments (Major-style reports).
    WithBeforeAfter,
    /// Mutants carry only the mutated statement (PIT-style reports).
    WithoutBeforeAfter,
}

impl ToolMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ToolMode::WithBeforeAfter => "WITH_BEFORE_AFTER",
            ToolMode::WithoutBeforeAfter => "WITHOUT_BEFORE_AFTER",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "WITH_BEFORE_AFTER" => Some(ToolMode::WithBeforeAfter),
            "WITHOUT_BEFORE_AFTER" => Some(ToolMode::WithoutBeforeAfter),
            _ => None,
        }
    }

    pub fn has_before_after(self) -> bool {
        self == ToolMode::WithBeforeAfter
    }
}

/// Which tests execute each mutant. Every mutant of the owning corpus has an
/// entry; uncovered mutants map to the empty set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CoverageMap(BTreeMap<MutantId, BTreeSet<TestId>>);

impl CoverageMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, mutant: MutantId, test: TestId) {
        self.0.entry(mutant).or_default().insert(test);
    }

    pub fn ensure(&mut self, mutant: MutantId) {
        self.0.entry(mutant).or_default();
    }

    pub fn covers(&self, mutant: &MutantId, test: &TestId) -> bool {
        self.0.get(mutant).is_some_and(|s| s.contains(test))
    }

    pub fn tests_of(&self, mutant: &MutantId) -> impl Iterator<Item = &TestId> {
        self.0.get(mutant).into_iter().flatten()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MutantId, &BTreeSet<TestId>)> {
        self.0.iter()
    }

    /// Number of covering (mutant, test) pairs.
    pub fn pair_count(&self) -> usize {
        self.0.values().map(BTreeSet::len).sum()
    }
}

impl FromIterator<(MutantId, TestId)> for CoverageMap {
    fn from_iter<I: IntoIterator<Item = (MutantId, TestId)>>(iter: I) -> Self {
        let mut map = CoverageMap::new();
        for (m, t) in iter {
            map.insert(m, t);
        }
        map
    }
}

/// Sparse binary mutant-by-test matrix. Only killed entries are stored.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KillMatrix {
    n_mutants: usize,
    n_tests: usize,
    kills: BTreeMap<MutantId, BTreeSet<TestId>>,
}

impl KillMatrix {
    pub fn new(n_mutants: usize, n_tests: usize) -> Self {
        KillMatrix {
            n_mutants,
            n_tests,
            kills: BTreeMap::new(),
        }
    }

    /// An empty matrix shaped like `corpus`.
    pub fn empty_for(corpus: &VersionCorpus) -> Self {
        Self::new(corpus.mutants().len(), corpus.tests().len())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_mutants, self.n_tests)
    }

    pub fn insert(&mut self, mutant: MutantId, test: TestId) {
        self.kills.entry(mutant).or_default().insert(test);
    }

    pub fn is_killed(&self, mutant: &MutantId, test: &TestId) -> bool {
        self.kills.get(mutant).is_some_and(|s| s.contains(test))
    }

    /// Tests killing `mutant` (empty when it survives everything).
    pub fn row(&self, mutant: &MutantId) -> Option<&BTreeSet<TestId>> {
        self.kills.get(mutant)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&MutantId, &BTreeSet<TestId>)> {
        self.kills.iter()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&MutantId, &TestId)> {
        self.kills
            .iter()
            .flat_map(|(m, ts)| ts.iter().map(move |t| (m, t)))
    }

    /// Number of killed entries.
    pub fn len(&self) -> usize {
        self.kills.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of mutants killed by at least one test.
    pub fn killed_mutant_count(&self) -> usize {
        self.kills.values().filter(|s| !s.is_empty()).count()
    }

    /// Percentage of mutants killed by at least one test.
    pub fn mutation_score(&self) -> f64 {
        if self.n_mutants == 0 {
            return 0.0;
        }
        100.0 * self.killed_mutant_count() as f64 / self.n_mutants as f64
    }

    /// Checks shape, id resolution and kill-implies-coverage against `corpus`.
    pub fn validate_against(&self, corpus: &VersionCorpus) -> Result<()> {
        if self.shape() != (corpus.mutants().len(), corpus.tests().len()) {
            return Err(Error::validation(format!(
                "kill matrix shape {:?} does not match corpus {} shape ({}, {})",
                self.shape(),
                corpus.version_id(),
                corpus.mutants().len(),
                corpus.tests().len()
            )));
        }
        for (m, t) in self.entries() {
            if corpus.mutant(m).is_none() {
                return Err(Error::validation(format!("kill ({m}, {t}): unknown mutant")));
            }
            if corpus.test(t).is_none() {
                return Err(Error::validation(format!("kill ({m}, {t}): unknown test")));
            }
            if !corpus.coverage().covers(m, t) {
                return Err(Error::validation(format!(
                    "kill ({m}, {t}) without coverage"
                )));
            }
        }
        Ok(())
    }
}

/// One program version: the unit every experiment works on.
#[derive(Clone, Debug, PartialEq)]
pub struct VersionCorpus {
    version_id: String,
    tests: Vec<TestRecord>,
    mutants: Vec<MutantRecord>,
    coverage: CoverageMap,
    kill_matrix: Option<KillMatrix>,
    operator_set: Vec<String>,
    tool_mode: ToolMode,
    test_index: HashMap<TestId, usize>,
    mutant_index: HashMap<MutantId, usize>,
}

impl VersionCorpus {
    /// Builds and validates a corpus. Tests and mutants are sorted by id;
    /// mutants missing from `coverage` get an empty coverage set.
    pub fn new(
        version_id: impl Into<String>,
        mut tests: Vec<TestRecord>,
        mut mutants: Vec<MutantRecord>,
        mut coverage: CoverageMap,
        kill_matrix: Option<KillMatrix>,
        operator_set: Vec<String>,
        tool_mode: ToolMode,
    ) -> Result<Self> {
        let version_id = version_id.into();
        if version_id.is_empty() || version_id.contains(['\t', '\n']) {
            return Err(Error::validation("version id must be non-empty single-line text"));
        }
        tests.sort_by(|a, b| a.id.cmp(&b.id));
        mutants.sort_by(|a, b| a.id.cmp(&b.id));

        let mut seen_ops = HashSet::new();
        for op in &operator_set {
            if op.is_empty() || !seen_ops.insert(op.as_str()) {
                return Err(Error::validation(format!(
                    "operator set has an empty or duplicate tag: {op:?}"
                )));
            }
        }

        let mut test_index = HashMap::with_capacity(tests.len());
        let mut names = HashSet::with_capacity(tests.len());
        for (i, t) in tests.iter().enumerate() {
            if t.id.0.is_empty() {
                return Err(Error::validation("empty test id"));
            }
            if t.class_name.is_empty() || t.method_name.is_empty() {
                return Err(Error::validation(format!("test {}: empty class or method name", t.id)));
            }
            if test_index.insert(t.id.clone(), i).is_some() {
                return Err(Error::validation(format!("duplicate test id {}", t.id)));
            }
            if !names.insert((t.class_name.as_str(), t.method_name.as_str())) {
                return Err(Error::validation(format!(
                    "duplicate test name {}#{}",
                    t.class_name, t.method_name
                )));
            }
        }

        let mut mutant_index = HashMap::with_capacity(mutants.len());
        for (i, m) in mutants.iter().enumerate() {
            if m.id.0.is_empty() {
                return Err(Error::validation("empty mutant id"));
            }
            if mutant_index.insert(m.id.clone(), i).is_some() {
                return Err(Error::validation(format!("duplicate mutant id {}", m.id)));
            }
            if m.source_class_name.is_empty() || m.source_method_name.is_empty() {
                return Err(Error::validation(format!(
                    "mutant {}: empty source class or method name",
                    m.id
                )));
            }
            if m.line_number == 0 {
                return Err(Error::validation(format!("mutant {}: line number must be >= 1", m.id)));
            }
            if !seen_ops.contains(m.operator.as_str()) {
                return Err(Error::validation(format!(
                    "mutant {}: operator {:?} not in operator set",
                    m.id, m.operator
                )));
            }
            match (&m.before, &m.after, tool_mode) {
                (Some(_), Some(_), ToolMode::WithBeforeAfter) => {}
                (None, None, ToolMode::WithoutBeforeAfter) => {}
                (Some(_), None, _) | (None, Some(_), _) => {
                    return Err(Error::validation(format!(
                        "mutant {}: before and after must be both present or both absent",
                        m.id
                    )))
                }
                _ => {
                    return Err(Error::validation(format!(
                        "mutant {}: before/after presence disagrees with tool mode {}",
                        m.id,
                        tool_mode.as_str()
                    )))
                }
            }
        }

        for (m, ts) in coverage.iter() {
            if !mutant_index.contains_key(m) {
                return Err(Error::validation(format!("coverage references unknown mutant {m}")));
            }
            if let Some(t) = ts.iter().find(|t| !test_index.contains_key(*t)) {
                return Err(Error::validation(format!(
                    "coverage of mutant {m} references unknown test {t}"
                )));
            }
        }
        for m in &mutants {
            coverage.ensure(m.id.clone());
        }

        let corpus = VersionCorpus {
            version_id,
            tests,
            mutants,
            coverage,
            kill_matrix: None,
            operator_set,
            tool_mode,
            test_index,
            mutant_index,
        };
        match kill_matrix {
            Some(km) => corpus.with_kill_matrix(km),
            None => Ok(corpus),
        }
    }

    /// Replaces the kill matrix after validating it against this corpus.
    pub fn with_kill_matrix(mut self, kill_matrix: KillMatrix) -> Result<Self> {
        kill_matrix.validate_against(&self)?;
        self.kill_matrix = Some(kill_matrix);
        Ok(self)
    }

    /// The same corpus with the ground truth removed (a prediction target).
    pub fn without_kill_matrix(&self) -> Self {
        let mut c = self.clone();
        c.kill_matrix = None;
        c
    }

    pub fn version_id(&self) -> &str {
        &self.version_id
    }

    pub fn tests(&self) -> &[TestRecord] {
        &self.tests
    }

    pub fn mutants(&self) -> &[MutantRecord] {
        &self.mutants
    }

    pub fn coverage(&self) -> &CoverageMap {
        &self.coverage
    }

    pub fn kill_matrix(&self) -> Option<&KillMatrix> {
        self.kill_matrix.as_ref()
    }

    /// The kill matrix, or a state error naming the corpus.
    pub fn require_kill_matrix(&self) -> Result<&KillMatrix> {
        self.kill_matrix.as_ref().ok_or_else(|| {
            Error::State(format!("corpus {} has no kill matrix", self.version_id))
        })
    }

    pub fn operator_set(&self) -> &[String] {
        &self.operator_set
    }

    pub fn operator_index(&self, tag: &str) -> Option<usize> {
        self.operator_set.iter().position(|o| o == tag)
    }

    pub fn tool_mode(&self) -> ToolMode {
        self.tool_mode
    }

    pub fn test(&self, id: &TestId) -> Option<&TestRecord> {
        self.test_index.get(id).map(|&i| &self.tests[i])
    }

    pub fn mutant(&self, id: &MutantId) -> Option<&MutantRecord> {
        self.mutant_index.get(id).map(|&i| &self.mutants[i])
    }

    pub fn test_position(&self, id: &TestId) -> Option<usize> {
        self.test_index.get(id).copied()
    }

    pub fn mutant_position(&self, id: &MutantId) -> Option<usize> {
        self.mutant_index.get(id).copied()
    }

    /// Covering pairs in canonical order (mutants by id, then tests by id).
    pub fn covering_pairs(&self) -> impl Iterator<Item = (&MutantRecord, &TestRecord)> {
        self.mutants.iter().flat_map(move |m| {
            self.coverage
                .tests_of(&m.id)
                .map(move |t| (m, &self.tests[self.test_index[t]]))
        })
    }

    /// Mutants grouped by their source method, in key order.
    pub fn mutants_by_method(&self) -> BTreeMap<MethodKey, Vec<&MutantRecord>> {
        let mut out: BTreeMap<MethodKey, Vec<&MutantRecord>> = BTreeMap::new();
        for m in &self.mutants {
            out.entry(m.method_key()).or_default().push(m);
        }
        out
    }

    /// Returns a copy restricted to the given mutants (coverage and kills follow).
    pub fn retain_mutants(&self, keep: impl Fn(&MutantRecord) -> bool) -> Result<Self> {
        let mutants: Vec<MutantRecord> = self.mutants.iter().filter(|m| keep(m)).cloned().collect();
        let kept: HashSet<&MutantId> = mutants.iter().map(|m| &m.id).collect();
        let coverage = self
            .coverage
            .iter()
            .filter(|(m, _)| kept.contains(m))
            .flat_map(|(m, ts)| ts.iter().map(move |t| (m.clone(), t.clone())))
            .collect();
        let kill_matrix = self.kill_matrix.as_ref().map(|km| {
            let mut out = KillMatrix::new(mutants.len(), self.tests.len());
            for (m, t) in km.entries().filter(|(m, _)| kept.contains(m)) {
                out.insert(m.clone(), t.clone());
            }
            out
        });
        VersionCorpus::new(
            self.version_id.clone(),
            self.tests.clone(),
            mutants,
            coverage,
            kill_matrix,
            self.operator_set.clone(),
            self.tool_mode,
        )
    }
}

/// Percentage of the corpus's mutants killed by at least one test.
pub fn mutation_score(corpus: &VersionCorpus) -> Result<f64> {
    Ok(corpus.require_kill_matrix()?.mutation_score())
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn mutant(id: &str, class: &str, method: &str, op: &str) -> MutantRecord {
        MutantRecord {
            id: id.into(),
            source_class_name: class.into(),
            source_method_name: method.into(),
            line_number: 3,
            statement: "if (array == null || array.length == 0)".into(),
            before: Some("array.length == 0".into()),
            after: Some("array.length >= 0".into()),
            operator: op.into(),
        }
    }

    /// Two tests, three mutants, full coverage, two kills.
    pub fn small_corpus() -> VersionCorpus {
        let tests = vec![
            TestRecord::new("t1", "TestArrayUtils", "testNullToEmpty"),
            TestRecord::new("t2", "TestDays", "testFactory_daysBetween_RPartial_MonthDay"),
        ];
        let mutants = vec![
            mutant("m1", "ArrayUtils", "nullToEmpty", "ROR"),
            mutant("m2", "ArrayUtils", "nullToEmpty", "COR"),
            mutant("m3", "Days", "daysBetween", "ROR"),
        ];
        let coverage = ["m1", "m2", "m3"]
            .iter()
            .flat_map(|m| ["t1", "t2"].map(|t| (MutantId::from(*m), TestId::from(t))))
            .collect();
        let mut km = KillMatrix::new(3, 2);
        km.insert("m1".into(), "t1".into());
        km.insert("m3".into(), "t2".into());
        VersionCorpus::new(
            "v1",
            tests,
            mutants,
            coverage,
            Some(km),
            vec!["ROR".into(), "COR".into()],
            ToolMode::WithBeforeAfter,
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn small_corpus_shape() {
        let c = small_corpus();
        assert_eq!(c.tests().len(), 2);
        assert_eq!(c.mutants().len(), 3);
        assert_eq!(c.coverage().pair_count(), 6);
        assert_eq!(c.kill_matrix().unwrap().len(), 2);
    }

    #[test]
    fn kill_without_coverage_is_rejected() {
        let c = small_corpus();
        let mut cov = CoverageMap::new();
        cov.insert("m1".into(), "t2".into());
        let mut km = KillMatrix::new(3, 2);
        km.insert("m1".into(), "t1".into());
        let err = VersionCorpus::new(
            "v1",
            c.tests().to_vec(),
            c.mutants().to_vec(),
            cov,
            Some(km),
            c.operator_set().to_vec(),
            c.tool_mode(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(ref s) if s.contains("(m1, t1)")), "{err}");
    }

    #[test]
    fn operator_outside_set_is_rejected() {
        let c = small_corpus();
        let mut mutants = c.mutants().to_vec();
        mutants[0].operator = "AOR".into();
        let err = VersionCorpus::new(
            "v1",
            c.tests().to_vec(),
            mutants,
            CoverageMap::new(),
            None,
            c.operator_set().to_vec(),
            c.tool_mode(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn half_present_before_after_is_rejected() {
        let c = small_corpus();
        let mut mutants = c.mutants().to_vec();
        mutants[1].after = None;
        assert!(VersionCorpus::new(
            "v1",
            c.tests().to_vec(),
            mutants,
            CoverageMap::new(),
            None,
            c.operator_set().to_vec(),
            c.tool_mode(),
        )
        .is_err());
    }

    #[test]
    fn duplicate_test_names_are_rejected() {
        let tests = vec![
            TestRecord::new("t1", "TestA", "testB"),
            TestRecord::new("t2", "TestA", "testB"),
        ];
        assert!(VersionCorpus::new(
            "v",
            tests,
            vec![],
            CoverageMap::new(),
            None,
            vec![],
            ToolMode::WithBeforeAfter
        )
        .is_err());
    }

    #[test]
    fn mutation_score_counts_killed_rows() {
        let c = small_corpus();
        let ms = mutation_score(&c).unwrap();
        assert!((ms - 200.0 / 3.0).abs() < 1e-12);

        let mut km = KillMatrix::new(4, 2);
        for m in ["a", "b", "c"] {
            km.insert(m.into(), "t".into());
        }
        assert_eq!(km.mutation_score(), 75.0);
        assert_eq!(KillMatrix::new(4, 2).mutation_score(), 0.0);
    }

    #[test]
    fn mutation_score_without_matrix_is_state_error() {
        let c = small_corpus().without_kill_matrix();
        assert!(matches!(mutation_score(&c), Err(Error::State(_))));
    }

    #[test]
    fn retain_mutants_keeps_invariants() {
        let c = small_corpus();
        let r = c.retain_mutants(|m| m.id.as_str() != "m1").unwrap();
        assert_eq!(r.mutants().len(), 2);
        assert_eq!(r.kill_matrix().unwrap().len(), 1);
        assert_eq!(r.kill_matrix().unwrap().shape(), (2, 2));
    }
}
