//! Mutation-based fault localisation over a real or predicted kill matrix.
//!
//! A mutant's suspiciousness is the Ochiai similarity between the set of
//! tests killing it and the set of failing tests. A method scores the
//! maximum over its mutants. This is a plain similarity scorer, not a
//! reimplementation of any published statistical localisation model.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{KillMatrix, MethodKey, MutantId, TestId, VersionCorpus};
use crate::error::{Error, Result};

/// The tests that fail in the presence of a fault.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureProfile {
    failing: BTreeSet<TestId>,
}

impl FailureProfile {
    /// Validates non-emptiness and that every id belongs to `corpus`.
    pub fn new(failing: impl IntoIterator<Item = TestId>, corpus: &VersionCorpus) -> Result<Self> {
        let failing: BTreeSet<TestId> = failing.into_iter().collect();
        if failing.is_empty() {
            return Err(Error::validation("failure profile must name at least one test"));
        }
        if let Some(t) = failing.iter().find(|t| corpus.test(t).is_none()) {
            return Err(Error::validation(format!("failing test {t} is not in the corpus")));
        }
        Ok(FailureProfile { failing })
    }

    pub fn tests(&self) -> &BTreeSet<TestId> {
        &self.failing
    }

    pub fn len(&self) -> usize {
        self.failing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.failing.is_empty()
    }

    /// One test id per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str, corpus: &VersionCorpus) -> Result<Self> {
        let ids = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(TestId::from);
        Self::new(ids, corpus)
    }

    pub fn load(path: impl AsRef<Path>, corpus: &VersionCorpus) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, corpus)
    }

    pub fn write(&self) -> String {
        self.failing.iter().map(|t| format!("{t}\n")).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.write()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedMethod {
    pub method: MethodKey,
    pub score: f64,
    /// Worst rank within the method's tie group, 1-based.
    pub rank: usize,
}

/// Methods ordered by decreasing suspiciousness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub entries: Vec<RankedMethod>,
}

impl Ranking {
    pub fn rank_of(&self, method: &MethodKey) -> Option<usize> {
        self.entries.iter().find(|e| &e.method == method).map(|e| e.rank)
    }

    /// Groups of methods sharing a score, in ranking order.
    pub fn tie_groups(&self) -> Vec<&[RankedMethod]> {
        self.entries.chunk_by(|a, b| a.score == b.score).collect()
    }

    /// `rank,method,score` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,method,score\n");
        for e in &self.entries {
            writeln!(out, "{},{},{}", e.rank, e.method, e.score).unwrap();
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Tests killing `mutant` in `matrix`.
pub fn kill_vector(matrix: &KillMatrix, corpus: &VersionCorpus, mutant: &MutantId) -> Result<BTreeSet<TestId>> {
    if corpus.mutant(mutant).is_none() {
        return Err(Error::validation(format!("unknown mutant {mutant}")));
    }
    Ok(matrix.row(mutant).cloned().unwrap_or_default())
}

/// Ochiai similarity of a kill vector to the failure set; 0 for an empty
/// kill vector.
pub fn ochiai(kills: &BTreeSet<TestId>, failures: &FailureProfile) -> f64 {
    if kills.is_empty() || failures.is_empty() {
        return 0.0;
    }
    let both = kills.intersection(&failures.failing).count() as f64;
    both / ((kills.len() * failures.len()) as f64).sqrt()
}

/// Ranks every method that owns at least one mutant.
pub fn localise(matrix: &KillMatrix, corpus: &VersionCorpus, failures: &FailureProfile) -> Result<Ranking> {
    if failures.is_empty() {
        return Err(Error::validation("failure profile is empty"));
    }
    let empty = BTreeSet::new();
    let mut scored: Vec<(MethodKey, f64)> = corpus
        .mutants_by_method()
        .into_iter()
        .map(|(method, mutants)| {
            let score = mutants
                .iter()
                .map(|m| ochiai(matrix.row(&m.id).unwrap_or(&empty), failures))
                .fold(0.0, f64::max);
            (method, score)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut entries: Vec<RankedMethod> = Vec::with_capacity(scored.len());
    let mut start = 0;
    while start < scored.len() {
        let end = start + scored[start..].iter().take_while(|e| e.1 == scored[start].1).count();
        for (method, score) in &scored[start..end] {
            entries.push(RankedMethod {
                method: method.clone(),
                score: *score,
                rank: end,
            });
        }
        start = end;
    }
    Ok(Ranking { entries })
}

/// Number of cases whose faulty method ranks within the top `n`.
pub fn acc_at_n(cases: &[(Ranking, MethodKey)], n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::validation("acc@n needs n >= 1"));
    }
    Ok(cases
        .iter()
        .filter(|(ranking, fault)| match ranking.rank_of(fault) {
            Some(r) => r <= n,
            None => {
                warn!("faulty method {fault} absent from ranking");
                false
            }
        })
        .count())
}
