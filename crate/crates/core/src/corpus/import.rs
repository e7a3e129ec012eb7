//! Adapters from mutation-tool exports into the canonical corpus.
//!
//! Both adapters take a *skeleton* corpus (tests, mutants and coverage
//! without kill outcomes) and fill in its kill matrix from a report. The
//! report layouts are documented in `docs/formats.md`.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use log::warn;

use super::{KillMatrix, MutantId, TestId, ToolMode, VersionCorpus};
use crate::error::{Error, Result};
use crate::preprocess::lex_code;

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn is_header(first: &str, expected: &[&str]) -> bool {
    let norm = first.to_ascii_lowercase().replace(['_', ' '], "");
    expected.iter().any(|e| norm == *e)
}

fn resolve(skeleton: &VersionCorpus, m: &str, t: &str, line: usize) -> Result<(MutantId, TestId)> {
    let (m, t) = (MutantId::from(m), TestId::from(t));
    if skeleton.mutant(&m).is_none() {
        return Err(Error::validation(format!("report line {line}: unknown mutant {m}")));
    }
    if skeleton.test(&t).is_none() {
        return Err(Error::validation(format!("report line {line}: unknown test {t}")));
    }
    Ok((m, t))
}

/// Outcome column of a Major kill map: anything but a pass counts as a kill.
fn major_outcome_is_kill(outcome: &str, line: usize) -> Result<bool> {
    match outcome.to_ascii_uppercase().as_str() {
        "KILLED" | "FAIL" | "EXC" | "TIME" | "CRASH" => Ok(true),
        "ALIVE" | "LIVE" | "PASS" | "SURVIVED" => Ok(false),
        other => Err(Error::parse(line, format!("unknown kill-map outcome {other:?}"))),
    }
}

/// Fills the skeleton's kill matrix from a Major-style kill map
/// (`mutant_id,test_id,outcome` rows).
pub fn parse_major_killmap(text: &str, skeleton: &VersionCorpus) -> Result<VersionCorpus> {
    let mut km = KillMatrix::empty_for(skeleton);
    for (i, rec) in csv_reader(text).records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(i + 1, e.to_string()))?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 && is_header(&rec[0], &["mutantid", "mutant"]) {
            continue;
        }
        if rec.len() != 3 {
            return Err(Error::parse(line, format!("expected 3 fields, got {}", rec.len())));
        }
        let (m, t) = resolve(skeleton, &rec[0], &rec[1], line)?;
        if major_outcome_is_kill(&rec[2], line)? {
            km.insert(m, t);
        }
    }
    skeleton.clone().with_kill_matrix(km)
}

pub fn import_major_killmap(report: impl AsRef<Path>, skeleton: &VersionCorpus) -> Result<VersionCorpus> {
    let path = report.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_major_killmap(&text, skeleton)
}

fn pit_status_is_kill(status: &str, line: usize) -> Result<bool> {
    match status.to_ascii_uppercase().as_str() {
        "KILLED" | "TIMED_OUT" | "MEMORY_ERROR" | "RUN_ERROR" => Ok(true),
        "SURVIVED" | "NO_COVERAGE" | "NON_VIABLE" => Ok(false),
        other => Err(Error::parse(line, format!("unknown PIT status {other:?}"))),
    }
}

/// Fills the skeleton's kill matrix from a PIT-style per-mutant report
/// (`mutant_id,status,killing_tests` with `|`-separated killing tests).
///
/// The result is in `WITHOUT_BEFORE_AFTER` mode. Two kinds of mutant are
/// dropped with a warning: those whose statement does not lex, and those
/// reported as killed without any attributed killing test.
pub fn parse_pit_report(text: &str, skeleton: &VersionCorpus) -> Result<VersionCorpus> {
    let mut kills: Vec<(MutantId, TestId)> = Vec::new();
    let mut dropped: BTreeSet<MutantId> = BTreeSet::new();
    let mut seen = HashSet::new();
    for (i, rec) in csv_reader(text).records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(i + 1, e.to_string()))?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 && is_header(&rec[0], &["mutantid", "mutant"]) {
            continue;
        }
        if rec.len() != 3 {
            return Err(Error::parse(line, format!("expected 3 fields, got {}", rec.len())));
        }
        let m = MutantId::from(&rec[0]);
        if skeleton.mutant(&m).is_none() {
            return Err(Error::validation(format!("report line {line}: unknown mutant {m}")));
        }
        if !seen.insert(m.clone()) {
            return Err(Error::parse(line, format!("duplicate record for mutant {m}")));
        }
        let killing: Vec<&str> = rec[2].split('|').map(str::trim).filter(|s| !s.is_empty()).collect();
        let killed = pit_status_is_kill(&rec[1], line)?;
        if killed && killing.is_empty() {
            warn!("dropping mutant {m}: killed without an attributed test");
            dropped.insert(m);
            continue;
        }
        if !killed && !killing.is_empty() {
            return Err(Error::parse(line, format!("mutant {m} lists killing tests but status {}", &rec[1])));
        }
        for t in killing {
            kills.push(resolve(skeleton, m.as_str(), t, line)?);
        }
    }

    for mutant in skeleton.mutants() {
        if let Err(e) = lex_code(&mutant.statement) {
            warn!("dropping mutant {}: statement does not lex ({e})", mutant.id);
            dropped.insert(mutant.id.clone());
        }
    }

    let stripped = VersionCorpus::new(
        skeleton.version_id(),
        skeleton.tests().to_vec(),
        skeleton
            .mutants()
            .iter()
            .map(|m| {
                let mut m = m.clone();
                m.before = None;
                m.after = None;
                m
            })
            .collect(),
        skeleton.coverage().clone(),
        None,
        skeleton.operator_set().to_vec(),
        ToolMode::WithoutBeforeAfter,
    )?;
    let kept = stripped.retain_mutants(|m| !dropped.contains(&m.id))?;
    let mut km = KillMatrix::empty_for(&kept);
    for (m, t) in kills.into_iter().filter(|(m, _)| !dropped.contains(m)) {
        km.insert(m, t);
    }
    kept.with_kill_matrix(km)
}

pub fn import_pit_report(report: impl AsRef<Path>, skeleton: &VersionCorpus) -> Result<VersionCorpus> {
    let path = report.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pit_report(&text, skeleton)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::small_corpus;
    use super::*;

    fn skeleton() -> VersionCorpus {
        small_corpus().without_kill_matrix()
    }

    #[test]
    fn major_rows_map_directly() {
        let c = parse_major_killmap("MutantID,TestID,Outcome\nm1,t1,KILLED\nm1,t2,ALIVE\n", &skeleton()).unwrap();
        let km = c.kill_matrix().unwrap();
        assert!(km.is_killed(&"m1".into(), &"t1".into()));
        assert_eq!(km.len(), 1);
    }

    #[test]
    fn empty_report_gives_empty_matrix() {
        let c = parse_major_killmap("", &skeleton()).unwrap();
        assert!(c.kill_matrix().unwrap().is_empty());
        let c = parse_pit_report("", &skeleton()).unwrap();
        assert!(c.kill_matrix().unwrap().is_empty());
    }

    #[test]
    fn unknown_ids_are_rejected() {
        assert!(matches!(
            parse_major_killmap("m9,t1,KILLED\n", &skeleton()),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse_major_killmap("m1,t9,KILLED\n", &skeleton()),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse_pit_report("m1,KILLED,t9\n", &skeleton()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn bad_outcome_is_parse_error() {
        assert!(matches!(
            parse_major_killmap("m1,t1,MAYBE\n", &skeleton()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn pit_import_strips_before_after_and_drops_unattributed_kills() {
        let report = "mutant_id,status,killing_tests\nm1,KILLED,t1|t2\nm2,KILLED,\nm3,SURVIVED,\n";
        let c = parse_pit_report(report, &skeleton()).unwrap();
        assert_eq!(c.tool_mode(), ToolMode::WithoutBeforeAfter);
        assert!(c.mutants().iter().all(|m| m.before.is_none() && m.after.is_none()));
        assert_eq!(c.mutants().len(), 2);
        assert!(c.mutant(&"m2".into()).is_none());
        let km = c.kill_matrix().unwrap();
        assert_eq!(km.len(), 2);
        assert_eq!(km.shape(), (2, 2));
    }

    #[test]
    fn pit_import_drops_unlexable_statements() {
        let mut c = small_corpus().without_kill_matrix();
        let mut mutants = c.mutants().to_vec();
        mutants[2].statement = "x = \"unterminated".into();
        c = VersionCorpus::new(
            "v1",
            c.tests().to_vec(),
            mutants,
            c.coverage().clone(),
            None,
            c.operator_set().to_vec(),
            c.tool_mode(),
        )
        .unwrap();
        let out = parse_pit_report("m3,KILLED,t2\n", &c).unwrap();
        assert!(out.mutant(&"m3".into()).is_none());
        assert!(out.kill_matrix().unwrap().is_empty());
    }

    #[test]
    fn kill_outside_coverage_is_rejected() {
        let c = small_corpus();
        let skel = c
            .retain_mutants(|_| true)
            .unwrap()
            .without_kill_matrix();
        let cov: crate::corpus::CoverageMap = [("m1", "t2")]
            .iter()
            .map(|(m, t)| (MutantId::from(*m), TestId::from(*t)))
            .collect();
        let skel = VersionCorpus::new(
            "v1",
            skel.tests().to_vec(),
            skel.mutants().to_vec(),
            cov,
            None,
            skel.operator_set().to_vec(),
            skel.tool_mode(),
        )
        .unwrap();
        assert!(matches!(
            parse_major_killmap("m1,t1,FAIL\n", &skel),
            Err(Error::Validation(_))
        ));
    }
}
