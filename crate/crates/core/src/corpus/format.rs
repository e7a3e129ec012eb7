//! Line-oriented text formats for corpora and kill matrices.
//!
//! Corpus files look like:
//!
//! ```text
//! PMA-CORPUS 1
//! VERSION lang-10
//! TOOL_MODE WITH_BEFORE_AFTER
//! OPERATORS AOR ROR
//! [TESTS]
//! <test_id> <class> <method>
//! [MUTANTS]
//! <mutant_id> <class> <method> <line> <operator> <statement> <before> <after>
//! [COVERAGE]
//! <mutant_id> <test_id> <test_id> ...
//! [KILLS]
//! <mutant_id> <test_id> ...
//! ```
//!
//! Fields are tab separated; `\t`, `\n`, `\r` and `\\` are backslash escaped.
//! In `WITHOUT_BEFORE_AFTER` mode the before/after fields are empty (absent).
//! The `[KILLS]` section is omitted when the corpus has no kill matrix. Lines
//! starting with `#` and blank lines are ignored by the parser and never
//! written by the serialiser.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use super::{
    CoverageMap, KillMatrix, MutantId, MutantRecord, TestId, TestRecord, ToolMode, VersionCorpus,
};
use crate::error::{Error, Result};

const CORPUS_MAGIC: &str = "PMA-CORPUS";
const MATRIX_MAGIC: &str = "PMA-KILLMATRIX";
const FORMAT_VERSION: &str = "1";

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str, line: usize) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => {
                return Err(Error::parse(line, format!("bad escape sequence \\{other:?}")));
            }
        }
    }
    Ok(out)
}

/// Serialises a corpus to its canonical text form.
pub fn write_corpus(corpus: &VersionCorpus) -> String {
    let mut out = String::new();
    out.push_str(&format!("{CORPUS_MAGIC}\t{FORMAT_VERSION}\n"));
    out.push_str(&format!("VERSION\t{}\n", escape(corpus.version_id())));
    out.push_str(&format!("TOOL_MODE\t{}\n", corpus.tool_mode().as_str()));
    out.push_str("OPERATORS");
    for op in corpus.operator_set() {
        out.push('\t');
        out.push_str(&escape(op));
    }
    out.push('\n');

    out.push_str("[TESTS]\n");
    for t in corpus.tests() {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            escape(t.id.as_str()),
            escape(&t.class_name),
            escape(&t.method_name)
        ));
    }

    out.push_str("[MUTANTS]\n");
    for m in corpus.mutants() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            escape(m.id.as_str()),
            escape(&m.source_class_name),
            escape(&m.source_method_name),
            m.line_number,
            escape(&m.operator),
            escape(&m.statement),
            m.before.as_deref().map(escape).unwrap_or_default(),
            m.after.as_deref().map(escape).unwrap_or_default(),
        ));
    }

    out.push_str("[COVERAGE]\n");
    for (m, ts) in corpus.coverage().iter() {
        push_row(&mut out, m.as_str(), ts.iter().map(TestId::as_str));
    }

    if let Some(km) = corpus.kill_matrix() {
        out.push_str("[KILLS]\n");
        for (m, ts) in km.rows().filter(|(_, ts)| !ts.is_empty()) {
            push_row(&mut out, m.as_str(), ts.iter().map(TestId::as_str));
        }
    }
    out
}

fn push_row<'a>(out: &mut String, head: &str, rest: impl Iterator<Item = &'a str>) {
    out.push_str(&escape(head));
    for t in rest {
        out.push('\t');
        out.push_str(&escape(t));
    }
    out.push('\n');
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    Header,
    Tests,
    Mutants,
    Coverage,
    Kills,
}

/// Content lines with their 1-based line numbers; comments and blanks skipped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn expect_magic<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    magic: &str,
) -> Result<()> {
    match lines.next() {
        Some((n, l)) => {
            let fields: Vec<&str> = l.split('\t').collect();
            if fields.first() != Some(&magic) {
                return Err(Error::parse(n, format!("expected {magic} header")));
            }
            if fields.get(1) != Some(&FORMAT_VERSION) {
                return Err(Error::parse(
                    n,
                    format!("unsupported format version {:?}", fields.get(1)),
                ));
            }
            Ok(())
        }
        None => Err(Error::parse(1, format!("empty file, expected {magic} header"))),
    }
}

/// Parses the canonical corpus text. Structural problems are parse errors
/// naming the line; invariant violations are validation errors.
pub fn parse_corpus(text: &str) -> Result<VersionCorpus> {
    let mut lines = content_lines(text);
    expect_magic(&mut lines, CORPUS_MAGIC)?;

    let mut version = None;
    let mut tool_mode = None;
    let mut operators: Option<Vec<String>> = None;
    let mut tests = Vec::new();
    let mut mutants = Vec::new();
    let mut coverage = CoverageMap::new();
    let mut kill_rows: Option<Vec<(MutantId, Vec<TestId>)>> = None;
    let mut section = Section::Header;

    for (n, line) in lines {
        let next = match line {
            "[TESTS]" => Some(Section::Tests),
            "[MUTANTS]" => Some(Section::Mutants),
            "[COVERAGE]" => Some(Section::Coverage),
            "[KILLS]" => Some(Section::Kills),
            _ => None,
        };
        if let Some(next) = next {
            if next as u8 <= section as u8 {
                return Err(Error::parse(n, format!("section {line} out of order")));
            }
            if next == Section::Kills {
                kill_rows = Some(Vec::new());
            }
            section = next;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match section {
            Section::Header => match fields[0] {
                "VERSION" if fields.len() == 2 => version = Some(unescape(fields[1], n)?),
                "TOOL_MODE" if fields.len() == 2 => {
                    tool_mode = Some(ToolMode::parse(fields[1]).ok_or_else(|| {
                        Error::parse(n, format!("unknown tool mode {:?}", fields[1]))
                    })?)
                }
                "OPERATORS" => {
                    operators = Some(
                        fields[1..]
                            .iter()
                            .map(|f| unescape(f, n))
                            .collect::<Result<_>>()?,
                    )
                }
                _ => return Err(Error::parse(n, format!("unexpected header record {line:?}"))),
            },
            Section::Tests => {
                if fields.len() != 3 {
                    return Err(Error::parse(n, format!("test record needs 3 fields, got {}", fields.len())));
                }
                tests.push(TestRecord {
                    id: TestId(unescape(fields[0], n)?),
                    class_name: unescape(fields[1], n)?,
                    method_name: unescape(fields[2], n)?,
                });
            }
            Section::Mutants => {
                if fields.len() != 8 {
                    return Err(Error::parse(n, format!("mutant record needs 8 fields, got {}", fields.len())));
                }
                let mode = tool_mode.ok_or_else(|| Error::parse(n, "TOOL_MODE must precede mutants"))?;
                let line_number: u32 = fields[3]
                    .parse()
                    .map_err(|_| Error::parse(n, format!("bad line number {:?}", fields[3])))?;
                let (before, after) = if mode.has_before_after() {
                    (Some(unescape(fields[6], n)?), Some(unescape(fields[7], n)?))
                } else {
                    if !fields[6].is_empty() || !fields[7].is_empty() {
                        return Err(Error::parse(n, "before/after given in WITHOUT_BEFORE_AFTER mode"));
                    }
                    (None, None)
                };
                mutants.push(MutantRecord {
                    id: MutantId(unescape(fields[0], n)?),
                    source_class_name: unescape(fields[1], n)?,
                    source_method_name: unescape(fields[2], n)?,
                    line_number,
                    operator: unescape(fields[4], n)?,
                    statement: unescape(fields[5], n)?,
                    before,
                    after,
                });
            }
            Section::Coverage => {
                let m = MutantId(unescape(fields[0], n)?);
                coverage.ensure(m.clone());
                for f in &fields[1..] {
                    coverage.insert(m.clone(), TestId(unescape(f, n)?));
                }
            }
            Section::Kills => {
                let m = MutantId(unescape(fields[0], n)?);
                let ts = fields[1..]
                    .iter()
                    .map(|f| unescape(f, n).map(TestId))
                    .collect::<Result<Vec<_>>>()?;
                kill_rows.get_or_insert_with(Vec::new).push((m, ts));
            }
        }
    }

    let version = version.ok_or_else(|| Error::parse(1, "missing VERSION record"))?;
    let tool_mode = tool_mode.ok_or_else(|| Error::parse(1, "missing TOOL_MODE record"))?;
    let operators = operators.ok_or_else(|| Error::parse(1, "missing OPERATORS record"))?;
    let kill_matrix = kill_rows.map(|rows| {
        let mut km = KillMatrix::new(mutants.len(), tests.len());
        for (m, ts) in rows {
            for t in ts {
                km.insert(m.clone(), t);
            }
        }
        km
    });
    VersionCorpus::new(version, tests, mutants, coverage, kill_matrix, operators, tool_mode)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<VersionCorpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text)
}

/// Writes the canonical form. The corpus is re-validated first so a value
/// assembled by hand cannot produce a file that fails to load.
pub fn save_corpus(corpus: &VersionCorpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = write_corpus(corpus);
    parse_corpus(&text)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Serialises a kill matrix. `provenance` lines are emitted as `#` comments.
pub fn write_kill_matrix(version_id: &str, matrix: &KillMatrix, provenance: &[String]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{MATRIX_MAGIC}\t{FORMAT_VERSION}\n"));
    for p in provenance {
        for l in p.lines() {
            out.push_str(&format!("# {l}\n"));
        }
    }
    out.push_str(&format!("VERSION\t{}\n", escape(version_id)));
    let (nm, nt) = matrix.shape();
    out.push_str(&format!("SHAPE\t{nm}\t{nt}\n"));
    out.push_str("[KILLS]\n");
    for (m, ts) in matrix.rows().filter(|(_, ts)| !ts.is_empty()) {
        push_row(&mut out, m.as_str(), ts.iter().map(TestId::as_str));
    }
    out
}

/// Parses a kill-matrix file into `(version_id, matrix)`.
pub fn parse_kill_matrix(text: &str) -> Result<(String, KillMatrix)> {
    let mut lines = content_lines(text);
    expect_magic(&mut lines, MATRIX_MAGIC)?;
    let mut version = None;
    let mut matrix: Option<KillMatrix> = None;
    let mut in_kills = false;
    let mut seen_rows = BTreeSet::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if in_kills {
            let km = matrix.as_mut().expect("SHAPE checked before [KILLS]");
            let m = MutantId(unescape(fields[0], n)?);
            if !seen_rows.insert(m.clone()) {
                return Err(Error::parse(n, format!("duplicate row for mutant {m}")));
            }
            for f in &fields[1..] {
                km.insert(m.clone(), TestId(unescape(f, n)?));
            }
            continue;
        }
        match fields[0] {
            "VERSION" if fields.len() == 2 => version = Some(unescape(fields[1], n)?),
            "SHAPE" if fields.len() == 3 => {
                let parse = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| Error::parse(n, format!("bad dimension {s:?}")))
                };
                matrix = Some(KillMatrix::new(parse(fields[1])?, parse(fields[2])?));
            }
            "[KILLS]" => {
                if matrix.is_none() {
                    return Err(Error::parse(n, "SHAPE must precede [KILLS]"));
                }
                in_kills = true;
            }
            _ => return Err(Error::parse(n, format!("unexpected record {line:?}"))),
        }
    }
    let version = version.ok_or_else(|| Error::parse(1, "missing VERSION record"))?;
    let matrix = matrix.ok_or_else(|| Error::parse(1, "missing SHAPE record"))?;
    Ok((version, matrix))
}

pub fn load_kill_matrix(path: impl AsRef<Path>) -> Result<(String, KillMatrix)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kill_matrix(&text)
}

pub fn save_kill_matrix(
    path: impl AsRef<Path>,
    version_id: &str,
    matrix: &KillMatrix,
    provenance: &[String],
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_kill_matrix(version_id, matrix, provenance)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::small_corpus;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_small_corpus() {
        let c = small_corpus();
        let text = write_corpus(&c);
        let back = parse_corpus(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(write_corpus(&back), text);
    }

    #[test]
    fn save_is_deterministic_and_loadable() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.corpus"), dir.path().join("b.corpus"));
        let c = small_corpus();
        save_corpus(&c, &a).unwrap();
        save_corpus(&c, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(load_corpus(&a).unwrap(), c);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = save_corpus(&small_corpus(), "/nonexistent-dir/x.corpus").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn malformed_record_names_line() {
        let text = write_corpus(&small_corpus()).replace("t1\tTestArrayUtils\ttestNullToEmpty", "t1\tonly-two");
        match parse_corpus(&text).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 6),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn kill_without_coverage_in_file_is_validation_error() {
        let text = write_corpus(&small_corpus()).replace("m1\tt1\tt2\n", "m1\tt2\n");
        let err = parse_corpus(&text).unwrap_err();
        assert!(matches!(err, Error::Validation(ref s) if s.contains("m1") && s.contains("t1")), "{err}");
    }

    #[test]
    fn comments_are_ignored() {
        let text = format!("# generated\n{}", write_corpus(&small_corpus()));
        let text = text.replacen("\n", "\n# stray comment\n", 1);
        assert_eq!(parse_corpus(&text).unwrap(), small_corpus());
    }

    #[test]
    fn absent_kill_section_means_no_matrix() {
        let c = small_corpus().without_kill_matrix();
        let back = parse_corpus(&write_corpus(&c)).unwrap();
        assert!(back.kill_matrix().is_none());
    }

    #[test]
    fn escapes_round_trip() {
        for s in ["a\tb", "x\\ny", "line\nbreak", "\\", "plain"] {
            assert_eq!(unescape(&escape(s), 1).unwrap(), s);
        }
    }

    #[test]
    fn kill_matrix_file_round_trip() {
        let c = small_corpus();
        let km = c.kill_matrix().unwrap();
        let text = write_kill_matrix("v1", km, &["seed = 7".into()]);
        let (v, back) = parse_kill_matrix(&text).unwrap();
        assert_eq!(v, "v1");
        assert_eq!(&back, km);
    }

    proptest! {
        #[test]
        fn arbitrary_text_fields_round_trip(
            class in "[A-Za-z][A-Za-z0-9_\\t\\\\ ]{0,12}",
            stmt in "[ -~\\t\\n]{0,40}",
        ) {
            let mut c = small_corpus();
            let mut mutants = c.mutants().to_vec();
            mutants[0].source_class_name = class;
            mutants[0].statement = stmt;
            c = VersionCorpus::new(
                c.version_id(),
                c.tests().to_vec(),
                mutants,
                c.coverage().clone(),
                c.kill_matrix().cloned(),
                c.operator_set().to_vec(),
                c.tool_mode(),
            ).unwrap();
            let text = write_corpus(&c);
            let back = parse_corpus(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(write_corpus(&back), text);
        }
    }
}
