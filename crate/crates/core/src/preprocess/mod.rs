//! From raw names and code text to index sequences: lexing, literal
//! filtering, subword splitting, vocabularies, labelled pairs and resampling.

mod lexer;
mod resample;
mod subword;
mod vocab;

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{MutantId, MutantRecord, TestId, TestRecord, VersionCorpus};
use crate::error::{Error, Result};

pub use lexer::{lex_code, lex_code_lossy, Token, TokenKind};
pub use resample::{resample, ResampleMode};
pub use subword::{build_name_feature, split_subwords};
pub use vocab::{
    encode, Channel, Vocabulary, NUM, NUM_TOKEN, PAD, PAD_TOKEN, REMOVED, REMOVED_TOKEN, STR,
    STR_TOKEN, UNK, UNK_TOKEN,
};

/// Replaces numeric literals with `<num>` and string/char literals with
/// `<str>`. Length and all other tokens are preserved.
pub fn filter_literals(tokens: &[Token]) -> Vec<Token> {
    tokens
        .iter()
        .map(|t| match t.kind {
            TokenKind::NumericLiteral => Token::new(TokenKind::Special, NUM_TOKEN),
            TokenKind::StringLiteral | TokenKind::CharLiteral => {
                Token::new(TokenKind::Special, STR_TOKEN)
            }
            _ => t.clone(),
        })
        .collect()
}

/// Full code-channel pipeline for one fragment: lex, filter literals, split
/// identifiers into subwords. Unlexable characters are skipped with a warning.
pub fn code_tokens(text: &str) -> Vec<String> {
    let lexed = match lex_code(text) {
        Ok(t) => t,
        Err(e) => {
            warn!("lossy lexing of {text:?}: {e}");
            lex_code_lossy(text)
        }
    };
    let mut out = Vec::with_capacity(lexed.len());
    for tok in filter_literals(&lexed) {
        match tok.kind {
            TokenKind::Identifier => out.extend(split_subwords(&tok.text)),
            _ => out.push(tok.text),
        }
    }
    out
}

/// Which feature families to blank out. `true` removes the feature.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub source_name: bool,
    pub line: bool,
    pub before_after: bool,
    pub operator: bool,
}

impl AblationFlags {
    pub fn none() -> Self {
        Self::default()
    }

    /// Parses a comma-separated list such as `source-name,operator`.
    pub fn parse_list(s: &str) -> Result<Self> {
        let mut flags = Self::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "source-name" | "source_name" => flags.source_name = true,
                "line" => flags.line = true,
                "before-after" | "before_after" => flags.before_after = true,
                "operator" => flags.operator = true,
                other => return Err(Error::validation(format!("unknown ablation {other:?}"))),
            }
        }
        Ok(flags)
    }

    /// The four single-feature ablations, with their display names.
    pub fn singles() -> [(&'static str, AblationFlags); 4] {
        let one = |f: fn(&mut AblationFlags)| {
            let mut a = AblationFlags::default();
            f(&mut a);
            a
        };
        [
            ("source-name", one(|a| a.source_name = true)),
            ("line", one(|a| a.line = true)),
            ("before-after", one(|a| a.before_after = true)),
            ("operator", one(|a| a.operator = true)),
        ]
    }
}

/// Raw (pre-vocabulary) tokens of a test.
pub fn test_name_tokens(test: &TestRecord) -> Result<Vec<String>> {
    build_name_feature(&test.class_name, &test.method_name)
}

/// Raw tokens of a mutant's three code features. `None` when the corpus
/// carries no before/after fragments. A present but empty fragment (a
/// deletion) becomes the single `<removed>` token.
pub struct MutantTokens {
    pub source_name: Vec<String>,
    pub line: Vec<String>,
    pub before_after: Option<(Vec<String>, Vec<String>)>,
}

pub fn mutant_tokens(mutant: &MutantRecord) -> Result<MutantTokens> {
    let fragment = |s: &str| {
        let toks = code_tokens(s);
        if toks.is_empty() {
            vec![REMOVED_TOKEN.to_string()]
        } else {
            toks
        }
    };
    Ok(MutantTokens {
        source_name: build_name_feature(&mutant.source_class_name, &mutant.source_method_name)?,
        line: code_tokens(&mutant.statement),
        before_after: match (&mutant.before, &mutant.after) {
            (Some(b), Some(a)) => Some((fragment(b), fragment(a))),
            _ => None,
        },
    })
}

/// Builds the names and code vocabularies from every test and mutant of a
/// (training) corpus.
pub fn build_vocab(corpus: &VersionCorpus, min_count: usize) -> Result<(Vocabulary, Vocabulary)> {
    let mut names: BTreeMap<String, usize> = BTreeMap::new();
    let mut code: BTreeMap<String, usize> = BTreeMap::new();
    let bump = |map: &mut BTreeMap<String, usize>, toks: Vec<String>| {
        for t in toks {
            *map.entry(t).or_insert(0) += 1;
        }
    };
    for t in corpus.tests() {
        bump(&mut names, test_name_tokens(t)?);
    }
    for m in corpus.mutants() {
        let mt = mutant_tokens(m)?;
        bump(&mut names, mt.source_name);
        bump(&mut code, mt.line);
        if let Some((b, a)) = mt.before_after {
            bump(&mut code, b);
            bump(&mut code, a);
        }
    }
    Ok((
        Vocabulary::from_counts(Channel::Names, &names, min_count),
        Vocabulary::from_counts(Channel::Code, &code, min_count),
    ))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestFeatures {
    pub test_id: TestId,
    /// Indices over the names vocabulary.
    pub name: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutantFeatures {
    pub mutant_id: MutantId,
    /// Indices over the names vocabulary.
    pub source_name: Vec<u32>,
    /// Indices over the code vocabulary.
    pub line: Vec<u32>,
    /// `None` in tool modes without before/after fragments.
    pub before_after: Option<(Vec<u32>, Vec<u32>)>,
    /// `None` when the operator feature is ablated.
    pub operator: Option<usize>,
}

/// One (mutant, covering test) example. Features live in the owning
/// dataset's tables and are referenced by position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub mutant: usize,
    pub test: usize,
    /// `Some(true)` when killed; `None` for unlabelled prediction inputs.
    pub label: Option<bool>,
}

/// Borrowed view of one pair's features.
#[derive(Clone, Copy, Debug)]
pub struct PairFeatures<'a> {
    pub test: &'a TestFeatures,
    pub mutant: &'a MutantFeatures,
    pub label: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDataset {
    pub version_id: String,
    pub tests: Vec<TestFeatures>,
    pub mutants: Vec<MutantFeatures>,
    pub pairs: Vec<LabeledPair>,
    pub operator_count: usize,
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn features(&self, i: usize) -> PairFeatures<'_> {
        let p = self.pairs[i];
        PairFeatures {
            test: &self.tests[p.test],
            mutant: &self.mutants[p.mutant],
            label: p.label,
        }
    }

    /// `(killed, survived)` counts over labelled pairs.
    pub fn class_counts(&self) -> (usize, usize) {
        self.pairs.iter().fold((0, 0), |(k, s), p| match p.label {
            Some(true) => (k + 1, s),
            Some(false) => (k, s + 1),
            None => (k, s),
        })
    }

    pub fn ids(&self, i: usize) -> (&MutantId, &TestId) {
        let p = self.pairs[i];
        (&self.mutants[p.mutant].mutant_id, &self.tests[p.test].test_id)
    }
}

/// Whether pairs must carry ground-truth labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairMode {
    Training,
    Prediction,
}

/// One pair per covering (mutant, test); label from the kill matrix.
pub fn build_pairs(
    corpus: &VersionCorpus,
    names: &Vocabulary,
    code: &Vocabulary,
    max_len: usize,
    ablation: AblationFlags,
    mode: PairMode,
) -> Result<PairDataset> {
    if names.channel() != Channel::Names || code.channel() != Channel::Code {
        return Err(Error::validation("vocabulary channels swapped"));
    }
    let kills = match mode {
        PairMode::Training => Some(corpus.require_kill_matrix()?),
        PairMode::Prediction => corpus.kill_matrix(),
    };

    let tests = corpus
        .tests()
        .iter()
        .map(|t| {
            Ok(TestFeatures {
                test_id: t.id.clone(),
                name: encode(&test_name_tokens(t)?, names, max_len),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mutants = corpus
        .mutants()
        .iter()
        .map(|m| {
            let toks = mutant_tokens(m)?;
            let blank_or = |ablated: bool, toks: &[String], v: &Vocabulary| {
                if ablated {
                    Vec::new()
                } else {
                    encode(toks, v, max_len)
                }
            };
            Ok(MutantFeatures {
                mutant_id: m.id.clone(),
                source_name: blank_or(ablation.source_name, &toks.source_name, names),
                line: blank_or(ablation.line, &toks.line, code),
                before_after: toks.before_after.map(|(b, a)| {
                    (
                        blank_or(ablation.before_after, &b, code),
                        blank_or(ablation.before_after, &a, code),
                    )
                }),
                operator: if ablation.operator {
                    None
                } else {
                    corpus.operator_index(&m.operator)
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pairs = Vec::with_capacity(corpus.coverage().pair_count());
    for (mi, m) in corpus.mutants().iter().enumerate() {
        for t in corpus.coverage().tests_of(&m.id) {
            let ti = corpus.test_position(t).expect("coverage ids validated");
            pairs.push(LabeledPair {
                mutant: mi,
                test: ti,
                label: kills.map(|k| k.is_killed(&m.id, t)),
            });
        }
    }

    Ok(PairDataset {
        version_id: corpus.version_id().to_string(),
        tests,
        mutants,
        pairs,
        operator_count: corpus.operator_set().len(),
    })
}
