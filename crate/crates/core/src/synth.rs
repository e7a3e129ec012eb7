//! Paired synthetic program versions with a planted name signal.
//!
//! Every source method owns a unique invented key word (`bavoru`). Its
//! name is a verb plus the key (`computeBavoru`) and its tests embed the same
//! key (`testBavoruEmpty`, `test_computeBavoru_null`). A mutant is always
//! covered by its own method's tests and, with probability
//! `coverage_noise`, by each test of the other methods in the same class.
//! Covering pairs whose test shares the mutant's key are killed with
//! probability `p_hit`; all other covering pairs with `p_miss`.
//!
//! The target version renames some methods (new verb, same key), renames
//! some tests (new qualifier) and adds tests; renamed and added tests are
//! recorded as NEW. Mutants, coverage and kills are redrawn for the target.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    save_corpus, CoverageMap, KillMatrix, MethodKey, MutantRecord, TestId, TestRecord, ToolMode, VersionCorpus,
};
use crate::error::{Error, Result};
use crate::mbfl::FailureProfile;

const VERBS: &[&str] = &[
    "get", "set", "compute", "parse", "build", "check", "find", "load", "update", "read", "write", "apply",
    "merge", "split", "resolve", "format", "convert", "validate", "create", "remove",
];

const QUALIFIERS: &[&str] = &[
    "null", "empty", "negative", "overflow", "basic", "twice", "large", "unicode", "zero", "boundary",
    "invalid", "default", "single", "many", "nested", "sorted", "reverse", "repeat", "missing", "mixed",
];

const CLASS_PREFIXES: &[&str] = &["Array", "String", "Date", "Number", "Char", "Object", "Stream", "Bit"];
const CLASS_NOUNS: &[&str] = &["Utils", "Helper", "Builder", "Parser", "Store", "Codec", "Range", "Index"];

const CONSONANTS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

const VARIABLES: &[&str] = &[
    "count", "limit", "index", "size", "value", "result", "offset", "total", "start", "end", "left", "right",
    "flag", "buffer", "node",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_methods: usize,
    pub tests_per_method: usize,
    pub mutants_per_method: usize,
    /// Source methods grouped into one class; noise coverage stays within a class.
    pub methods_per_class: usize,
    /// Number of distinct key words drawn; must cover every method.
    pub pool_size: usize,
    pub p_hit: f64,
    pub p_miss: f64,
    pub coverage_noise: f64,
    pub evolve_rename_fraction: f64,
    pub evolve_new_test_fraction: f64,
    pub operator_set: Vec<String>,
    pub tool_mode: ToolMode,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_methods: 60,
            tests_per_method: 4,
            mutants_per_method: 8,
            methods_per_class: 4,
            pool_size: 80,
            p_hit: 0.9,
            p_miss: 0.05,
            coverage_noise: 0.3,
            evolve_rename_fraction: 0.2,
            evolve_new_test_fraction: 0.2,
            operator_set: ["AOR", "ROR", "COR", "LOR", "SOR", "ORU", "LVR", "STD", "EVR"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            tool_mode: ToolMode::WithBeforeAfter,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_hit", self.p_hit),
            ("p_miss", self.p_miss),
            ("coverage_noise", self.coverage_noise),
            ("evolve_rename_fraction", self.evolve_rename_fraction),
            ("evolve_new_test_fraction", self.evolve_new_test_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!("{name} = {p} outside [0, 1]")));
            }
        }
        for (name, n) in [
            ("n_methods", self.n_methods),
            ("tests_per_method", self.tests_per_method),
            ("mutants_per_method", self.mutants_per_method),
            ("methods_per_class", self.methods_per_class),
        ] {
            if n == 0 {
                return Err(Error::validation(format!("{name} must be positive")));
            }
        }
        if self.pool_size < self.n_methods {
            return Err(Error::validation(format!(
                "pool_size {} smaller than n_methods {}",
                self.pool_size, self.n_methods
            )));
        }
        let max_pool = CONSONANTS.len().pow(3) * VOWELS.len().pow(3);
        if self.pool_size > max_pool {
            return Err(Error::validation(format!("pool_size above {max_pool}")));
        }
        if self.operator_set.is_empty() {
            return Err(Error::validation("operator_set is empty"));
        }
        let distinct: BTreeSet<&String> = self.operator_set.iter().collect();
        if distinct.len() != self.operator_set.len() {
            return Err(Error::validation("operator_set has duplicates"));
        }
        let n_classes = self.n_methods.div_ceil(self.methods_per_class);
        if n_classes > CLASS_PREFIXES.len() * CLASS_NOUNS.len() * 10 {
            return Err(Error::validation("too many classes"));
        }
        Ok(())
    }

    /// F-score of the best rule using only the planted relation, from the
    /// expected pair counts of a full class. The candidates are "kill iff
    /// the key matches" and "kill every covering pair".
    pub fn expected_bayes_f(&self) -> f64 {
        let own = self.tests_per_method as f64;
        let others = ((self.methods_per_class.min(self.n_methods) - 1) * self.tests_per_method) as f64;
        let noise_pairs = self.coverage_noise * others;
        best_group_f(
            own * self.p_hit,
            own * (1.0 - self.p_hit),
            noise_pairs * self.p_miss,
            noise_pairs * (1.0 - self.p_miss),
        )
    }
}

/// Best F-score over the rules "predict matching pairs" and "predict every
/// pair", given killed/survived counts of matching and non-matching pairs.
fn best_group_f(match_kill: f64, match_live: f64, other_kill: f64, other_live: f64) -> f64 {
    let f = |tp: f64, fp: f64, fn_: f64| {
        if tp > 0.0 {
            2.0 * tp / (2.0 * tp + fp + fn_)
        } else {
            0.0
        }
    };
    let match_only = f(match_kill, match_live, other_kill);
    let all = f(match_kill + other_kill, match_live + other_live, 0.0);
    match_only.max(all)
}

#[derive(Clone, Debug)]
struct MethodPlan {
    class: String,
    verb: String,
    key: String,
}

impl MethodPlan {
    fn source_name(&self) -> String {
        format!("{}{}", self.verb, capitalise(&self.key))
    }

    fn test_class(&self) -> String {
        format!("Test{}", self.class)
    }
}

#[derive(Clone, Debug)]
struct TestPlan {
    id: String,
    method: usize,
    name: String,
}

fn capitalise(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn key_pool(n: usize, rng: &mut impl Rng) -> Vec<String> {
    let reserved: BTreeSet<&str> = VERBS.iter().chain(QUALIFIERS).chain(VARIABLES).copied().collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = 3;
        let word: String = (0..syllables)
            .map(|_| format!("{}{}", CONSONANTS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
            .collect();
        if !reserved.contains(word.as_str()) && seen.insert(word.clone()) {
            out.push(word);
        }
    }
    out
}

fn class_name(i: usize) -> String {
    let p = CLASS_PREFIXES[i % CLASS_PREFIXES.len()];
    let n = CLASS_NOUNS[(i / CLASS_PREFIXES.len()) % CLASS_NOUNS.len()];
    let round = i / (CLASS_PREFIXES.len() * CLASS_NOUNS.len());
    if round == 0 {
        format!("{p}{n}")
    } else {
        format!("{p}{n}{}", capitalise(VOWELS[round % VOWELS.len()]).repeat(round))
    }
}

/// Qualifier words for the `n`-th test of a method: single qualifiers
/// first, then two-word combinations.
fn qualifier(order: &[usize], n: usize) -> String {
    if n < order.len() {
        capitalise(QUALIFIERS[order[n]])
    } else {
        let m = n - order.len();
        let a = order[m % order.len()];
        let b = order[(m / order.len() + 1 + m % order.len()) % order.len()];
        format!("{}{}", capitalise(QUALIFIERS[a]), capitalise(QUALIFIERS[b]))
    }
}

fn test_name(method: &MethodPlan, qual: &str, rng: &mut impl Rng) -> String {
    let with_verb = rng.random_bool(0.5);
    let core = if with_verb {
        format!("{}{}", method.verb, capitalise(&method.key))
    } else {
        method.key.clone()
    };
    if rng.random_bool(0.5) {
        format!("test{}{}", capitalise(&core), qual)
    } else {
        let mut lower = qual.to_string();
        lower[..1].make_ascii_lowercase();
        format!("test_{core}_{lower}")
    }
}

fn mutation(op: &str, rng: &mut impl Rng) -> (String, String, String) {
    let mut vars = VARIABLES.choose_multiple(rng, 3).copied();
    let (a, b, c) = (vars.next().unwrap(), vars.next().unwrap(), vars.next().unwrap());
    let k: u32 = rng.random_range(0..10);
    let pick = |rng: &mut _, xs: &[&str]| xs.choose(rng).unwrap().to_string();
    match op {
        "AOR" => {
            let after = pick(rng, &["-", "*", "/", "%"]);
            (format!("{c} = {a} + {b};"), "+".into(), after)
        }
        "ROR" => {
            let after = pick(rng, &["<=", ">", ">=", "==", "!="]);
            (format!("if ({a} < {b}) {{"), "<".into(), after)
        }
        "COR" => (format!("if ({a} > {k} && {b} < {c}) {{"), "&&".into(), "||".into()),
        "LOR" => {
            let after = pick(rng, &["|", "^"]);
            (format!("{c} = {a} & {b};"), "&".into(), after)
        }
        "SOR" => {
            let after = pick(rng, &[">>", ">>>"]);
            (format!("{c} = {a} << {k};"), "<<".into(), after)
        }
        "ORU" => (format!("return -{a};"), format!("-{a}"), format!("~{a}")),
        "LVR" => (format!("int {a} = {k};"), k.to_string(), (k + 1).to_string()),
        "STD" => {
            let stmt = format!("{a} = {b} + {k};");
            (stmt.clone(), stmt, String::new())
        }
        "EVR" => {
            let after = pick(rng, &["0", "null"]);
            (format!("return {a};"), a.to_string(), after)
        }
        _ => (format!("{a} = {b};"), b.to_string(), "0".into()),
    }
}

/// Bookkeeping for one generated pair of versions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bookkeeping {
    pub spec: SynthSpec,
    /// Target tests that are renamed or added relative to the base.
    pub new_tests: Vec<TestId>,
    pub methods: Vec<MethodSignal>,
    pub expected_bayes_f: f64,
    /// Best planted-rule F-score on the realised base and target matrices.
    pub realised_bayes_f_base: f64,
    pub realised_bayes_f_target: f64,
}

/// The planted relation of one source method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSignal {
    pub key_word: String,
    pub base: MethodKey,
    pub target: MethodKey,
    pub base_tests: Vec<TestId>,
    pub target_tests: Vec<TestId>,
}

impl Bookkeeping {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bookkeeping serialises") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))
    }
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub base: VersionCorpus,
    pub target: VersionCorpus,
    pub bookkeeping: Bookkeeping,
}

impl SynthOutput {
    /// Writes `base.corpus`, `target.corpus` and `bookkeeping.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_corpus(&self.base, dir.join("base.corpus"))?;
        save_corpus(&self.target, dir.join("target.corpus"))?;
        let path = dir.join("bookkeeping.json");
        fs::write(&path, self.bookkeeping.to_json()).map_err(|e| Error::io(&path, e))
    }
}

fn realise(
    version: &str,
    mutant_prefix: &str,
    methods: &[MethodPlan],
    tests: &[TestPlan],
    spec: &SynthSpec,
    rng: &mut impl Rng,
) -> Result<(VersionCorpus, f64)> {
    let records: Vec<TestRecord> = tests
        .iter()
        .map(|t| TestRecord::new(t.id.as_str(), &methods[t.method].test_class(), &t.name))
        .collect();
    let mut by_class: BTreeMap<&str, Vec<&TestPlan>> = BTreeMap::new();
    for t in tests {
        by_class.entry(methods[t.method].class.as_str()).or_default().push(t);
    }
    let mut mutants = Vec::new();
    let mut coverage = CoverageMap::new();
    let mut kills = KillMatrix::new(methods.len() * spec.mutants_per_method, tests.len());
    let mut counts = [0.0f64; 4];
    let with_ba = spec.tool_mode.has_before_after();
    for (mi, m) in methods.iter().enumerate() {
        let base_line = 20 + 40 * (mi % spec.methods_per_class) as u32;
        for j in 0..spec.mutants_per_method {
            let id = format!("{mutant_prefix}{:05}", mi * spec.mutants_per_method + j);
            let op = spec.operator_set.choose(rng).unwrap().clone();
            let (statement, before, after) = mutation(&op, rng);
            mutants.push(MutantRecord {
                id: id.as_str().into(),
                source_class_name: m.class.clone(),
                source_method_name: m.source_name(),
                line_number: base_line + rng.random_range(1..30),
                statement,
                before: with_ba.then_some(before),
                after: with_ba.then_some(after),
                operator: op,
            });
            coverage.ensure(id.as_str().into());
            for t in &by_class[m.class.as_str()] {
                let matching = t.method == mi;
                if !matching && !rng.random_bool(spec.coverage_noise) {
                    continue;
                }
                coverage.insert(id.as_str().into(), t.id.as_str().into());
                let p = if matching { spec.p_hit } else { spec.p_miss };
                let killed = rng.random_bool(p);
                if killed {
                    kills.insert(id.as_str().into(), t.id.as_str().into());
                }
                counts[usize::from(!matching) * 2 + usize::from(!killed)] += 1.0;
            }
        }
    }
    let corpus = VersionCorpus::new(
        version,
        records,
        mutants,
        coverage,
        Some(kills),
        spec.operator_set.clone(),
        spec.tool_mode,
    )?;
    Ok((corpus, best_group_f(counts[0], counts[1], counts[2], counts[3])))
}

/// Generates a base and an evolved target version.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let keys = key_pool(spec.pool_size, &mut rng);

    let mut methods: Vec<MethodPlan> = (0..spec.n_methods)
        .map(|i| MethodPlan {
            class: class_name(i / spec.methods_per_class),
            verb: VERBS.choose(&mut rng).unwrap().to_string(),
            key: keys[i].clone(),
        })
        .collect();
    let mut qual_order: Vec<Vec<usize>> = Vec::with_capacity(spec.n_methods);
    let mut qual_used = vec![0usize; spec.n_methods];
    let mut tests = Vec::new();
    for (mi, m) in methods.iter().enumerate() {
        let mut order: Vec<usize> = (0..QUALIFIERS.len()).collect();
        order.shuffle(&mut rng);
        for _ in 0..spec.tests_per_method {
            let q = qualifier(&order, qual_used[mi]);
            qual_used[mi] += 1;
            tests.push(TestPlan {
                id: format!("t{:05}", tests.len()),
                method: mi,
                name: test_name(m, &q, &mut rng),
            });
        }
        qual_order.push(order);
    }
    let base_methods = methods.clone();
    let (base, base_f) = realise("base", "m", &base_methods, &tests, spec, &mut rng)?;

    // Evolution: rename some methods and tests, add tests.
    let n_rename_methods = (spec.evolve_rename_fraction * spec.n_methods as f64).round() as usize;
    let mut order: Vec<usize> = (0..spec.n_methods).collect();
    order.shuffle(&mut rng);
    for &mi in &order[..n_rename_methods] {
        let old = methods[mi].verb.clone();
        let choices: Vec<&&str> = VERBS.iter().filter(|v| **v != old).collect();
        methods[mi].verb = choices.choose(&mut rng).unwrap().to_string();
    }
    let n_base_tests = tests.len();
    let mut next_id = n_base_tests;
    let mut new_tests = Vec::new();
    let n_rename_tests = (spec.evolve_rename_fraction * n_base_tests as f64).round() as usize;
    let mut order: Vec<usize> = (0..n_base_tests).collect();
    order.shuffle(&mut rng);
    for &ti in &order[..n_rename_tests] {
        let mi = tests[ti].method;
        let q = qualifier(&qual_order[mi], qual_used[mi]);
        qual_used[mi] += 1;
        tests[ti].name = test_name(&methods[mi], &q, &mut rng);
        tests[ti].id = format!("t{next_id:05}");
        next_id += 1;
        new_tests.push(tests[ti].id.clone());
    }
    let n_added = (spec.evolve_new_test_fraction * n_base_tests as f64).round() as usize;
    for _ in 0..n_added {
        let mi = rng.random_range(0..spec.n_methods);
        let q = qualifier(&qual_order[mi], qual_used[mi]);
        qual_used[mi] += 1;
        let id = format!("t{next_id:05}");
        next_id += 1;
        new_tests.push(id.clone());
        tests.push(TestPlan {
            id,
            method: mi,
            name: test_name(&methods[mi], &q, &mut rng),
        });
    }
    let (target, target_f) = realise("target", "n", &methods, &tests, spec, &mut rng)?;

    let tests_of = |corpus: &VersionCorpus, plans: &[TestPlan], mi: usize| -> Vec<TestId> {
        let mut v: Vec<TestId> = plans.iter().filter(|t| t.method == mi).map(|t| TestId::from(t.id.as_str())).collect();
        v.retain(|t| corpus.test(t).is_some());
        v.sort();
        v
    };
    let base_plans: Vec<TestPlan> = base
        .tests()
        .iter()
        .map(|r| {
            let mi = base_methods
                .iter()
                .position(|m| m.test_class() == r.class_name && r.method_name.to_lowercase().contains(&m.key))
                .expect("every base test embeds a key");
            TestPlan {
                id: r.id.to_string(),
                method: mi,
                name: r.method_name.clone(),
            }
        })
        .collect();
    let signals = (0..spec.n_methods)
        .map(|mi| MethodSignal {
            key_word: methods[mi].key.clone(),
            base: MethodKey::new(&base_methods[mi].class, &base_methods[mi].source_name()),
            target: MethodKey::new(&methods[mi].class, &methods[mi].source_name()),
            base_tests: tests_of(&base, &base_plans, mi),
            target_tests: tests_of(&target, &tests, mi),
        })
        .collect();
    new_tests.sort();
    Ok(SynthOutput {
        base,
        target,
        bookkeeping: Bookkeeping {
            spec: spec.clone(),
            new_tests: new_tests.into_iter().map(TestId::from).collect(),
            methods: signals,
            expected_bayes_f: spec.expected_bayes_f(),
            realised_bayes_f_base: base_f,
            realised_bayes_f_target: target_f,
        },
    })
}

/// A failure profile equal to the kill vector of a randomly chosen killable
/// mutant of `method`.
pub fn plant_fault(corpus: &VersionCorpus, method: &MethodKey, seed: u64) -> Result<FailureProfile> {
    let km = corpus.require_kill_matrix()?;
    let mut killable: Vec<&BTreeSet<TestId>> = corpus
        .mutants()
        .iter()
        .filter(|m| &m.method_key() == method)
        .filter_map(|m| km.row(&m.id))
        .filter(|row| !row.is_empty())
        .collect();
    if killable.is_empty() {
        return Err(Error::validation(format!("method {method} has no killed mutant")));
    }
    killable.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row = killable.choose(&mut rng).unwrap();
    FailureProfile::new(row.iter().cloned(), corpus)
}

/// Plants `n` faults in distinct methods chosen by `seed`.
pub fn plant_faults(corpus: &VersionCorpus, n: usize, seed: u64) -> Result<Vec<(MethodKey, FailureProfile)>> {
    let km = corpus.require_kill_matrix()?;
    let mut candidates: Vec<MethodKey> = corpus
        .mutants_by_method()
        .into_iter()
        .filter(|(_, ms)| ms.iter().any(|m| km.row(&m.id).is_some_and(|r| !r.is_empty())))
        .map(|(k, _)| k)
        .collect();
    if candidates.len() < n {
        return Err(Error::validation(format!(
            "only {} methods have killed mutants, {n} requested",
            candidates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    candidates
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(i, k)| plant_fault(corpus, &k, seed.wrapping_add(i as u64 + 1)).map(|f| (k, f)))
        .collect()
}
