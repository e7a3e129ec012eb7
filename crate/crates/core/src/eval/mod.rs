//! Metrics and experimental protocols.
//!
//! All counts range over covering pairs with "killed" as the positive class.

mod plot;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

pub use plot::{plot_f_scores, render_f_scores};

use crate::baselines::coverage_baseline;
use crate::corpus::{KillMatrix, TestId, TestRecord, VersionCorpus};
use crate::error::{Error, Result};
use crate::model::{fit, predict_matrix, ModelConfig, TrainedModel};
use crate::preprocess::ResampleMode;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `tp / (tp + fp)`, or 0 when nothing is predicted killed.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `tp / (tp + fn)`, or 0 when nothing is actually killed.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn check_universe(pred: &KillMatrix, truth: &KillMatrix, corpus: &VersionCorpus) -> Result<()> {
    pred.validate_against(corpus)
        .map_err(|e| Error::validation(format!("predicted matrix: {e}")))?;
    truth
        .validate_against(corpus)
        .map_err(|e| Error::validation(format!("ground-truth matrix: {e}")))
}

/// Confusion counts over the covering pairs whose test satisfies `keep`.
pub fn confusion_where(
    pred: &KillMatrix,
    truth: &KillMatrix,
    corpus: &VersionCorpus,
    keep: impl Fn(&TestRecord) -> bool,
) -> Result<ConfusionCounts> {
    check_universe(pred, truth, corpus)?;
    let mut c = ConfusionCounts::default();
    for (m, t) in corpus.covering_pairs().filter(|(_, t)| keep(t)) {
        match (pred.is_killed(&m.id, &t.id), truth.is_killed(&m.id, &t.id)) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn confusion(pred: &KillMatrix, truth: &KillMatrix, corpus: &VersionCorpus) -> Result<ConfusionCounts> {
    confusion_where(pred, truth, corpus, |_| true)
}

/// F1 score; 0 when there is no true positive.
pub fn f_score(counts: &ConfusionCounts) -> f64 {
    f_beta(counts, 1.0)
}

/// Weighted harmonic mean of precision and recall; 0 when there is no true
/// positive.
pub fn f_beta(counts: &ConfusionCounts, beta: f64) -> f64 {
    if counts.tp == 0 {
        return 0.0;
    }
    let (p, r) = (counts.precision(), counts.recall());
    let b2 = beta * beta;
    (1.0 + b2) * p * r / (b2 * p + r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsError {
    pub ms_real: f64,
    pub ms_pred: f64,
    /// `|ms_real - ms_pred|`
    pub absolute: f64,
    /// `ms_real - ms_pred`; negative when the prediction overestimates.
    pub signed: f64,
}

pub fn ms_error(pred: &KillMatrix, truth: &KillMatrix, corpus: &VersionCorpus) -> Result<MsError> {
    check_universe(pred, truth, corpus)?;
    let ms_real = truth.mutation_score();
    let ms_pred = pred.mutation_score();
    Ok(MsError {
        ms_real,
        ms_pred,
        absolute: (ms_real - ms_pred).abs(),
        signed: ms_real - ms_pred,
    })
}

/// Target tests partitioned by whether their (class, method) name exists in
/// the base version.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TestSplit {
    pub existing: BTreeSet<TestId>,
    pub new: BTreeSet<TestId>,
}

pub fn split_new_existing(base: &VersionCorpus, target: &VersionCorpus) -> TestSplit {
    let known: BTreeSet<(&str, &str)> = base
        .tests()
        .iter()
        .map(|t| (t.class_name.as_str(), t.method_name.as_str()))
        .collect();
    let mut split = TestSplit::default();
    for t in target.tests() {
        if known.contains(&(t.class_name.as_str(), t.method_name.as_str())) {
            split.existing.insert(t.id.clone());
        } else {
            split.new.insert(t.id.clone());
        }
    }
    split
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub tests: usize,
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    /// This split's F-score minus the F-score over all tests.
    pub f_delta: f64,
}

impl SplitMetrics {
    fn new(tests: usize, counts: ConfusionCounts, beta: f64, f_all: Option<f64>) -> Self {
        let f = f_beta(&counts, beta);
        SplitMetrics {
            tests,
            counts,
            precision: counts.precision(),
            recall: counts.recall(),
            f_score: f,
            f_delta: f_all.map_or(0.0, |a| f - a),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub tag: String,
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub ms_error: MsError,
}

/// Evaluation of one predicted matrix against ground truth.
///
/// Prediction time is logged rather than stored so that reports from
/// identically seeded runs are byte-identical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub train_version: Option<String>,
    pub target_version: String,
    pub beta: f64,
    pub all: SplitMetrics,
    pub existing: Option<SplitMetrics>,
    pub new: Option<SplitMetrics>,
    pub ms_error: MsError,
    pub baselines: Vec<BaselineRow>,
    #[serde(default)]
    pub provenance: Vec<String>,
}

pub const CSV_HEADER: [&str; 12] = [
    "train", "target", "f_score", "precision", "recall", "f_existing", "f_new", "ms_real", "ms_pred", "ms_error",
    "baseline", "baseline_f_score",
];

impl EvalReport {
    pub fn precision(&self) -> f64 {
        self.all.precision
    }

    pub fn recall(&self) -> f64 {
        self.all.recall
    }

    pub fn f_score(&self) -> f64 {
        self.all.f_score
    }

    pub fn baseline(&self, tag: &str) -> Option<&BaselineRow> {
        self.baselines.iter().find(|b| b.tag == tag)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// The flat CSV fields, in `CSV_HEADER` order. Missing splits are empty.
    pub fn csv_record(&self) -> Vec<String> {
        let opt = |s: &Option<SplitMetrics>| s.as_ref().map(|m| m.f_score.to_string()).unwrap_or_default();
        let base = self.baseline("coverage");
        vec![
            self.train_version.clone().unwrap_or_default(),
            self.target_version.clone(),
            self.all.f_score.to_string(),
            self.all.precision.to_string(),
            self.all.recall.to_string(),
            opt(&self.existing),
            opt(&self.new),
            self.ms_error.ms_real.to_string(),
            self.ms_error.ms_pred.to_string(),
            self.ms_error.absolute.to_string(),
            base.map(|b| b.tag.clone()).unwrap_or_default(),
            base.map(|b| b.f_score.to_string()).unwrap_or_default(),
        ]
    }
}

/// Writes reports as CSV with a header row.
pub fn write_csv(reports: &[EvalReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in reports {
        w.write_record(r.csv_record()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// One row of a report CSV, as needed for plotting.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct CsvRow {
    pub train: String,
    pub target: String,
    pub f_score: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_existing: Option<f64>,
    pub f_new: Option<f64>,
    pub ms_real: f64,
    pub ms_pred: f64,
    pub ms_error: f64,
    pub baseline: String,
    pub baseline_f_score: Option<f64>,
}

/// Parses a report CSV; `#` lines are skipped.
pub fn read_csv(text: &str) -> Result<Vec<CsvRow>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::parse(i + 2, e.to_string())))
        .collect()
}

/// Options shared by every evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub beta: f64,
    pub threshold: f64,
    pub resample: ResampleMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            beta: 1.0,
            threshold: 0.5,
            resample: ResampleMode::None,
        }
    }
}

/// Scores `pred` against the kill matrix stored in `target`. With a `base`
/// version the NEW and EXISTING splits are reported as well. The coverage
/// baseline row is always included.
pub fn evaluate(
    pred: &KillMatrix,
    target: &VersionCorpus,
    base: Option<&VersionCorpus>,
    beta: f64,
) -> Result<EvalReport> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::validation(format!("beta must be positive, got {beta}")));
    }
    let truth = target.require_kill_matrix()?;
    let counts = confusion(pred, truth, target)?;
    let all = SplitMetrics::new(target.tests().len(), counts, beta, None);
    let split_metrics = |ids: &BTreeSet<TestId>| -> Result<SplitMetrics> {
        let c = confusion_where(pred, truth, target, |t| ids.contains(&t.id))?;
        Ok(SplitMetrics::new(ids.len(), c, beta, Some(all.f_score)))
    };
    let (existing, new) = match base {
        Some(b) => {
            let split = split_new_existing(b, target);
            (Some(split_metrics(&split.existing)?), Some(split_metrics(&split.new)?))
        }
        None => (None, None),
    };
    let cov = coverage_baseline(target);
    let cov_counts = confusion(&cov, truth, target)?;
    Ok(EvalReport {
        train_version: base.map(|b| b.version_id().to_string()),
        target_version: target.version_id().to_string(),
        beta,
        ms_error: ms_error(pred, truth, target)?,
        all,
        existing,
        new,
        baselines: vec![BaselineRow {
            tag: "coverage".into(),
            counts: cov_counts,
            precision: cov_counts.precision(),
            recall: cov_counts.recall(),
            f_score: f_beta(&cov_counts, beta),
            ms_error: ms_error(&cov, truth, target)?,
        }],
        provenance: Vec::new(),
    })
}

/// Output of one train-once, predict-many run.
#[derive(Clone, Debug)]
pub struct CrossVersionRun {
    pub model: TrainedModel,
    pub predictions: Vec<KillMatrix>,
    pub reports: Vec<EvalReport>,
}

/// Trains on `train` and evaluates on each target.
pub fn run_cross_version(
    train: &VersionCorpus,
    targets: &[&VersionCorpus],
    config: &ModelConfig,
    options: &EvalOptions,
) -> Result<CrossVersionRun> {
    for t in targets {
        t.require_kill_matrix()?;
    }
    let started = Instant::now();
    let model = fit(train, config, options.resample)?;
    info!("trained on {} in {:.1?}", train.version_id(), started.elapsed());
    evaluate_model(model, train, targets, options)
}

/// Evaluates an already trained model on each target.
pub fn evaluate_model(
    model: TrainedModel,
    train: &VersionCorpus,
    targets: &[&VersionCorpus],
    options: &EvalOptions,
) -> Result<CrossVersionRun> {
    let mut predictions = Vec::with_capacity(targets.len());
    let mut reports = Vec::with_capacity(targets.len());
    for target in targets {
        let started = Instant::now();
        let pred = predict_matrix(&model, &target.without_kill_matrix(), options.threshold)?;
        info!(
            "predicted {} ({} covering pairs) in {:.1?}",
            target.version_id(),
            target.coverage().pair_count(),
            started.elapsed()
        );
        reports.push(evaluate(&pred, target, Some(train), options.beta)?);
        predictions.push(pred);
    }
    Ok(CrossVersionRun {
        model,
        predictions,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::small_corpus;
    use crate::corpus::{CoverageMap, MutantId, ToolMode};
    use proptest::prelude::*;

    fn counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> ConfusionCounts {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    #[test]
    fn f_score_arithmetic() {
        let c = counts(2, 1, 0, 1);
        assert!((c.precision() - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.recall() - 2.0 / 3.0).abs() < 1e-15);
        assert!((f_score(&c) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f_score(&counts(0, 5, 5, 5)), 0.0);
        assert_eq!(f_score(&counts(0, 0, 0, 0)), 0.0);
    }

    #[test]
    fn f_beta_weights_recall() {
        let c = counts(1, 0, 0, 3);
        assert!(f_beta(&c, 2.0) < f_score(&c));
        assert!(f_beta(&c, 0.5) > f_score(&c));
    }

    #[test]
    fn identical_and_empty_predictions() {
        let c = small_corpus();
        let truth = c.kill_matrix().unwrap();
        let same = confusion(truth, truth, &c).unwrap();
        assert_eq!((same.fp, same.fn_), (0, 0));
        assert_eq!(same.total(), c.coverage().pair_count());
        let zero = KillMatrix::empty_for(&c);
        let z = confusion(&zero, truth, &c).unwrap();
        assert_eq!((z.tp, z.fn_), (0, truth.len()));
        assert_eq!(ms_error(truth, truth, &c).unwrap().absolute, 0.0);
    }

    #[test]
    fn mismatched_universe_rejected() {
        let c = small_corpus();
        let truth = c.kill_matrix().unwrap();
        let mut wrong = KillMatrix::new(2, 2);
        assert!(matches!(confusion(&wrong, truth, &c), Err(Error::Validation(_))));
        wrong = KillMatrix::empty_for(&c);
        wrong.insert("m9".into(), "t1".into());
        assert!(matches!(ms_error(&wrong, truth, &c), Err(Error::Validation(_))));
    }

    #[test]
    fn ms_error_three_of_four() {
        let tests = vec![TestRecord::new("t", "T", "test")];
        let mutants: Vec<_> = (0..4)
            .map(|i| crate::corpus::fixtures::mutant(&format!("m{i}"), "C", "f", "AOR"))
            .collect();
        let cov: CoverageMap = (0..4).map(|i| (MutantId::from(format!("m{i}")), TestId::from("t"))).collect();
        let c = VersionCorpus::new("v", tests, mutants, cov, None, vec!["AOR".into()], ToolMode::WithBeforeAfter)
            .unwrap();
        let mut truth = KillMatrix::empty_for(&c);
        let mut pred = KillMatrix::empty_for(&c);
        for i in 0..4 {
            pred.insert(format!("m{i}").into(), "t".into());
            if i < 3 {
                truth.insert(format!("m{i}").into(), "t".into());
            }
        }
        let e = ms_error(&pred, &truth, &c).unwrap();
        assert_eq!((e.ms_real, e.ms_pred, e.absolute, e.signed), (75.0, 100.0, 25.0, -25.0));
    }

    #[test]
    fn split_identity_and_disjoint() {
        let c = small_corpus();
        let s = split_new_existing(&c, &c);
        assert_eq!(s.existing.len(), c.tests().len());
        assert!(s.new.is_empty());
        let other = VersionCorpus::new(
            "w",
            vec![TestRecord::new("x", "Other", "testOther")],
            vec![],
            CoverageMap::new(),
            None,
            vec!["AOR".into()],
            ToolMode::WithBeforeAfter,
        )
        .unwrap();
        let s = split_new_existing(&c, &other);
        assert_eq!(s.new.len(), 1);
        assert!(s.existing.is_empty());
    }

    #[test]
    fn report_round_trip_and_csv() {
        let c = small_corpus();
        let truth = c.kill_matrix().unwrap();
        let r = evaluate(truth, &c, Some(&c), 1.0).unwrap();
        assert_eq!(r.f_score(), 1.0);
        assert_eq!(r.existing.as_ref().unwrap().f_delta, 0.0);
        assert_eq!(r.new.as_ref().unwrap().tests, 0);
        let cov = r.baseline("coverage").unwrap();
        assert_eq!(cov.recall, 1.0);
        assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
        let rows = read_csv(&write_csv(&[r.clone(), r.clone()])).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].f_score, 1.0);
        assert_eq!(rows[0].baseline_f_score, Some(cov.f_score));
        assert!(evaluate(truth, &c, None, 0.0).is_err());
    }

    fn random_corpus(cov_bits: &[bool], n: usize) -> VersionCorpus {
        let tests = (0..n).map(|i| TestRecord::new(format!("t{i}"), "T", &format!("test{i}"))).collect();
        let mutants = (0..n)
            .map(|i| crate::corpus::fixtures::mutant(&format!("m{i}"), "C", "f", "AOR"))
            .collect();
        let cov: CoverageMap = cov_bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| (MutantId::from(format!("m{}", i / n)), TestId::from(format!("t{}", i % n))))
            .collect();
        VersionCorpus::new("v", tests, mutants, cov, None, vec!["AOR".into()], ToolMode::WithBeforeAfter).unwrap()
    }

    fn masked(c: &VersionCorpus, bits: &[bool], n: usize) -> KillMatrix {
        let mut km = KillMatrix::empty_for(c);
        for (i, b) in bits.iter().enumerate() {
            let (m, t) = (MutantId::from(format!("m{}", i / n)), TestId::from(format!("t{}", i % n)));
            if *b && c.coverage().covers(&m, &t) {
                km.insert(m, t);
            }
        }
        km
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn confusion_matches_enumeration(
            cov in proptest::collection::vec(any::<bool>(), 1600),
            p in proptest::collection::vec(any::<bool>(), 1600),
            t in proptest::collection::vec(any::<bool>(), 1600),
        ) {
            let n = 40;
            let c = random_corpus(&cov, n);
            let (pred, truth) = (masked(&c, &p, n), masked(&c, &t, n));
            let got = confusion(&pred, &truth, &c).unwrap();
            let mut want = ConfusionCounts::default();
            for i in 0..n * n {
                if !cov[i] { continue; }
                match (p[i], t[i]) {
                    (true, true) => want.tp += 1,
                    (true, false) => want.fp += 1,
                    (false, false) => want.tn += 1,
                    (false, true) => want.fn_ += 1,
                }
            }
            prop_assert_eq!(got, want);
            prop_assert_eq!(got.total(), c.coverage().pair_count());
            let e = ms_error(&pred, &truth, &c).unwrap();
            prop_assert_eq!(e.ms_real, crate::corpus::mutation_score(&c.clone().with_kill_matrix(truth.clone()).unwrap()).unwrap());
            prop_assert_eq!(e.ms_pred, pred.mutation_score());
            let cov_km = coverage_baseline(&c);
            let full = confusion(&cov_km, &truth, &c).unwrap();
            prop_assert!(full.tp == 0 || full.recall() == 1.0);
        }

        #[test]
        fn f_score_recomputes(tp in 0usize..500, fp in 0usize..500, fn_ in 0usize..500) {
            let c = counts(tp, fp, 0, fn_);
            let f = f_score(&c);
            let want = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
            prop_assert!((f - want).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert!(f <= c.precision().max(c.recall()) + 1e-12);
        }

        #[test]
        fn confusion_invariant_under_relabelling(
            cov in proptest::collection::vec(any::<bool>(), 100),
            p in proptest::collection::vec(any::<bool>(), 100),
            t in proptest::collection::vec(any::<bool>(), 100),
        ) {
            let n = 10;
            let c = random_corpus(&cov, n);
            let got = confusion(&masked(&c, &p, n), &masked(&c, &t, n), &c).unwrap();
            // Reverse both mutant and test numbering.
            let flip = |v: &[bool]| -> Vec<bool> {
                (0..n * n).map(|i| v[(n - 1 - i / n) * n + (n - 1 - i % n)]).collect()
            };
            let c2 = random_corpus(&flip(&cov), n);
            let got2 = confusion(&masked(&c2, &flip(&p), n), &masked(&c2, &flip(&t), n), &c2).unwrap();
            prop_assert_eq!(got, got2);
        }
    }
}
