use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledPair, PairDataset};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleMode {
    #[default]
    None,
    Over,
    Under,
}

impl ResampleMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "over" => Ok(Self::Over),
            "under" => Ok(Self::Under),
            other => Err(Error::validation(format!("unknown resample mode {other:?}"))),
        }
    }
}

/// Balances the killed and survived classes to 1:1.
///
/// `Over` draws minority pairs with replacement until the minority matches
/// the majority. `Under` keeps a uniform random subset of the majority of
/// minority size. The surviving pair order is original order followed by
/// any duplicates in draw order.
pub fn resample(dataset: &PairDataset, mode: ResampleMode, seed: u64) -> Result<PairDataset> {
    if mode == ResampleMode::None {
        return Ok(dataset.clone());
    }
    let (killed, survived): (Vec<LabeledPair>, Vec<LabeledPair>) = {
        let mut k = Vec::new();
        let mut s = Vec::new();
        for p in &dataset.pairs {
            match p.label {
                Some(true) => k.push(*p),
                Some(false) => s.push(*p),
                None => return Err(Error::validation("cannot resample unlabelled pairs")),
            }
        }
        (k, s)
    };
    if killed.is_empty() || survived.is_empty() {
        return Err(Error::validation("resampling needs both classes"));
    }
    let (minority, majority) = if killed.len() <= survived.len() {
        (killed, survived)
    } else {
        (survived, killed)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = match mode {
        ResampleMode::Over => {
            let extra: Vec<LabeledPair> = (0..majority.len() - minority.len())
                .map(|_| minority[rng.random_range(0..minority.len())])
                .collect();
            let mut all = dataset.pairs.clone();
            all.extend(extra);
            all
        }
        ResampleMode::Under => {
            let mut idx: Vec<usize> = (0..majority.len()).collect();
            idx.shuffle(&mut rng);
            let mut keep = vec![false; majority.len()];
            for &i in &idx[..minority.len()] {
                keep[i] = true;
            }
            let majority_label = majority[0].label;
            let mut seen = 0;
            dataset
                .pairs
                .iter()
                .filter(|p| {
                    if p.label != majority_label {
                        return true;
                    }
                    seen += 1;
                    keep[seen - 1]
                })
                .copied()
                .collect()
        }
        ResampleMode::None => unreachable!(),
    };
    Ok(PairDataset {
        pairs,
        ..dataset.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn dataset(killed: usize, survived: usize) -> PairDataset {
        let pairs = (0..killed + survived)
            .map(|i| LabeledPair {
                mutant: i,
                test: 0,
                label: Some(i < killed),
            })
            .collect();
        PairDataset {
            version_id: "v".into(),
            tests: vec![],
            mutants: vec![],
            pairs,
            operator_count: 0,
        }
    }

    #[test]
    fn balanced_over_is_unchanged() {
        let d = dataset(10, 10);
        assert_eq!(resample(&d, ResampleMode::Over, 1).unwrap().class_counts(), (10, 10));
    }

    #[test]
    fn under_and_over_counts() {
        let d = dataset(9, 3);
        assert_eq!(resample(&d, ResampleMode::Under, 1).unwrap().class_counts(), (3, 3));
        let over = resample(&d, ResampleMode::Over, 1).unwrap();
        assert_eq!(over.class_counts(), (9, 9));
        let originals: Vec<usize> = d.pairs.iter().filter(|p| p.label == Some(false)).map(|p| p.mutant).collect();
        assert!(over
            .pairs
            .iter()
            .filter(|p| p.label == Some(false))
            .all(|p| originals.contains(&p.mutant)));
    }

    #[test]
    fn none_is_identity_and_single_class_fails() {
        let d = dataset(4, 0);
        assert_eq!(resample(&d, ResampleMode::None, 0).unwrap(), d);
        assert!(matches!(resample(&d, ResampleMode::Over, 0), Err(Error::Validation(_))));
        assert!(matches!(resample(&d, ResampleMode::Under, 0), Err(Error::Validation(_))));
    }

    fn multiset(pairs: &[LabeledPair]) -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for p in pairs {
            *m.entry(p.mutant).or_insert(0) += 1;
        }
        m
    }

    proptest! {
        #[test]
        fn resampling_is_balanced_and_seeded(k in 1usize..40, s in 1usize..40, seed in any::<u64>()) {
            let d = dataset(k, s);
            let orig = multiset(&d.pairs);
            for mode in [ResampleMode::Over, ResampleMode::Under] {
                let a = resample(&d, mode, seed).unwrap();
                let b = resample(&d, mode, seed).unwrap();
                prop_assert_eq!(&a, &b);
                let (ka, sa) = a.class_counts();
                prop_assert_eq!(ka, sa);
                let target = if mode == ResampleMode::Over { k.max(s) } else { k.min(s) };
                prop_assert_eq!(ka, target);
                for id in multiset(&a.pairs).keys() {
                    prop_assert!(orig.contains_key(id));
                }
            }
        }
    }
}
