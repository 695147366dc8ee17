use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{CorpusEntry, Emotion, Intensity};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Per (emotion, intensity) stratum, `round(ratio * count)` entries train.
    #[default]
    Stratified,
    /// Whole speakers go to one side; `round(ratio * speakers)` train.
    SpeakerDisjoint,
}

/// Splits entries into train and test sets, each returned in input order.
pub fn split_train_test(
    entries: &[CorpusEntry],
    ratio: f64,
    seed: u64,
    mode: SplitMode,
) -> Result<(Vec<CorpusEntry>, Vec<CorpusEntry>)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Config(format!("split ratio must lie in [0, 1], got {ratio}")));
    }
    if entries.is_empty() {
        return Err(Error::Config("cannot split an empty corpus".into()));
    }
    let interior = ratio > 0.0 && ratio < 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; entries.len()];

    match mode {
        SplitMode::Stratified => {
            let mut strata: BTreeMap<(Emotion, Intensity), Vec<usize>> = BTreeMap::new();
            for (i, e) in entries.iter().enumerate() {
                strata.entry((e.emotion, e.intensity)).or_default().push(i);
            }
            for ((emotion, intensity), mut idx) in strata {
                let n_train = (ratio * idx.len() as f64).round() as usize;
                if interior && (n_train == 0 || n_train == idx.len()) {
                    return Err(Error::Config(format!(
                        "stratum ({emotion}, {intensity}) has {} entries; a {ratio} split \
                         leaves one side of it empty",
                        idx.len()
                    )));
                }
                idx.shuffle(&mut rng);
                for &i in &idx[..n_train] {
                    in_train[i] = true;
                }
            }
        }
        SplitMode::SpeakerDisjoint => {
            let mut speakers: Vec<&str> = entries.iter().map(|e| e.speaker.as_str()).collect();
            speakers.sort_unstable();
            speakers.dedup();
            let n_train = (ratio * speakers.len() as f64).round() as usize;
            if interior && (n_train == 0 || n_train == speakers.len()) {
                return Err(Error::Config(format!(
                    "{} speakers cannot be split {ratio}/{} with both sides non-empty",
                    speakers.len(),
                    1.0 - ratio
                )));
            }
            speakers.shuffle(&mut rng);
            let train: std::collections::HashSet<&str> =
                speakers[..n_train].iter().copied().collect();
            for (i, e) in entries.iter().enumerate() {
                in_train[i] = train.contains(e.speaker.as_str());
            }
        }
    }

    let (train, test): (Vec<_>, Vec<_>) = entries
        .iter()
        .zip(in_train)
        .partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(e, _)| e.clone()).collect(),
        test.into_iter().map(|(e, _)| e.clone()).collect(),
    ))
}
