use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Number of training books: `round(fraction * n)`, kept within `1..n` so
/// both sides are non-empty.
pub(crate) fn train_count(n_books: usize, fraction: f64) -> usize {
    let raw = (fraction * n_books as f64).round() as usize;
    raw.clamp(1, n_books - 1)
}

/// Assigns whole books to train/test. Titles are sorted, shuffled with a
/// ChaCha8 stream seeded from `seed`, and the first `train_count` go to train.
pub fn split_dataset(mut dataset: Dataset, train_fraction: f64, seed: u64) -> Result<Dataset> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n = dataset.books.len();
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 books to split, got {n}")));
    }
    let mut titles: Vec<String> = dataset.books.iter().map(|b| b.title.clone()).collect();
    titles.sort();
    titles.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = train_count(n, train_fraction);
    dataset.split = titles
        .into_iter()
        .enumerate()
        .map(|(i, t)| (t, if i < n_train { Split::Train } else { Split::Test }))
        .collect();
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Book;

    fn ds(n: usize) -> Dataset {
        Dataset::new(
            (0..n)
                .map(|i| Book {
                    title: format!("book{i:02}"),
                    characters: vec![],
                    pages: vec![],
                })
                .collect(),
        )
    }

    fn counts(d: &Dataset) -> (usize, usize) {
        let train = d.split.values().filter(|s| **s == Split::Train).count();
        (train, d.split.len() - train)
    }

    #[test]
    fn seventy_thirty() {
        assert_eq!(counts(&split_dataset(ds(10), 0.7, 0).unwrap()), (7, 3));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = split_dataset(ds(10), 0.7, 0).unwrap();
        let b = split_dataset(ds(10), 0.7, 0).unwrap();
        assert_eq!(a.split, b.split);
        let differs = (1..20).any(|s| split_dataset(ds(10), 0.7, s).unwrap().split != a.split);
        assert!(differs);
    }

    #[test]
    fn rounding_keeps_a_test_book() {
        // enumerate fractions on a fine grid: both sides always non-empty and
        // the count is the nearest integer when that is feasible
        for n in 2..15 {
            for step in 1..1000 {
                let f = step as f64 / 1000.0;
                let t = train_count(n, f);
                assert!(t >= 1 && t < n);
                let nearest = (f * n as f64).round() as usize;
                if (1..n).contains(&nearest) {
                    assert_eq!(t, nearest);
                }
            }
        }
        assert_eq!(counts(&split_dataset(ds(10), 0.999, 3).unwrap()), (9, 1));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(split_dataset(ds(1), 0.7, 0).is_err());
        assert!(split_dataset(ds(5), 1.0, 0).is_err());
        assert!(split_dataset(ds(5), 0.0, 0).is_err());
    }
}
