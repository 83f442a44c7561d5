use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::MultiLabelDataset;

/// Row indices `(train, validation)` of a seeded shuffle; validation gets
/// `round(fraction · n)` rows. Both lists are sorted.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("split fraction {fraction} must lie in (0, 1)")));
    }
    let held_out = (fraction * n as f64).round() as usize;
    if held_out == 0 || held_out == n {
        return Err(Error::InvalidConfig(format!(
            "splitting {n} rows with fraction {fraction} leaves an empty part"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut validation = order.split_off(n - held_out);
    order.sort_unstable();
    validation.sort_unstable();
    Ok((order, validation))
}

pub fn split_train_validation(
    dataset: &MultiLabelDataset,
    fraction: f64,
    seed: u64,
) -> Result<(MultiLabelDataset, MultiLabelDataset)> {
    let (train, validation) = split_indices(dataset.len(), fraction, seed)?;
    Ok((dataset.subset(&train)?, dataset.subset(&validation)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        let (t, v) = split_indices(10, 0.2, 1).unwrap();
        assert_eq!((t.len(), v.len()), (8, 2));
        let (t, v) = split_indices(7, 0.25, 1).unwrap();
        assert_eq!((t.len(), v.len()), (5, 2));
    }

    #[test]
    fn deterministic_and_partitioning() {
        assert_eq!(split_indices(100, 0.3, 9).unwrap(), split_indices(100, 0.3, 9).unwrap());
        assert_ne!(split_indices(100, 0.3, 9).unwrap(), split_indices(100, 0.3, 10).unwrap());
        let (t, v) = split_indices(100, 0.3, 9).unwrap();
        let mut all: Vec<usize> = t.into_iter().chain(v).collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn degenerate_splits() {
        assert!(split_indices(2, 0.1, 0).is_err());
        assert!(split_indices(2, 0.9, 0).is_err());
        assert!(split_indices(10, 0.0, 0).is_err());
        assert!(split_indices(10, 1.0, 0).is_err());
    }
}
