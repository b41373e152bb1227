use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Train/dev/test partition.
#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded 80/10/10 shuffle split. Dev and test get `n / 10` items each
/// (rounded down) and train keeps the rest.
pub fn split_dataset<T: Clone>(items: &[T], seed: u64) -> Result<Split<T>> {
    if items.len() < 10 {
        return Err(Error::Contract(format!(
            "need at least 10 examples to split, got {}",
            items.len()
        )));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let tenth = items.len() / 10;
    let n_train = items.len() - 2 * tenth;
    let take = |ix: &[usize]| ix.iter().map(|&i| items[i].clone()).collect::<Vec<T>>();
    Ok(Split {
        train: take(&order[..n_train]),
        dev: take(&order[n_train..n_train + tenth]),
        test: take(&order[n_train + tenth..]),
    })
}
