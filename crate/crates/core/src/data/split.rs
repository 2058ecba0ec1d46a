use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Default train/dev/test proportions.
pub const DEFAULT_SPLIT: [f64; 3] = [0.7, 0.1, 0.2];

/// Seeded shuffle followed by contiguous cuts. Train and dev sizes are
/// floored; the remainder goes to test.
pub fn split<T: Clone>(items: &[T], ratios: [f64; 3], seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let n = items.len();
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).fork(0x5eed_5917).shuffle(&mut order);
    let cut = |r: f64| libm::floor(r * n as f64 + 1e-9) as usize;
    let n_train = cut(ratios[0]).min(n);
    let n_dev = cut(ratios[1]).min(n - n_train);
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<T>>();
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_dev]),
        pick(&order[n_train + n_dev..]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventy_ten_twenty() {
        let items: Vec<u32> = (0..10).collect();
        let (a, b, c) = split(&items, DEFAULT_SPLIT, 1).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (7, 1, 2));
    }

    #[test]
    fn same_seed_same_partition() {
        let items: Vec<u32> = (0..50).collect();
        assert_eq!(split(&items, DEFAULT_SPLIT, 9).unwrap(), split(&items, DEFAULT_SPLIT, 9).unwrap());
    }

    #[test]
    fn all_train() {
        let items: Vec<u32> = (0..13).collect();
        let (a, b, c) = split(&items, [1.0, 0.0, 0.0], 3).unwrap();
        assert_eq!(a.len(), 13);
        assert!(b.is_empty() && c.is_empty());
    }

    #[test]
    fn ratios_must_sum_to_one() {
        let items: Vec<u32> = (0..3).collect();
        assert!(matches!(split(&items, [0.5, 0.1, 0.1], 0), Err(Error::Config(_))));
    }
}
