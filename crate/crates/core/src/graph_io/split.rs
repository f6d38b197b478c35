use rand::seq::SliceRandom;

use crate::error::{GibError, Result};
use crate::rng;

/// Disjoint train/validation/test index lists covering a dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn all_train(n: usize) -> Self {
        Split {
            train: (0..n).collect(),
            val: Vec::new(),
            test: Vec::new(),
        }
    }

    /// Seeded shuffle cut by `(train, val)` fractions; the rest is test.
    pub fn by_ratio(n: usize, train: f64, val: f64, seed: u64) -> Result<Self> {
        if !(train > 0.0 && val >= 0.0 && train + val <= 1.0) {
            return Err(GibError::Config(format!(
                "split ratios train={train} val={val} are not a partition"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng::stream(seed, "split"));
        let n_train = ((n as f64) * train).floor() as usize;
        let mut n_val = ((n as f64) * val).floor() as usize;
        if val > 0.0 && n_val == 0 && n_train < n {
            n_val = 1;
        }
        let test = idx.split_off(n_train + n_val);
        let val = idx.split_off(n_train);
        Ok(Split {
            train: idx,
            val,
            test,
        })
    }

    /// Fold `fold` of a seeded `k`-fold partition: that fold is the test set,
    /// the following fold (cyclically) is validation, the rest trains.
    pub fn kfold(n: usize, k: usize, fold: usize, seed: u64) -> Result<Self> {
        if k < 3 || fold >= k || n < k {
            return Err(GibError::Config(format!(
                "cannot take fold {fold} of {k}-fold split over {n} graphs"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng::stream(seed, "kfold"));
        let fold_of = |p: usize| p * k / n;
        let val_fold = (fold + 1) % k;
        let mut split = Split {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for (p, &i) in idx.iter().enumerate() {
            match fold_of(p) {
                f if f == fold => split.test.push(i),
                f if f == val_fold => split.val.push(i),
                _ => split.train.push(i),
            }
        }
        Ok(split)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n || seen[i] {
                return Err(GibError::contract(format!(
                    "split index {i} is out of range or repeated"
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(GibError::contract("split does not cover every graph"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_split_partitions() {
        let s = Split::by_ratio(188, 0.7, 0.05, 3).unwrap();
        assert_eq!(s.train.len(), 131);
        assert_eq!(s.val.len(), 9);
        assert_eq!(s.test.len(), 48);
        s.validate(188).unwrap();
        assert_eq!(s, Split::by_ratio(188, 0.7, 0.05, 3).unwrap());
    }

    #[test]
    fn kfold_partitions() {
        let mut tests = Vec::new();
        for f in 0..10 {
            let s = Split::kfold(188, 10, f, 1).unwrap();
            s.validate(188).unwrap();
            assert!(!s.val.is_empty());
            tests.extend(s.test);
        }
        tests.sort();
        assert_eq!(tests, (0..188).collect::<Vec<_>>());
    }
}
