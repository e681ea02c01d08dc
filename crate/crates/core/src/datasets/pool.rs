use std::sync::Arc;

use super::{DataError, Dataset, PoolSplit, Result};
use crate::tensor::Tensor;

/// Read access to features plus whatever labels the holder is allowed to see.
pub trait LabelSource {
    fn features(&self) -> &Tensor;
    fn num_classes(&self) -> usize;
    fn label(&self, index: usize) -> Result<usize>;
}

impl LabelSource for Dataset {
    fn features(&self) -> &Tensor {
        Dataset::features(self)
    }

    fn num_classes(&self) -> usize {
        Dataset::num_classes(self)
    }

    fn label(&self, index: usize) -> Result<usize> {
        self.labels()
            .get(index)
            .copied()
            .ok_or_else(|| DataError::Invalid(format!("index {index} out of range")))
    }
}

/// A dataset behind a label gate.
///
/// Labels of the pretraining, validation and test indices are visible.
/// Labels of the unlabeled pool stay hidden until [`ActivePool::query`]
/// reveals them, and every reveal is counted against the budget. The wrapped
/// [`Dataset`] is never handed out, so selection code holding an
/// `ActivePool` cannot read a pool label without paying for it.
#[derive(Debug, Clone)]
pub struct ActivePool {
    dataset: Arc<Dataset>,
    split: PoolSplit,
    visible: Vec<bool>,
    in_pool: Vec<bool>,
    queried: Vec<usize>,
}

impl ActivePool {
    pub fn new(dataset: Arc<Dataset>, split: PoolSplit) -> Result<Self> {
        let n = dataset.len();
        let mut seen = vec![false; n];
        for &i in split
            .pretrain
            .iter()
            .chain(&split.unlabeled)
            .chain(&split.val)
            .chain(&split.test)
        {
            if i >= n {
                return Err(DataError::Invalid(format!(
                    "split index {i} out of range {n}"
                )));
            }
            if seen[i] {
                return Err(DataError::Invalid(format!(
                    "index {i} appears in two split parts"
                )));
            }
            seen[i] = true;
        }
        let mut visible = vec![false; n];
        for &i in split.pretrain.iter().chain(&split.val).chain(&split.test) {
            visible[i] = true;
        }
        let mut in_pool = vec![false; n];
        for &i in &split.unlabeled {
            in_pool[i] = true;
        }
        Ok(Self {
            dataset,
            split,
            visible,
            in_pool,
            queried: Vec::new(),
        })
    }

    pub fn split(&self) -> &PoolSplit {
        &self.split
    }

    pub fn name(&self) -> &str {
        self.dataset.name()
    }

    pub fn dim(&self) -> usize {
        self.dataset.dim()
    }

    pub fn is_visible(&self, index: usize) -> bool {
        self.visible.get(index).copied().unwrap_or(false)
    }

    /// Reveals the label of a pool index and charges one query.
    pub fn query(&mut self, index: usize) -> Result<usize> {
        if !self.in_pool.get(index).copied().unwrap_or(false) {
            return Err(DataError::NotInPool(index));
        }
        if self.visible[index] {
            return Err(DataError::AlreadyQueried(index));
        }
        self.visible[index] = true;
        self.queried.push(index);
        Ok(self.dataset.labels()[index])
    }

    pub fn query_batch(&mut self, indices: &[usize]) -> Result<Vec<usize>> {
        indices.iter().map(|&i| self.query(i)).collect()
    }

    /// Number of labels bought so far.
    pub fn queries(&self) -> usize {
        self.queried.len()
    }

    pub fn queried(&self) -> &[usize] {
        &self.queried
    }

    /// Pool indices whose labels have not been bought, in split order.
    pub fn remaining_pool(&self) -> Vec<usize> {
        self.split
            .unlabeled
            .iter()
            .copied()
            .filter(|&i| !self.visible[i])
            .collect()
    }
}

impl LabelSource for ActivePool {
    fn features(&self) -> &Tensor {
        self.dataset.features()
    }

    fn num_classes(&self) -> usize {
        self.dataset.num_classes()
    }

    fn label(&self, index: usize) -> Result<usize> {
        if self.is_visible(index) {
            Ok(self.dataset.labels()[index])
        } else {
            Err(DataError::LabelHidden(index))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_gaussian_blobs, make_split};

    fn pool() -> ActivePool {
        let ds = Arc::new(gen_gaussian_blobs(2, 20, 2, 1.0, 1).unwrap());
        let split = make_split(&ds, 4, 5, 5, 2).unwrap();
        ActivePool::new(ds, split).unwrap()
    }

    #[test]
    fn pool_labels_are_hidden_until_queried() {
        let mut p = pool();
        let i = p.split().unlabeled[0];
        assert!(matches!(p.label(i), Err(DataError::LabelHidden(_))));
        let l = p.query(i).unwrap();
        assert_eq!(p.label(i).unwrap(), l);
        assert_eq!(p.queries(), 1);
        assert!(matches!(p.query(i), Err(DataError::AlreadyQueried(_))));
        assert_eq!(p.queries(), 1);
    }

    #[test]
    fn labeled_parts_are_visible_and_not_queryable() {
        let mut p = pool();
        let i = p.split().pretrain[0];
        assert!(p.label(i).is_ok());
        assert!(matches!(p.query(i), Err(DataError::NotInPool(_))));
        let v = p.split().val[0];
        assert!(p.label(v).is_ok());
    }

    #[test]
    fn remaining_pool_shrinks() {
        let mut p = pool();
        let before = p.remaining_pool().len();
        let i = p.remaining_pool()[3];
        p.query(i).unwrap();
        assert_eq!(p.remaining_pool().len(), before - 1);
        assert!(!p.remaining_pool().contains(&i));
    }

    #[test]
    fn overlapping_split_is_rejected() {
        let ds = Arc::new(gen_gaussian_blobs(2, 5, 2, 1.0, 1).unwrap());
        let split = PoolSplit {
            pretrain: vec![0, 1],
            unlabeled: vec![1, 2],
            val: vec![3],
            test: vec![],
        };
        assert!(ActivePool::new(ds, split).is_err());
    }
}
