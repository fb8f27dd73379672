use rand::seq::SliceRandom;

use super::DomainDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// A labeled source batch and an unlabeled target batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPair {
    pub source_x: Matrix,
    pub source_y: Vec<usize>,
    pub source_indices: Vec<usize>,
    pub target_x: Matrix,
    pub target_indices: Vec<usize>,
}

impl BatchPair {
    pub fn from_indices(ds: &DomainDataset, source_indices: Vec<usize>, target_indices: Vec<usize>) -> Self {
        BatchPair {
            source_x: ds.source_x.select_rows(&source_indices),
            source_y: source_indices.iter().map(|&i| ds.source_y[i]).collect(),
            source_indices,
            target_x: ds.target_x.select_rows(&target_indices),
            target_indices,
        }
    }
}

/// Index batches of one domain for one epoch. Each pass over the domain is a
/// fresh permutation; passes repeat until `count` full batches exist.
fn domain_batches(len: usize, batch: usize, count: usize, seed: u64, domain: u64, epoch: u64) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(count);
    let mut pass = 0u64;
    while out.len() < count {
        let mut perm: Vec<usize> = (0..len).collect();
        let s = seed::derive(seed::derive(seed, seed::stream::BATCHES, domain), epoch, pass);
        perm.shuffle(&mut seed::rng(s));
        for chunk in perm.chunks_exact(batch) {
            if out.len() == count {
                break;
            }
            out.push(chunk.to_vec());
        }
        pass += 1;
    }
    out
}

pub fn batches_per_epoch(ds: &DomainDataset, batch_source: usize, batch_target: usize) -> usize {
    (ds.source_len() / batch_source).max(ds.target_len() / batch_target)
}

/// One epoch of batches. The epoch length is set by whichever domain yields
/// more full batches; the other domain cycles through extra permutations.
/// Partial batches are dropped.
pub fn iterate_batches(
    ds: &DomainDataset,
    batch_source: usize,
    batch_target: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<BatchPair>> {
    if batch_source == 0 || batch_target == 0 {
        return Err(Error::Parameter("batch sizes must be at least 1".into()));
    }
    if batch_source > ds.source_len() || batch_target > ds.target_len() {
        return Err(Error::Parameter(format!(
            "batch sizes {batch_source}/{batch_target} exceed domain sizes {}/{}",
            ds.source_len(),
            ds.target_len()
        )));
    }
    let count = batches_per_epoch(ds, batch_source, batch_target);
    let src = domain_batches(ds.source_len(), batch_source, count, seed, 0, epoch);
    let tgt = domain_batches(ds.target_len(), batch_target, count, seed, 1, epoch);
    Ok(src
        .into_iter()
        .zip(tgt)
        .map(|(s, t)| BatchPair::from_indices(ds, s, t))
        .collect())
}

/// Endless batch stream walking through consecutive epochs.
pub struct BatchStream<'a> {
    ds: &'a DomainDataset,
    batch_source: usize,
    batch_target: usize,
    seed: u64,
    epoch: u64,
    pending: std::vec::IntoIter<BatchPair>,
}

impl<'a> BatchStream<'a> {
    pub fn new(ds: &'a DomainDataset, batch_source: usize, batch_target: usize, seed: u64) -> Result<Self> {
        let first = iterate_batches(ds, batch_source, batch_target, seed, 0)?;
        Ok(BatchStream {
            ds,
            batch_source,
            batch_target,
            seed,
            epoch: 0,
            pending: first.into_iter(),
        })
    }
}

impl Iterator for BatchStream<'_> {
    type Item = BatchPair;

    fn next(&mut self) -> Option<BatchPair> {
        if let Some(b) = self.pending.next() {
            return Some(b);
        }
        self.epoch += 1;
        let next = iterate_batches(self.ds, self.batch_source, self.batch_target, self.seed, self.epoch)
            .expect("sizes validated at construction");
        self.pending = next.into_iter();
        self.pending.next()
    }
}
