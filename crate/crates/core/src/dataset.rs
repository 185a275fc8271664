//! Classifier-ready view of a CSI log: one feature row per packet plus the
//! bookkeeping needed for stratified splits and multi-packet probes.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::csi::{ArrayGeometry, Condition, CsiLog};
use crate::error::{Error, Result};
use crate::mlp::Matrix;
use crate::snr::{packet_feature, FeatureMode};

/// Packets of a log in log order. The label of a packet is its identity.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub geometry: ArrayGeometry,
    pub mode: FeatureMode,
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub identities: Vec<u32>,
    pub conditions: Vec<Condition>,
    /// Acquisition index of each packet, counted from 0 over the whole log.
    pub acquisitions: Vec<usize>,
}

/// Assigns each packet an acquisition index. A new acquisition starts when
/// the identity or condition changes, or when the timestamp fails to
/// increase (recordings restart their clock at 0).
pub fn segment_acquisitions(log: &CsiLog) -> Vec<usize> {
    let mut out = Vec::with_capacity(log.samples.len());
    let mut current = 0usize;
    for (i, s) in log.samples.iter().enumerate() {
        if i > 0 {
            let p = &log.samples[i - 1];
            if p.identity != s.identity
                || p.condition != s.condition
                || s.timestamp_ns <= p.timestamp_ns
            {
                current += 1;
            }
        }
        out.push(current);
    }
    out
}

impl FeatureSet {
    pub fn from_log(log: &CsiLog, mode: FeatureMode) -> Result<Self> {
        if log.is_empty() {
            return Err(Error::Dataset("log contains no records".into()));
        }
        let g = log.geometry;
        let dim = mode.dim(g.n_pairs(), g.n_subcarriers);
        let rows: Vec<Vec<f64>> = log
            .samples
            .par_iter()
            .map(|s| packet_feature(s, mode))
            .collect::<std::result::Result<_, _>>()?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in &rows {
            data.extend_from_slice(r);
        }
        Ok(Self {
            geometry: g,
            mode,
            x: Matrix::from_vec(rows.len(), dim, data),
            labels: log.samples.iter().map(|s| s.identity as usize).collect(),
            identities: log.samples.iter().map(|s| s.identity).collect(),
            conditions: log.samples.iter().map(|s| s.condition).collect(),
            acquisitions: segment_acquisitions(log),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// `max label + 1`; identity 0 (the empty path) is class 0.
    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Rows `idx`, in the given order.
    pub fn subset(&self, idx: &[usize]) -> FeatureSet {
        FeatureSet {
            geometry: self.geometry,
            mode: self.mode,
            x: self.x.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            identities: idx.iter().map(|&i| self.identities[i]).collect(),
            conditions: idx.iter().map(|&i| self.conditions[i]).collect(),
            acquisitions: idx.iter().map(|&i| self.acquisitions[i]).collect(),
        }
    }

    /// Packet indices grouped by `(identity, condition)`, each group in log
    /// order.
    pub fn strata(&self) -> BTreeMap<(u32, Condition), Vec<usize>> {
        let mut map: BTreeMap<(u32, Condition), Vec<usize>> = BTreeMap::new();
        for i in 0..self.len() {
            map.entry((self.identities[i], self.conditions[i]))
                .or_default()
                .push(i);
        }
        map
    }

    /// Keeps at most `n` packets per `(identity, condition)`, drawn round-robin
    /// across that stratum's acquisitions from the start of each recording.
    /// Returned indices are in log order.
    pub fn packets_per_identity_indices(&self, n: usize) -> Vec<usize> {
        let mut keep = Vec::new();
        for idx in self.strata().into_values() {
            let mut by_acq: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for i in idx {
                by_acq.entry(self.acquisitions[i]).or_default().push(i);
            }
            let longest = by_acq.values().map(Vec::len).max().unwrap_or(0);
            let mut taken = 0;
            'outer: for pos in 0..longest {
                for packets in by_acq.values() {
                    if taken == n {
                        break 'outer;
                    }
                    if let Some(&i) = packets.get(pos) {
                        keep.push(i);
                        taken += 1;
                    }
                }
            }
        }
        keep.sort_unstable();
        keep
    }

    pub fn limit_packets_per_identity(&self, n: usize) -> FeatureSet {
        self.subset(&self.packets_per_identity_indices(n))
    }

    /// Same features with the labels randomly permuted across all packets.
    pub fn with_permuted_labels(&self, seed: u64) -> FeatureSet {
        let mut out = self.clone();
        out.labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        out
    }
}
