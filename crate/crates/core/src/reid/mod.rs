//! Stratified splits, probe scoring, ranks and CMC curves.

mod report;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::csi::Condition;
use crate::dataset::FeatureSet;
pub use crate::mlp::argmax;
use crate::mlp::{Matrix, MlpError, MlpModel};

pub use report::{write_cmc_csv, write_cmc_svg, write_report_csv};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("stratum (identity {identity}, {condition}) has {size} sample(s); at least 2 are needed")]
    StratumTooSmall {
        identity: u32,
        condition: &'static str,
        size: usize,
    },
    #[error("no packets to score")]
    EmptyProbe,
    #[error("no probes to evaluate")]
    NoProbes,
    #[error("no acquisition has {packets_per_probe} validation packets to form a probe")]
    InsufficientPackets { packets_per_probe: usize },
    #[error("packets_per_probe must be >= 1")]
    ZeroPacketsPerProbe,
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("score vectors disagree in length ({expected} vs {found})")]
    ScoreLength { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] MlpError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            seed: 42,
        }
    }
}

/// Stratified split by `(identity, condition)`. Each stratum of `n` packets
/// sends `round(n · train_fraction)` packets, clamped to `[1, n − 1]`, to the
/// training side, chosen by a seeded shuffle. Both index lists are in log
/// order.
pub fn split(data: &FeatureSet, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(EvalError::InvalidFraction(spec.train_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for ((identity, condition), mut idx) in data.strata() {
        let n = idx.len();
        if n < 2 {
            return Err(EvalError::StratumTooSmall {
                identity,
                condition: condition.name(),
                size: n,
            });
        }
        let k = ((n as f64 * spec.train_fraction).round() as usize).clamp(1, n - 1);
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..k]);
        val.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Mean of the per-packet probability rows.
    #[default]
    MeanProb,
    /// Histogram of per-packet arg-max votes, normalized to sum 1.
    MajorityVote,
}

impl Aggregation {
    pub fn name(self) -> &'static str {
        match self {
            Aggregation::MeanProb => "mean",
            Aggregation::MajorityVote => "vote",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "mean" | "mean-prob" => Some(Aggregation::MeanProb),
            "vote" | "majority" | "majority-vote" => Some(Aggregation::MajorityVote),
            _ => None,
        }
    }
}

/// Combines per-packet probability rows into one class-score vector.
pub fn aggregate(probs: &Matrix, aggregation: Aggregation) -> Result<Vec<f64>, EvalError> {
    let n = probs.rows();
    if n == 0 {
        return Err(EvalError::EmptyProbe);
    }
    let mut out = vec![0.0; probs.cols()];
    match aggregation {
        Aggregation::MeanProb => {
            for i in 0..n {
                for (o, p) in out.iter_mut().zip(probs.row(i)) {
                    *o += p;
                }
            }
        }
        Aggregation::MajorityVote => {
            for i in 0..n {
                out[argmax(probs.row(i))] += 1.0;
            }
        }
    }
    out.iter_mut().for_each(|o| *o /= n as f64);
    Ok(out)
}

/// Class scores of a probe made of the feature rows in `packets`.
pub fn probe_score(
    model: &MlpModel,
    packets: &Matrix,
    aggregation: Aggregation,
) -> Result<Vec<f64>, EvalError> {
    if packets.rows() == 0 {
        return Err(EvalError::EmptyProbe);
    }
    aggregate(&model.predict_proba(packets)?, aggregation)
}

/// `1 + #{c : s_c > s_true} + #{c < true : s_c = s_true}`.
pub fn rank_of_true(scores: &[f64], true_label: usize) -> Result<usize, EvalError> {
    let Some(&t) = scores.get(true_label) else {
        return Err(EvalError::LabelOutOfRange {
            label: true_label,
            n_classes: scores.len(),
        });
    };
    let greater = scores.iter().filter(|&&s| s > t).count();
    let tied_before = scores[..true_label].iter().filter(|&&s| s == t).count();
    Ok(1 + greater + tied_before)
}

/// Ranks whose accuracy is reported separately.
pub const REPORTED_RANKS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `cmc[k]` is the fraction of probes whose true class ranks within `k + 1`.
    pub cmc: Vec<f64>,
    pub rank_k: BTreeMap<usize, f64>,
    /// `confusion[true][predicted]` with rank-1 predictions.
    pub confusion: Vec<Vec<usize>>,
    pub packets_per_probe: usize,
    pub aggregation: Aggregation,
    pub n_probes: usize,
    /// Per-packet accuracy of the validation set, when known.
    pub val_accuracy: Option<f64>,
}

impl EvalReport {
    pub fn n_classes(&self) -> usize {
        self.cmc.len()
    }

    /// `cmc[k − 1]`; ranks beyond the number of classes saturate.
    pub fn rank(&self, k: usize) -> f64 {
        assert!(k >= 1, "ranks start at 1");
        self.cmc[(k - 1).min(self.cmc.len() - 1)]
    }

    /// Smallest rank whose match rate is 1, if any.
    pub fn saturation_rank(&self) -> Option<usize> {
        self.cmc.iter().position(|&v| v >= 1.0).map(|i| i + 1)
    }
}

/// CMC curve, rank-k accuracies and rank-1 confusion over `(scores, true label)`
/// probes.
pub fn cmc_curve(probes: &[(Vec<f64>, usize)]) -> Result<EvalReport, EvalError> {
    let Some(first) = probes.first() else {
        return Err(EvalError::NoProbes);
    };
    let c = first.0.len();
    let mut hits = vec![0usize; c];
    let mut confusion = vec![vec![0usize; c]; c];
    for (scores, label) in probes {
        if scores.len() != c {
            return Err(EvalError::ScoreLength {
                expected: c,
                found: scores.len(),
            });
        }
        let r = rank_of_true(scores, *label)?;
        hits[r - 1] += 1;
        confusion[*label][argmax(scores)] += 1;
    }
    let n = probes.len() as f64;
    let mut cumulative = 0usize;
    let cmc: Vec<f64> = hits
        .iter()
        .map(|h| {
            cumulative += h;
            cumulative as f64 / n
        })
        .collect();
    let mut report = EvalReport {
        cmc,
        rank_k: BTreeMap::new(),
        confusion,
        packets_per_probe: 1,
        aggregation: Aggregation::MeanProb,
        n_probes: probes.len(),
        val_accuracy: None,
    };
    for k in REPORTED_RANKS {
        let v = report.rank(k);
        report.rank_k.insert(k, v);
    }
    Ok(report)
}

/// Groups consecutive packets of one acquisition into probes of
/// `packets_per_probe`; a trailing partial group is dropped.
pub fn form_probes(data: &FeatureSet, packets_per_probe: usize) -> Vec<Vec<usize>> {
    let mut by_acq: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..data.len() {
        by_acq.entry(data.acquisitions[i]).or_default().push(i);
    }
    by_acq
        .values()
        .flat_map(|idx| idx.chunks_exact(packets_per_probe).map(<[usize]>::to_vec))
        .collect()
}

/// Scores every probe of `validation` and summarizes ranks, alongside the
/// per-packet accuracy of the whole validation set.
pub fn evaluate(
    model: &MlpModel,
    validation: &FeatureSet,
    packets_per_probe: usize,
    aggregation: Aggregation,
) -> Result<EvalReport, EvalError> {
    if packets_per_probe == 0 {
        return Err(EvalError::ZeroPacketsPerProbe);
    }
    let n_classes = model.n_classes();
    if let Some(&label) = validation.labels.iter().find(|&&l| l >= n_classes) {
        return Err(EvalError::LabelOutOfRange { label, n_classes });
    }
    let probs = model.predict_proba(&validation.x)?;
    let correct = (0..validation.len())
        .filter(|&i| argmax(probs.row(i)) == validation.labels[i])
        .count();

    let groups = form_probes(validation, packets_per_probe);
    if groups.is_empty() {
        return Err(EvalError::InsufficientPackets { packets_per_probe });
    }
    let probes = groups
        .iter()
        .map(|g| Ok((aggregate(&probs.select_rows(g), aggregation)?, validation.labels[g[0]])))
        .collect::<Result<Vec<_>, EvalError>>()?;
    let mut report = cmc_curve(&probes)?;
    report.packets_per_probe = packets_per_probe;
    report.aggregation = aggregation;
    report.val_accuracy = Some(correct as f64 / validation.len() as f64);
    Ok(report)
}

/// Per-condition breakdown helper: the subset of `data` recorded under `c`.
pub fn condition_subset(data: &FeatureSet, c: Condition) -> FeatureSet {
    let idx: Vec<usize> = (0..data.len()).filter(|&i| data.conditions[i] == c).collect();
    data.subset(&idx)
}
