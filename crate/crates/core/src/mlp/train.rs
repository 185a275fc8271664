use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{adam_step, AdamState, Matrix, MlpError, MlpModel};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
    /// Stop once the epoch loss has not improved for this many epochs.
    pub patience: Option<usize>,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            seed: 42,
            shuffle: true,
            patience: None,
            learning_rate: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MlpError> {
        let bad = |m: &str| Err(MlpError::InvalidConfig(m.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be >= 2 for batch normalization");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a positive finite number");
        }
        if self.patience == Some(0) {
            return bad("patience must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample training loss over the epoch's batches.
    pub loss: f64,
    /// Fraction of samples whose batch-mode prediction matched the label.
    pub train_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Splits `0..n` (already permuted in `order`) into batches of `size`; a
/// trailing batch of one sample joins the previous batch.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        out.pop();
        let start = (out.len() - 1) * size;
        out.pop();
        out.push(&order[start..]);
    }
    out
}

/// Mini-batch Adam on mean cross-entropy. Deterministic in `(model, data, cfg)`.
pub fn train(
    model: &mut MlpModel,
    x: &Matrix,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainHistory, MlpError> {
    cfg.validate()?;
    if x.rows() == 0 {
        return Err(MlpError::EmptyDataset);
    }
    if x.rows() < 2 {
        return Err(MlpError::BatchTooSmall(x.rows()));
    }
    if labels.len() != x.rows() {
        return Err(MlpError::LabelCount {
            features: x.rows(),
            labels: labels.len(),
        });
    }
    if x.cols() != model.input_dim() {
        return Err(MlpError::DimensionMismatch {
            expected: model.input_dim(),
            found: x.cols(),
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= model.n_classes()) {
        return Err(MlpError::LabelOutOfRange {
            label,
            n_classes: model.n_classes(),
        });
    }
    if !x.as_slice().iter().all(|v| v.is_finite()) {
        return Err(MlpError::NonFinite("training features".into()));
    }
    if labels.iter().collect::<BTreeSet<_>>().len() < 2 {
        log::warn!("training data contains a single class");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(model, cfg.learning_rate);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut history = TrainHistory::default();
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in batches(&order, cfg.batch_size) {
            let xb = x.select_rows(batch);
            let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let lg = model.loss_and_grad(&xb, &yb)?;
            if !lg.loss.is_finite() {
                return Err(MlpError::NonFinite(format!("loss at epoch {epoch}")));
            }
            loss_sum += lg.loss * batch.len() as f64;
            let probs = &lg.cache.probabilities;
            for (r, &y) in yb.iter().enumerate() {
                if argmax(probs.row(r)) == y {
                    correct += 1;
                }
            }
            model.absorb_batch_stats(&lg.cache.batch_stats());
            adam_step(model, &mut state, &lg.gradients)?;
        }
        if !model.is_well_formed() {
            return Err(MlpError::NonFinite(format!("parameters after epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            loss: loss_sum / x.rows() as f64,
            train_acc: correct as f64 / x.rows() as f64,
        };
        log::debug!(
            "epoch {epoch}: loss {:.6} train_acc {:.4}",
            record.loss,
            record.train_acc
        );
        history.epochs.push(record);

        if let Some(patience) = cfg.patience {
            if record.loss < best {
                best = record.loss;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    history.stopped_early = true;
                    break;
                }
            }
        }
    }
    Ok(history)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Writes `epoch,loss,train_acc` rows.
pub fn write_history_csv<W: Write>(history: &TrainHistory, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "epoch,loss,train_acc")?;
    for r in &history.epochs {
        writeln!(out, "{},{},{}", r.epoch, r.loss, r.train_acc)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::MlpArchitecture;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_blobs(n: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = i % 2;
            let c = if y == 0 { -3.0 } else { 3.0 };
            for _ in 0..2 {
                let e: f64 = StandardNormal.sample(&mut rng);
                data.push(c + e);
            }
            labels.push(y);
        }
        (Matrix::from_vec(n, 2, data), labels)
    }

    #[test]
    fn batching_merges_a_lone_trailing_sample() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.len(), 2);
        assert_eq!(b[1], &[4, 5, 6, 7, 8]);
        let order: Vec<usize> = (0..10).collect();
        assert_eq!(batches(&order, 4).len(), 3);
        let order: Vec<usize> = (0..3).collect();
        assert_eq!(batches(&order, 64), vec![&[0, 1, 2][..]]);
    }

    #[test]
    fn separable_classes_are_learned() {
        let (x, y) = gaussian_blobs(200, 1);
        let mut m = MlpModel::init(MlpArchitecture::new(2, 2).with_hidden([16, 8]), 0).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 32,
            ..TrainConfig::default()
        };
        let h = train(&mut m, &x, &y, &cfg).unwrap();
        assert_eq!(h.epochs.len(), 50);
        let p = m.predict_proba(&x).unwrap();
        let acc = (0..x.rows()).filter(|&i| argmax(p.row(i)) == y[i]).count() as f64 / 200.0;
        assert!(acc >= 0.99, "accuracy {acc}");
        assert!(h.last().unwrap().train_acc >= 0.99);
        assert!(h.epochs[0].loss > h.last().unwrap().loss);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = gaussian_blobs(60, 2);
        let arch = MlpArchitecture::new(2, 2).with_hidden([8, 4]);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 16,
            seed: 7,
            ..TrainConfig::default()
        };
        let mut a = MlpModel::init(arch.clone(), 3).unwrap();
        let mut b = MlpModel::init(arch, 3).unwrap();
        let ha = train(&mut a, &x, &y, &cfg).unwrap();
        let hb = train(&mut b, &x, &y, &cfg).unwrap();
        assert_eq!(ha, hb);
        for (p, q) in a.parameters().iter().zip(b.parameters()) {
            assert!(p.iter().zip(q).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
        assert_eq!(a.steps, 5 * 4);
    }

    #[test]
    fn random_labels_stay_at_chance_on_held_out_data() {
        let classes = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = classes * 40;
        let x = Matrix::from_vec(n, 6, (0..n * 6).map(|_| rng.random_range(-1.0..1.0)).collect());
        let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        labels.shuffle(&mut rng);
        let n_train = n * 7 / 10;
        let train_idx: Vec<usize> = (0..n_train).collect();
        let val_idx: Vec<usize> = (n_train..n).collect();
        let mut m =
            MlpModel::init(MlpArchitecture::new(6, classes).with_hidden([32, 32]), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        };
        let yt: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
        train(&mut m, &x.select_rows(&train_idx), &yt, &cfg).unwrap();
        let p = m.predict_proba(&x.select_rows(&val_idx)).unwrap();
        let acc = val_idx
            .iter()
            .enumerate()
            .filter(|(r, &i)| argmax(p.row(*r)) == labels[i])
            .count() as f64
            / val_idx.len() as f64;
        assert!((acc - 1.0 / classes as f64).abs() <= 0.03, "accuracy {acc}");
    }

    #[test]
    fn early_stopping_respects_patience() {
        let (x, y) = gaussian_blobs(40, 3);
        let mut m = MlpModel::init(MlpArchitecture::new(2, 2).with_hidden([4, 4]), 0).unwrap();
        let cfg = TrainConfig {
            epochs: 500,
            batch_size: 40,
            shuffle: false,
            patience: Some(1),
            learning_rate: 0.5,
            ..TrainConfig::default()
        };
        let h = train(&mut m, &x, &y, &cfg).unwrap();
        assert!(h.stopped_early);
        assert!(h.epochs.len() < 500);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut m = MlpModel::init(MlpArchitecture::new(2, 2).with_hidden([4, 4]), 0).unwrap();
        let cfg = TrainConfig::default();
        let empty = Matrix::zeros(0, 2);
        assert!(matches!(train(&mut m, &empty, &[], &cfg), Err(MlpError::EmptyDataset)));
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert!(train(&mut m, &x, &[0], &cfg).is_err());
        assert!(train(&mut m, &x, &[0, 5], &cfg).is_err());
        let nan = Matrix::from_rows(&[[f64::NAN, 1.0], [1.0, 0.0]]);
        assert!(matches!(train(&mut m, &nan, &[0, 1], &cfg), Err(MlpError::NonFinite(_))));
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&mut m, &x, &[0, 1], &bad), Err(MlpError::InvalidConfig(_))));
        // A single class is allowed.
        let short = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        assert!(train(&mut m, &x, &[1, 1], &short).is_ok());
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainHistory {
            epochs: vec![EpochRecord {
                epoch: 1,
                loss: 0.5,
                train_acc: 0.25,
            }],
            stopped_early: false,
        };
        let mut buf = Vec::new();
        write_history_csv(&h, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,loss,train_acc\n1,0.5,0.25\n");
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0]), 0);
    }
}
