//! Mini-batch training with early stopping, and the two-stage
//! pretrain/fine-tune protocol.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{bce_logit_grad, loss_bce};
use super::model::ModelParams;
use super::optim::{OptimizerKind, OptimizerState};
use crate::error::{Error, Result};
use crate::metrics::{threshold_metrics, ScoredSet};
use crate::sampler::balanced_epoch;
use crate::tensor::Tensor;

/// Single-channel images with binary labels, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
    labels: Vec<bool>,
}

impl Dataset {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if pixels.len() != height * width * labels.len() {
            return Err(Error::invalid(format!(
                "{} pixels do not make {} images of {height}x{width}",
                pixels.len(),
                labels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
            labels,
        })
    }

    /// Builds a dataset from `[H, W]` tensors.
    pub fn from_images<'a, I>(images: I, labels: Vec<bool>) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Tensor>,
    {
        let mut pixels = Vec::new();
        let mut dims = None;
        let mut count = 0;
        for t in images {
            let &[h, w] = t.shape() else {
                return Err(Error::invalid(format!("expected a 2D image, got shape {:?}", t.shape())));
            };
            if *dims.get_or_insert((h, w)) != (h, w) {
                return Err(Error::invalid("images differ in size"));
            }
            pixels.extend_from_slice(t.data());
            count += 1;
        }
        if count != labels.len() {
            return Err(Error::invalid(format!("{count} images but {} labels", labels.len())));
        }
        let (h, w) = dims.unwrap_or((0, 0));
        Self::new(h, w, pixels, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn image(&self, i: usize) -> Tensor {
        let n = self.height * self.width;
        Tensor::new(vec![self.height, self.width], self.pixels[i * n..(i + 1) * n].to_vec()).expect("sized")
    }

    /// `[B, H, W, 1]` batch of the given rows.
    pub fn batch(&self, indices: &[usize]) -> Tensor {
        let n = self.height * self.width;
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(&self.pixels[i * n..(i + 1) * n]);
        }
        Tensor::new(vec![indices.len(), self.height, self.width, 1], data).expect("sized")
    }

    /// Every image as one `[N, H, W, 1]` batch.
    pub fn as_batch(&self) -> Tensor {
        Tensor::new(vec![self.len(), self.height, self.width, 1], self.pixels.clone()).expect("sized")
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            height: self.height,
            width: self.width,
            pixels: self.batch(indices).into_data(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.is_empty() {
            return Ok(other.clone());
        }
        if other.is_empty() {
            return Ok(self.clone());
        }
        if self.dims() != other.dims() {
            return Err(Error::invalid("cannot concatenate datasets of different image sizes"));
        }
        let mut out = self.clone();
        out.pixels.extend_from_slice(&other.pixels);
        out.labels.extend_from_slice(&other.labels);
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCriterion {
    /// Keep the epoch with the lowest validation loss.
    ValLossMin,
    /// Keep the epoch with the highest validation F1 at threshold 0.5.
    ValF1Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub optimizer: OptimizerKind,
    pub criterion: StopCriterion,
    /// Epochs without improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Positive-class weight in the loss; `None` means 1 for plain training
    /// and negatives/positives for fine-tuning.
    pub pos_weight: Option<f64>,
    /// Undersample the majority class afresh every epoch.
    pub balanced: bool,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::adadelta(),
            criterion: StopCriterion::ValLossMin,
            patience: 50,
            max_epochs: 2000,
            batch_size: 32,
            pos_weight: None,
            balanced: true,
        }
    }
}

impl Schedule {
    /// Fine-tuning defaults: Adam, F1-based selection with patience 400.
    pub fn finetune() -> Self {
        Self {
            optimizer: OptimizerKind::adam(),
            criterion: StopCriterion::ValF1Max,
            patience: 400,
            balanced: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if let Some(w) = self.pos_weight {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("pos_weight must be finite and >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
    pub selected: bool,
}

pub const HISTORY_CSV_HEADER: &str = "epoch,train_loss,val_loss,val_f1,selected";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn selected_epoch(&self) -> Option<usize> {
        self.epochs.iter().find(|r| r.selected).map(|r| r.epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_CSV_HEADER);
        out.push('\n');
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch,
                r.train_loss,
                r.val_loss,
                r.val_f1,
                u8::from(r.selected)
            );
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(HISTORY_CSV_HEADER) {
            return Err(Error::format("history", 0, "missing history header"));
        }
        let epochs = lines
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, line)| {
                let bad = || Error::format("history", (i + 1) as u64, format!("bad row `{line}`"));
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 5 {
                    return Err(bad());
                }
                Ok(EpochRecord {
                    epoch: f[0].parse().map_err(|_| bad())?,
                    train_loss: f[1].parse().map_err(|_| bad())?,
                    val_loss: f[2].parse().map_err(|_| bad())?,
                    val_f1: f[3].parse().map_err(|_| bad())?,
                    selected: f[4] == "1",
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { epochs })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the selected epoch (the initial ones if no epoch ran).
    pub params: ModelParams,
    pub history: History,
}

/// Validation loss and F1 at threshold 0.5.
pub fn validation_scores(params: &ModelParams, val: &Dataset, pos_weight: f64) -> Result<(f64, f64)> {
    let probs = params.predict(&val.as_batch())?;
    let loss = loss_bce(&probs, val.labels(), pos_weight)?;
    let set = ScoredSet::new(probs, val.labels().to_vec())?;
    Ok((loss, threshold_metrics(&set, 0.5).f1))
}

/// Trains from `init`, keeping the epoch that best satisfies the schedule's
/// criterion. Epoch order comes from `rng`.
pub fn train<R: Rng + ?Sized>(
    init: ModelParams,
    train_set: &Dataset,
    val_set: &Dataset,
    schedule: &Schedule,
    rng: &mut R,
) -> Result<TrainOutcome> {
    schedule.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid(format!(
            "training needs non-empty splits ({} train, {} validation)",
            train_set.len(),
            val_set.len()
        )));
    }
    let pos_weight = schedule.pos_weight.unwrap_or(1.0);
    let mut params = init.clone();
    let mut best = init;
    let mut best_score = f64::INFINITY;
    let mut best_epoch = None;
    let mut state = OptimizerState::new(schedule.optimizer, &params);
    let mut history = History::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=schedule.max_epochs {
        if schedule.balanced {
            order = balanced_epoch(rng, train_set.labels());
        } else {
            order.shuffle(rng);
        }
        let mut loss_sum = 0.0;
        for chunk in order.chunks(schedule.batch_size) {
            let batch = train_set.batch(chunk);
            let labels: Vec<bool> = chunk.iter().map(|&i| train_set.labels()[i]).collect();
            let (prob, mut cache) = params.forward(&batch)?;
            loss_sum += loss_bce(prob.data(), &labels, pos_weight)? * chunk.len() as f64;
            let dlogits = bce_logit_grad(prob.data(), &labels, pos_weight)?;
            let grads = params.backward(&mut cache, &dlogits)?;
            state.step(&mut params, &grads)?;
        }
        let train_loss = loss_sum / order.len().max(1) as f64;
        let (val_loss, val_f1) = validation_scores(&params, val_set, pos_weight)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "loss diverged at epoch {epoch} (train {train_loss}, validation {val_loss})"
            )));
        }
        let score = match schedule.criterion {
            StopCriterion::ValLossMin => val_loss,
            StopCriterion::ValF1Max => -val_f1,
        };
        if score < best_score {
            best_score = score;
            best_epoch = Some(epoch);
            best = params.clone();
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_f1,
            selected: false,
        });
        if best_epoch.is_some_and(|b| epoch - b >= schedule.patience) {
            break;
        }
    }
    if let Some(b) = best_epoch {
        history.epochs[b - 1].selected = true;
    }
    Ok(TrainOutcome { params: best, history })
}

/// Strongly labelled training and validation data.
#[derive(Debug, Clone)]
pub struct StrongSet {
    pub train: Dataset,
    pub val: Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoStageSchedule {
    pub pretrain: Schedule,
    pub finetune: Schedule,
    /// Negatives per positive in the fine-tuning sets.
    pub negative_ratio: usize,
}

impl Default for TwoStageSchedule {
    fn default() -> Self {
        Self {
            pretrain: Schedule::default(),
            finetune: Schedule::finetune(),
            negative_ratio: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoStageOutcome {
    pub pretrained: TrainOutcome,
    /// `None` when there were no weak positives to fine-tune on.
    pub finetuned: Option<TrainOutcome>,
}

impl TwoStageOutcome {
    pub fn params(&self) -> &ModelParams {
        match &self.finetuned {
            Some(f) => &f.params,
            None => &self.pretrained.params,
        }
    }
}

/// Keeps every positive and at most `ratio` negatives per positive, chosen
/// without replacement. Positives come first, then negatives.
pub fn with_negative_ratio<R: Rng + ?Sized>(rng: &mut R, data: &Dataset, ratio: usize) -> Dataset {
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| data.labels()[i]);
    neg.shuffle(rng);
    neg.truncate(pos.len() * ratio);
    neg.sort_unstable();
    pos.extend(neg);
    data.subset(&pos)
}

/// Stage 1 trains on the strong set with balanced classes. Stage 2 continues
/// from the stage-1 parameters on strong plus weak positives with
/// `negative_ratio` negatives per positive and a class-weighted loss.
pub fn pretrain_then_finetune<R: Rng + ?Sized>(
    init: ModelParams,
    strong: &StrongSet,
    weak: &Dataset,
    schedule: &TwoStageSchedule,
    rng: &mut R,
) -> Result<TwoStageOutcome> {
    if strong.train.positives() == 0 || strong.val.positives() == 0 {
        return Err(Error::invalid("strong set needs positives in both training and validation"));
    }
    let stage1_val = with_negative_ratio(rng, &strong.val, 1);
    let stage1 = Schedule {
        balanced: true,
        ..schedule.pretrain.clone()
    };
    let pretrained = train(init, &strong.train, &stage1_val, &stage1, rng)?;
    let finetuned = finetune(pretrained.params.clone(), strong, weak, schedule, rng)?;
    Ok(TwoStageOutcome { pretrained, finetuned })
}

/// Stage 2 alone, starting from `start`. Returns `None` when `weak` holds
/// no positives.
pub fn finetune<R: Rng + ?Sized>(
    start: ModelParams,
    strong: &StrongSet,
    weak: &Dataset,
    schedule: &TwoStageSchedule,
    rng: &mut R,
) -> Result<Option<TrainOutcome>> {
    if weak.positives() == 0 {
        return Ok(None);
    }
    let pool = strong.train.concat(weak)?;
    let ft_train = with_negative_ratio(rng, &pool, schedule.negative_ratio);
    let ft_val = with_negative_ratio(rng, &strong.val, schedule.negative_ratio);
    let stage2 = weighted_schedule(&schedule.finetune, &ft_train);
    train(start, &ft_train, &ft_val, &stage2, rng).map(Some)
}

/// `schedule` with an unset positive weight replaced by the
/// negative-to-positive ratio of `data`.
pub fn weighted_schedule(schedule: &Schedule, data: &Dataset) -> Schedule {
    let pos = data.positives() as f64;
    let neg = (data.len() - data.positives()) as f64;
    Schedule {
        pos_weight: Some(schedule.pos_weight.unwrap_or(if neg > 0.0 && pos > 0.0 { neg / pos } else { 1.0 })),
        ..schedule.clone()
    }
}
