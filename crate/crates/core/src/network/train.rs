use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{data_grad, loss, Batch, ResidualOperator};
use super::{AdamState, LossWeights, MultiscaleNet};
use crate::error::{Error, Result};
use crate::patching::{EncodingKind, PatchGeometry, PatchPair, TrainingSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub layers: usize,
    pub atoms: usize,
    /// Extra scales `M`; 0 trains a single network.
    pub scales: usize,
    pub weights: LossWeights,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Total epoch budget, shared by all phases of progressive training.
    pub max_epochs: usize,
    /// Relative epoch-over-epoch improvement below which the rate is halved.
    pub plateau_tol: f64,
    pub max_halvings: usize,
    pub val_fraction: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layers: 6,
            atoms: 400,
            scales: 0,
            weights: LossWeights::default(),
            learning_rate: 1e-4,
            batch_size: 4096,
            max_epochs: 100,
            plateau_tol: 1e-3,
            max_halvings: 3,
            val_fraction: 0.1,
            init_scale: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.layers == 0 || self.atoms == 0 {
            return bad("layers and atoms must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        if !(self.init_scale >= 0.0) || !(self.plateau_tol >= 0.0) {
            return bad("init_scale and plateau_tol must be non-negative");
        }
        Ok(())
    }
}

/// One line of the loss history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    /// Completed epochs; 0 is the state before any update.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Number of layers being trained.
    pub phase: usize,
}

/// Losses around one layer insertion of progressive training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InsertionRecord {
    /// Layer count after the insertion.
    pub layer: usize,
    pub loss_before: f64,
    pub loss_at_insertion: f64,
    pub loss_converged: f64,
}

impl InsertionRecord {
    /// The loss jumped at the insertion and came back to at most its
    /// previous level.
    pub fn recovered(&self) -> bool {
        self.loss_at_insertion > self.loss_before && self.loss_converged <= self.loss_before
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Parameters with the lowest validation loss (of the last phase).
    pub net: MultiscaleNet,
    pub history: Vec<HistoryRow>,
    pub insertions: Vec<InsertionRecord>,
    pub best_val: f64,
}

impl TrainOutput {
    pub fn final_train_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.train_loss)
    }
}

pub fn write_history(path: &Path, history: &[HistoryRow]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_loss,phase\n");
    for r in history {
        out.push_str(&format!(
            "{},{:e},{:e},{}\n",
            r.epoch, r.train_loss, r.val_loss, r.phase
        ));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

/// Training and validation indices. Phase-space sets validate on the last
/// sequence; other modes use a seeded random split.
pub fn split_indices(
    pairs: &[PatchPair],
    kind: EncodingKind,
    cfg: &TrainConfig,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if pairs.is_empty() {
        return Err(Error::EmptySplit("training"));
    }
    let (train, val): (Vec<usize>, Vec<usize>) = match kind {
        EncodingKind::PhaseSpace => {
            let last = pairs.iter().map(|p| p.sequence).max().unwrap_or(0);
            (0..pairs.len()).partition(|&i| pairs[i].sequence != last)
        }
        _ => {
            let mut idx: Vec<usize> = (0..pairs.len()).collect();
            idx.shuffle(&mut stream(cfg.seed, 3));
            let n_val = (cfg.val_fraction * pairs.len() as f64).ceil() as usize;
            let (v, t) = idx.split_at(n_val.min(pairs.len()));
            let (mut t, mut v) = (t.to_vec(), v.to_vec());
            t.sort_unstable();
            v.sort_unstable();
            (t, v)
        }
    };
    if train.is_empty() {
        return Err(Error::EmptySplit("training"));
    }
    if val.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    Ok((train, val))
}

fn split_set(set: &TrainingSet, cfg: &TrainConfig) -> Result<(Batch, Batch)> {
    let (train, val) = split_indices(&set.pairs, set.manifest.mode.kind, cfg)?;
    let all = Batch::from_pairs(&set.pairs)?;
    Ok((all.select(&train), all.select(&val)))
}

pub fn train_full(set: &TrainingSet, cfg: &TrainConfig) -> Result<TrainOutput> {
    let (train, val) = split_set(set, cfg)?;
    fit(&train, &val, &set.manifest.geometry, cfg, false)
}

pub fn train_progressive(set: &TrainingSet, cfg: &TrainConfig) -> Result<TrainOutput> {
    let (train, val) = split_set(set, cfg)?;
    fit(&train, &val, &set.manifest.geometry, cfg, true)
}

struct Trainer<'a> {
    train: &'a Batch,
    val: &'a Batch,
    op: ResidualOperator,
    cfg: &'a TrainConfig,
    shuffle: ChaCha8Rng,
    history: Vec<HistoryRow>,
    epoch: usize,
}

impl Trainer<'_> {
    /// Mean data loss per patch plus the regularizer spread over one
    /// minibatch; the same objective the updates descend.
    fn eval(&self, batch: &Batch, net: &MultiscaleNet) -> Result<f64> {
        let v = loss(batch, net, &self.op)?;
        let w = self.op.weights();
        Ok(v.data(w) / batch.len() as f64
            + w.regularization * v.params_sq / self.cfg.batch_size as f64)
    }

    fn record(&mut self, net: &MultiscaleNet) -> Result<HistoryRow> {
        let row = HistoryRow {
            epoch: self.epoch,
            train_loss: self.eval(self.train, net)?,
            val_loss: self.eval(self.val, net)?,
            phase: net.layers(),
        };
        log::debug!(
            "epoch {} phase {}: train {:e} val {:e}",
            row.epoch,
            row.phase,
            row.train_loss,
            row.val_loss
        );
        self.history.push(row);
        Ok(row)
    }

    fn run_epoch(&mut self, net: &mut MultiscaleNet, adam: &mut AdamState) -> Result<()> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut self.shuffle);
        let reg = 2.0 * self.op.weights().regularization / self.cfg.batch_size as f64;
        for rows in order.chunks(self.cfg.batch_size) {
            let batch = self.train.select(rows);
            let (mut g, _) = data_grad(&batch, net, &self.op)?;
            for s in g.slices_mut() {
                s.iter_mut().for_each(|v| *v /= rows.len() as f64);
            }
            g.add_scaled(reg, net);
            adam.step(net, &g);
        }
        self.epoch += 1;
        Ok(())
    }

    /// Trains until the rate schedule ends or `budget` epochs pass. Returns
    /// the best-validation parameters and their validation loss.
    fn phase(
        &mut self,
        net: &mut MultiscaleNet,
        budget: usize,
        start: HistoryRow,
    ) -> Result<(MultiscaleNet, f64)> {
        let mut adam = AdamState::for_net(net, self.cfg.learning_rate);
        let mut best = (net.clone(), start.val_loss);
        let mut prev = start.train_loss;
        let mut halvings = 0;
        for _ in 0..budget {
            self.run_epoch(net, &mut adam)?;
            let row = self.record(net)?;
            if !row.train_loss.is_finite() {
                return Err(Error::NonFinite { index: row.epoch });
            }
            if row.val_loss < best.1 {
                best = (net.clone(), row.val_loss);
            }
            if (prev - row.train_loss) < self.cfg.plateau_tol * prev.abs() {
                if halvings == self.cfg.max_halvings {
                    break;
                }
                halvings += 1;
                adam.rate *= 0.5;
            }
            prev = row.train_loss;
        }
        Ok(best)
    }
}

/// Minibatch Adam on explicit training and validation batches. With
/// `progressive`, starts from one layer and inserts one layer per phase.
pub fn fit(
    train: &Batch,
    val: &Batch,
    geometry: &PatchGeometry,
    cfg: &TrainConfig,
    progressive: bool,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySplit("training"));
    }
    if val.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    let op = ResidualOperator::new(geometry, cfg.weights)?;
    let start_layers = if progressive { 1 } else { cfg.layers };
    let mut net = MultiscaleNet::seeded(
        cfg.scales,
        start_layers,
        cfg.atoms,
        train.inputs.ncols(),
        train.targets.ncols(),
        cfg.init_scale,
        cfg.seed,
    );
    let mut t = Trainer {
        train,
        val,
        op,
        cfg,
        shuffle: stream(cfg.seed, 2),
        history: Vec::new(),
        epoch: 0,
    };
    let mut insert_rng = stream(cfg.seed, 1);
    let phases = cfg.layers - start_layers + 1;
    let mut insertions = Vec::new();
    let mut row = t.record(&net)?;
    let (mut best, mut best_val) = (net.clone(), row.val_loss);
    for phase in 0..phases {
        if phase > 0 {
            let before = t.history.last().expect("recorded").train_loss;
            for p in &mut net.scales {
                p.push_layer(cfg.init_scale, &mut insert_rng);
            }
            row = t.record(&net)?;
            insertions.push(InsertionRecord {
                layer: net.layers(),
                loss_before: before,
                loss_at_insertion: row.train_loss,
                loss_converged: f64::NAN,
            });
        }
        let budget = (cfg.max_epochs - t.epoch) / (phases - phase);
        (best, best_val) = t.phase(&mut net, budget, row)?;
        if let Some(ins) = insertions.last_mut() {
            ins.loss_converged = t.history.last().expect("recorded").train_loss;
        }
    }
    Ok(TrainOutput {
        net: best,
        history: t.history,
        insertions,
        best_val,
    })
}
