use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
}

impl TrainingHistory {
    /// Tab-separated `epoch train_loss val_loss val_acc` lines followed by
    /// `stopped=<e> best=<e>`.
    pub fn render_log(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{:.4}",
                e.epoch, e.train_loss, e.val_loss, e.val_accuracy
            )
            .unwrap();
        }
        writeln!(out, "stopped={} best={}", self.stopped_epoch, self.best_epoch).unwrap();
        out
    }

    /// Reads back a log written by [`render_log`](Self::render_log). Losses
    /// keep only the logged precision.
    pub fn parse_log(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::format("training log", format!("bad line {line:?}"));
        let mut epochs = Vec::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("stopped=") {
                let (stopped, best) = rest.split_once(" best=").ok_or_else(|| bad(line))?;
                return Ok(Self {
                    epochs,
                    stopped_epoch: stopped.parse().map_err(|_| bad(line))?,
                    best_epoch: best.parse().map_err(|_| bad(line))?,
                });
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad(line));
            }
            epochs.push(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad(line))?,
                train_loss: f[1].parse().map_err(|_| bad(line))?,
                val_loss: f[2].parse().map_err(|_| bad(line))?,
                val_accuracy: f[3].parse().map_err(|_| bad(line))?,
            });
        }
        Err(Error::format("training log", "missing stopped= line"))
    }
}

/// Patience-based stopping on validation loss with strict improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    epoch: usize,
    best: Option<(usize, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            epoch: 0,
            best: None,
        }
    }

    /// Records the next epoch's validation loss. NaN never counts as an
    /// improvement.
    pub fn observe(&mut self, val_loss: f64) -> Verdict {
        self.epoch += 1;
        let improved = match self.best {
            None => !val_loss.is_nan(),
            Some((_, best)) => val_loss < best,
        };
        if improved {
            self.best = Some((self.epoch, val_loss));
            return Verdict::Improved;
        }
        let since = self.epoch - self.best.map_or(0, |(e, _)| e);
        if since >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// 1-based epoch of the lowest loss so far; 0 if none was finite.
    pub fn best_epoch(&self) -> usize {
        self.best.map_or(0, |(e, _)| e)
    }
}

/// Replays a loss sequence through [`EarlyStopping`], returning
/// `(stopped_epoch, best_epoch)`.
pub fn early_stopping_outcome(losses: &[f64], patience: usize, max_epochs: usize) -> (usize, usize) {
    let mut stopper = EarlyStopping::new(patience);
    for &loss in losses.iter().take(max_epochs) {
        if stopper.observe(loss) == Verdict::Stop {
            break;
        }
    }
    (stopper.epoch(), stopper.best_epoch())
}
