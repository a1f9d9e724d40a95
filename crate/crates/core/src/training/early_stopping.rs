/// Outcome of observing one epoch's validation score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Improved,
    NoImprovement { streak: usize },
    Stop,
}

/// Tracks the running best validation RMSE and the streak of epochs that
/// failed to beat it.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    streak: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience: patience.max(1),
            best: None,
            streak: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_rmse: f64) -> Decision {
        match self.best {
            Some((_, best)) if !(val_rmse < best) => {
                self.streak += 1;
                if self.streak >= self.patience {
                    Decision::Stop
                } else {
                    Decision::NoImprovement { streak: self.streak }
                }
            }
            _ => {
                self.best = Some((epoch, val_rmse));
                self.streak = 0;
                Decision::Improved
            }
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|b| b.0)
    }

    pub fn best_value(&self) -> Option<f64> {
        self.best.map(|b| b.1)
    }

    pub fn streak(&self) -> usize {
        self.streak
    }
}
