/// Halve-on-plateau learning-rate schedule. An epoch is "bad" unless the
/// monitored value beats the best so far by more than `threshold`; after
/// `patience` bad epochs the rate is multiplied by `factor` and the count
/// restarts.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    threshold: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, threshold: f64) -> Self {
        PlateauScheduler {
            lr,
            factor,
            patience,
            threshold,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Record one epoch's monitored value (lower is better). Returns true
    /// when the rate was reduced.
    pub fn step(&mut self, value: f64) -> bool {
        if value < self.best - self.threshold {
            self.best = value;
            self.bad_epochs = 0;
            return false;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.lr *= self.factor;
            self.bad_epochs = 0;
            return true;
        }
        false
    }
}

/// Stop after `patience` consecutive epochs without improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    threshold: f64,
    best: f64,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, threshold: f64) -> Self {
        EarlyStopping {
            patience,
            threshold,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    pub fn improved(&self, value: f64) -> bool {
        value < self.best - self.threshold
    }

    /// Returns true when training should stop.
    pub fn step(&mut self, value: f64) -> bool {
        if self.improved(value) {
            self.best = value;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        self.bad_epochs >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}
