/// Outcome of one epoch's monitored metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Improved,
    Stalled,
    Stop,
}

/// Stops once the monitored metric fails to beat the previous best by more
/// than `min_delta` for `patience` consecutive epochs.
///
/// The best value tracks the running maximum even when a gain is too small
/// to count, so a slow drift of less than `min_delta` per epoch never resets
/// the counter.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub min_delta: f64,
    pub patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    since_improve: usize,
}

impl EarlyStopping {
    pub fn new(min_delta: f64, patience: usize) -> Self {
        Self {
            min_delta,
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: None,
            since_improve: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Epoch holding the highest metric seen so far.
    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn epochs_since_improve(&self) -> usize {
        self.since_improve
    }

    pub fn observe(&mut self, epoch: usize, metric: f64) -> Progress {
        let significant = metric > self.best + self.min_delta;
        if metric > self.best {
            self.best = metric;
            self.best_epoch = Some(epoch);
        }
        if significant {
            self.since_improve = 0;
            Progress::Improved
        } else {
            self.since_improve += 1;
            if self.since_improve >= self.patience {
                Progress::Stop
            } else {
                Progress::Stalled
            }
        }
    }
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self::new(0.0005, 15)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Epochs run before the stopper fires on `stream`.
    fn run(stream: impl Fn(usize) -> f64) -> usize {
        let mut es = EarlyStopping::default();
        for epoch in 0..10_000 {
            if es.observe(epoch, stream(epoch)) == Progress::Stop {
                return epoch + 1;
            }
        }
        unreachable!()
    }

    #[test]
    fn constant_stream_stops_after_fifteen_more() {
        assert_eq!(run(|_| 0.5), 16);
    }

    #[test]
    fn sub_threshold_drift_counts_as_stall() {
        assert_eq!(run(|e| 0.5 + 0.0004 * e as f64), 16);
    }

    #[test]
    fn real_gains_reset_the_counter() {
        // improves by 0.01 for the first 10 epochs, then flat
        assert_eq!(run(|e| 0.1 + 0.01 * e.min(9) as f64), 10 + 15);
    }

    #[test]
    fn best_epoch_tracks_maximum() {
        let mut es = EarlyStopping::default();
        for (e, m) in [0.2, 0.5, 0.4, 0.5002, 0.3].iter().enumerate() {
            es.observe(e, *m);
        }
        assert_eq!(es.best_epoch(), Some(3));
        assert_eq!(es.epochs_since_improve(), 3);
    }
}
