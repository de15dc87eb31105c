use super::PlateauConfig;

/// Reduce-on-plateau learning-rate schedule driven by validation accuracy.
/// Any strict increase counts as improvement; after a reduction the
/// patience counter starts over while the best value is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    cfg: PlateauConfig,
    lr0: f64,
    reductions: i32,
    best: Option<f64>,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr0: f64, cfg: PlateauConfig) -> Self {
        Self {
            cfg,
            lr0,
            reductions: 0,
            best: None,
            bad_epochs: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr0 * self.cfg.factor.powi(self.reductions)
    }

    pub fn reductions(&self) -> i32 {
        self.reductions
    }

    /// Records one epoch's metric and returns the rate for the next epoch.
    pub fn step(&mut self, metric: f64) -> f64 {
        if self.best.is_none_or(|b| metric > b) {
            self.best = Some(metric);
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.cfg.patience_epochs {
                self.reductions += 1;
                self.bad_epochs = 0;
            }
        }
        self.lr()
    }
}

/// Rate to use after the last entry of `history`, given the rate in force
/// while it was recorded. Replays the whole history, so a reduction happens
/// exactly on the epochs where the stateful scheduler would reduce.
pub fn plateau_scheduler(history: &[f64], current_lr: f64, cfg: PlateauConfig) -> f64 {
    let mut s = PlateauScheduler::new(1.0, cfg);
    let mut reduced_now = false;
    for &m in history {
        let before = s.reductions();
        s.step(m);
        reduced_now = s.reductions() > before;
    }
    if reduced_now {
        current_lr * cfg.factor
    } else {
        current_lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CFG: PlateauConfig = PlateauConfig {
        factor: 0.1,
        patience_epochs: 10,
    };

    #[test]
    fn improving_history_keeps_lr() {
        let history: Vec<f64> = (0..30).map(|i| i as f64 / 30.0).collect();
        for n in 1..=history.len() {
            assert_eq!(plateau_scheduler(&history[..n], 1e-4, CFG), 1e-4);
        }
    }

    #[test]
    fn best_at_three_reduces_at_thirteen() {
        let mut history = vec![0.1, 0.2, 0.9];
        history.extend(std::iter::repeat_n(0.5, 10));
        assert_eq!(history.len(), 13);
        assert_eq!(plateau_scheduler(&history[..12], 1e-4, CFG), 1e-4);
        let lr = plateau_scheduler(&history, 1e-4, CFG);
        assert!((lr - 1e-5).abs() < 1e-18);
        history.push(0.9);
        // Equal to the best is not an improvement, but the count restarted.
        assert_eq!(plateau_scheduler(&history, 1e-5, CFG), 1e-5);
    }

    #[test]
    fn two_plateaus_give_two_decades() {
        let mut s = PlateauScheduler::new(1e-4, CFG);
        s.step(0.5);
        for _ in 0..20 {
            s.step(0.4);
        }
        assert_eq!(s.reductions(), 2);
        assert!((s.lr() - 1e-6).abs() < 1e-20);
    }

    proptest! {
        #[test]
        fn lr_is_a_decade_power_of_lr0(history in prop::collection::vec(0.0f64..1.0, 1..80)) {
            let mut s = PlateauScheduler::new(1e-4, CFG);
            let mut prev = s.lr();
            for m in history {
                let lr = s.step(m);
                prop_assert!(lr <= prev);
                let k = (1e-4 / lr).log10().round() as i32;
                prop_assert!(k >= 0);
                prop_assert!((lr - 1e-4 * 0.1f64.powi(k)).abs() <= 1e-4 * 0.1f64.powi(k) * 1e-12);
                prev = lr;
            }
        }
    }
}
