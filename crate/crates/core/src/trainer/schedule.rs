/// Per-update exponential decay within a stage: `stage_lr · (1 − decay)^t`.
pub fn effective_lr(stage_lr: f64, decay: f64, t: u64) -> f64 {
    if t == 0 {
        return stage_lr;
    }
    stage_lr * (1.0 - decay).powf(t as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlateauAction {
    Continue,
    /// Restore the best weights and move to the next stage.
    StepLr,
    /// Restore the best weights and finish.
    Stop,
}

/// Decision for a dev-UAR history of the current stage. The best value is
/// the first maximum; its age is the number of epochs recorded after it.
pub fn plateau_controller(history: &[f64], patience: usize, stages_remaining: usize) -> PlateauAction {
    let Some(best) = best_index(history) else {
        return PlateauAction::Continue;
    };
    if history.len() - 1 - best < patience {
        PlateauAction::Continue
    } else if stages_remaining > 0 {
        PlateauAction::StepLr
    } else {
        PlateauAction::Stop
    }
}

fn best_index(history: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in history.iter().enumerate() {
        if best.is_none_or(|b| v > history[b]) {
            best = Some(i);
        }
    }
    best
}

/// Stateful wrapper over [`plateau_controller`] across stages. After a step
/// the restored best score carries over as the new stage's baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauController {
    patience: usize,
    n_stages: usize,
    stage: usize,
    best: Option<(usize, f64)>,
    stage_start: usize,
}

impl PlateauController {
    pub fn new(patience: usize, n_stages: usize) -> Self {
        Self {
            patience,
            n_stages,
            stage: 0,
            best: None,
            stage_start: 0,
        }
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    /// `(epoch, dev_uar)` of the best epoch so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    /// Records the dev UAR of `epoch` (epochs count from 0 and never repeat).
    /// Returns whether it is a new best, and the action to take.
    pub fn observe(&mut self, epoch: usize, dev_uar: f64) -> (bool, PlateauAction) {
        let improved = self.best.is_none_or(|(_, b)| dev_uar > b);
        if improved {
            self.best = Some((epoch, dev_uar));
        }
        let (best_epoch, _) = self.best.expect("set above");
        let anchor = best_epoch.max(self.stage_start);
        let action = if epoch - anchor < self.patience {
            PlateauAction::Continue
        } else if self.stage + 1 < self.n_stages {
            self.stage += 1;
            self.stage_start = epoch;
            PlateauAction::StepLr
        } else {
            PlateauAction::Stop
        };
        (improved, action)
    }
}

/// Fixed-length stages of the round-robin schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRobinSchedule {
    pub stages: Vec<f64>,
    pub steps_per_stage: usize,
}

impl RoundRobinSchedule {
    pub fn total_rounds(&self) -> usize {
        self.stages.len() * self.steps_per_stage
    }

    /// Stage index of `round`, or `None` once training has stopped.
    pub fn stage_of(&self, round: usize) -> Option<usize> {
        (round < self.total_rounds()).then(|| round / self.steps_per_stage)
    }

    pub fn lr(&self, round: usize, decay: f64) -> Option<f64> {
        self.stage_of(round).map(|s| effective_lr(self.stages[s], decay, round as u64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_lr_closed_form() {
        assert_eq!(effective_lr(0.1, 1e-6, 0), 0.1);
        assert!((effective_lr(0.1, 1e-6, 1_000_000) - 0.036_787_9).abs() < 1e-7);
        let mut prev = f64::INFINITY;
        for t in (0..5_000_000).step_by(250_000) {
            let lr = effective_lr(0.1, 1e-6, t);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn pure_controller_examples() {
        let improving: Vec<f64> = (0..500).map(|i| i as f64).collect();
        assert_eq!(plateau_controller(&improving, 50, 2), PlateauAction::Continue);
        let mut h = vec![0.1, 0.2, 0.3, 0.9];
        h.extend(std::iter::repeat_n(0.5, 49));
        assert_eq!(plateau_controller(&h, 50, 2), PlateauAction::Continue);
        h.push(0.5); // epoch 53
        assert_eq!(plateau_controller(&h, 50, 2), PlateauAction::StepLr);
        assert_eq!(plateau_controller(&h, 50, 0), PlateauAction::Stop);
    }

    #[test]
    fn stateful_controller_steps_then_stops() {
        let mut c = PlateauController::new(2, 2);
        assert_eq!(c.observe(0, 0.5), (true, PlateauAction::Continue));
        assert_eq!(c.observe(1, 0.4), (false, PlateauAction::Continue));
        assert_eq!(c.observe(2, 0.4), (false, PlateauAction::StepLr));
        assert_eq!(c.stage(), 1);
        // the new stage gets a full patience window
        assert_eq!(c.observe(3, 0.4), (false, PlateauAction::Continue));
        assert_eq!(c.observe(4, 0.6), (true, PlateauAction::Continue));
        assert_eq!(c.observe(5, 0.6), (false, PlateauAction::Continue));
        assert_eq!(c.observe(6, 0.6), (false, PlateauAction::Stop));
        assert_eq!(c.best(), Some((4, 0.6)));
    }

    #[test]
    fn round_robin_boundaries() {
        let s = RoundRobinSchedule {
            stages: vec![0.1, 0.01, 0.001],
            steps_per_stage: 2500,
        };
        assert_eq!(s.stage_of(0), Some(0));
        assert_eq!(s.stage_of(2499), Some(0));
        assert_eq!(s.stage_of(2500), Some(1));
        assert_eq!(s.stage_of(5000), Some(2));
        assert_eq!(s.stage_of(7499), Some(2));
        assert_eq!(s.stage_of(7500), None);
    }
}
