use serde::{Deserialize, Serialize};

/// Floor applied to each factor of a branching score.
pub const SCORE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Child with `x_j <= floor(value)`.
    Down,
    /// Child with `x_j >= floor(value) + 1`.
    Up,
}

/// Running mean of objective degradation per unit change.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PseudoCost {
    pub mean: f64,
    pub count: u32,
}

impl PseudoCost {
    pub fn is_initialized(&self) -> bool {
        self.count > 0
    }
}

/// One observation to fold into a [`PseudoCostTable`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoCostUpdate {
    pub var: usize,
    pub direction: Direction,
    pub degradation: f64,
    pub fraction: f64,
}

/// Per-variable up/down pseudo-costs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PseudoCostTable {
    down: Vec<PseudoCost>,
    up: Vec<PseudoCost>,
}

impl PseudoCostTable {
    pub fn new(var_count: usize) -> Self {
        PseudoCostTable {
            down: vec![PseudoCost::default(); var_count],
            up: vec![PseudoCost::default(); var_count],
        }
    }

    pub fn get(&self, var: usize, direction: Direction) -> PseudoCost {
        match direction {
            Direction::Down => self.down[var],
            Direction::Up => self.up[var],
        }
    }

    /// Folds `max(degradation, 0) / fraction` into the running mean.
    /// `fraction` is the distance moved: `f` going down, `1 - f` going up.
    pub fn update(&mut self, var: usize, direction: Direction, degradation: f64, fraction: f64) {
        debug_assert!(fraction > 0.0 && fraction < 1.0);
        let unit = degradation.max(0.0) / fraction;
        if !unit.is_finite() {
            return;
        }
        let entry = match direction {
            Direction::Down => &mut self.down[var],
            Direction::Up => &mut self.up[var],
        };
        entry.count += 1;
        entry.mean += (unit - entry.mean) / entry.count as f64;
    }

    pub fn apply(&mut self, update: &PseudoCostUpdate) {
        self.update(update.var, update.direction, update.degradation, update.fraction);
    }

    /// Both directions observed at least `threshold` times.
    pub fn is_reliable(&self, var: usize, threshold: u32) -> bool {
        self.down[var].count.min(self.up[var].count) >= threshold
    }

    /// The pseudo-cost used for scoring: the variable's own mean when
    /// observed, else the mean over observed variables in that direction,
    /// else 1.
    pub fn estimate(&self, var: usize, direction: Direction) -> f64 {
        let side = match direction {
            Direction::Down => &self.down,
            Direction::Up => &self.up,
        };
        if side[var].is_initialized() {
            return side[var].mean;
        }
        let (sum, n) = side
            .iter()
            .filter(|e| e.is_initialized())
            .fold((0.0, 0usize), |(s, n), e| (s + e.mean, n + 1));
        if n > 0 {
            sum / n as f64
        } else {
            1.0
        }
    }

    /// `max(Ψ⁻ f, ε) · max(Ψ⁺ (1 - f), ε)` for fractional part `f`.
    pub fn score(&self, var: usize, fraction: f64) -> f64 {
        let down = self.estimate(var, Direction::Down) * fraction;
        let up = self.estimate(var, Direction::Up) * (1.0 - fraction);
        down.max(SCORE_EPSILON) * up.max(SCORE_EPSILON)
    }
}
