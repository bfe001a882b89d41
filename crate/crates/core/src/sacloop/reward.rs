/// Scales rewards by the running standard deviation of the discounted
/// return `R_t = r_t + γ R_{t−1}` (Welford estimator over every `R_t`).
#[derive(Clone, Debug, PartialEq)]
pub struct RewardNormalizer {
    gamma: f64,
    ret: f64,
    count: u64,
    mean: f64,
    m2: f64,
}

impl RewardNormalizer {
    pub const EPS: f64 = 1e-8;

    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            ret: 0.0,
            count: 0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    /// Fold `r` into the return accumulator and its variance.
    pub fn observe(&mut self, r: f64) {
        self.ret = r + self.gamma * self.ret;
        self.count += 1;
        let d = self.ret - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (self.ret - self.mean);
    }

    /// Reset the return accumulator at an episode boundary.
    pub fn end_episode(&mut self) {
        self.ret = 0.0;
    }

    pub fn std(&self) -> f64 {
        if self.count < 2 {
            return Self::EPS;
        }
        (self.m2 / self.count as f64).sqrt().max(Self::EPS)
    }

    /// `r / σ(R)` with the current statistics.
    pub fn scale(&self, r: f64) -> f64 {
        r / self.std()
    }

    /// Advance the state with `r` and return the normalized reward.
    pub fn normalize(&mut self, r: f64) -> f64 {
        self.observe(r);
        self.scale(r)
    }
}
