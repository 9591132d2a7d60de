//! Absorbing Markov chains with per-state sojourn times.
//!
//! The exact expected time to absorption comes from the fundamental-matrix
//! system `(I - Q) t = s`; a seeded Monte-Carlo sampler gives an independent
//! estimate of the same quantity.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;

/// Default per-trial step bound for [`AbsorbingChain::simulate_absorption`].
pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;

/// Transient states `0..n`, a single absorbing state, and the time spent in
/// each transient state per visit.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbingChain {
    /// `transient[i][j]` is the probability of moving from `i` to transient `j`.
    transient: Vec<Vec<f64>>,
    absorb: Vec<f64>,
    sojourn: Vec<f64>,
    start: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard error.
    pub std_err: f64,
    pub trials: u64,
}

impl McEstimate {
    /// Distance from `exact` in units of `sqrt(variance / trials)`.
    ///
    /// Passing the exact variance avoids the sample standard error
    /// collapsing to zero when a rare retry never shows up in the run.
    /// Differences within `1e-12` relative count as zero.
    pub fn z_score(&self, exact: f64, variance: f64) -> f64 {
        let diff = (self.mean - exact).abs();
        if diff <= 1e-12 * exact.abs() {
            return 0.0;
        }
        let se = (variance / self.trials as f64).sqrt();
        if se > 0.0 {
            diff / se
        } else {
            f64::INFINITY
        }
    }
}

impl AbsorbingChain {
    pub fn new(
        transient: Vec<Vec<f64>>,
        absorb: Vec<f64>,
        sojourn: Vec<f64>,
        start: usize,
    ) -> Result<Self> {
        let n = transient.len();
        if n == 0 {
            return Err(Error::InvalidChain("no transient states".into()));
        }
        if absorb.len() != n || sojourn.len() != n {
            return Err(Error::InvalidChain(format!(
                "dimension mismatch: {n} rows, {} absorption entries, {} sojourn times",
                absorb.len(),
                sojourn.len()
            )));
        }
        if start >= n {
            return Err(Error::InvalidChain(format!(
                "start state {start} out of range"
            )));
        }
        for (i, row) in transient.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidChain(format!(
                    "row {i} has {} columns",
                    row.len()
                )));
            }
            let probs = row.iter().chain(std::iter::once(&absorb[i]));
            if probs.clone().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidChain(format!(
                    "row {i} has a probability outside [0, 1]"
                )));
            }
            let sum: f64 = probs.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidChain(format!("row {i} sums to {sum}")));
            }
            if !(sojourn[i].is_finite() && sojourn[i] >= 0.0) {
                return Err(Error::InvalidChain(format!(
                    "sojourn {i} is {}",
                    sojourn[i]
                )));
            }
        }
        let chain = AbsorbingChain {
            transient,
            absorb,
            sojourn,
            start,
        };
        if let Some(stuck) = chain.unreachable_absorption() {
            return Err(Error::NonAbsorbing(stuck));
        }
        Ok(chain)
    }

    pub fn n_transient(&self) -> usize {
        self.transient.len()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.transient[from][to]
    }

    pub fn absorption(&self, from: usize) -> f64 {
        self.absorb[from]
    }

    pub fn sojourn(&self, state: usize) -> f64 {
        self.sojourn[state]
    }

    pub fn with_start(mut self, start: usize) -> Result<Self> {
        if start >= self.n_transient() {
            return Err(Error::InvalidChain(format!(
                "start state {start} out of range"
            )));
        }
        self.start = start;
        Ok(self)
    }

    // Backward search from the states with direct absorption mass.
    fn unreachable_absorption(&self) -> Option<usize> {
        let n = self.n_transient();
        let mut reaches: Vec<bool> = self.absorb.iter().map(|&p| p > 0.0).collect();
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..n {
                if !reaches[i] && (0..n).any(|j| reaches[j] && self.transient[i][j] > 0.0) {
                    reaches[i] = true;
                    changed = true;
                }
            }
        }
        reaches.iter().position(|r| !r)
    }

    fn solve_fundamental(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_transient();
        let system = DMatrix::from_fn(n, n, |i, j| {
            let q = self.transient[i][j];
            if i == j {
                1.0 - q
            } else {
                -q
            }
        });
        let solution = system
            .lu()
            .solve(&DVector::from_column_slice(rhs))
            .ok_or_else(|| Error::InvalidChain("singular fundamental system".into()))?;
        if solution.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidChain("singular fundamental system".into()));
        }
        Ok(solution.iter().copied().collect())
    }

    /// Expected time to absorption from every transient state.
    pub fn expected_times(&self) -> Result<Vec<f64>> {
        self.solve_fundamental(&self.sojourn)
    }

    /// Variance of the absorption time from the start state.
    ///
    /// Second moments solve `(I - Q) m = s^2 + 2 s (Q t)`.
    pub fn absorption_time_variance(&self) -> Result<f64> {
        let t = self.expected_times()?;
        let rhs: Vec<f64> = (0..self.n_transient())
            .map(|i| {
                let ahead: f64 = self.transient[i].iter().zip(&t).map(|(q, tj)| q * tj).sum();
                self.sojourn[i] * (self.sojourn[i] + 2.0 * ahead)
            })
            .collect();
        let m2 = self.solve_fundamental(&rhs)?;
        let mean = t[self.start];
        Ok((m2[self.start] - mean * mean).max(0.0))
    }

    /// Expected time to absorption from the start state.
    pub fn expected_absorption_time(&self) -> Result<f64> {
        Ok(self.expected_times()?[self.start])
    }

    pub fn simulate_absorption(&self, trials: u64, seed: u64) -> Result<McEstimate> {
        self.simulate_absorption_with_limit(trials, seed, DEFAULT_MAX_STEPS)
    }

    /// Monte-Carlo estimate of the absorption time.
    ///
    /// Trial `k` draws from its own ChaCha stream `k` under `seed`, so the
    /// result does not depend on how rayon schedules the trials.
    pub fn simulate_absorption_with_limit(
        &self,
        trials: u64,
        seed: u64,
        max_steps: u64,
    ) -> Result<McEstimate> {
        if trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        let rows = self.sampling_rows();
        let samples: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(trial);
                self.sample_once(&rows, &mut rng, max_steps)
            })
            .collect::<Result<_>>()?;

        let n = trials as f64;
        let mean = compensated_sum(samples.iter().copied()) / n;
        let std_err = if trials > 1 {
            let var = compensated_sum(samples.iter().map(|x| (x - mean).powi(2))) / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Ok(McEstimate {
            mean,
            std_err,
            trials,
        })
    }

    fn sampling_rows(&self) -> Vec<Vec<(usize, f64)>> {
        self.transient
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(j, &p)| (j, p))
                    .collect()
            })
            .collect()
    }

    fn sample_once(
        &self,
        rows: &[Vec<(usize, f64)>],
        rng: &mut ChaCha8Rng,
        max_steps: u64,
    ) -> Result<f64> {
        let mut state = self.start;
        let mut elapsed = 0.0;
        for _ in 0..max_steps {
            elapsed += self.sojourn[state];
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut next = None;
            for &(j, p) in &rows[state] {
                acc += p;
                if u < acc {
                    next = Some(j);
                    break;
                }
            }
            match next {
                Some(j) => state = j,
                None => return Ok(elapsed),
            }
        }
        Err(Error::StepLimit(max_steps))
    }
}

/// Neumaier summation; keeps the mean of identical samples exact.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geometric(q: f64, t: f64) -> AbsorbingChain {
        AbsorbingChain::new(vec![vec![q]], vec![1.0 - q], vec![t], 0).unwrap()
    }

    #[test]
    fn single_state() {
        assert_eq!(geometric(0.0, 3.0).expected_absorption_time().unwrap(), 3.0);
        let t = geometric(0.25, 2.0).expected_absorption_time().unwrap();
        assert!((t - 2.0 / 0.75).abs() < 1e-14);
    }

    #[test]
    fn deterministic_simulation() {
        let est = geometric(0.0, 1.5).simulate_absorption(1000, 9).unwrap();
        assert_eq!(est.mean, 1.5);
        assert_eq!(est.std_err, 0.0);
    }

    #[test]
    fn long_deterministic_run_keeps_the_mean() {
        let est = geometric(0.0, 0.001762)
            .simulate_absorption(100_000, 1)
            .unwrap();
        assert_eq!(est.mean, 0.001762);
    }

    #[test]
    fn geometric_simulation() {
        let est = geometric(0.5, 1.0).simulate_absorption(100_000, 4).unwrap();
        assert!((est.mean - 2.0).abs() <= 3.0 * est.std_err, "{est:?}");
    }

    #[test]
    fn simulation_is_reproducible() {
        let chain = geometric(0.7, 0.3);
        let a = chain.simulate_absorption(5000, 11).unwrap();
        let b = chain.simulate_absorption(5000, 11).unwrap();
        assert_eq!(a, b);
        let c = chain.simulate_absorption(5000, 12).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn step_limit() {
        let chain = geometric(1.0 - 1e-9, 1.0);
        assert_eq!(
            chain.simulate_absorption_with_limit(10, 1, 100),
            Err(Error::StepLimit(100))
        );
    }

    #[test]
    fn rejects_bad_chains() {
        // row does not sum to one
        assert!(AbsorbingChain::new(vec![vec![0.5]], vec![0.4], vec![1.0], 0).is_err());
        // negative sojourn
        assert!(AbsorbingChain::new(vec![vec![0.5]], vec![0.5], vec![-1.0], 0).is_err());
        // closed class {1}
        let err = AbsorbingChain::new(
            vec![vec![0.0, 0.5], vec![0.0, 1.0]],
            vec![0.5, 0.0],
            vec![1.0, 1.0],
            0,
        )
        .unwrap_err();
        assert_eq!(err, Error::NonAbsorbing(1));
        assert!(AbsorbingChain::new(vec![vec![1.0]], vec![0.0], vec![1.0], 0).is_err());
        assert!(AbsorbingChain::new(vec![vec![0.0]], vec![1.0], vec![1.0], 3).is_err());
    }

    #[test]
    fn geometric_variance() {
        // Number of visits is geometric with success 1 - q.
        let (q, t) = (0.3, 2.0);
        let var = geometric(q, t).absorption_time_variance().unwrap();
        let expect = t * t * q / ((1.0 - q) * (1.0 - q));
        assert!((var - expect).abs() <= 1e-12 * expect);
        assert_eq!(geometric(0.0, 5.0).absorption_time_variance().unwrap(), 0.0);
    }

    #[test]
    fn variance_matches_sample() {
        let chain = staged(0.4, &[1.0, 3.0, 0.5]);
        let var = chain.absorption_time_variance().unwrap();
        let est = chain.simulate_absorption(200_000, 21).unwrap();
        let sample_var = est.std_err * est.std_err * est.trials as f64;
        assert!(
            (sample_var - var).abs() < 0.02 * var,
            "{sample_var} vs {var}"
        );
        let exact = chain.expected_absorption_time().unwrap();
        assert!(est.z_score(exact, var) < 3.0);
    }

    fn staged(p: f64, sojourn: &[f64]) -> AbsorbingChain {
        let n = sojourn.len();
        let mut q = vec![vec![0.0; n]; n];
        for i in 0..n {
            q[i][(i + 1).min(n - 1)] = 1.0 - p;
        }
        AbsorbingChain::new(q, vec![p; n], sojourn.to_vec(), 0).unwrap()
    }

    #[test]
    fn staged_chain_matches_series() {
        let s = [1.0, 2.0, 4.0];
        let p = 0.7;
        let f = 1.0 - p;
        let series = s[0] + f * s[1] + f * f / p * s[2];
        let exact = staged(p, &s).expected_absorption_time().unwrap();
        assert!((exact - series).abs() <= 1e-12 * series);
    }

    fn permuted(chain: &AbsorbingChain, perm: &[usize]) -> AbsorbingChain {
        // perm[old] = new
        let n = chain.n_transient();
        let mut q = vec![vec![0.0; n]; n];
        let mut a = vec![0.0; n];
        let mut s = vec![0.0; n];
        for i in 0..n {
            a[perm[i]] = chain.absorption(i);
            s[perm[i]] = chain.sojourn(i);
            for j in 0..n {
                q[perm[i]][perm[j]] = chain.transition(i, j);
            }
        }
        AbsorbingChain::new(q, a, s, perm[chain.start()]).unwrap()
    }

    proptest! {
        #[test]
        fn permutation_invariance(
            p in 0.05f64..1.0,
            soj in proptest::collection::vec(0.0f64..10.0, 2..8),
            rot in 0usize..8,
        ) {
            let chain = staged(p, &soj);
            let n = soj.len();
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let a = chain.expected_absorption_time().unwrap();
            let b = permuted(&chain, &perm).expected_absorption_time().unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-12));
        }

        #[test]
        fn sojourn_scaling_is_linear(
            p in 0.05f64..1.0,
            soj in proptest::collection::vec(0.0f64..10.0, 1..8),
            k in 0.0f64..100.0,
        ) {
            let base = staged(p, &soj).expected_absorption_time().unwrap();
            let scaled: Vec<f64> = soj.iter().map(|s| s * k).collect();
            let got = staged(p, &scaled).expected_absorption_time().unwrap();
            prop_assert!((got - k * base).abs() <= 1e-10 * (k * base).max(1e-12));
        }
    }
}
