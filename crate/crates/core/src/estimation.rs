//! Generative-model sampling and empirical kernels.
//!
//! Every `(h, s, a)` cell draws from its own ChaCha stream, selected by the
//! cell index and the sampling round, so results do not depend on the order
//! or thread in which cells are processed.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::TabularCmdp;

/// RNG for one model cell in one sampling round.
pub fn cell_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `n` next states from `P_h(. | s, a)` and returns the counts.
///
/// The multinomial is generated as a chain of conditional binomials, which
/// costs `O(|S|)` regardless of `n`.
pub fn sample_generative<R: Rng + ?Sized>(
    mdp: &TabularCmdp,
    h: usize,
    s: usize,
    a: usize,
    n: u64,
    rng: &mut R,
) -> Result<Vec<u64>> {
    mdp.check_indices(h, s, a)?;
    if n == 0 {
        return Err(Error::param("samples", "must be at least 1"));
    }
    multinomial(mdp.row(h, s, a), n, rng)
}

fn multinomial<R: Rng + ?Sized>(row: &[f64], n: u64, rng: &mut R) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; row.len()];
    let mut left_n = n;
    let mut left_mass = 1.0_f64;
    for (i, &p) in row.iter().enumerate() {
        if left_n == 0 {
            break;
        }
        if i + 1 == row.len() || p >= left_mass {
            counts[i] = left_n;
            break;
        }
        let q = (p / left_mass).clamp(0.0, 1.0);
        let k = Binomial::new(left_n, q).map_err(|e| Error::InvalidDistribution(e.to_string()))?.sample(rng);
        counts[i] = k;
        left_n -= k;
        left_mass -= p;
    }
    Ok(counts)
}

/// Exact empirical distribution `counts / n`.
pub fn empirical_row(counts: &[u64], n: u64) -> Result<Vec<f64>> {
    let total: u64 = counts.iter().sum();
    if total != n || n == 0 {
        return Err(Error::InvalidDistribution(format!("counts sum to {total}, expected {n}")));
    }
    Ok(counts.iter().map(|&k| k as f64 / n as f64).collect())
}

/// Transition counts for every `(h, s, a)` and the kernel they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel {
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    /// Samples per cell; every cell row sums to this.
    n_samples: u64,
    /// Rounds of `samples_per_round` drawn so far.
    rounds: u64,
    counts: Vec<u64>,
    kernel: Vec<f64>,
}

/// Builds an [`EmpiricalModel`] from a full `(h, s, a, s')` count table.
pub fn empirical_model(
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    counts: Vec<u64>,
    n: u64,
) -> Result<EmpiricalModel> {
    EmpiricalModel::from_counts(horizon, n_states, n_actions, counts, n)
}

impl EmpiricalModel {
    pub fn from_counts(horizon: usize, n_states: usize, n_actions: usize, counts: Vec<u64>, n: u64) -> Result<Self> {
        let expected = horizon * n_states * n_actions * n_states;
        if counts.len() != expected || expected == 0 {
            return Err(Error::ShapeMismatch(format!("count table has {} entries, expected {expected}", counts.len())));
        }
        let mut kernel = Vec::with_capacity(expected);
        for row in counts.chunks(n_states) {
            kernel.extend(empirical_row(row, n)?);
        }
        Ok(EmpiricalModel { horizon, n_states, n_actions, n_samples: n, rounds: 1, counts, kernel })
    }

    /// Draws `n` samples for every cell of `mdp` (round 0).
    pub fn sample(mdp: &TabularCmdp, n: u64, seed: u64) -> Result<Self> {
        let (h, s, a) = (mdp.horizon(), mdp.n_states(), mdp.n_actions());
        let mut model = EmpiricalModel {
            horizon: h,
            n_states: s,
            n_actions: a,
            n_samples: 0,
            rounds: 0,
            counts: vec![0; h * s * a * s],
            kernel: vec![0.0; h * s * a * s],
        };
        model.add_round(mdp, n, seed)?;
        Ok(model)
    }

    /// Adds one fresh block of `n` samples per cell on the next round's
    /// streams and refreshes the kernel.
    pub fn add_round(&mut self, mdp: &TabularCmdp, n: u64, seed: u64) -> Result<()> {
        if (mdp.horizon(), mdp.n_states(), mdp.n_actions()) != (self.horizon, self.n_states, self.n_actions) {
            return Err(Error::ShapeMismatch("model and sample pool disagree on dimensions".into()));
        }
        if n == 0 {
            return Err(Error::param("samples", "must be at least 1"));
        }
        let cells = (self.horizon * self.n_states * self.n_actions) as u64;
        let round = self.rounds;
        let (ns, na) = (self.n_states, self.n_actions);
        let fresh: Vec<Vec<u64>> = (0..cells)
            .into_par_iter()
            .map(|cell| {
                let c = cell as usize;
                let (h, s, a) = (c / (ns * na), (c / na) % ns, c % na);
                let mut rng = cell_rng(seed, round * cells + cell);
                sample_generative(mdp, h, s, a, n, &mut rng)
            })
            .collect::<Result<_>>()?;
        self.n_samples += n;
        self.rounds += 1;
        for (cell, add) in fresh.iter().enumerate() {
            let start = cell * ns;
            for (i, k) in add.iter().enumerate() {
                self.counts[start + i] += k;
                self.kernel[start + i] = self.counts[start + i] as f64 / self.n_samples as f64;
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> u64 {
        self.n_samples
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn counts(&self, h: usize, s: usize, a: usize) -> &[u64] {
        let start = ((h * self.n_states + s) * self.n_actions + a) * self.n_states;
        &self.counts[start..start + self.n_states]
    }

    pub fn row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = ((h * self.n_states + s) * self.n_actions + a) * self.n_states;
        &self.kernel[start..start + self.n_states]
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// `mdp` with its nominal kernel replaced by the empirical one.
    pub fn apply_to(&self, mdp: &TabularCmdp) -> Result<TabularCmdp> {
        mdp.with_kernel(self.kernel.clone())
    }

    /// Dumps the count table as CSV with columns `h,s,a,next,count`.
    pub fn write_counts_csv(&self, path: &Path) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
        out.write_record(["h", "s", "a", "next", "count"])?;
        for h in 0..self.horizon {
            for s in 0..self.n_states {
                for a in 0..self.n_actions {
                    for (next, k) in self.counts(h, s, a).iter().enumerate() {
                        out.write_record([h, s, a, next, *k as usize].map(|x| x.to_string()))?;
                    }
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// L1 distance between two kernels of equal shape.
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{build_counterexample, build_riverswim, SWIM_LEFT};

    #[test]
    fn dirac_row_puts_everything_on_one_successor() {
        let mdp = build_counterexample();
        let mut rng = cell_rng(1, 0);
        // s2 moves deterministically to s3.
        let counts = sample_generative(&mdp, 1, 1, 0, 1000, &mut rng).unwrap();
        assert_eq!(counts.iter().sum::<u64>(), 1000);
        assert_eq!(counts.iter().filter(|&&k| k > 0).count(), 1);
    }

    #[test]
    fn large_sample_frequency() {
        let mdp = build_riverswim();
        let mut rng = cell_rng(7, 3);
        let counts = sample_generative(&mdp, 0, 0, SWIM_LEFT, 1_000_000, &mut rng).unwrap();
        let freq = counts[0] as f64 / 1e6;
        // The binomial standard deviation is 3e-4, so 0.003 is ten sigma.
        assert!((freq - 0.9).abs() < 0.003, "{freq}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let mdp = build_riverswim().with_budget(-4.0);
        let a = EmpiricalModel::sample(&mdp, 50, 11).unwrap();
        let b = EmpiricalModel::sample(&mdp, 50, 11).unwrap();
        assert_eq!(a, b);
        let c = EmpiricalModel::sample(&mdp, 50, 12).unwrap();
        assert_ne!(a.kernel(), c.kernel());
    }

    #[test]
    fn rounds_accumulate() {
        let mdp = build_counterexample();
        let mut pool = EmpiricalModel::sample(&mdp, 10, 3).unwrap();
        pool.add_round(&mdp, 10, 3).unwrap();
        assert_eq!(pool.n_samples(), 20);
        assert_eq!(pool.rounds(), 2);
        for h in 0..3 {
            for s in 0..5 {
                for a in 0..2 {
                    assert_eq!(pool.counts(h, s, a).iter().sum::<u64>(), 20);
                    let sum: f64 = pool.row(h, s, a).iter().sum();
                    assert!((sum - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn empirical_rows() {
        assert_eq!(empirical_row(&[9, 1], 10).unwrap(), vec![0.9, 0.1]);
        assert_eq!(empirical_row(&[10, 0], 10).unwrap(), vec![1.0, 0.0]);
        assert!(empirical_row(&[9, 2], 10).is_err());
        let m = empirical_model(1, 2, 1, vec![3, 1, 0, 4], 4).unwrap();
        assert_eq!(m.row(0, 0, 0), &[0.75, 0.25]);
        assert!(empirical_model(1, 2, 1, vec![3, 1, 0], 4).is_err());
    }

    #[test]
    fn invalid_requests() {
        let mdp = build_counterexample();
        let mut rng = cell_rng(0, 0);
        assert!(sample_generative(&mdp, 3, 0, 0, 10, &mut rng).is_err());
        assert!(sample_generative(&mdp, 0, 0, 0, 0, &mut rng).is_err());
    }

    #[test]
    fn count_dump() {
        let mdp = build_counterexample();
        let pool = EmpiricalModel::sample(&mdp, 4, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("counts.csv");
        pool.write_counts_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("h,s,a,next,count\n"));
        assert_eq!(text.lines().count(), 1 + 3 * 5 * 2 * 5);
        assert!(!text.contains('\r'));
    }
}
