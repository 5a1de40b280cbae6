use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::simulate::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McsOptions {
    pub alpha: f64,
    pub reps: usize,
    /// Defaults to `⌈n^{1/3}⌉`.
    pub block_len: Option<usize>,
    pub seed: u64,
}

impl Default for McsOptions {
    fn default() -> Self {
        Self {
            alpha: 0.10,
            reps: 10_000,
            block_len: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McsStatistic {
    Range,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapInfo {
    pub replications: usize,
    pub block_length: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsResult {
    /// MCS p-value per model (column of the loss matrix).
    pub p_values: Vec<f64>,
    pub retained: Vec<usize>,
    /// Models in the order they were eliminated; the last entry survives every test.
    pub elimination_order: Vec<usize>,
    pub statistic: McsStatistic,
    pub bootstrap: BootstrapInfo,
}

pub const MIN_OBS: usize = 30;

pub fn default_block_len(n: usize) -> usize {
    ((n as f64).cbrt().ceil() as usize).max(1)
}

/// Column means of circular-block resamples, one row per replication.
fn bootstrap_means(losses: &DMatrix<f64>, reps: usize, block: usize, seed: u64) -> DMatrix<f64> {
    let (n, k) = losses.shape();
    let n_blocks = n.div_ceil(block);
    let mut rng = rng_from_seed(seed);
    let starts: Vec<Vec<usize>> = (0..reps)
        .map(|_| (0..n_blocks).map(|_| rng.random_range(0..n)).collect())
        .collect();
    let rows: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|s| {
            let mut sums = vec![0.0; k];
            let mut taken = 0;
            'outer: for &start in s {
                for off in 0..block {
                    if taken == n {
                        break 'outer;
                    }
                    let t = (start + off) % n;
                    for (j, acc) in sums.iter_mut().enumerate() {
                        *acc += losses[(t, j)];
                    }
                    taken += 1;
                }
            }
            sums.into_iter().map(|v| v / n as f64).collect()
        })
        .collect();
    DMatrix::from_fn(reps, k, |b, j| rows[b][j])
}

/// Model confidence set with the range statistic and circular block bootstrap.
/// Losses are T×K with one column per model; smaller is better.
pub fn mcs_test(losses: &DMatrix<f64>, opts: &McsOptions) -> Result<McsResult> {
    let (n, k) = losses.shape();
    ensure!(k >= 2, InvalidArgument, "MCS needs at least two models");
    ensure!(
        n >= MIN_OBS,
        InvalidArgument,
        "MCS needs at least {MIN_OBS} observations, got {n}"
    );
    ensure!(losses.iter().all(|v| v.is_finite()), Data, "non-finite loss");
    ensure!(
        opts.reps >= 1,
        InvalidArgument,
        "need at least one bootstrap replication"
    );
    let block = opts.block_len.unwrap_or_else(|| default_block_len(n));
    ensure!(
        block >= 1 && block <= n,
        InvalidArgument,
        "block length must lie in 1..=n"
    );

    let means: Vec<f64> = (0..k).map(|j| losses.column(j).mean()).collect();
    let boot = bootstrap_means(losses, opts.reps, block, opts.seed);
    let reps = opts.reps as f64;
    let scale = losses.amax().max(f64::MIN_POSITIVE);
    let tie_var = (1e-14 * scale).powi(2);

    // bootstrap variance of every pairwise mean differential
    let mut var = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in (i + 1)..k {
            let d = means[i] - means[j];
            let v = (0..opts.reps)
                .map(|b| (boot[(b, i)] - boot[(b, j)] - d).powi(2))
                .sum::<f64>()
                / reps;
            var[(i, j)] = v;
            var[(j, i)] = v;
        }
    }
    let tied = |i: usize, j: usize| var[(i, j)] <= tie_var;

    let mut alive: Vec<usize> = (0..k).collect();
    let mut p_values = vec![1.0; k];
    let mut order = Vec::with_capacity(k);
    let mut running = 0.0f64;
    while alive.len() > 1 {
        let mut t_obs: f64 = 0.0;
        let mut worst = (alive[0], f64::NEG_INFINITY);
        for &i in &alive {
            let mut row_max = f64::NEG_INFINITY;
            for &j in &alive {
                if i == j {
                    continue;
                }
                let t = if tied(i, j) {
                    0.0
                } else {
                    (means[i] - means[j]) / var[(i, j)].sqrt()
                };
                row_max = row_max.max(t);
                t_obs = t_obs.max(t.abs());
            }
            if row_max > worst.1 {
                worst = (i, row_max);
            }
        }
        let p = if t_obs == 0.0 {
            1.0
        } else {
            let exceed = (0..opts.reps)
                .into_par_iter()
                .filter(|&b| {
                    let mut stat: f64 = 0.0;
                    for (a, &i) in alive.iter().enumerate() {
                        for &j in &alive[a + 1..] {
                            if tied(i, j) {
                                continue;
                            }
                            let centred = boot[(b, i)] - boot[(b, j)] - (means[i] - means[j]);
                            stat = stat.max(centred.abs() / var[(i, j)].sqrt());
                        }
                    }
                    stat >= t_obs
                })
                .count();
            exceed as f64 / reps
        };
        running = running.max(p);
        p_values[worst.0] = running;
        order.push(worst.0);
        alive.retain(|&m| m != worst.0);
    }
    order.push(alive[0]);
    p_values[alive[0]] = 1.0;
    let retained = (0..k).filter(|&i| p_values[i] >= opts.alpha).collect();
    Ok(McsResult {
        p_values,
        retained,
        elimination_order: order,
        statistic: McsStatistic::Range,
        bootstrap: BootstrapInfo {
            replications: opts.reps,
            block_length: block,
            seed: opts.seed,
        },
    })
}

/// `(μ_{k,t} − μ̄_k)²` for portfolio return columns.
pub fn gmvp_losses(returns: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = returns.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.apply(|v| *v = (*v - mean).powi(2));
    }
    out
}

/// `−μ_{k,t}/s_k` with `s_k` the standard deviation of column k (divisor n−1).
pub fn rpp_losses(returns: &DMatrix<f64>) -> DMatrix<f64> {
    let n = returns.nrows() as f64;
    let mut out = returns.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let s = if sd > 0.0 { sd } else { 1.0 };
        col.apply(|v| *v = -*v / s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_columns_are_tied() {
        let col: Vec<f64> = (0..60).map(|t| ((t * 17) % 11) as f64).collect();
        let mut l = DMatrix::zeros(60, 2);
        l.set_column(0, &nalgebra::DVector::from_vec(col.clone()));
        l.set_column(1, &nalgebra::DVector::from_vec(col));
        let r = mcs_test(
            &l,
            &McsOptions {
                reps: 200,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.p_values, vec![1.0, 1.0]);
        assert_eq!(r.retained, vec![0, 1]);
    }

    #[test]
    fn block_length_rule() {
        assert_eq!(default_block_len(250), 7);
        assert_eq!(default_block_len(1000), 10);
    }

    #[test]
    fn gmvp_loss_is_centred_square() {
        let r = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert_eq!(gmvp_losses(&r).as_slice(), &[1.0, 0.0, 1.0]);
    }
}
