use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};

use super::PosteriorChain;

/// Sample quantile by linear interpolation between order statistics
/// (`h = (n - 1) q`).
pub fn quantile_type7(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(invalid(format!("quantile level {q} outside [0, 1]")));
    }
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let h = (x.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(x.len() - 1);
    Ok(x[lo] + (h - lo as f64) * (x[hi] - x[lo]))
}

/// Pooled posterior mean, standard deviation and equal-tailed 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_draws: usize,
}

impl PosteriorSummary {
    pub fn from_draws(values: &[f64]) -> Result<Self> {
        Self::with_level(values, 0.95)
    }

    /// Summary with an equal-tailed interval of the given mass.
    pub fn with_level(values: &[f64], level: f64) -> Result<Self> {
        if values.len() < 20 {
            return Err(invalid(format!(
                "need at least 20 draws, got {}",
                values.len()
            )));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let tail = (1.0 - level) / 2.0;
        Ok(Self {
            mean,
            sd,
            lower: quantile_type7(values, tail)?,
            upper: quantile_type7(values, 1.0 - tail)?,
            n_draws: values.len(),
        })
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }
}

fn pooled(chains: &[PosteriorChain], param: &str) -> Result<Vec<Vec<f64>>> {
    chains
        .iter()
        .map(|c| {
            c.values(param)
                .ok_or_else(|| invalid(format!("unknown parameter `{param}`")))
        })
        .collect()
}

pub fn posterior_summary(chains: &[PosteriorChain], param: &str) -> Result<PosteriorSummary> {
    let all: Vec<f64> = pooled(chains, param)?.concat();
    PosteriorSummary::from_draws(&all)
}

pub fn split_rhat(chains: &[PosteriorChain], param: &str) -> Result<f64> {
    split_rhat_chains(param, &pooled(chains, param)?)
}

/// Average ranks (1-based) with ties sharing the mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (
        m,
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0),
    )
}

/// Rank-normalized split R-hat. Each chain is halved (dropping a trailing
/// draw when the length is odd), pooled draws are replaced by normal scores
/// of their ranks, and the usual between/within variance ratio is taken.
pub fn split_rhat_chains(param: &str, chains: &[Vec<f64>]) -> Result<f64> {
    if chains.is_empty() || chains.iter().any(|c| c.len() < 4) {
        return Err(invalid("split R-hat needs at least 4 draws per chain"));
    }
    let half = chains.iter().map(|c| c.len() / 2).min().unwrap();
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        halves.push(&c[..half]);
        halves.push(&c[half..2 * half]);
    }
    if halves.iter().map(|h| mean_var(h).1).sum::<f64>() <= 0.0 {
        return Err(Error::DegenerateChain(param.to_string()));
    }
    let flat: Vec<f64> = halves.concat();
    let total = flat.len() as f64;
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let scores: Vec<f64> = average_ranks(&flat)
        .into_iter()
        .map(|r| std.inverse_cdf((r - 0.375) / (total + 0.25)))
        .collect();
    let stats: Vec<(f64, f64)> = scores.chunks(half).map(mean_var).collect();
    let m = stats.len() as f64;
    let n = half as f64;
    let within = stats.iter().map(|s| s.1).sum::<f64>() / m;
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m;
    let between_over_n = stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>() / (m - 1.0);
    let var_plus = (n - 1.0) / n * within + between_over_n;
    Ok((var_plus / within).sqrt())
}
