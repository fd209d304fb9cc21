//! Ensemble statistics and consistency checks against the limit diffusion.
//!
//! Every band below is `3·se`, a two-sided false-failure rate of 0.27% per
//! check for an asymptotically normal statistic. A verdict built from `K`
//! checks fails spuriously with probability at most `0.27%·K`; the single
//! variance check at `t = 1` stays below 1%.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use super::ensemble::TrajectoryBatch;
use crate::cell::{min_sym_eigenvalue, symmetric_part, Matrix};
use crate::error::{Error, Result};
use crate::model::PeriodicField;
use crate::verdict::Verdict;

/// Width of every acceptance band in standard errors.
pub const BAND: f64 = 3.0;
/// Contiguous batches used for the kurtosis standard error.
pub const KURTOSIS_BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n: usize,
    pub dim: usize,
    pub eps: f64,
    pub times: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub se_mean: Vec<Vec<f64>>,
    /// Mean of `X_ε + εκ₁(X_ε/ε)` when a corrector is supplied.
    pub corrected_mean: Option<Vec<Vec<f64>>>,
    /// `εκ₁(0)`, the exact mean of the corrected position.
    pub corrected_target: Option<Vec<f64>>,
    /// Unbiased sample covariance per time.
    pub covariance: Vec<Matrix>,
    /// Fourth-moment standard error of each covariance entry.
    pub se_covariance: Vec<Matrix>,
    /// `2Θt` with the symmetric part of `Θ`.
    pub target_covariance: Vec<Matrix>,
    pub z_covariance: Vec<Matrix>,
    pub excess_kurtosis: Vec<Vec<f64>>,
    /// Batch-means standard error of the excess kurtosis.
    pub se_kurtosis: Vec<Vec<f64>>,
    /// Componentwise correlation of increments over consecutive intervals `[t_{k−1}, t_k]`, `[t_k, t_{k+1}]`.
    pub increment_correlation: Vec<Vec<f64>>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// `(m₂, m₄)` central moments with divisor `n`.
fn central_moments(x: &[f64]) -> (f64, f64) {
    let m = mean(x);
    let (mut s2, mut s4) = (0.0, 0.0);
    for v in x {
        let c = (v - m) * (v - m);
        s2 += c;
        s4 += c * c;
    }
    let n = x.len() as f64;
    (s2 / n, s4 / n)
}

pub fn excess_kurtosis(x: &[f64]) -> f64 {
    let (m2, m4) = central_moments(x);
    if m2 > 0.0 {
        m4 / (m2 * m2) - 3.0
    } else {
        0.0
    }
}

/// Standard error from the spread of per-batch estimates.
fn batch_se(x: &[f64], stat: impl Fn(&[f64]) -> f64) -> f64 {
    let b = KURTOSIS_BATCHES;
    let size = x.len() / b;
    if size < 10 {
        return f64::NAN;
    }
    let est: Vec<f64> = (0..b).map(|k| stat(&x[k * size..(k + 1) * size])).collect();
    let m = mean(&est);
    let var = est.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx > 0.0 && syy > 0.0 {
        sxy / (sxx * syy).sqrt()
    } else {
        0.0
    }
}

/// Moments of the batch at every evaluation time, compared with `2Θt`.
///
/// `x + εκ₁(x/ε)` is harmonic for `L^ε`, so with a first corrector the mean of
/// the corrected positions is compared with `εκ₁(0)` instead of the raw mean
/// with zero; the raw mean carries an `O(ε)` offset in a heterogeneous medium.
pub fn ensemble_stats(batch: &TrajectoryBatch, theta: &Matrix, kappa1: Option<&PeriodicField>) -> Result<EnsembleStats> {
    let d = batch.dim;
    let n = batch.len();
    if n < 2 {
        return Err(Error::Config("statistics need at least two paths".into()));
    }
    if theta.len() != d {
        return Err(Error::Config(format!("theta is {}x{}, paths are {d}-dimensional", theta.len(), theta.len())));
    }
    if let Some(k) = kappa1 {
        if k.grid.dim() != d || k.ncomp() != d {
            return Err(Error::Config("first corrector does not match the path dimension".into()));
        }
    }
    let th = symmetric_part(theta);
    let nf = n as f64;
    let eps = batch.eps;
    let mut st = EnsembleStats {
        n,
        dim: d,
        eps: batch.eps,
        times: batch.times.clone(),
        mean: Vec::new(),
        se_mean: Vec::new(),
        corrected_mean: kappa1.map(|_| Vec::new()),
        corrected_target: None,
        covariance: Vec::new(),
        se_covariance: Vec::new(),
        target_covariance: Vec::new(),
        z_covariance: Vec::new(),
        excess_kurtosis: Vec::new(),
        se_kurtosis: Vec::new(),
        increment_correlation: Vec::new(),
    };
    for (k, &t) in batch.times.iter().enumerate() {
        let comps: Vec<Vec<f64>> = (0..d).map(|i| batch.component(k, i)).collect();
        let means: Vec<f64> = comps.iter().map(|c| mean(c)).collect();
        let mut cov = vec![vec![0.0; d]; d];
        let mut se = vec![vec![0.0; d]; d];
        let mut target = vec![vec![0.0; d]; d];
        let mut z = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                let prod: Vec<f64> =
                    comps[i].iter().zip(&comps[j]).map(|(a, b)| (a - means[i]) * (b - means[j])).collect();
                let pm = mean(&prod);
                let pv = prod.iter().map(|p| (p - pm) * (p - pm)).sum::<f64>() / (nf - 1.0);
                cov[i][j] = pm * nf / (nf - 1.0);
                se[i][j] = (pv / nf).sqrt();
                target[i][j] = 2.0 * th[i][j] * t;
                let diff = cov[i][j] - target[i][j];
                z[i][j] = if se[i][j] > 0.0 {
                    diff / se[i][j]
                } else if diff == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
            }
        }
        st.se_mean.push((0..d).map(|i| (cov[i][i] / nf).sqrt()).collect());
        if let (Some(k1), Some(cm)) = (kappa1, st.corrected_mean.as_mut()) {
            let row = (0..d)
                .map(|i| {
                    let total: f64 = batch.positions[k]
                        .chunks(d)
                        .map(|x| {
                            let cell: Vec<f64> = x.iter().map(|v| v / eps).collect();
                            x[i] + eps * k1.interpolate(i, &cell)
                        })
                        .sum();
                    total / nf
                })
                .collect();
            cm.push(row);
            st.corrected_target = Some((0..d).map(|i| eps * k1.interpolate(i, &vec![0.0; d])).collect());
        }
        st.mean.push(means);
        st.excess_kurtosis.push(comps.iter().map(|c| excess_kurtosis(c)).collect());
        st.se_kurtosis.push(comps.iter().map(|c| batch_se(c, excess_kurtosis)).collect());
        st.covariance.push(cov);
        st.se_covariance.push(se);
        st.target_covariance.push(target);
        st.z_covariance.push(z);
    }
    for k in 1..batch.times.len() {
        let row = (0..d)
            .map(|i| {
                let prev = if k >= 2 { batch.component(k - 2, i) } else { vec![0.0; n] };
                let mid = batch.component(k - 1, i);
                let end = batch.component(k, i);
                let a: Vec<f64> = mid.iter().zip(&prev).map(|(m, p)| m - p).collect();
                let b: Vec<f64> = end.iter().zip(&mid).map(|(e, m)| e - m).collect();
                correlation(&a, &b)
            })
            .collect();
        st.increment_correlation.push(row);
    }
    Ok(st)
}

/// Consistency of the ensemble with the diffusion of covariance `2Θt`.
///
/// Checks at each positive time: centered (corrected) mean, covariance entries within
/// `3·se` of `2Θt`, positive semidefinite covariance; and increment
/// correlations within `3/√N`.
pub fn invariance_stats(
    batch: &TrajectoryBatch,
    theta: &Matrix,
    kappa1: Option<&PeriodicField>,
) -> Result<(EnsembleStats, Vec<Verdict>)> {
    let st = ensemble_stats(batch, theta, kappa1)?;
    let nf = st.n as f64;
    let mut verdicts = Vec::new();
    let mut mean_ok = true;
    let mut cov_ok = true;
    let mut psd_ok = true;
    let mut mean_detail = Vec::new();
    let mut cov_detail = Vec::new();
    for (k, &t) in st.times.iter().enumerate() {
        if t == 0.0 {
            continue;
        }
        let trace: f64 = (0..st.dim).map(|i| st.target_covariance[k][i][i]).sum();
        let offset: Vec<f64> = match (&st.corrected_mean, &st.corrected_target) {
            (Some(cm), Some(target)) => cm[k].iter().zip(target).map(|(m, c)| m - c).collect(),
            _ => st.mean[k].clone(),
        };
        let norm = offset.iter().map(|m| m * m).sum::<f64>().sqrt();
        let bound = BAND * (trace / nf).sqrt();
        mean_ok &= norm <= bound;
        mean_detail.push(format!("t={t}: |mean|={norm:.3e} bound={bound:.3e}"));
        let zmax = st.z_covariance[k].iter().flatten().fold(0.0_f64, |m, z| m.max(z.abs()));
        cov_ok &= zmax <= BAND;
        cov_detail.push(format!(
            "t={t}: cov={:?} target={:?} max|z|={zmax:.2}",
            st.covariance[k], st.target_covariance[k]
        ));
        let scale = st.covariance[k].iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
        psd_ok &= min_sym_eigenvalue(&st.covariance[k]) >= -1e-12 * scale;
    }
    verdicts.push(Verdict::new("mean_centered", mean_ok, mean_detail.join("; ")));
    verdicts.push(Verdict::new("covariance_matches_2theta_t", cov_ok, cov_detail.join("; ")));
    verdicts.push(Verdict::new("covariance_psd", psd_ok, "minimum eigenvalue of each sample covariance"));
    let corr_bound = BAND / nf.sqrt();
    let corr_max = st.increment_correlation.iter().flatten().fold(0.0_f64, |m, c| m.max(c.abs()));
    verdicts.push(Verdict::new(
        "independent_increments",
        corr_max <= corr_bound,
        format!("max |corr|={corr_max:.3e} bound={corr_bound:.3e}"),
    ));
    Ok((st, verdicts))
}

/// Excess kurtosis at time index `k` strictly decreasing as `ε` decreases, per component.
pub fn kurtosis_trend(stats: &[EnsembleStats], k: usize) -> Verdict {
    let mut ordered: Vec<&EnsembleStats> = stats.iter().collect();
    ordered.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let d = ordered.first().map_or(0, |s| s.dim);
    let series: Vec<Vec<f64>> = (0..d).map(|i| ordered.iter().map(|s| s.excess_kurtosis[k][i]).collect()).collect();
    let ok = !ordered.is_empty() && series.iter().all(|s| s.windows(2).all(|w| w[1] < w[0]));
    let eps: Vec<f64> = ordered.iter().map(|s| s.eps).collect();
    Verdict::new("kurtosis_decreasing", ok, format!("eps={eps:?} excess kurtosis={series:?}"))
}

/// Asymptotic Kolmogorov tail `P(K > x) = 2Σ(−1)^{k−1} e^{−2k²x²}`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn ks_pvalue(d: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    (d, ks_pvalue(d, n * m / (n + m)))
}

/// One-sample Kolmogorov–Smirnov test against `N(mean, var)`.
pub fn ks_normal(samples: &[f64], mean: f64, var: f64) -> Result<(f64, f64)> {
    let dist = Normal::new(mean, var.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d = 0.0_f64;
    for (k, v) in x.iter().enumerate() {
        let f = dist.cdf(*v);
        d = d.max((f - k as f64 / n).abs()).max(((k + 1) as f64 / n - f).abs());
    }
    Ok((d, ks_pvalue(d, n)))
}

/// Pearson statistic and upper-tail p-value with `bins − 1` degrees of freedom.
pub fn chi_square(observed: &[u64], probabilities: &[f64]) -> Result<(f64, f64)> {
    if observed.len() != probabilities.len() || observed.len() < 2 {
        return Err(Error::Config("chi-square needs matching bins, at least two".into()));
    }
    let total: u64 = observed.iter().sum();
    let psum: f64 = probabilities.iter().sum();
    let mut stat = 0.0;
    for (o, p) in observed.iter().zip(probabilities) {
        let e = total as f64 * p / psum;
        if e <= 0.0 {
            return Err(Error::Config("chi-square bin with zero expected count".into()));
        }
        stat += (*o as f64 - e).powi(2) / e;
    }
    let dist = ChiSquared::new((observed.len() - 1) as f64).map_err(|e| Error::Config(e.to_string()))?;
    Ok((stat, dist.sf(stat)))
}
