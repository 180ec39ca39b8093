//! Two-sample comparisons between a real and a synthetic expression matrix.
//!
//! KL and W₁ are computed per gene and averaged over genes; MMD uses whole
//! rows. Sums run in fixed index order so results are bit-reproducible.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{coefficient_of_variation, ExpressionMatrix};
use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;

pub const DEFAULT_BINS: usize = 50;

pub const PCA_TOLERANCE: f64 = 1e-9;
pub const PCA_MAX_ITERATIONS: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub kl: f64,
    pub wasserstein: f64,
    pub mmd: f64,
    pub per_gene_cv_real: Vec<Option<f64>>,
    pub per_gene_cv_synth: Vec<Option<f64>>,
    pub per_gene_zero_prop_real: Vec<f64>,
    pub per_gene_zero_prop_synth: Vec<f64>,
    pub n_real: usize,
    pub n_synth: usize,
    pub kernel_bandwidth: f64,
    pub histogram_bins: usize,
}

fn check_dims(a: &ExpressionMatrix, b: &ExpressionMatrix) -> Result<()> {
    if a.n_genes() != b.n_genes() {
        return Err(Error::DimensionMismatch {
            left: a.n_genes(),
            right: b.n_genes(),
        });
    }
    if a.n_cells() == 0 || b.n_cells() == 0 {
        return Err(Error::EmptySample);
    }
    Ok(())
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// W₁ between two 1-D samples through their empirical quantile functions.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (a, b) = (sorted(a), sorted(b));
    if a.len() == b.len() {
        let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        return Ok(s / a.len() as f64);
    }
    // Walk the merged quantile breakpoints i/na and j/nb.
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    let mut total = 0.0;
    while i < na && j < nb {
        let ua = (i + 1) as f64 / na as f64;
        let ub = (j + 1) as f64 / nb as f64;
        let next = ua.min(ub);
        total += (next - u) * (a[i] - b[j]).abs();
        u = next;
        // Advance by integer comparison to avoid rounding drift.
        let (ca, cb) = ((i + 1) * nb, (j + 1) * na);
        if ca <= cb {
            i += 1;
        }
        if cb <= ca {
            j += 1;
        }
    }
    Ok(total)
}

/// Mean over genes of the per-gene W₁.
pub fn wasserstein(a: &ExpressionMatrix, b: &ExpressionMatrix) -> Result<f64> {
    check_dims(a, b)?;
    let mut s = 0.0;
    for g in 0..a.n_genes() {
        s += wasserstein_1d(&a.column(g), &b.column(g))?;
    }
    Ok(s / a.n_genes() as f64)
}

/// Discrete KL(a ‖ b) over `bins` equal-width bins spanning the pooled range,
/// with one pseudo-count added to every bin.
pub fn kl_histogram_1d(a: &[f64], b: &[f64], bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::InvalidConfig("histogram needs at least 2 bins".into()));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::DegenerateRange);
    }
    let width = hi - lo;
    let count = |xs: &[f64]| {
        let mut c = vec![1.0; bins];
        for &x in xs {
            let k = ((x - lo) / width * bins as f64) as usize;
            c[k.min(bins - 1)] += 1.0;
        }
        c
    };
    let (ca, cb) = (count(a), count(b));
    let (ta, tb) = ((a.len() + bins) as f64, (b.len() + bins) as f64);
    let mut kl = 0.0;
    for k in 0..bins {
        let (p, q) = (ca[k] / ta, cb[k] / tb);
        kl += p * math::ln(p / q);
    }
    Ok(kl.max(0.0))
}

/// Mean over genes of KL(real ‖ synth); genes with a degenerate pooled range
/// contribute 0.
pub fn kl_histogram(real: &ExpressionMatrix, synth: &ExpressionMatrix, bins: usize) -> Result<f64> {
    check_dims(real, synth)?;
    let mut s = 0.0;
    for g in 0..real.n_genes() {
        match kl_histogram_1d(&real.column(g), &synth.column(g), bins) {
            Ok(v) => s += v,
            Err(Error::DegenerateRange) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(s / real.n_genes() as f64)
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Median of the Euclidean distances over all distinct row pairs of the
/// pooled set; 1.0 when that median is zero or there is only one row.
pub fn median_bandwidth(a: &ExpressionMatrix, b: &ExpressionMatrix) -> f64 {
    let rows: Vec<&[f64]> = (0..a.n_cells())
        .map(|i| a.row(i))
        .chain((0..b.n_cells()).map(|i| b.row(i)))
        .collect();
    let mut d = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(math::sqrt(sq_dist(rows[i], rows[j])));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let m = d.len() / 2;
    let (_, hi, _) = d.select_nth_unstable_by(m, f64::total_cmp);
    let hi = *hi;
    let med = if d.len() % 2 == 1 {
        hi
    } else {
        let lo = d[..m].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

fn kernel_mean(x: &ExpressionMatrix, y: &ExpressionMatrix, inv: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..x.n_cells() {
        for j in 0..y.n_cells() {
            s += math::exp(-sq_dist(x.row(i), y.row(j)) * inv);
        }
    }
    s / (x.n_cells() * y.n_cells()) as f64
}

/// RBF-kernel MMD, biased estimator, returned as `√max(0, MMD²)` together
/// with the bandwidth used. `bandwidth = None` selects the median heuristic.
pub fn mmd_rbf(
    a: &ExpressionMatrix,
    b: &ExpressionMatrix,
    bandwidth: Option<f64>,
) -> Result<(f64, f64)> {
    check_dims(a, b)?;
    let gamma = match bandwidth {
        Some(g) if g > 0.0 && g.is_finite() => g,
        Some(g) => return Err(Error::InvalidConfig(alloc::format!("bad bandwidth {g}"))),
        None => median_bandwidth(a, b),
    };
    let inv = 1.0 / (2.0 * gamma * gamma);
    let m2 = kernel_mean(a, a, inv) + kernel_mean(b, b, inv) - 2.0 * kernel_mean(a, b, inv);
    Ok((math::sqrt(m2.max(0.0)), gamma))
}

/// Per-gene cv (`None` for zero-mean genes) and fraction of exact zeros.
pub fn cv_and_zero_prop(m: &ExpressionMatrix) -> (Vec<Option<f64>>, Vec<f64>) {
    let mut cv = Vec::with_capacity(m.n_genes());
    let mut zp = Vec::with_capacity(m.n_genes());
    for g in 0..m.n_genes() {
        let col = m.column(g);
        cv.push(coefficient_of_variation(&col).ok());
        let zeros = col.iter().filter(|&&v| v == 0.0).count();
        zp.push(if col.is_empty() { 0.0 } else { zeros as f64 / col.len() as f64 });
    }
    (cv, zp)
}

/// Full report with the default bin count and median-heuristic bandwidth
/// unless overridden.
pub fn evaluate(
    real: &ExpressionMatrix,
    synth: &ExpressionMatrix,
    bins: Option<usize>,
    bandwidth: Option<f64>,
) -> Result<MetricsReport> {
    let bins = bins.unwrap_or(DEFAULT_BINS);
    let kl = kl_histogram(real, synth, bins)?;
    let wasserstein = wasserstein(real, synth)?;
    let (mmd, kernel_bandwidth) = mmd_rbf(real, synth, bandwidth)?;
    let (cv_r, zp_r) = cv_and_zero_prop(real);
    let (cv_s, zp_s) = cv_and_zero_prop(synth);
    Ok(MetricsReport {
        kl,
        wasserstein,
        mmd,
        per_gene_cv_real: cv_r,
        per_gene_cv_synth: cv_s,
        per_gene_zero_prop_real: zp_r,
        per_gene_zero_prop_synth: zp_s,
        n_real: real.n_cells(),
        n_synth: synth.n_cells(),
        kernel_bandwidth,
        histogram_bins: bins,
    })
}

/// Principal axes of the pooled, centered data and both sets projected on
/// them.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// Unit axes, ordered by decreasing variance.
    pub axes: Vec<Vec<f64>>,
    /// Variance of the pooled data along each axis.
    pub variances: Vec<f64>,
    pub real: Vec<Vec<f64>>,
    pub synth: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}

/// Modified Gram–Schmidt in place. Columns that vanish are replaced by the
/// first standard basis vector that survives orthogonalisation.
fn orthonormalize(q: &mut [Vec<f64>]) {
    let dim = q[0].len();
    for k in 0..q.len() {
        let (done, rest) = q.split_at_mut(k);
        let v = &mut rest[0];
        let scale = norm(v);
        for _pass in 0..2 {
            for u in done.iter() {
                let c = dot(u, v);
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
            }
        }
        let mut n = norm(v);
        if !(n > 1e-10 * scale) || scale == 0.0 {
            n = 0.0;
            for e in 0..dim {
                v.iter_mut().for_each(|x| *x = 0.0);
                v[e] = 1.0;
                for _pass in 0..2 {
                    for u in done.iter() {
                        let c = dot(u, v);
                        v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
                    }
                }
                n = norm(v);
                if n > 1e-6 {
                    break;
                }
            }
        }
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi
/// rotations. Returns eigenvalues and column eigenvectors (`vecs[i][k]` is
/// entry `i` of vector `k`).
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = a.len();
    let mut v = vec![vec![0.0; m]; m];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..m).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + math::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..m {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..m).map(|i| a[i][i]).collect(), v)
}

/// Projects both sets on the top `dims` principal axes of the pooled data.
///
/// Axes come from orthogonal (block) power iteration on the covariance with a
/// Rayleigh–Ritz step each round, stopping once every wanted Ritz pair has
/// residual `‖Cv − λv‖ ≤ 1e-9 · λ₁`. Each axis is signed so that its
/// largest-magnitude loading is positive.
pub fn pca_project(
    real: &ExpressionMatrix,
    synth: &ExpressionMatrix,
    dims: usize,
) -> Result<PcaProjection> {
    if real.n_genes() != synth.n_genes() {
        return Err(Error::DimensionMismatch {
            left: real.n_genes(),
            right: synth.n_genes(),
        });
    }
    let genes = real.n_genes();
    let rows = real.n_cells() + synth.n_cells();
    if dims == 0 || dims > genes || rows < dims {
        return Err(Error::InvalidConfig(alloc::format!(
            "cannot extract {dims} components from {rows} rows of {genes} genes"
        )));
    }
    let pooled: Vec<&[f64]> = (0..real.n_cells())
        .map(|i| real.row(i))
        .chain((0..synth.n_cells()).map(|i| synth.row(i)))
        .collect();
    let mut mean = vec![0.0; genes];
    for r in &pooled {
        mean.iter_mut().zip(*r).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let centered: Vec<Vec<f64>> = pooled
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; genes];
        for r in &centered {
            let c = dot(r, v);
            out.iter_mut().zip(r).for_each(|(o, x)| *o += c * x);
        }
        out.iter_mut().for_each(|o| *o /= rows as f64);
        out
    };

    let block = genes.min(dims + 4);
    let mut rng = Rng::seed_from_u64(0x5ca1_ab1e);
    let mut q: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..genes).map(|_| rng.normal()).collect())
        .collect();
    orthonormalize(&mut q);

    let mut converged = None;
    for _ in 0..PCA_MAX_ITERATIONS {
        let w: Vec<Vec<f64>> = q.iter().map(|v| apply(v)).collect();
        let h: Vec<Vec<f64>> = (0..block)
            .map(|i| (0..block).map(|j| dot(&q[i], &w[j])).collect())
            .collect();
        let (vals, vecs) = jacobi_eigen(h);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&x, &y| vals[y].total_cmp(&vals[x]));
        // Ritz vectors Q·s and their images W·s.
        let combine = |basis: &[Vec<f64>], k: usize| -> Vec<f64> {
            let mut out = vec![0.0; genes];
            for (i, b) in basis.iter().enumerate() {
                let c = vecs[i][k];
                out.iter_mut().zip(b).for_each(|(o, x)| *o += c * x);
            }
            out
        };
        let ritz: Vec<Vec<f64>> = order.iter().map(|&k| combine(&q, k)).collect();
        let images: Vec<Vec<f64>> = order.iter().map(|&k| combine(&w, k)).collect();
        let lambdas: Vec<f64> = order.iter().map(|&k| vals[k]).collect();
        let top = lambdas[0].max(0.0);
        let ok = (0..dims).all(|k| {
            let r: Vec<f64> = images[k]
                .iter()
                .zip(&ritz[k])
                .map(|(a, b)| a - lambdas[k] * b)
                .collect();
            norm(&r) <= PCA_TOLERANCE * top
        });
        if ok {
            converged = Some((ritz, lambdas));
            break;
        }
        q = images;
        orthonormalize(&mut q);
    }
    let (ritz, lambdas) = converged.ok_or(Error::ConvergenceFailure {
        iterations: PCA_MAX_ITERATIONS,
    })?;

    let mut axes = Vec::with_capacity(dims);
    for mut v in ritz.into_iter().take(dims) {
        let n = norm(&v);
        v.iter_mut().for_each(|x| *x /= n);
        let mut big = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[big].abs() {
                big = i;
            }
        }
        if v[big] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        axes.push(v);
    }
    let variances = lambdas.into_iter().take(dims).map(|l| l.max(0.0)).collect();
    let project = |m: &ExpressionMatrix| -> Vec<Vec<f64>> {
        (0..m.n_cells())
            .map(|i| {
                let c: Vec<f64> = m.row(i).iter().zip(&mean).map(|(x, mu)| x - mu).collect();
                axes.iter().map(|ax| dot(&c, ax)).collect()
            })
            .collect()
    };
    Ok(PcaProjection {
        real: project(real),
        synth: project(synth),
        mean,
        axes,
        variances,
    })
}
