//! Sample-based quantization of product Gaussians `N(0, diag(lambda))`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::noise::stream_rng;

/// Vectors drawn per RNG stream; each chunk has its own counter-derived stream.
const CHUNK: usize = 4096;

/// A fixed antithetic sample: every draw `g` is followed by `-g`.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl TrainingSample {
    pub fn generate(variances: &[f64], size: usize, seed: u64, domain: u64) -> Self {
        let dim = variances.len();
        let scale: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
        let pairs = size.div_ceil(2);
        let mut data = Vec::with_capacity(2 * pairs * dim);
        let mut g = vec![0.0; dim];
        for chunk in 0..pairs.div_ceil(CHUNK) {
            let mut rng = stream_rng(seed, domain, chunk as u64);
            let count = CHUNK.min(pairs - chunk * CHUNK);
            for _ in 0..count {
                for (v, s) in g.iter_mut().zip(&scale) {
                    *v = s * rng.sample::<f64, _>(StandardNormal);
                }
                data.extend_from_slice(&g);
                data.extend(g.iter().map(|v| -v));
            }
        }
        Self { dim, data }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Nearest codepoint by partial-distance search. Ties go to the lowest index.
#[inline]
pub fn nearest(point: &[f64], codebook: &[f64], dim: usize) -> (usize, f64) {
    let mut best = f64::INFINITY;
    let mut best_idx = 0;
    for (k, c) in codebook.chunks_exact(dim).enumerate() {
        let mut d = 0.0;
        for (p, q) in point.iter().zip(c) {
            let e = p - q;
            d += e * e;
            if d >= best {
                break;
            }
        }
        if d < best {
            best = d;
            best_idx = k;
        }
    }
    (best_idx, best)
}

/// Outcome of a fixed-sample Lloyd run.
#[derive(Debug, Clone)]
pub struct EmpiricalRun {
    pub points: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub iterations: usize,
    pub reseeds: usize,
    /// Training distortion of each partition, non-increasing.
    pub history: Vec<f64>,
}

struct Pass {
    sums: Vec<f64>,
    counts: Vec<usize>,
    distortion: f64,
}

/// Squared distance, summed in coordinate order like [`nearest`].
#[inline]
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    let mut d = 0.0;
    for (p, q) in a.iter().zip(b) {
        let e = p - q;
        d += e * e;
    }
    d
}

/// Nearest and second-nearest squared distances, with the nearest index.
/// Agrees with [`nearest`] on the index and the distance.
#[inline]
fn nearest_two(point: &[f64], codebook: &[f64], dim: usize) -> (usize, f64, f64) {
    let (mut b1, mut b2, mut i1) = (f64::INFINITY, f64::INFINITY, 0);
    for (k, c) in codebook.chunks_exact(dim).enumerate() {
        let mut d = 0.0;
        for (p, q) in point.iter().zip(c) {
            let e = p - q;
            d += e * e;
            if d >= b2 {
                break;
            }
        }
        if d < b1 {
            b2 = b1;
            b1 = d;
            i1 = k;
        } else if d < b2 {
            b2 = d;
        }
    }
    (i1, b1, b2)
}

/// Nearest-codepoint partition of a fixed sample, repeated as the codebook
/// moves.
///
/// Each sample keeps its label and a lower bound on the distance to every
/// other codepoint. When the codepoints move, the bound drops by the largest
/// displacement among the others; a sample whose current distance stays
/// below its bound cannot have changed cell and skips the full search. The
/// partition is the one [`nearest`] gives; only the work differs.
struct Partitioner {
    labels: Vec<usize>,
    lower: Vec<f64>,
    previous: Option<Vec<f64>>,
    /// Absolute margin covering rounding in the bounds.
    slack: f64,
}

impl Partitioner {
    fn new(sample: &TrainingSample) -> Self {
        let scale = sample.rows().take(1024).map(|r| r.iter().map(|v| v * v).sum::<f64>()).fold(0.0, f64::max);
        Self {
            labels: vec![0; sample.len()],
            lower: vec![0.0; sample.len()],
            previous: None,
            slack: 1e-9 * scale.sqrt().max(f64::MIN_POSITIVE),
        }
    }

    fn pass(&mut self, sample: &TrainingSample, points: &[f64]) -> Pass {
        let dim = sample.dim;
        let n = points.len() / dim;
        let reuse = match &self.previous {
            Some(prev) if prev.len() == points.len() => {
                let moves: Vec<f64> = prev
                    .chunks_exact(dim)
                    .zip(points.chunks_exact(dim))
                    .map(|(a, b)| dist_sq(a, b).sqrt())
                    .collect();
                let (mut m1, mut m2, mut arg) = (0.0, 0.0, usize::MAX);
                for (k, &v) in moves.iter().enumerate() {
                    if v > m1 {
                        m2 = m1;
                        m1 = v;
                        arg = k;
                    } else if v > m2 {
                        m2 = v;
                    }
                }
                for (l, &k) in self.lower.iter_mut().zip(&self.labels) {
                    *l -= if k == arg { m2 } else { m1 };
                }
                true
            }
            _ => false,
        };
        let mut sums = vec![0.0; n * dim];
        let mut counts = vec![0usize; n];
        let mut total = 0.0;
        for (i, row) in sample.rows().enumerate() {
            let mut k = self.labels[i];
            let mut d = f64::INFINITY;
            if reuse {
                d = dist_sq(row, &points[k * dim..(k + 1) * dim]);
            }
            if !(d.sqrt() + self.slack < self.lower[i]) {
                let (k1, d1, d2) = nearest_two(row, points, dim);
                k = k1;
                d = d1;
                self.labels[i] = k1;
                self.lower[i] = d2.sqrt();
            }
            counts[k] += 1;
            total += d;
            for (s, v) in sums[k * dim..(k + 1) * dim].iter_mut().zip(row) {
                *s += v;
            }
        }
        self.previous = Some(points.to_vec());
        Pass {
            sums,
            counts,
            distortion: total / sample.len() as f64,
        }
    }
}

/// Sample rows ordered by decreasing distance to their nearest codepoint.
fn farthest_rows(sample: &TrainingSample, points: &[f64], how_many: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = sample
        .rows()
        .enumerate()
        .map(|(i, row)| (nearest(row, points, sample.dim).1, i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(how_many).map(|(_, i)| i).collect()
}

/// Lloyd iterations on a fixed sample.
///
/// Stops when the relative decrease of the training distortion falls below
/// `tol` or after `max_iter` partitions. Empty cells are re-seeded at the
/// samples farthest from the current codebook.
pub fn lloyd(sample: &TrainingSample, init: &[f64], tol: f64, max_iter: usize) -> EmpiricalRun {
    let dim = sample.dim;
    let n = init.len() / dim;
    let mut points = init.to_vec();
    let mut history = Vec::new();
    let mut reseeds = 0;
    let mut iterations = 0;
    let mut counts = vec![0usize; n];
    let mut partition = Partitioner::new(sample);
    while iterations < max_iter {
        let pass = partition.pass(sample, &points);
        iterations += 1;
        let prev = history.last().copied();
        history.push(pass.distortion);
        counts.clone_from(&pass.counts);

        let mut empty = Vec::new();
        for k in 0..n {
            if pass.counts[k] == 0 {
                empty.push(k);
                continue;
            }
            let c = pass.counts[k] as f64;
            for j in 0..dim {
                points[k * dim + j] = pass.sums[k * dim + j] / c;
            }
        }
        if !empty.is_empty() {
            let rows = farthest_rows(sample, &points, empty.len());
            for (&k, &r) in empty.iter().zip(&rows) {
                points[k * dim..(k + 1) * dim].copy_from_slice(&sample.data[r * dim..(r + 1) * dim]);
            }
            reseeds += empty.len();
            continue;
        }
        if let Some(prev) = prev {
            if prev <= 0.0 || (prev - pass.distortion) / prev < tol {
                break;
            }
        }
    }
    // counts of the last partition belong to the points before their final
    // centroid update; recount so probabilities describe the returned cells
    let pass = partition.pass(sample, &points);
    counts.clone_from(&pass.counts);
    let total = sample.len() as f64;
    EmpiricalRun {
        points,
        probabilities: counts.iter().map(|&c| c as f64 / total).collect(),
        iterations,
        reseeds,
        history,
    }
}

/// Monte-Carlo statistics of a codebook under fresh samples.
#[derive(Debug, Clone)]
pub struct HeldOut {
    /// Control-variate estimate of the distortion.
    pub distortion: f64,
    pub std_error: f64,
    /// Plain sample mean of the squared error, with its standard error.
    pub raw_distortion: f64,
    pub raw_std_error: f64,
    pub samples: usize,
    pub probabilities: Vec<f64>,
    /// Conditional mean of each cell, flattened `n x dim`.
    pub cell_means: Vec<f64>,
    /// Standard error of each conditional-mean coordinate.
    pub cell_mean_std_errors: Vec<f64>,
}

/// Fresh-sample evaluation of `points` under `N(0, diag(variances))`.
///
/// The squared error `d` is regressed on `q = |G|^2 - sum(variances)`, whose
/// mean is known to be 0; the estimate `mean(d) - beta mean(q)` with the
/// fitted `beta` never has a larger variance than the plain mean and removes
/// most of the noise contributed by coordinates the codebook barely resolves.
pub fn evaluate(points: &[f64], variances: &[f64], budget: usize, seed: u64, domain: u64) -> HeldOut {
    let dim = variances.len();
    let n = points.len() / dim;
    let scale: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let trace: f64 = variances.iter().sum();
    let (mut sd, mut sdd, mut sq, mut sqq, mut sdq) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut counts = vec![0usize; n];
    let mut first = vec![0.0; n * dim];
    let mut second = vec![0.0; n * dim];
    let mut g = vec![0.0; dim];
    for chunk in 0..budget.div_ceil(CHUNK) {
        let mut rng = stream_rng(seed, domain, chunk as u64);
        for _ in 0..CHUNK.min(budget - chunk * CHUNK) {
            for (v, s) in g.iter_mut().zip(&scale) {
                *v = s * rng.sample::<f64, _>(StandardNormal);
            }
            let (k, d) = nearest(&g, points, dim);
            let q = g.iter().map(|v| v * v).sum::<f64>() - trace;
            sd += d;
            sdd += d * d;
            sq += q;
            sqq += q * q;
            sdq += d * q;
            counts[k] += 1;
            for j in 0..dim {
                first[k * dim + j] += g[j];
                second[k * dim + j] += g[j] * g[j];
            }
        }
    }
    let total = budget as f64;
    let bessel = total / (total - 1.0).max(1.0);
    let (md, mq) = (sd / total, sq / total);
    let var_d = (sdd / total - md * md).max(0.0) * bessel;
    let var_q = (sqq / total - mq * mq).max(0.0) * bessel;
    let cov_dq = (sdq / total - md * mq) * bessel;
    let (beta, var_res) = if var_q > 0.0 {
        (cov_dq / var_q, (var_d - cov_dq * cov_dq / var_q).max(0.0))
    } else {
        (0.0, var_d)
    };
    let mut cell_means = vec![0.0; n * dim];
    let mut cell_se = vec![f64::INFINITY; n * dim];
    for k in 0..n {
        let c = counts[k] as f64;
        if c < 2.0 {
            continue;
        }
        for j in 0..dim {
            let m = first[k * dim + j] / c;
            let v = (second[k * dim + j] / c - m * m).max(0.0) * c / (c - 1.0);
            cell_means[k * dim + j] = m;
            cell_se[k * dim + j] = (v / c).sqrt();
        }
    }
    HeldOut {
        distortion: md - beta * mq,
        std_error: (var_res / total).sqrt(),
        raw_distortion: md,
        raw_std_error: (var_d / total).sqrt(),
        samples: budget,
        probabilities: counts.iter().map(|&c| c as f64 / total).collect(),
        cell_means,
        cell_mean_std_errors: cell_se,
    }
}
