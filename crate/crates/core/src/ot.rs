//! Entropic optimal transport between point clouds under squared Euclidean
//! cost, plus an exact assignment solver for small uniform problems.

use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OtError {
    #[error("point sets must be non-empty")]
    Empty,
    #[error("point dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("weights must be nonnegative, match the point count and sum to 1")]
    BadWeights,
    #[error("entropic regularization must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("exact solver limited to n*m <= 64, got {n}x{m}")]
    TooLarge { n: usize, m: usize },
    #[error("exact solver needs equal-size sets with uniform weights")]
    NotUniformSquare,
}

pub type Result<T> = std::result::Result<T, OtError>;

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 1000;
/// Default entropic regularization as a fraction of the median ground cost.
pub const DEFAULT_EPSILON_SCALE: f64 = 0.01;

const CHECK_EVERY: usize = 10;
const ANNEAL_SWEEPS: usize = 10;
const ANNEAL_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct OtProblem {
    pub source: Tensor,
    pub target: Tensor,
    pub source_weights: Vec<f64>,
    pub target_weights: Vec<f64>,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// L1 violation of the source marginal at which iteration stops.
    pub tolerance: f64,
}

impl OtProblem {
    /// Uniform weights, `epsilon = 0.01 * median(cost)`, default tolerance and
    /// iteration cap.
    pub fn uniform(source: Tensor, target: Tensor) -> Result<Self> {
        let (n, d1) = (source.rows(), source.cols());
        let (m, d2) = (target.rows(), target.cols());
        if n == 0 || m == 0 {
            return Err(OtError::Empty);
        }
        if d1 != d2 {
            return Err(OtError::DimMismatch(d1, d2));
        }
        let cost = cost_matrix(&source, &target);
        let med = median(cost);
        let epsilon = if med > 0.0 {
            DEFAULT_EPSILON_SCALE * med
        } else {
            1e-3
        };
        Ok(Self {
            source,
            target,
            source_weights: vec![1.0 / n as f64; n],
            target_weights: vec![1.0 / m as f64; m],
            epsilon,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: DEFAULT_TOLERANCE,
        })
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    /// Source and target swapped.
    pub fn transposed(&self) -> Self {
        Self {
            source: self.target.clone(),
            target: self.source.clone(),
            source_weights: self.target_weights.clone(),
            target_weights: self.source_weights.clone(),
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        let (n, m) = (self.source.rows(), self.target.rows());
        if n == 0 || m == 0 || self.source.numel() == 0 || self.target.numel() == 0 {
            return Err(OtError::Empty);
        }
        if self.source.cols() != self.target.cols() {
            return Err(OtError::DimMismatch(self.source.cols(), self.target.cols()));
        }
        for (w, len) in [(&self.source_weights, n), (&self.target_weights, m)] {
            let sum: f64 = w.iter().sum();
            if w.len() != len || w.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(OtError::BadWeights);
            }
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(OtError::BadEpsilon(self.epsilon));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtResult {
    /// Transport cost `<P, C>` of the entropic plan, without the entropy term.
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
    pub marginal_error: f64,
}

/// Row-major `n x m` matrix of squared Euclidean distances.
pub fn cost_matrix(source: &Tensor, target: &Tensor) -> Vec<f64> {
    let (n, m) = (source.rows(), target.rows());
    let mut c = Vec::with_capacity(n * m);
    for i in 0..n {
        let x = source.row_slice(i);
        for j in 0..m {
            let y = target.row_slice(j);
            c.push(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum());
        }
    }
    c
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Median squared distance over distinct pairs of rows.
pub fn median_pairwise_cost(points: &Tensor) -> f64 {
    let n = points.rows();
    let mut costs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        let x = points.row_slice(i);
        for j in i + 1..n {
            let y = points.row_slice(j);
            costs.push(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum());
        }
    }
    median(costs)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn iterations on dual potentials `f`, `g`.
///
/// The potentials are first warmed up by a short annealing schedule from the
/// largest ground cost down to `epsilon`. Iteration at `epsilon` then stops
/// when the L1 violation of the source marginal drops below the tolerance
/// (checked every few sweeps) or after `max_iterations` sweeps; the latter
/// is reported through `converged = false`, not as an error.
pub fn sinkhorn_distance(problem: &OtProblem) -> Result<OtResult> {
    problem.validate()?;
    let (n, m) = (problem.source.rows(), problem.target.rows());
    let eps = problem.epsilon;
    let c = cost_matrix(&problem.source, &problem.target);
    let mut ct = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            ct[j * n + i] = c[i * m + j];
        }
    }
    let log_a: Vec<f64> = problem.source_weights.iter().map(|w| w.ln()).collect();
    let log_b: Vec<f64> = problem.target_weights.iter().map(|w| w.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut buf_m = vec![0.0; m];
    let mut buf_n = vec![0.0; n];

    let marginal_error = |f: &[f64], g: &[f64], eps: f64, buf: &mut [f64]| -> f64 {
        let mut err = 0.0;
        for i in 0..n {
            if problem.source_weights[i] == 0.0 {
                continue;
            }
            let row = &c[i * m..(i + 1) * m];
            for j in 0..m {
                buf[j] = (f[i] + g[j] - row[j]) / eps;
            }
            err += (log_sum_exp(buf).exp() - problem.source_weights[i]).abs();
        }
        err
    };
    let mut sweep = |f: &mut [f64], g: &mut [f64], eps: f64| {
        for i in 0..n {
            if problem.source_weights[i] == 0.0 {
                f[i] = f64::NEG_INFINITY;
                continue;
            }
            let row = &c[i * m..(i + 1) * m];
            for j in 0..m {
                buf_m[j] = (g[j] - row[j]) / eps;
            }
            f[i] = eps * (log_a[i] - log_sum_exp(&buf_m));
        }
        for j in 0..m {
            if problem.target_weights[j] == 0.0 {
                g[j] = f64::NEG_INFINITY;
                continue;
            }
            let col = &ct[j * n..(j + 1) * n];
            for i in 0..n {
                buf_n[i] = (f[i] - col[i]) / eps;
            }
            g[j] = eps * (log_b[j] - log_sum_exp(&buf_n));
        }
    };

    // Warm-start the potentials by annealing from the largest ground cost
    // down to the target regularization.
    let c_max = c.iter().cloned().fold(0.0, f64::max);
    let mut stage = c_max;
    while stage > eps {
        for _ in 0..ANNEAL_SWEEPS {
            sweep(&mut f, &mut g, stage);
        }
        stage *= ANNEAL_FACTOR;
    }

    let mut iterations = 0;
    let mut err = f64::INFINITY;
    let mut converged = false;
    let mut check = vec![0.0; m];
    while iterations < problem.max_iterations {
        sweep(&mut f, &mut g, eps);
        iterations += 1;
        if iterations % CHECK_EVERY == 0 || iterations == problem.max_iterations {
            err = marginal_error(&f, &g, eps, &mut check);
            if err < problem.tolerance {
                converged = true;
                break;
            }
        }
    }

    let mut cost = 0.0;
    for i in 0..n {
        if f[i] == f64::NEG_INFINITY {
            continue;
        }
        for j in 0..m {
            if g[j] == f64::NEG_INFINITY {
                continue;
            }
            let cij = c[i * m + j];
            cost += ((f[i] + g[j] - cij) / eps).exp() * cij;
        }
    }
    Ok(OtResult {
        cost,
        converged,
        iterations,
        marginal_error: err,
    })
}

/// Exact OT for equal-size uniform problems, solved as an assignment problem.
pub fn exact_small_ot(problem: &OtProblem) -> Result<f64> {
    let (n, m) = (problem.source.rows(), problem.target.rows());
    if n == 0 || m == 0 {
        return Err(OtError::Empty);
    }
    if n * m > 64 {
        return Err(OtError::TooLarge { n, m });
    }
    if problem.source.cols() != problem.target.cols() {
        return Err(OtError::DimMismatch(
            problem.source.cols(),
            problem.target.cols(),
        ));
    }
    let uniform = |w: &[f64], len: usize| {
        w.len() == len && w.iter().all(|v| (v - 1.0 / len as f64).abs() < 1e-12)
    };
    if n != m || !uniform(&problem.source_weights, n) || !uniform(&problem.target_weights, m) {
        return Err(OtError::NotUniformSquare);
    }
    let c = cost_matrix(&problem.source, &problem.target);
    let (_, total) = hungarian(&c, n);
    Ok(total / n as f64)
}

/// Minimum-cost perfect matching on a square `n x n` row-major cost matrix.
/// Returns the column assigned to each row and the total cost.
pub fn hungarian(cost: &[f64], n: usize) -> (Vec<usize>, f64) {
    assert_eq!(cost.len(), n * n, "square cost matrix expected");
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    // Potentials-based O(n^3) shortest augmenting path; index 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        row_of_col[0] = row;
        let mut col0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = row_of_col[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let cur = cost[(r - 1) * n + (col - 1)] - u[r] - v[col];
                if cur < minv[col] {
                    minv[col] = cur;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[row_of_col[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if row_of_col[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            row_of_col[col0] = row_of_col[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for col in 1..=n {
        assignment[row_of_col[col] - 1] = col - 1;
    }
    let total = assignment
        .iter()
        .enumerate()
        .map(|(r, &c)| cost[r * n + c])
        .sum();
    (assignment, total)
}
