//! Sample sets, empirical CVaR, Wasserstein radius selection and a
//! discrete worst-case-expectation oracle.
//!
//! The ambiguity set is a Wasserstein (order 1) ball of radius `theta` around
//! the empirical distribution of observed obstacle translations. Ground norms
//! are restricted to the 1- and infinity-norms so that the dual-norm
//! constraints of the reformulated program stay linear.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ObstaclePolytope;

/// Ground norm of the Wasserstein metric. The dual of `One` is `Inf` and
/// vice versa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GroundNorm {
    One,
    #[default]
    Inf,
}

impl GroundNorm {
    pub fn eval(&self, v: &DVector<f64>) -> f64 {
        match self {
            GroundNorm::One => v.iter().map(|x| x.abs()).sum(),
            GroundNorm::Inf => v.iter().fold(0.0, |acc, x| acc.max(x.abs())),
        }
    }

    pub fn dual(&self) -> GroundNorm {
        match self {
            GroundNorm::One => GroundNorm::Inf,
            GroundNorm::Inf => GroundNorm::One,
        }
    }

    pub fn dual_eval(&self, v: &DVector<f64>) -> f64 {
        self.dual().eval(v)
    }
}

/// Compact convex support `{w : H w <= h}` of the translation distribution.
#[derive(Debug, Clone)]
pub struct SupportPolytope {
    poly: ObstaclePolytope,
}

impl SupportPolytope {
    pub fn new(rows: Vec<(DVector<f64>, f64)>) -> Result<Self> {
        Ok(SupportPolytope {
            poly: ObstaclePolytope::new(rows)?,
        })
    }

    /// Axis-aligned box support.
    pub fn from_box(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        let dim = lower.len();
        let mut rows = Vec::with_capacity(2 * dim);
        for axis in 0..dim {
            if lower[axis] > upper[axis] {
                return Err(Error::InvalidInput(format!(
                    "box lower {} exceeds upper {} on axis {axis}",
                    lower[axis], upper[axis]
                )));
            }
            let mut c = DVector::zeros(dim);
            c[axis] = 1.0;
            rows.push((c.clone(), upper[axis]));
            rows.push((-c, -lower[axis]));
        }
        SupportPolytope::new(rows)
    }

    pub fn dim(&self) -> usize {
        self.poly.dim()
    }

    pub fn num_rows(&self) -> usize {
        self.poly.num_rows()
    }

    /// `(H, h)` with the support `{w : H w <= h}`.
    pub fn matrix_form(&self) -> (DMatrix<f64>, DVector<f64>) {
        self.poly.matrix_form()
    }

    pub fn contains(&self, w: &DVector<f64>) -> bool {
        self.poly
            .rows()
            .iter()
            .all(|(c, d)| c.dot(w) <= d + 1e-9 * c.norm() * (1.0 + d.abs()))
    }

    /// The support scaled about the origin by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> SupportPolytope {
        let rows = self
            .poly
            .rows()
            .iter()
            .map(|(c, d)| (c.clone(), d * factor))
            .collect();
        SupportPolytope {
            poly: ObstaclePolytope::from_rows_unchecked(rows).expect("scaled rows stay valid"),
        }
    }

    pub fn vertices(&self) -> Vec<DVector<f64>> {
        self.poly.vertices()
    }

    /// Diameter of the support under `norm` (max pairwise vertex distance).
    pub fn diameter(&self, norm: GroundNorm) -> f64 {
        let verts = self.poly.vertices();
        let mut best: f64 = 0.0;
        for (i, a) in verts.iter().enumerate() {
            for b in verts.iter().skip(i + 1) {
                best = best.max(norm.eval(&(a - b)));
            }
        }
        best
    }
}

/// Wasserstein ambiguity ball: radius and ground norm.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AmbiguitySpec {
    pub theta: f64,
    #[serde(default)]
    pub ground_norm: GroundNorm,
}

impl AmbiguitySpec {
    pub fn new(theta: f64, ground_norm: GroundNorm) -> Result<Self> {
        if theta < 0.0 || !theta.is_finite() {
            return Err(Error::InvalidInput(format!("theta must be >= 0, got {theta}")));
        }
        Ok(AmbiguitySpec { theta, ground_norm })
    }
}

/// Risk-constraint parameters: CVaR level and per-obstacle tolerances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskParams {
    pub alpha: f64,
    pub delta: Vec<f64>,
}

impl RiskParams {
    pub fn new(alpha: f64, delta: Vec<f64>) -> Result<Self> {
        if !(0.0 < alpha && alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must be in (0,1), got {alpha}"
            )));
        }
        if delta.iter().any(|d| *d < 0.0) {
            return Err(Error::InvalidInput("delta entries must be >= 0".into()));
        }
        Ok(RiskParams { alpha, delta })
    }
}

/// Constants of the measure-concentration radius formula. The explicit values
/// from the underlying proof are overly conservative, so these are
/// configuration inputs with light defaults; bootstrap calibration is
/// preferred when a scenario is available.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConcentrationConstants {
    pub c1: f64,
    pub c2: f64,
    /// Light-tail exponent, > 1.
    pub c: f64,
    /// Confidence target: the guarantee holds with probability 1 - beta.
    pub beta: f64,
}

impl Default for ConcentrationConstants {
    fn default() -> Self {
        ConcentrationConstants {
            c1: 3.0,
            c2: 1.0,
            c: 2.0,
            beta: 0.05,
        }
    }
}

impl ConcentrationConstants {
    pub fn validate(&self) -> Result<()> {
        if self.c1 <= 0.0 || self.c2 <= 0.0 {
            return Err(Error::InvalidInput("c1, c2 must be positive".into()));
        }
        if self.c <= 1.0 {
            return Err(Error::InvalidInput("light-tail exponent c must be > 1".into()));
        }
        if !(0.0 < self.beta && self.beta < 1.0) {
            return Err(Error::InvalidInput("beta must be in (0,1)".into()));
        }
        Ok(())
    }
}

/// Training samples for one (obstacle, lookahead) pair together with the
/// support they were declared on.
#[derive(Debug, Clone)]
pub struct StageSamples {
    pub support: SupportPolytope,
    pub samples: Vec<DVector<f64>>,
}

impl StageSamples {
    pub fn new(support: SupportPolytope, samples: Vec<DVector<f64>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("need at least one sample".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.len() != support.dim() {
                return Err(Error::DimensionMismatch {
                    expected: support.dim(),
                    got: s.len(),
                });
            }
            if !support.contains(s) {
                return Err(Error::InvalidInput(format!(
                    "sample {i} lies outside the declared support"
                )));
            }
        }
        Ok(StageSamples { support, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// One row per sample, one column per axis.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let dim = self.support.dim();
        let header: Vec<String> = (0..dim).map(|a| format!("w{a}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for s in &self.samples {
            let row: Vec<String> = s.iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, support: SupportPolytope) -> Result<Self> {
        let mut samples = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if ln == 0 || line.trim().is_empty() {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
            samples.push(DVector::from_vec(vals));
        }
        StageSamples::new(support, samples)
    }
}

/// Per-(obstacle, lookahead) training data: `stage(ell, k)` for lookahead
/// `k = 1..=horizon`.
#[derive(Debug, Clone)]
pub struct SampleSet {
    per_obstacle: Vec<Vec<StageSamples>>,
}

impl SampleSet {
    pub fn new(per_obstacle: Vec<Vec<StageSamples>>) -> Result<Self> {
        if per_obstacle.is_empty() {
            return Err(Error::InvalidInput("no obstacles in sample set".into()));
        }
        let horizon = per_obstacle[0].len();
        if horizon == 0 {
            return Err(Error::InvalidInput("empty lookahead in sample set".into()));
        }
        for stages in &per_obstacle {
            if stages.len() != horizon {
                return Err(Error::InvalidInput(
                    "inconsistent lookahead counts across obstacles".into(),
                ));
            }
        }
        Ok(SampleSet { per_obstacle })
    }

    /// Builds the multi-step sets from one-step samples by the random-walk
    /// scaling rule: lookahead `k` uses `k * w` on the support scaled by `k`.
    pub fn from_one_step(one_step: Vec<StageSamples>, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidInput("horizon must be >= 1".into()));
        }
        let mut per_obstacle = Vec::with_capacity(one_step.len());
        for base in one_step {
            let mut stages = Vec::with_capacity(horizon);
            for k in 1..=horizon {
                let factor = k as f64;
                let support = base.support.scaled(factor);
                let samples = base.samples.iter().map(|s| s * factor).collect();
                stages.push(StageSamples::new(support, samples)?);
            }
            per_obstacle.push(stages);
        }
        SampleSet::new(per_obstacle)
    }

    pub fn num_obstacles(&self) -> usize {
        self.per_obstacle.len()
    }

    pub fn horizon(&self) -> usize {
        self.per_obstacle[0].len()
    }

    /// Samples for obstacle `ell` (0-based) at lookahead `k` (1-based).
    pub fn stage(&self, ell: usize, k: usize) -> &StageSamples {
        &self.per_obstacle[ell][k - 1]
    }
}

/// Description of a translation distribution, per obstacle.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DistributionSpec {
    /// Independent uniform draw in a box.
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
    /// Independent Gaussian per axis, truncated to the declared support by
    /// rejection.
    GaussianAxes { mean: Vec<f64>, std: Vec<f64> },
}

impl DistributionSpec {
    pub fn dim(&self) -> usize {
        match self {
            DistributionSpec::UniformBox { lower, .. } => lower.len(),
            DistributionSpec::GaussianAxes { mean, .. } => mean.len(),
        }
    }

    /// Canonical support: the box itself, or mean +/- 4 sigma per axis for
    /// Gaussians (compactness needed by the dual reformulation).
    pub fn default_support(&self) -> Result<SupportPolytope> {
        match self {
            DistributionSpec::UniformBox { lower, upper } => {
                SupportPolytope::from_box(lower, upper)
            }
            DistributionSpec::GaussianAxes { mean, std } => {
                if mean.len() != std.len() {
                    return Err(Error::DimensionMismatch {
                        expected: mean.len(),
                        got: std.len(),
                    });
                }
                let lower: Vec<f64> = mean
                    .iter()
                    .zip(std)
                    .map(|(m, s)| m - 4.0 * s.max(1e-12))
                    .collect();
                let upper: Vec<f64> = mean
                    .iter()
                    .zip(std)
                    .map(|(m, s)| m + 4.0 * s.max(1e-12))
                    .collect();
                SupportPolytope::from_box(&lower, &upper)
            }
        }
    }

    fn draw_raw(&self, rng: &mut impl Rng) -> DVector<f64> {
        match self {
            DistributionSpec::UniformBox { lower, upper } => DVector::from_iterator(
                lower.len(),
                lower.iter().zip(upper).map(|(lo, hi)| {
                    if hi > lo {
                        rng.random_range(*lo..*hi)
                    } else {
                        *lo
                    }
                }),
            ),
            DistributionSpec::GaussianAxes { mean, std } => DVector::from_iterator(
                mean.len(),
                mean.iter().zip(std).map(|(m, s)| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + s * z
                }),
            ),
        }
    }

    /// One draw, rejection-resampled into `support`.
    pub fn draw_in_support(
        &self,
        support: &SupportPolytope,
        rng: &mut impl Rng,
    ) -> Result<DVector<f64>> {
        for _ in 0..100_000 {
            let w = self.draw_raw(rng);
            if support.contains(&w) {
                return Ok(w);
            }
        }
        Err(Error::Config(
            "distribution mass does not intersect the support".into(),
        ))
    }
}

/// Draws `n` samples inside `support`, deterministically per `seed`.
pub fn draw_samples(
    spec: &DistributionSpec,
    support: &SupportPolytope,
    n: usize,
    seed: u64,
) -> Result<StageSamples> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_samples_with(spec, support, n, &mut rng)
}

/// As [`draw_samples`] but advancing a caller-owned stream.
pub fn draw_samples_with(
    spec: &DistributionSpec,
    support: &SupportPolytope,
    n: usize,
    rng: &mut impl Rng,
) -> Result<StageSamples> {
    if n == 0 {
        return Err(Error::InvalidInput("need n >= 1 samples".into()));
    }
    if spec.dim() != support.dim() {
        return Err(Error::DimensionMismatch {
            expected: support.dim(),
            got: spec.dim(),
        });
    }
    let samples: Result<Vec<_>> = (0..n).map(|_| spec.draw_in_support(support, rng)).collect();
    StageSamples::new(support.clone(), samples?)
}

/// Empirical CVaR at level `alpha` by the sorted-tail formula with a
/// fractional atom at the quantile boundary. Exact for atomic distributions:
/// equals `min_z z + E[(X - z)+]/(1 - alpha)`.
pub fn empirical_cvar(losses: &[f64], alpha: f64) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::InvalidInput("empirical_cvar of empty loss list".into()));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!(
            "alpha must be in [0,1), got {alpha}"
        )));
    }
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("loss values must be ordered"));
    let n = sorted.len();
    let tau = (1.0 - alpha) * n as f64;
    let whole = (tau.floor() as usize).min(n);
    let mut acc: f64 = sorted[..whole].iter().sum();
    let frac = tau - whole as f64;
    if frac > 0.0 && whole < n {
        acc += frac * sorted[whole];
    }
    Ok(acc / tau)
}

/// Radius from the measure-concentration bound, by the piecewise formula:
/// `ratio^(1/c)` in the small-sample regime, otherwise `ratio^(1/n_y)` for
/// `n_y < 2`, `ratio^(1/2)` for `n_y > 2`, and for `n_y = 2` the root
/// `theta_bar` of `theta / log(2 + 1/theta) = ratio^(1/2)`, where
/// `ratio = log(c1/beta) / (c2 N)`.
pub fn wasserstein_radius(n: usize, consts: &ConcentrationConstants, n_y: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be >= 1".into()));
    }
    if n_y == 0 {
        return Err(Error::InvalidInput("dimension must be >= 1".into()));
    }
    consts.validate()?;
    let log_term = (consts.c1 / consts.beta).ln().max(0.0);
    let ratio = log_term / (consts.c2 * n as f64);
    let theta = if (n as f64) < log_term / consts.c2 {
        ratio.powf(1.0 / consts.c)
    } else {
        match n_y {
            1 => ratio,
            2 => solve_theta_bar(ratio.sqrt()),
            _ => ratio.sqrt(),
        }
    };
    Ok(theta)
}

/// Solves `theta / ln(2 + 1/theta) = rhs` for `theta >= 0` by bisection; the
/// left side is strictly increasing with limit 0 at 0+.
fn solve_theta_bar(rhs: f64) -> f64 {
    if rhs <= 0.0 {
        return 0.0;
    }
    let f = |t: f64| t / (2.0 + 1.0 / t).ln();
    let mut hi = 1.0;
    while f(hi) < rhs {
        hi *= 2.0;
        if hi > 1e12 {
            return hi;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= 0.0 {
            break;
        }
        if f(mid) < rhs {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Result of bootstrap radius calibration.
#[derive(Debug, Clone, Copy)]
pub struct CalibratedRadius {
    pub theta: f64,
    /// Set when no grid value reached the target satisfaction frequency and
    /// the largest one was returned as a fallback.
    pub saturated: bool,
}

/// Smallest grid radius whose estimated constraint-satisfaction frequency
/// reaches `1 - target_beta`; the evaluator is typically a bootstrap over
/// re-drawn training sets running the closed loop.
pub fn calibrate_radius_bootstrap(
    theta_grid: &[f64],
    target_beta: f64,
    mut satisfaction: impl FnMut(f64) -> f64,
) -> Result<CalibratedRadius> {
    if theta_grid.is_empty() {
        return Err(Error::InvalidInput("empty theta grid".into()));
    }
    if theta_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("theta grid must be sorted ascending".into()));
    }
    for &theta in theta_grid {
        if satisfaction(theta) >= 1.0 - target_beta {
            return Ok(CalibratedRadius {
                theta,
                saturated: false,
            });
        }
    }
    Ok(CalibratedRadius {
        theta: *theta_grid.last().expect("nonempty grid"),
        saturated: true,
    })
}

/// Exact worst-case expectation of `losses` over distributions on `grid`
/// reachable from the empirical weights `nu` within transport budget `theta`.
///
/// Solved as the primal transport linear program
/// `max sum_ij k_ij loss_j  s.t.  sum_j k_ij = nu_i, sum_ij k_ij d_ij <= theta`
/// with a Bland-rule revised simplex; this is the testing oracle for the
/// Kantorovich-dual reformulation and shares no code with it.
pub fn discrete_worstcase_expectation(
    grid: &[DVector<f64>],
    losses: &[f64],
    nu: &[f64],
    theta: f64,
    ground_norm: GroundNorm,
) -> Result<f64> {
    if grid.is_empty() || grid.len() != losses.len() || grid.len() != nu.len() {
        return Err(Error::InvalidInput(
            "grid, losses and weights must be nonempty and equally long".into(),
        ));
    }
    if theta < 0.0 {
        return Err(Error::InvalidInput("theta must be >= 0".into()));
    }
    let total: f64 = nu.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "weights must sum to 1, got {total}"
        )));
    }
    if nu.iter().any(|&w| w < -1e-12) {
        return Err(Error::InvalidInput("weights must be nonnegative".into()));
    }
    let sources: Vec<usize> = (0..grid.len()).filter(|&i| nu[i] > 1e-15).collect();
    let n_src = sources.len();
    let n_grid = grid.len();

    // Column layout: kappa[(src, dst)] row-major, then the budget slack.
    let n_cols = n_src * n_grid + 1;
    let n_rows = n_src + 1;
    let cost = |col: usize| -> f64 {
        if col < n_src * n_grid {
            losses[col % n_grid]
        } else {
            0.0
        }
    };
    let dist = |src: usize, dst: usize| ground_norm.eval(&(&grid[sources[src]] - &grid[dst]));
    // Column entries as (row, value) pairs.
    let column = |col: usize| -> Vec<(usize, f64)> {
        if col < n_src * n_grid {
            let s = col / n_grid;
            let d = col % n_grid;
            let c = dist(s, d);
            if c != 0.0 {
                vec![(s, 1.0), (n_src, c)]
            } else {
                vec![(s, 1.0)]
            }
        } else {
            vec![(n_src, 1.0)]
        }
    };
    let mut rhs = DVector::zeros(n_rows);
    for (s, &i) in sources.iter().enumerate() {
        rhs[s] = nu[i];
    }
    rhs[n_src] = theta;

    // Start basis: stay-at-source columns plus the budget slack.
    let mut basis: Vec<usize> = sources
        .iter()
        .enumerate()
        .map(|(s, &i)| s * n_grid + i)
        .collect();
    basis.push(n_cols - 1);

    let tol = 1e-10;
    for _iter in 0..200_000 {
        let mut b_mat = DMatrix::zeros(n_rows, n_rows);
        for (bi, &col) in basis.iter().enumerate() {
            for (r, v) in column(col) {
                b_mat[(r, bi)] = v;
            }
        }
        let lu = b_mat.clone().full_piv_lu();
        let x_b = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Internal("singular transport basis".into()))?;
        // Reduced costs via the dual vector.
        let mut c_b = DVector::zeros(n_rows);
        for (bi, &col) in basis.iter().enumerate() {
            c_b[bi] = cost(col);
        }
        let y = b_mat
            .transpose()
            .full_piv_lu()
            .solve(&c_b)
            .ok_or_else(|| Error::Internal("singular transport basis".into()))?;
        // Bland: smallest improving column (maximization: reduced cost > 0).
        let mut entering = None;
        for col in 0..n_cols {
            if basis.contains(&col) {
                continue;
            }
            let mut rc = cost(col);
            for (r, v) in column(col) {
                rc -= y[r] * v;
            }
            if rc > tol {
                entering = Some(col);
                break;
            }
        }
        let Some(entering) = entering else {
            let obj: f64 = basis
                .iter()
                .enumerate()
                .map(|(bi, &col)| cost(col) * x_b[bi])
                .sum();
            return Ok(obj);
        };
        let mut a_e = DVector::zeros(n_rows);
        for (r, v) in column(entering) {
            a_e[r] = v;
        }
        let dir = lu
            .solve(&a_e)
            .ok_or_else(|| Error::Internal("singular transport basis".into()))?;
        // Ratio test, Bland tiebreak on the basis column index.
        let mut leave: Option<(usize, f64)> = None;
        for bi in 0..n_rows {
            if dir[bi] > tol {
                let ratio = (x_b[bi] / dir[bi]).max(0.0);
                match leave {
                    None => leave = Some((bi, ratio)),
                    Some((lbi, lr)) => {
                        if ratio < lr - 1e-15
                            || ((ratio - lr).abs() <= 1e-15 && basis[bi] < basis[lbi])
                        {
                            leave = Some((bi, ratio));
                        }
                    }
                }
            }
        }
        let Some((leave_bi, _)) = leave else {
            return Err(Error::Internal("unbounded transport program".into()));
        };
        basis[leave_bi] = entering;
    }
    Err(Error::Internal("transport simplex iteration cap".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vecn(v: &[f64]) -> DVector<f64> {
        DVector::from_vec(v.to_vec())
    }

    /// Definitional oracle: minimize z + mean((x - z)+)/(1 - alpha). For an
    /// atomic law the optimum is attained at a sample, so scanning the sample
    /// values is exact.
    fn cvar_by_minimization(losses: &[f64], alpha: f64) -> f64 {
        let n = losses.len() as f64;
        let mut best = f64::INFINITY;
        for &z in losses {
            let mean_excess: f64 = losses.iter().map(|x| (x - z).max(0.0)).sum::<f64>() / n;
            best = best.min(z + mean_excess / (1.0 - alpha));
        }
        best
    }

    #[test]
    fn cvar_degenerate_distribution() {
        for alpha in [0.0, 0.3, 0.75, 0.99] {
            let v = empirical_cvar(&[2.5; 7], alpha).unwrap();
            assert!((v - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn cvar_alpha_zero_is_mean() {
        let losses = [1.0, 2.0, 3.0, 10.0];
        let v = empirical_cvar(&losses, 0.0).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn cvar_tail_example() {
        // Frozen from the z-scan oracle: minimizing z + mean((x - z)+)/0.25
        // over z attains 3 at z = 3.
        let losses = [0.0, 1.0, 2.0, 3.0];
        assert!((cvar_by_minimization(&losses, 0.75) - 3.0).abs() < 1e-12);
        let v = empirical_cvar(&losses, 0.75).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn cvar_empty_rejected() {
        assert!(empirical_cvar(&[], 0.5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]
        #[test]
        fn prop_cvar_matches_minimization_and_dominates_mean(
            losses in proptest::collection::vec(-5.0f64..5.0, 1..40),
            alpha in 0.0f64..0.95,
        ) {
            let v = empirical_cvar(&losses, alpha).unwrap();
            let oracle = cvar_by_minimization(&losses, alpha);
            prop_assert!((v - oracle).abs() < 1e-8, "{} vs {}", v, oracle);
            let mean: f64 = losses.iter().sum::<f64>() / losses.len() as f64;
            prop_assert!(v >= mean - 1e-10);
        }

        #[test]
        fn prop_cvar_monotone_in_alpha(
            losses in proptest::collection::vec(-5.0f64..5.0, 1..30),
            a in 0.0f64..0.9,
            bump in 0.0f64..0.09,
        ) {
            let lo = empirical_cvar(&losses, a).unwrap();
            let hi = empirical_cvar(&losses, a + bump).unwrap();
            prop_assert!(hi >= lo - 1e-10);
        }
    }

    #[test]
    fn radius_zero_at_full_confidence() {
        // beta = c1 makes the log term vanish.
        let consts = ConcentrationConstants {
            c1: 0.5,
            c2: 1.0,
            c: 2.0,
            beta: 0.5,
        };
        let theta = wasserstein_radius(1000, &consts, 3).unwrap();
        assert_eq!(theta, 0.0);
    }

    #[test]
    fn radius_small_sample_branch() {
        let consts = ConcentrationConstants {
            c1: 3.0,
            c2: 1.0,
            c: 2.0,
            beta: 0.05,
        };
        // N = 2 < log(60) ~ 4.094: the small-sample branch applies.
        let theta = wasserstein_radius(2, &consts, 2).unwrap();
        let expect = (60.0f64.ln() / 2.0).sqrt();
        assert!((theta - expect).abs() < 1e-12);
    }

    #[test]
    fn radius_dimension_branches() {
        let consts = ConcentrationConstants {
            c1: 3.0,
            c2: 1.0,
            c: 2.0,
            beta: 0.05,
        };
        let n = 100;
        let ratio = 60.0f64.ln() / 100.0;
        assert!((wasserstein_radius(n, &consts, 1).unwrap() - ratio).abs() < 1e-12);
        assert!((wasserstein_radius(n, &consts, 3).unwrap() - ratio.sqrt()).abs() < 1e-12);
        // n_y = 2: the returned value satisfies its defining equation.
        let theta = wasserstein_radius(n, &consts, 2).unwrap();
        let residual = theta / (2.0 + 1.0 / theta).ln() - ratio.sqrt();
        assert!(residual.abs() <= 1e-10, "residual {residual}");
    }

    #[test]
    fn radius_monotone_per_branch() {
        let consts = ConcentrationConstants::default();
        // Large-sample regime for each dimension.
        for n_y in [1usize, 2, 3] {
            let mut prev = f64::INFINITY;
            for n in [10usize, 20, 50, 100, 400] {
                let t = wasserstein_radius(n, &consts, n_y).unwrap();
                assert!(t <= prev + 1e-12, "n={n} n_y={n_y}");
                prev = t;
            }
        }
        // Monotone in beta (smaller beta -> larger radius).
        let mut prev = 0.0;
        for beta in [0.5, 0.2, 0.1, 0.01] {
            let consts = ConcentrationConstants {
                beta,
                ..ConcentrationConstants::default()
            };
            let t = wasserstein_radius(50, &consts, 2).unwrap();
            assert!(t >= prev - 1e-12);
            prev = t;
        }
    }

    #[test]
    fn calibration_picks_threshold() {
        let grid = [0.0, 0.1, 0.2, 0.3];
        // Always satisfied: smallest element.
        let r = calibrate_radius_bootstrap(&grid, 0.1, |_| 1.0).unwrap();
        assert_eq!(r.theta, 0.0);
        assert!(!r.saturated);
        // Never satisfied: largest element, flagged.
        let r = calibrate_radius_bootstrap(&grid, 0.1, |_| 0.0).unwrap();
        assert_eq!(r.theta, 0.3);
        assert!(r.saturated);
        // Step threshold at 0.2.
        let r =
            calibrate_radius_bootstrap(&grid, 0.1, |t| if t >= 0.2 { 1.0 } else { 0.5 }).unwrap();
        assert_eq!(r.theta, 0.2);
        assert!(!r.saturated);
    }

    fn grid_1d(points: &[f64]) -> Vec<DVector<f64>> {
        points.iter().map(|&x| vecn(&[x])).collect()
    }

    #[test]
    fn transport_theta_zero_is_nominal() {
        let grid = grid_1d(&[0.0, 0.5, 1.0]);
        let losses = [0.0, 0.3, 1.0];
        let nu = [0.5, 0.5, 0.0];
        let v =
            discrete_worstcase_expectation(&grid, &losses, &nu, 0.0, GroundNorm::One).unwrap();
        assert!((v - 0.15).abs() < 1e-10);
    }

    #[test]
    fn transport_large_theta_is_max() {
        let grid = grid_1d(&[0.0, 0.5, 1.0]);
        let losses = [0.0, 0.3, 1.0];
        let nu = [1.0, 0.0, 0.0];
        let v =
            discrete_worstcase_expectation(&grid, &losses, &nu, 10.0, GroundNorm::One).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn transport_intermediate_matches_vertex_enumeration() {
        // One source at 0, grid {0, 0.5, 1}, losses {0, 0.3, 1}, theta 0.4.
        // Exhaustive basic-solution enumeration gives 0.4 (move 0.4 mass to
        // the far point).
        let grid = grid_1d(&[0.0, 0.5, 1.0]);
        let losses = [0.0, 0.3, 1.0];
        let nu = [1.0, 0.0, 0.0];
        let theta = 0.4;
        // Independent check: enumerate all 2x2 bases of the standard form.
        let cols: Vec<(f64, f64, f64)> = vec![
            // (mass-row coeff, budget coeff, cost)
            (1.0, 0.0, 0.0),
            (1.0, 0.5, 0.3),
            (1.0, 1.0, 1.0),
            (0.0, 1.0, 0.0), // slack
        ];
        let mut best = f64::NEG_INFINITY;
        for i in 0..cols.len() {
            for j in (i + 1)..cols.len() {
                let det = cols[i].0 * cols[j].1 - cols[j].0 * cols[i].1;
                if det.abs() < 1e-12 {
                    continue;
                }
                let xi = (1.0 * cols[j].1 - cols[j].0 * theta) / det;
                let xj = (cols[i].0 * theta - 1.0 * cols[i].1) / det;
                if xi >= -1e-12 && xj >= -1e-12 {
                    best = best.max(cols[i].2 * xi + cols[j].2 * xj);
                }
            }
        }
        assert!((best - 0.4).abs() < 1e-10, "enumeration gave {best}");
        let v =
            discrete_worstcase_expectation(&grid, &losses, &nu, theta, GroundNorm::One).unwrap();
        assert!((v - best).abs() < 1e-9, "simplex {v} vs enumeration {best}");
    }

    #[test]
    fn transport_monotone_in_theta_and_bounded() {
        let grid: Vec<DVector<f64>> = (0..6)
            .flat_map(|i| (0..6).map(move |j| vecn(&[i as f64 * 0.2, j as f64 * 0.2])))
            .collect();
        let losses: Vec<f64> = grid
            .iter()
            .map(|p| (p[0] - p[1]).abs() + 0.1 * p[0])
            .collect();
        let mut nu = vec![0.0; grid.len()];
        nu[7] = 0.5;
        nu[22] = 0.25;
        nu[30] = 0.25;
        let max_loss = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut prev = f64::NEG_INFINITY;
        for theta in [0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 3.0] {
            let v = discrete_worstcase_expectation(&grid, &losses, &nu, theta, GroundNorm::Inf)
                .unwrap();
            assert!(v >= prev - 1e-9, "not monotone at theta={theta}");
            assert!(v <= max_loss + 1e-9);
            prev = v;
        }
        assert!((prev - max_loss).abs() < 1e-9);
    }

    #[test]
    fn draw_uniform_in_box() {
        let spec = DistributionSpec::UniformBox {
            lower: vec![-0.2, -0.2],
            upper: vec![0.2, 0.2],
        };
        let support = spec.default_support().unwrap();
        let set = draw_samples(&spec, &support, 200, 1).unwrap();
        for s in &set.samples {
            assert!(s.iter().all(|v| (-0.2..=0.2).contains(v)));
        }
    }

    #[test]
    fn draw_zero_variance_gaussian() {
        let spec = DistributionSpec::GaussianAxes {
            mean: vec![0.1, -0.1],
            std: vec![0.0, 0.0],
        };
        let support = spec.default_support().unwrap();
        let set = draw_samples(&spec, &support, 10, 3).unwrap();
        for s in &set.samples {
            assert!((s[0] - 0.1).abs() < 1e-9 && (s[1] + 0.1).abs() < 1e-9);
        }
    }

    #[test]
    fn draw_deterministic_per_seed() {
        let spec = DistributionSpec::GaussianAxes {
            mean: vec![0.2, 0.0],
            std: vec![0.1, 0.3],
        };
        let support = spec.default_support().unwrap();
        let a = draw_samples(&spec, &support, 50, 42).unwrap();
        let b = draw_samples(&spec, &support, 50, 42).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn sample_set_scaling_rule() {
        let support = SupportPolytope::from_box(&[-0.2, -0.2], &[0.2, 0.2]).unwrap();
        let base =
            StageSamples::new(support, vec![vecn(&[0.1, -0.05]), vecn(&[-0.2, 0.2])]).unwrap();
        let set = SampleSet::from_one_step(vec![base], 3).unwrap();
        assert_eq!(set.horizon(), 3);
        let s3 = set.stage(0, 3);
        assert!((s3.samples[0][0] - 0.3).abs() < 1e-12);
        assert!(s3.support.contains(&vecn(&[0.6, 0.6])));
        assert!(!s3.support.contains(&vecn(&[0.61, 0.0])));
    }

    #[test]
    fn stage_samples_reject_outside_support() {
        let support = SupportPolytope::from_box(&[-0.1, -0.1], &[0.1, 0.1]).unwrap();
        let err = StageSamples::new(support, vec![vecn(&[0.5, 0.0])]);
        assert!(err.is_err());
    }

    #[test]
    fn samples_csv_roundtrip() {
        let support = SupportPolytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let set = StageSamples::new(
            support.clone(),
            vec![vecn(&[0.25, -0.5]), vecn(&[0.0, 0.125])],
        )
        .unwrap();
        let text = set.to_csv();
        let back = StageSamples::from_csv(&text, support).unwrap();
        assert_eq!(back.samples, set.samples);
    }
}
