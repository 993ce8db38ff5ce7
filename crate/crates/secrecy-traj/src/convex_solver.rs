//! Log-barrier Newton solver for the trajectory subproblem class.
//!
//! The class is narrow: maximize a concave objective made of linear terms
//! plus terms `-ln(1 + c / z_k)`, subject to linear inequalities and convex
//! quadratic inequalities (sums of squared affine forms plus an affine part,
//! which covers displacement balls and paraboloid epigraphs). Problems of
//! this shape have a few thousand variables at most and nearly banded
//! Hessians, so a self-contained barrier method with a banded Cholesky
//! factorization is all that is needed.
//!
//! Internally the solver maximizes `f(z) + mu * sum ln(-g_i(z))`, shrinking
//! `mu` by a factor of 10 per stage from 0.1 and warm-starting each stage at
//! the previous solution. The suboptimality certificate is the standard
//! duality-gap bound `m * mu` for `m` inequality constraints.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("start point is not strictly feasible: {0}")]
    InfeasibleStart(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Sparse affine form `sum coeff * z[idx] + constant`.
#[derive(Debug, Clone)]
pub struct AffineForm {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineForm {
    pub fn new(terms: Vec<(usize, f64)>, constant: f64) -> Self {
        Self { terms, constant }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * z[i]).sum::<f64>() + self.constant
    }

    fn dot_direction(&self, d: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * d[i]).sum()
    }
}

/// Objective term `-ln(1 + constant / z[index])`, concave and increasing on
/// `z[index] > 0`.
#[derive(Debug, Clone, Copy)]
pub struct LogTerm {
    pub index: usize,
    pub constant: f64,
}

/// Linear inequality `form(z) <= 0`.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub form: AffineForm,
}

/// Convex quadratic inequality `sum_r squares[r](z)^2 + affine(z) <= 0`.
#[derive(Debug, Clone)]
pub struct QuadConstraint {
    pub squares: Vec<AffineForm>,
    pub affine: AffineForm,
}

impl QuadConstraint {
    pub fn value(&self, z: &[f64]) -> f64 {
        let sq: f64 = self.squares.iter().map(|s| s.value(z).powi(2)).sum();
        sq + self.affine.value(z)
    }
}

/// A problem instance for [`solve`].
///
/// Constraint multipliers and values are ordered linear-first throughout.
#[derive(Debug, Clone)]
pub struct ConvexProblem {
    pub num_vars: usize,
    /// Linear objective coefficients, dense.
    pub linear_objective: Vec<f64>,
    /// `-ln(1 + c / z_k)` objective terms; constants must be nonnegative.
    pub log_terms: Vec<LogTerm>,
    pub linear_constraints: Vec<LinearConstraint>,
    pub quad_constraints: Vec<QuadConstraint>,
    /// Strictly feasible start point.
    pub start: Vec<f64>,
}

impl ConvexProblem {
    pub fn num_constraints(&self) -> usize {
        self.linear_constraints.len() + self.quad_constraints.len()
    }

    /// Objective value; `None` outside the log-term domain.
    pub fn objective_value(&self, z: &[f64]) -> Option<f64> {
        let mut v: f64 = self.linear_objective.iter().zip(z).map(|(c, zj)| c * zj).sum();
        for lt in &self.log_terms {
            let t = z[lt.index];
            if t <= 0.0 {
                return None;
            }
            v -= (1.0 + lt.constant / t).ln();
        }
        Some(v)
    }

    /// All constraint values at `z`, linear first.
    pub fn constraint_values(&self, z: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_constraints());
        out.extend(self.linear_constraints.iter().map(|c| c.form.value(z)));
        out.extend(self.quad_constraints.iter().map(|c| c.value(z)));
        out
    }

    fn check_start(&self) -> Result<(), SolverError> {
        if self.start.len() != self.num_vars {
            return Err(SolverError::DimensionMismatch(format!(
                "start has length {}, problem has {} variables",
                self.start.len(),
                self.num_vars
            )));
        }
        if self.linear_objective.len() != self.num_vars {
            return Err(SolverError::DimensionMismatch(format!(
                "objective has length {}, problem has {} variables",
                self.linear_objective.len(),
                self.num_vars
            )));
        }
        for lt in &self.log_terms {
            if lt.constant < 0.0 {
                return Err(SolverError::InfeasibleStart(format!(
                    "log term at variable {} has negative constant {}",
                    lt.index, lt.constant
                )));
            }
            if self.start[lt.index] <= 0.0 {
                return Err(SolverError::InfeasibleStart(format!(
                    "log-domain variable {} must start positive, got {}",
                    lt.index, self.start[lt.index]
                )));
            }
        }
        for (i, g) in self.constraint_values(&self.start).into_iter().enumerate() {
            if g >= 0.0 {
                return Err(SolverError::InfeasibleStart(format!(
                    "constraint {i} has value {g} at the start point"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome flag of a [`solve`] call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolverStatus {
    /// Duality gap below tolerance and the KKT residual certified.
    Converged,
    /// Duality gap below tolerance, but the stationarity residual bottomed
    /// out above the certification bound: the objective value is still
    /// trustworthy to the requested tolerance, the multiplier certificate is
    /// only as sharp as double precision allows on this instance.
    PrecisionLimited,
    Failed,
}

/// Solution, certificates, and iteration counters from one solve.
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub solution: Vec<f64>,
    pub objective: f64,
    /// Barrier multiplier estimates, one per constraint, linear first.
    pub multipliers: Vec<f64>,
    /// Max of the stationarity infinity-norm and the complementarity
    /// magnitudes at the solution.
    pub kkt_residual: f64,
    /// Largest positive constraint value (0 when feasible).
    pub max_violation: f64,
    pub barrier_iterations: usize,
    pub newton_iterations: usize,
    pub status: SolverStatus,
    pub diagnostic: Option<String>,
    /// Barrier-augmented objective after each accepted Newton step, one inner
    /// vector per stage. Values within a stage never decrease.
    pub stage_objectives: Vec<Vec<f64>>,
}

const BARRIER_MU0: f64 = 0.1;
const BARRIER_SHRINK: f64 = 0.1;
const MAX_BARRIER_STAGES: usize = 12;
const MAX_NEWTON_PER_STAGE: usize = 200;
const ARMIJO_SLOPE: f64 = 0.25;
const BACKTRACK_FACTOR: f64 = 0.5;
const BOUNDARY_FRACTION: f64 = 0.99;
const NEWTON_DECREMENT_TOL: f64 = 1e-16;
const CONVERGED_KKT_SCALE: f64 = 1e-8;

/// Symmetric positive-definite band matrix in lower-band storage.
struct BandMatrix {
    n: usize,
    bw: usize,
    /// Entry `(j + d, j)` lives at `cols[j * (bw + 1) + d]`.
    cols: Vec<f64>,
}

impl BandMatrix {
    fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, cols: vec![0.0; n * (bw + 1)] }
    }

    fn reset(&mut self) {
        self.cols.fill(0.0);
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        debug_assert!(d <= self.bw, "entry ({i},{j}) outside bandwidth {}", self.bw);
        self.cols[lo * (self.bw + 1) + d] += v;
    }

    fn get(&self, hi: usize, lo: usize) -> f64 {
        self.cols[lo * (self.bw + 1) + (hi - lo)]
    }

    fn max_diagonal(&self) -> f64 {
        (0..self.n).map(|j| self.cols[j * (self.bw + 1)]).fold(0.0, f64::max)
    }

    fn add_ridge(&mut self, ridge: f64) {
        for j in 0..self.n {
            self.cols[j * (self.bw + 1)] += ridge;
        }
    }

    /// In-place banded Cholesky `A = L L^T`. Fails on loss of positive
    /// definiteness.
    fn cholesky(&mut self) -> Result<(), ()> {
        let bw = self.bw;
        for j in 0..self.n {
            let k0 = j.saturating_sub(bw);
            let mut d = self.get(j, j);
            for k in k0..j {
                let l = self.get(j, k);
                d -= l * l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(());
            }
            let ljj = d.sqrt();
            self.cols[j * (bw + 1)] = ljj;
            let imax = (j + bw).min(self.n - 1);
            for i in (j + 1)..=imax {
                let mut s = self.get(i, j);
                let kk0 = i.saturating_sub(bw).max(k0);
                for k in kk0..j {
                    s -= self.get(i, k) * self.get(j, k);
                }
                self.cols[j * (bw + 1) + (i - j)] = s / ljj;
            }
        }
        Ok(())
    }

    /// Solve `L L^T x = b` after [`Self::cholesky`].
    fn solve_factored(&self, b: &[f64]) -> Vec<f64> {
        let bw = self.bw;
        let n = self.n;
        let mut x = b.to_vec();
        for j in 0..n {
            let k0 = j.saturating_sub(bw);
            let mut s = x[j];
            for k in k0..j {
                s -= self.get(j, k) * x[k];
            }
            x[j] = s / self.get(j, j);
        }
        for j in (0..n).rev() {
            let imax = (j + bw).min(n - 1);
            let mut s = x[j];
            for i in (j + 1)..=imax {
                s -= self.get(i, j) * x[i];
            }
            x[j] = s / self.get(j, j);
        }
        x
    }
}

/// Scratch for one constraint's sparse gradient; supports repeated indices.
fn push_sparse(buf: &mut Vec<(usize, f64)>, idx: usize, val: f64) {
    for entry in buf.iter_mut() {
        if entry.0 == idx {
            entry.1 += val;
            return;
        }
    }
    buf.push((idx, val));
}

struct Assembly {
    grad: Vec<f64>,
    neg_hess: BandMatrix,
}

fn required_bandwidth(prob: &ConvexProblem) -> usize {
    let mut bw = 0usize;
    let mut span = |support: &mut Vec<usize>| {
        if let (Some(&lo), Some(&hi)) = (support.iter().min(), support.iter().max()) {
            bw = bw.max(hi - lo);
        }
        support.clear();
    };
    let mut support = Vec::new();
    for c in &prob.linear_constraints {
        support.extend(c.form.terms.iter().map(|&(i, _)| i));
        span(&mut support);
    }
    for c in &prob.quad_constraints {
        for s in &c.squares {
            support.extend(s.terms.iter().map(|&(i, _)| i));
        }
        support.extend(c.affine.terms.iter().map(|&(i, _)| i));
        span(&mut support);
    }
    bw.min(prob.num_vars.saturating_sub(1))
}

/// Gradient of the barrier objective and its negated Hessian at `z`.
fn assemble(prob: &ConvexProblem, z: &[f64], mu: f64, out: &mut Assembly, scratch: &mut Vec<(usize, f64)>) {
    let grad = &mut out.grad;
    let neg_hess = &mut out.neg_hess;
    grad.copy_from_slice(&prob.linear_objective);
    neg_hess.reset();

    for lt in &prob.log_terms {
        let t = z[lt.index];
        let p = lt.constant;
        let denom = t * (t + p);
        grad[lt.index] += p / denom;
        neg_hess.add(lt.index, lt.index, p * (2.0 * t + p) / (denom * denom));
    }

    for c in &prob.linear_constraints {
        let g = c.form.value(z);
        let w = mu / g; // negative
        for &(i, ci) in &c.form.terms {
            grad[i] += w * ci;
        }
        let outer = mu / (g * g);
        for (p1, &(i1, c1)) in c.form.terms.iter().enumerate() {
            for &(i2, c2) in &c.form.terms[..=p1] {
                neg_hess.add(i1, i2, outer * c1 * c2);
            }
        }
    }

    for c in &prob.quad_constraints {
        let g = c.value(z);
        scratch.clear();
        for s in &c.squares {
            let v = s.value(z);
            for &(i, ci) in &s.terms {
                push_sparse(scratch, i, 2.0 * v * ci);
            }
        }
        for &(i, ci) in &c.affine.terms {
            push_sparse(scratch, i, ci);
        }
        let w = mu / g;
        for &(i, ci) in scratch.iter() {
            grad[i] += w * ci;
        }
        // Curvature of g itself, scaled by mu / (-g).
        let curve = mu / (-g);
        for s in &c.squares {
            for (p1, &(i1, c1)) in s.terms.iter().enumerate() {
                for &(i2, c2) in &s.terms[..=p1] {
                    neg_hess.add(i1, i2, 2.0 * curve * c1 * c2);
                }
            }
        }
        let outer = mu / (g * g);
        for (p1, &(i1, c1)) in scratch.iter().enumerate() {
            for &(i2, c2) in &scratch[..=p1] {
                neg_hess.add(i1, i2, outer * c1 * c2);
            }
        }
    }
}

/// Barrier objective `f(z) + mu * sum ln(-g_i(z))`; `None` off the domain.
fn barrier_value(prob: &ConvexProblem, z: &[f64], mu: f64) -> Option<f64> {
    let mut v = prob.objective_value(z)?;
    for c in &prob.linear_constraints {
        let g = c.form.value(z);
        if g >= 0.0 {
            return None;
        }
        v += mu * (-g).ln();
    }
    for c in &prob.quad_constraints {
        let g = c.value(z);
        if g >= 0.0 {
            return None;
        }
        v += mu * (-g).ln();
    }
    Some(v)
}

/// Largest step along `dir` keeping every constraint strictly satisfied.
fn boundary_step(prob: &ConvexProblem, z: &[f64], dir: &[f64]) -> f64 {
    let mut s_max = f64::INFINITY;
    for lt in &prob.log_terms {
        let d = dir[lt.index];
        if d < 0.0 {
            s_max = s_max.min(-z[lt.index] / d);
        }
    }
    for c in &prob.linear_constraints {
        let slope = c.form.dot_direction(dir);
        if slope > 0.0 {
            s_max = s_max.min(-c.form.value(z) / slope);
        }
    }
    for c in &prob.quad_constraints {
        // g(z + s d) = g2 s^2 + g1 s + g0 with g2 >= 0 and g0 < 0.
        let mut g2 = 0.0;
        let mut g1 = c.affine.dot_direction(dir);
        for sq in &c.squares {
            let v = sq.value(z);
            let w = sq.dot_direction(dir);
            g2 += w * w;
            g1 += 2.0 * v * w;
        }
        let g0 = c.value(z);
        if g2 <= 1e-300 {
            if g1 > 0.0 {
                s_max = s_max.min(-g0 / g1);
            }
        } else {
            let disc = g1 * g1 - 4.0 * g2 * g0;
            let root = (-g1 + disc.sqrt()) / (2.0 * g2);
            if root > 0.0 {
                s_max = s_max.min(root);
            }
        }
    }
    s_max
}

/// Multiplier estimates `mu / (-g_i)` at `z`, linear constraints first.
fn multiplier_estimates(prob: &ConvexProblem, z: &[f64], mu: f64) -> Vec<f64> {
    prob.constraint_values(z).iter().map(|&g| mu / (-g)).collect()
}

/// Sparse constraint gradients at `z`, linear constraints first.
fn constraint_gradients(prob: &ConvexProblem, z: &[f64]) -> Vec<Vec<(usize, f64)>> {
    let mut out = Vec::with_capacity(prob.num_constraints());
    for c in &prob.linear_constraints {
        out.push(c.form.terms.clone());
    }
    for c in &prob.quad_constraints {
        let mut grad: Vec<(usize, f64)> = Vec::new();
        for s in &c.squares {
            let v = s.value(z);
            for &(i, ci) in &s.terms {
                push_sparse(&mut grad, i, 2.0 * v * ci);
            }
        }
        for &(i, ci) in &c.affine.terms {
            push_sparse(&mut grad, i, ci);
        }
        out.push(grad);
    }
    out
}

/// Characteristic magnitude of each constraint at `z`: the size of the terms
/// summed in its evaluation plus its gradient norm, so that a constraint
/// whose terms all vanish at the optimum still gets a sensible scale.
fn constraint_scales(prob: &ConvexProblem, z: &[f64], grads: &[Vec<(usize, f64)>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(prob.num_constraints());
    for c in &prob.linear_constraints {
        let s: f64 =
            c.form.terms.iter().map(|&(i, ci)| (ci * z[i]).abs()).sum::<f64>()
                + c.form.constant.abs();
        out.push(s);
    }
    for c in &prob.quad_constraints {
        let mut s: f64 = c.squares.iter().map(|sq| sq.value(z).powi(2)).sum();
        s += c.affine.terms.iter().map(|&(i, ci)| (ci * z[i]).abs()).sum::<f64>();
        s += c.affine.constant.abs();
        out.push(s);
    }
    for (s, grad) in out.iter_mut().zip(grads) {
        let gnorm = grad.iter().fold(0.0f64, |acc, &(_, g)| acc.max(g.abs()));
        *s = (*s + gnorm).max(1e-300);
    }
    out
}

/// Objective gradient at `z`.
fn objective_gradient(prob: &ConvexProblem, z: &[f64]) -> Vec<f64> {
    let mut grad = prob.linear_objective.clone();
    for lt in &prob.log_terms {
        let t = z[lt.index];
        grad[lt.index] += lt.constant / (t * (t + lt.constant));
    }
    grad
}

/// Least-squares refinement of the barrier multiplier estimates.
///
/// The raw estimates `mu / (-g_i)` certify stationarity poorly in floating
/// point: near-active constraints have slacks at the rounding level of their
/// own evaluation, so dividing by them amplifies noise far beyond the true
/// dual error. Fitting the multipliers of the near-active constraints to the
/// objective gradient instead measures the distance to stationarity without
/// that amplification. The fit solves banded normal equations over the
/// active set (constraints sorted by their lowest variable index) and clamps
/// stray negatives to zero.
fn refined_multipliers(prob: &ConvexProblem, z: &[f64], mu: f64) -> Vec<f64> {
    let raw = multiplier_estimates(prob, z, mu);
    let m = raw.len();
    if m == 0 {
        return raw;
    }
    // Near-active means the slack is small against the magnitude of the
    // terms summed to evaluate the constraint, which is also the scale of
    // its evaluation noise.
    let values = prob.constraint_values(z);
    let grads = constraint_gradients(prob, z);
    let scales = constraint_scales(prob, z, &grads);
    let mut active: Vec<usize> = (0..m)
        .filter(|&i| values[i].abs() <= 1e-6 * scales[i] && !grads[i].is_empty())
        .collect();
    if active.is_empty() {
        return raw;
    }
    active.sort_by_key(|&i| {
        grads[i].iter().map(|&(v, _)| v).min().expect("nonempty gradient")
    });
    let is_active = {
        let mut flags = vec![false; m];
        for &i in &active {
            flags[i] = true;
        }
        flags
    };

    // Positions of active constraints touching each variable.
    let mut per_var: Vec<Vec<usize>> = vec![Vec::new(); prob.num_vars];
    for (pos, &ci) in active.iter().enumerate() {
        for &(v, _) in &grads[ci] {
            per_var[v].push(pos);
        }
    }
    let mut bw = 0usize;
    for touching in &per_var {
        if let (Some(&lo), Some(&hi)) = (touching.first(), touching.last()) {
            bw = bw.max(hi - lo);
        }
    }

    // The fit targets the objective gradient minus the barrier contributions
    // of the constraints that stay inactive: the returned point is a central
    // point, so those small forces are genuinely present and would otherwise
    // show up as phantom stationarity error.
    let mut target = objective_gradient(prob, z);
    for i in 0..m {
        if !is_active[i] {
            for &(v, gv) in &grads[i] {
                target[v] -= raw[i] * gv;
            }
        }
    }

    // Normal equations G^T G (banded in the sorted order) and G^T target.
    let k = active.len();
    let mut normal = BandMatrix::zeros(k, bw.min(k - 1));
    let mut rhs = vec![0.0; k];
    for (v, touching) in per_var.iter().enumerate() {
        for (a, &p1) in touching.iter().enumerate() {
            let g1 = grads[active[p1]].iter().find(|&&(i, _)| i == v).unwrap().1;
            rhs[p1] += g1 * target[v];
            for &p2 in &touching[..=a] {
                let g2 = grads[active[p2]].iter().find(|&&(i, _)| i == v).unwrap().1;
                normal.add(p1, p2, g1 * g2);
            }
        }
    }

    // Jacobi-equilibrate before adding the ridge, otherwise the ridge biases
    // multipliers on small-gradient columns by far more than the residual
    // we are trying to certify.
    let scale: Vec<f64> = (0..k)
        .map(|j| normal.cols[j * (normal.bw + 1)].max(1e-300).sqrt())
        .collect();
    for j in 0..k {
        for d in 0..=normal.bw {
            if j + d < k {
                normal.cols[j * (normal.bw + 1) + d] /= scale[j] * scale[j + d];
            }
        }
        rhs[j] /= scale[j];
    }
    normal.add_ridge(1e-12);
    let unfactored = BandMatrix { n: normal.n, bw: normal.bw, cols: normal.cols.clone() };
    if normal.cholesky().is_err() {
        return raw;
    }
    // The chain structure makes the normal equations badly conditioned;
    // a couple of refinement passes recover the digits Cholesky loses.
    let mut fitted = normal.solve_factored(&rhs);
    for _ in 0..2 {
        let mut residual = rhs.clone();
        for j in 0..k {
            for d in 0..=unfactored.bw {
                if j + d < k {
                    let a = unfactored.cols[j * (unfactored.bw + 1) + d];
                    residual[j] -= a * fitted[j + d];
                    if d > 0 {
                        residual[j + d] -= a * fitted[j];
                    }
                }
            }
        }
        let correction = normal.solve_factored(&residual);
        for (f, c) in fitted.iter_mut().zip(&correction) {
            *f += c;
        }
    }

    // Inactive constraints keep their barrier estimates so that the reported
    // multipliers reproduce the fitted stationarity.
    let mut out = raw;
    for (pos, &ci) in active.iter().enumerate() {
        out[ci] = (fitted[pos] / scale[pos]).max(0.0);
    }
    out
}

/// Maximize the problem objective to within `tol`.
///
/// The start point must be strictly feasible. A `Converged` status certifies
/// a duality gap of at most `tol` and a KKT residual within
/// `1e-8 * (1 + |objective|)`; exhausting an iteration budget yields a
/// `Failed` report rather than a silent low-accuracy answer.
pub fn solve(prob: &ConvexProblem, tol: f64) -> Result<SolverReport, SolverError> {
    prob.check_start()?;
    let n = prob.num_vars;
    let m = prob.num_constraints() as f64;
    let bw = required_bandwidth(prob);

    let mut z = prob.start.clone();
    let mut mu = BARRIER_MU0;
    let mut assembly = Assembly { grad: vec![0.0; n], neg_hess: BandMatrix::zeros(n, bw) };
    let mut scratch: Vec<(usize, f64)> = Vec::new();
    let mut stage_objectives = Vec::new();
    let mut newton_total = 0usize;
    let mut stages = 0usize;
    let mut previous_kkt: Option<f64> = None;

    let fail = |z: &[f64],
                mu: f64,
                stages,
                newton_total,
                stage_objectives: Vec<Vec<f64>>,
                why: String| {
        let objective = prob.objective_value(z).unwrap_or(f64::NAN);
        let multipliers = refined_multipliers(prob, z, mu);
        let kkt = kkt_residual(prob, z, &multipliers).unwrap_or(f64::NAN);
        let max_violation = prob.constraint_values(z).into_iter().fold(0.0f64, f64::max);
        SolverReport {
            solution: z.to_vec(),
            objective,
            multipliers,
            kkt_residual: kkt,
            max_violation,
            barrier_iterations: stages,
            newton_iterations: newton_total,
            status: SolverStatus::Failed,
            diagnostic: Some(why),
            stage_objectives,
        }
    };

    loop {
        stages += 1;
        let mut history = vec![barrier_value(prob, &z, mu).expect("iterate left the domain")];
        let mut stage_done = false;
        let mut best_dec = f64::INFINITY;
        let mut stagnant = 0usize;

        for _ in 0..MAX_NEWTON_PER_STAGE {
            assemble(prob, &z, mu, &mut assembly, &mut scratch);

            // Factor -H, retrying with a diagonal ridge if it is numerically
            // semidefinite.
            let mut ridge = 0.0;
            let delta = loop {
                let mut factor = BandMatrix {
                    n,
                    bw,
                    cols: assembly.neg_hess.cols.clone(),
                };
                if ridge > 0.0 {
                    factor.add_ridge(ridge);
                }
                match factor.cholesky() {
                    Ok(()) => break factor.solve_factored(&assembly.grad),
                    Err(()) => {
                        ridge = if ridge == 0.0 {
                            1e-12 * (1.0 + assembly.neg_hess.max_diagonal())
                        } else {
                            ridge * 100.0
                        };
                        if ridge > 1e6 * (1.0 + assembly.neg_hess.max_diagonal()) {
                            return Ok(fail(
                                &z,
                                mu,
                                stages,
                                newton_total,
                                stage_objectives,
                                "Hessian factorization failed".into(),
                            ));
                        }
                    }
                }
            };

            let dec_sq: f64 = assembly.grad.iter().zip(&delta).map(|(g, d)| g * d).sum();
            let psi = *history.last().unwrap();
            if std::env::var_os("SOLVER_TRACE").is_some() {
                eprintln!("  mu {mu:.1e} newton {newton_total}: dec_sq {dec_sq:.3e} psi {psi:.9e}");
            }
            if dec_sq <= 2.0 * NEWTON_DECREMENT_TOL * (1.0 + psi.abs()) {
                stage_done = true;
                break;
            }
            // Decrements stop shrinking once rounding dominates; a plateau
            // this close to stationarity is the numerical floor, not a
            // failure to converge.
            if dec_sq <= 1e-6 * (1.0 + psi.abs()) {
                if dec_sq > 0.5 * best_dec {
                    stagnant += 1;
                    if stagnant >= 4 {
                        stage_done = true;
                        break;
                    }
                } else {
                    stagnant = 0;
                }
            }
            best_dec = best_dec.min(dec_sq);

            newton_total += 1;
            let s_boundary = boundary_step(prob, &z, &delta);
            let mut s = (BOUNDARY_FRACTION * s_boundary).min(1.0);
            let mut accepted = false;
            // Sufficient-increase targets below the representable resolution
            // of psi cannot be tested; take the (feasible) step outright.
            let noise = 1e-14 * (1.0 + psi.abs());
            for _ in 0..80 {
                let candidate: Vec<f64> =
                    z.iter().zip(&delta).map(|(zi, di)| zi + s * di).collect();
                if let Some(v) = barrier_value(prob, &candidate, mu) {
                    let target = ARMIJO_SLOPE * s * dec_sq;
                    if v >= psi + target || target <= noise {
                        z = candidate;
                        history.push(v);
                        accepted = true;
                        break;
                    }
                }
                s *= BACKTRACK_FACTOR;
            }
            if !accepted {
                // A stalled line search this close to stationarity is
                // convergence; anywhere else it is a failure.
                if dec_sq <= 2e-6 * (1.0 + psi.abs()) {
                    stage_done = true;
                    break;
                }
                return Ok(fail(
                    &z,
                    mu,
                    stages,
                    newton_total,
                    stage_objectives,
                    format!("line search stalled with Newton decrement {dec_sq:.3e}"),
                ));
            }
        }

        stage_objectives.push(history);
        if !stage_done {
            return Ok(fail(
                &z,
                mu,
                stages,
                newton_total,
                stage_objectives,
                format!("Newton budget of {MAX_NEWTON_PER_STAGE} exhausted at mu = {mu:.3e}"),
            ));
        }

        let objective = prob.objective_value(&z).expect("iterate left the domain");
        let multipliers = refined_multipliers(prob, &z, mu);
        let kkt = kkt_residual(prob, &z, &multipliers).expect("dimensions fixed");
        let gap = m * mu;
        if std::env::var_os("SOLVER_TRACE").is_some() {
            eprintln!("stage end mu {mu:.1e}: gap {gap:.3e} kkt {kkt:.3e} bound {:.3e}",
                CONVERGED_KKT_SCALE * (1.0 + objective.abs()));
        }
        if gap < tol {
            let certified = kkt <= CONVERGED_KKT_SCALE * (1.0 + objective.abs());
            // A stationarity residual that stopped responding to the barrier
            // parameter has hit the floor of double precision; continuing
            // the schedule cannot sharpen the certificate.
            let frozen = previous_kkt.map_or(false, |prev: f64| kkt > 0.9 * prev);
            if certified || frozen || stages >= MAX_BARRIER_STAGES {
                let max_violation =
                    prob.constraint_values(&z).into_iter().fold(0.0f64, f64::max);
                let status = if certified {
                    SolverStatus::Converged
                } else {
                    SolverStatus::PrecisionLimited
                };
                let diagnostic = (!certified).then(|| {
                    format!(
                        "stationarity residual floor {kkt:.3e} above certification bound \
                         {:.3e}",
                        CONVERGED_KKT_SCALE * (1.0 + objective.abs())
                    )
                });
                return Ok(SolverReport {
                    solution: z,
                    objective,
                    multipliers,
                    kkt_residual: kkt,
                    max_violation,
                    barrier_iterations: stages,
                    newton_iterations: newton_total,
                    status,
                    diagnostic,
                    stage_objectives,
                });
            }
        }
        if stages >= MAX_BARRIER_STAGES {
            return Ok(fail(
                &z,
                mu,
                stages,
                newton_total,
                stage_objectives,
                format!("barrier stage budget exhausted with gap bound {gap:.3e} >= {tol:.3e}"),
            ));
        }
        previous_kkt = Some(kkt);
        mu *= BARRIER_SHRINK;
    }
}

/// KKT residual of a candidate point and multipliers: the max of the
/// stationarity infinity-norm and the largest complementary-slackness
/// magnitude `|multiplier * constraint|`.
pub fn kkt_residual(
    prob: &ConvexProblem,
    point: &[f64],
    multipliers: &[f64],
) -> Result<f64, SolverError> {
    if point.len() != prob.num_vars {
        return Err(SolverError::DimensionMismatch(format!(
            "point has length {}, problem has {} variables",
            point.len(),
            prob.num_vars
        )));
    }
    if multipliers.len() != prob.num_constraints() {
        return Err(SolverError::DimensionMismatch(format!(
            "{} multipliers for {} constraints",
            multipliers.len(),
            prob.num_constraints()
        )));
    }
    debug_assert!(multipliers.iter().all(|&m| m >= 0.0), "multipliers must be nonnegative");

    // Stationarity of the Lagrangian f - sum mu_i g_i.
    let mut stationarity = objective_gradient(prob, point);
    let constraint_values = prob.constraint_values(point);
    for (grad, &mult) in constraint_gradients(prob, point).iter().zip(multipliers) {
        for &(i, ci) in grad {
            stationarity[i] -= mult * ci;
        }
    }

    let stat_norm = stationarity.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let compl_norm = constraint_values
        .iter()
        .zip(multipliers)
        .fold(0.0f64, |acc, (&g, &m)| acc.max((m * g).abs()));
    Ok(stat_norm.max(compl_norm))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// maximize -(z0 - 3)^2 over z0 in [0, 10], via the epigraph variable
    /// z1 >= (z0 - 3)^2 and objective -z1.
    fn box_quadratic() -> ConvexProblem {
        ConvexProblem {
            num_vars: 2,
            linear_objective: vec![0.0, -1.0],
            log_terms: vec![],
            linear_constraints: vec![
                LinearConstraint { form: AffineForm::new(vec![(0, -1.0)], 0.0) },
                LinearConstraint { form: AffineForm::new(vec![(0, 1.0)], -10.0) },
            ],
            quad_constraints: vec![QuadConstraint {
                squares: vec![AffineForm::new(vec![(0, 1.0)], -3.0)],
                affine: AffineForm::new(vec![(1, -1.0)], 0.0),
            }],
            start: vec![1.0, 10.0],
        }
    }

    #[test]
    fn quadratic_box_optimum() {
        let prob = box_quadratic();
        let report = solve(&prob, 1e-9).unwrap();
        assert_eq!(report.status, SolverStatus::Converged);
        assert!((report.solution[0] - 3.0).abs() < 1e-4, "z = {:?}", report.solution);
        assert!(report.objective.abs() < 1e-7);
        assert!(report.max_violation <= 1e-10);
        assert!(report.kkt_residual <= 1e-8 * (1.0 + report.objective.abs()));
    }

    #[test]
    fn scaling_objective_preserves_argmax() {
        let prob = box_quadratic();
        let mut scaled = prob.clone();
        for c in &mut scaled.linear_objective {
            *c *= 2.0;
        }
        let a = solve(&prob, 1e-10).unwrap();
        let b = solve(&scaled, 1e-10).unwrap();
        assert!((a.solution[0] - b.solution[0]).abs() < 1e-8);
    }

    #[test]
    fn kkt_zero_at_analytic_optimum() {
        // At (3, 0) the epigraph constraint is active with multiplier 1; the
        // box constraints are slack with multiplier 0.
        let prob = box_quadratic();
        let residual = kkt_residual(&prob, &[3.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        assert!(residual <= 1e-12, "residual = {residual}");
    }

    #[test]
    fn kkt_grows_under_perturbation() {
        let prob = box_quadratic();
        let at_opt = kkt_residual(&prob, &[3.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        let perturbed = kkt_residual(&prob, &[3.001, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        assert!(perturbed > at_opt);
    }

    #[test]
    fn kkt_checks_dimensions() {
        let prob = box_quadratic();
        assert!(kkt_residual(&prob, &[3.0], &[0.0, 0.0, 1.0]).is_err());
        assert!(kkt_residual(&prob, &[3.0, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let mut prob = box_quadratic();
        prob.start = vec![11.0, 100.0];
        assert!(matches!(solve(&prob, 1e-8), Err(SolverError::InfeasibleStart(_))));
    }

    #[test]
    fn barrier_stages_are_monotone() {
        let prob = box_quadratic();
        let report = solve(&prob, 1e-9).unwrap();
        for stage in &report.stage_objectives {
            for pair in stage.windows(2) {
                assert!(
                    pair[1] >= pair[0] - 1e-9 * (1.0 + pair[0].abs()),
                    "barrier objective decreased within a stage: {pair:?}"
                );
            }
        }
    }

    #[test]
    fn log_term_problem_solves() {
        // maximize -0.1 u - ln(1 + 5 / t) with t <= 40 - u, t, u coupled by
        // u >= 2: optimum pushes t up to the linear bound and u down to 2.
        let prob = ConvexProblem {
            num_vars: 2,
            linear_objective: vec![-0.1, 0.0],
            log_terms: vec![LogTerm { index: 1, constant: 5.0 }],
            linear_constraints: vec![
                LinearConstraint { form: AffineForm::new(vec![(0, 1.0), (1, 1.0)], -40.0) },
                LinearConstraint { form: AffineForm::new(vec![(0, -1.0)], 2.0) },
            ],
            quad_constraints: vec![],
            start: vec![5.0, 5.0],
        };
        let report = solve(&prob, 1e-9).unwrap();
        assert_eq!(report.status, SolverStatus::Converged);
        assert!((report.solution[0] - 2.0).abs() < 1e-5, "{:?}", report.solution);
        assert!((report.solution[1] - 38.0).abs() < 1e-4, "{:?}", report.solution);
        assert!(report.kkt_residual <= 1e-8 * (1.0 + report.objective.abs()));
    }

    #[test]
    fn band_cholesky_matches_direct_solve() {
        // 4x4 SPD banded system with bandwidth 1.
        let mut m = BandMatrix::zeros(4, 1);
        for j in 0..4 {
            m.add(j, j, 4.0);
        }
        for j in 0..3 {
            m.add(j + 1, j, 1.0);
        }
        m.cholesky().unwrap();
        let x = m.solve_factored(&[1.0, 2.0, 3.0, 4.0]);
        // Verify A x = b by rebuilding A.
        let a = [
            [4.0, 1.0, 0.0, 0.0],
            [1.0, 4.0, 1.0, 0.0],
            [0.0, 1.0, 4.0, 1.0],
            [0.0, 0.0, 1.0, 4.0],
        ];
        for (i, row) in a.iter().enumerate() {
            let lhs: f64 = row.iter().zip(&x).map(|(aij, xj)| aij * xj).sum();
            assert!((lhs - (i as f64 + 1.0)).abs() < 1e-12);
        }
    }
}
