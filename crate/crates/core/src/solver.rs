//! Interior-point solver for smooth problems with linear equalities and
//! smooth inequalities `g(x) ≤ 0`.
//!
//! A monotone barrier method: for a decreasing sequence of barrier weights
//! `μ` it approximately minimizes `φ_μ(x) = f(x) − μ Σ ln(−g_i(x))` subject
//! to `A x = b`, taking primal-dual Newton steps on the perturbed KKT
//! conditions. The Newton matrix is factored by [`crate::linalg`] and its
//! Hessian block is shifted until the inertia is right, so nonconvex
//! inequalities are handled. Steps keep every `g_i` strictly negative and
//! satisfy an Armijo condition on `φ_μ`.
//!
//! When the starting point violates a nonlinear inequality, a phase-one
//! problem `min t s.t. g_i(x) ≤ t` is solved first. If its optimum is
//! nonnegative the problem is reported infeasible with that optimum as
//! certificate.

use serde::{Deserialize, Serialize};

use crate::linalg::{refine, SkylineMatrix};
use crate::scalar::{count, lit, to_f64, Real};
use crate::transcription::{ConvexProgram, Solution, ENERGY_SCALE};

/// `Σ a·x = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow<T> {
    pub terms: Vec<(usize, T)>,
    pub rhs: T,
}

impl<T: Real> LinearRow<T> {
    pub fn residual(&self, x: &[T]) -> T {
        self.terms.iter().map(|&(i, a)| a * x[i]).sum::<T>() - self.rhs
    }
}

/// What the solver needs from a problem.
///
/// Hessians are reported as `(i, j, v)` lists where each unordered pair
/// appears at most once per contribution; repeated pairs are summed.
pub trait ConstrainedProblem<T: Real> {
    fn dimension(&self) -> usize;
    fn objective(&self, x: &[T]) -> T;
    fn objective_gradient(&self, x: &[T], grad: &mut [T]);
    fn objective_hessian(&self, x: &[T], out: &mut Vec<(usize, usize, T)>);
    /// Structural nonzeros of the objective Hessian. Diagonal by default.
    fn objective_hessian_pattern(&self) -> Vec<(usize, usize)> {
        Vec::new()
    }
    fn inequality_count(&self) -> usize;
    fn inequality_values(&self, x: &[T], out: &mut [T]);
    /// Value of inequality `i`, its sparse gradient and its Hessian.
    fn inequality_derivatives(
        &self,
        i: usize,
        x: &[T],
        grad: &mut Vec<(usize, T)>,
        hess: &mut Vec<(usize, usize, T)>,
    ) -> T;
    /// Variables inequality `i` depends on.
    fn inequality_variables(&self, i: usize) -> Vec<usize>;
    /// False for plain variable bounds, which phase one leaves untouched.
    fn is_general_inequality(&self, _i: usize) -> bool {
        true
    }
    fn equalities(&self) -> &[LinearRow<T>];
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SolverOptions {
    /// Target for the scaled stationarity, complementarity and equality
    /// residuals.
    pub kkt_tolerance: f64,
    pub max_iterations: usize,
    pub initial_barrier_weight: f64,
    /// Linear factor of the barrier update `μ ← min(κ μ, μ^θ)`.
    pub barrier_decrease: f64,
    /// Superlinear exponent `θ` of the barrier update.
    pub barrier_exponent: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub fraction_to_boundary: f64,
    /// Run phase one when the start violates a nonlinear inequality.
    pub feasibility_restoration: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            kkt_tolerance: 1e-8,
            max_iterations: 200,
            initial_barrier_weight: 0.1,
            barrier_decrease: 0.2,
            barrier_exponent: 1.5,
            armijo: 1e-4,
            backtrack: 0.5,
            fraction_to_boundary: 0.99,
            feasibility_restoration: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    #[default]
    NotSolved,
    Optimal,
    MaxIterations,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SolveStats<T> {
    pub status: SolveStatus,
    /// Barrier iterations, phase one excluded.
    pub iterations: usize,
    pub phase_one_iterations: usize,
    pub stationarity: f64,
    pub primal_residual: f64,
    pub complementarity: f64,
    pub objective: T,
    pub barrier_weight: f64,
    /// Optimal phase-one value when phase one ran.
    pub phase_one_value: Option<T>,
    pub message: String,
    /// `(μ, φ_μ)` after every accepted step.
    #[serde(skip)]
    pub merit_history: Vec<(f64, f64)>,
}

/// Scaled first-order residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResiduals {
    /// `‖∇f + Σ λ∇g + Aᵀy‖∞ / s_d`.
    pub stationarity: f64,
    /// `max |A x − b|` together with `max(g, 0)`.
    pub primal: f64,
    /// `max λ_i·|g_i|`.
    pub complementarity: f64,
}

/// Result of [`solve_problem`].
#[derive(Debug, Clone)]
pub struct SolveOutcome<T> {
    pub x: Vec<T>,
    pub inequality_multipliers: Vec<T>,
    pub equality_multipliers: Vec<T>,
    pub stats: SolveStats<T>,
}

struct Derivatives<T> {
    g: Vec<T>,
    grads: Vec<Vec<(usize, T)>>,
    hessians: Vec<Vec<(usize, usize, T)>>,
    grad_f: Vec<T>,
}

fn evaluate<T: Real, P: ConstrainedProblem<T> + ?Sized>(p: &P, x: &[T]) -> Derivatives<T> {
    let m = p.inequality_count();
    let mut g = vec![T::zero(); m];
    let mut grads = vec![Vec::new(); m];
    let mut hessians = vec![Vec::new(); m];
    for i in 0..m {
        g[i] = p.inequality_derivatives(i, x, &mut grads[i], &mut hessians[i]);
    }
    let mut grad_f = vec![T::zero(); p.dimension()];
    p.objective_gradient(x, &mut grad_f);
    Derivatives {
        g,
        grads,
        hessians,
        grad_f,
    }
}

/// IPOPT-style dual scaling `max(s_max, mean |multiplier|) / s_max`.
fn dual_scale<T: Real>(lambda: &[T], y: &[T]) -> f64 {
    let s_max = 100.0;
    let total = lambda.len() + y.len();
    if total == 0 {
        return 1.0;
    }
    let sum: f64 = lambda.iter().chain(y).map(|v| to_f64(v.abs())).sum();
    (sum / total as f64).max(s_max) / s_max
}

fn residuals_from<T: Real, P: ConstrainedProblem<T> + ?Sized>(
    p: &P,
    x: &[T],
    d: &Derivatives<T>,
    lambda: &[T],
    y: &[T],
) -> KktResiduals {
    let mut r = d.grad_f.clone();
    for (i, grad) in d.grads.iter().enumerate() {
        for &(j, v) in grad {
            r[j] += lambda[i] * v;
        }
    }
    let mut primal = 0.0_f64;
    for (row, &yr) in p.equalities().iter().zip(y) {
        for &(j, a) in &row.terms {
            r[j] += yr * a;
        }
        primal = primal.max(to_f64(row.residual(x).abs()));
    }
    for &gi in &d.g {
        primal = primal.max(to_f64(gi).max(0.0));
    }
    let stat = r.iter().map(|v| to_f64(v.abs())).fold(0.0, f64::max);
    let comp = d
        .g
        .iter()
        .zip(lambda)
        .map(|(&gi, &li)| to_f64((li * gi).abs()))
        .fold(0.0, f64::max);
    KktResiduals {
        stationarity: stat / dual_scale(lambda, y),
        primal,
        complementarity: comp,
    }
}

/// Scaled KKT residuals of `(x, λ, y)`.
pub fn kkt_residuals<T: Real, P: ConstrainedProblem<T> + ?Sized>(p: &P, x: &[T], lambda: &[T], y: &[T]) -> KktResiduals {
    let d = evaluate(p, x);
    residuals_from(p, x, &d, lambda, y)
}

/// Largest relative disagreement between analytic and central-difference
/// derivatives at `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeReport {
    pub objective_gradient: f64,
    pub objective_hessian: f64,
    pub inequality_gradient: f64,
    pub inequality_hessian: f64,
}

impl DerivativeReport {
    pub fn worst(&self) -> f64 {
        self.objective_gradient
            .max(self.objective_hessian)
            .max(self.inequality_gradient)
            .max(self.inequality_hessian)
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

fn sym_apply<T: Real>(h: &[(usize, usize, T)], j: usize, out: &mut [f64], scale: f64) {
    for &(a, b, v) in h {
        let v = to_f64(v) * scale;
        if a == j {
            out[b] += v;
        }
        if b == j && a != b {
            out[a] += v;
        }
    }
}

/// Compares analytic gradients and Hessian columns with central
/// differences of step `h·max(1, |x_j|)`.
pub fn derivative_check<T: Real, P: ConstrainedProblem<T> + ?Sized>(p: &P, x: &[T], h: f64) -> DerivativeReport {
    let n = p.dimension();
    let mut report = DerivativeReport {
        objective_gradient: 0.0,
        objective_hessian: 0.0,
        inequality_gradient: 0.0,
        inequality_hessian: 0.0,
    };
    let mut gf = vec![T::zero(); n];
    p.objective_gradient(x, &mut gf);
    let mut hf = Vec::new();
    p.objective_hessian(x, &mut hf);
    let mut xp = x.to_vec();
    let mut gp = vec![T::zero(); n];
    let mut gm = vec![T::zero(); n];
    for j in 0..n {
        let step = h * to_f64(x[j].abs()).max(1.0);
        let s = lit::<T>(step);
        xp[j] = x[j] + s;
        let fp = to_f64(p.objective(&xp));
        p.objective_gradient(&xp, &mut gp);
        xp[j] = x[j] - s;
        let fm = to_f64(p.objective(&xp));
        p.objective_gradient(&xp, &mut gm);
        xp[j] = x[j];
        report.objective_gradient = report.objective_gradient.max(rel_err(to_f64(gf[j]), (fp - fm) / (2.0 * step)));
        let mut col = vec![0.0; n];
        sym_apply(&hf, j, &mut col, 1.0);
        for k in 0..n {
            let fd = (to_f64(gp[k]) - to_f64(gm[k])) / (2.0 * step);
            report.objective_hessian = report.objective_hessian.max(rel_err(col[k], fd));
        }
    }
    let (mut g0, mut h0, mut g1, mut h1, mut g2, mut h2) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..p.inequality_count() {
        p.inequality_derivatives(i, x, &mut g0, &mut h0);
        let vars = p.inequality_variables(i);
        for &j in &vars {
            let step = h * to_f64(x[j].abs()).max(1.0);
            let s = lit::<T>(step);
            xp[j] = x[j] + s;
            let vp = to_f64(p.inequality_derivatives(i, &xp, &mut g1, &mut h1));
            xp[j] = x[j] - s;
            let vm = to_f64(p.inequality_derivatives(i, &xp, &mut g2, &mut h2));
            xp[j] = x[j];
            let an: f64 = g0.iter().filter(|e| e.0 == j).map(|e| to_f64(e.1)).sum();
            report.inequality_gradient = report.inequality_gradient.max(rel_err(an, (vp - vm) / (2.0 * step)));
            let mut col = vec![0.0; n];
            sym_apply(&h0, j, &mut col, 1.0);
            for &k in &vars {
                let a: f64 = g1.iter().filter(|e| e.0 == k).map(|e| to_f64(e.1)).sum();
                let b: f64 = g2.iter().filter(|e| e.0 == k).map(|e| to_f64(e.1)).sum();
                report.inequality_hessian = report.inequality_hessian.max(rel_err(col[k], (a - b) / (2.0 * step)));
            }
        }
    }
    report
}

/// Row/column placement of the KKT matrix: every variable, and each
/// equality row right after the last variable it touches.
struct KktLayout {
    var_pos: Vec<usize>,
    eq_pos: Vec<usize>,
}

impl KktLayout {
    fn new<T: Real, P: ConstrainedProblem<T> + ?Sized>(p: &P) -> Self {
        let n = p.dimension();
        let eqs = p.equalities();
        let mut keys: Vec<(usize, u8, usize)> = (0..n).map(|j| (j, 0, j)).collect();
        for (r, row) in eqs.iter().enumerate() {
            let last = row.terms.iter().map(|t| t.0).max().unwrap_or(0);
            keys.push((last, 1, r));
        }
        keys.sort_unstable();
        let mut var_pos = vec![0; n];
        let mut eq_pos = vec![0; eqs.len()];
        for (pos, &(_, kind, id)) in keys.iter().enumerate() {
            if kind == 0 {
                var_pos[id] = pos;
            } else {
                eq_pos[id] = pos;
            }
        }
        KktLayout { var_pos, eq_pos }
    }

    fn template<T: Real, P: ConstrainedProblem<T> + ?Sized>(&self, p: &P) -> SkylineMatrix<T> {
        let mut pattern: Vec<(usize, usize)> = Vec::new();
        for (i, j) in p.objective_hessian_pattern() {
            pattern.push((self.var_pos[i], self.var_pos[j]));
        }
        for i in 0..p.inequality_count() {
            let vars = p.inequality_variables(i);
            for &a in &vars {
                for &b in &vars {
                    pattern.push((self.var_pos[a], self.var_pos[b]));
                }
            }
        }
        for (r, row) in p.equalities().iter().enumerate() {
            for &(j, _) in &row.terms {
                pattern.push((self.eq_pos[r], self.var_pos[j]));
            }
        }
        SkylineMatrix::from_pattern(self.var_pos.len() + self.eq_pos.len(), pattern)
    }
}

fn merit<T: Real>(f: T, g: &[T], mu: T) -> T {
    let mut phi = f;
    for &gi in g {
        phi -= mu * (-gi).ln();
    }
    phi
}

struct Engine<T> {
    x: Vec<T>,
    lambda: Vec<T>,
    y: Vec<T>,
    status: SolveStatus,
    iterations: usize,
    residuals: KktResiduals,
    mu: f64,
    message: String,
    merit_history: Vec<(f64, f64)>,
}

/// Barrier iterations from a strictly feasible `x0`. `stop` is checked after
/// every accepted step.
fn interior_point<T: Real, P: ConstrainedProblem<T> + ?Sized>(
    p: &P,
    x0: Vec<T>,
    opts: &SolverOptions,
    stop: &dyn Fn(&[T]) -> bool,
) -> Engine<T> {
    let n = p.dimension();
    let m = p.inequality_count();
    let eqs = p.equalities();
    let me = eqs.len();
    let layout = KktLayout::new(p);
    let template: SkylineMatrix<T> = layout.template(p);
    let tol = opts.kkt_tolerance;
    let mu_final = tol / 10.0;
    let kappa_eps = 10.0;
    let dual_reg = lit::<T>(1e-11);
    let mut mu = opts.initial_barrier_weight.max(mu_final);
    let mut x = x0;
    let mut d = evaluate(p, &x);
    let mut lambda: Vec<T> = d.g.iter().map(|&gi| lit::<T>(mu) / (-gi)).collect();
    let mut y = vec![T::zero(); me];
    let mut last_delta = 0.0_f64;
    let mut iterations = 0;
    let mut history = Vec::new();
    let mut hess_f = Vec::new();
    let mut message = String::new();

    let status = loop {
        let res = residuals_from(p, &x, &d, &lambda, &y);
        let comp_mu = d
            .g
            .iter()
            .zip(&lambda)
            .map(|(&gi, &li)| (to_f64(li * (-gi)) - mu).abs())
            .fold(0.0, f64::max);
        let e0 = res.stationarity.max(res.primal).max(res.complementarity);
        if e0 <= tol {
            break SolveStatus::Optimal;
        }
        let e_mu = res.stationarity.max(res.primal).max(comp_mu);
        if e_mu <= kappa_eps * mu && mu > mu_final {
            mu = mu_final.max((opts.barrier_decrease * mu).min(mu.powf(opts.barrier_exponent)));
            continue;
        }
        if iterations >= opts.max_iterations {
            break SolveStatus::MaxIterations;
        }

        // Newton system.
        let mu_t = lit::<T>(mu);
        let mut kkt = template.clone();
        let mut rhs = vec![T::zero(); n + me];
        p.objective_hessian(&x, &mut hess_f);
        for &(a, b, v) in &hess_f {
            kkt.add(layout.var_pos[a], layout.var_pos[b], v);
        }
        for (j, &gj) in d.grad_f.iter().enumerate() {
            rhs[layout.var_pos[j]] = -gj;
        }
        for i in 0..m {
            let slack = -d.g[i];
            let sigma = lambda[i] / slack;
            let barrier = mu_t / slack;
            for &(a, b, v) in &d.hessians[i] {
                kkt.add(layout.var_pos[a], layout.var_pos[b], lambda[i] * v);
            }
            let grad = &d.grads[i];
            for (ai, &(a, va)) in grad.iter().enumerate() {
                rhs[layout.var_pos[a]] -= barrier * va;
                for &(b, vb) in &grad[..=ai] {
                    kkt.add(layout.var_pos[a], layout.var_pos[b], sigma * va * vb);
                }
            }
        }
        for (r, row) in eqs.iter().enumerate() {
            for &(j, a) in &row.terms {
                kkt.add(layout.eq_pos[r], layout.var_pos[j], a);
            }
            rhs[layout.eq_pos[r]] = -row.residual(&x);
        }

        // Inertia correction.
        let mut delta = 0.0_f64;
        let factored = loop {
            let mut trial = kkt.clone();
            if delta > 0.0 {
                let dt = lit::<T>(delta);
                for &pos in &layout.var_pos {
                    trial.add(pos, pos, dt);
                }
            }
            let matrix = trial.clone();
            for &pos in &layout.eq_pos {
                trial.add(pos, pos, -dual_reg);
            }
            match trial.factor(lit(1e-32)) {
                Ok(f) if f.inertia.positive == n && f.inertia.negative == me => break Some((matrix, f)),
                _ => {}
            }
            delta = if delta == 0.0 {
                if last_delta == 0.0 {
                    1e-4
                } else {
                    (last_delta / 3.0).max(1e-20)
                }
            } else if last_delta == 0.0 {
                delta * 100.0
            } else {
                delta * 8.0
            };
            if delta > 1e40 {
                break None;
            }
        };
        let Some((matrix, factor)) = factored else {
            message = "Newton matrix could not be regularized".into();
            break SolveStatus::NumericalFailure;
        };
        if delta > 0.0 {
            last_delta = delta;
        }
        let sol = refine(&matrix, &factor, &rhs, 10);
        let dx: Vec<T> = layout.var_pos.iter().map(|&pos| sol[pos]).collect();
        let y_plus: Vec<T> = layout.eq_pos.iter().map(|&pos| sol[pos]).collect();
        let mut dlambda = vec![T::zero(); m];
        for i in 0..m {
            let slack = -d.g[i];
            let gdx: T = d.grads[i].iter().map(|&(j, v)| v * dx[j]).sum();
            dlambda[i] = mu_t / slack - lambda[i] + lambda[i] * gdx / slack;
        }

        // Step lengths.
        let tau = lit::<T>(opts.fraction_to_boundary.max(1.0 - mu));
        let mut alpha_dual = T::one();
        for i in 0..m {
            if dlambda[i] < T::zero() {
                alpha_dual = alpha_dual.min(-tau * lambda[i] / dlambda[i]);
            }
        }
        let f0 = p.objective(&x);
        let phi0 = merit(f0, &d.g, mu_t);
        let slope: T = d
            .grad_f
            .iter()
            .zip(&dx)
            .map(|(&g, &v)| g * v)
            .sum::<T>()
            + (0..m)
                .map(|i| {
                    let gdx: T = d.grads[i].iter().map(|&(j, v)| v * dx[j]).sum();
                    mu_t * gdx / (-d.g[i])
                })
                .sum::<T>();
        let mut alpha = T::one();
        let mut trial_x = x.clone();
        let mut trial_g = vec![T::zero(); m];
        let one_minus_tau = T::one() - tau;
        let slack_eps = lit::<T>(10.0) * T::epsilon() * phi0.abs();
        let accepted = loop {
            for j in 0..n {
                trial_x[j] = x[j] + alpha * dx[j];
            }
            p.inequality_values(&trial_x, &mut trial_g);
            let interior = trial_g
                .iter()
                .zip(&d.g)
                .all(|(&gn, &go)| gn.is_finite() && gn <= one_minus_tau * go);
            if interior {
                let phi = merit(p.objective(&trial_x), &trial_g, mu_t);
                let armijo = lit::<T>(opts.armijo) * alpha * slope.min(T::zero());
                if phi.is_finite() && phi <= phi0 + armijo + slack_eps {
                    history.push((mu, to_f64(phi)));
                    break true;
                }
            }
            alpha *= lit::<T>(opts.backtrack);
            if alpha < lit::<T>(1e-14) {
                break false;
            }
        };
        if !accepted {
            if mu > mu_final && e_mu <= 1e3 * kappa_eps * mu {
                // Close enough for this barrier weight.
                mu = mu_final.max((opts.barrier_decrease * mu).min(mu.powf(opts.barrier_exponent)));
                continue;
            }
            message = "line search failed".into();
            break SolveStatus::NumericalFailure;
        }
        x = trial_x;
        let alpha_dual = alpha_dual.min(T::one());
        for i in 0..m {
            lambda[i] += alpha_dual * dlambda[i];
        }
        for r in 0..me {
            let yr = y[r];
            y[r] = yr + alpha * (y_plus[r] - yr);
        }
        iterations += 1;
        d = evaluate(p, &x);
        let kappa_sigma = lit::<T>(1e10);
        for i in 0..m {
            let base = mu_t / (-d.g[i]);
            lambda[i] = lambda[i].max(base / kappa_sigma).min(base * kappa_sigma);
        }
        if stop(&x) {
            break SolveStatus::NotSolved;
        }
    };
    let residuals = residuals_from(p, &x, &d, &lambda, &y);
    Engine {
        x,
        lambda,
        y,
        status,
        iterations,
        residuals,
        mu,
        message,
        merit_history: history,
    }
}

/// Phase-one problem `min t s.t. g_i(x) − t ≤ 0` for the nonlinear rows,
/// bounds unchanged, and `t ≥ floor`.
struct PhaseOne<'a, T, P: ?Sized> {
    inner: &'a P,
    floor: T,
}

impl<'a, T: Real, P: ConstrainedProblem<T> + ?Sized> ConstrainedProblem<T> for PhaseOne<'a, T, P> {
    fn dimension(&self) -> usize {
        self.inner.dimension() + 1
    }

    fn objective(&self, x: &[T]) -> T {
        x[self.inner.dimension()]
    }

    fn objective_gradient(&self, _x: &[T], grad: &mut [T]) {
        grad.iter_mut().for_each(|g| *g = T::zero());
        grad[self.inner.dimension()] = T::one();
    }

    fn objective_hessian(&self, _x: &[T], out: &mut Vec<(usize, usize, T)>) {
        out.clear();
    }

    fn inequality_count(&self) -> usize {
        self.inner.inequality_count() + 1
    }

    fn inequality_values(&self, x: &[T], out: &mut [T]) {
        let m = self.inner.inequality_count();
        let t = x[self.inner.dimension()];
        self.inner.inequality_values(&x[..self.inner.dimension()], &mut out[..m]);
        for (i, o) in out[..m].iter_mut().enumerate() {
            if self.inner.is_general_inequality(i) {
                *o -= t;
            }
        }
        out[m] = self.floor - t;
    }

    fn inequality_derivatives(
        &self,
        i: usize,
        x: &[T],
        grad: &mut Vec<(usize, T)>,
        hess: &mut Vec<(usize, usize, T)>,
    ) -> T {
        let n = self.inner.dimension();
        let t = x[n];
        if i == self.inner.inequality_count() {
            grad.clear();
            hess.clear();
            grad.push((n, -T::one()));
            return self.floor - t;
        }
        let v = self.inner.inequality_derivatives(i, &x[..n], grad, hess);
        if self.inner.is_general_inequality(i) {
            grad.push((n, -T::one()));
            v - t
        } else {
            v
        }
    }

    fn inequality_variables(&self, i: usize) -> Vec<usize> {
        let n = self.inner.dimension();
        if i == self.inner.inequality_count() {
            return vec![n];
        }
        let mut v = self.inner.inequality_variables(i);
        if self.inner.is_general_inequality(i) {
            v.push(n);
        }
        v
    }

    fn is_general_inequality(&self, _i: usize) -> bool {
        false
    }

    fn equalities(&self) -> &[LinearRow<T>] {
        self.inner.equalities()
    }
}

/// Margin by which phase one must push every nonlinear row below zero
/// before handing over.
pub const PHASE_ONE_MARGIN: f64 = 1e-4;

fn max_general<T: Real, P: ConstrainedProblem<T> + ?Sized>(p: &P, g: &[T]) -> Option<T> {
    (0..g.len())
        .filter(|&i| p.is_general_inequality(i))
        .map(|i| g[i])
        .fold(None, |acc, v| Some(acc.map_or(v, |a: T| a.max(v))))
}

/// Outcome of [`find_interior_point`].
#[derive(Debug, Clone)]
pub struct PhaseOneOutcome<T> {
    /// A point strictly inside every inequality, if one was found.
    pub point: Option<Vec<T>>,
    /// Best `max g` reached.
    pub value: T,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Searches for a strictly feasible point starting from `x0`, which must
/// satisfy the equalities and sit strictly inside the variable bounds.
pub fn find_interior_point<T: Real, P: ConstrainedProblem<T> + ?Sized>(
    p: &P,
    x0: &[T],
    opts: &SolverOptions,
) -> PhaseOneOutcome<T> {
    let mut g = vec![T::zero(); p.inequality_count()];
    p.inequality_values(x0, &mut g);
    let Some(worst) = max_general(p, &g) else {
        return PhaseOneOutcome {
            point: Some(x0.to_vec()),
            value: T::zero(),
            iterations: 0,
            status: SolveStatus::Optimal,
        };
    };
    if worst < T::zero() {
        return PhaseOneOutcome {
            point: Some(x0.to_vec()),
            value: worst,
            iterations: 0,
            status: SolveStatus::Optimal,
        };
    }
    let phase = PhaseOne {
        inner: p,
        floor: -T::one(),
    };
    let mut start = x0.to_vec();
    start.push(worst + lit::<T>(0.1) * (T::one() + worst.abs()));
    let n = p.dimension();
    let margin = lit::<T>(-PHASE_ONE_MARGIN);
    let engine = interior_point(&phase, start, opts, &|x: &[T]| x[n] <= margin);
    let x = engine.x[..n].to_vec();
    p.inequality_values(&x, &mut g);
    let value = max_general(p, &g).unwrap_or(T::zero());
    let point = (value < T::zero() && g.iter().all(|&v| v < T::zero())).then_some(x);
    let status = match (&point, engine.status) {
        (Some(_), _) => SolveStatus::Optimal,
        (None, SolveStatus::Optimal) => SolveStatus::Infeasible,
        (None, s) => s,
    };
    PhaseOneOutcome {
        point,
        value: engine.x[n].max(value.min(engine.x[n])),
        iterations: engine.iterations,
        status,
    }
}

/// Solves `p` from `x0` (equality-feasible, strictly inside the bounds).
pub fn solve_problem<T: Real, P: ConstrainedProblem<T> + ?Sized>(p: &P, x0: &[T], opts: &SolverOptions) -> SolveOutcome<T> {
    let mut stats = SolveStats::default();
    let mut g = vec![T::zero(); p.inequality_count()];
    p.inequality_values(x0, &mut g);
    if (0..g.len()).any(|i| !p.is_general_inequality(i) && !(g[i] < T::zero())) {
        stats.status = SolveStatus::NumericalFailure;
        stats.message = "starting point is not strictly inside the variable bounds".into();
        return SolveOutcome {
            x: x0.to_vec(),
            inequality_multipliers: vec![T::zero(); g.len()],
            equality_multipliers: vec![T::zero(); p.equalities().len()],
            stats,
        };
    }
    let start = if max_general(p, &g).is_some_and(|w| !(w < T::zero())) {
        if !opts.feasibility_restoration {
            stats.status = SolveStatus::NumericalFailure;
            stats.message = "starting point violates a nonlinear inequality".into();
            return SolveOutcome {
                x: x0.to_vec(),
                inequality_multipliers: vec![T::zero(); g.len()],
                equality_multipliers: vec![T::zero(); p.equalities().len()],
                stats,
            };
        }
        let phase = find_interior_point(p, x0, opts);
        stats.phase_one_iterations = phase.iterations;
        stats.phase_one_value = Some(phase.value);
        match phase.point {
            Some(x) => x,
            None => {
                stats.status = if phase.status == SolveStatus::Infeasible {
                    SolveStatus::Infeasible
                } else {
                    phase.status
                };
                stats.message = format!(
                    "no strictly feasible point: phase-one optimum {:.3e}",
                    to_f64(phase.value)
                );
                return SolveOutcome {
                    x: x0.to_vec(),
                    inequality_multipliers: vec![T::zero(); g.len()],
                    equality_multipliers: vec![T::zero(); p.equalities().len()],
                    stats,
                };
            }
        }
    } else {
        x0.to_vec()
    };
    let engine = interior_point(p, start, opts, &|_| false);
    stats.status = engine.status;
    stats.iterations = engine.iterations;
    stats.stationarity = engine.residuals.stationarity;
    stats.primal_residual = engine.residuals.primal;
    stats.complementarity = engine.residuals.complementarity;
    stats.objective = p.objective(&engine.x);
    stats.barrier_weight = engine.mu;
    stats.message = engine.message;
    stats.merit_history = engine.merit_history;
    SolveOutcome {
        x: engine.x,
        inequality_multipliers: engine.lambda,
        equality_multipliers: engine.y,
        stats,
    }
}

/// Solves a transcribed program. The returned objective is in Joules.
pub fn solve<T: Real>(program: &ConvexProgram<T>, opts: &SolverOptions) -> Solution<T> {
    let out = solve_problem(program, program.initial_point(), opts);
    let mut stats = out.stats;
    stats.objective /= lit::<T>(ENERGY_SCALE);
    Solution::from_point(program, &out.x, stats)
}

/// Whether a transcribed program has a strictly feasible point.
pub fn is_feasible<T: Real>(program: &ConvexProgram<T>, opts: &SolverOptions) -> bool {
    find_interior_point(program, program.initial_point(), opts).point.is_some()
}

/// Number of inequalities at `x` with `g_i > −tol`.
pub fn active_count<T: Real, P: ConstrainedProblem<T> + ?Sized>(p: &P, x: &[T], tol: T) -> usize {
    let mut g = vec![T::zero(); p.inequality_count()];
    p.inequality_values(x, &mut g);
    g.iter().filter(|&&v| v > -tol).count()
}

/// Mean of `xs`, zero if empty.
pub fn mean<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        T::zero()
    } else {
        xs.iter().copied().sum::<T>() / count(xs.len())
    }
}
