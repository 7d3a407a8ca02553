//! Linear RankSVM trained with the 1-slack cutting-plane algorithm.
//!
//! The training problem is
//!
//! ```text
//! min_w  ½‖w‖² + C·ξ
//! s.t.   (1/n) Σ_j c_j · wᵀ(x_u − x_v)_j  ≥  (1/n) Σ_j c_j − ξ   for all c ∈ {0,1}ⁿ
//! ```
//!
//! over the `n` preference pairs. Its slack equals the mean pairwise hinge
//! loss, so the objective is `½‖w‖² + C · mean_j max(0, 1 − wᵀΔx_j)`. This
//! matches the per-pair slack formulation with `C_pair = C / n`.
//!
//! Each outer iteration asks the separation oracle for the most violated
//! aggregated constraint `(g, b)`, adds it to the working set, and re-solves
//! the dual restricted to the working set:
//!
//! ```text
//! max_α  Σ_k b_k α_k − ½ Σ_{k,l} α_k α_l g_kᵀg_l   s.t.  α ≥ 0,  Σ_k α_k ≤ C
//! ```
//!
//! with `w = Σ_k α_k g_k`. Training stops once the oracle's violation is
//! within `ε` of the working-set slack, which bounds the primal objective to
//! within `C·ε` of the optimum.
//!
//! The relaxed domain `c ∈ [0,1]ⁿ` is never needed: the oracle's optimum is
//! attained at a vertex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm_sq};
use crate::pairgen::PairSet;
use crate::Scorer;

/// Default C grid for sweeps. The published list repeats 0.05; it is kept once.
pub const DEFAULT_C_GRID: [f64; 9] = [0.001, 0.01, 0.02, 0.05, 0.1, 0.5, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    #[serde(rename = "C")]
    pub c: f64,
    pub epsilon: f64,
    pub max_outer_iters: usize,
    pub qp_tolerance: f64,
    pub qp_max_iters: usize,
    /// Pairwise differences cancel a shared bias, so training leaves it at 0.
    /// The flag only matters when a `LinearModel` is reused pointwise.
    pub use_bias: bool,
    /// Drop constraints whose dual variable stayed at zero this many
    /// consecutive outer iterations.
    pub prune_after: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epsilon: 1e-3,
            max_outer_iters: 1000,
            qp_tolerance: 1e-8,
            qp_max_iters: 100_000,
            use_bias: false,
            prune_after: 50,
        }
    }
}

impl SolverConfig {
    pub fn with_c(c: f64) -> Self {
        Self {
            c,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.c) {
            return Err(Error::InvalidConfig(format!("C must be positive, got {}", self.c)));
        }
        if !positive(self.epsilon) || !positive(self.qp_tolerance) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if self.max_outer_iters == 0 || self.qp_max_iters == 0 {
            return Err(Error::InvalidConfig("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// State after one outer iteration, for convergence diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationTrace {
    pub dual_objective: f64,
    pub xi: f64,
    pub violation: f64,
    pub working_set: usize,
    pub alpha_sum: f64,
    pub alpha_min: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingMeta {
    /// Primal objective `½‖w‖² + C·ξ` at the returned `w`.
    pub objective: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
    pub iters: usize,
    pub converged: bool,
    /// Every restricted QP reached its KKT tolerance.
    pub qp_converged: bool,
    /// Working-set slack at termination.
    pub xi: f64,
    /// Most violated constraint's violation at termination.
    pub final_violation: f64,
    pub n_pairs: usize,
    #[serde(skip)]
    pub trace: Vec<IterationTrace>,
}

/// Linear scoring function `f(x) = wᵀx + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub bias: f64,
    pub config: Option<SolverConfig>,
    pub meta: TrainingMeta,
}

impl LinearModel {
    pub fn new(w: Vec<f64>, bias: f64) -> Self {
        Self {
            w,
            bias,
            config: None,
            meta: TrainingMeta::default(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            dim: self.w.len(),
            w: self.w.clone(),
            bias: self.bias,
            config: self.config.clone(),
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.w.len() != file.dim {
            return Err(Error::DimensionMismatch {
                expected: file.dim,
                actual: file.w.len(),
            });
        }
        if file.w.iter().any(|v| !v.is_finite()) || !file.bias.is_finite() {
            return Err(Error::InvalidConfig("model has non-finite parameters".into()));
        }
        Ok(Self {
            w: file.w,
            bias: file.bias,
            config: file.config,
            meta: file.meta,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    dim: usize,
    w: Vec<f64>,
    bias: f64,
    #[serde(default)]
    config: Option<SolverConfig>,
    #[serde(default)]
    meta: TrainingMeta,
}

impl Scorer for LinearModel {
    fn dim(&self) -> usize {
        self.w.len()
    }

    fn score_unchecked(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.bias
    }
}

/// One aggregated cutting plane: `wᵀg ≥ b − ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// Mean of the selected pair differences over all `n` pairs.
    pub g: Vec<f64>,
    /// Selected-pair fraction `‖c‖₁ / n`.
    pub b: f64,
}

/// Output of the separation oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct Separation {
    /// `c_j = true` iff pair `j` has margin below 1 (pairs in [`PairSet`] order).
    pub selected: Vec<bool>,
    /// `b − wᵀg`, the mean hinge loss at `w`.
    pub violation: f64,
    pub constraint: Constraint,
}

/// Most violated 1-slack constraint at `w`: select every pair whose margin
/// `wᵀ(x_u − x_v)` is below 1.
pub fn most_violated_constraint(w: &[f64], pairs: &PairSet) -> Result<Separation> {
    let dim = pairs.dim();
    if w.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: w.len(),
        });
    }
    let n = pairs.pair_count();
    let mut selected = Vec::with_capacity(n);
    let mut g = vec![0.0; dim];
    let mut hinge_sum = 0.0;
    let mut count = 0usize;
    let mut coef = Vec::new();
    let mut scores = Vec::new();

    for q in pairs.queries() {
        if q.pairs.is_empty() {
            continue;
        }
        scores.clear();
        scores.extend(q.features.iter().map(|x| dot(w, x)));
        coef.clear();
        coef.resize(q.features.len(), 0.0);
        for p in &q.pairs {
            let margin = scores[p.preferred] - scores[p.other];
            let violated = margin < 1.0;
            selected.push(violated);
            if violated {
                hinge_sum += 1.0 - margin;
                count += 1;
                coef[p.preferred] += 1.0;
                coef[p.other] -= 1.0;
            }
        }
        for (x, &a) in q.features.iter().zip(&coef) {
            if a != 0.0 {
                axpy(a, x, &mut g);
            }
        }
    }

    if n == 0 {
        return Ok(Separation {
            selected,
            violation: 0.0,
            constraint: Constraint { g, b: 0.0 },
        });
    }
    let inv_n = 1.0 / n as f64;
    g.iter_mut().for_each(|v| *v *= inv_n);
    Ok(Separation {
        selected,
        violation: hinge_sum * inv_n,
        constraint: Constraint {
            g,
            b: count as f64 * inv_n,
        },
    })
}

/// Accumulated cutting planes with their dual variables.
#[derive(Debug, Clone, Default)]
pub struct WorkingSet {
    constraints: Vec<Constraint>,
    alphas: Vec<f64>,
    gram: Vec<Vec<f64>>,
    idle: Vec<usize>,
}

impl WorkingSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a constraint with `α = 0`, extending the Gram matrix.
    pub fn push(&mut self, constraint: Constraint) {
        let row: Vec<f64> = self
            .constraints
            .iter()
            .map(|c| dot(&c.g, &constraint.g))
            .collect();
        for (r, &v) in self.gram.iter_mut().zip(&row) {
            r.push(v);
        }
        let mut row = row;
        row.push(norm_sq(&constraint.g));
        self.gram.push(row);
        self.constraints.push(constraint);
        self.alphas.push(0.0);
        self.idle.push(0);
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// `w = Σ_k α_k g_k`.
    pub fn weights(&self, dim: usize) -> Vec<f64> {
        let mut w = vec![0.0; dim];
        for (c, &a) in self.constraints.iter().zip(&self.alphas) {
            if a != 0.0 {
                axpy(a, &c.g, &mut w);
            }
        }
        w
    }

    /// `Σ b_k α_k − ½ αᵀGα`.
    pub fn dual_objective(&self) -> f64 {
        let linear: f64 = self.constraints.iter().zip(&self.alphas).map(|(c, a)| c.b * a).sum();
        let quad: f64 = self
            .gram
            .iter()
            .zip(&self.alphas)
            .map(|(row, &ak)| ak * dot(row, &self.alphas))
            .sum();
        linear - 0.5 * quad
    }

    /// Working-set slack `max(0, max_k b_k − wᵀg_k)`.
    pub fn slack(&self, w: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.b - dot(w, &c.g))
            .fold(0.0, f64::max)
    }

    fn prune(&mut self, after: usize) {
        for (idle, &a) in self.idle.iter_mut().zip(&self.alphas) {
            *idle = if a > 0.0 { 0 } else { *idle + 1 };
        }
        let keep: Vec<bool> = self.idle.iter().map(|&i| i < after).collect();
        if keep.iter().all(|&k| k) {
            return;
        }
        retain_mask(&mut self.constraints, &keep);
        retain_mask(&mut self.alphas, &keep);
        retain_mask(&mut self.idle, &keep);
        retain_mask(&mut self.gram, &keep);
        for row in &mut self.gram {
            retain_mask(row, &keep);
        }
    }
}

fn retain_mask<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut it = keep.iter();
    v.retain(|_| *it.next().unwrap_or(&true));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QpOutcome {
    pub iterations: usize,
    pub converged: bool,
}

/// Maximizes the restricted dual over the working set by pairwise coordinate
/// ascent, warm-started from the current `α`.
///
/// The budget `Σα ≤ C` becomes an equality by adding a slack coordinate
/// `s = C − Σα` with zero linear and quadratic terms. Each step moves mass
/// from the coordinate with the lowest gradient (among those with positive
/// mass) to the one with the highest gradient; the problem is solved once
/// that gradient gap is at most `tol`.
pub fn solve_restricted_qp(ws: &mut WorkingSet, c: f64, tol: f64, max_iters: usize) -> Result<QpOutcome> {
    let k = ws.len();
    if k == 0 {
        return Err(Error::InvalidConfig("restricted QP needs at least one constraint".into()));
    }
    // Restore feasibility if C shrank since the last solve.
    let total: f64 = ws.alphas.iter().sum();
    if total > c {
        let shrink = c / total;
        ws.alphas.iter_mut().for_each(|a| *a *= shrink);
    }

    // Index `k` is the slack coordinate.
    let slack_idx = k;
    let mut grad: Vec<f64> = (0..k)
        .map(|i| ws.constraints[i].b - dot(&ws.gram[i], &ws.alphas))
        .collect();
    grad.push(0.0);
    let mut slack = (c - ws.alphas.iter().sum::<f64>()).max(0.0);
    let gram = |i: usize, j: usize| -> f64 {
        if i == slack_idx || j == slack_idx {
            0.0
        } else {
            ws.gram[i][j]
        }
    };

    for iter in 0..max_iters {
        let mut up = slack_idx;
        for i in 0..k {
            if grad[i] > grad[up] {
                up = i;
            }
        }
        let mut down = None;
        for i in 0..=k {
            let mass = if i == slack_idx { slack } else { ws.alphas[i] };
            if mass > 0.0 && down.is_none_or(|d: usize| grad[i] < grad[d]) {
                down = Some(i);
            }
        }
        let Some(down) = down else {
            // Only possible when C == 0, which validation rules out.
            return Ok(QpOutcome {
                iterations: iter,
                converged: true,
            });
        };
        let gap = grad[up] - grad[down];
        if gap <= tol || up == down {
            return Ok(QpOutcome {
                iterations: iter,
                converged: true,
            });
        }

        let available = if down == slack_idx { slack } else { ws.alphas[down] };
        let curvature = gram(up, up) + gram(down, down) - 2.0 * gram(up, down);
        let step = if curvature > 1e-15 {
            (gap / curvature).min(available)
        } else {
            available
        };

        if up == slack_idx {
            slack += step;
        } else {
            ws.alphas[up] += step;
        }
        if down == slack_idx {
            slack -= step;
        } else {
            ws.alphas[down] -= step;
            if step == available {
                ws.alphas[down] = 0.0;
            }
        }
        for (i, gi) in grad.iter_mut().enumerate().take(k) {
            *gi -= step * (gram(i, up) - gram(i, down));
        }
    }
    Ok(QpOutcome {
        iterations: max_iters,
        converged: false,
    })
}

/// Trains a linear RankSVM on `pairs`.
///
/// Non-convergence within `max_outer_iters` is reported through
/// `meta.converged` rather than as an error.
pub fn train(pairs: &PairSet, config: &SolverConfig) -> Result<LinearModel> {
    config.validate()?;
    let n = pairs.pair_count();
    if n == 0 {
        return Err(Error::EmptyPairSet);
    }
    let dim = pairs.dim();
    let mut ws = WorkingSet::new();
    let mut w = vec![0.0; dim];
    let mut xi = 0.0;
    let mut converged = false;
    let mut qp_converged = true;
    let mut trace = Vec::new();
    let mut iters = 0;
    let mut separation = most_violated_constraint(&w, pairs)?;

    loop {
        if separation.violation <= xi + config.epsilon {
            converged = true;
            break;
        }
        if iters == config.max_outer_iters {
            break;
        }
        iters += 1;
        ws.push(separation.constraint);
        let outcome = solve_restricted_qp(&mut ws, config.c, config.qp_tolerance, config.qp_max_iters)?;
        qp_converged &= outcome.converged;
        w = ws.weights(dim);
        xi = ws.slack(&w);
        trace.push(IterationTrace {
            dual_objective: ws.dual_objective(),
            xi,
            violation: 0.0,
            working_set: ws.len(),
            alpha_sum: ws.alphas().iter().sum(),
            alpha_min: ws.alphas().iter().copied().fold(f64::INFINITY, f64::min),
        });
        ws.prune(config.prune_after);
        separation = most_violated_constraint(&w, pairs)?;
        if let Some(last) = trace.last_mut() {
            last.violation = separation.violation;
        }
    }

    let objective = 0.5 * norm_sq(&w) + config.c * separation.violation.max(0.0);
    let dual_objective = ws.dual_objective();
    Ok(LinearModel {
        w,
        bias: 0.0,
        config: Some(config.clone()),
        meta: TrainingMeta {
            objective,
            dual_objective,
            duality_gap: objective - dual_objective,
            iters,
            converged,
            qp_converged,
            xi,
            final_violation: separation.violation,
            n_pairs: n,
            trace,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimalObjective {
    pub objective: f64,
    /// Mean pairwise hinge loss, the optimal 1-slack value at this `w`.
    pub xi: f64,
    /// Fraction of pairs with `wᵀΔx ≤ 0`.
    pub swapped_fraction: f64,
}

/// 1-slack primal objective `½‖w‖² + C·ξ` of a model on `pairs`.
pub fn primal_objective(model: &LinearModel, pairs: &PairSet, c: f64) -> Result<PrimalObjective> {
    let sep = most_violated_constraint(&model.w, pairs)?;
    let xi = sep.violation.max(0.0);
    Ok(PrimalObjective {
        objective: 0.5 * norm_sq(&model.w) + c * xi,
        xi,
        swapped_fraction: swapped_fraction(&model.w, pairs),
    })
}

/// Fraction of pairs the scoring direction `w` does not strictly order.
pub fn swapped_fraction(w: &[f64], pairs: &PairSet) -> f64 {
    let n = pairs.pair_count();
    if n == 0 {
        return 0.0;
    }
    let swapped = pairs
        .iter_pairs()
        .filter(|(u, v)| dot(w, u) - dot(w, v) <= 0.0)
        .count();
    swapped as f64 / n as f64
}

/// Independent reference solver used to check the cutting-plane trainer.
pub mod reference {
    use rand::Rng;

    use super::*;
    use crate::linalg::sub;
    use crate::seeded_rng;

    /// Projected subgradient descent on the per-pair hinge objective
    /// `½‖w‖² + (C/n) Σ_j max(0, 1 − wᵀΔx_j)` with step `1/t` (the
    /// regularizer is 1-strongly convex). Iterates are projected onto the
    /// ball `‖w‖ ≤ √(2C)`, which contains the optimum. The seed draws the
    /// starting point; the best iterate seen is returned.
    pub fn reference_train(pairs: &PairSet, c: f64, steps: usize, seed: u64) -> Result<LinearModel> {
        let n = pairs.pair_count();
        if n == 0 {
            return Err(Error::EmptyPairSet);
        }
        let dim = pairs.dim();
        let diffs: Vec<Vec<f64>> = pairs.iter_pairs().map(|(u, v)| sub(u, v)).collect();
        let radius = (2.0 * c).sqrt();
        let scale = c / n as f64;

        let mut rng = seeded_rng(seed);
        let mut w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        project(&mut w, radius);

        let mut best_w = w.clone();
        let mut best = f64::INFINITY;
        let mut subgrad = vec![0.0; dim];
        for t in 1..=steps {
            subgrad.copy_from_slice(&w);
            let mut hinge = 0.0;
            for d in &diffs {
                let margin = dot(&w, d);
                if margin < 1.0 {
                    hinge += 1.0 - margin;
                    axpy(-scale, d, &mut subgrad);
                }
            }
            let objective = 0.5 * norm_sq(&w) + scale * hinge;
            if objective < best {
                best = objective;
                best_w.copy_from_slice(&w);
            }
            axpy(-1.0 / t as f64, &subgrad, &mut w);
            project(&mut w, radius);
        }
        let final_hinge: f64 = diffs.iter().map(|d| (1.0 - dot(&w, d)).max(0.0)).sum();
        let final_objective = 0.5 * norm_sq(&w) + scale * final_hinge;
        if final_objective < best {
            best = final_objective;
            best_w = w;
        }

        Ok(LinearModel {
            w: best_w,
            bias: 0.0,
            config: None,
            meta: TrainingMeta {
                objective: best,
                iters: steps,
                converged: true,
                n_pairs: n,
                ..TrainingMeta::default()
            },
        })
    }

    fn project(w: &mut [f64], radius: f64) {
        let norm = norm_sq(w).sqrt();
        if norm > radius {
            crate::linalg::scale(radius / norm, w);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::reference::reference_train;
    use super::*;
    use crate::data::{FeatureRecord, QueryGroup};
    use crate::pairgen::{generate_pairs, PairConfig, PreferencePair, QueryPairs};
    use approx::assert_abs_diff_eq;

    fn group(q: &str, rows: &[(u32, Vec<f64>)]) -> QueryGroup {
        let cands = rows
            .iter()
            .enumerate()
            .map(|(i, (r, x))| FeatureRecord {
                query_id: q.into(),
                cand_id: format!("c{i:02}"),
                relevance: *r,
                features: x.clone(),
            })
            .collect();
        QueryGroup::new(q, cands).unwrap()
    }

    /// A pair set where every pair has the same difference vector `delta`.
    fn constant_delta(delta: &[f64], copies: usize) -> PairSet {
        let queries = (0..copies)
            .map(|i| QueryPairs {
                query_id: format!("q{i}"),
                cand_ids: vec!["a".into(), "b".into()],
                features: vec![delta.iter().map(|d| d + i as f64).collect(), vec![i as f64; delta.len()]],
                positives: 1,
                pairs: vec![PreferencePair {
                    preferred: 0,
                    other: 1,
                }],
            })
            .collect();
        PairSet::new(delta.len(), queries).unwrap()
    }

    #[test]
    fn one_dimensional_direction_forced() {
        let pairs = generate_pairs(&group("q", &[(3, vec![2.0]), (0, vec![1.0])]), &PairConfig::default());
        for c in [0.01, 1.0, 100.0] {
            let model = train(&pairs, &SolverConfig::with_c(c)).unwrap();
            assert!(model.w[0] > 0.0);
            let g = group("q", &[(3, vec![2.0]), (0, vec![1.0])]);
            assert_eq!(model.rank(&g).unwrap().top(), Some("c00"));
        }
    }

    #[test]
    fn single_delta_analytic_solution() {
        let delta = [3.0, -1.0, 0.5];
        let pairs = constant_delta(&delta, 4);
        let model = train(&pairs, &SolverConfig::with_c(100.0)).unwrap();
        let nsq = norm_sq(&delta);
        for (wi, di) in model.w.iter().zip(&delta) {
            assert_abs_diff_eq!(*wi, di / nsq, epsilon = 1e-6);
        }
        assert_abs_diff_eq!(dot(&model.w, &delta), 1.0, epsilon = 1e-6);
        assert!(model.meta.converged);
    }

    #[test]
    fn separation_oracle_examples() {
        let g = group("q", &[(3, vec![1.0, 0.0]), (0, vec![0.0, 0.0]), (3, vec![0.5, 2.0]), (0, vec![0.5, 0.0])]);
        let pairs = generate_pairs(&g, &PairConfig::default());

        let sep = most_violated_constraint(&[0.0, 0.0], &pairs).unwrap();
        assert!(sep.selected.iter().all(|&s| s));
        assert_eq!(sep.violation, 1.0);
        assert_eq!(sep.constraint.b, 1.0);

        let sep = most_violated_constraint(&[100.0, 100.0], &pairs).unwrap();
        assert!(sep.selected.iter().all(|&s| !s));
        assert_eq!(sep.violation, 0.0);
        assert_eq!(sep.constraint.b, 0.0);
    }

    #[test]
    fn separation_two_margins() {
        // margins 0.5 and 2.0 under w = [1].
        let queries = vec![QueryPairs {
            query_id: "q".into(),
            cand_ids: vec!["a".into(), "b".into(), "c".into()],
            features: vec![vec![0.5], vec![0.0], vec![-1.5]],
            positives: 1,
            pairs: vec![
                PreferencePair { preferred: 0, other: 1 },
                PreferencePair { preferred: 0, other: 2 },
            ],
        }];
        let pairs = PairSet::new(1, queries).unwrap();
        let sep = most_violated_constraint(&[1.0], &pairs).unwrap();
        assert_eq!(sep.selected, [true, false]);
        assert_abs_diff_eq!(sep.violation, 0.25);
        assert_abs_diff_eq!(sep.constraint.b - dot(&[1.0], &sep.constraint.g), 0.25);
    }

    #[test]
    fn separation_maximizes_over_all_selections() {
        let g = group(
            "q",
            &[(3, vec![0.3, -0.2]), (3, vec![1.0, 0.1]), (0, vec![0.0, 0.4]), (0, vec![-0.4, 0.0]), (0, vec![0.9, 0.9])],
        );
        let pairs = generate_pairs(&g, &PairConfig::default());
        let w = [0.8, -1.1];
        let sep = most_violated_constraint(&w, &pairs).unwrap();
        let diffs: Vec<Vec<f64>> = pairs.iter_pairs().map(|(u, v)| crate::linalg::sub(u, v)).collect();
        let n = diffs.len();
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << n) {
            let mut value = 0.0;
            for (j, d) in diffs.iter().enumerate() {
                if mask & (1 << j) != 0 {
                    value += (1.0 - dot(&w, d)) / n as f64;
                }
            }
            best = best.max(value);
        }
        assert_abs_diff_eq!(sep.violation, best, epsilon = 1e-12);
    }

    #[test]
    fn qp_single_constraint_analytic() {
        for (g, b, c) in [
            (vec![1.0, 2.0], 0.5, 10.0),
            (vec![1.0, 2.0], 0.5, 0.01),
            (vec![0.1], 1.0, 1.0),
            (vec![3.0], 0.0, 5.0),
        ] {
            let mut ws = WorkingSet::new();
            let expected = (b / norm_sq(&g)).min(c);
            ws.push(Constraint { g, b });
            let out = solve_restricted_qp(&mut ws, c, 1e-10, 100_000).unwrap();
            assert!(out.converged);
            assert_abs_diff_eq!(ws.alphas()[0], expected, epsilon = 1e-8);
        }
    }

    #[test]
    fn qp_orthogonal_constraints_separate() {
        let mut ws = WorkingSet::new();
        ws.push(Constraint { g: vec![2.0, 0.0], b: 0.8 });
        ws.push(Constraint { g: vec![0.0, 0.5], b: 0.3 });
        solve_restricted_qp(&mut ws, 1e6, 1e-12, 100_000).unwrap();
        assert_abs_diff_eq!(ws.alphas()[0], 0.8 / 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ws.alphas()[1], 0.3 / 0.25, epsilon = 1e-9);
    }

    #[test]
    fn qp_budget_binds() {
        let mut ws = WorkingSet::new();
        ws.push(Constraint { g: vec![1.0, 0.0], b: 1.0 });
        ws.push(Constraint { g: vec![0.0, 1.0], b: 1.0 });
        solve_restricted_qp(&mut ws, 0.5, 1e-12, 100_000).unwrap();
        let total: f64 = ws.alphas().iter().sum();
        assert_abs_diff_eq!(total, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(ws.alphas()[0], 0.25, epsilon = 1e-9);
    }

    #[test]
    fn qp_rejects_empty_working_set() {
        assert!(solve_restricted_qp(&mut WorkingSet::new(), 1.0, 1e-8, 10).is_err());
    }

    #[test]
    fn empty_pairs_rejected() {
        let pairs = generate_pairs(&group("q", &[(3, vec![1.0]), (3, vec![0.0])]), &PairConfig::default());
        assert!(matches!(train(&pairs, &SolverConfig::default()), Err(Error::EmptyPairSet)));
        assert!(matches!(reference_train(&pairs, 1.0, 10, 0), Err(Error::EmptyPairSet)));
    }

    #[test]
    fn invalid_config_rejected() {
        let pairs = constant_delta(&[1.0], 1);
        assert!(train(&pairs, &SolverConfig::with_c(0.0)).is_err());
        let cfg = SolverConfig {
            epsilon: 0.0,
            ..SolverConfig::default()
        };
        assert!(train(&pairs, &cfg).is_err());
    }

    #[test]
    fn score_examples() {
        let m = LinearModel::new(vec![1.0, 2.0], 0.0);
        assert_eq!(m.score(&[3.0, 1.0]).unwrap(), 5.0);
        let m = LinearModel::new(vec![1.0, 2.0], 0.7);
        assert_eq!(m.score(&[0.0, 0.0]).unwrap(), 0.7);
        assert!(matches!(m.score(&[1.0]), Err(Error::DimensionMismatch { .. })));
        let doubled = LinearModel::new(vec![2.0, 4.0], 0.0);
        assert_eq!(doubled.score(&[3.0, 1.0]).unwrap(), 10.0);
    }

    #[test]
    fn rank_examples() {
        let m = LinearModel::new(vec![1.0], 0.0);
        let g = group("q", &[(0, vec![2.0])]);
        assert_eq!(m.rank(&g).unwrap().cand_ids, ["c00"]);
        let g = group("q", &[(0, vec![2.0]), (0, vec![5.0]), (0, vec![3.0])]);
        assert_eq!(m.rank(&g).unwrap().cand_ids, ["c01", "c02", "c00"]);
        let g = group("q", &[(0, vec![1.0]), (0, vec![1.0])]);
        assert_eq!(m.rank(&g).unwrap().cand_ids, ["c00", "c01"]);
    }

    #[test]
    fn primal_objective_examples() {
        let pairs = constant_delta(&[2.0], 3);
        let zero = LinearModel::new(vec![0.0], 0.0);
        let p = primal_objective(&zero, &pairs, 4.0).unwrap();
        assert_eq!(p.objective, 4.0);
        assert_eq!(p.xi, 1.0);
        assert_eq!(p.swapped_fraction, 1.0);

        let sep = LinearModel::new(vec![1.0], 0.0);
        let p = primal_objective(&sep, &pairs, 4.0).unwrap();
        assert_eq!(p.objective, 0.5);
        assert_eq!(p.swapped_fraction, 0.0);
    }

    #[test]
    fn model_file_round_trip() {
        let pairs = constant_delta(&[1.0, 2.0], 2);
        let model = train(&pairs, &SolverConfig::with_c(3.0)).unwrap();
        let json = model.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["dim"], 2);
        assert_eq!(value["config"]["C"], 3.0);
        assert!(value["meta"]["objective"].is_f64());
        assert!(value["meta"]["iters"].is_u64());
        assert!(value["meta"]["converged"].is_boolean());
        let back = LinearModel::from_json(&json).unwrap();
        assert_eq!(back.w, model.w);
        assert_eq!(back.config, model.config);

        let bad = r#"{"dim": 3, "w": [1.0], "bias": 0.0}"#;
        assert!(LinearModel::from_json(bad).is_err());
    }

    #[test]
    fn reference_matches_analytic() {
        let delta = [1.0, -2.0];
        let pairs = constant_delta(&delta, 3);
        let model = reference_train(&pairs, 100.0, 200_000, 1).unwrap();
        let nsq = norm_sq(&delta);
        for (wi, di) in model.w.iter().zip(&delta) {
            assert_abs_diff_eq!(*wi, di / nsq, epsilon = 1e-3);
        }
        let tiny = reference_train(&pairs, 1e-9, 10_000, 1).unwrap();
        assert!(norm_sq(&tiny.w).sqrt() <= 1e-6);
    }
}
