//! Budget-constrained capacity allocation.
//!
//! Minimize `sum_i 1 / (c_i mu_i - lambda_i)` subject to
//! `sum_i c_i mu_i = C` and `c_i mu_i > lambda_i`. Setting the Lagrangian's
//! partial derivatives to zero gives every node the same surplus
//! `c_i mu_i - lambda_i = (C - sum_j lambda_j) / N`, hence
//! `mu_i = lambda_i / c_i + (C - sum_j lambda_j) / (c_i N)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

/// Budgets within this relative margin of the total arrival rate are infeasible.
pub const FEASIBILITY_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizerError {
    #[error("budget {budget} is infeasible: it must exceed the total arrival rate {required}")]
    Infeasible { budget: f64, required: f64 },
    #[error("invalid allocation problem: {0}")]
    InvalidProblem(String),
    #[error("perturbation {index} improves the objective by {improvement:e}")]
    OracleViolation { index: usize, improvement: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    pub arrival_rates: Vec<f64>,
    pub capacity_factors: Vec<f64>,
    pub budget: f64,
}

impl AllocationProblem {
    pub fn new(arrival_rates: Vec<f64>, capacity_factors: Vec<f64>, budget: f64) -> Self {
        AllocationProblem { arrival_rates, capacity_factors, budget }
    }

    /// Unit capacity factors.
    pub fn unit(arrival_rates: Vec<f64>, budget: f64) -> Self {
        let n = arrival_rates.len();
        AllocationProblem::new(arrival_rates, vec![1.0; n], budget)
    }

    pub fn total_arrival_rate(&self) -> f64 {
        self.arrival_rates.iter().sum()
    }

    /// Objective at service rates `rates`; infinite outside the feasible region.
    pub fn objective(&self, rates: &[f64]) -> f64 {
        self.arrival_rates
            .iter()
            .zip(&self.capacity_factors)
            .zip(rates)
            .map(|((l, c), mu)| {
                let slack = c * mu - l;
                if slack > 0.0 {
                    1.0 / slack
                } else {
                    f64::INFINITY
                }
            })
            .sum()
    }

    fn check(&self) -> Result<(), OptimizerError> {
        let n = self.arrival_rates.len();
        if n == 0 || self.capacity_factors.len() != n {
            return Err(OptimizerError::InvalidProblem(format!(
                "{} arrival rates but {} capacity factors",
                n,
                self.capacity_factors.len()
            )));
        }
        if self.arrival_rates.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(OptimizerError::InvalidProblem("arrival rates must be finite and >= 0".into()));
        }
        if self.capacity_factors.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(OptimizerError::InvalidProblem("capacity factors must be positive".into()));
        }
        let required = self.total_arrival_rate();
        if !(self.budget >= required * (1.0 + FEASIBILITY_MARGIN)) || self.budget <= required {
            return Err(OptimizerError::Infeasible { budget: self.budget, required });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSolution {
    pub service_rates: Vec<f64>,
    /// `c_i * mu_i`.
    pub effective_rates: Vec<f64>,
    /// `sum_i 1 / (c_i mu_i - lambda_i)`, seconds.
    pub objective: f64,
    /// Surplus capacity given to every node, `(C - sum lambda) / N`.
    pub surplus: f64,
}

/// Closed-form optimum.
pub fn solve_allocation(problem: &AllocationProblem) -> Result<AllocationSolution, OptimizerError> {
    problem.check()?;
    let n = problem.arrival_rates.len() as f64;
    let surplus = (problem.budget - problem.total_arrival_rate()) / n;
    let service_rates: Vec<f64> = problem
        .arrival_rates
        .iter()
        .zip(&problem.capacity_factors)
        .map(|(l, c)| l / c + surplus / c)
        .collect();
    let effective_rates = service_rates.iter().zip(&problem.capacity_factors).map(|(m, c)| m * c).collect();
    Ok(AllocationSolution {
        objective: problem.objective(&service_rates),
        service_rates,
        effective_rates,
        surplus,
    })
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub samples: usize,
    /// Smallest perturbation magnitude, requests/second.
    pub grid_step: f64,
    pub seed: u64,
    /// Allowed objective improvement before a perturbation counts as a violation.
    pub tolerance: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { samples: 10_000, grid_step: 1e-3, seed: 0x5eed, tolerance: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub samples: usize,
    /// Feasible perturbations actually evaluated.
    pub evaluated: usize,
    /// Smallest `objective(perturbed) - objective(solution)` observed.
    pub min_gap: f64,
    pub seed: u64,
}

/// Direction in the null space of the budget constraint `sum c_i d_i = 0`.
fn constraint_direction(rng: &mut ChaCha8Rng, c: &[f64]) -> Vec<f64> {
    let g: Vec<f64> = c.iter().map(|_| StandardNormal.sample(rng)).collect();
    let cg: f64 = c.iter().zip(&g).map(|(a, b)| a * b).sum();
    let cc: f64 = c.iter().map(|a| a * a).sum();
    let mut d: Vec<f64> = g.iter().zip(c).map(|(gi, ci)| gi - cg / cc * ci).collect();
    let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        d.iter_mut().for_each(|x| *x /= norm);
    }
    d
}

/// Numerical check that no feasible move along the budget surface improves
/// the objective. Perturbation magnitudes are spread log-uniformly between
/// `grid_step` and the node surplus. Each sample draws from its own seeded
/// stream, so the outcome does not depend on thread count.
pub fn verify_allocation(
    problem: &AllocationProblem,
    solution: &AllocationSolution,
    options: &VerifyOptions,
) -> Result<VerificationReport, OptimizerError> {
    let n = problem.arrival_rates.len();
    if n <= 1 {
        return Ok(VerificationReport { samples: options.samples, evaluated: 0, min_gap: f64::INFINITY, seed: options.seed });
    }
    let base = solution.objective;
    let lo = options.grid_step.max(f64::MIN_POSITIVE).ln();
    let hi = solution.surplus.max(options.grid_step).ln();
    let c = &problem.capacity_factors;

    let gaps: Vec<Option<f64>> = (0..options.samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(k as u64);
            let d = constraint_direction(&mut rng, c);
            let u: f64 = rand::Rng::random(&mut rng);
            let mut step = (lo + u * (hi - lo)).exp();
            // Shrink until the move stays strictly inside the feasible region.
            for _ in 0..60 {
                let rates: Vec<f64> =
                    solution.service_rates.iter().zip(&d).map(|(m, di)| m + step * di).collect();
                let value = problem.objective(&rates);
                if value.is_finite() {
                    return Some(value - base);
                }
                step /= 2.0;
            }
            None
        })
        .collect();

    let mut min_gap = f64::INFINITY;
    let mut evaluated = 0;
    for (index, gap) in gaps.into_iter().enumerate() {
        let Some(gap) = gap else { continue };
        evaluated += 1;
        if gap < -options.tolerance {
            return Err(OptimizerError::OracleViolation { index, improvement: -gap });
        }
        min_gap = min_gap.min(gap);
    }
    Ok(VerificationReport { samples: options.samples, evaluated, min_gap, seed: options.seed })
}

/// Replica counts that cover an allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct InstancePlan {
    pub instances: Vec<u32>,
    /// Provisioned minus required capacity per node, requests/second.
    pub slack: Vec<f64>,
}

/// Smallest replica count per node whose aggregate base rate meets the
/// allocated effective rate; never below one.
pub fn allocation_to_instances(solution: &AllocationSolution, base_rates: &[f64]) -> InstancePlan {
    let instances: Vec<u32> = solution
        .effective_rates
        .iter()
        .zip(base_rates)
        .map(|(need, base)| {
            let ratio = need / base;
            // absorb rounding noise so an exact multiple is not bumped up
            let count = (ratio - 1e-9).ceil();
            count.max(1.0) as u32
        })
        .collect();
    let slack = instances
        .iter()
        .zip(base_rates)
        .zip(&solution.effective_rates)
        .map(|((k, base), need)| f64::from(*k) * base - need)
        .collect();
    InstancePlan { instances, slack }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn cims_problem(budget: f64) -> AllocationProblem {
        AllocationProblem::unit(vec![1.0, 1.0, 1.0, 0.2, 0.3, 0.5], budget)
    }

    #[test]
    fn cims_budget_thousand() {
        let s = solve_allocation(&cims_problem(1000.0)).unwrap();
        for (mu, l) in s.service_rates.iter().zip([1.0, 1.0, 1.0, 0.2, 0.3, 0.5]) {
            assert_relative_eq!(*mu, l + 166.0, max_relative = 1e-15);
        }
        assert_relative_eq!(s.objective, 6.0 / 166.0, max_relative = 1e-12);
        assert_eq!(s.surplus, 166.0);
    }

    #[test]
    fn single_node_takes_everything() {
        let p = AllocationProblem::new(vec![3.0], vec![2.0], 10.0);
        let s = solve_allocation(&p).unwrap();
        assert_relative_eq!(s.service_rates[0], 5.0, max_relative = 1e-15);
        let report = verify_allocation(&p, &s, &VerifyOptions::default()).unwrap();
        assert_eq!(report.evaluated, 0);
    }

    #[test]
    fn symmetric_problem_symmetric_answer() {
        let p = AllocationProblem::new(vec![2.0; 4], vec![1.5; 4], 40.0);
        let s = solve_allocation(&p).unwrap();
        for mu in &s.service_rates {
            assert_relative_eq!(*mu, 10.0 / 1.5, max_relative = 1e-15);
        }
    }

    #[test]
    fn infeasible_budgets() {
        assert!(matches!(
            solve_allocation(&cims_problem(4.0)),
            Err(OptimizerError::Infeasible { required, .. }) if required == 4.0
        ));
        assert!(solve_allocation(&cims_problem(4.0 * (1.0 + 1e-12))).is_err());
        assert!(solve_allocation(&AllocationProblem::new(vec![1.0], vec![0.0], 5.0)).is_err());
    }

    #[test]
    fn huge_budget_objective() {
        let s = solve_allocation(&cims_problem(1e6)).unwrap();
        assert_relative_eq!(s.objective, 36.0 / 999_996.0, max_relative = 1e-12);
    }

    #[test]
    fn oracle_accepts_optimum_and_rejects_perturbed() {
        let p = cims_problem(1000.0);
        let s = solve_allocation(&p).unwrap();
        let report = verify_allocation(&p, &s, &VerifyOptions::default()).unwrap();
        assert_eq!(report.evaluated, 10_000);
        assert!(report.min_gap >= 0.0);

        let mut worse = s.clone();
        worse.service_rates[0] += 10.0;
        worse.service_rates[1] -= 10.0;
        let worse_obj = p.objective(&worse.service_rates);
        assert!(worse_obj > s.objective);
        worse.objective = worse_obj;
        // From the perturbed point some direction must improve.
        assert!(matches!(
            verify_allocation(&p, &worse, &VerifyOptions::default()),
            Err(OptimizerError::OracleViolation { .. })
        ));
    }

    #[test]
    fn oracle_is_parallelism_independent() {
        let p = AllocationProblem::new(vec![1.0, 2.0, 0.5], vec![1.0, 2.0, 3.0], 50.0);
        let s = solve_allocation(&p).unwrap();
        let opts = VerifyOptions { samples: 2000, ..VerifyOptions::default() };
        let a = verify_allocation(&p, &s, &opts).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| verify_allocation(&p, &s, &opts).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn instance_counts() {
        let s = AllocationSolution {
            service_rates: vec![166.2, 111.11, 0.5],
            effective_rates: vec![166.2, 111.11, 0.5],
            objective: 0.0,
            surplus: 0.0,
        };
        let plan = allocation_to_instances(&s, &[111.11, 111.11, 111.11]);
        assert_eq!(plan.instances, vec![2, 1, 1]);
        assert!(plan.slack.iter().all(|x| *x >= -1e-9));
    }

    #[test]
    fn asymptotic_surplus_vanishes() {
        let term = |n: usize| {
            let p = AllocationProblem::unit(vec![4.0 / n as f64; n], 10.0);
            solve_allocation(&p).unwrap().surplus
        };
        assert_relative_eq!(term(10), 0.6, max_relative = 1e-12);
        assert_relative_eq!(term(10_000) / term(10), 1e-3, max_relative = 1e-9);
    }

    #[test]
    fn random_feasible_points_never_win() {
        let p = AllocationProblem::new(vec![1.0, 1.0, 1.0, 0.2, 0.3, 0.5], vec![1.0, 1.0, 1.0, 6.0, 5.0, 4.0], 60.0);
        let s = solve_allocation(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let free = p.budget - p.total_arrival_rate();
        for _ in 0..100_000 {
            // random split of the free capacity on the simplex
            let w: Vec<f64> = (0..6).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
            let total: f64 = w.iter().sum();
            let rates: Vec<f64> = (0..6)
                .map(|i| (p.arrival_rates[i] + free * w[i] / total) / p.capacity_factors[i])
                .collect();
            assert!(s.objective <= p.objective(&rates) + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn budget_and_scale_invariants(
            rates in prop::collection::vec(0.0f64..50.0, 1..12),
            factors_seed in prop::collection::vec(0.1f64..10.0, 12),
            extra in 0.5f64..500.0,
            alpha in 0.01f64..100.0,
        ) {
            let n = rates.len();
            let c = factors_seed[..n].to_vec();
            let budget = rates.iter().sum::<f64>() + extra;
            let p = AllocationProblem::new(rates.clone(), c.clone(), budget);
            let s = solve_allocation(&p).unwrap();
            let spent: f64 = s.effective_rates.iter().sum();
            prop_assert!((spent - budget).abs() <= 1e-9 * budget);
            for i in 0..n {
                prop_assert!(s.effective_rates[i] > rates[i]);
            }
            let scaled = AllocationProblem::new(rates.iter().map(|r| r * alpha).collect(), c, budget * alpha);
            let t = solve_allocation(&scaled).unwrap();
            for i in 0..n {
                prop_assert!((t.service_rates[i] - alpha * s.service_rates[i]).abs() <= 1e-9 * t.service_rates[i]);
            }
            prop_assert!((t.objective - s.objective / alpha).abs() <= 1e-9 * t.objective);
        }
    }
}
