//! Monotone limited-memory quasi-Newton descent with optional projection.

use std::collections::VecDeque;

pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// Maps `x` onto the feasible set in place.
    fn project(&self, _x: &mut [f64]) {}
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub decrease_tol: f64,
    pub memory: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-5,
            decrease_tol: 1e-8,
            memory: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientNorm,
    SmallDecrease,
    MaxIterations,
    LineSearch,
}

#[derive(Debug, Clone)]
pub struct OptimReport {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Objective after every accepted iterate, starting with the initial one.
    pub history: Vec<f64>,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Norm of the projected-gradient step `P(x - g) - x`; the plain gradient
/// norm when unconstrained.
fn stationarity(obj: &impl Objective, x: &[f64], g: &[f64]) -> f64 {
    let mut y: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
    obj.project(&mut y);
    let d: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    norm(&d)
}

pub fn minimize(obj: &impl Objective, x0: Vec<f64>, opts: &OptimOptions) -> OptimReport {
    const ARMIJO: f64 = 1e-4;
    let mut x = x0;
    obj.project(&mut x);
    let mut f = obj.value(&x);
    let mut g = obj.gradient(&x);
    let mut history = vec![f];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;

    let termination = loop {
        if stationarity(obj, &x, &g) < opts.grad_tol {
            break Termination::GradientNorm;
        }
        if iterations >= opts.max_iters {
            break Termination::MaxIterations;
        }

        let mut accepted = None;
        for attempt in 0..2 {
            let use_memory = attempt == 0 && !memory.is_empty();
            let dir = if use_memory { two_loop(&g, &memory) } else { g.iter().map(|v| -v).collect() };
            if dot(&dir, &g) >= 0.0 {
                continue;
            }
            let mut step = if use_memory { 1.0 } else { (1.0 / norm(&g)).min(1.0) };
            for _ in 0..50 {
                let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
                obj.project(&mut trial);
                let moved: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                let slope = dot(&g, &moved);
                if slope < 0.0 {
                    let ft = obj.value(&trial);
                    if ft.is_finite() && ft <= f + ARMIJO * slope {
                        accepted = Some((trial, ft));
                        break;
                    }
                }
                step *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            memory.clear();
        }

        let Some((xn, fn_)) = accepted else {
            break Termination::LineSearch;
        };
        let gn = obj.gradient(&xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        let decrease = f - fn_;
        x = xn;
        f = fn_;
        g = gn;
        iterations += 1;
        history.push(f);
        if decrease < opts.decrease_tol {
            break Termination::SmallDecrease;
        }
    };

    OptimReport {
        x,
        value: f,
        iterations,
        history,
        termination,
    }
}

fn two_loop(g: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let (s, y, _) = memory.back().expect("non-empty memory");
    let gamma = dot(s, y) / dot(y, y);
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn value(&self, x: &[f64]) -> f64 {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ]
        }
    }

    struct BoxedQuadratic;

    impl Objective for BoxedQuadratic {
        fn value(&self, x: &[f64]) -> f64 {
            (x[0] - 3.0).powi(2) + (x[1] + 0.5).powi(2)
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 0.5)]
        }
        fn project(&self, x: &mut [f64]) {
            x[0] = x[0].min(1.0);
        }
    }

    #[test]
    fn rosenbrock_converges_monotonically() {
        let opts = OptimOptions { max_iters: 2000, decrease_tol: 0.0, grad_tol: 1e-8, ..Default::default() };
        let r = minimize(&Rosenbrock, vec![-1.2, 1.0], &opts);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn projection_is_respected() {
        let r = minimize(&BoxedQuadratic, vec![0.0, 0.0], &OptimOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-6);
        assert!((r.x[1] + 0.5).abs() < 1e-4);
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let r = minimize(&BoxedQuadratic, vec![1.0, -0.5], &OptimOptions::default());
        assert_eq!(r.iterations, 0);
        assert_eq!(r.termination, Termination::GradientNorm);
    }
}
