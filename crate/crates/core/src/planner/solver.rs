//! Augmented-Lagrangian solver for small inequality-constrained programs
//!
//! ```text
//! minimize f(x)  subject to  c(x) >= 0,  x in X
//! ```
//!
//! where `f = g + h` with `g` smooth and `h` convex with a cheap proximal
//! map that also enforces `x in X`. The inner problem is solved by proximal
//! gradient descent with Barzilai-Borwein step guesses and backtracking;
//! gradients of the smooth part are central finite differences.

use nalgebra::DVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Feasibility tolerance on `max(0, -min c(x))`.
    pub outer_tol: f64,
    /// Projected-gradient tolerance of the inner solve.
    pub inner_tol: f64,
    /// Outer iterations stop once a feasible iterate moves less than this.
    pub step_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub fd_step: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            outer_tol: 1e-6,
            inner_tol: 1e-8,
            step_tol: 1e-6,
            max_outer: 50,
            max_inner: 200,
            fd_step: 1e-6,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e10,
        }
    }
}

/// A composite program over a simple convex set `X`.
pub trait Program {
    /// Smooth part of the objective.
    fn smooth_objective(&self, x: &DVector<f64>) -> f64;
    /// Convex nonsmooth part, handled only through [`Program::prox`].
    fn nonsmooth_objective(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }
    /// Inequality constraints, satisfied when every entry is `>= 0`.
    fn constraints(&self, x: &DVector<f64>) -> Vec<f64>;
    /// In place: `argmin_z step * h(z) + |z - x|^2 / 2` over `X`. With no
    /// nonsmooth part this is the Euclidean projection onto `X`.
    fn prox(&self, x: &mut DVector<f64>, step: f64);

    fn objective(&self, x: &DVector<f64>) -> f64 {
        self.smooth_objective(x) + self.nonsmooth_objective(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub x: DVector<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// The stopping test (feasible and stationary across an outer
    /// iteration) was met before the iteration cap.
    pub converged: bool,
}

pub fn max_violation(c: &[f64]) -> f64 {
    c.iter().fold(0.0, |acc, &ci| acc.max(-ci))
}

struct Lagrangian<'a, P: Program> {
    program: &'a P,
    multipliers: &'a [f64],
    penalty: f64,
}

impl<P: Program> Lagrangian<'_, P> {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let rho = self.penalty;
        let c = self.program.constraints(x);
        let shift: f64 = c
            .iter()
            .zip(self.multipliers)
            .map(|(&ci, &li)| {
                if ci <= li / rho {
                    -li * ci + 0.5 * rho * ci * ci
                } else {
                    -0.5 * li * li / rho
                }
            })
            .sum();
        self.program.smooth_objective(x) + shift
    }
}

fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut probe = x.clone();
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|k| {
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        }),
    )
}

/// Proximal gradient descent on `merit + h`; returns the final point and
/// the number of iterations used.
fn inner_solve<P: Program>(
    program: &P,
    merit: impl Fn(&DVector<f64>) -> f64,
    x0: DVector<f64>,
    opts: &SolverOptions,
) -> (DVector<f64>, usize) {
    let total = |z: &DVector<f64>, fz: f64| fz + program.nonsmooth_objective(z);
    let mut x = x0;
    let mut fx = merit(&x);
    let mut g = fd_gradient(&merit, &x, opts.fd_step);
    let mut alpha = 1.0;
    for it in 0..opts.max_inner {
        let mut probe = &x - &g;
        program.prox(&mut probe, 1.0);
        if (&x - &probe).amax() <= opts.inner_tol {
            return (x, it);
        }

        let f_now = total(&x, fx);
        let mut accepted = None;
        while alpha > 1e-16 {
            let mut trial = &x - &g * alpha;
            program.prox(&mut trial, alpha);
            let d = &trial - &x;
            let ft = merit(&trial);
            if ft <= fx + g.dot(&d) + d.norm_squared() / (2.0 * alpha) && total(&trial, ft) <= f_now {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((next, fnext)) = accepted else {
            // no descent at any representable step: numerically stationary
            return (x, it);
        };

        let g_next = fd_gradient(&merit, &next, opts.fd_step);
        let s = &next - &x;
        let y = &g_next - &g;
        let sy = s.dot(&y);
        alpha = if sy > 0.0 { (s.norm_squared() / sy).clamp(1e-12, 1e12) } else { (alpha * 2.0).min(1e12) };
        x = next;
        fx = fnext;
        g = g_next;
    }
    (x, opts.max_inner)
}

/// Runs the augmented-Lagrangian method from `x0` (projected first).
pub fn minimize<P: Program>(program: &P, x0: &DVector<f64>, opts: &SolverOptions) -> Outcome {
    let mut x = x0.clone();
    program.prox(&mut x, 0.0);
    let m = program.constraints(&x).len();
    let mut multipliers = vec![0.0; m];
    let mut penalty = opts.initial_penalty;
    let mut prev_violation = f64::INFINITY;
    let mut inner_total = 0;
    let mut converged = false;
    let mut outer = 0;

    while outer < opts.max_outer {
        outer += 1;
        let lagrangian = Lagrangian {
            program,
            multipliers: &multipliers,
            penalty,
        };
        let (next, inner_iters) = inner_solve(program, |z| lagrangian.value(z), x.clone(), opts);
        inner_total += inner_iters;
        let moved = (&next - &x).amax();
        x = next;

        let c = program.constraints(&x);
        let violation = max_violation(&c);
        for (li, ci) in multipliers.iter_mut().zip(&c) {
            *li = (*li - penalty * ci).max(0.0);
        }
        if violation <= opts.outer_tol && moved <= opts.step_tol {
            converged = true;
            break;
        }
        if violation > opts.outer_tol && violation > 0.25 * prev_violation {
            penalty = (penalty * opts.penalty_growth).min(opts.max_penalty);
        }
        prev_violation = violation;
    }

    let c = program.constraints(&x);
    Outcome {
        objective: program.objective(&x),
        max_violation: max_violation(&c),
        x,
        outer_iterations: outer,
        inner_iterations: inner_total,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Quadratic bowl centred at `center`, optional linear constraints
    /// `a_k . x >= b_k`, box `|x_i| <= bound`.
    struct Quadratic {
        center: Vec<f64>,
        cuts: Vec<(Vec<f64>, f64)>,
        bound: f64,
    }

    impl Program for Quadratic {
        fn smooth_objective(&self, x: &DVector<f64>) -> f64 {
            x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum()
        }
        fn constraints(&self, x: &DVector<f64>) -> Vec<f64> {
            self.cuts
                .iter()
                .map(|(a, b)| a.iter().zip(x.iter()).map(|(ai, xi)| ai * xi).sum::<f64>() - b)
                .collect()
        }
        fn prox(&self, x: &mut DVector<f64>, _step: f64) {
            x.iter_mut().for_each(|v| *v = v.clamp(-self.bound, self.bound));
        }
    }

    #[test]
    fn optimal_warm_start_is_a_fixed_point() {
        let p = Quadratic {
            center: vec![0.3, -0.2],
            cuts: vec![],
            bound: 1.0,
        };
        let x0 = DVector::from_vec(vec![0.3, -0.2]);
        let out = minimize(&p, &x0, &SolverOptions::default());
        assert!(out.converged);
        assert!(out.outer_iterations <= 2);
        assert_eq!(out.x, x0);
    }

    #[test]
    fn unconstrained_minimum_is_found() {
        let p = Quadratic {
            center: vec![0.3, -0.2, 0.9],
            cuts: vec![],
            bound: 1.0,
        };
        let out = minimize(&p, &DVector::zeros(3), &SolverOptions::default());
        assert!(out.converged);
        assert!((out.x - DVector::from_vec(vec![0.3, -0.2, 0.9])).amax() < 1e-6);
    }

    #[test]
    fn box_clips_the_minimum() {
        let p = Quadratic {
            center: vec![3.0, 0.0],
            cuts: vec![],
            bound: 1.0,
        };
        let out = minimize(&p, &DVector::zeros(2), &SolverOptions::default());
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn active_linear_constraint() {
        // min (x-2)^2 + y^2 s.t. 1 - x >= 0  ->  x = 1
        let p = Quadratic {
            center: vec![2.0, 0.0],
            cuts: vec![(vec![-1.0, 0.0], -1.0)],
            bound: 5.0,
        };
        let out = minimize(&p, &DVector::zeros(2), &SolverOptions::default());
        assert!(out.converged, "{out:?}");
        assert!(out.max_violation <= 1e-6);
        assert!((out.x[0] - 1.0).abs() < 1e-5);
        assert!(out.x[1].abs() < 1e-6);
    }

    #[test]
    fn circle_constraint() {
        // nearest point to (2.5, 0.1) outside the unit disk around (2, 0)
        struct Ring;
        impl Program for Ring {
            fn smooth_objective(&self, x: &DVector<f64>) -> f64 {
                (x[0] - 2.5).powi(2) + (x[1] - 0.1).powi(2)
            }
            fn constraints(&self, x: &DVector<f64>) -> Vec<f64> {
                vec![((x[0] - 2.0).powi(2) + x[1].powi(2)).sqrt() - 1.0]
            }
            fn prox(&self, _x: &mut DVector<f64>, _step: f64) {}
        }
        let out = minimize(&Ring, &DVector::from_vec(vec![0.0, 0.5]), &SolverOptions::default());
        assert!(out.max_violation <= 1e-6, "{out:?}");
        let r = ((out.x[0] - 2.0).powi(2) + out.x[1].powi(2)).sqrt();
        assert!((r - 1.0).abs() < 1e-5);
    }

    /// `|x - c|^2 / 2 + w |x|`, minimised at `c * max(0, 1 - w / |c|)`.
    struct Shrink {
        center: [f64; 2],
        weight: f64,
    }

    impl Program for Shrink {
        fn smooth_objective(&self, x: &DVector<f64>) -> f64 {
            0.5 * ((x[0] - self.center[0]).powi(2) + (x[1] - self.center[1]).powi(2))
        }
        fn nonsmooth_objective(&self, x: &DVector<f64>) -> f64 {
            self.weight * x.norm()
        }
        fn constraints(&self, _x: &DVector<f64>) -> Vec<f64> {
            vec![]
        }
        fn prox(&self, x: &mut DVector<f64>, step: f64) {
            let n = x.norm();
            let scale = if n > 0.0 { (1.0 - step * self.weight / n).max(0.0) } else { 0.0 };
            *x *= scale;
        }
    }

    #[test]
    fn nonsmooth_norm_term() {
        let p = Shrink {
            center: [3.0, 4.0],
            weight: 1.0,
        };
        let out = minimize(&p, &DVector::zeros(2), &SolverOptions::default());
        assert!(out.converged);
        assert!((out.x[0] - 2.4).abs() < 1e-6 && (out.x[1] - 3.2).abs() < 1e-6, "{out:?}");

        // a weight above |c| keeps the origin optimal
        let p = Shrink {
            center: [0.3, 0.4],
            weight: 1.0,
        };
        let out = minimize(&p, &DVector::from_vec(vec![0.3, 0.4]), &SolverOptions::default());
        assert_eq!(out.x, DVector::zeros(2));
    }
}
