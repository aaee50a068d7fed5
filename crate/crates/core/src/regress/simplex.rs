//! Bounded Nelder-Mead with dimension-adaptive coefficients.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Maximum number of objective evaluations. The initial simplex is
    /// always evaluated in full, even when it exceeds the budget.
    pub budget: usize,
    /// Stop once the spread of vertex values is at most this...
    pub f_tolerance: f64,
    /// ...and the simplex fits in a box of this half-width.
    pub x_tolerance: f64,
    pub initial_step: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions { budget: 1000, f_tolerance: 1e-8, x_tolerance: 1e-4, initial_step: 0.25, lower: -1.0, upper: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Best value seen after each evaluation.
    pub history: Vec<f64>,
}

struct Tracker<F> {
    f: F,
    best_x: Vec<f64>,
    best: f64,
    history: Vec<f64>,
}

impl<F: FnMut(&[f64]) -> f64> Tracker<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        let v = (self.f)(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if self.history.is_empty() || v < self.best {
            self.best = v;
            self.best_x.clear();
            self.best_x.extend_from_slice(x);
        }
        self.history.push(self.best);
        v
    }
}

pub fn minimize<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], opts: &SimplexOptions) -> SimplexResult {
    let n = x0.len();
    let clamp = |v: f64| v.clamp(opts.lower, opts.upper);
    let mut t = Tracker { f, best_x: Vec::new(), best: f64::INFINITY, history: Vec::new() };

    let mut verts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    verts.push(x0.iter().map(|&v| clamp(v)).collect());
    for i in 0..n {
        let mut v = verts[0].clone();
        let up = v[i] + opts.initial_step;
        v[i] = if up <= opts.upper { up } else { clamp(v[i] - opts.initial_step) };
        verts.push(v);
    }
    let mut vals: Vec<f64> = verts.iter().map(|v| t.eval(v)).collect();

    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut order: Vec<usize> = (0..=n).collect();
    let mut centroid = vec![0.0; n];
    let point = |c: &[f64], w: &[f64], coef: f64| -> Vec<f64> {
        c.iter().zip(w).map(|(&c, &w)| clamp(c + coef * (c - w))).collect()
    };

    while n > 0 && t.history.len() < opts.budget {
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        let (lo, hi, second) = (order[0], order[n], order[n - 1]);
        if converged(&verts, &vals, lo, hi, opts) {
            break;
        }
        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&verts[i]) {
                *c += v / nf;
            }
        }
        let xr = point(&centroid, &verts[hi], alpha);
        let fr = t.eval(&xr);
        if fr < vals[lo] {
            let xe = point(&centroid, &verts[hi], alpha * gamma);
            let fe = t.eval(&xe);
            if fe < fr {
                (verts[hi], vals[hi]) = (xe, fe);
            } else {
                (verts[hi], vals[hi]) = (xr, fr);
            }
            continue;
        }
        if fr < vals[second] {
            (verts[hi], vals[hi]) = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < vals[hi] {
            let xc = point(&centroid, &verts[hi], alpha * rho);
            let fc = t.eval(&xc);
            (xc, fc, fc <= fr)
        } else {
            let xc = point(&centroid, &verts[hi], -rho);
            let fc = t.eval(&xc);
            (xc, fc, fc < vals[hi])
        };
        if accept {
            (verts[hi], vals[hi]) = (xc, fc);
            continue;
        }
        let best = verts[lo].clone();
        for &i in &order[1..] {
            if t.history.len() >= opts.budget {
                break;
            }
            let shrunk: Vec<f64> = best.iter().zip(&verts[i]).map(|(&b, &v)| clamp(b + sigma * (v - b))).collect();
            vals[i] = t.eval(&shrunk);
            verts[i] = shrunk;
        }
    }

    SimplexResult { value: t.best, evaluations: t.history.len(), x: t.best_x, history: t.history }
}

fn converged(verts: &[Vec<f64>], vals: &[f64], lo: usize, hi: usize, opts: &SimplexOptions) -> bool {
    if !vals[lo].is_finite() {
        return false;
    }
    let spread = vals[hi] - vals[lo];
    if spread.is_nan() || spread > opts.f_tolerance {
        return false;
    }
    verts.iter().all(|v| v.iter().zip(&verts[lo]).all(|(a, b)| (a - b).abs() <= opts.x_tolerance))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn finds_quadratic_minimum() {
        let opts = SimplexOptions { budget: 2000, f_tolerance: 1e-14, x_tolerance: 1e-8, ..Default::default() };
        let r = minimize(|x| x.iter().enumerate().map(|(i, v)| (v - 0.1 * i as f64).powi(2)).sum(), &[0.5; 4], &opts);
        for (i, v) in r.x.iter().enumerate() {
            assert!((v - 0.1 * i as f64).abs() < 1e-4, "{:?}", r.x);
        }
    }

    #[test]
    fn rosenbrock_inside_box() {
        let opts = SimplexOptions { budget: 5000, f_tolerance: 1e-16, x_tolerance: 1e-9, lower: -2.0, upper: 2.0, ..Default::default() };
        let r = minimize(rosenbrock, &[-1.2, 1.0], &opts);
        assert!(r.value < 1e-8, "{r:?}");
    }

    #[test]
    fn respects_box() {
        let opts = SimplexOptions { budget: 500, ..Default::default() };
        let r = minimize(|x| -x[0] - x[1], &[0.0, 0.0], &opts);
        assert!(r.x.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!((r.value + 2.0).abs() < 1e-6);
    }

    #[test]
    fn budget_one_evaluates_initial_simplex_only() {
        let opts = SimplexOptions { budget: 1, ..Default::default() };
        let r = minimize(|x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2], &[0.5, 0.5, 0.5], &opts);
        assert_eq!(r.evaluations, 4);
        assert!((r.value - 0.75).abs() < 1e-12);
    }

    #[test]
    fn history_is_monotone_and_infinities_tolerated() {
        let opts = SimplexOptions { budget: 300, ..Default::default() };
        let r = minimize(|x| if x[0] > 0.3 { f64::INFINITY } else { (x[0] - 0.2).powi(2) + x[1].powi(2) }, &[0.1, 0.9], &opts);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.value < 1e-6, "{r:?}");
    }
}
