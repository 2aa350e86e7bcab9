//! BFGS minimisation with central-difference gradients.
//!
//! Objectives may return `+∞` (or NaN) for infeasible points; the line search
//! backs away from them.

/// Settings for [`minimize`].
#[derive(Clone, Copy, Debug)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Relative finite-difference step, scaled by `1 + |x_i|`.
    pub grad_step: f64,
    /// Stop when `‖g‖∞ ≤ tol · (1 + |f|)`.
    pub tol: f64,
    /// Largest allowed `‖Δx‖∞` per iteration.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iter: 200, grad_step: 1e-5, tol: 1e-6, max_step: 2.0 }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Counted<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    fn grad(&mut self, x: &[f64], fx: f64, rel_step: f64) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            let h = rel_step * (1.0 + x[i].abs());
            xp[i] = x[i] + h;
            let fp = self.eval(&xp);
            xp[i] = x[i] - h;
            let fm = self.eval(&xp);
            xp[i] = x[i];
            g[i] = match (fp.is_finite(), fm.is_finite()) {
                (true, true) => (fp - fm) / (2.0 * h),
                (true, false) => (fp - fx) / h,
                (false, true) => (fx - fm) / h,
                (false, false) => 0.0,
            };
        }
        g
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// Minimises `f` from `x0`. With `max_iter = 0` the start point is returned
/// unchanged and marked unconverged.
pub fn minimize<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], opts: &BfgsOptions) -> Minimum {
    let n = x0.len();
    let mut obj = Counted { f, evaluations: 0 };
    let mut x = x0.to_vec();
    let mut fx = obj.eval(&x);
    if opts.max_iter == 0 || !fx.is_finite() {
        return Minimum { x, f: fx, grad: vec![f64::NAN; n], iterations: 0, evaluations: obj.evaluations, converged: false };
    }
    let mut g = obj.grad(&x, fx, opts.grad_step);
    let mut h = identity(n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        if inf_norm(&g) <= opts.tol * (1.0 + fx.abs()) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut d: Vec<f64> = h.iter().map(|row| -dot(row, &g)).collect();
        if dot(&d, &g) >= 0.0 {
            h = identity(n);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
        }
        let dn = inf_norm(&d);
        if dn > opts.max_step {
            d.iter_mut().for_each(|v| *v *= opts.max_step / dn);
        }
        let slope = dot(&d, &g);
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..40 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let ft = obj.eval(&xt);
            if ft.is_finite() && ft <= fx + 1e-4 * t * slope {
                next = Some((xt, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = next else {
            if fresh {
                break;
            }
            h = identity(n);
            fresh = true;
            continue;
        };
        let gn = obj.grad(&xn, fnew, opts.grad_step);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let df = fx - fnew;
        x = xn;
        g = gn;
        let f_old = fx;
        fx = fnew;
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                let scale = sy / dot(&y, &y);
                h.iter_mut().flatten().for_each(|v| *v *= scale);
            }
            let hy: Vec<f64> = h.iter().map(|row| dot(row, &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
            fresh = false;
        }
        if df.abs() <= 1e-12 * (1.0 + f_old.abs()) && inf_norm(&s) <= 1e-8 {
            converged = inf_norm(&g) <= opts.tol.sqrt() * (1.0 + fx.abs());
            break;
        }
    }
    if !converged && inf_norm(&g) <= opts.tol * (1.0 + fx.abs()) {
        converged = true;
    }
    Minimum { x, f: fx, grad: g, iterations, evaluations: obj.evaluations, converged }
}
