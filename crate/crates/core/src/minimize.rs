//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

const MEMORY: usize = 10;
const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 40;
const ROUNDING: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    /// Stop once `max |∂f/∂x_i|` falls to this value.
    pub gradient_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Minimum {
    pub fn gradient_norm(&self) -> f64 {
        inf_norm(&self.gradient)
    }
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect()
}

struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

/// Minimizes `f`, which returns the value and gradient at a point.
///
/// Never fails on non-convergence: the best point is returned with
/// `converged == false`. Errors from `f` are passed through.
pub fn lbfgs<E>(
    mut f: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
    x0: &[f64],
    opts: &LbfgsOptions,
) -> Result<Minimum, E> {
    let (f0, g0) = f(x0)?;
    let mut cur = Point {
        x: x0.to_vec(),
        f: f0,
        g: g0,
    };
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut iterations = 0;
    while iterations < opts.max_iters && inf_norm(&cur.g) > opts.gradient_tolerance {
        iterations += 1;
        let mut dir = two_loop(&cur.g, &history);
        let mut slope = dot(&dir, &cur.g);
        if slope >= 0.0 {
            history.clear();
            dir = cur.g.iter().map(|g| -g).collect();
            slope = dot(&dir, &cur.g);
        }
        let first = if history.is_empty() {
            (1.0 / inf_norm(&cur.g)).min(1.0)
        } else {
            1.0
        };
        let next = match wolfe_search(&mut f, &cur, &dir, slope, first)? {
            Some(p) => p,
            None if !history.is_empty() => {
                // Stale curvature pairs; retry once along the steepest descent.
                history.clear();
                continue;
            }
            None => break,
        };
        let s: Vec<f64> = next.x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.g.iter().zip(&cur.g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        cur = next;
    }
    let converged = inf_norm(&cur.g) <= opts.gradient_tolerance;
    Ok(Minimum {
        x: cur.x,
        value: cur.f,
        gradient: cur.g,
        iterations,
        converged,
    })
}

fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}

/// Bracketing and zoom phases for the strong Wolfe conditions.
/// `None` when no step lowering `f` is found.
fn wolfe_search<E>(
    f: &mut impl FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
    start: &Point,
    dir: &[f64],
    slope0: f64,
    first_step: f64,
) -> Result<Option<Point>, E> {
    let mut eval = |alpha: f64| -> Result<(Point, f64), E> {
        let x = axpy(&start.x, alpha, dir);
        let (fx, gx) = f(&x)?;
        let slope = dot(&gx, dir);
        Ok((Point { x, f: fx, g: gx }, slope))
    };
    let mut best: Option<Point> = None;
    let keep_best = |p: Point, best: &mut Option<Point>| {
        if p.f < start.f && best.as_ref().is_none_or(|b| p.f < b.f) {
            *best = Some(p);
        }
    };
    // Near a minimum the decrease drops below rounding of `f`; allow that
    // slack so the precise gradient can still drive convergence.
    let slack = ROUNDING * start.f.abs().max(1.0);
    let sufficient = |alpha: f64, fx: f64| fx <= start.f + C1 * alpha * slope0 + slack;
    let curvature = |slope: f64| slope.abs() <= -C2 * slope0;

    // (step, value, directional derivative) at the bracket ends.
    let mut lo = (0.0, start.f, slope0);
    let mut hi: (f64, f64);
    let mut alpha = first_step;
    let mut n = 0;
    loop {
        n += 1;
        let (p, slope) = eval(alpha)?;
        if !sufficient(alpha, p.f) || (n > 1 && p.f > lo.1 + slack) {
            hi = (alpha, p.f);
            keep_best(p, &mut best);
            break;
        }
        if curvature(slope) {
            return Ok(Some(p));
        }
        let fx = p.f;
        keep_best(p, &mut best);
        if slope >= 0.0 {
            hi = (lo.0, lo.1);
            lo = (alpha, fx, slope);
            break;
        }
        lo = (alpha, fx, slope);
        alpha *= 2.0;
        if n >= MAX_LINE_EVALS {
            return Ok(best);
        }
    }

    for _ in n..MAX_LINE_EVALS {
        let w = hi.0 - lo.0;
        if w.abs() < 1e-14 * lo.0.abs().max(1.0) {
            break;
        }
        // Minimizer of the quadratic matching f and f' at `lo` and f at `hi`,
        // kept away from the bracket ends.
        let q = lo.0 - lo.2 * w * w / (2.0 * (hi.1 - lo.1 - lo.2 * w));
        let (a, b) = (lo.0.min(hi.0), lo.0.max(hi.0));
        let margin = 0.1 * (b - a);
        let trial = if q.is_finite() && q > a + margin && q < b - margin {
            q
        } else {
            0.5 * (a + b)
        };
        let (p, slope) = eval(trial)?;
        if !sufficient(trial, p.f) || p.f > lo.1 + slack {
            hi = (trial, p.f);
            keep_best(p, &mut best);
            continue;
        }
        if curvature(slope) {
            return Ok(Some(p));
        }
        if slope * w >= 0.0 {
            hi = (lo.0, lo.1);
        }
        lo = (trial, p.f, slope);
        keep_best(p, &mut best);
    }
    Ok(best)
}
