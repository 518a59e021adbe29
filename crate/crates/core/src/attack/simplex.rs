//! Nelder–Mead simplex minimiser with a hard evaluation budget.
//!
//! The trajectory depends only on the start point, step and objective; the
//! budget only decides where it is cut off. A larger budget therefore never
//! yields a worse best point.

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions {
    pub max_evals: usize,
    pub initial_step: f64,
    /// Spread of objective values across the simplex that counts as converged.
    pub f_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { max_evals: 2000, initial_step: 0.5, f_tol: 1e-12 }
    }
}

#[derive(Clone, Debug)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

struct Budgeted<'a, F: Fn(&[f64]) -> f64> {
    f: &'a F,
    used: usize,
    cap: usize,
    best_x: Vec<f64>,
    best_f: f64,
}

impl<F: Fn(&[f64]) -> f64> Budgeted<'_, F> {
    fn eval(&mut self, x: &[f64]) -> Option<f64> {
        if self.used >= self.cap {
            return None;
        }
        self.used += 1;
        let mut v = (self.f)(x);
        if v.is_nan() {
            v = f64::INFINITY;
        }
        if v < self.best_f {
            self.best_f = v;
            self.best_x.clear();
            self.best_x.extend_from_slice(x);
        }
        Some(v)
    }
}

fn axis_simplex(centre: &[f64], step: f64) -> Vec<Vec<f64>> {
    let mut pts = vec![centre.to_vec()];
    for i in 0..centre.len() {
        let mut p = centre.to_vec();
        p[i] += step;
        pts.push(p);
    }
    pts
}

/// Minimise `f` from `x0`. When a simplex collapses before the budget runs
/// out, a fresh simplex is built around the best point and the search goes on.
pub fn minimize(f: &impl Fn(&[f64]) -> f64, x0: &[f64], opts: &SimplexOptions) -> SimplexResult {
    let mut ctx = Budgeted { f, used: 0, cap: opts.max_evals.max(1), best_x: x0.to_vec(), best_f: f64::INFINITY };
    let mut converged = false;
    let mut centre = x0.to_vec();
    while run_simplex(&mut ctx, &centre, opts).is_some() {
        converged = true;
        centre = ctx.best_x.clone();
    }
    SimplexResult { x: ctx.best_x, f: ctx.best_f, evals: ctx.used, converged }
}

/// `Some(())` when the simplex collapsed, `None` when the budget ran out.
fn run_simplex<F: Fn(&[f64]) -> f64>(ctx: &mut Budgeted<'_, F>, centre: &[f64], opts: &SimplexOptions) -> Option<()> {
    let dim = centre.len();
    let mut pts = axis_simplex(centre, opts.initial_step);
    let mut vals = Vec::with_capacity(dim + 1);
    for p in &pts {
        vals.push(ctx.eval(p)?);
    }
    loop {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        if (vals[dim] - vals[0]).abs() <= opts.f_tol {
            return Some(());
        }

        let mut centroid = vec![0.0; dim];
        for p in &pts[..dim] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / dim as f64;
            }
        }
        let towards = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&pts[dim]).map(|(c, w)| c + t * (w - c)).collect()
        };

        let xr = towards(-REFLECT);
        let fr = ctx.eval(&xr)?;
        if fr < vals[0] {
            let xe = towards(-REFLECT * EXPAND);
            let fe = ctx.eval(&xe)?;
            if fe < fr {
                pts[dim] = xe;
                vals[dim] = fe;
            } else {
                pts[dim] = xr;
                vals[dim] = fr;
            }
            continue;
        }
        if fr < vals[dim - 1] {
            pts[dim] = xr;
            vals[dim] = fr;
            continue;
        }
        let xc = if fr < vals[dim] { towards(-REFLECT * CONTRACT) } else { towards(CONTRACT) };
        let fc = ctx.eval(&xc)?;
        if fc < vals[dim].min(fr) {
            pts[dim] = xc;
            vals[dim] = fc;
            continue;
        }
        for i in 1..=dim {
            let shrunk: Vec<f64> = pts[0].iter().zip(&pts[i]).map(|(b, p)| b + SHRINK * (p - b)).collect();
            vals[i] = ctx.eval(&shrunk)?;
            pts[i] = shrunk;
        }
    }
}
