//! Derivative-free minimization (Nelder–Mead simplex).

pub(crate) struct NelderMead {
    pub max_evals: usize,
    pub initial_step: f64,
    /// Stop once the simplex values span less than this.
    pub f_tol: f64,
}

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
}

impl NelderMead {
    /// Minimizes `f` from `x0`. The objective returns `(value, stop)`; a `true` stop
    /// flag ends the search right after that evaluation.
    pub fn minimize(&self, mut f: impl FnMut(&[f64]) -> (f64, bool), x0: &[f64]) -> Minimum {
        let dim = x0.len();
        let (v0, stop) = f(x0);
        if dim == 0 || stop {
            return Minimum { x: x0.to_vec(), value: v0 };
        }
        let mut evals = 1;
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), v0)];
        for d in 0..dim {
            let mut x = x0.to_vec();
            x[d] += self.initial_step;
            let (v, stop) = f(&x);
            evals += 1;
            simplex.push((x, v));
            if stop {
                return best_of(simplex);
            }
        }

        macro_rules! eval {
            ($x:expr) => {{
                let (v, stop) = f(&$x);
                evals += 1;
                if stop {
                    simplex.push(($x.clone(), v));
                    return best_of(simplex);
                }
                v
            }};
        }

        while evals < self.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[dim].1;
            if (worst - best).abs() <= self.f_tol {
                break;
            }
            let mut centroid = vec![0.0; dim];
            for (x, _) in &simplex[..dim] {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v / dim as f64;
                }
            }
            let along = |t: f64, from: &[f64]| -> Vec<f64> {
                centroid.iter().zip(from).map(|(c, w)| c + t * (c - w)).collect()
            };
            let xw = simplex[dim].0.clone();
            let xr = along(1.0, &xw);
            let vr = eval!(xr);
            if vr < best {
                let xe = along(2.0, &xw);
                let ve = eval!(xe);
                simplex[dim] = if ve < vr { (xe, ve) } else { (xr, vr) };
            } else if vr < simplex[dim - 1].1 {
                simplex[dim] = (xr, vr);
            } else {
                let (xc, vc) = if vr < worst {
                    let xc = along(0.5, &xw);
                    let vc = eval!(xc);
                    (xc, vc)
                } else {
                    let xc = along(-0.5, &xw);
                    let vc = eval!(xc);
                    (xc, vc)
                };
                if vc < worst.min(vr) {
                    simplex[dim] = (xc, vc);
                } else {
                    let x0 = simplex[0].0.clone();
                    for p in simplex.iter_mut().skip(1) {
                        let xs: Vec<f64> = x0.iter().zip(&p.0).map(|(a, b)| a + 0.5 * (b - a)).collect();
                        let vs = eval!(xs);
                        *p = (xs, vs);
                    }
                }
            }
        }
        best_of(simplex)
    }
}

fn best_of(simplex: Vec<(Vec<f64>, f64)>) -> Minimum {
    let (x, value) = simplex
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("simplex is nonempty");
    Minimum { x, value }
}
