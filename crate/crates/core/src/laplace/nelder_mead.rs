//! Nelder–Mead direct search (minimisation) with dimension-adaptive
//! coefficients.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Edge length of the initial simplex.
    pub initial_step: f64,
    /// Stop once the largest vertex distance falls to this.
    pub diameter_tolerance: f64,
    pub max_evaluations: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.5,
            diameter_tolerance: 1e-4,
            max_evaluations: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

struct Counted<F> {
    f: F,
    evaluations: usize,
    cap: usize,
    best: Option<(Vec<f64>, f64)>,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        if self.evaluations >= self.cap {
            let (best, value) = self.best.clone().unwrap_or((x.to_vec(), f64::NAN));
            return Err(Error::OptimizerCap {
                evaluations: self.evaluations,
                best,
                value,
            });
        }
        self.evaluations += 1;
        let v = (self.f)(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if self.best.as_ref().is_none_or(|b| v < b.1) {
            self.best = Some((x.to_vec(), v));
        }
        Ok(v)
    }
}

fn diameter(simplex: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for (a, p) in simplex.iter().enumerate() {
        for q in &simplex[a + 1..] {
            let dist = p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            d = d.max(dist);
        }
    }
    d
}

/// Minimises `f` from `x0`. Non-finite values count as infinitely bad.
pub fn minimize(f: impl FnMut(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> Result<Minimum> {
    let n = x0.len();
    let mut fun = Counted {
        f,
        evaluations: 0,
        cap: opts.max_evaluations,
        best: None,
    };
    if n == 0 {
        let value = fun.eval(x0)?;
        return Ok(Minimum {
            point: vec![],
            value,
            evaluations: fun.evaluations,
        });
    }
    let nf = n as f64;
    // Reduces to the classic (1, 2, 1/2, 1/2) for one and two dimensions.
    let na = n.max(2) as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / na, 0.75 - 0.5 / na, 1.0 - 1.0 / na);

    let mut simplex = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        simplex.push(v);
    }
    let mut values = Vec::with_capacity(n + 1);
    for v in &simplex {
        values.push(fun.eval(v)?);
    }

    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if diameter(&simplex) <= opts.diameter_tolerance {
            return Ok(Minimum {
                point: simplex[0].clone(),
                value: values[0],
                evaluations: fun.evaluations,
            });
        }

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / nf)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let reflected = along(alpha);
        let fr = fun.eval(&reflected)?;
        if fr < values[0] {
            let expanded = along(gamma);
            let fe = fun.eval(&expanded)?;
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[n] {
            let c = along(alpha * rho);
            let fc = fun.eval(&c)?;
            (c, fc)
        } else {
            let c = along(-rho);
            let fc = fun.eval(&c)?;
            (c, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let shrunk: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, v)| b + sigma * (v - b))
                .collect();
            values[i] = fun.eval(&shrunk)?;
            simplex[i] = shrunk;
        }
    }
}
