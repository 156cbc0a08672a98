//! One-dimensional Laplace approximation: locate the mode of a log-density,
//! read the variance off the curvature there, and use the resulting normal to
//! approximate integrals of the density.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};

const MAX_ITERATIONS: usize = 100;
const MAX_HALVINGS: usize = 30;

/// A log-density (possibly unnormalised) on the open interval `(lo, hi)`.
pub struct ScalarTarget {
    log_density: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    lo: f64,
    hi: f64,
}

impl std::fmt::Debug for ScalarTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarTarget")
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .finish_non_exhaustive()
    }
}

impl ScalarTarget {
    pub fn new(log_density: impl Fn(f64) -> f64 + Send + Sync + 'static, lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(invalid(format!("support ({lo}, {hi}) is empty")));
        }
        Ok(Self {
            log_density: Box::new(log_density),
            lo,
            hi,
        })
    }

    /// Normalised normal log-density on the real line.
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        if variance <= 0.0 {
            return Err(invalid("variance must be positive"));
        }
        let c = -0.5 * (2.0 * std::f64::consts::PI * variance).ln();
        Self::new(
            move |x| c - 0.5 * (x - mean).powi(2) / variance,
            f64::NEG_INFINITY,
            f64::INFINITY,
        )
    }

    /// Normalised Gamma(shape, rate) log-density on `(0, inf)`.
    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        if shape <= 0.0 || rate <= 0.0 {
            return Err(invalid("Gamma shape and rate must be positive"));
        }
        let c = shape * rate.ln() - statrs::function::gamma::ln_gamma(shape);
        Self::new(
            move |x| c + (shape - 1.0) * x.ln() - rate * x,
            0.0,
            f64::INFINITY,
        )
    }

    pub fn log_density(&self, x: f64) -> f64 {
        (self.log_density)(x)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    /// A starting point inside the support.
    fn default_start(&self) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => 0.5 * (self.lo + self.hi),
            (true, false) => self.lo + 1.0,
            (false, true) => self.hi - 1.0,
            (false, false) => 0.0,
        }
    }

    /// First and second derivatives by Ridders' extrapolation of central
    /// differences, with steps kept inside the support.
    pub fn derivatives(&self, x: f64) -> (f64, f64) {
        let room = (x - self.lo).min(self.hi - x);
        let h0 = (0.1 * x.abs().max(1.0)).min(0.5 * room);
        let f0 = self.log_density(x);
        let first = ridders(h0, |h| (self.log_density(x + h) - self.log_density(x - h)) / (2.0 * h));
        let second = ridders(h0, |h| {
            (self.log_density(x + h) - 2.0 * f0 + self.log_density(x - h)) / (h * h)
        });
        (first, second)
    }
}

/// Ridders' polynomial extrapolation to `h -> 0` of a difference quotient
/// whose error expands in even powers of `h`.
fn ridders(h0: f64, quotient: impl Fn(f64) -> f64) -> f64 {
    const SHRINK: f64 = 1.4;
    const SHRINK2: f64 = SHRINK * SHRINK;
    const TABLE: usize = 10;
    const SAFE: f64 = 2.0;
    let mut a = [[0.0_f64; TABLE]; TABLE];
    let mut h = h0;
    a[0][0] = quotient(h);
    let mut best = a[0][0];
    let mut err = f64::INFINITY;
    for i in 1..TABLE {
        h /= SHRINK;
        a[0][i] = quotient(h);
        let mut fac = SHRINK2;
        for j in 1..=i {
            a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
            fac *= SHRINK2;
            let e = (a[j][i] - a[j - 1][i]).abs().max((a[j][i] - a[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = a[j][i];
            }
        }
        if (a[i][i] - a[i - 1][i - 1]).abs() >= SAFE * err {
            break;
        }
    }
    best
}

/// Mode `x*` and variance `sigma*^2` of the normal approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceFit {
    pub mode: f64,
    pub variance: f64,
}

/// Closed form for Gamma(a, b): mode `(a-1)/b`, variance `(a-1)/b^2`.
pub fn gamma_laplace(shape: f64, rate: f64) -> Result<LaplaceFit> {
    if rate <= 0.0 || !rate.is_finite() {
        return Err(invalid("Gamma rate must be positive"));
    }
    if !(shape > 1.0) {
        return Err(Error::NoInteriorMode { shape });
    }
    Ok(LaplaceFit {
        mode: (shape - 1.0) / rate,
        variance: (shape - 1.0) / (rate * rate),
    })
}

/// Newton's method with step halving on the log-density, then the variance
/// as minus the inverse curvature at the mode.
pub fn scalar_laplace(target: &ScalarTarget, init: f64) -> Result<LaplaceFit> {
    if !target.contains(init) {
        return Err(invalid(format!("initial point {init} outside the support")));
    }
    let mut x = init;
    let mut fx = target.log_density(x);
    if !fx.is_finite() {
        return Err(invalid(format!("log-density is not finite at {init}")));
    }
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let (g, h) = target.derivatives(x);
        if h == 0.0 {
            return Err(Error::NotAMaximum { x, curvature: h });
        }
        let mut step = -g / h;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = x + step;
            if target.contains(cand) {
                let fc = target.log_density(cand);
                if fc.is_finite() && fc >= fx {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            // No ascent left along the Newton direction.
            None => {
                converged = true;
                break;
            }
            Some((cand, fc)) => {
                x = cand;
                fx = fc;
                if step.abs() <= 1e-10 * (1.0 + x.abs()) {
                    converged = true;
                    break;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: MAX_ITERATIONS,
            detail: format!("scalar Newton stopped at x = {x}"),
        });
    }
    let (_, curvature) = target.derivatives(x);
    if !(curvature < 0.0) {
        return Err(Error::NotAMaximum { x, curvature });
    }
    Ok(LaplaceFit {
        mode: x,
        variance: -1.0 / curvature,
    })
}

/// `f(x*) sqrt(2 pi sigma*^2) (Phi(beta) - Phi(alpha))` with `Phi` the
/// Normal(x*, sigma*^2) distribution function.
pub fn laplace_interval_integral(target: &ScalarTarget, alpha: f64, beta: f64) -> Result<f64> {
    laplace_interval_integral_from(target, target.default_start(), alpha, beta)
}

pub fn laplace_interval_integral_from(target: &ScalarTarget, init: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha < beta) {
        return Err(invalid(format!("interval [{alpha}, {beta}] is empty")));
    }
    let fit = scalar_laplace(target, init)?;
    let normal = Normal::new(fit.mode, fit.variance.sqrt()).map_err(|e| invalid(e.to_string()))?;
    let cdf = |v: f64| {
        if v == f64::INFINITY {
            1.0
        } else if v == f64::NEG_INFINITY {
            0.0
        } else {
            normal.cdf(v)
        }
    };
    let peak = target.log_density(fit.mode).exp();
    Ok(peak * (2.0 * std::f64::consts::PI * fit.variance).sqrt() * (cdf(beta) - cdf(alpha)))
}
