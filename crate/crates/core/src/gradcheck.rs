//! Central finite-difference verification of graph gradients (64-bit only).

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Worst coordinate found by [`finite_diff_check_many`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input index, flat element index)` of the worst coordinate.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

fn eval<F>(f: &F, xs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = xs.iter().map(|x| g.constant(x.clone())).collect();
    let out = f(&mut g, &vars)?;
    let v = g.value(out).item()?;
    if !v.is_finite() {
        return Err(Error::Numeric(format!("function evaluated to {v}")));
    }
    Ok(v)
}

/// Compares the reverse-mode gradient of scalar `f` against central
/// differences at every coordinate of every input.
///
/// Error per coordinate is `|analytic - numeric| / max(1, |analytic|)`.
pub fn finite_diff_check_many<F>(f: F, xs: &[Tensor<f64>], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::usage(format!("step {h} must be positive")));
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = xs.iter().map(|x| g.param(x.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    let mut probe: Vec<Tensor<f64>> = xs.to_vec();
    for (ti, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .ok_or_else(|| Error::usage("input detached from graph"))?;
        for k in 0..xs[ti].len() {
            let orig = xs[ti].data()[k];
            probe[ti].data_mut()[k] = orig + h;
            let up = eval(&f, &probe)?;
            probe[ti].data_mut()[k] = orig - h;
            let down = eval(&f, &probe)?;
            probe[ti].data_mut()[k] = orig;

            let numeric = (up - down) / (2.0 * h);
            let a = analytic.data()[k];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            report.coordinates += 1;
            if err > report.max_rel_error || report.coordinates == 1 {
                report.max_rel_error = err;
                report.worst = (ti, k);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Single-input form of [`finite_diff_check_many`]; returns the maximum
/// relative error.
pub fn finite_diff_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let report = finite_diff_check_many(|g, vars| f(g, vars[0]), std::slice::from_ref(x), h)?;
    Ok(report.max_rel_error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let x = Tensor::scalar(3.0);
        for h in [1e-1, 1e-3, 0.5] {
            let err = finite_diff_check(|g, v| g.mul(v, v), &x, h).unwrap();
            assert!(err < 1e-12, "h={h} err={err}");
        }
    }

    #[test]
    fn tanh_matches_analytic() {
        let x = Tensor::scalar(1.0);
        let err = finite_diff_check(|g, v| Ok(g.tanh(v)), &x, 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn mse_matches_analytic() {
        let x = Tensor::from_fn(&[10], |i| (i as f64 * 0.37).sin());
        let target = Tensor::from_fn(&[10], |i| (i as f64 * 0.11).cos());
        let mask = vec![true; 10];
        let err = finite_diff_check(|g, v| g.masked_mse(v, &target, &mask), &x, 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn non_finite_evaluation_is_numeric_error() {
        let x = Tensor::scalar(0.0);
        let r = finite_diff_check(
            |g, v| {
                let inf = g.constant(Tensor::scalar(f64::INFINITY));
                g.add(v, inf)
            },
            &x,
            1e-4,
        );
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
