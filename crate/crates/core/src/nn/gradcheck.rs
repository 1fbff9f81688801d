//! Central finite-difference checks of analytic gradients.

use rand::Rng;

use super::{GradientBundle, ParamSet};
use crate::error::Result;

/// Relative errors below this denominator are measured against it instead;
/// central differences with h = 1e-5 carry ~1e-11 absolute noise.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub probes: usize,
    pub max_rel_error: f64,
    /// (tensor, index, analytic, numeric) of the worst probe.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }

    pub fn merge(self, other: GradCheckReport) -> GradCheckReport {
        let (max_rel_error, worst) = if other.max_rel_error > self.max_rel_error {
            (other.max_rel_error, other.worst)
        } else {
            (self.max_rel_error, self.worst)
        };
        GradCheckReport {
            probes: self.probes + other.probes,
            max_rel_error,
            worst,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compare `analytic` with central differences of `loss` at `probes`
/// parameter entries drawn uniformly over all parameters. Parameters are
/// restored after each probe.
pub fn check_gradients<P, F, R>(
    params: &mut P,
    mut loss: F,
    analytic: &GradientBundle,
    probes: usize,
    h: f64,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    P: ParamSet + ?Sized,
    F: FnMut(&P) -> f64,
    R: Rng + ?Sized,
{
    analytic.check_shapes(params)?;
    let sizes = params.tensor_shapes();
    let total: usize = sizes.iter().sum();
    let mut report = GradCheckReport {
        probes: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    if total == 0 {
        return Ok(report);
    }
    for _ in 0..probes {
        let mut flat = rng.random_range(0..total);
        let mut tensor = 0;
        while flat >= sizes[tensor] {
            flat -= sizes[tensor];
            tensor += 1;
        }
        let original = params.tensors()[tensor][flat];
        params.tensors_mut()[tensor][flat] = original + h;
        let up = loss(params);
        params.tensors_mut()[tensor][flat] = original - h;
        let down = loss(params);
        params.tensors_mut()[tensor][flat] = original;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.tensors[tensor][flat];
        let err = relative_error(a, numeric);
        report.probes += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some((tensor, flat, a, numeric));
        }
    }
    Ok(report)
}
