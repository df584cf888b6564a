//! Central finite-difference verification of analytic gradients.

use super::params::Parameters;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
    pub passed: bool,
}

/// Relative error with a floor on the denominator so coordinates whose true
/// gradient is ~0 are judged by absolute error.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compare every coordinate of `analytic` against
/// `(loss(p + h e_i) - loss(p - h e_i)) / 2h`.
pub fn grad_check<P, F>(model: &P, analytic: &P, loss: F, h: f64, tolerance: f64) -> GradCheckReport
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    let mut probe = model.clone();
    let grads = analytic.named_params();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
        passed: true,
    };
    for (k, (name, g)) in grads.iter().enumerate() {
        for i in 0..g.data.len() {
            let orig = probe.params_mut()[k].data[i];
            probe.params_mut()[k].data[i] = orig + h;
            let up = loss(&probe);
            probe.params_mut()[k].data[i] = orig - h;
            let down = loss(&probe);
            probe.params_mut()[k].data[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = relative_error(g.data[i], numeric);
            report.checked += 1;
            if !(err <= report.max_rel_error) {
                report.max_rel_error = err;
                report.worst_param = name.clone();
                report.worst_index = i;
            }
        }
    }
    report.passed = report.max_rel_error < tolerance;
    report
}
