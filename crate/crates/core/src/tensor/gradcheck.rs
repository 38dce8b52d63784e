use super::Tensor;

/// One parameter scalar whose analytic and numeric gradients disagree.
#[derive(Clone, Debug, PartialEq)]
pub struct GradMismatch {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Tensor holding the worst scalar.
    pub worst: Option<String>,
    pub tolerance: f64,
    pub failures: Vec<GradMismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compares `analytic` against central differences of `loss` for every scalar
/// in `params`. The relative error is `|ga−gn| / max(1, |ga|, |gn|)`.
///
/// `params` is perturbed in place and restored before returning.
pub fn check_gradients<F>(
    params: &mut [Tensor<f64>],
    names: &[String],
    analytic: &[Tensor<f64>],
    h: f64,
    tol: f64,
    mut loss: F,
) -> GradCheckReport
where
    F: FnMut(&[Tensor<f64>]) -> f64,
{
    assert_eq!(params.len(), names.len());
    assert_eq!(params.len(), analytic.len());
    let mut report = GradCheckReport {
        tolerance: tol,
        ..Default::default()
    };
    for t in 0..params.len() {
        assert_eq!(params[t].shape(), analytic[t].shape(), "{}", names[t]);
        for i in 0..params[t].len() {
            let original = params[t].data()[i];
            params[t].data_mut()[i] = original + h;
            let up = loss(params);
            params[t].data_mut()[i] = original - h;
            let down = loss(params);
            params[t].data_mut()[i] = original;

            let numeric = (up - down) / (2.0 * h);
            let ga = analytic[t].data()[i];
            let rel = (ga - numeric).abs() / 1f64.max(ga.abs()).max(numeric.abs());
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some(names[t].clone());
            }
            if !(rel <= tol) {
                report.failures.push(GradMismatch {
                    tensor: names[t].clone(),
                    index: i,
                    analytic: ga,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    report
}
