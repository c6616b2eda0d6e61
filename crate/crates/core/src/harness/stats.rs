use statrs::distribution::{ContinuousCDF, StudentsT};

/// Best evaluation point across seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaxReturn {
    /// Across-seed mean at the best point.
    pub value: f64,
    /// Half-width of the 95% Student-t interval; 0 when undefined.
    pub ci: f64,
    /// Index of the chosen evaluation point.
    pub point: usize,
    /// False for a single seed, where no interval exists.
    pub ci_defined: bool,
}

/// Half-width of the two-sided 95% Student-t interval of the mean of
/// `values`, or `None` for fewer than two values.
pub fn confidence_interval(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).ok()?.inverse_cdf(0.975);
    Some(t * var.sqrt() / (n as f64).sqrt())
}

fn point_means(curves: &[Vec<f64>]) -> Vec<f64> {
    let points = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..points)
        .map(|p| curves.iter().map(|c| c[p]).sum::<f64>() / curves.len() as f64)
        .collect()
}

/// The evaluation point with the highest across-seed mean, earliest on
/// ties. Curves are truncated to the shortest one.
pub fn max_return(curves: &[Vec<f64>]) -> MaxReturn {
    let means = point_means(curves);
    let mut point = 0;
    for (p, &m) in means.iter().enumerate() {
        if m > means[point] {
            point = p;
        }
    }
    let value = means.get(point).copied().unwrap_or(f64::NAN);
    let at_point: Vec<f64> = curves.iter().filter_map(|c| c.get(point).copied()).collect();
    let ci = confidence_interval(&at_point);
    MaxReturn {
        value,
        ci: ci.unwrap_or(0.0),
        point,
        ci_defined: ci.is_some(),
    }
}

/// Mean over evaluation points of the across-seed means.
pub fn avg_return(curves: &[Vec<f64>]) -> f64 {
    let means = point_means(curves);
    means.iter().sum::<f64>() / means.len() as f64
}

/// Min-max normalisation of one task's returns; all ones when every
/// return is equal.
pub fn normalize_returns(returns: &[f64]) -> Vec<f64> {
    let min = returns.iter().copied().fold(f64::INFINITY, f64::min);
    let max = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return vec![1.0; returns.len()];
    }
    returns.iter().map(|g| (g - min) / (max - min)).collect()
}
