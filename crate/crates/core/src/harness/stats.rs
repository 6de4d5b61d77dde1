/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

/// Mean and standard error (unbiased variance). A single sample has zero SE;
/// an empty sample has NaN mean.
pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    if n == 0 {
        return Summary { mean: f64::NAN, se: f64::NAN, n };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Summary { mean, se: 0.0, n };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Summary { mean, se: (var / n as f64).sqrt(), n }
}

/// Ratio of means `mean(num)/mean(den)` with its delta-method standard error,
/// for paired samples.
pub fn ratio_of_means(num: &[f64], den: &[f64]) -> (f64, f64) {
    assert_eq!(num.len(), den.len(), "ratio needs paired samples");
    let n = num.len();
    let x = summarize(num);
    let y = summarize(den);
    let r = x.mean / y.mean;
    if n < 2 {
        return (r, 0.0);
    }
    // variance of the residuals x - r·y, the linearization of the ratio
    let var = num.iter().zip(den).map(|(a, b)| (a - r * b).powi(2)).sum::<f64>()
        / (n - 1) as f64
        / (n as f64 * y.mean * y.mean);
    (r, var.max(0.0).sqrt())
}
