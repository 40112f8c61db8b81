use crate::error::{Error, Result};

/// Prior-task score change across a follow-up stage: `after - before`.
pub fn forgetting_delta(before: f64, after: f64) -> f64 {
    after - before
}

/// Size of a loss of performance; gains count as zero forgetting.
pub fn forgetting_magnitude(delta: f64) -> f64 {
    if delta < 0.0 {
        -delta
    } else {
        0.0
    }
}

/// Ranks starting at 1, tied values sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    // sqrt(fl(a * a)) == |a|, so identical inputs give exactly 1.
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::UndefinedCorrelation(format!("unequal lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::UndefinedCorrelation(format!("need at least 3 pairs, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::UndefinedCorrelation("non-finite input".into()));
    }
    Ok(())
}

/// `(spearman, pearson)` between sharpness scores and forgetting magnitudes.
pub fn correlate(sharpness: &[f64], forgetting: &[f64]) -> Result<(f64, f64)> {
    Ok((spearman(sharpness, forgetting)?, pearson(sharpness, forgetting)?))
}
