use ndarray::{concatenate, Array2, ArrayView2, Axis};

pub fn one_hot(labels: &[usize], classes: usize) -> Array2<f64> {
    let mut m = Array2::zeros((labels.len(), classes));
    for (i, &l) in labels.iter().enumerate() {
        m[[i, l]] = 1.0;
    }
    m
}

/// Columns of `a` followed by columns of `b`.
pub fn hstack(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[a, b]).expect("row counts match")
}

/// Consecutive chunks of a permutation, the last one possibly short.
pub fn batches(order: &[usize], batch_size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(batch_size.max(1))
}

/// Mean of the last `max(1, ceil(fraction * n))` values.
pub fn tail_mean(values: &[f64], fraction: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = ((values.len() as f64 * fraction).ceil() as usize).clamp(1, values.len());
    let tail = &values[values.len() - n..];
    Some(tail.iter().sum::<f64>() / n as f64)
}
