//! Lower convex hulls of sampled functions on increasing abscissae.

/// Indices of the vertices of the lower convex hull of `(xs[i], ys[i])`,
/// `xs` strictly increasing. Collinear interior points are dropped.
pub(crate) fn lower_hull(xs: &[f64], ys: &[f64]) -> Vec<usize> {
    debug_assert_eq!(xs.len(), ys.len());
    let mut hull: Vec<usize> = Vec::with_capacity(xs.len());
    for k in 0..xs.len() {
        while hull.len() >= 2 {
            let i = hull[hull.len() - 2];
            let j = hull[hull.len() - 1];
            // Drop j unless it lies strictly below the chord from i to k.
            let cross = (xs[j] - xs[i]) * (ys[k] - ys[i]) - (ys[j] - ys[i]) * (xs[k] - xs[i]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    hull
}

/// For each parameter `p` in increasing order, `min_k (ys[k] − p·xs[k])`.
///
/// The minimizer over the hull vertices moves monotonically to the right as
/// `p` grows, so the sweep costs `O(len + params)`.
pub(crate) fn min_affine_sweep(xs: &[f64], ys: &[f64], params: &[f64], out: &mut [f64]) {
    debug_assert_eq!(params.len(), out.len());
    let hull = lower_hull(xs, ys);
    let value = |k: usize, p: f64| ys[k] - p * xs[k];
    let mut at = 0;
    for (p, slot) in params.iter().zip(out.iter_mut()) {
        while at + 1 < hull.len() && value(hull[at + 1], *p) <= value(hull[at], *p) {
            at += 1;
        }
        *slot = value(hull[at], *p);
    }
}

/// Values of the lower convex hull interpolated back onto every `xs[i]`.
pub(crate) fn hull_values(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let hull = lower_hull(xs, ys);
    let mut out = vec![0.0; xs.len()];
    for pair in hull.windows(2) {
        let (i, j) = (pair[0], pair[1]);
        out[i] = ys[i];
        let slope = (ys[j] - ys[i]) / (xs[j] - xs[i]);
        for k in (i + 1)..j {
            out[k] = ys[i] + slope * (xs[k] - xs[i]);
        }
    }
    let last = *hull.last().expect("non-empty input");
    out[last] = ys[last];
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_of_zigzag() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [0.0, -1.0, 1.0, -1.0, 0.0];
        assert_eq!(lower_hull(&xs, &ys), vec![0, 1, 3, 4]);
        assert_eq!(hull_values(&xs, &ys), vec![0.0, -1.0, -1.0, -1.0, 0.0]);
    }

    #[test]
    fn sweep_matches_brute_force() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin() + 0.2 * x * x).collect();
        let params: Vec<f64> = (0..60).map(|i| -4.0 + i as f64 * 0.15).collect();
        let mut fast = vec![0.0; params.len()];
        min_affine_sweep(&xs, &ys, &params, &mut fast);
        for (p, f) in params.iter().zip(&fast) {
            let naive = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| y - p * x)
                .fold(f64::INFINITY, f64::min);
            assert!((naive - f).abs() <= 1e-14, "p = {p}: {naive} vs {f}");
        }
    }
}
