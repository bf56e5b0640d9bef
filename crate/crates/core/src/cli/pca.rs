//! Dependency-free 2-D PCA via Jacobi eigendecomposition of the covariance.
//! Deterministic: eigenvectors are sorted by eigenvalue and sign-normalized
//! so the largest-magnitude component is positive.

/// Projects `n` rows of dimension `d` onto their top two principal axes.
/// For `d == 1` the second coordinate is zero.
pub fn project_2d(rows: usize, cols: usize, data: &[f64]) -> Vec<[f64; 2]> {
    assert_eq!(data.len(), rows * cols);
    if rows == 0 {
        return Vec::new();
    }
    let mut mean = vec![0.0; cols];
    for i in 0..rows {
        for j in 0..cols {
            mean[j] += data[i * cols + j];
        }
    }
    for m in &mut mean {
        *m /= rows as f64;
    }

    let mut cov = vec![0.0; cols * cols];
    for i in 0..rows {
        for a in 0..cols {
            let va = data[i * cols + a] - mean[a];
            for b in a..cols {
                cov[a * cols + b] += va * (data[i * cols + b] - mean[b]);
            }
        }
    }
    let denom = (rows.max(2) - 1) as f64;
    for a in 0..cols {
        for b in a..cols {
            cov[a * cols + b] /= denom;
            cov[b * cols + a] = cov[a * cols + b];
        }
    }

    let (eigvals, eigvecs) = jacobi_eigen(cols, cov);
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).expect("finite"));

    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(2);
    for &k in order.iter().take(2) {
        let mut axis: Vec<f64> = (0..cols).map(|r| eigvecs[r * cols + k]).collect();
        // sign convention: largest-magnitude component positive
        let lead = axis
            .iter()
            .cloned()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if lead < 0.0 {
            for v in &mut axis {
                *v = -*v;
            }
        }
        axes.push(axis);
    }
    while axes.len() < 2 {
        axes.push(vec![0.0; cols]);
    }

    (0..rows)
        .map(|i| {
            let mut p = [0.0; 2];
            for (k, axis) in axes.iter().enumerate() {
                p[k] = (0..cols)
                    .map(|j| (data[i * cols + j] - mean[j]) * axis[j])
                    .sum();
            }
            p
        })
        .collect()
}

/// Cyclic Jacobi for a symmetric matrix; returns (eigenvalues, column
/// eigenvectors).
fn jacobi_eigen(n: usize, mut a: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = (0..n).map(|i| a[i * n + i]).collect();
    (vals, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_of_2d_data_preserves_pairwise_distances() {
        // rank-2 input: PCA onto two axes is an orthogonal map (up to sign)
        let pts = [
            [1.0, 2.0],
            [3.0, -1.0],
            [0.5, 0.5],
            [-2.0, 1.0],
            [4.0, 4.0],
        ];
        let flat: Vec<f64> = pts.iter().flatten().copied().collect();
        let proj = project_2d(5, 2, &flat);
        for i in 0..5 {
            for j in (i + 1)..5 {
                let d0 = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
                let d1 = ((proj[i][0] - proj[j][0]).powi(2) + (proj[i][1] - proj[j][1]).powi(2))
                    .sqrt();
                assert!((d0 - d1).abs() < 1e-9, "pair ({i},{j}): {d0} vs {d1}");
            }
        }
    }

    #[test]
    fn first_axis_captures_dominant_variance() {
        // points spread along (1, 1, 0) with slight noise in other axes
        let mut data = Vec::new();
        for k in 0..20 {
            let t = k as f64 - 10.0;
            data.extend_from_slice(&[t, t, 0.01 * (k % 3) as f64]);
        }
        let proj = project_2d(20, 3, &data);
        let var0: f64 = proj.iter().map(|p| p[0] * p[0]).sum();
        let var1: f64 = proj.iter().map(|p| p[1] * p[1]).sum();
        assert!(var0 > 100.0 * var1, "var0 = {var0}, var1 = {var1}");
    }
}
