use super::matrix::Matrix;

/// Rank-revealing ratio `|r_min| / |r_max|` of the diagonal of a
/// column-pivoted Householder QR, after scaling every column to unit norm.
///
/// A value well above machine precision certifies full column rank.
pub fn rank_ratio(m: &Matrix) -> f64 {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return 1.0;
    }
    if rows < cols {
        return 0.0;
    }
    let mut a = m.clone();
    for j in 0..cols {
        let norm = (0..rows).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for i in 0..rows {
            a[(i, j)] /= norm;
        }
    }
    let mut diag = Vec::with_capacity(cols);
    for k in 0..cols {
        // pivot on the largest remaining column norm
        let (p, _) = (k..cols)
            .map(|j| (j, (k..rows).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>()))
            .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if p != k {
            for i in 0..rows {
                let t = a[(i, k)];
                a[(i, k)] = a[(i, p)];
                a[(i, p)] = t;
            }
        }
        let norm = (k..rows).map(|i| a[(i, k)] * a[(i, k)]).sum::<f64>().sqrt();
        let alpha = if a[(k, k)] >= 0.0 { -norm } else { norm };
        diag.push(alpha.abs());
        if norm == 0.0 {
            continue;
        }
        let mut v: Vec<f64> = (k..rows).map(|i| a[(i, k)]).collect();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv == 0.0 {
            continue;
        }
        for j in k..cols {
            let dot: f64 = v.iter().enumerate().map(|(t, vt)| vt * a[(k + t, j)]).sum();
            let f = 2.0 * dot / vtv;
            for (t, vt) in v.iter().enumerate() {
                a[(k + t, j)] -= f * vt;
            }
        }
    }
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_rank_deficiency() {
        let full = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1e-3]]).unwrap();
        assert!((rank_ratio(&full) - 1.0).abs() < 1e-12);
        let deficient = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![0.0, 0.0]]).unwrap();
        assert!(rank_ratio(&deficient) < 1e-15);
    }
}
