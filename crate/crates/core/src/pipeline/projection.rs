use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Coordinates on the top two principal axes. Each axis is signed so its
/// largest-magnitude loading is positive.
pub fn project_2d(rows: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::Insufficient("projection needs at least two rows".into()));
    }
    let d = rows[0].len();
    if d < 2 {
        return Err(Error::Insufficient("projection needs at least two dimensions".into()));
    }
    let mut x = DMatrix::<f64>::zeros(n, d);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(Error::Dimension {
                expected: d,
                found: r.len(),
            });
        }
        for (j, v) in r.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    let means = x.row_mean();
    for mut row in x.row_iter_mut() {
        row -= &means;
    }
    let cov = (x.transpose() * &x) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axis = |k: usize| {
        let mut v = eig.eigenvectors.column(order[k]).into_owned();
        let lead = v.iter().copied().fold(0.0f64, |m, c| if c.abs() > m.abs() { c } else { m });
        if lead < 0.0 {
            v = -v;
        }
        v
    };
    let (a, b) = (axis(0), axis(1));
    let pa = &x * a;
    let pb = &x * b;
    Ok(pa.iter().zip(pb.iter()).map(|(u, v)| (*u, *v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_dominant_axis() {
        // Points on a line along (1, 1, 0) plus a small offset along z.
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64 - 9.5;
                vec![t, t, 0.01 * (i % 2) as f64]
            })
            .collect();
        let p = project_2d(&rows).unwrap();
        for (i, (x, y)) in p.iter().enumerate() {
            let t = i as f64 - 9.5;
            assert!((x - t * 2f64.sqrt()).abs() < 1e-6, "{x} vs {t}");
            assert!(y.abs() < 0.01);
        }
    }

    #[test]
    fn projection_is_centered() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 1.0], vec![0.0, 5.0], vec![2.0, 2.0]];
        let p = project_2d(&rows).unwrap();
        let sx: f64 = p.iter().map(|q| q.0).sum();
        let sy: f64 = p.iter().map(|q| q.1).sum();
        assert!(sx.abs() < 1e-12 && sy.abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(project_2d(&[vec![1.0, 2.0]]).is_err());
        assert!(project_2d(&[vec![1.0], vec![2.0]]).is_err());
    }
}
