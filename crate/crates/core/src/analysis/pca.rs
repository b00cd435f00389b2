use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 10_000;

/// Two-component projection of a point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `coordinates[i]` is row `i` projected on the two components.
    pub coordinates: Vec<[f64; 2]>,
    /// Unit-norm, mutually orthogonal principal directions.
    pub components: [Vec<f64>; 2],
    /// Variance along each component; non-increasing.
    pub variances: [f64; 2],
    /// Set when the input has no variance at all.
    pub degenerate: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = libm::sqrt(dot(v, v));
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn remove_component(v: &mut [f64], unit: &[f64]) {
    let c = dot(v, unit);
    v.iter_mut().zip(unit).for_each(|(x, u)| *x -= c * u);
}

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    m.chunks(v.len()).map(|row| dot(row, v)).collect()
}

/// Largest-magnitude entry made positive; the first such entry wins a tie.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Leading eigenvector of the symmetric matrix `m` restricted to the
/// complement of `against`, or `None` if `m` vanishes there.
fn power_iteration(m: &[f64], d: usize, against: &[&[f64]], floor: f64) -> Option<Vec<f64>> {
    // Start from the column of largest norm: it lies in the range of `m`.
    let mut v = (0..d)
        .map(|j| {
            let mut col: Vec<f64> = (0..d).map(|i| m[i * d + j]).collect();
            against.iter().for_each(|u| remove_component(&mut col, u));
            col
        })
        .max_by(|a, b| dot(a, a).total_cmp(&dot(b, b)))?;
    if normalize(&mut v) <= floor {
        return None;
    }
    for _ in 0..MAX_ITERATIONS {
        let mut next = mat_vec(m, &v);
        against.iter().for_each(|u| remove_component(&mut next, u));
        if normalize(&mut next) <= floor {
            return None;
        }
        let change = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if change < 1e-14 {
            break;
        }
    }
    Some(v)
}

/// Any unit vector orthogonal to `against`, from the standard basis.
fn orthogonal_fill(d: usize, against: &[&[f64]]) -> Vec<f64> {
    (0..d)
        .map(|k| {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            against.iter().for_each(|u| remove_component(&mut e, u));
            e
        })
        .max_by(|a, b| dot(a, a).total_cmp(&dot(b, b)))
        .map(|mut e| {
            normalize(&mut e);
            e
        })
        .unwrap_or_default()
}

/// Projects mean-centred rows onto the top two eigenvectors of their
/// covariance, found by power iteration with deflation.
///
/// Rows must share a dimension of at least 2, and there must be at least two
/// of them. Directions that carry no variance are completed with an
/// orthonormal filler; if the whole cloud is a single point the projection
/// is all zeros and `degenerate` is set.
pub fn pca_project(rows: &[Vec<f64>]) -> Result<Projection> {
    if rows.len() < 2 {
        return Err(Error::invalid("pca_project", "need at least two rows"));
    }
    let d = rows[0].len();
    if d < 2 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::invalid(
            "pca_project",
            "rows must share a dimension of at least 2",
        ));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let centred: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![0.0; d * d];
    for r in &centred {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += r[i] * r[j];
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= n - 1.0);

    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let floor = 1e-12 * trace;
    let degenerate = !(trace > 0.0);
    let mut first = match degenerate {
        true => None,
        false => power_iteration(&cov, d, &[], floor),
    }
    .unwrap_or_else(|| orthogonal_fill(d, &[]));
    fix_sign(&mut first);
    let mut second = match degenerate {
        true => None,
        false => power_iteration(&cov, d, &[&first], floor),
    }
    .unwrap_or_else(|| orthogonal_fill(d, &[&first]));
    // One more Gram-Schmidt pass keeps the pair orthogonal to rounding.
    remove_component(&mut second, &first);
    normalize(&mut second);
    fix_sign(&mut second);

    let coordinates = centred
        .iter()
        .map(|r| match degenerate {
            true => [0.0, 0.0],
            false => [dot(r, &first), dot(r, &second)],
        })
        .collect();
    let variances = [
        dot(&first, &mat_vec(&cov, &first)),
        dot(&second, &mat_vec(&cov, &second)),
    ];
    Ok(Projection {
        coordinates,
        components: [first, second],
        variances,
        degenerate,
    })
}

/// Fraction of rows whose nearest mode centroid (Euclidean) is their own
/// mode. Ties go to the lowest mode index. Every mode in `0..n_modes` must
/// have at least one row.
pub fn centroid_purity(rows: &[Vec<f64>], labels: &[usize], n_modes: usize) -> Result<f64> {
    if rows.len() != labels.len() {
        return Err(Error::invalid("centroid_purity", "one label per row is required"));
    }
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("centroid_purity", "rows differ in dimension"));
    }
    let mut centroids = vec![vec![0.0; d]; n_modes];
    let mut counts = vec![0usize; n_modes];
    for (r, &m) in rows.iter().zip(labels) {
        if m >= n_modes {
            return Err(Error::ModeOutOfRange {
                index: m,
                count: n_modes,
            });
        }
        counts[m] += 1;
        centroids[m].iter_mut().zip(r).for_each(|(c, x)| *c += x);
    }
    if let Some(m) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(
            "centroid_purity",
            alloc::format!("mode {m} has no rows"),
        ));
    }
    for (c, &k) in centroids.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|x| *x /= k as f64);
    }
    let correct = rows
        .iter()
        .zip(labels)
        .filter(|(r, &m)| {
            let dist = |c: &Vec<f64>| {
                c.iter()
                    .zip(r.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            };
            let mut best = 0;
            for k in 1..n_modes {
                if dist(&centroids[k]) < dist(&centroids[best]) {
                    best = k;
                }
            }
            best == m
        })
        .count();
    Ok(correct as f64 / rows.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_in_five_dimensions() {
        let dir = [1.0, -2.0, 0.5, 3.0, 0.0];
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| dir.iter().map(|d| d * (i as f64 - 7.5) + 1.0).collect())
            .collect();
        let p = pca_project(&rows).unwrap();
        assert!(!p.degenerate);
        assert!(p.coordinates.iter().all(|c| c[1].abs() <= 1e-9));
        assert!(dot(&p.components[0], &p.components[1]).abs() <= 1e-9);
        assert!((dot(&p.components[1], &p.components[1]) - 1.0).abs() <= 1e-9);
        // Largest entry (3.0) is positive.
        assert!(p.components[0][3] > 0.0);
    }

    #[test]
    fn constant_rows_are_degenerate() {
        let rows = vec![vec![2.0, 1.0, 0.0]; 4];
        let p = pca_project(&rows).unwrap();
        assert!(p.degenerate);
        assert!(p.coordinates.iter().all(|c| *c == [0.0, 0.0]));
        assert_eq!(p.variances, [0.0, 0.0]);
    }

    #[test]
    fn too_few_rows() {
        assert!(pca_project(&[vec![1.0, 2.0]]).is_err());
        assert!(pca_project(&[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn purity_examples() {
        let rows = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![10.0, 10.0], vec![10.1, 9.9]];
        assert_eq!(centroid_purity(&rows, &[0, 0, 1, 1], 2), Ok(1.0));
        let same = vec![vec![1.0, 1.0]; 4];
        assert_eq!(centroid_purity(&same, &[0, 1, 0, 1], 2), Ok(0.5));
        assert!(centroid_purity(&same, &[0, 0, 0, 0], 2).is_err());
        assert!(centroid_purity(&same, &[0, 1, 2, 0], 2).is_err());
    }
}
