//! Thin dense helpers over faer, exchanging ndarray matrices.

use ndarray::{Array1, Array2};

fn to_faer(a: &Array2<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Threads used by the dense factorizations; `0` or `1` runs sequentially.
pub fn set_threads(n: usize) {
    let par = if n <= 1 { faer::Par::Seq } else { faer::Par::rayon(n) };
    faer::set_global_parallelism(par);
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending and
/// eigenvectors as columns.
pub fn eigh(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), Array2::zeros((0, 0)));
    }
    let sym = faer::Mat::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]));
    let eig = sym
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("symmetric eigensolver did not converge");
    let s = eig.S().column_vector();
    let u = eig.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| s[x].total_cmp(&s[y]));
    let vals = order.iter().map(|&k| s[k]).collect();
    let vecs = Array2::from_shape_fn((n, n), |(i, c)| u[(i, order[c])]);
    (vals, vecs)
}

/// Thin SVD `a = u * diag(s) * vt`, singular values descending.
pub fn svd(a: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let (r, c) = a.dim();
    let k = r.min(c);
    if k == 0 {
        return (Array2::zeros((r, 0)), Array1::zeros(0), Array2::zeros((0, c)));
    }
    let dec = to_faer(a).thin_svd().expect("svd did not converge");
    let s = dec.S().column_vector();
    let (u, v) = (dec.U(), dec.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]));
    (
        Array2::from_shape_fn((r, k), |(i, j)| u[(i, order[j])]),
        Array1::from_shape_fn(k, |j| s[order[j]]),
        Array2::from_shape_fn((k, c), |(j, i)| v[(i, order[j])]),
    )
}

/// Thin QR `a = q * r` with `q` having orthonormal columns.
pub fn qr(a: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (r, c) = a.dim();
    let k = r.min(c);
    let dec = to_faer(a).qr();
    let q = dec.compute_thin_Q();
    let rr = dec.thin_R();
    (
        Array2::from_shape_fn((r, k), |(i, j)| q[(i, j)]),
        Array2::from_shape_fn((k, c), |(i, j)| rr[(i, j)]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigh_sorted_and_reconstructs() {
        let a = Array2::from_shape_fn((5, 5), |(i, j)| ((i * 3 + j * 3) % 7) as f64 - (i == j) as u8 as f64);
        let (w, v) = eigh(&a);
        assert!(w.windows(2).all(|p| p[0] <= p[1]));
        let back = v.dot(&Array2::from_diag(&Array1::from(w))).dot(&v.t());
        assert!((&back - &a).iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn svd_rank_deficient_tall() {
        for (r, c) in [(40, 9), (9, 40), (12, 6)] {
            let a = Array2::from_shape_fn((r, c), |(i, j)| ((i * 7 + j * 3) % 4 == 0) as u8 as f64);
            let (u, s, vt) = svd(&a);
            let back = u.dot(&Array2::from_diag(&s)).dot(&vt);
            assert!((&back - &a).iter().all(|x| x.abs() < 1e-12), "{r}x{c}");
        }
    }

    #[test]
    fn svd_and_qr_reconstruct() {
        let a = Array2::from_shape_fn((4, 6), |(i, j)| ((i * 5 + j * 2) % 9) as f64 * 0.3 - 1.0);
        let (u, s, vt) = svd(&a);
        let back = u.dot(&Array2::from_diag(&s)).dot(&vt);
        assert!((&back - &a).iter().all(|x| x.abs() < 1e-10));
        assert!(s.windows(2).into_iter().all(|p| p[0] >= p[1]));
        let (q, r) = qr(&a.t().to_owned());
        let back = q.dot(&r);
        assert!((&back - &a.t()).iter().all(|x| x.abs() < 1e-10));
    }
}
