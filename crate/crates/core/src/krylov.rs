//! Restarted GMRES for the Newton corrections.

pub(crate) struct GmresOutcome {
    pub x: Vec<f64>,
    pub rel_residual: f64,
    pub iterations: usize,
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Solves `A x = b` with modified Gram-Schmidt Arnoldi and Givens rotations.
pub(crate) fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> GmresOutcome {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return GmresOutcome { x, rel_residual: 0.0, iterations: 0 };
    }
    let mut total = 0;
    let mut rel = 1.0;
    while total < max_iter {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= tol {
            break;
        }
        let m = restart.min(max_iter - total);
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let mut w = apply(&v[k]);
            for (i, vi) in v.iter().enumerate() {
                let hik: f64 = w.iter().zip(vi).map(|(a, b)| a * b).sum();
                h[i][k] = hik;
                w.iter_mut().zip(vi).for_each(|(wj, vj)| *wj -= hik * vj);
            }
            let wn = norm(&w);
            h[k + 1][k] = wn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let d = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            total += 1;
            rel = g[k + 1].abs() / bnorm;
            if rel <= tol || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wj| wj / wn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            x.iter_mut().zip(&v[i]).for_each(|(xj, vj)| *xj += yi * vj);
        }
        if rel <= tol {
            break;
        }
    }
    GmresOutcome { x, rel_residual: rel, iterations: total }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 40;
        let a = |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let mut s = (2.0 + i as f64 * 0.1) * x[i];
                    if i > 0 {
                        s -= 0.7 * x[i - 1];
                    }
                    if i + 1 < n {
                        s += 0.3 * x[i + 1];
                    }
                    s
                })
                .collect()
        };
        let truth: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = a(&truth);
        let out = gmres(a, &b, 1e-13, 15, 400);
        assert!(out.rel_residual <= 1e-13);
        for (x, t) in out.x.iter().zip(&truth) {
            assert!((x - t).abs() < 1e-11);
        }
    }
}
