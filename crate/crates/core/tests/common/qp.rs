use bidreserve::qp::{CsrMatrix, QpProblem, QpSolution};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Random QP together with points known to be feasible. Equality rows are
/// orthonormal, so the points are built by projecting random moves onto
/// their null space; inequality bounds enclose every point with some slack
/// and a random share of sides are left open.
pub fn random_qp(
    r: &mut ChaCha8Rng,
    n: usize,
    m_eq: usize,
    m_in: usize,
    strictly_convex: bool,
) -> (QpProblem, Vec<Vec<f64>>) {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    while rows.len() < m_eq.min(n - 1) {
        let mut v: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        for q in &rows {
            let d = dot(&v, q);
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-3 {
            rows.push(v.iter().map(|x| x / norm).collect());
        }
    }
    let center: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
    let mut points = vec![center.clone()];
    for _ in 0..6 {
        let mut v: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        for q in &rows {
            let d = dot(&v, q);
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
        }
        points.push(center.iter().zip(&v).map(|(c, d)| c + d).collect());
    }

    let in_rows: Vec<Vec<f64>> = (0..m_in)
        .map(|i| {
            if i < n {
                // plain variable bounds first
                (0..n).map(|j| if j == i { 1.0 } else { 0.0 }).collect()
            } else {
                (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
            }
        })
        .collect();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for row in &in_rows {
        let vals: Vec<f64> = points.iter().map(|p| dot(row, p)).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        lower.push(if r.random_bool(0.8) {
            lo - r.random_range(0.0..0.5)
        } else {
            f64::NEG_INFINITY
        });
        upper.push(if r.random_bool(0.8) {
            hi + r.random_range(0.0..0.5)
        } else {
            f64::INFINITY
        });
    }

    let k = if strictly_convex {
        n
    } else {
        r.random_range(1..=n)
    };
    let m: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            p[i][j] = m.iter().map(|row| row[i] * row[j]).sum::<f64>();
        }
        if strictly_convex {
            p[i][i] += 0.1;
        }
    }
    let q: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
    let a_eq = if rows.is_empty() {
        CsrMatrix::zeros(0, n)
    } else {
        CsrMatrix::from_dense(&rows)
    };
    let b_eq = a_eq.mul_vec(&center);
    let qp = QpProblem {
        quadratic_cost: CsrMatrix::from_dense(&p),
        linear_cost: q,
        a_eq,
        b_eq,
        a_in: if in_rows.is_empty() {
            CsrMatrix::zeros(0, n)
        } else {
            CsrMatrix::from_dense(&in_rows)
        },
        lower,
        upper,
    };
    (qp, points)
}

/// Every inequality row is either clearly inactive or carries a clearly
/// nonzero multiplier, so small right-hand-side changes keep the active set.
pub fn strictly_complementary(qp: &QpProblem, sol: &QpSolution, margin: f64) -> bool {
    let ax = qp.a_in.mul_vec(&sol.x);
    (0..ax.len()).all(|i| {
        let gap = (ax[i] - qp.lower[i]).min(qp.upper[i] - ax[i]);
        gap > margin || sol.ineq_duals[i].abs() > margin
    })
}
