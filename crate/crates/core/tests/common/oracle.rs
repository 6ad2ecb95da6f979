//! Independent reference computations for the fitter and the error moments.
//!
//! The ridge oracle forms the normal equations `(X'X + lambda P) b = X'y`
//! in exact rational arithmetic from the bit-exact float inputs and inverts
//! the matrix by Gauss-Jordan elimination, so its answer is the true minimiser
//! rounded once to f64.

#![allow(dead_code)]

use num::{BigRational, FromPrimitive, One, Signed, ToPrimitive, Zero};

fn q(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite input")
}

/// Explicit inverse of a square matrix; `None` if singular.
pub fn gauss_jordan_inverse(mut a: Vec<Vec<BigRational>>) -> Option<Vec<Vec<BigRational>>> {
    let n = a.len();
    let mut inv: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { BigRational::one() } else { BigRational::zero() })
                .collect()
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col].clone();
        for j in 0..n {
            a[col][j] = &a[col][j] / &p;
            inv[col][j] = &inv[col][j] / &p;
        }
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for j in 0..n {
                let da = &f * &a[col][j];
                let di = &f * &inv[col][j];
                a[r][j] -= da;
                inv[r][j] -= di;
            }
        }
    }
    Some(inv)
}

/// `[k, m, delta_1..delta_J]` minimising the penalised squared error of `y`
/// observed at `t = 0..n-1`.
pub fn ridge_oracle(y: &[f64], changepoints: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let p = 2 + changepoints.len();
    let rows: Vec<Vec<BigRational>> = (0..y.len())
        .map(|i| {
            let t = BigRational::from_usize(i).unwrap();
            let mut row = vec![t.clone(), BigRational::one()];
            for &s in changepoints {
                let s = q(s);
                row.push(if t >= s { &t - &s } else { BigRational::zero() });
            }
            row
        })
        .collect();
    let mut gram = vec![vec![BigRational::zero(); p]; p];
    let mut rhs = vec![BigRational::zero(); p];
    for (row, &yi) in rows.iter().zip(y) {
        let yi = q(yi);
        for a in 0..p {
            rhs[a] += &row[a] * &yi;
            for b in 0..p {
                gram[a][b] += &row[a] * &row[b];
            }
        }
    }
    let lam = q(lambda);
    for (j, row) in gram.iter_mut().enumerate().skip(2) {
        row[j] += lam.clone();
    }
    let inv = gauss_jordan_inverse(gram)?;
    Some(
        (0..p)
            .map(|a| {
                let mut acc = BigRational::zero();
                for b in 0..p {
                    acc += &inv[a][b] * &rhs[b];
                }
                acc.to_f64().unwrap()
            })
            .collect(),
    )
}

/// Population mean and standard deviation by two separate passes.
pub fn two_pass(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mut total = 0.0;
    for x in v {
        total += x;
    }
    let mean = total / n;
    let mut ss = 0.0;
    for x in v {
        let d = x - mean;
        ss += d * d;
    }
    (mean, (ss / n).sqrt())
}

/// Normwise relative gap `|a - b|_inf / max(1, |b|_inf)`.
pub fn rel_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}

#[test]
fn oracle_inverts_a_small_system() {
    let a = vec![
        vec![q(2.0), q(1.0)],
        vec![q(1.0), q(3.0)],
    ];
    let inv = gauss_jordan_inverse(a).unwrap();
    assert_eq!(inv[0][0], BigRational::new(3.into(), 5.into()));
    assert_eq!(inv[0][1], BigRational::new((-1).into(), 5.into()));
    assert!(gauss_jordan_inverse(vec![vec![q(1.0), q(2.0)], vec![q(2.0), q(4.0)]]).is_none());
    assert!(BigRational::from_float(-0.5).unwrap().is_negative());
}
