//! Forward operations and their hand-derived reverse-mode counterparts.
//!
//! Every `*_backward` takes the upstream gradient `dy` of the forward output
//! and returns gradients for the forward inputs. Only the `*_accum` variants
//! write into caller-owned gradient buffers.

use super::tensor::{dot, Tensor};
use crate::error::{Error, Result};

/// Matrix product. A rank-1 right operand is treated as a column vector and
/// the result is rank-1.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 {
        return Err(Error::dim("matmul", a.shape(), b.shape()));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (kb, n) = match b.rank() {
        1 => (b.len(), 1),
        2 => (b.shape()[0], b.shape()[1]),
        _ => return Err(Error::dim("matmul", a.shape(), b.shape())),
    };
    if k != kb {
        return Err(Error::dim("matmul", a.shape(), b.shape()));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    if n == 1 {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&ad[i * k..(i + 1) * k], bd);
        }
        return if b.rank() == 1 {
            Ok(Tensor::vector(out))
        } else {
            Tensor::matrix(m, 1, out)
        };
    }
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (o, bv) in orow.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                *o += aip * bv;
            }
        }
    }
    Tensor::matrix(m, n, out)
}

/// Returns `(dA, dB)` with `dA = dC·Bᵀ` and `dB = Aᵀ·dC`.
pub fn matmul_backward(a: &Tensor, b: &Tensor, dc: &Tensor) -> (Tensor, Tensor) {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = if b.rank() == 1 { 1 } else { b.shape()[1] };
    debug_assert_eq!(dc.len(), m * n);
    let (ad, bd, cd) = (a.data(), b.data(), dc.data());
    let mut da = vec![0.0; m * k];
    let mut db = vec![0.0; k * n];
    for i in 0..m {
        let crow = &cd[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &bd[p * n..(p + 1) * n];
            da[i * k + p] = dot(crow, brow);
            let aip = ad[i * k + p];
            for (g, c) in db[p * n..(p + 1) * n].iter_mut().zip(crow) {
                *g += aip * c;
            }
        }
    }
    let da = Tensor::new(a.shape().to_vec(), da).expect("shape of a");
    let db = Tensor::new(b.shape().to_vec(), db).expect("shape of b");
    (da, db)
}

/// `W·x + b` for a weight matrix and vectors.
pub fn affine(w: &Tensor, x: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut y = matmul(w, x)?;
    if b.len() != y.len() {
        return Err(Error::dim("affine bias", y.shape(), b.shape()));
    }
    y.add_assign(b)?;
    Ok(y)
}

/// Hot-path backward of `y = W·x` for a vector `x`: adds `dy·xᵀ` into `dw`
/// and returns `dx = Wᵀ·dy`.
pub fn matvec_backward_accum(w: &Tensor, x: &Tensor, dy: &Tensor, dw: &mut Tensor) -> Tensor {
    let (m, n) = (w.shape()[0], w.shape()[1]);
    debug_assert_eq!(x.len(), n);
    debug_assert_eq!(dy.len(), m);
    let mut dx = vec![0.0; n];
    let (wd, xd) = (w.data(), x.data());
    let dwd = dw.data_mut();
    for (i, &g) in dy.data().iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = i * n..(i + 1) * n;
        for ((acc, &xv), (dxv, &wv)) in dwd[row.clone()]
            .iter_mut()
            .zip(xd)
            .zip(dx.iter_mut().zip(&wd[row]))
        {
            *acc += g * xv;
            *dxv += g * wv;
        }
    }
    Tensor::vector(dx)
}

fn softmax_slice(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

/// Row-wise softmax with max subtraction. A vector is one row.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(x.shape());
    let c = x.cols();
    for (src, dst) in x.data().chunks(c).zip(out.data_mut().chunks_mut(c)) {
        softmax_slice(src, dst);
    }
    out
}

/// `dx_ij = y_ij (dy_ij − Σ_k y_ik dy_ik)` per row.
pub fn softmax_rows_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(y.shape());
    let c = y.cols();
    for ((yr, dyr), dxr) in y
        .data()
        .chunks(c)
        .zip(dy.data().chunks(c))
        .zip(dx.data_mut().chunks_mut(c))
    {
        let s = dot(yr, dyr);
        for ((g, &yv), &dv) in dxr.iter_mut().zip(yr).zip(dyr) {
            *g = yv * (dv - s);
        }
    }
    dx
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect()).expect("same shape")
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
    .expect("same shape")
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    map(x, |v| {
        if v >= 0.0 {
            1.0 / (1.0 + (-v).exp())
        } else {
            let e = v.exp();
            e / (1.0 + e)
        }
    })
}

/// Takes the forward *output* `y`.
pub fn sigmoid_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    zip_map(y, dy, |s, g| g * s * (1.0 - s))
}

pub fn relu(x: &Tensor) -> Tensor {
    map(x, |v| v.max(0.0))
}

/// Takes the forward *input* `x`; the subgradient at zero is zero.
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    zip_map(x, dy, |v, g| if v > 0.0 { g } else { 0.0 })
}

pub fn l2_normalize(v: &Tensor) -> Result<Tensor> {
    let n = v.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Degenerate(format!(
            "cannot L2-normalize a vector with norm {n}"
        )));
    }
    Ok(v.scaled(1.0 / n))
}

/// `dx = (dy − y·(y·dy)) / ‖x‖` where `y = x/‖x‖`.
pub fn l2_normalize_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    let n = x.norm();
    let y = x.scaled(1.0 / n);
    let proj = y.dot(dy);
    zip_map(&y, dy, |yv, g| (g - yv * proj) / n)
}

/// Mean over `axis` of a matrix: axis 0 collapses rows (one value per
/// column), axis 1 collapses columns.
pub fn mean_pool(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (r, c) = (x.rows(), x.cols());
    match axis {
        0 => {
            let mut out = vec![0.0; c];
            for i in 0..r {
                out.iter_mut().zip(x.row(i)).for_each(|(o, v)| *o += v);
            }
            out.iter_mut().for_each(|o| *o /= r as f64);
            Ok(Tensor::vector(out))
        }
        1 => Ok(Tensor::vector(
            (0..r).map(|i| x.row(i).iter().sum::<f64>() / c as f64).collect(),
        )),
        _ => Err(Error::Config(format!("mean_pool axis {axis} out of range"))),
    }
}

pub fn mean_pool_backward(shape: &[usize], axis: usize, dy: &Tensor) -> Tensor {
    let (r, c) = if shape.len() == 1 {
        (1, shape[0])
    } else {
        (shape[0], shape[1])
    };
    let mut dx = Tensor::zeros(shape);
    for i in 0..r {
        for j in 0..c {
            dx.data_mut()[i * c + j] = match axis {
                0 => dy.data()[j] / r as f64,
                _ => dy.data()[i] / c as f64,
            };
        }
    }
    dx
}

/// Max over `axis`, returning the pooled values and the winning index per
/// output slot. Ties resolve to the lowest index.
pub fn max_pool(x: &Tensor, axis: usize) -> Result<(Tensor, Vec<usize>)> {
    let (r, c) = (x.rows(), x.cols());
    let (outer, inner) = match axis {
        0 => (c, r),
        1 => (r, c),
        _ => return Err(Error::Config(format!("max_pool axis {axis} out of range"))),
    };
    let at = |o: usize, i: usize| if axis == 0 { x.get(i, o) } else { x.get(o, i) };
    let mut vals = Vec::with_capacity(outer);
    let mut arg = Vec::with_capacity(outer);
    for o in 0..outer {
        let mut best = 0;
        for i in 1..inner {
            if at(o, i) > at(o, best) {
                best = i;
            }
        }
        vals.push(at(o, best));
        arg.push(best);
    }
    Ok((Tensor::vector(vals), arg))
}

pub fn max_pool_backward(shape: &[usize], axis: usize, argmax: &[usize], dy: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(shape);
    let c = *shape.last().expect("shape");
    for (o, (&i, &g)) in argmax.iter().zip(dy.data()).enumerate() {
        let idx = if axis == 0 { i * c + o } else { o * c + i };
        dx.data_mut()[idx] += g;
    }
    dx
}

pub fn outer(u: &Tensor, v: &Tensor) -> Tensor {
    let (n, m) = (u.len(), v.len());
    let mut data = Vec::with_capacity(n * m);
    for &a in u.data() {
        data.extend(v.data().iter().map(|b| a * b));
    }
    Tensor::matrix(n, m, data).expect("outer shape")
}

/// Returns `(du, dv)` with `du = dM·v` and `dv = dMᵀ·u`.
pub fn outer_backward(u: &Tensor, v: &Tensor, dm: &Tensor) -> (Tensor, Tensor) {
    let m = v.len();
    let mut du = vec![0.0; u.len()];
    let mut dv = vec![0.0; m];
    for (i, (g, &ui)) in du.iter_mut().zip(u.data()).enumerate() {
        let row = &dm.data()[i * m..(i + 1) * m];
        *g = dot(row, v.data());
        dv.iter_mut().zip(row).for_each(|(d, r)| *d += r * ui);
    }
    (Tensor::vector(du), Tensor::vector(dv))
}

/// Flattens and concatenates into one vector.
pub fn concat(parts: &[&Tensor]) -> Tensor {
    Tensor::vector(parts.iter().flat_map(|p| p.data().iter().copied()).collect())
}

/// Inverse of [`concat`] for gradients: slices `dy` into vectors of the
/// given lengths.
pub fn split(dy: &Tensor, sizes: &[usize]) -> Vec<Tensor> {
    let mut at = 0;
    sizes
        .iter()
        .map(|&n| {
            let t = Tensor::vector(dy.data()[at..at + n].to_vec());
            at += n;
            t
        })
        .collect()
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::dim("add", a.shape(), b.shape()));
    }
    Ok(zip_map(a, b, |x, y| x + y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: usize, c: usize, d: &[f64]) -> Tensor {
        Tensor::matrix(r, c, d.to_vec()).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let a = m(2, 2, &[1., 2., 3., 4.]);
        assert_eq!(matmul(&Tensor::identity(2), &a).unwrap(), a);
        assert_eq!(matmul(&a, &Tensor::identity(2)).unwrap(), a);
    }

    #[test]
    fn row_times_column() {
        let c = matmul(&m(1, 2, &[1., 2.]), &m(2, 1, &[3., 4.])).unwrap();
        assert_eq!(c.shape(), &[1, 1]);
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&m(2, 3, &[0.; 6]), &m(2, 2, &[0.; 4])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn softmax_cases() {
        let s = softmax_rows(&Tensor::vector(vec![0., 0.]));
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_rows(&Tensor::vector(vec![1000., 0.]));
        assert!(s.is_finite());
        assert_eq!(s.data()[0], 1.0);
        assert!(s.data()[1] < 1e-300);
    }

    #[test]
    fn softmax_one_two_three_against_high_precision() {
        // Computed with mpmath at 50 digits.
        let s = softmax_rows(&Tensor::vector(vec![1., 2., 3.]));
        let want = [
            0.090_030_573_170_380_46,
            0.244_728_471_054_797_64,
            0.665_240_955_774_821_9,
        ];
        for (a, b) in s.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn small_vector_ops() {
        let v = l2_normalize(&Tensor::vector(vec![3., 4.])).unwrap();
        assert!((v.data()[0] - 0.6).abs() < 1e-15 && (v.data()[1] - 0.8).abs() < 1e-15);
        assert!(matches!(
            l2_normalize(&Tensor::vector(vec![0., 0.])),
            Err(Error::Degenerate(_))
        ));

        let p = mean_pool(&m(2, 2, &[1., 3., 5., 7.]), 0).unwrap();
        assert_eq!(p.data(), &[3., 5.]);
        let p = mean_pool(&m(2, 2, &[1., 3., 5., 7.]), 1).unwrap();
        assert_eq!(p.data(), &[2., 6.]);

        let o = outer(&Tensor::vector(vec![1., 0.]), &Tensor::vector(vec![0., 1.]));
        assert_eq!(o, m(2, 2, &[0., 1., 0., 0.]));

        let (mx, arg) = max_pool(&m(2, 2, &[0., 2., 0., 0.]), 0).unwrap();
        assert_eq!(mx.data(), &[0., 2.]);
        assert_eq!(arg, vec![0, 0]);

        let c = concat(&[&Tensor::vector(vec![1.]), &Tensor::vector(vec![2., 3.])]);
        assert_eq!(c.data(), &[1., 2., 3.]);
        let parts = split(&c, &[1, 2]);
        assert_eq!(parts[1].data(), &[2., 3.]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        let s = sigmoid(&Tensor::vector(vec![-800., 0., 800.]));
        assert_eq!(s.data(), &[0.0, 0.5, 1.0]);
    }
}
