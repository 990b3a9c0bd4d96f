//! Differentiable tensor operations.
//!
//! Broadcasting is limited to leading-axis batch broadcasting: for `add` and
//! `matmul` the smaller operand's shape must be a suffix of the larger one's.
//! Everything else wants explicit shapes.

use super::{make_output, Tensor};
use crate::error::{Error, Result};
use crate::real::Real;

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

fn is_suffix(small: &[usize], big: &[usize]) -> bool {
    small.len() <= big.len() && &big[big.len() - small.len()..] == small
}

/// Elementwise sum. One operand's shape may be a suffix of the other's, in
/// which case it is repeated over the leading axes.
pub fn add<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Result<Tensor<R>> {
    if a.shape() == b.shape() {
        let data: Vec<R> = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
        return make_output("add", a.shape().to_vec(), data, &[a, b], |mask| {
            Box::new(move |g: &[R]| {
                let mut out = Vec::new();
                if mask[0] {
                    out.push(g.to_vec());
                }
                if mask[1] {
                    out.push(g.to_vec());
                }
                out
            })
        });
    }
    let (big, small, big_first) = if is_suffix(b.shape(), a.shape()) {
        (a, b, true)
    } else if is_suffix(a.shape(), b.shape()) {
        (b, a, false)
    } else {
        return Err(shape_err("add", a.shape(), b.shape()));
    };
    let slen = small.len().max(1);
    let data: Vec<R> = big
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| x + small.data()[i % slen])
        .collect();
    make_output("add", big.shape().to_vec(), data, &[a, b], |mask| {
        let (a_tracked, b_tracked) = (mask[0], mask[1]);
        let small_tracked = if big_first { b_tracked } else { a_tracked };
        let big_tracked = if big_first { a_tracked } else { b_tracked };
        Box::new(move |g: &[R]| {
            let big_grad = g.to_vec();
            let small_grad = if small_tracked {
                let mut acc = vec![R::zero(); slen];
                for (i, &gv) in g.iter().enumerate() {
                    acc[i % slen] = acc[i % slen] + gv;
                }
                Some(acc)
            } else {
                None
            };
            // Emit in input order (a then b).
            let mut out = Vec::new();
            let (first, second) = if big_first {
                (big_tracked.then_some(big_grad), small_grad)
            } else {
                (small_grad, big_tracked.then_some(big_grad))
            };
            if let Some(gfirst) = first {
                out.push(gfirst);
            }
            if let Some(gsecond) = second {
                out.push(gsecond);
            }
            out
        })
    })
}

/// Elementwise difference of same-shape tensors.
pub fn sub<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Result<Tensor<R>> {
    if a.shape() != b.shape() {
        return Err(shape_err("sub", a.shape(), b.shape()));
    }
    let data: Vec<R> = a.data().iter().zip(b.data()).map(|(&x, &y)| x - y).collect();
    make_output("sub", a.shape().to_vec(), data, &[a, b], |mask| {
        Box::new(move |g: &[R]| {
            let mut out = Vec::new();
            if mask[0] {
                out.push(g.to_vec());
            }
            if mask[1] {
                out.push(g.iter().map(|&v| -v).collect());
            }
            out
        })
    })
}

/// Elementwise product of same-shape tensors.
pub fn mul<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Result<Tensor<R>> {
    if a.shape() != b.shape() {
        return Err(shape_err("mul", a.shape(), b.shape()));
    }
    let data: Vec<R> = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    let (a_data, b_data) = (a.data.clone(), b.data.clone());
    make_output("mul", a.shape().to_vec(), data, &[a, b], |mask| {
        Box::new(move |g: &[R]| {
            let mut out = Vec::new();
            if mask[0] {
                out.push(g.iter().zip(b_data.iter()).map(|(&gv, &y)| gv * y).collect());
            }
            if mask[1] {
                out.push(g.iter().zip(a_data.iter()).map(|(&gv, &x)| gv * x).collect());
            }
            out
        })
    })
}

/// Multiplication by a scalar constant.
pub fn scale<R: Real>(a: &Tensor<R>, factor: R) -> Result<Tensor<R>> {
    let data: Vec<R> = a.data().iter().map(|&x| x * factor).collect();
    make_output("scale", a.shape().to_vec(), data, &[a], |_| {
        Box::new(move |g: &[R]| vec![g.iter().map(|&v| v * factor).collect()])
    })
}

/// Matrix product over the trailing two axes: `[..,m,k] x [..,k,n] -> [..,m,n]`.
/// Leading axes must match, or one operand may omit them entirely.
pub fn matmul<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Result<Tensor<R>> {
    if a.shape().len() < 2 || b.shape().len() < 2 {
        return Err(shape_err("matmul", a.shape(), b.shape()));
    }
    let (m, ka) = (a.shape()[a.shape().len() - 2], a.shape()[a.shape().len() - 1]);
    let (kb, n) = (b.shape()[b.shape().len() - 2], b.shape()[b.shape().len() - 1]);
    let lead_a = &a.shape()[..a.shape().len() - 2];
    let lead_b = &b.shape()[..b.shape().len() - 2];
    if ka != kb || !(lead_a == lead_b || lead_a.is_empty() || lead_b.is_empty()) {
        return Err(shape_err("matmul", a.shape(), b.shape()));
    }
    let k = ka;
    let lead: Vec<usize> = if lead_a.is_empty() { lead_b.to_vec() } else { lead_a.to_vec() };
    let batch: usize = lead.iter().product();
    let (a_batched, b_batched) = (!lead_a.is_empty() || lead.is_empty(), !lead_b.is_empty() || lead.is_empty());

    let ad = a.data();
    let bd = b.data();
    let mut out = vec![R::zero(); batch * m * n];
    for bi in 0..batch {
        let ao = if a_batched { bi * m * k } else { 0 };
        let bo = if b_batched { bi * k * n } else { 0 };
        let co = bi * m * n;
        for i in 0..m {
            for l in 0..k {
                let av = ad[ao + i * k + l];
                let brow = &bd[bo + l * n..bo + (l + 1) * n];
                let crow = &mut out[co + i * n..co + (i + 1) * n];
                for (c, &bv) in crow.iter_mut().zip(brow) {
                    *c = *c + av * bv;
                }
            }
        }
    }

    let mut shape = lead.clone();
    shape.push(m);
    shape.push(n);
    let (a_data, b_data) = (a.data.clone(), b.data.clone());
    let (a_len, b_len) = (a.len(), b.len());
    make_output("matmul", shape, out, &[a, b], |mask| {
        Box::new(move |g: &[R]| {
            let mut out = Vec::new();
            if mask[0] {
                // dA[i,l] = sum_j G[i,j] * B[l,j]
                let mut da = vec![R::zero(); a_len];
                for bi in 0..batch {
                    let ao = if a_batched { bi * m * k } else { 0 };
                    let bo = if b_batched { bi * k * n } else { 0 };
                    let co = bi * m * n;
                    for i in 0..m {
                        let grow = &g[co + i * n..co + (i + 1) * n];
                        for l in 0..k {
                            let brow = &b_data[bo + l * n..bo + (l + 1) * n];
                            let mut s = R::zero();
                            for (&gv, &bv) in grow.iter().zip(brow) {
                                s = s + gv * bv;
                            }
                            da[ao + i * k + l] = da[ao + i * k + l] + s;
                        }
                    }
                }
                out.push(da);
            }
            if mask[1] {
                // dB[l,j] = sum_i A[i,l] * G[i,j]
                let mut db = vec![R::zero(); b_len];
                for bi in 0..batch {
                    let ao = if a_batched { bi * m * k } else { 0 };
                    let bo = if b_batched { bi * k * n } else { 0 };
                    let co = bi * m * n;
                    for i in 0..m {
                        let grow = &g[co + i * n..co + (i + 1) * n];
                        for l in 0..k {
                            let av = a_data[ao + i * k + l];
                            let dbrow = &mut db[bo + l * n..bo + (l + 1) * n];
                            for (d, &gv) in dbrow.iter_mut().zip(grow) {
                                *d = *d + av * gv;
                            }
                        }
                    }
                }
                out.push(db);
            }
            out
        })
    })
}

/// Rectified linear unit.
pub fn relu<R: Real>(a: &Tensor<R>) -> Result<Tensor<R>> {
    let data: Vec<R> = a.data().iter().map(|&x| if x > R::zero() { x } else { R::zero() }).collect();
    let a_data = a.data.clone();
    make_output("relu", a.shape().to_vec(), data, &[a], |_| {
        Box::new(move |g: &[R]| {
            vec![g
                .iter()
                .zip(a_data.iter())
                .map(|(&gv, &x)| if x > R::zero() { gv } else { R::zero() })
                .collect()]
        })
    })
}

fn lane_geometry(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let lane = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    (outer, lane, inner)
}

/// Softmax along one axis, stabilized by max subtraction. Outputs are
/// non-negative and sum to one along the axis.
pub fn softmax<R: Real>(a: &Tensor<R>, axis: usize) -> Result<Tensor<R>> {
    if axis >= a.shape().len() {
        return Err(Error::Shape(format!(
            "softmax: axis {axis} out of range for shape {:?}",
            a.shape()
        )));
    }
    let (outer, lane, inner) = lane_geometry(a.shape(), axis);
    let ad = a.data();
    let mut out = vec![R::zero(); ad.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * lane * inner + i;
            let mut maxv = R::neg_infinity();
            for l in 0..lane {
                maxv = maxv.max(ad[base + l * inner]);
            }
            let mut sum = R::zero();
            for l in 0..lane {
                let e = (ad[base + l * inner] - maxv).exp();
                out[base + l * inner] = e;
                sum = sum + e;
            }
            for l in 0..lane {
                out[base + l * inner] = out[base + l * inner] / sum;
            }
        }
    }
    let y_for_back = out.clone();
    make_output("softmax", a.shape().to_vec(), out, &[a], |_| {
        Box::new(move |g: &[R]| {
            let mut dx = vec![R::zero(); g.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * lane * inner + i;
                    let mut dot = R::zero();
                    for l in 0..lane {
                        let idx = base + l * inner;
                        dot = dot + g[idx] * y_for_back[idx];
                    }
                    for l in 0..lane {
                        let idx = base + l * inner;
                        dx[idx] = y_for_back[idx] * (g[idx] - dot);
                    }
                }
            }
            vec![dx]
        })
    })
}

/// Mean over the given axes, which are removed from the shape. Reducing all
/// axes yields a scalar.
pub fn mean<R: Real>(a: &Tensor<R>, axes: &[usize]) -> Result<Tensor<R>> {
    let ndim = a.shape().len();
    let mut drop = vec![false; ndim];
    for &ax in axes {
        if ax >= ndim {
            return Err(Error::Shape(format!(
                "mean: axis {ax} out of range for shape {:?}",
                a.shape()
            )));
        }
        if drop[ax] {
            return Err(Error::Shape(format!("mean: duplicate axis {ax}")));
        }
        drop[ax] = true;
    }
    let out_shape: Vec<usize> =
        a.shape().iter().zip(&drop).filter(|(_, &d)| !d).map(|(&s, _)| s).collect();
    let count: usize = a.shape().iter().zip(&drop).filter(|(_, &d)| d).map(|(&s, _)| s).product();
    let out_len: usize = out_shape.iter().product();

    // kept_stride[d] = stride of dim d inside the reduced tensor, 0 if dropped.
    let in_shape = a.shape().to_vec();
    let mut kept_stride = vec![0usize; ndim];
    let mut acc_stride = 1usize;
    for d in (0..ndim).rev() {
        if !drop[d] {
            kept_stride[d] = acc_stride;
            acc_stride *= in_shape[d];
        }
    }

    let ad = a.data();
    let mut out = vec![R::zero(); out_len];
    let mut idx = vec![0usize; ndim];
    let mut kept = 0usize;
    for &v in ad {
        out[kept] = out[kept] + v;
        // odometer increment
        for d in (0..ndim).rev() {
            idx[d] += 1;
            kept += kept_stride[d];
            if idx[d] < in_shape[d] {
                break;
            }
            kept -= kept_stride[d] * in_shape[d];
            idx[d] = 0;
        }
    }
    let inv = R::one() / R::from_usize(count.max(1));
    for v in &mut out {
        *v = *v * inv;
    }

    let total = ad.len();
    make_output("mean", out_shape, out, &[a], |_| {
        let in_shape = in_shape.clone();
        let kept_stride = kept_stride.clone();
        Box::new(move |g: &[R]| {
            let mut dx = vec![R::zero(); total];
            let mut idx = vec![0usize; in_shape.len()];
            let mut kept = 0usize;
            for slot in dx.iter_mut() {
                *slot = g[kept] * inv;
                for d in (0..in_shape.len()).rev() {
                    idx[d] += 1;
                    kept += kept_stride[d];
                    if idx[d] < in_shape[d] {
                        break;
                    }
                    kept -= kept_stride[d] * in_shape[d];
                    idx[d] = 0;
                }
            }
            vec![dx]
        })
    })
}

/// Reinterprets the buffer under a new shape with the same element count.
pub fn reshape<R: Real>(a: &Tensor<R>, new_shape: Vec<usize>) -> Result<Tensor<R>> {
    let new_len: usize = new_shape.iter().product();
    if new_len != a.len() {
        return Err(shape_err("reshape", a.shape(), &new_shape));
    }
    make_output("reshape", new_shape, a.data().to_vec(), &[a], |_| {
        Box::new(move |g: &[R]| vec![g.to_vec()])
    })
}

fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * shape[d + 1];
    }
    strides
}

fn permute_data<R: Real>(data: &[R], shape: &[usize], perm: &[usize]) -> (Vec<usize>, Vec<R>) {
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let in_strides = strides_of(shape);
    let step: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(data.len());
    let ndim = out_shape.len();
    let mut idx = vec![0usize; ndim];
    let mut off = 0usize;
    for _ in 0..data.len() {
        out.push(data[off]);
        for d in (0..ndim).rev() {
            idx[d] += 1;
            off += step[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= step[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    (out_shape, out)
}

/// Axis permutation (generalized transpose).
pub fn permute<R: Real>(a: &Tensor<R>, perm: &[usize]) -> Result<Tensor<R>> {
    let ndim = a.shape().len();
    let mut seen = vec![false; ndim];
    if perm.len() != ndim || perm.iter().any(|&p| p >= ndim || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::Shape(format!(
            "permute: {perm:?} is not a permutation of {ndim} axes"
        )));
    }
    let (out_shape, out) = permute_data(a.data(), a.shape(), perm);
    let mut inverse = vec![0usize; ndim];
    for (d, &p) in perm.iter().enumerate() {
        inverse[p] = d;
    }
    let saved_shape = out_shape.clone();
    make_output("permute", out_shape, out, &[a], |_| {
        Box::new(move |g: &[R]| vec![permute_data(g, &saved_shape, &inverse).1])
    })
}

/// Channel projection: contracts axis 1 of `[N, C_in, ..]` with a
/// `[C_in, C_out]` weight, yielding `[N, C_out, ..]`.
pub fn map_channels<R: Real>(x: &Tensor<R>, w: &Tensor<R>) -> Result<Tensor<R>> {
    if x.shape().len() < 2 || w.shape().len() != 2 || w.shape()[0] != x.shape()[1] {
        return Err(shape_err("map_channels", x.shape(), w.shape()));
    }
    let n = x.shape()[0];
    let cin = x.shape()[1];
    let cout = w.shape()[1];
    let rest: usize = x.shape()[2..].iter().product();

    let xd = x.data();
    let wd = w.data();
    let mut out = vec![R::zero(); n * cout * rest];
    for ni in 0..n {
        for o in 0..cout {
            let orow = &mut out[(ni * cout + o) * rest..(ni * cout + o + 1) * rest];
            for c in 0..cin {
                let coeff = wd[c * cout + o];
                let xrow = &xd[(ni * cin + c) * rest..(ni * cin + c + 1) * rest];
                for (ov, &xv) in orow.iter_mut().zip(xrow) {
                    *ov = *ov + coeff * xv;
                }
            }
        }
    }

    let mut shape = vec![n, cout];
    shape.extend_from_slice(&x.shape()[2..]);
    let (x_data, w_data) = (x.data.clone(), w.data.clone());
    let (x_len, w_len) = (x.len(), w.len());
    make_output("map_channels", shape, out, &[x, w], |mask| {
        Box::new(move |g: &[R]| {
            let mut out = Vec::new();
            if mask[0] {
                let mut dx = vec![R::zero(); x_len];
                for ni in 0..n {
                    for c in 0..cin {
                        let drow = &mut dx[(ni * cin + c) * rest..(ni * cin + c + 1) * rest];
                        for o in 0..cout {
                            let coeff = w_data[c * cout + o];
                            let grow = &g[(ni * cout + o) * rest..(ni * cout + o + 1) * rest];
                            for (dv, &gv) in drow.iter_mut().zip(grow) {
                                *dv = *dv + coeff * gv;
                            }
                        }
                    }
                }
                out.push(dx);
            }
            if mask[1] {
                let mut dw = vec![R::zero(); w_len];
                for ni in 0..n {
                    for c in 0..cin {
                        let xrow = &x_data[(ni * cin + c) * rest..(ni * cin + c + 1) * rest];
                        for o in 0..cout {
                            let grow = &g[(ni * cout + o) * rest..(ni * cout + o + 1) * rest];
                            let mut s = R::zero();
                            for (&xv, &gv) in xrow.iter().zip(grow) {
                                s = s + xv * gv;
                            }
                            dw[c * cout + o] = dw[c * cout + o] + s;
                        }
                    }
                }
                out.push(dw);
            }
            out
        })
    })
}

/// Joint aggregation: `out[n,c,t,v,m] = sum_u adj[v,u] * x[n,c,t,u,m]`.
///
/// The adjacency is `[V,V]` (shared) or `[N,V,V]` (per sample, as when the
/// adaptive/similarity terms contribute). Differentiable in both arguments.
pub fn graph_contract<R: Real>(x: &Tensor<R>, adj: &Tensor<R>) -> Result<Tensor<R>> {
    if x.shape().len() != 5 {
        return Err(Error::Shape(format!(
            "graph_contract: features must be [N,C,T,V,M], got {:?}",
            x.shape()
        )));
    }
    let [n, c, t, v, m] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3], x.shape()[4]];
    let batched = match adj.shape() {
        [av, au] if *av == v && *au == v => false,
        [an, av, au] if *an == n && *av == v && *au == v => true,
        _ => {
            return Err(Error::Shape(format!(
                "graph_contract: adjacency {:?} does not match joint count {v} (batch {n})",
                adj.shape()
            )))
        }
    };

    let xd = x.data();
    let adjd = adj.data();
    let mut out = vec![R::zero(); xd.len()];
    for ni in 0..n {
        let adj_off = if batched { ni * v * v } else { 0 };
        for ci in 0..c {
            for ti in 0..t {
                let base = ((ni * c + ci) * t + ti) * v * m;
                for vi in 0..v {
                    let orow = &mut out[base + vi * m..base + (vi + 1) * m];
                    for ui in 0..v {
                        let coeff = adjd[adj_off + vi * v + ui];
                        if coeff == R::zero() {
                            continue;
                        }
                        let xrow = &xd[base + ui * m..base + (ui + 1) * m];
                        for (ov, &xv) in orow.iter_mut().zip(xrow) {
                            *ov = *ov + coeff * xv;
                        }
                    }
                }
            }
        }
    }

    let (x_data, adj_data) = (x.data.clone(), adj.data.clone());
    let adj_len = adj.len();
    make_output("graph_contract", x.shape().to_vec(), out, &[x, adj], |mask| {
        Box::new(move |g: &[R]| {
            let mut grads = Vec::new();
            if mask[0] {
                let mut dx = vec![R::zero(); g.len()];
                for ni in 0..n {
                    let adj_off = if batched { ni * v * v } else { 0 };
                    for ci in 0..c {
                        for ti in 0..t {
                            let base = ((ni * c + ci) * t + ti) * v * m;
                            for vi in 0..v {
                                let grow = &g[base + vi * m..base + (vi + 1) * m];
                                for ui in 0..v {
                                    let coeff = adj_data[adj_off + vi * v + ui];
                                    if coeff == R::zero() {
                                        continue;
                                    }
                                    let drow = &mut dx[base + ui * m..base + (ui + 1) * m];
                                    for (dv, &gv) in drow.iter_mut().zip(grow) {
                                        *dv = *dv + coeff * gv;
                                    }
                                }
                            }
                        }
                    }
                }
                grads.push(dx);
            }
            if mask[1] {
                let mut dadj = vec![R::zero(); adj_len];
                for ni in 0..n {
                    let adj_off = if batched { ni * v * v } else { 0 };
                    for ci in 0..c {
                        for ti in 0..t {
                            let base = ((ni * c + ci) * t + ti) * v * m;
                            for vi in 0..v {
                                let grow = &g[base + vi * m..base + (vi + 1) * m];
                                for ui in 0..v {
                                    let xrow = &x_data[base + ui * m..base + (ui + 1) * m];
                                    let mut s = R::zero();
                                    for (&gv, &xv) in grow.iter().zip(xrow) {
                                        s = s + gv * xv;
                                    }
                                    dadj[adj_off + vi * v + ui] = dadj[adj_off + vi * v + ui] + s;
                                }
                            }
                        }
                    }
                }
                grads.push(dadj);
            }
            grads
        })
    })
}

/// Per-joint, per-body 1-D convolution along the frame axis with symmetric
/// zero padding of (K-1)/2 frames, so `T' = ceil(T / stride)`.
pub fn temporal_conv1d<R: Real>(x: &Tensor<R>, kernel: &Tensor<R>, stride: usize) -> Result<Tensor<R>> {
    if x.shape().len() != 5 || kernel.shape().len() != 3 {
        return Err(shape_err("temporal_conv1d", x.shape(), kernel.shape()));
    }
    let [n, c, t, v, m] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3], x.shape()[4]];
    let [cout, cin, k] = [kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]];
    if cin != c {
        return Err(shape_err("temporal_conv1d", x.shape(), kernel.shape()));
    }
    if k % 2 == 0 {
        return Err(Error::Shape(format!("temporal_conv1d: kernel size {k} must be odd")));
    }
    if stride == 0 {
        return Err(Error::Shape("temporal_conv1d: stride must be positive".into()));
    }
    let pad = (k - 1) / 2;
    let t_out = t.div_ceil(stride);
    let vm = v * m;

    let xd = x.data();
    let kd = kernel.data();
    let mut out = vec![R::zero(); n * cout * t_out * vm];
    for ni in 0..n {
        for o in 0..cout {
            for to in 0..t_out {
                let orow_base = ((ni * cout + o) * t_out + to) * vm;
                for ci in 0..c {
                    for ki in 0..k {
                        let ti = (to * stride + ki) as isize - pad as isize;
                        if ti < 0 || ti >= t as isize {
                            continue;
                        }
                        let wv = kd[(o * cin + ci) * k + ki];
                        let xrow_base = ((ni * c + ci) * t + ti as usize) * vm;
                        let xrow = &xd[xrow_base..xrow_base + vm];
                        let orow = &mut out[orow_base..orow_base + vm];
                        for (ov, &xv) in orow.iter_mut().zip(xrow) {
                            *ov = *ov + wv * xv;
                        }
                    }
                }
            }
        }
    }

    let shape = vec![n, cout, t_out, v, m];
    let (x_data, k_data) = (x.data.clone(), kernel.data.clone());
    let (x_len, k_len) = (x.len(), kernel.len());
    make_output("temporal_conv1d", shape, out, &[x, kernel], |mask| {
        Box::new(move |g: &[R]| {
            let mut grads = Vec::new();
            if mask[0] {
                let mut dx = vec![R::zero(); x_len];
                for ni in 0..n {
                    for o in 0..cout {
                        for to in 0..t_out {
                            let grow_base = ((ni * cout + o) * t_out + to) * vm;
                            let grow = &g[grow_base..grow_base + vm];
                            for ci in 0..c {
                                for ki in 0..k {
                                    let ti = (to * stride + ki) as isize - pad as isize;
                                    if ti < 0 || ti >= t as isize {
                                        continue;
                                    }
                                    let wv = k_data[(o * cin + ci) * k + ki];
                                    let drow_base = ((ni * c + ci) * t + ti as usize) * vm;
                                    let drow = &mut dx[drow_base..drow_base + vm];
                                    for (dv, &gv) in drow.iter_mut().zip(grow) {
                                        *dv = *dv + wv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
                grads.push(dx);
            }
            if mask[1] {
                let mut dk = vec![R::zero(); k_len];
                for ni in 0..n {
                    for o in 0..cout {
                        for to in 0..t_out {
                            let grow_base = ((ni * cout + o) * t_out + to) * vm;
                            let grow = &g[grow_base..grow_base + vm];
                            for ci in 0..c {
                                for ki in 0..k {
                                    let ti = (to * stride + ki) as isize - pad as isize;
                                    if ti < 0 || ti >= t as isize {
                                        continue;
                                    }
                                    let xrow_base = ((ni * c + ci) * t + ti as usize) * vm;
                                    let xrow = &x_data[xrow_base..xrow_base + vm];
                                    let mut s = R::zero();
                                    for (&gv, &xv) in grow.iter().zip(xrow) {
                                        s = s + gv * xv;
                                    }
                                    dk[(o * cin + ci) * k + ki] = dk[(o * cin + ci) * k + ki] + s;
                                }
                            }
                        }
                    }
                }
                grads.push(dk);
            }
            grads
        })
    })
}

/// Shifts the frame axis by `offset` (positive = later), zero-filling the
/// exposed frames: `out[.., t, ..] = x[.., t - offset, ..]`.
pub fn time_shift<R: Real>(x: &Tensor<R>, offset: isize) -> Result<Tensor<R>> {
    if x.shape().len() != 5 {
        return Err(Error::Shape(format!(
            "time_shift: features must be [N,C,T,V,M], got {:?}",
            x.shape()
        )));
    }
    if offset == 0 {
        return make_output("time_shift", x.shape().to_vec(), x.data().to_vec(), &[x], |_| {
            Box::new(move |g: &[R]| vec![g.to_vec()])
        });
    }
    let [n, c, t, v, m] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3], x.shape()[4]];
    let vm = v * m;
    let xd = x.data();
    let mut out = vec![R::zero(); xd.len()];
    for ni in 0..n {
        for ci in 0..c {
            for ti in 0..t {
                let src = ti as isize - offset;
                if src < 0 || src >= t as isize {
                    continue;
                }
                let dst_base = ((ni * c + ci) * t + ti) * vm;
                let src_base = ((ni * c + ci) * t + src as usize) * vm;
                out[dst_base..dst_base + vm].copy_from_slice(&xd[src_base..src_base + vm]);
            }
        }
    }
    make_output("time_shift", x.shape().to_vec(), out, &[x], |_| {
        Box::new(move |g: &[R]| {
            let mut dx = vec![R::zero(); g.len()];
            for ni in 0..n {
                for ci in 0..c {
                    for ti in 0..t {
                        let src = ti as isize - offset;
                        if src < 0 || src >= t as isize {
                            continue;
                        }
                        let dst_base = ((ni * c + ci) * t + ti) * vm;
                        let src_base = ((ni * c + ci) * t + src as usize) * vm;
                        for j in 0..vm {
                            dx[src_base + j] = dx[src_base + j] + g[dst_base + j];
                        }
                    }
                }
            }
            vec![dx]
        })
    })
}

/// Mean over the batch of `-log softmax(logits)[label]`, stabilized by max
/// subtraction. Returns a scalar.
pub fn cross_entropy<R: Real>(logits: &Tensor<R>, labels: &[usize]) -> Result<Tensor<R>> {
    if logits.shape().len() != 2 {
        return Err(Error::Shape(format!(
            "cross_entropy: logits must be [N, classes], got {:?}",
            logits.shape()
        )));
    }
    let (n, classes) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "cross_entropy: {} labels for batch of {n}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Data(format!(
            "cross_entropy: label {bad} out of range for {classes} classes"
        )));
    }

    let ld = logits.data();
    let mut probs = vec![R::zero(); n * classes];
    let mut loss = R::zero();
    for i in 0..n {
        let row = &ld[i * classes..(i + 1) * classes];
        let maxv = row.iter().copied().fold(R::neg_infinity(), R::max);
        let mut sum = R::zero();
        for (j, &z) in row.iter().enumerate() {
            let e = (z - maxv).exp();
            probs[i * classes + j] = e;
            sum = sum + e;
        }
        let lse = sum.ln() + maxv;
        for j in 0..classes {
            probs[i * classes + j] = probs[i * classes + j] / sum;
        }
        loss = loss + (lse - row[labels[i]]);
    }
    let inv_n = R::one() / R::from_usize(n);
    loss = loss * inv_n;

    let labels = labels.to_vec();
    make_output("cross_entropy", Vec::new(), vec![loss], &[logits], |_| {
        Box::new(move |g: &[R]| {
            let gv = g[0] * inv_n;
            let mut dl = vec![R::zero(); n * classes];
            for i in 0..n {
                for j in 0..classes {
                    let idx = i * classes + j;
                    let indicator = if j == labels[i] { R::one() } else { R::zero() };
                    dl[idx] = (probs[idx] - indicator) * gv;
                }
            }
            vec![dl]
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::GradTape;

    fn t64(shape: Vec<usize>, data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let x = t64(vec![2], vec![0.0, 0.0]);
        let y = softmax(&x, 0).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = t64(vec![2, 3], vec![1.0, -2.0, 0.5, 10.0, 10.0, -30.0]);
        let y = softmax(&x, 1).unwrap();
        for i in 0..2 {
            let s: f64 = y.data()[i * 3..(i + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(y.data()[i * 3..(i + 1) * 3].iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn matmul_identity_returns_input() {
        let eye = t64(vec![3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let x = t64(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = matmul(&eye, &x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn matmul_batched_broadcasts_unbatched_operand() {
        let a = t64(vec![2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = t64(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let y = matmul(&a, &b).unwrap();
        assert_eq!(y.shape(), &[2, 1, 2]);
        assert_eq!(y.data(), a.data());
    }

    #[test]
    fn matmul_rejects_mismatched_shapes() {
        let a = t64(vec![2, 3], vec![0.0; 6]);
        let b = t64(vec![2, 2], vec![0.0; 4]);
        let err = matmul(&a, &b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[2, 2]"), "{err}");
    }

    #[test]
    fn relu_clamps_negatives() {
        let x = t64(vec![2], vec![-1.0, 2.0]);
        assert_eq!(relu(&x).unwrap().data(), &[0.0, 2.0]);
    }

    #[test]
    fn add_broadcasts_suffix_shape() {
        let a = t64(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = t64(vec![2], vec![10.0, 20.0]);
        let y = add(&a, &b).unwrap();
        assert_eq!(y.data(), &[11.0, 22.0, 13.0, 24.0]);
        // gradient of broadcast operand sums over leading axes
        let tape = GradTape::new();
        let bl = tape.leaf(vec![2], vec![10.0, 20.0]).unwrap();
        let y = add(&a, &bl).unwrap();
        let loss = mean(&y, &[0, 1]).unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.wrt(&bl).unwrap(), &[0.5, 0.5]);
    }

    #[test]
    fn mean_reduces_selected_axes() {
        let x = t64(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let rows = mean(&x, &[1]).unwrap();
        assert_eq!(rows.shape(), &[2]);
        assert_eq!(rows.data(), &[1.5, 3.5]);
        let all = mean(&x, &[0, 1]).unwrap();
        assert_eq!(all.shape(), &[] as &[usize]);
        assert_eq!(all.item(), 2.5);
    }

    #[test]
    fn permute_transposes() {
        let x = t64(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = permute(&x, &[1, 0]).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
        assert_eq!(y.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn graph_contract_identity_is_identity() {
        let x = t64(vec![1, 2, 3, 2, 1], (0..12).map(f64::from).collect());
        let eye = t64(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let y = graph_contract(&x, &eye).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn graph_contract_averaging_mixes_joints() {
        // Single frame, 2 joints: both output joints get the mean.
        let x = t64(vec![1, 1, 1, 2, 1], vec![1.0, 3.0]);
        let avg = t64(vec![2, 2], vec![0.5, 0.5, 0.5, 0.5]);
        let y = graph_contract(&x, &avg).unwrap();
        assert_eq!(y.data(), &[2.0, 2.0]);
    }

    #[test]
    fn graph_contract_identity_applied_twice_matches_once() {
        let x = t64(vec![1, 1, 2, 3, 1], vec![0.5, -1.0, 2.0, 0.0, 3.5, 7.0]);
        let eye = t64(vec![3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let once = graph_contract(&x, &eye).unwrap();
        let twice = graph_contract(&once, &eye).unwrap();
        assert_eq!(once.data(), twice.data());
    }

    #[test]
    fn temporal_conv_identity_kernel_preserves_input() {
        let x = t64(vec![1, 2, 4, 1, 1], (0..8).map(f64::from).collect());
        // K=1 identity channel map
        let kernel = t64(vec![2, 2, 1], vec![1.0, 0.0, 0.0, 1.0]);
        let y = temporal_conv1d(&x, &kernel, 1).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn temporal_conv_constant_input_averaging_kernel() {
        // Constant in time; averaging kernel preserves the value on interior
        // frames (boundary frames see zero padding).
        let t = 6;
        let x = t64(vec![1, 1, t, 1, 1], vec![5.0; t]);
        let kernel = t64(vec![1, 1, 3], vec![1.0 / 3.0; 3]);
        let y = temporal_conv1d(&x, &kernel, 1).unwrap();
        for ti in 1..t - 1 {
            assert!((y.data()[ti] - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn temporal_conv_stride_halves_frames() {
        let x = t64(vec![1, 1, 8, 1, 1], (0..8).map(f64::from).collect());
        let kernel = t64(vec![1, 1, 1], vec![1.0]);
        let y = temporal_conv1d(&x, &kernel, 2).unwrap();
        assert_eq!(y.shape()[2], 4);
        assert_eq!(y.data(), &[0.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn temporal_conv_rejects_even_kernel() {
        let x = t64(vec![1, 1, 4, 1, 1], vec![0.0; 4]);
        let kernel = t64(vec![1, 1, 2], vec![1.0, 1.0]);
        assert!(temporal_conv1d(&x, &kernel, 1).is_err());
    }

    #[test]
    fn time_shift_moves_frames_and_zero_fills() {
        let x = t64(vec![1, 1, 3, 1, 1], vec![1.0, 2.0, 3.0]);
        let y = time_shift(&x, 1).unwrap();
        assert_eq!(y.data(), &[0.0, 1.0, 2.0]);
        let y = time_shift(&x, -1).unwrap();
        assert_eq!(y.data(), &[2.0, 3.0, 0.0]);
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_classes() {
        let logits = t64(vec![1, 4], vec![0.3; 4]);
        let loss = cross_entropy(&logits, &[2]).unwrap();
        assert!((loss.item() - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_decreases_with_margin() {
        let mut last = f64::INFINITY;
        for margin in [1.0, 2.0, 4.0] {
            let logits = t64(vec![1, 3], vec![margin, 0.0, 0.0]);
            let loss = cross_entropy(&logits, &[0]).unwrap().item();
            assert!(loss < last, "margin {margin}: {loss} !< {last}");
            last = loss;
        }
    }

    #[test]
    fn cross_entropy_rejects_bad_labels() {
        let logits = t64(vec![1, 3], vec![0.0; 3]);
        assert!(cross_entropy(&logits, &[3]).is_err());
        assert!(cross_entropy(&logits, &[0, 1]).is_err());
    }

    #[test]
    fn cross_entropy_matches_direct_formula() {
        let logits = t64(vec![2, 3], vec![0.7, -1.2, 0.4, 2.0, 0.1, -0.3]);
        let labels = [2usize, 0];
        let loss = cross_entropy(&logits, &labels).unwrap().item();
        let mut expect = 0.0;
        for i in 0..2 {
            let row = &logits.data()[i * 3..(i + 1) * 3];
            let denom: f64 = row.iter().map(|z| z.exp()).sum();
            expect += -(row[labels[i]].exp() / denom).ln();
        }
        expect /= 2.0;
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn forward_is_deterministic() {
        let x = t64(vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]);
        let w = t64(vec![2, 2], vec![1.5, -0.5, 0.25, 2.0]);
        let a = matmul(&x, &w).unwrap();
        let b = matmul(&x, &w).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }
}
