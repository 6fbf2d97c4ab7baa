//! Layer primitives over a flat parameter vector. Every forward function
//! reads weights through [`Slot`] views; every backward function accumulates
//! into the matching region of a gradient vector of the same length.

use ndarray::linalg::general_mat_mul;
use ndarray::{
    s, Array1, Array2, ArrayView1, ArrayView2, ArrayView3, ArrayViewMut1, ArrayViewMut2, Axis,
};

/// Location of one parameter tensor inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    pub fn get<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.offset..self.offset + self.len]
    }

    pub fn get_mut<'a>(&self, params: &'a mut [f64]) -> &'a mut [f64] {
        &mut params[self.offset..self.offset + self.len]
    }

    pub fn mat<'a>(&self, params: &'a [f64], rows: usize, cols: usize) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((rows, cols), self.get(params)).expect("slot shape")
    }

    pub fn mat_mut<'a>(
        &self,
        params: &'a mut [f64],
        rows: usize,
        cols: usize,
    ) -> ArrayViewMut2<'a, f64> {
        ArrayViewMut2::from_shape((rows, cols), self.get_mut(params)).expect("slot shape")
    }

    pub fn vec<'a>(&self, params: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(self.get(params))
    }

    pub fn vec_mut<'a>(&self, params: &'a mut [f64]) -> ArrayViewMut1<'a, f64> {
        ArrayViewMut1::from(self.get_mut(params))
    }
}

/// Fully-connected layer, weights stored `[in, out]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Linear {
    pub weight: Slot,
    pub bias: Slot,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn forward(&self, params: &[f64], x: ArrayView2<f64>) -> Array2<f64> {
        let w = self.weight.mat(params, self.inputs, self.outputs);
        let mut y = x.dot(&w);
        y += &self.bias.vec(params);
        y
    }

    /// Accumulates weight/bias gradients and returns the input gradient
    /// when `want_input` is set.
    pub fn backward(
        &self,
        params: &[f64],
        grad: &mut [f64],
        x: ArrayView2<f64>,
        dy: ArrayView2<f64>,
        want_input: bool,
    ) -> Option<Array2<f64>> {
        {
            let mut dw = self.weight.mat_mut(grad, self.inputs, self.outputs);
            general_mat_mul(1.0, &x.t(), &dy, 1.0, &mut dw);
        }
        self.bias
            .vec_mut(grad)
            .scaled_add(1.0, &dy.sum_axis(Axis(0)));
        want_input.then(|| dy.dot(&self.weight.mat(params, self.inputs, self.outputs).t()))
    }
}

/// Dilated causal 1-D convolution over a time-major `T x C` sequence:
/// `y[t] = b + sum_j x[t - j * dilation] W_j`, zero before the start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct CausalConv {
    /// `[kernel, in, out]`
    pub weight: Slot,
    pub bias: Slot,
    pub inputs: usize,
    pub outputs: usize,
    pub kernel: usize,
    pub dilation: usize,
}

impl CausalConv {
    fn taps<'a>(&self, params: &'a [f64]) -> ArrayView3<'a, f64> {
        ArrayView3::from_shape(
            (self.kernel, self.inputs, self.outputs),
            self.weight.get(params),
        )
        .expect("conv shape")
    }

    pub fn forward(&self, params: &[f64], x: ArrayView2<f64>) -> Array2<f64> {
        let t = x.nrows();
        let mut y = Array2::zeros((t, self.outputs));
        y += &self.bias.vec(params);
        let w = self.taps(params);
        for j in 0..self.kernel {
            let shift = j * self.dilation;
            if shift >= t {
                break;
            }
            let mut dst = y.slice_mut(s![shift.., ..]);
            general_mat_mul(
                1.0,
                &x.slice(s![..t - shift, ..]),
                &w.index_axis(Axis(0), j),
                1.0,
                &mut dst,
            );
        }
        y
    }

    pub fn backward(
        &self,
        params: &[f64],
        grad: &mut [f64],
        x: ArrayView2<f64>,
        dy: ArrayView2<f64>,
    ) -> Array2<f64> {
        let t = x.nrows();
        self.bias
            .vec_mut(grad)
            .scaled_add(1.0, &dy.sum_axis(Axis(0)));
        let w = self.taps(params);
        let mut dx = Array2::zeros((t, self.inputs));
        let per_tap = self.inputs * self.outputs;
        for j in 0..self.kernel {
            let shift = j * self.dilation;
            if shift >= t {
                break;
            }
            let dy_j = dy.slice(s![shift.., ..]);
            let x_j = x.slice(s![..t - shift, ..]);
            {
                let tap = Slot {
                    offset: self.weight.offset + j * per_tap,
                    len: per_tap,
                };
                let mut dw = tap.mat_mut(grad, self.inputs, self.outputs);
                general_mat_mul(1.0, &x_j.t(), &dy_j, 1.0, &mut dw);
            }
            let mut dst = dx.slice_mut(s![..t - shift, ..]);
            general_mat_mul(1.0, &dy_j, &w.index_axis(Axis(0), j).t(), 1.0, &mut dst);
        }
        dx
    }
}

/// One unidirectional LSTM layer. Gate order in the packed weights is
/// input, forget, cell, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Lstm {
    /// `[in, 4H]`
    pub w_input: Slot,
    /// `[H, 4H]`
    pub w_hidden: Slot,
    /// `[4H]`
    pub bias: Slot,
    pub inputs: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    /// Activated gates, `T x 4H`.
    gates: Array2<f64>,
    cells: Array2<f64>,
    /// Hidden states, `T x H`; this is the layer output.
    pub hidden: Array2<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Lstm {
    pub fn forward(&self, params: &[f64], x: ArrayView2<f64>) -> LstmCache {
        let (t, h) = (x.nrows(), self.hidden);
        let wx = self.w_input.mat(params, self.inputs, 4 * h);
        let wh = self.w_hidden.mat(params, h, 4 * h);
        let mut gates = x.dot(&wx);
        gates += &self.bias.vec(params);
        let mut cells = Array2::<f64>::zeros((t, h));
        let mut hidden = Array2::<f64>::zeros((t, h));
        let mut h_prev = Array1::<f64>::zeros(h);
        let mut c_prev = Array1::<f64>::zeros(h);
        for step in 0..t {
            let mut g = gates.row_mut(step);
            if step > 0 {
                g += &h_prev.dot(&wh);
            }
            for k in 0..h {
                g[k] = sigmoid(g[k]);
                g[h + k] = sigmoid(g[h + k]);
                g[2 * h + k] = g[2 * h + k].tanh();
                g[3 * h + k] = sigmoid(g[3 * h + k]);
            }
            for k in 0..h {
                let c = g[h + k] * c_prev[k] + g[k] * g[2 * h + k];
                cells[[step, k]] = c;
                hidden[[step, k]] = g[3 * h + k] * c.tanh();
            }
            h_prev.assign(&hidden.row(step));
            c_prev.assign(&cells.row(step));
        }
        LstmCache {
            gates,
            cells,
            hidden,
        }
    }

    /// Backpropagation through time. `dh` is the loss gradient with respect
    /// to every output hidden state. Returns the input gradient.
    pub fn backward(
        &self,
        params: &[f64],
        grad: &mut [f64],
        x: ArrayView2<f64>,
        cache: &LstmCache,
        dh: ArrayView2<f64>,
    ) -> Array2<f64> {
        let (t, h) = (x.nrows(), self.hidden);
        let wh = self.w_hidden.mat(params, h, 4 * h);
        let mut d_pre = Array2::<f64>::zeros((t, 4 * h));
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);
        for step in (0..t).rev() {
            let g = cache.gates.row(step);
            let mut dp = d_pre.row_mut(step);
            for k in 0..h {
                let (i, f, c_hat, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                let c = cache.cells[[step, k]];
                let c_prev = if step > 0 {
                    cache.cells[[step - 1, k]]
                } else {
                    0.0
                };
                let tc = c.tanh();
                let dhk = dh[[step, k]] + dh_next[k];
                let do_ = dhk * tc;
                let dc = dhk * o * (1.0 - tc * tc) + dc_next[k];
                dp[k] = dc * c_hat * i * (1.0 - i);
                dp[h + k] = dc * c_prev * f * (1.0 - f);
                dp[2 * h + k] = dc * i * (1.0 - c_hat * c_hat);
                dp[3 * h + k] = do_ * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            dh_next = d_pre.row(step).dot(&wh.t());
        }
        {
            let mut dwx = self.w_input.mat_mut(grad, self.inputs, 4 * h);
            general_mat_mul(1.0, &x.t(), &d_pre, 1.0, &mut dwx);
        }
        if t > 1 {
            let mut dwh = self.w_hidden.mat_mut(grad, h, 4 * h);
            general_mat_mul(
                1.0,
                &cache.hidden.slice(s![..t - 1, ..]).t(),
                &d_pre.slice(s![1.., ..]),
                1.0,
                &mut dwh,
            );
        }
        self.bias
            .vec_mut(grad)
            .scaled_add(1.0, &d_pre.sum_axis(Axis(0)));
        d_pre.dot(&self.w_input.mat(params, self.inputs, 4 * h).t())
    }
}

pub(crate) fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

/// Zeroes `dy` wherever the ReLU output `y` was not positive.
pub(crate) fn relu_backward(dy: &mut Array2<f64>, y: &Array2<f64>) {
    ndarray::Zip::from(dy).and(y).for_each(|d, &v| {
        if v <= 0.0 {
            *d = 0.0;
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn causal_conv_matches_direct_sum() {
        let (t, cin, cout, k, d) = (7, 2, 3, 3, 2);
        let n_w = k * cin * cout;
        let params: Vec<f64> = (0..n_w + cout)
            .map(|i| ((i * 7 % 11) as f64 - 5.0) / 10.0)
            .collect();
        let conv = CausalConv {
            weight: Slot {
                offset: 0,
                len: n_w,
            },
            bias: Slot {
                offset: n_w,
                len: cout,
            },
            inputs: cin,
            outputs: cout,
            kernel: k,
            dilation: d,
        };
        let x = Array2::from_shape_fn((t, cin), |(i, c)| (i as f64) * 0.3 - c as f64);
        let y = conv.forward(&params, x.view());
        for ti in 0..t {
            for o in 0..cout {
                let mut acc = params[n_w + o];
                for j in 0..k {
                    if ti >= j * d {
                        for c in 0..cin {
                            acc += x[[ti - j * d, c]] * params[j * cin * cout + c * cout + o];
                        }
                    }
                }
                assert!((y[[ti, o]] - acc).abs() < 1e-12);
            }
        }
    }
}
