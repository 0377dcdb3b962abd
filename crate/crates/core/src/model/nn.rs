//! Dense and LSTM layers with explicit forward caches and backward passes.

use ndarray::{s, Array1, Array2, Axis, Zip};
use rand::Rng;

/// Fixed-order access to every parameter tensor, used by the optimizer,
/// gradient checks and checkpoints.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
    fn tensor_names(&self) -> Vec<String>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    fn squared_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum()
    }

    fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= k);
        }
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored in standard layout")
}

fn slice_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are stored in standard layout")
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored in standard layout")
}

fn slice1_mut(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are stored in standard layout")
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Affine layer `y = x Wᵀ + b` with `W` of shape (out, in).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(out: usize, inp: usize) -> Dense {
        Dense {
            w: Array2::zeros((out, inp)),
            b: Array1::zeros(out),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng + ?Sized>(out: usize, inp: usize, rng: &mut R) -> Dense {
        let a = (6.0 / (inp + out) as f64).sqrt();
        Dense {
            w: Array2::from_shape_simple_fn((out, inp), || rng.random_range(-a..a)),
            b: Array1::zeros(out),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    /// Accumulates parameter gradients into `g` and returns dL/dx.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, g: &mut Dense) -> Array2<f64> {
        ndarray::linalg::general_mat_mul(1.0, &dy.t(), x, 1.0, &mut g.w);
        g.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w)
    }

    /// Parameter gradients only.
    pub fn backward_params(&self, x: &Array2<f64>, dy: &Array2<f64>, g: &mut Dense) {
        ndarray::linalg::general_mat_mul(1.0, &dy.t(), x, 1.0, &mut g.w);
        g.b += &dy.sum_axis(Axis(0));
    }
}

impl ParamSet for Dense {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![slice(&self.w), slice1(&self.b)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![slice_mut(&mut self.w), slice1_mut(&mut self.b)]
    }

    fn tensor_names(&self) -> Vec<String> {
        vec!["w".into(), "b".into()]
    }
}

/// LSTM cell. Gate rows of `wx`, `wh` and `b` are stacked in the order
/// input, forget, candidate, output, each `hidden` rows tall.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub wx: Array2<f64>,
    pub wh: Array2<f64>,
    pub b: Array1<f64>,
}

/// Everything one step needs for its backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub x: Array2<f64>,
    pub h_prev: Array2<f64>,
    pub c_prev: Array2<f64>,
    pub i: Array2<f64>,
    pub f: Array2<f64>,
    pub g: Array2<f64>,
    pub o: Array2<f64>,
    pub tanh_c: Array2<f64>,
}

impl Lstm {
    pub fn zeros(inp: usize, hidden: usize) -> Lstm {
        Lstm {
            wx: Array2::zeros((4 * hidden, inp)),
            wh: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    /// Glorot-uniform weights; forget-gate bias 1.
    pub fn init<R: Rng + ?Sized>(inp: usize, hidden: usize, rng: &mut R) -> Lstm {
        let ax = (6.0 / (inp + hidden) as f64).sqrt();
        let ah = (6.0 / (2 * hidden) as f64).sqrt();
        let wx = Array2::from_shape_simple_fn((4 * hidden, inp), || rng.random_range(-ax..ax));
        let wh = Array2::from_shape_simple_fn((4 * hidden, hidden), || rng.random_range(-ah..ah));
        let mut b = Array1::zeros(4 * hidden);
        b.slice_mut(s![hidden..2 * hidden]).fill(1.0);
        Lstm { wx, wh, b }
    }

    pub fn hidden(&self) -> usize {
        self.wh.ncols()
    }

    pub fn inputs(&self) -> usize {
        self.wx.ncols()
    }

    /// One step; returns `(h, c, cache)`.
    pub fn step(
        &self,
        x: &Array2<f64>,
        h_prev: &Array2<f64>,
        c_prev: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>, LstmCache) {
        let hd = self.hidden();
        let mut z = x.dot(&self.wx.t()) + &self.b;
        ndarray::linalg::general_mat_mul(1.0, h_prev, &self.wh.t(), 1.0, &mut z);
        let i = z.slice(s![.., 0..hd]).mapv(sigmoid);
        let f = z.slice(s![.., hd..2 * hd]).mapv(sigmoid);
        let g = z.slice(s![.., 2 * hd..3 * hd]).mapv(f64::tanh);
        let o = z.slice(s![.., 3 * hd..4 * hd]).mapv(sigmoid);
        let mut c = &f * c_prev;
        Zip::from(&mut c).and(&i).and(&g).for_each(|c, &i, &g| *c += i * g);
        let tanh_c = c.mapv(f64::tanh);
        let h = &o * &tanh_c;
        let cache = LstmCache {
            x: x.clone(),
            h_prev: h_prev.clone(),
            c_prev: c_prev.clone(),
            i,
            f,
            g,
            o,
            tanh_c,
        };
        (h, c, cache)
    }

    /// Backward through one step given dL/dh and dL/dc flowing into it.
    /// Accumulates parameter gradients into `grad` (if any) and returns
    /// `(dx, dh_prev, dc_prev)`.
    pub fn step_backward(
        &self,
        cache: &LstmCache,
        dh: &Array2<f64>,
        dc: &Array2<f64>,
        grad: Option<&mut Lstm>,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let hd = self.hidden();
        let batch = dh.nrows();
        let mut dz = Array2::<f64>::zeros((batch, 4 * hd));
        let mut dc_prev = Array2::<f64>::zeros((batch, hd));
        for r in 0..batch {
            for j in 0..hd {
                let (i, f, g, o, tc) = (
                    cache.i[[r, j]],
                    cache.f[[r, j]],
                    cache.g[[r, j]],
                    cache.o[[r, j]],
                    cache.tanh_c[[r, j]],
                );
                let dh_ = dh[[r, j]];
                let dct = dc[[r, j]] + dh_ * o * (1.0 - tc * tc);
                dz[[r, j]] = dct * g * i * (1.0 - i);
                dz[[r, hd + j]] = dct * cache.c_prev[[r, j]] * f * (1.0 - f);
                dz[[r, 2 * hd + j]] = dct * i * (1.0 - g * g);
                dz[[r, 3 * hd + j]] = dh_ * tc * o * (1.0 - o);
                dc_prev[[r, j]] = dct * f;
            }
        }
        if let Some(gr) = grad {
            ndarray::linalg::general_mat_mul(1.0, &dz.t(), &cache.x, 1.0, &mut gr.wx);
            ndarray::linalg::general_mat_mul(1.0, &dz.t(), &cache.h_prev, 1.0, &mut gr.wh);
            gr.b += &dz.sum_axis(Axis(0));
        }
        let dx = dz.dot(&self.wx);
        let dh_prev = dz.dot(&self.wh);
        (dx, dh_prev, dc_prev)
    }
}

impl ParamSet for Lstm {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![slice(&self.wx), slice(&self.wh), slice1(&self.b)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            slice_mut(&mut self.wx),
            slice_mut(&mut self.wh),
            slice1_mut(&mut self.b),
        ]
    }

    fn tensor_names(&self) -> Vec<String> {
        vec!["wx".into(), "wh".into(), "b".into()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_lstm_outputs_zero() {
        let l = Lstm::zeros(3, 4);
        let x = Array2::from_elem((2, 3), 0.7);
        let z = Array2::zeros((2, 4));
        let (h, c, _) = l.step(&x, &z, &z);
        assert!(h.iter().all(|&v| v == 0.0));
        assert!(c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_matches_scalar_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (d, hd) = (3, 2);
        let l = Lstm::init(d, hd, &mut rng);
        let x = Array2::from_shape_simple_fn((1, d), || rng.random_range(-1.0..1.0));
        let h0 = Array2::from_shape_simple_fn((1, hd), || rng.random_range(-1.0..1.0));
        let c0 = Array2::from_shape_simple_fn((1, hd), || rng.random_range(-1.0..1.0));
        let (h, c, _) = l.step(&x, &h0, &c0);
        for j in 0..hd {
            let pre = |gate: usize| {
                let row = gate * hd + j;
                let mut z = l.b[row];
                for k in 0..d {
                    z += l.wx[[row, k]] * x[[0, k]];
                }
                for k in 0..hd {
                    z += l.wh[[row, k]] * h0[[0, k]];
                }
                z
            };
            let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
            let cj = sig(pre(1)) * c0[[0, j]] + sig(pre(0)) * pre(2).tanh();
            let hj = sig(pre(3)) * cj.tanh();
            assert!((c[[0, j]] - cj).abs() < 1e-12);
            assert!((h[[0, j]] - hj).abs() < 1e-12);
        }
    }
}
