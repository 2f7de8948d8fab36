//! Fully connected networks over flat parameter slices.
//!
//! A network is only a shape; its weights live in a caller-owned `&[f64]`
//! laid out layer by layer as the row-major weight matrix (out x in)
//! followed by the bias. This keeps optimizers and checkpoints trivial.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Elu,
    Tanh,
    Relu,
}

impl Activation {
    fn f(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    fn d1(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
            Activation::Relu => (z > 0.0) as u8 as f64,
        }
    }

    fn d2(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    0.0
                } else {
                    z.exp()
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Activation::Relu => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths including input and output.
    pub sizes: Vec<usize>,
    pub activation: Activation,
}

/// Intermediate values of a forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Pre-activations of each layer.
    pub z: Vec<Array2<f64>>,
    /// Layer inputs; `h[0]` is the network input.
    pub h: Vec<Array2<f64>>,
}

impl Forward {
    pub fn output(&self) -> &Array2<f64> {
        self.z.last().expect("network has at least one layer")
    }
}

impl Mlp {
    pub fn new(input: usize, hidden: &[usize], output: usize, activation: Activation) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Mlp { sizes, activation }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    fn offset(&self, layer: usize) -> usize {
        self.sizes[..layer + 1].windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    fn layer<'a>(&self, p: &'a [f64], l: usize) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offset(l);
        let w = ArrayView2::from_shape((o, i), &p[off..off + o * i]).unwrap();
        let b = ArrayView1::from(&p[off + o * i..off + o * i + o]);
        (w, b)
    }

    fn layer_grad<'a>(&self, g: &'a mut [f64], l: usize) -> (&'a mut [f64], &'a mut [f64]) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offset(l);
        let (w, rest) = g[off..off + o * i + o].split_at_mut(o * i);
        (w, rest)
    }

    /// Uniform `+-1/sqrt(fan_in)` initialization; the last layer's weights
    /// are additionally multiplied by `output_gain`.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R, output_gain: f64) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for l in 0..self.layers() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let bound = 1.0 / (i as f64).sqrt();
            let gain = if l + 1 == self.layers() { output_gain } else { 1.0 };
            for _ in 0..o * i {
                p.push(gain * rng.random_range(-bound..bound));
            }
            for _ in 0..o {
                p.push(rng.random_range(-bound..bound));
            }
        }
        p
    }

    pub fn forward(&self, p: &[f64], x: ArrayView2<f64>) -> Forward {
        debug_assert_eq!(p.len(), self.num_params());
        let mut z = Vec::with_capacity(self.layers());
        let mut h = Vec::with_capacity(self.layers());
        h.push(x.to_owned());
        for l in 0..self.layers() {
            let (w, b) = self.layer(p, l);
            let zl = h[l].dot(&w.t()) + &b;
            if l + 1 < self.layers() {
                h.push(zl.mapv(|v| self.activation.f(v)));
            }
            z.push(zl);
        }
        Forward { z, h }
    }

    pub fn predict(&self, p: &[f64], x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        for l in 0..self.layers() {
            let (w, b) = self.layer(p, l);
            let z = h.dot(&w.t()) + &b;
            h = if l + 1 < self.layers() {
                z.mapv(|v| self.activation.f(v))
            } else {
                z
            };
        }
        h
    }

    /// Accumulates `dL/dparams` into `grad` given `dL/doutput` and returns
    /// `dL/dinput`.
    pub fn backward(&self, p: &[f64], fwd: &Forward, grad_out: ArrayView2<f64>, grad: &mut [f64]) -> Array2<f64> {
        let mut g = grad_out.to_owned();
        for l in (0..self.layers()).rev() {
            let (w, _) = self.layer(p, l);
            {
                let (gw, gb) = self.layer_grad(grad, l);
                let dw = g.t().dot(&fwd.h[l]);
                for (a, b) in gw.iter_mut().zip(dw.iter()) {
                    *a += b;
                }
                for (a, b) in gb.iter_mut().zip(g.sum_axis(Axis(0)).iter()) {
                    *a += b;
                }
            }
            let mut prev = g.dot(&w);
            if l > 0 {
                let act = self.activation;
                prev.zip_mut_with(&fwd.z[l - 1], |a, &z| *a *= act.d1(z));
            }
            g = prev;
        }
        g
    }

    /// Gradient of a scalar-output network with respect to its input, one
    /// row per sample.
    pub fn input_gradient(&self, p: &[f64], fwd: &Forward) -> Array2<f64> {
        self.input_gradient_chain(p, fwd).0
    }

    /// `(A_0, [A_l], [E_l])` of the input-gradient recursion
    /// `A_{L-1} = w_out`, `E_l = A_l * act'(z_l)`, `A_{l-1} = E_l W_l`.
    fn input_gradient_chain(&self, p: &[f64], fwd: &Forward) -> (Array2<f64>, Vec<Array2<f64>>, Vec<Array2<f64>>) {
        assert_eq!(self.output_dim(), 1, "input gradient needs a scalar output");
        let n = fwd.h[0].nrows();
        let top = self.layers() - 1;
        let (w_out, _) = self.layer(p, top);
        let mut a = vec![Array2::zeros((0, 0)); self.layers()];
        let mut e = vec![Array2::zeros((0, 0)); self.layers()];
        a[top] = w_out.broadcast((n, self.sizes[top])).unwrap().to_owned();
        for l in (1..=top).rev() {
            let act = self.activation;
            let mut el = a[l].clone();
            el.zip_mut_with(&fwd.z[l - 1], |x, &z| *x *= act.d1(z));
            let (w, _) = self.layer(p, l - 1);
            a[l - 1] = el.dot(&w);
            e[l] = el;
        }
        (a[0].clone(), a, e)
    }

    /// Mean squared input-gradient norm `mean_i |dD/dx_i|^2` of a
    /// scalar-output network, and its gradient with respect to the
    /// parameters (accumulated into `grad`, scaled by `scale`).
    pub fn gradient_penalty(&self, p: &[f64], x: ArrayView2<f64>, scale: f64, grad: &mut [f64]) -> f64 {
        let fwd = self.forward(p, x);
        let n = x.nrows() as f64;
        let (g0, a, e) = self.input_gradient_chain(p, &fwd);
        let penalty = g0.iter().map(|v| v * v).sum::<f64>() / n;

        let top = self.layers() - 1;
        let act = self.activation;
        // reverse through the input-gradient recursion
        let mut a_bar = g0.mapv(|v| 2.0 * scale * v / n);
        let mut z_bar: Vec<Option<Array2<f64>>> = vec![None; self.layers()];
        for l in 1..=top {
            let (w, _) = self.layer(p, l - 1);
            let e_bar = a_bar.dot(&w.t());
            {
                let (gw, _) = self.layer_grad(grad, l - 1);
                let dw = e[l].t().dot(&a_bar);
                for (g, d) in gw.iter_mut().zip(dw.iter()) {
                    *g += d;
                }
            }
            let mut next = e_bar.clone();
            next.zip_mut_with(&fwd.z[l - 1], |x, &z| *x *= act.d1(z));
            let mut zb = e_bar;
            zb.zip_mut_with(&a[l], |x, &al| *x *= al);
            zb.zip_mut_with(&fwd.z[l - 1], |x, &z| *x *= act.d2(z));
            z_bar[l - 1] = Some(zb);
            a_bar = next;
        }
        {
            let (gw, _) = self.layer_grad(grad, top);
            for (g, d) in gw.iter_mut().zip(a_bar.sum_axis(Axis(0)).iter()) {
                *g += d;
            }
        }
        if top == 0 {
            return penalty;
        }
        // then through the forward pass, injecting the second-order terms
        let mut zb = z_bar[top - 1].take().unwrap_or_else(|| Array2::zeros(fwd.z[top - 1].raw_dim()));
        for l in (0..top).rev() {
            {
                let (gw, gb) = self.layer_grad(grad, l);
                let dw = zb.t().dot(&fwd.h[l]);
                for (g, d) in gw.iter_mut().zip(dw.iter()) {
                    *g += d;
                }
                for (g, d) in gb.iter_mut().zip(zb.sum_axis(Axis(0)).iter()) {
                    *g += d;
                }
            }
            if l > 0 {
                let (w, _) = self.layer(p, l);
                let mut hb = zb.dot(&w);
                hb.zip_mut_with(&fwd.z[l - 1], |x, &z| *x *= act.d1(z));
                if let Some(extra) = z_bar[l - 1].take() {
                    hb += &extra;
                }
                zb = hb;
            }
        }
        penalty
    }
}

/// Row-major batch from a slice of rows.
pub fn batch(rows: &[Vec<f64>]) -> Array2<f64> {
    let cols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Array2::from_shape_vec((rows.len(), cols), flat).expect("rows of equal length")
}

pub fn column(a: &Array2<f64>) -> Array1<f64> {
    a.column(0).to_owned()
}
