//! Hyperbolic linear layers and feed-forward models with manual backprop.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gyrovector::{check_dims, PoincareBall};
use crate::transport_maps::TransportMap;

/// Elementwise activation applied in the tangent space at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Nonlinearity {
    #[default]
    Relu,
    Tanh,
    None,
}

impl Nonlinearity {
    fn apply(self, u: f64) -> f64 {
        match self {
            Nonlinearity::Relu => u.max(0.0),
            Nonlinearity::Tanh => u.tanh(),
            Nonlinearity::None => u,
        }
    }

    fn derivative(self, u: f64) -> f64 {
        match self {
            Nonlinearity::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Tanh => 1.0 - u.tanh().powi(2),
            Nonlinearity::None => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Nonlinearity::Relu => "relu",
            Nonlinearity::Tanh => "tanh",
            Nonlinearity::None => "none",
        }
    }
}

impl std::str::FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Nonlinearity::Relu),
            "tanh" => Ok(Nonlinearity::Tanh),
            "none" => Ok(Nonlinearity::None),
            other => Err(Error::InvalidParameter(format!(
                "unknown nonlinearity '{other}'"
            ))),
        }
    }
}

/// `x ↦ b ⊕ (W ⊗ x)`, or `W ⊗ x` when bias-free.
#[derive(Debug, Clone, PartialEq)]
pub struct HypLinearLayer {
    pub(crate) w: Array2<f64>,
    pub(crate) b: Array1<f64>,
    pub(crate) use_bias: bool,
}

impl HypLinearLayer {
    pub fn new(ball: &PoincareBall, w: Array2<f64>, b: Array1<f64>) -> Result<Self> {
        check_dims(w.nrows(), b.len())?;
        if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer parameters".into()));
        }
        if !ball.contains(b.view()) {
            return Err(Error::OutsideBall {
                index: 0,
                norm: b.dot(&b).sqrt(),
                radius: ball.radius(),
            });
        }
        Ok(Self {
            w,
            b,
            use_bias: true,
        })
    }

    pub fn bias_free(w: Array2<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer weights".into()));
        }
        let b = Array1::zeros(w.nrows());
        Ok(Self {
            w,
            b,
            use_bias: false,
        })
    }

    pub fn weight(&self) -> ArrayView2<'_, f64> {
        self.w.view()
    }

    pub fn bias(&self) -> ArrayView1<'_, f64> {
        self.b.view()
    }

    pub fn has_bias(&self) -> bool {
        self.use_bias
    }

    pub fn d_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, ball: &PoincareBall, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dims(self.d_in(), x.len())?;
        Ok(self.forward_unchecked(ball, x))
    }

    pub(crate) fn forward_unchecked(&self, ball: &PoincareBall, x: ArrayView1<f64>) -> Array1<f64> {
        let m = ball.matvec(self.w.view(), x);
        if self.use_bias {
            ball.add(self.b.view(), m.view())
        } else {
            m
        }
    }
}

/// Euclidean gradients of one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Per-layer gradients, in layer order.
pub type Grads = Vec<LayerGrads>;

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Array1<f64>>,
    products: Vec<Array1<f64>>,
    outputs: Vec<Array1<f64>>,
}

impl Tape {
    pub fn output(&self) -> ArrayView1<'_, f64> {
        self.outputs.last().expect("model has layers").view()
    }
}

/// Stack of hyperbolic linear layers with Möbius activations in between.
#[derive(Debug, Clone, PartialEq)]
pub struct HnnModel {
    ball: PoincareBall,
    layers: Vec<HypLinearLayer>,
    nonlinearity: Nonlinearity,
}

impl HnnModel {
    pub fn new(
        ball: PoincareBall,
        layers: Vec<HypLinearLayer>,
        nonlinearity: Nonlinearity,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("model layers".into()));
        }
        for pair in layers.windows(2) {
            check_dims(pair[0].d_out(), pair[1].d_in())?;
        }
        Ok(Self {
            ball,
            layers,
            nonlinearity,
        })
    }

    /// Single layer `b ⊕ (W ⊗ x)` with `W = I`, `b = 0`.
    pub fn identity(ball: PoincareBall, d: usize, bias: bool) -> Self {
        let w = Array2::eye(d);
        let layer = if bias {
            HypLinearLayer {
                w,
                b: Array1::zeros(d),
                use_bias: true,
            }
        } else {
            HypLinearLayer {
                w,
                b: Array1::zeros(d),
                use_bias: false,
            }
        };
        Self {
            ball,
            layers: vec![layer],
            nonlinearity: Nonlinearity::None,
        }
    }

    /// Fan-based uniform weights and zero biases for widths `dims[0] → … → dims[L]`.
    pub fn random<R: Rng>(
        ball: PoincareBall,
        dims: &[usize],
        nonlinearity: Nonlinearity,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "invalid layer widths {dims:?}"
            )));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (d_in, d_out) = (w[0], w[1]);
                let bound = (6.0 / (d_in + d_out) as f64).sqrt();
                let weights =
                    Array2::from_shape_fn((d_out, d_in), |_| rng.random_range(-bound..bound));
                HypLinearLayer {
                    w: weights,
                    b: Array1::zeros(d_out),
                    use_bias: bias,
                }
            })
            .collect();
        Self::new(ball, layers, nonlinearity)
    }

    pub fn ball(&self) -> &PoincareBall {
        &self.ball
    }

    pub fn layers(&self) -> &[HypLinearLayer] {
        &self.layers
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].d_in()
    }

    pub fn d_out(&self) -> usize {
        self.layers.last().expect("model has layers").d_out()
    }

    fn activate(&self, h: ArrayView1<f64>) -> (Array1<f64>, Array1<f64>) {
        let u = self.ball.log0(h);
        let su = u.mapv(|v| self.nonlinearity.apply(v));
        (self.ball.exp0(su.view()), u)
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dims(self.d_in(), x.len())?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut h = self.layers[0].forward_unchecked(&self.ball, x);
        for layer in &self.layers[1..] {
            let (a, _) = self.activate(h.view());
            h = layer.forward_unchecked(&self.ball, a.view());
        }
        h
    }

    pub fn forward_tape(&self, x: ArrayView1<f64>) -> Tape {
        let mut tape = Tape {
            inputs: Vec::new(),
            products: Vec::new(),
            outputs: Vec::new(),
        };
        let mut input = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                let (a, _) = self.activate(tape.outputs[l - 1].view());
                input = a;
            }
            let m = self.ball.matvec(layer.w.view(), input.view());
            let h = if layer.use_bias {
                self.ball.add(layer.b.view(), m.view())
            } else {
                m.clone()
            };
            tape.inputs.push(input.clone());
            tape.products.push(m);
            tape.outputs.push(h);
        }
        tape
    }

    pub fn zero_grads(&self) -> Grads {
        self.layers
            .iter()
            .map(|l| LayerGrads {
                w: Array2::zeros(l.w.dim()),
                b: Array1::zeros(l.b.len()),
            })
            .collect()
    }

    /// Accumulates into `grads` the parameter gradients for upstream `g_out`
    /// at the model output, returning the gradient with respect to the input.
    pub fn backward(&self, tape: &Tape, g_out: ArrayView1<f64>, grads: &mut Grads) -> Array1<f64> {
        let mut g = g_out.to_owned();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let gm = if layer.use_bias {
                let (gb, gm) = self
                    .ball
                    .add_vjp(layer.b.view(), tape.products[l].view(), g.view());
                grads[l].b += &gb;
                gm
            } else {
                g
            };
            let (gw, gx) = self
                .ball
                .matvec_vjp(layer.w.view(), tape.inputs[l].view(), gm.view());
            grads[l].w += &gw;
            g = if l > 0 {
                let h = tape.outputs[l - 1].view();
                let u = self.ball.log0(h);
                let su = u.mapv(|v| self.nonlinearity.apply(v));
                let gsu = self.ball.exp0_vjp(su.view(), gx.view());
                let gu =
                    Array1::from_shape_fn(u.len(), |k| gsu[k] * self.nonlinearity.derivative(u[k]));
                self.ball.log0_vjp(h, gu.view())
            } else {
                gx
            };
        }
        g
    }

    /// Model with parameters replaced (shapes must match).
    pub(crate) fn layers_mut(&mut self) -> &mut [HypLinearLayer] {
        &mut self.layers
    }

    /// Text format: a header line, then per layer a `layer d_out d_in` line,
    /// `d_out` weight rows and one bias row.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let bias = self.layers.iter().all(|l| l.use_bias);
        writeln!(
            out,
            "hnn {} {} {} {:.16e} {}",
            self.layers.len(),
            self.nonlinearity.name(),
            u8::from(bias),
            self.ball.radius(),
            self.ball.gamma_convention().name()
        )?;
        let fmt = |v: ArrayView1<f64>| {
            v.iter()
                .map(|x| format!("{x:.16e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        for layer in &self.layers {
            writeln!(out, "layer {} {}", layer.d_out(), layer.d_in())?;
            for row in layer.w.rows() {
                writeln!(out, "{}", fmt(row))?;
            }
            writeln!(out, "{}", fmt(layer.b.view()))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let lines: Vec<String> = input.lines().collect::<std::io::Result<_>>()?;
        let mut it = lines
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let perr = |k: usize, msg: String| Error::Parse { line: k + 1, msg };
        let (k, header) = it
            .next()
            .ok_or_else(|| perr(0, "empty model file".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 || h[0] != "hnn" {
            return Err(perr(k, format!("bad header '{header}'")));
        }
        let n_layers: usize = h[1].parse().map_err(|e| perr(k, format!("{e}")))?;
        let nonlinearity: Nonlinearity = h[2].parse()?;
        let bias = match h[3] {
            "0" => false,
            "1" => true,
            other => return Err(perr(k, format!("bad bias flag '{other}'"))),
        };
        let s: f64 = h[4].parse().map_err(|e| perr(k, format!("{e}")))?;
        let ball = PoincareBall::new(s)?.with_gamma(h[5].parse()?);
        let parse_row = |k: usize, line: &str, n: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e: std::num::ParseFloatError| perr(k, e.to_string()))?;
            if v.len() != n {
                return Err(perr(k, format!("expected {n} values, got {}", v.len())));
            }
            Ok(v)
        };
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let (k, line) = it
                .next()
                .ok_or_else(|| perr(lines.len(), "missing layer".into()))?;
            let p: Vec<&str> = line.split_whitespace().collect();
            if p.len() != 3 || p[0] != "layer" {
                return Err(perr(
                    k,
                    format!("expected 'layer d_out d_in', got '{line}'"),
                ));
            }
            let d_out: usize = p[1].parse().map_err(|e| perr(k, format!("{e}")))?;
            let d_in: usize = p[2].parse().map_err(|e| perr(k, format!("{e}")))?;
            let mut w = Array2::zeros((d_out, d_in));
            for r in 0..d_out {
                let (k, line) = it
                    .next()
                    .ok_or_else(|| perr(lines.len(), "missing weight row".into()))?;
                w.row_mut(r)
                    .assign(&Array1::from(parse_row(k, line, d_in)?));
            }
            let (k, line) = it
                .next()
                .ok_or_else(|| perr(lines.len(), "missing bias row".into()))?;
            let b = Array1::from(parse_row(k, line, d_out)?);
            layers.push(if bias {
                HypLinearLayer::new(&ball, w, b)?
            } else {
                HypLinearLayer::bias_free(w)?
            });
        }
        Self::new(ball, layers, nonlinearity)
    }
}

impl TransportMap for HnnModel {
    fn dim(&self) -> usize {
        self.d_in()
    }

    fn transport_unchecked(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.forward_unchecked(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_and_rotation() {
        let ball = PoincareBall::unit();
        let x = array![0.3, -0.4];
        let id = HypLinearLayer::new(&ball, Array2::eye(2), Array1::zeros(2)).unwrap();
        assert!((&id.forward(&ball, x.view()).unwrap() - &x)
            .iter()
            .all(|v| v.abs() < 1e-15));
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let q = array![[c, -s], [s, c]];
        let rot = HypLinearLayer::new(&ball, q.clone(), Array1::zeros(2)).unwrap();
        assert!((&rot.forward(&ball, x.view()).unwrap() - &q.dot(&x))
            .iter()
            .all(|v| v.abs() < 1e-15));
        assert!(rot.forward(&ball, array![0.1].view()).is_err());
        assert!(HypLinearLayer::new(&ball, Array2::eye(2), array![1.0, 0.5]).is_err());
    }

    #[test]
    fn layer_composes_public_operations() {
        let ball = PoincareBall::new(2.0).unwrap();
        let w = array![[0.5, -1.2, 0.3], [0.9, 0.1, -0.4]];
        let b = array![0.3, -0.8];
        let x = array![0.2, 0.5, -1.1];
        let layer = HypLinearLayer::new(&ball, w.clone(), b.clone()).unwrap();
        let m = ball.mobius_matrix_mul(w.view(), x.view()).unwrap();
        let expected = ball.mobius_add(b.view(), m.view()).unwrap();
        assert_eq!(layer.forward(&ball, x.view()).unwrap(), expected);
    }

    #[test]
    fn model_matches_manual_composition() {
        let ball = PoincareBall::unit();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut model =
            HnnModel::random(ball, &[3, 4, 2], Nonlinearity::Tanh, true, &mut rng).unwrap();
        model.layers_mut()[0].b = array![0.1, -0.2, 0.05, 0.3];
        let x = array![0.2, -0.1, 0.4];
        let h1 = model.layers()[0].forward(&ball, x.view()).unwrap();
        let u = ball.log0(h1.view()).mapv(f64::tanh);
        let a = ball.exp0(u.view());
        let expected = model.layers()[1].forward(&ball, a.view()).unwrap();
        assert!((&model.forward(x.view()).unwrap() - &expected)
            .iter()
            .all(|v| v.abs() < 1e-15));
        assert_eq!(
            model.forward_tape(x.view()).output(),
            model.forward(x.view()).unwrap()
        );
    }

    #[test]
    fn relu_is_identity_on_positive_tangent_coordinates() {
        let ball = PoincareBall::unit();
        let model = HnnModel::identity(ball, 2, true);
        let h = array![0.2, 0.3];
        let (a, _) = HnnModel {
            nonlinearity: Nonlinearity::Relu,
            ..model
        }
        .activate(h.view());
        assert!((&a - &h).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let ball = PoincareBall::new(1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for nl in [Nonlinearity::Tanh, Nonlinearity::Relu, Nonlinearity::None] {
            let mut model = HnnModel::random(ball, &[2, 3, 2], nl, true, &mut rng).unwrap();
            model.layers_mut()[0].b = array![0.2, -0.1, 0.3];
            model.layers_mut()[1].b = array![-0.3, 0.2];
            let x = array![0.4, -0.7];
            let y = array![-0.2, 0.5];
            let loss = |m: &HnnModel| ball.distance(m.forward(x.view()).unwrap().view(), y.view());
            let tape = model.forward_tape(x.view());
            let (g_out, _) = ball.distance_grad(tape.output(), y.view());
            let mut grads = model.zero_grads();
            model.backward(&tape, g_out.view(), &mut grads);
            let h = 1e-6;
            for (l, g) in grads.iter().enumerate() {
                let (r, c) = g.w.dim();
                for i in 0..r {
                    for j in 0..c {
                        let mut p = model.clone();
                        let mut m = model.clone();
                        p.layers[l].w[[i, j]] += h;
                        m.layers[l].w[[i, j]] -= h;
                        let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                        assert!((fd - g.w[[i, j]]).abs() < 1e-6, "{nl:?} W{l}[{i},{j}]");
                    }
                    let mut p = model.clone();
                    let mut m = model.clone();
                    p.layers[l].b[i] += h;
                    m.layers[l].b[i] -= h;
                    let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                    assert!((fd - g.b[i]).abs() < 1e-6, "{nl:?} b{l}[{i}]");
                }
            }
        }
    }

    #[test]
    fn euclidean_parity_at_large_radius() {
        let ball = PoincareBall::new(1e4).unwrap();
        let w = array![[1.2, -0.3], [0.4, 0.9]];
        let b = array![0.5, -0.2];
        let layer = HypLinearLayer::new(&ball, w.clone(), b.clone()).unwrap();
        let x = array![0.7, 0.3];
        let expected = w.dot(&x) + &b;
        let got = layer.forward(&ball, x.view()).unwrap();
        assert!((&got - &expected)
            .iter()
            .zip(expected.iter())
            .all(|(d, e)| d.abs() <= 1e-3 * e.abs()));
    }

    #[test]
    fn text_round_trip() {
        let ball = PoincareBall::new(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut model =
            HnnModel::random(ball, &[2, 3, 2], Nonlinearity::Relu, true, &mut rng).unwrap();
        model.layers_mut()[1].b = array![0.1 / 3.0, -0.7];
        let mut buf = Vec::new();
        model.write_text(&mut buf).unwrap();
        assert_eq!(HnnModel::read_text(buf.as_slice()).unwrap(), model);
        let free = HnnModel::identity(ball, 2, false);
        let mut buf = Vec::new();
        free.write_text(&mut buf).unwrap();
        assert_eq!(HnnModel::read_text(buf.as_slice()).unwrap(), free);
        assert!(
            HnnModel::read_text("hnn 1 relu 1 1.0 lorentz\nlayer 2 2\n1 0\n".as_bytes()).is_err()
        );
    }
}
