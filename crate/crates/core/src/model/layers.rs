//! Dense layers with explicit forward caches and accumulated gradients.

use rand::Rng;

/// `y = W x + b`, weights row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform(-s, s) with `s = 1 / sqrt(fan_in)` for weights and biases.
    pub fn init(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let s = 1.0 / (inputs as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-s..s)).collect::<Vec<_>>();
        let weight = draw(inputs * outputs);
        let bias = draw(outputs);
        Linear {
            inputs,
            outputs,
            weight,
            bias,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        self.weight
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, v)| acc + w * v))
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and, when requested, adds
    /// the input gradient into `dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear, dx: Option<&mut [f64]>) {
        for (o, &g) in dy.iter().enumerate() {
            grad.bias[o] += g;
            let row = &mut grad.weight[o * self.inputs..(o + 1) * self.inputs];
            for (w, v) in row.iter_mut().zip(x) {
                *w += g * v;
            }
        }
        if let Some(dx) = dx {
            for (o, &g) in dy.iter().enumerate() {
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                for (d, w) in dx.iter_mut().zip(row) {
                    *d += w * g;
                }
            }
        }
    }
}

/// Two-layer perceptron `W2 tanh(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    pub input: Vec<f64>,
    pub activation: Vec<f64>,
}

impl Mlp {
    pub fn init(inputs: usize, hidden: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Mlp {
            hidden: Linear::init(inputs, hidden, rng),
            output: Linear::init(hidden, outputs, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            hidden: Linear::zeros(self.hidden.inputs, self.hidden.outputs),
            output: Linear::zeros(self.output.inputs, self.output.outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.hidden.inputs
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        let activation: Vec<f64> = self.hidden.forward(x).into_iter().map(f64::tanh).collect();
        let y = self.output.forward(&activation);
        (
            y,
            MlpCache {
                input: x.to_vec(),
                activation,
            },
        )
    }

    pub fn backward(&self, cache: &MlpCache, dy: &[f64], grad: &mut Mlp, dx: Option<&mut [f64]>) {
        let mut da = vec![0.0; self.hidden.outputs];
        self.output
            .backward(&cache.activation, dy, &mut grad.output, Some(&mut da));
        for (d, a) in da.iter_mut().zip(&cache.activation) {
            *d *= 1.0 - a * a;
        }
        self.hidden
            .backward(&cache.input, &da, &mut grad.hidden, dx);
    }
}
