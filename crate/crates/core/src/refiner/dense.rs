use ndarray::{Array1, Array2, Axis};
use rand::Rng;

/// Fully connected layer `y = x W + b` with `W: in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Array2::zeros((input, output)),
            b: Array1::zeros(output),
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            w: Array2::from_shape_simple_fn((input, output), || rng.random_range(-bound..bound)),
            b: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Accumulates `dW, db` into `grad` and returns `dx`.
    pub fn backward(&self, x: &Array2<f64>, d_y: &Array2<f64>, grad: &mut Dense) -> Array2<f64> {
        grad.w += &x.t().dot(d_y);
        grad.b += &d_y.sum_axis(Axis(0));
        d_y.dot(&self.w.t())
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// `d_y` masked by the ReLU derivative at `pre`.
pub fn relu_backward(pre: &Array2<f64>, d_y: &Array2<f64>) -> Array2<f64> {
    let mut out = d_y.clone();
    out.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0
        }
    });
    out
}
