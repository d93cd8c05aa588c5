//! GeoGAN objective kernels over image tensors, their analytic gradients,
//! and a central-difference gradient checker.
//!
//! Every loss is a mean, reduced with a fixed pairwise summation tree so
//! results do not depend on thread count.

pub mod arch;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `height x width x channels` tensor, row-major with channels last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<ImageTensor> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Shape(format!("empty tensor {height}x{width}x{channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{}x{}x{} needs {} values, got {}",
                height,
                width,
                channels,
                height * width * channels,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value at element {i}")));
        }
        Ok(ImageTensor { height, width, channels, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<ImageTensor> {
        ImageTensor::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        f: impl FnMut(usize) -> f64,
    ) -> Result<ImageTensor> {
        ImageTensor::new(height, width, channels, (0..height * width * channels).map(f).collect())
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn with_data(&self, data: Vec<f64>) -> Result<ImageTensor> {
        ImageTensor::new(self.height, self.width, self.channels, data)
    }
}

const LEAF: usize = 64;
const PAR_MIN: usize = 1 << 15;

/// Pairwise (tree) sum with a fixed split pattern.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    if xs.len() >= PAR_MIN {
        let (x, y) = rayon::join(|| pairwise_sum(a), || pairwise_sum(b));
        x + y
    } else {
        pairwise_sum(a) + pairwise_sum(b)
    }
}

fn mean_of(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

fn same_shape(a: &ImageTensor, b: &ImageTensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("shape mismatch {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn nonempty(t: &ImageTensor) -> Result<()> {
    if t.is_empty() {
        return Err(Error::Empty("score map"));
    }
    Ok(())
}

/// `(d_loss, g_loss)` with `d_loss = mean((real - 1)^2) + mean(fake^2)` and
/// `g_loss = mean((fake - 1)^2)`.
pub fn lsgan_losses(real: &ImageTensor, fake: &ImageTensor) -> Result<(f64, f64)> {
    nonempty(real)?;
    nonempty(fake)?;
    let r: Vec<f64> = real.data.iter().map(|v| (v - 1.0).powi(2)).collect();
    let f: Vec<f64> = fake.data.iter().map(|v| v * v).collect();
    let g: Vec<f64> = fake.data.iter().map(|v| (v - 1.0).powi(2)).collect();
    Ok((mean_of(&r) + mean_of(&f), mean_of(&g)))
}

/// Gradients of `d_loss` with respect to real and fake scores, and of
/// `g_loss` with respect to fake scores.
pub fn lsgan_gradients(real: &ImageTensor, fake: &ImageTensor) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    nonempty(real)?;
    nonempty(fake)?;
    let (nr, nf) = (real.len() as f64, fake.len() as f64);
    Ok((
        real.data.iter().map(|v| 2.0 * (v - 1.0) / nr).collect(),
        fake.data.iter().map(|v| 2.0 * v / nf).collect(),
        fake.data.iter().map(|v| 2.0 * (v - 1.0) / nf).collect(),
    ))
}

/// Scale-invariant pairwise error: with `d = rough - generated` over all
/// `N` elements, `sum(d^2)/N - (sum d)^2/N^2`.
pub fn pmse_loss(rough: &ImageTensor, generated: &ImageTensor) -> Result<f64> {
    same_shape(rough, generated)?;
    let d: Vec<f64> = rough.data.iter().zip(&generated.data).map(|(a, b)| a - b).collect();
    let n = d.len() as f64;
    let sq: Vec<f64> = d.iter().map(|v| v * v).collect();
    let s = pairwise_sum(&d);
    Ok((pairwise_sum(&sq) / n - s * s / (n * n)).max(0.0))
}

/// Gradient of [`pmse_loss`] with respect to `generated`.
pub fn pmse_gradient(rough: &ImageTensor, generated: &ImageTensor) -> Result<Vec<f64>> {
    same_shape(rough, generated)?;
    let d: Vec<f64> = rough.data.iter().zip(&generated.data).map(|(a, b)| a - b).collect();
    let n = d.len() as f64;
    let mean = pairwise_sum(&d) / n;
    Ok(d.iter().map(|v| -2.0 * (v - mean) / n).collect())
}

fn check_tuples(a: &[&ImageTensor], b: &[&ImageTensor]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("tuple arity {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Empty("image tuple"));
    }
    for (x, y) in a.iter().zip(b) {
        same_shape(x, y)?;
    }
    Ok(a.iter().map(|t| t.len()).sum())
}

fn tuple_mean(a: &[&ImageTensor], b: &[&ImageTensor], f: impl Fn(f64) -> f64) -> Result<f64> {
    let n = check_tuples(a, b)?;
    let per: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let v: Vec<f64> = x.data.iter().zip(&y.data).map(|(p, q)| f(p - q)).collect();
            pairwise_sum(&v)
        })
        .collect();
    Ok(pairwise_sum(&per) / n as f64)
}

/// Which maps the reconstruction tuple carries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecArity {
    /// Segmentation, normal and depth.
    #[default]
    Geometric,
    /// The three geometric maps plus the rough image.
    WithRough,
}

impl RecArity {
    pub fn len(self) -> usize {
        match self {
            RecArity::Geometric => 3,
            RecArity::WithRough => 4,
        }
    }
}

/// Mean absolute difference over every element of every tuple member.
pub fn reconstruction_loss(reconstructed: &[&ImageTensor], target: &[&ImageTensor]) -> Result<f64> {
    tuple_mean(reconstructed, target, f64::abs)
}

/// Like [`reconstruction_loss`], also checking the tuple arity.
pub fn reconstruction_loss_with(
    arity: RecArity,
    reconstructed: &[&ImageTensor],
    target: &[&ImageTensor],
) -> Result<f64> {
    if reconstructed.len() != arity.len() {
        return Err(Error::Shape(format!(
            "{arity:?} reconstruction takes {} maps, got {}",
            arity.len(),
            reconstructed.len()
        )));
    }
    reconstruction_loss(reconstructed, target)
}

/// Subgradient of [`reconstruction_loss`] with respect to each reconstructed map (0 at ties).
pub fn reconstruction_gradient(reconstructed: &[&ImageTensor], target: &[&ImageTensor]) -> Result<Vec<Vec<f64>>> {
    let n = check_tuples(reconstructed, target)? as f64;
    Ok(reconstructed
        .iter()
        .zip(target)
        .map(|(x, y)| {
            x.data
                .iter()
                .zip(&y.data)
                .map(|(p, q)| {
                    let d = p - q;
                    if d > 0.0 {
                        1.0 / n
                    } else if d < 0.0 {
                        -1.0 / n
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect())
}

/// Mean squared difference over the concatenated (seg, normal, depth) maps.
pub fn geo_guided_loss(predicted: [&ImageTensor; 3], gt: [&ImageTensor; 3]) -> Result<f64> {
    tuple_mean(&predicted, &gt, |d| d * d)
}

/// Gradient of [`geo_guided_loss`] with respect to each predicted map.
pub fn geo_guided_gradient(predicted: [&ImageTensor; 3], gt: [&ImageTensor; 3]) -> Result<Vec<Vec<f64>>> {
    let n = check_tuples(&predicted, &gt)? as f64;
    Ok(predicted
        .iter()
        .zip(gt)
        .map(|(x, y)| x.data.iter().zip(&y.data).map(|(p, q)| 2.0 * (p - q) / n).collect())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub gan: f64,
    pub pmse: f64,
    pub rec: f64,
    pub geo: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            gan: 2.0,
            pmse: 5.0,
            rec: 10.0,
            geo: 3.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gan", self.gan), ("pmse", self.pmse), ("rec", self.rec), ("geo", self.geo)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!("loss weight {name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

pub fn total_objective(gan: f64, pmse: f64, rec: f64, geo: f64, w: &LossWeights) -> f64 {
    w.gan * gan + w.pmse * pmse + w.rec * rec + w.geo * geo
}

/// Largest relative disagreement between `gradient` and central differences
/// of `loss` at `x`. Components where both are below `1e-12` count as equal.
pub fn finite_diff_check(
    loss: impl Fn(&[f64]) -> Result<f64>,
    gradient: &[f64],
    x: &[f64],
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Validation("eps must be > 0".into()));
    }
    if gradient.len() != x.len() {
        return Err(Error::Shape(format!("gradient length {} vs {}", gradient.len(), x.len())));
    }
    let mut worst: f64 = 0.0;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let up = loss(&probe)?;
        probe[i] = x[i] - eps;
        let down = loss(&probe)?;
        probe[i] = x[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::Numeric(format!("non-finite loss near element {i}")));
        }
        let fd = (up - down) / (2.0 * eps);
        let scale = fd.abs().max(gradient[i].abs());
        if scale > 1e-12 {
            worst = worst.max((fd - gradient[i]).abs() / scale);
        }
    }
    Ok(worst)
}
