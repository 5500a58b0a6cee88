//! Derivative integrity report: MLP backprop and trainable-dictionary input
//! derivatives against central finite differences.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::neural::{gradient_check, Activation, Mlp};
use crate::rng::{stream_rng, Stream};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;
/// Probe inputs are redrawn until every ReLU pre-activation is at least this
/// far from the kink, so no finite-difference stencil straddles it.
const KINK_MARGIN: f64 = 1e-3;

/// Architectures probed by default: shallow, deep and ReLU.
pub fn default_architectures() -> Vec<(Vec<usize>, Activation)> {
    vec![
        (vec![2, 8, 3], Activation::Tanh),
        (vec![4, 16, 16, 2], Activation::Tanh),
        (vec![3, 10, 10, 10, 1], Activation::Relu),
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct ArchitectureReport {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub backprop_max_rel_error: f64,
    /// Trainable dictionary on a tanh network of the same shape (second
    /// derivatives need a smooth activation).
    pub dictionary_gradient_error: f64,
    pub dictionary_hessian_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub seeds: u64,
    pub tolerance: f64,
    pub architectures: Vec<ArchitectureReport>,
    pub max_rel_error: f64,
    pub passed: bool,
}

fn probe_input<R: Rng + ?Sized>(net: &Mlp, rng: &mut R) -> Result<DMatrix<f64>> {
    for _ in 0..1000 {
        let input = DMatrix::from_fn(5, net.input_dim(), |_, _| rng.random_range(-1.5..1.5));
        if net.activation() != Activation::Relu || net.min_hidden_preactivation(&input)? > KINK_MARGIN {
            return Ok(input);
        }
    }
    Err(Error::InvalidInput("no probe input keeps clear of every ReLU kink".into()))
}

pub fn run_gradcheck(seeds: u64) -> Result<GradcheckReport> {
    let mut archs = Vec::new();
    for (sizes, act) in default_architectures() {
        let mut rep = ArchitectureReport {
            layer_sizes: sizes.clone(),
            activation: act,
            backprop_max_rel_error: 0.0,
            dictionary_gradient_error: 0.0,
            dictionary_hessian_error: 0.0,
        };
        for seed in 0..seeds {
            let mut rng = stream_rng(seed, Stream::Init, 100);
            let net = Mlp::new(&sizes, act, &mut rng)?;
            let input = probe_input(&net, &mut rng)?;
            rep.backprop_max_rel_error = rep.backprop_max_rel_error.max(gradient_check(&net, &input, FD_STEP, &mut rng)?);

            let smooth = Mlp::new(&sizes, Activation::Tanh, &mut rng)?;
            let dict = Dictionary::trainable(smooth, true);
            let point: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d = dict.derivative_check(&point, GRADCHECK_TOLERANCE)?;
            rep.dictionary_gradient_error = rep.dictionary_gradient_error.max(d.gradient_error);
            rep.dictionary_hessian_error = rep.dictionary_hessian_error.max(d.hessian_error);
        }
        archs.push(rep);
    }
    let max_rel_error = archs
        .iter()
        .map(|a| a.backprop_max_rel_error.max(a.dictionary_gradient_error).max(a.dictionary_hessian_error))
        .fold(0.0, f64::max);
    Ok(GradcheckReport {
        seeds,
        tolerance: GRADCHECK_TOLERANCE,
        architectures: archs,
        max_rel_error,
        passed: max_rel_error < GRADCHECK_TOLERANCE,
    })
}
