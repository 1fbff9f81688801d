//! Finite-difference audit of every trainable model's gradients.

use ndarray::Array2;
use rand::Rng;

use crate::dataset::{NormMeta, TARGET_FLOOR};
use crate::error::Result;
use crate::models::{CnnBaseline, DeepONet, FcnBaseline};
use crate::nn::{check_gradients, mean_l2_relative_error, mean_l2_relative_error_grad, mse, mse_grad, GradCheckReport};
use crate::rng::{stream, Domain};

pub const AUDIT_STEP: f64 = 1e-5;
pub const AUDIT_TOLERANCE: f64 = 1e-4;

fn identity_norm(m: usize) -> NormMeta {
    NormMeta {
        sensor_mean: vec![0.0; m],
        sensor_std: vec![1.0; m],
        target_floor: TARGET_FLOOR,
        target_mean: 0.0,
        target_std: 1.0,
        coord_min: [-1.0, -1.0],
        coord_max: [1.0, 1.0],
    }
}

fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

/// Check branch, trunk, full DeepONet, FCN and CNN with `probes` random
/// parameter entries each, on random batches with `m` sensors.
pub fn gradient_audit(m: usize, probes: usize, seed: u64) -> Result<Vec<(&'static str, GradCheckReport)>> {
    let mut rng = stream(seed, Domain::Probe, 0, 0);
    let norm = identity_norm(m);
    let (functions, per) = (3, 5);
    let branch_in = uniform(&mut rng, functions, m, 1.0);
    let coords = uniform(&mut rng, functions * per, 2, 1.0);
    let groups: Vec<usize> = (0..functions * per).map(|i| i / per).collect();
    let targets: Vec<f64> = (0..functions * per).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut out = Vec::new();

    let mut net = DeepONet::init(norm.clone(), &mut stream(seed, Domain::Init, 0, 0))?;
    // Sub-network checks use a fixed random readout of the output features.
    let readout_b = uniform(&mut rng, functions, net.latent_width(), 1.0);
    let (_, bc) = net.branch.forward(&branch_in)?;
    let (g, _) = net.branch.backward(&bc, &readout_b)?;
    let loss = |p: &crate::nn::MLPParams| (p.predict(&branch_in).unwrap() * &readout_b).sum();
    out.push(("branch", check_gradients(&mut net.branch, loss, &g, probes, AUDIT_STEP, &mut rng)?));

    let readout_t = uniform(&mut rng, coords.nrows(), net.latent_width(), 1.0);
    let (_, tc) = net.trunk.forward(&coords)?;
    let (g, _) = net.trunk.backward(&tc, &readout_t)?;
    let loss = |p: &crate::nn::MLPParams| (p.predict(&coords).unwrap() * &readout_t).sum();
    out.push(("trunk", check_gradients(&mut net.trunk, loss, &g, probes, AUDIT_STEP, &mut rng)?));

    fn l2<'a>(pred: &'a [f64], targets: &'a [f64], per: usize) -> (Vec<&'a [f64]>, Vec<&'a [f64]>) {
        (pred.chunks(per).collect(), targets.chunks(per).collect())
    }
    let (pred, cache) = net.forward_batch(&branch_in, &coords, &groups)?;
    let (p, t) = l2(&pred, &targets, per);
    let (_, dp) = mean_l2_relative_error_grad(&p, &t)?;
    let g = net.backward_batch(&cache, &dp.concat())?;
    let loss = |n: &DeepONet| {
        let pred = n.forward_batch(&branch_in, &coords, &groups).unwrap().0;
        let (p, t) = l2(&pred, &targets, per);
        mean_l2_relative_error(&p, &t).unwrap()
    };
    out.push(("deeponet", check_gradients(&mut net, loss, &g, probes, AUDIT_STEP, &mut rng)?));

    let mut fcn = FcnBaseline::init(norm.clone(), 0, &mut stream(seed, Domain::Init, 1, 0))?;
    let (o, fc) = fcn.net.forward(&coords)?;
    let (_, d) = mse_grad(o.as_slice().unwrap(), &targets)?;
    let (g, _) = fcn.net.backward(&fc, &Array2::from_shape_vec((d.len(), 1), d).unwrap())?;
    let loss = |f: &FcnBaseline| mse(f.net.predict(&coords).unwrap().as_slice().unwrap(), &targets).unwrap();
    out.push(("fcn", check_gradients(&mut fcn, loss, &g, probes, AUDIT_STEP, &mut rng)?));

    let mut cnn = CnnBaseline::init(norm, &mut stream(seed, Domain::Init, 2, 0))?;
    let (pred, cc) = cnn.forward_batch(&branch_in, &coords, &groups)?;
    let (_, d) = mse_grad(&pred, &targets)?;
    let g = cnn.backward_batch(&cc, &d)?;
    let loss = |c: &CnnBaseline| mse(&c.forward_batch(&branch_in, &coords, &groups).unwrap().0, &targets).unwrap();
    out.push(("cnn", check_gradients(&mut cnn, loss, &g, probes, AUDIT_STEP, &mut rng)?));
    Ok(out)
}
