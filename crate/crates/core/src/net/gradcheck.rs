//! Central finite-difference check of the analytic loss gradients.

use rand::seq::index::sample;
use rand::{Rng, RngCore};

use super::{loss_and_gradients_into, Gradients, LossKind, LossWorkspace, Network};
use crate::geometry::ActionIndex;

const STEP: f64 = 1e-6;
/// Hidden pre-activations closer than this to zero count as sitting on a kink.
const KINK_MARGIN: f64 = 1e-4;
const NUDGE: f64 = 1e-3;
const MAX_NUDGES: usize = 10_000;
/// Gradient magnitudes below this are compared absolutely.
const SCALE_FLOOR: f64 = 1e-6;
const BATCH: usize = 16;
const CHECKED_PARAMS: usize = 100;

/// A frozen batch used by [`check_gradients`].
#[derive(Debug, Clone)]
pub struct GradCheckBatch {
    pub inputs: Vec<f64>,
    pub actions: Vec<ActionIndex>,
    pub targets: Vec<f64>,
}

impl GradCheckBatch {
    pub fn random(net: &Network, rng: &mut dyn RngCore) -> Self {
        let n = net.input_len();
        let inputs = (0..BATCH * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let actions = (0..BATCH)
            .map(|_| ActionIndex::new(rng.random_range(0..net.output_len().min(8))).unwrap())
            .collect();
        let targets = (0..BATCH).map(|_| rng.random_range(-1.0..1.0)).collect();
        GradCheckBatch {
            inputs,
            actions,
            targets,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Moves each sample's input until no hidden unit sits within the kink
    /// margin, so that `±STEP` perturbations never cross a rectifier corner.
    pub fn nudge_off_kinks(&mut self, net: &Network, rng: &mut dyn RngCore) {
        let n = net.input_len();
        for row in self.inputs.chunks_exact_mut(n) {
            for _ in 0..MAX_NUDGES {
                if min_hidden_preactivation(net, row) >= KINK_MARGIN {
                    break;
                }
                for x in row.iter_mut() {
                    *x += NUDGE * rng.random_range(-1.0..1.0);
                }
            }
        }
    }

    fn loss(&self, net: &Network, ws: &mut LossWorkspace, grads: &mut Gradients) -> f64 {
        loss_and_gradients_into(
            net,
            &self.inputs,
            &self.actions,
            &self.targets,
            LossKind::Mse,
            ws,
            grads,
        )
        .expect("grad-check batch is well formed")
    }
}

fn min_hidden_preactivation(net: &Network, input: &[f64]) -> f64 {
    let mut a = input.to_vec();
    let mut min = f64::INFINITY;
    for l in 0..net.num_layers() - 1 {
        let s = net.spans[l];
        let mut z: Vec<f64> = (0..s.n_out).map(|j| net.bias(l, j)).collect();
        for (i, &x) in a.iter().enumerate() {
            for (j, zj) in z.iter_mut().enumerate() {
                *zj += x * net.weight(l, j, i);
            }
        }
        min = z.iter().fold(min, |m, v| m.min(v.abs()));
        a = z.into_iter().map(|v| v.max(0.0)).collect();
    }
    min
}

/// Worst relative error between `analytic` and central differences of the
/// batch loss over the parameter indices in `params`.
pub fn check_gradients(
    net: &Network,
    batch: &GradCheckBatch,
    analytic: &Gradients,
    params: &[usize],
) -> f64 {
    let mut probe = net.clone();
    let mut ws = LossWorkspace::default();
    let mut scratch = Gradients::zeros_like(net);
    let mut worst = 0.0f64;
    for &p in params {
        let orig = probe.params[p];
        probe.params[p] = orig + STEP;
        let plus = batch.loss(&probe, &mut ws, &mut scratch);
        probe.params[p] = orig - STEP;
        let minus = batch.loss(&probe, &mut ws, &mut scratch);
        probe.params[p] = orig;
        let numeric = (plus - minus) / (2.0 * STEP);
        let a = analytic.values[p];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(SCALE_FLOOR);
        worst = worst.max(err);
    }
    worst
}

/// Checks analytic gradients of `net` on a random batch against central
/// finite differences over 100 random parameters; returns the worst relative
/// error.
pub fn gradient_check(net: &Network, rng: &mut dyn RngCore) -> f64 {
    let mut batch = GradCheckBatch::random(net, rng);
    batch.nudge_off_kinks(net, rng);
    let mut grads = Gradients::zeros_like(net);
    let mut ws = LossWorkspace::default();
    batch.loss(net, &mut ws, &mut grads);
    let count = CHECKED_PARAMS.min(net.num_params());
    let params = sample(rng, net.num_params(), count).into_vec();
    check_gradients(net, &batch, &grads, &params)
}

/// Runs [`gradient_check`] on `nets` freshly initialized networks whose
/// biases are jittered off zero. Returns one worst error per network.
pub fn gradient_check_nets(seed: u64, nets: usize) -> Vec<f64> {
    let mut rng = crate::learner::stream_rng(seed, crate::learner::streams::NET_INIT);
    (0..nets)
        .map(|_| {
            let mut net = super::init_network(rng.random());
            for l in 0..net.num_layers() {
                for o in 0..net.arch()[l + 1] {
                    net.set_bias(l, o, rng.random_range(-0.1..0.1));
                }
            }
            gradient_check(&net, &mut rng)
        })
        .collect()
}
