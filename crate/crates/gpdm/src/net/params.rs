//! Parameter storage and initialization.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Graph, Tensor, Var};
use crate::seedstream::{Domain, SeedStream};

use super::NetArch;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Score,
    Energy,
}

impl Role {
    pub fn as_byte(self) -> u8 {
        match self {
            Role::Score => 0,
            Role::Energy => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Role::Score),
            1 => Some(Role::Energy),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub w: Tensor,
    pub b: Tensor,
}

/// All trained state plus the frozen Fourier frequencies.
///
/// Parameter values are kept on the f32 grid (stored as f64): checkpoints
/// serialize 32-bit blobs, and quantizing at every update makes a
/// save/load round trip reproduce forward passes bitwise.
#[derive(Debug, Clone)]
pub struct NetParams {
    pub arch: NetArch,
    pub role: Role,
    pub master_seed: u64,
    pub fourier_freqs: Vec<f64>,
    pub layers: Vec<Layer>,
}

/// Snaps every parameter onto the f32 grid.
pub(crate) fn quantize_f32(t: &mut Tensor) {
    for v in &mut t.data {
        *v = *v as f32 as f64;
    }
}

/// He-style initialization; the final layer of each head starts at zero so
/// the initial score field is identically zero.
pub fn init_params(arch: &NetArch, role: Role, master_seed: u64) -> NetParams {
    arch.validate().expect("valid architecture");
    let seeds = SeedStream::new(master_seed);
    let mut rng = seeds.domain_stream(Domain::TrainInit, role.as_byte() as u64);
    let fourier_freqs: Vec<f64> = (0..arch.time_freqs)
        .map(|_| 16.0 * rng.sample::<f64, _>(StandardNormal) as f32 as f64)
        .collect();
    let dims = arch.layer_dims();
    let n_layers = dims.len();
    let layers = dims
        .into_iter()
        .enumerate()
        .map(|(idx, (fan_in, fan_out))| {
            // Head output layers are the last six entries at odd offsets.
            let is_head_out = idx >= n_layers - 6 && (n_layers - 1 - idx) % 2 == 0;
            let std = if is_head_out { 0.0 } else { (2.0 / fan_in as f64).sqrt() };
            let mut w = Tensor::randn(fan_in, fan_out, std, &mut rng);
            let mut b = Tensor::zeros(1, fan_out);
            quantize_f32(&mut w);
            quantize_f32(&mut b);
            Layer { w, b }
        })
        .collect();
    NetParams { arch: arch.clone(), role, master_seed, fourier_freqs, layers }
}

/// Layer handles inside a graph, in declaration order.
pub(crate) struct NetVars {
    pub layers: Vec<(Var, Var)>,
}

impl NetParams {
    /// Inserts every layer into `g`; `trainable` decides leaf vs constant.
    pub(crate) fn insert(&self, g: &mut Graph, trainable: bool) -> NetVars {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                if trainable {
                    (g.leaf(l.w.clone()), g.leaf(l.b.clone()))
                } else {
                    (g.constant(l.w.clone()), g.constant(l.b.clone()))
                }
            })
            .collect();
        NetVars { layers }
    }

    /// Slice indices of the per-stage layers inside `layers`.
    pub(crate) fn stage_offsets(&self) -> StageOffsets {
        let n_enc = self.arch.enc.len() - 1;
        let n_pose = self.arch.pose.len() - 1;
        StageOffsets {
            enc: 0..n_enc,
            pose: n_enc..n_enc + n_pose,
            time: n_enc + n_pose,
            trunk: n_enc + n_pose + 1,
            heads: n_enc + n_pose + 2,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.is_finite() && l.b.is_finite())
    }

    pub fn param_count(&self) -> usize {
        self.arch.param_count()
    }
}

pub(crate) struct StageOffsets {
    pub enc: std::ops::Range<usize>,
    pub pose: std::ops::Range<usize>,
    pub time: usize,
    pub trunk: usize,
    /// Six layers: (hidden, out) for Rx, Ry, T.
    pub heads: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_quantized() {
        let a = init_params(&NetArch::tiny(), Role::Score, 9);
        let b = init_params(&NetArch::tiny(), Role::Score, 9);
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            assert_eq!(la.w.data, lb.w.data);
        }
        for l in &a.layers {
            for &v in &l.w.data {
                assert_eq!(v, v as f32 as f64);
            }
        }
        let c = init_params(&NetArch::tiny(), Role::Score, 10);
        assert_ne!(a.layers[0].w.data, c.layers[0].w.data);
    }

    #[test]
    fn head_output_layers_start_at_zero() {
        let p = init_params(&NetArch::default(), Role::Score, 1);
        let n = p.layers.len();
        for head in 0..3 {
            let out_layer = &p.layers[n - 6 + head * 2 + 1];
            assert!(out_layer.w.data.iter().all(|&x| x == 0.0));
            assert!(out_layer.b.data.iter().all(|&x| x == 0.0));
        }
        // hidden layers are not zero
        assert!(p.layers[0].w.data.iter().any(|&x| x != 0.0));
    }
}
