//! Layer-size descriptor shared by both network roles.

use serde::{Deserialize, Serialize};

use super::NetError;

/// Widths of every stage. The checkpoint stores this as a flat u32 list,
/// so two processes agree on blob sizes without any out-of-band contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetArch {
    /// Per-point MLP widths, starting at 3.
    pub enc: Vec<usize>,
    /// Pose embedding widths, starting at 9.
    pub pose: Vec<usize>,
    /// Number of frozen Fourier frequencies (feature width is twice this).
    pub time_freqs: usize,
    /// Width of the trained time projection.
    pub time_embed: usize,
    /// Trunk width after fusing condition, pose, and time features.
    pub trunk_hidden: usize,
    /// Hidden width inside each of the three heads.
    pub head_hidden: usize,
}

impl Default for NetArch {
    fn default() -> Self {
        Self {
            enc: vec![3, 64, 128, 256],
            pose: vec![9, 64, 128],
            time_freqs: 64,
            time_embed: 128,
            trunk_hidden: 192,
            head_hidden: 96,
        }
    }
}

impl NetArch {
    /// Small variant for gradient audits and doc examples.
    pub fn tiny() -> Self {
        Self {
            enc: vec![3, 8, 12],
            pose: vec![9, 8],
            time_freqs: 4,
            time_embed: 8,
            trunk_hidden: 16,
            head_hidden: 8,
        }
    }

    /// Narrow variant without wasted encoder width, for fixed-condition toys.
    pub fn toy() -> Self {
        Self {
            enc: vec![3, 8, 16],
            pose: vec![9, 64, 96],
            time_freqs: 32,
            time_embed: 64,
            trunk_hidden: 96,
            head_hidden: 64,
        }
    }

    pub fn feature_dim(&self) -> usize {
        *self.enc.last().expect("encoder has layers")
    }

    pub fn pose_dim(&self) -> usize {
        *self.pose.last().expect("pose stack has layers")
    }

    pub fn fused_dim(&self) -> usize {
        self.feature_dim() + self.pose_dim() + self.time_embed
    }

    /// `(in, out)` of every trained layer in checkpoint declaration order.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        for w in self.enc.windows(2) {
            dims.push((w[0], w[1]));
        }
        for w in self.pose.windows(2) {
            dims.push((w[0], w[1]));
        }
        dims.push((2 * self.time_freqs, self.time_embed));
        dims.push((self.fused_dim(), self.trunk_hidden));
        for _ in 0..3 {
            dims.push((self.trunk_hidden, self.head_hidden));
            dims.push((self.head_hidden, 3));
        }
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let ok = self.enc.len() >= 2
            && self.enc[0] == 3
            && self.pose.len() >= 2
            && self.pose[0] == 9
            && self.time_freqs > 0
            && self.time_embed > 0
            && self.trunk_hidden > 0
            && self.head_hidden > 0;
        if !ok {
            return Err(NetError::BadLayout("architecture descriptor invalid"));
        }
        Ok(())
    }

    pub fn to_descriptor(&self) -> Vec<u32> {
        let mut d = vec![self.enc.len() as u32];
        d.extend(self.enc.iter().map(|&x| x as u32));
        d.push(self.pose.len() as u32);
        d.extend(self.pose.iter().map(|&x| x as u32));
        d.push(self.time_freqs as u32);
        d.push(self.time_embed as u32);
        d.push(self.trunk_hidden as u32);
        d.push(self.head_hidden as u32);
        d
    }

    pub fn from_descriptor(d: &[u32]) -> Result<Self, NetError> {
        let mut it = d.iter().copied().map(|x| x as usize);
        let mut take = |what| it.next().ok_or(NetError::BadLayout(what));
        let ne = take("enc length")?;
        let mut enc = Vec::with_capacity(ne);
        for _ in 0..ne {
            enc.push(take("enc width")?);
        }
        let np = take("pose length")?;
        let mut pose = Vec::with_capacity(np);
        for _ in 0..np {
            pose.push(take("pose width")?);
        }
        let arch = Self {
            enc,
            pose,
            time_freqs: take("time_freqs")?,
            time_embed: take("time_embed")?,
            trunk_hidden: take("trunk_hidden")?,
            head_hidden: take("head_hidden")?,
        };
        arch.validate()?;
        Ok(arch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_round_trip() {
        for arch in [NetArch::default(), NetArch::tiny(), NetArch::toy()] {
            let d = arch.to_descriptor();
            assert_eq!(NetArch::from_descriptor(&d).unwrap(), arch);
        }
    }

    #[test]
    fn default_layer_plan() {
        let arch = NetArch::default();
        let dims = arch.layer_dims();
        assert_eq!(dims.len(), 3 + 2 + 1 + 1 + 6);
        assert_eq!(dims[0], (3, 64));
        assert_eq!(dims[5], (128, 128)); // time projection
        assert_eq!(dims[6], (512, 192)); // trunk
        assert_eq!(dims[8], (96, 3)); // first head output layer
        assert!(arch.param_count() > 0);
    }

    #[test]
    fn invalid_descriptors_rejected() {
        assert!(NetArch::from_descriptor(&[]).is_err());
        // wrong input width for the encoder
        let mut bad = NetArch::default();
        bad.enc[0] = 4;
        assert!(NetArch::from_descriptor(&bad.to_descriptor()).is_err());
    }
}
