//! Binary checkpoint format.
//!
//! Layout, all little-endian:
//!   magic `GPDM` | version u32 | role u8 | descriptor len u32 +
//!   descriptor u32s | master seed u64 | fourier count u32 + f64s |
//!   weight-blob f32 count u64 | per-layer f32 blobs (w then b) in
//!   declaration order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autodiff::Tensor;

use super::params::Layer;
use super::{NetArch, NetError, NetParams, Role};

const MAGIC: &[u8; 4] = b"GPDM";
const VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, params: &NetParams) -> Result<(), NetError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[params.role.as_byte()])?;
    let desc = params.arch.to_descriptor();
    w.write_all(&(desc.len() as u32).to_le_bytes())?;
    for d in &desc {
        w.write_all(&d.to_le_bytes())?;
    }
    w.write_all(&params.master_seed.to_le_bytes())?;
    w.write_all(&(params.fourier_freqs.len() as u32).to_le_bytes())?;
    for f in &params.fourier_freqs {
        w.write_all(&f.to_le_bytes())?;
    }
    let total: u64 = params
        .layers
        .iter()
        .map(|l| (l.w.data.len() + l.b.data.len()) as u64)
        .sum();
    w.write_all(&total.to_le_bytes())?;
    for layer in &params.layers {
        for blob in [&layer.w, &layer.b] {
            for &v in &blob.data {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<NetParams, NetError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NetError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NetError::BadVersion(version));
    }
    let mut role_byte = [0u8; 1];
    r.read_exact(&mut role_byte)?;
    let role = Role::from_byte(role_byte[0]).ok_or(NetError::BadLayout("unknown role byte"))?;
    let desc_len = read_u32(&mut r)? as usize;
    let mut desc = Vec::with_capacity(desc_len);
    for _ in 0..desc_len {
        desc.push(read_u32(&mut r)?);
    }
    let arch = NetArch::from_descriptor(&desc)?;
    let mut seed = [0u8; 8];
    r.read_exact(&mut seed)?;
    let master_seed = u64::from_le_bytes(seed);
    let n_freqs = read_u32(&mut r)? as usize;
    if n_freqs != arch.time_freqs {
        return Err(NetError::BadLayout("fourier count disagrees with descriptor"));
    }
    let mut fourier_freqs = Vec::with_capacity(n_freqs);
    for _ in 0..n_freqs {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        fourier_freqs.push(f64::from_le_bytes(b));
    }
    let mut total = [0u8; 8];
    r.read_exact(&mut total)?;
    let total = u64::from_le_bytes(total);
    if total != arch.param_count() as u64 {
        return Err(NetError::BadLayout("weight blob size disagrees with descriptor"));
    }
    let mut layers = Vec::new();
    for (fan_in, fan_out) in arch.layer_dims() {
        let w = read_blob(&mut r, fan_in, fan_out)?;
        let b = read_blob(&mut r, 1, fan_out)?;
        layers.push(Layer { w, b });
    }
    // trailing bytes would mean a corrupt writer
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(NetError::BadLayout("trailing bytes after weight blobs"));
    }
    Ok(NetParams { arch, role, master_seed, fourier_freqs, layers })
}

fn read_u32(r: &mut impl Read) -> Result<u32, NetError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_blob(r: &mut impl Read, rows: usize, cols: usize) -> Result<Tensor, NetError> {
    let mut data = Vec::with_capacity(rows * cols);
    let mut buf = [0u8; 4];
    for _ in 0..rows * cols {
        r.read_exact(&mut buf)?;
        data.push(f32::from_le_bytes(buf) as f64);
    }
    Ok(Tensor::from_vec(rows, cols, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::forward::{encode_pointcloud, score_forward};
    use crate::net::{init_params, PointCloud};
    use crate::sde::NoiseSchedule;
    use rand::Rng;

    #[test]
    fn round_trip_reproduces_forward_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("score.gpdm");
        let mut params = init_params(&NetArch::tiny(), Role::Score, 77);
        // nonzero heads so outputs are informative
        let n = params.layers.len();
        let mut rng = crate::seedstream::SeedStream::new(78).stream(0);
        for l in &mut params.layers[n - 6..] {
            l.w = Tensor::randn(l.w.rows, l.w.cols, 0.05, &mut rng);
            super::super::params::quantize_f32(&mut l.w);
        }
        save_checkpoint(&path, &params).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.role, Role::Score);
        assert_eq!(loaded.arch, params.arch);
        assert_eq!(loaded.master_seed, params.master_seed);
        let cloud = PointCloud::new(
            (0..24)
                .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap();
        let sched = NoiseSchedule::default();
        let pose: [f64; 9] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let a = {
            let cond = encode_pointcloud(&params, &cloud).unwrap();
            score_forward(&params, &sched, &pose, 0.3, &cond).unwrap()
        };
        let b = {
            let cond = encode_pointcloud(&loaded, &cloud).unwrap();
            score_forward(&loaded, &sched, &pose, 0.3, &cond).unwrap()
        };
        assert_eq!(a, b, "forward must survive a save/load round trip bitwise");
    }

    #[test]
    fn loader_rejects_bad_magic_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.gpdm");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(NetError::BadMagic)));
        let params = init_params(&NetArch::tiny(), Role::Energy, 1);
        save_checkpoint(&path, &params).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 99; // version
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(NetError::BadVersion(99))));
    }

    #[test]
    fn loader_rejects_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.gpdm");
        let params = init_params(&NetArch::tiny(), Role::Score, 2);
        save_checkpoint(&path, &params).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
