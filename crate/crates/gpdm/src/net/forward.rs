//! Forward passes: a plain tensor path for inference and a taped path for
//! anything that needs gradients. Both apply operations in the same order,
//! so their outputs agree bitwise (asserted in tests).

use crate::autodiff::{Graph, Tensor, Var};
use crate::sde::NoiseSchedule;

use super::params::{Layer, NetVars};
use super::{NetError, NetParams, PointCloud};

/// Encoded point-cloud condition (or zeros for a free/fixed condition).
#[derive(Debug, Clone, PartialEq)]
pub struct CondFeature(pub Vec<f64>);

impl CondFeature {
    pub fn free(params: &NetParams) -> Self {
        Self(vec![0.0; params.arch.feature_dim()])
    }
}

/// Fourier time features `[sin(2 pi f_i t) .. | cos(2 pi f_i t) ..]`.
pub(crate) fn rff_features(freqs: &[f64], ts: &[f64]) -> Tensor {
    let f = freqs.len();
    let mut out = Tensor::zeros(ts.len(), 2 * f);
    for (r, &t) in ts.iter().enumerate() {
        for (i, &fr) in freqs.iter().enumerate() {
            let angle = 2.0 * std::f64::consts::PI * fr * t;
            out.set(r, i, angle.sin());
            out.set(r, f + i, angle.cos());
        }
    }
    out
}

/// Fixed per-row output gate `sigma / (1 + sigma)`.
///
/// The raw head still predicts `-z`; the gate only moves the burden of the
/// four-decade sigma range off the trained weights, so the pre-gate
/// function stays O(1) and nearly t-free at small noise, where dividing by
/// sigma(t) would otherwise amplify an absolute fitting floor.
pub(crate) fn out_gate(sigma: f64) -> f64 {
    sigma / (1.0 + sigma)
}

fn linear_plain(x: &Tensor, l: &Layer, activate: bool) -> Tensor {
    let z = x.matmul(&l.w);
    let mut out = Tensor::zeros(z.rows, z.cols);
    for r in 0..z.rows {
        for c in 0..z.cols {
            out.set(r, c, z.get(r, c) + l.b.data[c]);
        }
    }
    if activate {
        // silu, phrased exactly like the graph: x * sigmoid(x)
        out.map(|x| x * (1.0 / (1.0 + (-x).exp())))
    } else {
        out
    }
}

fn max_pool_plain(x: &Tensor, groups: usize) -> Tensor {
    let seg = x.rows / groups;
    let mut out = Tensor::zeros(groups, x.cols);
    for g in 0..groups {
        let base = g * seg;
        for c in 0..x.cols {
            let mut best = x.get(base, c);
            for r in base + 1..base + seg {
                best = best.max(x.get(r, c));
            }
            out.set(g, c, best);
        }
    }
    out
}

/// Encodes stacked clouds `(scenes * n) x 3` into `scenes x feat`.
pub(crate) fn encode_plain(params: &NetParams, stacked: &Tensor, scenes: usize) -> Tensor {
    let off = params.stage_offsets();
    let mut h = stacked.clone();
    for i in off.enc {
        h = linear_plain(&h, &params.layers[i], true);
    }
    max_pool_plain(&h, scenes)
}

/// Graph twin of [`encode_plain`].
pub(crate) fn encode_graph(
    g: &mut Graph,
    params: &NetParams,
    vars: &NetVars,
    stacked: Var,
    scenes: usize,
) -> Var {
    let off = params.stage_offsets();
    let mut h = stacked;
    for i in off.enc {
        let (w, b) = vars.layers[i];
        h = g.linear(h, w, b, true);
    }
    g.max_pool_rows(h, scenes)
}

/// Raw 9-vector body on the plain path: `poses` is B x 9, `time_feat`
/// B x 2F, `cond` B x feat, `gates` the per-row output gate.
pub(crate) fn body_plain(
    params: &NetParams,
    poses: &Tensor,
    time_feat: &Tensor,
    cond: &Tensor,
    gates: &[f64],
) -> Tensor {
    let off = params.stage_offsets();
    let mut pe = poses.clone();
    for i in off.pose.clone() {
        pe = linear_plain(&pe, &params.layers[i], true);
    }
    let te = linear_plain(time_feat, &params.layers[off.time], true);
    // concat [cond | pose | time]
    let b = poses.rows;
    let widths = [cond.cols, pe.cols, te.cols];
    let total: usize = widths.iter().sum();
    let mut fused = Tensor::zeros(b, total);
    for r in 0..b {
        let dst = &mut fused.data[r * total..(r + 1) * total];
        dst[..widths[0]].copy_from_slice(cond.row(r));
        dst[widths[0]..widths[0] + widths[1]].copy_from_slice(pe.row(r));
        dst[widths[0] + widths[1]..].copy_from_slice(te.row(r));
    }
    let trunk = linear_plain(&fused, &params.layers[off.trunk], true);
    let mut heads = Vec::with_capacity(3);
    for head in 0..3 {
        let hid = linear_plain(&trunk, &params.layers[off.heads + 2 * head], true);
        heads.push(linear_plain(&hid, &params.layers[off.heads + 2 * head + 1], false));
    }
    let mut out = Tensor::zeros(b, 9);
    for r in 0..b {
        for head in 0..3 {
            for c in 0..3 {
                out.set(r, head * 3 + c, heads[head].get(r, c) * gates[r]);
            }
        }
    }
    out
}

/// Graph twin of [`body_plain`].
pub(crate) fn body_graph(
    g: &mut Graph,
    params: &NetParams,
    vars: &NetVars,
    poses: Var,
    time_feat: Var,
    cond: Var,
    gates: &[f64],
) -> Var {
    let off = params.stage_offsets();
    let mut pe = poses;
    for i in off.pose.clone() {
        let (w, b) = vars.layers[i];
        pe = g.linear(pe, w, b, true);
    }
    let (tw, tb) = vars.layers[off.time];
    let te = g.linear(time_feat, tw, tb, true);
    let fused = g.concat_cols(&[cond, pe, te]);
    let (kw, kb) = vars.layers[off.trunk];
    let trunk = g.linear(fused, kw, kb, true);
    let mut heads = Vec::with_capacity(3);
    for head in 0..3 {
        let (hw, hb) = vars.layers[off.heads + 2 * head];
        let hid = g.linear(trunk, hw, hb, true);
        let (ow, ob) = vars.layers[off.heads + 2 * head + 1];
        heads.push(g.linear(hid, ow, ob, false));
    }
    let cat = g.concat_cols(&heads);
    let b = g.value(cat).rows;
    let mut gate_t = Tensor::zeros(b, 9);
    for r in 0..b {
        for c in 0..9 {
            gate_t.set(r, c, gates[r]);
        }
    }
    let gate_var = g.constant(gate_t);
    g.mul(cat, gate_var)
}

fn stack_cloud(cloud: &PointCloud) -> Tensor {
    let mut t = Tensor::zeros(cloud.len(), 3);
    for (r, p) in cloud.points.iter().enumerate() {
        t.data[r * 3..r * 3 + 3].copy_from_slice(p);
    }
    t
}

/// Global feature of one cloud; exactly permutation-invariant by max-pool.
pub fn encode_pointcloud(params: &NetParams, cloud: &PointCloud) -> Result<CondFeature, NetError> {
    cloud.validate()?;
    let feat = encode_plain(params, &stack_cloud(cloud), 1);
    if !feat.is_finite() {
        return Err(NetError::NonFinite("point encoder"));
    }
    Ok(CondFeature(feat.data))
}

/// Batched encoding; clouds of equal size share one stacked pass.
pub fn encode_pointclouds(
    params: &NetParams,
    clouds: &[&PointCloud],
) -> Result<Vec<CondFeature>, NetError> {
    if clouds.is_empty() {
        return Ok(vec![]);
    }
    let n = clouds[0].len();
    if clouds.iter().all(|c| c.len() == n) {
        for c in clouds {
            c.validate()?;
        }
        let mut stacked = Tensor::zeros(clouds.len() * n, 3);
        for (i, c) in clouds.iter().enumerate() {
            for (r, p) in c.points.iter().enumerate() {
                let base = (i * n + r) * 3;
                stacked.data[base..base + 3].copy_from_slice(p);
            }
        }
        let feats = encode_plain(params, &stacked, clouds.len());
        if !feats.is_finite() {
            return Err(NetError::NonFinite("point encoder"));
        }
        Ok((0..clouds.len())
            .map(|i| CondFeature(feats.row(i).to_vec()))
            .collect())
    } else {
        clouds.iter().map(|c| encode_pointcloud(params, c)).collect()
    }
}

fn tile_cond(cond: &CondFeature, rows: usize) -> Tensor {
    let w = cond.0.len();
    let mut t = Tensor::zeros(rows, w);
    for r in 0..rows {
        t.data[r * w..(r + 1) * w].copy_from_slice(&cond.0);
    }
    t
}

/// Estimated score for a batch of poses sharing one condition and time.
pub fn score_forward_batch(
    params: &NetParams,
    schedule: &NoiseSchedule,
    poses: &Tensor,
    t: f64,
    cond: &CondFeature,
) -> Result<Tensor, NetError> {
    schedule.check_train_time(t)?;
    assert_eq!(poses.cols, 9, "poses are rows of 9");
    let tf = rff_features(&params.fourier_freqs, &vec![t; poses.rows]);
    let sigma = schedule.sigma_unchecked(t);
    let gates = vec![out_gate(sigma); poses.rows];
    let raw = body_plain(params, poses, &tf, &tile_cond(cond, poses.rows), &gates);
    let out = raw.scale(1.0 / sigma);
    if !out.is_finite() {
        return Err(NetError::NonFinite("score head"));
    }
    Ok(out)
}

pub fn score_forward(
    params: &NetParams,
    schedule: &NoiseSchedule,
    pose: &[f64; 9],
    t: f64,
    cond: &CondFeature,
) -> Result<[f64; 9], NetError> {
    let poses = Tensor::from_vec(1, 9, pose.to_vec());
    let out = score_forward_batch(params, schedule, &poses, t, cond)?;
    Ok(std::array::from_fn(|i| out.data[i]))
}

/// Energies `psi(p, t | O) = <p, Phi(p, t | O)>` for a batch of poses.
pub fn energy_forward_batch(
    params: &NetParams,
    schedule: &NoiseSchedule,
    poses: &Tensor,
    t: f64,
    cond: &CondFeature,
) -> Result<Vec<f64>, NetError> {
    schedule.check_train_time(t)?;
    let tf = rff_features(&params.fourier_freqs, &vec![t; poses.rows]);
    let sigma = schedule.sigma_unchecked(t);
    let gates = vec![out_gate(sigma); poses.rows];
    let raw = body_plain(params, poses, &tf, &tile_cond(cond, poses.rows), &gates);
    let mut out = Vec::with_capacity(poses.rows);
    for r in 0..poses.rows {
        let dot: f64 = poses.row(r).iter().zip(raw.row(r)).map(|(a, b)| a * b).sum();
        let e = dot / sigma;
        if !e.is_finite() {
            return Err(NetError::NonFinite("energy head"));
        }
        out.push(e);
    }
    Ok(out)
}

pub fn energy_forward(
    params: &NetParams,
    schedule: &NoiseSchedule,
    pose: &[f64; 9],
    t: f64,
    cond: &CondFeature,
) -> Result<f64, NetError> {
    let poses = Tensor::from_vec(1, 9, pose.to_vec());
    Ok(energy_forward_batch(params, schedule, &poses, t, cond)?[0])
}

/// Exact input gradient `grad_p psi = Phi + (dPhi/dp)^T p` via the tape.
pub fn energy_input_gradient(
    params: &NetParams,
    schedule: &NoiseSchedule,
    pose: &[f64; 9],
    t: f64,
    cond: &CondFeature,
) -> Result<[f64; 9], NetError> {
    schedule.check_train_time(t)?;
    let mut g = Graph::new();
    let vars = params.insert(&mut g, false);
    let pose_var = g.leaf(Tensor::from_vec(1, 9, pose.to_vec()));
    let tf = g.constant(rff_features(&params.fourier_freqs, &[t]));
    let cond_var = g.constant(tile_cond(cond, 1));
    let sigma = schedule.sigma_unchecked(t);
    let raw = body_graph(&mut g, params, &vars, pose_var, tf, cond_var, &[out_gate(sigma)]);
    let prod = g.mul(pose_var, raw);
    let dot = g.sum_cols(prod);
    let psi = g.scale(dot, 1.0 / sigma);
    let psi_scalar = g.sum_all(psi);
    let grad = g.backward(psi_scalar, &[pose_var])[0].expect("pose reaches psi");
    let gt = g.value(grad);
    if !gt.is_finite() {
        return Err(NetError::NonFinite("energy input gradient"));
    }
    Ok(std::array::from_fn(|i| gt.data[i]))
}

/// Score and exact Jacobian trace in one taped pass.
///
/// Runs the body on nine copies of the pose and seeds the backward sweep
/// with the identity, which extracts all nine directional derivatives at
/// the cost of roughly one forward+backward.
pub fn score_jacobian_trace(
    params: &NetParams,
    schedule: &NoiseSchedule,
    pose: &[f64; 9],
    t: f64,
    cond: &CondFeature,
) -> Result<([f64; 9], f64), NetError> {
    schedule.check_train_time(t)?;
    let mut g = Graph::new();
    let vars = params.insert(&mut g, false);
    let mut rows = Tensor::zeros(9, 9);
    for r in 0..9 {
        rows.data[r * 9..(r + 1) * 9].copy_from_slice(pose);
    }
    let pose_var = g.leaf(rows);
    let tf = g.constant(rff_features(&params.fourier_freqs, &vec![t; 9]));
    let cond_var = g.constant(tile_cond(cond, 9));
    let sigma = schedule.sigma_unchecked(t);
    let raw = body_graph(&mut g, params, &vars, pose_var, tf, cond_var, &vec![out_gate(sigma); 9]);
    let score = g.scale(raw, 1.0 / sigma);
    let mut eye = Tensor::zeros(9, 9);
    for i in 0..9 {
        eye.set(i, i, 1.0);
    }
    let seed = g.constant(eye);
    let jac = g.backward_seeded(score, seed, &[pose_var])[0].expect("pose reaches score");
    let jt = g.value(jac);
    let st = g.value(score);
    if !jt.is_finite() || !st.is_finite() {
        return Err(NetError::NonFinite("score jacobian"));
    }
    let trace: f64 = (0..9).map(|i| jt.get(i, i)).sum();
    Ok((std::array::from_fn(|i| st.data[i]), trace))
}

/// Hutchinson trace estimate: runs the body on one pose copy per probe and
/// seeds the backward sweep with the probe matrix, so every `v^T J v` term
/// comes out of a single taped pass.
pub fn score_hutchinson_divergence(
    params: &NetParams,
    schedule: &NoiseSchedule,
    pose: &[f64; 9],
    t: f64,
    cond: &CondFeature,
    probes: &Tensor,
) -> Result<([f64; 9], f64), NetError> {
    schedule.check_train_time(t)?;
    assert_eq!(probes.cols, 9, "probes are rows of 9");
    let m = probes.rows;
    let mut g = Graph::new();
    let vars = params.insert(&mut g, false);
    let mut rows = Tensor::zeros(m, 9);
    for r in 0..m {
        rows.data[r * 9..(r + 1) * 9].copy_from_slice(pose);
    }
    let pose_var = g.leaf(rows);
    let tf = g.constant(rff_features(&params.fourier_freqs, &vec![t; m]));
    let cond_var = g.constant(tile_cond(cond, m));
    let sigma = schedule.sigma_unchecked(t);
    let raw = body_graph(&mut g, params, &vars, pose_var, tf, cond_var, &vec![out_gate(sigma); m]);
    let score = g.scale(raw, 1.0 / sigma);
    let seed = g.constant(probes.clone());
    let vjp = g.backward_seeded(score, seed, &[pose_var])[0].expect("pose reaches score");
    let vt = g.value(vjp);
    let st = g.value(score);
    if !vt.is_finite() || !st.is_finite() {
        return Err(NetError::NonFinite("hutchinson divergence"));
    }
    let mut acc = 0.0;
    for r in 0..m {
        for c in 0..9 {
            acc += vt.get(r, c) * probes.get(r, c);
        }
    }
    Ok((std::array::from_fn(|i| st.data[i]), acc / m as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_params, NetArch, Role};
    use crate::seedstream::SeedStream;
    use rand::Rng;

    fn cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = SeedStream::new(seed).stream(0);
        PointCloud::new(
            (0..n)
                .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn encoder_is_permutation_invariant_bitwise() {
        let params = init_params(&NetArch::tiny(), Role::Score, 3);
        let c = cloud(32, 5);
        let feat = encode_pointcloud(&params, &c).unwrap();
        let mut permuted = c.clone();
        permuted.points.reverse();
        permuted.points.swap(3, 17);
        let feat_p = encode_pointcloud(&params, &permuted).unwrap();
        assert_eq!(feat.0, feat_p.0);
    }

    #[test]
    fn encoder_ignores_duplicated_points() {
        let params = init_params(&NetArch::tiny(), Role::Score, 3);
        let c = cloud(32, 6);
        let feat = encode_pointcloud(&params, &c).unwrap();
        let mut dup = c.clone();
        let copies: Vec<_> = c.points.iter().take(8).cloned().collect();
        dup.points.extend(copies);
        let feat_d = encode_pointcloud(&params, &dup).unwrap();
        assert_eq!(feat.0, feat_d.0);
    }

    #[test]
    fn encoder_is_not_translation_invariant() {
        let params = init_params(&NetArch::tiny(), Role::Score, 3);
        let c = cloud(32, 7);
        let feat = encode_pointcloud(&params, &c).unwrap();
        let mut shifted = c.clone();
        for p in &mut shifted.points {
            p[0] += 0.5;
        }
        let feat_s = encode_pointcloud(&params, &shifted).unwrap();
        assert_ne!(feat.0, feat_s.0, "translation must be inferable");
    }

    #[test]
    fn zero_initialized_heads_give_zero_score() {
        let params = init_params(&NetArch::tiny(), Role::Score, 4);
        let sched = crate::sde::NoiseSchedule::default();
        let cond = encode_pointcloud(&params, &cloud(32, 8)).unwrap();
        let s = score_forward(&params, &sched, &[0.3; 9], 0.5, &cond).unwrap();
        assert_eq!(s, [0.0; 9]);
    }

    #[test]
    fn batch_rows_are_independent() {
        let params = init_params(&NetArch::tiny(), Role::Score, 11);
        // give the heads nonzero weights so the test sees real values
        let mut params = params;
        let n = params.layers.len();
        for l in &mut params.layers[n - 6..] {
            l.w = Tensor::filled(l.w.rows, l.w.cols, 0.01);
        }
        let sched = crate::sde::NoiseSchedule::default();
        let cond = encode_pointcloud(&params, &cloud(32, 9)).unwrap();
        let mut rng = SeedStream::new(13).stream(0);
        let poses = Tensor::randn(4, 9, 1.0, &mut rng);
        let batch = score_forward_batch(&params, &sched, &poses, 0.3, &cond).unwrap();
        for r in 0..4 {
            let single: [f64; 9] = std::array::from_fn(|c| poses.get(r, c));
            let one = score_forward(&params, &sched, &single, 0.3, &cond).unwrap();
            for c in 0..9 {
                assert_eq!(batch.get(r, c), one[c], "row {r} col {c}");
            }
        }
    }

    #[test]
    fn graph_and_plain_forward_agree_bitwise() {
        let mut params = init_params(&NetArch::tiny(), Role::Score, 15);
        let n = params.layers.len();
        for l in &mut params.layers[n - 6..] {
            l.w = Tensor::filled(l.w.rows, l.w.cols, 0.02);
        }
        let mut rng = SeedStream::new(16).stream(0);
        let poses = Tensor::randn(3, 9, 1.0, &mut rng);
        let tf = rff_features(&params.fourier_freqs, &[0.2, 0.5, 0.9]);
        let cond_t = Tensor::randn(3, params.arch.feature_dim(), 1.0, &mut rng);
        let gates = [0.3, 0.5, 0.9];
        let plain = body_plain(&params, &poses, &tf, &cond_t, &gates);
        let mut g = Graph::new();
        let vars = params.insert(&mut g, false);
        let pv = g.leaf(poses.clone());
        let tv = g.constant(tf.clone());
        let cv = g.constant(cond_t.clone());
        let raw = body_graph(&mut g, &params, &vars, pv, tv, cv, &gates);
        assert_eq!(g.value(raw).data, plain.data);
    }

    #[test]
    fn energy_of_zero_pose_is_zero() {
        let params = init_params(&NetArch::tiny(), Role::Energy, 21);
        let sched = crate::sde::NoiseSchedule::default();
        let cond = CondFeature::free(&params);
        let e = energy_forward(&params, &sched, &[0.0; 9], 0.4, &cond).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn energy_is_nonlinear_in_pose_scale() {
        let mut params = init_params(&NetArch::tiny(), Role::Energy, 22);
        let n = params.layers.len();
        let mut rng = SeedStream::new(23).stream(0);
        for l in &mut params.layers[n - 6..] {
            l.w = Tensor::randn(l.w.rows, l.w.cols, 0.1, &mut rng);
        }
        let sched = crate::sde::NoiseSchedule::default();
        let cond = CondFeature::free(&params);
        let p = [0.4, -0.2, 0.7, 0.1, -0.5, 0.3, 0.2, 0.0, -0.1];
        let p2: [f64; 9] = std::array::from_fn(|i| 2.0 * p[i]);
        let e1 = energy_forward(&params, &sched, &p, 0.3, &cond).unwrap();
        let e2 = energy_forward(&params, &sched, &p2, 0.3, &cond).unwrap();
        assert!((e2 - 2.0 * e1).abs() > 1e-9, "Phi depends on p");
    }

    #[test]
    fn energy_input_gradient_matches_finite_differences() {
        let mut params = init_params(&NetArch::tiny(), Role::Energy, 25);
        let n = params.layers.len();
        let mut rng = SeedStream::new(26).stream(0);
        for l in &mut params.layers[n - 6..] {
            l.w = Tensor::randn(l.w.rows, l.w.cols, 0.1, &mut rng);
        }
        let sched = crate::sde::NoiseSchedule::default();
        let cond = encode_pointcloud(&params, &cloud(24, 27)).unwrap();
        let p: [f64; 9] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let t = 0.35;
        let grad = energy_input_gradient(&params, &sched, &p, t, &cond).unwrap();
        let h = 1e-4;
        for i in 0..9 {
            let mut hi = p;
            let mut lo = p;
            hi[i] += h;
            lo[i] -= h;
            let fd = (energy_forward(&params, &sched, &hi, t, &cond).unwrap()
                - energy_forward(&params, &sched, &lo, t, &cond).unwrap())
                / (2.0 * h);
            let rel = (grad[i] - fd).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
            assert!(rel < 1e-4, "dim {i}: {} vs {fd}", grad[i]);
        }
    }

    #[test]
    fn frozen_pose_branch_reduces_gradient_to_phi() {
        // With the pose stack zeroed, Phi is constant in p, so
        // grad psi = Phi exactly.
        let mut params = init_params(&NetArch::tiny(), Role::Energy, 30);
        let off = params.stage_offsets();
        for i in off.pose.clone() {
            params.layers[i].w = Tensor::zeros(
                params.layers[i].w.rows,
                params.layers[i].w.cols,
            );
            params.layers[i].b =
                Tensor::zeros(1, params.layers[i].b.cols);
        }
        let n = params.layers.len();
        let mut rng = SeedStream::new(31).stream(0);
        for l in &mut params.layers[n - 6..] {
            l.w = Tensor::randn(l.w.rows, l.w.cols, 0.1, &mut rng);
        }
        let sched = crate::sde::NoiseSchedule::default();
        let cond = CondFeature::free(&params);
        let p: [f64; 9] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let t = 0.5;
        let grad = energy_input_gradient(&params, &sched, &p, t, &cond).unwrap();
        let sigma = sched.sigma(t).unwrap();
        // Phi = raw / sigma evaluated through the score path
        let phi = score_forward(&params, &sched, &p, t, &cond).unwrap();
        for i in 0..9 {
            assert!((grad[i] - phi[i]).abs() < 1e-12 * sigma.max(1.0));
        }
    }

    #[test]
    fn jacobian_trace_matches_finite_differences() {
        let mut params = init_params(&NetArch::tiny(), Role::Score, 33);
        let n = params.layers.len();
        let mut rng = SeedStream::new(34).stream(0);
        for l in &mut params.layers[n - 6..] {
            l.w = Tensor::randn(l.w.rows, l.w.cols, 0.1, &mut rng);
        }
        let sched = crate::sde::NoiseSchedule::default();
        let cond = CondFeature::free(&params);
        let p: [f64; 9] = std::array::from_fn(|_| rng.gen_range(-0.5..0.5));
        let t = 0.4;
        let (score, trace) = score_jacobian_trace(&params, &sched, &p, t, &cond).unwrap();
        let direct = score_forward(&params, &sched, &p, t, &cond).unwrap();
        for i in 0..9 {
            assert!((score[i] - direct[i]).abs() < 1e-14);
        }
        let h = 1e-5;
        let mut fd = 0.0;
        for i in 0..9 {
            let mut hi = p;
            let mut lo = p;
            hi[i] += h;
            lo[i] -= h;
            fd += (score_forward(&params, &sched, &hi, t, &cond).unwrap()[i]
                - score_forward(&params, &sched, &lo, t, &cond).unwrap()[i])
                / (2.0 * h);
        }
        assert!(
            (trace - fd).abs() / fd.abs().max(1.0) < 1e-5,
            "{trace} vs {fd}"
        );
    }
}
