//! Rank statistics and two-sample tests.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::seedstream::{Domain, SeedStream};

use super::EvalError;

/// Average ranks with ties sharing the mean rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (rank-based, so invariant under strictly
/// monotone transforms of either argument).
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return Err(EvalError::TooFewSamples { need: 2, got: xs.len() });
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    pearson(&rx, &ry)
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(EvalError::DegenerateVariance("x"));
    }
    if syy == 0.0 {
        return Err(EvalError::DegenerateVariance("y"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Kendall tau-b with tie corrections.
pub fn kendall_tau_b(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return Err(EvalError::TooFewSamples { need: 2, got: n });
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut ties_x = 0i64;
    let mut ties_y = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = xs[i] - xs[j];
            let dy = ys[i] - ys[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                ties_x += 1;
            } else if dy == 0.0 {
                ties_y += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    let denom = ((n0 - ties_x as f64) * (n0 - ties_y as f64)).sqrt();
    if denom == 0.0 {
        return Err(EvalError::DegenerateVariance("kendall"));
    }
    Ok((concordant - discordant) as f64 / denom)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationStats {
    pub rho_rot: f64,
    pub rho_trans: f64,
    pub n: usize,
}

/// Spearman correlation of energy against each error axis plus a CSV export
/// of the raw scatter and 20 equal-count binned means.
pub fn energy_error_correlation(
    samples: &[(f64, f64, f64)],
    csv_path: Option<&Path>,
) -> Result<CorrelationStats, EvalError> {
    if samples.len() < 30 {
        return Err(EvalError::TooFewSamples { need: 30, got: samples.len() });
    }
    let energies: Vec<f64> = samples.iter().map(|s| s.0).collect();
    if energies.iter().all(|&e| e == energies[0]) {
        return Err(EvalError::DegenerateVariance("energy"));
    }
    let rot: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let trans: Vec<f64> = samples.iter().map(|s| s.2).collect();
    let stats = CorrelationStats {
        rho_rot: spearman_rho(&energies, &rot)?,
        rho_trans: spearman_rho(&energies, &trans)?,
        n: samples.len(),
    };
    if let Some(path) = csv_path {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        super::write_csv_header(&mut w, "kind,energy,rot_err_deg,trans_err_cm")?;
        for (e, r, t) in samples {
            writeln!(w, "raw,{e},{r},{t}")?;
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by(|&a, &b| energies[a].partial_cmp(&energies[b]).unwrap());
        let bins = 20.min(samples.len());
        for b in 0..bins {
            let lo = b * samples.len() / bins;
            let hi = ((b + 1) * samples.len() / bins).max(lo + 1);
            let idx = &order[lo..hi.min(samples.len())];
            let m = idx.len() as f64;
            let me = idx.iter().map(|&i| energies[i]).sum::<f64>() / m;
            let mr = idx.iter().map(|&i| rot[i]).sum::<f64>() / m;
            let mt = idx.iter().map(|&i| trans[i]).sum::<f64>() / m;
            writeln!(w, "binned,{me},{mr},{mt}")?;
        }
    }
    Ok(stats)
}

/// Two-sample energy-distance permutation test. Returns the p-value of the
/// null hypothesis that `a` and `b` come from the same distribution.
pub fn energy_distance_permutation_test(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    permutations: usize,
    seed: u64,
) -> f64 {
    let observed = energy_distance(a, b);
    let mut pooled: Vec<&Vec<f64>> = a.iter().chain(b.iter()).collect();
    let mut rng = SeedStream::new(seed).domain_stream(Domain::Eval, 1);
    let mut exceed = 0usize;
    for _ in 0..permutations {
        rand::seq::SliceRandom::shuffle(&mut pooled[..], &mut rng);
        let pa: Vec<Vec<f64>> = pooled[..a.len()].iter().map(|v| (*v).clone()).collect();
        let pb: Vec<Vec<f64>> = pooled[a.len()..].iter().map(|v| (*v).clone()).collect();
        if energy_distance(&pa, &pb) >= observed {
            exceed += 1;
        }
    }
    (exceed + 1) as f64 / (permutations + 1) as f64
}

fn mean_cross_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    for x in a {
        for y in b {
            let d: f64 = x
                .iter()
                .zip(y)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            acc += d;
        }
    }
    acc / (a.len() * b.len()) as f64
}

/// Szekely's energy distance `2 E||X-Y|| - E||X-X'|| - E||Y-Y'||`.
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    2.0 * mean_cross_distance(a, b) - mean_cross_distance(a, a) - mean_cross_distance(b, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn perfectly_antimonotone_gives_minus_one() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -x.exp().min(1e300)).collect();
        let rho = spearman_rho(&xs, &ys).unwrap();
        assert!((rho + 1.0).abs() < 1e-12);
        let tau = kendall_tau_b(&xs, &ys).unwrap();
        assert!((tau + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_is_invariant_under_monotone_transforms() {
        let mut rng = SeedStream::new(71).stream(0);
        let xs: Vec<f64> = (0..100).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let ys: Vec<f64> = (0..100).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let base = spearman_rho(&xs, &ys).unwrap();
        let warped: Vec<f64> = xs.iter().map(|x| (2.0 * x).tanh() * 10.0 + 3.0).collect();
        let got = spearman_rho(&warped, &ys).unwrap();
        assert!((base - got).abs() < 1e-12);
    }

    #[test]
    fn independent_pairs_stay_near_zero() {
        let mut rng = SeedStream::new(72).stream(0);
        let xs: Vec<f64> = (0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = (0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rho = spearman_rho(&xs, &ys).unwrap();
        // 95% bound for independent samples: ~1.96/sqrt(n-1) = 0.062
        assert!(rho.abs() < 0.08, "rho = {rho}");
    }

    #[test]
    fn ties_get_average_ranks() {
        let r = ranks(&[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(r, vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn kendall_handles_partial_ties() {
        let tau = kendall_tau_b(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(tau > 0.8 && tau <= 1.0);
    }

    #[test]
    fn correlation_export_writes_expected_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corr.csv");
        let samples: Vec<(f64, f64, f64)> = (0..60)
            .map(|i| (i as f64, 60.0 - i as f64, 0.5 * i as f64))
            .collect();
        let stats = energy_error_correlation(&samples, Some(&path)).unwrap();
        assert!((stats.rho_rot + 1.0).abs() < 1e-12);
        assert!((stats.rho_trans - 1.0).abs() < 1e-12);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# format_version=1\n"));
        assert_eq!(text.lines().filter(|l| l.starts_with("raw,")).count(), 60);
        assert_eq!(text.lines().filter(|l| l.starts_with("binned,")).count(), 20);
    }

    #[test]
    fn degenerate_energies_are_an_error() {
        let samples: Vec<(f64, f64, f64)> = (0..40).map(|i| (1.0, i as f64, 0.0)).collect();
        assert!(matches!(
            energy_error_correlation(&samples, None),
            Err(EvalError::DegenerateVariance(_))
        ));
    }

    #[test]
    fn energy_distance_separates_and_accepts() {
        let mut rng = SeedStream::new(73).stream(0);
        let a: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let b: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let shifted: Vec<Vec<f64>> = a.iter().map(|v| vec![v[0] + 2.0, v[1], v[2]]).collect();
        let p_same = energy_distance_permutation_test(&a, &b, 200, 1);
        let p_diff = energy_distance_permutation_test(&a, &shifted, 200, 1);
        assert!(p_same > 0.01, "same-distribution p = {p_same}");
        assert!(p_diff < 0.01, "shifted p = {p_diff}");
    }
}
