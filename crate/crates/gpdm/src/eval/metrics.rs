//! Thresholded pose accuracy in the n-degrees / m-centimeters convention.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{symmetry_aware_rotation_error, translation_error, Pose9D, SymmetrySpec};
use crate::synth::{denormalize_translation, ShapeCategory};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricThreshold {
    pub rot_deg: f64,
    pub trans_cm: f64,
}

impl MetricThreshold {
    pub const STANDARD: [MetricThreshold; 4] = [
        MetricThreshold { rot_deg: 5.0, trans_cm: 2.0 },
        MetricThreshold { rot_deg: 5.0, trans_cm: 5.0 },
        MetricThreshold { rot_deg: 10.0, trans_cm: 2.0 },
        MetricThreshold { rot_deg: 10.0, trans_cm: 5.0 },
    ];

    pub fn label(&self) -> String {
        format!("{}deg{}cm", self.rot_deg, self.trans_cm)
    }
}

/// One evaluated prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseResult {
    pub pred: Pose9D,
    pub gt: Pose9D,
    pub sym: SymmetrySpec,
    pub category: ShapeCategory,
}

/// `(rotation error deg, translation error cm)`, symmetry-aware.
pub fn pose_errors(r: &PoseResult) -> Result<(f64, f64), EvalError> {
    let rot = symmetry_aware_rotation_error(&r.pred.rotation()?, &r.gt.rotation()?, &r.sym);
    let trans = translation_error(
        &denormalize_translation(&r.pred.translation),
        &denormalize_translation(&r.gt.translation),
    );
    Ok((rot, trans))
}

/// Fraction of results under both thresholds, macro-averaged over the
/// categories present (equal category weight).
pub fn accuracy_at(results: &[PoseResult], th: &MetricThreshold) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let mut per_cat: BTreeMap<&'static str, (usize, usize)> = BTreeMap::new();
    for r in results {
        let (rot, trans) = pose_errors(r)?;
        let hit = rot < th.rot_deg && trans < th.trans_cm;
        let e = per_cat.entry(r.category.name()).or_insert((0, 0));
        e.1 += 1;
        if hit {
            e.0 += 1;
        }
    }
    let macro_avg = per_cat
        .values()
        .map(|(hits, total)| *hits as f64 / *total as f64)
        .sum::<f64>()
        / per_cat.len() as f64;
    Ok(macro_avg)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Accuracy per threshold: macro mean plus per-category breakdown.
    pub rows: Vec<ReportRow>,
    pub mean_rot_err_deg: f64,
    pub median_rot_err_deg: f64,
    pub mean_trans_err_cm: f64,
    pub median_trans_err_cm: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub threshold: MetricThreshold,
    pub mean: f64,
    pub per_category: Vec<(ShapeCategory, f64)>,
}

/// Full report over the standard thresholds.
pub fn eval_report(results: &[PoseResult]) -> Result<EvalReport, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let mut rows = Vec::new();
    for th in MetricThreshold::STANDARD {
        let mut per_category = Vec::new();
        for cat in ShapeCategory::ALL {
            let subset: Vec<PoseResult> = results
                .iter()
                .filter(|r| r.category == cat)
                .cloned()
                .collect();
            if !subset.is_empty() {
                per_category.push((cat, accuracy_at(&subset, &th)?));
            }
        }
        rows.push(ReportRow { threshold: th, mean: accuracy_at(results, &th)?, per_category });
    }
    let mut rot_errs = Vec::with_capacity(results.len());
    let mut trans_errs = Vec::with_capacity(results.len());
    for r in results {
        let (rot, trans) = pose_errors(r)?;
        rot_errs.push(rot);
        trans_errs.push(trans);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let median = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    Ok(EvalReport {
        mean_rot_err_deg: mean(&rot_errs),
        mean_trans_err_cm: mean(&trans_errs),
        median_rot_err_deg: median(&mut rot_errs),
        median_trans_err_cm: median(&mut trans_errs),
        n: results.len(),
        rows,
    })
}

impl EvalReport {
    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        super::write_csv_header(&mut w, "metric,category,value")?;
        for row in &self.rows {
            writeln!(w, "acc@{},mean,{}", row.threshold.label(), row.mean)?;
            for (cat, v) in &row.per_category {
                writeln!(w, "acc@{},{},{}", row.threshold.label(), cat.name(), v)?;
            }
        }
        writeln!(w, "mean_rot_err_deg,all,{}", self.mean_rot_err_deg)?;
        writeln!(w, "median_rot_err_deg,all,{}", self.median_rot_err_deg)?;
        writeln!(w, "mean_trans_err_cm,all,{}", self.mean_trans_err_cm)?;
        writeln!(w, "median_trans_err_cm,all,{}", self.median_trans_err_cm)?;
        writeln!(w, "n,all,{}", self.n)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RotationMatrix;

    fn result(rot_deg: f64, trans_cm: f64, cat: ShapeCategory) -> PoseResult {
        // build a prediction with exactly the requested errors
        let gt = Pose9D::identity();
        let pred = Pose9D::from_parts(
            &RotationMatrix::rot_x(rot_deg.to_radians()),
            // trans error in cm -> meters -> normalized units
            [trans_cm / 100.0 / crate::synth::METERS_PER_UNIT, 0.0, 0.0],
        );
        PoseResult { pred, gt, sym: SymmetrySpec::None, category: cat }
    }

    #[test]
    fn perfect_predictions_score_one() {
        let results = vec![
            PoseResult {
                pred: Pose9D::identity(),
                gt: Pose9D::identity(),
                sym: SymmetrySpec::None,
                category: ShapeCategory::Box,
            };
            4
        ];
        for th in MetricThreshold::STANDARD {
            assert_eq!(accuracy_at(&results, &th).unwrap(), 1.0);
        }
    }

    #[test]
    fn threshold_straddle() {
        let results = vec![result(6.0, 1.0, ShapeCategory::Box)];
        let strict = MetricThreshold { rot_deg: 5.0, trans_cm: 2.0 };
        let loose = MetricThreshold { rot_deg: 10.0, trans_cm: 2.0 };
        assert_eq!(accuracy_at(&results, &strict).unwrap(), 0.0);
        assert_eq!(accuracy_at(&results, &loose).unwrap(), 1.0);
    }

    #[test]
    fn hand_built_fractions_and_macro_average() {
        // box: 2 of 3 pass at 10deg2cm; cylinder: 0 of 1 -> macro = (2/3)/2
        let results = vec![
            result(3.0, 1.0, ShapeCategory::Box),
            result(8.0, 1.5, ShapeCategory::Box),
            result(12.0, 1.0, ShapeCategory::Box),
            result(3.0, 4.0, ShapeCategory::Cylinder),
        ];
        let th = MetricThreshold { rot_deg: 10.0, trans_cm: 2.0 };
        let got = accuracy_at(&results, &th).unwrap();
        let want = (2.0 / 3.0 + 0.0) / 2.0;
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn accuracy_is_monotone_in_thresholds() {
        let results = vec![
            result(3.0, 1.0, ShapeCategory::Box),
            result(7.0, 3.0, ShapeCategory::Box),
            result(12.0, 6.0, ShapeCategory::Box),
            result(4.0, 4.0, ShapeCategory::Box),
        ];
        let mut prev = 0.0;
        for th in MetricThreshold::STANDARD {
            let acc = accuracy_at(&results, &th).unwrap();
            // standard thresholds are ordered loosest-last per axis pair
            if th.rot_deg >= 10.0 && th.trans_cm >= 5.0 {
                assert!(acc >= prev);
            }
            prev = acc;
        }
        // explicit monotonicity in each axis
        let a = accuracy_at(&results, &MetricThreshold { rot_deg: 5.0, trans_cm: 2.0 }).unwrap();
        let b = accuracy_at(&results, &MetricThreshold { rot_deg: 5.0, trans_cm: 5.0 }).unwrap();
        let c = accuracy_at(&results, &MetricThreshold { rot_deg: 10.0, trans_cm: 5.0 }).unwrap();
        assert!(a <= b && b <= c);
    }

    #[test]
    fn symmetric_objects_ignore_axis_spin_in_accuracy() {
        let gt = Pose9D::identity();
        let pred = Pose9D::from_parts(&RotationMatrix::rot_z(40f64.to_radians()), [0.0; 3]);
        let r = PoseResult {
            pred,
            gt,
            sym: SymmetrySpec::continuous_z(),
            category: ShapeCategory::Cylinder,
        };
        let th = MetricThreshold { rot_deg: 5.0, trans_cm: 2.0 };
        assert_eq!(accuracy_at(&[r], &th).unwrap(), 1.0);
    }

    #[test]
    fn empty_results_error() {
        assert!(matches!(
            accuracy_at(&[], &MetricThreshold::STANDARD[0]),
            Err(EvalError::EmptyResults)
        ));
    }

    #[test]
    fn report_round_trips_through_serde() {
        let results = vec![
            result(3.0, 1.0, ShapeCategory::Box),
            result(6.0, 1.0, ShapeCategory::Cylinder),
        ];
        let report = eval_report(&results).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.n, 2);
        assert_eq!(back.rows.len(), 4);
    }
}
