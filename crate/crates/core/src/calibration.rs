//! Fitting energy-term weights from historical banner performance.
//!
//! CTR is regressed on the standardised term scores of historical banners.
//! A term whose score lowers CTR gets a negative coefficient and therefore a
//! positive penalty weight; terms that do not hurt CTR are floored at
//! [`WEIGHT_FLOOR`] times the largest weight. Weights are rescaled to mean
//! one.

use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::EnergyWeights;

pub const MIN_RECORDS: usize = 8;
/// Smallest weight, relative to the largest.
pub const WEIGHT_FLOOR: f64 = 0.01;
/// Coefficients at or below this magnitude, in CTR units, count as zero.
pub const NEGLIGIBLE_COEFFICIENT: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("need at least {MIN_RECORDS} records, got {0}")]
    TooFewRecords(usize),
    #[error("record {index} ({banner_id}): {reason}")]
    InvalidRecord {
        index: usize,
        banner_id: String,
        reason: String,
    },
    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One historical banner: its energy-term scores and observed CTR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoricalBannerRecord {
    pub banner_id: String,
    pub e_align: f64,
    pub e_overlap: f64,
    pub e_dist: f64,
    pub e_sym: f64,
    pub ctr: f64,
}

impl HistoricalBannerRecord {
    pub fn terms(&self) -> [f64; 4] {
        [self.e_align, self.e_overlap, self.e_dist, self.e_sym]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub weights: EnergyWeights,
    pub r_squared: f64,
    pub n_records: usize,
    pub intercept: f64,
    /// Coefficients on the standardised terms, in (align, overlap, dist, sym) order.
    pub coefficients: [f64; 4],
}

pub fn read_records_csv<R: Read>(
    reader: R,
) -> Result<Vec<HistoricalBannerRecord>, CalibrationError> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize()
        .map(|r| r.map_err(CalibrationError::from))
        .collect()
}

pub fn write_records_csv<W: std::io::Write>(
    writer: W,
    records: &[HistoricalBannerRecord],
) -> Result<(), CalibrationError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn check_records(records: &[HistoricalBannerRecord]) -> Result<(), CalibrationError> {
    if records.len() < MIN_RECORDS {
        return Err(CalibrationError::TooFewRecords(records.len()));
    }
    for (index, r) in records.iter().enumerate() {
        let bad = |reason: &str| {
            Err(CalibrationError::InvalidRecord {
                index,
                banner_id: r.banner_id.clone(),
                reason: reason.into(),
            })
        };
        if r.terms().iter().chain([&r.ctr]).any(|v| !v.is_finite()) {
            return bad("non-finite value");
        }
        if r.terms().iter().any(|v| *v < 0.0) {
            return bad("term scores must be >= 0");
        }
        if !(0.0..=1.0).contains(&r.ctr) {
            return bad("ctr must lie in [0, 1]");
        }
    }
    Ok(())
}

/// Column mean and population standard deviation.
fn moments(col: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = col.clone().count() as f64;
    let mean = col.clone().sum::<f64>() / n;
    let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

const TERM_NAMES: [&str; 4] = ["e_align", "e_overlap", "e_dist", "e_sym"];

/// Least-squares fit of CTR on standardised term scores, mapped to weights.
pub fn fit_weights(
    records: &[HistoricalBannerRecord],
) -> Result<CalibrationResult, CalibrationError> {
    check_records(records)?;
    let n = records.len();

    let mut design = DMatrix::<f64>::zeros(n, 5);
    design.column_mut(0).fill(1.0);
    for (j, name) in TERM_NAMES.iter().enumerate() {
        let col = records.iter().map(move |r| r.terms()[j]);
        let (mean, sd) = moments(col.clone());
        let scale = mean.abs().max(1.0);
        if sd <= 1e-12 * scale {
            return Err(CalibrationError::RankDeficient(format!(
                "{name} has zero variance"
            )));
        }
        for (i, v) in col.enumerate() {
            design[(i, j + 1)] = (v - mean) / sd;
        }
    }
    let y = DVector::from_iterator(n, records.iter().map(|r| r.ctr));

    let qr = design.clone().qr();
    let r = qr.r();
    let max_diag = (0..5).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
    if let Some(k) = (0..5).find(|&k| r[(k, k)].abs() <= 1e-10 * max_diag) {
        let what = if k == 0 {
            "intercept"
        } else {
            TERM_NAMES[k - 1]
        };
        return Err(CalibrationError::RankDeficient(format!(
            "{what} is collinear with earlier columns"
        )));
    }
    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| CalibrationError::RankDeficient("singular triangular factor".into()))?;

    let (y_mean, _) = moments(records.iter().map(|r| r.ctr));
    let sst: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let residual = &y - &design * &beta;
    let sse = residual.norm_squared();
    let sst_floor = n as f64 * (1e-12 * y_mean.abs().max(1.0)).powi(2);
    let r_squared = if sst > sst_floor {
        1.0 - sse / sst
    } else {
        0.0
    };

    let coefficients = [beta[1], beta[2], beta[3], beta[4]];
    Ok(CalibrationResult {
        weights: weights_from_coefficients(&coefficients),
        r_squared,
        n_records: n,
        intercept: beta[0],
        coefficients,
    })
}

/// `w_i = max(-beta_i, floor * max_j(-beta_j))`, rescaled to mean one.
/// Uniform weights when no term lowers CTR.
pub fn weights_from_coefficients(beta: &[f64; 4]) -> EnergyWeights {
    let top = beta.iter().map(|b| -b).fold(0.0, f64::max);
    if top <= NEGLIGIBLE_COEFFICIENT {
        return EnergyWeights::new(1.0, 1.0, 1.0, 1.0);
    }
    let raw = beta.map(|b| (-b).max(WEIGHT_FLOOR * top));
    let mean = raw.iter().sum::<f64>() / 4.0;
    let w = raw.map(|v| v / mean);
    EnergyWeights::new(w[0], w[1], w[2], w[3])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: usize, t: [f64; 4], ctr: f64) -> HistoricalBannerRecord {
        HistoricalBannerRecord {
            banner_id: format!("b{i}"),
            e_align: t[0],
            e_overlap: t[1],
            e_dist: t[2],
            e_sym: t[3],
            ctr,
        }
    }

    fn grid(n: usize) -> Vec<[f64; 4]> {
        // deterministic, non-collinear columns
        (0..n)
            .map(|i| {
                let x = i as f64;
                [
                    (x * 0.37).sin().abs(),
                    (x * 0.91 + 0.3).cos().abs(),
                    ((x * 1.7).sin() + 1.0) / 2.0,
                    (x * 0.13).fract(),
                ]
            })
            .collect()
    }

    #[test]
    fn exact_linear_data_interpolates() {
        let recs: Vec<_> = grid(40)
            .into_iter()
            .enumerate()
            .map(|(i, t)| rec(i, t, 0.6 - 0.3 * t[1] - 0.1 * t[3] + 0.01 * t[0]))
            .collect();
        let fit = fit_weights(&recs).unwrap();
        assert!((fit.r_squared - 1.0).abs() < 1e-9);
        let w = fit.weights;
        assert!(w.w_overlap > w.w_sym && w.w_sym > w.w_align);
        let mean = w.as_array().iter().sum::<f64>() / 4.0;
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_ctr_gives_floor_weights() {
        let recs: Vec<_> = grid(20)
            .into_iter()
            .enumerate()
            .map(|(i, t)| rec(i, t, 0.05))
            .collect();
        let fit = fit_weights(&recs).unwrap();
        assert_eq!(fit.r_squared, 0.0);
        for w in fit.weights.as_array() {
            assert!((w - 1.0).abs() < 1e-9);
        }
        assert!(fit.coefficients.iter().all(|b| b.abs() < 1e-12));
    }

    #[test]
    fn small_ctr_scale_keeps_proportions() {
        let w = weights_from_coefficients(&[-0.0005, -0.005, 0.002, -0.0025]);
        let raw = [0.0005, 0.005, 0.00005, 0.0025];
        let mean = raw.iter().sum::<f64>() / 4.0;
        for (got, r) in w.as_array().iter().zip(raw) {
            assert!((got - r / mean).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let recs: Vec<_> = grid(5)
            .into_iter()
            .enumerate()
            .map(|(i, t)| rec(i, t, 0.1))
            .collect();
        assert!(matches!(
            fit_weights(&recs),
            Err(CalibrationError::TooFewRecords(5))
        ));

        let mut recs: Vec<_> = grid(20)
            .into_iter()
            .enumerate()
            .map(|(i, t)| rec(i, t, 0.1))
            .collect();
        for r in &mut recs {
            r.e_dist = 2.0 * r.e_overlap + 1.0;
        }
        assert!(matches!(
            fit_weights(&recs),
            Err(CalibrationError::RankDeficient(_))
        ));

        let mut recs: Vec<_> = grid(20)
            .into_iter()
            .enumerate()
            .map(|(i, t)| rec(i, t, 0.1))
            .collect();
        recs[3].e_sym = 0.5;
        for r in &mut recs {
            r.e_sym = 0.5;
        }
        assert!(matches!(
            fit_weights(&recs),
            Err(CalibrationError::RankDeficient(_))
        ));

        let mut recs: Vec<_> = grid(20)
            .into_iter()
            .enumerate()
            .map(|(i, t)| rec(i, t, 0.1))
            .collect();
        recs[2].ctr = f64::NAN;
        assert!(matches!(
            fit_weights(&recs),
            Err(CalibrationError::InvalidRecord { index: 2, .. })
        ));
    }

    #[test]
    fn csv_roundtrip() {
        let recs: Vec<_> = grid(9)
            .into_iter()
            .enumerate()
            .map(|(i, t)| rec(i, t, 0.1))
            .collect();
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("banner_id,e_align,e_overlap,e_dist,e_sym,ctr\n"));
        assert_eq!(read_records_csv(buf.as_slice()).unwrap(), recs);
    }
}
