use rayon::prelude::*;

use super::TransformError;
use crate::table::{Column, Table};

/// Quotients within this distance of an integer are treated as that integer,
/// so that e.g. 1.1 / 0.1 counts as 11 bins rather than 12.
const QUOTIENT_EPS: f64 = 1e-9;

/// A bin step of the form `mantissa * 10^exponent`, with `mantissa` in
/// {1, 2, 5}. Kept symbolic so multiples can be formed without drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct NiceStep {
    mantissa: i64,
    exponent: i32,
}

impl NiceStep {
    /// `k * step`, rounded once.
    fn times(self, k: i64) -> f64 {
        let m = (k as f64) * (self.mantissa as f64);
        if self.exponent >= 0 {
            m * 10f64.powi(self.exponent)
        } else {
            m / 10f64.powi(-self.exponent)
        }
    }

    fn value(self) -> f64 {
        self.times(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinParams {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    step_repr: NiceStep,
    start_index: i64,
    nbins: i64,
}

impl BinParams {
    /// Number of bins between `start` and `stop`.
    pub fn bin_count(&self) -> usize {
        self.nbins as usize
    }

    /// Lower edge of the bin containing `v`, or `None` when `v` is outside
    /// `[start, stop]`. `v == stop` lands in the last bin.
    pub fn bin_start(&self, v: f64) -> Option<f64> {
        if v.is_nan() || v < self.start || v > self.stop {
            return None;
        }
        let idx = (((v - self.start) / self.step).floor() as i64).clamp(0, self.nbins - 1);
        Some(self.step_repr.times(self.start_index + idx))
    }

    /// Upper edge of the bin starting at `bin0`.
    pub fn bin_end(&self, bin0: f64) -> f64 {
        let k = (bin0 / self.step).round() as i64;
        self.step_repr.times(k + 1)
    }
}

/// Choose the smallest step `{1,2,5}·10^z` giving at most `maxbins` bins over
/// `[lo, hi]`, and snap the extent outward to multiples of it.
pub fn nice_bin_params(lo: f64, hi: f64, maxbins: u32) -> Result<BinParams, TransformError> {
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi || maxbins == 0 {
        return Err(TransformError::DegenerateExtent { lo, hi });
    }
    let span = hi - lo;
    let fits = |s: NiceStep| (span / s.value() - QUOTIENT_EPS).ceil() <= maxbins as f64;
    let z0 = (span / maxbins as f64).log10().floor() as i32;
    // the answer lies within one decade of z0; scanning upward from below it
    // finds the smallest fitting step
    let step = (z0 - 1..=z0 + 1)
        .flat_map(|exponent| [1, 2, 5].map(|mantissa| NiceStep { mantissa, exponent }))
        .find(|&s| fits(s))
        .unwrap_or(NiceStep {
            mantissa: 1,
            exponent: z0 + 2,
        });
    let width = step.value();
    // correct the quotient's rounding against the exactly formed multiples
    let mut start_index = (lo / width).floor() as i64;
    if step.times(start_index + 1) <= lo {
        start_index += 1;
    }
    let mut stop_index = (hi / width).ceil() as i64;
    if step.times(stop_index - 1) >= hi {
        stop_index -= 1;
    }
    Ok(BinParams {
        start: step.times(start_index),
        stop: step.times(stop_index),
        step: width,
        step_repr: step,
        start_index,
        nbins: (stop_index - start_index).max(1),
    })
}

pub fn transform_bin(
    table: &Table,
    field: &str,
    params: &BinParams,
    as_: &[String; 2],
) -> Result<Table, TransformError> {
    let col = table.require_column(field)?;
    if !col.dtype().is_numeric() {
        return Err(TransformError::NonNumericField(field.to_string()));
    }
    let (bin0, bin1): (Vec<Option<f64>>, Vec<Option<f64>>) = (0..table.nrows())
        .into_par_iter()
        .map(|row| {
            let b0 = col.f64_at(row).and_then(|v| params.bin_start(v));
            (b0, b0.map(|b| params.bin_end(b)))
        })
        .unzip();
    let out = table.with_column(&as_[0], Column::Float(bin0))?;
    Ok(out.with_column(&as_[1], Column::Float(bin1))?)
}
