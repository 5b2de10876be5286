use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ColumnKind, Dataset, Schema};
use crate::error::{Error, Result};

/// Safety margin added so every Box-Cox input is strictly positive.
pub const BOXCOX_EPSILON: f64 = 1e-3;

const LAMBDA_GRID_HALF: i32 = 50;
const LAMBDA_STEP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformOptions {
    pub use_minmax: bool,
    pub use_boxcox: bool,
    /// Leave constant non-positive columns unscaled instead of failing.
    #[serde(default)]
    pub skip_degenerate: bool,
}

impl Default for TransformOptions {
    fn default() -> Self {
        TransformOptions { use_minmax: true, use_boxcox: true, skip_degenerate: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxCoxParams {
    pub lambda: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub column: usize,
    pub minmax: Option<MinMax>,
    pub boxcox: Option<BoxCoxParams>,
    pub observed_min: f64,
    pub observed_max: f64,
}

impl ColumnTransform {
    pub fn forward(&self, x: f64) -> f64 {
        let mut v = x;
        if let Some(m) = self.minmax {
            v = (v - m.lo) / (m.hi - m.lo);
        }
        if let Some(b) = self.boxcox {
            v = boxcox(v + b.shift, b.lambda);
        }
        v
    }

    /// Inverse map; the flag is set when the Box-Cox inverse left its domain
    /// and the value was clamped to the observed range.
    pub fn inverse(&self, y: f64) -> (f64, bool) {
        let mut v = y;
        if let Some(b) = self.boxcox {
            match boxcox_inverse(v, b.lambda) {
                Some(x) => v = x - b.shift,
                None => {
                    let edge = if b.lambda > 0.0 { self.observed_min } else { self.observed_max };
                    return (edge, true);
                }
            }
        }
        if let Some(m) = self.minmax {
            v = v * (m.hi - m.lo) + m.lo;
        }
        if !v.is_finite() {
            return (if v > 0.0 { self.observed_max } else { self.observed_min }, true);
        }
        (v, false)
    }
}

/// Fitted reversible preprocessing for one schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformModel {
    pub schema: Schema,
    pub options: TransformOptions,
    /// One entry per numerical column, in schema order.
    pub numeric: Vec<ColumnTransform>,
    /// Encoded offset of every schema column.
    pub offsets: Vec<usize>,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InversionReport {
    pub clamped: usize,
}

pub fn boxcox(x: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        x.ln()
    } else {
        (x.powf(lambda) - 1.0) / lambda
    }
}

/// `None` when `λy + 1 ≤ 0`, where the inverse is undefined.
pub fn boxcox_inverse(y: f64, lambda: f64) -> Option<f64> {
    if lambda == 0.0 {
        let x = y.exp();
        return x.is_finite().then_some(x);
    }
    let base = lambda * y + 1.0;
    if base <= 0.0 {
        return None;
    }
    let x = base.powf(1.0 / lambda);
    x.is_finite().then_some(x)
}

/// Profile log-likelihood of the Box-Cox model at `lambda` for positive data.
pub fn boxcox_log_likelihood(xs: &[f64], lambda: f64) -> f64 {
    let n = xs.len() as f64;
    let ys: Vec<f64> = xs.iter().map(|&x| boxcox(x, lambda)).collect();
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let log_jac: f64 = xs.iter().map(|x| x.ln()).sum();
    -0.5 * n * var.ln() + (lambda - 1.0) * log_jac
}

/// Grid search over λ ∈ {−5.0, −4.9, …, 5.0}. Constant data yields λ = 1.
///
/// A λ whose transform cannot be inverted to ~1e-11 relative accuracy on
/// `xs` (x^λ negligible next to 1) is skipped.
pub fn fit_boxcox_lambda(xs: &[f64]) -> f64 {
    let first = xs[0];
    if xs.iter().all(|&x| x == first) {
        return 1.0;
    }
    let mut best = (f64::NEG_INFINITY, 1.0);
    for i in -LAMBDA_GRID_HALF..=LAMBDA_GRID_HALF {
        let lambda = f64::from(i) * LAMBDA_STEP;
        if !invertible_on(xs, lambda) {
            continue;
        }
        let ll = boxcox_log_likelihood(xs, lambda);
        if ll.is_finite() && ll > best.0 {
            best = (ll, lambda);
        }
    }
    best.1
}

fn invertible_on(xs: &[f64], lambda: f64) -> bool {
    xs.iter().all(|&x| match boxcox_inverse(boxcox(x, lambda), lambda) {
        Some(back) => (back - x).abs() <= ROUND_TRIP_GUARD * x.abs().max(1.0),
        None => false,
    })
}

const ROUND_TRIP_GUARD: f64 = 1e-11;

pub fn fit_transforms(data: &Dataset, opts: TransformOptions) -> Result<TransformModel> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let schema = data.schema.clone();
    let mut numeric = Vec::new();
    let mut offsets = Vec::with_capacity(schema.len());
    let mut width = 0;
    for (j, col) in schema.columns.iter().enumerate() {
        offsets.push(width);
        match col.kind {
            ColumnKind::Categorical => width += col.categories.len(),
            ColumnKind::Numerical => {
                width += 1;
                let values = data.cells.column(j);
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut minmax = None;
                if opts.use_minmax && lo <= 0.0 {
                    if hi > lo {
                        minmax = Some(MinMax { lo, hi });
                    } else if !opts.skip_degenerate {
                        return Err(Error::DegenerateColumn(col.name.clone()));
                    }
                }
                let mut boxcox_params = None;
                if opts.use_boxcox {
                    let scaled: Vec<f64> = values
                        .iter()
                        .map(|&x| minmax.map_or(x, |m| (x - m.lo) / (m.hi - m.lo)))
                        .collect();
                    let min = scaled.iter().copied().fold(f64::INFINITY, f64::min);
                    let shift = (BOXCOX_EPSILON - min).max(0.0);
                    let shifted: Vec<f64> = scaled.iter().map(|v| v + shift).collect();
                    boxcox_params = Some(BoxCoxParams { lambda: fit_boxcox_lambda(&shifted), shift });
                }
                numeric.push(ColumnTransform { column: j, minmax, boxcox: boxcox_params, observed_min: lo, observed_max: hi });
            }
        }
    }
    Ok(TransformModel { schema, options: opts, numeric, offsets, width })
}

impl TransformModel {
    fn check_schema(&self, schema: &Schema) -> Result<()> {
        if *schema != self.schema {
            return Err(Error::SchemaMismatch("data schema differs from the fitted schema".into()));
        }
        Ok(())
    }

    /// Applies only the numeric maps, keeping categorical index cells.
    pub fn transform_numeric(&self, data: &Dataset) -> Result<Dataset> {
        self.check_schema(&data.schema)?;
        let mut cells = data.cells.clone();
        for t in &self.numeric {
            cells.column_mut(t.column).mapv_inplace(|x| t.forward(x));
        }
        for v in cells.iter() {
            if !v.is_finite() {
                return Err(Error::invalid("numeric transform produced a non-finite value"));
            }
        }
        Ok(Dataset { schema: data.schema.clone(), cells })
    }

    /// Inverse of [`TransformModel::transform_numeric`].
    pub fn inverse_numeric(&self, data: &Dataset) -> Result<(Dataset, InversionReport)> {
        self.check_schema(&data.schema)?;
        let mut cells = data.cells.clone();
        let mut report = InversionReport::default();
        for t in &self.numeric {
            for v in cells.column_mut(t.column).iter_mut() {
                let (x, clamped) = t.inverse(*v);
                *v = x;
                report.clamped += usize::from(clamped);
            }
        }
        Ok((Dataset { schema: data.schema.clone(), cells }, report))
    }
}

/// Numeric maps followed by one-hot expansion of categorical columns.
pub fn apply_transforms(model: &TransformModel, data: &Dataset) -> Result<Array2<f64>> {
    model.check_schema(&data.schema)?;
    let mut out = Array2::zeros((data.n_rows(), model.width));
    let mut numeric = model.numeric.iter().peekable();
    for (j, col) in model.schema.columns.iter().enumerate() {
        let off = model.offsets[j];
        match col.kind {
            ColumnKind::Numerical => {
                let t = numeric.next().expect("one transform per numerical column");
                for (i, &x) in data.cells.column(j).iter().enumerate() {
                    out[[i, off]] = t.forward(x);
                }
            }
            ColumnKind::Categorical => {
                let w = col.categories.len();
                for (i, &x) in data.cells.column(j).iter().enumerate() {
                    if x < 0.0 || x as usize >= w {
                        return Err(Error::CategoryOutOfRange { column: col.name.clone(), index: x.max(0.0) as usize, width: w });
                    }
                    out[[i, off + x as usize]] = 1.0;
                }
            }
        }
    }
    Ok(out)
}

pub fn invert_transforms(model: &TransformModel, encoded: &Array2<f64>) -> Result<(Dataset, InversionReport)> {
    if encoded.ncols() != model.width {
        return Err(Error::DimensionMismatch { expected: model.width, found: encoded.ncols() });
    }
    let mut cells = Array2::zeros((encoded.nrows(), model.schema.len()));
    let mut report = InversionReport::default();
    let mut numeric = model.numeric.iter();
    for (j, col) in model.schema.columns.iter().enumerate() {
        let off = model.offsets[j];
        match col.kind {
            ColumnKind::Numerical => {
                let t = numeric.next().expect("one transform per numerical column");
                for i in 0..encoded.nrows() {
                    let (x, clamped) = t.inverse(encoded[[i, off]]);
                    cells[[i, j]] = x;
                    report.clamped += usize::from(clamped);
                }
            }
            ColumnKind::Categorical => {
                let w = col.categories.len();
                for i in 0..encoded.nrows() {
                    cells[[i, j]] = argmax(encoded.row(i).slice(ndarray::s![off..off + w]).iter().copied()) as f64;
                }
            }
        }
    }
    Ok((Dataset::new(model.schema.clone(), cells)?, report))
}

/// First index of the maximum; NaN entries never win.
pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
