//! Quadratic polynomial kernel expansion.
//!
//! A raw feature matrix `X` (M samples by N features) is expanded into the
//! design `X_Q` with `L = 1 + 2N + N(N-1)/2` columns laid out as
//!
//! ```text
//! [ 1 | x_1 .. x_N | x_1^2 .. x_N^2 | x_1 x_2, x_1 x_3, .., x_{N-1} x_N ]
//! ```
//!
//! Cross columns enumerate pairs `(n1, n2)` with `n1 < n2` in lexicographic
//! order. Normalizing divides every column by its 2-norm; the norms are kept
//! so coefficients can be moved between the two scales.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::linalg;

/// Raw features, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "feature matrix must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        let data = Array2::from_shape_vec((rows.len(), n), flat)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Self::new(data)
    }

    pub fn m(&self) -> usize {
        self.data.nrows()
    }

    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// Rows `range` as a new feature matrix.
    pub fn rows(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.m() {
            return Err(Error::InvalidArgument(format!(
                "row range {range:?} invalid for {} rows",
                self.m()
            )));
        }
        Self::new(self.data.slice(ndarray::s![range, ..]).to_owned())
    }
}

/// Whether coefficients refer to the raw design or the unit-column design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Original,
    Normalized,
}

/// The four coefficient groups of the quadratic model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Dc,
    Linear,
    Quadratic,
    Cross,
}

impl GroupKind {
    pub const ALL: [GroupKind; 4] = [
        GroupKind::Dc,
        GroupKind::Linear,
        GroupKind::Quadratic,
        GroupKind::Cross,
    ];

    pub fn index(self) -> usize {
        match self {
            GroupKind::Dc => 0,
            GroupKind::Linear => 1,
            GroupKind::Quadratic => 2,
            GroupKind::Cross => 3,
        }
    }
}

/// Meaning of a single expanded column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnGroup {
    Dc,
    Linear(usize),
    Quadratic(usize),
    Cross(usize, usize),
}

impl ColumnGroup {
    pub fn kind(self) -> GroupKind {
        match self {
            ColumnGroup::Dc => GroupKind::Dc,
            ColumnGroup::Linear(_) => GroupKind::Linear,
            ColumnGroup::Quadratic(_) => GroupKind::Quadratic,
            ColumnGroup::Cross(..) => GroupKind::Cross,
        }
    }
}

impl fmt::Display for ColumnGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnGroup::Dc => write!(f, "dc"),
            ColumnGroup::Linear(n) => write!(f, "x{n}"),
            ColumnGroup::Quadratic(n) => write!(f, "x{n}^2"),
            ColumnGroup::Cross(a, b) => write!(f, "x{a}*x{b}"),
        }
    }
}

/// Number of expanded columns for `n` raw features.
pub fn column_count(n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidArgument("feature count must be >= 1".into()));
    }
    Ok(1 + 2 * n + n * (n - 1) / 2)
}

/// Column map in storage order.
pub fn column_groups(n: usize) -> Result<Vec<ColumnGroup>> {
    let mut groups = Vec::with_capacity(column_count(n)?);
    groups.push(ColumnGroup::Dc);
    groups.extend((0..n).map(ColumnGroup::Linear));
    groups.extend((0..n).map(ColumnGroup::Quadratic));
    for a in 0..n {
        for b in a + 1..n {
            groups.push(ColumnGroup::Cross(a, b));
        }
    }
    Ok(groups)
}

/// Contiguous column ranges of each group for `n` raw features.
pub fn group_ranges(n: usize) -> [std::ops::Range<usize>; 4] {
    let cross_start = 1 + 2 * n;
    [
        0..1,
        1..1 + n,
        1 + n..cross_start,
        cross_start..cross_start + n * n.saturating_sub(1) / 2,
    ]
}

/// The expanded design with its column metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedDesign {
    data: Array2<f64>,
    n: usize,
    groups: Vec<ColumnGroup>,
    norms: Vec<f64>,
    scale: Scale,
}

impl ExpandedDesign {
    /// Wraps an already-built matrix whose columns follow the quadratic
    /// layout for `n` features. `norms` are the factors already divided out
    /// of each column (ones for a raw matrix).
    pub fn from_parts(data: Array2<f64>, n: usize, norms: Vec<f64>, scale: Scale) -> Result<Self> {
        let l = column_count(n)?;
        if data.ncols() != l || data.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                what: "design columns",
                expected: l,
                actual: data.ncols(),
            });
        }
        if norms.len() != l {
            return Err(Error::DimensionMismatch {
                what: "norm vector",
                expected: l,
                actual: norms.len(),
            });
        }
        if norms.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidArgument("column norms must be positive".into()));
        }
        Ok(Self {
            data,
            n,
            groups: column_groups(n)?,
            norms,
            scale,
        })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn m(&self) -> usize {
        self.data.nrows()
    }

    pub fn l(&self) -> usize {
        self.data.ncols()
    }

    /// Raw feature count the design was expanded from.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn groups(&self) -> &[ColumnGroup] {
        &self.groups
    }

    /// Scale factors divided out of each column so far: all ones for a raw
    /// design, the original column norms after [`normalize_columns`].
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn is_normalized(&self) -> bool {
        self.scale == Scale::Normalized
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.data.column(j)
    }

    /// Design restricted to the given rows. Column norms and scale are kept,
    /// so the sub-design shares the coefficient scale of its parent.
    pub fn select_rows(&self, rows: &[usize]) -> ExpandedDesign {
        ExpandedDesign {
            data: self.data.select(Axis(0), rows),
            n: self.n,
            groups: self.groups.clone(),
            norms: self.norms.clone(),
            scale: self.scale,
        }
    }

    /// Applies the normalization of `reference` (its stored norms) to this raw
    /// design. Used to map held-out rows onto the coefficient scale learned on
    /// training rows.
    pub fn normalize_like(&self, reference: &ExpandedDesign) -> Result<ExpandedDesign> {
        if self.scale != Scale::Original {
            return Err(Error::InvalidArgument(
                "normalize_like expects a raw design".into(),
            ));
        }
        if reference.l() != self.l() {
            return Err(Error::DimensionMismatch {
                what: "design columns",
                expected: reference.l(),
                actual: self.l(),
            });
        }
        let mut data = self.data.clone();
        for (mut col, &norm) in data.columns_mut().into_iter().zip(&reference.norms) {
            col.mapv_inplace(|v| v / norm);
        }
        Ok(ExpandedDesign {
            data,
            n: self.n,
            groups: self.groups.clone(),
            norms: reference.norms.clone(),
            scale: reference.scale,
        })
    }
}

/// Builds the raw quadratic design from `x`.
pub fn expand_quadratic(x: &FeatureMatrix) -> Result<ExpandedDesign> {
    let (m, n) = (x.m(), x.n());
    let l = column_count(n)?;
    let groups = column_groups(n)?;
    let mut data = Array2::<f64>::zeros((m, l));
    for (src, mut dst) in x.data.rows().into_iter().zip(data.rows_mut()) {
        dst[0] = 1.0;
        for a in 0..n {
            dst[1 + a] = src[a];
            dst[1 + n + a] = src[a] * src[a];
        }
        let mut k = 1 + 2 * n;
        for a in 0..n {
            for b in a + 1..n {
                dst[k] = src[a] * src[b];
                k += 1;
            }
        }
    }
    Ok(ExpandedDesign {
        data,
        n,
        groups,
        norms: vec![1.0; l],
        scale: Scale::Original,
    })
}

/// Divides each column by its 2-norm.
pub fn normalize_columns(design: &ExpandedDesign) -> Result<ExpandedDesign> {
    ensure_finite(design.data.as_slice().unwrap_or(&[]), "design")?;
    let norms = linalg::column_norms(&design.data);
    if let Some(idx) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::DegenerateColumn {
            index: idx,
            label: design.groups[idx].to_string(),
        });
    }
    let mut data = design.data.clone();
    for (mut col, &norm) in data.columns_mut().into_iter().zip(&norms) {
        col.mapv_inplace(|v| v / norm);
    }
    let combined = design.norms.iter().zip(&norms).map(|(a, b)| a * b).collect();
    Ok(ExpandedDesign {
        data,
        n: design.n,
        groups: design.groups.clone(),
        norms: combined,
        scale: Scale::Normalized,
    })
}

/// Coefficients split into the DC, linear, quadratic and cross groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedCoefficients {
    pub dc: f64,
    pub linear: Vec<f64>,
    pub quadratic: Vec<f64>,
    pub cross: Vec<f64>,
    pub scale: Scale,
}

impl GroupedCoefficients {
    pub fn zeros(n: usize, scale: Scale) -> Self {
        Self {
            dc: 0.0,
            linear: vec![0.0; n],
            quadratic: vec![0.0; n],
            cross: vec![0.0; n * n.saturating_sub(1) / 2],
            scale,
        }
    }

    /// Splits a flat length-L vector in storage order.
    pub fn from_flat(n: usize, flat: &[f64], scale: Scale) -> Result<Self> {
        let l = column_count(n)?;
        if flat.len() != l {
            return Err(Error::DimensionMismatch {
                what: "coefficient vector",
                expected: l,
                actual: flat.len(),
            });
        }
        let [_, lin, quad, cross] = group_ranges(n);
        Ok(Self {
            dc: flat[0],
            linear: flat[lin].to_vec(),
            quadratic: flat[quad].to_vec(),
            cross: flat[cross].to_vec(),
            scale,
        })
    }

    pub fn n(&self) -> usize {
        self.linear.len()
    }

    pub fn len(&self) -> usize {
        1 + self.linear.len() + self.quadratic.len() + self.cross.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.len());
        flat.push(self.dc);
        flat.extend_from_slice(&self.linear);
        flat.extend_from_slice(&self.quadratic);
        flat.extend_from_slice(&self.cross);
        flat
    }

    fn check_layout(&self) -> Result<()> {
        let n = self.linear.len();
        let cross = n * n.saturating_sub(1) / 2;
        if n == 0 || self.quadratic.len() != n || self.cross.len() != cross {
            return Err(Error::InvalidArgument(format!(
                "inconsistent group sizes [1, {}, {}, {}]",
                n,
                self.quadratic.len(),
                self.cross.len()
            )));
        }
        Ok(())
    }

    fn map_with_norms(&self, norms: &[f64], scale: Scale, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_layout()?;
        if norms.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "norm vector",
                expected: self.len(),
                actual: norms.len(),
            });
        }
        let flat: Vec<f64> = self
            .to_flat()
            .iter()
            .zip(norms)
            .map(|(&t, &s)| f(t, s))
            .collect();
        Self::from_flat(self.n(), &flat, scale)
    }
}

/// `theta'_l = theta_l * ||[X_Q]_l||`.
pub fn rescale_coefficients_to_normalized(
    theta: &GroupedCoefficients,
    norms: &[f64],
) -> Result<GroupedCoefficients> {
    theta.map_with_norms(norms, Scale::Normalized, |t, s| t * s)
}

/// `theta_l = theta'_l / ||[X_Q]_l||`.
pub fn rescale_coefficients_to_original(
    theta_prime: &GroupedCoefficients,
    norms: &[f64],
) -> Result<GroupedCoefficients> {
    if let Some(idx) = norms.iter().position(|&s| s <= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "column norm {idx} is not positive"
        )));
    }
    theta_prime.map_with_norms(norms, Scale::Original, |t, s| t / s)
}

/// Noiseless predictions `X theta`.
pub fn predict(design: &ExpandedDesign, theta: &GroupedCoefficients) -> Result<Array1<f64>> {
    if theta.scale != design.scale {
        return Err(Error::ScaleMismatch {
            theta: theta.scale,
            design: design.scale,
        });
    }
    let flat = theta.to_flat();
    if flat.len() != design.l() {
        return Err(Error::DimensionMismatch {
            what: "coefficient vector",
            expected: design.l(),
            actual: flat.len(),
        });
    }
    Ok(Array1::from(linalg::matvec(&design.data, &flat)))
}
