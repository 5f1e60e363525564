use serde::{Deserialize, Serialize};

use super::SpatialError;

/// A value along one attribute dimension, in its native unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Number(f64),
    Label(String),
}

impl AttrValue {
    pub fn label(s: impl Into<String>) -> Self {
        AttrValue::Label(s.into())
    }
}

impl From<f64> for AttrValue {
    fn from(v: f64) -> Self {
        AttrValue::Number(v)
    }
}

impl From<&str> for AttrValue {
    fn from(v: &str) -> Self {
        AttrValue::Label(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DimensionKind {
    Numeric { lo: f64, hi: f64 },
    Categorical { labels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSpec {
    pub name: String,
    pub kind: DimensionKind,
}

impl DimensionSpec {
    pub fn numeric(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        DimensionSpec {
            name: name.into(),
            kind: DimensionKind::Numeric { lo, hi },
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, labels: impl IntoIterator<Item = S>) -> Self {
        DimensionSpec {
            name: name.into(),
            kind: DimensionKind::Categorical {
                labels: labels.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, DimensionKind::Categorical { .. })
    }

    fn validate(&self) -> Result<(), SpatialError> {
        match &self.kind {
            DimensionKind::Numeric { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(SpatialError::InvalidSpace(format!(
                        "dimension '{}' needs finite bounds with lo < hi",
                        self.name
                    )));
                }
            }
            DimensionKind::Categorical { labels } => {
                if labels.is_empty() {
                    return Err(SpatialError::InvalidSpace(format!(
                        "dimension '{}' needs at least one label",
                        self.name
                    )));
                }
                for (i, l) in labels.iter().enumerate() {
                    if labels[..i].contains(l) {
                        return Err(SpatialError::InvalidSpace(format!(
                            "dimension '{}' repeats label '{l}'",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// The d-dimensional attribute space and its division levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpace {
    dims: Vec<DimensionSpec>,
    f_min: u32,
    f_max: u32,
}

impl AttributeSpace {
    /// Validates and builds a space. Only the fixed grid `f_min == f_max` is
    /// supported.
    pub fn new(dims: Vec<DimensionSpec>, f_min: u32, f_max: u32) -> Result<Self, SpatialError> {
        if dims.is_empty() {
            return Err(SpatialError::InvalidSpace("space needs at least one dimension".into()));
        }
        if f_min < 1 {
            return Err(SpatialError::InvalidSpace("f_min must be at least 1".into()));
        }
        if f_max < f_min {
            return Err(SpatialError::InvalidSpace("f_max must be at least f_min".into()));
        }
        if f_max != f_min {
            return Err(SpatialError::InvalidSpace(
                "f_max must equal f_min: division past the base level is not supported".into(),
            ));
        }
        for (i, d) in dims.iter().enumerate() {
            d.validate()?;
            if dims[..i].iter().any(|o| o.name == d.name) {
                return Err(SpatialError::InvalidSpace(format!("duplicate dimension '{}'", d.name)));
            }
        }
        Ok(AttributeSpace { dims, f_min, f_max })
    }

    pub fn dims(&self) -> &[DimensionSpec] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn f_min(&self) -> u32 {
        self.f_min
    }

    pub fn f_max(&self) -> u32 {
        self.f_max
    }

    pub fn dim_index(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.name == name)
    }

    /// `f_min^dim`, or `None` on overflow.
    pub fn cell_count(&self) -> Option<usize> {
        (self.f_min as usize).checked_pow(self.dims.len() as u32)
    }

    /// Maps a native value into `[0, 1]`.
    ///
    /// Numeric values scale linearly over the bounds. A categorical label of
    /// rank `r` among `m` labels maps to `(r + 0.5) / m`.
    pub fn normalize(&self, dim: usize, value: &AttrValue) -> Result<f64, SpatialError> {
        let spec = self.dims.get(dim).ok_or(SpatialError::NoSuchDimension(dim))?;
        match (&spec.kind, value) {
            (DimensionKind::Numeric { lo, hi }, AttrValue::Number(v)) => {
                if !(lo <= v && v <= hi) {
                    return Err(SpatialError::Domain(format!(
                        "{v} outside [{lo}, {hi}] for '{}'",
                        spec.name
                    )));
                }
                Ok((v - lo) / (hi - lo))
            }
            (DimensionKind::Categorical { labels }, AttrValue::Label(l)) => {
                let rank = labels.iter().position(|x| x == l).ok_or_else(|| {
                    SpatialError::Domain(format!("unknown label '{l}' for '{}'", spec.name))
                })?;
                Ok((rank as f64 + 0.5) / labels.len() as f64)
            }
            (DimensionKind::Numeric { .. }, AttrValue::Label(l)) => Err(SpatialError::Domain(format!(
                "label '{l}' given for numeric dimension '{}'",
                spec.name
            ))),
            (DimensionKind::Categorical { .. }, AttrValue::Number(v)) => Err(SpatialError::Domain(
                format!("number {v} given for categorical dimension '{}'", spec.name),
            )),
        }
    }

    /// Inverse of [`normalize`](Self::normalize). Categorical coordinates
    /// resolve to the label whose slot of width `1/m` contains them.
    pub fn denormalize(&self, dim: usize, x: f64) -> Result<AttrValue, SpatialError> {
        let spec = self.dims.get(dim).ok_or(SpatialError::NoSuchDimension(dim))?;
        if !(0.0..=1.0).contains(&x) {
            return Err(SpatialError::Domain(format!("normalized coordinate {x} outside [0, 1]")));
        }
        Ok(match &spec.kind {
            DimensionKind::Numeric { lo, hi } => AttrValue::Number(lo + x * (hi - lo)),
            DimensionKind::Categorical { labels } => {
                let m = labels.len();
                let rank = ((x * m as f64).floor() as usize).min(m - 1);
                AttrValue::Label(labels[rank].clone())
            }
        })
    }

    /// Lower bound of slice `c` along any dimension.
    pub(crate) fn slice_lo(&self, c: u32) -> f64 {
        c as f64 / self.f_min as f64
    }

    /// Upper bound of slice `c`; identical to `slice_lo(c + 1)`.
    pub(crate) fn slice_hi(&self, c: u32) -> f64 {
        (c + 1) as f64 / self.f_min as f64
    }

    /// Slice containing normalized coordinate `x` under half-open bounds, the
    /// last slice being closed above.
    pub(crate) fn slice_of(&self, x: f64) -> u32 {
        let last = self.f_min - 1;
        (0..last).find(|&c| x < self.slice_hi(c)).unwrap_or(last)
    }
}
