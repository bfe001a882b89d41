use crate::error::{shape_err, Result, XqcError};

/// What a block of parameters does inside its layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamRole {
    Weight,
    Bias,
    Scale,
    Shift,
}

impl ParamRole {
    pub fn code(self) -> u8 {
        match self {
            ParamRole::Weight => 0,
            ParamRole::Bias => 1,
            ParamRole::Scale => 2,
            ParamRole::Shift => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => ParamRole::Weight,
            1 => ParamRole::Bias,
            2 => ParamRole::Scale,
            3 => ParamRole::Shift,
            _ => return None,
        })
    }
}

/// One `(layer-id, shape, offset)` record of a parameter layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayoutEntry {
    pub layer_id: String,
    pub role: ParamRole,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    /// Hidden dense weight that weight projection normalizes.
    pub projected: bool,
}

impl LayoutEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered layout whose entries tile `[0, len)` with no gaps or overlaps.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Layout {
    entries: Vec<LayoutEntry>,
    len: usize,
}

impl Layout {
    pub fn new(entries: Vec<LayoutEntry>) -> Result<Self> {
        let mut cursor = 0;
        for e in &entries {
            if e.offset != cursor {
                return Err(XqcError::Config(format!(
                    "layout entry `{}` starts at {} but previous entry ends at {}",
                    e.layer_id, e.offset, cursor
                )));
            }
            cursor += e.len();
        }
        Ok(Self { entries, len: cursor })
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn find(&self, layer_id: &str, role: ParamRole) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.layer_id == layer_id && e.role == role)
    }

    pub fn projected(&self) -> impl Iterator<Item = &LayoutEntry> {
        self.entries.iter().filter(|e| e.projected)
    }
}

/// Incremental construction of a [`Layout`].
#[derive(Default)]
pub struct LayoutBuilder {
    entries: Vec<LayoutEntry>,
    cursor: usize,
}

impl LayoutBuilder {
    pub fn push(
        &mut self,
        layer_id: impl Into<String>,
        role: ParamRole,
        rows: usize,
        cols: usize,
        projected: bool,
    ) -> usize {
        let offset = self.cursor;
        self.entries.push(LayoutEntry {
            layer_id: layer_id.into(),
            role,
            rows,
            cols,
            offset,
            projected,
        });
        self.cursor += rows * cols;
        offset
    }

    pub fn finish(self) -> Layout {
        Layout {
            len: self.cursor,
            entries: self.entries,
        }
    }
}

/// Flattened trainable parameters plus the layout mapping them to layers.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Layout,
}

impl ParamVector {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            values: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn new(values: Vec<f64>, layout: Layout) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(shape_err("ParamVector::new", layout.len(), values.len()));
        }
        Ok(Self { values, layout })
    }

    /// A flat vector laid out as `[0, n)` under a single anonymous entry.
    pub fn flat(values: Vec<f64>) -> Self {
        let mut b = LayoutBuilder::default();
        b.push("flat", ParamRole::Weight, values.len(), 1, false);
        Self {
            values,
            layout: b.finish(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(values, self.layout.clone())
    }

    pub fn slice(&self, entry: &LayoutEntry) -> &[f64] {
        &self.values[entry.range()]
    }

    pub fn slice_mut(&mut self, entry: &LayoutEntry) -> &mut [f64] {
        let r = entry.range();
        &mut self.values[r]
    }

    /// Split into one owned tensor per layout entry.
    pub fn unpack(&self) -> Vec<Vec<f64>> {
        self.layout
            .entries()
            .iter()
            .map(|e| self.values[e.range()].to_vec())
            .collect()
    }

    /// Inverse of [`ParamVector::unpack`].
    pub fn pack(layout: Layout, tensors: &[Vec<f64>]) -> Result<Self> {
        if tensors.len() != layout.entries().len() {
            return Err(shape_err(
                "ParamVector::pack tensors",
                layout.entries().len(),
                tensors.len(),
            ));
        }
        let mut values = Vec::with_capacity(layout.len());
        for (e, t) in layout.entries().iter().zip(tensors) {
            if t.len() != e.len() {
                return Err(shape_err(&format!("tensor `{}`", e.layer_id), e.len(), t.len()));
            }
            values.extend_from_slice(t);
        }
        Ok(Self { values, layout })
    }

    pub fn check_layout(&self, expected: &Layout) -> Result<()> {
        if &self.layout != expected {
            return Err(XqcError::Config(format!(
                "parameter layout mismatch: {} entries / {} values vs expected {} entries / {} values",
                self.layout.entries().len(),
                self.len(),
                expected.entries().len(),
                expected.len()
            )));
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        l2(&self.values)
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        dot(&self.values, &other.values)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
