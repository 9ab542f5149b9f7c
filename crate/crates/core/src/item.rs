/// Layout of an observation's flat value vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    /// A point in the plane, `[x, y]`.
    Point2,
    /// A uniformly sampled curve on `u ∈ [0, 1]`.
    Curve { len: usize },
    /// A row-major grayscale image with pixel values in `[0, 1]`.
    Image { width: usize, height: usize },
    /// Any other fixed-length real vector.
    Vector { len: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Point2 => 2,
            Shape::Curve { len } | Shape::Vector { len } => len,
            Shape::Image { width, height } => width * height,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One observation `x_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct DataItem {
    pub values: Vec<f64>,
    pub shape: Shape,
}

impl DataItem {
    pub fn new(values: Vec<f64>, shape: Shape) -> crate::Result<Self> {
        if values.len() != shape.len() {
            return Err(crate::Error::DimensionMismatch {
                expected: shape.len(),
                got: values.len(),
            });
        }
        Ok(Self { values, shape })
    }

    pub fn point(x: f64, y: f64) -> Self {
        Self {
            values: vec![x, y],
            shape: Shape::Point2,
        }
    }

    pub fn curve(values: Vec<f64>) -> Self {
        let len = values.len();
        Self {
            values,
            shape: Shape::Curve { len },
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}
