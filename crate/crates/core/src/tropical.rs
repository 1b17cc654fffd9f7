//! Min-plus semiring arithmetic.
//!
//! Values live in `ℝ ∪ {+∞}` with `⊕ = min` and `⊗ = +`. Positive infinity
//! marks an excluded or impossible entry; NaN and negative infinity are
//! rejected at construction so every derived value stays inside the semiring.

use std::fmt;
use std::ops::Index;

use crate::error::{Error, Result};

fn check(value: f64) -> Result<f64> {
    if value.is_nan() || value == f64::NEG_INFINITY {
        Err(Error::InvalidValue(value))
    } else {
        Ok(value)
    }
}

/// A single min-plus scalar.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Tropical(f64);

impl Tropical {
    /// Additive identity (`min(∞, a) = a`) and multiplicative absorber.
    pub const INFINITY: Tropical = Tropical(f64::INFINITY);
    /// Multiplicative identity (`0 + a = a`).
    pub const ONE: Tropical = Tropical(0.0);

    pub fn new(value: f64) -> Result<Self> {
        check(value).map(Tropical)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// Tropical addition: the minimum.
    pub fn oplus(self, other: Tropical) -> Tropical {
        Tropical(self.0.min(other.0))
    }

    /// Tropical multiplication: ordinary addition, with `+∞` absorbing.
    pub fn otimes(self, other: Tropical) -> Tropical {
        Tropical(self.0 + other.0)
    }
}

impl fmt::Display for Tropical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            write!(f, "∞")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Per-state cost vector. Pruned or unreachable states hold `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        for &v in &entries {
            check(v)?;
        }
        Ok(StateVector(entries))
    }

    /// A vector of `n` entries all equal to `value`.
    pub fn filled(n: usize, value: f64) -> Result<Self> {
        check(value)?;
        Ok(StateVector(vec![value; n]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn get(&self, i: usize) -> Tropical {
        Tropical(self.0[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied()
    }

    /// True if at least one entry is finite, i.e. the vector is a live front.
    pub fn is_live(&self) -> bool {
        self.0.iter().any(|v| v.is_finite())
    }

    /// Smallest entry and its index (smallest index on ties). `None` for an
    /// empty vector.
    pub fn argmin(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.0.iter().enumerate() {
            match best {
                Some((_, b)) if v >= b => {}
                _ => best = Some((i, v)),
            }
        }
        best
    }

    /// Entrywise tropical product with another vector (ordinary `+`).
    pub fn add_entrywise(&self, other: &StateVector) -> Result<StateVector> {
        if self.len() != other.len() {
            return Err(Error::Dimension {
                context: "entrywise add",
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(StateVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    /// Adds a finite constant to every entry.
    pub fn shift(&self, c: f64) -> Result<StateVector> {
        if !c.is_finite() {
            return Err(Error::InvalidValue(c));
        }
        Ok(StateVector(self.0.iter().map(|v| v + c).collect()))
    }
}

impl Index<usize> for StateVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Dense row-major min-plus matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Dimension {
                    context: "matrix row",
                    expected: c,
                    found: row.len(),
                });
            }
            for v in row {
                data.push(check(v)?);
            }
        }
        Ok(CostMatrix {
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        check(value)?;
        Ok(CostMatrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        })
    }

    /// The min-plus identity: 0 on the diagonal, `+∞` elsewhere.
    pub fn identity(n: usize) -> Self {
        diag(&StateVector(vec![0.0; n]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        self.data[i * self.cols + j] = check(value)?;
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> CostMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        CostMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

/// Min-plus matrix product: `(A ⊞ B)[i][j] = min_k A[i][k] + B[k][j]`.
pub fn matmul(a: &CostMatrix, b: &CostMatrix) -> Result<CostMatrix> {
    if a.cols != b.rows {
        return Err(Error::Dimension {
            context: "matmul",
            expected: a.cols,
            found: b.rows,
        });
    }
    let mut data = vec![f64::INFINITY; a.rows * b.cols];
    for i in 0..a.rows {
        let out = &mut data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == f64::INFINITY {
                continue;
            }
            for (o, &bkj) in out.iter_mut().zip(b.row(k)) {
                let v = aik + bkj;
                if v < *o {
                    *o = v;
                }
            }
        }
    }
    Ok(CostMatrix {
        rows: a.rows,
        cols: b.cols,
        data,
    })
}

/// Min-plus matrix-vector product with per-row argmins.
///
/// `values[i] = min_k A[i][k] + x[k]`; `argmins[i]` is the smallest `k`
/// attaining it (0 when the whole row is infinite).
#[derive(Debug, Clone, PartialEq)]
pub struct MatVec {
    pub values: StateVector,
    pub argmins: Vec<usize>,
}

pub fn matvec(a: &CostMatrix, x: &StateVector) -> Result<MatVec> {
    if a.cols != x.len() {
        return Err(Error::Dimension {
            context: "matvec",
            expected: a.cols,
            found: x.len(),
        });
    }
    let mut values = Vec::with_capacity(a.rows);
    let mut argmins = Vec::with_capacity(a.rows);
    for i in 0..a.rows {
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for (k, (&aik, &xk)) in a.row(i).iter().zip(x.as_slice()).enumerate() {
            let v = aik + xk;
            if v < best {
                best = v;
                arg = k;
            }
        }
        values.push(best);
        argmins.push(arg);
    }
    Ok(MatVec {
        values: StateVector(values),
        argmins,
    })
}

/// Square matrix with `v` on the diagonal and `+∞` elsewhere.
pub fn diag(v: &StateVector) -> CostMatrix {
    let n = v.len();
    let mut data = vec![f64::INFINITY; n * n];
    for (i, &x) in v.as_slice().iter().enumerate() {
        data[i * n + i] = x;
    }
    CostMatrix {
        rows: n,
        cols: n,
        data,
    }
}
