//! Small dense linear algebra, activations and the seeded random stream.
//!
//! Matrices in this crate are tiny (a few dozen rows), so everything is plain
//! row-major `Vec<f64>` with naive loops.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};

/// Row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix must be at least 1x1");
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        m.values.fill(value);
        m
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                left_rows: rows,
                left_cols: cols,
                right_rows: values.len(),
                right_cols: 1,
            });
        }
        Ok(Self { rows, cols, values })
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let values = rows.iter().flatten().copied().collect();
        Self::from_vec(rows.len(), cols, values).expect("non-empty rows")
    }

    /// Matrix with entries drawn from `Normal(0, std^2)`.
    pub fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut SeededRng) -> Self {
        let mut m = Self::zeros(rows, cols);
        for v in &mut m.values {
            *v = std * rng.next_gaussian();
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape("add", other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self { values, ..*self })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_same_shape(&self, op: &'static str, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op,
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.values[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.values[r * self.cols + c]
    }
}

/// Standard matrix product `a · b`.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left_rows: a.rows,
            left_cols: a.cols,
            right_rows: b.rows,
            right_cols: b.cols,
        });
    }
    let mut out = DenseMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let a_row = a.row(i);
        let out_row = out.row_mut(i);
        for (k, &a_ik) in a_row.iter().enumerate() {
            let b_row = &b.values[k * b.cols..(k + 1) * b.cols];
            for (o, &b_kj) in out_row.iter_mut().zip(b_row) {
                *o += a_ik * b_kj;
            }
        }
    }
    Ok(out)
}

/// Elementwise (Hadamard) product.
pub fn hadamard(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    a.check_same_shape("hadamard", b)?;
    let values = a.values.iter().zip(&b.values).map(|(x, y)| x * y).collect();
    Ok(DenseMatrix { values, ..*a })
}

/// Non-empty vector of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealVector(Vec<f64>);

impl RealVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("vector must be non-empty".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len >= 1, "vector must be non-empty");
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::ShapeMismatch {
                op: "dot",
                left_rows: self.len(),
                left_cols: 1,
                right_rows: other.len(),
                right_cols: 1,
            });
        }
        Ok(dot(&self.0, &other.0))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for RealVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pointwise nonlinearity applied after a cross layer or at the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative with respect to the pre-activation `x`. Relu uses 0 at the kink.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "linear" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::InvalidConfig(format!("unknown activation `{other}`"))),
        }
    }
}

/// Logistic function, branched so `exp` never overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Deterministic random stream (xoshiro256++ seeded through splitmix64).
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: Xoshiro256PlusPlus,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Standard normal draw.
    #[inline]
    pub fn next_gaussian(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `[low, high)`.
    #[inline]
    pub fn next_range(&mut self, low: usize, high: usize) -> usize {
        self.inner.gen_range(low..high)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.gen()
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.next_range(0, i + 1);
            idx.swap(i, j);
        }
        idx
    }

    /// Child stream for a sub-task, so consumers do not perturb each other.
    pub fn fork(&mut self) -> SeededRng {
        SeededRng::new(self.next_u64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_product(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    #[test]
    fn matmul_identity_and_hand_cases() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(matmul(&DenseMatrix::identity(2), &a).unwrap(), a);
        assert_eq!(matmul(&a, &DenseMatrix::identity(2)).unwrap(), a);

        let row = DenseMatrix::from_rows(&[vec![1.0, 2.0]]);
        let col = DenseMatrix::from_rows(&[vec![3.0], vec![4.0]]);
        assert_eq!(matmul(&row, &col).unwrap().values(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = SeededRng::new(7);
        let a = DenseMatrix::gaussian(5, 4, 1.0, &mut rng);
        let b = DenseMatrix::gaussian(4, 3, 1.0, &mut rng);
        let fast = matmul(&a, &b).unwrap();
        let slow = naive_product(&a, &b);
        for (x, y) in fast.values().iter().zip(slow.values()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn matmul_rejects_bad_shapes_naming_both() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(2, 3);
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn hadamard_cases() {
        let mut rng = SeededRng::new(1);
        let a = DenseMatrix::gaussian(3, 2, 1.0, &mut rng);
        assert_eq!(hadamard(&a, &DenseMatrix::filled(3, 2, 1.0)).unwrap(), a);
        assert_eq!(
            hadamard(&a, &DenseMatrix::zeros(3, 2)).unwrap(),
            DenseMatrix::zeros(3, 2)
        );
        let v = DenseMatrix::from_rows(&[vec![2.0, 3.0]]);
        assert_eq!(hadamard(&v, &v).unwrap().values(), &[4.0, 9.0]);
        assert!(hadamard(&a, &DenseMatrix::zeros(2, 3)).is_err());

        let b = DenseMatrix::gaussian(3, 2, 1.0, &mut rng);
        let ab = hadamard(&a, &b).unwrap();
        assert_eq!(ab, hadamard(&b, &a).unwrap());
        for i in 0..6 {
            assert_eq!(ab.values()[i], a.values()[i] * b.values()[i]);
        }
    }

    #[test]
    fn activation_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(Activation::Relu.apply(-3.0), 0.0);
        assert_eq!(Activation::Relu.derivative(-3.0), 0.0);
        let tiny = sigmoid(-710.0);
        assert!(tiny.is_finite() && tiny > 0.0 && tiny <= 1e-300, "{tiny}");
        assert!(sigmoid(710.0) == 1.0);
    }

    #[test]
    fn stable_sigmoid_matches_reference_at_moderate_inputs() {
        // Reference: 1/(1+e^-x) is accurate for |x| <= 30 in f64.
        for i in -300..=300 {
            let x = i as f64 / 10.0;
            let reference = 1.0 / (1.0 + (-x).exp());
            assert!((sigmoid(x) - reference).abs() <= 1e-15 * reference.max(1e-300) + 1e-17);
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-6;
        for kind in [Activation::Identity, Activation::Relu, Activation::Sigmoid] {
            for i in -100..=100 {
                let x = i as f64 / 10.0 + 0.013;
                // For sigmoid at x > 0 difference the complement 1 - s(x) = s(-x),
                // which avoids cancelling against values near 1.
                let fd = if kind == Activation::Sigmoid && x > 0.0 {
                    (sigmoid(-x + h) - sigmoid(-x - h)) / (2.0 * h)
                } else {
                    (kind.apply(x + h) - kind.apply(x - h)) / (2.0 * h)
                };
                let an = kind.derivative(x);
                let rel = if an == 0.0 { fd.abs() } else { (fd - an).abs() / an.abs() };
                assert!(rel < 1e-6, "{kind:?} at {x}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
    }

    #[test]
    fn rng_is_deterministic() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        let xs: Vec<f64> = (0..100).map(|_| a.next_uniform()).collect();
        let ys: Vec<f64> = (0..100).map(|_| b.next_uniform()).collect();
        assert_eq!(xs, ys);
        assert!(xs.iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn rng_moments() {
        let mut rng = SeededRng::new(2024);
        let n = 1_000_000;
        let mean = (0..n).map(|_| rng.next_uniform()).sum::<f64>() / n as f64;
        assert!((0.498..=0.502).contains(&mean), "{mean}");

        let draws: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((0.99..=1.01).contains(&var), "{var}");
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut rng = SeededRng::new(3);
        let mut p = rng.permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }
}
