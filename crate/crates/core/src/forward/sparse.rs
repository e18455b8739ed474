use num_complex::Complex64;

/// Compressed sparse row matrix with a fixed pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl CsrMatrix {
    /// Zero matrix on the given pattern; each row's columns are sorted and deduplicated.
    pub fn from_pattern(n: usize, mut rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut().take(n) {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
        }
        row_ptr.resize(n + 1, cols.len());
        let vals = vec![Complex64::new(0.0, 0.0); cols.len()];
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    /// Adds `v` at `(i, j)`. Panics if `(i, j)` is outside the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: Complex64) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside sparsity pattern"));
        self.vals[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.position(i, j)
            .map_or(Complex64::new(0.0, 0.0), |k| self.vals[k])
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, a)| a * x[j]).sum())
            .collect()
    }

    /// Half bandwidth `max |i − j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    /// Whether `A[i][j] == A[j][i]` bit for bit.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, a)| self.get(j, i) == a))
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut d = vec![vec![Complex64::new(0.0, 0.0); self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, a) in self.row(i) {
                row[j] = a;
            }
        }
        d
    }

    /// Restriction to the rows and columns listed in `keep`, renumbered in that order.
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let mut index = vec![usize::MAX; self.n];
        for (k, &v) in keep.iter().enumerate() {
            index[v] = k;
        }
        let mut row_ptr = Vec::with_capacity(keep.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for &v in keep {
            let mut row: Vec<(usize, Complex64)> = self
                .row(v)
                .filter(|&(j, _)| index[j] != usize::MAX)
                .map(|(j, a)| (index[j], a))
                .collect();
            row.sort_by_key(|e| e.0);
            for (j, a) in row {
                cols.push(j);
                vals.push(a);
            }
            row_ptr.push(cols.len());
        }
        Self {
            n: keep.len(),
            row_ptr,
            cols,
            vals,
        }
    }
}

/// Bilinear form `xᵀ A y` without conjugation.
pub fn bilinear(a: &CsrMatrix, x: &[Complex64], y: &[Complex64]) -> Complex64 {
    (0..a.n())
        .map(|i| x[i] * a.row(i).map(|(j, v)| v * y[j]).sum::<Complex64>())
        .sum()
}

pub fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}
