//! Compressed sparse row storage, generic over the entry type.

use rug::Float;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Clone> CsrMatrix<T> {
    /// Builds from per-row `(col, value)` lists. Columns are sorted; repeated
    /// columns are merged with `merge`.
    pub fn from_rows(rows: usize, cols: usize, mut entries: Vec<Vec<(usize, T)>>, merge: impl Fn(&mut T, T)) -> Self {
        assert_eq!(entries.len(), rows, "row count mismatch");
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut values: Vec<T> = Vec::new();
        row_ptr.push(0);
        for row in entries.iter_mut() {
            row.sort_by_key(|e| e.0);
            let start = col_idx.len();
            for (c, v) in row.drain(..) {
                assert!(c < cols, "column {c} out of range");
                if col_idx.len() > start && *col_idx.last().unwrap() == c {
                    merge(values.last_mut().unwrap(), v);
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { rows, cols, row_ptr, col_idx, values }
    }

    pub fn from_triplets(rows: usize, cols: usize, triplets: Vec<(usize, usize, T)>, merge: impl Fn(&mut T, T)) -> Self {
        let mut entries = vec![Vec::new(); rows];
        for (r, c, v) in triplets {
            entries[r].push((c, v));
        }
        CsrMatrix::from_rows(rows, cols, entries, merge)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&T> {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).ok().map(|k| &vals[k])
    }

    pub fn max_row_nnz(&self) -> usize {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.rows)
            .flat_map(|i| self.row(i).0.iter().map(move |&j| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> CsrMatrix<U> {
        CsrMatrix {
            rows: self.rows,
            cols: self.cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }

    /// Applies `f(row, col, value)` to every stored entry.
    pub fn map_indexed<U>(&self, mut f: impl FnMut(usize, usize, &T) -> U) -> CsrMatrix<U> {
        let mut values = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&j, v) in cols.iter().zip(vals) {
                values.push(f(i, j, v));
            }
        }
        CsrMatrix { rows: self.rows, cols: self.cols, row_ptr: self.row_ptr.clone(), col_idx: self.col_idx.clone(), values }
    }

    pub fn transpose(&self) -> CsrMatrix<T> {
        let mut entries: Vec<Vec<(usize, T)>> = vec![Vec::new(); self.cols];
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&j, v) in cols.iter().zip(vals) {
                entries[j].push((i, v.clone()));
            }
        }
        CsrMatrix::from_rows(self.cols, self.rows, entries, |_, _| unreachable!("duplicate entry"))
    }

    pub fn same_pattern<U>(&self, other: &CsrMatrix<U>) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, &T)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, v)| (i, j, v))
        })
    }
}

impl CsrMatrix<Float> {
    pub fn mul_vec(&self, x: &[Float], prec: u32) -> Vec<Float> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                let mut acc = Float::new(prec);
                for (&j, a) in cols.iter().zip(vals) {
                    acc += a * &x[j];
                }
                acc
            })
            .collect()
    }

    /// Kronecker product `a ⊗ b`: entry `((i1, i2), (j1, j2)) = a[i1,j1] * b[i2,j2]`
    /// with the second index running fastest.
    pub fn kron(a: &CsrMatrix<Float>, b: &CsrMatrix<Float>, prec: u32) -> CsrMatrix<Float> {
        let rows = a.rows * b.rows;
        let cols = a.cols * b.cols;
        let mut entries = Vec::with_capacity(rows);
        for i1 in 0..a.rows {
            let (ac, av) = a.row(i1);
            for i2 in 0..b.rows {
                let (bc, bv) = b.row(i2);
                let mut row = Vec::with_capacity(ac.len() * bc.len());
                for (&j1, x) in ac.iter().zip(av) {
                    for (&j2, y) in bc.iter().zip(bv) {
                        row.push((j1 * b.cols + j2, Float::with_val(prec, x * y)));
                    }
                }
                entries.push(row);
            }
        }
        CsrMatrix::from_rows(rows, cols, entries, |_, _| unreachable!("duplicate entry"))
    }

    pub fn add(&self, other: &CsrMatrix<Float>) -> CsrMatrix<Float> {
        assert!(self.rows == other.rows && self.cols == other.cols);
        let mut entries = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let (c1, v1) = self.row(i);
            let (c2, v2) = other.row(i);
            let mut row: Vec<(usize, Float)> = c1.iter().copied().zip(v1.iter().cloned()).collect();
            row.extend(c2.iter().copied().zip(v2.iter().cloned()));
            entries.push(row);
        }
        CsrMatrix::from_rows(self.rows, self.cols, entries, |a, b| *a += b)
    }

    pub fn diagonal(&self) -> Vec<Float> {
        (0..self.rows).map(|i| self.get(i, i).cloned().expect("missing diagonal entry")).collect()
    }

    /// `max_i sum_j |a_ij|`.
    pub fn inf_norm(&self, prec: u32) -> Float {
        let mut best = Float::new(prec);
        for i in 0..self.rows {
            let mut s = Float::new(prec);
            for v in self.row(i).1 {
                s += v.clone().abs();
            }
            if s > best {
                best = s;
            }
        }
        best
    }

    /// `diag(left) * self * diag(right)`, either side optional.
    pub fn scale(&self, left: Option<&[Float]>, right: Option<&[Float]>, prec: u32) -> CsrMatrix<Float> {
        self.map_indexed(|i, j, v| {
            let mut out = Float::with_val(prec, v);
            if let Some(l) = left {
                out *= &l[i];
            }
            if let Some(r) = right {
                out *= &r[j];
            }
            out
        })
    }

    pub fn to_f64(&self) -> CsrMatrix<f64> {
        self.map(Float::to_f64)
    }
}

impl CsrMatrix<f64> {
    pub fn mul_vec_f64(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, a)| a * x[j]).sum()
            })
            .collect()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for (i, j, v) in self.triplets() {
            out[i * self.cols + j] = *v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(v: f64) -> Float {
        Float::with_val(64, v)
    }

    fn lap(n: usize) -> CsrMatrix<Float> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, f(2.0)));
            if i > 0 {
                t.push((i, i - 1, f(-1.0)));
            }
            if i + 1 < n {
                t.push((i, i + 1, f(-1.0)));
            }
        }
        CsrMatrix::from_triplets(n, n, t, |a, b| *a += b)
    }

    #[test]
    fn structure_queries() {
        let a = lap(5);
        assert_eq!(a.nnz(), 13);
        assert_eq!(a.max_row_nnz(), 3);
        assert_eq!(a.bandwidth(), 1);
        assert_eq!(a.get(2, 1).unwrap().to_f64(), -1.0);
        assert!(a.get(0, 4).is_none());
        assert_eq!(a.transpose(), a);
        assert_eq!(a.inf_norm(64).to_f64(), 4.0);
    }

    #[test]
    fn duplicates_merge() {
        let m = CsrMatrix::from_triplets(1, 2, vec![(0, 1, f(1.0)), (0, 1, f(2.5))], |a, b| *a += b);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 1).unwrap().to_f64(), 3.5);
    }

    #[test]
    fn kron_and_add() {
        let a = lap(3);
        let id = CsrMatrix::from_triplets(2, 2, vec![(0, 0, f(1.0)), (1, 1, f(1.0))], |a, b| *a += b);
        let k = CsrMatrix::kron(&a, &id, 64);
        assert_eq!((k.rows(), k.nnz()), (6, 14));
        assert_eq!(k.get(2, 0).unwrap().to_f64(), -1.0);
        let s = k.add(&CsrMatrix::kron(&id, &a, 64));
        assert_eq!(s.get(0, 0).unwrap().to_f64(), 4.0);
        let y = s.mul_vec(&vec![f(1.0); 6], 64);
        assert_eq!(y.iter().map(Float::to_f64).collect::<Vec<_>>(), vec![2.0, 1.0, 1.0, 1.0, 1.0, 2.0]);
    }
}
