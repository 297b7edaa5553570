use std::sync::Arc;

/// Boolean sparse matrix in compressed sparse row form. Column indices in
/// each row are sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoolCsr {
    n_rows: usize,
    n_cols: usize,
    offsets: Arc<[usize]>,
    cols: Arc<[usize]>,
    /// Row of each stored entry, parallel to `cols`.
    entry_rows: Arc<[usize]>,
}

impl BoolCsr {
    /// Builds from `(row, col)` pairs; duplicates are merged.
    pub fn from_pairs(
        n_rows: usize,
        n_cols: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n_rows];
        for (r, c) in pairs {
            assert!(
                r < n_rows && c < n_cols,
                "entry ({r}, {c}) outside {n_rows}x{n_cols}"
            );
            rows[r].push(c);
        }
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
        }
        Self::from_sorted_rows(n_cols, rows)
    }

    fn from_sorted_rows(n_cols: usize, rows: Vec<Vec<usize>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut entry_rows = Vec::new();
        offsets.push(0);
        for (r, row) in rows.iter().enumerate() {
            cols.extend_from_slice(row);
            entry_rows.extend(std::iter::repeat_n(r, row.len()));
            offsets.push(cols.len());
        }
        BoolCsr {
            n_rows: rows.len(),
            n_cols,
            offsets: offsets.into(),
            cols: cols.into(),
            entry_rows: entry_rows.into(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_sorted_rows(n, (0..n).map(|i| vec![i]).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.cols[self.offsets[r]..self.offsets[r + 1]]
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.row(r).binary_search(&c).is_ok()
    }

    pub fn offsets(&self) -> &Arc<[usize]> {
        &self.offsets
    }

    pub fn cols(&self) -> &Arc<[usize]> {
        &self.cols
    }

    pub fn entry_rows(&self) -> &Arc<[usize]> {
        &self.entry_rows
    }

    /// Boolean product `self · other`: entry `(i, k)` is set when some `j`
    /// has both `(i, j)` and `(j, k)`.
    pub fn compose(&self, other: &BoolCsr) -> BoolCsr {
        assert_eq!(
            self.n_cols, other.n_rows,
            "compose: inner dimensions differ"
        );
        let mut marker = vec![usize::MAX; other.n_cols];
        let mut rows = Vec::with_capacity(self.n_rows);
        for i in 0..self.n_rows {
            let mut row = Vec::new();
            for &j in self.row(i) {
                for &k in other.row(j) {
                    if marker[k] != i {
                        marker[k] = i;
                        row.push(k);
                    }
                }
            }
            row.sort_unstable();
            rows.push(row);
        }
        Self::from_sorted_rows(other.n_cols, rows)
    }

    /// Elementwise OR with the identity. Requires a square matrix.
    pub fn with_diagonal(&self) -> BoolCsr {
        assert_eq!(self.n_rows, self.n_cols, "with_diagonal: matrix not square");
        let rows = (0..self.n_rows)
            .map(|i| {
                let mut row = self.row(i).to_vec();
                if let Err(pos) = row.binary_search(&i) {
                    row.insert(pos, i);
                }
                row
            })
            .collect();
        Self::from_sorted_rows(self.n_cols, rows)
    }

    pub fn transpose(&self) -> BoolCsr {
        let pairs = (0..self.n_rows).flat_map(|r| self.row(r).iter().map(move |&c| (c, r)));
        BoolCsr::from_pairs(self.n_cols, self.n_rows, pairs)
    }
}
