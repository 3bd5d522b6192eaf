//! Exact linear algebra over Q: incremental fraction-free echelon forms,
//! reduced row echelon form, and dense and sparse nullspaces.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::symcore::Rational;

/// Scales a rational row to a primitive integer row.
fn primitive_from_rationals(row: &[Rational]) -> Vec<BigInt> {
    let mut l = BigInt::one();
    for v in row {
        if !v.is_zero() {
            l = l.lcm(v.denom());
        }
    }
    let ints: Vec<BigInt> = row.iter().map(|v| (v * Rational::from_integer(l.clone())).to_integer()).collect();
    make_primitive(ints)
}

fn make_primitive(mut row: Vec<BigInt>) -> Vec<BigInt> {
    let mut g = BigInt::zero();
    for v in &row {
        if !v.is_zero() {
            g = g.gcd(v);
            if g.is_one() {
                break;
            }
        }
    }
    if !g.is_zero() && !g.is_one() {
        for v in row.iter_mut() {
            *v = &*v / &g;
        }
    }
    if let Some(first) = row.iter().find(|v| !v.is_zero()) {
        if first.is_negative() {
            for v in row.iter_mut() {
                *v = -&*v;
            }
        }
    }
    row
}

/// Row echelon form built one row at a time, with integer entries.
#[derive(Debug, Clone)]
pub struct Echelon {
    ncols: usize,
    /// (pivot column, row), kept sorted by pivot column.
    rows: Vec<(usize, Vec<BigInt>)>,
}

impl Echelon {
    pub fn new(ncols: usize) -> Echelon {
        Echelon { ncols, rows: Vec::new() }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Adds a row; returns true if it increased the rank.
    pub fn insert(&mut self, row: &[Rational]) -> bool {
        assert_eq!(row.len(), self.ncols);
        let mut r = primitive_from_rationals(row);
        for (c, p) in &self.rows {
            if r[*c].is_zero() {
                continue;
            }
            let a = p[*c].clone();
            let b = r[*c].clone();
            for (x, y) in r.iter_mut().zip(p) {
                *x = &a * &*x - &b * y;
            }
            r = make_primitive(r);
        }
        match r.iter().position(|v| !v.is_zero()) {
            None => false,
            Some(c) => {
                let at = self.rows.partition_point(|(pc, _)| *pc < c);
                self.rows.insert(at, (c, r));
                true
            }
        }
    }

    /// Reduced row echelon form of the current row space.
    pub fn rref(&self) -> Rref {
        let rows: Vec<Vec<Rational>> =
            self.rows.iter().map(|(_, r)| r.iter().map(|v| Rational::from_integer(v.clone())).collect()).collect();
        rref(rows, self.ncols)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rref {
    pub rows: Vec<Vec<Rational>>,
    pub pivots: Vec<usize>,
    pub ncols: usize,
}

impl Rref {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn free_columns(&self) -> Vec<usize> {
        let p: BTreeSet<usize> = self.pivots.iter().copied().collect();
        (0..self.ncols).filter(|c| !p.contains(c)).collect()
    }

    /// True iff the unit vector `e_j` lies in the row space, i.e. deleting
    /// column `j` lowers the rank.
    pub fn unit_in_row_space(&self, j: usize) -> bool {
        let Some(i) = self.pivots.iter().position(|&p| p == j) else { return false };
        self.free_columns().iter().all(|&f| self.rows[i][f].is_zero())
    }

    pub fn nullspace(&self) -> Vec<Vec<Rational>> {
        let mut out = Vec::new();
        for f in self.free_columns() {
            let mut v = vec![Rational::zero(); self.ncols];
            v[f] = Rational::one();
            for (i, &p) in self.pivots.iter().enumerate() {
                v[p] = -self.rows[i][f].clone();
            }
            out.push(v);
        }
        out
    }
}

pub fn rref(mut rows: Vec<Vec<Rational>>, ncols: usize) -> Rref {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else { continue };
        rows.swap(r, p);
        let inv = rows[r][c].recip();
        for v in rows[r].iter_mut() {
            *v *= &inv;
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (x, y) in row.iter_mut().zip(&pivot_row) {
                if !y.is_zero() {
                    *x -= &f * y;
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    rows.truncate(r);
    Rref { rows, pivots, ncols }
}

/// Unique solution of `A x = b`, or `None` if the system is inconsistent
/// or underdetermined.
pub fn solve(a: &[Vec<Rational>], b: &[Rational]) -> Option<Vec<Rational>> {
    let n = a.first().map_or(0, |r| r.len());
    let rows: Vec<Vec<Rational>> = a.iter().zip(b).map(|(r, v)| r.iter().cloned().chain([v.clone()]).collect()).collect();
    let r = rref(rows, n + 1);
    if r.pivots.contains(&n) || r.rank() != n {
        return None;
    }
    Some(r.rows.iter().map(|row| row[n].clone()).collect())
}

pub fn rank(rows: &[Vec<Rational>], ncols: usize) -> usize {
    let mut e = Echelon::new(ncols);
    for r in rows {
        e.insert(r);
    }
    e.rank()
}

pub fn nullspace(rows: &[Vec<Rational>], ncols: usize) -> Vec<Vec<Rational>> {
    let mut e = Echelon::new(ncols);
    for r in rows {
        e.insert(r);
    }
    e.rref().nullspace()
}

/// Sparse row: column → nonzero value.
pub type SparseRow = BTreeMap<usize, Rational>;

/// Nullspace of a sparse system `A c = 0` in `ncols` unknowns.
///
/// Rows with a single entry fix that unknown to zero and are propagated
/// first; the rest is eliminated with short-row, rare-column pivoting.
/// Returns sparse basis vectors, one per free unknown.
pub fn sparse_nullspace(rows: Vec<SparseRow>, ncols: usize) -> Vec<SparseRow> {
    let mut rows: Vec<SparseRow> = rows.into_iter().filter(|r| !r.is_empty()).collect();
    let mut zero: BTreeSet<usize> = BTreeSet::new();

    // Singleton propagation.
    loop {
        let mut found = false;
        for r in rows.iter() {
            if r.len() == 1 {
                zero.insert(*r.keys().next().unwrap());
                found = true;
            }
        }
        if !found {
            break;
        }
        for r in rows.iter_mut() {
            r.retain(|c, _| !zero.contains(c));
        }
        rows.retain(|r| !r.is_empty());
    }

    // Deduplicate up to scaling.
    let mut seen: BTreeSet<Vec<(usize, Rational)>> = BTreeSet::new();
    rows.retain(|r| {
        let lead = r.values().next().unwrap().clone();
        let key: Vec<(usize, Rational)> = r.iter().map(|(c, v)| (*c, v / &lead)).collect();
        seen.insert(key)
    });

    let mut col_rows: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        for c in r.keys() {
            col_rows.entry(*c).or_default().insert(i);
        }
    }
    let mut alive: BTreeSet<(usize, usize)> = rows.iter().enumerate().map(|(i, r)| (r.len(), i)).collect();
    // Each pivot: (column, row with pivot coefficient 1).
    let mut pivots: Vec<(usize, SparseRow)> = Vec::new();

    while let Some(&(len, i)) = alive.iter().next() {
        alive.remove(&(len, i));
        let row = std::mem::take(&mut rows[i]);
        if row.is_empty() {
            continue;
        }
        // Pivot on the column with the fewest other occurrences.
        let c = *row.keys().min_by_key(|c| (col_rows.get(c).map_or(0, |s| s.len()), **c)).unwrap();
        let inv = row[&c].recip();
        let prow: SparseRow = row.iter().map(|(k, v)| (*k, v * &inv)).collect();
        for k in row.keys() {
            if let Some(s) = col_rows.get_mut(k) {
                s.remove(&i);
            }
        }
        let users: Vec<usize> = col_rows.get(&c).map(|s| s.iter().copied().collect()).unwrap_or_default();
        for j in users {
            let old_len = rows[j].len();
            let f = rows[j][&c].clone();
            for (k, v) in &prow {
                let slot = rows[j].entry(*k).or_insert_with(Rational::zero);
                *slot -= &f * v;
                if slot.is_zero() {
                    rows[j].remove(k);
                    if let Some(s) = col_rows.get_mut(k) {
                        s.remove(&j);
                    }
                } else {
                    col_rows.entry(*k).or_default().insert(j);
                }
            }
            alive.remove(&(old_len, j));
            if !rows[j].is_empty() {
                alive.insert((rows[j].len(), j));
            }
        }
        col_rows.remove(&c);
        pivots.push((c, prow));
    }

    // Back substitution: express each pivot unknown through free unknowns.
    let pivot_cols: BTreeSet<usize> = pivots.iter().map(|(c, _)| *c).collect();
    let mut solved: BTreeMap<usize, SparseRow> = BTreeMap::new();
    for (c, row) in pivots.iter().rev() {
        // c = -Σ_{k≠c} row[k] x_k
        let mut expr: SparseRow = BTreeMap::new();
        for (k, v) in row {
            if *k == *c {
                continue;
            }
            if let Some(sub) = solved.get(k) {
                for (f, w) in sub {
                    let slot = expr.entry(*f).or_insert_with(Rational::zero);
                    *slot -= v * w;
                }
            } else {
                let slot = expr.entry(*k).or_insert_with(Rational::zero);
                *slot -= v;
            }
        }
        expr.retain(|_, v| !v.is_zero());
        solved.insert(*c, expr);
    }

    let mut basis = Vec::new();
    for f in 0..ncols {
        if zero.contains(&f) || pivot_cols.contains(&f) {
            continue;
        }
        let mut v: SparseRow = BTreeMap::new();
        v.insert(f, Rational::one());
        for (c, expr) in &solved {
            if let Some(w) = expr.get(&f) {
                v.insert(*c, w.clone());
            }
        }
        basis.push(v);
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcore::{rat, ratio};

    fn r(v: &[i64]) -> Vec<Rational> {
        v.iter().map(|&x| rat(x)).collect()
    }

    #[test]
    fn rank_of_dependent_rows() {
        let m = vec![r(&[1, 2, 3]), r(&[2, 4, 6]), r(&[0, 1, 1])];
        assert_eq!(rank(&m, 3), 2);
        assert_eq!(rank(&[], 3), 0);
        assert_eq!(rank(&[r(&[0, 0])], 2), 0);
    }

    #[test]
    fn unit_vector_membership_matches_column_deletion() {
        let m = vec![r(&[1, 0, 0, 0]), r(&[0, 1, 1, 0]), r(&[0, 0, 0, 1])];
        let mut e = Echelon::new(4);
        for row in &m {
            e.insert(row);
        }
        let f = e.rref();
        for j in 0..4 {
            let deleted: Vec<Vec<Rational>> =
                m.iter().map(|row| row.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, v)| v.clone()).collect()).collect();
            let drops = rank(&deleted, 3) < 3;
            assert_eq!(f.unit_in_row_space(j), drops, "column {j}");
        }
    }

    #[test]
    fn dense_nullspace() {
        let m = vec![vec![rat(1), ratio(1, 2), rat(0)], vec![rat(0), rat(0), rat(1)]];
        let n = nullspace(&m, 3);
        assert_eq!(n, vec![vec![ratio(-1, 2), rat(1), rat(0)]]);
    }

    #[test]
    fn sparse_matches_dense() {
        let dense = vec![r(&[1, -1, 0, 0, 0]), r(&[0, 0, 1, 0, 0]), r(&[0, 1, 0, -1, 0]), r(&[2, -2, 0, 0, 0])];
        let sparse: Vec<SparseRow> = dense
            .iter()
            .map(|row| row.iter().enumerate().filter(|(_, v)| !v.is_zero()).map(|(c, v)| (c, v.clone())).collect())
            .collect();
        let basis = sparse_nullspace(sparse, 5);
        assert_eq!(basis.len(), 2);
        for v in &basis {
            for row in &dense {
                let dot: Rational = v.iter().map(|(c, x)| x * &row[*c]).sum();
                assert!(dot.is_zero());
            }
        }
    }
}
