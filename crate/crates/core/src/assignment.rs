//! Rectangular linear assignment with forbidden entries.
//!
//! The objective is lexicographic: first the number of matched pairs is
//! maximized, then the summed cost of those pairs is minimized. Internally
//! the Hungarian algorithm runs on `(misses, cost)` pairs, which form an
//! ordered group, so no big-M penalty leaks into the floating point cost.

use std::cmp::Ordering;
use std::ops::{Add, Sub};

/// Costs within this absolute distance of the optimum count as ties.
pub const TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Option<f64>>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![None; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Self {
        let mut m = Self::new(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `None` marks a forbidden pair.
    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, cost: Option<f64>) {
        debug_assert!(cost.is_none_or(|x| x.is_finite()));
        self.data[r * self.cols + c] = cost;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

impl Assignment {
    fn from_pairs(m: &CostMatrix, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        let total_cost = pairs.iter().map(|&(r, c)| m.get(r, c).unwrap_or(0.0)).sum();
        Self { pairs, total_cost }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct LexCost {
    misses: i64,
    value: f64,
}

impl LexCost {
    const ZERO: Self = Self { misses: 0, value: 0.0 };
    const INF: Self = Self {
        misses: i64::MAX / 4,
        value: 0.0,
    };
}

impl Add for LexCost {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            misses: self.misses + o.misses,
            value: self.value + o.value,
        }
    }
}

impl Sub for LexCost {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            misses: self.misses - o.misses,
            value: self.value - o.value,
        }
    }
}

/// Hungarian algorithm (potentials + augmenting shortest paths) on an
/// `n x n` matrix. Returns the column assigned to each row.
fn hungarian(n: usize, cost: impl Fn(usize, usize) -> LexCost) -> Vec<usize> {
    let mut u = vec![LexCost::ZERO; n + 1];
    let mut v = vec![LexCost::ZERO; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![LexCost::INF; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.fill(LexCost::INF);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = LexCost::INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Optimal matching restricted to a subset of rows and columns.
/// Returns `(pairs, summed cost)`.
fn solve_subset(m: &CostMatrix, rows: &[usize], cols: &[usize]) -> (Vec<(usize, usize)>, f64) {
    let n = rows.len().max(cols.len());
    if n == 0 || rows.is_empty() || cols.is_empty() {
        return (Vec::new(), 0.0);
    }
    let entry = |a: usize, b: usize| -> Option<f64> {
        if a < rows.len() && b < cols.len() {
            m.get(rows[a], cols[b])
        } else {
            None
        }
    };
    let assign = hungarian(n, |a, b| match entry(a, b) {
        Some(value) => LexCost { misses: 0, value },
        None => LexCost { misses: 1, value: 0.0 },
    });
    let mut pairs = Vec::new();
    let mut total = 0.0;
    for (a, &b) in assign.iter().enumerate() {
        if let Some(c) = entry(a, b) {
            pairs.push((rows[a], cols[b]));
            total += c;
        }
    }
    (pairs, total)
}

/// Maximum-cardinality, minimum-cost matching. Among equal optima the choice
/// is whatever the solver lands on; see [`solve_lexicographic`] for a
/// canonical result.
pub fn solve(m: &CostMatrix) -> Assignment {
    let rows: Vec<usize> = (0..m.rows).collect();
    let cols: Vec<usize> = (0..m.cols).collect();
    let (pairs, _) = solve_subset(m, &rows, &cols);
    Assignment::from_pairs(m, pairs)
}

/// Like [`solve`], but among all optimal matchings (cost within
/// [`TIE_EPSILON`]) returns the one whose sorted pair list is
/// lexicographically smallest.
pub fn solve_lexicographic(m: &CostMatrix) -> Assignment {
    let all_rows: Vec<usize> = (0..m.rows).collect();
    let all_cols: Vec<usize> = (0..m.cols).collect();
    let (initial, best_cost) = solve_subset(m, &all_rows, &all_cols);
    let best_card = initial.len();

    let mut current: Vec<Option<usize>> = vec![None; m.rows];
    for &(r, c) in &initial {
        current[r] = Some(c);
    }
    let mut fixed: Vec<(usize, usize)> = Vec::with_capacity(best_card);
    let mut fixed_cost = 0.0;
    let mut free_cols = all_cols;

    for row in 0..m.rows {
        let remaining_rows: Vec<usize> = (row + 1..m.rows).collect();
        let mut chosen = None;
        for (slot, &col) in free_cols.iter().enumerate() {
            if current[row] == Some(col) {
                chosen = Some((slot, col, None));
                break;
            }
            let Some(c) = m.get(row, col) else { continue };
            let mut rest_cols = free_cols.clone();
            rest_cols.remove(slot);
            let (rest, rest_cost) = solve_subset(m, &remaining_rows, &rest_cols);
            let card = fixed.len() + 1 + rest.len();
            let cost = fixed_cost + c + rest_cost;
            if card == best_card && cost <= best_cost + TIE_EPSILON {
                chosen = Some((slot, col, Some(rest)));
                break;
            }
        }
        if let Some((slot, col, rest)) = chosen {
            fixed.push((row, col));
            fixed_cost += m.get(row, col).unwrap_or(0.0);
            free_cols.remove(slot);
            if let Some(rest) = rest {
                current.fill(None);
                for &(r, c) in fixed.iter().chain(rest.iter()) {
                    current[r] = Some(c);
                }
            }
        }
    }
    Assignment::from_pairs(m, fixed)
}

/// Exhaustive search over every injective matching of allowed pairs, with
/// the same objective and tie rule as [`solve_lexicographic`]. Exponential
/// in the smaller dimension; meant as a test oracle.
pub fn brute_force(m: &CostMatrix) -> Assignment {
    // enumerate over the smaller side, report pairs as (row, col)
    let transposed = m.rows > m.cols;
    let (outer, inner) = if transposed { (m.cols, m.rows) } else { (m.rows, m.cols) };
    let cost_of = |o: usize, i: usize| if transposed { m.get(i, o) } else { m.get(o, i) };

    type Visitor<'f> = dyn FnMut(&[(usize, usize)]) + 'f;

    struct Search<'a> {
        outer: usize,
        inner: usize,
        cost_of: &'a dyn Fn(usize, usize) -> Option<f64>,
        used: Vec<bool>,
        stack: Vec<(usize, usize)>,
    }

    impl Search<'_> {
        fn visit(&mut self, o: usize, f: &mut Visitor<'_>) {
            if o == self.outer {
                f(&self.stack);
                return;
            }
            for i in 0..self.inner {
                if self.used[i] || (self.cost_of)(o, i).is_none() {
                    continue;
                }
                self.used[i] = true;
                self.stack.push((o, i));
                self.visit(o + 1, f);
                self.stack.pop();
                self.used[i] = false;
            }
            self.visit(o + 1, f);
        }
    }

    let canonical = |pairs: &[(usize, usize)]| -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = pairs
            .iter()
            .map(|&(o, i)| if transposed { (i, o) } else { (o, i) })
            .collect();
        v.sort_unstable();
        v
    };
    let total = |pairs: &[(usize, usize)]| -> f64 { pairs.iter().map(|&(r, c)| m.get(r, c).unwrap_or(0.0)).sum() };
    let mut search = Search {
        outer,
        inner,
        cost_of: &cost_of,
        used: vec![false; inner],
        stack: Vec::new(),
    };

    let mut best_card = 0usize;
    let mut best_cost = 0.0f64;
    search.visit(0, &mut |pairs| {
        let cost = total(&canonical(pairs));
        if pairs.len() > best_card || (pairs.len() == best_card && cost < best_cost) {
            best_card = pairs.len();
            best_cost = cost;
        }
    });

    let mut winner: Option<Vec<(usize, usize)>> = None;
    search.visit(0, &mut |pairs| {
        if pairs.len() != best_card {
            return;
        }
        let pairs = canonical(pairs);
        if total(&pairs) > best_cost + TIE_EPSILON {
            return;
        }
        let better = match &winner {
            None => true,
            Some(w) => pairs.cmp(w) == Ordering::Less,
        };
        if better {
            winner = Some(pairs);
        }
    });
    Assignment::from_pairs(m, winner.unwrap_or_default())
}
