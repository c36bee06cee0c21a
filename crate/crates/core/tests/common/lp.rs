//! Exact rational simplex, written independently of the library's
//! elimination code so the two can be checked against each other.

use num_traits::{One, Signed, Zero};
use tbcover::lincons::Endpoint;
use tbcover::rational::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Lt,
    Eq,
}

/// `coeffs · x + constant CMP 0`
#[derive(Clone, Debug)]
pub struct Row {
    pub coeffs: Vec<Rational>,
    pub constant: Rational,
    pub cmp: Cmp,
}

#[derive(Debug, PartialEq)]
pub enum Lp {
    Infeasible,
    Unbounded,
    Max(Rational),
}

struct Tableau {
    rows: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    z: Vec<Rational>,
}

impl Tableau {
    fn width(&self) -> usize {
        self.z.len() - 1
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let p = self.rows[r][j].clone();
        for v in self.rows[r].iter_mut() {
            *v = &*v / &p;
        }
        let pivot_row = self.rows[r].clone();
        let reduce = |row: &mut Vec<Rational>| {
            let f = row[j].clone();
            if !f.is_zero() {
                for (v, q) in row.iter_mut().zip(&pivot_row) {
                    *v = &*v - &(&f * q);
                }
            }
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                reduce(row);
            }
        }
        reduce(&mut self.z);
        self.basis[r] = j;
    }

    /// Bland's rule. Returns false when the objective is unbounded.
    fn run(&mut self, allowed: impl Fn(usize) -> bool) -> bool {
        let rhs = self.width();
        loop {
            let Some(j) = (0..rhs).find(|&j| allowed(j) && self.z[j].is_negative()) else {
                return true;
            };
            let mut best: Option<(Rational, usize, usize)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[j].is_positive() {
                    let ratio = &row[rhs] / &row[j];
                    let better = match &best {
                        None => true,
                        Some((b, _, bv)) => ratio < *b || (ratio == *b && self.basis[i] < *bv),
                    };
                    if better {
                        best = Some((ratio, i, self.basis[i]));
                    }
                }
            }
            let Some((_, r, _)) = best else { return false };
            self.pivot(r, j);
        }
    }

    fn price(&mut self) {
        for r in 0..self.rows.len() {
            let j = self.basis[r];
            let f = self.z[j].clone();
            if !f.is_zero() {
                for k in 0..self.z.len() {
                    self.z[k] = &self.z[k] - &(&f * &self.rows[r][k]);
                }
            }
        }
    }
}

/// Maximizes `c · x` over `a_i · x <= b_i` with `x` unrestricted in sign.
pub fn lp_max(a: &[Vec<Rational>], b: &[Rational], c: &[Rational]) -> Lp {
    let n = c.len();
    let m = a.len();
    let art = 2 * n + m;
    let width = art + 1;
    let mut rows = Vec::with_capacity(m);
    for (i, (ai, bi)) in a.iter().zip(b).enumerate() {
        let mut row = vec![Rational::zero(); width + 1];
        for k in 0..n {
            row[k] = ai[k].clone();
            row[n + k] = -ai[k].clone();
        }
        row[2 * n + i] = Rational::one();
        row[art] = -Rational::one();
        row[width] = bi.clone();
        rows.push(row);
    }
    let mut t = Tableau {
        rows,
        basis: (0..m).map(|i| 2 * n + i).collect(),
        z: vec![Rational::zero(); width + 1],
    };

    if let Some(r) = (0..m)
        .filter(|&i| t.rows[i][width].is_negative())
        .min_by(|&x, &y| t.rows[x][width].cmp(&t.rows[y][width]))
    {
        // maximize -art
        t.z[art] = Rational::one();
        t.pivot(r, art);
        t.price();
        t.run(|_| true);
        if t.z[width].is_negative() {
            return Lp::Infeasible;
        }
        if let Some(r) = t.basis.iter().position(|&j| j == art) {
            match (0..art).find(|&j| !t.rows[r][j].is_zero()) {
                Some(j) => t.pivot(r, j),
                None => {
                    t.rows.remove(r);
                    t.basis.remove(r);
                }
            }
        }
    }

    t.z = vec![Rational::zero(); width + 1];
    for k in 0..n {
        t.z[k] = -c[k].clone();
        t.z[n + k] = c[k].clone();
    }
    t.price();
    if !t.run(|j| j != art) {
        return Lp::Unbounded;
    }
    Lp::Max(t.z[width].clone())
}

fn closed_rows(sys: &[Row], n: usize, eps: bool) -> (Vec<Vec<Rational>>, Vec<Rational>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    let width = if eps { n + 1 } else { n };
    for row in sys {
        let mut coeffs = row.coeffs.clone();
        coeffs.resize(width, Rational::zero());
        if eps && row.cmp == Cmp::Lt {
            coeffs[n] = Rational::one();
        }
        a.push(coeffs.clone());
        b.push(-row.constant.clone());
        if row.cmp == Cmp::Eq {
            a.push(coeffs.iter().map(|v| -v.clone()).collect());
            b.push(row.constant.clone());
        }
    }
    (a, b)
}

/// Satisfiability with strict rows: maximize a slack `e <= 1` added to every
/// strict row; the system is satisfiable iff the optimum is positive.
pub fn sat(sys: &[Row], n: usize) -> bool {
    let (mut a, mut b) = closed_rows(sys, n, true);
    let mut cap = vec![Rational::zero(); n + 1];
    cap[n] = Rational::one();
    a.push(cap.clone());
    b.push(Rational::one());
    matches!(lp_max(&a, &b, &cap), Lp::Max(v) if v.is_positive())
}

/// Negation of a single row as a disjunction of rows.
pub fn negate(row: &Row) -> Vec<Row> {
    let flip = |cmp| Row {
        coeffs: row.coeffs.iter().map(|v| -v.clone()).collect(),
        constant: -row.constant.clone(),
        cmp,
    };
    match row.cmp {
        Cmp::Le => vec![flip(Cmp::Lt)],
        Cmp::Lt => vec![flip(Cmp::Le)],
        Cmp::Eq => vec![
            Row {
                cmp: Cmp::Lt,
                ..row.clone()
            },
            flip(Cmp::Lt),
        ],
    }
}

pub fn implies(sys: &[Row], n: usize, row: &Row) -> bool {
    negate(row).into_iter().all(|piece| {
        let mut ext = sys.to_vec();
        ext.push(piece);
        !sat(&ext, n)
    })
}

/// Infimum and supremum of `f · x + f0`; `None` when unsatisfiable.
pub fn bounds(
    sys: &[Row],
    n: usize,
    f: &[Rational],
    f0: &Rational,
) -> Option<(Endpoint, Endpoint)> {
    if !sat(sys, n) {
        return None;
    }
    let (a, b) = closed_rows(sys, n, false);
    let side = |upper: bool| -> Endpoint {
        let dir: Vec<Rational> = f
            .iter()
            .map(|v| if upper { v.clone() } else { -v.clone() })
            .collect();
        match lp_max(&a, &b, &dir) {
            Lp::Unbounded => Endpoint::Infinite,
            Lp::Infeasible => unreachable!("satisfiable system has a feasible closure"),
            Lp::Max(v) => {
                let value = if upper { &v + f0 } else { -&v + f0 };
                let mut ext = sys.to_vec();
                ext.push(Row {
                    coeffs: f.to_vec(),
                    constant: f0 - &value,
                    cmp: Cmp::Eq,
                });
                if sat(&ext, n) {
                    Endpoint::Closed(value)
                } else {
                    Endpoint::Open(value)
                }
            }
        }
    };
    Some((side(false), side(true)))
}
