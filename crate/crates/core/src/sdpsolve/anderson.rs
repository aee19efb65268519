//! Type-II Anderson acceleration for a fixed-point map on Hermitian
//! matrices, with the iterate flattened to real coordinates.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::scalar::Real;

pub(crate) struct Anderson<T: Real> {
    memory: usize,
    /// previous (iterate, map value)
    last: Option<(Vec<T>, Vec<T>)>,
    df: VecDeque<Vec<T>>,
    dg: VecDeque<Vec<T>>,
    /// Gram matrix of `df`, kept in step with the history
    gram: VecDeque<VecDeque<T>>,
}

pub(crate) fn flatten<T: Real>(a: &DMatrix<Complex<T>>) -> Vec<T> {
    a.iter().flat_map(|v| [v.re, v.im]).collect()
}

pub(crate) fn unflatten<T: Real>(v: &[T], p: usize) -> DMatrix<Complex<T>> {
    DMatrix::from_fn(p, p, |i, j| {
        let k = 2 * (i + j * p);
        Complex::new(v[k], v[k + 1])
    })
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (x, y)| s + *x * *y)
}

impl<T: Real> Anderson<T> {
    pub(crate) fn new(memory: usize) -> Self {
        Anderson { memory, last: None, df: VecDeque::new(), dg: VecDeque::new(), gram: VecDeque::new() }
    }

    pub(crate) fn reset(&mut self) {
        self.last = None;
        self.df.clear();
        self.dg.clear();
        self.gram.clear();
    }

    /// Given the iterate `x` and the map value `g = T(x)`, returns the next
    /// iterate.
    pub(crate) fn step(&mut self, x: Vec<T>, g: Vec<T>) -> Vec<T> {
        if self.memory == 0 {
            return g;
        }
        let f: Vec<T> = g.iter().zip(&x).map(|(a, b)| *a - *b).collect();
        if let Some((px, pg)) = self.last.take() {
            let pf: Vec<T> = pg.iter().zip(&px).map(|(a, b)| *a - *b).collect();
            let d: Vec<T> = f.iter().zip(&pf).map(|(a, b)| *a - *b).collect();
            let mut row: VecDeque<T> = self.df.iter().map(|o| dot(o, &d)).collect();
            for (r, v) in self.gram.iter_mut().zip(&row) {
                r.push_back(*v);
            }
            row.push_back(dot(&d, &d));
            self.gram.push_back(row);
            self.df.push_back(d);
            self.dg.push_back(g.iter().zip(&pg).map(|(a, b)| *a - *b).collect());
            if self.df.len() > self.memory {
                self.df.pop_front();
                self.dg.pop_front();
                self.gram.pop_front();
                for r in self.gram.iter_mut() {
                    r.pop_front();
                }
            }
        }
        let m = self.df.len();
        let out = if m == 0 {
            g.clone()
        } else {
            let mut a = DMatrix::from_fn(m, m, |i, j| self.gram[i][j]);
            let rhs = DVector::from_fn(m, |i, _| dot(&self.df[i], &f));
            let scale = (0..m).fold(T::zero(), |s, i| s.max(a[(i, i)]));
            for i in 0..m {
                a[(i, i)] += T::lit(1e-10) * scale;
            }
            let solved = if scale > T::zero() { a.cholesky().map(|c| c.solve(&rhs)) } else { None };
            match solved {
                Some(gamma) if gamma.iter().all(|v| v.is_finite()) => {
                    let mut out = g.clone();
                    for (k, gk) in gamma.iter().enumerate() {
                        for (o, d) in out.iter_mut().zip(&self.dg[k]) {
                            *o -= *gk * *d;
                        }
                    }
                    out
                }
                _ => {
                    self.df.clear();
                    self.dg.clear();
                    self.gram.clear();
                    g.clone()
                }
            }
        };
        self.last = Some((x, g));
        out
    }
}
