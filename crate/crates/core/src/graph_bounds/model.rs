//! Dense evaluation of rate, stationary law and policy gradient on a fixed (channel, graph) pair.

use nalgebra::{DMatrix, DVector};

use crate::channels::UnifilarFsc;
use crate::error::{Error, Result};
use crate::info::{entropy, kl_divergence};
use crate::qgraph::{stationary, InputPolicy, QGraph, SqChain};

pub(crate) struct Model<'a> {
    pub ch: &'a UnifilarFsc,
    pub g: &'a QGraph,
    pub ns: usize,
    pub nq: usize,
    pub nx: usize,
    pub ny: usize,
    pub n: usize,
    /// `next[(z * nx + x) * ny + y]`, `usize::MAX` where the transition has zero probability.
    next: Vec<usize>,
}

/// Quantities derived from one policy.
pub(crate) struct Eval {
    pub pi: Vec<f64>,
    pub rate: f64,
    /// `P(y | q)`, `q`-major; zero rows where `pi(q) = 0`.
    pub py_q: Vec<f64>,
    /// `D(P(.|x,s) || P(.|q))` per `(z, x)`; `None` when infinite or undefined.
    pub kl: Vec<Option<f64>>,
}

impl<'a> Model<'a> {
    pub fn new(ch: &'a UnifilarFsc, g: &'a QGraph) -> Result<Self> {
        if ch.output_count() != g.output_count() {
            return Err(Error::AlphabetMismatch(format!(
                "channel has {} outputs, q-graph has {} labels",
                ch.output_count(),
                g.output_count()
            )));
        }
        let (ns, nq, nx, ny) = (ch.state_count(), g.node_count(), ch.input_count(), ch.output_count());
        let n = ns * nq;
        let mut next = vec![usize::MAX; n * nx * ny];
        for s in 0..ns {
            for q in 0..nq {
                let z = s * nq + q;
                for &x in ch.admissible(s) {
                    for (y, _, sn) in ch.transitions(s, x) {
                        next[(z * nx + x) * ny + y] = sn * nq + g.next(q, y);
                    }
                }
            }
        }
        Ok(Self { ch, g, ns, nq, nx, ny, n, next })
    }

    #[inline]
    pub fn next(&self, z: usize, x: usize, y: usize) -> usize {
        self.next[(z * self.nx + x) * self.ny + y]
    }

    pub fn transition(&self, pol: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::<f64>::zeros(self.n, self.n);
        for z in 0..self.n {
            let s = z / self.nq;
            for &x in self.ch.admissible(s) {
                let px = pol[z * self.nx + x];
                if px == 0.0 {
                    continue;
                }
                for (y, py, _) in self.ch.transitions(s, x) {
                    m[(z, self.next(z, x, y))] += px * py;
                }
            }
        }
        m
    }

    /// Stationary law; fast dense solve, with the class-aware path as fallback.
    pub fn stationary(&self, m: &DMatrix<f64>) -> Result<Vec<f64>> {
        let n = self.n;
        let mut a = m.transpose();
        for i in 0..n {
            a[(i, i)] -= 1.0;
        }
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(n);
        b[n - 1] = 1.0;
        if let Some(v) = a.lu().solve(&b) {
            if v.iter().all(|p| p.is_finite() && *p > -1e-12) {
                let pi: Vec<f64> = v.iter().map(|p| p.max(0.0)).collect();
                let pm = DVector::from_column_slice(&pi).transpose() * m;
                let res = pm.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if res <= 1e-12 {
                    return Ok(pi);
                }
            }
        }
        // nalgebra is column-major; the chain wants row-major
        let chain = SqChain::from_matrix(self.ns, self.nq, m.transpose().as_slice().to_vec())?;
        stationary(&chain)
    }

    pub fn evaluate_with(&self, pol: &[f64], pi: Vec<f64>) -> Eval {
        let (nq, nx, ny) = (self.nq, self.nx, self.ny);
        let mut pq = vec![0.0; nq];
        let mut py_q = vec![0.0; nq * ny];
        let mut cond = 0.0;
        for z in 0..self.n {
            let (s, q) = (z / nq, z % nq);
            pq[q] += pi[z];
            if pi[z] == 0.0 {
                continue;
            }
            for &x in self.ch.admissible(s) {
                let w = pi[z] * pol[z * nx + x];
                if w == 0.0 {
                    continue;
                }
                let row = self.ch.row(s, x);
                cond += w * entropy(row);
                for y in 0..ny {
                    py_q[q * ny + y] += w * row[y];
                }
            }
        }
        let mut out_h = 0.0;
        for q in 0..nq {
            if pq[q] > 0.0 {
                let r = &mut py_q[q * ny..(q + 1) * ny];
                r.iter_mut().for_each(|v| *v /= pq[q]);
                out_h += pq[q] * entropy(r);
            }
        }
        let mut kl = vec![None; self.n * nx];
        for z in 0..self.n {
            let (s, q) = (z / nq, z % nq);
            if pq[q] == 0.0 {
                continue;
            }
            for &x in self.ch.admissible(s) {
                kl[z * nx + x] = kl_divergence(self.ch.row(s, x), &py_q[q * ny..(q + 1) * ny]);
            }
        }
        Eval { pi, rate: (out_h - cond).max(0.0), py_q, kl }
    }

    pub fn evaluate(&self, pol: &[f64]) -> Result<(Eval, DMatrix<f64>)> {
        let m = self.transition(pol);
        let pi = self.stationary(&m)?;
        Ok((self.evaluate_with(pol, pi), m))
    }

    /// Natural gradient `A(x|z) = g(z,x) + sum_y P(y|x,s) w(next)`, where `w`
    /// solves the Poisson equation for reward `g`. The Euclidean gradient
    /// with respect to `P(x|z)` is `pi(z) A(x|z)`. Entries with undefined `g`
    /// are `None`.
    pub fn natural_gradient(&self, pol: &[f64], e: &Eval, m: &DMatrix<f64>) -> Result<Vec<Option<f64>>> {
        let (n, nx) = (self.n, self.nx);
        let mut c = DVector::<f64>::zeros(n);
        for z in 0..n {
            let mut acc = 0.0;
            for x in 0..nx {
                let p = pol[z * nx + x];
                if p > 0.0 {
                    acc += p * e.kl[z * nx + x].unwrap_or(0.0);
                }
            }
            c[z] = acc;
        }
        let pi = DVector::from_column_slice(&e.pi);
        let rho = pi.dot(&c);
        let mut a = -m.clone();
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        a += DVector::from_element(n, 1.0) * pi.transpose();
        let rhs = c.add_scalar(-rho);
        let w = a
            .lu()
            .solve(&rhs)
            .ok_or(Error::DidNotConverge { residual: f64::INFINITY, iterations: 0 })?;
        let mut out = vec![None; n * nx];
        for z in 0..n {
            let s = z / self.nq;
            for &x in self.ch.admissible(s) {
                if let Some(gv) = e.kl[z * nx + x] {
                    let fut: f64 = self
                        .ch
                        .transitions(s, x)
                        .map(|(y, p, _)| p * w[self.next(z, x, y)])
                        .sum();
                    out[z * nx + x] = Some(gv + fut);
                }
            }
        }
        Ok(out)
    }

    pub fn policy(&self, pol: &[f64]) -> InputPolicy {
        InputPolicy::from_table(self.ns, self.nq, self.nx, pol.to_vec()).expect("shape matches")
    }
}
