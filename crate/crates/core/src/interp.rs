//! Lagrange interpolation on uniform lattices.

/// Weights of the Lagrange basis through `nodes` evaluated at `x`.
pub fn lagrange_weights(nodes: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![1.0; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[i] *= (x - nodes[j]) / (nodes[i] - nodes[j]);
            }
        }
    }
    w
}

/// Weights of the derivative of the Lagrange interpolant through `nodes` at `x`.
pub fn lagrange_deriv_weights(nodes: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for k in 0..n {
            if k == i {
                continue;
            }
            let mut term = 1.0 / (nodes[i] - nodes[k]);
            for j in 0..n {
                if j != i && j != k {
                    term *= (x - nodes[j]) / (nodes[i] - nodes[j]);
                }
            }
            acc += term;
        }
        w[i] = acc;
    }
    w
}

/// First index and weights of a `points`-point stencil around `x` on the lattice x0 + k h, k < n.
pub fn stencil(n: usize, x0: f64, h: f64, x: f64, points: usize) -> (usize, Vec<f64>) {
    let points = points.min(n);
    let s = (x - x0) / h;
    let half = (points as isize - 1) / 2;
    let mut first = s.floor() as isize - half;
    first = first.clamp(0, n as isize - points as isize);
    let first = first as usize;
    let nodes: Vec<f64> = (0..points).map(|k| (first + k) as f64).collect();
    (first, lagrange_weights(&nodes, s))
}

/// 4-point Lagrange interpolation of a uniformly sampled sequence.
pub fn interp1(values: &[f64], x0: f64, h: f64, x: f64) -> f64 {
    let (first, w) = stencil(values.len(), x0, h, x, 4);
    w.iter().enumerate().map(|(k, wk)| wk * values[first + k]).sum()
}

/// A row-major nu x nr array on a uniform (u, R) lattice.
#[derive(Debug, Clone, Copy)]
pub struct Lattice2<'a> {
    pub values: &'a [f64],
    pub nu: usize,
    pub nr: usize,
    pub u0: f64,
    pub du: f64,
    pub r0: f64,
    pub dr: f64,
}

impl Lattice2<'_> {
    /// Tensor-product 4 x 4 Lagrange interpolation.
    pub fn bicubic(&self, u: f64, rr: f64) -> f64 {
        let (iu, wu) = stencil(self.nu, self.u0, self.du, u, 4);
        let (ir, wr) = stencil(self.nr, self.r0, self.dr, rr, 4);
        let mut acc = 0.0;
        for (a, wa) in wu.iter().enumerate() {
            let row = (iu + a) * self.nr;
            let mut s = 0.0;
            for (b, wb) in wr.iter().enumerate() {
                s += wb * self.values[row + ir + b];
            }
            acc += wa * s;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_polynomials_are_exact() {
        let p = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x - 0.25 * x * x * x;
        let v: Vec<f64> = (0..20).map(|k| p(0.3 * k as f64)).collect();
        for &x in &[0.0, 0.1, 2.71, 5.69, 5.7] {
            assert!((interp1(&v, 0.0, 0.3, x) - p(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn bicubic_is_exact_on_bicubics() {
        let f = |u: f64, r: f64| (u * u * u - u) * (1.0 + r - r * r * r);
        let (nu, nr) = (9, 7);
        let vals: Vec<f64> = (0..nu).flat_map(|i| (0..nr).map(move |j| f(-1.0 + 0.25 * i as f64, 0.1 * j as f64))).collect();
        let l = Lattice2 { values: &vals, nu, nr, u0: -1.0, du: 0.25, r0: 0.0, dr: 0.1 };
        for &(u, r) in &[(-0.9, 0.05), (0.3, 0.33), (1.0, 0.6)] {
            assert!((l.bicubic(u, r) - f(u, r)).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_weights_are_exact_on_cubics() {
        let nodes = [0.0, 1.0, 2.5, 3.0];
        let w = lagrange_deriv_weights(&nodes, 1.7);
        let p = |x: f64| 2.0 + x - 3.0 * x * x + 0.5 * x * x * x;
        let d: f64 = nodes.iter().zip(&w).map(|(x, wk)| wk * p(*x)).sum();
        assert!((d - (1.0 - 6.0 * 1.7 + 1.5 * 1.7 * 1.7)).abs() < 1e-12);
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |h: f64| {
            let v: Vec<f64> = (0..=(2.0 / h) as usize).map(|k| (k as f64 * h).sin()).collect();
            (interp1(&v, 0.0, h, 1.0 + 0.37 * h) - (1.0 + 0.37 * h).sin()).abs()
        };
        let order = (err(0.1) / err(0.05)).log2();
        assert!(order > 3.5, "order {order}");
    }
}
