//! Multigrid-preconditioned conjugate gradients for the 5-point operator
//! `L u = 4u − Σ neighbours` on a masked rectangular grid.
//!
//! Entries outside the mask are held at zero, so Dirichlet data must be moved
//! into the right-hand side by the caller. Every loop runs over index lists in
//! a fixed order, which makes results bit-reproducible.

use crate::error::{Error, Result};

struct Level {
    nx: usize,
    interior: Vec<bool>,
    red: Vec<u32>,
    black: Vec<u32>,
    all: Vec<u32>,
    scale: f64,
    x: Vec<f64>,
    b: Vec<f64>,
    r: Vec<f64>,
}

impl Level {
    fn new(nx: usize, ny: usize, interior: Vec<bool>, scale: f64) -> Self {
        let mut red = Vec::new();
        let mut black = Vec::new();
        let mut all = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if interior[k] {
                    debug_assert!(i > 0 && j > 0 && i + 1 < nx && j + 1 < ny);
                    all.push(k as u32);
                    if (i + j) % 2 == 0 {
                        red.push(k as u32);
                    } else {
                        black.push(k as u32);
                    }
                }
            }
        }
        let n = nx * ny;
        Level { nx, interior, red, black, all, scale, x: vec![0.0; n], b: vec![0.0; n], r: vec![0.0; n] }
    }

    fn sweep(nx: usize, color: &[u32], x: &mut [f64], b: &[f64], scale: f64) {
        let inv = 1.0 / scale;
        for &k in color {
            let k = k as usize;
            let s = x[k - 1] + x[k + 1] + x[k - nx] + x[k + nx];
            x[k] = 0.25 * (b[k] * inv + s);
        }
    }

    fn residual(&mut self) {
        let nx = self.nx;
        for &k in &self.all {
            let k = k as usize;
            let x = &self.x;
            let ax = self.scale * (4.0 * x[k] - x[k - 1] - x[k + 1] - x[k - nx] - x[k + nx]);
            self.r[k] = self.b[k] - ax;
        }
    }
}

fn apply(nx: usize, all: &[u32], x: &[f64], out: &mut [f64]) {
    for &k in all {
        let k = k as usize;
        out[k] = 4.0 * x[k] - x[k - 1] - x[k + 1] - x[k - nx] - x[k + nx];
    }
}

pub struct SolveStats {
    pub iterations: usize,
    /// Max-norm of `(L u − b) / 4`, i.e. the mean-value defect.
    pub residual: f64,
}

pub struct Multigrid {
    levels: Vec<Level>,
    coarse_sweeps: usize,
}

const MIN_COARSE: usize = 64;

impl Multigrid {
    pub fn new(nx: usize, ny: usize, interior: Vec<bool>) -> Self {
        assert_eq!(interior.len(), nx * ny);
        let mut levels = vec![Level::new(nx, ny, interior, 1.0)];
        let mut dims = (nx, ny);
        loop {
            let fine = levels.last().unwrap();
            if fine.all.len() <= MIN_COARSE || dims.0 < 7 || dims.1 < 7 {
                break;
            }
            let (cx, cy) = (dims.0 / 2 + 1, dims.1 / 2 + 1);
            let mut mask = vec![false; cx * cy];
            for j in 0..cy {
                for i in 0..cx {
                    let (fi, fj) = (2 * i, 2 * j);
                    if fi < dims.0 && fj < dims.1 {
                        mask[j * cx + i] = fine.interior[fj * dims.0 + fi];
                    }
                }
            }
            let coarse = Level::new(cx, cy, mask, fine.scale * 0.25);
            if coarse.all.is_empty() {
                break;
            }
            levels.push(coarse);
            dims = (cx, cy);
        }
        Multigrid { levels, coarse_sweeps: 40 }
    }

    pub fn len(&self) -> usize {
        self.levels[0].all.len()
    }

    fn restrict(fine: &Level, coarse: &mut Level) {
        let nx = fine.nx;
        for &kc in &coarse.all {
            let kc = kc as usize;
            let (i, j) = (kc % coarse.nx, kc / coarse.nx);
            let f = 2 * j * nx + 2 * i;
            let r = &fine.r;
            let edge = r[f - 1] + r[f + 1] + r[f - nx] + r[f + nx];
            let corner = r[f - nx - 1] + r[f - nx + 1] + r[f + nx - 1] + r[f + nx + 1];
            coarse.b[kc] = 0.25 * (r[f] + 0.5 * edge + 0.25 * corner);
        }
    }

    fn prolong_add(coarse: &Level, fine: &mut Level) {
        let cx = coarse.nx;
        let xc = &coarse.x;
        for &k in &fine.all {
            let k = k as usize;
            let (i, j) = (k % fine.nx, k / fine.nx);
            let (ci, cj) = (i / 2, j / 2);
            let c = cj * cx + ci;
            let v = match (i % 2, j % 2) {
                (0, 0) => xc[c],
                (1, 0) => 0.5 * (xc[c] + xc[c + 1]),
                (0, 1) => 0.5 * (xc[c] + xc[c + cx]),
                _ => 0.25 * (xc[c] + xc[c + 1] + xc[c + cx] + xc[c + cx + 1]),
            };
            fine.x[k] += v;
        }
    }

    /// Symmetric V-cycle on level `l` with zero initial guess.
    fn vcycle(&mut self, l: usize) {
        let last = self.levels.len() - 1;
        {
            let lv = &mut self.levels[l];
            for &k in &lv.all {
                lv.x[k as usize] = 0.0;
            }
            let sweeps = if l == last { self.coarse_sweeps } else { 2 };
            for _ in 0..sweeps {
                Level::sweep(lv.nx, &lv.red, &mut lv.x, &lv.b, lv.scale);
                Level::sweep(lv.nx, &lv.black, &mut lv.x, &lv.b, lv.scale);
            }
            if l == last {
                for _ in 0..sweeps {
                    Level::sweep(lv.nx, &lv.black, &mut lv.x, &lv.b, lv.scale);
                    Level::sweep(lv.nx, &lv.red, &mut lv.x, &lv.b, lv.scale);
                }
                return;
            }
            lv.residual();
        }
        {
            let (a, b) = self.levels.split_at_mut(l + 1);
            Self::restrict(&a[l], &mut b[0]);
        }
        self.vcycle(l + 1);
        let (a, b) = self.levels.split_at_mut(l + 1);
        let lv = &mut a[l];
        Self::prolong_add(&b[0], lv);
        for _ in 0..2 {
            Level::sweep(lv.nx, &lv.black, &mut lv.x, &lv.b, lv.scale);
            Level::sweep(lv.nx, &lv.red, &mut lv.x, &lv.b, lv.scale);
        }
    }

    fn precondition(&mut self, r: &[f64], z: &mut [f64]) {
        let lv = &mut self.levels[0];
        for &k in &lv.all {
            lv.b[k as usize] = r[k as usize];
        }
        self.vcycle(0);
        let lv = &self.levels[0];
        for &k in &lv.all {
            z[k as usize] = lv.x[k as usize];
        }
    }

    /// Solves `L u = b` on the mask. `b` must vanish off the mask.
    pub fn solve(&mut self, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveStats)> {
        let n = b.len();
        let nx = self.levels[0].nx;
        let all = self.levels[0].all.clone();
        let dot = |a: &[f64], c: &[f64]| all.iter().map(|&k| a[k as usize] * c[k as usize]).sum::<f64>();
        let maxabs = |a: &[f64]| all.iter().fold(0.0f64, |m, &k| m.max(a[k as usize].abs()));

        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut z = vec![0.0; n];
        let mut ap = vec![0.0; n];
        if maxabs(&r) * 0.25 <= tol {
            return Ok((x, SolveStats { iterations: 0, residual: maxabs(&r) * 0.25 }));
        }
        self.precondition(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut it = 0;
        loop {
            it += 1;
            apply(nx, &all, &p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for &k in &all {
                let k = k as usize;
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            if maxabs(&r) * 0.25 <= tol * 0.5 || it >= max_iter {
                apply(nx, &all, &x, &mut ap);
                let mut res = 0.0f64;
                for &k in &all {
                    let k = k as usize;
                    r[k] = b[k] - ap[k];
                    res = res.max(r[k].abs() * 0.25);
                }
                if res <= tol {
                    return Ok((x, SolveStats { iterations: it, residual: res }));
                }
                if it >= max_iter {
                    return Err(Error::NoConvergence { residual: res, iterations: it });
                }
            }
            self.precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for &k in &all {
                let k = k as usize;
                p[k] = z[k] + beta * p[k];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize) -> (usize, Vec<bool>) {
        let nx = n + 2;
        let mut m = vec![false; nx * nx];
        for j in 1..=n {
            for i in 1..=n {
                m[j * nx + i] = true;
            }
        }
        (nx, m)
    }

    #[test]
    fn solves_poisson_on_square() {
        for n in [1usize, 3, 10, 63, 200] {
            let (nx, m) = square(n);
            let mut b = vec![0.0; nx * nx];
            for (k, &f) in m.iter().enumerate() {
                if f {
                    b[k] = 1.0 / (n * n) as f64;
                }
            }
            let mut mg = Multigrid::new(nx, nx, m.clone());
            let (x, st) = mg.solve(&b, 1e-12, 200).unwrap();
            let mut ax = vec![0.0; nx * nx];
            let all: Vec<u32> = (0..nx * nx).filter(|&k| m[k]).map(|k| k as u32).collect();
            apply(nx, &all, &x, &mut ax);
            for &k in &all {
                assert!((ax[k as usize] - b[k as usize]).abs() < 4e-12);
            }
            assert!(st.residual <= 1e-12);
            assert!(st.iterations < 40, "n={n} it={}", st.iterations);
            eprintln!("n={n} it={}", st.iterations);
        }
    }
}
