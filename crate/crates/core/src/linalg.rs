//! Small dense helpers for the determinant route.
//!
//! Kept free of any external linear algebra so that the determinant oracle
//! and the stationary solver do not share an elimination routine.

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    n: usize,
    data: Vec<f64>,
}

impl Dense {
    pub fn zeros(n: usize) -> Self {
        Dense {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[cfg(test)]
    pub fn from_rows(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n, "dense matrix needs n*n entries");
        Dense { n, data }
    }

    #[cfg(test)]
    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] = v;
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let n = self.n;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (head, tail) = self.data.split_at_mut(hi * n);
        head[lo * n..lo * n + n].swap_with_slice(&mut tail[..n]);
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn determinant(&self) -> f64 {
        let n = self.n;
        let mut a = self.clone();
        let mut det = 1.0;
        for col in 0..n {
            let (pivot, best) = (col..n)
                .map(|r| (r, a.get(r, col).abs()))
                .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best == 0.0 {
                return 0.0;
            }
            if pivot != col {
                a.swap_rows(pivot, col);
                det = -det;
            }
            let d = a.get(col, col);
            det *= d;
            for r in col + 1..n {
                let factor = a.get(r, col) / d;
                if factor == 0.0 {
                    continue;
                }
                for c in col..n {
                    let v = a.get(r, c) - factor * a.get(col, c);
                    a.set(r, c, v);
                }
            }
        }
        det
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Leibniz expansion over all permutations.
    fn leibniz(m: &Dense) -> f64 {
        fn perms(k: usize, cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in 0..k {
                if !used[i] {
                    used[i] = true;
                    cur.push(i);
                    perms(k, cur, used, out);
                    cur.pop();
                    used[i] = false;
                }
            }
        }
        let n = m.size();
        let mut all = Vec::new();
        perms(n, &mut Vec::new(), &mut vec![false; n], &mut all);
        all.iter()
            .map(|p| {
                let inversions = (0..n)
                    .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                    .filter(|&(i, j)| p[i] > p[j])
                    .count();
                let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
                sign * (0..n).map(|i| m.get(i, p[i])).product::<f64>()
            })
            .sum()
    }

    #[test]
    fn matches_leibniz() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in 1..=6 {
            for _ in 0..20 {
                let m = Dense::from_rows(n, (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect());
                assert_relative_eq!(m.determinant(), leibniz(&m), epsilon = 1e-12, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn singular_and_pivoting() {
        let m = Dense::from_rows(3, vec![1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        assert_eq!(m.determinant(), 0.0);
        // zero leading entry forces a row swap
        let m = Dense::from_rows(2, vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(m.determinant(), -1.0);
    }
}
