//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use bbt_core::interchange::BinaryMask;

/// IoU by direct pixel loop; two empty masks are identical.
pub fn naive_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for y in 0..a.height() {
        for x in 0..a.width() {
            let (p, q) = (a.get(x, y), b.get(x, y));
            inter += (p && q) as usize;
            union += (p || q) as usize;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// 8-connected components by union-find over every neighbouring pair.
pub fn union_find_components(m: &BinaryMask) -> usize {
    let (w, h) = m.dims();
    let mut parent: Vec<usize> = (0..w * h).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for y in 0..h {
        for x in 0..w {
            if !m.get(x, y) {
                continue;
            }
            for (dx, dy) in [(1i64, 0i64), (0, 1), (1, 1), (-1, 1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 || !m.get(nx as usize, ny as usize) {
                    continue;
                }
                let (a, b) = (find(&mut parent, y * w + x), find(&mut parent, ny as usize * w + nx as usize));
                parent[a] = b;
            }
        }
    }
    (0..w * h)
        .filter(|&i| m.bits()[i] && find(&mut parent, i) == i)
        .count()
}

/// Mean of the k smallest distances after a full sort by (distance, index).
pub fn full_sort_knn(query: &[f64], rows: &[Vec<f64>], keep: impl Fn(usize) -> bool, k: usize) -> f64 {
    let mut d: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(i, r)| {
            let s: f64 = query.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum();
            (s.sqrt(), i)
        })
        .collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut sum = 0.0;
    for (x, _) in &d[..k] {
        sum += x;
    }
    sum / k as f64
}

/// Sample covariance with the N-1 divisor.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut c = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                c[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    for row in c.iter_mut() {
        for x in row.iter_mut() {
            *x /= n as f64 - 1.0;
        }
    }
    c
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalue, unit eigenvector) pairs sorted by descending eigenvalue.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> Vec<(f64, Vec<f64>)> {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut out: Vec<(f64, Vec<f64>)> = (0..n).map(|i| (a[i][i], (0..n).map(|k| v[k][i]).collect())).collect();
    out.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    out
}

/// Largest-magnitude coordinate positive.
pub fn signed(mut v: Vec<f64>) -> Vec<f64> {
    let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if big < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Deterministic xorshift stream for test inputs.
pub struct Xorshift(pub u64);

impl Xorshift {
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        let (u, v) = (self.unit().max(1e-300), self.unit());
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }
}

/// Random mask whose pixels are on with probability `p`.
pub fn random_mask(rng: &mut Xorshift, w: usize, h: usize, p: f64) -> BinaryMask {
    let bits = (0..w * h).map(|_| rng.unit() < p).collect();
    BinaryMask::new(w, h, bits).unwrap()
}

/// Rows from a three-factor model over 14 finger angles plus isotropic noise.
pub fn three_factor_fingers(n: usize, noise: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = Xorshift(seed | 1);
    let loadings: Vec<[f64; 3]> = (0..14)
        .map(|_| [20.0 * rng.unit() - 10.0, 20.0 * rng.unit() - 10.0, 20.0 * rng.unit() - 10.0])
        .collect();
    (0..n)
        .map(|_| {
            let z = [rng.normal(), rng.normal(), rng.normal()];
            loadings
                .iter()
                .map(|l| 150.0 + l[0] * z[0] + l[1] * z[1] + l[2] * z[2] + noise * rng.normal())
                .collect()
        })
        .collect()
}
