//! Fast evaluation of entropy combinations on the composed joint
//! `P(k,x,v,y,z) = P(k,x) W(v,y|k,x) A(z|y)` and their gradients with respect
//! to `W`.
//!
//! Every region quantity is an affine combination of joint entropies of axis
//! subsets plus a multiple of `E d(X,Y)`. Subsets are bit masks over
//! `K, X, V, Y, Z` in that order.

use std::collections::BTreeMap;

use crate::info::ZERO_PROB;

pub(crate) const K: u8 = 1;
pub(crate) const X: u8 = 2;
pub(crate) const V: u8 = 4;
pub(crate) const Y: u8 = 8;
pub(crate) const Z: u8 = 16;

/// `sum_S c_S H(S) + ed * E d(X,Y) + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Affine {
    pub terms: Vec<(u8, f64)>,
    pub ed: f64,
    pub constant: f64,
}

impl Affine {
    pub fn entropies(terms: &[(u8, f64)]) -> Self {
        Affine {
            terms: terms.to_vec(),
            ..Default::default()
        }
    }

    pub fn constant(c: f64) -> Self {
        Affine {
            constant: c,
            ..Default::default()
        }
    }

    pub fn expected_distortion() -> Self {
        Affine {
            ed: 1.0,
            ..Default::default()
        }
    }

    pub fn plus(mut self, other: &Affine, scale: f64) -> Self {
        self.terms.extend(other.terms.iter().map(|&(m, c)| (m, c * scale)));
        self.ed += other.ed * scale;
        self.constant += other.constant * scale;
        self
    }

    pub fn scaled(self, s: f64) -> Self {
        Affine::default().plus(&self, s)
    }

    pub fn masks(&self) -> impl Iterator<Item = u8> + '_ {
        self.terms.iter().map(|t| t.0)
    }
}

/// `H(K|Y)`
pub(crate) fn h_k_given_y() -> Affine {
    Affine::entropies(&[(K | Y, 1.0), (Y, -1.0)])
}

/// `I(V;Z|K)`
pub(crate) fn i_vz_given_k() -> Affine {
    Affine::entropies(&[(V | K, 1.0), (Z | K, 1.0), (V | Z | K, -1.0), (K, -1.0)])
}

/// `I(V;X|K)`
pub(crate) fn i_vx_given_k() -> Affine {
    Affine::entropies(&[(V | K, 1.0), (X | K, 1.0), (V | X | K, -1.0), (K, -1.0)])
}

/// `I(X;Y,V|K)`
pub(crate) fn i_x_yv_given_k() -> Affine {
    Affine::entropies(&[(X | K, 1.0), (Y | V | K, 1.0), (X | Y | V | K, -1.0), (K, -1.0)])
}

/// `I(K;Y)`
pub(crate) fn i_ky() -> Affine {
    Affine::entropies(&[(K, 1.0), (Y, 1.0), (K | Y, -1.0)])
}

#[derive(Debug, Clone)]
pub(crate) struct Engine {
    pub cards: [usize; 5],
    pkx: Vec<f64>,
    attack: Vec<f64>,
    dist: Vec<f64>,
    maps: BTreeMap<u8, Vec<usize>>,
}

/// Per-joint cache: entropy and `-log2 p_S` for every registered mask.
pub(crate) struct Stats {
    pub joint: Vec<f64>,
    entropy: BTreeMap<u8, f64>,
    neg_log: BTreeMap<u8, Vec<f64>>,
    ed: f64,
}

const LOG_FLOOR: f64 = 1e-30;

impl Engine {
    /// `pkx[k*|X|+x]`, `attack[y*|Z|+z]`, `dist[x*|Y|+y]`.
    pub fn new(cards: [usize; 5], pkx: Vec<f64>, attack: Vec<f64>, dist: Vec<f64>) -> Self {
        Engine {
            cards,
            pkx,
            attack,
            dist,
            maps: BTreeMap::new(),
        }
    }

    pub fn w_len(&self) -> usize {
        self.cards[0] * self.cards[1] * self.cards[2] * self.cards[3]
    }

    /// Length of one `(k, x)` simplex block of `W`.
    pub fn block_len(&self) -> usize {
        self.cards[2] * self.cards[3]
    }

    pub fn register(&mut self, a: &Affine) {
        for m in a.masks() {
            if self.maps.contains_key(&m) {
                continue;
            }
            let keep: Vec<usize> = (0..5).filter(|i| m & (1 << i) != 0).collect();
            let total: usize = self.cards.iter().product();
            let out_cards: Vec<usize> = keep.iter().map(|&i| self.cards[i]).collect();
            let mut map = Vec::with_capacity(total);
            let mut idx = [0usize; 5];
            for _ in 0..total {
                let mut t = 0;
                for (pos, &i) in keep.iter().enumerate() {
                    t = t * out_cards[pos] + idx[i];
                }
                map.push(t);
                for d in (0..5).rev() {
                    idx[d] += 1;
                    if idx[d] < self.cards[d] {
                        break;
                    }
                    idx[d] = 0;
                }
            }
            self.maps.insert(m, map);
        }
    }

    pub fn joint(&self, w: &[f64]) -> Vec<f64> {
        let [kc, xc, vc, yc, zc] = self.cards;
        let mut out = Vec::with_capacity(kc * xc * vc * yc * zc);
        for k in 0..kc {
            for x in 0..xc {
                let pkx = self.pkx[k * xc + x];
                for v in 0..vc {
                    for y in 0..yc {
                        let base = pkx * w[((k * xc + x) * vc + v) * yc + y];
                        for z in 0..zc {
                            out.push(base * self.attack[y * zc + z]);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn stats(&self, w: &[f64]) -> Stats {
        let joint = self.joint(w);
        let mut entropy = BTreeMap::new();
        let mut neg_log = BTreeMap::new();
        for (&m, map) in &self.maps {
            let size = (0..5)
                .filter(|i| m & (1 << i) != 0)
                .map(|i| self.cards[i])
                .product::<usize>();
            let mut marg = vec![0.0; size];
            for (p, &t) in joint.iter().zip(map) {
                marg[t] += p;
            }
            let h: f64 = marg
                .iter()
                .filter(|&&p| p > ZERO_PROB)
                .map(|&p| -p * p.log2())
                .sum();
            entropy.insert(m, h);
            neg_log.insert(m, marg.iter().map(|&p| -(p.max(LOG_FLOOR)).log2()).collect());
        }
        let ed = self.expected_distortion(&joint);
        Stats {
            joint,
            entropy,
            neg_log,
            ed,
        }
    }

    fn expected_distortion(&self, joint: &[f64]) -> f64 {
        let [_, _, vc, yc, zc] = self.cards;
        let xc = self.cards[1];
        let mut t = 0.0;
        for (i, &p) in joint.iter().enumerate() {
            let y = (i / zc) % yc;
            let x = (i / (zc * yc * vc)) % xc;
            t += p * self.dist[x * yc + y];
        }
        t
    }

    pub fn value(&self, s: &Stats, a: &Affine) -> f64 {
        a.terms.iter().map(|(m, c)| c * s.entropy[m]).sum::<f64>() + a.ed * s.ed + a.constant
    }

    /// Adds `scale * d a / d W` into `grad`, up to a per-block constant that
    /// vanishes on the simplex tangent space.
    pub fn add_gradient(&self, s: &Stats, a: &Affine, scale: f64, grad: &mut [f64]) {
        let [kc, xc, vc, yc, zc] = self.cards;
        let mut cell = vec![0.0; s.joint.len()];
        for (m, c) in &a.terms {
            let nl = &s.neg_log[m];
            for (g, &t) in cell.iter_mut().zip(&self.maps[m]) {
                *g += c * nl[t];
            }
        }
        for k in 0..kc {
            for x in 0..xc {
                let pkx = self.pkx[k * xc + x];
                if pkx == 0.0 {
                    continue;
                }
                for v in 0..vc {
                    for y in 0..yc {
                        let wi = ((k * xc + x) * vc + v) * yc + y;
                        let base = wi * zc;
                        let mut acc = a.ed * self.dist[x * yc + y];
                        for z in 0..zc {
                            acc += self.attack[y * zc + z] * cell[base + z];
                        }
                        grad[wi] += scale * pkx * acc;
                    }
                }
            }
        }
    }
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(v: &mut [f64]) {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_engine(rng: &mut ChaCha8Rng) -> (Engine, Vec<f64>) {
        let cards = [2, 2, 3, 2, 3];
        let mut pkx: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
        let s: f64 = pkx.iter().sum();
        pkx.iter_mut().for_each(|p| *p /= s);
        let mut attack = Vec::new();
        for _ in 0..2 {
            let mut r: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let s: f64 = r.iter().sum();
            r.iter_mut().for_each(|p| *p /= s);
            attack.extend(r);
        }
        let dist = vec![0.0, 1.0, 1.0, 0.0];
        let e = Engine::new(cards, pkx, attack, dist);
        let mut w = Vec::new();
        for _ in 0..4 {
            let mut r: Vec<f64> = (0..6).map(|_| rng.random::<f64>() + 0.05).collect();
            let s: f64 = r.iter().sum();
            r.iter_mut().for_each(|p| *p /= s);
            w.extend(r);
        }
        (e, w)
    }

    #[test]
    fn gradient_matches_finite_differences_along_the_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut e, w) = random_engine(&mut rng);
        let f = i_vz_given_k()
            .plus(&i_vx_given_k(), -1.0)
            .plus(&i_x_yv_given_k(), 0.7)
            .plus(&h_k_given_y(), 0.3)
            .plus(&i_ky(), -1.2)
            .plus(&Affine::expected_distortion(), 0.4);
        e.register(&f);
        let s = e.stats(&w);
        let mut g = vec![0.0; w.len()];
        e.add_gradient(&s, &f, 1.0, &mut g);
        // move mass between two cells of the same block
        for (i, j) in [(0usize, 3usize), (7, 10), (12, 17), (19, 23)] {
            let h = 1e-6;
            let mut wp = w.clone();
            wp[i] += h;
            wp[j] -= h;
            let mut wm = w.clone();
            wm[i] -= h;
            wm[j] += h;
            let fd = (e.value(&e.stats(&wp), &f) - e.value(&e.stats(&wm), &f)) / (2.0 * h);
            assert_abs_diff_eq!(fd, g[i] - g[j], epsilon = 1e-6);
        }
    }

    #[test]
    fn projection_lands_on_simplex() {
        let mut v = vec![0.5, 1.2, -0.3, 0.1];
        project_simplex(&mut v);
        assert_abs_diff_eq!(v.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(v.iter().all(|&x| x >= 0.0));
        let mut p = vec![0.2, 0.3, 0.5];
        project_simplex(&mut p);
        assert_abs_diff_eq!(p[2], 0.5, epsilon = 1e-15);
    }
}
