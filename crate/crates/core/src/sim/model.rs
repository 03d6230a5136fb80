//! Flat probability views of a composed system, precomputed once per
//! codebook so the typicality tests in the encoder and decoder stay cheap.

use crate::error::Result;
use crate::info::{entropy_of_values, marginal_flat, DistortionMeasure};
use crate::region::{compose_joint, AuxChannel, JointQuantities, SystemSpec};
use crate::types::Kernel;

#[derive(Debug, Clone)]
pub(crate) struct Model {
    pub kc: usize,
    pub xc: usize,
    pub vc: usize,
    pub yc: usize,
    pub zc: usize,
    pub uc: usize,
    pub lambda: f64,
    pub p_u: Vec<f64>,
    pub p_k: Vec<f64>,
    /// `(K, X)`, key-major.
    pub p_kx: Vec<f64>,
    pub p_kxv: Vec<f64>,
    pub p_kvz: Vec<f64>,
    pub y_given_kxv: Kernel,
    pub v_given_k: Kernel,
    /// Rows indexed by `v * |K| + k`.
    pub y_given_vk: Kernel,
    /// `P(z|y)` at `y * |Z| + z`.
    pub attack: Vec<f64>,
    pub d: DistortionMeasure,
    pub d_prime: DistortionMeasure,
    pub q: JointQuantities,
    pub h_v_k: f64,
    pub h_v_kx: f64,
    pub h_y_kv: f64,
    pub h_y_kxv: f64,
    pub h_v_zk: f64,
    /// `I(X;Y|V,K)`
    pub i_xy_vk: f64,
}

/// `K(b|a)` from a flat joint laid out as `(a, b)`; rows of zero mass
/// become uniform (they are never consulted by a typicality test).
fn kernel_from_joint(joint: &[f64], ca: usize, cb: usize) -> Kernel {
    let mut probs = Vec::with_capacity(ca * cb);
    for a in 0..ca {
        let row = &joint[a * cb..(a + 1) * cb];
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            probs.extend(row.iter().map(|p| p / s));
        } else {
            probs.extend(std::iter::repeat_n(1.0 / cb as f64, cb));
        }
    }
    Kernel { ca, cb, probs }
}

impl Model {
    pub fn new(spec: &SystemSpec, aux: &AuxChannel) -> Result<Self> {
        let joint = compose_joint(spec, aux)?;
        let cards = joint.cards();
        let vals = joint.values();
        let (kc, xc, vc, yc, zc) = (cards[0], cards[1], cards[2], cards[3], cards[4]);
        let m = |keep: &[usize]| marginal_flat(&cards, vals, keep);
        let h = |keep: &[usize]| entropy_of_values(&m(keep));
        let q = JointQuantities::of(spec, &joint)?;
        let h_k = h(&[0]);
        let h_kx = h(&[0, 1]);
        let h_kv = h(&[0, 2]);
        let h_kxv = h(&[0, 1, 2]);
        let h_kvy = h(&[0, 2, 3]);
        let h_kxvy = h(&[0, 1, 2, 3]);
        let h_kz = h(&[0, 4]);
        let h_kvz = h(&[0, 2, 4]);
        Ok(Model {
            kc,
            xc,
            vc,
            yc,
            zc,
            uc: spec.p_u().cards()[0],
            lambda: spec.lambda(),
            p_u: spec.p_u().values().to_vec(),
            p_k: m(&[0]),
            p_kx: spec.p_kx().values().to_vec(),
            p_kxv: m(&[0, 1, 2]),
            p_kvz: m(&[0, 2, 4]),
            y_given_kxv: kernel_from_joint(&m(&[0, 1, 2, 3]), kc * xc * vc, yc),
            v_given_k: kernel_from_joint(&m(&[0, 2]), kc, vc),
            y_given_vk: kernel_from_joint(&m(&[2, 0, 3]), vc * kc, yc),
            attack: spec.attack().values().to_vec(),
            d: spec.d().clone(),
            d_prime: spec.d_prime().clone(),
            q,
            h_v_k: h_kv - h_k,
            h_v_kx: h_kxv - h_kx,
            h_y_kv: h_kvy - h_kv,
            h_y_kxv: h_kxvy - h_kxv,
            h_v_zk: h_kvz - h_kz,
            i_xy_vk: (h_kxv + h_kvy - h_kxvy - h_kv).max(0.0),
        })
    }
}
