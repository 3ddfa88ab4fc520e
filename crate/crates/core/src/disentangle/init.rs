use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{Component, InitScheme, TextConfig};
use crate::diff::Tensor;
use crate::params::{ParamGroup, ParamStore};
use crate::rng::{self, Rng};

/// Random `n × n` orthogonal matrix (Gram-Schmidt on a Gaussian draw).
pub fn random_orthogonal(rng: &mut Rng, n: usize) -> Tensor {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v = rng::normal_vec(rng, n, 1.0);
        for r in &rows {
            let d: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= d * b);
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            rows.push(v);
        }
    }
    Tensor::new(alloc::vec![n, n], rows.concat()).expect("square")
}

fn gaussian(rng: &mut Rng, shape: &[usize], std: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), rng::normal_vec(rng, n, std)).expect("shape")
}

fn uniform(rng: &mut Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

/// Rectangular identity `rows × cols`.
fn eye(rows: usize, cols: usize) -> Tensor {
    let mut t = Tensor::zeros(&[rows, cols]);
    for i in 0..rows.min(cols) {
        t.data_mut()[i * cols + i] = 1.0;
    }
    t
}

fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut out = alloc::vec![0.0; m * n];
    crate::diff::gemm_acc(a.data(), b.data(), &mut out, m, k, n);
    Tensor::new(alloc::vec![m, n], out).expect("shape")
}

/// Frozen token table and encoder weights, adapters, and disentangler
/// weights for a vocabulary of `vocab_len` tokens.
pub fn init_text_params(store: &mut ParamStore, cfg: &TextConfig, vocab_len: usize, seed: u64) {
    let d = cfg.dims;
    let (dm, dd, hid) = (d.d_model, d.dim, d.ffn_hidden);

    // The frozen "pretrained" encoder depends on the seed alone, so variants
    // that differ only in the trainable part start from the same encoder.
    let mut enc = rng::stream(seed, 0x0e0c);
    store.insert("embed.tokens", gaussian(&mut enc, &[vocab_len, dm], 1.0), ParamGroup::Frozen);
    let s = 1.0 / libm::sqrt(dm as f64);
    for w in ["q", "k", "v"] {
        store.insert(&format!("encoder.w{w}"), gaussian(&mut enc, &[dm, dm], s), ParamGroup::Frozen);
    }
    let mut ad = rng::stream(seed, 0xada9);
    if cfg.lora_rank > 0 {
        for w in ["q", "v"] {
            store.insert(
                &format!("encoder.lora_{w}.down"),
                gaussian(&mut ad, &[dm, cfg.lora_rank], s),
                ParamGroup::Adapter,
            );
            store.insert(
                &format!("encoder.lora_{w}.up"),
                Tensor::zeros(&[cfg.lora_rank, dm]),
                ParamGroup::Adapter,
            );
        }
    }

    let mut r = rng::stream(seed, 0xd15e);
    let m = ParamGroup::Module;
    let small = 0.02;
    for (prefix, width) in [("dis.ffn1", dm), ("dis.ffn2", dd)] {
        let (w1, w2) = match cfg.init {
            InitScheme::Identity => (gaussian(&mut r, &[width, hid], small), gaussian(&mut r, &[hid, width], small)),
            InitScheme::Uniform => (
                uniform(&mut r, &[width, hid], 1.0 / libm::sqrt(width as f64)),
                uniform(&mut r, &[hid, width], 1.0 / libm::sqrt(hid as f64)),
            ),
        };
        store.insert(&format!("{prefix}.w1"), w1, m);
        store.insert(&format!("{prefix}.b1"), Tensor::zeros(&[hid]), m);
        store.insert(&format!("{prefix}.w2"), w2, m);
        store.insert(&format!("{prefix}.b2"), Tensor::zeros(&[width]), m);
    }
    let proj = match cfg.init {
        InitScheme::Identity => eye(dm, dd),
        InitScheme::Uniform => uniform(&mut r, &[dm, dd], 1.0 / libm::sqrt(dm as f64)),
    };
    store.insert("dis.proj.w", proj, m);
    store.insert("dis.proj.b", Tensor::zeros(&[dd]), m);
    for ln in ["dis.ln1", "dis.ln2"] {
        store.insert(&format!("{ln}.gain"), Tensor::filled(&[dd], 1.0), m);
        store.insert(&format!("{ln}.bias"), Tensor::zeros(&[dd]), m);
    }

    let tv = d.component_tokens;
    let base = gaussian(&mut r, &[tv, dd], 0.5);
    for c in Component::ALL {
        let key = c.key();
        let (vectors, wq, wk, wv) = match cfg.init {
            InitScheme::Identity => {
                let rot = random_orthogonal(&mut r, dd);
                (matmul(&base, &rot), eye(dd, dd), eye(dd, dd), eye(dd, dd))
            }
            InitScheme::Uniform => {
                let b = 1.0 / libm::sqrt(dd as f64);
                (
                    uniform(&mut r, &[tv, dd], 0.5),
                    uniform(&mut r, &[dd, dd], b),
                    uniform(&mut r, &[dd, dd], b),
                    uniform(&mut r, &[dd, dd], b),
                )
            }
        };
        store.insert(&format!("dis.vectors.{key}"), vectors, m);
        store.insert(&format!("dis.attn.{key}.wq"), wq, m);
        store.insert(&format!("dis.attn.{key}.wk"), wk, m);
        store.insert(&format!("dis.attn.{key}.wv"), wv, m);
    }
}
