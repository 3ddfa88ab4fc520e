use hierground_core::diff::{Graph, Tensor};
use hierground_core::disentangle::{attention_weights, lora_linear, multi_head_attention, TextConfig};
use hierground_core::train::Model;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d).unwrap())
}

fn dense(x: &Tensor, w: &Tensor) -> Vec<f64> {
    let ((n, k), (_, m)) = (x.dims2(), w.dims2());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[i * m + j] = (0..k).map(|t| x.data()[i * k + t] * w.data()[t * m + j]).sum();
        }
    }
    out
}

proptest! {
    #[test]
    fn attention_rows_sum_to_one(q in matrix(3, 4), k in matrix(5, 4)) {
        let mut g = Graph::new();
        let (q, k) = (g.constant(q), g.constant(k));
        let a = attention_weights(&mut g, q, k).unwrap();
        let a = g.value(a);
        for r in 0..3 {
            prop_assert!((a.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_head_attention_with_equal_keys_averages_values(q in matrix(2, 4), k in matrix(1, 4), v in matrix(3, 4)) {
        let keys = Tensor::matrix(3, 4, k.data().repeat(3)).unwrap();
        let mut g = Graph::new();
        let (q, kk, vv) = (g.constant(q), g.constant(keys), g.constant(v.clone()));
        let out = multi_head_attention(&mut g, q, kk, vv, 1).unwrap();
        let out = g.value(out);
        for r in 0..2 {
            for c in 0..4 {
                let mean = (0..3).map(|i| v.data()[i * 4 + c]).sum::<f64>() / 3.0;
                prop_assert!((out.row(r)[c] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adapter_matches_the_dense_product(x in matrix(2, 5), w in matrix(5, 3), down in matrix(5, 2), up in matrix(2, 3), s in 0.0f64..20.0) {
        let mut g = Graph::new();
        let vars = [&x, &w, &down, &up].map(|t| g.constant(t.clone()));
        let y = lora_linear(&mut g, vars[0], vars[1], vars[2], vars[3], s).unwrap();
        let base = dense(&x, &w);
        let h = Tensor::matrix(2, 2, dense(&x, &down)).unwrap();
        let low = dense(&h, &up);
        for (i, v) in g.value(y).data().iter().enumerate() {
            prop_assert!((v - (base[i] + s * low[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn a_zero_up_factor_leaves_the_base_product(x in matrix(2, 5), w in matrix(5, 3), down in matrix(5, 2)) {
        let mut g = Graph::new();
        let up = g.constant(Tensor::zeros(&[2, 3]));
        let vars = [&x, &w, &down].map(|t| g.constant(t.clone()));
        let y = lora_linear(&mut g, vars[0], vars[1], vars[2], up, 16.0).unwrap();
        let base = dense(&x, &w);
        prop_assert_eq!(g.value(y).data(), &base[..]);
    }
}

#[test]
fn freshly_initialised_adapters_do_not_change_embeddings() {
    let cfg = TextConfig::default();
    assert!(cfg.lora_rank > 0);
    let model = Model::init(cfg, 0.07, 7).unwrap();
    let mut plain = model.clone();
    plain.text.lora_rank = 0;
    let captions = ["woman", "middle woman", "middle woman with dark hair"];
    let a = model.embed(&captions).unwrap();
    let b = plain.embed(&captions).unwrap();
    for (x, y) in a.embeddings.data().iter().zip(b.embeddings.data()) {
        assert!((x - y).abs() < 1e-12);
    }
}
