use hierground_core::diff::{grad_check_primitive, GradCheckConfig, Graph, Primitive, Tensor};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d).unwrap())
}

fn sized_matrix() -> impl Strategy<Value = Tensor> {
    (1usize..6, 1usize..7).prop_flat_map(|(r, c)| matrix(r, c))
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(x in sized_matrix()) {
        let mut g = Graph::new();
        let v = g.constant(x.clone());
        let s = g.softmax(v).unwrap();
        let out = g.value(s);
        let (rows, _) = out.dims2();
        for r in 0..rows {
            let sum: f64 = out.row(r).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12, "row {} sums to {}", r, sum);
            prop_assert!(out.row(r).iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn clamped_acos_stays_in_range(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        let mut g = Graph::new();
        let v = g.constant(Tensor::scalar(x));
        let c = g.clamp(v, -1.0, 1.0).unwrap();
        let a = g.acos(c).unwrap();
        let y = g.item(a);
        prop_assert!((0.0..=std::f64::consts::PI).contains(&y));
    }

    #[test]
    fn forward_pass_is_bit_deterministic(a in matrix(3, 4), b in matrix(4, 2)) {
        let run = || {
            let mut g = Graph::new();
            let x = g.constant(a.clone());
            let w = g.constant(b.clone());
            let y = g.matmul(x, w).unwrap();
            let y = g.gelu(y).unwrap();
            let y = g.softmax(y).unwrap();
            g.value(y).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn matmul_gradient_matches_differences(a in matrix(3, 4), b in matrix(4, 2)) {
        let r = grad_check_primitive(Primitive::MatMul, &[a, b], &GradCheckConfig::default()).unwrap();
        prop_assert!(r.passed(), "max rel err {}", r.max_rel_error);
    }

    #[test]
    fn layer_norm_gradient_matches_differences(x in matrix(1, 8), gain in matrix(1, 8), bias in matrix(1, 8)) {
        let gain = Tensor::vector(gain.data().to_vec());
        let bias = Tensor::vector(bias.data().to_vec());
        let r = grad_check_primitive(Primitive::LayerNorm, &[x, gain, bias], &GradCheckConfig::default()).unwrap();
        prop_assert!(r.passed(), "max rel err {}", r.max_rel_error);
    }
}

#[test]
fn acos_near_boundary_is_excluded() {
    let r = grad_check_primitive(Primitive::Acos, &[Tensor::scalar(0.999_999)], &GradCheckConfig::default()).unwrap();
    assert_eq!(r.checked, 0);
    assert_eq!(r.excluded.len(), 1);
}
