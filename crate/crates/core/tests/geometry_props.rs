use std::f64::consts::PI;

use hierground_core::diff::{grad_check, GradCheckConfig, Tensor};
use hierground_core::geometry::{
    combined_loss, exterior_angle, hier_neg_loss_var, hier_pos_loss_var, ChainVars, HierarchyChain, HierarchyOptions,
    ReferenceFrame, ReferenceMode,
};
use hierground_core::synth::{generate_corpus, CorpusConfig};
use hierground_core::train::{LossMode, TrainConfig, Trainer, ROOT};
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 3)
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.1).then(|| v.iter().map(|x| x / n).collect())
}

/// Every difference the losses divide by is comfortably non-zero.
fn well_separated(vs: &[&[f64]]) -> bool {
    vs.iter().enumerate().all(|(i, a)| {
        vs[i + 1..]
            .iter()
            .all(|b| a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() > 0.25)
    })
}

proptest! {
    #[test]
    fn angle_is_invariant_to_uniform_scaling(r in vec3(), u in vec3(), v in vec3(), s in 0.01f64..100.0) {
        let (Some(u), Some(v)) = (unit(&u), unit(&v)) else { return Ok(()) };
        let at = |s: f64| {
            let a: Vec<f64> = r.iter().zip(&u).map(|(r, u)| r + s * u).collect();
            let b: Vec<f64> = a.iter().zip(&v).map(|(a, v)| a + s * v).collect();
            exterior_angle(&a, &b, &r).unwrap()
        };
        prop_assert!((at(1.0) - at(s)).abs() < 1e-9);
    }

    #[test]
    fn angle_lies_in_zero_to_pi(a in vec3(), b in vec3(), r in vec3()) {
        if let Ok(x) = exterior_angle(&a, &b, &r) {
            prop_assert!((0.0..=PI).contains(&x));
        }
    }

    #[test]
    fn hierarchy_losses_are_finite(p0 in vec3(), p1 in vec3(), n0 in vec3(), n1 in vec3(), root in vec3()) {
        prop_assume!(well_separated(&[&p0, &p1, &n0, &n1, &root]));
        let chain = HierarchyChain::new(vec![p0, p1], vec![n0, n1]).unwrap();
        for mode in [ReferenceMode::Dynamic, ReferenceMode::Global] {
            let frame = ReferenceFrame::new(root.clone(), mode);
            for normalize in [true, false] {
                let opts = HierarchyOptions { normalize, ..Default::default() };
                prop_assert!(chain.hier_pos_loss(&frame, &opts).unwrap().is_finite());
                let neg = chain.hier_neg_loss(&frame, &opts);
                prop_assert!(neg.map_or(true, f64::is_finite));
            }
        }
    }

    #[test]
    fn hierarchy_gradients_match_differences(p0 in vec3(), p1 in vec3(), n0 in vec3(), n1 in vec3(), root in vec3()) {
        prop_assume!(well_separated(&[&p0, &p1, &n0, &n1, &root]));
        let inputs: Vec<Tensor> = [p0, p1, n0, n1].into_iter().map(Tensor::vector).collect();
        let opts = HierarchyOptions::default();
        for neg in [false, true] {
            let root = root.clone();
            let r = grad_check(&inputs, move |g, v| {
                let chain = ChainVars { pos: vec![v[0], v[1]], neg: vec![v[2], v[3]] };
                let r = g.constant(Tensor::vector(root.clone()));
                if neg {
                    hier_neg_loss_var(g, &chain, r, ReferenceMode::Dynamic, &opts)
                } else {
                    hier_pos_loss_var(g, &chain, r, ReferenceMode::Dynamic, &opts)
                }
            }, &GradCheckConfig::default());
            match r {
                Ok(r) => prop_assert!(r.passed(), "max rel err {}", r.max_rel_error),
                // a sampled opposing configuration can still be exactly degenerate
                Err(e) => prop_assert!(e.is_degenerate(), "{}", e),
            }
        }
    }

    #[test]
    fn combined_loss_is_the_sum_of_parts(d in -10.0f64..10.0, p in -10.0f64..10.0, n in -10.0f64..10.0) {
        prop_assert!((combined_loss(d, p, n) - (d + p + n)).abs() < 1e-12);
    }
}

#[test]
fn one_step_of_every_loss_mode_leaves_the_root_bit_identical() {
    let corpus = generate_corpus(&CorpusConfig { scenes: 12, ..Default::default() }, 3).unwrap();
    for mode in LossMode::ALL {
        let cfg = TrainConfig {
            mode,
            chains_per_step: 4,
            ..TrainConfig::desk()
        };
        let mut t = Trainer::new(cfg, &corpus).unwrap();
        let before: Vec<u64> = t.model.store.get(ROOT).unwrap().value.data().iter().map(|x| x.to_bits()).collect();
        t.step().unwrap();
        let after: Vec<u64> = t.model.store.get(ROOT).unwrap().value.data().iter().map(|x| x.to_bits()).collect();
        assert_eq!(before, after, "root moved under {mode}");
    }
}
