use hierground_core::synth::{generate_corpus, Corpus, CorpusConfig};
use hierground_core::train::{LossMode, TrainConfig, Trainer};

fn corpus() -> Corpus {
    generate_corpus(&CorpusConfig { scenes: 16, ..Default::default() }, 21).unwrap()
}

fn cfg(iterations: usize) -> TrainConfig {
    TrainConfig {
        chains_per_step: 4,
        iterations,
        ..TrainConfig::desk()
    }
}

#[test]
fn resuming_matches_an_unbroken_run_bit_for_bit() {
    let c = corpus();
    let mut whole = Trainer::new(cfg(6), &c).unwrap();
    whole.run(|_| {}).unwrap();

    let mut first = Trainer::new(cfg(3), &c).unwrap();
    first.run(|_| {}).unwrap();
    let ckpt = first.checkpoint();
    let mut rest = Trainer::resume(cfg(6), &c, ckpt).unwrap();
    rest.run(|_| {}).unwrap();

    assert_eq!(rest.step, 6);
    assert_eq!(rest.model.store, whole.model.store);
    assert_eq!(rest.optimizer, whole.optimizer);
}

#[test]
fn a_checkpoint_from_another_configuration_is_refused() {
    let c = corpus();
    let t = Trainer::new(cfg(2), &c).unwrap();
    let other = TrainConfig { mode: LossMode::Cl, ..cfg(2) };
    assert!(Trainer::resume(other, &c, t.checkpoint()).is_err());
}

#[test]
fn training_is_deterministic() {
    let c = corpus();
    let run = || {
        let mut t = Trainer::new(cfg(3), &c).unwrap();
        let mut losses = Vec::new();
        t.run(|r| losses.push(r.total.to_bits())).unwrap();
        losses
    };
    assert_eq!(run(), run());
}
