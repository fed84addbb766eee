//! Serialization round-trips, module save/load, optimizer state resume.

use vdq_tensor::adam::{Adam, AdamConfig};
use vdq_tensor::io::{load_tensor, save_tensor, TensorMap};
use vdq_tensor::nn::{self, Linear, Module};
use vdq_tensor::rng::rng_from;
use vdq_tensor::{backward, Tensor};

use proptest::prelude::*;

#[test]
fn dvt1_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.dvt");
    let mut rng = rng_from(1);
    let t = Tensor::randn(&[3, 4, 5], &mut rng);
    save_tensor(&path, &t).unwrap();
    let back = load_tensor(&path).unwrap();
    assert_eq!(back.shape(), t.shape());
    let bits_a: Vec<u64> = t.data().iter().map(|v| v.to_bits()).collect();
    let bits_b: Vec<u64> = back.data().iter().map(|v| v.to_bits()).collect();
    assert_eq!(bits_a, bits_b);
}

#[test]
fn dvt1_rejects_bad_magic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.dvt");
    std::fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
    assert!(load_tensor(&path).is_err());
}

#[test]
fn tensor_map_roundtrip_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = rng_from(2);
    let mut map = TensorMap::new();
    map.insert("b.second", Tensor::randn(&[2, 2], &mut rng));
    map.insert("a.first", Tensor::randn(&[5], &mut rng));
    let p1 = dir.path().join("m1.dvtm");
    let p2 = dir.path().join("m2.dvtm");
    map.save(&p1).unwrap();
    map.save(&p2).unwrap();
    // byte-identical output across saves
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

    let back = TensorMap::load(&p1).unwrap();
    assert_eq!(back.names(), vec!["a.first".to_string(), "b.second".to_string()]);
    assert_eq!(back.get("a.first").unwrap().to_vec(), map.get("a.first").unwrap().to_vec());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn dvt1_roundtrip_property(values in proptest::collection::vec(-1e6f64..1e6, 1..64)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.dvt");
        let n = values.len();
        let t = Tensor::from_vec(values, &[n]);
        save_tensor(&path, &t).unwrap();
        let back = load_tensor(&path).unwrap();
        prop_assert_eq!(back.to_vec(), t.to_vec());
    }
}

struct TinyModel {
    l1: Linear,
    l2: Linear,
}

impl Module for TinyModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &nn::Param)) {
        self.l1.visit(&format!("{prefix}l1"), f);
        self.l2.visit(&format!("{prefix}l2"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut nn::Param)) {
        self.l1.visit_mut(&format!("{prefix}l1"), f);
        self.l2.visit_mut(&format!("{prefix}l2"), f);
    }
}

impl TinyModel {
    fn new(seed: u64) -> TinyModel {
        let mut rng = rng_from(seed);
        TinyModel {
            l1: Linear::new(3, 8, true, &mut rng),
            l2: Linear::new(8, 1, true, &mut rng),
        }
    }

    fn loss(&self, x: &Tensor, y: &Tensor) -> Tensor {
        let h = self.l1.forward(x).unwrap().tanh().unwrap();
        let p = self.l2.forward(&h).unwrap();
        p.sub(y).unwrap().mul(&p.sub(y).unwrap()).unwrap().mean_all().unwrap()
    }
}

#[test]
fn adam_converges_on_regression() {
    let mut rng = rng_from(3);
    let x = Tensor::randn(&[16, 3], &mut rng);
    let y = x.sum(&[1], true).unwrap().tanh().unwrap().detached();

    let mut model = TinyModel::new(4);
    let mut opt = Adam::new(AdamConfig::new(1e-2, 0.0));
    let first = model.loss(&x, &y).item();
    for _ in 0..200 {
        let loss = model.loss(&x, &y);
        let grads = backward(&loss).unwrap();
        opt.step(&mut model, &grads);
    }
    let last = model.loss(&x, &y).item();
    assert!(last < 0.05 * first, "loss did not converge: {first} -> {last}");
}

#[test]
fn module_save_load_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let model = TinyModel::new(5);
    let h0 = nn::state_hash(&model);

    let mut map = TensorMap::new();
    nn::save_module(&model, &mut map, "");
    let path = dir.path().join("ckpt.dvtm");
    map.save(&path).unwrap();

    let mut other = TinyModel::new(6);
    assert_ne!(nn::state_hash(&other), h0);
    let loaded = TensorMap::load(&path).unwrap();
    nn::load_module(&mut other, &loaded, "").unwrap();
    assert_eq!(nn::state_hash(&other), h0);
}

#[test]
fn adam_resume_is_bit_identical() {
    let mut rng = rng_from(7);
    let x = Tensor::randn(&[8, 3], &mut rng);
    let y = Tensor::randn(&[8, 1], &mut rng);

    // continuous run: 10 steps
    let mut m1 = TinyModel::new(8);
    let mut o1 = Adam::new(AdamConfig::new(1e-3, 1e-6));
    for _ in 0..10 {
        let grads = backward(&m1.loss(&x, &y)).unwrap();
        o1.step(&mut m1, &grads);
    }

    // checkpointed run: 5 steps, save, restore into fresh objects, 5 more
    let mut m2 = TinyModel::new(8);
    let mut o2 = Adam::new(AdamConfig::new(1e-3, 1e-6));
    for _ in 0..5 {
        let grads = backward(&m2.loss(&x, &y)).unwrap();
        o2.step(&mut m2, &grads);
    }
    let mut map = TensorMap::new();
    nn::save_module(&m2, &mut map, "");
    o2.save_state(&mut map, "opt");

    let mut m3 = TinyModel::new(9);
    nn::load_module(&mut m3, &map, "").unwrap();
    let mut o3 = Adam::new(AdamConfig::new(1e-3, 1e-6));
    o3.load_state(&map, "opt").unwrap();
    for _ in 0..5 {
        let grads = backward(&m3.loss(&x, &y)).unwrap();
        o3.step(&mut m3, &grads);
    }

    assert_eq!(nn::state_hash(&m1), nn::state_hash(&m3));
}

#[test]
fn frozen_params_receive_no_gradient_and_stay_fixed() {
    let mut model = TinyModel::new(10);
    nn::set_trainable(&mut model, false);
    let h0 = nn::state_hash(&model);
    let mut rng = rng_from(11);
    let x = Tensor::randn(&[4, 3], &mut rng);
    let y = Tensor::randn(&[4, 1], &mut rng);
    let loss = model.loss(&x, &y);
    let grads = backward(&loss).unwrap();
    assert!(grads.is_empty());
    let mut opt = Adam::new(AdamConfig::new(1e-2, 0.0));
    opt.step(&mut model, &grads);
    assert_eq!(nn::state_hash(&model), h0);
}
