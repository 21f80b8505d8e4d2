mod common;

use interflow::data::{generate_synthetic_corpus, AugmentConfig, Dataset, SyntheticConfig};
use interflow::flowio::{decode_flo, decode_kitti_flow, encode_flo, encode_kitti_flow, read_flo, write_flo};
use interflow::training::{Checkpoint, TrainOptions, Trainer, TrainingSchedule};
use interflow::{FlowField, Head, Network, NetworkSpec};
use proptest::prelude::*;

fn field(w: usize, h: usize, u: Vec<f32>, v: Vec<f32>, valid: Vec<bool>) -> FlowField {
    FlowField::new(w, h, u, v, valid).unwrap()
}

prop_compose! {
    fn finite_field(max: f32)(w in 1usize..12, h in 1usize..12)
        (u in prop::collection::vec(-max..max, w * h), v in prop::collection::vec(-max..max, w * h),
         valid in prop::collection::vec(any::<bool>(), w * h), w in Just(w), h in Just(h)) -> FlowField {
        field(w, h, u, v, valid)
    }
}

proptest! {
    #[test]
    fn flo_is_bit_exact(
        w in 1usize..10,
        h in 1usize..10,
        bits in prop::collection::vec(any::<u32>(), 200),
    ) {
        let n = w * h;
        let vals: Vec<f32> = bits.iter().map(|&b| f32::from_bits(b)).map(|x| if x.is_finite() { x } else { 0.0 }).collect();
        let f = field(w, h, vals[..n].to_vec(), vals[100..100 + n].to_vec(), vec![true; n]);
        let bytes = encode_flo(&f).unwrap();
        let back = decode_flo(&bytes).unwrap();
        prop_assert_eq!(back.u.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), f.u.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(back.v.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), f.v.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(encode_flo(&back).unwrap(), bytes);
    }

    #[test]
    fn kitti_png_is_exact_on_the_sixty_fourth_grid(f in finite_field(500.0)) {
        let snapped = |x: &Vec<f32>| x.iter().map(|v| (v * 64.0).round() / 64.0).collect::<Vec<f32>>();
        let q = field(f.width, f.height, snapped(&f.u), snapped(&f.v), f.valid.clone());
        let back = decode_kitti_flow(&encode_kitti_flow(&q).unwrap()).unwrap();
        prop_assert_eq!(&back, &q);
        // off-grid values land within half a step
        let back = decode_kitti_flow(&encode_kitti_flow(&f).unwrap()).unwrap();
        for (a, b) in back.u.iter().chain(&back.v).zip(f.u.iter().chain(&f.v)) {
            prop_assert!((a - b).abs() <= 0.5 / 64.0 + 1e-4);
        }
    }
}

#[test]
fn flo_rejects_corruption() {
    let f = FlowField::constant(3, 2, 1.5, -2.0);
    let bytes = encode_flo(&f).unwrap();
    assert!(decode_flo(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(decode_flo(&extra).is_err());
    let mut magic = bytes.clone();
    magic[0] ^= 1;
    assert!(decode_flo(&magic).is_err());
    let mut huge = bytes;
    huge[4..8].copy_from_slice(&i32::MAX.to_le_bytes());
    assert!(decode_flo(&huge).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.flo");
    write_flo(&path, &f).unwrap();
    assert_eq!(read_flo(&path).unwrap(), f);
}

fn trained_checkpoint() -> Checkpoint {
    let cfg = SyntheticConfig { sequences: 2, length: 6, ..Default::default() };
    let data = Dataset::from_synthetic("synthetic", generate_synthetic_corpus(&cfg, 4).unwrap()).unwrap();
    let split = data.flow_split(0.25, 0);
    let mut schedule = TrainingSchedule::finetune();
    schedule.total_epochs = 1;
    schedule.batch_size = 4;
    let spec = NetworkSpec::full_size().narrowed(16).unwrap().with_resolution(64, 32).with_head(Head::Flow);
    let opts = TrainOptions::new(schedule, AugmentConfig::identity(64, 32), 3);
    let mut trainer = Trainer::new(Network::new(spec, 2).unwrap(), opts).unwrap();
    trainer.run(&data, &split.train, &split.val).unwrap();
    trainer.checkpoint()
}

#[test]
fn checkpoint_save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained_checkpoint();
    assert!(ckpt.optimizer.is_some() && ckpt.epoch == 1);
    let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    ckpt.save(&a).unwrap();
    let loaded = Checkpoint::load(&a).unwrap();
    assert_eq!(loaded.network.state(), ckpt.network.state());
    assert_eq!((loaded.optimizer.as_ref(), &loaded.history), (ckpt.optimizer.as_ref(), &ckpt.history));
    loaded.save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let bytes = ckpt.to_bytes().unwrap();
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() / 2]).is_err());
}
