use std::cell::RefCell;

use interflow::data::{generate_synthetic_corpus, Dataset, SyntheticConfig};
use interflow::evaluation::{eval_flow, eval_flow_with, flow_for_sequence, FlowEvalSet, FlowPostProcess};
use interflow::{FlowField, Network, NetworkSpec, Plane};

/// Replaces every prediction with the next ground-truth field, in evaluation order.
struct Oracle(RefCell<std::vec::IntoIter<FlowField>>);

impl FlowPostProcess for Oracle {
    fn refine(&self, _: &Plane, _: &Plane, _: FlowField) -> interflow::Result<FlowField> {
        Ok(self.0.borrow_mut().next().expect("one field per pair"))
    }
}

fn corpus(width: usize, height: usize, seed: u64) -> Dataset {
    let cfg = SyntheticConfig { width, height, length: 5, sequences: 2, ..Default::default() };
    Dataset::from_synthetic("synthetic", generate_synthetic_corpus(&cfg, seed).unwrap()).unwrap()
}

fn flow_net() -> Network {
    let spec = NetworkSpec::full_size().narrowed(16).unwrap().with_resolution(64, 32);
    Network::new(spec, 1).unwrap().swap_head(2).unwrap()
}

#[test]
fn ground_truth_predictions_score_zero() {
    let data = corpus(50, 20, 1);
    let gts: Vec<FlowField> = data
        .flow_specs()
        .iter()
        .map(|s| data.sequences[s.sequence].flow(s.center).unwrap().clone())
        .collect();
    let n = gts.len();
    let oracle = Oracle(RefCell::new(gts.into_iter()));
    let sets = [FlowEvalSet { name: "synthetic".into(), data }];
    let ev = eval_flow_with(&flow_net(), &sets, Some(&oracle)).unwrap();
    let all = ev.report.overall().unwrap();
    assert_eq!(all.epe, Some(0.0));
    assert_eq!(all.fl_all, Some(0.0));
    assert_eq!(all.n_samples, n);
    assert!(ev.samples.iter().all(|s| s.epe == 0.0));
}

#[test]
fn raw_predictions_cover_every_pixel_at_odd_sizes() {
    let sets = [FlowEvalSet { name: "odd".into(), data: corpus(50, 20, 2) }];
    let ev = eval_flow(&flow_net(), &sets).unwrap();
    assert_eq!(ev.samples.len(), 2 * 4);
    assert!(ev.report.overall().unwrap().epe.unwrap().is_finite());
}

#[test]
fn one_flow_per_consecutive_pair() {
    let net = flow_net();
    let data = corpus(40, 24, 3);
    let frames = &data.sequences[0].gray;
    for n in 2..=5 {
        let flows = flow_for_sequence(&net, &frames[..n]).unwrap();
        assert_eq!(flows.len(), n - 1);
        assert!(flows.iter().all(|f| (f.width, f.height) == (40, 24)));
    }
    assert!(flow_for_sequence(&net, &frames[..1]).is_err());
    let interp = Network::new(NetworkSpec::full_size().narrowed(16).unwrap(), 1).unwrap();
    assert!(flow_for_sequence(&interp, &frames[..3]).is_err());
}

#[test]
fn synthetic_flow_warps_the_next_frame_onto_the_current_one() {
    let cfg = SyntheticConfig { length: 3, sequences: 3, max_speed: 3.0, ..Default::default() };
    let data = Dataset::from_synthetic("s", generate_synthetic_corpus(&cfg, 8).unwrap()).unwrap();
    for seq in &data.sequences {
        let flow = seq.flow(0).unwrap();
        let (warped, inside) = flow.warp(&seq.gray[1]).unwrap();
        let (mut err, mut n) = (0.0f64, 0usize);
        for i in 0..flow.len() {
            if flow.valid[i] && inside[i] {
                err += (warped.data[i] - seq.gray[0].data[i]).abs() as f64;
                n += 1;
            }
        }
        assert!(n > flow.len() / 2);
        // bilinear resampling of a smooth texture leaves a small residual
        assert!(err / (n as f64) < 0.02, "mean residual {}", err / n as f64);
    }
}
