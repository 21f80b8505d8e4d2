mod common;

use common::parameter_oracle;
use interflow::{Head, Mode, Network, NetworkSpec, Tensor};

const INPUT_ROW: [usize; 11] = [4, 128, 128, 256, 256, 512, 1024, 1024, 512, 512, 256];
const OUTPUT_ROW: [usize; 11] = [128, 128, 256, 256, 512, 1024, 1024, 512, 512, 256, 1];

#[test]
fn full_network_matches_the_block_table() {
    let net = Network::new(NetworkSpec::full_size(), 0).unwrap();
    let trace = net.channel_trace();
    assert_eq!(trace.iter().map(|b| b.input).collect::<Vec<_>>(), INPUT_ROW);
    let mut out: Vec<usize> = trace.iter().map(|b| b.inner).collect();
    out[10] = trace[10].output;
    assert_eq!(out, OUTPUT_ROW);
    assert_eq!(net.parameter_count(), parameter_oracle(1));
    assert_eq!(parameter_oracle(1), 83_553_025);

    let x = Tensor::zeros(1, 4, 32, 64);
    let (y, _) = net.trace_shapes(&x).unwrap();
    assert_eq!(y.shape(), [1, 1, 32, 64]);
}

#[test]
fn narrowed_networks_match_the_oracle() {
    for div in [2, 4, 8, 16] {
        let net = Network::new(NetworkSpec::full_size().narrowed(div).unwrap(), 0).unwrap();
        assert_eq!(net.parameter_count(), parameter_oracle(div), "divisor {div}");
        let trace = net.channel_trace();
        assert_eq!(trace[0].input, 4);
        assert_eq!(trace[1].input, 128 / div);
    }
}

#[test]
fn forward_shapes_at_both_resolutions() {
    for (w, h) in [(384, 192), (64, 32)] {
        let spec = NetworkSpec::full_size().narrowed(16).unwrap().with_resolution(w, h);
        let net = Network::new(spec, 1).unwrap();
        let (y, stages) = net.trace_shapes(&Tensor::zeros(2, 4, h, w)).unwrap();
        assert_eq!(y.shape(), [2, 1, h, w]);
        let get = |name: &str| stages.iter().find(|s| s.stage == name).unwrap().shape;
        assert_eq!(get("conv5.pool")[2..], [h / 32, w / 32]);
        assert_eq!(get("conv1")[2..], [h, w]);

        let flow = net.swap_head(3).unwrap();
        assert_eq!(flow.head(), Head::Flow);
        assert_eq!(flow.infer(&Tensor::zeros(1, 4, h, w)).unwrap().shape(), [1, 2, h, w]);
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let mut net = Network::new(NetworkSpec::full_size().narrowed(16).unwrap(), 1).unwrap();
    assert!(net.infer(&Tensor::zeros(1, 4, 32, 48)).is_err());
    assert!(net.infer(&Tensor::zeros(1, 3, 32, 64)).is_err());
    net.set_mode(Mode::Eval);
    assert!(net.forward(&Tensor::zeros(1, 4, 30, 64)).is_err());
}

#[test]
fn head_swap_keeps_the_trunk() {
    let net = Network::new(NetworkSpec::full_size().narrowed(16).unwrap(), 1).unwrap();
    let swapped = net.clone().swap_head(9).unwrap();
    let before: Vec<_> = net.params().filter(|p| !p.name.starts_with("dec1.head")).collect();
    let after: Vec<_> = swapped.params().filter(|p| !p.name.starts_with("dec1.head")).collect();
    assert_eq!(before, after);
    assert_eq!(
        swapped.parameter_count() - net.parameter_count(),
        9 * (128 / 16) + 1
    );
}
