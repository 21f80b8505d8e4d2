mod common;

use common::*;
use interflow::metrics::{epe, epe_with_grad, interpolation_loss, interpolation_loss_with_grad, SsimConfig};
use interflow::{FlowField, Plane};

const TOL: f64 = 1e-3;
const H: f32 = 1e-3;

#[test]
fn interpolation_loss_gradient_matches_finite_differences() {
    let mut r = rng(21);
    let target = random_plane(&mut r, 16, 16);
    let pred = random_plane(&mut r, 16, 16);
    for range in [1.0, 0.3] {
        let cfg = SsimConfig::default().with_range(range);
        let (_, grad) = interpolation_loss_with_grad(&pred, &target, &cfg).unwrap();
        let mut x = pred.data.clone();
        for i in 0..x.len() {
            // the L1 term is not differentiable where prediction meets target
            if (pred.data[i] - target.data[i]).abs() < 4.0 * H {
                continue;
            }
            let fd = central_difference(&mut x, i, H, |x| {
                interpolation_loss(&Plane::new(16, 16, x.to_vec()).unwrap(), &target, &cfg).unwrap()
            });
            assert!(relative_error(grad[i], fd) < TOL, "pixel {i}: {} vs {fd}", grad[i]);
        }
    }
}

#[test]
fn epe_gradient_matches_finite_differences() {
    let mut r = rng(22);
    let gt = random_flow(&mut r, 16, 16, 5.0);
    let pred = random_flow(&mut r, 16, 16, 5.0);
    let (_, gu, gv) = epe_with_grad(&pred, &gt).unwrap();
    for (component, grad) in [(0, &gu), (1, &gv)] {
        let mut x = if component == 0 { pred.u.clone() } else { pred.v.clone() };
        for i in 0..x.len() {
            let fd = central_difference(&mut x, i, H, |x| {
                let f = if component == 0 {
                    FlowField::new(16, 16, x.to_vec(), pred.v.clone(), pred.valid.clone())
                } else {
                    FlowField::new(16, 16, pred.u.clone(), x.to_vec(), pred.valid.clone())
                };
                epe(&f.unwrap(), &gt).unwrap()
            });
            if !gt.valid[i] {
                assert_eq!(grad[i], 0.0);
                assert_eq!(fd, 0.0);
                continue;
            }
            assert!(relative_error(grad[i], fd) < TOL, "component {component} pixel {i}: {} vs {fd}", grad[i]);
        }
    }
}
