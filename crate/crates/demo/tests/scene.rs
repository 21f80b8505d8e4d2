use interflow_demo::{color_wheel_rgba, Scene};

#[test]
fn buffers_are_rgba_sized() {
    let s = Scene::try_new(32, 16, 2, 2.0, 4.0, 9).unwrap();
    assert_eq!(s.frame_rgba(3).len(), 32 * 16 * 4);
    assert_eq!(s.flow_rgba(3, 0.0).len(), 32 * 16 * 4);
    assert_eq!(s.blend_rgba(3).len(), 32 * 16 * 4);
    assert_eq!(color_wheel_rgba(10).len(), 10 * 10 * 4);
}

#[test]
fn still_scene_blends_exactly() {
    let s = Scene::try_new(32, 16, 3, 0.0, 4.0, 2).unwrap();
    assert!(s.psnr(4).unwrap() >= 99.0);
    let moving = Scene::try_new(32, 16, 3, 4.0, 4.0, 2).unwrap();
    assert!(moving.psnr(4).unwrap() < 40.0);
}

#[test]
fn flow_speed_matches_request() {
    let s = Scene::try_new(32, 16, 1, 3.0, 4.0, 5).unwrap();
    let f = s.flow(0);
    assert!((f.u[0].hypot(f.v[0]) - 3.0).abs() < 1e-4);
}

#[test]
fn wheel_center_is_white_and_corners_black() {
    let w = color_wheel_rgba(9);
    let px = |x: usize, y: usize| &w[4 * (y * 9 + x)..4 * (y * 9 + x) + 3];
    assert_eq!(px(4, 4), [255, 255, 255]);
    assert_eq!(px(0, 0), [0, 0, 0]);
}
