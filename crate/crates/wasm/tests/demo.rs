use spineseg_wasm::{osteophyte_residue, simulated_prediction, synthetic_spine};

#[test]
fn spine_frame_reports_both_angles() {
    let f = synthetic_spine(7, 5, 45.0, true).unwrap_or_else(|_| panic!("spine"));
    assert_eq!((f.width(), f.height()), (256, 448));
    assert_eq!(f.rgba().len(), 256 * 448 * 4);
    assert!((f.expected - 45.0).abs() < 1e-9);
    assert!((f.measured - f.expected).abs() < 2.0);
    assert!(f.summary().contains("S1 L5 L4 L3 L2 L1 Th12"));
}

#[test]
fn clean_prediction_scores_perfectly() {
    let f = simulated_prediction(3, 40.0, 0.0, 0.0, 0.0, 0).unwrap_or_else(|_| panic!("prediction"));
    assert_eq!(f.measured, 1.0);
    let worse = simulated_prediction(3, 40.0, 3.0, 0.2, 0.0, 1).unwrap_or_else(|_| panic!("prediction"));
    assert!(worse.measured < 0.97);
}

#[test]
fn residue_view_finds_drawn_spurs() {
    let f = osteophyte_residue(5, 5, 1.0).unwrap_or_else(|_| panic!("residue"));
    assert_eq!(f.expected, 6.0);
    assert!(f.measured >= 6.0, "{}", f.summary());
    // the residue is painted white
    assert!(f.rgba().chunks(4).any(|p| p == [255, 255, 255, 255]));
}
