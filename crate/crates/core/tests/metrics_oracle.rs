use proptest::prelude::*;
use spineseg::metrics::{compute_metrics, confusion_matrix, evaluate_pair, EvalMode, MaskInput};
use spineseg::{BinaryMask, Instance, InstanceSet, LabelMask};

/// Straight from the definitions, one pixel at a time.
fn oracle(gt: &[u8], pred: &[u8], n_cl: usize) -> (f64, f64, f64, f64) {
    let count = |f: &dyn Fn(usize) -> bool| (0..gt.len()).filter(|&p| f(p)).count() as f64;
    let correct = count(&|p| gt[p] == pred[p]);
    let mut accs = Vec::new();
    let mut ious = Vec::new();
    let mut fw = 0.0;
    for c in 0..n_cl as u8 {
        let t = count(&|p| gt[p] == c);
        if t == 0.0 {
            continue;
        }
        let hit = count(&|p| gt[p] == c && pred[p] == c);
        let union = count(&|p| gt[p] == c || pred[p] == c);
        accs.push(hit / t);
        ious.push(hit / union);
        fw += t * hit / union;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (correct / gt.len() as f64, mean(&accs), mean(&ious), fw / gt.len() as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn metrics_match_pixel_oracle(
        (w, h, n_cl, gt, pred) in (1usize..=32, 1usize..=32, 2usize..=5).prop_flat_map(|(w, h, n)| {
            let cells = w * h;
            (Just(w), Just(h), Just(n),
             prop::collection::vec(0..n as u8, cells),
             prop::collection::vec(0..n as u8, cells))
        })
    ) {
        let g = LabelMask::from_vec(w, h, gt.clone()).unwrap();
        let p = LabelMask::from_vec(w, h, pred.clone()).unwrap();
        let r = compute_metrics(&confusion_matrix(&g, &p, n_cl).unwrap()).unwrap();
        let (pa, ma, miou, fw) = oracle(&gt, &pred, n_cl);
        prop_assert!((r.pixel_accuracy - pa).abs() < 1e-12);
        prop_assert!((r.mean_accuracy - ma).abs() < 1e-12);
        prop_assert!((r.mean_iou - miou).abs() < 1e-12);
        prop_assert!((r.fw_iou - fw).abs() < 1e-12);
        for (c, v) in r.per_class_iou.iter().enumerate() {
            prop_assert_eq!(v.is_some(), gt.contains(&(c as u8)));
        }
    }

    #[test]
    fn binary_mode_uses_the_union_of_instances(
        a in prop::collection::vec(any::<bool>(), 64),
        b in prop::collection::vec(any::<bool>(), 64),
        p in prop::collection::vec(any::<bool>(), 64),
    ) {
        let mk = |v: &[bool]| BinaryMask::from_vec(8, 8, v.iter().map(|&x| u8::from(x)).collect()).unwrap();
        let mut gt = InstanceSet::new(8, 8);
        for (id, m) in [(1, mk(&a)), (2, mk(&b))] {
            if !m.is_empty() {
                gt.push(Instance::new(id, 1, None, m).unwrap()).unwrap();
            }
        }
        let pred = LabelMask::from_vec(8, 8, p.iter().map(|&x| u8::from(x) * 3).collect()).unwrap();
        let r = evaluate_pair(MaskInput::Instances(&gt), MaskInput::Semantic(&pred), EvalMode::Binary, 6).unwrap();
        let g: Vec<u8> = (0..64).map(|i| u8::from(a[i] || b[i])).collect();
        let q: Vec<u8> = p.iter().map(|&x| u8::from(x)).collect();
        let (pa, ma, miou, fw) = oracle(&g, &q, 2);
        prop_assert!((r.pixel_accuracy - pa).abs() < 1e-12);
        prop_assert!((r.mean_accuracy - ma).abs() < 1e-12);
        prop_assert!((r.mean_iou - miou).abs() < 1e-12);
        prop_assert!((r.fw_iou - fw).abs() < 1e-12);
    }
}

#[test]
fn flipped_pixels_cost_exactly_their_share() {
    let truth: Vec<u8> = (0..256).map(|i| u8::from((i / 16) % 3 == 0)).collect();
    let g = LabelMask::from_vec(16, 16, truth.clone()).unwrap();
    for k in [1usize, 5, 17, 100] {
        let mut p = truth.clone();
        for i in 0..k {
            let idx = (i * 37) % 256;
            p[idx] ^= 1;
        }
        let pm = LabelMask::from_vec(16, 16, p).unwrap();
        let r = evaluate_pair(MaskInput::Semantic(&g), MaskInput::Semantic(&pm), EvalMode::Binary, 2).unwrap();
        assert_eq!(r.pixel_accuracy, 1.0 - k as f64 / 256.0);
    }
}
