mod common;

use common::{noisy_predictions, random_corpus};
use gsmner::corpus::{
    read_samples, rle_decode, rle_encode, write_samples, BBox, Bitmap, DatasetSplit, LoadOptions,
    RleMask, SplitName,
};
use gsmner::metrics::{box_iou, mask_iou};
use gsmner::scoring::{read_predictions, score_all, write_predictions, IouRule, Task};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bitmap() -> impl Strategy<Value = (u32, u32, Vec<bool>)> {
    (1u32..=32, 1u32..=32).prop_flat_map(|(w, h)| {
        (
            Just(w),
            Just(h),
            prop::collection::vec(any::<bool>(), (w * h) as usize),
        )
    })
}

fn int_box() -> impl Strategy<Value = BBox> {
    (0u32..30, 0u32..30, 1u32..=10, 1u32..=10).prop_map(|(x, y, w, h)| {
        BBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64).unwrap()
    })
}

proptest! {
    #[test]
    fn rle_encode_decode_identity((w, h, px) in bitmap()) {
        let m = rle_encode(&Bitmap::from_column_major(w, h, px.clone()).unwrap());
        prop_assert_eq!(m.counts().iter().sum::<u64>(), u64::from(w * h));
        // every run after the leading zero run is non-empty
        prop_assert!(m.counts().iter().skip(1).all(|&c| c > 0));
        let back = rle_decode(&m);
        for x in 0..w {
            for y in 0..h {
                prop_assert_eq!(back.get(x, y), px[(x * h + y) as usize]);
            }
        }
    }

    #[test]
    fn box_iou_is_symmetric_and_bounded(a in int_box(), b in int_box()) {
        let (ab, ba) = (box_iou(&a, &b), box_iou(&b, &a));
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(box_iou(&a, &a), 1.0);
    }

    #[test]
    fn box_fill_masks_agree_with_boxes(a in int_box(), b in int_box()) {
        let (ma, mb) = (RleMask::from_box(&a, 40, 40).unwrap(), RleMask::from_box(&b, 40, 40).unwrap());
        prop_assert_eq!(ma.area() as f64, a.area());
        prop_assert_eq!(mask_iou(&ma, &mb).unwrap(), box_iou(&a, &b));
    }

    #[test]
    fn gold_write_then_load_is_identity(seed in any::<u64>(), n in 1usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let split = random_corpus(&mut rng, n, 12, 9);
        let mut buf = Vec::new();
        write_samples(&mut buf, split.samples()).unwrap();
        let again = read_samples(buf.as_slice(), LoadOptions { strict: true }).unwrap();
        prop_assert_eq!(again.as_slice(), split.samples());
        let mut buf2 = Vec::new();
        write_samples(&mut buf2, &again).unwrap();
        prop_assert_eq!(buf, buf2);
        prop_assert!(DatasetSplit::new(SplitName::Dev, again).is_ok());
    }

    #[test]
    fn predictions_round_trip_and_scores_are_bounded(seed in any::<u64>(), n in 1usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let split = random_corpus(&mut rng, n, 12, 9);
        let preds = noisy_predictions(&mut rng, &split);
        let mut buf = Vec::new();
        write_predictions(&mut buf, &preds).unwrap();
        let again = read_predictions(buf.as_slice()).unwrap();
        prop_assert_eq!(&again, &preds);

        for rule in [IouRule::Gte, IouRule::Gt] {
            let reports = score_all(&split, &again, 0.5, rule).unwrap();
            prop_assert_eq!(reports.len(), Task::ALL.len());
            for r in reports {
                prop_assert!(r.n_correct <= r.n_pred.min(r.n_gold));
                prop_assert!((0.0..=1.0).contains(&r.precision));
                prop_assert!((0.0..=1.0).contains(&r.recall));
                prop_assert!((0.0..=1.0).contains(&r.f1));
            }
        }
    }
}
