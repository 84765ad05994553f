//! Box rasterization, COCO-style RLE and the overlap metrics.
//!
//! ```text
//! cargo run --example rle_masks
//! ```

use gsmner::corpus::{rle_decode, rle_encode, BBox, Bitmap, RleMask};
use gsmner::metrics::{box_iou, dice_coefficient, mask_iou};

fn show(m: &RleMask) {
    let bits = rle_decode(m);
    for y in 0..m.height() {
        let row: String = (0..m.width())
            .map(|x| if bits.get(x, y) { '#' } else { '.' })
            .collect();
        println!("  {row}");
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (w, h) = (12, 8);
    let a = BBox::new(1.0, 1.0, 7.0, 6.0)?;
    let b = BBox::new(4.0, 3.0, 11.0, 8.0)?;

    // a pixel is inside when its center falls in [x1, x2) x [y1, y2)
    let ma = RleMask::from_box(&a, w, h)?;
    let mb = RleMask::from_box(&b, w, h)?;
    println!("mask a, counts {:?}", ma.counts());
    show(&ma);
    println!("mask b, counts {:?}", mb.counts());
    show(&mb);

    println!("box IoU  {:.4}", box_iou(&a, &b));
    println!("mask IoU {:.4}", mask_iou(&ma, &mb)?);
    println!("Dice     {:.4}", dice_coefficient(&ma, &mb)?);

    let union = ma.union(&mb)?;
    println!("union area {} of {}", union.area(), w * h);

    // arbitrary bitmaps go through the same codec
    let mut bm = Bitmap::new(4, 3)?;
    bm.set(0, 0, true);
    bm.set(3, 2, true);
    let m = rle_encode(&bm);
    println!("two corner pixels -> {}", serde_json::to_string(&m)?);
    assert_eq!(rle_decode(&m), bm);
    Ok(())
}
