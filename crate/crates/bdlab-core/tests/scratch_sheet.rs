use bdlab_core::synth::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn contact_sheets() {
    let cell = 34;
    let mut sheet = ndarray::Array3::<u8>::zeros((6 * cell, 10 * cell, 3));
    for class in 0..10 {
        for s in 0..6 {
            let mut rng = ChaCha8Rng::seed_from_u64((class * 100 + s) as u64);
            let img = synth_shape_image(class, &mut rng).unwrap();
            for r in 0..32 { for c in 0..32 { for ch in 0..3 {
                sheet[(s * cell + r, class * cell + c, ch)] = img.pixels()[(r, c, ch)];
            }}}
        }
    }
    bdlab_core::image::Image::new(sheet).unwrap().save_png("/tmp/shapes_sheet.png").unwrap();

    let cell = 50;
    let mut sheet = ndarray::Array3::<u8>::zeros((6 * cell, 8 * cell, 3));
    for id in 0..8 {
        for s in 0..6 {
            let mut rng = ChaCha8Rng::seed_from_u64((id * 100 + s + 7777) as u64);
            let img = synth_face_image(id, &mut rng).unwrap();
            for r in 0..48 { for c in 0..48 { for ch in 0..3 {
                sheet[(s * cell + r, id * cell + c, ch)] = img.pixels()[(r, c, ch)];
            }}}
        }
    }
    bdlab_core::image::Image::new(sheet).unwrap().save_png("/tmp/faces_sheet.png").unwrap();
}
