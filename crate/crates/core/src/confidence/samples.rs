use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lab::LabImage;
use crate::labelgen::{Label, LabelImage};
use crate::{Error, Result};

/// Half edge length of the square patch a sample describes.
pub const PATCH_RADIUS: i32 = 13;

/// A labeled patch center. The patch itself is read from the shared Lab image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchSample {
    pub image: u32,
    pub x: u16,
    pub y: u16,
    pub positive: bool,
    /// Triangulation angle, degrees.
    pub angle: f32,
}

impl PatchSample {
    fn key(&self) -> (u32, u16, u16, bool, u32) {
        (
            self.image,
            self.y,
            self.x,
            self.positive,
            self.angle.to_bits(),
        )
    }
}

/// Sorts samples into a canonical order so training does not depend on input order.
pub fn canonical_order(samples: &mut [PatchSample]) {
    samples.sort_by_key(|s| s.key());
}

/// Collects labeled patch centers whose full patch lies inside the image, keeping at
/// most `per_class_cap` random samples per class. `labels[i]` annotates `images[i]`.
pub fn extract_samples(
    images: &[LabImage],
    labels: &[LabelImage],
    per_class_cap: usize,
    seed: u64,
) -> Result<Vec<PatchSample>> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, (img, lab)) in images.iter().zip(labels).enumerate() {
        if (img.width, img.height) != (lab.width, lab.height) {
            return Err(Error::Config(format!(
                "label image {} is {}x{}, color image is {}x{}",
                lab.image, lab.width, lab.height, img.width, img.height
            )));
        }
        let r = PATCH_RADIUS as u32;
        for y in r..lab.height.saturating_sub(r) {
            for x in r..lab.width.saturating_sub(r) {
                let k = (y * lab.width + x) as usize;
                let sample = |positive| PatchSample {
                    image: i as u32,
                    x: x as u16,
                    y: y as u16,
                    positive,
                    angle: lab.angles[k],
                };
                match lab.labels[k] {
                    Label::Positive => pos.push(sample(true)),
                    Label::Negative => neg.push(sample(false)),
                    Label::Unlabeled => {}
                }
            }
        }
    }
    if pos.is_empty() {
        return Err(Error::NoSamples("positive"));
    }
    if neg.is_empty() {
        return Err(Error::NoSamples("negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    pos.truncate(per_class_cap);
    neg.truncate(per_class_cap);
    pos.extend(neg);
    canonical_order(&mut pos);
    Ok(pos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraId;

    fn fixture(pos: usize, neg: usize) -> (Vec<LabImage>, Vec<LabelImage>) {
        let (w, h) = (100u32, 60u32);
        let img = LabImage {
            width: w,
            height: h,
            pixels: vec![[50.0, 0.0, 0.0]; (w * h) as usize],
        };
        let mut lab = LabelImage::new(CameraId(0), w, h);
        let inner: Vec<usize> = (13..h - 13)
            .flat_map(|y| (13..w - 13).map(move |x| (y * w + x) as usize))
            .collect();
        for (n, &k) in inner.iter().enumerate().take(pos + neg) {
            lab.labels[k] = if n < pos {
                Label::Positive
            } else {
                Label::Negative
            };
            lab.angles[k] = 10.0;
        }
        // Border labels are never sampled.
        lab.labels[0] = Label::Positive;
        (vec![img], vec![lab])
    }

    #[test]
    fn cap_per_class_is_exact_and_seeded() {
        let (imgs, labs) = fixture(1000, 1000);
        let a = extract_samples(&imgs, &labs, 500, 3).unwrap();
        assert_eq!(a.iter().filter(|s| s.positive).count(), 500);
        assert_eq!(a.iter().filter(|s| !s.positive).count(), 500);
        assert_eq!(a, extract_samples(&imgs, &labs, 500, 3).unwrap());
        assert_ne!(a, extract_samples(&imgs, &labs, 500, 4).unwrap());
        assert!(a
            .iter()
            .all(|s| s.x >= 13 && s.y >= 13 && s.x < 87 && s.y < 47));
    }

    #[test]
    fn unlabeled_input_is_an_error() {
        let (imgs, mut labs) = fixture(0, 0);
        labs[0].labels[0] = Label::Unlabeled;
        assert!(matches!(
            extract_samples(&imgs, &labs, 10, 0),
            Err(Error::NoSamples("positive"))
        ));
        let (imgs, labs) = fixture(5, 0);
        assert!(matches!(
            extract_samples(&imgs, &labs, 10, 0),
            Err(Error::NoSamples("negative"))
        ));
    }
}
