use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::restore_size;
use crate::network::center_image;
use crate::tensor::Tensor;

use super::manifest::{Manifest, Record};
use super::pnm::{read_pnm, PnmImage};

/// Mask bytes at or above this value are salient.
pub const MASK_THRESHOLD: u8 = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    /// `(3, h, w)` in `[0, 1]`
    pub image: Tensor,
    /// `(1, h, w)` with values in `{0, 1}`
    pub mask: Tensor,
    pub flipped: bool,
    pub origin: usize,
}

impl SamplePair {
    pub fn new(image: Tensor, mask: Tensor, origin: usize) -> Result<Self> {
        let (c, h, w) = image.dims3()?;
        let (mc, mh, mw) = mask.dims3()?;
        if c != 3 || mc != 1 {
            return Err(Error::shape(format!(
                "expected a 3-channel image and 1-channel mask, got {c} and {mc}"
            )));
        }
        if (h, w) != (mh, mw) {
            return Err(Error::DimensionMismatch {
                image: (w, h),
                mask: (mw, mh),
            });
        }
        if let Some((index, &value)) = mask
            .data()
            .iter()
            .enumerate()
            .find(|(_, &v)| v != 0.0 && v != 1.0)
        {
            return Err(Error::NonBinaryTarget { index, value });
        }
        Ok(Self {
            image,
            mask,
            flipped: false,
            origin,
        })
    }

    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }

    /// Per-image, per-channel mean-subtracted view of the image.
    pub fn centered(&self) -> Tensor {
        center_image(&self.image).expect("validated image shape")
    }

    pub fn salient_count(&self) -> usize {
        self.mask.data().iter().filter(|&&v| v == 1.0).count()
    }
}

/// `(3, h, w)` tensor scaled by 1/255; grayscale is broadcast to 3 channels.
pub fn image_to_tensor(img: &PnmImage) -> Tensor {
    let plane = img.width * img.height;
    let mut data = vec![0.0; 3 * plane];
    for i in 0..plane {
        for c in 0..3 {
            let src = if img.channels == 1 { i } else { i * 3 + c };
            data[c * plane + i] = f64::from(img.data[src]) / 255.0;
        }
    }
    Tensor::from_vec(&[3, img.height, img.width], data).expect("image tensor shape")
}

/// `(1, h, w)` tensor with values in `{0, 1}`; bytes `>= 128` become 1.
pub fn mask_to_tensor(img: &PnmImage) -> Result<Tensor> {
    if img.channels != 1 {
        return Err(Error::UnsupportedFormat(
            "masks must be single-channel PGM".into(),
        ));
    }
    let data = img
        .data
        .iter()
        .map(|&b| if b >= MASK_THRESHOLD { 1.0 } else { 0.0 })
        .collect();
    Tensor::from_vec(&[1, img.height, img.width], data)
}

pub fn decode_pair(record: &Record, origin: usize) -> Result<SamplePair> {
    let image = read_pnm(&record.image)?;
    let mask = read_pnm(&record.mask)?;
    if (image.width, image.height) != (mask.width, mask.height) {
        return Err(Error::DimensionMismatch {
            image: (image.width, image.height),
            mask: (mask.width, mask.height),
        }
        .at_path(&record.image));
    }
    let mask = mask_to_tensor(&mask).map_err(|e| e.at_path(&record.mask))?;
    SamplePair::new(image_to_tensor(&image), mask, origin).map_err(|e| e.at_path(&record.image))
}

pub fn load_pairs(manifest: &Manifest) -> Result<Vec<SamplePair>> {
    manifest
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| decode_pair(r, i))
        .collect()
}

pub fn read_image(path: &Path) -> Result<Tensor> {
    Ok(image_to_tensor(&read_pnm(path)?))
}

pub fn hflip(pair: &SamplePair) -> SamplePair {
    SamplePair {
        image: pair.image.flip_horizontal().expect("validated image shape"),
        mask: pair.mask.flip_horizontal().expect("validated mask shape"),
        flipped: !pair.flipped,
        origin: pair.origin,
    }
}

/// Originals followed by their mirrored copies.
pub fn augment(set: &[SamplePair]) -> Vec<SamplePair> {
    let mut out = Vec::with_capacity(set.len() * 2);
    out.extend_from_slice(set);
    out.extend(set.iter().map(hflip));
    out
}

/// Seeded shuffle then split; the training side gets `round(len * ratio)` items.
pub fn split_train_val<T: Clone>(items: &[T], ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let n_train = (items.len() as f64 * ratio).round() as usize;
    if n_train == 0 || n_train == items.len() {
        return Err(Error::InvalidArgument(format!(
            "splitting {} items at ratio {ratio} leaves one side empty",
            items.len()
        )));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

pub fn split_manifest(manifest: &Manifest, ratio: f64, seed: u64) -> Result<(Manifest, Manifest)> {
    let (a, b) = split_train_val(&manifest.records, ratio, seed)?;
    let wrap = |records| Manifest {
        records,
        source: manifest.source.clone(),
    };
    Ok((wrap(a), wrap(b)))
}

/// Nearest-neighbour resize with half-pixel centres.
pub fn resize_nearest(map: &Tensor, target_w: usize, target_h: usize) -> Result<Tensor> {
    let (c, h, w) = map.dims3()?;
    if target_w == 0 || target_h == 0 {
        return Err(Error::shape("nearest resize to an empty map"));
    }
    let pick = |d: usize, src: usize, dst: usize| {
        (((d as f64 + 0.5) * src as f64 / dst as f64) as usize).min(src - 1)
    };
    let xs: Vec<usize> = (0..target_w).map(|x| pick(x, w, target_w)).collect();
    let mut out = Vec::with_capacity(c * target_h * target_w);
    for ch in 0..c {
        let plane = map.channel(ch);
        for y in 0..target_h {
            let row = &plane[pick(y, h, target_h) * w..][..w];
            out.extend(xs.iter().map(|&x| row[x]));
        }
    }
    Tensor::from_vec(&[c, target_h, target_w], out)
}

/// Square resize used by the uniform-input control: bicubic for the image,
/// nearest-neighbour for the mask.
pub fn resize_uniform(pair: &SamplePair, side: usize) -> Result<SamplePair> {
    if side < 8 {
        return Err(Error::InvalidArgument(format!(
            "uniform side must be at least 8, got {side}"
        )));
    }
    let image = restore_size(&pair.image, side, side)?;
    let mask = resize_nearest(&pair.mask, side, side)?.map(|v| if v >= 0.5 { 1.0 } else { 0.0 });
    Ok(SamplePair {
        image,
        mask,
        flipped: pair.flipped,
        origin: pair.origin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum InputMode {
    FullResolution,
    /// Square resize to `side x side` before the network.
    Uniform(usize),
}

impl InputMode {
    pub const CM_A: InputMode = InputMode::Uniform(224);

    pub fn prepare(&self, pair: &SamplePair) -> Result<SamplePair> {
        match *self {
            InputMode::FullResolution => Ok(pair.clone()),
            InputMode::Uniform(side) => resize_uniform(pair, side),
        }
    }
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputMode::FullResolution => f.write_str("full-resolution"),
            InputMode::Uniform(side) => write!(f, "uniform-{side}"),
        }
    }
}

impl FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "full-resolution" || s == "full" {
            return Ok(InputMode::FullResolution);
        }
        s.strip_prefix("uniform-")
            .and_then(|n| n.parse().ok())
            .filter(|&n| n >= 8)
            .map(InputMode::Uniform)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown input mode {s:?} (expected full-resolution or uniform-<side>)"
                ))
            })
    }
}

impl From<InputMode> for String {
    fn from(m: InputMode) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for InputMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}
