//! Image-to-saliency-map prediction, including the uniform-resize control
//! mode, and the 8-bit map codec used for stored predictions.

use std::path::Path;

use crate::data::{read_image, read_pnm, InputMode, PnmImage};
use crate::error::{Error, Result};
use crate::layers::restore_size;
use crate::metrics::quantize;
use crate::network::{clamp_unit, FinalActivation, Network};
use crate::tensor::Tensor;

/// Saliency map with the image's own `(1, h, w)` dims. In uniform mode the
/// image is resized to `side x side` and the prediction resized back.
pub fn predict(net: &Network, image: &Tensor, mode: InputMode) -> Result<Tensor> {
    let (_, h, w) = image.dims3()?;
    match mode {
        InputMode::FullResolution => net.forward(image),
        InputMode::Uniform(side) => {
            let resized = restore_size(image, side, side)?;
            let map = restore_size(&net.forward(&resized)?, w, h)?;
            Ok(match net.config().final_activation {
                FinalActivation::LinearClamp => clamp_unit(&map),
                FinalActivation::Relu => map,
            })
        }
    }
}

pub fn predict_file(net: &Network, path: &Path, mode: InputMode) -> Result<Tensor> {
    let image = read_image(path)?;
    predict(net, &image, mode).map_err(|e| e.at_path(path))
}

/// 8-bit PGM with `round(255 * clamp(s, 0, 1))` per pixel.
pub fn saliency_to_pgm(map: &Tensor) -> Result<PnmImage> {
    let q = quantize(map)?;
    Ok(PnmImage::gray(q.width, q.height, q.values))
}

pub fn pgm_to_saliency(img: &PnmImage) -> Result<Tensor> {
    if img.channels != 1 {
        return Err(Error::UnsupportedFormat(
            "saliency maps must be single-channel PGM".into(),
        ));
    }
    Tensor::from_vec(
        &[1, img.height, img.width],
        img.data.iter().map(|&b| f64::from(b) / 255.0).collect(),
    )
}

pub fn read_saliency(path: &Path) -> Result<Tensor> {
    pgm_to_saliency(&read_pnm(path)?).map_err(|e| e.at_path(path))
}
