use std::path::Path;

use image::{GrayImage, ImageFormat, Luma};

use crate::error::{Error, Result};
use crate::model::AbundanceMap;

/// `round(255·clamp(v, 0, 1))`, halves rounded up.
pub fn quantize(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0) + 0.5).floor() as u8
}

pub fn abundance_image(map: &AbundanceMap, endmember: usize) -> Result<GrayImage> {
    if endmember >= map.count() {
        return Err(Error::Dimension(format!(
            "endmember index {endmember} out of range for {} endmembers",
            map.count()
        )));
    }
    let plane = map.plane(endmember);
    let (w, h) = (map.width(), map.height());
    Ok(GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([quantize(plane[y as usize * w + x as usize])])
    }))
}

/// 8-bit grayscale PNG of one abundance plane.
pub fn write_abundance_png(map: &AbundanceMap, endmember: usize, path: &Path) -> Result<()> {
    abundance_image(map, endmember)?
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Format(format!("{}: {other}", path.display())),
        })
}
