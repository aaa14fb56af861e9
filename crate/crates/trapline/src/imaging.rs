//! PNG/JPEG decode and lossless PNG encode around the core raster ops.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, ImageReader, RgbImage};
use trapline_core::annotate::{render_overlays, AnnotatedImage, OverlayStyle, RgbCanvas};
use trapline_core::domain::Detection;

#[derive(Debug, thiserror::Error)]
pub enum ImagingError {
    #[error("cannot read image {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot decode image: {0}")]
    Decode(#[from] image::ImageError),
    #[error("image has invalid dimensions")]
    BadDimensions,
}

pub fn decode_canvas(bytes: &[u8]) -> Result<RgbCanvas, ImagingError> {
    let decoded = image::load_from_memory(bytes)?.to_rgb8();
    let (width, height) = decoded.dimensions();
    RgbCanvas::from_raw(width, height, decoded.into_raw()).ok_or(ImagingError::BadDimensions)
}

pub fn encode_png(canvas: &RgbCanvas) -> Result<Vec<u8>, ImagingError> {
    let img = RgbImage::from_raw(canvas.width, canvas.height, canvas.pixels.clone())
        .ok_or(ImagingError::BadDimensions)?;
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)?;
    Ok(bytes)
}

pub fn read_image_bytes(path: &Path) -> Result<Vec<u8>, ImagingError> {
    std::fs::read(path).map_err(|source| ImagingError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Header-only probe for image dimensions.
pub fn probe_dimensions(path: &Path) -> Result<(u32, u32), ImagingError> {
    let reader = ImageReader::open(path)
        .map_err(|source| ImagingError::Io {
            path: path.display().to_string(),
            source,
        })?
        .with_guessed_format()
        .map_err(|source| ImagingError::Io {
            path: path.display().to_string(),
            source,
        })?;
    Ok(reader.into_dimensions()?)
}

/// Decode, draw overlays, and losslessly re-encode as PNG.
///
/// With no detections this is a pure re-encode: byte-identical to encoding
/// the decoded input, with no marks.
pub fn annotate_image(
    asset_id: &str,
    image_bytes: &[u8],
    detections: &[Detection],
    style: &OverlayStyle,
) -> Result<AnnotatedImage, ImagingError> {
    let mut canvas = decode_canvas(image_bytes)?;
    let rendered_labels = render_overlays(&mut canvas, detections, style);
    let png = encode_png(&canvas)?;
    Ok(AnnotatedImage {
        asset_id: asset_id.to_string(),
        width: canvas.width,
        height: canvas.height,
        png,
        rendered_labels,
    })
}
