//! Bounding-box overlay rendering under a legibility policy.
//!
//! Labels drawn onto the image are read back downstream by a
//! vision-language model, so the style rules here exist to keep them
//! machine-readable: resolution-proportional stroke and font sizes with hard
//! floors, and a WCAG-style contrast requirement between label text and its
//! background plate.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use font8x8::legacy::BASIC_LEGACY;
use serde::{Deserialize, Serialize};

use crate::domain::Detection;
use crate::math;

/// Minimum text/plate contrast ratio accepted without a warning.
pub const MIN_CONTRAST_RATIO: f64 = 4.5;
/// Stroke width scales with image width at this rate, floored at 2 px.
pub const STROKE_WIDTH_FACTOR: f64 = 0.002;
pub const MIN_STROKE_WIDTH: u32 = 2;
/// Font height scales with image height at this rate, floored at 12 px.
pub const FONT_HEIGHT_FACTOR: f64 = 0.015;
pub const MIN_FONT_HEIGHT: u32 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub const BLACK: Rgb = Rgb(0, 0, 0);
    pub const WHITE: Rgb = Rgb(255, 255, 255);

    /// WCAG relative luminance.
    pub fn luminance(&self) -> f64 {
        fn channel(v: u8) -> f64 {
            let c = v as f64 / 255.0;
            if c <= 0.03928 {
                c / 12.92
            } else {
                math::powf((c + 0.055) / 1.055, 2.4)
            }
        }
        0.2126 * channel(self.0) + 0.7152 * channel(self.1) + 0.0722 * channel(self.2)
    }
}

/// WCAG-style contrast ratio between two colours, in `[1, 21]`.
pub fn contrast_ratio(a: Rgb, b: Rgb) -> f64 {
    let la = a.luminance();
    let lb = b.luminance();
    let (hi, lo) = if la >= lb { (la, lb) } else { (lb, la) };
    (hi + 0.05) / (lo + 0.05)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayStyle {
    pub box_color: Rgb,
    pub text_color: Rgb,
    pub label_background: Rgb,
    pub stroke_width: u32,
    pub font_height: u32,
}

fn stroke_for_width(width: u32) -> u32 {
    core::cmp::max(
        MIN_STROKE_WIDTH,
        math::round(STROKE_WIDTH_FACTOR * width as f64) as u32,
    )
}

fn font_for_height(height: u32) -> u32 {
    core::cmp::max(
        MIN_FONT_HEIGHT,
        math::round(FONT_HEIGHT_FACTOR * height as f64) as u32,
    )
}

/// Resolution-proportional default style: white text on a black plate, with
/// stroke and font floors engaged on small images.
pub fn default_style(width: u32, height: u32) -> OverlayStyle {
    debug_assert!(width > 0 && height > 0);
    OverlayStyle {
        box_color: Rgb(255, 0, 0),
        text_color: Rgb::WHITE,
        label_background: Rgb::BLACK,
        stroke_width: stroke_for_width(width),
        font_height: font_for_height(height),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LegibilityWarning {
    LowContrast { ratio: f64 },
    ThinStroke { stroke: u32, minimum: u32 },
    SmallFont { font: u32, minimum: u32 },
}

impl fmt::Display for LegibilityWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LegibilityWarning::LowContrast { ratio } => write!(
                f,
                "label text/background contrast {ratio:.2} is below {MIN_CONTRAST_RATIO}"
            ),
            LegibilityWarning::ThinStroke { stroke, minimum } => {
                write!(f, "stroke width {stroke} px is below the {minimum} px minimum")
            }
            LegibilityWarning::SmallFont { font, minimum } => {
                write!(f, "font height {font} px is below the {minimum} px minimum")
            }
        }
    }
}

/// Check a style against the legibility policy for an image of the given
/// size. An empty list means the style passes.
pub fn legibility_check(style: &OverlayStyle, width: u32, height: u32) -> Vec<LegibilityWarning> {
    let mut warnings = Vec::new();
    let ratio = contrast_ratio(style.text_color, style.label_background);
    if ratio < MIN_CONTRAST_RATIO {
        warnings.push(LegibilityWarning::LowContrast { ratio });
    }
    let min_stroke = stroke_for_width(width);
    if style.stroke_width < min_stroke {
        warnings.push(LegibilityWarning::ThinStroke {
            stroke: style.stroke_width,
            minimum: min_stroke,
        });
    }
    let min_font = font_for_height(height);
    if style.font_height < min_font {
        warnings.push(LegibilityWarning::SmallFont {
            font: style.font_height,
            minimum: min_font,
        });
    }
    warnings
}

/// Owned 8-bit RGB pixel buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbCanvas {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl RgbCanvas {
    pub fn new(width: u32, height: u32, fill: Rgb) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..(width as usize * height as usize) {
            pixels.push(fill.0);
            pixels.push(fill.1);
            pixels.push(fill.2);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn from_raw(width: u32, height: u32, pixels: Vec<u8>) -> Option<Self> {
        (pixels.len() == width as usize * height as usize * 3).then_some(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        Rgb(self.pixels[i], self.pixels[i + 1], self.pixels[i + 2])
    }

    fn put(&mut self, x: i64, y: i64, color: Rgb) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i] = color.0;
        self.pixels[i + 1] = color.1;
        self.pixels[i + 2] = color.2;
    }

    pub fn fill_rect(&mut self, x: i64, y: i64, w: i64, h: i64, color: Rgb) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.put(xx, yy, color);
            }
        }
    }
}

/// Integer plate rectangle `(x, y, width, height)` in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlateRect {
    pub x: i64,
    pub y: i64,
    pub width: i64,
    pub height: i64,
}

/// Record of one label drawn onto the canvas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderedLabel {
    /// Index into the detection slice passed to `render_overlays`.
    pub detection_index: usize,
    /// Exact text drawn: scientific name plus two-decimal confidence.
    pub text: String,
    pub plate: PlateRect,
}

/// An annotated image: losslessly re-encoded bytes plus the labels drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedImage {
    pub asset_id: String,
    pub width: u32,
    pub height: u32,
    /// PNG bytes (lossless), regardless of the source format.
    pub png: Vec<u8>,
    pub rendered_labels: Vec<RenderedLabel>,
}

pub fn label_text(det: &Detection) -> String {
    format!("{} {:.2}", det.class.scientific_name, det.confidence)
}

fn glyph_for(ch: char) -> [u8; 8] {
    let code = ch as usize;
    if code < 128 {
        BASIC_LEGACY[code]
    } else {
        BASIC_LEGACY[b'?' as usize]
    }
}

fn draw_text(canvas: &mut RgbCanvas, x: i64, y: i64, text: &str, scale: i64, color: Rgb) {
    let mut cursor = x;
    for ch in text.chars() {
        let glyph = glyph_for(ch);
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..8 {
                if bits & (1 << col) != 0 {
                    canvas.fill_rect(
                        cursor + col as i64 * scale,
                        y + row as i64 * scale,
                        scale,
                        scale,
                        color,
                    );
                }
            }
        }
        cursor += 8 * scale;
    }
}

fn draw_box_border(canvas: &mut RgbCanvas, bbox: &crate::domain::BoundingBox, stroke: i64, color: Rgb) {
    let x0 = libm::floor(bbox.x_min) as i64;
    let y0 = libm::floor(bbox.y_min) as i64;
    let x1 = libm::ceil(bbox.x_max) as i64;
    let y1 = libm::ceil(bbox.y_max) as i64;
    let w = x1 - x0;
    let h = y1 - y0;
    canvas.fill_rect(x0, y0, w, stroke, color);
    canvas.fill_rect(x0, y1 - stroke, w, stroke, color);
    canvas.fill_rect(x0, y0, stroke, h, color);
    canvas.fill_rect(x1 - stroke, y0, stroke, h, color);
}

fn clamp_i64(v: i64, lo: i64, hi: i64) -> i64 {
    if hi < lo {
        // Canvas smaller than the plate: anchor at the low edge.
        return lo;
    }
    v.max(lo).min(hi)
}

/// Draw every detection's box and label plate onto the canvas.
///
/// The label text is the scientific name plus the confidence to two
/// decimals. Plates are placed above the box and shifted fully inside the
/// canvas when the box touches a border. Rendering is deterministic.
pub fn render_overlays(
    canvas: &mut RgbCanvas,
    detections: &[Detection],
    style: &OverlayStyle,
) -> Vec<RenderedLabel> {
    let stroke = style.stroke_width as i64;
    let scale = core::cmp::max(1, style.font_height as i64 / 8);
    let pad = scale;

    let mut labels = Vec::with_capacity(detections.len());
    for (idx, det) in detections.iter().enumerate() {
        draw_box_border(canvas, &det.bbox, stroke, style.box_color);

        let text = label_text(det);
        let text_w = text.chars().count() as i64 * 8 * scale;
        let plate_w = text_w + 2 * pad;
        let plate_h = 8 * scale + 2 * pad;

        let x0 = libm::floor(det.bbox.x_min) as i64;
        let y0 = libm::floor(det.bbox.y_min) as i64;
        let px = clamp_i64(x0, 0, canvas.width as i64 - plate_w);
        let mut py = y0 - plate_h;
        if py < 0 {
            py = clamp_i64(y0, 0, canvas.height as i64 - plate_h);
        }

        canvas.fill_rect(px, py, plate_w, plate_h, style.label_background);
        draw_text(canvas, px + pad, py + pad, &text, scale, style.text_color);

        labels.push(RenderedLabel {
            detection_index: idx,
            text,
            plate: PlateRect {
                x: px,
                y: py,
                width: plate_w,
                height: plate_h,
            },
        });
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BoundingBox, ClassKind, Detection, TaxonomyClass};
    use alloc::vec;

    fn zebra_det(conf: f64, bbox: [f64; 4]) -> Detection {
        Detection::new(
            TaxonomyClass {
                scientific_name: "Equus quagga".into(),
                common_name: "Plains zebra".into(),
                kind: ClassKind::Animal,
            },
            conf,
            BoundingBox::from(bbox),
        )
    }

    #[test]
    fn default_style_formulas() {
        let style = default_style(4000, 3000);
        assert_eq!(style.stroke_width, 8);
        assert_eq!(style.font_height, 45);

        let style = default_style(640, 480);
        assert_eq!(style.stroke_width, 2);
        assert_eq!(style.font_height, 12);

        let style = default_style(1, 1);
        assert_eq!(style.stroke_width, 2);
        assert_eq!(style.font_height, 12);
    }

    #[test]
    fn default_style_always_passes_legibility() {
        for (w, h) in [(1, 1), (640, 480), (1920, 1080), (4000, 3000), (8000, 6000)] {
            let style = default_style(w, h);
            assert!(legibility_check(&style, w, h).is_empty(), "{w}x{h}");
        }
    }

    #[test]
    fn white_on_pink_fails_contrast() {
        let pink = Rgb(255, 192, 203);
        let ratio = contrast_ratio(Rgb::WHITE, pink);
        assert!(ratio < MIN_CONTRAST_RATIO, "ratio was {ratio}");

        let style = OverlayStyle {
            box_color: pink,
            text_color: Rgb::WHITE,
            label_background: pink,
            stroke_width: 8,
            font_height: 45,
        };
        let warnings = legibility_check(&style, 4000, 3000);
        assert!(warnings
            .iter()
            .any(|w| matches!(w, LegibilityWarning::LowContrast { .. })));
    }

    #[test]
    fn thin_stroke_on_large_image_warns() {
        let mut style = default_style(4000, 3000);
        style.stroke_width = 1;
        let warnings = legibility_check(&style, 4000, 3000);
        assert!(warnings
            .iter()
            .any(|w| matches!(w, LegibilityWarning::ThinStroke { minimum: 8, .. })));
    }

    #[test]
    fn contrast_ratio_extremes() {
        assert!((contrast_ratio(Rgb::WHITE, Rgb::BLACK) - 21.0).abs() < 1e-9);
        assert!((contrast_ratio(Rgb::WHITE, Rgb::WHITE) - 1.0).abs() < 1e-9);
        assert_eq!(
            contrast_ratio(Rgb::WHITE, Rgb::BLACK),
            contrast_ratio(Rgb::BLACK, Rgb::WHITE)
        );
    }

    #[test]
    fn render_draws_box_and_label() {
        let mut canvas = RgbCanvas::new(200, 150, Rgb(90, 90, 90));
        let det = zebra_det(0.91, [40.0, 60.0, 120.0, 130.0]);
        let style = default_style(200, 150);
        let labels = render_overlays(&mut canvas, &[det], &style);

        assert_eq!(labels.len(), 1);
        assert_eq!(labels[0].text, "Equus quagga 0.91");
        // Stroke pixel on the top border.
        assert_eq!(canvas.get(40, 60), style.box_color);
        // Plate sits above the box.
        let plate = labels[0].plate;
        assert!(plate.y + plate.height <= 60);
        assert_eq!(canvas.get(plate.x as u32, plate.y as u32), style.label_background);
    }

    #[test]
    fn render_without_detections_changes_nothing() {
        let mut canvas = RgbCanvas::new(64, 48, Rgb(10, 20, 30));
        let before = canvas.clone();
        let labels = render_overlays(&mut canvas, &[], &default_style(64, 48));
        assert!(labels.is_empty());
        assert_eq!(canvas, before);
    }

    #[test]
    fn label_at_corner_is_shifted_inside() {
        let mut canvas = RgbCanvas::new(400, 300, Rgb(0, 128, 0));
        let det = zebra_det(0.5, [0.0, 0.0, 30.0, 30.0]);
        let labels = render_overlays(&mut canvas, &[det], &default_style(400, 300));
        let plate = labels[0].plate;
        assert!(plate.x >= 0);
        assert!(plate.y >= 0);
        assert!(plate.x + plate.width <= 400);
        assert!(plate.y + plate.height <= 300);
    }

    #[test]
    fn rendering_is_deterministic() {
        let det = zebra_det(0.91, [10.0, 40.0, 100.0, 90.0]);
        let style = default_style(160, 120);
        let mut a = RgbCanvas::new(160, 120, Rgb(50, 60, 70));
        let mut b = RgbCanvas::new(160, 120, Rgb(50, 60, 70));
        render_overlays(&mut a, core::slice::from_ref(&det), &style);
        render_overlays(&mut b, core::slice::from_ref(&det), &style);
        assert_eq!(a, b);
    }

    #[test]
    fn pixels_outside_strokes_and_plates_are_untouched() {
        let background = Rgb(7, 77, 177);
        let mut canvas = RgbCanvas::new(300, 200, background);
        let det = zebra_det(0.77, [100.0, 100.0, 180.0, 160.0]);
        let style = default_style(300, 200);
        let labels = render_overlays(&mut canvas, core::slice::from_ref(&det), &style);
        let plate = labels[0].plate;
        let stroke = style.stroke_width as i64;

        let inside_plate = |x: i64, y: i64| {
            x >= plate.x && x < plate.x + plate.width && y >= plate.y && y < plate.y + plate.height
        };
        let inside_border = |x: i64, y: i64| {
            let (x0, y0, x1, y1) = (100i64, 100i64, 180i64, 160i64);
            let in_box = x >= x0 && x < x1 && y >= y0 && y < y1;
            let in_core =
                x >= x0 + stroke && x < x1 - stroke && y >= y0 + stroke && y < y1 - stroke;
            in_box && !in_core
        };

        for y in 0..200i64 {
            for x in 0..300i64 {
                if !inside_plate(x, y) && !inside_border(x, y) {
                    assert_eq!(canvas.get(x as u32, y as u32), background, "pixel {x},{y}");
                }
            }
        }
    }

    #[test]
    fn vec_of_labels_matches_detections() {
        let mut canvas = RgbCanvas::new(100, 100, Rgb(0, 0, 0));
        let dets = vec![
            zebra_det(0.9, [10.0, 30.0, 40.0, 60.0]),
            zebra_det(0.8, [50.0, 50.0, 90.0, 90.0]),
        ];
        let labels = render_overlays(&mut canvas, &dets, &default_style(100, 100));
        assert_eq!(labels.len(), 2);
        assert_eq!(labels[0].detection_index, 0);
        assert_eq!(labels[1].detection_index, 1);
    }
}
