use std::path::Path;

use image::imageops::{self, FilterType};
use image::{DynamicImage, RgbImage};

use super::VideoError;

/// A frame ready to send to a captioning model.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedFrame {
    pub frame_index: u64,
    pub image: RgbImage,
    pub has_gaze: bool,
}

/// Stacks the raw frame above its gaze heatmap. The heatmap is resampled
/// bilinearly to the frame size first; with no heatmap the frame passes through.
pub fn compose_gaze_frame(
    frame_index: u64,
    frame: &RgbImage,
    heatmap: Option<&DynamicImage>,
) -> Result<ComposedFrame, VideoError> {
    let (w, h) = frame.dimensions();
    if w == 0 || h == 0 {
        return Err(VideoError::InvalidInput("frame has a zero dimension".into()));
    }
    let Some(heatmap) = heatmap else {
        return Ok(ComposedFrame {
            frame_index,
            image: frame.clone(),
            has_gaze: false,
        });
    };
    if heatmap.width() == 0 || heatmap.height() == 0 {
        return Err(VideoError::InvalidInput(
            "gaze heatmap has a zero dimension".into(),
        ));
    }
    let heat = heatmap.to_rgb8();
    let heat = if heat.dimensions() == (w, h) {
        heat
    } else {
        imageops::resize(&heat, w, h, FilterType::Triangle)
    };
    let mut out = RgbImage::new(w, 2 * h);
    imageops::replace(&mut out, frame, 0, 0);
    imageops::replace(&mut out, &heat, 0, h as i64);
    Ok(ComposedFrame {
        frame_index,
        image: out,
        has_gaze: true,
    })
}

/// Loads `<gaze_dir>/<video_id>/<frame_index>.png`; a missing file means no gaze.
pub fn load_gaze_heatmap(
    gaze_dir: &Path,
    video_id: &str,
    frame_index: u64,
) -> Result<Option<DynamicImage>, VideoError> {
    let path = gaze_dir.join(video_id).join(format!("{frame_index}.png"));
    if !path.is_file() {
        return Ok(None);
    }
    Ok(Some(image::open(&path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Luma, Rgb};

    fn frame(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, 7]))
    }

    #[test]
    fn heatmap_is_resized_and_stacked_below() {
        let f = frame(1280, 720);
        let heat = DynamicImage::ImageLuma8(GrayImage::from_pixel(160, 90, Luma([200])));
        let c = compose_gaze_frame(3, &f, Some(&heat)).unwrap();
        assert!(c.has_gaze);
        assert_eq!(c.image.dimensions(), (1280, 1440));
        assert_eq!(*c.image.get_pixel(10, 20), *f.get_pixel(10, 20));
        assert_eq!(*c.image.get_pixel(640, 1000), Rgb([200, 200, 200]));
    }

    #[test]
    fn no_heatmap_passes_frame_through() {
        let f = frame(64, 48);
        let c = compose_gaze_frame(0, &f, None).unwrap();
        assert!(!c.has_gaze);
        assert_eq!(c.image, f);
    }

    #[test]
    fn same_size_heatmap_is_copied_bit_for_bit() {
        let f = frame(128, 72);
        let heat_rgb = RgbImage::from_fn(128, 72, |x, y| Rgb([(x * 2) as u8, (y * 3) as u8, 99]));
        let heat = DynamicImage::ImageRgb8(heat_rgb.clone());
        let c = compose_gaze_frame(0, &f, Some(&heat)).unwrap();
        assert_eq!(c.image.dimensions(), (128, 144));
        let bottom = imageops::crop_imm(&c.image, 0, 72, 128, 72).to_image();
        assert_eq!(bottom, heat_rgb);
    }

    #[test]
    fn empty_heatmap_is_rejected() {
        let f = frame(8, 8);
        let heat = DynamicImage::ImageRgb8(RgbImage::new(0, 0));
        assert!(matches!(
            compose_gaze_frame(0, &f, Some(&heat)),
            Err(VideoError::InvalidInput(_))
        ));
    }

    #[test]
    fn missing_heatmap_file_is_none() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_gaze_heatmap(dir.path(), "v1", 9).unwrap().is_none());
        std::fs::create_dir_all(dir.path().join("v1")).unwrap();
        GrayImage::from_pixel(4, 4, Luma([9]))
            .save(dir.path().join("v1/9.png"))
            .unwrap();
        let h = load_gaze_heatmap(dir.path(), "v1", 9).unwrap().unwrap();
        assert_eq!((h.width(), h.height()), (4, 4));
    }
}
