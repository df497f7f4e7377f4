//! HSV rendering of per-event flow: hue is direction, brightness is
//! magnitude relative to the largest valid prediction. Invalid events are
//! gray, pixels without events black.

use std::io::Write;
use std::path::Path;

use evflow::event_model::Event;
use evflow::uq::NormalFlowPrediction;

pub const GRAY: [u8; 3] = [128, 128, 128];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Extent {
    /// Bounding box of the events, widened where it is degenerate.
    pub fn of(events: &[Event]) -> Self {
        let mut e = Extent {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for ev in events {
            e.x_min = e.x_min.min(ev.x);
            e.x_max = e.x_max.max(ev.x);
            e.y_min = e.y_min.min(ev.y);
            e.y_max = e.y_max.max(ev.y);
        }
        if !(e.x_max > e.x_min) {
            e.x_min -= 0.5;
            e.x_max += 0.5;
        }
        if !(e.y_max > e.y_min) {
            e.y_min -= 0.5;
            e.y_max += 0.5;
        }
        e
    }

    pub fn is_valid(&self) -> bool {
        [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.y_max > self.y_min
    }
}

/// `h` in degrees, `s` and `v` in `[0, 1]`.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |u: f64| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

/// RGB raster, row-major from the top-left. Later events overwrite earlier
/// ones at the same pixel.
pub fn render(
    events: &[Event],
    preds: &[NormalFlowPrediction],
    extent: &Extent,
    width: u32,
    height: u32,
) -> Vec<[u8; 3]> {
    let mut img = vec![[0u8; 3]; width as usize * height as usize];
    let max_mag = preds
        .iter()
        .filter(|p| p.valid)
        .map(|p| p.flow.norm())
        .fold(0.0, f64::max);
    let sx = width as f64 / (extent.x_max - extent.x_min);
    let sy = height as f64 / (extent.y_max - extent.y_min);
    for (e, p) in events.iter().zip(preds) {
        let col = ((e.x - extent.x_min) * sx).floor();
        let row = ((e.y - extent.y_min) * sy).floor();
        // The far edge of the extent belongs to the last pixel.
        let col = if col == width as f64 { col - 1.0 } else { col };
        let row = if row == height as f64 { row - 1.0 } else { row };
        if !(col >= 0.0 && col < width as f64 && row >= 0.0 && row < height as f64) {
            continue;
        }
        let color = if !p.valid {
            GRAY
        } else if max_mag > 0.0 {
            let hue = p.flow.y.atan2(p.flow.x).to_degrees();
            hsv_to_rgb(hue, 1.0, p.flow.norm() / max_mag)
        } else {
            [0, 0, 0]
        };
        img[row as usize * width as usize + col as usize] = color;
    }
    img
}

pub fn write_ppm(path: &Path, img: &[[u8; 3]], width: u32, height: u32) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(w, "P6\n{width} {height}\n255\n")?;
    for px in img {
        w.write_all(px)?;
    }
    w.flush()
}
