//! Binary PGM (P5) export.

use hetgp_core::terrain::DemGrid;

/// Linear min-max scaling of the valid cells to 0..=255. Nodata cells are 0;
/// a grid whose valid cells are all equal renders as uniform 128.
pub fn gray_levels(g: &DemGrid) -> Vec<u8> {
    let (lo, hi) = g
        .valid_values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    g.values
        .iter()
        .map(|&v| {
            if g.is_nodata(v) {
                0
            } else if hi > lo {
                ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                128
            }
        })
        .collect()
}

pub fn encode(g: &DemGrid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", g.ncols, g.nrows).into_bytes();
    out.extend(gray_levels(g));
    out
}

/// Width, height, and pixels of a P5 image written by [`encode`].
pub fn decode(bytes: &[u8]) -> Option<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?.to_string());
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return None;
    }
    let (w, h) = (fields[1].parse().ok()?, fields[2].parse().ok()?);
    let px = bytes.get(pos + 1..)?.to_vec();
    (px.len() == w * h).then_some((w, h, px))
}
