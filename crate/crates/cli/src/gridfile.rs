//! Image files: the decimal text grid and 8-bit PGM.
//!
//! Text grid: the first line holds `side`, followed by `side` lines of
//! `side` space-separated decimals. PGM (P2 or P5, maxval ≤ 255) maps
//! `0..=maxval` linearly onto `[0, 1]`.

use std::fmt::Write as _;
use std::path::Path;

use bandlet::Image;

use crate::CliError;

pub fn read_image(path: &Path) -> Result<Image, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    parse_image(&bytes).map_err(|msg| CliError::Io(format!("{}: {msg}", path.display())))
}

pub fn parse_image(bytes: &[u8]) -> Result<Image, String> {
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        parse_pgm(bytes)
    } else {
        parse_grid(std::str::from_utf8(bytes).map_err(|_| "grid file is not UTF-8".to_string())?)
    }
}

pub fn parse_grid(text: &str) -> Result<Image, String> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let side: usize = lines
        .next()
        .ok_or("empty grid file")?
        .parse()
        .map_err(|_| "first line must be the side length")?;
    if !side.is_power_of_two() || side < 2 {
        return Err(format!("side {side} is not a power of two >= 2"));
    }
    let mut values = Vec::with_capacity(side * side);
    for (r, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| format!("bad number {t:?} on row {r}"))
            })
            .collect::<Result<_, _>>()?;
        if row.len() != side {
            return Err(format!("row {r} has {} values, expected {side}", row.len()));
        }
        values.extend(row);
    }
    if values.len() != side * side {
        return Err(format!(
            "expected {side} rows, found {}",
            values.len() / side
        ));
    }
    Image::from_vec(side, values).map_err(|e| e.to_string())
}

pub fn format_grid(img: &Image) -> String {
    let mut s = format!("{}\n", img.side());
    for row in img.pixels().rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

/// Header tokens of a PGM file, skipping `#` comments, and the offset just
/// past the single whitespace byte that ends the header.
fn pgm_header(bytes: &[u8]) -> Result<(Vec<String>, usize), String> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err("truncated PGM header".into());
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    Ok((tokens, i + 1))
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Image, String> {
    let (tokens, body) = pgm_header(bytes)?;
    let num = |t: &str| {
        t.parse::<usize>()
            .map_err(|_| format!("bad PGM header field {t:?}"))
    };
    let (w, h, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if w != h {
        return Err(format!("PGM image is {w}x{h}, expected a square"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("PGM maxval {maxval} outside 1..=255"));
    }
    let raw: Vec<u8> = if tokens[0] == "P5" {
        let data = bytes.get(body..body + w * h).ok_or("truncated PGM data")?;
        data.to_vec()
    } else {
        let text = std::str::from_utf8(bytes.get(body.min(bytes.len())..).unwrap_or(&[]))
            .map_err(|_| "P2 body is not ASCII")?;
        text.split_whitespace()
            .take(w * h)
            .map(|t| t.parse::<u8>().map_err(|_| format!("bad PGM sample {t:?}")))
            .collect::<Result<_, _>>()?
    };
    if raw.len() != w * h {
        return Err("truncated PGM data".into());
    }
    if raw.iter().any(|&v| v as usize > maxval) {
        return Err("PGM sample exceeds maxval".into());
    }
    Image::from_vec(w, raw.iter().map(|&v| v as f64 / maxval as f64).collect())
        .map_err(|e| e.to_string())
}

/// Binary P5 with values clamped to `[0, 1]`.
pub fn format_pgm(img: &Image) -> Vec<u8> {
    let n = img.side();
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    out.extend(
        img.pixels()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

/// Writes PGM for a `.pgm` extension, the text grid otherwise.
pub fn write_image(path: &Path, img: &Image) -> Result<(), CliError> {
    let is_pgm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let bytes = if is_pgm {
        format_pgm(img)
    } else {
        format_grid(img).into_bytes()
    };
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_round_trip_is_lossless() {
        let img =
            Image::from_fn(4, |r, c| (r as f64 - 1.3) * 0.123456789 + c as f64 * 1e-7).unwrap();
        assert_eq!(parse_grid(&format_grid(&img)).unwrap(), img);
        let ten = Image::from_fn(2, |r, c| {
            [0.1234567891, -2.5, 1e-10, 9876543210.0][2 * r + c]
        })
        .unwrap();
        assert_eq!(parse_grid(&format_grid(&ten)).unwrap(), ten);
    }

    #[test]
    fn grid_errors() {
        assert!(parse_grid("").is_err());
        assert!(parse_grid("3\n1 2 3\n1 2 3\n1 2 3\n").is_err());
        assert!(parse_grid("2\n1 2\n3\n").is_err());
        assert!(parse_grid("2\n1 2\n").is_err());
        assert!(parse_grid("2\n1 x\n3 4\n").is_err());
        assert!(parse_grid("2\n1 2\n3 nan\n").is_err());
    }

    #[test]
    fn pgm_formats() {
        let p2 = b"P2\n# comment\n2 2\n255\n0 255\n51 102\n";
        let img = parse_image(p2).unwrap();
        assert_eq!(img.get(0, 1), 1.0);
        assert!((img.get(1, 0) - 0.2).abs() < 1e-15);
        let p5 = format_pgm(&img);
        assert_eq!(parse_image(&p5).unwrap(), img);
        assert!(parse_pgm(b"P5\n2 4\n255\n").is_err());
        assert!(parse_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(parse_pgm(b"P2\n2 2\n10\n0 1 2 11\n").is_err());
    }
}
