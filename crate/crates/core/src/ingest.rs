//! Loaders for CSV triplets, MovieLens `ratings.csv` and PGM images.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::PreferenceMatrix;

const MOVIELENS_HEADER: &str = "userId,movieId,rating,timestamp";

/// Default binarization threshold for ratings: every published rating counts.
pub const DEFAULT_MIN_RATING: f64 = 0.5;

/// Default gray-level threshold, as a fraction of the image's maxval.
pub const DEFAULT_PIXEL_THRESHOLD: f64 = 0.5;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_csv_triplets(
    path: impl AsRef<Path>,
    m_hint: Option<usize>,
    n_hint: Option<usize>,
) -> Result<PreferenceMatrix> {
    let path = path.as_ref();
    parse_csv_triplets(&read_text(path)?, m_hint, n_hint)
}

/// Parses `row,col[,value]` lines. `#` starts a comment. Hints act as hard
/// dimensions: an index at or beyond a hint is an error.
pub fn parse_csv_triplets(
    text: &str,
    m_hint: Option<usize>,
    n_hint: Option<usize>,
) -> Result<PreferenceMatrix> {
    let mut entries = Vec::new();
    let (mut max_row, mut max_col) = (None::<usize>, None::<usize>);
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split(',').map(str::trim).collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(Error::Parse {
                line,
                message: format!("expected row,col[,value], got {content:?}"),
            });
        }
        let parse_index = |s: &str, what: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("{what} {s:?} is not a non-negative integer"),
            })
        };
        let row = parse_index(fields[0], "row")?;
        let col = parse_index(fields[1], "col")?;
        if m_hint.is_some_and(|m| row >= m) || n_hint.is_some_and(|n| col >= n) {
            return Err(Error::Parse {
                line,
                message: format!(
                    "index ({row}, {col}) exceeds hinted shape {}x{}",
                    m_hint.map_or("?".into(), |m| m.to_string()),
                    n_hint.map_or("?".into(), |n| n.to_string()),
                ),
            });
        }
        max_row = max_row.max(Some(row));
        max_col = max_col.max(Some(col));
        if let Some(v) = fields.get(2) {
            match *v {
                // An explicit zero still fixes the shape.
                "0" => continue,
                "1" => {}
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("value {other:?} is not 0 or 1"),
                    })
                }
            }
        }
        entries.push((row, col));
    }
    let m = m_hint.unwrap_or_else(|| max_row.map_or(0, |r| r + 1));
    let n = n_hint.unwrap_or_else(|| max_col.map_or(0, |c| c + 1));
    PreferenceMatrix::from_entries(m, n, entries)
}

/// A MovieLens ratings file with the dense-index ↔ original-id tables.
#[derive(Clone, Debug)]
pub struct MovieLensData {
    pub matrix: PreferenceMatrix,
    /// `user_ids[i]` is the `userId` mapped to row `i`.
    pub user_ids: Vec<u64>,
    /// `movie_ids[j]` is the `movieId` mapped to column `j`.
    pub movie_ids: Vec<u64>,
}

pub fn load_movielens(path: impl AsRef<Path>, min_rating: f64) -> Result<MovieLensData> {
    let path = path.as_ref();
    parse_movielens(&read_text(path)?, min_rating)
}

/// Users and movies receive dense indices in order of first appearance;
/// an entry is set iff its rating is at least `min_rating`.
pub fn parse_movielens(text: &str, min_rating: f64) -> Result<MovieLensData> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim().trim_start_matches('\u{feff}') == MOVIELENS_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("unknown header {h:?}, expected {MOVIELENS_HEADER:?}"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    }

    let mut users: HashMap<u64, usize> = HashMap::new();
    let mut movies: HashMap<u64, usize> = HashMap::new();
    let (mut user_ids, mut movie_ids) = (Vec::new(), Vec::new());
    let mut entries = Vec::new();
    for (lineno, raw) in lines {
        let line = lineno + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("malformed rating row ({what}): {raw:?}"),
        };
        let mut fields = raw.split(',');
        let user: u64 = fields.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("userId"))?;
        let movie: u64 = fields.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("movieId"))?;
        let rating: f64 = fields
            .next()
            .and_then(|s| s.parse().ok())
            .filter(|r: &f64| r.is_finite())
            .ok_or_else(|| bad("rating"))?;
        fields.next().and_then(|s| s.parse::<u64>().ok()).ok_or_else(|| bad("timestamp"))?;
        if fields.next().is_some() {
            return Err(bad("extra fields"));
        }

        let next_user = users.len();
        let i = *users.entry(user).or_insert_with(|| {
            user_ids.push(user);
            next_user
        });
        let next_movie = movies.len();
        let j = *movies.entry(movie).or_insert_with(|| {
            movie_ids.push(movie);
            next_movie
        });
        if rating >= min_rating {
            entries.push((i, j));
        }
    }
    let matrix = PreferenceMatrix::from_entries(user_ids.len(), movie_ids.len(), entries)?;
    Ok(MovieLensData {
        matrix,
        user_ids,
        movie_ids,
    })
}

pub fn load_pgm_image(path: impl AsRef<Path>, threshold: f64) -> Result<PreferenceMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes, threshold)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start)
            .then(|| std::str::from_utf8(&self.bytes[start..self.pos]).ok())
            .flatten()
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.token()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Image(format!("bad or missing {what}")))
    }
}

/// Binarizes a P2 or P5 graymap: pixel `>= threshold * maxval` becomes 1.
pub fn parse_pgm(bytes: &[u8], threshold: f64) -> Result<PreferenceMatrix> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold {threshold} not in (0, 1)")));
    }
    let mut cur = HeaderCursor { bytes, pos: 0 };
    let magic = cur.token().map(str::to_owned);
    let binary = match magic.as_deref() {
        Some("P2") => false,
        Some("P5") => true,
        other => return Err(Error::Image(format!("unsupported magic {other:?}"))),
    };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 || !(1..=65535).contains(&maxval) {
        return Err(Error::Image(format!(
            "invalid header {width}x{height} maxval {maxval}"
        )));
    }
    let cutoff = threshold * maxval as f64;
    let total = width * height;
    let mut pixels = Vec::with_capacity(total);
    if binary {
        // Exactly one whitespace byte separates maxval from the raster.
        let start = cur.pos + 1;
        let depth = if maxval < 256 { 1 } else { 2 };
        let raster = bytes
            .get(start..start + total * depth)
            .ok_or_else(|| Error::Image(format!("short payload: need {} bytes", total * depth)))?;
        if depth == 1 {
            pixels.extend(raster.iter().map(|&b| b as usize));
        } else {
            pixels.extend(
                raster
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as usize),
            );
        }
    } else {
        for _ in 0..total {
            let v = cur
                .token()
                .ok_or_else(|| Error::Image(format!("short payload: {} of {total} pixels", pixels.len())))?
                .parse::<usize>()
                .map_err(|_| Error::Image(format!("non-numeric pixel {}", pixels.len())))?;
            pixels.push(v);
        }
    }
    if let Some(p) = pixels.iter().find(|&&p| p > maxval) {
        return Err(Error::Image(format!("pixel {p} exceeds maxval {maxval}")));
    }
    let entries = pixels
        .iter()
        .enumerate()
        .filter(|(_, &p)| p as f64 >= cutoff)
        .map(|(idx, _)| (idx / width, idx % width));
    PreferenceMatrix::from_entries(height, width, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_basic() {
        let t = parse_csv_triplets("0,0\n1,2", None, None).unwrap();
        assert_eq!((t.m(), t.n(), t.nnz()), (2, 3, 2));
    }

    #[test]
    fn triplets_empty_with_hints() {
        let t = parse_csv_triplets("", Some(3), Some(4)).unwrap();
        assert_eq!((t.m(), t.n(), t.nnz()), (3, 4, 0));
    }

    #[test]
    fn triplets_dedup_comments_and_zero_values() {
        let t = parse_csv_triplets("# header\n0,1\n0,1 # again\n\n1,1,0\n", None, None).unwrap();
        assert_eq!(t.nnz(), 1);
        assert_eq!(t.m(), 2);
    }

    #[test]
    fn triplets_errors_carry_line() {
        match parse_csv_triplets("0,0\n0,x\n", None, None) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_csv_triplets("0,0,2\n", None, None),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_csv_triplets("0,0\n5,0\n", Some(3), None),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn movielens_threshold_edge() {
        let text = "userId,movieId,rating,timestamp\n1,10,5.0,1\n2,20,0.0,2\n";
        let data = parse_movielens(text, DEFAULT_MIN_RATING).unwrap();
        assert_eq!(data.matrix.nnz(), 1);
        assert_eq!((data.matrix.m(), data.matrix.n()), (2, 2));
        assert_eq!(data.user_ids, vec![1, 2]);
        assert_eq!(data.movie_ids, vec![10, 20]);
    }

    #[test]
    fn movielens_first_appearance_order() {
        let text = "userId,movieId,rating,timestamp\n7,3,4,0\n5,3,4,0\n7,1,4,0\n";
        let data = parse_movielens(text, 0.5).unwrap();
        assert_eq!(data.user_ids, vec![7, 5]);
        assert_eq!(data.movie_ids, vec![3, 1]);
        assert_eq!(data.matrix.get(0, 1), 1);
    }

    #[test]
    fn movielens_errors() {
        assert!(matches!(
            parse_movielens("user,movie\n1,2\n", 0.5),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_movielens("userId,movieId,rating,timestamp\n1,2,3,4\n1,b,3,4\n", 0.5),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn pgm_ascii_identity() {
        let t = parse_pgm(b"P2\n# c\n2 2\n255\n255 0\n0 255\n", 0.5).unwrap();
        assert_eq!(t, PreferenceMatrix::identity(2));
    }

    #[test]
    fn pgm_binary_and_zero() {
        let mut img = b"P5 3 2 255\n".to_vec();
        img.extend_from_slice(&[0, 0, 0, 0, 0, 0]);
        assert_eq!(parse_pgm(&img, 0.5).unwrap().nnz(), 0);
        let mut img = b"P5 3 2 255\n".to_vec();
        img.extend_from_slice(&[200, 10, 128, 127, 0, 255]);
        let t = parse_pgm(&img, 0.5).unwrap();
        assert_eq!((t.m(), t.n()), (2, 3));
        assert_eq!(t.entries().collect::<Vec<_>>(), vec![(0, 0), (0, 2), (1, 2)]);
    }

    #[test]
    fn pgm_sixteen_bit() {
        let mut img = b"P5 2 1 1000\n".to_vec();
        img.extend_from_slice(&600u16.to_be_bytes());
        img.extend_from_slice(&100u16.to_be_bytes());
        let t = parse_pgm(&img, 0.5).unwrap();
        assert_eq!(t.entries().collect::<Vec<_>>(), vec![(0, 0)]);
    }

    #[test]
    fn pgm_corrupt() {
        assert!(parse_pgm(b"P5 4 4 255\n\x00\x01", 0.5).is_err());
        assert!(parse_pgm(b"P2 2 2 255\n1 2 3", 0.5).is_err());
        assert!(parse_pgm(b"P3 1 1 255\n0", 0.5).is_err());
        assert!(parse_pgm(b"P2 1 1 255\n0", 1.5).is_err());
    }
}
