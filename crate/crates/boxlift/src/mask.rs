//! Binary instance masks: packed bitset storage, morphological erosion and
//! run-length coding.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MaskError {
    #[error("RLE runs sum to {got}, expected {expected} (width*height)")]
    RleSum { got: usize, expected: usize },
}

/// Row-major binary mask over a `width`×`height` pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        let cells = width as usize * height as usize;
        Self { width, height, words: vec![0; cells.div_ceil(64)] }
    }

    pub fn filled(width: u32, height: u32) -> Self {
        let mut m = Self::new(width, height);
        let cells = width as usize * height as usize;
        for w in &mut m.words {
            *w = u64::MAX;
        }
        // Clear the tail past width*height so counts stay exact.
        let tail = cells % 64;
        if tail != 0 {
            if let Some(last) = m.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    fn bit(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        debug_assert!(x < self.width && y < self.height);
        let i = self.bit(x, y);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.bit(x, y);
        if value {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    /// Set `len` consecutive cells (row-major order) starting at flat index
    /// `start`. Used by the RLE decoder; whole words are filled at once.
    fn set_run(&mut self, start: usize, len: usize) {
        let mut i = start;
        let end = start + len;
        while i < end {
            let word = i / 64;
            let off = i % 64;
            let take = (64 - off).min(end - i);
            let mask = if take == 64 { u64::MAX } else { ((1u64 << take) - 1) << off };
            self.words[word] |= mask;
            i += take;
        }
    }

    pub fn count_true(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Visit every set cell in row-major order.
    pub fn for_each_set(&self, mut visit: impl FnMut(u32, u32)) {
        let cells = self.width as usize * self.height as usize;
        for (wi, &word) in self.words.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let offset = bits.trailing_zeros() as usize;
                let i = wi * 64 + offset;
                if i >= cells {
                    break;
                }
                visit((i % self.width as usize) as u32, (i / self.width as usize) as u32);
                bits &= bits - 1;
            }
        }
    }

    pub fn is_all_false(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// True when every set cell of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        debug_assert_eq!((self.width, self.height), (other.width, other.height));
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Decode alternating false/true run lengths (row-major, starting with
    /// false) into a mask. The runs must sum to `width*height`.
    pub fn from_rle(width: u32, height: u32, runs: &[usize]) -> Result<Self, MaskError> {
        let cells = width as usize * height as usize;
        let sum: usize = runs.iter().sum();
        if sum != cells {
            return Err(MaskError::RleSum { got: sum, expected: cells });
        }
        let mut mask = Self::new(width, height);
        let mut pos = 0usize;
        for (i, &run) in runs.iter().enumerate() {
            if i % 2 == 1 {
                mask.set_run(pos, run);
            }
            pos += run;
        }
        Ok(mask)
    }

    /// Encode as alternating false/true run lengths, starting with false.
    /// Zero-length leading runs are emitted only for masks starting true.
    pub fn to_rle(&self) -> Vec<usize> {
        let cells = self.width as usize * self.height as usize;
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0usize;
        for i in 0..cells {
            let v = self.words[i / 64] >> (i % 64) & 1 == 1;
            if v == current {
                len += 1;
            } else {
                runs.push(len);
                current = v;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }
}

/// Binary erosion with a square structuring element of side `2*radius + 1`.
///
/// Pixels outside the image count as false, so the border erodes. Zero
/// radius or zero iterations return the mask unchanged. The square element
/// separates into a horizontal and a vertical min pass.
pub fn erode(mask: &BinaryMask, radius: u32, iterations: u32) -> BinaryMask {
    if radius == 0 || iterations == 0 {
        return mask.clone();
    }
    let mut out = mask.clone();
    for _ in 0..iterations {
        out = erode_once(&out, radius);
    }
    out
}

fn erode_once(mask: &BinaryMask, radius: u32) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let r = radius as i64;
    // Horizontal pass: keep a pixel iff all pixels within ±r in its row are set.
    let mut horiz = BinaryMask::new(w, h);
    for y in 0..h {
        let mut run = 0i64; // consecutive set pixels ending at x
        for x in 0..w as i64 {
            if mask.get(x as u32, y) {
                run += 1;
            } else {
                run = 0;
            }
            // Window [x-2r, x] fully set and window fits inside the row.
            let center = x - r;
            if run > 2 * r && center - r >= 0 {
                horiz.set(center as u32, y, true);
            }
        }
    }
    // Vertical pass over the horizontal result.
    let mut out = BinaryMask::new(w, h);
    for x in 0..w {
        let mut run = 0i64;
        for y in 0..h as i64 {
            if horiz.get(x, y as u32) {
                run += 1;
            } else {
                run = 0;
            }
            let center = y - r;
            if run > 2 * r && center - r >= 0 {
                out.set(x, center as u32, true);
            }
        }
    }
    out
}
