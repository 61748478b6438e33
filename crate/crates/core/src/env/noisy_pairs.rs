//! Deterministic-versus-stochastic image transition task.
//!
//! The source image is a rendered 0 or 1 with equal probability. A 0 maps to
//! the very same image; a 1 maps to a freshly rendered digit drawn uniformly
//! from 2 to 9.

use rand::Rng;

use super::idx::IdxImages;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

const GLYPH_SIDE: usize = 8;

#[rustfmt::skip]
const GLYPHS: [[&str; GLYPH_SIDE]; 10] = [
    ["..####..", ".##..##.", ".##..##.", ".##..##.", ".##..##.", ".##..##.", ".##..##.", "..####.."],
    ["...##...", "..###...", ".####...", "...##...", "...##...", "...##...", "...##...", ".######."],
    ["..####..", ".##..##.", ".....##.", "....##..", "...##...", "..##....", ".##.....", ".######."],
    ["..####..", ".##..##.", ".....##.", "...###..", ".....##.", ".....##.", ".##..##.", "..####.."],
    ["....##..", "...###..", "..####..", ".##.##..", "##..##..", "#######.", "....##..", "....##.."],
    [".######.", ".##.....", ".#####..", ".....##.", ".....##.", ".....##.", ".##..##.", "..####.."],
    ["..####..", ".##.....", ".##.....", ".#####..", ".##..##.", ".##..##.", ".##..##.", "..####.."],
    [".######.", ".....##.", "....##..", "....##..", "...##...", "...##...", "..##....", "..##...."],
    ["..####..", ".##..##.", ".##..##.", "..####..", ".##..##.", ".##..##.", ".##..##.", "..####.."],
    ["..####..", ".##..##.", ".##..##.", ".##..##.", "..#####.", ".....##.", ".....##.", "..####.."],
];

fn glyph(class: usize) -> Vec<f64> {
    GLYPHS[class]
        .iter()
        .flat_map(|row| row.bytes().map(|b| if b == b'#' { 1.0 } else { 0.0 }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSource {
    Synthetic,
    Idx,
}

/// One transition: source image, next image and whether the next image was
/// drawn at random.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub source_class: usize,
    pub target_class: usize,
    pub stochastic: bool,
}

#[derive(Debug, Clone)]
pub struct PairBatch {
    pub x: Tensor,
    pub y: Tensor,
    pub stochastic: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct NoisyPairsTask {
    /// Exemplars per class, each a flattened `side x side` image in `[0, 1]`.
    exemplars: Vec<Vec<Vec<f64>>>,
    side: usize,
    flip_rate: f64,
    source: PairSource,
}

impl NoisyPairsTask {
    /// Fixed 8x8 glyph per class; every rendering flips each pixel
    /// independently with probability `flip_rate`.
    pub fn synthetic(flip_rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&flip_rate) {
            return Err(Error::InvalidArgument(format!("flip rate {flip_rate} outside [0, 1]")));
        }
        Ok(Self {
            exemplars: (0..10).map(|c| vec![glyph(c)]).collect(),
            side: GLYPH_SIDE,
            flip_rate,
            source: PairSource::Synthetic,
        })
    }

    /// Real digit images grouped by label.
    pub fn from_idx(images: &IdxImages, labels: &[u8], flip_rate: f64) -> Result<Self> {
        if images.images.len() != labels.len() || images.rows != images.cols {
            return Err(Error::InvalidArgument(
                "image and label counts differ or images are not square".into(),
            ));
        }
        let mut exemplars = vec![Vec::new(); 10];
        for (img, &l) in images.images.iter().zip(labels) {
            let l = l as usize;
            if l > 9 {
                return Err(Error::InvalidArgument(format!("label {l} outside 0-9")));
            }
            exemplars[l].push(img.clone());
        }
        if exemplars.iter().any(|e| e.is_empty()) {
            return Err(Error::InvalidArgument("every digit class needs an image".into()));
        }
        let mut task = Self::synthetic(flip_rate)?;
        task.exemplars = exemplars;
        task.side = images.rows;
        task.source = PairSource::Idx;
        Ok(task)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.side * self.side
    }

    pub fn source(&self) -> PairSource {
        self.source
    }

    pub fn render(&self, class: usize, rng: &mut RngStream) -> Vec<f64> {
        let pool = &self.exemplars[class];
        let base = if pool.len() == 1 {
            &pool[0]
        } else {
            &pool[rng.random_range(0..pool.len())]
        };
        if self.flip_rate == 0.0 {
            return base.clone();
        }
        base.iter()
            .map(|&v| if rng.random::<f64>() < self.flip_rate { 1.0 - v } else { v })
            .collect()
    }

    pub fn sample_pair(&self, rng: &mut RngStream) -> Pair {
        let source_class = rng.random_range(0..2usize);
        let x = self.render(source_class, rng);
        if source_class == 0 {
            Pair {
                y: x.clone(),
                x,
                source_class,
                target_class: 0,
                stochastic: false,
            }
        } else {
            let target_class = rng.random_range(2..10usize);
            Pair {
                x,
                y: self.render(target_class, rng),
                source_class,
                target_class,
                stochastic: true,
            }
        }
    }

    pub fn sample_batch(&self, n: usize, rng: &mut RngStream) -> PairBatch {
        let d = self.dim();
        let mut xs = Vec::with_capacity(n * d);
        let mut ys = Vec::with_capacity(n * d);
        let mut stochastic = Vec::with_capacity(n);
        for _ in 0..n {
            let p = self.sample_pair(rng);
            xs.extend(p.x);
            ys.extend(p.y);
            stochastic.push(p.stochastic);
        }
        PairBatch {
            x: Tensor::new(vec![n, d], xs).expect("batch shape"),
            y: Tensor::new(vec![n, d], ys).expect("batch shape"),
            stochastic,
        }
    }
}
