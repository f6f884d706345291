//! Class table, label-mask ingestion and the relevant-class indicator.

use std::path::Path;
use std::str::FromStr;

use image::{ColorType, DynamicImage};

use crate::error::{Error, Result};
use crate::imaging::open_image;

pub const VOID_LABEL: u8 = 0;
pub const NUM_CLASSES: usize = 19;
/// Number of distinct internal labels, void included.
pub const NUM_LABELS: usize = NUM_CLASSES + 1;

pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "road",
    "sidewalk",
    "building",
    "wall",
    "fence",
    "pole",
    "traffic light",
    "traffic sign",
    "vegetation",
    "terrain",
    "sky",
    "person",
    "rider",
    "car",
    "truck",
    "bus",
    "train",
    "motorcycle",
    "bicycle",
];

pub const ROAD: u8 = 1;
pub const VEGETATION: u8 = 9;
pub const SKY: u8 = 11;
pub const PERSON: u8 = 12;
pub const CAR: u8 = 14;

/// Mobile object classes: person through bicycle.
pub const DEFAULT_RELEVANT: [u8; 8] = [12, 13, 14, 15, 16, 17, 18, 19];

pub fn class_name(id: u8) -> Option<&'static str> {
    match id {
        1..=19 => Some(CLASS_NAMES[id as usize - 1]),
        _ => None,
    }
}

/// The 19-class table with its relevant subset. Void (0) is never relevant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassTable {
    relevant: [bool; NUM_LABELS],
}

impl Default for ClassTable {
    fn default() -> Self {
        Self::with_relevant(&DEFAULT_RELEVANT).expect("default relevant set is valid")
    }
}

impl ClassTable {
    pub fn with_relevant(ids: &[u8]) -> Result<Self> {
        let mut relevant = [false; NUM_LABELS];
        for &id in ids {
            if !(1..=NUM_CLASSES as u8).contains(&id) {
                return Err(Error::InvalidClassTable(format!(
                    "relevant class id {id} is outside 1..=19"
                )));
            }
            relevant[id as usize] = true;
        }
        Ok(Self { relevant })
    }

    #[inline]
    pub fn is_relevant(&self, id: u8) -> bool {
        self.relevant.get(id as usize).copied().unwrap_or(false)
    }

    pub fn relevant_ids(&self) -> Vec<u8> {
        (1..=NUM_CLASSES as u8).filter(|&id| self.relevant[id as usize]).collect()
    }

    pub fn void_label(&self) -> u8 {
        VOID_LABEL
    }
}

/// Per-pixel class ids in `0..=19`, 0 being void.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassMask {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl ClassMask {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::ZeroDimension { height, width });
        }
        if labels.len() != height * width {
            return Err(Error::InvalidFrame(format!(
                "mask data length {} does not match {height}x{width}",
                labels.len()
            )));
        }
        if let Some((pixel, &label)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= NUM_LABELS)
        {
            return Err(Error::LabelOutOfRange { label, pixel });
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, label: u8) -> Result<Self> {
        Self::new(height, width, vec![label; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    /// Pixel count per internal label, indexed by id.
    pub fn class_counts(&self) -> [u64; NUM_LABELS] {
        let mut counts = [0u64; NUM_LABELS];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

/// How label values are stored in mask files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum IdConvention {
    /// Ids 1..=19 as in the class table, 0 (or 255) is void.
    #[default]
    Native,
    /// Cityscapes train ids 0..=18, 255 is ignore.
    TrainId,
}

impl FromStr for IdConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "native" => Ok(Self::Native),
            "trainid" => Ok(Self::TrainId),
            other => Err(Error::InvalidParameter(format!(
                "unknown id convention '{other}' (expected native or trainid)"
            ))),
        }
    }
}

impl IdConvention {
    pub fn decode(self, raw: u8) -> Option<u8> {
        match self {
            IdConvention::Native => match raw {
                0 | 255 => Some(VOID_LABEL),
                1..=19 => Some(raw),
                _ => None,
            },
            IdConvention::TrainId => match raw {
                0..=18 => Some(raw + 1),
                255 => Some(VOID_LABEL),
                _ => None,
            },
        }
    }

    pub fn encode(self, id: u8) -> u8 {
        match (self, id) {
            (IdConvention::Native, id) => id,
            (IdConvention::TrainId, VOID_LABEL) => 255,
            (IdConvention::TrainId, id) => id - 1,
        }
    }
}

/// Reads a single-channel 8-bit label image.
pub fn load_mask(path: impl AsRef<Path>, convention: IdConvention) -> Result<ClassMask> {
    let path = path.as_ref();
    let img = open_image(path)?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension { height, width });
    }
    let raw = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("label masks must be 8-bit single channel, got {:?}", other.color()),
            })
        }
    };
    let labels = raw
        .iter()
        .enumerate()
        .map(|(pixel, &v)| {
            convention
                .decode(v)
                .ok_or(Error::LabelOutOfRange { label: v, pixel })
        })
        .collect::<Result<Vec<u8>>>()?;
    ClassMask::new(height, width, labels)
}

pub fn save_mask(path: impl AsRef<Path>, mask: &ClassMask, convention: IdConvention) -> Result<()> {
    let data: Vec<u8> = mask.labels.iter().map(|&l| convention.encode(l)).collect();
    image::save_buffer(
        path.as_ref(),
        &data,
        mask.width as u32,
        mask.height as u32,
        ColorType::L8,
    )?;
    Ok(())
}

/// Binary per-pixel map, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelevanceMap {
    height: usize,
    width: usize,
    values: Vec<bool>,
}

impl RelevanceMap {
    pub fn new(height: usize, width: usize, values: Vec<bool>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::InvalidFrame(format!(
                "relevance data length {} does not match {height}x{width}",
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }
}

pub fn relevance_mask(mask: &ClassMask, table: &ClassTable) -> RelevanceMap {
    RelevanceMap {
        height: mask.height,
        width: mask.width,
        values: mask.labels.iter().map(|&l| table.is_relevant(l)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_table_matches_mobile_classes() {
        let t = ClassTable::default();
        assert_eq!(t.relevant_ids(), DEFAULT_RELEVANT.to_vec());
        assert!(!t.is_relevant(VOID_LABEL));
        assert!(!t.is_relevant(ROAD));
        assert_eq!(class_name(PERSON), Some("person"));
        assert_eq!(class_name(19), Some("bicycle"));
        assert_eq!(class_name(0), None);
        assert!(ClassTable::with_relevant(&[0]).is_err());
        assert!(ClassTable::with_relevant(&[20]).is_err());
    }

    #[test]
    fn conventions_decode() {
        assert_eq!(IdConvention::TrainId.decode(11), Some(PERSON));
        assert_eq!(IdConvention::TrainId.decode(255), Some(VOID_LABEL));
        assert_eq!(IdConvention::TrainId.decode(19), None);
        assert_eq!(IdConvention::Native.decode(14), Some(CAR));
        assert_eq!(IdConvention::Native.decode(0), Some(VOID_LABEL));
        assert_eq!(IdConvention::Native.decode(20), None);
    }

    #[test]
    fn relevance_examples() {
        let road = ClassMask::filled(4, 4, ROAD).unwrap();
        assert_eq!(relevance_mask(&road, &ClassTable::default()).count(), 0);
        let person = ClassMask::filled(4, 4, PERSON).unwrap();
        assert_eq!(relevance_mask(&person, &ClassTable::default()).count(), 16);

        let labels: Vec<u8> = (0..16)
            .map(|i| if (i / 4 + i % 4) % 2 == 0 { CAR } else { SKY })
            .collect();
        let checker = ClassMask::new(4, 4, labels.clone()).unwrap();
        let rel = relevance_mask(&checker, &ClassTable::default());
        let expected: Vec<bool> = labels.iter().map(|&l| l == CAR).collect();
        assert_eq!(rel.values(), expected.as_slice());
    }

    #[test]
    fn mask_file_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        image::save_buffer(&p, &[1, 30], 2, 1, ColorType::L8).unwrap();
        assert!(matches!(
            load_mask(&p, IdConvention::Native),
            Err(Error::LabelOutOfRange { label: 30, pixel: 1 })
        ));
        let rgb = dir.path().join("rgb.png");
        image::save_buffer(&rgb, &[1, 2, 3], 1, 1, ColorType::Rgb8).unwrap();
        assert!(matches!(
            load_mask(&rgb, IdConvention::Native),
            Err(Error::UnsupportedFormat { .. })
        ));
    }

    proptest! {
        #[test]
        fn trainid_round_trip(raw in proptest::collection::vec(
            prop_oneof![0u8..=18, Just(255u8)], 1..64)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("m.png");
            let w = raw.len() as u32;
            image::save_buffer(&p, &raw, w, 1, ColorType::L8).unwrap();
            let mask = load_mask(&p, IdConvention::TrainId).unwrap();
            let q = dir.path().join("out.png");
            save_mask(&q, &mask, IdConvention::TrainId).unwrap();
            let back = image::open(&q).unwrap().into_luma8().into_raw();
            prop_assert_eq!(back, raw);
        }

        #[test]
        fn relevant_count_is_sum_of_class_counts(
            labels in proptest::collection::vec(0u8..=19, 1..200)
        ) {
            let n = labels.len();
            let mask = ClassMask::new(1, n, labels).unwrap();
            let table = ClassTable::default();
            let counts = mask.class_counts();
            let expected: u64 = table.relevant_ids().iter().map(|&id| counts[id as usize]).sum();
            prop_assert_eq!(relevance_mask(&mask, &table).count() as u64, expected);
        }

        #[test]
        fn relevance_is_pointwise(
            labels in proptest::collection::vec(0u8..=19, 2..100),
            rot in 0usize..100,
        ) {
            let n = labels.len();
            let table = ClassTable::default();
            let base = relevance_mask(&ClassMask::new(1, n, labels.clone()).unwrap(), &table);
            let mut shuffled = labels.clone();
            shuffled.rotate_left(rot % n);
            let moved = relevance_mask(&ClassMask::new(1, n, shuffled).unwrap(), &table);
            let mut expected = base.values().to_vec();
            expected.rotate_left(rot % n);
            prop_assert_eq!(moved.values(), expected.as_slice());
        }
    }
}
