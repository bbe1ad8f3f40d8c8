//! Segmentation masks and their inverse perspective warp onto the BEV grid.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraGeometry, CameraModel};
use crate::raster::{BinaryGrid, GridSpec};

/// Class id reserved for pixels and cells without a known class.
pub const VOID_ID: u8 = 255;
pub const VOID_NAME: &str = "void";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BevError {
    #[error("mask is {mask_w}x{mask_h} but the camera images {cam_w}x{cam_h}")]
    DimensionMismatch {
        mask_w: u32,
        mask_h: u32,
        cam_w: u32,
        cam_h: u32,
    },
    #[error("class `{0}` is not in the label map")]
    UnknownClass(String),
    #[error("label map: {0}")]
    LabelMap(String),
    #[error("mask image: {0}")]
    Image(String),
}

/// Class id → semantic name. Ids missing from the map read as `void`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<u8, String>", into = "BTreeMap<u8, String>")]
pub struct LabelMap {
    names: BTreeMap<u8, String>,
}

impl TryFrom<BTreeMap<u8, String>> for LabelMap {
    type Error = BevError;

    fn try_from(names: BTreeMap<u8, String>) -> Result<Self, Self::Error> {
        Self::new(names)
    }
}

impl From<LabelMap> for BTreeMap<u8, String> {
    fn from(m: LabelMap) -> Self {
        m.names
    }
}

impl LabelMap {
    pub fn new(names: BTreeMap<u8, String>) -> Result<Self, BevError> {
        if let Some(name) = names.get(&VOID_ID).filter(|n| n.as_str() != VOID_NAME) {
            return Err(BevError::LabelMap(format!(
                "id {VOID_ID} is reserved for `void`, got `{name}`"
            )));
        }
        let mut seen = BTreeSet::new();
        for (id, name) in &names {
            if name.is_empty() {
                return Err(BevError::LabelMap(format!("id {id} has an empty name")));
            }
            if !seen.insert(name.as_str()) {
                return Err(BevError::LabelMap(format!(
                    "name `{name}` is used by more than one id"
                )));
            }
            if name == VOID_NAME && *id != VOID_ID {
                return Err(BevError::LabelMap(format!(
                    "`void` must use id {VOID_ID}, not {id}"
                )));
            }
        }
        Ok(Self { names })
    }

    pub fn name(&self, id: u8) -> &str {
        self.names.get(&id).map_or(VOID_NAME, String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<u8> {
        if name == VOID_NAME {
            return Some(VOID_ID);
        }
        self.names
            .iter()
            .find(|(_, n)| n.as_str() == name)
            .map(|(id, _)| *id)
    }

    pub fn require(&self, name: &str) -> Result<u8, BevError> {
        self.id(name)
            .ok_or_else(|| BevError::UnknownClass(name.to_owned()))
    }

    /// 256-entry membership table for a set of class names.
    pub fn lookup_table<'a>(
        &self,
        names: impl IntoIterator<Item = &'a String>,
    ) -> Result<[bool; 256], BevError> {
        let mut table = [false; 256];
        for name in names {
            table[usize::from(self.require(name)?)] = true;
        }
        Ok(table)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u8, &str)> {
        self.names.iter().map(|(id, n)| (*id, n.as_str()))
    }
}

impl Default for LabelMap {
    /// The 19 Cityscapes evaluation classes under their train ids, plus void.
    fn default() -> Self {
        let names = [
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
        let mut map: BTreeMap<u8, String> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (i as u8, (*n).to_owned()))
            .collect();
        map.insert(VOID_ID, VOID_NAME.to_owned());
        Self { names: map }
    }
}

/// Per-pixel class ids of a camera image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    width: u32,
    height: u32,
    labels: Vec<u8>,
    label_map: LabelMap,
}

impl LabelMask {
    pub fn new(
        width: u32,
        height: u32,
        labels: Vec<u8>,
        label_map: LabelMap,
    ) -> Result<Self, BevError> {
        if labels.len() != width as usize * height as usize {
            return Err(BevError::Image(format!(
                "{} labels for a {width}x{height} mask",
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
            label_map,
        })
    }

    pub fn filled(width: u32, height: u32, id: u8, label_map: LabelMap) -> Self {
        Self {
            width,
            height,
            labels: vec![id; width as usize * height as usize],
            label_map,
        }
    }

    /// Decodes an 8-bit single-channel PNG or PGM. Color images are rejected:
    /// masks carry class ids, not palette colors.
    pub fn decode(bytes: &[u8], label_map: LabelMap) -> Result<Self, BevError> {
        let img = image::load_from_memory(bytes).map_err(|e| BevError::Image(e.to_string()))?;
        match img {
            image::DynamicImage::ImageLuma8(gray) => Ok(Self::from_gray_image(gray, label_map)),
            other => Err(BevError::Image(format!(
                "expected 8-bit single-channel class-id image, got {:?}",
                other.color()
            ))),
        }
    }

    pub fn from_gray_image(img: image::GrayImage, label_map: LabelMap) -> Self {
        let (width, height) = img.dimensions();
        Self {
            width,
            height,
            labels: img.into_raw(),
            label_map,
        }
    }

    pub fn to_gray_image(&self) -> image::GrayImage {
        image::GrayImage::from_raw(self.width, self.height, self.labels.clone())
            .expect("buffer matches dimensions")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label_map(&self) -> &LabelMap {
        &self.label_map
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, id: u8) {
        let i = y as usize * self.width as usize + x as usize;
        self.labels[i] = id;
    }
}

/// Segmentation labels resampled onto the BEV grid.
///
/// `observed` marks cells whose center is imaged by the camera; all other
/// cells carry [`VOID_ID`].
#[derive(Debug, Clone, PartialEq)]
pub struct BevLabelGrid {
    spec: GridSpec,
    labels: Vec<u8>,
    observed: Vec<bool>,
    label_map: LabelMap,
}

impl BevLabelGrid {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn label_map(&self) -> &LabelMap {
        &self.label_map
    }

    #[inline]
    pub fn label(&self, row: usize, col: usize) -> u8 {
        self.labels[self.spec.index(row, col)]
    }

    #[inline]
    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.observed[self.spec.index(row, col)]
    }

    pub fn observed_grid(&self) -> BinaryGrid {
        BinaryGrid::from_cells(self.spec, self.observed.clone())
    }

    /// Cells whose label is one of `names`.
    pub fn class_grid<'a>(
        &self,
        names: impl IntoIterator<Item = &'a String>,
    ) -> Result<BinaryGrid, BevError> {
        let table = self.label_map.lookup_table(names)?;
        let cells = self
            .labels
            .iter()
            .zip(&self.observed)
            .map(|(&l, &o)| o && table[usize::from(l)])
            .collect();
        Ok(BinaryGrid::from_cells(self.spec, cells))
    }
}

/// Inverse-warps a mask onto the grid with nearest-neighbor sampling.
pub fn warp_to_bev(
    mask: &LabelMask,
    camera: &CameraModel,
    spec: &GridSpec,
) -> Result<BevLabelGrid, BevError> {
    if mask.width != camera.image_width || mask.height != camera.image_height {
        return Err(BevError::DimensionMismatch {
            mask_w: mask.width,
            mask_h: mask.height,
            cam_w: camera.image_width,
            cam_h: camera.image_height,
        });
    }
    let geom = CameraGeometry::new(camera);
    let mut labels = vec![VOID_ID; spec.len()];
    let mut observed = vec![false; spec.len()];
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            if let Some((u, v)) = geom.visible_pixel(spec.cell_center(r, c)) {
                let i = spec.index(r, c);
                // u, v are non-negative and below the image size here
                labels[i] = mask.get(u.floor() as u32, v.floor() as u32);
                observed[i] = true;
            }
        }
    }
    Ok(BevLabelGrid {
        spec: *spec,
        labels,
        observed,
        label_map: mask.label_map.clone(),
    })
}

/// Cells whose label is one of the occluder classes.
pub fn occluder_mask(
    bev: &BevLabelGrid,
    occluder_classes: &BTreeSet<String>,
) -> Result<BinaryGrid, BevError> {
    bev.class_grid(occluder_classes)
}
