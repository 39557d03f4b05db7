//! On-disk interchange: PFM rasters, VOC annotations, directory manifests,
//! prediction JSON-lines.

pub mod manifest;
pub mod pfm;
pub mod predictions;
pub mod voc;

pub use manifest::{scan_manifest, ImageRecord, Manifest, RecordStub, SkippedStem};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm};
pub use predictions::{read_predictions, write_predictions, Prediction};
pub use voc::{parse_voc_xml, read_voc_xml, to_voc_xml, write_voc_xml, GroundTruth, GtObject};
